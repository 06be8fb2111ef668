//! Analysis of transmission traces and photon-count records: transition
//! timing, midpoint alignment, photon-statistics estimators, and the scaling
//! of the breakdown with drive strength.

use crate::error::{Error, Result};
use crate::meanfield::{self, MeanFieldState, Trajectory};
use crate::params::PhysicalParams;
use crate::stochastic::{simulate_with_stream, CountRecord, StochasticConfig};
use std::fmt::Write as _;
use std::path::Path;

pub const TRACE_CSV_HEADER: &str = "t_us,photons";

/// A transmission trace on a uniform time grid, normalized against the
/// empty-cavity photon number `n_ref`.
#[derive(Debug, Clone)]
pub struct IntensityTrace {
    pub t0: f64,
    pub dt: f64,
    /// Intracavity photon number per sample.
    pub n: Vec<f64>,
    /// Empty-cavity photon number at the same drive.
    pub n_ref: f64,
    pub label: String,
}

fn uniform_grid(t: &[f64]) -> Result<(f64, f64)> {
    if t.len() < 2 {
        return Err(Error::Config("a trace needs at least two samples".into()));
    }
    let t0 = t[0];
    let dt = t[1] - t[0];
    if dt <= 0.0 || dt.is_nan() {
        return Err(Error::Config(format!(
            "time grid must increase, got dt = {dt}"
        )));
    }
    for (i, &ti) in t.iter().enumerate() {
        if (ti - (t0 + i as f64 * dt)).abs() > 1e-6 * dt {
            return Err(Error::Config(format!(
                "time grid is not uniform near sample {i} (t = {ti})"
            )));
        }
    }
    Ok((t0, dt))
}

impl IntensityTrace {
    pub fn new(
        t0: f64,
        dt: f64,
        n: Vec<f64>,
        n_ref: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if n.len() < 2 {
            return Err(Error::Config("a trace needs at least two samples".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("trace dt must be > 0, got {dt}")));
        }
        if !(n_ref > 0.0 && n_ref.is_finite()) {
            return Err(Error::Config(format!("n_ref must be > 0, got {n_ref}")));
        }
        Ok(IntensityTrace {
            t0,
            dt,
            n,
            n_ref,
            label: label.into(),
        })
    }

    pub fn from_trajectory(
        traj: &Trajectory,
        n_ref: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        let (t0, dt) = uniform_grid(&traj.t)?;
        Self::new(t0, dt, traj.photons(), n_ref, label)
    }

    /// Counts converted to photons via the record's calibration; the time
    /// axis keeps the record's bin centers.
    pub fn from_counts(rec: &CountRecord, label: impl Into<String>) -> Result<Self> {
        let (t0, dt) = uniform_grid(&rec.t)?;
        let n = rec
            .counts
            .iter()
            .map(|&c| c as f64 * rec.calibration)
            .collect();
        Self::new(t0, dt, n, rec.n_ref_photons, label)
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.n.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    #[must_use]
    pub fn t_last(&self) -> f64 {
        self.t0 + (self.n.len() - 1) as f64 * self.dt
    }

    /// Linear interpolation, clamped to the trace span.
    #[must_use]
    pub fn at(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.dt;
        if x <= 0.0 {
            return self.n[0];
        }
        let last = self.n.len() - 1;
        if x >= last as f64 {
            return self.n[last];
        }
        let i = x.floor() as usize;
        let f = x - i as f64;
        self.n[i] * (1.0 - f) + self.n[i + 1] * f
    }

    /// Centered moving average over ~`window_us`; returns the smoothed trace
    /// and the actual averaging span used.
    #[must_use]
    pub fn smoothed(&self, window_us: f64) -> (IntensityTrace, f64) {
        let k = ((window_us / self.dt).round() as usize).max(1);
        let half = k / 2;
        let n = self.n.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let sum: f64 = self.n[lo..=hi].iter().sum();
            out.push(sum / (hi - lo + 1) as f64);
        }
        let trace = IntensityTrace {
            t0: self.t0,
            dt: self.dt,
            n: out,
            n_ref: self.n_ref,
            label: self.label.clone(),
        };
        (trace, k as f64 * self.dt)
    }

    /// Write as `t_us,photons` CSV with the normalization recorded in
    /// comment lines.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut buf = String::with_capacity(32 * (self.n.len() + 3));
        let _ = writeln!(buf, "# label = {}", self.label);
        let _ = writeln!(buf, "# n_ref_photons = {}", self.n_ref);
        buf.push_str(TRACE_CSV_HEADER);
        buf.push('\n');
        for (i, v) in self.n.iter().enumerate() {
            let _ = writeln!(buf, "{},{}", self.t0 + i as f64 * self.dt, v);
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// First upward crossing of `threshold` (absolute photons), linearly
    /// interpolated. A trace that starts at or above the threshold crosses
    /// at its first sample.
    #[must_use]
    pub fn first_crossing(&self, threshold: f64) -> Option<f64> {
        if self.n[0] >= threshold {
            return Some(self.t0);
        }
        for i in 1..self.n.len() {
            if self.n[i - 1] < threshold && self.n[i] >= threshold {
                let f = (threshold - self.n[i - 1]) / (self.n[i] - self.n[i - 1]);
                return Some(self.t0 + (i as f64 - 1.0 + f) * self.dt);
            }
        }
        None
    }
}

/// Timing of one blockade-breakdown transition.
#[derive(Debug, Clone)]
pub struct TransitionReport {
    pub label: String,
    /// Crossing of 10% of the reference transmission, us.
    pub t10: f64,
    /// Crossing of 50%, us.
    pub t50: f64,
    /// Crossing of 90%, us.
    pub t90: f64,
    /// t90 - t10, us.
    pub width: f64,
    /// Averaging span applied before threshold detection, if any.
    pub smoothing_us: Option<f64>,
}

impl TransitionReport {
    #[must_use]
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "transition report for '{}'", self.label);
        let _ = writeln!(s, "  t10   = {} us", self.t10);
        let _ = writeln!(s, "  t50   = {} us", self.t50);
        let _ = writeln!(s, "  t90   = {} us", self.t90);
        let _ = writeln!(s, "  width = {} us (t90 - t10)", self.width);
        match self.smoothing_us {
            Some(w) => {
                let _ = writeln!(s, "  smoothing: moving average over {w} us");
            }
            None => {
                let _ = writeln!(s, "  smoothing: none");
            }
        }
        s
    }
}

/// Locate the 10/50/90% crossings of the reference transmission. Traces that
/// never reach a threshold produce [`Error::NoTransition`].
pub fn transition_report(
    trace: &IntensityTrace,
    smooth_us: Option<f64>,
) -> Result<TransitionReport> {
    let (work, smoothing_us) = match smooth_us {
        Some(w) => {
            let (sm, actual) = trace.smoothed(w);
            (sm, Some(actual))
        }
        None => (trace.clone(), None),
    };
    let cross = |frac: f64| -> Result<f64> {
        let threshold = frac * work.n_ref;
        work.first_crossing(threshold).ok_or(Error::NoTransition {
            label: trace.label.clone(),
            threshold,
        })
    };
    let t10 = cross(0.1)?;
    let t50 = cross(0.5)?;
    let t90 = cross(0.9)?;
    Ok(TransitionReport {
        label: trace.label.clone(),
        t10,
        t50,
        t90,
        width: t90 - t10,
        smoothing_us,
    })
}

/// Shift every trace so its transmission midpoint sits at t = 0 and resample
/// all of them onto one shared grid (the finest dt present, spanning the
/// intersection of the shifted spans, always including t = 0).
pub fn align_midpoints(traces: &[IntensityTrace]) -> Result<Vec<IntensityTrace>> {
    if traces.is_empty() {
        return Err(Error::Config("alignment needs at least one trace".into()));
    }
    let mut shifted = Vec::with_capacity(traces.len());
    for trace in traces {
        let report = transition_report(trace, None)?;
        let mut s = trace.clone();
        s.t0 -= report.t50;
        shifted.push(s);
    }
    let dt = shifted.iter().map(|s| s.dt).fold(f64::INFINITY, f64::min);
    let start = shifted
        .iter()
        .map(|s| s.t0)
        .fold(f64::NEG_INFINITY, f64::max);
    let end = shifted
        .iter()
        .map(|s| s.t_last())
        .fold(f64::INFINITY, f64::min);
    if !(start <= 0.0 && end >= 0.0 && end - start >= dt) {
        return Err(Error::Config(format!(
            "aligned traces share no usable span (start {start}, end {end})"
        )));
    }
    let j_min = (start / dt - 1e-9).ceil() as i64;
    let j_max = (end / dt + 1e-9).floor() as i64;
    let out = shifted
        .iter()
        .map(|s| IntensityTrace {
            t0: j_min as f64 * dt,
            dt,
            n: (j_min..=j_max).map(|j| s.at(j as f64 * dt)).collect(),
            n_ref: s.n_ref,
            label: s.label.clone(),
        })
        .collect();
    Ok(out)
}

/// Thermal occupation of a displaced thermal field with total mean photon
/// number `mean_photons` and zero-delay autocorrelation `g2`. The g2 value
/// is clamped to the physical [1, 2] band first.
#[must_use]
pub fn thermal_occupation(mean_photons: f64, g2: f64) -> f64 {
    let g2c = g2.clamp(1.0, 2.0);
    mean_photons * (1.0 - (2.0 - g2c).sqrt())
}

pub const FLUCTUATIONS_CSV_HEADER: &str = "t_us,mean_n,g2_raw,g2_clamped,n_th";

/// Sliding-window photon statistics of a count record.
#[derive(Debug, Clone)]
pub struct FluctuationSeries {
    /// Window centers, us.
    pub t: Vec<f64>,
    /// Mean photon number per window.
    pub mean_n: Vec<f64>,
    /// Binned-count estimator 1 + (var - mean)/mean^2, before clamping.
    pub g2_raw: Vec<f64>,
    /// g2_raw clamped to [1, 2].
    pub g2_clamped: Vec<f64>,
    /// Inferred thermal occupation, photons.
    pub n_th: Vec<f64>,
    pub window_us: f64,
    pub calibration: f64,
}

impl FluctuationSeries {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut buf = String::with_capacity(48 * (self.t.len() + 1));
        buf.push_str(FLUCTUATIONS_CSV_HEADER);
        buf.push('\n');
        for i in 0..self.t.len() {
            let _ = writeln!(
                buf,
                "{},{},{},{},{}",
                self.t[i], self.mean_n[i], self.g2_raw[i], self.g2_clamped[i], self.n_th[i]
            );
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Time integral of the thermal occupation (photons * us), skipping
    /// undefined windows. Windows overlap, so each contributes one bin of
    /// support.
    #[must_use]
    pub fn n_th_integral(&self) -> f64 {
        let stride = if self.t.len() > 1 {
            self.t[1] - self.t[0]
        } else {
            self.window_us
        };
        self.n_th
            .iter()
            .filter(|v| v.is_finite())
            .map(|v| v * stride)
            .sum()
    }

    /// Largest finite thermal occupation and its window center.
    #[must_use]
    pub fn n_th_peak(&self) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for (t, v) in self.t.iter().zip(&self.n_th) {
            if v.is_finite() && best.map_or(true, |(_, b)| *v > b) {
                best = Some((*t, *v));
            }
        }
        best
    }
}

/// Sliding-window estimator of the photon statistics in `rec`. Every window
/// spans `window_us` of consecutive bins and advances one bin at a time.
/// The variance is compared with the Poisson floor to expose intensity
/// fluctuations:
///
/// ```text
///   g2 = 1 + (var - mean) / mean^2          (counts per bin)
///   n_th = <n> (1 - sqrt(2 - g2))           (photons, displaced thermal)
/// ```
///
/// Windows with zero mean yield NaN statistics.
pub fn fluctuations(rec: &CountRecord, window_us: f64) -> Result<FluctuationSeries> {
    let (t0, dt) = uniform_grid(&rec.t)?;
    let w = (window_us / dt).round() as usize;
    if w < 10 {
        return Err(Error::Config(format!(
            "fluctuation window must span at least 10 bins, got {w} (window {window_us} us, bin {dt} us)"
        )));
    }
    if w > rec.counts.len() {
        return Err(Error::Config(format!(
            "fluctuation window of {w} bins exceeds the record of {} bins",
            rec.counts.len()
        )));
    }

    // Prefix sums in f64: counts stay far below 2^53 per window, and the
    // variance cancellation keeps ~8 significant digits in the worst case.
    let n = rec.counts.len();
    let mut sum = vec![0.0f64; n + 1];
    let mut sq = vec![0.0f64; n + 1];
    for (i, &c) in rec.counts.iter().enumerate() {
        let c = c as f64;
        sum[i + 1] = sum[i] + c;
        sq[i + 1] = sq[i] + c * c;
    }

    let windows = n - w + 1;
    let mut t = Vec::with_capacity(windows);
    let mut mean_n = Vec::with_capacity(windows);
    let mut g2_raw = Vec::with_capacity(windows);
    let mut g2_clamped = Vec::with_capacity(windows);
    let mut n_th = Vec::with_capacity(windows);
    let wf = w as f64;
    for i in 0..windows {
        let s = sum[i + w] - sum[i];
        let q = sq[i + w] - sq[i];
        let mu = s / wf;
        let var = (q - s * s / wf) / (wf - 1.0);
        t.push(t0 + (i as f64 + (wf - 1.0) / 2.0) * dt);
        mean_n.push(mu * rec.calibration);
        if mu > 0.0 {
            let g2 = 1.0 + (var - mu) / (mu * mu);
            g2_raw.push(g2);
            g2_clamped.push(g2.clamp(1.0, 2.0));
            n_th.push(thermal_occupation(mu * rec.calibration, g2));
        } else {
            g2_raw.push(f64::NAN);
            g2_clamped.push(f64::NAN);
            n_th.push(f64::NAN);
        }
    }
    Ok(FluctuationSeries {
        t,
        mean_n,
        g2_raw,
        g2_clamped,
        n_th,
        window_us: wf * dt,
        calibration: rec.calibration,
    })
}

/// Least-squares power law y = amplitude * x^exponent on log-log axes.
#[derive(Debug, Clone, Copy)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub exponent_stderr: f64,
    pub amplitude: f64,
    pub n_points: usize,
}

pub fn power_law_fit(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = logs.len();
    if n < 3 {
        return Err(Error::BadFitInput(format!(
            "power-law fit needs at least 3 positive points, got {n} usable of {}",
            points.len()
        )));
    }
    let nf = n as f64;
    let mx = logs.iter().map(|(x, _)| x).sum::<f64>() / nf;
    let my = logs.iter().map(|(_, y)| y).sum::<f64>() / nf;
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::BadFitInput(
            "power-law fit needs at least two distinct x values".into(),
        ));
    }
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = logs
        .iter()
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let stderr = if n > 2 {
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(PowerLawFit {
        exponent: slope,
        exponent_stderr: stderr,
        amplitude: intercept.exp(),
        n_points: n,
    })
}

/// Result of matching the escape rate to a reference transition.
#[derive(Debug, Clone)]
pub struct GammaFit {
    /// Fitted escape rate, 1/us.
    pub escape: f64,
    /// Squared slope mismatch at the optimum.
    pub residual: f64,
    pub evaluations: u32,
    /// Normalized midpoint slope of the reference, 1/us.
    pub slope_ref: f64,
    /// Normalized midpoint slope of the fitted simulation, 1/us.
    pub slope_fit: f64,
}

/// Options for [`fit_gamma`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Simulation span per candidate, us. Must cover the transition at the
    /// smallest escape rate probed.
    pub t_end_us: f64,
    /// Output grid for candidate traces, us.
    pub dt_out_us: f64,
    /// Relative tolerance on the fitted rate.
    pub rel_tol: f64,
    /// Points in the initial log-spaced scan.
    pub scan_points: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            t_end_us: 300_000.0,
            dt_out_us: 100.0,
            rel_tol: 1e-3,
            scan_points: 8,
        }
    }
}

/// Normalized transmission slope at the transition midpoint, from a central
/// difference one output bin to either side of the interpolated t50.
pub fn midpoint_slope(trace: &IntensityTrace) -> Result<f64> {
    let t50 = trace
        .first_crossing(0.5 * trace.n_ref)
        .ok_or(Error::NoTransition {
            label: trace.label.clone(),
            threshold: 0.5 * trace.n_ref,
        })?;
    let idx =
        (((t50 - trace.t0) / trace.dt).round() as i64).clamp(1, trace.n.len() as i64 - 2) as usize;
    Ok((trace.n[idx + 1] - trace.n[idx - 1]) / (2.0 * trace.dt * trace.n_ref))
}

/// Infer the single-atom escape rate from a reference transition by matching
/// the normalized midpoint slope of deterministic simulations. A log-spaced
/// scan over `range` brackets the optimum, then golden-section search in the
/// log domain narrows it to `rel_tol`. A minimum on the scan boundary means
/// the range does not bracket the answer and is reported as such.
pub fn fit_gamma(
    reference: &IntensityTrace,
    base: &PhysicalParams,
    range: (f64, f64),
    opts: &FitOptions,
) -> Result<GammaFit> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::BadFitInput(format!(
            "escape-rate range must satisfy 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    if opts.scan_points < 3 {
        return Err(Error::BadFitInput("scan needs at least 3 points".into()));
    }
    let slope_ref = midpoint_slope(reference)?;

    let mut evaluations: u32 = 0;
    let mut last_slope = f64::NAN;
    let mut objective = |escape: f64| -> Result<f64> {
        evaluations += 1;
        let mut p = *base;
        p.escape = escape;
        let ctl = meanfield::Controls::slow().with_dt_out(opts.dt_out_us);
        let traj =
            meanfield::integrate_slow(&p, &MeanFieldState::vacuum_ground(&p), opts.t_end_us, &ctl)?;
        let trace = IntensityTrace::from_trajectory(&traj, p.n_ref(), "candidate")?;
        match midpoint_slope(&trace) {
            Ok(s) => {
                last_slope = s;
                Ok((s - slope_ref) * (s - slope_ref))
            }
            Err(Error::NoTransition { .. }) => {
                last_slope = f64::NAN;
                Ok(f64::INFINITY)
            }
            Err(e) => Err(e),
        }
    };

    let k = opts.scan_points;
    let (llo, lhi) = (lo.ln(), hi.ln());
    let grid: Vec<f64> = (0..k)
        .map(|i| (llo + (lhi - llo) * i as f64 / (k - 1) as f64).exp())
        .collect();
    let mut profile = Vec::with_capacity(k);
    for &x in &grid {
        profile.push((x, objective(x)?));
    }
    let argmin = profile
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .expect("non-empty scan");
    if argmin == 0 || argmin == k - 1 {
        return Err(Error::NotBracketed { lo, hi, profile });
    }

    // Golden-section search on ln(escape) inside the bracketing interval.
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut a = grid[argmin - 1].ln();
    let mut b = grid[argmin + 1].ln();
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = objective(c.exp())?;
    let mut fd = objective(d.exp())?;
    while (b - a) > opts.rel_tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d.exp())?;
        }
    }
    let best = (0.5 * (a + b)).exp();
    let residual = objective(best)?;
    Ok(GammaFit {
        escape: best,
        residual,
        evaluations,
        slope_ref,
        slope_fit: last_slope,
    })
}

/// One drive setting of a scaling sweep.
#[derive(Debug, Clone, Copy)]
pub struct ScalingPoint {
    /// Empty-cavity photon number at this drive.
    pub drive_photons: f64,
    /// Transition width t90 - t10, us. NaN when excluded.
    pub width_us: f64,
    /// Integrated thermal occupation over the run, photons * us.
    pub n_th_integrated: f64,
    /// True when no transition completed inside the simulated span.
    pub excluded: bool,
}

/// Options for [`scaling_sweep`].
#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    /// Span for the weakest drive, us; stronger drives shrink it as
    /// 1/drive_photons since the transition accelerates.
    pub t_end_us: f64,
    /// Fluctuation window, us.
    pub window_us: f64,
    /// Trajectory output grid for the weakest drive, us; shrinks with the
    /// span (never below one jump step) so every transition is sampled with
    /// the same resolution.
    pub dt_out_us: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            t_end_us: 300_000.0,
            window_us: 500.0,
            dt_out_us: 500.0,
        }
    }
}

/// Stochastic runs over a list of drive amplitudes (in units of kappa), one
/// RNG stream per drive. Each point reports the transition width and the
/// integrated thermal occupation; drives whose transition does not complete
/// in the simulated span are marked excluded.
pub fn scaling_sweep(
    base: &PhysicalParams,
    drives_over_kappa: &[f64],
    cfg: &StochasticConfig,
    opts: &SweepOptions,
) -> Result<Vec<ScalingPoint>> {
    if drives_over_kappa.is_empty() {
        return Err(Error::Config("sweep needs at least one drive".into()));
    }
    for &d in drives_over_kappa {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::Config(format!("drive must be > 0, got {d}")));
        }
    }
    let min_drive = drives_over_kappa
        .iter()
        .fold(f64::INFINITY, |m, &d| m.min(d));
    let mut points = Vec::with_capacity(drives_over_kappa.len());
    for (i, &d) in drives_over_kappa.iter().enumerate() {
        let mut p = *base;
        p.eta = d * p.kappa;
        let scale = (min_drive / d).powi(2);
        let steps = ((opts.t_end_us * scale) / cfg.dt_jump).ceil().max(1.0);
        let t_end = steps * cfg.dt_jump;
        let out_steps = ((opts.dt_out_us * scale) / cfg.dt_jump).round().max(1.0);
        let dt_out = (out_steps * cfg.dt_jump).min(t_end);
        let (traj, rec) = simulate_with_stream(&p, cfg, t_end, dt_out, i as u64)?;
        let trace = IntensityTrace::from_trajectory(&traj, p.n_ref(), format!("drive {d}"))?;
        let (width_us, excluded) = match transition_report(&trace, None) {
            Ok(rep) => (rep.width, false),
            Err(Error::NoTransition { .. }) => (f64::NAN, true),
            Err(e) => return Err(e),
        };
        let flux = fluctuations(&rec, opts.window_us)?;
        points.push(ScalingPoint {
            drive_photons: p.n_ref(),
            width_us,
            n_th_integrated: flux.n_th_integral(),
            excluded,
        });
    }
    Ok(points)
}

pub const SCALING_CSV_HEADER: &str = "drive_photons,width_us,n_th_integrated";

pub fn write_scaling_csv(points: &[ScalingPoint], path: &Path) -> Result<()> {
    let mut buf = String::new();
    buf.push_str(SCALING_CSV_HEADER);
    buf.push('\n');
    for pt in points {
        if pt.excluded {
            let _ = writeln!(
                buf,
                "# excluded: drive_photons={} (no transition within the simulated span)",
                pt.drive_photons
            );
        } else {
            let _ = writeln!(
                buf,
                "{},{},{}",
                pt.drive_photons, pt.width_us, pt.n_th_integrated
            );
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Which sweep column to fit against the drive strength.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitColumn {
    Width,
    NthIntegrated,
}

impl FitColumn {
    #[must_use]
    pub fn name(&self) -> &'static str {
        match self {
            FitColumn::Width => "width_us",
            FitColumn::NthIntegrated => "n_th_integrated",
        }
    }
}

/// Power law over the included sweep points; returns the fit and the number
/// of excluded points.
pub fn fit_scaling(points: &[ScalingPoint], column: FitColumn) -> Result<(PowerLawFit, usize)> {
    let pairs: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| !p.excluded)
        .map(|p| match column {
            FitColumn::Width => (p.drive_photons, p.width_us),
            FitColumn::NthIntegrated => (p.drive_photons, p.n_th_integrated),
        })
        .collect();
    let excluded = points.len() - pairs.len();
    let fit = power_law_fit(&pairs)?;
    Ok((fit, excluded))
}

/// Flat key = value report for a scaling fit.
pub fn write_fit_report(
    fit: &PowerLawFit,
    excluded: usize,
    column: FitColumn,
    path: &Path,
) -> Result<()> {
    let lhs = column.name();
    let report = format!(
        "# {lhs} vs drive strength\n\
         convention = {lhs} = amplitude * drive_photons^exponent\n\
         exponent = {}\n\
         exponent_stderr = {}\n\
         amplitude = {}\n\
         n_points = {}\n\
         excluded_points = {}\n",
        fit.exponent, fit.exponent_stderr, fit.amplitude, fit.n_points, excluded
    );
    std::fs::write(path, report)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Poisson};

    fn ramp(t_total: f64, dt: f64, n_ref: f64) -> IntensityTrace {
        let samples = (t_total / dt).round() as usize + 1;
        let n = (0..samples)
            .map(|i| n_ref * (i as f64 * dt) / t_total)
            .collect();
        IntensityTrace::new(0.0, dt, n, n_ref, "ramp").unwrap()
    }

    #[test]
    fn linear_ramp_has_exact_crossings() {
        let trace = ramp(1000.0, 10.0, 4.0);
        let rep = transition_report(&trace, None).unwrap();
        assert!((rep.t10 - 100.0).abs() < 1e-9);
        assert!((rep.t50 - 500.0).abs() < 1e-9);
        assert!((rep.t90 - 900.0).abs() < 1e-9);
        assert!((rep.width - 800.0).abs() < 1e-9);
        assert!(rep.smoothing_us.is_none());
    }

    #[test]
    fn step_trace_width_is_below_one_bin_share() {
        let dt = 10.0;
        let mut n = vec![0.0; 50];
        n.extend(vec![1.0; 50]);
        let trace = IntensityTrace::new(0.0, dt, n, 1.0, "step").unwrap();
        let rep = transition_report(&trace, None).unwrap();
        // All three thresholds are crossed inside the same sample interval.
        assert!(rep.width <= 0.8 * dt + 1e-9, "width {}", rep.width);
        assert!(rep.width >= 0.0);
    }

    #[test]
    fn trace_starting_above_crosses_at_the_first_sample() {
        let trace = IntensityTrace::new(5.0, 1.0, vec![0.95, 0.96, 0.97], 1.0, "hot").unwrap();
        let rep = transition_report(&trace, None).unwrap();
        assert_eq!(rep.t10, 5.0);
        assert_eq!(rep.t90, 5.0);
        assert_eq!(rep.width, 0.0);
    }

    #[test]
    fn missing_transition_is_an_error_naming_the_trace() {
        let trace = IntensityTrace::new(0.0, 1.0, vec![0.3, 0.3, 0.3], 1.0, "stuck").unwrap();
        match transition_report(&trace, None).unwrap_err() {
            Error::NoTransition { label, threshold } => {
                assert_eq!(label, "stuck");
                assert!((threshold - 0.5).abs() < 1e-12);
            }
            other => panic!("expected NoTransition, got {other}"),
        }
    }

    #[test]
    fn smoothing_is_recorded_and_tames_a_glitch() {
        let dt = 1.0;
        let mut n = vec![0.0; 100];
        n[20] = 1.0; // a one-bin spike must not trigger the 10% threshold
        n.extend((0..100).map(|i| i as f64 / 100.0));
        n.extend(vec![1.0; 20]);
        let trace = IntensityTrace::new(0.0, dt, n, 1.0, "noisy").unwrap();
        let rep = transition_report(&trace, Some(19.0)).unwrap();
        assert_eq!(rep.smoothing_us, Some(19.0));
        assert!(
            rep.t10 > 50.0,
            "spike must be averaged away, t10 = {}",
            rep.t10
        );
    }

    #[test]
    fn alignment_centers_midpoints_and_includes_zero() {
        let a = ramp(1000.0, 10.0, 4.0);
        let mut b = ramp(2000.0, 25.0, 8.0);
        b.t0 = 300.0;
        let aligned = align_midpoints(&[a, b]).unwrap();
        assert_eq!(aligned.len(), 2);
        for tr in &aligned {
            assert!((tr.dt - 10.0).abs() < 1e-12, "grid uses the finest dt");
            let has_zero = (0..tr.len()).any(|j| (tr.t0 + j as f64 * tr.dt).abs() < 1e-9);
            assert!(has_zero, "aligned grid must include t = 0");
            assert!(
                (tr.at(0.0) - 0.5 * tr.n_ref).abs() < 1e-9 * tr.n_ref,
                "midpoint sits at t = 0"
            );
        }
        // Width is preserved by alignment (pure shift + resample).
        let rep = transition_report(&aligned[0], None).unwrap();
        assert!((rep.width - 800.0).abs() < 1e-6);
    }

    #[test]
    fn thermal_occupation_identities() {
        assert_eq!(thermal_occupation(10.0, 2.0), 10.0);
        assert_eq!(thermal_occupation(10.0, 1.0), 0.0);
        let half = thermal_occupation(10.0, 1.5);
        assert!((half - 2.9289321881345245).abs() < 1e-14);
        // Clamping: super-thermal and sub-Poissonian inputs saturate.
        assert_eq!(thermal_occupation(10.0, 2.7), 10.0);
        assert_eq!(thermal_occupation(10.0, 0.2), 0.0);
    }

    fn synthetic_record(counts: Vec<u64>, bin_time: f64, calibration: f64) -> CountRecord {
        let t = (0..counts.len())
            .map(|i| (i as f64 + 0.5) * bin_time)
            .collect();
        CountRecord {
            t,
            counts,
            bin_time,
            efficiency: 1.0,
            seed: 0,
            calibration,
            n_ref_photons: 1.0,
        }
    }

    #[test]
    fn coherent_counts_give_g2_of_one_within_five_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lambda = 100.0f64;
        let k = 20_000usize;
        let dist = Poisson::new(lambda).unwrap();
        let counts: Vec<u64> = (0..k)
            .map(|_| dist.sample(&mut rng).round() as u64)
            .collect();
        let rec = synthetic_record(counts, 1.0, 1.0);
        let flux = fluctuations(&rec, k as f64).unwrap();
        assert_eq!(flux.t.len(), 1);
        let mu = flux.mean_n[0];
        let se = (2.0 / k as f64).sqrt() / mu;
        assert!(
            (flux.g2_raw[0] - 1.0).abs() < 5.0 * se,
            "g2 = {} outside 1 +- {}",
            flux.g2_raw[0],
            5.0 * se
        );
        // Linearized thermal occupation consistent with zero as well.
        let n_th_raw = mu * (flux.g2_raw[0] - 1.0) / 2.0;
        assert!(n_th_raw.abs() < 5.0 * mu * se / 2.0);
    }

    /// Displaced thermal light: field beta + zeta with zeta complex Gaussian.
    /// The binned estimator must recover the thermal occupation.
    #[test]
    fn displaced_thermal_generator_recovers_n_th() {
        let cases: [(f64, f64); 3] = [(20.0, 5.0), (100.0, 1.0), (0.0, 10.0)];
        let k = 100_000usize;
        for (seed, (n_coh, n_th_true)) in cases.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(23 + seed as u64);
            let beta = n_coh.sqrt();
            let quad = Normal::new(0.0, (n_th_true / 2.0).sqrt()).unwrap();
            let counts: Vec<u64> = (0..k)
                .map(|_| {
                    let re: f64 = beta + quad.sample(&mut rng);
                    let im: f64 = quad.sample(&mut rng);
                    let intensity = re * re + im * im;
                    if intensity <= 0.0 {
                        return 0;
                    }
                    Poisson::new(intensity).unwrap().sample(&mut rng).round() as u64
                })
                .collect();
            let rec = synthetic_record(counts, 1.0, 1.0);
            let flux = fluctuations(&rec, k as f64).unwrap();
            let est = flux.n_th[0];
            assert!(
                (est - n_th_true).abs() < 0.1 * n_th_true.max(1.0),
                "case (n_coh {n_coh}, n_th {n_th_true}): estimated {est}"
            );
        }
    }

    #[test]
    fn empty_windows_yield_nan_rows() {
        let mut counts = vec![0u64; 30];
        counts.extend(vec![50u64; 30]);
        let rec = synthetic_record(counts, 1.0, 0.5);
        let flux = fluctuations(&rec, 10.0).unwrap();
        assert!(flux.g2_raw[0].is_nan());
        assert!(flux.n_th[0].is_nan());
        let last = flux.g2_raw.last().unwrap();
        assert!(last.is_finite());
        // NaN rows survive a CSV round trip as text.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flux.csv");
        flux.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(FLUCTUATIONS_CSV_HEADER));
        assert!(text.contains("NaN"));
    }

    #[test]
    fn window_shorter_than_ten_bins_is_rejected() {
        let rec = synthetic_record(vec![5; 100], 1.0, 1.0);
        assert!(matches!(fluctuations(&rec, 5.0), Err(Error::Config(_))));
        assert!(matches!(fluctuations(&rec, 200.0), Err(Error::Config(_))));
    }

    #[test]
    fn power_law_fit_is_exact_on_exact_data() {
        let points: Vec<(f64, f64)> = (1..=8)
            .map(|i| {
                let x = i as f64;
                (x, 3.5 * x.powf(-1.9))
            })
            .collect();
        let fit = power_law_fit(&points).unwrap();
        assert!((fit.exponent + 1.9).abs() < 1e-12);
        assert!((fit.amplitude - 3.5).abs() < 1e-12);
        assert!(fit.exponent_stderr < 1e-10);
        assert_eq!(fit.n_points, 8);
    }

    #[test]
    fn power_law_fit_handles_noise_and_reports_uncertainty() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise: Normal<f64> = Normal::new(0.0, 0.05).unwrap();
        let points: Vec<(f64, f64)> = (1..=12)
            .map(|i| {
                let x = 10.0 * i as f64;
                let y = 2.0 * x.powf(-1.5) * noise.sample(&mut rng).exp();
                (x, y)
            })
            .collect();
        let fit = power_law_fit(&points).unwrap();
        assert!(
            (fit.exponent + 1.5).abs() < 0.05,
            "exponent {}",
            fit.exponent
        );
        assert!(fit.exponent_stderr > 0.0 && fit.exponent_stderr < 0.05);
    }

    #[test]
    fn power_law_fit_rejects_degenerate_input() {
        assert!(matches!(
            power_law_fit(&[(1.0, 2.0), (2.0, 1.0)]),
            Err(Error::BadFitInput(_))
        ));
        assert!(matches!(
            power_law_fit(&[(1.0, 2.0), (-2.0, 1.0), (0.0, 3.0), (4.0, -1.0)]),
            Err(Error::BadFitInput(_))
        ));
        assert!(matches!(
            power_law_fit(&[(1.0, 2.0), (1.0, 1.0), (1.0, 3.0)]),
            Err(Error::BadFitInput(_))
        ));
    }

    fn fit_reference(escape: f64, n0: f64, t_end: f64) -> (IntensityTrace, PhysicalParams) {
        let mut p = PhysicalParams::default();
        p.escape = escape;
        p.eta = n0.sqrt() * p.kappa;
        let ctl = meanfield::Controls::slow().with_dt_out(100.0);
        let traj =
            meanfield::integrate_slow(&p, &MeanFieldState::vacuum_ground(&p), t_end, &ctl).unwrap();
        let trace = IntensityTrace::from_trajectory(&traj, p.n_ref(), "reference").unwrap();
        (trace, p)
    }

    #[test]
    fn escape_rate_round_trip_recovers_the_truth() {
        let truth = PhysicalParams::default().escape;
        let (reference, base) = fit_reference(truth, 3000.0, 14_000.0);
        let gamma = base.gamma;
        let opts = FitOptions {
            t_end_us: 14_000.0,
            dt_out_us: 100.0,
            rel_tol: 1e-3,
            scan_points: 8,
        };
        let fit = fit_gamma(&reference, &base, (3e-4 * gamma, 3e-3 * gamma), &opts).unwrap();
        let rel = (fit.escape - truth).abs() / truth;
        assert!(
            rel < 0.02,
            "recovered {} vs true {} ({rel:.4})",
            fit.escape,
            truth
        );
        assert!(fit.residual.is_finite());
        assert!(fit.evaluations >= 8);
        assert!((fit.slope_fit - fit.slope_ref).abs() <= 0.05 * fit.slope_ref.abs());
    }

    #[test]
    fn escape_range_missing_the_truth_is_not_bracketed() {
        let truth = PhysicalParams::default().escape;
        let (reference, base) = fit_reference(truth, 3000.0, 14_000.0);
        let opts = FitOptions {
            t_end_us: 14_000.0,
            dt_out_us: 100.0,
            rel_tol: 1e-3,
            scan_points: 6,
        };
        match fit_gamma(&reference, &base, (10.0 * truth, 100.0 * truth), &opts) {
            Err(Error::NotBracketed { lo, hi, profile }) => {
                assert!((lo - 10.0 * truth).abs() < 1e-12);
                assert!((hi - 100.0 * truth).abs() < 1e-12);
                assert_eq!(profile.len(), 6);
            }
            other => panic!("expected NotBracketed, got {other:?}"),
        }
    }

    #[test]
    fn scaling_sweep_orders_widths_and_writes_outputs() {
        let base = PhysicalParams::default();
        let cfg = StochasticConfig::default();
        let opts = SweepOptions {
            t_end_us: 30_000.0,
            window_us: 200.0,
            dt_out_us: 100.0,
        };
        let points = scaling_sweep(&base, &[40.0, 60.0], &cfg, &opts).unwrap();
        assert_eq!(points.len(), 2);
        assert!(!points[0].excluded && !points[1].excluded);
        assert!(
            points[0].width_us > points[1].width_us,
            "stronger drive, faster transition"
        );
        assert!(points[0].n_th_integrated > 0.0);

        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("scaling.csv");
        write_scaling_csv(&points, &csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with(SCALING_CSV_HEADER));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn scaling_sweep_marks_incomplete_transitions_excluded() {
        let base = PhysicalParams::default();
        let cfg = StochasticConfig::default();
        let opts = SweepOptions {
            t_end_us: 1000.0, // far too short for this drive
            window_us: 100.0,
            dt_out_us: 100.0,
        };
        let points = scaling_sweep(&base, &[20.0], &cfg, &opts).unwrap();
        assert!(points[0].excluded);
        assert!(points[0].width_us.is_nan());
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("scaling.csv");
        write_scaling_csv(&points, &csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with('#'));
    }

    proptest! {
        #[test]
        fn report_is_translation_invariant(shift in -1.0e4..1.0e4f64) {
            let a = ramp(1000.0, 10.0, 4.0);
            let mut b = a.clone();
            b.t0 += shift;
            let ra = transition_report(&a, None).unwrap();
            let rb = transition_report(&b, None).unwrap();
            prop_assert!((rb.t50 - ra.t50 - shift).abs() < 1e-9);
            prop_assert!((rb.width - ra.width).abs() < 1e-9);
        }

        #[test]
        fn report_is_scale_invariant(scale in 0.01..100.0f64) {
            let a = ramp(1000.0, 10.0, 4.0);
            let b = IntensityTrace::new(
                a.t0, a.dt, a.n.iter().map(|v| v * scale).collect(), a.n_ref * scale, "scaled",
            ).unwrap();
            let ra = transition_report(&a, None).unwrap();
            let rb = transition_report(&b, None).unwrap();
            prop_assert!((rb.t10 - ra.t10).abs() < 1e-9);
            prop_assert!((rb.width - ra.width).abs() < 1e-9);
        }

        #[test]
        fn interpolation_stays_within_sample_bounds(x in 0.0..1.0e3f64) {
            let trace = ramp(1000.0, 10.0, 4.0);
            let v = trace.at(x);
            prop_assert!((0.0..=4.0).contains(&v));
        }
    }
}
