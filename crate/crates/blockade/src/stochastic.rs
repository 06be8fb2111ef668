//! Stochastic layer: discrete atom escape and photon counting on top of the
//! slow-manifold dynamics.
//!
//! The ensemble keeps an integer atom budget. Time advances in jump steps of
//! `dt_jump`; within a step the populations follow the deterministic
//! slow-manifold flow with the escape drain removed, and escape is then
//! realized as a Poisson number of lost atoms with mean
//! `2 * escape * N_e * dt_jump`, after which both populations are rescaled to
//! the surviving budget (or, optionally, only N_e is decremented). Because
//! the deterministic drain is exactly the mean of the jump channel, the
//! ensemble average of this process reproduces the mean-field trace; with the
//! escape rate set to zero it reduces to the deterministic slow route up to
//! integration tolerance.
//!
//! Photon counting: the detector integrates for `bin_time` per bin and
//! registers Poisson-distributed counts with mean
//! `efficiency * 2 kappa * n_bar * bin_time`, where `n_bar` is the midpoint
//! photon number across the bin. The inverse scale
//! `1 / (2 kappa * efficiency * bin_time)` converts counts back to photons
//! and is stored alongside the record.
//!
//! Determinism: one ChaCha8 RNG per trajectory, seeded by `seed` with the
//! trajectory index as the stream number. Within a step the draw order is
//! fixed (all count bins, then the escape loss), so runs with the same seed
//! are bit-identical regardless of thread count.

use crate::error::{Error, Result};
use crate::meanfield::{self, MeanFieldState, Trajectory};
use crate::ode;
use crate::params::PhysicalParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

/// Knobs of the jump/counting process.
#[derive(Debug, Clone, Copy)]
pub struct StochasticConfig {
    /// Base RNG seed; trajectory index selects the stream.
    pub seed: u64,
    /// Jump step, us. Escape is drawn once per step.
    pub dt_jump: f64,
    /// Detector integration time per count bin, us. Must divide `dt_jump`.
    pub bin_time: f64,
    /// Detection efficiency in (0, 1].
    pub efficiency: f64,
    /// Take losses out of N_e alone instead of rescaling both populations.
    pub decrement_excited_only: bool,
}

impl Default for StochasticConfig {
    fn default() -> Self {
        StochasticConfig {
            seed: 42,
            dt_jump: 10.0,
            bin_time: 1.0,
            efficiency: 1.0,
            decrement_excited_only: false,
        }
    }
}

impl StochasticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_jump > 0.0 && self.dt_jump.is_finite()) {
            return Err(Error::Config(format!(
                "dt_jump must be > 0, got {}",
                self.dt_jump
            )));
        }
        if !(self.bin_time > 0.0 && self.bin_time.is_finite()) {
            return Err(Error::Config(format!(
                "bin_time must be > 0, got {}",
                self.bin_time
            )));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::Config(format!(
                "efficiency must lie in (0, 1], got {}",
                self.efficiency
            )));
        }
        Ok(())
    }

    /// Photons per registered count.
    #[must_use]
    pub fn calibration(&self, p: &PhysicalParams) -> f64 {
        1.0 / (2.0 * p.kappa * self.efficiency * self.bin_time)
    }
}

pub const COUNTS_CSV_HEADER: &str = "t_us,counts";

/// A photon-counting record: one count per detector bin, with the metadata
/// needed to convert counts back into photon numbers.
#[derive(Debug, Clone)]
pub struct CountRecord {
    /// Bin centers, us.
    pub t: Vec<f64>,
    pub counts: Vec<u64>,
    pub bin_time: f64,
    pub efficiency: f64,
    pub seed: u64,
    /// Photons per count: 1 / (2 kappa * efficiency * bin_time).
    pub calibration: f64,
    /// Empty-cavity photon number at this drive, for normalization.
    pub n_ref_photons: f64,
}

impl CountRecord {
    /// Sidecar path holding the metadata for a counts CSV.
    #[must_use]
    pub fn meta_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("meta")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut buf = String::with_capacity(16 * (self.counts.len() + 1));
        buf.push_str(COUNTS_CSV_HEADER);
        buf.push('\n');
        for (t, c) in self.t.iter().zip(&self.counts) {
            writeln!(buf, "{t},{c}").expect("string write");
        }
        std::fs::write(path, buf)?;
        let meta = format!(
            "# photon-counting metadata\n\
             bin_time_us = {}\n\
             efficiency = {}\n\
             seed = {}\n\
             calibration_photons_per_count = {}\n\
             n_ref_photons = {}\n",
            self.bin_time, self.efficiency, self.seed, self.calibration, self.n_ref_photons
        );
        std::fs::write(Self::meta_path(path), meta)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<CountRecord> {
        let display = path.display().to_string();
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut t = Vec::new();
        let mut counts = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if lineno == 1 {
                if line.trim_end() != COUNTS_CSV_HEADER {
                    return Err(Error::Parse {
                        path: display,
                        line: 1,
                        msg: format!("expected header '{COUNTS_CSV_HEADER}', got '{line}'"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (ts, cs) = line.split_once(',').ok_or_else(|| Error::Parse {
                path: display.clone(),
                line: lineno,
                msg: "expected 2 fields".into(),
            })?;
            let tv: f64 = ts.trim().parse().map_err(|e| Error::Parse {
                path: display.clone(),
                line: lineno,
                msg: format!("time: {e}"),
            })?;
            let cv: u64 = cs.trim().parse().map_err(|e| Error::Parse {
                path: display.clone(),
                line: lineno,
                msg: format!("counts: {e}"),
            })?;
            t.push(tv);
            counts.push(cv);
        }
        if counts.is_empty() {
            return Err(Error::Parse {
                path: display,
                line: 1,
                msg: "no data rows".into(),
            });
        }

        let meta_path = Self::meta_path(path);
        let meta_display = meta_path.display().to_string();
        let meta = std::fs::read_to_string(&meta_path)?;
        let mut bin_time = None;
        let mut efficiency = None;
        let mut seed = None;
        let mut calibration = None;
        let mut n_ref = None;
        for (idx, raw) in meta.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: meta_display.clone(),
                line: idx + 1,
                msg: "expected 'key = value'".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| Error::Parse {
                path: meta_display.clone(),
                line: idx + 1,
                msg: format!("{key}: {e}"),
            };
            match key {
                "bin_time_us" => bin_time = Some(value.parse::<f64>().map_err(|e| bad(&e))?),
                "efficiency" => efficiency = Some(value.parse::<f64>().map_err(|e| bad(&e))?),
                "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(&e))?),
                "calibration_photons_per_count" => {
                    calibration = Some(value.parse::<f64>().map_err(|e| bad(&e))?)
                }
                "n_ref_photons" => n_ref = Some(value.parse::<f64>().map_err(|e| bad(&e))?),
                other => {
                    return Err(Error::Parse {
                        path: meta_display.clone(),
                        line: idx + 1,
                        msg: format!("unknown key '{other}'"),
                    })
                }
            }
        }
        let require = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| Error::Parse {
                path: meta_display.clone(),
                line: 1,
                msg: format!("missing key '{name}'"),
            })
        };
        Ok(CountRecord {
            t,
            counts,
            bin_time: require("bin_time_us", bin_time)?,
            efficiency: require("efficiency", efficiency)?,
            seed: seed.ok_or_else(|| Error::Parse {
                path: meta_display.clone(),
                line: 1,
                msg: "missing key 'seed'".into(),
            })?,
            calibration: require("calibration_photons_per_count", calibration)?,
            n_ref_photons: require("n_ref_photons", n_ref)?,
        })
    }
}

fn integer_multiple(num: f64, den: f64, what: &str) -> Result<u64> {
    let ratio = num / den;
    let k = ratio.round();
    if k < 1.0 || k.is_nan() || (ratio - k).abs() > 1e-9 * ratio.abs().max(1.0) {
        return Err(Error::Config(format!(
            "{what}: {num} must be a positive integer multiple of {den}"
        )));
    }
    Ok(k as u64)
}

fn draw_poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("finite positive mean");
    dist.sample(rng).round() as u64
}

fn shift_time(e: Error, t0: f64) -> Error {
    match e {
        Error::StepBudget {
            budget,
            t_us,
            t_end_us,
            hint,
        } => Error::StepBudget {
            budget,
            t_us: t0 + t_us,
            t_end_us: t0 + t_end_us,
            hint,
        },
        Error::NonFinite {
            t_us,
            msg,
            last_state,
        } => Error::NonFinite {
            t_us: t0 + t_us,
            msg,
            last_state,
        },
        other => other,
    }
}

/// One stochastic realization on a chosen RNG stream. Stream 0 is what
/// [`simulate_trajectory`] runs; ensembles and parameter sweeps hand out
/// distinct streams per member.
pub fn simulate_with_stream(
    p: &PhysicalParams,
    cfg: &StochasticConfig,
    t_end: f64,
    dt_out: f64,
    stream: u64,
) -> Result<(Trajectory, CountRecord)> {
    p.validate()?;
    cfg.validate()?;
    let n_steps = integer_multiple(t_end, cfg.dt_jump, "t_end vs dt_jump")?;
    let bins_per_step = integer_multiple(cfg.dt_jump, cfg.bin_time, "dt_jump vs bin_time")?;
    let out_every = integer_multiple(dt_out, cfg.dt_jump, "dt_out vs dt_jump")?;
    if (p.n_atoms - p.n_atoms.round()).abs() > 1e-6 || p.n_atoms.round() < 0.0 {
        return Err(Error::Config(format!(
            "the stochastic route needs a whole atom number, got {}",
            p.n_atoms
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);

    let warnings = p.guard_warnings();
    let mut budget: u64 = p.n_atoms.round() as u64;
    let mut n_g = budget as f64;
    let mut n_e = 0.0f64;

    let segment_ctl = ode::Controls {
        rtol: 1e-8,
        atol: 1e-9,
        max_step: None,
        max_steps: 10_000_000,
    };
    let count_scale = cfg.efficiency * 2.0 * p.kappa * cfg.bin_time;

    let record_state = |n_g: f64, n_e: f64| -> Result<MeanFieldState> {
        let (a, m) = meanfield::steady_state(p, n_g, n_e)?;
        Ok(MeanFieldState { a, m, n_g, n_e })
    };

    let n_out = n_steps / out_every;
    let mut t_traj = Vec::with_capacity(n_out as usize + 1);
    let mut states = Vec::with_capacity(n_out as usize + 1);
    t_traj.push(0.0);
    states.push(record_state(n_g, n_e)?);

    let total_bins = n_steps * bins_per_step;
    let mut t_bins = Vec::with_capacity(total_bins as usize);
    let mut counts = Vec::with_capacity(total_bins as usize);

    for step in 0..n_steps {
        let t_start = step as f64 * cfg.dt_jump;
        let sampled = meanfield::integrate_populations(
            p,
            n_g,
            n_e,
            cfg.dt_jump,
            cfg.bin_time,
            false,
            &segment_ctl,
        )
        .map_err(|e| shift_time(e, t_start))?;
        debug_assert_eq!(sampled.y.len() as u64, bins_per_step + 1);

        let mut prev_photons =
            record_state(sampled.y[0][0].max(0.0), sampled.y[0][1].max(0.0))?.photons();
        let mut excited_integral = 0.0;
        for bin in 0..bins_per_step {
            let prev_edge = sampled.y[bin as usize];
            let edge = sampled.y[(bin + 1) as usize];
            let photons = record_state(edge[0].max(0.0), edge[1].max(0.0))?.photons();
            let mean = count_scale * 0.5 * (prev_photons + photons);
            let c = draw_poisson(&mut rng, mean);
            let global_bin = step * bins_per_step + bin;
            t_bins.push((global_bin as f64 + 0.5) * cfg.bin_time);
            counts.push(c);
            prev_photons = photons;
            excited_integral += 0.5 * (prev_edge[1].max(0.0) + edge[1].max(0.0)) * cfg.bin_time;
        }

        let last = sampled.y.last().unwrap();
        let (mut g_end, mut e_end) = (last[0].max(0.0), last[1].max(0.0));
        // Trapezoidal average of N_e over the step keeps the mean escape
        // flux second-order accurate in dt_jump, so ensemble averages track
        // the deterministic trace through the steep part of the transition.
        let escape_mean = 2.0 * p.escape * excited_integral;
        let lost = draw_poisson(&mut rng, escape_mean).min(budget);
        if lost > 0 {
            if cfg.decrement_excited_only {
                e_end = (e_end - lost as f64).max(0.0);
            } else {
                let factor = (budget - lost) as f64 / budget as f64;
                g_end *= factor;
                e_end *= factor;
            }
            budget -= lost;
        }
        n_g = g_end;
        n_e = e_end;

        if (step + 1) % out_every == 0 {
            let k = (step + 1) / out_every;
            t_traj.push(k as f64 * dt_out);
            states.push(record_state(n_g, n_e)?);
        }
    }

    let traj = Trajectory {
        t: t_traj,
        states,
        warnings,
    };
    let record = CountRecord {
        t: t_bins,
        counts,
        bin_time: cfg.bin_time,
        efficiency: cfg.efficiency,
        seed: cfg.seed,
        calibration: cfg.calibration(p),
        n_ref_photons: p.n_ref(),
    };
    Ok((traj, record))
}

/// Single stochastic run on stream 0.
pub fn simulate_trajectory(
    p: &PhysicalParams,
    cfg: &StochasticConfig,
    t_end: f64,
    dt_out: f64,
) -> Result<(Trajectory, CountRecord)> {
    simulate_with_stream(p, cfg, t_end, dt_out, 0)
}

/// Independent realizations on streams 0..n_traj, in stream order. Runs in
/// parallel; the result is identical for any thread count.
pub fn ensemble_run(
    p: &PhysicalParams,
    cfg: &StochasticConfig,
    t_end: f64,
    dt_out: f64,
    n_traj: u64,
) -> Result<Vec<(Trajectory, CountRecord)>> {
    if n_traj == 0 {
        return Err(Error::Config(
            "ensemble needs at least one trajectory".into(),
        ));
    }
    (0..n_traj)
        .into_par_iter()
        .map(|i| simulate_with_stream(p, cfg, t_end, dt_out, i))
        .collect()
}
