//! Acceptance gate for the collective transmission-blockade simulator.
//!
//! Each test exercises one numbered criterion end to end and prints a single
//! `[acceptance] criterion NN (...): PASS (...)` line on success, or a FAIL
//! line before panicking. Run
//!
//! ```text
//! cargo test --test acceptance -- --nocapture --test-threads=1
//! ```
//!
//! to see the lines in order. Every tolerance is pinned as a constant next to
//! the check it guards.

use blockade::analysis::{self, FitColumn, FitOptions, IntensityTrace, SweepOptions};
use blockade::meanfield::{self, Controls, MeanFieldState};
use blockade::params::{dispersive_shift, lorentzian_transmission};
use blockade::stochastic::{self, StochasticConfig};
use blockade::units;
use blockade::PhysicalParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

fn criterion<F>(num: u32, name: &str, body: F)
where
    F: FnOnce() -> String + std::panic::UnwindSafe,
{
    match std::panic::catch_unwind(body) {
        Ok(detail) => println!("[acceptance] criterion {num:02} ({name}): PASS ({detail})"),
        Err(cause) => {
            println!("[acceptance] criterion {num:02} ({name}): FAIL");
            std::panic::resume_unwind(cause);
        }
    }
}

/// Rate at which the intracavity field drains the blockading inversion
/// through the escape channel, 1/us, at the empty-cavity photon number.
/// Used only to size simulation spans.
fn inversion_drain_rate(p: &PhysicalParams) -> f64 {
    let geff = p.g_eff();
    let dsq = p.delta_a * p.delta_a + (p.gamma + p.escape) * (p.gamma + p.escape);
    2.0 * p.escape * geff * geff / dsq * p.n_ref()
}

fn slow_trace(p: &PhysicalParams, t_end: f64, dt_out: f64, label: &str) -> IntensityTrace {
    let ctl = Controls::slow().with_dt_out(dt_out);
    let traj = meanfield::integrate_slow(p, &MeanFieldState::vacuum_ground(p), t_end, &ctl)
        .expect("slow integration failed");
    IntensityTrace::from_trajectory(&traj, p.n_ref(), label).expect("trace construction failed")
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn criterion_01_dispersive_shift() {
    criterion(1, "dispersive shift per atom", || {
        const TARGET_KHZ: f64 = 3.0;
        const REL_TOL: f64 = 0.05;

        let p = PhysicalParams::default();
        let shift = dispersive_shift(&p);
        assert!(
            shift < 0.0,
            "a red-detuned drive must pull the resonance down, got {shift}"
        );
        let khz = units::khz_from_rad_per_us(shift.abs());
        let rel = (khz / TARGET_KHZ - 1.0).abs();
        assert!(
            rel <= REL_TOL,
            "|shift| = 2pi x {khz:.4} kHz is {:.2}% from 2pi x {TARGET_KHZ} kHz",
            100.0 * rel
        );
        format!(
            "|shift| = 2pi x {khz:.3} kHz per atom, {:.2}% from 2pi x {TARGET_KHZ:.0} kHz",
            100.0 * rel
        )
    });
}

#[test]
fn criterion_02_blockade_depth() {
    criterion(2, "blockade depth at N = 1e4", || {
        const MAX_TRANSMISSION: f64 = 1.1e-2;
        const STEADY_REL_TOL: f64 = 0.01;

        let p = PhysicalParams::default();
        let n_eff = 0.5 * p.n_atoms;
        assert!(
            (n_eff - 1.0e4).abs() < 1e-6,
            "default ensemble must start with an inversion of 1e4, got {n_eff}"
        );
        let depth = lorentzian_transmission(&p, n_eff);
        assert!(
            depth <= MAX_TRANSMISSION,
            "on-resonance transmission {depth:.4e} exceeds {MAX_TRANSMISSION:.1e}"
        );

        // Quasi-steady field against the same Lorentzian, with the detuning
        // pushed to 20 atomic linewidths at a fixed per-atom shift so the
        // dispersive picture applies cleanly.
        let mut q = p;
        q.delta_a = -20.0 * (q.gamma + q.escape);
        q.g = (dispersive_shift(&p) * q.delta_a).sqrt();
        let (a, _) = meanfield::steady_state(&q, q.n_atoms, 0.0).expect("steady state failed");
        let simulated = a.norm_sqr() / q.n_ref();
        let model = lorentzian_transmission(&q, 0.5 * q.n_atoms);
        let rel = (simulated / model - 1.0).abs();
        assert!(
            rel <= STEADY_REL_TOL,
            "frozen-atom steady state {simulated:.5e} vs Lorentzian {model:.5e}: off by {:.2}%",
            100.0 * rel
        );
        format!(
            "Lorentzian transmission {depth:.4e} <= {MAX_TRANSMISSION:.1e}; steady state within {:.2}%",
            100.0 * rel
        )
    });
}

#[test]
fn criterion_03_transition_phenomenology() {
    criterion(3, "transition family across two decades of drive", || {
        const PLATEAU_MAX: f64 = 0.02;
        const POST_MIN: f64 = 0.95;
        const MONOTONE_SLACK: f64 = 1e-6;

        let drives = [10.0, 31.622_776_601_683_793, 100.0];
        let mut widths = Vec::new();
        let mut plateaus = Vec::new();
        for &d in &drives {
            let mut p = PhysicalParams::default();
            p.eta = d * p.kappa;
            let t_end = 62.0 / inversion_drain_rate(&p);
            let trace = slow_trace(&p, t_end, t_end / 1500.0, &format!("eta/kappa = {d}"));

            for (i, w) in trace.n.windows(2).enumerate() {
                assert!(
                    w[1] >= w[0] - MONOTONE_SLACK * trace.n_ref,
                    "drive {d}: transmission dips at sample {i}"
                );
            }
            let rep = analysis::transition_report(&trace, None).expect("no transition found");
            assert!(rep.t10 < rep.t50 && rep.t50 < rep.t90);

            let head: Vec<f64> = trace
                .n
                .iter()
                .enumerate()
                .take_while(|(i, _)| trace.t0 + *i as f64 * trace.dt <= 0.5 * rep.t10)
                .map(|(_, v)| v / trace.n_ref)
                .collect();
            assert!(!head.is_empty());
            let plateau = head.iter().sum::<f64>() / head.len() as f64;
            assert!(
                plateau <= PLATEAU_MAX,
                "drive {d}: pre-transition plateau {:.2}% exceeds {:.0}%",
                100.0 * plateau,
                100.0 * PLATEAU_MAX
            );

            let post = trace.n.last().unwrap() / trace.n_ref;
            assert!(
                post >= POST_MIN,
                "drive {d}: end level {:.1}% of the empty cavity, need {:.0}%",
                100.0 * post,
                100.0 * POST_MIN
            );
            widths.push(rep.width);
            plateaus.push(plateau);
        }
        assert!(
            widths[0] > widths[1] && widths[1] > widths[2],
            "10-90% widths must fall with drive, got {widths:?}"
        );
        format!(
            "widths {:.0}/{:.0}/{:.0} us strictly falling; plateaus {:.2}/{:.2}/{:.2}%; end levels >= 95%",
            widths[0],
            widths[1],
            widths[2],
            100.0 * plateaus[0],
            100.0 * plateaus[1],
            100.0 * plateaus[2]
        )
    });
}

#[test]
fn criterion_04_two_timescale_integrity() {
    criterion(4, "full vs slow-manifold integrator", || {
        const REL_TOL: f64 = 0.02;
        const SKIP_US: f64 = 1.5;

        let p = PhysicalParams::default();
        let window = 1.0e3 / p.kappa;
        let t_end = SKIP_US + window;
        let dt_out = 0.25;
        let s0 = MeanFieldState::vacuum_ground(&p);
        let full = meanfield::integrate_full(&p, &s0, t_end, &Controls::full().with_dt_out(dt_out))
            .expect("full integration failed");
        let slow = meanfield::integrate_slow(&p, &s0, t_end, &Controls::slow().with_dt_out(dt_out))
            .expect("slow integration failed");
        assert_eq!(full.t.len(), slow.t.len());

        let mut worst: f64 = 0.0;
        let mut compared = 0;
        for i in 0..full.t.len() {
            if full.t[i] < SKIP_US {
                continue;
            }
            let nf = full.states[i].photons();
            let ns = slow.states[i].photons();
            worst = worst.max((nf / ns - 1.0).abs());
            compared += 1;
        }
        assert!(compared > 100);
        assert!(
            worst <= REL_TOL,
            "worst |a|^2 mismatch {:.3}% exceeds {:.0}%",
            100.0 * worst,
            100.0 * REL_TOL
        );
        format!(
            "worst |a|^2 mismatch {:.3}% across {compared} samples in a {window:.1} us window",
            100.0 * worst
        )
    });
}

#[test]
fn criterion_05_population_conservation() {
    criterion(5, "population bookkeeping", || {
        const DRIFT_TOL: f64 = 1e-6;

        let p = PhysicalParams {
            escape: 0.0,
            ..PhysicalParams::default()
        };
        let ctl = Controls::slow().with_dt_out(100.0);
        let traj = meanfield::integrate_slow(&p, &MeanFieldState::vacuum_ground(&p), 5.0e4, &ctl)
            .expect("closed-system integration failed");
        let total0 = traj.states[0].n_g + traj.states[0].n_e;
        let mut drift: f64 = 0.0;
        for s in &traj.states {
            drift = drift.max(((s.n_g + s.n_e) - total0).abs() / total0);
        }
        assert!(
            drift < DRIFT_TOL,
            "population drift {drift:.2e} without escape exceeds {DRIFT_TOL:.0e}"
        );

        let mut q = PhysicalParams::default();
        q.eta = 40.0 * q.kappa;
        let ctl = Controls::slow().with_dt_out(50.0);
        let traj = meanfield::integrate_slow(&q, &MeanFieldState::vacuum_ground(&q), 4.0e4, &ctl)
            .expect("open-system integration failed");
        // Slack at the integrator tolerance floor, far below one atom.
        let slack = 1e-12 * q.n_atoms;
        let mut prev = f64::INFINITY;
        for (i, s) in traj.states.iter().enumerate() {
            let total = s.n_g + s.n_e;
            assert!(
                total <= prev + slack,
                "total population rose at sample {i}: {prev} -> {total}"
            );
            prev = total;
        }
        let first = traj.states[0].n_g + traj.states[0].n_e;
        let lost = 1.0 - prev / first;
        assert!(lost > 0.0);
        format!(
            "drift without escape {drift:.1e}; with escape the total fell monotonically by {:.0}%",
            100.0 * lost
        )
    });
}

#[test]
fn criterion_06_fluctuation_estimator() {
    criterion(6, "thermal occupation estimator", || {
        const BINS: usize = 100_000;
        const REL_TOL: f64 = 0.10;
        const SIGMA_BOUND: f64 = 5.0;

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cases: [(f64, f64); 3] = [(20.0, 5.0), (100.0, 1.0), (0.0, 10.0)];
        let mut errors = Vec::new();
        for &(beta_sq, n_th) in &cases {
            let beta = beta_sq.sqrt();
            let quadrature = Normal::new(0.0, (0.5 * n_th).sqrt()).unwrap();
            let mut counts = Vec::with_capacity(BINS);
            for _ in 0..BINS {
                let re = beta + quadrature.sample(&mut rng);
                let im: f64 = quadrature.sample(&mut rng);
                let intensity = (re * re + im * im).max(1e-12);
                counts.push(Poisson::new(intensity).unwrap().sample(&mut rng));
            }
            let (mean, var) = mean_var(&counts);
            let g2 = 1.0 + (var - mean) / (mean * mean);
            let estimate = analysis::thermal_occupation(mean, g2);
            let rel = (estimate / n_th - 1.0).abs();
            assert!(
                rel <= REL_TOL,
                "case (|beta|^2 = {beta_sq}, n_th = {n_th}): estimate {estimate:.3} off by {:.1}%",
                100.0 * rel
            );
            errors.push(100.0 * rel);
        }

        // A bare Poisson stream must be consistent with zero occupation.
        let pois = Poisson::new(40.0f64).unwrap();
        let counts: Vec<f64> = (0..BINS).map(|_| pois.sample(&mut rng)).collect();
        let (mean, var) = mean_var(&counts);
        let g2 = 1.0 + (var - mean) / (mean * mean);
        let signed = mean * (1.0 - (2.0 - g2).sqrt());
        let stderr = 0.5 * (2.0 / BINS as f64).sqrt();
        assert!(
            signed.abs() <= SIGMA_BOUND * stderr,
            "Poisson stream gave n_th = {signed:.4}, {:.1} sigma from zero",
            signed.abs() / stderr
        );
        format!(
            "recoveries off by {:.1}%/{:.1}%/{:.1}%; Poisson stream at {:.2} sigma of zero",
            errors[0],
            errors[1],
            errors[2],
            signed.abs() / stderr
        )
    });
}

#[test]
fn criterion_07_escape_rate_round_trip() {
    criterion(7, "escape-rate fit round trip", || {
        const FIT_REL_TOL: f64 = 0.02;
        const SLOPE_REL_TOL: f64 = 0.10;

        let truth = PhysicalParams::default();
        let mut p = truth;
        p.eta = 3000.0f64.sqrt() * p.kappa;
        let t_end = 62.0 / inversion_drain_rate(&p);
        let dt_out = t_end / 800.0;
        let reference = slow_trace(&p, t_end, dt_out, "reference");

        let opts = FitOptions {
            t_end_us: t_end,
            dt_out_us: dt_out,
            rel_tol: 1e-4,
            scan_points: 8,
        };
        let fit = analysis::fit_gamma(&reference, &p, (3.0e-4 * p.gamma, 3.0e-3 * p.gamma), &opts)
            .expect("fit failed");
        let rel = (fit.escape / truth.escape - 1.0).abs();
        assert!(
            rel <= FIT_REL_TOL,
            "fitted escape rate off by {:.2}% ({} evaluations)",
            100.0 * rel,
            fit.evaluations
        );

        // The single fitted rate must transfer: midpoint slopes at two other
        // drive powers, simulated with the fitted rate, match the truth.
        let mut transfer = Vec::new();
        for n0 in [1000.0f64, 10000.0] {
            let mut with_truth = truth;
            with_truth.eta = n0.sqrt() * with_truth.kappa;
            let mut with_fit = with_truth;
            with_fit.escape = fit.escape;
            let span = 62.0 / inversion_drain_rate(&with_truth);
            let dt = span / 800.0;
            let s_true = analysis::midpoint_slope(&slow_trace(&with_truth, span, dt, "truth"))
                .expect("reference slope");
            let s_fit = analysis::midpoint_slope(&slow_trace(&with_fit, span, dt, "fitted"))
                .expect("fitted slope");
            let rel_s = (s_fit / s_true - 1.0).abs();
            assert!(
                rel_s <= SLOPE_REL_TOL,
                "midpoint slope at n0 = {n0} off by {:.1}%",
                100.0 * rel_s
            );
            transfer.push(100.0 * rel_s);
        }
        format!(
            "escape rate recovered to {:.2}% in {} evaluations; slope transfer off by {:.2}%/{:.2}%",
            100.0 * rel,
            fit.evaluations,
            transfer[0],
            transfer[1]
        )
    });
}

#[test]
fn criterion_08_power_law_pipeline() {
    criterion(8, "power-law pipeline and width scaling", || {
        const EXACT_TOL: f64 = 1e-5;
        const NOISY_TOL: f64 = 0.05;
        const TRUE_EXPONENT: f64 = -1.37;

        let points: Vec<(f64, f64)> = (0..12)
            .map(|i| {
                let x = 10.0 * 10.0f64.powf(i as f64 * 2.0 / 11.0);
                (x, 7.7 * x.powf(TRUE_EXPONENT))
            })
            .collect();
        let exact = analysis::power_law_fit(&points).expect("exact fit failed");
        assert!(
            (exact.exponent - TRUE_EXPONENT).abs() < EXACT_TOL,
            "noiseless exponent {:.7} misses {TRUE_EXPONENT} by more than {EXACT_TOL:.0e}",
            exact.exponent
        );

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let noisy: Vec<(f64, f64)> = points
            .iter()
            .map(|&(x, y)| (x, y * (1.0 + noise.sample(&mut rng))))
            .collect();
        let fuzzy = analysis::power_law_fit(&noisy).expect("noisy fit failed");
        let err = (fuzzy.exponent - TRUE_EXPONENT).abs();
        assert!(
            err <= NOISY_TOL,
            "5%-noise exponent {:.4} misses {TRUE_EXPONENT} by {err:.4}",
            fuzzy.exponent
        );

        // Width scaling of the stochastic transition over two decades of
        // drive photons. The measured exponent -1.9 +/- 0.1 is printed for
        // comparison only; it is not a pass/fail bound here.
        let p = PhysicalParams::default();
        let drives: Vec<f64> = (0..9)
            .map(|i| 10.0 * 10.0f64.powf(i as f64 / 8.0))
            .collect();
        let opts = SweepOptions {
            t_end_us: 4.0e5,
            window_us: 500.0,
            dt_out_us: 500.0,
        };
        let sweep = analysis::scaling_sweep(&p, &drives, &StochasticConfig::default(), &opts)
            .expect("sweep failed");
        let (wfit, excluded) = analysis::fit_scaling(&sweep, FitColumn::Width).expect("width fit");
        assert!(
            wfit.n_points >= 3,
            "too few usable sweep points: {} ({excluded} excluded)",
            wfit.n_points
        );
        assert!(wfit.exponent.is_finite());
        format!(
            "noiseless exponent exact to {:.1e}; 5%-noise error {err:.3}; sweep width exponent {:+.3} +/- {:.3} over {} drives (measured reference -1.9 +/- 0.1, comparison only)",
            (exact.exponent - TRUE_EXPONENT).abs(),
            wfit.exponent,
            wfit.exponent_stderr,
            wfit.n_points
        )
    });
}

#[test]
fn criterion_09_ensemble_consistency() {
    criterion(9, "stochastic ensemble against the mean field", || {
        const N_TRAJ: u64 = 200;
        const SIGMA_BOUND: f64 = 3.0;
        // Guards plateau samples where the ensemble spread underflows; far
        // below any physical scale in the comparison.
        const FLOOR_FRACTION: f64 = 1e-4;

        let mut p = PhysicalParams::default();
        p.eta = 100.0 * p.kappa;
        let t_end = 5000.0;
        let dt_out = 100.0;
        // Losses land at the end of each jump step, so the realized
        // transition lags by about half a step; keep the step small enough
        // that this stays well inside the statistical band.
        let cfg = StochasticConfig {
            dt_jump: 2.0,
            ..StochasticConfig::default()
        };
        let runs =
            stochastic::ensemble_run(&p, &cfg, t_end, dt_out, N_TRAJ).expect("ensemble failed");
        let samples = runs[0].0.t.len();

        let mut mean = vec![0.0f64; samples];
        for (traj, _) in &runs {
            for (k, s) in traj.states.iter().enumerate() {
                mean[k] += s.photons();
            }
        }
        for m in &mut mean {
            *m /= N_TRAJ as f64;
        }
        let mut var = vec![0.0f64; samples];
        for (traj, _) in &runs {
            for (k, s) in traj.states.iter().enumerate() {
                let d = s.photons() - mean[k];
                var[k] += d * d;
            }
        }
        for v in &mut var {
            *v /= (N_TRAJ - 1) as f64;
        }

        let ctl = Controls::slow().with_dt_out(dt_out);
        let mf = meanfield::integrate_slow(&p, &MeanFieldState::vacuum_ground(&p), t_end, &ctl)
            .expect("mean-field trace failed");
        assert_eq!(mf.t.len(), samples);

        let floor = FLOOR_FRACTION * p.n_ref();
        let mut worst_sigma: f64 = 0.0;
        for k in 0..samples {
            let se = (var[k] / N_TRAJ as f64).sqrt();
            let diff = (mean[k] - mf.states[k].photons()).abs();
            assert!(
                diff <= SIGMA_BOUND * se + floor,
                "sample {k} (t = {} us): |ensemble - mean field| = {diff:.3} photons vs 3 SE = {:.3}",
                mf.t[k],
                SIGMA_BOUND * se
            );
            if se > floor {
                worst_sigma = worst_sigma.max(diff / se);
            }
        }

        // Same seed, different thread counts: bitwise identical.
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool2 = rayon::ThreadPoolBuilder::new()
            .num_threads(2)
            .build()
            .unwrap();
        let a = pool1
            .install(|| stochastic::ensemble_run(&p, &cfg, 2000.0, 500.0, 16))
            .expect("1-thread ensemble failed");
        let b = pool2
            .install(|| stochastic::ensemble_run(&p, &cfg, 2000.0, 500.0, 16))
            .expect("2-thread ensemble failed");
        for ((ta, ra), (tb, rb)) in a.iter().zip(&b) {
            assert_eq!(ra.counts, rb.counts);
            for (sa, sb) in ta.states.iter().zip(&tb.states) {
                assert_eq!(sa.photons().to_bits(), sb.photons().to_bits());
            }
        }
        format!(
            "{N_TRAJ} trajectories stay within 3 SE of the mean field (worst {worst_sigma:.2} SE); 1- and 2-thread ensembles bitwise identical"
        )
    });
}

#[test]
fn criterion_10_fluctuation_peak() {
    criterion(10, "thermal burst at the transition", || {
        const PEAK_OVER_BASELINE: f64 = 5.0;
        const WINDOW_US: f64 = 500.0;

        let mut p = PhysicalParams::default();
        p.eta = 1000.0f64.sqrt() * p.kappa;
        let t_end = 42_000.0;
        let cfg = StochasticConfig::default();
        let (traj, rec) =
            stochastic::simulate_trajectory(&p, &cfg, t_end, 200.0).expect("trajectory failed");
        let trace = IntensityTrace::from_trajectory(&traj, p.n_ref(), "burst").unwrap();
        let rep = analysis::transition_report(&trace, None).expect("no transition");

        let flux = analysis::fluctuations(&rec, WINDOW_US).expect("fluctuation series failed");
        let (t_peak, peak) = flux.n_th_peak().expect("no finite windows");
        assert!(
            t_peak >= rep.t10 && t_peak <= rep.t90,
            "peak at t = {t_peak:.0} us falls outside [{:.0}, {:.0}] us",
            rep.t10,
            rep.t90
        );

        let mut base_sum = 0.0;
        let mut base_n = 0usize;
        for (t, v) in flux.t.iter().zip(&flux.n_th) {
            if *t + 0.5 * WINDOW_US < 0.8 * rep.t10 && v.is_finite() {
                base_sum += v;
                base_n += 1;
            }
        }
        assert!(base_n > 10, "not enough pre-transition windows: {base_n}");
        let baseline = (base_sum / base_n as f64).max(f64::EPSILON);
        assert!(
            peak >= PEAK_OVER_BASELINE * baseline,
            "peak {peak:.3} photons is only {:.1}x the pre-transition baseline {baseline:.2e}",
            peak / baseline
        );
        format!(
            "peak n_th = {peak:.2} photons at t = {t_peak:.0} us inside [{:.0}, {:.0}] us; {:.0}x the baseline {baseline:.1e}",
            rep.t10,
            rep.t90,
            peak / baseline
        )
    });
}
