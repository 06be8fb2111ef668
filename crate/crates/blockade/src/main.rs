//! Command-line front end: deterministic and stochastic runs, drive sweeps,
//! trace analysis, and escape-rate fitting. Every invocation writes a
//! manifest next to its outputs with the full parameter set and a rerun line.

use blockade::analysis::{
    align_midpoints, fit_gamma, fit_scaling, fluctuations, scaling_sweep, transition_report,
    write_fit_report, write_scaling_csv, FitColumn, FitOptions, IntensityTrace, SweepOptions,
};
use blockade::config::Config;
use blockade::manifest::RunManifest;
use blockade::meanfield::{self, Controls, MeanFieldState, Trajectory, TRAJECTORY_CSV_HEADER};
use blockade::stochastic::{
    ensemble_run, simulate_trajectory, CountRecord, StochasticConfig, COUNTS_CSV_HEADER,
};
use blockade::Error;
use clap::{Parser, Subcommand, ValueEnum};
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "blockade",
    version,
    about = "Transmission blockade breakdown in a driven atom-cavity system",
    max_term_width = 100
)]
struct Cli {
    /// Parameter file (flat key = value, frequencies in MHz).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,

    /// Base RNG seed for stochastic runs.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Parameter override, e.g. --set eta_over_kappa=31.6 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Full field + atom dynamics; practical up to ~1e5 cavity lifetimes.
    Full,
    /// Populations on the slow manifold; spans hundreds of milliseconds.
    Slow,
    /// Slow manifold plus discrete atom escape and photon counting.
    Stochastic,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Slow => "slow",
            Mode::Stochastic => "stochastic",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write the trajectory (and counts, if
    /// stochastic).
    Simulate {
        #[arg(long, value_enum, default_value_t = Mode::Slow)]
        mode: Mode,
        /// Simulated span, us.
        #[arg(long, default_value_t = 300_000.0)]
        t_end_us: f64,
        /// Trajectory output grid, us.
        #[arg(long, default_value_t = 500.0)]
        dt_out_us: f64,
        /// Escape jump step, us (stochastic mode).
        #[arg(long, default_value_t = 10.0)]
        dt_jump_us: f64,
        /// Photon-count bin, us (stochastic mode).
        #[arg(long, default_value_t = 1.0)]
        bin_time_us: f64,
        /// Detection efficiency in (0, 1] (stochastic mode).
        #[arg(long, default_value_t = 1.0)]
        efficiency: f64,
        /// Take escape losses out of N_e instead of rescaling both
        /// populations (stochastic mode).
        #[arg(long)]
        decrement_excited: bool,
        /// Independent realizations on consecutive RNG streams
        /// (stochastic mode).
        #[arg(long, default_value_t = 1)]
        trajectories: u64,
    },
    /// Stochastic runs over several drive strengths; writes the scaling
    /// table and a power-law fit of the transition width.
    Sweep {
        /// Drive amplitudes eta/kappa, comma separated.
        #[arg(long, required = true, value_delimiter = ',')]
        drives: Vec<f64>,
        /// Span for the weakest drive, us; stronger drives scale it down.
        #[arg(long, default_value_t = 300_000.0)]
        t_end_us: f64,
        /// Fluctuation window, us.
        #[arg(long, default_value_t = 500.0)]
        window_us: f64,
        /// Trajectory output grid, us.
        #[arg(long, default_value_t = 500.0)]
        dt_out_us: f64,
        /// Escape jump step, us.
        #[arg(long, default_value_t = 10.0)]
        dt_jump_us: f64,
        /// Photon-count bin, us.
        #[arg(long, default_value_t = 1.0)]
        bin_time_us: f64,
        /// Detection efficiency in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        efficiency: f64,
        /// Fit the integrated thermal occupation instead of the width.
        #[arg(long)]
        integral: bool,
    },
    /// Transition timing and photon statistics of recorded traces.
    Analyze {
        /// Trajectory or counts CSV files (detected by header).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Reference photon number for trajectory inputs; defaults to the
        /// configured drive.
        #[arg(long)]
        n_ref_photons: Option<f64>,
        /// Fluctuation window for counts inputs, us.
        #[arg(long, default_value_t = 500.0)]
        window_us: f64,
        /// Moving-average span before threshold detection, us.
        #[arg(long)]
        smooth_us: Option<f64>,
        /// Also shift all traces so their midpoints coincide and write them
        /// on a common grid.
        #[arg(long)]
        align: bool,
    },
    /// Infer the escape rate from a reference transition by slope matching.
    FitGamma {
        /// Reference trajectory or counts CSV.
        reference: PathBuf,
        /// Reference photon number for trajectory inputs; defaults to the
        /// configured drive.
        #[arg(long)]
        n_ref_photons: Option<f64>,
        /// Lower search bound, units of gamma.
        #[arg(long, default_value_t = 1e-5)]
        gamma_min: f64,
        /// Upper search bound, units of gamma.
        #[arg(long, default_value_t = 1e-1)]
        gamma_max: f64,
        /// Relative tolerance on the fitted rate.
        #[arg(long, default_value_t = 1e-3)]
        rel_tol: f64,
        /// Simulation span per candidate, us; defaults to the reference
        /// span.
        #[arg(long)]
        t_end_us: Option<f64>,
        /// Candidate output grid, us.
        #[arg(long, default_value_t = 100.0)]
        dt_out_us: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Sweep { .. } => "sweep",
            Command::Analyze { .. } => "analyze",
            Command::FitGamma { .. } => "fit-gamma",
        }
    }
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let usage = !matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if usage { 1 } else { 0 };
        }
    };

    if let Some(threads) = cli.threads {
        // Ignore failure: the pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!(
            "error: cannot create output directory {}: {e}",
            cli.out.display()
        );
        return 1;
    }

    let started = Instant::now();
    let mut manifest = RunManifest::new(cli.command.name(), &argv, cli.seed);
    let result = execute(&cli, &mut manifest);
    manifest.duration_s = started.elapsed().as_secs_f64();
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            manifest.fail(e);
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    if let Err(e) = manifest.write(&cli.out.join("manifest.txt")) {
        eprintln!("error: cannot write manifest: {e}");
        return 1;
    }
    code
}

fn load_config(cli: &Cli) -> Result<Config, Error> {
    let mut cfg = match &cli.config {
        Some(path) => Config::parse_file(path)?,
        None => Config::default(),
    };
    for assignment in &cli.overrides {
        cfg.set(assignment)?;
    }
    Ok(cfg)
}

fn execute(cli: &Cli, manifest: &mut RunManifest) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    manifest.push_config(&cfg);
    let params = cfg.to_params();
    params.validate()?;
    for w in params.guard_warnings() {
        eprintln!("warning: {w}");
    }

    match &cli.command {
        Command::Simulate {
            mode,
            t_end_us,
            dt_out_us,
            dt_jump_us,
            bin_time_us,
            efficiency,
            decrement_excited,
            trajectories,
        } => {
            manifest.push("run.mode", mode.name());
            manifest.push("run.t_end_us", t_end_us);
            manifest.push("run.dt_out_us", dt_out_us);
            let s0 = MeanFieldState::vacuum_ground(&params);
            match mode {
                Mode::Full | Mode::Slow => {
                    let ctl = match mode {
                        Mode::Full => Controls::full(),
                        _ => Controls::slow(),
                    }
                    .with_dt_out(*dt_out_us);
                    let traj = match mode {
                        Mode::Full => meanfield::integrate_full(&params, &s0, *t_end_us, &ctl)?,
                        _ => meanfield::integrate_slow(&params, &s0, *t_end_us, &ctl)?,
                    };
                    let path = cli.out.join("trajectory.csv");
                    traj.write_csv(&path)?;
                    manifest.push("output.trajectory", path.display());
                    report_trajectory(&traj, &params.n_ref());
                }
                Mode::Stochastic => {
                    let scfg = StochasticConfig {
                        seed: cli.seed,
                        dt_jump: *dt_jump_us,
                        bin_time: *bin_time_us,
                        efficiency: *efficiency,
                        decrement_excited_only: *decrement_excited,
                    };
                    manifest.push("run.dt_jump_us", dt_jump_us);
                    manifest.push("run.bin_time_us", bin_time_us);
                    manifest.push("run.efficiency", efficiency);
                    manifest.push("run.trajectories", trajectories);
                    if *trajectories == 1 {
                        let (traj, rec) =
                            simulate_trajectory(&params, &scfg, *t_end_us, *dt_out_us)?;
                        let tp = cli.out.join("trajectory.csv");
                        let cp = cli.out.join("counts.csv");
                        traj.write_csv(&tp)?;
                        rec.write_csv(&cp)?;
                        manifest.push("output.trajectory", tp.display());
                        manifest.push("output.counts", cp.display());
                        report_trajectory(&traj, &params.n_ref());
                    } else {
                        let runs =
                            ensemble_run(&params, &scfg, *t_end_us, *dt_out_us, *trajectories)?;
                        for (i, (traj, rec)) in runs.iter().enumerate() {
                            let tp = cli.out.join(format!("trajectory_{i:03}.csv"));
                            let cp = cli.out.join(format!("counts_{i:03}.csv"));
                            traj.write_csv(&tp)?;
                            rec.write_csv(&cp)?;
                            manifest.push(&format!("output.trajectory.{i}"), tp.display());
                            manifest.push(&format!("output.counts.{i}"), cp.display());
                        }
                        println!(
                            "wrote {} stochastic realizations to {}",
                            runs.len(),
                            cli.out.display()
                        );
                    }
                }
            }
            Ok(())
        }

        Command::Sweep {
            drives,
            t_end_us,
            window_us,
            dt_out_us,
            dt_jump_us,
            bin_time_us,
            efficiency,
            integral,
        } => {
            let scfg = StochasticConfig {
                seed: cli.seed,
                dt_jump: *dt_jump_us,
                bin_time: *bin_time_us,
                efficiency: *efficiency,
                decrement_excited_only: false,
            };
            let opts = SweepOptions {
                t_end_us: *t_end_us,
                window_us: *window_us,
                dt_out_us: *dt_out_us,
            };
            manifest.push("run.drives", format_list(drives));
            manifest.push("run.t_end_us", t_end_us);
            manifest.push("run.window_us", window_us);
            let points = scaling_sweep(&params, drives, &scfg, &opts)?;
            let csv = cli.out.join("scaling.csv");
            write_scaling_csv(&points, &csv)?;
            manifest.push("output.scaling", csv.display());
            for p in &points {
                if p.excluded {
                    println!(
                        "notice: drive {} photons excluded (no transition in span)",
                        p.drive_photons
                    );
                }
            }
            let column = if *integral {
                FitColumn::NthIntegrated
            } else {
                FitColumn::Width
            };
            match fit_scaling(&points, column) {
                Ok((fit, excluded)) => {
                    let path = cli.out.join("scaling_fit.txt");
                    write_fit_report(&fit, excluded, column, &path)?;
                    manifest.push("output.fit", path.display());
                    manifest.push("run.fit_exponent", fit.exponent);
                    println!(
                        "{} ~ drive^{:.3} (stderr {:.3}, {} points, {} excluded)",
                        column.name(),
                        fit.exponent,
                        fit.exponent_stderr,
                        fit.n_points,
                        excluded
                    );
                }
                Err(Error::BadFitInput(msg)) => {
                    println!("notice: power-law fit skipped: {msg}");
                    manifest.push("run.fit_skipped", msg);
                }
                Err(e) => return Err(e),
            }
            Ok(())
        }

        Command::Analyze {
            inputs,
            n_ref_photons,
            window_us,
            smooth_us,
            align,
        } => {
            let mut traces = Vec::new();
            for (i, input) in inputs.iter().enumerate() {
                manifest.push(&format!("input.{i}"), input.display());
                let label = stem(input);
                match load_input(input)? {
                    Input::Trajectory(traj) => {
                        let n_ref = n_ref_photons.unwrap_or_else(|| params.n_ref());
                        traces.push(IntensityTrace::from_trajectory(&traj, n_ref, &label)?);
                    }
                    Input::Counts(rec) => {
                        let flux = fluctuations(&rec, *window_us)?;
                        let fp = cli.out.join(format!("{label}_fluctuations.csv"));
                        flux.write_csv(&fp)?;
                        manifest.push(&format!("output.fluctuations.{i}"), fp.display());
                        if let Some((t_peak, peak)) = flux.n_th_peak() {
                            println!(
                                "{label}: peak thermal occupation {peak:.4} photons at t = {t_peak} us"
                            );
                        }
                        let mut trace = IntensityTrace::from_counts(&rec, &label)?;
                        if let Some(n_ref) = n_ref_photons {
                            trace.n_ref = *n_ref;
                        }
                        traces.push(trace);
                    }
                }
            }

            for (i, trace) in traces.iter().enumerate() {
                match transition_report(trace, *smooth_us) {
                    Ok(rep) => {
                        print!("{}", rep.render());
                        let rp = cli.out.join(format!("{}_report.txt", trace.label));
                        std::fs::write(&rp, rep.render())?;
                        manifest.push(&format!("output.report.{i}"), rp.display());
                    }
                    Err(Error::NoTransition { label, threshold }) => {
                        println!(
                            "notice: no transition in '{label}' (never reaches {threshold} photons)"
                        );
                    }
                    Err(e) => return Err(e),
                }
            }

            if *align {
                match align_midpoints(&traces) {
                    Ok(aligned) => {
                        for trace in &aligned {
                            let path = cli.out.join(format!("aligned_{}.csv", trace.label));
                            trace.write_csv(&path)?;
                            manifest
                                .push(&format!("output.aligned.{}", trace.label), path.display());
                        }
                        println!("aligned {} traces at their midpoints", aligned.len());
                    }
                    Err(Error::NoTransition { label, .. }) => {
                        println!("notice: alignment skipped, '{label}' has no transition");
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(())
        }

        Command::FitGamma {
            reference,
            n_ref_photons,
            gamma_min,
            gamma_max,
            rel_tol,
            t_end_us,
            dt_out_us,
        } => {
            manifest.push("input.reference", reference.display());
            let label = stem(reference);
            let trace = match load_input(reference)? {
                Input::Trajectory(traj) => {
                    let n_ref = n_ref_photons.unwrap_or_else(|| params.n_ref());
                    IntensityTrace::from_trajectory(&traj, n_ref, &label)?
                }
                Input::Counts(rec) => {
                    let mut trace = IntensityTrace::from_counts(&rec, &label)?;
                    if let Some(n_ref) = n_ref_photons {
                        trace.n_ref = *n_ref;
                    }
                    trace
                }
            };
            let span = t_end_us.unwrap_or_else(|| trace.t_last());
            let opts = FitOptions {
                t_end_us: span,
                dt_out_us: *dt_out_us,
                rel_tol: *rel_tol,
                scan_points: 8,
            };
            let range = (gamma_min * params.gamma, gamma_max * params.gamma);
            manifest.push("run.t_end_us", span);
            manifest.push("run.gamma_min", gamma_min);
            manifest.push("run.gamma_max", gamma_max);
            let fit = fit_gamma(&trace, &params, range, &opts)?;
            let path = cli.out.join("gamma_fit.txt");
            let report = format!(
                "# escape rate inferred from '{label}'\n\
                 escape_rate_per_us = {}\n\
                 escape_over_gamma = {}\n\
                 residual = {}\n\
                 evaluations = {}\n\
                 slope_ref_per_us = {}\n\
                 slope_fit_per_us = {}\n",
                fit.escape,
                fit.escape / params.gamma,
                fit.residual,
                fit.evaluations,
                fit.slope_ref,
                fit.slope_fit
            );
            std::fs::write(&path, report)?;
            manifest.push("output.gamma_fit", path.display());
            manifest.push("run.escape_over_gamma", fit.escape / params.gamma);
            println!(
                "escape rate = {:.6e} /us ({:.4e} gamma) after {} evaluations",
                fit.escape,
                fit.escape / params.gamma,
                fit.evaluations
            );
            Ok(())
        }
    }
}

fn report_trajectory(traj: &Trajectory, n_ref: &f64) {
    for w in &traj.warnings {
        eprintln!("warning: {w}");
    }
    let last = traj.states.last().expect("non-empty trajectory");
    println!(
        "final transmission {:.4} of reference ({} samples)",
        last.photons() / n_ref,
        traj.t.len()
    );
}

fn format_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".to_string())
}

enum Input {
    Trajectory(Trajectory),
    Counts(CountRecord),
}

/// Distinguish trajectory and counts CSVs by their header line.
fn load_input(path: &Path) -> Result<Input, Error> {
    let file = std::fs::File::open(path)?;
    let mut first = String::new();
    std::io::BufReader::new(file).read_line(&mut first)?;
    let header = first.trim_end();
    if header == TRAJECTORY_CSV_HEADER {
        Ok(Input::Trajectory(Trajectory::read_csv(path)?))
    } else if header == COUNTS_CSV_HEADER {
        Ok(Input::Counts(CountRecord::read_csv(path)?))
    } else {
        Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: format!(
                "unrecognized header '{header}'; expected '{TRAJECTORY_CSV_HEADER}' or '{COUNTS_CSV_HEADER}'"
            ),
        })
    }
}
