//! Mean-field dynamics of the driven cavity coupled to the atomic ensemble.
//!
//! State variables: cavity field amplitude `a`, collective polarization `M`,
//! and ground/excited populations `N_g`, `N_e`. With `g_eff` the collective
//! coupling (see [`PhysicalParams::g_eff`]) the equations of motion are
//!
//! ```text
//!   da/dt  = (i delta_c - kappa) a + g_eff M + eta
//!   dM/dt  = (i delta_a - gamma - escape) M + g_eff (N_e - N_g) a
//!   dN_e/dt = -g_eff (a* M + M* a) - 2 (gamma + escape) N_e
//!   dN_g/dt = +g_eff (a* M + M* a) + 2 gamma N_e
//! ```
//!
//! so the only leak out of N_g + N_e is the escape channel, at rate
//! 2*escape*N_e. The effective ground-state atom number seen by the drive is
//! (N_g - N_e)/2, and for frozen populations the steady field reproduces the
//! shifted-Lorentzian transmission of [`params::lorentzian_transmission`] in
//! the dispersive limit.
//!
//! Two integration routes are provided and kept deliberately independent:
//!
//! * [`integrate_full`]: the four complex/real equations as written, for
//!   windows up to ~1e5/kappa. Refuses longer spans via its step budget.
//! * [`integrate_slow`]: adiabatic elimination of (a, M). At every step the
//!   quasi-steady linear 2x2 system is solved for (a, M) given (N_g, N_e)
//!   and only the populations are integrated. This is what makes 100 ms+
//!   traces affordable, and it cross-checks the full route to percent level.

use crate::error::{Error, Result};
use crate::ode;
use crate::params::PhysicalParams;
use num_complex::Complex64;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

/// Instantaneous mean-field state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldState {
    /// Cavity field amplitude (photon amplitude, |a|^2 = photon number).
    pub a: Complex64,
    /// Collective atomic polarization.
    pub m: Complex64,
    /// Ground-state population.
    pub n_g: f64,
    /// Excited-state population.
    pub n_e: f64,
}

impl MeanFieldState {
    /// Empty cavity, all atoms in the ground state.
    #[must_use]
    pub fn vacuum_ground(p: &PhysicalParams) -> Self {
        MeanFieldState {
            a: Complex64::ZERO,
            m: Complex64::ZERO,
            n_g: p.n_atoms,
            n_e: 0.0,
        }
    }

    /// Intracavity photon number |a|^2.
    #[inline]
    #[must_use]
    pub fn photons(&self) -> f64 {
        self.a.norm_sqr()
    }

    #[inline]
    fn to_array(self) -> [f64; 6] {
        [
            self.a.re, self.a.im, self.m.re, self.m.im, self.n_g, self.n_e,
        ]
    }

    #[inline]
    fn from_array(y: &[f64; 6]) -> Self {
        MeanFieldState {
            a: Complex64::new(y[0], y[1]),
            m: Complex64::new(y[2], y[3]),
            n_g: y[4],
            n_e: y[5],
        }
    }
}

/// Time derivative of the mean-field equations at `s`.
#[must_use]
pub fn derivative(p: &PhysicalParams, s: &MeanFieldState) -> MeanFieldState {
    let g_eff = p.g_eff();
    let da = Complex64::new(-p.kappa, p.delta_c) * s.a + g_eff * s.m + p.eta;
    let dm = Complex64::new(-(p.gamma + p.escape), p.delta_a) * s.m + g_eff * (s.n_e - s.n_g) * s.a;
    let exchange = g_eff * 2.0 * (s.a.conj() * s.m).re;
    let dn_e = -exchange - 2.0 * (p.gamma + p.escape) * s.n_e;
    let dn_g = exchange + 2.0 * p.gamma * s.n_e;
    MeanFieldState {
        a: da,
        m: dm,
        n_g: dn_g,
        n_e: dn_e,
    }
}

/// Quasi-steady field and polarization for frozen populations: solves
///
/// ```text
///   (i delta_c - kappa) a + g_eff M            = -eta
///   g_eff (N_e - N_g) a + (i delta_a - gamma - escape) M = 0
/// ```
pub fn steady_state(p: &PhysicalParams, n_g: f64, n_e: f64) -> Result<(Complex64, Complex64)> {
    let g_eff = p.g_eff();
    let ca = Complex64::new(-p.kappa, p.delta_c);
    let cm = Complex64::new(-(p.gamma + p.escape), p.delta_a);
    let coupling = Complex64::new(g_eff * (n_e - n_g), 0.0);
    let det = ca * cm - g_eff * coupling;
    let scale = ca.norm() * cm.norm() + g_eff * coupling.norm();
    if det.norm() <= 1e-14 * scale {
        return Err(Error::SingularSteadyState { n_g, n_e });
    }
    // Cramer's rule with rhs (-eta, 0).
    let a = -p.eta * cm / det;
    let m = p.eta * coupling / det;
    Ok((a, m))
}

/// Integration options shared by both routes.
#[derive(Debug, Clone, Copy)]
pub struct Controls {
    pub ode: ode::Controls,
    /// Output grid spacing, us. 500 us matches the detection resolution the
    /// analysis layer assumes by default.
    pub dt_out: f64,
    /// Hold N_g, N_e fixed (steady-state checks, linear-response studies).
    pub freeze_populations: bool,
}

impl Controls {
    /// Defaults for [`integrate_full`]: tight tolerance, bounded span.
    #[must_use]
    pub fn full() -> Self {
        Controls {
            ode: ode::Controls {
                rtol: 1e-8,
                atol: 1e-12,
                max_step: None,
                max_steps: 1_000_000,
            },
            dt_out: 500.0,
            freeze_populations: false,
        }
    }

    /// Defaults for [`integrate_slow`]: same tolerance, long-haul budget.
    #[must_use]
    pub fn slow() -> Self {
        Controls {
            ode: ode::Controls {
                rtol: 1e-8,
                atol: 1e-9,
                max_step: None,
                max_steps: 200_000_000,
            },
            dt_out: 500.0,
            freeze_populations: false,
        }
    }

    #[must_use]
    pub fn with_dt_out(mut self, dt_out: f64) -> Self {
        self.dt_out = dt_out;
        self
    }
}

pub const TRAJECTORY_CSV_HEADER: &str = "t_us,re_a,im_a,re_M,im_M,N_g,N_e,photons";

/// A sampled run: uniform time grid, states, and any soft warnings raised
/// while producing it (dispersive guard, population clamps, ...).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<MeanFieldState>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    /// Photon-number series |a(t)|^2.
    #[must_use]
    pub fn photons(&self) -> Vec<f64> {
        self.states.iter().map(MeanFieldState::photons).collect()
    }

    /// Output grid spacing. Panics on traces with fewer than two samples.
    #[must_use]
    pub fn dt(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    pub fn write_csv_to(&self, w: &mut impl Write) -> Result<()> {
        let mut buf = String::with_capacity(64 * (self.states.len() + 1));
        buf.push_str(TRAJECTORY_CSV_HEADER);
        buf.push('\n');
        for (t, s) in self.t.iter().zip(&self.states) {
            writeln!(
                buf,
                "{},{},{},{},{},{},{},{}",
                t,
                s.a.re,
                s.a.im,
                s.m.re,
                s.m.im,
                s.n_g,
                s.n_e,
                s.photons()
            )
            .expect("string write");
        }
        w.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        self.write_csv_to(&mut f)
    }

    pub fn read_csv(path: &Path) -> Result<Trajectory> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let display = path.display().to_string();
        let mut t = Vec::new();
        let mut states = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if lineno == 1 {
                if line.trim_end() != TRAJECTORY_CSV_HEADER {
                    return Err(Error::Parse {
                        path: display,
                        line: 1,
                        msg: format!("expected header '{TRAJECTORY_CSV_HEADER}', got '{line}'"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(Error::Parse {
                    path: display,
                    line: lineno,
                    msg: format!("expected 8 fields, got {}", fields.len()),
                });
            }
            let mut v = [0.0f64; 8];
            for (i, field) in fields.iter().enumerate() {
                v[i] = field.trim().parse().map_err(|e| Error::Parse {
                    path: display.clone(),
                    line: lineno,
                    msg: format!("field {}: {e}", i + 1),
                })?;
            }
            t.push(v[0]);
            states.push(MeanFieldState {
                a: Complex64::new(v[1], v[2]),
                m: Complex64::new(v[3], v[4]),
                n_g: v[5],
                n_e: v[6],
            });
        }
        if states.is_empty() {
            return Err(Error::Parse {
                path: display,
                line: 1,
                msg: "no data rows".into(),
            });
        }
        Ok(Trajectory {
            t,
            states,
            warnings: Vec::new(),
        })
    }
}

/// Clamp tiny negative populations produced by floating-point error; anything
/// materially negative earns a warning.
fn sanitize_populations(states: &mut [MeanFieldState], scale: f64, warnings: &mut Vec<String>) {
    let tol = 1e-9 * scale.max(1.0);
    let mut worst: f64 = 0.0;
    for s in states.iter_mut() {
        for v in [&mut s.n_g, &mut s.n_e] {
            if *v < 0.0 {
                worst = worst.min(*v);
                *v = 0.0;
            }
        }
    }
    if worst < -tol {
        warnings.push(format!(
            "population dipped to {worst:.3e} (clamped to 0); tolerance was -{tol:.1e}"
        ));
    }
}

/// Integrate the full four-variable system. Suited to windows up to roughly
/// 1e5/kappa; longer spans exhaust the step budget and return an error that
/// points at [`integrate_slow`].
pub fn integrate_full(
    p: &PhysicalParams,
    s0: &MeanFieldState,
    t_end: f64,
    ctl: &Controls,
) -> Result<Trajectory> {
    p.validate()?;
    let mut warnings = p.guard_warnings();
    let freeze = ctl.freeze_populations;
    let rhs = |_t: f64, y: &[f64; 6]| {
        let s = MeanFieldState::from_array(y);
        let d = derivative(p, &s);
        let mut dy = d.to_array();
        if freeze {
            dy[4] = 0.0;
            dy[5] = 0.0;
        }
        dy
    };
    let sampled = ode::integrate(rhs, 0.0, s0.to_array(), t_end, ctl.dt_out, &ctl.ode)?;
    let mut states: Vec<MeanFieldState> =
        sampled.y.iter().map(MeanFieldState::from_array).collect();
    sanitize_populations(&mut states, p.n_atoms, &mut warnings);
    Ok(Trajectory {
        t: sampled.t,
        states,
        warnings,
    })
}

/// Right-hand side of the population dynamics on the slow manifold.
/// `include_escape` moves the 2*escape*N_e loss in or out of the
/// deterministic flow; the stochastic layer turns it off and realizes escape
/// as discrete jumps instead.
pub(crate) fn slow_population_rhs(
    p: &PhysicalParams,
    n_g: f64,
    n_e: f64,
    include_escape: bool,
) -> Result<[f64; 2]> {
    let (a, m) = steady_state(p, n_g, n_e)?;
    let exchange = p.g_eff() * 2.0 * (a.conj() * m).re;
    let mut dn_e = -exchange - 2.0 * p.gamma * n_e;
    if include_escape {
        dn_e -= 2.0 * p.escape * n_e;
    }
    let dn_g = exchange + 2.0 * p.gamma * n_e;
    Ok([dn_g, dn_e])
}

/// Integrate only the populations on the slow manifold, starting from
/// (`n_g0`, `n_e0`), sampling every `grid_dt`. The stochastic layer runs this
/// with `include_escape = false` and realizes atom escape as discrete jumps
/// between segments instead.
pub(crate) fn integrate_populations(
    p: &PhysicalParams,
    n_g0: f64,
    n_e0: f64,
    t_end: f64,
    grid_dt: f64,
    include_escape: bool,
    ctl: &ode::Controls,
) -> Result<ode::Sampled<2>> {
    let mut rhs_err: Option<Error> = None;
    let rhs = |_t: f64, y: &[f64; 2]| match slow_population_rhs(p, y[0], y[1], include_escape) {
        Ok(d) => d,
        Err(e) => {
            rhs_err.get_or_insert(e);
            [f64::NAN, f64::NAN]
        }
    };
    match ode::integrate(rhs, 0.0, [n_g0, n_e0], t_end, grid_dt, ctl) {
        Ok(s) => Ok(s),
        Err(e) => Err(rhs_err.unwrap_or(e)),
    }
}

/// Integrate on the slow manifold: (a, M) are eliminated via
/// [`steady_state`] at every evaluation and only (N_g, N_e) evolve. The
/// initial field components of `s0` are ignored; trajectories start on the
/// manifold.
pub fn integrate_slow(
    p: &PhysicalParams,
    s0: &MeanFieldState,
    t_end: f64,
    ctl: &Controls,
) -> Result<Trajectory> {
    p.validate()?;
    let mut warnings = p.guard_warnings();
    if ctl.freeze_populations {
        // Nothing evolves; emit the constant quasi-steady trace.
        let (a, m) = steady_state(p, s0.n_g, s0.n_e)?;
        let n = (t_end / ctl.dt_out).floor() as usize;
        let t: Vec<f64> = (0..=n).map(|k| k as f64 * ctl.dt_out).collect();
        let s = MeanFieldState {
            a,
            m,
            n_g: s0.n_g,
            n_e: s0.n_e,
        };
        return Ok(Trajectory {
            t,
            states: vec![s; n + 1],
            warnings,
        });
    }

    // Population positivity is enforced at the RHS level: the quasi-steady
    // solve is well-defined for slightly negative inputs, so just evaluate.
    let sampled = integrate_populations(p, s0.n_g, s0.n_e, t_end, ctl.dt_out, true, &ctl.ode)?;

    let mut states = Vec::with_capacity(sampled.y.len());
    for y in &sampled.y {
        let (n_g, n_e) = (y[0].max(0.0), y[1].max(0.0));
        let (a, m) = steady_state(p, n_g, n_e)?;
        states.push(MeanFieldState { a, m, n_g, n_e });
    }
    let mut raw: Vec<MeanFieldState> = sampled
        .y
        .iter()
        .map(|y| MeanFieldState {
            a: Complex64::ZERO,
            m: Complex64::ZERO,
            n_g: y[0],
            n_e: y[1],
        })
        .collect();
    sanitize_populations(&mut raw, p.n_atoms, &mut warnings);
    Ok(Trajectory {
        t: sampled.t,
        states,
        warnings,
    })
}
