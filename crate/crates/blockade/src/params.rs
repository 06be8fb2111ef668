//! Physical parameters, cavity mode geometry, and the static ensemble
//! quantities derived from them.
//!
//! The model is a standing-wave Gaussian cavity mode driven at amplitude
//! `eta`, coupled to `n_atoms` two-level atoms with single-atom coupling `g`
//! (antinode value), atomic HWHM `gamma`, dark-state escape rate `escape`
//! (usually quoted as a fraction of `gamma`), and detunings `delta_a`
//! (drive-atom) and `delta_c` (drive-cavity). In the dispersive regime each
//! ground-state atom shifts the mode by `delta = g^2/delta_a` weighted by the
//! local mode intensity, so the collective shift can block transmission
//! entirely until atoms leave the ensemble.
//!
//! All rates/detunings here are angular (rad/us); lengths are um.

use crate::error::{Error, Result};
use crate::units;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Default cavity field HWHM decay rate, ordinary MHz.
pub const DEFAULT_KAPPA_MHZ: f64 = 3.22;
/// Default atomic dipole HWHM decay rate, ordinary MHz.
pub const DEFAULT_GAMMA_MHZ: f64 = 3.03;
/// Default dark-state escape rate as a fraction of gamma.
pub const DEFAULT_ESCAPE_OVER_GAMMA: f64 = 0.93e-3;
/// Default antinode single-atom coupling, ordinary MHz.
pub const DEFAULT_G_MHZ: f64 = 0.33;
/// Default drive-atom detuning, ordinary MHz (red detuned).
pub const DEFAULT_DELTA_A_MHZ: f64 = -35.0;
/// Default drive-cavity detuning, ordinary MHz.
pub const DEFAULT_DELTA_C_MHZ: f64 = 0.0;
/// Default drive amplitude over kappa; (eta/kappa)^2 is the empty-cavity
/// photon number on resonance.
pub const DEFAULT_ETA_OVER_KAPPA: f64 = 20.0;
/// Default mean-field atom budget. The initial collective shift is
/// (n_atoms/2) * delta, so 2e4 atoms reproduce an effective shift of
/// 1e4 * delta (~9.7 kappa): deep blockade.
pub const DEFAULT_N_ATOMS: f64 = 2.0e4;
/// Default mode waist, um.
pub const DEFAULT_WAIST_UM: f64 = 127.0;
/// Default drive wavelength, nm.
pub const DEFAULT_WAVELENGTH_NM: f64 = 780.0;

/// How the single-atom coupling enters the collective mean-field equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coupling {
    /// g_eff = g / sqrt(2): standing-wave intensity average, the default.
    #[default]
    ModeAveraged,
    /// g_eff = g: antinode value, for sensitivity studies.
    Peak,
}

/// Rates, detunings and drive for one run. Everything in rad/us.
#[derive(Debug, Clone, Copy)]
pub struct PhysicalParams {
    /// Cavity field decay rate (HWHM of the empty-cavity line).
    pub kappa: f64,
    /// Atomic dipole decay rate (HWHM).
    pub gamma: f64,
    /// Escape rate into dark states (the slow channel driving the switch).
    pub escape: f64,
    /// Single-atom coupling at an antinode.
    pub g: f64,
    /// Drive-atom detuning.
    pub delta_a: f64,
    /// Drive-cavity detuning.
    pub delta_c: f64,
    /// Cavity drive amplitude.
    pub eta: f64,
    /// Mean-field atom budget (the ensemble starts fully in the ground state).
    pub n_atoms: f64,
    /// Convention for the collective coupling.
    pub coupling: Coupling,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        let kappa = units::rad_per_us_from_mhz(DEFAULT_KAPPA_MHZ);
        let gamma = units::rad_per_us_from_mhz(DEFAULT_GAMMA_MHZ);
        PhysicalParams {
            kappa,
            gamma,
            escape: DEFAULT_ESCAPE_OVER_GAMMA * gamma,
            g: units::rad_per_us_from_mhz(DEFAULT_G_MHZ),
            delta_a: units::rad_per_us_from_mhz(DEFAULT_DELTA_A_MHZ),
            delta_c: units::rad_per_us_from_mhz(DEFAULT_DELTA_C_MHZ),
            eta: DEFAULT_ETA_OVER_KAPPA * kappa,
            n_atoms: DEFAULT_N_ATOMS,
            coupling: Coupling::default(),
        }
    }
}

impl PhysicalParams {
    /// Collective coupling entering the mean-field equations.
    #[inline]
    #[must_use]
    pub fn g_eff(&self) -> f64 {
        match self.coupling {
            Coupling::ModeAveraged => self.g / std::f64::consts::SQRT_2,
            Coupling::Peak => self.g,
        }
    }

    /// Empty-cavity photon number at resonance, (eta/kappa)^2. Used as the
    /// reference level for transmission traces.
    #[inline]
    #[must_use]
    pub fn n_ref(&self) -> f64 {
        let r = self.eta / self.kappa;
        r * r
    }

    /// Hard validation: rejects parameter sets the model cannot represent.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.kappa,
            self.gamma,
            self.escape,
            self.g,
            self.delta_a,
            self.delta_c,
            self.eta,
            self.n_atoms,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("non-finite physical parameter".into()));
        }
        if self.kappa <= 0.0 {
            return Err(Error::Config(format!(
                "kappa must be > 0, got {}",
                self.kappa
            )));
        }
        if self.gamma <= 0.0 {
            return Err(Error::Config(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if self.escape < 0.0 {
            return Err(Error::Config(format!(
                "escape rate must be >= 0, got {}",
                self.escape
            )));
        }
        if self.g < 0.0 {
            return Err(Error::Config(format!("g must be >= 0, got {}", self.g)));
        }
        if self.delta_a == 0.0 {
            return Err(Error::Config(
                "delta_a must be nonzero (the model lives in the dispersive regime)".into(),
            ));
        }
        if self.eta < 0.0 {
            return Err(Error::Config(format!("eta must be >= 0, got {}", self.eta)));
        }
        if self.n_atoms < 0.0 {
            return Err(Error::Config(format!(
                "n_atoms must be >= 0, got {}",
                self.n_atoms
            )));
        }
        Ok(())
    }

    /// Soft checks. Returns human-readable warnings instead of failing, e.g.
    /// when the dispersive assumption |delta_a| >> gamma is marginal.
    #[must_use]
    pub fn guard_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.delta_a.abs() < 5.0 * self.gamma {
            w.push(format!(
                "dispersive guard: |delta_a| = {:.3} rad/us is below 5*gamma = {:.3} rad/us; \
                 g^2/delta_a adiabatic elimination is unreliable here",
                self.delta_a.abs(),
                5.0 * self.gamma
            ));
        }
        w
    }
}

/// Per-atom dispersive light shift of the cavity mode: delta = g^2 / delta_a.
/// Signed: red atomic detuning (delta_a < 0) gives a negative shift.
#[inline]
#[must_use]
pub fn dispersive_shift(p: &PhysicalParams) -> f64 {
    p.g * p.g / p.delta_a
}

/// Steady transmission of the shifted mode relative to the empty cavity,
/// for an effective ground-state atom number `n_eff`:
///
///   I/I0 = 1 / ( (delta_c - n_eff*delta)^2 / kappa^2 + 1 )
#[inline]
#[must_use]
pub fn lorentzian_transmission(p: &PhysicalParams, n_eff: f64) -> f64 {
    let detuning = (p.delta_c - n_eff * dispersive_shift(p)) / p.kappa;
    1.0 / (detuning * detuning + 1.0)
}

/// Standing-wave Gaussian mode geometry.
#[derive(Debug, Clone, Copy)]
pub struct ModeGeometry {
    /// 1/e^2 intensity waist, um.
    pub waist: f64,
    /// Wavenumber along the cavity axis, rad/um.
    pub wavenumber: f64,
}

impl ModeGeometry {
    pub fn new(waist_um: f64, wavelength_nm: f64) -> Result<Self> {
        if waist_um <= 0.0 || wavelength_nm <= 0.0 || waist_um.is_nan() || wavelength_nm.is_nan() {
            return Err(Error::Config(format!(
                "waist and wavelength must be > 0 (got {waist_um} um, {wavelength_nm} nm)"
            )));
        }
        Ok(ModeGeometry {
            waist: waist_um,
            wavenumber: units::wavenumber_from_nm(wavelength_nm),
        })
    }

    /// Axial mode period (half the wavelength would repeat the intensity;
    /// this is the full wavelength in um).
    #[must_use]
    pub fn wavelength_um(&self) -> f64 {
        units::TAU / self.wavenumber
    }
}

impl Default for ModeGeometry {
    fn default() -> Self {
        ModeGeometry::new(DEFAULT_WAIST_UM, DEFAULT_WAVELENGTH_NM).expect("defaults are valid")
    }
}

/// Normalized mode intensity |f(r)|^2 at position (x, y, z) um, with z along
/// the cavity axis: cos^2(k z) * exp(-2 (x^2+y^2) / w^2). Ranges over [0, 1].
#[inline]
#[must_use]
pub fn mode_intensity(geo: &ModeGeometry, r: [f64; 3]) -> f64 {
    let [x, y, z] = r;
    let axial = (geo.wavenumber * z).cos().powi(2);
    let radial = (-2.0 * (x * x + y * y) / (geo.waist * geo.waist)).exp();
    axial * radial
}

/// A fixed snapshot of atom positions and ground-state weights p_j.
#[derive(Debug, Clone)]
pub struct AtomEnsemble {
    pub positions: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl AtomEnsemble {
    pub fn new(positions: Vec<[f64; 3]>, weights: Vec<f64>) -> Result<Self> {
        if positions.len() != weights.len() {
            return Err(Error::Config(format!(
                "ensemble has {} positions but {} weights",
                positions.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::Config(format!(
                "ground-state weights must lie in [0, 1], got {w}"
            )));
        }
        Ok(AtomEnsemble { positions, weights })
    }

    /// Draw a cloud: uniform along the axis over an integer number of mode
    /// wavelengths (so the cos^2 average is unbiased) and Gaussian in the
    /// transverse plane with sigma = `radial_sigma_over_waist * waist`.
    /// All weights are 1.
    pub fn sample_cloud(
        geo: &ModeGeometry,
        n: usize,
        axial_wavelengths: u32,
        radial_sigma_over_waist: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if axial_wavelengths == 0 {
            return Err(Error::Config(
                "axial extent must cover >= 1 wavelength".into(),
            ));
        }
        if radial_sigma_over_waist < 0.0 || radial_sigma_over_waist.is_nan() {
            return Err(Error::Config(format!(
                "radial sigma factor must be >= 0, got {radial_sigma_over_waist}"
            )));
        }
        let span = f64::from(axial_wavelengths) * geo.wavelength_um();
        let radial = Normal::new(0.0, radial_sigma_over_waist * geo.waist)
            .map_err(|e| Error::Config(format!("bad radial distribution: {e}")))?;
        let positions = (0..n)
            .map(|_| {
                let z = rng.random::<f64>() * span;
                let x = if radial_sigma_over_waist > 0.0 {
                    radial.sample(rng)
                } else {
                    0.0
                };
                let y = if radial_sigma_over_waist > 0.0 {
                    radial.sample(rng)
                } else {
                    0.0
                };
                [x, y, z]
            })
            .collect();
        let weights = vec![1.0; n];
        Ok(AtomEnsemble { positions, weights })
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Effective atom number N = sum_j |f(r_j)|^2 p_j: the mode-weighted count
/// that sets the collective shift N*delta.
#[must_use]
pub fn effective_atom_number(geo: &ModeGeometry, ensemble: &AtomEnsemble) -> f64 {
    ensemble
        .positions
        .iter()
        .zip(&ensemble.weights)
        .map(|(r, p)| mode_intensity(geo, *r) * p)
        .sum()
}
