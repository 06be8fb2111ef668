//! Configuration files: flat `key = value` text in laboratory units.
//!
//! All frequencies are ordinary frequencies in MHz; the 2*pi is applied once
//! when converting to [`PhysicalParams`] (angular rad/us). Keeping the MHz
//! numbers as the canonical record means a rendered config reproduces the
//! exact same physics bit for bit when parsed back.
//!
//! Recognized keys:
//!
//! | key               | meaning                                    |
//! |-------------------|--------------------------------------------|
//! | `kappa_mhz`       | cavity field decay rate                    |
//! | `gamma_mhz`       | atomic polarization decay rate             |
//! | `Gamma_over_gamma`| escape rate as a fraction of gamma         |
//! | `g_mhz`           | single-atom coupling at the mode peak      |
//! | `delta_A_mhz`     | drive-atom detuning                        |
//! | `delta_C_mhz`     | drive-cavity detuning                      |
//! | `eta_over_kappa`  | drive amplitude over kappa                 |
//! | `n_atoms`         | trapped atom number                        |
//! | `waist_um`        | cavity mode waist                          |
//! | `wavelength_nm`   | cavity wavelength                          |
//! | `g_eff_mode`      | `averaged` (default) or `peak` coupling    |
//!
//! `#` starts a comment; later assignments override earlier ones.

use crate::error::{Error, Result};
use crate::params::{self, Coupling, ModeGeometry, PhysicalParams};
use crate::units;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub kappa_mhz: f64,
    pub gamma_mhz: f64,
    pub escape_over_gamma: f64,
    pub g_mhz: f64,
    pub delta_a_mhz: f64,
    pub delta_c_mhz: f64,
    pub eta_over_kappa: f64,
    pub n_atoms: f64,
    pub waist_um: f64,
    pub wavelength_nm: f64,
    pub g_eff_mode: Coupling,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            kappa_mhz: params::DEFAULT_KAPPA_MHZ,
            gamma_mhz: params::DEFAULT_GAMMA_MHZ,
            escape_over_gamma: params::DEFAULT_ESCAPE_OVER_GAMMA,
            g_mhz: params::DEFAULT_G_MHZ,
            delta_a_mhz: params::DEFAULT_DELTA_A_MHZ,
            delta_c_mhz: params::DEFAULT_DELTA_C_MHZ,
            eta_over_kappa: params::DEFAULT_ETA_OVER_KAPPA,
            n_atoms: params::DEFAULT_N_ATOMS,
            waist_um: params::DEFAULT_WAIST_UM,
            wavelength_nm: params::DEFAULT_WAVELENGTH_NM,
            g_eff_mode: Coupling::ModeAveraged,
        }
    }
}

impl Config {
    /// Apply one `key = value` assignment. Returns a plain message on
    /// failure; callers attach file/line or CLI context.
    fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let float = |v: &str| -> std::result::Result<f64, String> {
            v.parse::<f64>().map_err(|e| format!("{key}: {e}"))
        };
        match key {
            "kappa_mhz" => self.kappa_mhz = float(value)?,
            "gamma_mhz" => self.gamma_mhz = float(value)?,
            "Gamma_over_gamma" => self.escape_over_gamma = float(value)?,
            "g_mhz" => self.g_mhz = float(value)?,
            "delta_A_mhz" => self.delta_a_mhz = float(value)?,
            "delta_C_mhz" => self.delta_c_mhz = float(value)?,
            "eta_over_kappa" => self.eta_over_kappa = float(value)?,
            "n_atoms" => self.n_atoms = float(value)?,
            "waist_um" => self.waist_um = float(value)?,
            "wavelength_nm" => self.wavelength_nm = float(value)?,
            "g_eff_mode" => {
                self.g_eff_mode = match value {
                    "averaged" => Coupling::ModeAveraged,
                    "peak" => Coupling::Peak,
                    other => {
                        return Err(format!(
                            "g_eff_mode: expected 'averaged' or 'peak', got '{other}'"
                        ))
                    }
                }
            }
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Apply a CLI-style `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{assignment}'")))?;
        self.apply(key.trim(), value.trim()).map_err(Error::Config)
    }

    pub fn parse_str(text: &str, origin: &str) -> Result<Config> {
        let mut cfg = Config::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: idx + 1,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            cfg.apply(key.trim(), value.trim())
                .map_err(|msg| Error::Parse {
                    path: origin.to_string(),
                    line: idx + 1,
                    msg,
                })?;
        }
        Ok(cfg)
    }

    pub fn parse_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text, &path.display().to_string())
    }

    /// Physical parameters in angular units (rad/us), with the 2*pi applied
    /// and the derived rates resolved.
    #[must_use]
    pub fn to_params(&self) -> PhysicalParams {
        let kappa = units::rad_per_us_from_mhz(self.kappa_mhz);
        let gamma = units::rad_per_us_from_mhz(self.gamma_mhz);
        PhysicalParams {
            kappa,
            gamma,
            escape: self.escape_over_gamma * gamma,
            g: units::rad_per_us_from_mhz(self.g_mhz),
            delta_a: units::rad_per_us_from_mhz(self.delta_a_mhz),
            delta_c: units::rad_per_us_from_mhz(self.delta_c_mhz),
            eta: self.eta_over_kappa * kappa,
            n_atoms: self.n_atoms,
            coupling: self.g_eff_mode,
        }
    }

    pub fn to_geometry(&self) -> Result<ModeGeometry> {
        ModeGeometry::new(self.waist_um, self.wavelength_nm)
    }

    /// Key/value pairs in canonical order, formatted for files and manifests.
    #[must_use]
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("kappa_mhz", format!("{}", self.kappa_mhz)),
            ("gamma_mhz", format!("{}", self.gamma_mhz)),
            ("Gamma_over_gamma", format!("{}", self.escape_over_gamma)),
            ("g_mhz", format!("{}", self.g_mhz)),
            ("delta_A_mhz", format!("{}", self.delta_a_mhz)),
            ("delta_C_mhz", format!("{}", self.delta_c_mhz)),
            ("eta_over_kappa", format!("{}", self.eta_over_kappa)),
            ("n_atoms", format!("{}", self.n_atoms)),
            ("waist_um", format!("{}", self.waist_um)),
            ("wavelength_nm", format!("{}", self.wavelength_nm)),
            (
                "g_eff_mode",
                match self.g_eff_mode {
                    Coupling::ModeAveraged => "averaged".to_string(),
                    Coupling::Peak => "peak".to_string(),
                },
            ),
        ]
    }

    /// Render as a config file that parses back to the same values.
    #[must_use]
    pub fn render(&self) -> String {
        let mut s = String::from(
            "# simulation parameters (ordinary frequencies in MHz; angular 2*pi\n\
             # factors are applied when the file is loaded)\n",
        );
        for (key, value) in self.entries() {
            let _ = writeln!(s, "{key} = {value}");
        }
        s
    }
}
