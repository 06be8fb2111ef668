//! Unit conversions. Internally everything is angular frequency in rad/us
//! and time in us; user-facing inputs are ordinary frequencies in MHz.

/// 2*pi, the factor between ordinary and angular frequency.
pub const TAU: f64 = std::f64::consts::TAU;

/// Ordinary frequency in MHz -> angular frequency in rad/us.
///
/// 1 MHz = 1 cycle/us, so the numeric conversion is just the 2*pi.
#[inline]
#[must_use]
pub fn rad_per_us_from_mhz(f_mhz: f64) -> f64 {
    TAU * f_mhz
}

/// Angular frequency in rad/us -> ordinary frequency in MHz.
#[inline]
#[must_use]
pub fn mhz_from_rad_per_us(w: f64) -> f64 {
    w / TAU
}

/// Angular frequency in rad/us -> ordinary frequency in kHz.
#[inline]
#[must_use]
pub fn khz_from_rad_per_us(w: f64) -> f64 {
    1e3 * w / TAU
}

/// Vacuum wavelength in nm -> wavenumber k = 2*pi/lambda in rad/um.
#[inline]
#[must_use]
pub fn wavenumber_from_nm(lambda_nm: f64) -> f64 {
    TAU / (lambda_nm * 1e-3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mhz_round_trip() {
        let w = rad_per_us_from_mhz(3.22);
        assert!((w - 20.231855).abs() < 1e-5, "kappa = 2pi*3.22: {w}");
        // Multiply/divide by 2*pi is not exact in binary; round-trip to ~1 ulp.
        assert!((mhz_from_rad_per_us(w) - 3.22).abs() < 1e-15);
    }

    #[test]
    fn khz_scale() {
        // 2pi * 3 kHz expressed in rad/us.
        let w = rad_per_us_from_mhz(3e-3);
        assert!((khz_from_rad_per_us(w) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn wavenumber_of_780nm_light() {
        let k = wavenumber_from_nm(780.0);
        // lambda = 0.78 um -> k = 2pi/0.78 = 8.0553 rad/um
        assert!((k - 8.055366).abs() < 1e-5, "k = {k}");
    }
}
