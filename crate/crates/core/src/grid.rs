//! Uniform sampling of relative angular frequency.
//!
//! All frequencies are relative to the degenerate point, `ω = Ω − ω_p/2`,
//! in rad/fs. The same 1-D axis is used for the idler and the signal photon.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, SPEED_OF_LIGHT_NM_PER_FS};

/// Symmetric uniform grid over `[-omega_max, omega_max]` with an odd number
/// of samples, so that `ω = 0` is always sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    n_points: usize,
    omega_max: f64,
    center_wavelength_nm: f64,
}

impl SpectralGrid {
    pub fn new(n_points: usize, omega_max: f64) -> Result<Self> {
        Self::with_center(n_points, omega_max, 1064.0)
    }

    pub fn with_center(n_points: usize, omega_max: f64, center_wavelength_nm: f64) -> Result<Self> {
        if n_points < 3 || n_points % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid needs an odd number of points >= 3, got {n_points}"
            )));
        }
        if !(omega_max > 0.0 && omega_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "omega_max must be positive, got {omega_max}"
            )));
        }
        if !(center_wavelength_nm > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "center wavelength must be positive, got {center_wavelength_nm}"
            )));
        }
        Ok(Self {
            n_points,
            omega_max,
            center_wavelength_nm,
        })
    }

    /// 1025 samples over ±0.35 rad/fs around 1064 nm.
    pub fn lab_default() -> Self {
        Self::new(1025, 0.35).expect("valid default grid")
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn omega_min(&self) -> f64 {
        -self.omega_max
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    /// Full window width `W = omega_max - omega_min`.
    pub fn window(&self) -> f64 {
        2.0 * self.omega_max
    }

    pub fn center_wavelength_nm(&self) -> f64 {
        self.center_wavelength_nm
    }

    /// Absolute angular frequency of the degenerate idler/signal photon.
    pub fn center_frequency(&self) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT_NM_PER_FS / self.center_wavelength_nm
    }

    /// Central pump frequency ω_p (twice the degenerate photon frequency).
    pub fn pump_center_frequency(&self) -> f64 {
        2.0 * self.center_frequency()
    }

    pub fn spacing(&self) -> f64 {
        self.window() / (self.n_points - 1) as f64
    }

    pub fn omega(&self, index: usize) -> f64 {
        -self.omega_max + index as f64 * self.spacing()
    }

    pub fn axis(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.omega(k)).collect()
    }

    pub fn center_index(&self) -> usize {
        self.n_points / 2
    }

    /// Trapezoid quadrature weights on the axis.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n_points];
        w[0] = 0.5 * h;
        w[self.n_points - 1] = 0.5 * h;
        w
    }

    /// Same grid with `2(n - 1) + 1` points: every original sample is kept.
    pub fn refined(&self) -> Self {
        Self {
            n_points: 2 * (self.n_points - 1) + 1,
            ..self.clone()
        }
    }

    /// Relative angular frequency (rad/fs) of an absolute wavelength (nm).
    pub fn relative_frequency_of_wavelength(&self, wavelength_nm: f64) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT_NM_PER_FS / wavelength_nm - self.center_frequency()
    }

    /// Absolute vacuum wavelength (nm) of a relative angular frequency.
    pub fn wavelength_of(&self, omega: f64) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT_NM_PER_FS / (omega + self.center_frequency())
    }

    pub(crate) fn ensure_same(&self, other: &SpectralGrid) -> Result<()> {
        if self.n_points != other.n_points || self.omega_max != other.omega_max {
            return Err(Error::GridMismatch(format!(
                "{} points over ±{} vs {} points over ±{}",
                self.n_points, self.omega_max, other.n_points, other.omega_max
            )));
        }
        Ok(())
    }
}

/// Convert a bandwidth in wavelength (nm) around `center_nm` to angular
/// frequency (rad/fs), first order.
pub fn wavelength_bandwidth_to_omega(bandwidth_nm: f64, center_nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT_NM_PER_FS * bandwidth_nm / (center_nm * center_nm)
}

/// Convert an angular-frequency bandwidth (rad/fs) to wavelength (nm).
pub fn omega_bandwidth_to_wavelength(bandwidth: f64, center_nm: f64) -> f64 {
    bandwidth * center_nm * center_nm / (2.0 * PI * SPEED_OF_LIGHT_NM_PER_FS)
}

/// Convert a frequency bandwidth in MHz to angular frequency in rad/fs.
pub fn mhz_to_rad_per_fs(mhz: f64) -> f64 {
    2.0 * PI * mhz * 1e6 * 1e-15
}
