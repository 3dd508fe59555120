//! Two-phase property staging, the tissue mask, and stop criteria.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Map2, Property};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Speed of sound and density everywhere.
    SosDensity,
    /// Attenuation and nonlinearity inside the tissue mask.
    AttenuationNonlinearity,
}

impl Phase {
    pub fn active(self) -> &'static [Property] {
        match self {
            Phase::SosDensity => &[Property::Sos, Property::Density],
            Phase::AttenuationNonlinearity => &[Property::Attenuation, Property::Nonlinearity],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSchedule {
    /// Iterations spent in the first phase.
    pub k1: usize,
    /// Relative density deviation above which a cell counts as tissue.
    pub mask_threshold: f64,
    pub water_density: f64,
}

impl StageSchedule {
    pub const DEFAULT_FRACTION: f64 = 0.6;
    pub const DEFAULT_THRESHOLD: f64 = 0.02;

    /// First phase for `fraction` of `total_iterations`, at least one.
    pub fn from_fraction(total_iterations: usize, fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidConfig("phase-1 fraction must lie in [0, 1]"));
        }
        let k1 = libm::round(total_iterations as f64 * fraction) as usize;
        Ok(Self {
            k1: k1.max(1),
            mask_threshold: Self::DEFAULT_THRESHOLD,
            water_density: 1000.0,
        })
    }

    /// Every iteration updates speed of sound and density.
    pub fn sos_density_only() -> Self {
        Self {
            k1: usize::MAX,
            mask_threshold: Self::DEFAULT_THRESHOLD,
            water_density: 1000.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k1 == 0 {
            return Err(Error::InvalidConfig("phase-1 length must be at least 1"));
        }
        if !(self.mask_threshold > 0.0) || !(self.water_density > 0.0) {
            return Err(Error::InvalidConfig("mask threshold and water density must be positive"));
        }
        Ok(())
    }

    pub fn phase(&self, iteration: usize) -> Phase {
        if iteration < self.k1 {
            Phase::SosDensity
        } else {
            Phase::AttenuationNonlinearity
        }
    }
}

/// Cells whose density departs from water by more than `threshold`
/// (relative), before dilation.
pub fn threshold_mask(density_est: &Map2, water_density: f64, threshold: f64) -> Vec<bool> {
    density_est
        .as_slice()
        .iter()
        .map(|&rho| libm::fabs(rho - water_density) / water_density > threshold)
        .collect()
}

/// Threshold test followed by one 4-neighbor dilation.
pub fn tissue_mask(density_est: &Map2, water_density: f64, threshold: f64) -> Vec<bool> {
    let raw = threshold_mask(density_est, water_density, threshold);
    let (nx, nz) = density_est.shape();
    let mut out = raw.clone();
    for i in 0..nx {
        for j in 0..nz {
            if raw[i * nz + j] {
                if i > 0 {
                    out[(i - 1) * nz + j] = true;
                }
                if i + 1 < nx {
                    out[(i + 1) * nz + j] = true;
                }
                if j > 0 {
                    out[i * nz + j - 1] = true;
                }
                if j + 1 < nz {
                    out[i * nz + j + 1] = true;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCriteria {
    pub max_iterations: usize,
    /// Stop when the loss fell by less than this fraction over `patience`
    /// iterations. Zero disables the test.
    pub plateau_tol: f64,
    pub patience: usize,
    /// Stop when the gradient ∞-norm drops to this fraction of its first
    /// value. Zero disables the test.
    pub grad_tol: f64,
}

impl StopCriteria {
    pub fn iterations(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            plateau_tol: 1e-4,
            patience: 10,
            grad_tol: 1e-8,
        }
    }

    /// Only the iteration budget.
    pub fn fixed(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            plateau_tol: 0.0,
            patience: 10,
            grad_tol: 0.0,
        }
    }

    pub(crate) fn plateaued(&self, losses: &[f64]) -> bool {
        if self.plateau_tol <= 0.0 || self.patience == 0 || losses.len() <= self.patience {
            return false;
        }
        let now = losses[losses.len() - 1];
        let then = losses[losses.len() - 1 - self.patience];
        if then == 0.0 {
            return true;
        }
        (then - now) / libm::fabs(then) < self.plateau_tol
    }

    pub(crate) fn gradient_vanished(&self, grad_inf: f64, initial: f64) -> bool {
        self.grad_tol > 0.0 && grad_inf <= self.grad_tol * initial
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    Plateau,
    GradientVanished,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::MaxIterations => "max_iterations",
            StopReason::Plateau => "plateau",
            StopReason::GradientVanished => "gradient_vanished",
        }
    }
}
