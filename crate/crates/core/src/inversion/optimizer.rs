//! Gradient descent and Adam over property maps, with masking and
//! clamping to physical floors.

use alloc::vec;
use alloc::vec::Vec;

use crate::adjoint::PropertyGradients;
use crate::error::{Error, Result};
use crate::grid::{Property, PropertySet};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    Gd,
    #[default]
    Adam,
}

/// Lower limits applied after every update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampFloors {
    pub sos: f64,
    pub density: f64,
    pub attenuation: f64,
    pub nonlinearity: f64,
}

impl Default for ClampFloors {
    fn default() -> Self {
        Self {
            sos: 300.0,
            density: 100.0,
            attenuation: 0.0,
            nonlinearity: 0.0,
        }
    }
}

impl ClampFloors {
    pub fn floor(&self, p: Property) -> f64 {
        match p {
            Property::Sos => self.sos,
            Property::Density => self.density,
            Property::Attenuation => self.attenuation,
            Property::Nonlinearity => self.nonlinearity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// Learning rate per property, indexed by `Property::index`.
    pub rates: [f64; 4],
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub floors: ClampFloors,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            rates: [1.0, 1.0, 1e-2, 1e-3],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            floors: ClampFloors::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn gd(rates: [f64; 4]) -> Self {
        Self {
            kind: OptimizerKind::Gd,
            rates,
            ..Self::default()
        }
    }

    pub fn rate(&self, p: Property) -> f64 {
        self.rates[p.index()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidConfig("learning rates must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig("adam epsilon must be positive"));
        }
        Ok(())
    }
}

/// Number of cells pulled back to the floor, per property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClampCounts(pub [usize; 4]);

impl ClampCounts {
    pub fn get(&self, p: Property) -> usize {
        self.0[p.index()]
    }

    pub fn add(&mut self, other: &ClampCounts) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub cfg: OptimizerConfig,
    first: [Vec<f64>; 4],
    second: [Vec<f64>; 4],
    steps: [u64; 4],
}

impl OptimizerState {
    pub fn new(cfg: OptimizerConfig, cells: usize) -> Result<Self> {
        cfg.validate()?;
        let z = || vec![0.0; cells];
        Ok(Self {
            cfg,
            first: [z(), z(), z(), z()],
            second: [z(), z(), z(), z()],
            steps: [0; 4],
        })
    }

    /// Updates taken so far for `p`.
    pub fn steps(&self, p: Property) -> u64 {
        self.steps[p.index()]
    }

    /// Update the `active` properties of `props` in place. With a mask only
    /// cells where it is true change, and Adam moments elsewhere are left
    /// alone.
    pub fn step(
        &mut self,
        props: &mut PropertySet,
        grads: &PropertyGradients,
        active: &[Property],
        mask: Option<&[bool]>,
    ) -> Result<ClampCounts> {
        for &p in active {
            if grads.get(p).as_slice().iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient { property: p });
            }
            props.get(p).ensure_same_shape(grads.get(p))?;
        }
        let cells = props.sos().as_slice().len();
        if self.first[0].len() != cells {
            return Err(Error::ShapeMismatch {
                what: "optimizer state",
                expected: self.first[0].len(),
                found: cells,
            });
        }
        if let Some(m) = mask {
            if m.len() != cells {
                return Err(Error::ShapeMismatch {
                    what: "update mask",
                    expected: cells,
                    found: m.len(),
                });
            }
        }
        let cfg = self.cfg;
        let mut counts = ClampCounts::default();
        for &p in active {
            let k = p.index();
            let alpha = cfg.rate(p);
            let floor = cfg.floors.floor(p);
            let g = grads.get(p).as_slice();
            self.steps[k] += 1;
            let t = self.steps[k] as i32;
            let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
            let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
            let values = props.get_mut(p).as_mut_slice();
            let (m1, m2) = (&mut self.first[k], &mut self.second[k]);
            for c in 0..cells {
                if let Some(m) = mask {
                    if !m[c] {
                        continue;
                    }
                }
                let delta = match cfg.kind {
                    OptimizerKind::Gd => alpha * g[c],
                    OptimizerKind::Adam => {
                        m1[c] = cfg.beta1 * m1[c] + (1.0 - cfg.beta1) * g[c];
                        m2[c] = cfg.beta2 * m2[c] + (1.0 - cfg.beta2) * g[c] * g[c];
                        let mhat = m1[c] / bc1;
                        let vhat = m2[c] / bc2;
                        alpha * mhat / (math::sqrt(vhat) + cfg.eps)
                    }
                };
                let mut v = values[c] - delta;
                let keep_positive = matches!(p, Property::Sos | Property::Density);
                if v < floor || (keep_positive && v <= 0.0) {
                    v = floor;
                    counts.0[k] += 1;
                }
                values[c] = v;
            }
        }
        Ok(counts)
    }
}
