//! Central finite-difference check of property gradients.

use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adjoint::PropertyGradients;
use crate::error::Result;
use crate::grid::{Property, PropertySet};

/// How the perturbation `h` is chosen for each sampled cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `h = relative · scale`.
    Fixed { relative: f64 },
    /// Try `h = largest · scale · 10^(-k/4)` for `k` in `0..count` and
    /// keep the estimate that differs least from both of its neighbors on
    /// that ladder.
    Adaptive { largest: f64, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig {
    /// Cells sampled per property (all cells if the map is smaller).
    pub cells_per_property: usize,
    pub step: StepRule,
    /// Lower limit on the scale of each property, indexed by
    /// `Property::index`, so near-zero maps still get a usable step.
    pub scale_floor: [f64; 4],
    pub seed: u64,
    pub properties: [bool; 4],
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            cells_per_property: 20,
            step: StepRule::Adaptive {
                largest: 1.0,
                count: 21,
            },
            scale_floor: [1e3, 1e3, 1e1, 1.0],
            seed: 0,
            properties: [true; 4],
        }
    }
}

impl FdConfig {
    pub const PASS_TOLERANCE: f64 = 1e-5;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSample {
    pub cell: usize,
    /// Perturbation used for this cell.
    pub step: f64,
    pub analytic: f64,
    pub finite_difference: f64,
}

impl FdSample {
    /// `|a − f| / max(|a|, |f|)`, zero when both vanish.
    pub fn relative_error(&self) -> f64 {
        let denom = self.analytic.abs().max(self.finite_difference.abs());
        if denom == 0.0 {
            0.0
        } else {
            (self.analytic - self.finite_difference).abs() / denom
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub property: Property,
    pub scale: f64,
    pub samples: Vec<FdSample>,
}

impl PropertyCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.samples.iter().map(FdSample::relative_error).fold(0.0, f64::max)
    }

    pub fn mean_relative_error(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(FdSample::relative_error).sum::<f64>() / self.samples.len() as f64
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error() < tolerance
    }
}

/// Compare `grads` against `(L(θ + h) − L(θ − h)) / 2h` at randomly
/// sampled cells of each enabled property.
pub fn finite_difference_check(
    loss: impl Fn(&PropertySet) -> Result<f64>,
    props: &PropertySet,
    grads: &PropertyGradients,
    cfg: &FdConfig,
) -> Result<Vec<PropertyCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for p in Property::ALL {
        if !cfg.properties[p.index()] {
            continue;
        }
        let map = props.get(p);
        let cells = map.as_slice().len();
        let scale = map.max_abs().max(cfg.scale_floor[p.index()]);
        let picked = sample(&mut rng, cells, cfg.cells_per_property.min(cells)).into_vec();
        let mut samples = Vec::with_capacity(picked.len());
        for cell in picked {
            let central = |h: f64| -> Result<f64> {
                let shifted = |delta: f64| -> Result<f64> {
                    let mut m = map.clone();
                    m.as_mut_slice()[cell] += delta;
                    loss(&props.clone().with(p, m)?)
                };
                Ok((shifted(h)? - shifted(-h)?) / (2.0 * h))
            };
            let (step, fd) = match cfg.step {
                StepRule::Fixed { relative } => {
                    let h = relative * scale;
                    (h, central(h)?)
                }
                StepRule::Adaptive { largest, count } => {
                    // steps whose perturbed media are rejected (CFL, sign, damping
                    // limit) are dropped from the ladder
                    let mut steps = Vec::new();
                    let mut est = Vec::new();
                    let mut first_err = None;
                    for k in 0..count {
                        let h = largest * scale * libm::pow(10.0, -(k as f64) / 4.0);
                        match central(h) {
                            Ok(v) => {
                                steps.push(h);
                                est.push(v);
                            }
                            Err(e) => {
                                first_err.get_or_insert(e);
                            }
                        }
                    }
                    if steps.len() < 3 {
                        return Err(first_err.unwrap_or(crate::Error::InvalidConfig(
                            "adaptive step ladder needs at least three steps",
                        )));
                    }
                    let spread = |k: usize| (est[k] - est[k - 1]).abs().max((est[k] - est[k + 1]).abs());
                    let best = (1..steps.len() - 1)
                        .min_by(|&a, &b| spread(a).total_cmp(&spread(b)))
                        .unwrap_or(1);
                    (steps[best], est[best])
                }
            };
            samples.push(FdSample {
                cell,
                step,
                analytic: grads.get(p).as_slice()[cell],
                finite_difference: fd,
            });
        }
        out.push(PropertyCheck {
            property: p,
            scale,
            samples,
        });
    }
    Ok(out)
}
