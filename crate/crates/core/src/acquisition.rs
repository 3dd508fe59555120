//! Transmit synthesis (focused beams and plane waves), emission sequencing,
//! and additive measurement noise.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::forward::{simulate_channels, PhysicsContext};
use crate::grid::{ChannelData, ProbeGeometry, PropertySet, SimulationGrid};
use crate::math;

/// Exterior force over space-time, stored as one trace per driven cell.
/// Every other cell is zero at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseField {
    nx: usize,
    nz: usize,
    nt: usize,
    sources: Vec<(usize, Vec<f64>)>,
}

impl PulseField {
    pub fn zeros(grid: &SimulationGrid) -> Self {
        Self {
            nx: grid.nx,
            nz: grid.nz,
            nt: grid.nt,
            sources: Vec::new(),
        }
    }

    /// Build from `(row, col, trace)` triples. Traces must have `nt` samples
    /// and cells must be distinct.
    pub fn from_traces(grid: &SimulationGrid, traces: Vec<(usize, usize, Vec<f64>)>) -> Result<Self> {
        let mut sources: Vec<(usize, Vec<f64>)> = Vec::with_capacity(traces.len());
        for (row, col, trace) in traces {
            if row >= grid.nx || col >= grid.nz {
                return Err(Error::IndexOutOfGrid { row, col });
            }
            if trace.len() != grid.nt {
                return Err(Error::ShapeMismatch {
                    what: "pulse trace",
                    expected: grid.nt,
                    found: trace.len(),
                });
            }
            let cell = grid.cell(row, col);
            if sources.iter().any(|(c, _)| *c == cell) {
                return Err(Error::InvalidPlan("duplicate source cell"));
            }
            sources.push((cell, trace));
        }
        Ok(Self {
            nx: grid.nx,
            nz: grid.nz,
            nt: grid.nt,
            sources,
        })
    }

    pub fn ensure_grid(&self, grid: &SimulationGrid) -> Result<()> {
        if (self.nx, self.nz, self.nt) != (grid.nx, grid.nz, grid.nt) {
            return Err(Error::ShapeMismatch {
                what: "pulse vs grid",
                expected: grid.cells() * grid.nt,
                found: self.nx * self.nz * self.nt,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.nt
    }

    pub fn get(&self, row: usize, col: usize, step: usize) -> f64 {
        let cell = row * self.nz + col;
        self.sources
            .iter()
            .find(|(c, _)| *c == cell)
            .map_or(0.0, |(_, t)| t[step])
    }

    /// Driven cells as `(row, col)`.
    pub fn support(&self) -> Vec<(usize, usize)> {
        self.sources
            .iter()
            .map(|(c, _)| (c / self.nz, c % self.nz))
            .collect()
    }

    pub fn trace(&self, row: usize, col: usize) -> Option<&[f64]> {
        let cell = row * self.nz + col;
        self.sources
            .iter()
            .find(|(c, _)| *c == cell)
            .map(|(_, t)| t.as_slice())
    }

    pub fn is_zero(&self) -> bool {
        self.sources.iter().all(|(_, t)| t.iter().all(|&v| v == 0.0))
    }

    /// Overwrite the driven cells of a dense force slice with step `n`.
    /// Cells that are never driven are left untouched.
    #[inline]
    pub(crate) fn write_step(&self, n: usize, force: &mut [f64]) {
        for (cell, trace) in &self.sources {
            force[*cell] = trace[n];
        }
    }

    /// Time-major dense tensor, `nt · nx · nz` values.
    pub fn to_dense(&self) -> Vec<f64> {
        let cells = self.nx * self.nz;
        let mut out = vec![0.0; cells * self.nt];
        for (cell, trace) in &self.sources {
            for (n, &v) in trace.iter().enumerate() {
                out[n * cells + cell] = v;
            }
        }
        out
    }
}

/// Gaussian-modulated sinusoid
/// `s(t) = A·sin(2πf0(t − t0))·exp(−(t − t0)²/(2σ²))` with
/// `t0 = cycles/(2 f0)` and `σ = cycles/(6 f0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waveform {
    pub f0: f64,
    pub cycles: f64,
    pub amplitude: f64,
}

impl Waveform {
    pub fn new(f0: f64, cycles: f64, amplitude: f64) -> Result<Self> {
        if !(f0 > 0.0 && f0.is_finite()) {
            return Err(Error::InvalidPlan("center frequency must be positive"));
        }
        if !(cycles > 0.0 && cycles.is_finite()) {
            return Err(Error::InvalidPlan("cycle count must be positive"));
        }
        if !amplitude.is_finite() {
            return Err(Error::InvalidPlan("amplitude must be finite"));
        }
        Ok(Self {
            f0,
            cycles,
            amplitude,
        })
    }

    pub fn center_time(&self) -> f64 {
        0.5 * self.cycles / self.f0
    }

    pub fn eval(&self, t: f64) -> f64 {
        let t0 = self.center_time();
        let sigma = self.cycles / (6.0 * self.f0);
        let x = t - t0;
        self.amplitude
            * math::sin(2.0 * core::f64::consts::PI * self.f0 * x)
            * math::exp(-x * x / (2.0 * sigma * sigma))
    }
}

/// A sequence of laterally shifted focused transmits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionPlan {
    pub n_emissions: usize,
    pub aperture_elements: usize,
    pub stride_elements: usize,
    pub waveform: Waveform,
    /// Focal depth below the array, meters.
    pub focus_depth: f64,
    /// Speed of sound assumed by the delay law, m/s.
    pub assumed_sos: f64,
}

impl EmissionPlan {
    pub const WATER_SOS: f64 = 1480.0;
    pub const TISSUE_SOS: f64 = 1540.0;

    pub fn validate(&self, elements: usize, dt: f64) -> Result<()> {
        if self.n_emissions == 0 || self.aperture_elements == 0 {
            return Err(Error::InvalidPlan("need at least one emission and one element"));
        }
        let span = self.aperture_elements + (self.n_emissions - 1) * self.stride_elements;
        if span > elements {
            return Err(Error::ApertureOutOfArray {
                first: (self.n_emissions - 1) * self.stride_elements,
                count: self.aperture_elements,
                elements,
            });
        }
        if !(self.waveform.f0 < 0.5 / dt) {
            return Err(Error::NyquistViolation {
                frequency: self.waveform.f0,
                nyquist: 0.5 / dt,
            });
        }
        if !(self.focus_depth > 0.0 && self.assumed_sos > 0.0) {
            return Err(Error::InvalidPlan("focus depth and assumed sos must be positive"));
        }
        Ok(())
    }
}

/// Focusing delays `τ = (P − √(P² + d²)) / c̄` for lateral offsets `d`
/// measured from the aperture center.
pub fn focal_delays(plan: &EmissionPlan, element_lateral_offsets: &[f64]) -> Vec<f64> {
    let p = plan.focus_depth;
    element_lateral_offsets
        .iter()
        .map(|&d| (p - math::sqrt(p * p + d * d)) / plan.assumed_sos)
        .collect()
}

fn traces_with_delays(
    waveform: &Waveform,
    grid: &SimulationGrid,
    cells: &[(usize, usize)],
    delays: &[f64],
) -> Result<PulseField> {
    let traces = cells
        .iter()
        .zip(delays)
        .map(|(&(row, col), &tau)| {
            let trace = (0..grid.nt)
                .map(|n| waveform.eval(n as f64 * grid.dt - tau))
                .collect();
            (row, col, trace)
        })
        .collect();
    PulseField::from_traces(grid, traces)
}

/// Focused transmit number `emission_index`: `aperture_elements`
/// consecutive elements starting at `emission_index · stride_elements`.
pub fn synthesize_focused(
    plan: &EmissionPlan,
    geom: &ProbeGeometry,
    grid: &SimulationGrid,
    emission_index: usize,
) -> Result<PulseField> {
    geom.ensure_inside(grid.nx, grid.nz)?;
    let first = emission_index * plan.stride_elements;
    if emission_index >= plan.n_emissions || first + plan.aperture_elements > geom.len() {
        return Err(Error::ApertureOutOfArray {
            first,
            count: plan.aperture_elements,
            elements: geom.len(),
        });
    }
    let active = &geom.elements()[first..first + plan.aperture_elements];
    let center = 0.5 * (active[0].1 + active[active.len() - 1].1) as f64;
    let offsets: Vec<f64> = active
        .iter()
        .map(|&(_, col)| (col as f64 - center) * grid.dx)
        .collect();
    let delays = focal_delays(plan, &offsets);
    traces_with_delays(&plan.waveform, grid, active, &delays)
}

/// Steered plane wave from the full array: `τ = x·sin(θ)/c̄` with `x` the
/// element position relative to the array center.
pub fn synthesize_plane(
    waveform: &Waveform,
    geom: &ProbeGeometry,
    grid: &SimulationGrid,
    steer_angle: f64,
    assumed_sos: f64,
) -> Result<PulseField> {
    if !(steer_angle.abs() < core::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidPlan("steering angle must be inside (-π/2, π/2)"));
    }
    geom.ensure_inside(grid.nx, grid.nz)?;
    let delays = plane_delays(geom, grid.dx, steer_angle, assumed_sos);
    traces_with_delays(waveform, grid, geom.elements(), &delays)
}

pub fn plane_delays(geom: &ProbeGeometry, dx: f64, steer_angle: f64, assumed_sos: f64) -> Vec<f64> {
    let els = geom.elements();
    let center = 0.5 * (els[0].1 + els[els.len() - 1].1) as f64;
    let s = math::sin(steer_angle);
    els.iter()
        .map(|&(_, col)| (col as f64 - center) * dx * s / assumed_sos)
        .collect()
}

/// Diverging waves are named as a transmit family but have no delay law
/// here yet.
pub fn synthesize_diverging(
    _waveform: &Waveform,
    _geom: &ProbeGeometry,
    _grid: &SimulationGrid,
) -> Result<PulseField> {
    Err(Error::Unsupported("diverging-wave transmit synthesis"))
}

/// Linear power ratio from decibels.
pub fn snr_from_db(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

/// Add zero-mean i.i.d. Gaussian noise with variance
/// `mean_signal_power / snr`. `snr = ∞` returns the input unchanged.
pub fn add_noise(ch: &ChannelData, snr: f64, seed: u64) -> Result<ChannelData> {
    if snr == f64::INFINITY {
        return Ok(ch.clone());
    }
    if !(snr > 0.0) {
        return Err(Error::InvalidConfig("snr must be positive"));
    }
    let power = ch.mean_power();
    if power == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let sigma = math::sqrt(power / snr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ch.clone();
    for v in out.as_mut_slice() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * z;
    }
    Ok(out)
}

/// Per-emission noise seed derived from the run seed (SplitMix64 mix).
pub fn emission_seed(seed: u64, emission: usize) -> u64 {
    let mut z = seed.wrapping_add((emission as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One transmit and what the probe recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub index: usize,
    pub seed: u64,
    pub pulse: PulseField,
    pub measured: ChannelData,
}

/// Simulate every emission of `plan` through the true medium and add noise.
pub fn acquire_sequence(
    ctx: &PhysicsContext,
    props_true: &PropertySet,
    plan: &EmissionPlan,
    snr: f64,
    seed: u64,
) -> Result<Vec<Emission>> {
    plan.validate(ctx.probe.len(), ctx.grid.dt)?;
    (0..plan.n_emissions)
        .map(|l| {
            let pulse = synthesize_focused(plan, &ctx.probe, &ctx.grid, l)?;
            let clean = simulate_channels(ctx, props_true, &pulse)?;
            let seed = emission_seed(seed, l);
            let measured = add_noise(&clean, snr, seed)?;
            Ok(Emission {
                index: l,
                seed,
                pulse,
                measured,
            })
        })
        .collect()
}
