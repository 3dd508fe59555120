//! Small canonical problems used for gradient checks, engine comparisons
//! and quick experiments.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{acquire_sequence, synthesize_focused, Emission, EmissionPlan, PulseField, Waveform};
use crate::error::Result;
use crate::forward::{simulate_channels, PhysicsContext, PmlConfig};
use crate::grid::{ChannelData, Map2, ProbeGeometry, Property, PropertySet, SimulationGrid};
use crate::inversion::{sobel_penalty, LossConfig};
use crate::math;
use crate::phantom::{make_phantom, PhantomSpec, Tissue};

/// Smooth random field: `mean + amplitude · Σ` of a few low-frequency
/// sinusoids, normalized to peak amplitude one.
pub fn smooth_field(nx: usize, nz: usize, mean: f64, amplitude: f64, rng: &mut impl Rng) -> Map2 {
    let modes: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.0..core::f64::consts::TAU),
                rng.random_range(0.3..1.0),
            )
        })
        .collect();
    let raw = Map2::from_fn(nx, nz, |i, j| {
        let (x, z) = (i as f64 / nx as f64, j as f64 / nz as f64);
        modes
            .iter()
            .map(|&(kx, kz, ph, w)| w * math::sin(core::f64::consts::TAU * (kx * x + kz * z) + ph))
            .sum()
    });
    let peak = raw.max_abs().max(1e-300);
    raw.map(|v| mean + amplitude * v / peak)
}

/// Random smooth heterogeneous medium with every property strictly inside
/// its physical range.
pub fn smooth_medium(nx: usize, nz: usize, seed: u64) -> Result<PropertySet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PropertySet::new(
        smooth_field(nx, nz, 1520.0, 40.0, &mut rng),
        smooth_field(nx, nz, 1010.0, 40.0, &mut rng),
        smooth_field(nx, nz, 3e4, 1.5e4, &mut rng),
        smooth_field(nx, nz, 4.5, 2.0, &mut rng),
    )
}

/// One focused transmit, a current estimate and data from a different
/// medium.
#[derive(Debug, Clone)]
pub struct GradientProblem {
    pub ctx: PhysicsContext,
    pub pulse: PulseField,
    pub props: PropertySet,
    pub truth: PropertySet,
    pub measured: ChannelData,
    pub loss: LossConfig,
}

/// Weights making each property's Sobel term equal to `share · data` at
/// `props`. Flat maps get weight zero.
pub fn balanced_loss(props: &PropertySet, data: f64, share: f64) -> Result<LossConfig> {
    let mut loss = LossConfig::NONE;
    for p in Property::ALL {
        let penalty = sobel_penalty(props.get(p))?;
        let w = if penalty > 0.0 { share * data / penalty } else { 0.0 };
        match p {
            Property::Sos => loss.lambda_sos = w,
            Property::Density => loss.lambda_density = w,
            Property::Attenuation => loss.lambda_attenuation = w,
            Property::Nonlinearity => loss.lambda_nonlinearity = w,
        }
    }
    Ok(loss)
}

/// Time step giving Courant number `courant` at speed `c_max`.
pub fn stable_dt(dx: f64, c_max: f64, courant: f64) -> f64 {
    courant * dx / c_max
}

/// 16×16 cells, 60 steps, one focused pulse, smooth random media. The
/// regularization weights are set so the Sobel terms make up about a tenth
/// of the objective.
pub fn gradient_problem(seed: u64) -> Result<GradientProblem> {
    let (n, nt, dx) = (16, 60, 1e-4);
    let grid = SimulationGrid::new(n, n, nt, dx, stable_dt(dx, 1650.0, 0.5))?;
    let pml_width = 3;
    let ctx = PhysicsContext::new(
        grid,
        PmlConfig::tuned(pml_width, dx, 1500.0, 15.0),
        ProbeGeometry::linear(pml_width, pml_width, 10, 1)?,
    )?;
    let plan = EmissionPlan {
        n_emissions: 1,
        aperture_elements: 10,
        stride_elements: 1,
        waveform: Waveform::new(2.5e6, 2.0, 1.5e20)?,
        focus_depth: 8e-4,
        assumed_sos: 1540.0,
    };
    let pulse = synthesize_focused(&plan, &ctx.probe, &grid, 0)?;
    let truth = smooth_medium(n, n, seed.wrapping_mul(2).wrapping_add(1))?;
    let props = smooth_medium(n, n, seed.wrapping_mul(2).wrapping_add(2))?;
    let measured = simulate_channels(&ctx, &truth, &pulse)?;
    let data = simulate_channels(&ctx, &props, &pulse)?
        .residual(&measured)?
        .frobenius_norm();
    let loss = balanced_loss(&props, data, 0.025)?;
    Ok(GradientProblem {
        ctx,
        pulse,
        props,
        truth,
        measured,
        loss,
    })
}

/// Tiny linear problem for comparing the time-stepper with the assembled
/// operator: 8×8 cells, 20 steps, no nonlinearity.
pub fn cross_engine_problem(seed: u64) -> Result<GradientProblem> {
    let (n, nt, dx) = (8, 20, 1e-4);
    let grid = SimulationGrid::new(n, n, nt, dx, stable_dt(dx, 1650.0, 0.5))?;
    let ctx = PhysicsContext::new(
        grid,
        PmlConfig::tuned(2, dx, 1500.0, 10.0),
        ProbeGeometry::linear(2, 1, 6, 1)?,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let medium = |rng: &mut ChaCha8Rng| -> Result<PropertySet> {
        PropertySet::new(
            smooth_field(n, n, 1520.0, 40.0, rng),
            smooth_field(n, n, 1010.0, 40.0, rng),
            smooth_field(n, n, 3e4, 1.5e4, rng),
            Map2::zeros(n, n),
        )
    };
    let truth = medium(&mut rng)?;
    let props = medium(&mut rng)?;
    let trace: Vec<f64> = (0..nt)
        .map(|k| {
            let t = k as f64 * grid.dt;
            let e = (t - 1.5e-7) / 8e-8;
            5e20 * math::sin(core::f64::consts::TAU * 4e6 * t) * math::exp(-e * e)
        })
        .collect();
    let pulse = PulseField::from_traces(&grid, vec![(2, 4, trace)])?;
    let measured = simulate_channels(&ctx, &truth, &pulse)?;
    Ok(GradientProblem {
        ctx,
        pulse,
        props,
        truth,
        measured,
        loss: LossConfig::NONE,
    })
}

/// Several focused transmits over one medium.
#[derive(Debug, Clone)]
pub struct MultiPulseProblem {
    pub ctx: PhysicsContext,
    pub truth: PropertySet,
    pub init: PropertySet,
    pub emissions: Vec<Emission>,
}

/// 16×16 cells, 60 steps, up to four shifted focused transmits from a
/// 12-element array, noiseless data.
pub fn multi_pulse_problem(seed: u64, n_emissions: usize) -> Result<MultiPulseProblem> {
    let (n, nt, dx) = (16, 60, 1e-4);
    let grid = SimulationGrid::new(n, n, nt, dx, stable_dt(dx, 1650.0, 0.5))?;
    let ctx = PhysicsContext::new(
        grid,
        PmlConfig::tuned(3, dx, 1500.0, 15.0),
        ProbeGeometry::linear(3, 2, 12, 1)?,
    )?;
    let plan = EmissionPlan {
        n_emissions,
        aperture_elements: 6,
        stride_elements: 2,
        waveform: Waveform::new(2.5e6, 2.0, 1.5e20)?,
        focus_depth: 6e-4,
        assumed_sos: EmissionPlan::TISSUE_SOS,
    };
    let truth = smooth_medium(n, n, seed)?;
    let init = smooth_medium(n, n, seed.wrapping_add(1_000))?;
    let emissions = acquire_sequence(&ctx, &truth, &plan, f64::INFINITY, seed)?;
    Ok(MultiPulseProblem {
        ctx,
        truth,
        init,
        emissions,
    })
}

/// Squared pressure summed over a small disc around a point source near the
/// top edge, counted only after the outgoing pulse has left the disc. With
/// no absorbing layer this is the energy reflected back by the edge.
pub fn returning_energy(pml: PmlConfig) -> Result<f64> {
    let (nx, nz, dx) = (110, 120, 1e-4);
    let dt = stable_dt(dx, 1480.0, 0.5);
    let (src_row, src_col, radius) = (32usize, 60usize, 4usize);
    // outgoing pulse clears the disc, then the top-edge echo returns well
    // before anything from the far edges
    let nt = 300;
    let grid = SimulationGrid::new(nx, nz, nt, dx, dt)?;
    let ctx = PhysicsContext::new(grid, pml, ProbeGeometry::linear(src_row, src_col, 1, 1)?)?;
    let props = PropertySet::uniform(&grid, 1480.0, 1000.0, 0.0, 0.0)?;
    let wave = Waveform::new(1.5e6, 2.0, 1e18)?;
    let trace: Vec<f64> = (0..nt).map(|n| wave.eval(n as f64 * dt)).collect();
    let pulse = PulseField::from_traces(&grid, vec![(src_row, src_col, trace)])?;
    let field = crate::forward::simulate(&ctx, &props, &pulse, crate::forward::Record::Full)?
        .into_field()
        .ok_or(crate::Error::Unsupported("full recording"))?;
    let start = (2.0 * wave.center_time() / dt) as usize + 2 * radius * 2 + 20;
    let mut total = 0.0;
    for n in start..nt {
        for i in src_row - radius..=src_row + radius {
            for j in src_col - radius..=src_col + radius {
                let (di, dj) = (i.abs_diff(src_row), j.abs_diff(src_col));
                if di * di + dj * dj <= radius * radius {
                    let u = field.get(i, j, n);
                    total += u * u;
                }
            }
        }
    }
    Ok(total)
}

/// A reduced-size reflection experiment: linear array on top, water
/// background, optional inclusions below.
#[derive(Debug, Clone, PartialEq)]
pub struct DeskConfig {
    pub n: usize,
    pub nt: usize,
    pub dx: f64,
    /// Courant number at 1650 m/s.
    pub courant: f64,
    pub pml_width: usize,
    pub pml_round_trip_db: f64,
    pub n_emissions: usize,
    pub aperture: usize,
    pub stride: usize,
    pub waveform: Waveform,
    pub focus_depth: f64,
    pub phantom: PhantomSpec,
    /// Background the estimate starts from.
    pub initial: Tissue,
    pub snr: f64,
    pub seed: u64,
}

impl DeskConfig {
    /// Two inclusions on a `n × n` grid with four shifted transmits.
    pub fn two_inclusion(n: usize, nt: usize) -> Self {
        let dx = 1e-4;
        let extent = (n as f64 * dx, n as f64 * dx);
        Self {
            n,
            nt,
            dx,
            courant: 0.5,
            pml_width: 8,
            pml_round_trip_db: 40.0,
            n_emissions: 4,
            aperture: 16,
            stride: 8,
            waveform: Waveform {
                f0: 1.5e6,
                cycles: 2.0,
                amplitude: 2e20,
            },
            focus_depth: 0.5 * extent.0,
            phantom: PhantomSpec::two_inclusion(extent),
            initial: Tissue::WATER,
            snr: f64::INFINITY,
            seed: 0,
        }
    }

    pub fn grid(&self) -> Result<SimulationGrid> {
        SimulationGrid::new(self.n, self.n, self.nt, self.dx, stable_dt(self.dx, 1650.0, self.courant))
    }

    pub fn context(&self) -> Result<PhysicsContext> {
        let grid = self.grid()?;
        let row = self.pml_width;
        let elements = self.n - 2 * self.pml_width;
        PhysicsContext::new(
            grid,
            PmlConfig::tuned(self.pml_width, self.dx, 1480.0, self.pml_round_trip_db),
            ProbeGeometry::linear(row, self.pml_width, elements, 1)?,
        )
    }

    pub fn plan(&self) -> EmissionPlan {
        EmissionPlan {
            n_emissions: self.n_emissions,
            aperture_elements: self.aperture,
            stride_elements: self.stride,
            waveform: self.waveform,
            focus_depth: self.focus_depth,
            assumed_sos: EmissionPlan::WATER_SOS,
        }
    }

    pub fn build(&self) -> Result<DeskProblem> {
        let ctx = self.context()?;
        let truth = make_phantom(&self.phantom, &ctx.grid)?;
        let t = self.initial;
        let init = PropertySet::uniform(&ctx.grid, t.sos, t.density, t.attenuation, t.nonlinearity)?;
        let emissions = acquire_sequence(&ctx, &truth, &self.plan(), self.snr, self.seed)?;
        Ok(DeskProblem {
            ctx,
            truth,
            init,
            emissions,
        })
    }
}

#[derive(Debug, Clone)]
pub struct DeskProblem {
    pub ctx: PhysicsContext,
    pub truth: PropertySet,
    pub init: PropertySet,
    pub emissions: Vec<Emission>,
}

/// Second-harmonic content received after a plane wave crosses a uniform
/// medium with nonlinearity `beta`.
pub fn harmonic_ratio_after_propagation(beta: f64, amplitude: f64) -> Result<f64> {
    let (nx, nz, dx) = (90, 24, 1e-4);
    let dt = stable_dt(dx, 1480.0, 0.5);
    let nt = 420;
    let grid = SimulationGrid::new(nx, nz, nt, dx, dt)?;
    let ctx = PhysicsContext::new(
        grid,
        PmlConfig::tuned(10, dx, 1480.0, 40.0),
        ProbeGeometry::linear(70, 8, 8, 1)?,
    )?;
    let props = PropertySet::uniform(&grid, 1480.0, 1000.0, 0.0, beta)?;
    let wave = Waveform::new(1.5e6, 3.0, amplitude)?;
    let trace: Vec<f64> = (0..nt).map(|n| wave.eval(n as f64 * dt)).collect();
    let pulse = PulseField::from_traces(&grid, (0..nz).map(|j| (12, j, trace.clone())).collect())?;
    let ch = simulate_channels(&ctx, &props, &pulse)?;
    crate::forward::second_harmonic_ratio(&ch, wave.f0)
}
