//! Explicit time stepping of the discrete lossy Westervelt equation.
//!
//! Each step computes
//!
//! ```text
//! U[n] = ( G2⊙U[n-1] + G3⊙U[n-2] + G4⊙(U[n-1]-U[n-2])²
//!        + C²Q⊙(∇(1/Q)·∇U[n-1]) + C²⊙∇²U[n-1] + F[n] ) / G1
//!
//! G1 = (1 + 2 B⊙U[n-1] / (C²Q)) / Δt²
//! G2 = 2 G1 - D² - (2/Δt) D
//! G3 = -G1 + (2/Δt) D
//! G4 = -(2/Δt²) B / (C²Q)
//! ```
//!
//! with `D` the physical attenuation plus the absorbing-layer profile. The
//! medium starts at rest (`U[0] = U[1] = 0`); forcing slices `F[0]` and `F[1]`
//! are never read.

use alloc::vec;
use alloc::vec::Vec;

use crate::acquisition::PulseField;
use crate::error::{Error, Result};
use crate::grid::{check_cfl, ChannelData, Map2, ProbeGeometry, PropertySet, SimulationGrid, Wavefield};
use crate::math;
use crate::stencil;

/// Quadratically graded absorbing layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmlConfig {
    /// Layer width in cells.
    pub width_cells: usize,
    /// Peak artificial attenuation at the outer grid edge, 1/s.
    pub d_max: f64,
}

impl PmlConfig {
    pub const NONE: PmlConfig = PmlConfig {
        width_cells: 0,
        d_max: 0.0,
    };

    pub fn new(width_cells: usize, d_max: f64) -> Result<Self> {
        if !(d_max >= 0.0 && d_max.is_finite()) {
            return Err(Error::InvalidConfig("pml d_max must be finite and >= 0"));
        }
        Ok(Self { width_cells, d_max })
    }

    /// Peak attenuation giving `round_trip_db` of amplitude loss for a wave
    /// crossing the layer twice at normal incidence with speed `sos`.
    pub fn tuned(width_cells: usize, dx: f64, sos: f64, round_trip_db: f64) -> Self {
        if width_cells == 0 {
            return Self::NONE;
        }
        // amplitude decays as exp(-∫D dt); one crossing of the quadratic
        // profile integrates to d_max·L/(3c)
        let nepers = round_trip_db / 20.0 * core::f64::consts::LN_10;
        let layer = width_cells as f64 * dx;
        Self {
            width_cells,
            d_max: nepers * 3.0 * sos / (2.0 * layer),
        }
    }
}

/// Numerical guards applied at every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLimits {
    /// `G1` must stay above `g1_floor_factor / Δt²`.
    pub g1_floor_factor: f64,
    /// Largest admitted |pressure|, Pa.
    pub field_cap: f64,
}

impl Default for StepLimits {
    fn default() -> Self {
        Self {
            g1_floor_factor: 1e-3,
            field_cap: 1e12,
        }
    }
}

/// Everything about the simulation that is not a property map or a pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsContext {
    pub grid: SimulationGrid,
    pub pml: PmlConfig,
    pub probe: ProbeGeometry,
    pub limits: StepLimits,
    /// Upper bound on the reverse-mode tape, bytes.
    pub tape_budget_bytes: usize,
}

impl PhysicsContext {
    pub const DEFAULT_TAPE_BUDGET: usize = 4 << 30;

    pub fn new(grid: SimulationGrid, pml: PmlConfig, probe: ProbeGeometry) -> Result<Self> {
        probe.ensure_inside(grid.nx, grid.nz)?;
        if pml.width_cells > 0 && 2 * pml.width_cells >= grid.nx.min(grid.nz) {
            return Err(Error::PmlTooWide {
                width: pml.width_cells,
                nx: grid.nx,
                nz: grid.nz,
            });
        }
        Ok(Self {
            grid,
            pml,
            probe,
            limits: StepLimits::default(),
            tape_budget_bytes: Self::DEFAULT_TAPE_BUDGET,
        })
    }

    pub fn with_grid(&self, grid: SimulationGrid) -> Result<Self> {
        let mut ctx = Self::new(grid, self.pml, self.probe.clone())?;
        ctx.limits = self.limits;
        ctx.tape_budget_bytes = self.tape_budget_bytes;
        Ok(ctx)
    }

    pub fn pml_profile(&self) -> Result<Map2> {
        pml_profile(&self.grid, &self.pml)
    }
}

/// Artificial attenuation, `d_max·(l/L_P)²` where `l` is the depth into the
/// layer measured from its inner interface; zero in the interior. Corners
/// take the larger of the two axis profiles.
pub fn pml_profile(grid: &SimulationGrid, pml: &PmlConfig) -> Result<Map2> {
    let w = pml.width_cells;
    if w == 0 {
        return Ok(Map2::zeros(grid.nx, grid.nz));
    }
    if 2 * w >= grid.nx.min(grid.nz) {
        return Err(Error::PmlTooWide {
            width: w,
            nx: grid.nx,
            nz: grid.nz,
        });
    }
    let depth = |k: usize, n: usize| -> usize {
        if k < w {
            w - k
        } else if k + w >= n {
            w - (n - 1 - k)
        } else {
            0
        }
    };
    let wf = w as f64;
    Ok(Map2::from_fn(grid.nx, grid.nz, |i, j| {
        let l = depth(i, grid.nx).max(depth(j, grid.nz)) as f64;
        pml.d_max * (l / wf) * (l / wf)
    }))
}

/// `D + D_pml`, the attenuation map used everywhere `D` appears in the step.
pub fn effective_attenuation(props: &PropertySet, pml_map: &Map2) -> Result<Map2> {
    props.attenuation().zip_map(pml_map, |d, p| d + p)
}

/// Per-cell quantities that stay fixed over a simulation.
#[derive(Debug, Clone)]
pub(crate) struct StepKernel {
    pub nx: usize,
    pub nz: usize,
    pub dx: f64,
    pub inv_dt2: f64,
    pub two_over_dt: f64,
    /// C²
    pub csq: Vec<f64>,
    /// C²Q
    pub k: Vec<f64>,
    /// B / (C²Q)
    pub s: Vec<f64>,
    /// ∇(1/Q)
    pub wx: Vec<f64>,
    pub wz: Vec<f64>,
    /// effective attenuation
    pub d: Vec<f64>,
    pub g1_floor: f64,
    pub field_cap: f64,
}

/// Scratch buffers for one step.
#[derive(Debug, Clone)]
pub(crate) struct StepScratch {
    pub gx: Vec<f64>,
    pub gz: Vec<f64>,
    pub lap: Vec<f64>,
}

impl StepScratch {
    pub fn new(cells: usize) -> Self {
        Self {
            gx: vec![0.0; cells],
            gz: vec![0.0; cells],
            lap: vec![0.0; cells],
        }
    }
}

impl StepKernel {
    pub fn new(grid: &SimulationGrid, props: &PropertySet, d_eff: &Map2, limits: &StepLimits) -> Result<Self> {
        props.ensure_grid(grid)?;
        props.attenuation().ensure_same_shape(d_eff)?;
        let (nx, nz) = (grid.nx, grid.nz);
        let c = props.sos().as_slice();
        let q = props.density().as_slice();
        let b = props.nonlinearity().as_slice();
        let csq: Vec<f64> = c.iter().map(|v| v * v).collect();
        let k: Vec<f64> = csq.iter().zip(q).map(|(a, q)| a * q).collect();
        let s: Vec<f64> = b.iter().zip(&k).map(|(b, k)| b / k).collect();
        let invq: Vec<f64> = q.iter().map(|q| 1.0 / q).collect();
        let mut wx = vec![0.0; nx * nz];
        let mut wz = vec![0.0; nx * nz];
        stencil::grad_into(&invq, nx, nz, grid.dx, &mut wx, &mut wz);
        let inv_dt2 = 1.0 / (grid.dt * grid.dt);
        for (cell, (&d, &c2)) in d_eff.as_slice().iter().zip(&csq).enumerate() {
            if d > 0.0 {
                let d_dt = d * grid.dt;
                let limit = damping_limit(c2 * inv_dt2.recip() / (grid.dx * grid.dx));
                if !(d_dt < limit) {
                    return Err(Error::DampingUnstable { cell, d_dt, limit });
                }
            }
        }
        Ok(Self {
            nx,
            nz,
            dx: grid.dx,
            inv_dt2,
            two_over_dt: 2.0 / grid.dt,
            csq,
            k,
            s,
            wx,
            wz,
            d: d_eff.as_slice().to_vec(),
            g1_floor: limits.g1_floor_factor * inv_dt2,
            field_cap: limits.field_cap,
        })
    }

    /// One application of the recurrence. Writes `G1` into `g1_out` when
    /// given.
    pub fn step(
        &self,
        u1: &[f64],
        u2: &[f64],
        force: &[f64],
        out: &mut [f64],
        scratch: &mut StepScratch,
        mut g1_out: Option<&mut [f64]>,
    ) -> Result<()> {
        let (nx, nz) = (self.nx, self.nz);
        stencil::grad_into(u1, nx, nz, self.dx, &mut scratch.gx, &mut scratch.gz);
        stencil::laplacian_into(u1, nx, nz, self.dx, &mut scratch.lap);
        for c in 0..nx * nz {
            let (a, b) = (u1[c], u2[c]);
            let s = self.s[c];
            let d = self.d[c];
            let g1 = self.inv_dt2 * (1.0 + 2.0 * s * a);
            if !(g1 > self.g1_floor) {
                return Err(Error::NonlinearityBlowup { cell: c, g1 });
            }
            let g2 = 2.0 * g1 - d * d - self.two_over_dt * d;
            let g3 = -g1 + self.two_over_dt * d;
            let g4 = -2.0 * self.inv_dt2 * s;
            let delta = a - b;
            let coupling = self.wx[c] * scratch.gx[c] + self.wz[c] * scratch.gz[c];
            let num = g2 * a
                + g3 * b
                + g4 * delta * delta
                + self.k[c] * coupling
                + self.csq[c] * scratch.lap[c]
                + force[c];
            let u = num / g1;
            if !(u.abs() <= self.field_cap) {
                return Err(Error::FieldDiverged { cell: c, value: u });
            }
            out[c] = u;
            if let Some(g) = g1_out.as_deref_mut() {
                g[c] = g1;
            }
        }
        Ok(())
    }
}

/// Largest stable `D·Δt` for a damped cell with squared Courant number
/// `cr2`. From the Jury conditions on the two-step recurrence with the
/// highest Laplacian mode, `a² + 4a + 8·cr2 < 4`.
pub fn damping_limit(cr2: f64) -> f64 {
    let room = 8.0 - 8.0 * cr2;
    if room <= 4.0 {
        0.0
    } else {
        math::sqrt(room) - 2.0
    }
}

/// A single recurrence step, `U[n]` from `U[n-1]`, `U[n-2]` and `F[n]`.
pub fn westervelt_step(
    u_prev: &Map2,
    u_prev2: &Map2,
    props: &PropertySet,
    d_eff: &Map2,
    f_now: &Map2,
    grid: &SimulationGrid,
) -> Result<Map2> {
    check_cfl(props, grid)?;
    for m in [u_prev, u_prev2, f_now] {
        if m.shape() != (grid.nx, grid.nz) {
            return Err(Error::ShapeMismatch {
                what: "step input",
                expected: grid.cells(),
                found: m.nx() * m.nz(),
            });
        }
    }
    let kernel = StepKernel::new(grid, props, d_eff, &StepLimits::default())?;
    let mut scratch = StepScratch::new(grid.cells());
    let mut out = Map2::zeros(grid.nx, grid.nz);
    kernel.step(
        u_prev.as_slice(),
        u_prev2.as_slice(),
        f_now.as_slice(),
        out.as_mut_slice(),
        &mut scratch,
        None,
    )?;
    Ok(out)
}

/// What `simulate` keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    /// The whole space-time pressure tensor.
    Full,
    /// Only the pressure at the probe elements; two history slices in memory.
    Channels,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimOutput {
    Field(Wavefield),
    Channels(ChannelData),
}

impl SimOutput {
    pub fn into_field(self) -> Option<Wavefield> {
        match self {
            SimOutput::Field(f) => Some(f),
            SimOutput::Channels(_) => None,
        }
    }

    pub fn into_channels(self) -> Option<ChannelData> {
        match self {
            SimOutput::Channels(c) => Some(c),
            SimOutput::Field(_) => None,
        }
    }
}

pub(crate) fn prepare(ctx: &PhysicsContext, props: &PropertySet, pulse: &PulseField) -> Result<StepKernel> {
    check_cfl(props, &ctx.grid)?;
    pulse.ensure_grid(&ctx.grid)?;
    let d_eff = effective_attenuation(props, &ctx.pml_profile()?)?;
    StepKernel::new(&ctx.grid, props, &d_eff, &ctx.limits)
}

/// Run the recurrence from rest for `nt` steps.
pub fn simulate(ctx: &PhysicsContext, props: &PropertySet, pulse: &PulseField, record: Record) -> Result<SimOutput> {
    let kernel = prepare(ctx, props, pulse)?;
    let grid = ctx.grid;
    let cells = grid.cells();
    let mut scratch = StepScratch::new(cells);
    let mut force = vec![0.0; cells];
    match record {
        Record::Full => {
            let mut field = Wavefield::zeros(grid);
            let mut next = vec![0.0; cells];
            for n in 2..grid.nt {
                pulse.write_step(n, &mut force);
                kernel
                    .step(field.slice(n - 1), field.slice(n - 2), &force, &mut next, &mut scratch, None)
                    .map_err(|e| e.at_step(n))?;
                field.slice_mut(n).copy_from_slice(&next);
            }
            Ok(SimOutput::Field(field))
        }
        Record::Channels => {
            let probe = ctx.probe.flat_cells(grid.nz);
            let mut channels = ChannelData::zeros(probe.len(), grid.nt, grid.dt);
            let mut u2 = vec![0.0; cells];
            let mut u1 = vec![0.0; cells];
            let mut next = vec![0.0; cells];
            for n in 2..grid.nt {
                pulse.write_step(n, &mut force);
                kernel
                    .step(&u1, &u2, &force, &mut next, &mut scratch, None)
                    .map_err(|e| e.at_step(n))?;
                for (ch, &cell) in probe.iter().enumerate() {
                    channels.set(ch, n, next[cell]);
                }
                core::mem::swap(&mut u2, &mut u1);
                core::mem::swap(&mut u1, &mut next);
            }
            Ok(SimOutput::Channels(channels))
        }
    }
}

/// Predicted channel data for one pulse.
pub fn simulate_channels(ctx: &PhysicsContext, props: &PropertySet, pulse: &PulseField) -> Result<ChannelData> {
    Ok(simulate(ctx, props, pulse, Record::Channels)?
        .into_channels()
        .expect("channels requested"))
}

/// Ratio of spectral power near `2·f0` to spectral power near `f0`, each
/// summed over DFT bins within ±10% of the band center and averaged over
/// channels that carry power at `f0`.
pub fn second_harmonic_ratio(ch: &ChannelData, f0: f64) -> Result<f64> {
    let nt = ch.steps();
    let nyquist = 0.5 / ch.dt();
    if !(f0 > 0.0) || 2.0 * f0 >= nyquist {
        return Err(Error::NyquistViolation {
            frequency: 2.0 * f0,
            nyquist,
        });
    }
    let df = 1.0 / (nt as f64 * ch.dt());
    let band = |center: f64| -> Vec<usize> {
        (0..=nt / 2)
            .filter(|&k| (k as f64 * df - center).abs() <= 0.1 * center)
            .collect()
    };
    let fundamental = band(f0);
    let harmonic = band(2.0 * f0);
    let tau = 2.0 * core::f64::consts::PI / nt as f64;
    let cos: Vec<f64> = (0..nt).map(|m| math::cos(tau * m as f64)).collect();
    let sin: Vec<f64> = (0..nt).map(|m| math::sin(tau * m as f64)).collect();
    let power = |x: &[f64], bins: &[usize]| -> f64 {
        bins.iter()
            .map(|&k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, &v) in x.iter().enumerate() {
                    let m = (k * n) % nt;
                    re += v * cos[m];
                    im -= v * sin[m];
                }
                re * re + im * im
            })
            .sum()
    };
    let mut total = 0.0;
    let mut counted = 0usize;
    for c in 0..ch.channels() {
        let x = ch.channel(c);
        let p1 = power(x, &fundamental);
        if p1 > 0.0 {
            total += power(x, &harmonic) / p1;
            counted += 1;
        }
    }
    Ok(if counted == 0 { 0.0 } else { total / counted as f64 })
}
