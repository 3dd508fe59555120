//! Reverse sweep through the unrolled recurrence.
//!
//! The forward pass keeps every pressure slice. The reverse pass walks the
//! steps backwards, carrying three adjoint slices, and accumulates the
//! derivatives of each step with respect to the coefficient maps. Those are
//! mapped back to `C`, `Q`, `D` and `B` at the end.

use alloc::vec;
use alloc::vec::Vec;

use crate::acquisition::PulseField;
use crate::error::{Error, Result};
use crate::forward::{prepare, PhysicsContext, StepKernel, StepScratch};
use crate::grid::{ChannelData, Map2, Property, PropertySet, Wavefield};
use crate::inversion::loss::{sobel_penalty_grad, LossConfig};
use crate::stencil;

/// How the forward history is kept for the reverse pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TapeStrategy {
    #[default]
    FullHistory,
    /// Keep every `interval`-th slice and recompute the rest. Not
    /// implemented.
    Checkpointed { interval: usize },
}

/// Forward history of one simulation.
#[derive(Debug, Clone)]
pub struct Tape {
    kernel: StepKernel,
    field: Wavefield,
    probe: Vec<usize>,
    props: PropertySet,
}

impl Tape {
    pub fn field(&self) -> &Wavefield {
        &self.field
    }

    pub fn props(&self) -> &PropertySet {
        &self.props
    }

    pub fn steps(&self) -> usize {
        self.field.grid().nt
    }

    pub fn bytes(&self) -> usize {
        self.field.as_slice().len() * core::mem::size_of::<f64>()
    }
}

/// Loss derivatives with respect to the four property maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyGradients {
    pub d_sos: Map2,
    pub d_density: Map2,
    pub d_attenuation: Map2,
    pub d_nonlinearity: Map2,
}

impl PropertyGradients {
    pub fn zeros(nx: usize, nz: usize) -> Self {
        Self {
            d_sos: Map2::zeros(nx, nz),
            d_density: Map2::zeros(nx, nz),
            d_attenuation: Map2::zeros(nx, nz),
            d_nonlinearity: Map2::zeros(nx, nz),
        }
    }

    pub fn get(&self, p: Property) -> &Map2 {
        match p {
            Property::Sos => &self.d_sos,
            Property::Density => &self.d_density,
            Property::Attenuation => &self.d_attenuation,
            Property::Nonlinearity => &self.d_nonlinearity,
        }
    }

    pub fn get_mut(&mut self, p: Property) -> &mut Map2 {
        match p {
            Property::Sos => &mut self.d_sos,
            Property::Density => &mut self.d_density,
            Property::Attenuation => &mut self.d_attenuation,
            Property::Nonlinearity => &mut self.d_nonlinearity,
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for p in Property::ALL {
            self.get_mut(p).as_mut_slice().iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += factor · other`
    pub fn add_scaled(&mut self, other: &PropertyGradients, factor: f64) -> Result<()> {
        for p in Property::ALL {
            self.get(p).ensure_same_shape(other.get(p))?;
            for (a, b) in self.get_mut(p).as_mut_slice().iter_mut().zip(other.get(p).as_slice()) {
                *a += factor * b;
            }
        }
        Ok(())
    }

    /// Largest absolute entry over all four maps.
    pub fn max_abs(&self) -> f64 {
        Property::ALL
            .iter()
            .map(|&p| self.get(p).max_abs())
            .fold(0.0, f64::max)
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for p in Property::ALL {
            if self.get(p).as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { property: p });
            }
        }
        Ok(())
    }
}

/// Simulate and keep the full history.
pub fn forward_with_tape(
    ctx: &PhysicsContext,
    props: &PropertySet,
    pulse: &PulseField,
) -> Result<(ChannelData, Tape)> {
    forward_with_tape_strategy(ctx, props, pulse, TapeStrategy::FullHistory)
}

pub fn forward_with_tape_strategy(
    ctx: &PhysicsContext,
    props: &PropertySet,
    pulse: &PulseField,
    strategy: TapeStrategy,
) -> Result<(ChannelData, Tape)> {
    if let TapeStrategy::Checkpointed { .. } = strategy {
        return Err(Error::Unsupported("checkpointed tape"));
    }
    let grid = ctx.grid;
    let required = grid.cells() * grid.nt * core::mem::size_of::<f64>();
    if required > ctx.tape_budget_bytes {
        return Err(Error::TapeMemoryExceeded {
            required,
            budget: ctx.tape_budget_bytes,
        });
    }
    let kernel = prepare(ctx, props, pulse)?;
    let cells = grid.cells();
    let mut field = Wavefield::zeros(grid);
    let mut scratch = StepScratch::new(cells);
    let mut force = vec![0.0; cells];
    let mut next = vec![0.0; cells];
    for n in 2..grid.nt {
        pulse.write_step(n, &mut force);
        kernel
            .step(field.slice(n - 1), field.slice(n - 2), &force, &mut next, &mut scratch, None)
            .map_err(|e| e.at_step(n))?;
        field.slice_mut(n).copy_from_slice(&next);
    }
    let probe = ctx.probe.flat_cells(grid.nz);
    let mut channels = ChannelData::zeros(probe.len(), grid.nt, grid.dt);
    for n in 0..grid.nt {
        let slice = field.slice(n);
        for (ch, &cell) in probe.iter().enumerate() {
            channels.set(ch, n, slice[cell]);
        }
    }
    Ok((
        channels,
        Tape {
            kernel,
            field,
            probe,
            props: props.clone(),
        },
    ))
}

/// Gradient of `½‖P − M‖²_F` when `data_residual = P − M`. The map is
/// linear in the residual, so any channel-space adjoint can be passed in.
pub fn backprop(tape: &Tape, data_residual: &ChannelData) -> Result<PropertyGradients> {
    let grid = *tape.field.grid();
    let nc = tape.probe.len();
    if data_residual.channels() != nc || data_residual.steps() != grid.nt {
        return Err(Error::ShapeMismatch {
            what: "residual channels x steps",
            expected: nc * grid.nt,
            found: data_residual.channels() * data_residual.steps(),
        });
    }
    let kr = &tape.kernel;
    let (nx, nz, nt) = (grid.nx, grid.nz, grid.nt);
    let cells = nx * nz;

    let scatter = |n: usize, lam: &mut [f64]| {
        for (ch, &cell) in tape.probe.iter().enumerate() {
            lam[cell] += data_residual.get(ch, n);
        }
    };

    // adjoints of the per-cell coefficient maps
    let mut kbar = vec![0.0; cells];
    let mut csqbar = vec![0.0; cells];
    let mut sbar = vec![0.0; cells];
    let mut dbar = vec![0.0; cells];
    let mut wxbar = vec![0.0; cells];
    let mut wzbar = vec![0.0; cells];

    let mut lam_n = vec![0.0; cells];
    let mut lam_m1 = vec![0.0; cells];
    let mut lam_m2 = vec![0.0; cells];
    scatter(nt - 1, &mut lam_n);
    scatter(nt - 2, &mut lam_m1);
    scatter(nt - 3, &mut lam_m2);

    let mut scratch = StepScratch::new(cells);
    let mut bx = vec![0.0; cells];
    let mut bz = vec![0.0; cells];
    let mut blap = vec![0.0; cells];

    for n in (2..nt).rev() {
        let u = tape.field.slice(n);
        let u1 = tape.field.slice(n - 1);
        let u2 = tape.field.slice(n - 2);
        stencil::grad_into(u1, nx, nz, kr.dx, &mut scratch.gx, &mut scratch.gz);
        stencil::laplacian_into(u1, nx, nz, kr.dx, &mut scratch.lap);
        for c in 0..cells {
            let a = lam_n[c];
            let (p1, p2) = (u1[c], u2[c]);
            let s = kr.s[c];
            let d = kr.d[c];
            let g1 = kr.inv_dt2 * (1.0 + 2.0 * s * p1);
            if !(g1 > kr.g1_floor) {
                return Err(Error::NonlinearityBlowup { cell: c, g1 }.at_step(n));
            }
            let g2 = 2.0 * g1 - d * d - kr.two_over_dt * d;
            let g3 = -g1 + kr.two_over_dt * d;
            let g4 = -2.0 * kr.inv_dt2 * s;
            let delta = p1 - p2;

            let nbar = a / g1;
            let g2bar = nbar * p1;
            let g3bar = nbar * p2;
            let g4bar = nbar * delta * delta;
            let g1bar = -nbar * u[c] + 2.0 * g2bar - g3bar;

            dbar[c] += g2bar * (-2.0 * d - kr.two_over_dt) + g3bar * kr.two_over_dt;
            sbar[c] += kr.inv_dt2 * (2.0 * p1 * g1bar - 2.0 * g4bar);

            let coupling = kr.wx[c] * scratch.gx[c] + kr.wz[c] * scratch.gz[c];
            kbar[c] += nbar * coupling;
            let cbar = nbar * kr.k[c];
            wxbar[c] += cbar * scratch.gx[c];
            wzbar[c] += cbar * scratch.gz[c];
            bx[c] = cbar * kr.wx[c];
            bz[c] = cbar * kr.wz[c];

            csqbar[c] += nbar * scratch.lap[c];
            blap[c] = nbar * kr.csq[c];

            let cross = nbar * g4 * 2.0 * delta;
            lam_m1[c] += nbar * g2 + cross + g1bar * 2.0 * s * kr.inv_dt2;
            lam_m2[c] += nbar * g3 - cross;
        }
        stencil::grad_adjoint_acc(&bx, &bz, nx, nz, kr.dx, &mut lam_m1);
        stencil::laplacian_adjoint_acc(&blap, nx, nz, kr.dx, &mut lam_m1);

        // shift the ring: n-1 becomes current
        core::mem::swap(&mut lam_n, &mut lam_m1);
        core::mem::swap(&mut lam_m1, &mut lam_m2);
        lam_m2.iter_mut().for_each(|v| *v = 0.0);
        if n >= 3 {
            scatter(n - 3, &mut lam_m2);
        }
    }

    let c_map = tape.props.sos().as_slice();
    let q_map = tape.props.density().as_slice();
    let mut invqbar = vec![0.0; cells];
    stencil::grad_adjoint_acc(&wxbar, &wzbar, nx, nz, kr.dx, &mut invqbar);

    let mut g = PropertyGradients::zeros(nx, nz);
    for c in 0..cells {
        let (cv, qv, s) = (c_map[c], q_map[c], kr.s[c]);
        g.d_sos.as_mut_slice()[c] = kbar[c] * 2.0 * cv * qv + csqbar[c] * 2.0 * cv - sbar[c] * 2.0 * s / cv;
        g.d_density.as_mut_slice()[c] = kbar[c] * cv * cv - sbar[c] * s / qv - invqbar[c] / (qv * qv);
        g.d_attenuation.as_mut_slice()[c] = dbar[c];
        g.d_nonlinearity.as_mut_slice()[c] = sbar[c] / kr.k[c];
    }
    Ok(g)
}

/// Data part of the objective: the unsquared residual norm and its
/// gradient. A zero residual yields a zero gradient.
pub fn data_loss_and_gradient(
    ctx: &PhysicsContext,
    props: &PropertySet,
    pulse: &PulseField,
    measured: &ChannelData,
) -> Result<(f64, PropertyGradients)> {
    let (predicted, tape) = forward_with_tape(ctx, props, pulse)?;
    let residual = predicted.residual(measured)?;
    let norm = residual.frobenius_norm();
    let (nx, nz) = props.shape();
    if norm == 0.0 {
        return Ok((0.0, PropertyGradients::zeros(nx, nz)));
    }
    let grads = backprop(&tape, &residual.scaled(1.0 / norm))?;
    Ok((norm, grads))
}

/// Full objective: residual norm plus weighted Sobel penalties, and its
/// gradient.
pub fn loss_and_gradient(
    ctx: &PhysicsContext,
    props: &PropertySet,
    pulse: &PulseField,
    measured: &ChannelData,
    loss_cfg: &LossConfig,
) -> Result<(f64, PropertyGradients)> {
    let (mut loss, mut grads) = data_loss_and_gradient(ctx, props, pulse, measured)?;
    add_regularization(props, loss_cfg, &mut loss, &mut grads)?;
    Ok((loss, grads))
}

pub(crate) fn add_regularization(
    props: &PropertySet,
    loss_cfg: &LossConfig,
    loss: &mut f64,
    grads: &mut PropertyGradients,
) -> Result<()> {
    for p in Property::ALL {
        let lambda = loss_cfg.lambda(p);
        if lambda == 0.0 {
            continue;
        }
        let (penalty, pg) = sobel_penalty_grad(props.get(p))?;
        *loss += lambda * penalty;
        for (g, v) in grads.get_mut(p).as_mut_slice().iter_mut().zip(pg.as_slice()) {
            *g += lambda * v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{simulate, simulate_channels, PmlConfig, Record};
    use crate::grid::{ProbeGeometry, SimulationGrid};

    fn ctx() -> PhysicsContext {
        let grid = SimulationGrid::new(12, 12, 40, 1e-4, 2e-8).unwrap();
        let probe = ProbeGeometry::linear(2, 2, 8, 1).unwrap();
        PhysicsContext::new(grid, PmlConfig::new(2, 3e6).unwrap(), probe).unwrap()
    }

    fn props(g: &SimulationGrid) -> PropertySet {
        let (nx, nz) = (g.nx, g.nz);
        PropertySet::new(
            Map2::from_fn(nx, nz, |i, j| 1500.0 + 10.0 * (i as f64 * 0.4).sin() + 5.0 * j as f64),
            Map2::from_fn(nx, nz, |i, j| 1000.0 + 20.0 * ((i + j) as f64 * 0.3).cos()),
            Map2::from_fn(nx, nz, |i, _| 1e4 * i as f64),
            Map2::filled(nx, nz, 4.0),
        )
        .unwrap()
    }

    fn pulse(g: &SimulationGrid, amp: f64) -> PulseField {
        let trace = (0..g.nt)
            .map(|n| amp * (n as f64 * 0.5).sin() * (-((n as f64 - 8.0) / 4.0).powi(2)).exp())
            .collect();
        PulseField::from_traces(g, vec![(2, 6, trace)]).unwrap()
    }

    #[test]
    fn taped_channels_match_simulate_bitwise() {
        let c = ctx();
        let p = props(&c.grid);
        let f = pulse(&c.grid, 1e9);
        let (ch, tape) = forward_with_tape(&c, &p, &f).unwrap();
        assert_eq!(ch, simulate_channels(&c, &p, &f).unwrap());
        let full = simulate(&c, &p, &f, Record::Full).unwrap().into_field().unwrap();
        assert_eq!(tape.field(), &full);
        assert_eq!(tape.steps(), c.grid.nt);
    }

    #[test]
    fn tape_replays_step_by_step() {
        let c = ctx();
        let p = props(&c.grid);
        let f = pulse(&c.grid, 1e9);
        let (_, tape) = forward_with_tape(&c, &p, &f).unwrap();
        let d_eff = crate::forward::effective_attenuation(&p, &c.pml_profile().unwrap()).unwrap();
        let n = 20;
        let mut force = vec![0.0; c.grid.cells()];
        f.write_step(n, &mut force);
        let next = crate::forward::westervelt_step(
            &tape.field().snapshot(n - 1),
            &tape.field().snapshot(n - 2),
            &p,
            &d_eff,
            &Map2::from_vec(c.grid.nx, c.grid.nz, force).unwrap(),
            &c.grid,
        )
        .unwrap();
        assert_eq!(next, tape.field().snapshot(n));
    }

    #[test]
    fn zero_pulse_tape_is_zero() {
        let c = ctx();
        let (_, tape) = forward_with_tape(&c, &props(&c.grid), &PulseField::zeros(&c.grid)).unwrap();
        assert!(tape.field().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tape_budget_is_enforced() {
        let mut c = ctx();
        c.tape_budget_bytes = 1000;
        let r = forward_with_tape(&c, &props(&c.grid), &pulse(&c.grid, 1.0));
        assert!(matches!(r, Err(Error::TapeMemoryExceeded { .. })));
    }

    #[test]
    fn checkpointing_is_a_stub() {
        let c = ctx();
        let r = forward_with_tape_strategy(
            &c,
            &props(&c.grid),
            &pulse(&c.grid, 1.0),
            TapeStrategy::Checkpointed { interval: 4 },
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let c = ctx();
        let (ch, tape) = forward_with_tape(&c, &props(&c.grid), &pulse(&c.grid, 1e9)).unwrap();
        let zero = ChannelData::zeros(ch.channels(), ch.steps(), ch.dt());
        let g = backprop(&tape, &zero).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn zero_field_means_zero_nonlinearity_gradient() {
        let c = ctx();
        let (ch, tape) = forward_with_tape(&c, &props(&c.grid), &PulseField::zeros(&c.grid)).unwrap();
        let r = ChannelData::from_vec(
            ch.channels(),
            ch.steps(),
            ch.dt(),
            (0..ch.as_slice().len()).map(|i| (i as f64).sin()).collect(),
        )
        .unwrap();
        let g = backprop(&tape, &r).unwrap();
        assert!(g.d_nonlinearity.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_shape_is_checked() {
        let c = ctx();
        let (_, tape) = forward_with_tape(&c, &props(&c.grid), &pulse(&c.grid, 1.0)).unwrap();
        let bad = ChannelData::zeros(3, c.grid.nt, c.grid.dt);
        assert!(matches!(backprop(&tape, &bad), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn matching_data_gives_zero_loss_and_gradient() {
        let c = ctx();
        let g = c.grid;
        let p = PropertySet::uniform(&g, 1500.0, 1000.0, 0.0, 0.0).unwrap();
        let f = pulse(&g, 1e9);
        let m = simulate_channels(&c, &p, &f).unwrap();
        let (l, grads) = loss_and_gradient(&c, &p, &f, &m, &LossConfig::uniform(0.5)).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(grads.max_abs(), 0.0);
    }
}
