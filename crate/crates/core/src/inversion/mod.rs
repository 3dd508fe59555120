//! Reconstruction: objective, optimizers, staging, the single-pulse loop and
//! multi-pulse averaging.
//!
//! The loop is written against [`GradientEngine`], so the nonlinear adjoint
//! engine and the matrix-form linear baseline share the same optimizer,
//! schedule and stop logic.

pub mod loss;
pub mod multi;
pub mod optimizer;
pub mod schedule;

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::acquisition::PulseField;
use crate::adjoint::{add_regularization, data_loss_and_gradient, PropertyGradients};
use crate::error::{Error, Result};
use crate::forward::PhysicsContext;
use crate::grid::{ChannelData, Property, PropertySet};

pub use loss::{regularization, sobel, sobel_penalty, sobel_penalty_grad, total_loss, LossConfig};
pub use multi::{average, multi_pulse_invert, Dispatch, MultiPulseConfig, MultiPulseOutcome, Sequential};
pub use optimizer::{ClampCounts, ClampFloors, OptimizerConfig, OptimizerKind, OptimizerState};
pub use schedule::{threshold_mask, tissue_mask, Phase, StageSchedule, StopCriteria, StopReason};

/// Something that can evaluate the data misfit and its gradient.
pub trait GradientEngine {
    /// Unsquared residual norm and its gradient.
    fn data_loss_and_gradient(&self, props: &PropertySet) -> Result<(f64, PropertyGradients)>;

    /// Properties this engine is able to reconstruct.
    fn updatable(&self) -> &'static [Property] {
        &Property::ALL
    }
}

/// Nonlinear engine: forward recurrence plus reverse sweep.
#[derive(Debug, Clone, Copy)]
pub struct NwiEngine<'a> {
    pub ctx: &'a PhysicsContext,
    pub pulse: &'a PulseField,
    pub measured: &'a ChannelData,
}

impl GradientEngine for NwiEngine<'_> {
    fn data_loss_and_gradient(&self, props: &PropertySet) -> Result<(f64, PropertyGradients)> {
        data_loss_and_gradient(self.ctx, props, self.pulse, self.measured)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub schedule: StageSchedule,
    pub stop: StopCriteria,
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.optimizer.validate()?;
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    pub data_loss: f64,
    pub grad_inf: f64,
    pub phase: Phase,
    pub clamps: ClampCounts,
}

/// Optimizer state and history that persist across calls to
/// [`InversionSession::run`].
#[derive(Debug, Clone)]
pub struct InversionSession {
    pub props: PropertySet,
    pub cfg: InversionConfig,
    state: OptimizerState,
    iteration: usize,
    initial_grad: Option<f64>,
    history: Vec<IterationRecord>,
    clamps: ClampCounts,
}

impl InversionSession {
    pub fn new(init: PropertySet, cfg: InversionConfig) -> Result<Self> {
        cfg.validate()?;
        init.validate()?;
        let cells = init.sos().as_slice().len();
        Ok(Self {
            state: OptimizerState::new(cfg.optimizer, cells)?,
            props: init,
            cfg,
            iteration: 0,
            initial_grad: None,
            history: Vec::new(),
            clamps: ClampCounts::default(),
        })
    }

    /// Iterations taken so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    pub fn losses(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.loss).collect()
    }

    pub fn clamp_counts(&self) -> ClampCounts {
        self.clamps
    }

    fn abort(&self, source: Error) -> Error {
        Error::InversionAborted {
            iteration: self.iteration,
            iterate: Box::new(self.props.clone()),
            source: Box::new(source),
        }
    }

    /// One evaluation and update. Returns the stop reason instead of
    /// updating when a convergence test fires.
    pub fn step<E: GradientEngine + ?Sized>(&mut self, engine: &E) -> Result<Option<StopReason>> {
        let (data_loss, mut grads) = engine
            .data_loss_and_gradient(&self.props)
            .map_err(|e| self.abort(e))?;
        let mut loss = data_loss;
        add_regularization(&self.props, &self.cfg.loss, &mut loss, &mut grads).map_err(|e| self.abort(e))?;

        let phase = self.cfg.schedule.phase(self.iteration);
        let active: Vec<Property> = phase
            .active()
            .iter()
            .copied()
            .filter(|p| engine.updatable().contains(p))
            .collect();
        let grad_inf = active
            .iter()
            .map(|&p| grads.get(p).max_abs())
            .fold(0.0, f64::max);
        let initial = *self.initial_grad.get_or_insert(grad_inf);

        let mut record = IterationRecord {
            iteration: self.iteration,
            loss,
            data_loss,
            grad_inf,
            phase,
            clamps: ClampCounts::default(),
        };
        let stop = self.cfg.stop;
        if stop.gradient_vanished(grad_inf, initial) {
            self.history.push(record);
            return Ok(Some(StopReason::GradientVanished));
        }
        self.history.push(record);
        let losses = self.losses();
        if stop.plateaued(&losses) {
            return Ok(Some(StopReason::Plateau));
        }

        let mask = match phase {
            Phase::SosDensity => None,
            Phase::AttenuationNonlinearity => Some(tissue_mask(
                self.props.density(),
                self.cfg.schedule.water_density,
                self.cfg.schedule.mask_threshold,
            )),
        };
        let clamps = self
            .state
            .step(&mut self.props, &grads, &active, mask.as_deref())
            .map_err(|e| self.abort(e))?;
        record.clamps = clamps;
        *self.history.last_mut().expect("pushed above") = record;
        self.clamps.add(&clamps);
        self.iteration += 1;
        Ok(None)
    }

    /// Up to `iterations` steps; stops early on a convergence test.
    pub fn run<E: GradientEngine + ?Sized>(&mut self, engine: &E, iterations: usize) -> Result<StopReason> {
        for _ in 0..iterations {
            if let Some(reason) = self.step(engine)? {
                return Ok(reason);
            }
        }
        Ok(StopReason::MaxIterations)
    }
}

#[derive(Debug, Clone)]
pub struct InversionOutcome {
    pub props: PropertySet,
    pub history: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub clamp_counts: ClampCounts,
}

/// Generic single-dataset loop.
pub fn invert<E: GradientEngine + ?Sized>(
    engine: &E,
    init: &PropertySet,
    cfg: &InversionConfig,
) -> Result<InversionOutcome> {
    let mut session = InversionSession::new(init.clone(), *cfg)?;
    let stop_reason = session.run(engine, cfg.stop.max_iterations)?;
    Ok(InversionOutcome {
        clamp_counts: session.clamp_counts(),
        history: session.history,
        props: session.props,
        stop_reason,
    })
}

/// Single-pulse nonlinear waveform inversion.
pub fn nwi_invert(
    ctx: &PhysicsContext,
    pulse: &PulseField,
    measured: &ChannelData,
    init: &PropertySet,
    cfg: &InversionConfig,
) -> Result<InversionOutcome> {
    invert(&NwiEngine { ctx, pulse, measured }, init, cfg)
}
