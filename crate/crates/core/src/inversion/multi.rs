//! Multi-insonification reconstruction by local steps and averaging.
//!
//! Every round, each worker copies the shared estimate, takes `K` local
//! steps against its own emission, and the shared estimate becomes the
//! cellwise mean of the workers' results. Workers keep their optimizer
//! state between rounds.

use alloc::boxed::Box;
use alloc::vec::Vec;

use super::{GradientEngine, InversionConfig, InversionSession, IterationRecord, StopReason};
use crate::error::{Error, Result};
use crate::grid::{Property, PropertySet};

/// Runs a closure once per item, possibly concurrently. Results come back
/// in item order.
pub trait Dispatch {
    fn for_each<T: Send>(
        &self,
        items: &mut [T],
        f: &(dyn Fn(usize, &mut T) -> Result<()> + Sync),
    ) -> Vec<Result<()>>;
}

/// Runs items one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Dispatch for Sequential {
    fn for_each<T: Send>(
        &self,
        items: &mut [T],
        f: &(dyn Fn(usize, &mut T) -> Result<()> + Sync),
    ) -> Vec<Result<()>> {
        items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiPulseConfig {
    pub inversion: InversionConfig,
    /// Local steps per worker per round.
    pub inner_steps: usize,
    pub outer_iterations: usize,
}

impl MultiPulseConfig {
    pub const DEFAULT_INNER_STEPS: usize = 5;
}

#[derive(Debug, Clone)]
pub struct MultiPulseOutcome {
    pub props: PropertySet,
    /// Per worker, every local iteration in order.
    pub worker_histories: Vec<Vec<IterationRecord>>,
    /// Mean over workers of the first local loss of each round.
    pub round_losses: Vec<f64>,
    /// Why each worker's last round ended.
    pub stop_reasons: Vec<StopReason>,
}

/// Cellwise mean, summed in slice order.
pub fn average(sets: &[PropertySet]) -> Result<PropertySet> {
    let first = sets.first().ok_or(Error::InvalidConfig("nothing to average"))?;
    let mut acc = first.clone();
    for s in &sets[1..] {
        if s.shape() != acc.shape() {
            return Err(Error::ShapeMismatch {
                what: "worker estimates",
                expected: acc.shape().0 * acc.shape().1,
                found: s.shape().0 * s.shape().1,
            });
        }
        for p in Property::ALL {
            for (a, b) in acc.get_mut(p).as_mut_slice().iter_mut().zip(s.get(p).as_slice()) {
                *a += b;
            }
        }
    }
    if sets.len() > 1 {
        let n = sets.len() as f64;
        for p in Property::ALL {
            acc.get_mut(p).as_mut_slice().iter_mut().for_each(|v| *v /= n);
        }
    }
    acc.validate()?;
    Ok(acc)
}

struct Worker<E> {
    engine: E,
    session: InversionSession,
    first_loss: f64,
    stop: StopReason,
}

pub fn multi_pulse_invert<E, D>(
    engines: Vec<E>,
    init: &PropertySet,
    cfg: &MultiPulseConfig,
    dispatch: &D,
) -> Result<MultiPulseOutcome>
where
    E: GradientEngine + Send,
    D: Dispatch + ?Sized,
{
    if engines.is_empty() {
        return Err(Error::InvalidConfig("need at least one emission"));
    }
    if cfg.inner_steps == 0 {
        return Err(Error::InvalidConfig("inner steps must be at least 1"));
    }
    let mut workers = engines
        .into_iter()
        .map(|engine| {
            Ok(Worker {
                engine,
                session: InversionSession::new(init.clone(), cfg.inversion)?,
                first_loss: 0.0,
                stop: StopReason::MaxIterations,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut shared = init.clone();
    let mut round_losses = Vec::with_capacity(cfg.outer_iterations);
    let k = cfg.inner_steps;
    for _ in 0..cfg.outer_iterations {
        for w in workers.iter_mut() {
            w.session.props = shared.clone();
        }
        let results = dispatch.for_each(&mut workers, &|_, w: &mut Worker<E>| {
            let start = w.session.history().len();
            w.stop = w.session.run(&w.engine, k)?;
            w.first_loss = w.session.history().get(start).map_or(f64::NAN, |r| r.loss);
            Ok(())
        });
        for (index, r) in results.into_iter().enumerate() {
            r.map_err(|e| Error::Worker {
                index,
                source: Box::new(e),
            })?;
        }
        let estimates: Vec<PropertySet> = workers.iter().map(|w| w.session.props.clone()).collect();
        shared = average(&estimates)?;
        round_losses.push(workers.iter().map(|w| w.first_loss).sum::<f64>() / workers.len() as f64);
    }
    Ok(MultiPulseOutcome {
        props: shared,
        worker_histories: workers.iter().map(|w| w.session.history().to_vec()).collect(),
        round_losses,
        stop_reasons: workers.iter().map(|w| w.stop).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Map2, SimulationGrid};

    fn set(v: f64) -> PropertySet {
        let g = SimulationGrid::new(3, 4, 3, 1e-4, 1e-8).unwrap();
        PropertySet::new(
            Map2::from_fn(3, 4, |i, j| 1500.0 + v * (i + 2 * j) as f64),
            Map2::filled(3, 4, 1000.0 + v),
            Map2::filled(3, 4, v.abs()),
            Map2::filled(3, 4, 2.0),
        )
        .and_then(|s| s.ensure_grid(&g).map(|_| s))
        .unwrap()
    }

    #[test]
    fn average_of_one_is_identity() {
        assert_eq!(average(&[set(1.5)]).unwrap(), set(1.5));
    }

    #[test]
    fn average_of_equal_sets_is_bitwise_equal() {
        let a = set(0.123_456_789);
        assert_eq!(average(&[a.clone(), a.clone()]).unwrap(), a);
    }

    #[test]
    fn average_is_cellwise_mean() {
        let (a, b) = (set(1.0), set(3.0));
        let avg = average(&[a.clone(), b.clone()]).unwrap();
        for p in Property::ALL {
            for c in 0..12 {
                let want = (a.get(p).as_slice()[c] + b.get(p).as_slice()[c]) / 2.0;
                assert_eq!(avg.get(p).as_slice()[c], want);
            }
        }
    }

    #[test]
    fn empty_average_is_an_error() {
        assert!(average(&[]).is_err());
    }
}
