use nwi_core::inversion::{
    average, invert, multi_pulse_invert, Dispatch, InversionConfig, LossConfig, MultiPulseConfig, NwiEngine,
    OptimizerConfig, Sequential, StageSchedule, StopCriteria,
};
use nwi_core::scenario::multi_pulse_problem;
use nwi_core::{Error, Property, Result};

/// Runs items last to first.
struct Reversed;

impl Dispatch for Reversed {
    fn for_each<T: Send>(&self, items: &mut [T], f: &(dyn Fn(usize, &mut T) -> Result<()> + Sync)) -> Vec<Result<()>> {
        let n = items.len();
        let mut out: Vec<Option<Result<()>>> = (0..n).map(|_| None).collect();
        for (i, t) in items.iter_mut().enumerate().rev() {
            out[i] = Some(f(i, t));
        }
        out.into_iter().map(|r| r.unwrap()).collect()
    }
}

fn config(total: usize) -> InversionConfig {
    let mut optimizer = OptimizerConfig::default();
    optimizer.rates = [2.0, 2.0, 50.0, 0.05];
    InversionConfig {
        loss: LossConfig::uniform(1.0),
        optimizer,
        schedule: StageSchedule::from_fraction(total, 0.5).unwrap(),
        stop: StopCriteria::fixed(total),
    }
}

#[test]
fn one_worker_equals_single_pulse_inversion() {
    let pb = multi_pulse_problem(11, 1).unwrap();
    let (k, outer) = (3, 4);
    let cfg = config(k * outer);
    let e = &pb.emissions[0];
    let engine = NwiEngine { ctx: &pb.ctx, pulse: &e.pulse, measured: &e.measured };
    let single = invert(&engine, &pb.init, &cfg).unwrap();
    let multi = multi_pulse_invert(
        vec![engine],
        &pb.init,
        &MultiPulseConfig { inversion: cfg, inner_steps: k, outer_iterations: outer },
        &Sequential,
    )
    .unwrap();
    assert_eq!(multi.props, single.props);
    assert_eq!(multi.worker_histories[0], single.history);
    assert_ne!(single.props, pb.init);
}

#[test]
fn scheduling_order_does_not_change_the_result() {
    let pb = multi_pulse_problem(12, 3).unwrap();
    let engines = || {
        pb.emissions
            .iter()
            .map(|e| NwiEngine { ctx: &pb.ctx, pulse: &e.pulse, measured: &e.measured })
            .collect::<Vec<_>>()
    };
    let cfg = MultiPulseConfig { inversion: config(6), inner_steps: 2, outer_iterations: 3 };
    let a = multi_pulse_invert(engines(), &pb.init, &cfg, &Sequential).unwrap();
    let b = multi_pulse_invert(engines(), &pb.init, &cfg, &Reversed).unwrap();
    assert_eq!(a.props, b.props);
    assert_eq!(a.round_losses, b.round_losses);
    assert_eq!(a.worker_histories, b.worker_histories);
}

#[test]
fn identical_workers_average_to_either_result() {
    let pb = multi_pulse_problem(13, 1).unwrap();
    let e = &pb.emissions[0];
    let engine = NwiEngine { ctx: &pb.ctx, pulse: &e.pulse, measured: &e.measured };
    let cfg = MultiPulseConfig { inversion: config(4), inner_steps: 2, outer_iterations: 2 };
    let one = multi_pulse_invert(vec![engine], &pb.init, &cfg, &Sequential).unwrap();
    let two = multi_pulse_invert(vec![engine, engine], &pb.init, &cfg, &Sequential).unwrap();
    assert_eq!(one.props, two.props);
}

#[test]
fn round_result_is_the_cellwise_mean_of_worker_results() {
    let pb = multi_pulse_problem(14, 2).unwrap();
    let cfg = MultiPulseConfig { inversion: config(2), inner_steps: 2, outer_iterations: 1 };
    let engines: Vec<NwiEngine> = pb
        .emissions
        .iter()
        .map(|e| NwiEngine { ctx: &pb.ctx, pulse: &e.pulse, measured: &e.measured })
        .collect();
    let per_worker: Vec<_> = engines.iter().map(|en| invert(en, &pb.init, &cfg.inversion).unwrap().props).collect();
    let multi = multi_pulse_invert(engines, &pb.init, &cfg, &Sequential).unwrap();
    assert_eq!(multi.props, average(&per_worker).unwrap());
    for p in Property::ALL {
        for c in 0..multi.props.get(p).as_slice().len() {
            let (a, b) = (per_worker[0].get(p).as_slice()[c], per_worker[1].get(p).as_slice()[c]);
            assert_eq!(multi.props.get(p).as_slice()[c], (a + b) / 2.0);
        }
    }
}

#[test]
fn worker_failure_names_the_worker() {
    let pb = multi_pulse_problem(15, 2).unwrap();
    let mut bad = pb.emissions[1].measured.clone();
    bad.as_mut_slice()[0] = f64::NAN;
    let engines = vec![
        NwiEngine { ctx: &pb.ctx, pulse: &pb.emissions[0].pulse, measured: &pb.emissions[0].measured },
        NwiEngine { ctx: &pb.ctx, pulse: &pb.emissions[1].pulse, measured: &bad },
    ];
    let cfg = MultiPulseConfig { inversion: config(2), inner_steps: 1, outer_iterations: 1 };
    match multi_pulse_invert(engines, &pb.init, &cfg, &Sequential) {
        Err(Error::Worker { index, .. }) => assert_eq!(index, 1),
        other => panic!("expected a worker error, got {other:?}"),
    }
}
