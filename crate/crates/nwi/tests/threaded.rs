use nwi::parallel::Threaded;
use nwi_core::inversion::{
    multi_pulse_invert, InversionConfig, LossConfig, MultiPulseConfig, NwiEngine, OptimizerConfig, Sequential,
    StageSchedule, StopCriteria,
};
use nwi_core::scenario::multi_pulse_problem;

fn config(k: usize, outer: usize) -> MultiPulseConfig {
    let mut optimizer = OptimizerConfig::default();
    optimizer.rates = [2.0, 2.0, 50.0, 0.05];
    MultiPulseConfig {
        inversion: InversionConfig {
            loss: LossConfig::uniform(1.0),
            optimizer,
            schedule: StageSchedule::from_fraction(k * outer, 0.5).unwrap(),
            stop: StopCriteria::fixed(k * outer),
        },
        inner_steps: k,
        outer_iterations: outer,
    }
}

#[test]
fn result_is_bitwise_independent_of_worker_count() {
    let pb = multi_pulse_problem(21, 4).unwrap();
    let engines = || {
        pb.emissions
            .iter()
            .map(|e| NwiEngine {
                ctx: &pb.ctx,
                pulse: &e.pulse,
                measured: &e.measured,
            })
            .collect::<Vec<_>>()
    };
    let cfg = config(2, 3);
    let reference = multi_pulse_invert(engines(), &pb.init, &cfg, &Sequential).unwrap();
    assert_ne!(reference.props, pb.init);
    for workers in [1, 2, 3, 4, 8] {
        let r = multi_pulse_invert(engines(), &pb.init, &cfg, &Threaded::new(workers)).unwrap();
        assert_eq!(r.props, reference.props, "{workers} workers");
        assert_eq!(r.worker_histories, reference.worker_histories, "{workers} workers");
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&r.round_losses), bits(&reference.round_losses));
    }
}

#[test]
fn worker_errors_name_the_worker() {
    let pb = multi_pulse_problem(22, 2).unwrap();
    let mut bad = pb.emissions[1].measured.clone();
    bad.as_mut_slice()[0] = f64::NAN;
    let engines = vec![
        NwiEngine {
            ctx: &pb.ctx,
            pulse: &pb.emissions[0].pulse,
            measured: &pb.emissions[0].measured,
        },
        NwiEngine {
            ctx: &pb.ctx,
            pulse: &pb.emissions[1].pulse,
            measured: &bad,
        },
    ];
    let err = multi_pulse_invert(engines, &pb.init, &config(1, 1), &Threaded::new(2)).unwrap_err();
    assert!(matches!(err, nwi_core::Error::Worker { index: 1, .. }), "{err:?}");
}
