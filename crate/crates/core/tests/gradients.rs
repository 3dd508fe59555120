use nwi_core::adjoint::{data_loss_and_gradient, loss_and_gradient, PropertyGradients};
use nwi_core::gradcheck::{finite_difference_check, FdConfig, PropertyCheck, StepRule};
use nwi_core::inversion::{total_loss, LossConfig};
use nwi_core::scenario::{gradient_problem, GradientProblem};
use nwi_core::{Property, PropertySet};

fn run(pb: &GradientProblem, loss_cfg: &LossConfig, grads: &PropertyGradients, seed: u64) -> Vec<PropertyCheck> {
    let loss = |p: &PropertySet| total_loss(&pb.ctx, p, &pb.measured, &pb.pulse, loss_cfg);
    let cfg = FdConfig { seed, ..FdConfig::default() };
    let checks = finite_difference_check(loss, &pb.props, grads, &cfg).unwrap();
    assert_eq!(checks.len(), 4);
    for c in &checks {
        assert_eq!(c.samples.len(), 20);
    }
    checks
}

#[test]
fn regularized_gradient_matches_finite_differences() {
    for seed in 1..=3u64 {
        let pb = gradient_problem(seed).unwrap();
        assert!(Property::ALL.iter().all(|&p| pb.loss.lambda(p) > 0.0));
        let (_, grads) = loss_and_gradient(&pb.ctx, &pb.props, &pb.pulse, &pb.measured, &pb.loss).unwrap();
        for c in run(&pb, &pb.loss, &grads, seed) {
            assert!(
                c.passes(FdConfig::PASS_TOLERANCE),
                "seed {seed} {}: max relative error {:.3e}",
                c.property,
                c.max_relative_error()
            );
        }
    }
}

#[test]
fn data_gradient_matches_finite_differences() {
    for seed in 1..=3u64 {
        let pb = gradient_problem(seed).unwrap();
        let (loss, grads) = data_loss_and_gradient(&pb.ctx, &pb.props, &pb.pulse, &pb.measured).unwrap();
        for c in run(&pb, &LossConfig::NONE, &grads, seed) {
            // a central difference cannot resolve derivatives below roughly
            // 1e-11 of the loss per unit of property scale
            let floor = 1e-11 * loss / c.scale;
            for s in &c.samples {
                let err = (s.analytic - s.finite_difference).abs();
                let bound = FdConfig::PASS_TOLERANCE * s.analytic.abs().max(s.finite_difference.abs()) + floor;
                assert!(err <= bound, "seed {seed} {} {:?}", c.property, s);
            }
        }
    }
}

#[test]
fn fixed_step_of_the_right_size_also_passes() {
    let pb = gradient_problem(4).unwrap();
    let (_, grads) = loss_and_gradient(&pb.ctx, &pb.props, &pb.pulse, &pb.measured, &pb.loss).unwrap();
    let loss = |p: &PropertySet| total_loss(&pb.ctx, p, &pb.measured, &pb.pulse, &pb.loss);
    let cfg = FdConfig {
        step: StepRule::Fixed { relative: 1e-5 },
        properties: [true, true, false, false],
        ..FdConfig::default()
    };
    for c in finite_difference_check(loss, &pb.props, &grads, &cfg).unwrap() {
        assert!(c.passes(FdConfig::PASS_TOLERANCE), "{}: {:.3e}", c.property, c.max_relative_error());
        assert!(c.samples.iter().all(|s| s.step == 1e-5 * c.scale));
    }
}

#[test]
fn loss_reported_with_gradient_equals_total_loss() {
    let pb = gradient_problem(4).unwrap();
    let (l, _) = loss_and_gradient(&pb.ctx, &pb.props, &pb.pulse, &pb.measured, &pb.loss).unwrap();
    let direct = total_loss(&pb.ctx, &pb.props, &pb.measured, &pb.pulse, &pb.loss).unwrap();
    assert!((l - direct).abs() <= 1e-13 * direct);
}

#[test]
fn gradient_vanishes_at_the_truth_without_regularization() {
    let pb = gradient_problem(5).unwrap();
    let (l, g) = data_loss_and_gradient(&pb.ctx, &pb.truth, &pb.pulse, &pb.measured).unwrap();
    assert_eq!(l, 0.0);
    assert_eq!(g.max_abs(), 0.0);
}
