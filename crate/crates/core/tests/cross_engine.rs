use nwi_core::adjoint::{backprop, forward_with_tape};
use nwi_core::forward::{simulate, Record};
use nwi_core::fwi::{fwi_gradient, restrict_vector, source_vector, FwiEngine, GradientMode};
use nwi_core::gradcheck::{finite_difference_check, FdConfig};
use nwi_core::scenario::cross_engine_problem;
use nwi_core::{Property, PropertySet};

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 { 0.0 } else { diff / scale }
}

#[test]
fn time_stepper_matches_matrix_solve() {
    for seed in 0..3 {
        let pb = cross_engine_problem(seed).unwrap();
        let field = simulate(&pb.ctx, &pb.props, &pb.pulse, Record::Full).unwrap().into_field().unwrap();
        let engine = FwiEngine::new(&pb.ctx, &pb.pulse, &pb.measured);
        let a = engine.operator(&pb.props).unwrap();
        let u = a.solve(&source_vector(&pb.pulse, &pb.ctx.grid).unwrap()).unwrap();
        assert!(field.as_slice().iter().any(|v| *v != 0.0));
        let rel = max_rel(field.as_slice(), &u);
        assert!(rel < 1e-9, "seed {seed}: {rel:.3e}");
    }
}

#[test]
fn adjoint_gradient_matches_matrix_gradient() {
    for seed in 0..3 {
        let pb = cross_engine_problem(seed).unwrap();
        let (predicted, tape) = forward_with_tape(&pb.ctx, &pb.props, &pb.pulse).unwrap();
        let residual = predicted.residual(&pb.measured).unwrap();
        let ga = backprop(&tape, &residual).unwrap();
        let engine = FwiEngine::new(&pb.ctx, &pb.pulse, &pb.measured);
        let a = engine.operator(&pb.props).unwrap();
        let u = a.solve(&source_vector(&pb.pulse, &pb.ctx.grid).unwrap()).unwrap();
        let lin = restrict_vector(&u, &pb.ctx.probe, &pb.ctx.grid).unwrap();
        let lin_res = lin.residual(&pb.measured).unwrap();
        for mode in [GradientMode::PerCellDense, GradientMode::RowLocal] {
            let gf = fwi_gradient(&a, &u, &lin_res, &pb.ctx.probe, mode).unwrap();
            for p in [Property::Sos, Property::Density, Property::Attenuation] {
                let rel = max_rel(ga.get(p).as_slice(), gf.get(p).as_slice());
                assert!(rel < 1e-8, "seed {seed} {p} {mode:?}: {rel:.3e}");
            }
        }
    }
}

#[test]
fn matrix_gradient_matches_finite_differences_of_half_squared_misfit() {
    let pb = cross_engine_problem(4).unwrap();
    let engine = FwiEngine::new(&pb.ctx, &pb.pulse, &pb.measured);
    let half_sq = |p: &PropertySet| -> nwi_core::Result<f64> {
        let n = engine.predict(p)?.residual(&pb.measured)?.frobenius_norm();
        Ok(0.5 * n * n)
    };
    let a = engine.operator(&pb.props).unwrap();
    let u = a.solve(&source_vector(&pb.pulse, &pb.ctx.grid).unwrap()).unwrap();
    let res = restrict_vector(&u, &pb.ctx.probe, &pb.ctx.grid).unwrap().residual(&pb.measured).unwrap();
    let g = fwi_gradient(&a, &u, &res, &pb.ctx.probe, GradientMode::RowLocal).unwrap();
    let cfg = FdConfig {
        properties: [true, true, true, false],
        ..FdConfig::default()
    };
    for c in finite_difference_check(half_sq, &pb.props, &g, &cfg).unwrap() {
        assert!(c.passes(FdConfig::PASS_TOLERANCE), "{}: {:.3e}", c.property, c.max_relative_error());
    }
    assert_eq!(g.get(Property::Nonlinearity).max_abs(), 0.0);
}
