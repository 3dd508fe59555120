use nwi_core::adjoint::{backprop, forward_with_tape};
use nwi_core::forward::simulate_channels;
use nwi_core::scenario::{gradient_problem, smooth_field};
use nwi_core::{ChannelData, Map2, Property, PropertySet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn perturbed(props: &PropertySet, dir: &[Map2; 4], eps: f64) -> PropertySet {
    let mut out = props.clone();
    for p in Property::ALL {
        let m = props.get(p).zip_map(&dir[p.index()], |a, d| a + eps * d).unwrap();
        out = out.with(p, m).unwrap();
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn jacobian_and_backprop_are_adjoint() {
    for seed in 0..5u64 {
        let pb = gradient_problem(100 + seed).unwrap();
        let (nx, nz) = pb.props.shape();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = [
            smooth_field(nx, nz, 0.0, 10.0, &mut rng),
            smooth_field(nx, nz, 0.0, 10.0, &mut rng),
            smooth_field(nx, nz, 0.0, 3e3, &mut rng),
            smooth_field(nx, nz, 0.0, 0.5, &mut rng),
        ];
        let (base, tape) = forward_with_tape(&pb.ctx, &pb.props, &pb.pulse).unwrap();
        let r_vec: Vec<f64> = (0..base.as_slice().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = ChannelData::from_vec(base.channels(), base.steps(), base.dt(), r_vec).unwrap();
        let g = backprop(&tape, &r).unwrap();
        let rhs: f64 = Property::ALL
            .iter()
            .map(|&p| dot(g.get(p).as_slice(), dir[p.index()].as_slice()))
            .sum();
        let f = |e: f64| simulate_channels(&pb.ctx, &perturbed(&pb.props, &dir, e), &pb.pulse).unwrap();
        // fourth-order directional difference of the forward map
        let eps = 3e-2;
        let d1 = f(eps).residual(&f(-eps)).unwrap();
        let d2 = f(2.0 * eps).residual(&f(-2.0 * eps)).unwrap();
        let jv: Vec<f64> = d1
            .as_slice()
            .iter()
            .zip(d2.as_slice())
            .map(|(a, b)| (8.0 * a - b) / (12.0 * eps))
            .collect();
        let lhs = dot(&jv, r.as_slice());
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
        assert!(rel < 1e-10, "seed {seed}: relative mismatch {rel:.3e}");
    }
}

#[test]
fn backprop_is_linear_in_the_residual() {
    let pb = gradient_problem(9).unwrap();
    let (base, tape) = forward_with_tape(&pb.ctx, &pb.props, &pb.pulse).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut random = || {
        let v: Vec<f64> = (0..base.as_slice().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        ChannelData::from_vec(base.channels(), base.steps(), base.dt(), v).unwrap()
    };
    let (a, b) = (random(), random());
    let sum = ChannelData::from_vec(
        a.channels(),
        a.steps(),
        a.dt(),
        a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| 2.0 * x + y).collect(),
    )
    .unwrap();
    let (ga, gb, gs) = (backprop(&tape, &a).unwrap(), backprop(&tape, &b).unwrap(), backprop(&tape, &sum).unwrap());
    for p in Property::ALL {
        let scale = gs.get(p).max_abs();
        for c in 0..ga.get(p).as_slice().len() {
            let expect = 2.0 * ga.get(p).as_slice()[c] + gb.get(p).as_slice()[c];
            assert!((gs.get(p).as_slice()[c] - expect).abs() <= 1e-12 * scale);
        }
    }
}
