//! Objective: unsquared channel-data misfit plus Sobel edge penalties.

use alloc::vec;

use crate::acquisition::PulseField;
use crate::error::{Error, Result};
use crate::forward::{simulate_channels, PhysicsContext};
use crate::grid::{ChannelData, Map2, Property, PropertySet};
use crate::math;
use crate::stencil::mirror;

/// Regularization weights, one per property.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossConfig {
    pub lambda_sos: f64,
    pub lambda_density: f64,
    pub lambda_attenuation: f64,
    pub lambda_nonlinearity: f64,
}

impl LossConfig {
    pub const NONE: LossConfig = LossConfig {
        lambda_sos: 0.0,
        lambda_density: 0.0,
        lambda_attenuation: 0.0,
        lambda_nonlinearity: 0.0,
    };

    pub fn uniform(lambda: f64) -> Self {
        Self {
            lambda_sos: lambda,
            lambda_density: lambda,
            lambda_attenuation: lambda,
            lambda_nonlinearity: lambda,
        }
    }

    pub fn lambda(&self, p: Property) -> f64 {
        match p {
            Property::Sos => self.lambda_sos,
            Property::Density => self.lambda_density,
            Property::Attenuation => self.lambda_attenuation,
            Property::Nonlinearity => self.lambda_nonlinearity,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lambda_sos: self.lambda_sos * factor,
            lambda_density: self.lambda_density * factor,
            lambda_attenuation: self.lambda_attenuation * factor,
            lambda_nonlinearity: self.lambda_nonlinearity * factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if Property::ALL
            .iter()
            .all(|&p| self.lambda(p) >= 0.0 && self.lambda(p).is_finite())
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig("regularization weights must be finite and >= 0"))
        }
    }
}

// Sobel = smoothing [1 2 1] across the derivative axis times the
// difference f[-1] - f[+1] along it.
const SMOOTH: [f64; 3] = [1.0, 2.0, 1.0];

fn check_size(map: &Map2) -> Result<()> {
    if map.nx() < 3 || map.nz() < 3 {
        return Err(Error::GridTooSmall {
            nx: map.nx(),
            nz: map.nz(),
        });
    }
    Ok(())
}

fn neighbors(i: usize, n: usize) -> [usize; 3] {
    [mirror(i as isize - 1, n), i, mirror(i as isize + 1, n)]
}

/// Sobel responses `(G_x, G_z)` with mirrored edges. `G_x` differentiates
/// along rows with kernel `[1 2 1; 0 0 0; -1 -2 -1]`, `G_z` along columns
/// with `[1 0 -1; 2 0 -2; 1 0 -1]`.
pub fn sobel(map: &Map2) -> Result<(Map2, Map2)> {
    check_size(map)?;
    let (nx, nz) = map.shape();
    let f = map.as_slice();
    let gx = Map2::from_fn(nx, nz, |i, j| {
        let [up, _, down] = neighbors(i, nx);
        let cols = neighbors(j, nz);
        (0..3).map(|b| SMOOTH[b] * (f[up * nz + cols[b]] - f[down * nz + cols[b]])).sum()
    });
    let gz = Map2::from_fn(nx, nz, |i, j| {
        let rows = neighbors(i, nx);
        let [left, _, right] = neighbors(j, nz);
        (0..3).map(|a| SMOOTH[a] * (f[rows[a] * nz + left] - f[rows[a] * nz + right])).sum()
    });
    Ok((gx, gz))
}

fn sobel_transpose_acc(along_rows: bool, y: &Map2, out: &mut [f64]) {
    let (nx, nz) = y.shape();
    let ys = y.as_slice();
    for i in 0..nx {
        let rows = neighbors(i, nx);
        for j in 0..nz {
            let cols = neighbors(j, nz);
            let v = ys[i * nz + j];
            for t in 0..3 {
                let w = SMOOTH[t] * v;
                if along_rows {
                    out[rows[0] * nz + cols[t]] += w;
                    out[rows[2] * nz + cols[t]] -= w;
                } else {
                    out[rows[t] * nz + cols[0]] += w;
                    out[rows[t] * nz + cols[2]] -= w;
                }
            }
        }
    }
}

/// `‖(G_x m, G_z m)‖_F`
pub fn sobel_penalty(map: &Map2) -> Result<f64> {
    let (gx, gz) = sobel(map)?;
    let sq: f64 = gx.as_slice().iter().chain(gz.as_slice()).map(|v| v * v).sum();
    Ok(math::sqrt(sq))
}

/// Penalty and its gradient with respect to the map. The gradient is taken
/// as zero where the penalty vanishes.
pub fn sobel_penalty_grad(map: &Map2) -> Result<(f64, Map2)> {
    let (gx, gz) = sobel(map)?;
    let sq: f64 = gx.as_slice().iter().chain(gz.as_slice()).map(|v| v * v).sum();
    let norm = math::sqrt(sq);
    let (nx, nz) = map.shape();
    let mut grad = vec![0.0; nx * nz];
    if norm > 0.0 {
        sobel_transpose_acc(true, &gx, &mut grad);
        sobel_transpose_acc(false, &gz, &mut grad);
        grad.iter_mut().for_each(|g| *g /= norm);
    }
    Ok((norm, Map2::from_vec(nx, nz, grad)?))
}

/// Weighted sum of the Sobel penalties of all four maps.
pub fn regularization(props: &PropertySet, cfg: &LossConfig) -> Result<f64> {
    let mut total = 0.0;
    for p in Property::ALL {
        let lambda = cfg.lambda(p);
        if lambda != 0.0 {
            total += lambda * sobel_penalty(props.get(p))?;
        }
    }
    Ok(total)
}

/// Residual norm plus weighted Sobel penalties.
pub fn total_loss(
    ctx: &PhysicsContext,
    props: &PropertySet,
    measured: &ChannelData,
    pulse: &PulseField,
    cfg: &LossConfig,
) -> Result<f64> {
    let predicted = simulate_channels(ctx, props, pulse)?;
    let data = predicted.residual(measured)?.frobenius_norm();
    Ok(data + regularization(props, cfg)?)
}
