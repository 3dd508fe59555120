//! Second-order central difference kernels on the collocated grid.
//!
//! `grad` uses central differences inside and one-sided first-order
//! differences on the outermost rows/columns. `laplacian` is the 5-point
//! stencil with mirrored ghost values (`f[-1] = f[1]`), i.e. a zero normal
//! derivative at the edge. Each operator has a transpose used by the reverse
//! sweep; the transposes accumulate into their output.

use crate::error::{Error, Result};
use crate::grid::Map2;

/// Spatial derivative scheme. Only second-order central differences exist.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum KernelChoice {
    #[default]
    Central2,
}

fn ensure_size(nx: usize, nz: usize) -> Result<()> {
    if nx < 3 || nz < 3 {
        return Err(Error::GridTooSmall { nx, nz });
    }
    Ok(())
}

/// Mirrored neighbor index: -1 maps to 1, n maps to n - 2.
#[inline]
pub(crate) fn mirror(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i) as usize
    } else if i as usize >= n {
        2 * (n - 1) - i as usize
    } else {
        i as usize
    }
}

/// Gradient of `f` along both axes: `(∂x, ∂z)`.
pub fn grad(f: &Map2, dx: f64) -> Result<(Map2, Map2)> {
    let (nx, nz) = f.shape();
    ensure_size(nx, nz)?;
    let mut gx = Map2::zeros(nx, nz);
    let mut gz = Map2::zeros(nx, nz);
    grad_into(f.as_slice(), nx, nz, dx, gx.as_mut_slice(), gz.as_mut_slice());
    Ok((gx, gz))
}

/// 5-point Laplacian with mirrored boundaries.
pub fn laplacian(f: &Map2, dx: f64) -> Result<Map2> {
    let (nx, nz) = f.shape();
    ensure_size(nx, nz)?;
    let mut out = Map2::zeros(nx, nz);
    laplacian_into(f.as_slice(), nx, nz, dx, out.as_mut_slice());
    Ok(out)
}

/// Pointwise dot product of two gradient fields,
/// `∂x(1/Q)·∂x(U) + ∂z(1/Q)·∂z(U)`.
pub fn density_coupling(invq_grad: (&Map2, &Map2), u_grad: (&Map2, &Map2)) -> Result<Map2> {
    let (ax, az) = invq_grad;
    let (bx, bz) = u_grad;
    ax.ensure_same_shape(az)?;
    ax.ensure_same_shape(bx)?;
    ax.ensure_same_shape(bz)?;
    let mut out = Map2::zeros(ax.nx(), ax.nz());
    for (k, o) in out.as_mut_slice().iter_mut().enumerate() {
        *o = ax.as_slice()[k] * bx.as_slice()[k] + az.as_slice()[k] * bz.as_slice()[k];
    }
    Ok(out)
}

pub(crate) fn grad_into(f: &[f64], nx: usize, nz: usize, dx: f64, gx: &mut [f64], gz: &mut [f64]) {
    let h = 0.5 / dx;
    let inv = 1.0 / dx;
    for i in 0..nx {
        let row = i * nz;
        // along rows (first index)
        if i == 0 {
            for j in 0..nz {
                gx[row + j] = (f[row + nz + j] - f[row + j]) * inv;
            }
        } else if i == nx - 1 {
            for j in 0..nz {
                gx[row + j] = (f[row + j] - f[row - nz + j]) * inv;
            }
        } else {
            for j in 0..nz {
                gx[row + j] = (f[row + nz + j] - f[row - nz + j]) * h;
            }
        }
        // along columns (second index)
        gz[row] = (f[row + 1] - f[row]) * inv;
        for j in 1..nz - 1 {
            gz[row + j] = (f[row + j + 1] - f[row + j - 1]) * h;
        }
        gz[row + nz - 1] = (f[row + nz - 1] - f[row + nz - 2]) * inv;
    }
}

/// `out += Gxᵀ bx + Gzᵀ bz`.
pub(crate) fn grad_adjoint_acc(bx: &[f64], bz: &[f64], nx: usize, nz: usize, dx: f64, out: &mut [f64]) {
    let h = 0.5 / dx;
    let inv = 1.0 / dx;
    for i in 0..nx {
        let row = i * nz;
        if i == 0 {
            for j in 0..nz {
                let w = bx[row + j] * inv;
                out[row + nz + j] += w;
                out[row + j] -= w;
            }
        } else if i == nx - 1 {
            for j in 0..nz {
                let w = bx[row + j] * inv;
                out[row + j] += w;
                out[row - nz + j] -= w;
            }
        } else {
            for j in 0..nz {
                let w = bx[row + j] * h;
                out[row + nz + j] += w;
                out[row - nz + j] -= w;
            }
        }
        let w = bz[row] * inv;
        out[row + 1] += w;
        out[row] -= w;
        for j in 1..nz - 1 {
            let w = bz[row + j] * h;
            out[row + j + 1] += w;
            out[row + j - 1] -= w;
        }
        let w = bz[row + nz - 1] * inv;
        out[row + nz - 1] += w;
        out[row + nz - 2] -= w;
    }
}

pub(crate) fn laplacian_into(f: &[f64], nx: usize, nz: usize, dx: f64, out: &mut [f64]) {
    let s = 1.0 / (dx * dx);
    for i in 0..nx {
        let up = mirror(i as isize - 1, nx) * nz;
        let down = mirror(i as isize + 1, nx) * nz;
        let row = i * nz;
        out[row] = (f[up] + f[down] + 2.0 * f[row + 1] - 4.0 * f[row]) * s;
        for j in 1..nz - 1 {
            out[row + j] = (f[up + j] + f[down + j] + f[row + j + 1] + f[row + j - 1]
                - 4.0 * f[row + j])
                * s;
        }
        let j = nz - 1;
        out[row + j] = (f[up + j] + f[down + j] + 2.0 * f[row + j - 1] - 4.0 * f[row + j]) * s;
    }
}

/// `out += Lᵀ b`.
pub(crate) fn laplacian_adjoint_acc(b: &[f64], nx: usize, nz: usize, dx: f64, out: &mut [f64]) {
    let s = 1.0 / (dx * dx);
    for i in 0..nx {
        let up = mirror(i as isize - 1, nx) * nz;
        let down = mirror(i as isize + 1, nx) * nz;
        let row = i * nz;
        for j in 0..nz {
            let w = b[row + j] * s;
            let left = mirror(j as isize - 1, nz);
            let right = mirror(j as isize + 1, nz);
            out[up + j] += w;
            out[down + j] += w;
            out[row + left] += w;
            out[row + right] += w;
            out[row + j] -= 4.0 * w;
        }
    }
}

/// Column indices and weights of row `cell` of the gradient operators,
/// in the order (x-part, z-part). Used to assemble explicit matrices.
pub(crate) fn grad_row(i: usize, j: usize, nx: usize, nz: usize, dx: f64) -> ([(usize, f64); 2], [(usize, f64); 2]) {
    let h = 0.5 / dx;
    let inv = 1.0 / dx;
    let c = |a: usize, b: usize| a * nz + b;
    let gx = if i == 0 {
        [(c(1, j), inv), (c(0, j), -inv)]
    } else if i == nx - 1 {
        [(c(i, j), inv), (c(i - 1, j), -inv)]
    } else {
        [(c(i + 1, j), h), (c(i - 1, j), -h)]
    };
    let gz = if j == 0 {
        [(c(i, 1), inv), (c(i, 0), -inv)]
    } else if j == nz - 1 {
        [(c(i, j), inv), (c(i, j - 1), -inv)]
    } else {
        [(c(i, j + 1), h), (c(i, j - 1), -h)]
    };
    (gx, gz)
}

/// Column indices and weights of row `cell` of the Laplacian (five entries,
/// mirrored neighbors may repeat a column).
pub(crate) fn laplacian_row(i: usize, j: usize, nx: usize, nz: usize, dx: f64) -> [(usize, f64); 5] {
    let s = 1.0 / (dx * dx);
    let up = mirror(i as isize - 1, nx);
    let down = mirror(i as isize + 1, nx);
    let left = mirror(j as isize - 1, nz);
    let right = mirror(j as isize + 1, nz);
    [
        (up * nz + j, s),
        (down * nz + j, s),
        (i * nz + left, s),
        (i * nz + right, s),
        (i * nz + j, -4.0 * s),
    ]
}
