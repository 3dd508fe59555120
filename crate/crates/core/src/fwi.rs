//! Linear-acoustics baseline in matrix form.
//!
//! The space-time operator `A` acting on the stacked wavefield
//! `u = [u[0]; u[1]; …; u[nt-1]]` is assembled explicitly as a sparse
//! matrix. It is lower triangular in time with a diagonal block on the
//! diagonal, so `A u = f` and `Aᵀ r = b` are solved by substitution.
//! With the nonlinearity set to zero it reproduces the time-stepper.

use alloc::vec;
use alloc::vec::Vec;

use crate::acquisition::PulseField;
use crate::adjoint::PropertyGradients;
use crate::error::{Error, Result};
use crate::forward::PhysicsContext;
use crate::grid::{check_cfl, ChannelData, Map2, ProbeGeometry, Property, PropertySet, SimulationGrid};
use crate::inversion::GradientEngine;
use crate::stencil::{self, grad_row, laplacian_row};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// `∂tt − c²∇²`
    Homogeneous,
    /// Damped wave operator with heterogeneous density.
    Linear,
}

/// Sparse space-time wave operator in compressed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWaveOperator {
    grid: SimulationGrid,
    kind: OperatorKind,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    // per-cell coefficients, kept for the gradient
    sos: Vec<f64>,
    density: Vec<f64>,
    csq: Vec<f64>,
    k: Vec<f64>,
    d: Vec<f64>,
    wx: Vec<f64>,
    wz: Vec<f64>,
}

impl LinearWaveOperator {
    pub const DEFAULT_CAP: usize = 200_000;

    pub fn grid(&self) -> &SimulationGrid {
        &self.grid
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    /// Number of unknowns.
    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(column, value)` pairs of one row, sorted by column.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    /// Same entries as another operator, compared exactly.
    pub fn same_matrix(&self, other: &LinearWaveOperator) -> bool {
        self.row_ptr == other.row_ptr && self.cols == other.cols && self.vals == other.vals
    }

    pub fn index(&self, step: usize, cell: usize) -> usize {
        step * self.grid.cells() + cell
    }

    fn check_len(&self, v: &[f64], what: &'static str) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                what,
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Sparse matrix-vector product.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u, "operator input")?;
        Ok((0..self.dim())
            .map(|r| self.row(r).map(|(c, v)| v * u[c]).sum())
            .collect())
    }

    /// The same product computed step by step with the stencils, without
    /// touching the stored matrix.
    pub fn apply_matrix_free(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u, "operator input")?;
        let g = self.grid;
        let cells = g.cells();
        let inv_dt2 = 1.0 / (g.dt * g.dt);
        let two_over_dt = 2.0 / g.dt;
        let mut out = vec![0.0; u.len()];
        let (mut gx, mut gz, mut lap) = (vec![0.0; cells], vec![0.0; cells], vec![0.0; cells]);
        for n in 0..g.nt {
            let now = &u[n * cells..(n + 1) * cells];
            let o = &mut out[n * cells..(n + 1) * cells];
            if n < 2 {
                for c in 0..cells {
                    o[c] = inv_dt2 * now[c];
                }
                continue;
            }
            let u1 = &u[(n - 1) * cells..n * cells];
            let u2 = &u[(n - 2) * cells..(n - 1) * cells];
            stencil::grad_into(u1, g.nx, g.nz, g.dx, &mut gx, &mut gz);
            stencil::laplacian_into(u1, g.nx, g.nz, g.dx, &mut lap);
            for c in 0..cells {
                let d = self.d[c];
                let spatial = self.k[c] * (self.wx[c] * gx[c] + self.wz[c] * gz[c]) + self.csq[c] * lap[c];
                o[c] = inv_dt2 * now[c]
                    + (-2.0 * inv_dt2 + two_over_dt * d + d * d) * u1[c]
                    + (inv_dt2 - two_over_dt * d) * u2[c]
                    - spatial;
            }
        }
        Ok(out)
    }

    /// Forward substitution for `A u = f`.
    pub fn solve(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f, "right-hand side")?;
        let mut u = vec![0.0; f.len()];
        for r in 0..self.dim() {
            let mut acc = f[r];
            let mut diag = 0.0;
            for (c, v) in self.row(r) {
                if c == r {
                    diag = v;
                } else {
                    acc -= v * u[c];
                }
            }
            if diag == 0.0 {
                return Err(Error::SingularBlock { row: r });
            }
            u[r] = acc / diag;
        }
        Ok(u)
    }

    /// Backward substitution for `Aᵀ r = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_len(b, "right-hand side")?;
        let mut rhs = b.to_vec();
        let mut r = vec![0.0; b.len()];
        for row in (0..self.dim()).rev() {
            let diag = self
                .row(row)
                .find(|&(c, _)| c == row)
                .map(|(_, v)| v)
                .unwrap_or(0.0);
            if diag == 0.0 {
                return Err(Error::SingularBlock { row });
            }
            let x = rhs[row] / diag;
            r[row] = x;
            for (c, v) in self.row(row) {
                if c != row {
                    rhs[c] -= v * x;
                }
            }
        }
        Ok(r)
    }
}

fn check_size(grid: &SimulationGrid, cap: usize) -> Result<()> {
    let unknowns = grid.cells() * grid.nt;
    if unknowns > cap {
        return Err(Error::ProblemTooLarge { unknowns, cap });
    }
    Ok(())
}

fn check_map(map: &Map2, grid: &SimulationGrid) -> Result<()> {
    if map.shape() != (grid.nx, grid.nz) {
        return Err(Error::ShapeMismatch {
            what: "coefficient map",
            expected: grid.cells(),
            found: map.nx() * map.nz(),
        });
    }
    Ok(())
}

fn build(
    kind: OperatorKind,
    c0: &Map2,
    rho0: &Map2,
    d: &Map2,
    grid: &SimulationGrid,
    cap: usize,
) -> Result<LinearWaveOperator> {
    check_size(grid, cap)?;
    for m in [c0, rho0, d] {
        check_map(m, grid)?;
    }
    let (nx, nz, nt) = (grid.nx, grid.nz, grid.nt);
    let cells = nx * nz;
    let inv_dt2 = 1.0 / (grid.dt * grid.dt);
    let two_over_dt = 2.0 / grid.dt;

    let sos = c0.as_slice().to_vec();
    let density = rho0.as_slice().to_vec();
    let csq: Vec<f64> = sos.iter().map(|c| c * c).collect();
    let k: Vec<f64> = csq.iter().zip(&density).map(|(a, q)| a * q).collect();
    let invq: Vec<f64> = density.iter().map(|q| 1.0 / q).collect();
    let (mut wx, mut wz) = (vec![0.0; cells], vec![0.0; cells]);
    stencil::grad_into(&invq, nx, nz, grid.dx, &mut wx, &mut wz);
    let dv = d.as_slice().to_vec();

    // spatial rows, shared by every time step
    let mut spatial: Vec<Vec<(usize, f64)>> = Vec::with_capacity(cells);
    for i in 0..nx {
        for j in 0..nz {
            let c = i * nz + j;
            let mut e: Vec<(usize, f64)> = laplacian_row(i, j, nx, nz, grid.dx)
                .iter()
                .map(|&(col, w)| (col, csq[c] * w))
                .collect();
            let (gxr, gzr) = grad_row(i, j, nx, nz, grid.dx);
            for ((col, w), wk) in gxr.iter().map(|t| (t, wx[c])).chain(gzr.iter().map(|t| (t, wz[c]))) {
                let v = k[c] * wk * w;
                if v != 0.0 {
                    e.push((*col, v));
                }
            }
            spatial.push(e);
        }
    }

    let n_unknowns = cells * nt;
    let mut row_ptr = Vec::with_capacity(n_unknowns + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(16);
    for n in 0..nt {
        for c in 0..cells {
            let r = n * cells + c;
            entries.clear();
            entries.push((r, inv_dt2));
            if n >= 2 {
                let dc = dv[c];
                let prev = (n - 1) * cells;
                entries.push((prev + c, -2.0 * inv_dt2 + two_over_dt * dc + dc * dc));
                entries.push(((n - 2) * cells + c, inv_dt2 - two_over_dt * dc));
                for &(col, v) in &spatial[c] {
                    entries.push((prev + col, -v));
                }
            }
            entries.sort_by_key(|e| e.0);
            let start = cols.len();
            for &(col, v) in entries.iter() {
                if cols.len() > start && *cols.last().expect("nonempty") == col {
                    *vals.last_mut().expect("nonempty") += v;
                } else {
                    cols.push(col);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
    }
    Ok(LinearWaveOperator {
        grid: *grid,
        kind,
        row_ptr,
        cols,
        vals,
        sos,
        density,
        csq,
        k,
        d: dv,
        wx,
        wz,
    })
}

/// `∂tt − c₀²∇²` with rest initial conditions.
pub fn assemble_homogeneous(c0: &Map2, grid: &SimulationGrid) -> Result<LinearWaveOperator> {
    assemble_homogeneous_capped(c0, grid, LinearWaveOperator::DEFAULT_CAP)
}

pub fn assemble_homogeneous_capped(c0: &Map2, grid: &SimulationGrid, cap: usize) -> Result<LinearWaveOperator> {
    let ones = Map2::filled(grid.nx, grid.nz, 1.0);
    let zeros = Map2::zeros(grid.nx, grid.nz);
    build(OperatorKind::Homogeneous, c0, &ones, &zeros, grid, cap)
}

/// Damped, variable-density linear wave operator. The density term is
/// expanded by the product rule, `c²ρ ∂(ρ⁻¹ ∂u) = c²ρ (∂ρ⁻¹)(∂u) + c² ∂²u`,
/// matching the time-stepper term by term. `d` is the total damping,
/// absorbing layer included.
pub fn assemble_linear(c0: &Map2, rho0: &Map2, d: &Map2, grid: &SimulationGrid) -> Result<LinearWaveOperator> {
    assemble_linear_capped(c0, rho0, d, grid, LinearWaveOperator::DEFAULT_CAP)
}

pub fn assemble_linear_capped(
    c0: &Map2,
    rho0: &Map2,
    d: &Map2,
    grid: &SimulationGrid,
    cap: usize,
) -> Result<LinearWaveOperator> {
    build(OperatorKind::Linear, c0, rho0, d, grid, cap)
}

/// `u = A⁻¹ f`
pub fn solve_wavefield(a: &LinearWaveOperator, f: &[f64]) -> Result<Vec<f64>> {
    a.solve(f)
}

/// Stacked right-hand side of a pulse. The first two steps are left at zero
/// because the wavefield starts from rest.
pub fn source_vector(pulse: &PulseField, grid: &SimulationGrid) -> Result<Vec<f64>> {
    pulse.ensure_grid(grid)?;
    let mut f = pulse.to_dense();
    let cells = grid.cells();
    f[..2 * cells].iter_mut().for_each(|v| *v = 0.0);
    Ok(f)
}

/// Channel data `R u` of a stacked wavefield.
pub fn restrict_vector(u: &[f64], geom: &ProbeGeometry, grid: &SimulationGrid) -> Result<ChannelData> {
    let cells = grid.cells();
    if u.len() != cells * grid.nt {
        return Err(Error::ShapeMismatch {
            what: "stacked wavefield",
            expected: cells * grid.nt,
            found: u.len(),
        });
    }
    let probe = geom.flat_cells(grid.nz);
    let mut ch = ChannelData::zeros(probe.len(), grid.nt, grid.dt);
    for n in 0..grid.nt {
        for (e, &cell) in probe.iter().enumerate() {
            ch.set(e, n, u[n * cells + cell]);
        }
    }
    Ok(ch)
}

/// How `(∂A/∂θ u)ᵀ r` is formed for each cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    /// Build the full space-time vector `∂A/∂θₖ u` for every cell `k` and
    /// take its inner product with `r`. Quadratic in the number of cells.
    #[default]
    PerCellDense,
    /// Visit only the rows that depend on cell `k`.
    RowLocal,
}

/// Calls `emit(row, value)` for every nonzero entry of `∂A/∂θₖ u`.
struct Derivative<'a> {
    a: &'a LinearWaveOperator,
    // spatial derivatives of u[n-1] for each n, stacked
    gx: Vec<f64>,
    gz: Vec<f64>,
    lap: Vec<f64>,
    u: &'a [f64],
}

impl<'a> Derivative<'a> {
    fn new(a: &'a LinearWaveOperator, u: &'a [f64]) -> Self {
        let g = a.grid;
        let cells = g.cells();
        let mut gx = vec![0.0; u.len()];
        let mut gz = vec![0.0; u.len()];
        let mut lap = vec![0.0; u.len()];
        for n in 2..g.nt {
            let u1 = &u[(n - 1) * cells..n * cells];
            let span = n * cells..(n + 1) * cells;
            let (x, z) = (&mut gx[span.clone()], &mut gz[span.clone()]);
            stencil::grad_into(u1, g.nx, g.nz, g.dx, x, z);
            stencil::laplacian_into(u1, g.nx, g.nz, g.dx, &mut lap[span]);
        }
        Self { a, gx, gz, lap, u }
    }

    fn emit(&self, p: Property, cell: usize, mut out: impl FnMut(usize, f64)) {
        let a = self.a;
        let g = a.grid;
        let cells = g.cells();
        let two_over_dt = 2.0 / g.dt;
        match p {
            Property::Sos => {
                let (c, q) = (a.sos[cell], a.density[cell]);
                for n in 2..g.nt {
                    let r = n * cells + cell;
                    let coupling = a.wx[cell] * self.gx[r] + a.wz[cell] * self.gz[r];
                    out(r, -(2.0 * c * q * coupling + 2.0 * c * self.lap[r]));
                }
            }
            Property::Attenuation => {
                let d = a.d[cell];
                for n in 2..g.nt {
                    let r = n * cells + cell;
                    let u1 = self.u[(n - 1) * cells + cell];
                    let u2 = self.u[(n - 2) * cells + cell];
                    out(r, (two_over_dt + 2.0 * d) * u1 - two_over_dt * u2);
                }
            }
            Property::Density => {
                let q = a.density[cell];
                let csq = a.csq[cell];
                let dinvq = -1.0 / (q * q);
                let (ci, cj) = (cell / g.nz, cell % g.nz);
                // rows m whose gradient of 1/ρ reads cell k
                let mut neighbors = [None; 5];
                neighbors[0] = Some((ci, cj));
                if ci > 0 {
                    neighbors[1] = Some((ci - 1, cj));
                }
                if ci + 1 < g.nx {
                    neighbors[2] = Some((ci + 1, cj));
                }
                if cj > 0 {
                    neighbors[3] = Some((ci, cj - 1));
                }
                if cj + 1 < g.nz {
                    neighbors[4] = Some((ci, cj + 1));
                }
                let mut dw = [(0usize, 0.0f64, 0.0f64); 5];
                let mut m_count = 0;
                for &(mi, mj) in neighbors.iter().flatten() {
                    let (gxr, gzr) = grad_row(mi, mj, g.nx, g.nz, g.dx);
                    let wxk: f64 = gxr.iter().filter(|e| e.0 == cell).map(|e| e.1).sum();
                    let wzk: f64 = gzr.iter().filter(|e| e.0 == cell).map(|e| e.1).sum();
                    if wxk != 0.0 || wzk != 0.0 {
                        dw[m_count] = (mi * g.nz + mj, wxk * dinvq, wzk * dinvq);
                        m_count += 1;
                    }
                }
                for n in 2..g.nt {
                    let base = n * cells;
                    let r = base + cell;
                    let coupling = a.wx[cell] * self.gx[r] + a.wz[cell] * self.gz[r];
                    out(r, -csq * coupling);
                    for &(m, dwx, dwz) in &dw[..m_count] {
                        let rm = base + m;
                        out(rm, -a.k[m] * (dwx * self.gx[rm] + dwz * self.gz[rm]));
                    }
                }
            }
            Property::Nonlinearity => {}
        }
    }
}

/// Gradient of `½‖R u − m‖²` given `residual = R u − m`, by one adjoint
/// solve and the per-cell rule `∂L/∂θₖ = −(∂A/∂θₖ u)ᵀ r`. The nonlinearity
/// gradient is left at zero.
pub fn fwi_gradient(
    a: &LinearWaveOperator,
    u: &[f64],
    residual: &ChannelData,
    geom: &ProbeGeometry,
    mode: GradientMode,
) -> Result<PropertyGradients> {
    let g = a.grid;
    let cells = g.cells();
    a.check_len(u, "wavefield")?;
    let probe = geom.flat_cells(g.nz);
    if residual.channels() != probe.len() || residual.steps() != g.nt {
        return Err(Error::ShapeMismatch {
            what: "residual channels x steps",
            expected: probe.len() * g.nt,
            found: residual.channels() * residual.steps(),
        });
    }
    let mut b = vec![0.0; a.dim()];
    for n in 0..g.nt {
        for (e, &cell) in probe.iter().enumerate() {
            b[n * cells + cell] += residual.get(e, n);
        }
    }
    let r = a.solve_transpose(&b)?;
    let deriv = Derivative::new(a, u);
    let mut grads = PropertyGradients::zeros(g.nx, g.nz);
    let mut dense = match mode {
        GradientMode::PerCellDense => vec![0.0; a.dim()],
        GradientMode::RowLocal => Vec::new(),
    };
    for p in [Property::Sos, Property::Density, Property::Attenuation] {
        let out = grads.get_mut(p).as_mut_slice();
        for (cell, slot) in out.iter_mut().enumerate() {
            let dot = match mode {
                GradientMode::PerCellDense => {
                    dense.iter_mut().for_each(|v| *v = 0.0);
                    deriv.emit(p, cell, |row, v| dense[row] += v);
                    dense.iter().zip(&r).map(|(x, y)| x * y).sum::<f64>()
                }
                GradientMode::RowLocal => {
                    let mut acc = 0.0;
                    deriv.emit(p, cell, |row, v| acc += v * r[row]);
                    acc
                }
            };
            *slot = -dot;
        }
    }
    Ok(grads)
}

/// Linear engine for the shared inversion loop: never updates the
/// nonlinearity map.
#[derive(Debug, Clone, Copy)]
pub struct FwiEngine<'a> {
    pub ctx: &'a PhysicsContext,
    pub pulse: &'a PulseField,
    pub measured: &'a ChannelData,
    pub mode: GradientMode,
    pub cap: usize,
}

impl<'a> FwiEngine<'a> {
    pub fn new(ctx: &'a PhysicsContext, pulse: &'a PulseField, measured: &'a ChannelData) -> Self {
        Self {
            ctx,
            pulse,
            measured,
            mode: GradientMode::RowLocal,
            cap: LinearWaveOperator::DEFAULT_CAP,
        }
    }

    pub fn operator(&self, props: &PropertySet) -> Result<LinearWaveOperator> {
        let grid = &self.ctx.grid;
        check_cfl(props, grid)?;
        let d = self.ctx.pml_profile()?.zip_map(props.attenuation(), |a, b| a + b)?;
        assemble_linear_capped(props.sos(), props.density(), &d, grid, self.cap)
    }

    /// Linear prediction of the channel data.
    pub fn predict(&self, props: &PropertySet) -> Result<ChannelData> {
        let a = self.operator(props)?;
        let u = a.solve(&source_vector(self.pulse, &self.ctx.grid)?)?;
        restrict_vector(&u, &self.ctx.probe, &self.ctx.grid)
    }
}

impl GradientEngine for FwiEngine<'_> {
    fn data_loss_and_gradient(&self, props: &PropertySet) -> Result<(f64, PropertyGradients)> {
        let grid = &self.ctx.grid;
        let a = self.operator(props)?;
        let u = a.solve(&source_vector(self.pulse, grid)?)?;
        let predicted = restrict_vector(&u, &self.ctx.probe, grid)?;
        let residual = predicted.residual(self.measured)?;
        let norm = residual.frobenius_norm();
        if norm == 0.0 {
            return Ok((0.0, PropertyGradients::zeros(grid.nx, grid.nz)));
        }
        let grads = fwi_gradient(&a, &u, &residual.scaled(1.0 / norm), &self.ctx.probe, self.mode)?;
        Ok((norm, grads))
    }

    fn updatable(&self) -> &'static [Property] {
        &[Property::Sos, Property::Density, Property::Attenuation]
    }
}

/// Single-pulse linear inversion with the shared optimizer and stop rules.
pub fn fwi_invert(
    ctx: &PhysicsContext,
    pulse: &PulseField,
    measured: &ChannelData,
    init: &PropertySet,
    cfg: &crate::inversion::InversionConfig,
) -> Result<crate::inversion::InversionOutcome> {
    let grid = &ctx.grid;
    check_size(grid, LinearWaveOperator::DEFAULT_CAP)?;
    crate::inversion::invert(&FwiEngine::new(ctx, pulse, measured), init, cfg)
}
