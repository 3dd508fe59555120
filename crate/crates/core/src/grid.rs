//! Grid geometry, property maps, wavefields, channel data and the restriction
//! operator that samples a field at the probe elements.
//!
//! Maps are stored row-major: the first index `i` runs over `nx` rows, the
//! second index `j` over `nz` columns, and cell `(i, j)` lives at
//! `i * nz + j`. The linear probe sits on one row and its elements are spread
//! along the columns.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Space-time discretization. Spacing is isotropic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationGrid {
    pub nx: usize,
    pub nz: usize,
    pub nt: usize,
    /// Spatial interval in meters.
    pub dx: f64,
    /// Temporal interval in seconds.
    pub dt: f64,
}

impl SimulationGrid {
    pub fn new(nx: usize, nz: usize, nt: usize, dx: f64, dt: f64) -> Result<Self> {
        if nx < 3 || nz < 3 {
            return Err(Error::GridTooSmall { nx, nz });
        }
        if nt < 3 {
            return Err(Error::InvalidGrid("nt must be at least 3"));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::InvalidGrid("dx must be positive and finite"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidGrid("dt must be positive and finite"));
        }
        Ok(Self { nx, nz, nt, dx, dt })
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.nx * self.nz
    }

    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.nz + col
    }

    /// Same spatial layout with a different number of time steps.
    pub fn with_nt(&self, nt: usize) -> Result<Self> {
        Self::new(self.nx, self.nz, nt, self.dx, self.dt)
    }
}

/// A real-valued map over the spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Map2 {
    nx: usize,
    nz: usize,
    data: Vec<f64>,
}

impl Map2 {
    pub fn zeros(nx: usize, nz: usize) -> Self {
        Self::filled(nx, nz, 0.0)
    }

    pub fn filled(nx: usize, nz: usize, value: f64) -> Self {
        Self {
            nx,
            nz,
            data: vec![value; nx * nz],
        }
    }

    pub fn from_vec(nx: usize, nz: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nx * nz {
            return Err(Error::ShapeMismatch {
                what: "map data",
                expected: nx * nz,
                found: data.len(),
            });
        }
        Ok(Self { nx, nz, data })
    }

    pub fn from_fn(nx: usize, nz: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(nx * nz);
        for i in 0..nx {
            for j in 0..nz {
                data.push(f(i, j));
            }
        }
        Self { nx, nz, data }
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn nz(&self) -> usize {
        self.nz
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.nz)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            nx: self.nx,
            nz: self.nz,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Map2, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(Self {
            nx: self.nx,
            nz: self.nz,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn ensure_same_shape(&self, other: &Map2) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                what: "map",
                expected: self.data.len(),
                found: other.data.len(),
            });
        }
        Ok(())
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Index<(usize, usize)> for Map2 {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.nz + j]
    }
}

impl IndexMut<(usize, usize)> for Map2 {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.nz + j]
    }
}

/// The four reconstructed material properties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Property {
    /// Speed of sound, m/s.
    Sos,
    /// Mass density, kg/m³.
    Density,
    /// Damping rate, 1/s.
    Attenuation,
    /// Dimensionless nonlinearity parameter.
    Nonlinearity,
}

impl Property {
    pub const ALL: [Property; 4] = [
        Property::Sos,
        Property::Density,
        Property::Attenuation,
        Property::Nonlinearity,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Property::Sos => "sos",
            Property::Density => "density",
            Property::Attenuation => "attenuation",
            Property::Nonlinearity => "nonlinearity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Speed of sound, density, attenuation and nonlinearity on a shared grid.
///
/// Construction rejects non-finite entries, non-positive speed of sound or
/// density, and negative attenuation or nonlinearity.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertySet {
    maps: [Map2; 4],
}

impl PropertySet {
    pub fn new(sos: Map2, density: Map2, attenuation: Map2, nonlinearity: Map2) -> Result<Self> {
        let set = Self {
            maps: [sos, density, attenuation, nonlinearity],
        };
        set.validate()?;
        Ok(set)
    }

    pub fn uniform(
        grid: &SimulationGrid,
        sos: f64,
        density: f64,
        attenuation: f64,
        nonlinearity: f64,
    ) -> Result<Self> {
        let m = |v| Map2::filled(grid.nx, grid.nz, v);
        Self::new(m(sos), m(density), m(attenuation), m(nonlinearity))
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.maps[0].shape();
        for map in &self.maps[1..] {
            if map.shape() != shape {
                return Err(Error::ShapeMismatch {
                    what: "property maps",
                    expected: shape.0 * shape.1,
                    found: map.nx() * map.nz(),
                });
            }
        }
        for property in Property::ALL {
            let strictly_positive = matches!(property, Property::Sos | Property::Density);
            for (index, &value) in self.get(property).as_slice().iter().enumerate() {
                let ok = value.is_finite()
                    && if strictly_positive {
                        value > 0.0
                    } else {
                        value >= 0.0
                    };
                if !ok {
                    return Err(Error::InvalidProperty {
                        property,
                        index,
                        value,
                    });
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, property: Property) -> &Map2 {
        &self.maps[property.index()]
    }

    /// Replace one map, re-validating the set.
    pub fn with(mut self, property: Property, map: Map2) -> Result<Self> {
        self.maps[property.index()] = map;
        self.validate()?;
        Ok(self)
    }

    #[inline]
    pub(crate) fn get_mut(&mut self, property: Property) -> &mut Map2 {
        &mut self.maps[property.index()]
    }

    #[inline]
    pub fn sos(&self) -> &Map2 {
        &self.maps[0]
    }

    #[inline]
    pub fn density(&self) -> &Map2 {
        &self.maps[1]
    }

    #[inline]
    pub fn attenuation(&self) -> &Map2 {
        &self.maps[2]
    }

    #[inline]
    pub fn nonlinearity(&self) -> &Map2 {
        &self.maps[3]
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        self.maps[0].shape()
    }

    pub fn ensure_grid(&self, grid: &SimulationGrid) -> Result<()> {
        if self.shape() != (grid.nx, grid.nz) {
            return Err(Error::ShapeMismatch {
                what: "property maps vs grid",
                expected: grid.cells(),
                found: self.shape().0 * self.shape().1,
            });
        }
        Ok(())
    }
}

/// Pressure over the full space-time grid, time-major: slice `n` holds
/// `U[n]` as a row-major map.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefield {
    grid: SimulationGrid,
    pressure: Vec<f64>,
}

impl Wavefield {
    pub fn zeros(grid: SimulationGrid) -> Self {
        Self {
            grid,
            pressure: vec![0.0; grid.cells() * grid.nt],
        }
    }

    pub fn from_vec(grid: SimulationGrid, pressure: Vec<f64>) -> Result<Self> {
        if pressure.len() != grid.cells() * grid.nt {
            return Err(Error::ShapeMismatch {
                what: "wavefield",
                expected: grid.cells() * grid.nt,
                found: pressure.len(),
            });
        }
        Ok(Self { grid, pressure })
    }

    #[inline]
    pub fn grid(&self) -> &SimulationGrid {
        &self.grid
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, step: usize) -> f64 {
        self.pressure[step * self.grid.cells() + self.grid.cell(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, step: usize, value: f64) {
        let idx = step * self.grid.cells() + self.grid.cell(row, col);
        self.pressure[idx] = value;
    }

    #[inline]
    pub fn slice(&self, step: usize) -> &[f64] {
        let cells = self.grid.cells();
        &self.pressure[step * cells..(step + 1) * cells]
    }

    #[inline]
    pub fn slice_mut(&mut self, step: usize) -> &mut [f64] {
        let cells = self.grid.cells();
        &mut self.pressure[step * cells..(step + 1) * cells]
    }

    pub fn snapshot(&self, step: usize) -> Map2 {
        Map2 {
            nx: self.grid.nx,
            nz: self.grid.nz,
            data: self.slice(step).to_vec(),
        }
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.pressure
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.pressure
    }
}

/// Pressure sampled at the probe elements: `nc` rows of `nt` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelData {
    nc: usize,
    nt: usize,
    dt: f64,
    samples: Vec<f64>,
}

impl ChannelData {
    pub fn zeros(nc: usize, nt: usize, dt: f64) -> Self {
        Self {
            nc,
            nt,
            dt,
            samples: vec![0.0; nc * nt],
        }
    }

    pub fn from_vec(nc: usize, nt: usize, dt: f64, samples: Vec<f64>) -> Result<Self> {
        if nc == 0 {
            return Err(Error::InvalidProbe("channel data needs at least one channel"));
        }
        if samples.len() != nc * nt {
            return Err(Error::ShapeMismatch {
                what: "channel samples",
                expected: nc * nt,
                found: samples.len(),
            });
        }
        Ok(Self {
            nc,
            nt,
            dt,
            samples,
        })
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.nc
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.nt
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn get(&self, channel: usize, step: usize) -> f64 {
        self.samples[channel * self.nt + step]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, step: usize, value: f64) {
        self.samples[channel * self.nt + step] = value;
    }

    #[inline]
    pub fn channel(&self, channel: usize) -> &[f64] {
        &self.samples[channel * self.nt..(channel + 1) * self.nt]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.samples
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn ensure_same_shape(&self, other: &ChannelData) -> Result<()> {
        if (self.nc, self.nt) != (other.nc, other.nt) {
            return Err(Error::ShapeMismatch {
                what: "channel data",
                expected: self.nc * self.nt,
                found: other.nc * other.nt,
            });
        }
        Ok(())
    }

    /// `self - other`, sample by sample.
    pub fn residual(&self, other: &ChannelData) -> Result<ChannelData> {
        self.ensure_same_shape(other)?;
        Ok(ChannelData {
            nc: self.nc,
            nt: self.nt,
            dt: self.dt,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn scaled(&self, factor: f64) -> ChannelData {
        ChannelData {
            samples: self.samples.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        crate::math::sqrt(self.samples.iter().map(|v| v * v).sum())
    }

    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }
}

/// Element locations of a linear array: exact grid cells on one row,
/// strictly increasing in column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeGeometry {
    element_cells: Vec<(usize, usize)>,
    pitch_cells: usize,
}

impl ProbeGeometry {
    /// `count` elements on `row`, the first at `first_col`, spaced by
    /// `pitch_cells` columns.
    pub fn linear(row: usize, first_col: usize, count: usize, pitch_cells: usize) -> Result<Self> {
        if pitch_cells == 0 {
            return Err(Error::InvalidProbe("pitch must be at least one cell"));
        }
        let element_cells = (0..count)
            .map(|k| (row, first_col + k * pitch_cells))
            .collect();
        Self::from_cells(element_cells, pitch_cells)
    }

    /// Linear array centered laterally on a grid.
    pub fn centered(grid: &SimulationGrid, row: usize, count: usize, pitch_cells: usize) -> Result<Self> {
        let span = count.saturating_sub(1) * pitch_cells;
        if count == 0 || span >= grid.nz {
            return Err(Error::InvalidProbe("array does not fit the grid width"));
        }
        Self::linear(row, (grid.nz - 1 - span) / 2, count, pitch_cells)
    }

    pub fn from_cells(element_cells: Vec<(usize, usize)>, pitch_cells: usize) -> Result<Self> {
        if element_cells.is_empty() {
            return Err(Error::InvalidProbe("probe needs at least one element"));
        }
        let row = element_cells[0].0;
        if element_cells.iter().any(|&(r, _)| r != row) {
            return Err(Error::InvalidProbe("linear array elements must share one row"));
        }
        if element_cells.windows(2).any(|w| w[1].1 <= w[0].1) {
            return Err(Error::InvalidProbe(
                "element columns must be strictly increasing",
            ));
        }
        Ok(Self {
            element_cells,
            pitch_cells,
        })
    }

    #[inline]
    pub fn elements(&self) -> &[(usize, usize)] {
        &self.element_cells
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.element_cells.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.element_cells.is_empty()
    }

    #[inline]
    pub fn pitch_cells(&self) -> usize {
        self.pitch_cells
    }

    #[inline]
    pub fn row(&self) -> usize {
        self.element_cells[0].0
    }

    pub fn ensure_inside(&self, nx: usize, nz: usize) -> Result<()> {
        for &(row, col) in &self.element_cells {
            if row >= nx || col >= nz {
                return Err(Error::IndexOutOfGrid { row, col });
            }
        }
        Ok(())
    }

    /// Flat cell indices of the elements on a grid with `nz` columns.
    pub fn flat_cells(&self, nz: usize) -> Vec<usize> {
        self.element_cells.iter().map(|&(r, c)| r * nz + c).collect()
    }
}

/// `max(sos) · dt / dx`.
pub fn courant_number(props: &PropertySet, grid: &SimulationGrid) -> f64 {
    props.sos().max() * grid.dt / grid.dx
}

/// Accepts Courant numbers up to and including 1.
pub fn check_cfl(props: &PropertySet, grid: &SimulationGrid) -> Result<()> {
    let courant = courant_number(props, grid);
    if courant <= 1.0 {
        Ok(())
    } else {
        Err(Error::CflViolation { courant })
    }
}

/// Gather the pressure at every element for every time step.
pub fn restrict(field: &Wavefield, geom: &ProbeGeometry) -> Result<ChannelData> {
    let grid = field.grid();
    geom.ensure_inside(grid.nx, grid.nz)?;
    let mut out = ChannelData::zeros(geom.len(), grid.nt, grid.dt);
    for (ch, &(row, col)) in geom.elements().iter().enumerate() {
        for n in 0..grid.nt {
            out.set(ch, n, field.get(row, col, n));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SimulationGrid {
        SimulationGrid::new(6, 7, 5, 1e-3, 1e-7).unwrap()
    }

    #[test]
    fn courant_number_direct_formula() {
        let g = SimulationGrid::new(4, 4, 4, 1.0, 0.5 / 1480.0).unwrap();
        let props = PropertySet::uniform(&g, 1480.0, 1000.0, 0.0, 0.0).unwrap();
        assert!((courant_number(&props, &g) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn courant_number_hand_value() {
        // 1480 * 3.3784e-7 / 5e-4 = 1.0000064
        let g = SimulationGrid::new(4, 4, 4, 5e-4, 3.3784e-7).unwrap();
        let props = PropertySet::uniform(&g, 1480.0, 1000.0, 0.0, 0.0).unwrap();
        assert!((courant_number(&props, &g) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn courant_number_cancels_for_matched_dt() {
        for c in [300.0, 1480.0, 1540.0, 4000.0] {
            let dx = 1e-4;
            let g = SimulationGrid::new(4, 4, 4, dx, dx / c).unwrap();
            let props = PropertySet::uniform(&g, c, 1000.0, 0.0, 0.0).unwrap();
            assert_eq!(courant_number(&props, &g), 1.0);
        }
    }

    #[test]
    fn cfl_boundary_cases() {
        let dx = 1e-3;
        let c = 1500.0;
        let at = |cr: f64| {
            let g = SimulationGrid::new(4, 4, 4, dx, cr * dx / c).unwrap();
            let props = PropertySet::uniform(&g, c, 1000.0, 0.0, 0.0).unwrap();
            check_cfl(&props, &g)
        };
        assert!(at(0.5).is_ok());
        let g = SimulationGrid::new(4, 4, 4, dx, dx / c).unwrap();
        let props = PropertySet::uniform(&g, c, 1000.0, 0.0, 0.0).unwrap();
        assert_eq!(courant_number(&props, &g), 1.0);
        assert!(check_cfl(&props, &g).is_ok());
        assert!(matches!(at(1.01), Err(Error::CflViolation { courant }) if courant > 1.0));
    }

    #[test]
    fn grid_rejects_degenerate_extents() {
        assert!(SimulationGrid::new(2, 5, 5, 1.0, 1.0).is_err());
        assert!(SimulationGrid::new(5, 5, 2, 1.0, 1.0).is_err());
        assert!(SimulationGrid::new(5, 5, 5, 0.0, 1.0).is_err());
        assert!(SimulationGrid::new(5, 5, 5, 1.0, -1.0).is_err());
    }

    #[test]
    fn property_set_rejects_invalid_entries() {
        let g = grid();
        let ok = PropertySet::uniform(&g, 1500.0, 1000.0, 0.0, 0.0).unwrap();
        let mut bad = ok.sos().clone();
        bad[(2, 3)] = 0.0;
        assert!(matches!(
            ok.clone().with(Property::Sos, bad),
            Err(Error::InvalidProperty { property: Property::Sos, .. })
        ));
        let mut bad = ok.density().clone();
        bad[(0, 0)] = f64::NAN;
        assert!(ok.clone().with(Property::Density, bad).is_err());
        let mut bad = ok.attenuation().clone();
        bad[(1, 1)] = -1.0;
        assert!(ok.clone().with(Property::Attenuation, bad).is_err());
        let small = Map2::zeros(3, 3);
        assert!(matches!(
            ok.with(Property::Nonlinearity, small),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn restrict_of_zero_field_is_zero() {
        let g = grid();
        let geom = ProbeGeometry::linear(0, 1, 3, 2).unwrap();
        let ch = restrict(&Wavefield::zeros(g), &geom).unwrap();
        assert!(ch.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn restrict_gathers_time_ramp() {
        let g = grid();
        let mut field = Wavefield::zeros(g);
        for n in 0..g.nt {
            field.set(2, 4, n, n as f64);
        }
        let geom = ProbeGeometry::from_cells(vec![(2, 4)], 1).unwrap();
        let ch = restrict(&field, &geom).unwrap();
        assert_eq!(ch.channel(0), &[0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn restrict_matches_naive_lookup() {
        let g = grid();
        let field = Wavefield::from_vec(g, (0..g.cells() * g.nt).map(|k| k as f64).collect()).unwrap();
        let cells = vec![(1, 2), (1, 5)];
        let geom = ProbeGeometry::from_cells(cells.clone(), 3).unwrap();
        let ch = restrict(&field, &geom).unwrap();
        for (c, &(r, col)) in cells.iter().enumerate() {
            for n in 0..g.nt {
                let naive = (n * g.nx * g.nz + r * g.nz + col) as f64;
                assert_eq!(ch.get(c, n), naive);
            }
        }
    }

    #[test]
    fn restrict_rejects_out_of_grid_elements() {
        let g = grid();
        let geom = ProbeGeometry::linear(0, 5, 2, 2).unwrap();
        assert!(matches!(
            restrict(&Wavefield::zeros(g), &geom),
            Err(Error::IndexOutOfGrid { row: 0, col: 7 })
        ));
    }

    #[test]
    fn probe_rejects_bad_layouts() {
        assert!(ProbeGeometry::from_cells(vec![(0, 1), (1, 2)], 1).is_err());
        assert!(ProbeGeometry::from_cells(vec![(0, 2), (0, 2)], 1).is_err());
        assert!(ProbeGeometry::from_cells(vec![], 1).is_err());
    }
}
