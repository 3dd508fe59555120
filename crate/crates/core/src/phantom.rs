//! Synthetic media built from simple shapes, and the range-normalized RMSE
//! used to score reconstructions.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Map2, Property, PropertySet, SimulationGrid};
use crate::math;

/// Values of the four properties for one material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tissue {
    pub sos: f64,
    pub density: f64,
    pub attenuation: f64,
    pub nonlinearity: f64,
}

impl Tissue {
    pub const WATER: Tissue = Tissue {
        sos: 1480.0,
        density: 1000.0,
        attenuation: 0.0,
        nonlinearity: 0.0,
    };
    /// Water with its physical nonlinearity.
    pub const WATER_PHYSICAL: Tissue = Tissue {
        nonlinearity: 3.5,
        ..Tissue::WATER
    };
    pub const FAT: Tissue = Tissue {
        sos: 1450.0,
        density: 950.0,
        attenuation: 2.5e4,
        nonlinearity: 6.0,
    };
    pub const LIVER: Tissue = Tissue {
        sos: 1570.0,
        density: 1060.0,
        attenuation: 3.5e4,
        nonlinearity: 4.4,
    };

    pub fn get(&self, p: Property) -> f64 {
        match p {
            Property::Sos => self.sos,
            Property::Density => self.density,
            Property::Attenuation => self.attenuation,
            Property::Nonlinearity => self.nonlinearity,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.sos > 0.0
            && self.density > 0.0
            && self.attenuation >= 0.0
            && self.nonlinearity >= 0.0
            && [self.sos, self.density, self.attenuation, self.nonlinearity]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidGeometry("tissue values out of physical range"))
        }
    }
}

/// Coordinates are `(x, z)` in meters: `x` runs down the rows, `z` along
/// the columns, both from the grid corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Ellipse { center: (f64, f64), semi_axes: (f64, f64) },
    Rectangle { corner: (f64, f64), size: (f64, f64) },
}

impl Shape {
    /// Boundary points count as inside.
    pub fn contains(&self, x: f64, z: f64) -> bool {
        match *self {
            Shape::Ellipse { center, semi_axes } => {
                let u = (x - center.0) / semi_axes.0;
                let v = (z - center.1) / semi_axes.1;
                u * u + v * v <= 1.0
            }
            Shape::Rectangle { corner, size } => {
                x >= corner.0 && x <= corner.0 + size.0 && z >= corner.1 && z <= corner.1 + size.1
            }
        }
    }

    fn bounding_box(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Ellipse { center, semi_axes } => (
                center.0 - semi_axes.0,
                center.0 + semi_axes.0,
                center.1 - semi_axes.1,
                center.1 + semi_axes.1,
            ),
            Shape::Rectangle { corner, size } => (corner.0, corner.0 + size.0, corner.1, corner.1 + size.1),
        }
    }

    fn validate(&self, extent: (f64, f64)) -> Result<()> {
        let positive = match *self {
            Shape::Ellipse { semi_axes, .. } => semi_axes.0 > 0.0 && semi_axes.1 > 0.0,
            Shape::Rectangle { size, .. } => size.0 > 0.0 && size.1 > 0.0,
        };
        if !positive {
            return Err(Error::InvalidGeometry("shape size must be positive"));
        }
        let (x0, x1, z0, z1) = self.bounding_box();
        if x0 < 0.0 || z0 < 0.0 || x1 > extent.0 || z1 > extent.1 {
            return Err(Error::InvalidGeometry("inclusion leaves the medium"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inclusion {
    pub shape: Shape,
    pub tissue: Tissue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    /// `(x, z)` size in meters.
    pub extent: (f64, f64),
    pub background: Tissue,
    pub inclusions: Vec<Inclusion>,
}

impl PhantomSpec {
    pub fn water(extent: (f64, f64)) -> Self {
        Self {
            extent,
            background: Tissue::WATER,
            inclusions: Vec::new(),
        }
    }

    pub fn water_physical(extent: (f64, f64)) -> Self {
        Self {
            background: Tissue::WATER_PHYSICAL,
            ..Self::water(extent)
        }
    }

    /// Water with a fat ellipse on the left and a liver ellipse on the
    /// right, both below mid-depth.
    pub fn two_inclusion(extent: (f64, f64)) -> Self {
        let (lx, lz) = extent;
        let r = (0.14 * lx, 0.14 * lz);
        Self {
            extent,
            background: Tissue::WATER,
            inclusions: vec![
                Inclusion {
                    shape: Shape::Ellipse {
                        center: (0.58 * lx, 0.3 * lz),
                        semi_axes: r,
                    },
                    tissue: Tissue::FAT,
                },
                Inclusion {
                    shape: Shape::Ellipse {
                        center: (0.58 * lx, 0.7 * lz),
                        semi_axes: r,
                    },
                    tissue: Tissue::LIVER,
                },
            ],
        }
    }

    pub fn preset(name: &str, extent: (f64, f64)) -> Option<Self> {
        match name {
            "water" => Some(Self::water(extent)),
            "water-physical" => Some(Self::water_physical(extent)),
            "two-inclusion" => Some(Self::two_inclusion(extent)),
            _ => None,
        }
    }

    pub fn with_background(mut self, background: Tissue) -> Self {
        self.background = background;
        self
    }

    /// Extent matching a grid.
    pub fn extent_of(grid: &SimulationGrid) -> (f64, f64) {
        (grid.nx as f64 * grid.dx, grid.nz as f64 * grid.dx)
    }
}

/// Rasterize at cell centers; later inclusions win.
pub fn make_phantom(spec: &PhantomSpec, grid: &SimulationGrid) -> Result<PropertySet> {
    let (ex, ez) = PhantomSpec::extent_of(grid);
    let close = |a: f64, b: f64| libm::fabs(a - b) <= 1e-9 * a.abs().max(b.abs());
    if !close(spec.extent.0, ex) || !close(spec.extent.1, ez) {
        return Err(Error::InvalidGeometry("extent does not match grid size times spacing"));
    }
    spec.background.validate()?;
    for inc in &spec.inclusions {
        inc.shape.validate(spec.extent)?;
        inc.tissue.validate()?;
    }
    let tissue_at = |i: usize, j: usize| {
        let x = (i as f64 + 0.5) * grid.dx;
        let z = (j as f64 + 0.5) * grid.dx;
        spec.inclusions
            .iter()
            .rev()
            .find(|inc| inc.shape.contains(x, z))
            .map_or(spec.background, |inc| inc.tissue)
    };
    let map = |p: Property| Map2::from_fn(grid.nx, grid.nz, |i, j| tissue_at(i, j).get(p));
    PropertySet::new(
        map(Property::Sos),
        map(Property::Density),
        map(Property::Attenuation),
        map(Property::Nonlinearity),
    )
}

/// Known value range of each property, for normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropertyBounds {
    pub sos: (f64, f64),
    pub density: (f64, f64),
    pub attenuation: (f64, f64),
    pub nonlinearity: (f64, f64),
}

impl Default for PropertyBounds {
    fn default() -> Self {
        Self {
            sos: (1400.0, 1650.0),
            density: (900.0, 1100.0),
            attenuation: (0.0, 1e5),
            nonlinearity: (0.0, 10.0),
        }
    }
}

impl PropertyBounds {
    pub fn get(&self, p: Property) -> (f64, f64) {
        match p {
            Property::Sos => self.sos,
            Property::Density => self.density,
            Property::Attenuation => self.attenuation,
            Property::Nonlinearity => self.nonlinearity,
        }
    }

    pub fn set(&mut self, p: Property, range: (f64, f64)) {
        match p {
            Property::Sos => self.sos = range,
            Property::Density => self.density = range,
            Property::Attenuation => self.attenuation = range,
            Property::Nonlinearity => self.nonlinearity = range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in Property::ALL {
            let (min, max) = self.get(p);
            if !(max > min) {
                return Err(Error::DegenerateBounds { min, max });
            }
        }
        Ok(())
    }
}

/// `√(‖est − truth‖² / cells) / (max − min)`
pub fn nrmse(est: &Map2, truth: &Map2, bounds: (f64, f64)) -> Result<f64> {
    let all = vec![true; est.as_slice().len()];
    nrmse_masked(est, truth, bounds, &all)
}

/// NRMSE over the cells where `mask` is true.
pub fn nrmse_masked(est: &Map2, truth: &Map2, bounds: (f64, f64), mask: &[bool]) -> Result<f64> {
    let (min, max) = bounds;
    if !(max > min) {
        return Err(Error::DegenerateBounds { min, max });
    }
    est.ensure_same_shape(truth)?;
    if mask.len() != est.as_slice().len() {
        return Err(Error::ShapeMismatch {
            what: "nrmse mask",
            expected: est.as_slice().len(),
            found: mask.len(),
        });
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((a, b), &keep) in est.as_slice().iter().zip(truth.as_slice()).zip(mask) {
        if keep {
            sum += (a - b) * (a - b);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidGeometry("nrmse mask selects no cells"));
    }
    Ok(math::sqrt(sum / count as f64) / (max - min))
}

/// True for cells outside a PML of `width` cells.
pub fn interior_mask(nx: usize, nz: usize, width: usize) -> Vec<bool> {
    let mut m = vec![false; nx * nz];
    for i in width..nx.saturating_sub(width) {
        for j in width..nz.saturating_sub(width) {
            m[i * nz + j] = true;
        }
    }
    m
}

/// NRMSE of all four properties. `exclude_pml` gives the layer width to
/// leave out; `None` scores every cell.
pub fn evaluate(
    est: &PropertySet,
    truth: &PropertySet,
    bounds: &PropertyBounds,
    exclude_pml: Option<usize>,
) -> Result<[f64; 4]> {
    bounds.validate()?;
    let (nx, nz) = truth.shape();
    let mask = interior_mask(nx, nz, exclude_pml.unwrap_or(0));
    let mut out = [0.0; 4];
    for p in Property::ALL {
        out[p.index()] = nrmse_masked(est.get(p), truth.get(p), bounds.get(p), &mask)?;
    }
    Ok(out)
}
