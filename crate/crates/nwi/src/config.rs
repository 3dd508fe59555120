//! Run configuration: one TOML document shared by every command.
//!
//! Every section has defaults, so an empty file is a valid small
//! two-inclusion experiment. [`RunConfig::validate`] checks the values
//! against the core preconditions and reports the offending key.

use std::fs;
use std::path::Path;

use nwi_core::acquisition::{snr_from_db, EmissionPlan, Waveform};
use nwi_core::forward::{PhysicsContext, PmlConfig};
use nwi_core::grid::courant_number;
use nwi_core::inversion::{
    InversionConfig, LossConfig, MultiPulseConfig, OptimizerConfig, OptimizerKind, StageSchedule, StopCriteria,
};
use nwi_core::phantom::{make_phantom, Inclusion, PhantomSpec, PropertyBounds, Shape, Tissue};
use nwi_core::{Property, PropertySet, ProbeGeometry, SimulationGrid};
use serde::{Deserialize, Serialize};

use crate::error::{NwiError, Result};

/// Speed used to turn a Courant number into a time step when `grid.dt` is
/// not given.
pub const DT_REFERENCE_SOS: f64 = 1650.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub pml: PmlSection,
    pub probe: ProbeSection,
    pub plan: PlanSection,
    pub noise: NoiseSection,
    pub loss: LossSection,
    pub optimizer: OptimizerSection,
    pub schedule: ScheduleSection,
    pub phantom: PhantomSection,
    pub bounds: BoundsSection,
    pub gradcheck: GradcheckSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub nz: usize,
    pub nt: usize,
    /// Cell size, m.
    pub dx: f64,
    /// Time step, s. When absent it is `courant · dx / 1650`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub courant: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            nx: 32,
            nz: 32,
            nt: 200,
            dx: 1e-4,
            dt: None,
            courant: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmlSection {
    pub width: usize,
    /// Peak damping, 1/s. When absent it is tuned from `round_trip_db`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_max: Option<f64>,
    pub round_trip_db: f64,
    pub reference_sos: f64,
}

impl Default for PmlSection {
    fn default() -> Self {
        Self {
            width: 6,
            d_max: None,
            round_trip_db: 30.0,
            reference_sos: 1480.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    /// Grid row of the array. Defaults to the inner edge of the PML.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    /// Column of the first element. Defaults to the PML width.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_col: Option<usize>,
    /// Element count. Defaults to filling the interior.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nc: Option<usize>,
    pub pitch_cells: usize,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            row: None,
            first_col: None,
            nc: None,
            pitch_cells: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub n_emissions: usize,
    pub aperture: usize,
    pub stride: usize,
    pub f0: f64,
    pub cycles: f64,
    pub amplitude: f64,
    /// Focal depth, m. Defaults to half the grid depth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub focus_depth: Option<f64>,
    pub assumed_sos: f64,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            n_emissions: 2,
            aperture: 12,
            stride: 8,
            f0: 1.5e6,
            cycles: 2.0,
            amplitude: 2e20,
            focus_depth: None,
            assumed_sos: EmissionPlan::WATER_SOS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SnrUnits {
    #[default]
    Linear,
    Db,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Signal-to-noise ratio; `inf` disables noise.
    pub snr: f64,
    pub units: SnrUnits,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            snr: f64::INFINITY,
            units: SnrUnits::Linear,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub lambda_sos: f64,
    pub lambda_density: f64,
    pub lambda_attenuation: f64,
    pub lambda_nonlinearity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    Gd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub kind: OptimizerName,
    /// Learning rates for sos, density, attenuation, nonlinearity.
    pub rates: [f64; 4],
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        Self {
            kind: OptimizerName::Adam,
            rates: d.rates,
            beta1: d.beta1,
            beta2: d.beta2,
            eps: d.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    /// Share of the iterations spent on speed of sound and density.
    pub k1_fraction: f64,
    pub mask_threshold: f64,
    pub inner_steps: usize,
    pub outer_iterations: usize,
    pub workers: usize,
    pub plateau_tol: f64,
    pub patience: usize,
    pub grad_tol: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let stop = StopCriteria::iterations(0);
        Self {
            k1_fraction: StageSchedule::DEFAULT_FRACTION,
            mask_threshold: StageSchedule::DEFAULT_THRESHOLD,
            inner_steps: MultiPulseConfig::DEFAULT_INNER_STEPS,
            outer_iterations: 4,
            workers: 2,
            plateau_tol: stop.plateau_tol,
            patience: stop.patience,
            grad_tol: stop.grad_tol,
        }
    }
}

/// A named material (`water`, `water-physical`, `fat`, `liver`) or
/// explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TissueSpec {
    Named(String),
    Values {
        sos: f64,
        density: f64,
        attenuation: f64,
        nonlinearity: f64,
    },
}

impl TissueSpec {
    pub fn resolve(&self, key: &str) -> Result<Tissue> {
        match self {
            TissueSpec::Named(name) => match name.as_str() {
                "water" => Ok(Tissue::WATER),
                "water-physical" => Ok(Tissue::WATER_PHYSICAL),
                "fat" => Ok(Tissue::FAT),
                "liver" => Ok(Tissue::LIVER),
                other => Err(NwiError::config(
                    key,
                    format!("unknown tissue `{other}` (expected water, water-physical, fat or liver)"),
                )),
            },
            &TissueSpec::Values {
                sos,
                density,
                attenuation,
                nonlinearity,
            } => {
                let ok = sos > 0.0
                    && density > 0.0
                    && attenuation >= 0.0
                    && nonlinearity >= 0.0
                    && [sos, density, attenuation, nonlinearity].iter().all(|v| v.is_finite());
                if !ok {
                    return Err(NwiError::config(key, "tissue values must be finite, sos and density positive"));
                }
                Ok(Tissue {
                    sos,
                    density,
                    attenuation,
                    nonlinearity,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeName {
    Ellipse,
    Rectangle,
}

/// One inclusion. `center` is `(depth, lateral)` in meters; `size` is the
/// pair of semi-axes for an ellipse and the full side lengths for a
/// rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionSection {
    pub shape: ShapeName,
    pub center: [f64; 2],
    pub size: [f64; 2],
    pub tissue: TissueSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSection {
    /// `water`, `water-physical`, `two-inclusion` or `none` for only the
    /// explicit inclusions over `background`.
    pub preset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub background: Option<TissueSpec>,
    pub inclusions: Vec<InclusionSection>,
    /// Uniform medium the inversion starts from.
    pub initial: TissueSpec,
}

impl Default for PhantomSection {
    fn default() -> Self {
        Self {
            preset: "two-inclusion".into(),
            background: None,
            inclusions: Vec::new(),
            initial: TissueSpec::Named("water".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub sos: [f64; 2],
    pub density: [f64; 2],
    pub attenuation: [f64; 2],
    pub nonlinearity: [f64; 2],
}

impl Default for BoundsSection {
    fn default() -> Self {
        let b = PropertyBounds::default();
        Self {
            sos: [b.sos.0, b.sos.1],
            density: [b.density.0, b.density.1],
            attenuation: [b.attenuation.0, b.attenuation.1],
            nonlinearity: [b.nonlinearity.0, b.nonlinearity.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub cells_per_property: usize,
    /// Each property's edge penalty is weighted to this share of the data
    /// term at the evaluation point.
    pub regularization_share: f64,
    pub tolerance: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            cells_per_property: 20,
            regularization_share: 0.025,
            tolerance: nwi_core::gradcheck::FdConfig::PASS_TOLERANCE,
        }
    }
}

fn core_err(key: &str) -> impl Fn(nwi_core::Error) -> NwiError + '_ {
    move |e| NwiError::config(key, e.to_string())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| NwiError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// Parse and validate; `origin` is only used in messages.
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| NwiError::ConfigSyntax {
            path: origin.to_path_buf(),
            source: Box::new(e),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|source| NwiError::Serialize { what: "config", source })
    }

    /// Replace every seed in the document.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.noise.seed = seed;
        self
    }

    /// Check every value against the preconditions of the code that will
    /// consume it, stopping at the first problem.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.pml()?;
        if self.pml.width > 0 && 2 * self.pml.width >= grid.nx.min(grid.nz) {
            return Err(NwiError::config(
                "pml.width",
                format!("{} cells on each side leaves no interior in {}x{}", self.pml.width, grid.nx, grid.nz),
            ));
        }
        let ctx = self.context()?;
        self.plan()?
            .validate(ctx.probe.len(), grid.dt)
            .map_err(|e| NwiError::config(plan_key(&e), e.to_string()))?;
        self.snr()?;
        self.loss().validate().map_err(core_err("loss"))?;
        self.optimizer().validate().map_err(core_err("optimizer"))?;
        let s = &self.schedule;
        if s.inner_steps == 0 {
            return Err(NwiError::config("schedule.inner_steps", "must be at least 1"));
        }
        if s.workers == 0 {
            return Err(NwiError::config("schedule.workers", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&s.k1_fraction) {
            return Err(NwiError::config("schedule.k1_fraction", "must lie in [0, 1]"));
        }
        if !(s.mask_threshold > 0.0) {
            return Err(NwiError::config("schedule.mask_threshold", "must be positive"));
        }
        if !(s.plateau_tol >= 0.0 && s.grad_tol >= 0.0) {
            return Err(NwiError::config("schedule.plateau_tol", "tolerances must be >= 0"));
        }
        self.initial_tissue()?;
        let truth = self.truth()?;
        check_courant(&truth, &grid, "grid.dt")?;
        for p in Property::ALL {
            let (lo, hi) = self.bounds().get(p);
            if !(hi > lo) {
                return Err(NwiError::config(
                    format!("bounds.{}", p.name()),
                    format!("max {hi} must exceed min {lo}"),
                ));
            }
        }
        let g = &self.gradcheck;
        if g.cells_per_property == 0 {
            return Err(NwiError::config("gradcheck.cells_per_property", "must be at least 1"));
        }
        if !(g.regularization_share >= 0.0 && g.tolerance > 0.0) {
            return Err(NwiError::config("gradcheck.tolerance", "must be positive"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.grid
            .dt
            .unwrap_or(self.grid.courant * self.grid.dx / DT_REFERENCE_SOS)
    }

    pub fn grid(&self) -> Result<SimulationGrid> {
        let g = &self.grid;
        if self.grid.dt.is_none() && !(g.courant > 0.0 && g.courant <= 1.0) {
            return Err(NwiError::config("grid.courant", "must lie in (0, 1]"));
        }
        SimulationGrid::new(g.nx, g.nz, g.nt, g.dx, self.dt()).map_err(|e| {
            let key = match e {
                nwi_core::Error::GridTooSmall { .. } => "grid.nx",
                _ => "grid",
            };
            NwiError::config(key, e.to_string())
        })
    }

    pub fn pml(&self) -> Result<PmlConfig> {
        let p = &self.pml;
        match p.d_max {
            Some(d) => PmlConfig::new(p.width, d).map_err(core_err("pml.d_max")),
            None => {
                if !(p.round_trip_db >= 0.0 && p.reference_sos > 0.0) {
                    return Err(NwiError::config("pml.round_trip_db", "must be >= 0 with a positive reference_sos"));
                }
                Ok(PmlConfig::tuned(p.width, self.grid.dx, p.reference_sos, p.round_trip_db))
            }
        }
    }

    pub fn probe(&self) -> Result<ProbeGeometry> {
        let w = self.pml.width;
        let p = &self.probe;
        let row = p.row.unwrap_or(w);
        let first = p.first_col.unwrap_or(w);
        let pitch = p.pitch_cells.max(1);
        let nc = match p.nc {
            Some(nc) => nc,
            None => {
                let span = self.grid.nz.saturating_sub(first + w);
                span.div_ceil(pitch)
            }
        };
        if p.pitch_cells == 0 {
            return Err(NwiError::config("probe.pitch_cells", "must be at least 1"));
        }
        let geom = ProbeGeometry::linear(row, first, nc, pitch).map_err(core_err("probe.nc"))?;
        geom.ensure_inside(self.grid.nx, self.grid.nz).map_err(core_err("probe"))?;
        Ok(geom)
    }

    pub fn context(&self) -> Result<PhysicsContext> {
        PhysicsContext::new(self.grid()?, self.pml()?, self.probe()?).map_err(core_err("pml.width"))
    }

    pub fn plan(&self) -> Result<EmissionPlan> {
        let p = &self.plan;
        let waveform = Waveform::new(p.f0, p.cycles, p.amplitude).map_err(core_err("plan.f0"))?;
        let focus_depth = p
            .focus_depth
            .unwrap_or(0.5 * self.grid.nx as f64 * self.grid.dx);
        Ok(EmissionPlan {
            n_emissions: p.n_emissions,
            aperture_elements: p.aperture,
            stride_elements: p.stride,
            waveform,
            focus_depth,
            assumed_sos: p.assumed_sos,
        })
    }

    /// Linear power ratio.
    pub fn snr(&self) -> Result<f64> {
        let n = &self.noise;
        let snr = match n.units {
            SnrUnits::Linear => n.snr,
            SnrUnits::Db => {
                if n.snr == f64::INFINITY {
                    f64::INFINITY
                } else {
                    snr_from_db(n.snr)
                }
            }
        };
        if !(snr > 0.0) || snr.is_nan() {
            return Err(NwiError::config("noise.snr", "must be positive or inf"));
        }
        Ok(snr)
    }

    pub fn loss(&self) -> LossConfig {
        let l = &self.loss;
        LossConfig {
            lambda_sos: l.lambda_sos,
            lambda_density: l.lambda_density,
            lambda_attenuation: l.lambda_attenuation,
            lambda_nonlinearity: l.lambda_nonlinearity,
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        let o = &self.optimizer;
        OptimizerConfig {
            kind: match o.kind {
                OptimizerName::Gd => OptimizerKind::Gd,
                OptimizerName::Adam => OptimizerKind::Adam,
            },
            rates: o.rates,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
            ..OptimizerConfig::default()
        }
    }

    /// Local iterations each worker takes over the whole run.
    pub fn total_iterations(&self) -> usize {
        self.schedule.inner_steps * self.schedule.outer_iterations
    }

    pub fn inversion(&self) -> Result<InversionConfig> {
        let s = &self.schedule;
        let total = self.total_iterations();
        let mut schedule = StageSchedule::from_fraction(total, s.k1_fraction).map_err(core_err("schedule.k1_fraction"))?;
        schedule.mask_threshold = s.mask_threshold;
        Ok(InversionConfig {
            loss: self.loss(),
            optimizer: self.optimizer(),
            schedule,
            stop: StopCriteria {
                max_iterations: total,
                plateau_tol: s.plateau_tol,
                patience: s.patience,
                grad_tol: s.grad_tol,
            },
        })
    }

    pub fn multi_pulse(&self) -> Result<MultiPulseConfig> {
        Ok(MultiPulseConfig {
            inversion: self.inversion()?,
            inner_steps: self.schedule.inner_steps,
            outer_iterations: self.schedule.outer_iterations,
        })
    }

    pub fn phantom_spec(&self) -> Result<PhantomSpec> {
        let extent = (self.grid.nx as f64 * self.grid.dx, self.grid.nz as f64 * self.grid.dx);
        let ph = &self.phantom;
        let mut spec = match ph.preset.as_str() {
            "none" => PhantomSpec::water(extent),
            name => PhantomSpec::preset(name, extent).ok_or_else(|| {
                NwiError::config(
                    "phantom.preset",
                    format!("unknown preset `{name}` (expected water, water-physical, two-inclusion or none)"),
                )
            })?,
        };
        if let Some(bg) = &ph.background {
            spec = spec.with_background(bg.resolve("phantom.background")?);
        }
        for (i, inc) in ph.inclusions.iter().enumerate() {
            let key = format!("phantom.inclusions[{i}]");
            let tissue = inc.tissue.resolve(&format!("{key}.tissue"))?;
            let [cx, cz] = inc.center;
            let [sx, sz] = inc.size;
            let shape = match inc.shape {
                ShapeName::Ellipse => Shape::Ellipse {
                    center: (cx, cz),
                    semi_axes: (sx, sz),
                },
                ShapeName::Rectangle => Shape::Rectangle {
                    corner: (cx - 0.5 * sx, cz - 0.5 * sz),
                    size: (sx, sz),
                },
            };
            spec.inclusions.push(Inclusion { shape, tissue });
        }
        Ok(spec)
    }

    /// The rasterized phantom.
    pub fn truth(&self) -> Result<PropertySet> {
        let grid = self.grid()?;
        make_phantom(&self.phantom_spec()?, &grid).map_err(core_err("phantom.inclusions"))
    }

    pub fn initial_tissue(&self) -> Result<Tissue> {
        self.phantom.initial.resolve("phantom.initial")
    }

    pub fn initial_props(&self) -> Result<PropertySet> {
        let t = self.initial_tissue()?;
        PropertySet::uniform(&self.grid()?, t.sos, t.density, t.attenuation, t.nonlinearity)
            .map_err(core_err("phantom.initial"))
    }

    pub fn bounds(&self) -> PropertyBounds {
        let b = &self.bounds;
        PropertyBounds {
            sos: (b.sos[0], b.sos[1]),
            density: (b.density[0], b.density[1]),
            attenuation: (b.attenuation[0], b.attenuation[1]),
            nonlinearity: (b.nonlinearity[0], b.nonlinearity[1]),
        }
    }
}

fn plan_key(e: &nwi_core::Error) -> &'static str {
    match e {
        nwi_core::Error::ApertureOutOfArray { .. } => "plan.aperture",
        nwi_core::Error::NyquistViolation { .. } => "plan.f0",
        nwi_core::Error::InvalidPlan(_) => "plan",
        _ => "plan",
    }
}

/// CFL check that names `key` and suggests the largest stable time step.
pub fn check_courant(props: &PropertySet, grid: &SimulationGrid, key: &str) -> Result<()> {
    let cr = courant_number(props, grid);
    if cr > 1.0 {
        let suggested = grid.dx / props.sos().max();
        return Err(NwiError::config(
            key,
            format!(
                "Courant number {cr:.4} exceeds 1 (max sos {} m/s); use dt <= {suggested:.4e} s",
                props.sos().max()
            ),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_toml(text, Path::new("test.toml"))
    }

    fn key_of(r: Result<RunConfig>) -> String {
        match r {
            Err(NwiError::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.noise.snr = 40.0;
        cfg.noise.units = SnrUnits::Db;
        cfg.phantom.inclusions.push(InclusionSection {
            shape: ShapeName::Rectangle,
            center: [1.5e-3, 1.5e-3],
            size: [4e-4, 4e-4],
            tissue: TissueSpec::Values {
                sos: 1600.0,
                density: 1050.0,
                attenuation: 1e4,
                nonlinearity: 5.0,
            },
        });
        let text = cfg.to_toml().unwrap();
        assert_eq!(parse(&text).unwrap(), cfg);
    }

    #[test]
    fn infinite_snr_round_trips() {
        let text = RunConfig::default().to_toml().unwrap();
        assert!(text.contains("snr = inf"));
        assert_eq!(parse(&text).unwrap().snr().unwrap(), f64::INFINITY);
    }

    #[test]
    fn snr_in_db() {
        let cfg = parse("[noise]\nsnr = 20.0\nunits = \"db\"").unwrap();
        assert!((cfg.snr().unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(parse("[schedule]\nworkers = 0")), "schedule.workers");
        assert_eq!(key_of(parse("[plan]\naperture = 40")), "plan.aperture");
        assert_eq!(key_of(parse("[grid]\ndt = 1e-7")), "grid.dt");
        assert_eq!(key_of(parse("[bounds]\nsos = [1600.0, 1500.0]")), "bounds.sos");
        assert_eq!(key_of(parse("[pml]\nwidth = 16")), "pml.width");
        assert_eq!(key_of(parse("[phantom]\npreset = \"kidney\"")), "phantom.preset");
        assert_eq!(key_of(parse("[phantom]\ninitial = \"bone\"")), "phantom.initial");
        assert_eq!(key_of(parse("[noise]\nsnr = -1.0")), "noise.snr");
        assert_eq!(key_of(parse("[optimizer]\nrates = [1.0, 0.0, 1.0, 1.0]")), "optimizer");
    }

    #[test]
    fn cfl_message_suggests_a_step() {
        let err = parse("[grid]\ndt = 1e-7").unwrap_err().to_string();
        assert!(err.contains("Courant number"), "{err}");
        assert!(err.contains("dt <="), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(parse("[grid]\nnxx = 3"), Err(NwiError::ConfigSyntax { .. })));
        assert!(matches!(parse("[mystery]"), Err(NwiError::ConfigSyntax { .. })));
    }

    #[test]
    fn derived_values() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.probe().unwrap().len(), 20);
        assert!((cfg.dt() - 0.5e-4 / 1650.0).abs() < 1e-20);
        assert_eq!(cfg.total_iterations(), 20);
        assert_eq!(cfg.inversion().unwrap().schedule.k1, 12);
        assert!((cfg.plan().unwrap().focus_depth - 1.6e-3).abs() < 1e-15);
    }
}
