//! The work behind each command-line verb. Everything here returns data;
//! printing is left to the binary.

use std::fs;
use std::path::{Path, PathBuf};

use nwi_core::acquisition::{acquire_sequence, synthesize_focused, PulseField};
use nwi_core::adjoint::loss_and_gradient;
use nwi_core::forward::simulate_channels;
use nwi_core::fwi::{FwiEngine, GradientMode, LinearWaveOperator};
use nwi_core::gradcheck::{finite_difference_check, FdConfig, PropertyCheck};
use nwi_core::inversion::{multi_pulse_invert, total_loss, MultiPulseOutcome, NwiEngine, StopReason};
use nwi_core::phantom::{evaluate, PropertyBounds};
use nwi_core::scenario::{balanced_loss, smooth_medium};
use nwi_core::{ChannelData, Property, PropertySet};
use serde::Serialize;

use crate::config::{check_courant, RunConfig};
use crate::error::{NwiError, Result};
use crate::io::{self, MapFormat};
use crate::manifest::{InversionSummary, Manifest};
use crate::parallel::Threaded;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| NwiError::io(dir, e))
}

/// Channel file name for emission `l`.
pub fn emission_file(l: usize) -> String {
    format!("emission_{l:03}.csv")
}

/// Rasterize the configured phantom into `out`.
pub fn phantom(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let props = cfg.truth()?;
    let files = io::write_property_set(out, &props)?;
    Manifest::new("phantom", cfg).with_files(out, &files).write(out)?;
    Ok(files)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateReport {
    pub files: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    /// Largest |pressure| recorded per emission.
    pub peaks: Vec<f64>,
}

/// Record every emission of the plan through the maps in `props_dir`, or
/// through the configured phantom when no directory is given.
pub fn simulate(cfg: &RunConfig, props_dir: Option<&Path>, out: &Path) -> Result<SimulateReport> {
    let ctx = cfg.context()?;
    let props = match props_dir {
        Some(dir) => io::read_property_set(dir)?,
        None => cfg.truth()?,
    };
    props.ensure_grid(&ctx.grid)?;
    check_courant(&props, &ctx.grid, "grid.dt")?;
    let emissions = acquire_sequence(&ctx, &props, &cfg.plan()?, cfg.snr()?, cfg.noise.seed)?;
    create_dir(out)?;
    let mut files = Vec::with_capacity(emissions.len());
    for e in &emissions {
        let path = out.join(emission_file(e.index));
        io::write_channels_csv(&path, &e.measured)?;
        files.push(path);
    }
    let seeds: Vec<u64> = emissions.iter().map(|e| e.seed).collect();
    Manifest::new("simulate", cfg)
        .with_seeds(seeds.iter().copied())
        .with_files(out, &files)
        .write(out)?;
    Ok(SimulateReport {
        files,
        seeds,
        peaks: emissions.iter().map(|e| e.measured.as_slice().iter().fold(0.0, |m, v| v.abs().max(m))).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub property: Property,
    pub max_relative_error: f64,
    pub mean_relative_error: f64,
    pub max_abs_gradient: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub rows: Vec<GradcheckRow>,
    pub tolerance: f64,
    pub loss: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<13} {:>12} {:>12} {:>12}  result (tolerance {:.0e})\n",
            "property", "max rel err", "mean rel err", "max |grad|", self.tolerance
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<13} {:>12.3e} {:>12.3e} {:>12.3e}  {}\n",
                r.property.name(),
                r.max_relative_error,
                r.mean_relative_error,
                r.max_abs_gradient,
                if r.passed { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Test hook: a perturbation applied to the analytic gradients before they
/// are compared.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AdjointTamper {
    #[default]
    None,
    /// Multiply every gradient by `1 + factor`.
    Scale(f64),
}

/// Compare the adjoint gradient of the regularized objective with central
/// finite differences. Data come from the configured phantom and the first
/// emission; the gradient is taken at a smooth random medium.
pub fn gradcheck(cfg: &RunConfig, tamper: AdjointTamper) -> Result<GradcheckReport> {
    let ctx = cfg.context()?;
    let grid = ctx.grid;
    let pulse = synthesize_focused(&cfg.plan()?, &ctx.probe, &grid, 0)?;
    let measured = simulate_channels(&ctx, &cfg.truth()?, &pulse)?;
    let props = smooth_medium(grid.nx, grid.nz, cfg.noise.seed)?;
    check_courant(&props, &grid, "grid.dt")?;
    let data = simulate_channels(&ctx, &props, &pulse)?.residual(&measured)?.frobenius_norm();
    let loss_cfg = balanced_loss(&props, data, cfg.gradcheck.regularization_share)?;
    let (loss, mut grads) = loss_and_gradient(&ctx, &props, &pulse, &measured, &loss_cfg)?;
    if let AdjointTamper::Scale(f) = tamper {
        grads.scale(1.0 + f);
    }
    let fd = FdConfig {
        cells_per_property: cfg.gradcheck.cells_per_property,
        seed: cfg.noise.seed,
        ..FdConfig::default()
    };
    let checks = finite_difference_check(
        |p: &PropertySet| total_loss(&ctx, p, &measured, &pulse, &loss_cfg),
        &props,
        &grads,
        &fd,
    )?;
    let tolerance = cfg.gradcheck.tolerance;
    let rows = checks
        .iter()
        .map(|c: &PropertyCheck| GradcheckRow {
            property: c.property,
            max_relative_error: c.max_relative_error(),
            mean_relative_error: c.mean_relative_error(),
            max_abs_gradient: grads.get(c.property).max_abs(),
            passed: c.passes(tolerance),
        })
        .collect();
    Ok(GradcheckReport { rows, tolerance, loss })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Nwi,
    Fwi,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Nwi => "nwi",
            Engine::Fwi => "fwi",
        }
    }
}

/// One row of the per-iteration loss log.
#[derive(Debug, Clone, Serialize)]
struct LossRow {
    worker: usize,
    iteration: usize,
    phase: &'static str,
    loss: f64,
    data_loss: f64,
    grad_inf: f64,
    clamped: usize,
}

#[derive(Debug, Clone)]
pub struct InvertReport {
    pub outcome: MultiPulseOutcome,
    pub files: Vec<PathBuf>,
    /// Physics from the dataset, optimization settings from the run.
    pub config: RunConfig,
}

/// The dataset's acquisition settings combined with this run's inversion
/// settings.
pub fn merge_dataset(run: &RunConfig, dataset: &RunConfig) -> RunConfig {
    RunConfig {
        grid: dataset.grid.clone(),
        pml: dataset.pml.clone(),
        probe: dataset.probe.clone(),
        plan: dataset.plan.clone(),
        noise: dataset.noise.clone(),
        phantom: crate::config::PhantomSection {
            initial: run.phantom.initial.clone(),
            ..dataset.phantom.clone()
        },
        ..run.clone()
    }
}

fn read_dataset(cfg: &RunConfig, data_dir: &Path) -> Result<Vec<(PulseField, ChannelData)>> {
    let ctx = cfg.context()?;
    let plan = cfg.plan()?;
    (0..plan.n_emissions)
        .map(|l| {
            let path = data_dir.join(emission_file(l));
            if !path.exists() {
                return Err(NwiError::format(&path, "emission file listed by the plan is missing"));
            }
            let measured = io::read_channels_csv(&path, ctx.grid.dt)?;
            if measured.channels() != ctx.probe.len() || measured.steps() != ctx.grid.nt {
                return Err(NwiError::format(
                    &path,
                    format!(
                        "{} channels x {} samples, expected {} x {}",
                        measured.channels(),
                        measured.steps(),
                        ctx.probe.len(),
                        ctx.grid.nt
                    ),
                ));
            }
            Ok((synthesize_focused(&plan, &ctx.probe, &ctx.grid, l)?, measured))
        })
        .collect()
}

/// Reconstruct from the channel data in `data_dir`.
pub fn invert(run: &RunConfig, data_dir: &Path, out: &Path, engine: Engine) -> Result<InvertReport> {
    let dataset = Manifest::read(data_dir)?;
    let cfg = merge_dataset(run, &dataset.config);
    cfg.validate()?;
    let ctx = cfg.context()?;
    let data = read_dataset(&cfg, data_dir)?;
    let init = cfg.initial_props()?;
    let mp = cfg.multi_pulse()?;
    let dispatch = Threaded::new(cfg.schedule.workers);
    let outcome = match engine {
        Engine::Nwi => {
            let engines = data
                .iter()
                .map(|(pulse, measured)| NwiEngine {
                    ctx: &ctx,
                    pulse,
                    measured,
                })
                .collect();
            multi_pulse_invert(engines, &init, &mp, &dispatch)?
        }
        Engine::Fwi => {
            let cap = LinearWaveOperator::DEFAULT_CAP;
            let unknowns = ctx.grid.cells() * ctx.grid.nt;
            if unknowns > cap {
                return Err(nwi_core::Error::ProblemTooLarge { unknowns, cap }.into());
            }
            let engines = data
                .iter()
                .map(|(pulse, measured)| FwiEngine {
                    mode: GradientMode::RowLocal,
                    ..FwiEngine::new(&ctx, pulse, measured)
                })
                .collect();
            multi_pulse_invert(engines, &init, &mp, &dispatch)?
        }
    };

    let mut files = io::write_property_set(out, &outcome.props)?;
    let log = out.join("losses.csv");
    let mut w = csv::Writer::from_path(&log).map_err(|source| NwiError::Csv {
        path: log.clone(),
        source,
    })?;
    for (worker, history) in outcome.worker_histories.iter().enumerate() {
        for r in history {
            w.serialize(LossRow {
                worker,
                iteration: r.iteration,
                phase: match r.phase {
                    nwi_core::inversion::Phase::SosDensity => "sos_density",
                    nwi_core::inversion::Phase::AttenuationNonlinearity => "attenuation_nonlinearity",
                },
                loss: r.loss,
                data_loss: r.data_loss,
                grad_inf: r.grad_inf,
                clamped: r.clamps.total(),
            })
            .map_err(|source| NwiError::Csv {
                path: log.clone(),
                source,
            })?;
        }
    }
    w.flush().map_err(|e| NwiError::io(&log, e))?;
    files.push(log);

    let stop = outcome
        .stop_reasons
        .iter()
        .copied()
        .find(|r| *r != StopReason::MaxIterations)
        .unwrap_or(StopReason::MaxIterations);
    let final_loss = outcome
        .worker_histories
        .iter()
        .filter_map(|h| h.last().map(|r| r.loss))
        .sum::<f64>()
        / outcome.worker_histories.len().max(1) as f64;
    let mut manifest = Manifest::new(&format!("invert {}", engine.name()), &cfg)
        .with_seeds(dataset.emission_seeds.iter().filter_map(|s| u64::from_str_radix(s.trim_start_matches("0x"), 16).ok()))
        .with_files(out, &files);
    manifest.inversion = Some(InversionSummary::new(
        engine.name(),
        cfg.schedule.workers,
        stop,
        &outcome.worker_histories,
        outcome.round_losses.clone(),
        final_loss,
    ));
    manifest.write(out)?;
    Ok(InvertReport {
        outcome,
        files,
        config: cfg,
    })
}

/// NRMSE of every property. With `pml_width` set the layer is left out.
pub fn eval(est_dir: &Path, truth_dir: &Path, bounds: &PropertyBounds, pml_width: Option<usize>) -> Result<[f64; 4]> {
    let est = io::read_property_set(est_dir)?;
    let truth = io::read_property_set(truth_dir)?;
    Ok(evaluate(&est, &truth, bounds, pml_width)?)
}

pub fn eval_table(scores: &[f64; 4]) -> String {
    let mut out = format!("{:<13} {:>10}\n", "property", "nrmse");
    for p in Property::ALL {
        out.push_str(&format!("{:<13} {:>10.6}\n", p.name(), scores[p.index()]));
    }
    out
}

/// Write every map in `maps_dir` to `out` in `format`, scaled by the
/// configured bounds for images.
pub fn export(cfg: &RunConfig, maps_dir: &Path, out: &Path, format: MapFormat) -> Result<Vec<PathBuf>> {
    let props = io::read_property_set(maps_dir)?;
    create_dir(out)?;
    let bounds = cfg.bounds();
    Property::ALL
        .iter()
        .map(|&p| {
            let path = out.join(format!("{}.{}", p.name(), format.extension()));
            io::export_map(&path, props.get(p), p, bounds.get(p), format)?;
            Ok(path)
        })
        .collect()
}
