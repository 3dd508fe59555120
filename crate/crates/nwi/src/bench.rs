//! Wall-clock scaling of the adjoint engine and the matrix-form baseline.
//!
//! Each point is the median of several timed repetitions on one thread. A
//! repetition loops the workload for at least 50 ms and reports seconds per
//! call. A series is summarized by the least-squares slope of `ln(time)`
//! against `ln(size)`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nwi_core::acquisition::{PulseField, Waveform};
use nwi_core::adjoint::{backprop, forward_with_tape};
use nwi_core::forward::{simulate_channels, PhysicsContext, PmlConfig};
use nwi_core::fwi::{FwiEngine, GradientMode};
use nwi_core::inversion::GradientEngine;
use nwi_core::scenario::{smooth_medium, stable_dt};
use nwi_core::{ChannelData, ProbeGeometry, PropertySet, SimulationGrid};
use serde::{Deserialize, Serialize};

use crate::error::{NwiError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Timed runs per point; the median is reported.
    pub repetitions: usize,
    /// Square grid sides for the adjoint cells series.
    pub adjoint_sides: Vec<usize>,
    pub adjoint_nt: usize,
    /// Step counts for the adjoint nt series.
    pub adjoint_nts: Vec<usize>,
    pub adjoint_side: usize,
    pub fwi_sides: Vec<usize>,
    pub fwi_nt: usize,
    pub fwi_nts: Vec<usize>,
    pub fwi_side: usize,
    /// Largest reverse-mode tape any point may need, bytes.
    pub memory_budget_bytes: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            repetitions: 3,
            adjoint_sides: vec![48, 68, 96, 136],
            adjoint_nt: 200,
            adjoint_nts: vec![125, 250, 500],
            adjoint_side: 64,
            fwi_sides: vec![16, 23, 32],
            fwi_nt: 40,
            fwi_nts: vec![30, 60, 120],
            fwi_side: 18,
            memory_budget_bytes: 1 << 30,
            seed: 7,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 3 {
            return Err(NwiError::config("bench.repetitions", "at least 3 runs per point"));
        }
        for (key, v) in [
            ("bench.adjoint_sides", &self.adjoint_sides),
            ("bench.adjoint_nts", &self.adjoint_nts),
            ("bench.fwi_sides", &self.fwi_sides),
            ("bench.fwi_nts", &self.fwi_nts),
        ] {
            if v.len() < 3 {
                return Err(NwiError::config(key, "a series needs at least 3 sizes"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Cells,
    Nt,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Cells => "cells",
            Axis::Nt => "nt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub nx: usize,
    pub nz: usize,
    pub nt: usize,
    /// Seconds per call for every timed repetition.
    pub runs: Vec<f64>,
}

impl Point {
    pub fn size(&self, axis: Axis) -> usize {
        match axis {
            Axis::Cells => self.nx * self.nz,
            Axis::Nt => self.nt,
        }
    }

    pub fn median(&self) -> f64 {
        median(&self.runs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub engine: &'static str,
    pub axis: Axis,
    pub points: Vec<Point>,
}

impl Series {
    /// Fitted exponent of time against size.
    pub fn slope(&self) -> f64 {
        let xs: Vec<f64> = self.points.iter().map(|p| (p.size(self.axis) as f64).ln()).collect();
        let ys: Vec<f64> = self.points.iter().map(|p| p.median().ln()).collect();
        log_log_slope(&xs, &ys)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineDescriptor {
    pub os: String,
    pub arch: String,
    pub threads_available: usize,
    pub build: String,
}

impl MachineDescriptor {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads_available: std::thread::available_parallelism().map_or(1, usize::from),
            build: if cfg!(debug_assertions) { "debug assertions on" } else { "release" }.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub machine: MachineDescriptor,
    pub config: BenchConfig,
    pub series: Vec<Series>,
}

/// Median; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

struct Case {
    ctx: PhysicsContext,
    props: PropertySet,
    pulse: PulseField,
    measured: ChannelData,
}

fn case(nx: usize, nz: usize, nt: usize, seed: u64) -> Result<Case> {
    let dx = 1e-4;
    let grid = SimulationGrid::new(nx, nz, nt, dx, stable_dt(dx, 1650.0, 0.5))?;
    let probe = ProbeGeometry::linear(1, 1, nz - 2, 1)?;
    let ctx = PhysicsContext::new(grid, PmlConfig::NONE, probe)?;
    let wave = Waveform::new(2.5e6, 2.0, 1e20)?;
    let trace = (0..nt).map(|n| wave.eval(n as f64 * grid.dt)).collect();
    let pulse = PulseField::from_traces(&grid, vec![(1, nz / 2, trace)])?;
    let truth = smooth_medium(nx, nz, seed)?;
    let props = smooth_medium(nx, nz, seed + 1)?;
    let measured = simulate_channels(&ctx, &truth, &pulse)?;
    Ok(Case {
        ctx,
        props,
        pulse,
        measured,
    })
}

/// Shortest span a single timed repetition should cover.
const MIN_SAMPLE_SECS: f64 = 0.05;

fn time_runs(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<Vec<f64>> {
    // untimed warm-up, also used to size the batch
    let t = Instant::now();
    f()?;
    let batch = (MIN_SAMPLE_SECS / t.elapsed().as_secs_f64().max(1e-9)).ceil().max(1.0) as usize;
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..batch {
                f()?;
            }
            Ok(t.elapsed().as_secs_f64() / batch as f64)
        })
        .collect()
}

/// Reverse-mode tape plus working storage for one gradient.
pub fn adjoint_bytes(nx: usize, nz: usize, nt: usize) -> usize {
    2 * nx * nz * nt * std::mem::size_of::<f64>()
}

fn adjoint_point(cfg: &BenchConfig, nx: usize, nz: usize, nt: usize) -> Result<Point> {
    let required = adjoint_bytes(nx, nz, nt);
    if required > cfg.memory_budget_bytes {
        return Err(NwiError::BudgetExceeded {
            required,
            budget: cfg.memory_budget_bytes,
        });
    }
    let c = case(nx, nz, nt, cfg.seed)?;
    let runs = time_runs(cfg.repetitions, || {
        let (predicted, tape) = forward_with_tape(&c.ctx, &c.props, &c.pulse)?;
        let residual = predicted.residual(&c.measured)?;
        std::hint::black_box(backprop(&tape, &residual)?);
        Ok(())
    })?;
    Ok(Point { nx, nz, nt, runs })
}

fn fwi_point(cfg: &BenchConfig, nx: usize, nz: usize, nt: usize) -> Result<Point> {
    let c = case(nx, nz, nt, cfg.seed)?;
    let engine = FwiEngine {
        mode: GradientMode::PerCellDense,
        ..FwiEngine::new(&c.ctx, &c.pulse, &c.measured)
    };
    let runs = time_runs(cfg.repetitions, || {
        std::hint::black_box(engine.data_loss_and_gradient(&c.props)?);
        Ok(())
    })?;
    Ok(Point { nx, nz, nt, runs })
}

pub fn bench_adjoint_cells(cfg: &BenchConfig) -> Result<Series> {
    let points = cfg
        .adjoint_sides
        .iter()
        .map(|&s| adjoint_point(cfg, s, s, cfg.adjoint_nt))
        .collect::<Result<_>>()?;
    Ok(Series {
        engine: "adjoint",
        axis: Axis::Cells,
        points,
    })
}

pub fn bench_adjoint_nt(cfg: &BenchConfig) -> Result<Series> {
    let s = cfg.adjoint_side;
    let points = cfg
        .adjoint_nts
        .iter()
        .map(|&nt| adjoint_point(cfg, s, s, nt))
        .collect::<Result<_>>()?;
    Ok(Series {
        engine: "adjoint",
        axis: Axis::Nt,
        points,
    })
}

pub fn bench_fwi_cells(cfg: &BenchConfig) -> Result<Series> {
    let points = cfg
        .fwi_sides
        .iter()
        .map(|&s| fwi_point(cfg, s, s, cfg.fwi_nt))
        .collect::<Result<_>>()?;
    Ok(Series {
        engine: "fwi",
        axis: Axis::Cells,
        points,
    })
}

pub fn bench_fwi_nt(cfg: &BenchConfig) -> Result<Series> {
    let s = cfg.fwi_side;
    let points = cfg
        .fwi_nts
        .iter()
        .map(|&nt| fwi_point(cfg, s, s, nt))
        .collect::<Result<_>>()?;
    Ok(Series {
        engine: "fwi",
        axis: Axis::Nt,
        points,
    })
}

/// All four series.
pub fn run(cfg: &BenchConfig) -> Result<ScalingReport> {
    cfg.validate()?;
    Ok(ScalingReport {
        machine: MachineDescriptor::current(),
        config: cfg.clone(),
        series: vec![
            bench_adjoint_cells(cfg)?,
            bench_adjoint_nt(cfg)?,
            bench_fwi_cells(cfg)?,
            bench_fwi_nt(cfg)?,
        ],
    })
}

impl ScalingReport {
    pub fn series(&self, engine: &str, axis: Axis) -> Option<&Series> {
        self.series.iter().find(|s| s.engine == engine && s.axis == axis)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("engine,axis,nx,nz,nt,size,median_seconds,runs\n");
        for s in &self.series {
            for p in &s.points {
                let runs: Vec<String> = p.runs.iter().map(|r| format!("{r:.6e}")).collect();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{:.6e},{}",
                    s.engine,
                    s.axis.name(),
                    p.nx,
                    p.nz,
                    p.nt,
                    p.size(s.axis),
                    p.median(),
                    runs.join(";")
                );
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let m = &self.machine;
        let _ = writeln!(
            out,
            "machine: {} {} ({} threads available, {}, measured on 1 thread)",
            m.os, m.arch, m.threads_available, m.build
        );
        for s in &self.series {
            let _ = writeln!(
                out,
                "{:>8} vs {:<5} slope {:.3}  ({} points, median of {} runs)",
                s.engine,
                s.axis.name(),
                s.slope(),
                s.points.len(),
                self.config.repetitions
            );
        }
        let cfg = toml::to_string(&self.config).unwrap_or_default();
        let _ = write!(out, "\n[bench]\n{cfg}");
        out
    }

    /// `scaling.csv` and `scaling.txt` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| NwiError::io(dir, e))?;
        let csv = dir.join("scaling.csv");
        let txt = dir.join("scaling.txt");
        fs::write(&csv, self.to_csv()).map_err(|e| NwiError::io(&csv, e))?;
        fs::write(&txt, self.summary()).map_err(|e| NwiError::io(&txt, e))?;
        Ok(vec![csv, txt])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn slope_of_exact_power_law() {
        let xs: Vec<f64> = [10.0f64, 20.0, 40.0, 80.0].iter().map(|x| x.ln()).collect();
        let ys: Vec<f64> = [10.0f64, 20.0, 40.0, 80.0].iter().map(|x| (3.0 * x * x).ln()).collect();
        assert!((log_log_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points_or_runs_rejected() {
        let mut c = BenchConfig::default();
        c.repetitions = 2;
        assert!(c.validate().is_err());
        let mut c = BenchConfig::default();
        c.fwi_nts = vec![10, 20];
        assert!(c.validate().is_err());
        assert!(BenchConfig::default().validate().is_ok());
    }

    #[test]
    fn budget_is_enforced() {
        let cfg = BenchConfig {
            memory_budget_bytes: 1000,
            ..BenchConfig::default()
        };
        assert!(matches!(
            adjoint_point(&cfg, 16, 16, 40),
            Err(NwiError::BudgetExceeded { required: 163840, budget: 1000 })
        ));
    }
}
