use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nwi::io::{read_channels_csv, read_property_set, write_property_set};
use nwi::manifest::Manifest;
use nwi_core::{Map2, Property, PropertySet};

const SMALL: &str = r#"
[grid]
nx = 16
nz = 16
nt = 60

[pml]
width = 3
round_trip_db = 15.0

[plan]
n_emissions = 1
aperture = 10
stride = 1
f0 = 2.5e6
amplitude = 1.5e20
focus_depth = 8e-4
assumed_sos = 1540.0

[schedule]
outer_iterations = 2
inner_steps = 2
workers = 1
"#;

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_nwi"))
            .current_dir(self.dir.path())
            .arg("--config")
            .arg("run.toml")
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "nwi {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn fails(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(!out.status.success(), "nwi {args:?} should fail");
        String::from_utf8(out.stderr).unwrap()
    }
}

fn with(extra: &str) -> String {
    // later tables win, so overrides are merged by section
    let mut doc: toml::Table = toml::from_str(SMALL).unwrap();
    let over: toml::Table = toml::from_str(extra).unwrap();
    for (k, v) in over {
        match (doc.get_mut(&k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => a.extend(b),
            (_, v) => {
                doc.insert(k, v);
            }
        }
    }
    toml::to_string(&doc).unwrap()
}

fn bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn water_phantom_is_four_constant_maps() {
    let sb = Sandbox::new(&with("[phantom]\npreset = \"water\""));
    sb.ok(&["--out", "ph", "phantom"]);
    let p = read_property_set(&sb.path("ph")).unwrap();
    for prop in Property::ALL {
        let m = p.get(prop);
        assert_eq!(m.min(), m.max(), "{prop}");
    }
    assert_eq!(p.sos().max(), 1480.0);
    assert!(sb.path("ph/manifest.toml").exists());
}

#[test]
fn two_inclusion_phantom_has_two_regions_and_reruns_identically() {
    let sb = Sandbox::new(SMALL);
    sb.ok(&["--out", "a", "phantom"]);
    sb.ok(&["--out", "b", "phantom"]);
    assert_eq!(bytes(&sb.path("a")), bytes(&sb.path("b")));
    let p = read_property_set(&sb.path("a")).unwrap();
    let mut values: Vec<u64> = p.sos().as_slice().iter().map(|v| v.to_bits()).collect();
    values.sort();
    values.dedup();
    assert_eq!(values.len(), 3, "water, fat and liver");
}

#[test]
fn zero_amplitude_records_zeros() {
    let sb = Sandbox::new(&with("[plan]\namplitude = 0.0"));
    sb.ok(&["--out", "d", "simulate"]);
    let ch = read_channels_csv(&sb.path("d/emission_000.csv"), 1.0).unwrap();
    assert_eq!(ch.channels(), 10);
    assert_eq!(ch.steps(), 60);
    assert!(ch.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn noiseless_simulation_is_byte_identical() {
    let sb = Sandbox::new(SMALL);
    sb.ok(&["--out", "a", "simulate"]);
    sb.ok(&["--out", "b", "simulate"]);
    assert_eq!(bytes(&sb.path("a")), bytes(&sb.path("b")));
}

#[test]
fn noisy_simulation_follows_the_seed() {
    let sb = Sandbox::new(&with("[noise]\nsnr = 30.0\nunits = \"db\""));
    sb.ok(&["--out", "a", "--seed", "5", "simulate"]);
    sb.ok(&["--out", "b", "--seed", "5", "simulate"]);
    sb.ok(&["--out", "c", "--seed", "6", "simulate"]);
    assert_eq!(bytes(&sb.path("a")), bytes(&sb.path("b")));
    let a = fs::read(sb.path("a/emission_000.csv")).unwrap();
    let c = fs::read(sb.path("c/emission_000.csv")).unwrap();
    assert_ne!(a, c);
    let m = Manifest::read(&sb.path("c")).unwrap();
    assert_eq!(m.config.noise.seed, 6);
    assert_eq!(m.emission_seeds.len(), 1);
}

#[test]
fn cfl_violation_reports_courant_number_and_a_step() {
    let sb = Sandbox::new(&with("[grid]\ndt = 1e-7"));
    let err = sb.fails(&["--out", "d", "simulate"]);
    assert!(err.contains("grid.dt"), "{err}");
    assert!(err.contains("Courant number 1.5"), "{err}");
    assert!(err.contains("dt <="), "{err}");
}

#[test]
fn simulating_given_maps_checks_their_courant_number() {
    let sb = Sandbox::new(SMALL);
    let g = nwi::config::RunConfig::from_toml(SMALL, Path::new("x")).unwrap().grid().unwrap();
    let fast = PropertySet::uniform(&g, 5000.0, 1000.0, 0.0, 0.0).unwrap();
    write_property_set(&sb.path("fast"), &fast).unwrap();
    let err = sb.fails(&["--out", "d", "simulate", "--maps", "fast"]);
    assert!(err.contains("Courant number"), "{err}");
}

#[test]
fn gradcheck_passes_on_a_small_problem() {
    let sb = Sandbox::new(SMALL);
    let out = sb.ok(&["gradcheck"]);
    assert_eq!(out.matches("PASS").count(), 4, "{out}");
}

#[test]
fn gradcheck_catches_a_corrupted_adjoint() {
    let sb = Sandbox::new(&with("[gradcheck]\ncells_per_property = 4"));
    let out = sb.run(&["gradcheck", "--corrupt-adjoint", "1e-3"]);
    assert!(!out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL"), "{stdout}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("gradient check failed"));
}

#[test]
fn gradcheck_with_a_silent_pulse_passes_on_zeros() {
    let sb = Sandbox::new(&with("[plan]\namplitude = 0.0\n[gradcheck]\ncells_per_property = 4"));
    let out = sb.ok(&["gradcheck"]);
    assert_eq!(out.matches("PASS").count(), 4, "{out}");
    assert_eq!(out.matches(" 0.000e0 ").count(), 4 * 3, "{out}");
}

#[test]
fn invert_with_no_rounds_returns_the_initial_maps() {
    let sb = Sandbox::new(&with("[schedule]\nouter_iterations = 0"));
    sb.ok(&["--out", "d", "simulate"]);
    sb.ok(&["--out", "r", "invert", "nwi", "--data", "d"]);
    let r = read_property_set(&sb.path("r")).unwrap();
    let cfg = nwi::config::RunConfig::from_toml(SMALL, Path::new("x")).unwrap();
    assert_eq!(r, cfg.initial_props().unwrap());
}

#[test]
fn nwi_inversion_lowers_the_data_loss() {
    let sb = Sandbox::new(&with("[schedule]\nouter_iterations = 3\ninner_steps = 3"));
    sb.ok(&["--out", "d", "simulate"]);
    sb.ok(&["--out", "r", "invert", "nwi", "--data", "d"]);
    let log = fs::read_to_string(sb.path("r/losses.csv")).unwrap();
    let data: Vec<f64> = log
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(data.len(), 9);
    assert!(data[8] < data[0], "{data:?}");
    // frozen from the first passing run
    assert!((data[8] / data[0] - 0.68212).abs() < 1e-4, "{data:?}");
    let m = Manifest::read(&sb.path("r")).unwrap();
    let inv = m.inversion.unwrap();
    assert_eq!(inv.engine, "nwi");
    assert_eq!(inv.round_losses.len(), 3);
    assert_eq!(inv.stop_reason, "max_iterations");
}

#[test]
fn fwi_inversion_leaves_nonlinearity_alone() {
    let sb = Sandbox::new(&with("[phantom]\ninitial = \"water-physical\"\n[schedule]\nk1_fraction = 0.25"));
    sb.ok(&["--out", "d", "simulate"]);
    sb.ok(&["--out", "r", "invert", "fwi", "--data", "d"]);
    let r = read_property_set(&sb.path("r")).unwrap();
    assert!(r.nonlinearity().as_slice().iter().all(|&v| v == 3.5));
    assert!(r.sos().as_slice().iter().any(|&v| v != 1480.0));
}

#[test]
fn fwi_refuses_oversized_grids() {
    let sb = Sandbox::new(&with("[grid]\nnx = 64\nnz = 64\nnt = 200"));
    sb.ok(&["--out", "d", "simulate"]);
    let err = sb.fails(&["--out", "r", "invert", "fwi", "--data", "d"]);
    assert!(err.contains("cap is"), "{err}");
}

#[test]
fn invert_without_a_manifest_names_the_directory() {
    let sb = Sandbox::new(SMALL);
    fs::create_dir(sb.path("empty")).unwrap();
    let err = sb.fails(&["--out", "r", "invert", "nwi", "--data", "empty"]);
    assert!(err.contains("manifest.toml"), "{err}");
}

#[test]
fn eval_of_identical_directories_is_zero() {
    let sb = Sandbox::new(SMALL);
    sb.ok(&["--out", "ph", "phantom"]);
    let out = sb.ok(&["eval", "--est", "ph", "--truth", "ph"]);
    assert_eq!(out.matches("0.000000").count(), 4, "{out}");
}

#[test]
fn eval_matches_the_hand_example() {
    let sb = Sandbox::new(SMALL);
    let pair = |b: [f64; 2]| {
        PropertySet::new(
            Map2::filled(1, 2, 1500.0),
            Map2::filled(1, 2, 1000.0),
            Map2::zeros(1, 2),
            Map2::from_vec(1, 2, b.to_vec()).unwrap(),
        )
        .unwrap()
    };
    // errors (3, 4) against the default nonlinearity range (0, 10)
    write_property_set(&sb.path("t"), &pair([1.0, 2.0])).unwrap();
    write_property_set(&sb.path("e"), &pair([4.0, 6.0])).unwrap();
    let out = sb.ok(&["eval", "--est", "e", "--truth", "t", "--include-pml"]);
    let line = out.lines().find(|l| l.starts_with("nonlinearity")).unwrap();
    let v: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((v - 0.353553).abs() < 1e-6, "{out}");
}

#[test]
fn eval_excludes_the_pml_unless_asked() {
    let sb = Sandbox::new(SMALL);
    let cfg = nwi::config::RunConfig::from_toml(SMALL, Path::new("x")).unwrap();
    let g = cfg.grid().unwrap();
    let truth = PropertySet::uniform(&g, 1500.0, 1000.0, 0.0, 0.0).unwrap();
    // differs only on the outer ring
    let est = truth
        .clone()
        .with(Property::Sos, Map2::from_fn(16, 16, |i, j| if i == 0 || j == 0 || i == 15 || j == 15 { 1600.0 } else { 1500.0 }))
        .unwrap();
    write_property_set(&sb.path("t"), &truth).unwrap();
    write_property_set(&sb.path("e"), &est).unwrap();
    let inner = sb.ok(&["eval", "--est", "e", "--truth", "t"]);
    let all = sb.ok(&["eval", "--est", "e", "--truth", "t", "--include-pml"]);
    assert!(inner.lines().nth(1).unwrap().ends_with("0.000000"), "{inner}");
    assert!(!all.lines().nth(1).unwrap().ends_with("0.000000"), "{all}");
}

#[test]
fn eval_names_a_missing_map() {
    let sb = Sandbox::new(SMALL);
    sb.ok(&["--out", "ph", "phantom"]);
    sb.ok(&["--out", "e", "phantom"]);
    fs::remove_file(sb.path("e/nonlinearity.nwimap")).unwrap();
    let err = sb.fails(&["eval", "--est", "e", "--truth", "ph"]);
    assert!(err.contains("missing nonlinearity map"), "{err}");
}

#[test]
fn export_writes_images_and_csv() {
    let sb = Sandbox::new(&with("[phantom]\npreset = \"water\""));
    sb.ok(&["--out", "ph", "phantom"]);
    sb.ok(&["--out", "img", "export", "--maps", "ph"]);
    let pgm = fs::read(sb.path("img/sos.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n16 16\n65535\n"));
    assert_eq!(pgm.len(), b"P5\n16 16\n65535\n".len() + 2 * 256);
    sb.ok(&["--out", "txt", "export", "--maps", "ph", "--format", "csv"]);
    let csv = fs::read_to_string(sb.path("txt/density.csv")).unwrap();
    assert_eq!(csv.lines().count(), 16);
}

#[test]
fn quiet_prints_nothing() {
    let sb = Sandbox::new(SMALL);
    assert_eq!(sb.ok(&["--quiet", "--out", "ph", "phantom"]), "");
}

#[test]
fn bad_config_names_the_key() {
    let sb = Sandbox::new(&with("[schedule]\nworkers = 0"));
    let err = sb.fails(&["phantom"]);
    assert!(err.contains("schedule.workers"), "{err}");
}
