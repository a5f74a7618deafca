//! End-to-end commands over a run directory.
//!
//! Layout written into `out_dir`:
//! - `config.json`, the resolved configuration;
//! - `template_curve.csv`, `template.msh`, `template_mesh/`;
//! - `make-target`: `target_curve.csv`, `target_trajectory.csv`,
//!   `target_raster.bin` (+ `.json`), `template_raster.bin`, `true_momentum.csv`;
//! - `forward`: `trajectory.csv`, `areas.csv`, `final_curve.csv`, `final_mesh/`;
//! - `invert`: `diagnostics.csv`, `timing.csv`, `mean_curve_KKK.csv`,
//!   `ensemble_KKK.csv`, `ensemble_final.csv`, `mean_momentum.csv`,
//!   `reconstruction.csv`, `summary.json`;
//! - `report`: `report.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::eki::{self, EkiOutcome, IterationDiagnostics, StopReason};
use crate::error::{Error, Result};
use crate::forward::{hausdorff, ForwardConfig, ForwardModel, Scenario};
use crate::mesh::{
    generate_template_mesh, load_msh, polygon_area, read_curve_csv, write_curve_csv, write_mesh_snapshot, write_msh,
    CurveLoop, Mesh, CURVE_TAG,
};
use crate::momentum::{read_momentum_csv, synthetic_momentum, write_momentum_csv, MomentumField};
use crate::raster::{read_raster, write_raster};

pub const CONFIG_FILE: &str = "config.json";
pub const TARGET_RASTER: &str = "target_raster.bin";
pub const TRUE_MOMENTUM: &str = "true_momentum.csv";
pub const DIAGNOSTICS: &str = "diagnostics.csv";

fn prepare(cfg: &RunConfig) -> Result<&Path> {
    cfg.validate()?;
    let dir = cfg.out_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    cfg.save(dir.join(CONFIG_FILE))?;
    Ok(dir)
}

/// Template mesh and curve, generated or read from `mesh_file`.
pub fn load_template(cfg: &RunConfig) -> Result<(Mesh, CurveLoop)> {
    match &cfg.mesh_file {
        Some(path) => load_msh(path, CURVE_TAG),
        None => generate_template_mesh(&cfg.mesh),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub n_vertices: usize,
    pub n_cells: usize,
    pub n_facets: usize,
    pub curve_area: f64,
}

pub fn mesh_gen(cfg: &RunConfig) -> Result<MeshSummary> {
    let dir = prepare(cfg)?;
    let (mesh, curve) = load_template(cfg)?;
    write_msh(&mesh, &curve, dir.join("template.msh"))?;
    write_mesh_snapshot(&mesh, &curve, dir.join("template_mesh"))?;
    let polygon = curve.polygon(&mesh);
    write_curve_csv(&polygon, dir.join("template_curve.csv"))?;
    Ok(MeshSummary {
        n_vertices: mesh.n_vertices(),
        n_cells: mesh.n_cells(),
        n_facets: curve.len(),
        curve_area: polygon_area(&polygon),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub template_area: f64,
    pub target_area: f64,
    pub template_mass: f64,
    pub target_mass: f64,
}

/// Shoots the synthetic momentum with the target-generation parameters and
/// stores the target curve and its smoothed indicator.
pub fn make_target(cfg: &RunConfig) -> Result<TargetSummary> {
    let kind = cfg.scenario.ok_or_else(|| Error::Config("make-target needs `scenario`".into()))?;
    let dir = prepare(cfg)?;
    let (mesh, curve) = load_template(cfg)?;
    let p = synthetic_momentum(kind, &curve);
    let template = curve.polygon(&mesh);
    let scenario = Scenario::new(mesh, curve, cfg.target_forward.clone(), cfg.raster.clone(), cfg.smoother.clone())?;
    let traj = scenario.model.integrate(p.values())?;
    let target = traj.final_polygon().to_vec();
    let target_field = scenario.shape_field(&target)?;
    let template_field = scenario.shape_field(&template)?;
    write_curve_csv(&template, dir.join("template_curve.csv"))?;
    write_curve_csv(&target, dir.join("target_curve.csv"))?;
    traj.write_csv(dir.join("target_trajectory.csv"))?;
    write_raster(&target_field, Some(cfg.smoother.kappa), dir.join(TARGET_RASTER))?;
    write_raster(&template_field, Some(cfg.smoother.kappa), dir.join("template_raster.bin"))?;
    write_momentum_csv(&p, dir.join(TRUE_MOMENTUM))?;
    Ok(TargetSummary {
        template_area: polygon_area(&template),
        target_area: polygon_area(&target),
        template_mass: template_field.mass(),
        target_mass: target_field.mass(),
    })
}

/// Which forward parameters `forward` uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ForwardParams {
    #[default]
    Target,
    Inversion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardSummary {
    pub steps: usize,
    pub areas: Vec<f64>,
    pub energies: Vec<f64>,
}

/// Shoots one momentum (from `momentum_file`, else the scenario's) and
/// writes the whole trajectory.
pub fn forward(cfg: &RunConfig, params: ForwardParams) -> Result<ForwardSummary> {
    cfg.validate()?;
    let (mesh, curve) = load_template(cfg)?;
    let p = match (&cfg.momentum_file, cfg.scenario) {
        (Some(path), _) => read_momentum_csv(path)?,
        (None, Some(kind)) => synthetic_momentum(kind, &curve),
        (None, None) => return Err(Error::Config("forward needs `momentum_file` or `scenario`".into())),
    };
    p.check_len(&curve)?;
    let fcfg: ForwardConfig = match params {
        ForwardParams::Target => cfg.target_forward.clone(),
        ForwardParams::Inversion => cfg.inversion_forward.clone(),
    };
    let dir = prepare(cfg)?;
    let model = ForwardModel::new(mesh, curve, fcfg)?;
    let traj = model.integrate(p.values())?;
    traj.write_csv(dir.join("trajectory.csv"))?;
    write_curve_csv(traj.final_polygon(), dir.join("final_curve.csv"))?;
    let final_mesh = traj.meshes.last().expect("trajectory holds the initial mesh");
    write_mesh_snapshot(final_mesh, model.curve(), dir.join("final_mesh"))?;
    let areas = traj.areas();
    let path = dir.join("areas.csv");
    let mut text = String::from("step,area,energy\n");
    for (k, a) in areas.iter().enumerate() {
        let e = traj.energies.get(k).map_or(String::new(), |e| e.to_string());
        text += &format!("{k},{a},{e}\n");
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(ForwardSummary { steps: traj.polygons.len() - 1, areas, energies: traj.energies.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvertSummary {
    pub history: Vec<IterationDiagnostics>,
    pub stop: StopReason,
    pub target_area: Option<f64>,
    pub reconstruction_area: Option<f64>,
    /// Member failures and mean-curve failures, one line each.
    pub warnings: Vec<String>,
}

impl InvertSummary {
    pub fn last(&self) -> &IterationDiagnostics {
        self.history.last().expect("history has at least one row")
    }
}

/// Runs EKI against the stored target. Without a target directory and with
/// no target on disk yet, the target is generated first.
pub fn invert(cfg: &RunConfig) -> Result<InvertSummary> {
    cfg.validate()?;
    let target_dir = cfg.target_dir().to_path_buf();
    let target_path = target_dir.join(TARGET_RASTER);
    if !target_path.exists() {
        if cfg.target_dir.is_some() || cfg.scenario.is_none() {
            return Err(Error::Config(format!("no target raster at {}", target_path.display())));
        }
        make_target(cfg)?;
    }
    let dir = prepare(cfg)?;
    let target = read_raster(&target_path)?;
    if target.spec() != &cfg.raster {
        return Err(Error::Config(format!("target raster at {} does not match the configured raster", target_path.display())));
    }
    let (mesh, curve) = load_template(cfg)?;
    let truth_path = target_dir.join(TRUE_MOMENTUM);
    let truth = if truth_path.exists() { Some(read_momentum_csv(&truth_path)?) } else { None };
    if let Some(t) = &truth {
        t.check_len(&curve)?;
    }
    let target_curve_path = target_dir.join("target_curve.csv");
    let target_curve = if target_curve_path.exists() { Some(read_curve_csv(&target_curve_path)?) } else { None };
    write_curve_csv(&curve.polygon(&mesh), dir.join("template_curve.csv"))?;

    let lengths = curve.template_lengths().to_vec();
    let scenario = Scenario::new(mesh, curve, cfg.inversion_forward.clone(), cfg.raster.clone(), cfg.smoother.clone())?;
    let ecfg = cfg.eki_config();
    let initial = eki::init_ensemble(ecfg.ensemble_size, lengths.len(), &ecfg)?;

    let mut history = Vec::new();
    let mut warnings = Vec::new();
    let mut last_curve = None;
    let result = eki::run(initial, &scenario, &target, &lengths, truth.as_ref().map(|t| t.values()), &ecfg, |rec| {
        let k = rec.diagnostics.iteration;
        for (j, msg) in &rec.prediction.failures {
            warnings.push(format!("iteration {k}: member {j} failed: {msg}"));
        }
        rec.ensemble.write_csv(dir.join(format!("ensemble_{k:03}.csv")))?;
        match scenario.evaluate(&rec.prediction.mean_momentum) {
            Ok((poly, _)) => {
                write_curve_csv(&poly, dir.join(format!("mean_curve_{k:03}.csv")))?;
                last_curve = Some(poly);
            }
            Err(e) => {
                warnings.push(format!("iteration {k}: mean momentum failed in the forward model: {e}"));
                last_curve = None;
            }
        }
        history.push(rec.diagnostics.clone());
        eki::write_diagnostics_csv(&history, dir.join(DIAGNOSTICS))?;
        eki::write_timing_csv(&history, dir.join("timing.csv"))
    });
    let EkiOutcome { ensemble, mean_momentum, stop, .. } = result?;
    ensemble.write_csv(dir.join("ensemble_final.csv"))?;
    write_momentum_csv(&MomentumField::new(mean_momentum)?, dir.join("mean_momentum.csv"))?;
    if let Some(poly) = &last_curve {
        write_curve_csv(poly, dir.join("reconstruction.csv"))?;
    }
    let summary = InvertSummary {
        history,
        stop,
        target_area: target_curve.as_deref().map(polygon_area),
        reconstruction_area: last_curve.as_deref().map(polygon_area),
        warnings,
    };
    write_json(&summary, &dir.join("summary.json"))?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub run_dir: PathBuf,
    pub scenario: Option<String>,
    pub iterations: usize,
    pub final_misfit: Option<f64>,
    pub final_relative_error: Option<f64>,
    pub final_consensus: Option<f64>,
    pub template_area: Option<f64>,
    pub target_area: Option<f64>,
    pub reconstruction_area: Option<f64>,
    /// `|A_rec − A_target| / A_target`.
    pub area_error: Option<f64>,
    pub hausdorff_to_target: Option<f64>,
}

fn optional_curve(path: PathBuf) -> Result<Option<Vec<crate::mesh::Point>>> {
    if path.exists() {
        read_curve_csv(path).map(Some)
    } else {
        Ok(None)
    }
}

/// Summarises whatever a run directory contains into `report.json`.
pub fn report(dir: impl AsRef<Path>) -> Result<Report> {
    let dir = dir.as_ref();
    let cfg_path = dir.join(CONFIG_FILE);
    if !cfg_path.exists() {
        return Err(Error::Config(format!("{} is not a run directory (no {CONFIG_FILE})", dir.display())));
    }
    let cfg = RunConfig::load(&cfg_path)?;
    let template = optional_curve(dir.join("template_curve.csv"))?;
    let target = optional_curve(cfg.target_dir().join("target_curve.csv"))?
        .or(optional_curve(dir.join("target_curve.csv"))?);
    let recon = optional_curve(dir.join("reconstruction.csv"))?;
    let diag_path = dir.join(DIAGNOSTICS);
    let mut rows: Vec<(usize, f64, Option<f64>, f64)> = Vec::new();
    if diag_path.exists() {
        let mut r = csv::Reader::from_path(&diag_path).map_err(|e| crate::mesh::csv_error(&diag_path, e))?;
        let headers = r.headers().map_err(|e| crate::mesh::csv_error(&diag_path, e))?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (ci, ce, cr, cs) = (col("iteration"), col("E"), col("R"), col("S"));
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse { path: diag_path.clone(), message: format!("bad {what} value {s:?}") })
        };
        for rec in r.records() {
            let rec = rec.map_err(|e| crate::mesh::csv_error(&diag_path, e))?;
            let get = |c: Option<usize>| c.and_then(|c| rec.get(c)).filter(|s| !s.is_empty());
            let it = get(ci).map(|s| parse(s, "iteration")).transpose()?.unwrap_or(rows.len() as f64) as usize;
            let e = parse(get(ce).unwrap_or("nan"), "E")?;
            let rr = get(cr).map(|s| parse(s, "R")).transpose()?;
            let s = parse(get(cs).unwrap_or("nan"), "S")?;
            rows.push((it, e, rr, s));
        }
    }
    let last = rows.last();
    let target_area = target.as_deref().map(polygon_area);
    let reconstruction_area = recon.as_deref().map(polygon_area);
    let report = Report {
        run_dir: dir.to_path_buf(),
        scenario: cfg.scenario.map(|k| k.to_string()),
        iterations: rows.len().saturating_sub(1),
        final_misfit: last.map(|r| r.1),
        final_relative_error: last.and_then(|r| r.2),
        final_consensus: last.map(|r| r.3),
        template_area: template.as_deref().map(polygon_area),
        target_area,
        reconstruction_area,
        area_error: target_area.zip(reconstruction_area).map(|(t, r)| (r - t).abs() / t.abs()),
        hausdorff_to_target: target.as_deref().zip(recon.as_deref()).map(|(t, r)| hausdorff(t, r)),
    };
    write_json(&report, &dir.join("report.json"))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MeshGenConfig;
    use crate::momentum::SyntheticKind;
    use crate::raster::RasterSpec;

    fn small(dir: &Path) -> RunConfig {
        RunConfig {
            scenario: Some(SyntheticKind::Contract),
            mesh: MeshGenConfig { segments: 16, h: 2.0, ..Default::default() },
            raster: RasterSpec { nx: 32, ny: 32, ..Default::default() },
            target_forward: ForwardConfig { alpha: 0.5, steps: 4 },
            inversion_forward: ForwardConfig { alpha: 1.0, steps: 3 },
            eki: eki::EkiConfig { ensemble_size: 4, max_iter: 1, init_range: [-5.0, 5.0], ..Default::default() },
            out_dir: dir.to_path_buf(),
            ..Default::default()
        }
    }

    #[test]
    fn make_target_needs_a_scenario() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { scenario: None, ..small(dir.path()) };
        assert!(matches!(make_target(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn contract_target_shrinks_the_mass() {
        let dir = tempfile::tempdir().unwrap();
        let s = make_target(&small(dir.path())).unwrap();
        assert!(s.target_mass < s.template_mass);
        assert!(s.target_area < s.template_area);
        for f in ["config.json", "target_curve.csv", "target_raster.bin", "target_raster.bin.json", "true_momentum.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn forward_rejects_wrong_facet_count_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let momentum = dir.path().join("p.csv");
        write_momentum_csv(&MomentumField::zeros(5), &momentum).unwrap();
        let cfg = RunConfig { momentum_file: Some(momentum), ..small(&out) };
        assert!(matches!(forward(&cfg, ForwardParams::Target), Err(Error::ShapeMismatch { .. })));
        assert!(!out.exists());
    }

    #[test]
    fn zero_momentum_forward_keeps_the_template() {
        let dir = tempfile::tempdir().unwrap();
        let momentum = dir.path().join("p.csv");
        write_momentum_csv(&MomentumField::zeros(16), &momentum).unwrap();
        let cfg = RunConfig { momentum_file: Some(momentum), ..small(&dir.path().join("run")) };
        let s = forward(&cfg, ForwardParams::Target).unwrap();
        assert_eq!(s.steps, 4);
        assert!(s.areas.windows(2).all(|w| w[0] == w[1]));
        let (mesh, curve) = load_template(&cfg).unwrap();
        let fin = read_curve_csv(dir.path().join("run/final_curve.csv")).unwrap();
        assert_eq!(fin, curve.polygon(&mesh));
    }

    #[test]
    fn invert_writes_every_iteration_and_report_reads_it() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let s = invert(&cfg).unwrap();
        assert_eq!(s.history.len(), 2);
        let text = fs::read_to_string(dir.path().join(DIAGNOSTICS)).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("iteration,E,R,S\n"));
        for f in ["ensemble_000.csv", "ensemble_001.csv", "ensemble_final.csv", "timing.csv", "summary.json", "mean_momentum.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let r = report(dir.path()).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.final_misfit, Some(s.last().misfit));
        assert!(r.final_relative_error.is_some());
        assert!(dir.path().join("report.json").exists());
    }
}
