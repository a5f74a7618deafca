//! Ensemble Kalman inversion for the initial momentum.
//!
//! The analysis step works in ensemble space: with anomalies `A` (fields)
//! and `B` (momenta), `Cov_PQ (Cov_QQ + ξI)^{-1} r` is computed through the
//! push-through identity as `B (ξI + G)^{-1} A^T W r / (N − 1)` where
//! `G = A^T W A / (N − 1)` is the N×N weighted Gram matrix.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::Scenario;
use crate::mesh::{csv_error, Point};
use crate::raster::{l2_inner, RasterField};

/// Largest condition number accepted for `ξI + G`.
pub const MAX_GRAM_CONDITION: f64 = 1e14;

/// Momentum to (final curve, smoothed shape field).
pub trait ForwardMap: Sync {
    fn evaluate(&self, momentum: &[f64]) -> Result<(Vec<Point>, RasterField)>;
}

impl ForwardMap for Scenario {
    fn evaluate(&self, momentum: &[f64]) -> Result<(Vec<Point>, RasterField)> {
        Scenario::evaluate(self, momentum)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EkiConfig {
    pub ensemble_size: usize,
    /// Regularisation added to the field covariance.
    pub xi: f64,
    pub max_iter: usize,
    /// Stop once the data misfit drops below this.
    pub misfit_tol: Option<f64>,
    /// Stop once the consensus deviation drops below this.
    pub consensus_tol: Option<f64>,
    pub seed: u64,
    pub init_range: [f64; 2],
}

impl Default for EkiConfig {
    fn default() -> Self {
        EkiConfig {
            ensemble_size: 20,
            xi: 1e-3,
            max_iter: 5,
            misfit_tol: None,
            consensus_tol: None,
            seed: 0,
            init_range: [-25.0, 25.0],
        }
    }
}

impl EkiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size < 2 {
            return Err(Error::Config(format!("ensemble size {} < 2", self.ensemble_size)));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::Config(format!("xi = {} must be positive and finite", self.xi)));
        }
        let [lo, hi] = self.init_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!("init range [{lo}, {hi}] is not a finite interval")));
        }
        for (name, tol) in [("misfit_tol", self.misfit_tol), ("consensus_tol", self.consensus_tol)] {
            if let Some(t) = tol {
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(Error::Config(format!("{name} = {t} must be finite and non-negative")));
                }
            }
        }
        Ok(())
    }
}

/// Ensemble of momenta with per-member validity from the last prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    members: Vec<Vec<f64>>,
    valid: Vec<bool>,
    seed: u64,
}

impl Ensemble {
    pub fn new(members: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::Config(format!("ensemble size {} < 2", members.len())));
        }
        let n = members[0].len();
        if let Some(m) = members.iter().find(|m| m.len() != n) {
            return Err(Error::ShapeMismatch { expected: n, found: m.len() });
        }
        if members.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("ensemble contains non-finite momenta".into()));
        }
        let valid = vec![true; members.len()];
        Ok(Ensemble { members, valid, seed })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn n_facets(&self) -> usize {
        self.members[0].len()
    }

    pub fn members(&self) -> &[Vec<f64>] {
        &self.members
    }

    pub fn member(&self, j: usize) -> &[f64] {
        &self.members[j]
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Members in the order `order[0], order[1], ...`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Ensemble {
            members: order.iter().map(|&j| self.members[j].clone()).collect(),
            valid: order.iter().map(|&j| self.valid[j]).collect(),
            seed: self.seed,
        }
    }

    /// Arithmetic mean over the valid members, in member order.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.n_facets()];
        let mut count = 0.0;
        for (m, _) in self.members.iter().zip(&self.valid).filter(|(_, &v)| v) {
            for (a, b) in mean.iter_mut().zip(m) {
                *a += b;
            }
            count += 1.0;
        }
        mean.iter_mut().for_each(|a| *a /= count);
        mean
    }

    /// Writes `member,facet,value` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let write = |w: &mut csv::Writer<_>| -> csv::Result<()> {
            w.write_record(["member", "facet", "value"])?;
            for (j, m) in self.members.iter().enumerate() {
                for (f, v) in m.iter().enumerate() {
                    w.write_record([j.to_string(), f.to_string(), v.to_string()])?;
                }
            }
            w.flush()?;
            Ok(())
        };
        write(&mut w).map_err(|e| csv_error(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>, seed: u64) -> Result<Self> {
        let path = path.as_ref();
        let parse = |message: String| Error::Parse { path: path.to_path_buf(), message };
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut members: Vec<Vec<f64>> = Vec::new();
        for (line, rec) in r.deserialize::<(usize, usize, f64)>().enumerate() {
            let (j, f, v) = rec.map_err(|e| csv_error(path, e))?;
            if j == members.len() && f == 0 {
                members.push(Vec::new());
            } else if j + 1 != members.len() {
                return Err(parse(format!("row {}: member {j} out of order", line + 2)));
            }
            if f != members[j].len() {
                return Err(parse(format!("row {}: facet {f} out of order", line + 2)));
            }
            members[j].push(v);
        }
        Ensemble::new(members, seed)
    }
}

/// I.i.d. uniform coefficients on `cfg.init_range`, member by member.
pub fn init_ensemble(n_members: usize, n_facets: usize, cfg: &EkiConfig) -> Result<Ensemble> {
    let [lo, hi] = cfg.init_range;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let members = (0..n_members)
        .map(|_| (0..n_facets).map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) }).collect())
        .collect();
    Ensemble::new(members, cfg.seed)
}

#[derive(Clone, Debug)]
pub struct Prediction {
    /// `None` for members whose forward evaluation failed.
    pub fields: Vec<Option<RasterField>>,
    pub polygons: Vec<Option<Vec<Point>>>,
    pub mean_field: RasterField,
    pub mean_momentum: Vec<f64>,
    /// Failed members and their error messages.
    pub failures: Vec<(usize, String)>,
}

impl Prediction {
    pub fn n_valid(&self) -> usize {
        self.fields.iter().filter(|f| f.is_some()).count()
    }
}

/// Runs the forward map on every member in parallel and averages the valid
/// results in member order. Validity flags of the ensemble are updated.
pub fn predict<F: ForwardMap + ?Sized>(ensemble: &mut Ensemble, forward: &F) -> Result<Prediction> {
    let results: Vec<Result<(Vec<Point>, RasterField)>> =
        ensemble.members.par_iter().map(|p| forward.evaluate(p)).collect();
    let mut fields = Vec::with_capacity(results.len());
    let mut polygons = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (j, res) in results.into_iter().enumerate() {
        match res {
            Ok((poly, field)) => {
                polygons.push(Some(poly));
                fields.push(Some(field));
            }
            Err(e) => {
                failures.push((j, e.to_string()));
                polygons.push(None);
                fields.push(None);
            }
        }
    }
    ensemble.valid = fields.iter().map(Option::is_some).collect();
    let first = fields.iter().flatten().next().ok_or(Error::AllMembersFailed)?;
    let mut mean = RasterField::constant(first.spec(), 0.0);
    let mut count = 0.0;
    for f in fields.iter().flatten() {
        if f.spec() != mean.spec() {
            return Err(Error::ShapeMismatch { expected: mean.spec().len(), found: f.spec().len() });
        }
        for (a, b) in mean.values_mut().iter_mut().zip(f.values()) {
            *a += b;
        }
        count += 1.0;
    }
    mean.values_mut().iter_mut().for_each(|a| *a /= count);
    let mean_momentum = ensemble.mean();
    Ok(Prediction { fields, polygons, mean_field: mean, mean_momentum, failures })
}

/// Kalman update of every member.
///
/// A member whose forward evaluation failed has no prediction of its own;
/// it is moved with the mean residual `q_target − q̄` so it stays in the
/// span of the valid anomalies and rejoins the ensemble next iteration.
pub fn analysis(ensemble: &Ensemble, prediction: &Prediction, target: &RasterField, xi: f64) -> Result<Ensemble> {
    let increments = analysis_increments(ensemble, prediction, target, xi)?;
    let members = ensemble
        .members
        .iter()
        .zip(&increments)
        .map(|(p, dp)| p.iter().zip(dp).map(|(a, b)| a + b).collect())
        .collect();
    Ok(Ensemble { members, valid: vec![true; ensemble.len()], seed: ensemble.seed })
}

/// The Kalman corrections `Δp_j` themselves.
pub fn analysis_increments(
    ensemble: &Ensemble,
    prediction: &Prediction,
    target: &RasterField,
    xi: f64,
) -> Result<Vec<Vec<f64>>> {
    if prediction.fields.len() != ensemble.len() {
        return Err(Error::ShapeMismatch { expected: ensemble.len(), found: prediction.fields.len() });
    }
    if target.spec() != prediction.mean_field.spec() {
        return Err(Error::ShapeMismatch { expected: prediction.mean_field.spec().len(), found: target.spec().len() });
    }
    let valid: Vec<usize> = (0..ensemble.len()).filter(|&j| prediction.fields[j].is_some()).collect();
    let n = valid.len();
    if n < 2 {
        return Err(if n == 0 { Error::AllMembersFailed } else { Error::TooFewValidMembers { valid: n } });
    }
    let len = target.spec().len();
    let w = target.spec().weight();
    let qbar = prediction.mean_field.values();
    let pbar = &prediction.mean_momentum;
    let scale = 1.0 / (n - 1) as f64;

    let a = DMatrix::from_fn(len, n, |i, k| prediction.fields[valid[k]].as_ref().map_or(0.0, |f| f.values()[i]) - qbar[i]);
    let b = DMatrix::from_fn(ensemble.n_facets(), n, |i, k| ensemble.members[valid[k]][i] - pbar[i]);
    let residuals = DMatrix::from_fn(len, ensemble.len(), |i, j| {
        let tau = prediction.fields[j].as_ref().map_or(qbar[i], |f| f.values()[i]);
        target.values()[i] - tau
    });

    let gram = (a.transpose() * &a) * (w * scale);
    let mut m = gram;
    for k in 0..n {
        m[(k, k)] += xi;
    }
    let eig = m.clone().symmetric_eigenvalues();
    let (lmin, lmax) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| (lo.min(l), hi.max(l.abs())));
    let cond = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(cond <= MAX_GRAM_CONDITION) {
        return Err(Error::SingularGram(cond));
    }
    let chol = m.cholesky().ok_or(Error::SingularGram(cond))?;
    let rhs = (a.transpose() * residuals) * (w * scale);
    let y = chol.solve(&rhs);
    let dp = b * y;
    Ok((0..ensemble.len()).map(|j| dp.column(j).iter().copied().collect()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    /// `‖q_target − q̄‖²` on the raster.
    pub misfit: f64,
    /// `‖p̄ − p†‖ / ‖p†‖`, when the true momentum is known.
    pub relative_error: Option<f64>,
    /// Mean distance of the valid members from their mean.
    pub consensus: f64,
    pub valid_members: usize,
    /// Wall time since the start of the run.
    pub seconds: f64,
}

/// `sqrt(Σ L0_f v_f²)`, the curve-weighted momentum norm.
pub fn weighted_norm(v: &[f64], lengths: &[f64]) -> f64 {
    v.iter().zip(lengths).map(|(x, l)| l * x * x).sum::<f64>().sqrt()
}

pub fn diagnostics(
    iteration: usize,
    ensemble: &Ensemble,
    prediction: &Prediction,
    target: &RasterField,
    lengths: &[f64],
    p_dagger: Option<&[f64]>,
) -> Result<IterationDiagnostics> {
    if lengths.len() != ensemble.n_facets() {
        return Err(Error::ShapeMismatch { expected: ensemble.n_facets(), found: lengths.len() });
    }
    let pbar = &prediction.mean_momentum;
    let diff: Vec<f64> = target.values().iter().zip(prediction.mean_field.values()).map(|(t, q)| t - q).collect();
    let diff = RasterField::new(target.spec().clone(), diff)?;
    let misfit = l2_inner(&diff, &diff)?;
    let relative_error = match p_dagger {
        Some(pd) => {
            if pd.len() != pbar.len() {
                return Err(Error::ShapeMismatch { expected: pbar.len(), found: pd.len() });
            }
            let gap: Vec<f64> = pbar.iter().zip(pd).map(|(a, b)| a - b).collect();
            Some(weighted_norm(&gap, lengths) / weighted_norm(pd, lengths))
        }
        None => None,
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for (m, _) in ensemble.members.iter().zip(&prediction.fields).filter(|(_, f)| f.is_some()) {
        let gap: Vec<f64> = m.iter().zip(pbar).map(|(a, b)| a - b).collect();
        total += weighted_norm(&gap, lengths);
        count += 1;
    }
    Ok(IterationDiagnostics {
        iteration,
        misfit,
        relative_error,
        consensus: total / count as f64,
        valid_members: count,
        seconds: 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    MisfitTolerance,
    ConsensusTolerance,
}

/// What the run loop hands out after each prediction.
pub struct IterationRecord<'a> {
    pub diagnostics: &'a IterationDiagnostics,
    /// Members that produced this prediction.
    pub ensemble: &'a Ensemble,
    pub prediction: &'a Prediction,
}

#[derive(Clone, Debug)]
pub struct EkiOutcome {
    pub history: Vec<IterationDiagnostics>,
    /// Ensemble of the last prediction.
    pub ensemble: Ensemble,
    pub mean_momentum: Vec<f64>,
    pub stop: StopReason,
}

/// Prediction, diagnostics, stop check and analysis, repeated.
///
/// `on_iteration` sees every record as soon as it exists, so a caller can
/// persist the history before a later failure aborts the run.
#[allow(clippy::too_many_arguments)]
pub fn run<F: ForwardMap + ?Sized>(
    initial: Ensemble,
    forward: &F,
    target: &RasterField,
    lengths: &[f64],
    p_dagger: Option<&[f64]>,
    cfg: &EkiConfig,
    mut on_iteration: impl FnMut(&IterationRecord) -> Result<()>,
) -> Result<EkiOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut ensemble = initial;
    let mut history = Vec::new();
    for k in 0.. {
        let prediction = predict(&mut ensemble, forward)?;
        let mut diag = diagnostics(k, &ensemble, &prediction, target, lengths, p_dagger)?;
        diag.seconds = start.elapsed().as_secs_f64();
        on_iteration(&IterationRecord { diagnostics: &diag, ensemble: &ensemble, prediction: &prediction })?;
        history.push(diag.clone());
        let stop = if cfg.misfit_tol.is_some_and(|t| diag.misfit <= t) {
            Some(StopReason::MisfitTolerance)
        } else if cfg.consensus_tol.is_some_and(|t| diag.consensus <= t) {
            Some(StopReason::ConsensusTolerance)
        } else if k >= cfg.max_iter {
            Some(StopReason::MaxIterations)
        } else {
            None
        };
        if let Some(stop) = stop {
            return Ok(EkiOutcome { history, ensemble, mean_momentum: prediction.mean_momentum, stop });
        }
        ensemble = analysis(&ensemble, &prediction, target, cfg.xi)?;
    }
    unreachable!()
}

fn write_rows(path: &Path, header: &[&str], mut rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut write = |w: &mut csv::Writer<_>| -> csv::Result<()> {
        w.write_record(header)?;
        for r in rows.by_ref() {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(|e| csv_error(path, e))
}

/// `iteration,E,R,S` rows, or `iteration,E,S` when no row has a relative
/// error. Wall time lives in a separate file so this one is reproducible
/// byte for byte.
pub fn write_diagnostics_csv(history: &[IterationDiagnostics], path: impl AsRef<Path>) -> Result<()> {
    let with_r = history.iter().any(|d| d.relative_error.is_some());
    let rows = history.iter().map(|d| {
        let mut row = vec![d.iteration.to_string(), d.misfit.to_string()];
        if with_r {
            row.push(d.relative_error.map_or(String::new(), |r| r.to_string()));
        }
        row.push(d.consensus.to_string());
        row
    });
    let header: &[&str] = if with_r { &["iteration", "E", "R", "S"] } else { &["iteration", "E", "S"] };
    write_rows(path.as_ref(), header, rows)
}

/// `iteration,seconds,valid_members` rows.
pub fn write_timing_csv(history: &[IterationDiagnostics], path: impl AsRef<Path>) -> Result<()> {
    let rows = history
        .iter()
        .map(|d| vec![d.iteration.to_string(), format!("{:.3}", d.seconds), d.valid_members.to_string()]);
    write_rows(path.as_ref(), &["iteration", "seconds", "valid_members"], rows)
}
