//! Seeded instance sampling, metric computation, and the experiment presets
//! producing tabular results.
//!
//! # Reproducibility
//!
//! All randomness derives from ChaCha8 streams keyed by the experiment seed:
//! the generator is `ChaCha8Rng::seed_from_u64(seed)` with
//! [`set_stream`](rand_chacha::ChaCha8Rng::set_stream) selecting among
//! independent streams. Stream assignments, for `trials = T`:
//!
//! * stream `0`: experiment-level draws, in order `x_true` (length `N`,
//!   standard normal) followed, for presets with a sweep-independent design
//!   matrix, by `H` (row-major, standard normal);
//! * stream `1 + g*(T+1) + T`: the design matrix of grid point `g` when it
//!   depends on the sweep (the measurement-count sweep);
//! * stream `1 + g*(T+1) + t`: trial `t` of grid point `g`, in order `E`
//!   (row-major, scaled by `sigma_e`) followed by `eps` (scaled by
//!   `sigma_eps`).
//!
//! Per-trial streams make the results independent of execution order and
//! worker count; re-running an identical config (including seed) reproduces
//! the metrics tables bit for bit. Cross-implementation bit-equality is a
//! non-goal.
//!
//! # Output files
//!
//! [`write_outputs`] emits `<preset>-<seed>.csv` with header
//! `trial,estimator,nmse,squared_error,case,nu_star` plus
//! `<preset>-<seed>.summary.json`. The `trial` column is the global index
//! `g*T + t`, so sweep rows map back to grid point `g = trial / T`; the
//! summary echoes the grid so the mapping is self-describing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::error::{Error, Result};
use crate::estimator::{decompose, solve_with_spectral, SolverOptions};
use crate::model::{CaseTag, ProblemInstance, SampledTruth, SeedPath, SpectralForm};

/// Uniform-quantizer noise variance for step size `delta`.
pub fn quantizer_noise_variance(delta: f64) -> f64 {
    assert!(delta >= 0.0, "step size must be nonnegative");
    delta * delta / 12.0
}

/// The named experiment presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Underdetermined NMSE histogram (`M = 95`, `N = 100`).
    NmseHist,
    /// MSE against SNR at fixed perturbation variance (`M = 64`, `N = 4`).
    MseVsSnr,
    /// MSE against SNR with `sigma_e2 = kappa * sigma_eps2` held proportional.
    KappaSweep,
    /// MSE against the number of measurements.
    MseVsM,
    /// No preset defaults; every knob from the config as-is.
    Custom,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::NmseHist => "nmse-hist",
            Preset::MseVsSnr => "mse-vs-snr",
            Preset::KappaSweep => "kappa-sweep",
            Preset::MseVsM => "mse-vs-m",
            Preset::Custom => "custom",
        }
    }
}

/// Which estimators run on each trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    GrvMl,
    Ls,
    OracleLs,
    Tls,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::GrvMl => "grv-ml",
            EstimatorKind::Ls => "ls",
            EstimatorKind::OracleLs => "oracle-ls",
            EstimatorKind::Tls => "tls",
        }
    }
}

/// Declarative description of a Monte-Carlo sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub num_measurements: usize,
    pub num_unknowns: usize,
    pub sigma_e2: f64,
    /// Noise variance for presets without an SNR sweep.
    pub sigma_eps2: f64,
    /// SNR grid in dB, `sigma_eps2 = 10^(-snr/10)`; sweep presets only.
    pub snr_grid_db: Vec<f64>,
    /// `sigma_e2 / sigma_eps2` ratio; the proportional-scaling sweep only.
    pub kappa: f64,
    /// Measurement counts; the measurement sweep only.
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub emit_crb: bool,
}

impl ExperimentConfig {
    /// Underdetermined histogram preset: `M = 95`, `N = 100`,
    /// `sigma_e2 = 0.10`, `sigma_eps2 = 0.03`, fixed `H` and `x`.
    pub fn nmse_hist(seed: u64, trials: usize) -> Self {
        Self {
            preset: Preset::NmseHist,
            num_measurements: 95,
            num_unknowns: 100,
            sigma_e2: 0.10,
            sigma_eps2: 0.03,
            snr_grid_db: Vec::new(),
            kappa: 0.0,
            m_grid: Vec::new(),
            trials,
            seed,
            estimators: vec![EstimatorKind::GrvMl, EstimatorKind::Ls, EstimatorKind::OracleLs],
            emit_crb: false,
        }
    }

    /// SNR sweep preset: `M = 64`, `N = 4`, `sigma_e2 = 0.10`,
    /// SNR in `{0, 5, ..., 40}` dB.
    pub fn mse_vs_snr(seed: u64, trials: usize) -> Self {
        Self {
            preset: Preset::MseVsSnr,
            num_measurements: 64,
            num_unknowns: 4,
            sigma_e2: 0.10,
            sigma_eps2: 1.0,
            snr_grid_db: (0..=8).map(|k| 5.0 * k as f64).collect(),
            kappa: 0.0,
            m_grid: Vec::new(),
            trials,
            seed,
            estimators: vec![
                EstimatorKind::GrvMl,
                EstimatorKind::Ls,
                EstimatorKind::OracleLs,
                EstimatorKind::Tls,
            ],
            emit_crb: true,
        }
    }

    /// Proportional-variance sweep at fixed `kappa = sigma_e2 / sigma_eps2`.
    pub fn kappa_sweep(seed: u64, trials: usize, kappa: f64) -> Self {
        Self {
            preset: Preset::KappaSweep,
            kappa,
            estimators: vec![EstimatorKind::GrvMl, EstimatorKind::Ls, EstimatorKind::OracleLs],
            ..Self::mse_vs_snr(seed, trials)
        }
    }

    /// Measurement-count sweep: `N = 4`, `sigma_e2 = 0.01`,
    /// `sigma_eps2 = 0.20`, `M` in `{8, 16, ..., 1024}`.
    pub fn mse_vs_m(seed: u64, trials: usize) -> Self {
        Self {
            preset: Preset::MseVsM,
            num_measurements: 8,
            num_unknowns: 4,
            sigma_e2: 0.01,
            sigma_eps2: 0.20,
            snr_grid_db: Vec::new(),
            kappa: 0.0,
            m_grid: vec![8, 16, 32, 64, 128, 256, 512, 1024],
            trials,
            seed,
            estimators: vec![
                EstimatorKind::GrvMl,
                EstimatorKind::Ls,
                EstimatorKind::OracleLs,
                EstimatorKind::Tls,
            ],
            emit_crb: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::DomainViolation("trials must be >= 1".into()));
        }
        if self.num_unknowns == 0 {
            return Err(Error::DomainViolation("N must be positive".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::DomainViolation("no estimators selected".into()));
        }
        match self.preset {
            Preset::MseVsSnr | Preset::KappaSweep if self.snr_grid_db.is_empty() => {
                Err(Error::DomainViolation("SNR grid must be nonempty".into()))
            }
            Preset::KappaSweep if !(self.kappa > 0.0) => {
                Err(Error::DomainViolation("kappa must be positive".into()))
            }
            Preset::MseVsM if self.m_grid.is_empty() => {
                Err(Error::DomainViolation("M grid must be nonempty".into()))
            }
            _ => Ok(()),
        }
    }

    /// Resolved grid points of the sweep; a single point for non-sweep presets.
    pub fn grid_points(&self) -> Vec<GridPoint> {
        match self.preset {
            Preset::NmseHist | Preset::Custom => vec![GridPoint {
                index: 0,
                num_measurements: self.num_measurements,
                sigma_e2: self.sigma_e2,
                sigma_eps2: self.sigma_eps2,
                snr_db: None,
            }],
            Preset::MseVsSnr => self
                .snr_grid_db
                .iter()
                .enumerate()
                .map(|(index, &snr)| GridPoint {
                    index,
                    num_measurements: self.num_measurements,
                    sigma_e2: self.sigma_e2,
                    sigma_eps2: 10f64.powf(-snr / 10.0),
                    snr_db: Some(snr),
                })
                .collect(),
            Preset::KappaSweep => self
                .snr_grid_db
                .iter()
                .enumerate()
                .map(|(index, &snr)| {
                    let sigma_eps2 = 10f64.powf(-snr / 10.0);
                    GridPoint {
                        index,
                        num_measurements: self.num_measurements,
                        sigma_e2: self.kappa * sigma_eps2,
                        sigma_eps2,
                        snr_db: Some(snr),
                    }
                })
                .collect(),
            Preset::MseVsM => self
                .m_grid
                .iter()
                .enumerate()
                .map(|(index, &m)| GridPoint {
                    index,
                    num_measurements: m,
                    sigma_e2: self.sigma_e2,
                    sigma_eps2: self.sigma_eps2,
                    snr_db: None,
                })
                .collect(),
        }
    }

    /// True when `H` is drawn once per experiment rather than per grid point.
    fn shared_design(&self) -> bool {
        !matches!(self.preset, Preset::MseVsM)
    }
}

/// One resolved point of a sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridPoint {
    pub index: usize,
    pub num_measurements: usize,
    pub sigma_e2: f64,
    pub sigma_eps2: f64,
    pub snr_db: Option<f64>,
}

/// Per-trial, per-estimator outputs.
#[derive(Debug, Clone)]
pub struct MetricsRecord {
    /// Global trial index `g * trials + t`.
    pub trial: usize,
    pub estimator: EstimatorKind,
    /// `||x_hat - x||^2 / ||x||^2`.
    pub nmse: f64,
    /// `||x_hat - x||^2`.
    pub squared_error: f64,
    /// The estimate itself, kept for bias aggregation.
    pub per_component_estimate: DVector<f64>,
    /// Dispatch branch; populated for the likelihood estimator only.
    pub case_tag: Option<CaseTag>,
    pub nu_star: Option<f64>,
}

/// A trial whose estimator failed; the sweep continues past it.
#[derive(Debug, Clone, Serialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub estimator: EstimatorKind,
    pub message: String,
}

/// Aggregates for one (grid point, estimator) cell.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub trials_ok: usize,
    pub failures: usize,
    pub mean_nmse: f64,
    pub median_nmse: f64,
    /// Mean of `||x_hat - x||^2` over successful trials.
    pub mse: f64,
    /// `mean(x_hat) - x_true`, componentwise.
    pub bias: Vec<f64>,
}

/// Aggregates for one grid point.
#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    #[serde(flatten)]
    pub point: GridPoint,
    /// First global trial index belonging to this point.
    pub first_trial: usize,
    pub crb_trace: Option<f64>,
    pub crb_well_posed: Option<bool>,
    pub estimators: Vec<EstimatorSummary>,
}

/// Full outcome of a run: the per-trial table plus aggregates.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<TrialFailure>,
    pub grid: Vec<GridSummary>,
    pub x_true: DVector<f64>,
}

impl ExperimentResult {
    /// Fraction of estimator runs that failed.
    pub fn failure_rate(&self) -> f64 {
        let attempts = self.records.len() + self.failures.len();
        if attempts == 0 {
            0.0
        } else {
            self.failures.len() as f64 / attempts as f64
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gauss_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Row-major standard-normal matrix; the fill order is part of the
/// reproducibility contract.
fn gauss_mat(m: usize, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            h[(i, j)] = StandardNormal.sample(rng);
        }
    }
    h
}

fn trial_stream(trials: usize, grid_index: usize, trial_index: usize) -> u64 {
    1 + (grid_index as u64) * (trials as u64 + 1) + trial_index as u64
}

fn design_stream(trials: usize, grid_index: usize) -> u64 {
    1 + (grid_index as u64) * (trials as u64 + 1) + trials as u64
}

/// The experiment-fixed signal, and the design matrix for a grid point.
fn draw_shared(config: &ExperimentConfig, point: &GridPoint) -> (DVector<f64>, DMatrix<f64>) {
    let mut rng0 = stream_rng(config.seed, 0);
    let x = gauss_vec(config.num_unknowns, &mut rng0);
    let h = if config.shared_design() {
        gauss_mat(point.num_measurements, config.num_unknowns, &mut rng0)
    } else {
        let mut rng_h = stream_rng(config.seed, design_stream(config.trials, point.index));
        gauss_mat(point.num_measurements, config.num_unknowns, &mut rng_h)
    };
    (x, h)
}

/// Draws trial `trial_index` of grid point `grid_index` deterministically.
pub fn sample_trial_at(
    config: &ExperimentConfig,
    grid_index: usize,
    trial_index: usize,
) -> Result<(ProblemInstance, SampledTruth)> {
    config.validate()?;
    let points = config.grid_points();
    let point = points.get(grid_index).ok_or_else(|| {
        Error::DomainViolation(format!("grid index {grid_index} out of range"))
    })?;
    let (x, h) = draw_shared(config, point);
    let mut rng = stream_rng(
        config.seed,
        trial_stream(config.trials, grid_index, trial_index),
    );
    let e = gauss_mat(point.num_measurements, config.num_unknowns, &mut rng)
        * point.sigma_e2.sqrt();
    let eps = gauss_vec(point.num_measurements, &mut rng) * point.sigma_eps2.sqrt();
    let y = (&h + &e) * &x + &eps;
    let instance = ProblemInstance::new(h, y, point.sigma_e2, point.sigma_eps2)?;
    let truth = SampledTruth {
        x_true: x,
        perturbation: e,
        noise: eps,
        seed_path: SeedPath {
            seed: config.seed,
            grid_index,
            trial_index,
        },
    };
    Ok((instance, truth))
}

/// Draws a trial of the first (or only) grid point.
pub fn sample_trial(
    config: &ExperimentConfig,
    trial_index: usize,
) -> Result<(ProblemInstance, SampledTruth)> {
    sample_trial_at(config, 0, trial_index)
}

/// Minimum-norm least squares read off an existing decomposition.
fn ls_from_spectral(spec: &SpectralForm) -> DVector<f64> {
    let mut x_tilde = DVector::zeros(spec.num_unknowns());
    for j in 0..spec.rank() {
        x_tilde[j] = spec.y_tilde()[j] / spec.lambdas()[j];
    }
    spec.v() * x_tilde
}

fn run_estimator(
    kind: EstimatorKind,
    instance: &ProblemInstance,
    truth: &SampledTruth,
    spec_t: &SpectralForm,
    opts: &SolverOptions,
) -> Result<(DVector<f64>, Option<CaseTag>, Option<f64>)> {
    match kind {
        EstimatorKind::GrvMl => {
            let sol = solve_with_spectral(instance, spec_t, opts)?;
            Ok((sol.x_hat, Some(sol.case_tag), Some(sol.nu_star)))
        }
        EstimatorKind::Ls => Ok((ls_from_spectral(spec_t), None, None)),
        EstimatorKind::OracleLs => {
            let x = baselines::oracle_ls(
                instance.mean_matrix(),
                &truth.perturbation,
                instance.observation(),
            )?;
            Ok((x, None, None))
        }
        EstimatorKind::Tls => {
            let x = baselines::tls(instance.mean_matrix(), instance.observation())?;
            Ok((x, None, None))
        }
    }
}

/// Runs the configured sweep. Trials execute in parallel on the current rayon
/// pool; per-trial failures are recorded and do not abort the run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let opts = SolverOptions::default();
    let points = config.grid_points();
    let trials = config.trials;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut grid = Vec::new();
    let mut x_true = DVector::zeros(config.num_unknowns);

    for point in &points {
        let (x, h) = draw_shared(config, point);
        x_true = x.clone();
        let probe = ProblemInstance::new(
            h.clone(),
            DVector::zeros(point.num_measurements),
            point.sigma_e2,
            point.sigma_eps2,
        )?;
        let spec0 = decompose(&probe, &opts)?;
        let crb_out = if config.emit_crb {
            Some(baselines::crb(&h, &x, point.sigma_e2, point.sigma_eps2))
        } else {
            None
        };

        let per_trial: Vec<(Vec<MetricsRecord>, Vec<TrialFailure>)> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let global = point.index * trials + t;
                let (instance, truth) =
                    sample_trial_at(config, point.index, t).expect("validated config");
                let spec_t = spec0.with_observation(instance.observation());
                let mut recs = Vec::new();
                let mut fails = Vec::new();
                for &kind in &config.estimators {
                    match run_estimator(kind, &instance, &truth, &spec_t, &opts) {
                        Ok((x_hat, case_tag, nu_star)) => {
                            let err = (&x_hat - &truth.x_true).norm_squared();
                            let denom = truth.x_true.norm_squared();
                            recs.push(MetricsRecord {
                                trial: global,
                                estimator: kind,
                                nmse: if denom > 0.0 { err / denom } else { err },
                                squared_error: err,
                                per_component_estimate: x_hat,
                                case_tag,
                                nu_star,
                            });
                        }
                        Err(e) => fails.push(TrialFailure {
                            trial: global,
                            estimator: kind,
                            message: e.to_string(),
                        }),
                    }
                }
                (recs, fails)
            })
            .collect();

        let mut cell: Vec<Vec<&MetricsRecord>> = vec![Vec::new(); config.estimators.len()];
        let mut cell_failures = vec![0usize; config.estimators.len()];
        for (recs, fails) in &per_trial {
            failures.extend(fails.iter().cloned());
            for f in fails {
                let slot = config.estimators.iter().position(|&k| k == f.estimator);
                cell_failures[slot.expect("estimator from the configured set")] += 1;
            }
            for r in recs {
                let slot = config.estimators.iter().position(|&k| k == r.estimator);
                cell[slot.expect("estimator from the configured set")].push(r);
            }
        }

        let estimators = config
            .estimators
            .iter()
            .zip(cell.iter().zip(&cell_failures))
            .map(|(&kind, (rows, &n_failed))| summarize_cell(kind, rows, n_failed, &x))
            .collect();
        grid.push(GridSummary {
            point: *point,
            first_trial: point.index * trials,
            crb_trace: crb_out.as_ref().map(|c| c.crb_trace),
            crb_well_posed: crb_out.as_ref().map(|c| c.well_posed),
            estimators,
        });
        for (recs, _) in per_trial {
            records.extend(recs);
        }
    }

    records.sort_by_key(|r| {
        (
            r.trial,
            config.estimators.iter().position(|&k| k == r.estimator),
        )
    });
    Ok(ExperimentResult {
        config: config.clone(),
        records,
        failures,
        grid,
        x_true,
    })
}

fn summarize_cell(
    kind: EstimatorKind,
    rows: &[&MetricsRecord],
    n_failed: usize,
    x_true: &DVector<f64>,
) -> EstimatorSummary {
    let n_ok = rows.len();
    let mut nmses: Vec<f64> = rows.iter().map(|r| r.nmse).collect();
    nmses.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_nmse = if nmses.is_empty() {
        f64::NAN
    } else if nmses.len() % 2 == 1 {
        nmses[nmses.len() / 2]
    } else {
        0.5 * (nmses[nmses.len() / 2 - 1] + nmses[nmses.len() / 2])
    };
    let mean_nmse = if nmses.is_empty() {
        f64::NAN
    } else {
        nmses.iter().sum::<f64>() / n_ok as f64
    };
    let mse = if rows.is_empty() {
        f64::NAN
    } else {
        rows.iter().map(|r| r.squared_error).sum::<f64>() / n_ok as f64
    };
    let bias = if rows.is_empty() {
        vec![f64::NAN; x_true.len()]
    } else {
        let mut mean = DVector::zeros(x_true.len());
        for r in rows {
            mean += &r.per_component_estimate;
        }
        mean /= n_ok as f64;
        (mean - x_true).iter().copied().collect()
    };
    EstimatorSummary {
        estimator: kind,
        trials_ok: n_ok,
        failures: n_failed,
        mean_nmse,
        median_nmse,
        mse,
        bias,
    }
}

/// Writes `<preset>-<seed>.csv` and `<preset>-<seed>.summary.json` into `dir`,
/// returning the two paths.
pub fn write_outputs(result: &ExperimentResult, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let base = format!("{}-{}", result.config.preset.name(), result.config.seed);
    let csv_path = dir.join(format!("{base}.csv"));
    let summary_path = dir.join(format!("{base}.summary.json"));

    let mut csv = String::from("trial,estimator,nmse,squared_error,case,nu_star\n");
    for r in &result.records {
        let case = r.case_tag.map(|c| format!("{c:?}")).unwrap_or_default();
        let nu = r.nu_star.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.trial,
            r.estimator.name(),
            r.nmse,
            r.squared_error,
            case,
            nu
        )
        .expect("writing to a string cannot fail");
    }
    fs::write(&csv_path, csv)?;

    #[derive(Serialize)]
    struct SummaryFile<'a> {
        schema: &'static str,
        preset: &'static str,
        seed: u64,
        trials: usize,
        config: &'a ExperimentConfig,
        x_true: Vec<f64>,
        grid: &'a [GridSummary],
        total_failures: usize,
        failure_rate: f64,
    }
    let summary = SummaryFile {
        schema: "grvml.experiment-summary/1",
        preset: result.config.preset.name(),
        seed: result.config.seed,
        trials: result.config.trials,
        config: &result.config,
        x_true: result.x_true.iter().copied().collect(),
        grid: &result.grid,
        total_failures: result.failures.len(),
        failure_rate: result.failure_rate(),
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::MalformedFile(e.to_string()))?;
    fs::write(&summary_path, text)?;
    Ok((csv_path, summary_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            preset: Preset::Custom,
            num_measurements: 6,
            num_unknowns: 2,
            sigma_e2: 0.1,
            sigma_eps2: 0.05,
            snr_grid_db: Vec::new(),
            kappa: 0.0,
            m_grid: Vec::new(),
            trials: 8,
            seed: 99,
            estimators: vec![EstimatorKind::GrvMl, EstimatorKind::Ls, EstimatorKind::OracleLs],
            emit_crb: true,
        }
    }

    #[test]
    fn quantizer_noise_variance_values() {
        assert_relative_eq!(quantizer_noise_variance(1.0), 1.0 / 12.0);
        assert_relative_eq!(quantizer_noise_variance(0.0), 0.0);
        assert_relative_eq!(quantizer_noise_variance(2.0), 1.0 / 3.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let config = tiny_config();
        let (a_inst, a_truth) = sample_trial(&config, 3).unwrap();
        let (b_inst, b_truth) = sample_trial(&config, 3).unwrap();
        assert_eq!(a_inst, b_inst);
        assert_eq!(a_truth, b_truth);
        // different trials differ
        let (c_inst, _) = sample_trial(&config, 4).unwrap();
        assert_ne!(a_inst.observation(), c_inst.observation());
    }

    #[test]
    fn sampled_truth_reassembles_the_observation_exactly() {
        let config = tiny_config();
        for t in 0..4 {
            let (inst, truth) = sample_trial(&config, t).unwrap();
            assert!(truth.reproduces(&inst));
        }
    }

    #[test]
    fn design_matrix_is_fixed_across_trials() {
        let config = ExperimentConfig::nmse_hist(7, 2000);
        let (first, _) = sample_trial(&config, 0).unwrap();
        let (last, _) = sample_trial(&config, 1999).unwrap();
        assert_eq!(first.mean_matrix(), last.mean_matrix());
    }

    #[test]
    fn perturbation_variances_match_their_nominals() {
        // law of large numbers over 2000 trials of a 6x2 instance
        let mut config = tiny_config();
        config.trials = 2000;
        let mut sum_e2 = 0.0;
        let mut sum_eps2 = 0.0;
        let mut n_e = 0usize;
        let mut n_eps = 0usize;
        for t in 0..config.trials {
            let (_, truth) = sample_trial(&config, t).unwrap();
            sum_e2 += truth.perturbation.iter().map(|v| v * v).sum::<f64>();
            n_e += truth.perturbation.len();
            sum_eps2 += truth.noise.iter().map(|v| v * v).sum::<f64>();
            n_eps += truth.noise.len();
        }
        assert!((sum_e2 / n_e as f64 / config.sigma_e2 - 1.0).abs() < 0.05);
        assert!((sum_eps2 / n_eps as f64 / config.sigma_eps2 - 1.0).abs() < 0.05);
    }

    #[test]
    fn oracle_ls_is_exact_when_noise_is_degenerate() {
        // near-zero variances act as the degenerate seam: E and eps are tiny
        let mut config = tiny_config();
        config.sigma_e2 = 1e-30;
        config.sigma_eps2 = 1e-30;
        config.trials = 1;
        config.estimators = vec![EstimatorKind::OracleLs];
        let result = run_experiment(&config).unwrap();
        assert_eq!(result.records.len(), 1);
        assert!(result.records[0].nmse < 1e-12);
    }

    #[test]
    fn run_is_reproducible_and_order_independent() {
        let config = tiny_config();
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.trial, rb.trial);
            assert_eq!(ra.estimator, rb.estimator);
            assert_eq!(ra.nmse.to_bits(), rb.nmse.to_bits());
            assert_eq!(ra.squared_error.to_bits(), rb.squared_error.to_bits());
        }
        // single-threaded pool gives the identical table
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| run_experiment(&config)).unwrap();
        for (ra, rc) in a.records.iter().zip(&c.records) {
            assert_eq!(ra.nmse.to_bits(), rc.nmse.to_bits());
        }
    }

    #[test]
    fn sweep_grid_points_resolve_variances() {
        let config = ExperimentConfig::mse_vs_snr(1, 10);
        let pts = config.grid_points();
        assert_eq!(pts.len(), 9);
        assert_relative_eq!(pts[0].sigma_eps2, 1.0);
        assert_relative_eq!(pts[8].sigma_eps2, 1e-4);
        let kappa = ExperimentConfig::kappa_sweep(1, 10, 0.01);
        let kpts = kappa.grid_points();
        for p in &kpts {
            assert_relative_eq!(p.sigma_e2, 0.01 * p.sigma_eps2);
        }
        let mvm = ExperimentConfig::mse_vs_m(1, 10);
        assert_eq!(mvm.grid_points().len(), 8);
    }

    #[test]
    fn outputs_land_in_named_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config();
        config.trials = 3;
        let result = run_experiment(&config).unwrap();
        let (csv_path, summary_path) = write_outputs(&result, dir.path()).unwrap();
        assert_eq!(csv_path.file_name().unwrap(), "custom-99.csv");
        assert_eq!(summary_path.file_name().unwrap(), "custom-99.summary.json");
        let csv = fs::read_to_string(&csv_path).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "trial,estimator,nmse,squared_error,case,nu_star"
        );
        assert_eq!(lines.count(), 3 * 3);
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&summary_path).unwrap()).unwrap();
        assert_eq!(summary["schema"], "grvml.experiment-summary/1");
        assert_eq!(summary["seed"], 99);
        assert!(summary["grid"][0]["crb_trace"].is_f64());
    }

    #[test]
    fn trials_zero_is_rejected() {
        let mut config = tiny_config();
        config.trials = 0;
        assert!(run_experiment(&config).is_err());
    }
}
