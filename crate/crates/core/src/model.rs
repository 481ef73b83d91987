//! Domain types for problem instances, solutions, and certificates, plus the
//! JSON interchange formats.
//!
//! All types are immutable after construction and safe to share across
//! threads. Matrices are serialized row-major as nested arrays; the in-memory
//! layout is whatever [`nalgebra`] uses. A decision scalar of `-inf` is
//! serialized as the string `"-inf"` so that text formats stay portable.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// ProblemInstance
// ---------------------------------------------------------------------------

/// The observed data `(H, y)` plus the two noise variances.
///
/// The model is `y = (H + E) x + eps` with `E` i.i.d. zero-mean Gaussian of
/// variance `sigma_e2` per entry and `eps` white Gaussian of variance
/// `sigma_eps2`. A realized `(E, eps, x)` triple lives in [`SampledTruth`],
/// not here.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    mean_matrix: DMatrix<f64>,
    observation: DVector<f64>,
    sigma_e2: f64,
    sigma_eps2: f64,
}

impl ProblemInstance {
    /// Validates and wraps the raw data.
    ///
    /// Fails with [`Error::DimensionMismatch`], [`Error::NonFiniteEntry`] or
    /// [`Error::InvalidVariance`]; no partially-valid instance is ever
    /// returned.
    pub fn new(
        mean_matrix: DMatrix<f64>,
        observation: DVector<f64>,
        sigma_e2: f64,
        sigma_eps2: f64,
    ) -> Result<Self> {
        if mean_matrix.nrows() == 0 || mean_matrix.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "H must have positive dimensions, got {}x{}",
                mean_matrix.nrows(),
                mean_matrix.ncols()
            )));
        }
        if observation.len() != mean_matrix.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "y has length {} but H has {} rows",
                observation.len(),
                mean_matrix.nrows()
            )));
        }
        if mean_matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry("H".into()));
        }
        if observation.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry("y".into()));
        }
        if !sigma_eps2.is_finite() || sigma_eps2 <= 0.0 {
            return Err(Error::InvalidVariance(format!(
                "sigma_eps2 must be > 0, got {sigma_eps2}"
            )));
        }
        if !sigma_e2.is_finite() || sigma_e2 < 0.0 {
            return Err(Error::InvalidVariance(format!(
                "sigma_e2 must be >= 0, got {sigma_e2}"
            )));
        }
        Ok(Self {
            mean_matrix,
            observation,
            sigma_e2,
            sigma_eps2,
        })
    }

    /// Number of measurements `M`.
    pub fn num_measurements(&self) -> usize {
        self.mean_matrix.nrows()
    }

    /// Number of unknowns `N`.
    pub fn num_unknowns(&self) -> usize {
        self.mean_matrix.ncols()
    }

    /// The mean measurement matrix `H` (`M x N`).
    pub fn mean_matrix(&self) -> &DMatrix<f64> {
        &self.mean_matrix
    }

    /// The observation vector `y` (length `M`).
    pub fn observation(&self) -> &DVector<f64> {
        &self.observation
    }

    /// Per-entry variance of the matrix perturbation.
    pub fn sigma_e2(&self) -> f64 {
        self.sigma_e2
    }

    /// Variance of the additive noise.
    pub fn sigma_eps2(&self) -> f64 {
        self.sigma_eps2
    }
}

// ---------------------------------------------------------------------------
// SpectralForm
// ---------------------------------------------------------------------------

/// Cached SVD of `H` together with the rotated observation.
///
/// `H = U diag(lambda) V^T` with `lambda_1 >= ... >= lambda_R > 0`. The left
/// factor is stored economy-size (`M x K`, `K = min(M, N)`): components of
/// `U^T y` beyond `K` enter every downstream formula only through their total
/// energy, which is recovered as `||y||^2 - ||y_tilde_{1:R}||^2`. The right
/// factor is always completed to a full `N x N` orthogonal matrix so that
/// estimates with mass on null-space directions can be mapped back.
#[derive(Debug, Clone)]
pub struct SpectralForm {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    lambdas: DVector<f64>,
    rank: usize,
    y_tilde: DVector<f64>,
    tail_energy: f64,
    y_norm2: f64,
}

impl SpectralForm {
    /// Assembles the form from SVD factors; used by `estimator::decompose`.
    ///
    /// `u` is `M x K` with orthonormal columns, `v` is `N x N` orthogonal,
    /// `lambdas` holds the `R` retained singular values in descending order.
    pub(crate) fn from_parts(
        u: DMatrix<f64>,
        v: DMatrix<f64>,
        lambdas: DVector<f64>,
        rank: usize,
        y: &DVector<f64>,
    ) -> Self {
        debug_assert_eq!(lambdas.len(), rank);
        let y_tilde = u.transpose() * y;
        let y_norm2 = y.norm_squared();
        let head: f64 = y_tilde.iter().take(rank).map(|v| v * v).sum();
        let tail_energy = (y_norm2 - head).max(0.0);
        Self {
            u,
            v,
            lambdas,
            rank,
            y_tilde,
            tail_energy,
            y_norm2,
        }
    }

    /// Same factorization, new observation. Cheap relative to a fresh SVD;
    /// used when many observations share one `H`.
    pub fn with_observation(&self, y: &DVector<f64>) -> Self {
        Self::from_parts(
            self.u.clone(),
            self.v.clone(),
            self.lambdas.clone(),
            self.rank,
            y,
        )
    }

    /// Number of measurements `M`.
    pub fn num_measurements(&self) -> usize {
        self.u.nrows()
    }

    /// Number of unknowns `N`.
    pub fn num_unknowns(&self) -> usize {
        self.v.nrows()
    }

    /// Economy left factor (`M x min(M, N)`, orthonormal columns).
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Full right factor (`N x N`, orthogonal).
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// The `R` retained singular values, descending.
    pub fn lambdas(&self) -> &DVector<f64> {
        &self.lambdas
    }

    /// Numerical rank `R`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Leading `min(M, N)` components of `U^T y`.
    pub fn y_tilde(&self) -> &DVector<f64> {
        &self.y_tilde
    }

    /// `||y_tilde_{R+1:M}||^2 = ||y||^2 - ||y_tilde_{1:R}||^2`, clamped at 0.
    pub fn tail_energy(&self) -> f64 {
        self.tail_energy
    }

    /// `||y||^2`.
    pub fn y_norm2(&self) -> f64 {
        self.y_norm2
    }
}

// ---------------------------------------------------------------------------
// Solution types
// ---------------------------------------------------------------------------

/// Which branch of the case dispatch produced the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseTag {
    /// `R <= N-1` and `S >= 0`: closed form with free null-space mass.
    RankDeficientNuZero,
    /// `R <= N-1` and `S < 0` (including `S = -inf`): bisection on `(0, M/2]`.
    RankDeficientNuPositive,
    /// `R = N` and `S = 0`: plain componentwise division.
    FullRankSZero,
    /// `R = N` and `S > 0`: bisection left of zero.
    FullRankNuNegative,
    /// `R = N` and `S < 0`: bisection on `(0, M/2]`.
    FullRankNuPositive,
    /// `sigma_e2 = 0`: minimum-norm least squares, no KKT certificate.
    DegenerateLsFallback,
}

impl CaseTag {
    /// The five tags that instance generation can target.
    pub const NON_DEGENERATE: [CaseTag; 5] = [
        CaseTag::RankDeficientNuZero,
        CaseTag::RankDeficientNuPositive,
        CaseTag::FullRankSZero,
        CaseTag::FullRankNuNegative,
        CaseTag::FullRankNuPositive,
    ];
}

/// Uniqueness class of the maximum-likelihood optimum.
///
/// Indices are 0-based positions into `x_tilde_star`; `free_end` is exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplicity {
    Unique,
    /// One free component whose sign is arbitrary: two optima.
    TwoFold { free_index: usize },
    /// A continuum of optima over the free index range.
    Continuum { free_start: usize, free_end: usize },
}

/// Dual certificate `(w, z, nu, eta)` witnessing optimality, plus the decision
/// scalar and the largest KKT residual observed when the certificate was built.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    /// Lifted squared coordinates, `w = x_tilde^2 * z`, length `N`.
    pub w: DVector<f64>,
    /// Lifted inverse variance, `z = 1 / (sigma_e2 ||x||^2 + sigma_eps2)`.
    pub z: f64,
    /// Dual variable of the equality constraint.
    pub nu: f64,
    /// Dual variables of the nonnegativity constraints, length `N`.
    pub eta: DVector<f64>,
    /// Decision scalar; `-inf` when the rotated tail energy vanishes.
    pub s_value: f64,
    /// Largest absolute KKT residual at the returned point.
    pub kkt_residual_max: f64,
}

/// The maximum-likelihood estimate with its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct MlSolution {
    /// Estimate in the original coordinates, `x_hat = V x_tilde_star`.
    pub x_hat: DVector<f64>,
    /// Estimate in the rotated coordinates.
    pub x_tilde_star: DVector<f64>,
    /// Optimal dual variable; 0 in the closed-form cases.
    pub nu_star: f64,
    pub case_tag: CaseTag,
    pub multiplicity: Multiplicity,
    /// Negative log-likelihood at `x_hat`.
    pub objective_value: f64,
    pub certificate: DualCertificate,
}

// ---------------------------------------------------------------------------
// SampledTruth
// ---------------------------------------------------------------------------

/// Provenance of a sampled trial: which experiment seed and which position in
/// the sweep produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPath {
    pub seed: u64,
    pub grid_index: usize,
    pub trial_index: usize,
}

/// Ground truth behind a sampled instance: the signal, the realized matrix
/// perturbation, and the realized additive noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTruth {
    pub x_true: DVector<f64>,
    /// Realized perturbation `E` (`M x N`).
    pub perturbation: DMatrix<f64>,
    /// Realized additive noise `eps` (length `M`).
    pub noise: DVector<f64>,
    pub seed_path: SeedPath,
}

impl SampledTruth {
    /// Reassembles `(H + E) x_true + eps`.
    pub fn reconstruct_observation(&self, h: &DMatrix<f64>) -> DVector<f64> {
        (h + &self.perturbation) * &self.x_true + &self.noise
    }

    /// True exactly when `instance` was assembled from this truth: the stored
    /// observation is the bit-for-bit result of one evaluation of the model.
    pub fn reproduces(&self, instance: &ProblemInstance) -> bool {
        let y = self.reconstruct_observation(instance.mean_matrix());
        y.len() == instance.observation().len()
            && y.iter().zip(instance.observation().iter()).all(|(a, b)| a == b)
    }
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "H")]
    h: Vec<Vec<f64>>,
    y: Vec<f64>,
    sigma_e2: f64,
    sigma_eps2: f64,
}

/// `-inf` round-trips as the string `"-inf"`; finite values as plain numbers.
mod s_sentinel {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            Err(serde::ser::Error::custom(format!(
                "S must be finite or -inf, got {v}"
            )))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v.is_finite() => Ok(v),
            Raw::Num(v) => Err(D::Error::custom(format!("non-finite numeric S: {v}"))),
            Raw::Tag(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Raw::Tag(t) => Err(D::Error::custom(format!("unrecognized S sentinel {t:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CertificateFile {
    w: Vec<f64>,
    z: f64,
    eta: Vec<f64>,
    #[serde(rename = "S", with = "s_sentinel")]
    s: f64,
    kkt_residual_max: f64,
}

#[derive(Serialize, Deserialize)]
struct SolutionFile {
    x_hat: Vec<f64>,
    x_tilde_star: Vec<f64>,
    nu_star: f64,
    case: CaseTag,
    multiplicity: Multiplicity,
    objective: f64,
    certificate: CertificateFile,
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::MalformedFile(e.to_string()))
}

/// Loads and validates an instance file.
///
/// The schema is
/// `{"M": int, "N": int, "H": [[row...], ...], "y": [...], "sigma_e2": num, "sigma_eps2": num}`.
pub fn load_instance(path: impl AsRef<Path>) -> Result<ProblemInstance> {
    let text = fs::read_to_string(path)?;
    let raw: InstanceFile = parse_json(&text)?;
    if raw.m == 0 || raw.n == 0 {
        return Err(Error::MalformedFile(format!(
            "M and N must be positive, got M={}, N={}",
            raw.m, raw.n
        )));
    }
    if raw.h.len() != raw.m {
        return Err(Error::DimensionMismatch(format!(
            "H has {} rows but M = {}",
            raw.h.len(),
            raw.m
        )));
    }
    if let Some(row) = raw.h.iter().find(|row| row.len() != raw.n) {
        return Err(Error::DimensionMismatch(format!(
            "H row of length {} but N = {}",
            row.len(),
            raw.n
        )));
    }
    if raw.y.len() != raw.m {
        return Err(Error::DimensionMismatch(format!(
            "y has length {} but M = {}",
            raw.y.len(),
            raw.m
        )));
    }
    let h = DMatrix::from_fn(raw.m, raw.n, |i, j| raw.h[i][j]);
    let y = DVector::from_vec(raw.y);
    ProblemInstance::new(h, y, raw.sigma_e2, raw.sigma_eps2)
}

/// Writes an instance in the interchange schema.
pub fn save_instance(instance: &ProblemInstance, path: impl AsRef<Path>) -> Result<()> {
    let raw = InstanceFile {
        m: instance.num_measurements(),
        n: instance.num_unknowns(),
        h: (0..instance.num_measurements())
            .map(|i| {
                (0..instance.num_unknowns())
                    .map(|j| instance.mean_matrix()[(i, j)])
                    .collect()
            })
            .collect(),
        y: instance.observation().iter().copied().collect(),
        sigma_e2: instance.sigma_e2(),
        sigma_eps2: instance.sigma_eps2(),
    };
    let text = serde_json::to_string_pretty(&raw).expect("instance serialization cannot fail");
    fs::write(path, text)?;
    Ok(())
}

/// Writes a solution. Numeric fields use shortest round-trip decimal encoding,
/// so `load_solution(save_solution(s))` reproduces every value bit-exactly.
/// Every numeric field must be finite except the decision scalar, whose
/// `-inf` maps to the `"-inf"` sentinel.
pub fn save_solution(solution: &MlSolution, path: impl AsRef<Path>) -> Result<()> {
    let finite_vecs = [
        ("x_hat", &solution.x_hat),
        ("x_tilde_star", &solution.x_tilde_star),
        ("w", &solution.certificate.w),
        ("eta", &solution.certificate.eta),
    ];
    for (name, v) in finite_vecs {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEntry(name.into()));
        }
    }
    for (name, v) in [
        ("nu_star", solution.nu_star),
        ("objective", solution.objective_value),
        ("z", solution.certificate.z),
        ("kkt_residual_max", solution.certificate.kkt_residual_max),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFiniteEntry(name.into()));
        }
    }
    if !solution.certificate.s_value.is_finite()
        && solution.certificate.s_value != f64::NEG_INFINITY
    {
        return Err(Error::NonFiniteEntry("S".into()));
    }
    let raw = SolutionFile {
        x_hat: solution.x_hat.iter().copied().collect(),
        x_tilde_star: solution.x_tilde_star.iter().copied().collect(),
        nu_star: solution.nu_star,
        case: solution.case_tag,
        multiplicity: solution.multiplicity,
        objective: solution.objective_value,
        certificate: CertificateFile {
            w: solution.certificate.w.iter().copied().collect(),
            z: solution.certificate.z,
            eta: solution.certificate.eta.iter().copied().collect(),
            s: solution.certificate.s_value,
            kkt_residual_max: solution.certificate.kkt_residual_max,
        },
    };
    let text = serde_json::to_string_pretty(&raw).map_err(|e| Error::MalformedFile(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Reads a solution file back. Only structural validity is checked here; tying
/// the solution to an instance is the job of `verify::kkt_check`.
pub fn load_solution(path: impl AsRef<Path>) -> Result<MlSolution> {
    let text = fs::read_to_string(path)?;
    let raw: SolutionFile = parse_json(&text)?;
    let n = raw.x_hat.len();
    if raw.x_tilde_star.len() != n || raw.certificate.w.len() != n || raw.certificate.eta.len() != n
    {
        return Err(Error::DimensionMismatch(
            "x_hat, x_tilde_star, w, eta must share one length".into(),
        ));
    }
    Ok(MlSolution {
        x_hat: DVector::from_vec(raw.x_hat),
        x_tilde_star: DVector::from_vec(raw.x_tilde_star),
        nu_star: raw.nu_star,
        case_tag: raw.case,
        multiplicity: raw.multiplicity,
        objective_value: raw.objective,
        certificate: DualCertificate {
            w: DVector::from_vec(raw.certificate.w),
            z: raw.certificate.z,
            nu: raw.nu_star,
            eta: DVector::from_vec(raw.certificate.eta),
            s_value: raw.certificate.s,
            kkt_residual_max: raw.certificate.kkt_residual_max,
        },
    })
}
