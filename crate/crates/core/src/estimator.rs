//! The maximum-likelihood solver: spectral reduction, case dispatch on the
//! rank and the decision scalar, bisection on the dual stationarity function,
//! and recovery of the estimate.
//!
//! The solver minimizes
//!
//! ```text
//! f(x) = ||y - H x||^2 / (2 (sigma_e2 ||x||^2 + sigma_eps2))
//!        + (M/2) log(sigma_e2 ||x||^2 + sigma_eps2)
//! ```
//!
//! by rotating into the SVD basis of `H`, lifting to a convex problem in
//! `(w, z) = (x_tilde^2 z, 1/variance)`, and solving the KKT system. The
//! dispatch depends on the numerical rank `R` and the decision scalar `S`:
//! closed forms when the equality multiplier vanishes, otherwise a bisection
//! for the root of the monotone scalar function `g(nu)`.
//!
//! Everything here is a pure function of its inputs; concurrent calls on
//! distinct instances need no synchronization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    CaseTag, DualCertificate, MlSolution, Multiplicity, ProblemInstance, SpectralForm,
};

/// How the free null-space mass is distributed in the closed-form case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreeMassAllocation {
    /// All mass on the first free index. Deterministic canonical choice.
    FirstIndex,
    /// Mass split evenly over all free indices.
    Uniform,
}

/// Which side of zero the dual root is bracketed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BracketHint {
    /// Root in `(0, M/2]`; requires `g(0) < 0`.
    Positive,
    /// Root in `(-lambda_R^2 / (2 sigma_e2), 0)`; requires `g(0) > 0` and
    /// full column rank.
    Negative,
}

/// Every tolerance the solver depends on.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// A singular value counts toward the rank iff it exceeds
    /// `rank_tol_rel * lambda_1`.
    pub rank_tol_rel: f64,
    /// The tail energy is treated as zero (decision scalar `-inf`) when it is
    /// at most `tail_energy_tol * max(1, ||y||^2)`.
    pub tail_energy_tol: f64,
    /// Bisection stops when the bracket is narrower than
    /// `bisect_tol_nu_rel * max(1, |nu|)`.
    pub bisect_tol_nu_rel: f64,
    /// Bisection stops when `|g(nu)|` falls below this.
    pub bisect_tol_g_abs: f64,
    pub max_bisect_iters: usize,
    /// Fraction by which the distance to the pole shrinks per expansion step
    /// when hunting for a negative bracket endpoint.
    pub pole_approach_factor: f64,
    /// Sign given to free components, `+1.0` or `-1.0`.
    pub sign_convention_free: f64,
    pub free_mass_allocation: FreeMassAllocation,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rank_tol_rel: 1e-10,
            tail_energy_tol: 1e-12,
            bisect_tol_nu_rel: 1e-13,
            bisect_tol_g_abs: 1e-12,
            max_bisect_iters: 200,
            pole_approach_factor: 0.5,
            sign_convention_free: 1.0,
            free_mass_allocation: FreeMassAllocation::FirstIndex,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rank_tol_rel", self.rank_tol_rel),
            ("tail_energy_tol", self.tail_energy_tol),
            ("bisect_tol_nu_rel", self.bisect_tol_nu_rel),
            ("bisect_tol_g_abs", self.bisect_tol_g_abs),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidOptions(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.max_bisect_iters < 1 {
            return Err(Error::InvalidOptions("max_bisect_iters must be >= 1".into()));
        }
        if !(self.pole_approach_factor > 0.0 && self.pole_approach_factor < 1.0) {
            return Err(Error::InvalidOptions(format!(
                "pole_approach_factor must lie in (0, 1), got {}",
                self.pole_approach_factor
            )));
        }
        if self.sign_convention_free != 1.0 && self.sign_convention_free != -1.0 {
            return Err(Error::InvalidOptions(format!(
                "sign_convention_free must be +1 or -1, got {}",
                self.sign_convention_free
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Spectral reduction
// ---------------------------------------------------------------------------

/// Extends a matrix with orthonormal columns to a full orthogonal basis by
/// Gram-Schmidt against the standard basis. Deterministic.
fn complete_orthonormal(thin: DMatrix<f64>) -> DMatrix<f64> {
    let n = thin.nrows();
    let k = thin.ncols();
    let mut full = DMatrix::zeros(n, n);
    full.view_mut((0, 0), (n, k)).copy_from(&thin);
    let mut filled = k;
    for basis in 0..n {
        if filled == n {
            break;
        }
        let mut cand = DVector::zeros(n);
        cand[basis] = 1.0;
        // two orthogonalization passes for numerical safety
        for _ in 0..2 {
            for j in 0..filled {
                let col = full.column(j);
                let proj = col.dot(&cand);
                cand -= proj * DVector::from_column_slice(col.as_slice());
            }
        }
        let norm = cand.norm();
        if norm > 1e-8 {
            full.set_column(filled, &(cand / norm));
            filled += 1;
        }
    }
    assert_eq!(filled, n, "orthonormal completion failed");
    full
}

/// Computes the SVD of `H`, the numerical rank, and the rotated observation.
///
/// The rank is the count of singular values above `rank_tol_rel * lambda_1`;
/// `R = 0` is allowed. The tail energy is `||y||^2 - ||y_tilde_{1:R}||^2`
/// clamped at zero, which equals `||y_tilde_{R+1:M}||^2` without ever
/// materializing the full left factor.
pub fn decompose(instance: &ProblemInstance, opts: &SolverOptions) -> Result<SpectralForm> {
    let h = instance.mean_matrix();
    // the deflation logic of the backend needs the convergence epsilon at
    // 5 ulps (its own default); tighter values miscompute exactly
    // rank-deficient inputs
    let svd = h
        .clone()
        .try_svd(true, true, f64::EPSILON * 5.0, 10_000)
        .ok_or(Error::SvdFailure)?;
    let sv = &svd.singular_values;
    let lam1 = if sv.len() > 0 { sv[0] } else { 0.0 };
    let rank = if lam1 > 0.0 {
        sv.iter().filter(|&&s| s > opts.rank_tol_rel * lam1).count()
    } else {
        0
    };
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");

    // probe the factorization before trusting it: H p must match U S V^T p
    let n = instance.num_unknowns();
    let k = sv.len();
    let probe = DVector::from_fn(n, |i, _| (i as f64 * 0.734 + 0.41).sin() + 0.1);
    let rotated = (&v_t * &probe).component_mul(&DVector::from_iterator(k, sv.iter().copied()));
    let residual = (h * &probe - &u * rotated).norm();
    if residual > 1e-8 * (lam1 * probe.norm()).max(1.0) {
        return Err(Error::SvdFailure);
    }

    let v_thin = v_t.transpose();
    let v = if v_thin.ncols() == n {
        v_thin
    } else {
        complete_orthonormal(v_thin)
    };
    let lambdas = DVector::from_iterator(rank, sv.iter().take(rank).copied());
    Ok(SpectralForm::from_parts(u, v, lambdas, rank, instance.observation()))
}

// ---------------------------------------------------------------------------
// Objective and scalar dual function
// ---------------------------------------------------------------------------

/// Negative log-likelihood of the model at `x`, dropping constant terms.
pub fn neg_log_likelihood(instance: &ProblemInstance, x: &DVector<f64>) -> f64 {
    assert_eq!(x.len(), instance.num_unknowns(), "x has the wrong length");
    let s = instance.sigma_e2() * x.norm_squared() + instance.sigma_eps2();
    let residual = instance.observation() - instance.mean_matrix() * x;
    let m = instance.num_measurements() as f64;
    residual.norm_squared() / (2.0 * s) + 0.5 * m * s.ln()
}

/// Decision scalar `S` selecting the KKT branch.
///
/// Returns `-inf` when the rotated tail energy is below
/// `tail_energy_tol * max(1, ||y||^2)`, which covers `R = M`.
pub fn compute_s(
    spec: &SpectralForm,
    sigma_e2: f64,
    sigma_eps2: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    if sigma_e2 == 0.0 {
        return Err(Error::ZeroSigmaE);
    }
    let tail = spec.tail_energy();
    if tail <= opts.tail_energy_tol * spec.y_norm2().max(1.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let m = spec.num_measurements() as f64;
    let head_sum: f64 = (0..spec.rank())
        .map(|j| {
            let yj = spec.y_tilde()[j];
            let lj = spec.lambdas()[j];
            yj * yj / (lj * lj)
        })
        .sum();
    Ok(1.0 / sigma_e2 - (head_sum + sigma_eps2 / sigma_e2) * m / tail)
}

/// Rightmost pole of `g`; `None` when `R = 0` or `sigma_e2 = 0` (no poles).
fn g_pole(spec: &SpectralForm, sigma_e2: f64) -> Option<f64> {
    if spec.rank() == 0 || sigma_e2 == 0.0 {
        None
    } else {
        let lam_r = spec.lambdas()[spec.rank() - 1];
        Some(-lam_r * lam_r / (2.0 * sigma_e2))
    }
}

fn check_pole(nu: f64, spec: &SpectralForm, sigma_e2: f64) -> Result<()> {
    if let Some(pole) = g_pole(spec, sigma_e2) {
        if nu <= pole {
            return Err(Error::PoleViolation { nu, pole });
        }
    }
    Ok(())
}

/// The scalar dual stationarity function `g(nu)`, monotone increasing on
/// `(-lambda_R^2 / (2 sigma_e2), M/2]`; its root is the optimal multiplier.
pub fn g_of_nu(nu: f64, spec: &SpectralForm, sigma_e2: f64, sigma_eps2: f64) -> Result<f64> {
    check_pole(nu, spec, sigma_e2)?;
    let m = spec.num_measurements() as f64;
    let mut lift_sum = 0.0;
    let mut z_sum = 0.0;
    for j in 0..spec.rank() {
        let yj2 = spec.y_tilde()[j] * spec.y_tilde()[j];
        let lj2 = spec.lambdas()[j] * spec.lambdas()[j];
        let denom = lj2 + 2.0 * nu * sigma_e2;
        lift_sum += yj2 * nu * sigma_e2 / denom;
        z_sum += sigma_e2 * yj2 * lj2 / (denom * denom);
    }
    Ok(lift_sum + 0.5 * spec.tail_energy() - 0.5 * m * (z_sum + sigma_eps2) + nu * sigma_eps2)
}

/// First derivative of `g`; strictly positive right of the pole.
pub fn g_prime_of_nu(nu: f64, spec: &SpectralForm, sigma_e2: f64, sigma_eps2: f64) -> Result<f64> {
    check_pole(nu, spec, sigma_e2)?;
    let m = spec.num_measurements() as f64;
    let mut first = 0.0;
    let mut second = 0.0;
    for j in 0..spec.rank() {
        let yj2 = spec.y_tilde()[j] * spec.y_tilde()[j];
        let lj2 = spec.lambdas()[j] * spec.lambdas()[j];
        let denom = lj2 + 2.0 * nu * sigma_e2;
        first += yj2 * lj2 * sigma_e2 / (denom * denom);
        second += sigma_e2 * sigma_e2 * yj2 * lj2 / (denom * denom * denom);
    }
    Ok(first + 2.0 * m * second + sigma_eps2)
}

// ---------------------------------------------------------------------------
// Bisection
// ---------------------------------------------------------------------------

/// Plain bisection for an increasing function with `g(lo) < 0 < g(hi)`,
/// followed by a few safeguarded Newton steps that push `|g|` down to the
/// function tolerance when the width criterion fired first. Kept generic so
/// tests can drive it with synthetic functions.
fn bisect_monotone<F: Fn(f64) -> f64, D: Fn(f64) -> f64>(
    g: F,
    g_deriv: D,
    mut lo: f64,
    mut hi: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    let mut root = None;
    for _ in 0..opts.max_bisect_iters {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() <= opts.bisect_tol_g_abs
            || (hi - lo) <= opts.bisect_tol_nu_rel * mid.abs().max(1.0)
        {
            root = Some(mid);
            break;
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut nu = root.ok_or(Error::MaxIterExceeded(opts.max_bisect_iters))?;
    let mut best = (g(nu).abs(), nu);
    for _ in 0..5 {
        if best.0 <= opts.bisect_tol_g_abs {
            break;
        }
        let slope = g_deriv(nu);
        if !(slope > 0.0) {
            break;
        }
        let next = (nu - g(nu) / slope).clamp(lo, hi);
        let quality = g(next).abs();
        if quality >= best.0 {
            break;
        }
        best = (quality, next);
        nu = next;
    }
    Ok(best.1)
}

/// Finds the root of `g` on the side of zero named by `hint`.
///
/// `Positive` searches `(0, M/2]` (the function is nonnegative at `M/2`);
/// `Negative` walks its left endpoint geometrically toward the pole until the
/// function goes negative there, then bisects against zero.
pub fn bisect_dual(
    spec: &SpectralForm,
    sigma_e2: f64,
    sigma_eps2: f64,
    hint: BracketHint,
    opts: &SolverOptions,
) -> Result<f64> {
    if sigma_e2 <= 0.0 {
        return Err(Error::ZeroSigmaE);
    }
    let g = |nu: f64| {
        g_of_nu(nu, spec, sigma_e2, sigma_eps2).expect("bracket stays right of the pole")
    };
    let g0 = g(0.0);
    // boundary root: the decision scalar sits at zero up to rounding and the
    // dual stationarity already holds at nu = 0
    if g0.abs() <= opts.bisect_tol_g_abs {
        return Ok(0.0);
    }
    match hint {
        BracketHint::Positive => {
            if g0 >= 0.0 {
                return Err(Error::BracketFailure(format!(
                    "positive bracket needs g(0) < 0, got {g0}"
                )));
            }
            let hi = 0.5 * spec.num_measurements() as f64;
            let ghi = g(hi);
            if ghi.abs() <= opts.bisect_tol_g_abs {
                return Ok(hi);
            }
            if ghi < 0.0 {
                return Err(Error::BracketFailure(format!(
                    "g(M/2) = {ghi} is negative; no root in (0, M/2]"
                )));
            }
            let gp = |nu: f64| {
                g_prime_of_nu(nu, spec, sigma_e2, sigma_eps2)
                    .expect("bracket stays right of the pole")
            };
            bisect_monotone(g, gp, 0.0, hi, opts)
        }
        BracketHint::Negative => {
            if spec.rank() != spec.num_unknowns() {
                return Err(Error::BracketFailure(
                    "negative bracket requires full column rank".into(),
                ));
            }
            if g0 <= 0.0 {
                return Err(Error::BracketFailure(format!(
                    "negative bracket needs g(0) > 0, got {g0}"
                )));
            }
            let pole = g_pole(spec, sigma_e2).ok_or_else(|| {
                Error::BracketFailure("negative bracket needs at least one singular value".into())
            })?;
            // g -> -inf at the pole but overflows if evaluated too close;
            // shrink the distance geometrically until the sign flips.
            let mut frac = 0.5;
            let mut lo = pole * (1.0 - frac);
            let mut found = false;
            for _ in 0..60 {
                if g(lo) < 0.0 {
                    found = true;
                    break;
                }
                frac *= opts.pole_approach_factor;
                lo = pole * (1.0 - frac);
            }
            if !found {
                return Err(Error::BracketFailure(
                    "no sign change found while approaching the pole".into(),
                ));
            }
            let gp = |nu: f64| {
                g_prime_of_nu(nu, spec, sigma_e2, sigma_eps2)
                    .expect("bracket stays right of the pole")
            };
            bisect_monotone(g, gp, lo, 0.0, opts)
        }
    }
}

// ---------------------------------------------------------------------------
// Lifted objective
// ---------------------------------------------------------------------------

/// Objective of the lifted convex problem at `(w, z)`.
///
/// The noise variances enter only the companion linear constraint, not this
/// value. `w` must be the full length-`N` nonnegative vector; components past
/// the rank carry no objective weight.
pub fn lifted_objective(w: &DVector<f64>, z: f64, spec: &SpectralForm) -> f64 {
    assert!(z > 0.0, "z must be positive");
    assert_eq!(w.len(), spec.num_unknowns(), "w must have length N");
    assert!(w.iter().all(|&wj| wj >= 0.0), "w must be nonnegative");
    let m = spec.num_measurements() as f64;
    let mut total = 0.5 * spec.tail_energy() * z - 0.5 * m * z.ln();
    for j in 0..spec.rank() {
        let yj = spec.y_tilde()[j].abs();
        let lj = spec.lambdas()[j];
        total += 0.5 * (yj * yj * z + lj * lj * w[j] - 2.0 * yj * lj * (w[j] * z).sqrt());
    }
    total
}

// ---------------------------------------------------------------------------
// Solve
// ---------------------------------------------------------------------------

/// Largest absolute residual over the KKT relations at `(w, z, nu, eta)`.
/// Used to stamp certificates; `verify::kkt_check` re-derives everything
/// independently from the stored solution.
fn certificate_residual_max(
    spec: &SpectralForm,
    sigma_e2: f64,
    sigma_eps2: f64,
    w: &DVector<f64>,
    z: f64,
    nu: f64,
    eta: &DVector<f64>,
) -> f64 {
    let r = spec.rank();
    let n = spec.num_unknowns();
    let m = spec.num_measurements() as f64;
    let mut worst: f64 = 0.0;
    let mut grad_z = 0.5 * spec.tail_energy() - 0.5 * m / z + nu * sigma_eps2;
    for j in 0..r {
        let yj = spec.y_tilde()[j].abs();
        let lj = spec.lambdas()[j];
        let stat = if w[j] > 0.0 {
            0.5 * lj * lj - 0.5 * yj * lj * (z / w[j]).sqrt() + nu * sigma_e2 - eta[j]
        } else {
            // boundary stationarity: the square-root term vanishes with y_j
            0.5 * lj * lj + nu * sigma_e2 - eta[j]
        };
        worst = worst.max(stat.abs());
        grad_z += 0.5 * yj * yj - 0.5 * yj * lj * (w[j] / z).sqrt();
    }
    worst = worst.max(grad_z.abs());
    for i in r..n {
        worst = worst.max((nu * sigma_e2 - eta[i]).abs());
    }
    let primal = sigma_e2 * w.sum() + sigma_eps2 * z - 1.0;
    worst = worst.max(primal.abs());
    for i in 0..n {
        worst = worst.max((eta[i] * w[i]).abs());
    }
    worst
}

/// Dual variables of the nonnegativity constraints, reconstructed per case.
///
/// Off-rank components carry `nu * sigma_e2`; in-rank components are zero
/// except at the measure-zero boundary `y_tilde_j = 0`, where stationarity
/// pins `eta_j = lambda_j^2 / 2 + nu sigma_e2`.
pub(crate) fn reconstruct_eta(spec: &SpectralForm, sigma_e2: f64, nu: f64) -> DVector<f64> {
    let n = spec.num_unknowns();
    let mut eta = DVector::zeros(n);
    for j in 0..spec.rank() {
        if spec.y_tilde()[j] == 0.0 {
            let lj = spec.lambdas()[j];
            eta[j] = 0.5 * lj * lj + nu * sigma_e2;
        }
    }
    for i in spec.rank()..n {
        eta[i] = nu * sigma_e2;
    }
    eta
}

fn assemble_solution(
    instance: &ProblemInstance,
    spec: &SpectralForm,
    x_tilde: DVector<f64>,
    nu: f64,
    s_value: f64,
    case_tag: CaseTag,
    multiplicity: Multiplicity,
) -> MlSolution {
    let x_hat = spec.v() * &x_tilde;
    let z = 1.0 / (instance.sigma_e2() * x_hat.norm_squared() + instance.sigma_eps2());
    let w = x_tilde.map(|v| v * v * z);
    let (eta, kkt_residual_max) = if case_tag == CaseTag::DegenerateLsFallback {
        // no KKT system applies to the fallback
        (DVector::zeros(spec.num_unknowns()), 0.0)
    } else {
        let eta = reconstruct_eta(spec, instance.sigma_e2(), nu);
        let res = certificate_residual_max(
            spec,
            instance.sigma_e2(),
            instance.sigma_eps2(),
            &w,
            z,
            nu,
            &eta,
        );
        (eta, res)
    };
    let objective_value = neg_log_likelihood(instance, &x_hat);
    MlSolution {
        x_hat,
        x_tilde_star: x_tilde,
        nu_star: nu,
        case_tag,
        multiplicity,
        objective_value,
        certificate: DualCertificate {
            w,
            z,
            nu,
            eta,
            s_value,
            kkt_residual_max,
        },
    }
}

/// Shrinks the in-rank rotated observation by the dual variable:
/// `x_tilde_j = y_tilde_j lambda_j / (lambda_j^2 + 2 nu sigma_e2)`.
fn shrunk_head(spec: &SpectralForm, sigma_e2: f64, nu: f64) -> DVector<f64> {
    let mut x_tilde = DVector::zeros(spec.num_unknowns());
    for j in 0..spec.rank() {
        let yj = spec.y_tilde()[j];
        let lj = spec.lambdas()[j];
        x_tilde[j] = yj * lj / (lj * lj + 2.0 * nu * sigma_e2);
    }
    x_tilde
}

/// Runs the full estimator on a prepared spectral form.
///
/// `spec` must have been built from `instance` (or from its mean matrix and a
/// fresh observation via [`SpectralForm::with_observation`]).
pub fn solve_with_spectral(
    instance: &ProblemInstance,
    spec: &SpectralForm,
    opts: &SolverOptions,
) -> Result<MlSolution> {
    opts.validate()?;
    debug_assert_eq!(spec.num_measurements(), instance.num_measurements());
    debug_assert_eq!(spec.num_unknowns(), instance.num_unknowns());
    let sigma_e2 = instance.sigma_e2();
    let sigma_eps2 = instance.sigma_eps2();
    let n = spec.num_unknowns();
    let r = spec.rank();

    if sigma_e2 == 0.0 {
        // the objective degenerates to least squares with fixed variance
        let mut x_tilde = DVector::zeros(n);
        for j in 0..r {
            x_tilde[j] = spec.y_tilde()[j] / spec.lambdas()[j];
        }
        return Ok(assemble_solution(
            instance,
            spec,
            x_tilde,
            0.0,
            f64::NEG_INFINITY,
            CaseTag::DegenerateLsFallback,
            Multiplicity::Unique,
        ));
    }

    let s = compute_s(spec, sigma_e2, sigma_eps2, opts)?;
    let m = spec.num_measurements() as f64;

    if r < n {
        if s >= 0.0 {
            // nu = 0 closed form with free null-space mass
            let z_star = m / spec.tail_energy();
            let mut x_tilde = DVector::zeros(n);
            for j in 0..r {
                x_tilde[j] = spec.y_tilde()[j] / spec.lambdas()[j];
            }
            let free = n - r;
            let mut w_free = vec![0.0; free];
            match opts.free_mass_allocation {
                FreeMassAllocation::FirstIndex => w_free[0] = s,
                FreeMassAllocation::Uniform => w_free.fill(s / free as f64),
            }
            for (i, wi) in w_free.iter().enumerate() {
                x_tilde[r + i] = opts.sign_convention_free * (wi / z_star).sqrt();
            }
            let multiplicity = if s == 0.0 {
                Multiplicity::Unique
            } else if r == n - 1 {
                Multiplicity::TwoFold { free_index: r }
            } else {
                Multiplicity::Continuum {
                    free_start: r,
                    free_end: n,
                }
            };
            Ok(assemble_solution(
                instance,
                spec,
                x_tilde,
                0.0,
                s,
                CaseTag::RankDeficientNuZero,
                multiplicity,
            ))
        } else {
            let nu = bisect_dual(spec, sigma_e2, sigma_eps2, BracketHint::Positive, opts)?;
            let x_tilde = shrunk_head(spec, sigma_e2, nu);
            Ok(assemble_solution(
                instance,
                spec,
                x_tilde,
                nu,
                s,
                CaseTag::RankDeficientNuPositive,
                Multiplicity::Unique,
            ))
        }
    } else if s == 0.0 {
        let mut x_tilde = DVector::zeros(n);
        for j in 0..n {
            x_tilde[j] = spec.y_tilde()[j] / spec.lambdas()[j];
        }
        Ok(assemble_solution(
            instance,
            spec,
            x_tilde,
            0.0,
            s,
            CaseTag::FullRankSZero,
            Multiplicity::Unique,
        ))
    } else {
        let (hint, tag) = if s > 0.0 {
            (BracketHint::Negative, CaseTag::FullRankNuNegative)
        } else {
            (BracketHint::Positive, CaseTag::FullRankNuPositive)
        };
        let nu = bisect_dual(spec, sigma_e2, sigma_eps2, hint, opts)?;
        let x_tilde = shrunk_head(spec, sigma_e2, nu);
        Ok(assemble_solution(
            instance,
            spec,
            x_tilde,
            nu,
            s,
            tag,
            Multiplicity::Unique,
        ))
    }
}

/// Decomposes and solves in one call.
pub fn solve(instance: &ProblemInstance, opts: &SolverOptions) -> Result<MlSolution> {
    opts.validate()?;
    let spec = decompose(instance, opts)?;
    solve_with_spectral(instance, &spec, opts)
}
