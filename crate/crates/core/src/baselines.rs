//! Reference estimators (least squares, oracle least squares, total least
//! squares) and the Cramér–Rao bound used for comparisons.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff shared by the pseudo-inverse based routines.
const RANK_TOL_REL: f64 = 1e-10;

/// Minimum-norm least-squares solution `H^+ y` via the SVD.
pub fn ls(h: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = h
        .clone()
        .try_svd(true, true, f64::EPSILON * 5.0, 10_000)
        .ok_or(Error::SvdFailure)?;
    let lam1 = if svd.singular_values.len() > 0 {
        svd.singular_values[0]
    } else {
        0.0
    };
    svd.solve(y, RANK_TOL_REL * lam1.max(f64::MIN_POSITIVE))
        .map_err(|_| Error::SvdFailure)
}

/// Least squares against the realized matrix `H + E`. Infeasible in practice;
/// serves as a lower-error baseline when the perturbation is known.
pub fn oracle_ls(h: &DMatrix<f64>, e: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if e.shape() != h.shape() {
        return Err(Error::DimensionMismatch(format!(
            "E is {:?} but H is {:?}",
            e.shape(),
            h.shape()
        )));
    }
    ls(&(h + e), y)
}

/// Classical total least squares.
///
/// Requires `rank(H) = N` and the genericity condition
/// `sigma_min([H | y]) < sigma_min(H)` (strict). The estimate solves
/// `(H^T H - sigma_min^2([H|y]) I) x = H^T y`.
pub fn tls(h: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = h.shape();
    let svd_h = h
        .clone()
        .try_svd(false, false, f64::EPSILON * 5.0, 10_000)
        .ok_or(Error::SvdFailure)?;
    let sv_h = &svd_h.singular_values;
    let lam1 = sv_h[0];
    if m < n || sv_h[n - 1] <= RANK_TOL_REL * lam1 {
        return Err(Error::RankDeficient(
            "TLS requires full column rank".into(),
        ));
    }
    let sigma_n_h = sv_h[n - 1];

    let mut aug = DMatrix::zeros(m, n + 1);
    aug.view_mut((0, 0), (m, n)).copy_from(h);
    aug.set_column(n, y);
    let svd_aug = aug
        .try_svd(false, false, f64::EPSILON * 5.0, 10_000)
        .ok_or(Error::SvdFailure)?;
    let sv = &svd_aug.singular_values;
    // the (N+1)-th singular value of an M x (N+1) matrix is zero when M <= N
    let sigma_min_aug = if sv.len() == n + 1 { sv[n] } else { 0.0 };
    if sv.len() == n + 1 && (sv[n - 1] - sv[n]).abs() <= 1e-12 * sv[0].max(1.0) {
        return Err(Error::TlsNongeneric(
            "smallest singular value of [H | y] is not simple".into(),
        ));
    }
    if sigma_min_aug >= sigma_n_h * (1.0 - 1e-12) {
        return Err(Error::TlsNongeneric(format!(
            "sigma_min([H|y]) = {sigma_min_aug} does not fall below sigma_min(H) = {sigma_n_h}"
        )));
    }

    let shifted = h.transpose() * h - DMatrix::identity(n, n) * (sigma_min_aug * sigma_min_aug);
    let rhs = h.transpose() * y;
    // positive definite because sigma_min_aug < sigma_min(H)
    let chol = shifted
        .cholesky()
        .ok_or_else(|| Error::TlsNongeneric("shifted normal matrix not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

/// Fisher information and Cramér–Rao bound for the random-matrix model.
#[derive(Debug, Clone)]
pub struct CrbResult {
    /// `N x N` symmetric positive-semidefinite Fisher information matrix.
    pub fim: DMatrix<f64>,
    /// Trace of the FIM pseudo-inverse.
    pub crb_trace: f64,
    /// True when the FIM is numerically invertible.
    pub well_posed: bool,
}

/// Closed-form Fisher information for mean `H x` and covariance
/// `(sigma_e2 ||x||^2 + sigma_eps2) I`:
///
/// ```text
/// FIM = H^T H / s + 2 M sigma_e2^2 x x^T / s^2,   s = sigma_e2 ||x||^2 + sigma_eps2
/// ```
///
/// The first term is the usual linear-model information; the second comes
/// from the dependence of the covariance on `||x||`.
pub fn crb(h: &DMatrix<f64>, x_true: &DVector<f64>, sigma_e2: f64, sigma_eps2: f64) -> CrbResult {
    let n = h.ncols();
    assert_eq!(x_true.len(), n, "x_true has the wrong length");
    let m = h.nrows() as f64;
    let s = sigma_e2 * x_true.norm_squared() + sigma_eps2;
    assert!(s > 0.0, "total variance must be positive");
    let mut fim = (h.transpose() * h) / s;
    let coeff = 2.0 * m * sigma_e2 * sigma_e2 / (s * s);
    fim += x_true * x_true.transpose() * coeff;
    // symmetrize away rounding asymmetry before the eigendecomposition
    let fim = (&fim + fim.transpose()) * 0.5;
    let eig = fim.clone().symmetric_eigen();
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = RANK_TOL_REL * lam_max;
    let well_posed = lam_max > 0.0 && eig.eigenvalues.iter().all(|&l| l > cutoff);
    let crb_trace = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > cutoff)
        .map(|&l| 1.0 / l)
        .sum();
    CrbResult {
        fim,
        crb_trace,
        well_posed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randmat(m: usize, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(rng))
    }

    fn randvec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn ls_identity() {
        let h = DMatrix::identity(2, 2);
        let y = DVector::from_column_slice(&[1.0, 2.0]);
        let x = ls(&h, &y).unwrap();
        assert_relative_eq!(x, y, epsilon = 1e-14);
    }

    #[test]
    fn ls_row_vector_hand_value() {
        let h = DMatrix::from_row_slice(1, 2, &[1.93, 2.61]);
        let y = DVector::from_column_slice(&[2.86]);
        let x = ls(&h, &y).unwrap();
        let scale = 2.86 / 10.537;
        assert_relative_eq!(x[0], scale * 1.93, epsilon = 1e-12);
        assert_relative_eq!(x[1], scale * 2.61, epsilon = 1e-12);
    }

    #[test]
    fn ls_rank_deficient_stays_in_the_range_of_the_pseudo_inverse() {
        // exactly duplicated columns: the solution lives in span{[1,1]/sqrt(2)}
        let h = DMatrix::from_row_slice(4, 2, &[
            -0.44, -0.44, 0.48, 0.48, -0.89, -0.89, -1.07, -1.07,
        ]);
        let y = DVector::from_column_slice(&[-0.16, 0.28, -0.30, -1.17]);
        let x = ls(&h, &y).unwrap();
        assert_relative_eq!(x[0], x[1], epsilon = 1e-12);
        // adding a null-space component keeps the residual, grows the norm
        let null_dir = DVector::from_column_slice(&[1.0, -1.0]);
        let perturbed: DVector<f64> = &x + 0.5 * &null_dir;
        let res_x = (&y - &h * &x).norm();
        let res_p = (&y - &h * &perturbed).norm();
        assert_abs_diff_eq!(res_x, res_p, epsilon = 1e-12);
        assert!(perturbed.norm() > x.norm());
    }

    #[test]
    fn oracle_ls_with_zero_perturbation_is_plain_ls() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = randmat(5, 3, &mut rng);
        let y = randvec(5, &mut rng);
        let e = DMatrix::zeros(5, 3);
        assert_relative_eq!(
            oracle_ls(&h, &e, &y).unwrap(),
            ls(&h, &y).unwrap(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn oracle_ls_recovers_exactly_on_a_noiseless_trial() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = randmat(5, 3, &mut rng);
        let e = randmat(5, 3, &mut rng) * 0.3;
        let x_true = randvec(3, &mut rng);
        let y = (&h + &e) * &x_true;
        let x = oracle_ls(&h, &e, &y).unwrap();
        assert_relative_eq!(x, x_true, epsilon = 1e-10);
    }

    #[test]
    fn oracle_ls_rejects_mismatched_perturbation() {
        let h = DMatrix::identity(2, 2);
        let e = DMatrix::zeros(3, 2);
        let y = DVector::from_column_slice(&[1.0, 2.0]);
        assert!(matches!(
            oracle_ls(&h, &e, &y),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn tls_with_exact_fit_reduces_to_ls() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = randmat(6, 2, &mut rng);
        let x_true = randvec(2, &mut rng);
        let y = &h * &x_true;
        let x = tls(&h, &y).unwrap();
        assert_relative_eq!(x, x_true, epsilon = 1e-8);
    }

    #[test]
    fn tls_residual_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let h = randmat(8, 3, &mut rng);
            let y = &h * randvec(3, &mut rng) + 0.3 * randvec(8, &mut rng);
            let x = tls(&h, &y).unwrap();
            let mut aug = DMatrix::zeros(8, 4);
            aug.view_mut((0, 0), (8, 3)).copy_from(&h);
            aug.set_column(3, &y);
            let smin = aug.svd(false, false).singular_values[3];
            let lhs = (&y - &h * &x).norm_squared() / (1.0 + x.norm_squared());
            assert_relative_eq!(lhs, smin * smin, epsilon = 1e-8, max_relative = 1e-8);
        }
    }

    #[test]
    fn tls_rejects_rank_deficient_design() {
        let h = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        assert!(matches!(tls(&h, &y), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn crb_gaussian_linear_model_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = randmat(6, 3, &mut rng);
        let x = randvec(3, &mut rng);
        let out = crb(&h, &x, 0.0, 0.25);
        let expected = (h.transpose() * &h) / 0.25;
        assert_relative_eq!(out.fim, expected, epsilon = 1e-12);
        assert!(out.well_posed);
    }

    #[test]
    fn crb_zero_mean_matrix_still_carries_information() {
        let h = DMatrix::zeros(5, 1);
        let x = DVector::from_column_slice(&[0.8]);
        let se2 = 0.2;
        let sn2 = 0.05;
        let s = se2 * 0.64 + sn2;
        let out = crb(&h, &x, se2, sn2);
        let expected = 2.0 * 5.0 * se2 * se2 * 0.64 / (s * s);
        assert_relative_eq!(out.fim[(0, 0)], expected, epsilon = 1e-12);
        assert!(out.well_posed);
        assert_relative_eq!(out.crb_trace, 1.0 / expected, epsilon = 1e-12);
    }

    #[test]
    fn crb_flags_singular_information() {
        // rank-deficient H with x inside its row space: the direction that is
        // orthogonal to both the row space and x carries no information
        let h = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let x = DVector::from_column_slice(&[0.5, 0.5]);
        let out = crb(&h, &x, 0.1, 0.05);
        assert!(!out.well_posed);
        assert!(out.crb_trace >= 0.0 && out.crb_trace.is_finite());
        // x with a null-space component restores identifiability through the
        // norm information in the covariance
        let x2 = DVector::from_column_slice(&[0.5, -0.5]);
        assert!(crb(&h, &x2, 0.1, 0.05).well_posed);
    }

    #[test]
    fn crb_trace_matches_the_rank_one_update_formula() {
        // second route: with A = H^T H / s the trace of the inverse is
        // tr(A^-1) - c ||A^-1 x||^2 / (1 + c x^T A^-1 x), c = 2 M sigma_e2^2 / s^2
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let h = randmat(7, 3, &mut rng);
            let x = randvec(3, &mut rng);
            let (se2, sn2) = (0.3, 0.04);
            let s = se2 * x.norm_squared() + sn2;
            let a_inv = ((h.transpose() * &h) / s).try_inverse().unwrap();
            let c = 2.0 * 7.0 * se2 * se2 / (s * s);
            let ax = &a_inv * &x;
            let direct = a_inv.trace() - c * ax.norm_squared() / (1.0 + c * x.dot(&ax));
            let out = crb(&h, &x, se2, sn2);
            assert_relative_eq!(out.crb_trace, direct, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn crb_matches_the_empirical_score_covariance() {
        // score of the Gaussian likelihood with mean Hx and variance s(x):
        //   H^T r / s + ||r||^2 sigma_e2 x / s^2 - M sigma_e2 x / s
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = 4;
        let n = 2;
        let h = randmat(m, n, &mut rng);
        let x = randvec(n, &mut rng);
        let se2 = 0.15;
        let sn2 = 0.07;
        let s = se2 * x.norm_squared() + sn2;
        let out = crb(&h, &x, se2, sn2);

        let draws = 100_000;
        let mut acc = DMatrix::<f64>::zeros(n, n);
        let mean = &h * &x;
        let sd = s.sqrt();
        for _ in 0..draws {
            let y = &mean + sd * randvec(m, &mut rng);
            let r = &y - &mean;
            let score = h.transpose() * &r / s + &x * (r.norm_squared() * se2 / (s * s))
                - &x * (m as f64 * se2 / s);
            acc += &score * score.transpose();
        }
        let emp = acc / draws as f64;
        let diff = (&emp - &out.fim).symmetric_eigen();
        let err = diff.eigenvalues.iter().fold(0.0_f64, |a, &l| a.max(l.abs()));
        let scale = out.fim.clone().symmetric_eigen().eigenvalues.amax();
        assert!(
            err / scale < 0.02,
            "score covariance deviates from the FIM by {:.3}%",
            100.0 * err / scale
        );
    }
}
