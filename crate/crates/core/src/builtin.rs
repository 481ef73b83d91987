//! Bundled reference instances, one per dispatch branch, with recorded
//! expected outputs.
//!
//! The instance coefficients are stored to two decimals. The recorded decision
//! scalars and dual roots were produced from higher-precision source data than
//! the stored coefficients, and both quantities are sensitive to coefficient
//! rounding (they depend on the reciprocal of the rotated tail energy), so
//! their deltas can exceed the `0.02` gate. The estimates `x_hat` and
//! `|x_tilde|` are insensitive to the rounding and reproduce within the gate.
//! Checks report every delta either way.
//!
//! Because the coefficients are rounded, the design matrices of the first two
//! instances are only approximately rank-deficient; [`reference_options`]
//! widens the rank tolerance to `1e-2` so the decomposition reads them the
//! way they were constructed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::{decompose, solve, SolverOptions};
use crate::model::{CaseTag, Multiplicity, ProblemInstance};

/// Absolute per-component gate used by the example checks.
pub const REFERENCE_TOLERANCE: f64 = 0.02;

/// Solver options for the two-decimal reference data.
pub fn reference_options() -> SolverOptions {
    SolverOptions {
        rank_tol_rel: 1e-2,
        ..SolverOptions::default()
    }
}

/// A stored instance plus its recorded outputs.
#[derive(Debug, Clone)]
pub struct ReferenceExample {
    pub id: usize,
    h: Vec<Vec<f64>>,
    y: Vec<f64>,
    sigma_e2: f64,
    sigma_eps2: f64,
    /// Recorded decision scalar (`-inf` for the vanishing-tail instance).
    pub expected_s: f64,
    /// Recorded dual root; 0 for the closed-form branch.
    pub expected_nu: f64,
    /// Recorded rotated estimate, compared by absolute value since the sign
    /// conventions of a singular basis are arbitrary.
    pub expected_x_tilde_abs: Vec<f64>,
    /// Recorded optima; two entries when the optimum is two-fold.
    pub expected_x_hats: Vec<Vec<f64>>,
    pub expected_case: CaseTag,
}

impl ReferenceExample {
    pub fn instance(&self) -> ProblemInstance {
        let m = self.h.len();
        let n = self.h[0].len();
        let h = DMatrix::from_fn(m, n, |i, j| self.h[i][j]);
        ProblemInstance::new(h, DVector::from_vec(self.y.clone()), self.sigma_e2, self.sigma_eps2)
            .expect("reference data is valid")
    }
}

/// Returns one of the five bundled examples, `id` in `1..=5`.
pub fn reference_example(id: usize) -> Result<ReferenceExample> {
    let ex = match id {
        1 => ReferenceExample {
            id,
            h: vec![
                vec![-0.44, -0.43],
                vec![0.48, 0.46],
                vec![-0.89, -0.85],
                vec![-1.07, -1.03],
            ],
            y: vec![-0.16, 0.28, -0.30, -1.17],
            sigma_e2: 0.10,
            sigma_eps2: 0.03,
            expected_s: 0.2175,
            expected_nu: 0.0,
            expected_x_tilde_abs: vec![0.53, 0.41],
            expected_x_hats: vec![vec![0.66, 0.07], vec![0.10, 0.66]],
            expected_case: CaseTag::RankDeficientNuZero,
        },
        2 => ReferenceExample {
            id,
            h: vec![
                vec![0.14, -1.16],
                vec![-0.23, 1.86],
                vec![0.04, -0.33],
                vec![-0.40, 3.23],
            ],
            y: vec![-0.13, 0.55, 0.01, 0.40],
            sigma_e2: 0.10,
            sigma_eps2: 0.03,
            expected_s: -6.00,
            expected_nu: 0.75,
            expected_x_tilde_abs: vec![0.16, 0.00],
            expected_x_hats: vec![vec![-0.02, 0.16]],
            expected_case: CaseTag::RankDeficientNuPositive,
        },
        3 => ReferenceExample {
            id,
            h: vec![vec![1.93, 2.61]],
            y: vec![2.86],
            sigma_e2: 0.10,
            sigma_eps2: 0.03,
            expected_s: f64::NEG_INFINITY,
            expected_nu: 0.50,
            expected_x_tilde_abs: vec![0.87, 0.00],
            expected_x_hats: vec![vec![0.52, 0.70]],
            expected_case: CaseTag::RankDeficientNuPositive,
        },
        4 => ReferenceExample {
            id,
            h: vec![
                vec![-1.92, -0.05],
                vec![0.74, -0.04],
                vec![-2.36, -0.66],
                vec![-0.61, -0.30],
            ],
            y: vec![-0.85, 0.45, -1.27, -0.82],
            sigma_e2: 0.10,
            sigma_eps2: 0.03,
            expected_s: -10.07,
            expected_nu: 0.64,
            expected_x_tilde_abs: vec![0.53, 0.35],
            expected_x_hats: vec![vec![0.45, 0.44]],
            expected_case: CaseTag::FullRankNuPositive,
        },
        5 => ReferenceExample {
            id,
            h: vec![
                vec![-0.40, 0.71],
                vec![0.64, -0.64],
                vec![2.65, -1.85],
                vec![-1.39, 1.43],
            ],
            y: vec![0.06, -0.20, 0.20, -0.48],
            sigma_e2: 0.10,
            sigma_eps2: 0.03,
            expected_s: 2.87,
            expected_nu: -0.48,
            expected_x_tilde_abs: vec![0.09, 0.27],
            expected_x_hats: vec![vec![-0.10, -0.26]],
            expected_case: CaseTag::FullRankNuNegative,
        },
        _ => {
            return Err(Error::DomainViolation(format!(
                "reference example id must be in 1..=5, got {id}"
            )))
        }
    };
    Ok(ex)
}

/// One compared quantity.
#[derive(Debug, Clone)]
pub struct CheckRow {
    pub quantity: String,
    pub expected: f64,
    pub computed: f64,
    pub delta: f64,
    pub pass: bool,
}

impl CheckRow {
    fn new(quantity: impl Into<String>, expected: f64, computed: f64) -> Self {
        // the -inf sentinel matches only itself
        let delta = if expected == f64::NEG_INFINITY || computed == f64::NEG_INFINITY {
            if expected == computed {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (expected - computed).abs()
        };
        Self {
            quantity: quantity.into(),
            expected,
            computed,
            delta,
            pass: delta <= REFERENCE_TOLERANCE,
        }
    }
}

/// Outcome of running one bundled check.
#[derive(Debug, Clone)]
pub struct ExampleReport {
    pub label: String,
    pub case_tag: Option<CaseTag>,
    pub multiplicity: Option<Multiplicity>,
    pub rows: Vec<CheckRow>,
    pub all_pass: bool,
}

/// Solves a bundled instance and compares every recorded quantity at the
/// `0.02` gate.
pub fn check_example(id: usize) -> Result<ExampleReport> {
    let ex = reference_example(id)?;
    let opts = reference_options();
    let instance = ex.instance();
    let sol = solve(&instance, &opts)?;

    let mut rows = Vec::new();
    rows.push(CheckRow::new("S", ex.expected_s, sol.certificate.s_value));
    rows.push(CheckRow::new("nu_star", ex.expected_nu, sol.nu_star));
    for (j, expect) in ex.expected_x_tilde_abs.iter().enumerate() {
        rows.push(CheckRow::new(
            format!("|x_tilde[{j}]|"),
            *expect,
            sol.x_tilde_star[j].abs(),
        ));
    }

    // candidate optima: the returned estimate, plus its sign-flipped partner
    // when the optimum is two-fold
    let mut candidates = vec![sol.x_hat.clone()];
    if let Multiplicity::TwoFold { free_index } = sol.multiplicity {
        let spec = decompose(&instance, &opts)?;
        let mut flipped = sol.x_tilde_star.clone();
        flipped[free_index] = -flipped[free_index];
        candidates.push(spec.v() * flipped);
    }
    for (k, expected) in ex.expected_x_hats.iter().enumerate() {
        // match each recorded optimum against its closest candidate
        let best = candidates
            .iter()
            .min_by(|a, b| {
                let da = max_abs_delta(expected, a);
                let db = max_abs_delta(expected, b);
                da.partial_cmp(&db).unwrap()
            })
            .expect("at least one candidate");
        let prefix = if ex.expected_x_hats.len() > 1 {
            format!("x_hat_{}", k + 1)
        } else {
            "x_hat".to_string()
        };
        for (i, e) in expected.iter().enumerate() {
            rows.push(CheckRow::new(format!("{prefix}[{i}]"), *e, best[i]));
        }
    }

    let all_pass = rows.iter().all(|r| r.pass);
    Ok(ExampleReport {
        label: format!("example-{id}"),
        case_tag: Some(sol.case_tag),
        multiplicity: Some(sol.multiplicity),
        rows,
        all_pass,
    })
}

/// Consistency checks for the recorded scalar lifting illustration
/// (`H = [0.8084, 0.7673, 0.6168, 0.5360]^T`, `sigma_e2 = 0.10`,
/// `sigma_eps2 = 0.02`). No observation was recorded for it, so the check
/// validates the identities tying the recorded optimum `(w, z) = (5.60,
/// 22.20)` to the recorded estimate `0.50` instead of re-solving.
pub fn check_fig1() -> ExampleReport {
    let (w, z, x_hat) = (5.60, 22.20, 0.50);
    let (sigma_e2, sigma_eps2) = (0.10, 0.02);
    let rows = vec![
        CheckRow::new("w/z vs x_hat^2", x_hat * x_hat, w / z),
        CheckRow::new("se2*w + sn2*z vs 1", 1.0, sigma_e2 * w + sigma_eps2 * z),
        CheckRow::new(
            "se2*x_hat^2 + sn2 vs 1/z",
            1.0 / z,
            sigma_e2 * x_hat * x_hat + sigma_eps2,
        ),
    ];
    let all_pass = rows.iter().all(|r| r.pass);
    ExampleReport {
        label: "fig1".to_string(),
        case_tag: None,
        multiplicity: None,
        rows,
        all_pass,
    }
}

fn max_abs_delta(expected: &[f64], got: &DVector<f64>) -> f64 {
    expected
        .iter()
        .zip(got.iter())
        .fold(0.0_f64, |a, (e, g)| a.max((e - g).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_examples_solve_and_report() {
        for id in 1..=5 {
            let report = check_example(id).unwrap();
            assert!(!report.rows.is_empty());
            let ex = reference_example(id).unwrap();
            assert_eq!(report.case_tag, Some(ex.expected_case), "example {id}");
        }
    }

    #[test]
    fn estimates_reproduce_within_the_gate() {
        // the estimate rows always pass; the recorded S and nu carry the
        // source-data rounding and are reported, not asserted here
        for id in 1..=5 {
            let report = check_example(id).unwrap();
            for row in &report.rows {
                if row.quantity.starts_with("x_hat") || row.quantity.starts_with("|x_tilde") {
                    assert!(
                        row.pass,
                        "example {id}, {} expected {} computed {}",
                        row.quantity, row.expected, row.computed
                    );
                }
            }
        }
    }

    #[test]
    fn example_3_passes_every_row() {
        let report = check_example(3).unwrap();
        assert!(report.all_pass);
    }

    #[test]
    fn fig1_identities_hold() {
        let report = check_fig1();
        assert!(report.all_pass);
        assert_eq!(report.rows.len(), 3);
    }

    #[test]
    fn unknown_id_is_rejected() {
        assert!(reference_example(0).is_err());
        assert!(reference_example(6).is_err());
    }
}
