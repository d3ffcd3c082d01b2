//! Reward estimation from pairwise comparisons.
//!
//! Each preference oracle labels a comparison (x, a, a') with
//! y ~ Bernoulli(sigma(<theta, delta>)), delta = phi(x, a) - phi(x, a').
//! We estimate theta by maximizing the ridge-penalized log-likelihood
//!
//! ```text
//!     l(theta) - (N lambda_reg / 2) ||theta||^2,
//!     l(theta) = sum_i y_i ln sigma(z_i) + (1 - y_i) ln sigma(-z_i),
//!     z_i = <theta, delta_i>,
//! ```
//!
//! with damped Newton steps. The penalized Hessian is negative definite,
//! so the maximizer is unique and the damped iteration converges globally.
//!
//! Estimation error concentrates in the norm of the regularized empirical
//! difference covariance Sigma_reg = (1/N) sum_i delta_i delta_i^T +
//! lambda_reg I: with probability at least 1 - delta per oracle,
//!
//! ```text
//!     || theta_hat - theta* ||_{Sigma_reg} <= beta(delta),
//!     beta(delta) = C sqrt( (d + ln(1/delta)) / (gamma^2 N) + lambda_reg B^2 ),
//! ```
//!
//! where gamma = 1 / (2 + e^{-B} + e^B) lower-bounds the sigmoid slope for
//! rewards bounded by B, and C is an absolute constant (default 1). All
//! oracles share the same comparisons, hence the same Sigma_reg and beta.

use crate::error::{Error, Result};
use crate::types::{FeatureTable, PreferenceDataset, RewardModel, FEATURE_NORM_SLOP};
use nalgebra::{DMatrix, DVector};

const NEWTON_MAX_ITER: usize = 200;
const NEWTON_GRAD_TOL: f64 = 1e-8;

/// ln(1 + e^x) without overflow: x^+ + ln(1 + e^{-|x|}).
fn log1pexp(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// ln sigma(x) = -ln(1 + e^{-x}).
fn log_sigmoid(x: f64) -> f64 {
    -log1pexp(-x)
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Feature differences delta_i = phi(x_i, a_i) - phi(x_i, a_i'), one column
/// per comparison. Shared by every oracle fitted on the same dataset.
#[derive(Debug, Clone)]
pub struct DifferenceMatrix {
    /// dim x N.
    columns: DMatrix<f64>,
}

impl DifferenceMatrix {
    pub fn new(table: &FeatureTable, dataset: &PreferenceDataset) -> Result<Self> {
        dataset.validate_against(table)?;
        if dataset.is_empty() {
            return Err(Error::validation("dataset has no comparisons"));
        }
        let n = dataset.len();
        let mut columns = DMatrix::zeros(table.dim(), n);
        for (i, rec) in dataset.records.iter().enumerate() {
            let d = table.difference(rec.prompt, rec.first, rec.second);
            debug_assert!(d.norm() <= 2.0 + 2.0 * FEATURE_NORM_SLOP);
            columns.set_column(i, &d);
        }
        Ok(DifferenceMatrix { columns })
    }

    pub fn len(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn column(&self, i: usize) -> nalgebra::DVectorView<'_, f64> {
        self.columns.column(i)
    }
}

/// Empirical difference covariance and its ridge-regularized form, with the
/// extreme eigenvalues of the latter.
#[derive(Debug, Clone)]
pub struct CovarianceBundle {
    pub sigma: DMatrix<f64>,
    pub sigma_reg: DMatrix<f64>,
    pub lambda_reg: f64,
    pub min_eig: f64,
    pub max_eig: f64,
}

impl CovarianceBundle {
    pub fn new(deltas: &DifferenceMatrix, lambda_reg: f64) -> Result<Self> {
        if !lambda_reg.is_finite() || lambda_reg < 0.0 {
            return Err(Error::validation(format!(
                "ridge weight must be nonnegative, got {lambda_reg}"
            )));
        }
        let n = deltas.len() as f64;
        let sigma = &deltas.columns * deltas.columns.transpose() / n;
        let mut sigma_reg = sigma.clone();
        for i in 0..sigma_reg.nrows() {
            sigma_reg[(i, i)] += lambda_reg;
        }
        let eigs = sigma_reg.clone().symmetric_eigenvalues();
        let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_eig = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // sigma is positive semidefinite, so the ridge floors the spectrum.
        debug_assert!(min_eig >= lambda_reg - 1e-10);
        Ok(CovarianceBundle {
            sigma,
            sigma_reg,
            lambda_reg,
            min_eig,
            max_eig,
        })
    }
}

/// || v ||_M = sqrt(v^T M v) for a symmetric positive semidefinite M.
pub fn matrix_norm(v: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (m * v).dot(v).max(0.0).sqrt()
}

/// Unpenalized log-likelihood with its gradient and Hessian:
/// grad = sum_i (y_i - sigma(z_i)) delta_i,
/// hess = -sum_i sigma'(z_i) delta_i delta_i^T.
pub fn log_likelihood(
    theta: &DVector<f64>,
    deltas: &DifferenceMatrix,
    labels: &[u8],
) -> (f64, DVector<f64>, DMatrix<f64>) {
    assert_eq!(labels.len(), deltas.len());
    let d = deltas.dim();
    let mut value = 0.0;
    let mut grad = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..deltas.len() {
        let col = deltas.column(i);
        let z = col.dot(theta);
        let s = sigmoid(z);
        if labels[i] == 1 {
            value += log_sigmoid(z);
        } else {
            value += log_sigmoid(-z);
        }
        let resid = f64::from(labels[i]) - s;
        let weight = s * sigmoid(-z);
        for r in 0..d {
            grad[r] += resid * col[r];
            for c in 0..d {
                hess[(r, c)] -= weight * col[r] * col[c];
            }
        }
    }
    (value, grad, hess)
}

fn log_likelihood_value(theta: &DVector<f64>, deltas: &DifferenceMatrix, labels: &[u8]) -> f64 {
    let mut value = 0.0;
    for i in 0..deltas.len() {
        let z = deltas.column(i).dot(theta);
        value += if labels[i] == 1 {
            log_sigmoid(z)
        } else {
            log_sigmoid(-z)
        };
    }
    value
}

/// Result of one oracle's penalized fit.
#[derive(Debug, Clone)]
pub struct MleFit {
    pub model: RewardModel,
    pub iterations: usize,
    pub grad_norm: f64,
    pub penalized_objective: f64,
    /// True when the fitted parameter norm exceeds the declared bound B.
    /// The bound is not enforced during optimization; this is a post-hoc
    /// diagnostic.
    pub norm_warning: bool,
}

/// Fits one oracle by damped Newton on the penalized log-likelihood.
/// `norm_bound` only drives the post-hoc norm warning.
pub fn fit_mle(
    deltas: &DifferenceMatrix,
    labels: &[u8],
    lambda_reg: f64,
    norm_bound: Option<f64>,
) -> Result<MleFit> {
    if labels.len() != deltas.len() {
        return Err(Error::validation("label count does not match comparisons"));
    }
    if !lambda_reg.is_finite() || lambda_reg < 0.0 {
        return Err(Error::validation(format!(
            "ridge weight must be nonnegative, got {lambda_reg}"
        )));
    }
    let d = deltas.dim();
    let n_ridge = deltas.len() as f64 * lambda_reg;
    let mut theta = DVector::zeros(d);
    let penalized = |theta: &DVector<f64>, ll: f64| ll - 0.5 * n_ridge * theta.norm_squared();

    let mut obj = penalized(&theta, log_likelihood_value(&theta, deltas, labels));
    for iter in 0..NEWTON_MAX_ITER {
        let (_, raw_grad, raw_hess) = log_likelihood(&theta, deltas, labels);
        let grad = raw_grad - n_ridge * &theta;
        let grad_norm = grad.norm();
        if grad_norm <= NEWTON_GRAD_TOL {
            return Ok(MleFit {
                norm_warning: norm_bound.is_some_and(|b| theta.norm() > b),
                model: RewardModel::new(theta),
                iterations: iter,
                grad_norm,
                penalized_objective: obj,
            });
        }
        // Solve (-hess + n_ridge I) s = grad; the matrix is positive
        // definite whenever lambda_reg > 0 and positive semidefinite
        // otherwise, where a tiny jitter keeps the factorization alive.
        let mut a = -raw_hess;
        for i in 0..d {
            a[(i, i)] += n_ridge;
        }
        let chol = match nalgebra::Cholesky::new(a.clone()) {
            Some(c) => Some(c),
            None => {
                let jitter = 1e-12 * (1.0 + a.trace() / d as f64);
                for i in 0..d {
                    a[(i, i)] += jitter;
                }
                nalgebra::Cholesky::new(a)
            }
        };
        let Some(chol) = chol else {
            return Err(Error::numerical(
                "penalized Hessian factorization failed".to_string(),
            ));
        };
        let direction = chol.solve(&grad);
        let slope = grad.dot(&direction);

        // Near the optimum the true per-step gain drops below the
        // floating-point noise of the objective itself; without this slack
        // the sufficient-increase test rejects full Newton steps it cannot
        // resolve and the loop crawls at noise scale instead of contracting
        // quadratically.
        let noise = 1e-13 * (1.0 + obj.abs());
        let mut step = 1.0;
        let mut accepted = false;
        while step >= 1e-12 {
            let candidate = &theta + step * &direction;
            let cand_obj = penalized(&candidate, log_likelihood_value(&candidate, deltas, labels));
            if cand_obj >= obj + 1e-4 * step * slope - noise {
                theta = candidate;
                obj = cand_obj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::numerical(format!(
                "line search stalled at iteration {iter} (gradient norm {grad_norm:.3e})"
            )));
        }
    }
    Err(Error::numerical(format!(
        "Newton did not reach gradient norm {NEWTON_GRAD_TOL:.0e} in {NEWTON_MAX_ITER} iterations"
    )))
}

/// Fits every oracle of the dataset on the shared difference matrix.
pub fn fit_all_oracles(
    table: &FeatureTable,
    dataset: &PreferenceDataset,
    lambda_reg: f64,
    norm_bound: Option<f64>,
) -> Result<(DifferenceMatrix, Vec<MleFit>)> {
    let deltas = DifferenceMatrix::new(table, dataset)?;
    let mut fits = Vec::with_capacity(dataset.num_oracles);
    for k in 0..dataset.num_oracles {
        let labels = dataset.labels_for(k);
        fits.push(fit_mle(&deltas, &labels, lambda_reg, norm_bound)?);
    }
    Ok((deltas, fits))
}

/// Sigmoid curvature floor gamma = 1 / (2 + e^{-B} + e^B) for rewards in
/// [-B, B].
pub fn gamma_curvature(b: f64) -> f64 {
    1.0 / (2.0 + (-b).exp() + b.exp())
}

/// Confidence radius beta(delta) for one oracle's fit in the
/// Sigma_reg norm; see the module docs for the formula.
pub fn confidence_radius(
    n: usize,
    dim: usize,
    delta: f64,
    b: f64,
    lambda_reg: f64,
    c: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::validation("confidence radius needs n >= 1"));
    }
    if !(0.0..1.0).contains(&delta) || delta == 0.0 {
        return Err(Error::validation(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if b <= 0.0 || c <= 0.0 {
        return Err(Error::validation("bound B and constant C must be positive"));
    }
    let gamma = gamma_curvature(b);
    let sample = (dim as f64 + (1.0 / delta).ln()) / (gamma * gamma * n as f64);
    Ok(c * (sample + lambda_reg * b * b).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use crate::types::{PreferenceRecord, RewardModel};
    use proptest::prelude::*;
    use rand::Rng;

    fn deltas_from(cols: &[&[f64]]) -> DifferenceMatrix {
        let dim = cols[0].len();
        let mut m = DMatrix::zeros(dim, cols.len());
        for (i, c) in cols.iter().enumerate() {
            m.set_column(i, &DVector::from_column_slice(c));
        }
        DifferenceMatrix { columns: m }
    }

    #[test]
    fn log_likelihood_matches_frozen_values() {
        let deltas = deltas_from(&[&[0.5, -0.5], &[-0.3, 0.8], &[1.0, 0.2]]);
        let labels = [1u8, 0, 1];
        let theta = DVector::from_column_slice(&[0.3, -0.2]);
        let (ll, grad, hess) = log_likelihood(&theta, &deltas, &labels);
        assert!((ll - -1.72345232619942479).abs() < 1e-12);
        assert!((grad[0] - 7.85622507488332289e-1).abs() < 1e-12);
        assert!((grad[1] - -4.82097807209068363e-1).abs() < 1e-12);
        assert!((hess[(0, 0)] - -3.29507737912737131e-1).abs() < 1e-12);
        assert!((hess[(0, 1)] - 7.14412705850324681e-2).abs() < 1e-12);
        assert!((hess[(1, 0)] - 7.14412705850324681e-2).abs() < 1e-12);
        assert!((hess[(1, 1)] - -2.28892219627740728e-1).abs() < 1e-12);
    }

    fn random_problem(
        seed: u64,
        n: usize,
        dim: usize,
    ) -> (DifferenceMatrix, Vec<u8>, DVector<f64>) {
        let mut rng = stream_rng(seed, Stream::Aux);
        let mut cols = DMatrix::zeros(dim, n);
        for i in 0..n {
            let mut v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
            let norm = v.norm();
            if norm > 2.0 {
                v *= 1.9 / norm;
            }
            cols.set_column(i, &v);
        }
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.5)).collect();
        let theta = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        (DifferenceMatrix { columns: cols }, labels, theta)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (deltas, labels, theta) = random_problem(11, 40, 3);
        let (_, grad, _) = log_likelihood(&theta, &deltas, &labels);
        let h = 1e-6;
        for j in 0..3 {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let fd = (log_likelihood_value(&tp, &deltas, &labels)
                - log_likelihood_value(&tm, &deltas, &labels))
                / (2.0 * h);
            let rel = (fd - grad[j]).abs() / grad[j].abs().max(1.0);
            assert!(rel < 1e-6, "coordinate {j}: fd {fd} vs grad {}", grad[j]);
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let (deltas, labels, theta) = random_problem(12, 30, 3);
        let (_, _, hess) = log_likelihood(&theta, &deltas, &labels);
        let h = 1e-5;
        for j in 0..3 {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let (_, gp, _) = log_likelihood(&tp, &deltas, &labels);
            let (_, gm, _) = log_likelihood(&tm, &deltas, &labels);
            for r in 0..3 {
                let fd = (gp[r] - gm[r]) / (2.0 * h);
                assert!(
                    (fd - hess[(r, j)]).abs() < 1e-7,
                    "entry ({r},{j}): fd {fd} vs {}",
                    hess[(r, j)]
                );
            }
        }
    }

    #[test]
    fn fit_matches_scalar_bisection_oracle() {
        // Three wins and one loss on the same unit difference with ridge
        // 0.1: the penalized score is 3 - 4 sigma(t) - 0.4 t, whose root
        // was computed independently by bisection.
        let deltas = deltas_from(&[&[1.0], &[1.0], &[1.0], &[1.0]]);
        let labels = [1u8, 1, 1, 0];
        let fit = fit_mle(&deltas, &labels, 0.1, None).unwrap();
        assert!((fit.model.theta[0] - 0.7368761691015351).abs() < 1e-8);
        assert!(fit.grad_norm <= 1e-8);
    }

    #[test]
    fn fit_is_invariant_to_record_order() {
        let (deltas, labels, _) = random_problem(13, 60, 3);
        let fit = fit_mle(&deltas, &labels, 0.01, None).unwrap();

        let perm: Vec<usize> = (0..60).rev().collect();
        let cols: Vec<Vec<f64>> = perm
            .iter()
            .map(|&i| deltas.column(i).as_slice().to_vec())
            .collect();
        let col_refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let shuffled = deltas_from(&col_refs);
        let shuffled_labels: Vec<u8> = perm.iter().map(|&i| labels[i]).collect();
        let fit2 = fit_mle(&shuffled, &shuffled_labels, 0.01, None).unwrap();

        assert!((fit.model.theta.clone() - fit2.model.theta).norm() < 1e-7);
    }

    #[test]
    fn label_flip_negates_the_fit_and_pair_swap_preserves_it() {
        let (deltas, labels, _) = random_problem(14, 50, 2);
        let fit = fit_mle(&deltas, &labels, 0.05, None).unwrap();

        let flipped: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
        let fit_flip = fit_mle(&deltas, &flipped, 0.05, None).unwrap();
        assert!((fit.model.theta.clone() + &fit_flip.model.theta).norm() < 1e-7);

        // Swapping the two actions of each comparison negates the
        // difference; flipping the label at the same time leaves the
        // likelihood unchanged.
        let neg_cols: Vec<Vec<f64>> = (0..deltas.len())
            .map(|i| deltas.column(i).iter().map(|v| -v).collect())
            .collect();
        let refs: Vec<&[f64]> = neg_cols.iter().map(|c| c.as_slice()).collect();
        let swapped = deltas_from(&refs);
        let fit_swap = fit_mle(&swapped, &flipped, 0.05, None).unwrap();
        assert!((fit.model.theta.clone() - fit_swap.model.theta).norm() < 1e-12);
    }

    #[test]
    fn covariance_matches_hand_eigenvalues() {
        let deltas = deltas_from(&[&[1.0, 0.0], &[0.6, 0.8]]);
        let bundle = CovarianceBundle::new(&deltas, 0.01).unwrap();
        // Sigma = [[0.68, 0.24], [0.24, 0.32]]; ridge shifts both
        // eigenvalues (0.8, 0.2) up by 0.01.
        assert!((bundle.min_eig - 0.21).abs() < 1e-12);
        assert!((bundle.max_eig - 0.81).abs() < 1e-12);
        assert!(bundle.min_eig >= bundle.lambda_reg - 1e-10);
    }

    #[test]
    fn matrix_norm_is_the_ridge_norm() {
        let deltas = deltas_from(&[&[1.0, 0.0], &[0.6, 0.8]]);
        let bundle = CovarianceBundle::new(&deltas, 0.01).unwrap();
        let v = DVector::from_column_slice(&[1.0, -1.0]);
        // v^T Sigma_reg v = 0.69 - 0.48 + 0.33 = 0.54
        assert!((matrix_norm(&v, &bundle.sigma_reg) - 0.54f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gamma_and_radius_match_frozen_values() {
        assert!((gamma_curvature(1.0) - 0.19661193324148185).abs() < 1e-15);
        let beta = confidence_radius(3000, 8, 0.1, 1.0, 0.01, 1.0).unwrap();
        assert!((beta - 0.31438720786635926).abs() < 1e-12);
        assert!(confidence_radius(0, 8, 0.1, 1.0, 0.01, 1.0).is_err());
        assert!(confidence_radius(10, 8, 1.5, 1.0, 0.01, 1.0).is_err());
    }

    #[test]
    fn norm_warning_is_post_hoc_only() {
        let deltas = deltas_from(&[&[1.0], &[1.0], &[1.0], &[1.0]]);
        let labels = [1u8, 1, 1, 0];
        let fit = fit_mle(&deltas, &labels, 0.1, Some(0.01)).unwrap();
        assert!(fit.norm_warning);
        // Same optimum as the unbounded fit: the bound is not enforced.
        assert!((fit.model.theta[0] - 0.7368761691015351).abs() < 1e-8);
    }

    #[test]
    fn difference_matrix_requires_records() {
        let table = FeatureTable::new(1, 2, 1, vec![0.5, -0.5]).unwrap();
        let empty = PreferenceDataset::new(2, vec![]).unwrap();
        assert!(DifferenceMatrix::new(&table, &empty).is_err());

        let ds = PreferenceDataset::new(
            2,
            vec![PreferenceRecord {
                prompt: 0,
                first: 0,
                second: 1,
                labels: vec![1, 0],
            }],
        )
        .unwrap();
        let deltas = DifferenceMatrix::new(&table, &ds).unwrap();
        assert_eq!(deltas.len(), 1);
        assert!((deltas.column(0)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fitted_models_wrap_reward_models() {
        let m = RewardModel::new(DVector::from_column_slice(&[3.0, 4.0]));
        assert!((m.norm() - 5.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn penalized_hessian_is_negative_definite(seed in 0u64..500) {
            let (deltas, labels, theta) = random_problem(seed, 25, 3);
            let (_, _, hess) = log_likelihood(&theta, &deltas, &labels);
            let n_ridge = 25.0 * 0.01;
            let mut pen = hess;
            for i in 0..3 {
                pen[(i, i)] -= n_ridge;
            }
            let eigs = pen.symmetric_eigenvalues();
            prop_assert!(eigs.iter().all(|e| *e < 0.0), "eigenvalues {eigs:?}");
        }
    }
}
