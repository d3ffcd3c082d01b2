//! The dual of the constrained, KL-regularized alignment problem.
//!
//! For multipliers lambda >= 0 the Lagrangian is
//!
//! ```text
//!     L(pi, lambda) = E_pi[r_1 + sum_k lambda_k r_{k+1}]
//!                     - eta KL(pi || pi0) - <lambda, J_min>,
//! ```
//!
//! and the dual function g(lambda) = max_pi L(pi, lambda) is attained by
//! the Gibbs tilt of pi0 by the combined reward. With Z_x(lambda) the
//! per-prompt partition sum of that tilt, the maximum has the closed form
//!
//! ```text
//!     g(lambda) = eta E_x[ln Z_x(lambda)] - <lambda, J_min>,
//! ```
//!
//! which is how `eval` computes the value: no divergence is ever formed
//! explicitly, so the evaluation stays stable under extreme tilts. The
//! envelope theorem gives the gradient g'_k = E_{pi_lambda}[r_{k+1}] -
//! J_{k,min}, and differentiating once more gives the Hessian as a scaled
//! covariance, g''_{jk} = (1/eta) E_x[Cov_{pi_lambda}(r_{j+1}, r_{k+1})].
//! Everything is an exact expectation over the finite prompt/action space;
//! nothing is sampled.
//!
//! g is convex (a maximum of affine functions of lambda), its gradient is
//! Lipschitz with constant B^2/eta when constraint rewards are bounded by
//! B, and on any box [0, Lambda]^m it is strongly convex with modulus the
//! infimum of the covariance term, approximated here on a uniform grid.

use crate::error::{Error, Result};
use crate::types::{FeatureTable, Policy, RewardModel};
use nalgebra::DMatrix;

/// One exact dual evaluation: value, gradient, covariance Hessian, and the
/// maximizing Gibbs policy.
#[derive(Debug, Clone)]
pub struct DualEval {
    pub lambda: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// (1/eta) E_x[Cov(r_j, r_k)] under the maximizing policy.
    pub hessian: DMatrix<f64>,
    pub policy: Policy,
}

/// Grid approximation of the strong-convexity modulus on [0, Lambda]^m.
#[derive(Debug, Clone, Copy)]
pub struct StrongConvexity {
    pub modulus: f64,
    /// Set when the modulus vanishes (constraint rewards constant per
    /// prompt wherever the policy puts mass), which makes curvature-based
    /// multiplier bounds vacuous.
    pub degenerate: bool,
}

/// Gradient Lipschitz constant B^2 / eta of the dual.
pub fn lipschitz_constant(bound_b: f64, eta: f64) -> Result<f64> {
    if !eta.is_finite() || eta <= 0.0 {
        return Err(Error::validation(format!(
            "penalty weight eta must be positive, got {eta}"
        )));
    }
    if !bound_b.is_finite() || bound_b < 0.0 {
        return Err(Error::validation(format!(
            "reward bound must be nonnegative, got {bound_b}"
        )));
    }
    Ok(bound_b * bound_b / eta)
}

/// The dual function of one constrained problem instance, with all reward
/// tables precomputed so each evaluation is a single pass over the space.
#[derive(Debug, Clone)]
pub struct DualProblem {
    reference: Policy,
    prompt_dist: Vec<f64>,
    target_rewards: Vec<f64>,
    constraint_rewards: Vec<Vec<f64>>,
    eta: f64,
    j_min: Vec<f64>,
}

impl DualProblem {
    pub fn new(
        reference: Policy,
        prompt_dist: Vec<f64>,
        target_rewards: Vec<f64>,
        constraint_rewards: Vec<Vec<f64>>,
        eta: f64,
        j_min: Vec<f64>,
    ) -> Result<Self> {
        let cells = reference.num_prompts() * reference.num_actions();
        if prompt_dist.len() != reference.num_prompts() {
            return Err(Error::validation(
                "prompt distribution length does not match the policy",
            ));
        }
        if target_rewards.len() != cells
            || constraint_rewards.iter().any(|r| r.len() != cells)
        {
            return Err(Error::validation(
                "reward table shapes do not match the policy",
            ));
        }
        if constraint_rewards.is_empty() {
            return Err(Error::validation("at least one constraint is required"));
        }
        if constraint_rewards.len() != j_min.len() {
            return Err(Error::validation(format!(
                "{} constraint reward tables but {} thresholds",
                constraint_rewards.len(),
                j_min.len()
            )));
        }
        if !eta.is_finite() || eta <= 0.0 {
            return Err(Error::validation(format!(
                "penalty weight eta must be positive, got {eta}"
            )));
        }
        let all_finite = target_rewards.iter().all(|v| v.is_finite())
            && constraint_rewards
                .iter()
                .all(|t| t.iter().all(|v| v.is_finite()))
            && j_min.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::validation("non-finite reward or threshold"));
        }
        if !reference.is_full_support() {
            return Err(Error::validation(
                "reference policy must put positive probability on every action",
            ));
        }
        Ok(Self {
            reference,
            prompt_dist,
            target_rewards,
            constraint_rewards,
            eta,
            j_min,
        })
    }

    /// Builds the problem from linear models: the first model is the
    /// target oracle, the rest are the constrained oracles in order.
    pub fn from_models(
        table: &FeatureTable,
        reference: Policy,
        prompt_dist: Vec<f64>,
        models: &[RewardModel],
        eta: f64,
        j_min: Vec<f64>,
    ) -> Result<Self> {
        if models.len() < 2 {
            return Err(Error::validation(
                "need a target model and at least one constraint model",
            ));
        }
        if table.num_prompts() != reference.num_prompts()
            || table.num_actions() != reference.num_actions()
        {
            return Err(Error::validation(
                "feature table shape does not match the reference policy",
            ));
        }
        let target_rewards = table.rewards(&models[0].theta).as_slice().to_vec();
        let constraint_rewards = models[1..]
            .iter()
            .map(|m| table.rewards(&m.theta).as_slice().to_vec())
            .collect();
        Self::new(
            reference,
            prompt_dist,
            target_rewards,
            constraint_rewards,
            eta,
            j_min,
        )
    }

    pub fn num_constraints(&self) -> usize {
        self.constraint_rewards.len()
    }

    pub fn num_prompts(&self) -> usize {
        self.reference.num_prompts()
    }

    pub fn num_actions(&self) -> usize {
        self.reference.num_actions()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn j_min(&self) -> &[f64] {
        &self.j_min
    }

    pub fn reference(&self) -> &Policy {
        &self.reference
    }

    pub fn prompt_dist(&self) -> &[f64] {
        &self.prompt_dist
    }

    pub fn target_rewards(&self) -> &[f64] {
        &self.target_rewards
    }

    pub fn constraint_rewards(&self, k: usize) -> &[f64] {
        &self.constraint_rewards[k]
    }

    /// Largest |r| over the constraint reward tables: the empirical stand-in
    /// for the reward bound B in step sizes and certificates.
    pub fn empirical_reward_bound(&self) -> f64 {
        self.constraint_rewards
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |m, r| m.max(r.abs()))
    }

    fn validate_lambda(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.num_constraints() {
            return Err(Error::validation(format!(
                "expected {} multipliers, got {}",
                self.num_constraints(),
                lambda.len()
            )));
        }
        if lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::validation(format!(
                "multipliers must be finite and nonnegative, got {lambda:?}"
            )));
        }
        Ok(())
    }

    /// Exact dual value, gradient, Hessian, and maximizing policy at
    /// `lambda`. A constant combined-reward row reproduces the reference
    /// row bit for bit, so g(0) with a zero target model sits exactly at
    /// the reference policy.
    pub fn eval(&self, lambda: &[f64]) -> Result<DualEval> {
        self.validate_lambda(lambda)?;
        let (x_n, a_n, m) = (self.num_prompts(), self.num_actions(), lambda.len());
        let mut probs = vec![0.0; x_n * a_n];
        let mut value = 0.0;
        let mut gradient = vec![0.0; m];
        let mut hessian = DMatrix::<f64>::zeros(m, m);
        let mut combined = vec![0.0; a_n];
        let mut means = vec![0.0; m];
        for x in 0..x_n {
            let q = self.reference.row(x);
            let base = x * a_n;
            for a in 0..a_n {
                let mut c = self.target_rewards[base + a];
                for (l, table) in lambda.iter().zip(&self.constraint_rewards) {
                    c += l * table[base + a];
                }
                combined[a] = c;
            }
            let out = &mut probs[base..base + a_n];
            let log_z = if combined.iter().all(|c| *c == combined[0]) {
                out.copy_from_slice(q);
                combined[0] / self.eta
            } else {
                let mut max_logit = f64::NEG_INFINITY;
                for a in 0..a_n {
                    let logit = q[a].ln() + combined[a] / self.eta;
                    out[a] = logit;
                    max_logit = max_logit.max(logit);
                }
                let mut sum = 0.0;
                for v in out.iter_mut() {
                    *v = (*v - max_logit).exp();
                    sum += *v;
                }
                for v in out.iter_mut() {
                    *v /= sum;
                }
                max_logit + sum.ln()
            };
            let weight = self.prompt_dist[x];
            value += weight * self.eta * log_z;
            for (k, table) in self.constraint_rewards.iter().enumerate() {
                let mut mean = 0.0;
                for a in 0..a_n {
                    mean += out[a] * table[base + a];
                }
                means[k] = mean;
                gradient[k] += weight * mean;
            }
            for j in 0..m {
                for k in j..m {
                    let mut cross = 0.0;
                    for a in 0..a_n {
                        cross += out[a]
                            * self.constraint_rewards[j][base + a]
                            * self.constraint_rewards[k][base + a];
                    }
                    let cov = weight * (cross - means[j] * means[k]) / self.eta;
                    hessian[(j, k)] += cov;
                    if j != k {
                        hessian[(k, j)] += cov;
                    }
                }
            }
        }
        for k in 0..m {
            value -= lambda[k] * self.j_min[k];
            gradient[k] -= self.j_min[k];
        }
        Ok(DualEval {
            lambda: lambda.to_vec(),
            value,
            gradient,
            hessian,
            policy: Policy::new(x_n, a_n, probs)?,
        })
    }

    /// Grid approximation of the strong-convexity modulus on the box
    /// [0, radius]^m: the smallest eigenvalue of the covariance Hessian
    /// over a uniform grid with `grid_size` points per axis (the exact
    /// infimum has no computational recipe; the grid is reported with the
    /// result where it is consumed). The single-constraint case reduces to
    /// (1/eta) inf E[Var(r_2)].
    pub fn strong_convexity_modulus(
        &self,
        radius: f64,
        grid_size: usize,
    ) -> Result<StrongConvexity> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(Error::validation(format!(
                "grid radius must be positive, got {radius}"
            )));
        }
        if grid_size < 2 {
            return Err(Error::validation("strong-convexity grid needs >= 2 points"));
        }
        let m = self.num_constraints();
        let mut modulus = f64::INFINITY;
        let mut index = vec![0usize; m];
        loop {
            let lambda: Vec<f64> = index
                .iter()
                .map(|i| radius * (*i as f64) / (grid_size - 1) as f64)
                .collect();
            let eval = self.eval(&lambda)?;
            let min_eig = eval
                .hessian
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            modulus = modulus.min(min_eig);
            // Odometer increment over the m-dimensional grid.
            let mut axis = 0;
            loop {
                if axis == m {
                    let degenerate = modulus <= 1e-15;
                    return Ok(StrongConvexity {
                        modulus: modulus.max(0.0),
                        degenerate,
                    });
                }
                index[axis] += 1;
                if index[axis] < grid_size {
                    break;
                }
                index[axis] = 0;
                axis += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use crate::types::{expected_reward, primal_objective, Divergence};
    use rand::Rng;

    fn toy_problem(num_constraints: usize) -> DualProblem {
        let reference = Policy::new(2, 2, vec![0.7, 0.3, 0.2, 0.8]).unwrap();
        let r1 = vec![1.0, -0.5, 0.3, 0.9];
        let r2 = vec![0.2, 0.8, -0.3, 0.4];
        let r3 = vec![0.5, 0.1, 0.6, -0.2];
        let (tables, j_min) = if num_constraints == 1 {
            (vec![r2], vec![0.3])
        } else {
            (vec![r2, r3], vec![0.3, 0.1])
        };
        DualProblem::new(reference, vec![0.6, 0.4], r1, tables, 0.5, j_min).unwrap()
    }

    fn random_problem(seed: u64, m: usize) -> DualProblem {
        let mut rng = stream_rng(seed, Stream::Aux);
        let (x_n, a_n) = (3, 4);
        let mut rows = Vec::new();
        for _ in 0..x_n {
            let raw: Vec<f64> = (0..a_n).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = raw.iter().sum();
            rows.extend(raw.into_iter().map(|v| v / s));
        }
        let reference = Policy::new(x_n, a_n, rows).unwrap();
        let dist = vec![1.0 / x_n as f64; x_n];
        let mut table = || -> Vec<f64> {
            (0..x_n * a_n).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let target = table();
        let constraints: Vec<Vec<f64>> = (0..m).map(|_| table()).collect();
        let j_min: Vec<f64> = (0..m).map(|_| 0.05 * (m as f64)).collect();
        DualProblem::new(reference, dist, target, constraints, 0.4, j_min).unwrap()
    }

    #[test]
    fn frozen_single_constraint_evaluation() {
        let eval = toy_problem(1).eval(&[0.7]).unwrap();
        assert!((eval.value - 8.14415225018916278e-1).abs() < 1e-13);
        assert!((eval.gradient[0] - -1.07404151881940746e-2).abs() < 1e-13);
        assert!((eval.hessian[(0, 0)] - 2.98652829622880409e-2).abs() < 1e-13);
    }

    #[test]
    fn frozen_two_constraint_evaluation() {
        let eval = toy_problem(2).eval(&[0.7, 0.2]).unwrap();
        assert!((eval.value - 8.38381132863817324e-1).abs() < 1e-13);
        assert!((eval.gradient[0] - -1.59394479597519956e-2).abs() < 1e-13);
        assert!((eval.gradient[1] - 1.22287668345439887e-1).abs() < 1e-13);
        assert!((eval.hessian[(0, 0)] - 3.08880388441170536e-2).abs() < 1e-13);
        assert!((eval.hessian[(0, 1)] - -2.73226660368966548e-2).abs() < 1e-13);
        assert!((eval.hessian[(1, 1)] - 2.59072708521999977e-2).abs() < 1e-13);
        assert!((eval.hessian[(0, 1)] - eval.hessian[(1, 0)]).abs() == 0.0);
    }

    #[test]
    fn value_at_zero_is_the_unconstrained_optimum() {
        let problem = toy_problem(1);
        let eval = problem.eval(&[0.0]).unwrap();
        // g(0) = max_pi E[r1] - eta KL, attained by the returned policy.
        let attained = primal_objective(
            &eval.policy,
            problem.reference(),
            problem.prompt_dist(),
            problem.target_rewards(),
            problem.eta(),
            Divergence::Kl,
        )
        .unwrap();
        assert!((eval.value - attained).abs() < 1e-12);
        let expected_grad = expected_reward(
            &eval.policy,
            problem.prompt_dist(),
            problem.constraint_rewards(0),
        ) - problem.j_min()[0];
        assert!((eval.gradient[0] - expected_grad).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_central_differences() {
        for m in [1usize, 2] {
            let problem = random_problem(31 + m as u64, m);
            let lambda = vec![0.6; m];
            let eval = problem.eval(&lambda).unwrap();
            let h = 1e-5;
            for k in 0..m {
                let mut up = lambda.clone();
                let mut dn = lambda.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (problem.eval(&up).unwrap().value - problem.eval(&dn).unwrap().value)
                    / (2.0 * h);
                let scale = eval.gradient[k].abs().max(1.0);
                assert!(
                    (eval.gradient[k] - fd).abs() / scale < 1e-6,
                    "m={m} k={k}: analytic {} vs fd {fd}",
                    eval.gradient[k]
                );
            }
        }
    }

    #[test]
    fn hessian_matches_second_differences() {
        let problem = random_problem(41, 2);
        let lambda = [0.5, 0.9];
        let eval = problem.eval(&lambda).unwrap();
        let h = 1e-4;
        let g = |l: &[f64]| problem.eval(l).unwrap().value;
        for j in 0..2 {
            for k in 0..2 {
                let fd = if j == k {
                    let mut up = lambda.to_vec();
                    let mut dn = lambda.to_vec();
                    up[j] += h;
                    dn[j] -= h;
                    (g(&up) - 2.0 * eval.value + g(&dn)) / (h * h)
                } else {
                    let mut pp = lambda.to_vec();
                    let mut pm = lambda.to_vec();
                    let mut mp = lambda.to_vec();
                    let mut mm = lambda.to_vec();
                    pp[j] += h;
                    pp[k] += h;
                    pm[j] += h;
                    pm[k] -= h;
                    mp[j] -= h;
                    mp[k] += h;
                    mm[j] -= h;
                    mm[k] -= h;
                    (g(&pp) - g(&pm) - g(&mp) + g(&mm)) / (4.0 * h * h)
                };
                assert!(
                    (eval.hessian[(j, k)] - fd).abs() < 1e-4,
                    "({j},{k}): analytic {} vs fd {fd}",
                    eval.hessian[(j, k)]
                );
            }
        }
    }

    #[test]
    fn dual_is_convex_along_segments() {
        let problem = random_problem(43, 1);
        let mut rng = stream_rng(44, Stream::Aux);
        for _ in 0..200 {
            let a: f64 = rng.random_range(0.0..4.0);
            let b: f64 = rng.random_range(0.0..4.0);
            let t: f64 = rng.random_range(0.0..1.0);
            let mid = t * a + (1.0 - t) * b;
            let ga = problem.eval(&[a]).unwrap().value;
            let gb = problem.eval(&[b]).unwrap().value;
            let gm = problem.eval(&[mid]).unwrap().value;
            assert!(gm <= t * ga + (1.0 - t) * gb + 1e-10);
        }
    }

    #[test]
    fn weak_duality_against_random_feasible_policies() {
        let base = random_problem(45, 1);
        // Rewards live in (-1, 1), so this threshold keeps most random
        // policies feasible while the constraint still binds the dual.
        let problem = DualProblem::new(
            base.reference().clone(),
            base.prompt_dist().to_vec(),
            base.target_rewards().to_vec(),
            vec![base.constraint_rewards(0).to_vec()],
            base.eta(),
            vec![-0.2],
        )
        .unwrap();
        let mut rng = stream_rng(46, Stream::Aux);
        let (x_n, a_n) = (problem.num_prompts(), problem.num_actions());
        let mut checked = 0;
        for _ in 0..400 {
            let mut rows = Vec::with_capacity(x_n * a_n);
            for _ in 0..x_n {
                let raw: Vec<f64> = (0..a_n).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = raw.iter().sum();
                rows.extend(raw.into_iter().map(|v| v / s));
            }
            let pi = Policy::new(x_n, a_n, rows).unwrap();
            let feasible = expected_reward(&pi, problem.prompt_dist(), problem.constraint_rewards(0))
                >= problem.j_min()[0];
            if !feasible {
                continue;
            }
            checked += 1;
            let j = primal_objective(
                &pi,
                problem.reference(),
                problem.prompt_dist(),
                problem.target_rewards(),
                problem.eta(),
                Divergence::Kl,
            )
            .unwrap();
            for lambda in [0.0, 0.3, 1.0, 5.0] {
                assert!(problem.eval(&[lambda]).unwrap().value >= j - 1e-12);
            }
        }
        assert!(checked > 50, "only {checked} feasible draws; weaken j_min");
    }

    #[test]
    fn sampled_lipschitz_ratio_respects_the_constant() {
        let problem = random_problem(47, 1);
        let bound = lipschitz_constant(problem.empirical_reward_bound(), problem.eta()).unwrap();
        let mut rng = stream_rng(48, Stream::Aux);
        for _ in 0..1000 {
            let a: f64 = rng.random_range(0.0..6.0);
            let b: f64 = rng.random_range(0.0..6.0);
            if (a - b).abs() < 1e-9 {
                continue;
            }
            let ga = problem.eval(&[a]).unwrap().gradient[0];
            let gb = problem.eval(&[b]).unwrap().gradient[0];
            let ratio = (ga - gb).abs() / (a - b).abs();
            assert!(ratio <= bound + 1e-9, "ratio {ratio} exceeds {bound}");
        }
    }

    #[test]
    fn estimation_error_propagates_at_most_linearly() {
        // Perturbing every reward table by models with parameter error e_k
        // shifts the dual by at most (1 + sum_k lambda_k) max_k ||e_k||,
        // the shape of the value envelope.
        let mut rng = stream_rng(49, Stream::Aux);
        let d = 3;
        let table = {
            let mut cols = Vec::new();
            for _ in 0..6 {
                let v: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
                cols.extend(v.into_iter().map(|x| x / n));
            }
            FeatureTable::new(2, 3, d, cols).unwrap()
        };
        let reference = Policy::uniform(2, 3);
        let dist = vec![0.5, 0.5];
        let theta1 = nalgebra::DVector::from_column_slice(&[0.4, -0.2, 0.1]);
        let theta2 = nalgebra::DVector::from_column_slice(&[-0.3, 0.5, 0.2]);
        let err1: nalgebra::DVector<f64> =
            nalgebra::DVector::from_column_slice(&[0.01, -0.02, 0.015]);
        let err2: nalgebra::DVector<f64> =
            nalgebra::DVector::from_column_slice(&[-0.01, 0.005, 0.02]);
        let eps_max = err1.norm().max(err2.norm());
        let exact = DualProblem::from_models(
            &table,
            reference.clone(),
            dist.clone(),
            &[RewardModel::new(theta1.clone()), RewardModel::new(theta2.clone())],
            0.3,
            vec![0.1],
        )
        .unwrap();
        let perturbed = DualProblem::from_models(
            &table,
            reference,
            dist,
            &[
                RewardModel::new(theta1 + err1),
                RewardModel::new(theta2 + err2),
            ],
            0.3,
            vec![0.1],
        )
        .unwrap();
        for lambda in [0.0, 0.5, 1.0, 3.0, 10.0] {
            let gap =
                (exact.eval(&[lambda]).unwrap().value - perturbed.eval(&[lambda]).unwrap().value)
                    .abs();
            let envelope = (1.0 + lambda) * eps_max;
            assert!(
                gap <= envelope + 1e-12,
                "lambda {lambda}: gap {gap} exceeds {envelope}"
            );
        }
    }

    #[test]
    fn strong_convexity_matches_bernoulli_variance() {
        // Single prompt, uniform reference, rewards (+1, -1), zero target,
        // eta = 1: Var under pi_lambda is 1 - tanh(lambda)^2, decreasing in
        // lambda, so the grid infimum sits at the right endpoint.
        let problem = DualProblem::new(
            Policy::uniform(1, 2),
            vec![1.0],
            vec![0.0, 0.0],
            vec![vec![1.0, -1.0]],
            1.0,
            vec![0.0],
        )
        .unwrap();
        let sc = problem.strong_convexity_modulus(0.01, 64).unwrap();
        let expected = 1.0 - 0.01f64.tanh().powi(2);
        assert!((sc.modulus - expected).abs() < 1e-12);
        assert!(!sc.degenerate);
    }

    #[test]
    fn strong_convexity_flags_constant_rewards() {
        let problem = DualProblem::new(
            Policy::uniform(2, 2),
            vec![0.5, 0.5],
            vec![0.3, -0.1, 0.2, 0.4],
            vec![vec![0.7, 0.7, -0.2, -0.2]],
            0.5,
            vec![0.0],
        )
        .unwrap();
        let sc = problem.strong_convexity_modulus(2.0, 16).unwrap();
        assert!(sc.modulus == 0.0);
        assert!(sc.degenerate);
    }

    #[test]
    fn strong_convexity_is_nonincreasing_in_the_radius() {
        let problem = random_problem(51, 1);
        let mut last = f64::INFINITY;
        for radius in [0.5, 1.0, 2.0, 4.0] {
            let sc = problem.strong_convexity_modulus(radius, 64).unwrap();
            assert!(sc.modulus <= last + 1e-15);
            last = sc.modulus;
        }
    }

    #[test]
    fn constraint_order_permutation_is_consistent() {
        let problem = toy_problem(2);
        let swapped = DualProblem::new(
            problem.reference().clone(),
            problem.prompt_dist().to_vec(),
            problem.target_rewards().to_vec(),
            vec![
                problem.constraint_rewards(1).to_vec(),
                problem.constraint_rewards(0).to_vec(),
            ],
            problem.eta(),
            vec![problem.j_min()[1], problem.j_min()[0]],
        )
        .unwrap();
        let a = problem.eval(&[0.7, 0.2]).unwrap();
        let b = swapped.eval(&[0.2, 0.7]).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
        assert!((a.gradient[0] - b.gradient[1]).abs() < 1e-12);
        assert!((a.gradient[1] - b.gradient[0]).abs() < 1e-12);
        assert_eq!(a.policy.as_slice(), b.policy.as_slice());
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        let problem = toy_problem(1);
        assert!(problem.eval(&[-0.1]).is_err());
        assert!(problem.eval(&[0.1, 0.2]).is_err());
        assert!(problem.eval(&[f64::NAN]).is_err());
        assert!(problem.strong_convexity_modulus(1.0, 1).is_err());
        assert!(problem.strong_convexity_modulus(0.0, 8).is_err());
        assert!(lipschitz_constant(1.0, 0.0).is_err());
        assert!((lipschitz_constant(2.0, 0.5).unwrap() - 8.0).abs() < 1e-15);
    }
}
