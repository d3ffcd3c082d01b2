//! Projected gradient descent on the dual multipliers.
//!
//! Starting from lambda_0 = 0, each iteration forms the Gibbs policy at
//! the current multiplier, reads the exact dual gradient off it, and steps
//!
//! ```text
//!     lambda_{t+1} = clip(lambda_t - alpha_t g'(lambda_t), [0, R]^m).
//! ```
//!
//! The returned multiplier is the average over the first T iterates,
//! lambda_bar = (1/T) sum_{t=0}^{T-1} lambda_t; the final iterate lambda_T
//! is kept in the trace but excluded from the average. With the automatic
//! step alpha = eta / B^2 = 1/L the averaged iterate carries the
//! B^2 R^2 / (2 eta T) optimization guarantee, and the descent lemma makes
//! the dual value sequence nonincreasing; fixed-step runs assert this up
//! to 1e-12 and report a numerical error on violation rather than
//! returning a silently diverged trace.
//!
//! The adaptive rule scales the step with the distance to the constraint
//! boundary, normalized by accumulated gradient energy:
//!
//! ```text
//!     alpha_t = min( eta m(gap_t) / (B^2 sqrt(eps + sum_{i=1..t} |g'(lambda_i)|^2)),
//!                    alpha_max ),
//! ```
//!
//! with m(.) an affine monotone map of the clipped gap onto
//! [multiplier_lo, multiplier_hi]. The accumulator starts empty (the sum
//! excludes the gradient at lambda_0), so the first step divides by
//! sqrt(eps). It trades the descent guarantee for speed; no monotonicity
//! is asserted in adaptive mode.

use crate::dual::{DualEval, DualProblem};
use crate::error::{Error, Result};
use crate::types::{expected_reward, primal_objective, Divergence, Policy};

/// Parameters of the adaptive step rule.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveConfig {
    pub multiplier_lo: f64,
    pub multiplier_hi: f64,
    /// Gap at (or beyond) which the multiplier saturates at its maximum.
    pub gap_cap: f64,
    pub epsilon_acc: f64,
    pub alpha_max: f64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            multiplier_lo: 100.0,
            multiplier_hi: 10_000.0,
            gap_cap: 1.0,
            epsilon_acc: 1e-8,
            alpha_max: 1.0,
        }
    }
}

impl AdaptiveConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.multiplier_lo > 0.0
            && self.multiplier_hi >= self.multiplier_lo
            && self.gap_cap > 0.0
            && self.epsilon_acc > 0.0
            && self.alpha_max > 0.0;
        if !ok {
            return Err(Error::validation(format!("invalid adaptive step parameters: {self:?}")));
        }
        Ok(())
    }
}

/// How the step size is chosen each iteration.
#[derive(Debug, Clone, Copy)]
pub enum StepRule {
    /// alpha = eta / B^2, the inverse Lipschitz constant.
    Auto,
    /// A caller-chosen constant step. The descent assertion still applies:
    /// steps too large to decrease the dual value fail numerically.
    Fixed(f64),
    Adaptive(AdaptiveConfig),
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Projection radius R per coordinate.
    pub radius: f64,
    pub iterations: usize,
    pub step: StepRule,
    /// Reward bound B for steps and guarantees; defaults to the largest
    /// absolute constraint reward in the problem.
    pub bound_b: Option<f64>,
}

impl SolverConfig {
    pub fn new(radius: f64, iterations: usize, step: StepRule) -> Self {
        Self {
            radius,
            iterations,
            step,
            bound_b: None,
        }
    }
}

/// One solver iteration: the iterate, what was measured there, and the
/// step taken away from it.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub t: usize,
    pub lambda: Vec<f64>,
    pub gradient: Vec<f64>,
    pub alpha: f64,
    pub dual_value: f64,
}

/// Full solve output: the per-iteration trace, the averaged multiplier,
/// and the policy the averaged multiplier induces on the estimated
/// rewards (the deployable output).
#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
    pub lambda_bar: Vec<f64>,
    /// The iterate after the last update, excluded from the average.
    pub final_lambda: Vec<f64>,
    pub policy: Policy,
    pub bound_b: f64,
    pub radius: f64,
}

/// The adaptive step value; exposed separately so the rule is testable
/// against the formula. `accumulated_sq` is sum_{i=1..t} |g'(lambda_i)|^2.
pub fn adaptive_step(
    eta: f64,
    bound_b: f64,
    accumulated_sq: f64,
    gap: f64,
    cfg: &AdaptiveConfig,
) -> f64 {
    let m = cfg.multiplier_lo
        + (cfg.multiplier_hi - cfg.multiplier_lo) * (gap.min(cfg.gap_cap) / cfg.gap_cap);
    let denom = bound_b * bound_b * (cfg.epsilon_acc + accumulated_sq).sqrt();
    (eta * m / denom).min(cfg.alpha_max)
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Runs projected gradient descent on the estimated dual.
pub fn solve_dual(problem: &DualProblem, config: &SolverConfig) -> Result<SolverTrace> {
    if !config.radius.is_finite() || config.radius <= 0.0 {
        return Err(Error::validation(format!(
            "projection radius must be positive, got {}",
            config.radius
        )));
    }
    if config.iterations == 0 {
        return Err(Error::validation("need at least one iteration"));
    }
    let bound_b = config.bound_b.unwrap_or_else(|| problem.empirical_reward_bound());
    if !bound_b.is_finite() || bound_b <= 0.0 {
        return Err(Error::validation(format!(
            "reward bound must be positive to size steps, got {bound_b}"
        )));
    }
    let eta = problem.eta();
    let check_descent = match config.step {
        StepRule::Auto => true,
        StepRule::Fixed(alpha) => {
            if !alpha.is_finite() || alpha <= 0.0 {
                return Err(Error::validation(format!(
                    "fixed step must be positive, got {alpha}"
                )));
            }
            true
        }
        StepRule::Adaptive(cfg) => {
            cfg.validate()?;
            false
        }
    };

    let m = problem.num_constraints();
    let t_total = config.iterations;
    let mut lambda = vec![0.0; m];
    let mut lambda_sum = vec![0.0; m];
    let mut records = Vec::with_capacity(t_total);
    let mut accumulated_sq = 0.0;
    let mut prev_value = f64::INFINITY;
    for t in 0..t_total {
        let eval = problem.eval(&lambda)?;
        if t >= 1 {
            accumulated_sq += norm_sq(&eval.gradient);
        }
        if check_descent && eval.value > prev_value + 1e-12 * prev_value.abs().max(1.0) {
            return Err(Error::numerical(format!(
                "dual value increased from {prev_value} to {} at iteration {t}; \
                 the fixed step exceeds the descent regime",
                eval.value
            )));
        }
        prev_value = eval.value;
        let alpha = match config.step {
            StepRule::Auto => eta / (bound_b * bound_b),
            StepRule::Fixed(a) => a,
            StepRule::Adaptive(cfg) => {
                let gap = norm_sq(&eval.gradient).sqrt();
                adaptive_step(eta, bound_b, accumulated_sq, gap, &cfg)
            }
        };
        for k in 0..m {
            lambda_sum[k] += lambda[k];
        }
        records.push(IterationRecord {
            t,
            lambda: lambda.clone(),
            gradient: eval.gradient.clone(),
            alpha,
            dual_value: eval.value,
        });
        for k in 0..m {
            lambda[k] = (lambda[k] - alpha * eval.gradient[k]).clamp(0.0, config.radius);
            debug_assert!(lambda[k] >= 0.0 && lambda[k] <= config.radius);
        }
    }
    let lambda_bar: Vec<f64> = lambda_sum.iter().map(|s| s / t_total as f64).collect();
    let policy = problem.eval(&lambda_bar)?.policy;
    Ok(SolverTrace {
        records,
        lambda_bar,
        final_lambda: lambda,
        policy,
        bound_b,
        radius: config.radius,
    })
}

/// Exact performance of a solved multiplier, measured against a
/// ground-truth problem and its dense-oracle optimum.
///
/// The certified policy is the Gibbs policy of the TRUE rewards at
/// lambda_bar: the object the performance guarantees speak about. The
/// deployed policy is the Gibbs policy of the ESTIMATED rewards at
/// lambda_bar: the object the pipeline can actually construct from data.
/// Both are evaluated with true rewards. When no ground truth exists,
/// pass the estimated problem as `truth`; the metrics then audit the
/// estimated program against itself (estimated-only mode, flagged by the
/// caller).
#[derive(Debug, Clone)]
pub struct SolutionMetrics {
    pub lambda_bar: Vec<f64>,
    pub lambda_star: Vec<f64>,
    /// g(lambda_bar) - g(lambda_star) on the truth problem.
    pub dual_gap: f64,
    /// (J_min - E[r_k])_+ for the certified policy.
    pub violation: Vec<f64>,
    pub violation_signed: Vec<f64>,
    /// J(pi_{lambda_star}) - J(certified policy) under true rewards.
    pub primal_gap: f64,
    pub deployed_violation: Vec<f64>,
    pub deployed_violation_signed: Vec<f64>,
    pub deployed_primal_gap: f64,
}

pub fn evaluate_solution(
    truth: &DualProblem,
    estimated: &DualProblem,
    lambda_bar: &[f64],
    lambda_star: &[f64],
) -> Result<SolutionMetrics> {
    if truth.num_constraints() != estimated.num_constraints()
        || truth.num_prompts() != estimated.num_prompts()
        || truth.num_actions() != estimated.num_actions()
    {
        return Err(Error::validation(
            "truth and estimated problems have different shapes",
        ));
    }
    if truth.j_min() != estimated.j_min() || truth.eta() != estimated.eta() {
        return Err(Error::validation(
            "truth and estimated problems disagree on eta or the thresholds",
        ));
    }
    let at_bar = truth.eval(lambda_bar)?;
    let at_star = truth.eval(lambda_star)?;
    let deployed = estimated.eval(lambda_bar)?.policy;

    let m = truth.num_constraints();
    let signed = |policy: &Policy| -> Vec<f64> {
        (0..m)
            .map(|k| {
                truth.j_min()[k]
                    - expected_reward(policy, truth.prompt_dist(), truth.constraint_rewards(k))
            })
            .collect()
    };
    let positive = |v: &[f64]| v.iter().map(|x| x.max(0.0)).collect::<Vec<f64>>();
    let objective = |policy: &Policy| -> Result<f64> {
        primal_objective(
            policy,
            truth.reference(),
            truth.prompt_dist(),
            truth.target_rewards(),
            truth.eta(),
            Divergence::Kl,
        )
    };
    let violation_signed = signed(&at_bar.policy);
    let deployed_violation_signed = signed(&deployed);
    let star_objective = objective(&at_star.policy)?;
    Ok(SolutionMetrics {
        lambda_bar: lambda_bar.to_vec(),
        lambda_star: lambda_star.to_vec(),
        dual_gap: at_bar.value - at_star.value,
        violation: positive(&violation_signed),
        violation_signed,
        primal_gap: star_objective - objective(&at_bar.policy)?,
        deployed_violation: positive(&deployed_violation_signed),
        deployed_violation_signed,
        deployed_primal_gap: star_objective - objective(&deployed)?,
    })
}

/// Convenience wrapper: dense-grid dual minimizer of an estimated problem
/// for audits. Scans [0, radius] with the given number of points and
/// polishes with golden-section inside the winning bracket.
pub fn dense_dual_minimum(problem: &DualProblem, radius: f64, points: usize) -> Result<(f64, DualEval)> {
    if problem.num_constraints() != 1 {
        return Err(Error::validation("dense scan is one-dimensional"));
    }
    if points < 2 || !radius.is_finite() || radius <= 0.0 {
        return Err(Error::validation("need radius > 0 and at least two scan points"));
    }
    let mut best = (0.0, f64::INFINITY);
    for i in 0..points {
        let l = radius * i as f64 / (points - 1) as f64;
        let v = problem.eval(&[l])?.value;
        if v < best.1 {
            best = (l, v);
        }
    }
    let spacing = radius / (points - 1) as f64;
    let mut lo = (best.0 - spacing).max(0.0);
    let mut hi = (best.0 + spacing).min(radius);
    // Golden-section polish: unimodal since g is convex.
    let inv_phi = 0.618_033_988_749_894_9;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = problem.eval(&[c])?.value;
    let mut fd = problem.eval(&[d])?.value;
    for _ in 0..200 {
        if hi - lo < 1e-12 {
            break;
        }
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = problem.eval(&[c])?.value;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = problem.eval(&[d])?.value;
        }
    }
    let lambda = 0.5 * (lo + hi);
    Ok((lambda, problem.eval(&[lambda])?))
}
