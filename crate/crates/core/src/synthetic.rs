//! Synthetic benchmark protocol: seeded instance generation, preference
//! sampling with exact prefix reuse, constraint-threshold calibration,
//! ground-truth oracles for the dual and primal problems, and the
//! dataset-size sweep harness.
//!
//! Instances are finite prompt/action environments with unit-norm features
//! and unit-norm ground-truth reward parameters, so every true reward lies
//! in [-1, 1] and the theoretical reward bound is 1. The reference policy
//! is a softmax of a mixture parameter `theta_ref = w * theta_target +
//! (1 - w) * theta_constraint`, so `w` controls how strongly the reference
//! already favors the target oracle; higher `w` leaves the constraint
//! oracle less satisfied at the unconstrained optimum.
//!
//! All randomness flows through named [`Stream`]s of a counter-based
//! generator, so datasets have an exact prefix property (the first `n`
//! records for a seed never depend on how many records are drawn in total)
//! and every artifact is bit-reproducible from its seed.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::certificates::{self, EnvelopeMode};
use crate::dual::{DualEval, DualProblem};
use crate::error::{Error, Result};
use crate::gibbs;
use crate::mle::{self, CovarianceBundle};
use crate::rng::{stream_rng, Stream};
use crate::solver::{self, SolverConfig, StepRule};
use crate::types::{
    expected_reward, primal_objective, uniform_prompt_dist, Divergence, FeatureTable, Policy,
    PreferenceDataset, PreferenceRecord, RewardModel,
};

/// True rewards are inner products of unit vectors, so 1 bounds them.
pub const TRUE_REWARD_BOUND: f64 = 1.0;

/// Shape and sampling knobs of one synthetic instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub num_prompts: usize,
    pub num_actions: usize,
    pub dim: usize,
    /// Mixture weight `w` of the target parameter in the reference-policy
    /// parameter; in [0, 1].
    pub mixing_weight: f64,
    /// Reference softmax temperature; smaller values concentrate the
    /// reference policy and reduce coverage.
    pub reference_temperature: f64,
    /// Largest dataset size drawn per seed.
    pub n_max: usize,
    /// Sweep grid step; cells run at n_step, 2 n_step, ..., n_max.
    pub n_step: usize,
    /// Threshold interpolation J_min = E_0 + frac (E_hi - E_0).
    pub frac: f64,
    /// Multiplier at which the calibration upper anchor E_hi is read off.
    pub lambda_hi: f64,
    /// Draw count for the sampled calibration mode.
    pub calibration_samples: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            num_prompts: 100,
            num_actions: 10,
            dim: 8,
            mixing_weight: 0.5,
            reference_temperature: 3.5,
            n_max: 3000,
            n_step: 300,
            frac: 0.7,
            lambda_hi: 5.0,
            calibration_samples: 10_000,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_prompts == 0 || self.num_actions == 0 || self.dim == 0 {
            return Err(Error::validation(
                "instance needs at least one prompt, action, and feature dimension",
            ));
        }
        if !(0.0..=1.0).contains(&self.mixing_weight) {
            return Err(Error::validation(format!(
                "mixing weight must lie in [0, 1], got {}",
                self.mixing_weight
            )));
        }
        if !self.reference_temperature.is_finite() || self.reference_temperature <= 0.0 {
            return Err(Error::validation(format!(
                "reference temperature must be positive, got {}",
                self.reference_temperature
            )));
        }
        if self.n_step == 0 || self.n_max < self.n_step {
            return Err(Error::validation(format!(
                "need 1 <= n_step <= n_max, got n_step {} and n_max {}",
                self.n_step, self.n_max
            )));
        }
        if !(0.0..=1.0).contains(&self.frac) {
            return Err(Error::validation(format!(
                "threshold fraction must lie in [0, 1], got {}",
                self.frac
            )));
        }
        if !self.lambda_hi.is_finite() || self.lambda_hi < 0.0 {
            return Err(Error::validation(format!(
                "calibration multiplier must be nonnegative, got {}",
                self.lambda_hi
            )));
        }
        if self.calibration_samples == 0 {
            return Err(Error::validation("need at least one calibration sample"));
        }
        Ok(())
    }

    /// Desk-scale shape used by the brute-force cross-checks.
    pub fn tiny(seed: u64) -> Self {
        SyntheticConfig {
            seed,
            num_prompts: 3,
            num_actions: 3,
            dim: 2,
            reference_temperature: 0.7,
            n_max: 60,
            n_step: 20,
            ..SyntheticConfig::default()
        }
    }

    /// Dataset sizes the sweep visits: n_step, 2 n_step, ..., n_max.
    pub fn n_grid(&self) -> Vec<usize> {
        (1..)
            .map(|i| i * self.n_step)
            .take_while(|n| *n <= self.n_max)
            .collect()
    }
}

/// One fully materialized synthetic environment.
#[derive(Debug, Clone)]
pub struct Instance {
    pub config: SyntheticConfig,
    pub table: FeatureTable,
    /// Ground-truth target oracle parameter (unit norm).
    pub theta_target: DVector<f64>,
    /// Ground-truth constraint oracle parameter (unit norm).
    pub theta_constraint: DVector<f64>,
    /// Mixture parameter behind the reference policy.
    pub theta_reference: DVector<f64>,
    pub reference: Policy,
    pub prompt_dist: Vec<f64>,
}

impl Instance {
    pub fn target_rewards(&self) -> Vec<f64> {
        self.table.rewards(&self.theta_target).as_slice().to_vec()
    }

    pub fn constraint_rewards(&self) -> Vec<f64> {
        self.table
            .rewards(&self.theta_constraint)
            .as_slice()
            .to_vec()
    }

    /// Ground-truth models in solver order: target first, then constraint.
    pub fn true_models(&self) -> Vec<RewardModel> {
        vec![
            RewardModel::new(self.theta_target.clone()),
            RewardModel::new(self.theta_constraint.clone()),
        ]
    }

    /// Ground-truth dual problem at threshold `j_min`.
    pub fn dual_problem(&self, eta: f64, j_min: Vec<f64>) -> Result<DualProblem> {
        DualProblem::from_models(
            &self.table,
            self.reference.clone(),
            self.prompt_dist.clone(),
            &self.true_models(),
            eta,
            j_min,
        )
    }
}

/// Draws a standard-normal vector and scales it to unit norm. Re-draws in
/// the (measure-zero) event of a numerically zero vector.
fn unit_normal_vector<R: Rng>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-9 {
            return v / norm;
        }
    }
}

/// Ground-truth parameter of oracle `index` (0 = target, 1 = constraint,
/// 2.. = extra constraints for multi-constraint experiments), drawn from
/// its own named stream so adding oracles never perturbs existing ones.
pub fn oracle_theta(config: &SyntheticConfig, index: u64) -> DVector<f64> {
    let mut rng = stream_rng(config.seed, Stream::Oracle(index));
    unit_normal_vector(&mut rng, config.dim)
}

/// Builds the environment: unit-norm features, unit-norm oracle
/// parameters, and the softmax reference policy. Fully determined by
/// `config.seed`; the features and oracle parameters do not depend on the
/// mixing weight, so sweeps over `w` reuse the same ground truth.
pub fn generate_instance(config: &SyntheticConfig) -> Result<Instance> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, Stream::Features);
    let pairs = config.num_prompts * config.num_actions;
    let mut data = Vec::with_capacity(pairs * config.dim);
    for _ in 0..pairs {
        let phi = unit_normal_vector(&mut rng, config.dim);
        data.extend_from_slice(phi.as_slice());
    }
    let table = FeatureTable::new(config.num_prompts, config.num_actions, config.dim, data)?;

    let theta_target = oracle_theta(config, 0);
    let theta_constraint = oracle_theta(config, 1);
    let w = config.mixing_weight;
    let theta_reference = &theta_target * w + &theta_constraint * (1.0 - w);

    let reference_rewards = table.rewards(&theta_reference);
    let reference = gibbs::gibbs_from_rewards(
        &Policy::uniform(config.num_prompts, config.num_actions),
        reference_rewards.as_slice(),
        config.reference_temperature,
    )?;
    let prompt_dist = uniform_prompt_dist(config.num_prompts);

    Ok(Instance {
        config: config.clone(),
        table,
        theta_target,
        theta_constraint,
        theta_reference,
        reference,
        prompt_dist,
    })
}

/// Inverse-CDF draw from one probability row; `u` is uniform on [0, 1).
fn sample_index(row: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, p) in row.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    row.len() - 1
}

/// Draws `n` i.i.d. preference records: prompt uniform, two actions i.i.d.
/// from the reference policy, and one Bernoulli label per oracle with
/// success probability sigma of the oracle's reward difference.
///
/// Records are drawn sequentially from a single stream with a fixed number
/// of draws per record, so for any `n' < n` the first `n'` records equal
/// `sample_dataset(instance, n', seed)` exactly.
pub fn sample_dataset(instance: &Instance, n: usize, seed: u64) -> Result<PreferenceDataset> {
    let thetas = [&instance.theta_target, &instance.theta_constraint];
    sample_dataset_for(&instance.table, &instance.reference, &thetas, n, seed)
}

/// General form of [`sample_dataset`] labeling with an arbitrary list of
/// oracle parameters (target first).
pub fn sample_dataset_for(
    table: &FeatureTable,
    reference: &Policy,
    thetas: &[&DVector<f64>],
    n: usize,
    seed: u64,
) -> Result<PreferenceDataset> {
    if n == 0 {
        return Err(Error::validation("need at least one preference record"));
    }
    if reference.num_prompts() != table.num_prompts()
        || reference.num_actions() != table.num_actions()
    {
        return Err(Error::validation(
            "sampling policy shape does not match the feature table",
        ));
    }
    let reward_tables: Vec<DVector<f64>> = thetas.iter().map(|t| table.rewards(t)).collect();
    let num_actions = table.num_actions();
    let mut rng = stream_rng(seed, Stream::Dataset);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let prompt = rng.random_range(0..table.num_prompts());
        let u_first: f64 = rng.random();
        let u_second: f64 = rng.random();
        let row = reference.row(prompt);
        let first = sample_index(row, u_first);
        let second = sample_index(row, u_second);
        let labels = reward_tables
            .iter()
            .map(|rt| {
                let z = rt[prompt * num_actions + first] - rt[prompt * num_actions + second];
                let u: f64 = rng.random();
                u8::from(u < mle::sigmoid(z))
            })
            .collect();
        records.push(PreferenceRecord {
            prompt,
            first,
            second,
            labels,
        });
    }
    PreferenceDataset::new(thetas.len(), records)
}

/// How the calibration expectations are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMode {
    /// Exact expectations over the finite prompt/action space (default).
    Exact,
    /// Monte-Carlo estimate with this many draws per anchor policy.
    Sampled(usize),
}

/// Calibrated constraint threshold and its two anchor expectations.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub j_min: f64,
    /// Constraint expectation of the unconstrained optimum (multiplier 0).
    pub e_zero: f64,
    /// Constraint expectation at the large anchor multiplier.
    pub e_hi: f64,
    pub mode_label: String,
}

/// Places the constraint threshold between the constraint expectations of
/// the unconstrained optimum and of the heavily constrained policy:
/// J_min = E_0 + frac (E_hi - E_0). With frac < 1 the greedy constraint
/// policy remains strictly feasible, so Slater's condition holds by
/// construction.
pub fn calibrate_jmin(
    instance: &Instance,
    eta: f64,
    mode: CalibrationMode,
) -> Result<Calibration> {
    let cfg = &instance.config;
    // The threshold plays no role in the anchor policies, so any finite
    // placeholder works here.
    let problem = instance.dual_problem(eta, vec![0.0])?;
    let at_zero = problem.eval(&[0.0])?;
    let at_hi = problem.eval(&[cfg.lambda_hi])?;
    let r2 = instance.constraint_rewards();

    let (e_zero, e_hi, mode_label) = match mode {
        CalibrationMode::Exact => (
            expected_reward(&at_zero.policy, &instance.prompt_dist, &r2),
            expected_reward(&at_hi.policy, &instance.prompt_dist, &r2),
            "exact".to_string(),
        ),
        CalibrationMode::Sampled(samples) => {
            if samples == 0 {
                return Err(Error::validation("need at least one calibration sample"));
            }
            let mut rng = stream_rng(cfg.seed, Stream::Calibration);
            let mut estimate = |policy: &Policy| -> f64 {
                let mut acc = 0.0;
                for _ in 0..samples {
                    let ux: f64 = rng.random();
                    let prompt = sample_index(&instance.prompt_dist, ux);
                    let ua: f64 = rng.random();
                    let action = sample_index(policy.row(prompt), ua);
                    acc += r2[prompt * cfg.num_actions + action];
                }
                acc / samples as f64
            };
            let e_zero = estimate(&at_zero.policy);
            let e_hi = estimate(&at_hi.policy);
            (e_zero, e_hi, format!("sampled({samples})"))
        }
    };

    Ok(Calibration {
        j_min: e_zero + cfg.frac * (e_hi - e_zero),
        e_zero,
        e_hi,
        mode_label,
    })
}

const GOLDEN_INTERVAL_TOL: f64 = 1e-9;
const GOLDEN_GRADIENT_TOL: f64 = 1e-10;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Ground-truth optimal multiplier for a single-constraint problem:
/// golden-section search on [0, radius] down to interval width 1e-9 (or
/// gradient magnitude 1e-10), then Newton polish on the gradient using
/// the exact Hessian. Returns the multiplier and the full dual evaluation
/// there (whose policy is the ground-truth optimal policy).
pub fn oracle_lambda_star(problem: &DualProblem, radius: f64) -> Result<(f64, DualEval)> {
    if problem.num_constraints() != 1 {
        return Err(Error::validation(
            "scalar multiplier oracle needs exactly one constraint; use the dense grid for more",
        ));
    }
    if !radius.is_finite() || radius <= 0.0 {
        return Err(Error::validation(format!(
            "search radius must be positive and finite, got {radius}"
        )));
    }
    let at_zero = problem.eval(&[0.0])?;
    if at_zero.gradient[0] >= 0.0 {
        // The dual is nondecreasing on the whole box, so 0 is optimal.
        return Ok((0.0, at_zero));
    }

    let mut lo = 0.0;
    let mut hi = radius;
    let mut probe_lo = hi - INV_PHI * (hi - lo);
    let mut probe_hi = lo + INV_PHI * (hi - lo);
    let mut eval_lo = problem.eval(&[probe_lo])?;
    let mut eval_hi = problem.eval(&[probe_hi])?;
    let mut candidate = if eval_lo.value <= eval_hi.value {
        probe_lo
    } else {
        probe_hi
    };
    while hi - lo > GOLDEN_INTERVAL_TOL {
        if eval_lo.gradient[0].abs() <= GOLDEN_GRADIENT_TOL {
            candidate = probe_lo;
            break;
        }
        if eval_hi.gradient[0].abs() <= GOLDEN_GRADIENT_TOL {
            candidate = probe_hi;
            break;
        }
        if eval_lo.value <= eval_hi.value {
            hi = probe_hi;
            probe_hi = probe_lo;
            eval_hi = eval_lo;
            probe_lo = hi - INV_PHI * (hi - lo);
            eval_lo = problem.eval(&[probe_lo])?;
            candidate = probe_lo;
        } else {
            lo = probe_lo;
            probe_lo = probe_hi;
            eval_lo = eval_hi;
            probe_hi = lo + INV_PHI * (hi - lo);
            eval_hi = problem.eval(&[probe_hi])?;
            candidate = probe_hi;
        }
    }

    // Newton polish: the gradient is exact and monotone, so a handful of
    // steps from a point this close lands on machine-precision KKT.
    let mut lambda = candidate;
    let mut eval = problem.eval(&[lambda])?;
    for _ in 0..60 {
        let grad = eval.gradient[0];
        if grad.abs() <= 1e-13 {
            break;
        }
        let curv = eval.hessian[(0, 0)];
        if !(curv.is_finite() && curv > 1e-14) {
            break;
        }
        let next = (lambda - grad / curv).clamp(0.0, radius);
        if (next - lambda).abs() < 1e-16 {
            break;
        }
        lambda = next;
        eval = problem.eval(&[lambda])?;
    }
    // A strictly inactive constraint should have been caught at 0; keep
    // the better of the polished point and the left endpoint regardless.
    if at_zero.value <= eval.value {
        return Ok((0.0, at_zero));
    }
    Ok((lambda, eval))
}

/// Exhaustive two-constraint oracle: scans the grid
/// {0, spacing, 2 spacing, ..., radius}^2 and returns the grid argmin with
/// its dual evaluation. Rows of the grid are scanned in parallel; ties
/// break toward the lexicographically smallest index pair.
pub fn dense_dual_minimum_2d(
    problem: &DualProblem,
    radius: f64,
    spacing: f64,
) -> Result<([f64; 2], DualEval)> {
    if problem.num_constraints() != 2 {
        return Err(Error::validation("dense 2-D oracle needs exactly two constraints"));
    }
    if !radius.is_finite() || radius <= 0.0 || !spacing.is_finite() || spacing <= 0.0 {
        return Err(Error::validation(
            "grid radius and spacing must be positive and finite",
        ));
    }
    let steps = (radius / spacing).ceil() as usize;
    let coord = |i: usize| (i as f64 * spacing).min(radius);
    let best = (0..=steps)
        .into_par_iter()
        .map(|i| {
            let li = coord(i);
            let mut row_best: Option<(f64, usize, usize)> = None;
            for j in 0..=steps {
                let value = problem
                    .eval(&[li, coord(j)])
                    .map(|e| e.value)
                    .map_err(|e| e.to_string())?;
                let better = match row_best {
                    None => true,
                    Some((v, _, _)) => value < v,
                };
                if better {
                    row_best = Some((value, i, j));
                }
            }
            Ok(row_best.expect("grid has at least one point"))
        })
        .collect::<std::result::Result<Vec<_>, String>>()
        .map_err(Error::numerical)?
        .into_iter()
        .min_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        })
        .expect("grid has at least one row");
    let argmin = [coord(best.1), coord(best.2)];
    let eval = problem.eval(&argmin)?;
    Ok((argmin, eval))
}

/// Euclidean projection of one row onto the probability simplex.
fn project_row_simplex(row: &mut [f64], scratch: &mut Vec<f64>) {
    scratch.clear();
    scratch.extend_from_slice(row);
    scratch.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (j, &u) in scratch.iter().enumerate() {
        cum += u;
        let candidate = (1.0 - cum) / (j + 1) as f64;
        if u + candidate > 0.0 {
            shift = candidate;
        }
    }
    for p in row.iter_mut() {
        *p = (*p + shift).max(0.0);
    }
}

/// Euclidean projection onto the intersection of the per-prompt simplices
/// with the half-space `<weights, p> >= threshold`. The multiplier `nu` of
/// the half-space is found by bisection on the monotone map
/// nu -> <weights, rowproj(v + nu * weights)>.
fn project_feasible(
    point: &mut [f64],
    weights: &[f64],
    threshold: f64,
    num_prompts: usize,
    num_actions: usize,
) -> Result<()> {
    let apply = |nu: f64, out: &mut Vec<f64>, scratch: &mut Vec<f64>, src: &[f64]| -> f64 {
        out.clear();
        out.extend(src.iter().zip(weights).map(|(v, w)| v + nu * w));
        for x in 0..num_prompts {
            project_row_simplex(&mut out[x * num_actions..(x + 1) * num_actions], scratch);
        }
        out.iter().zip(weights).map(|(p, w)| p * w).sum()
    };

    let src = point.to_vec();
    let mut out = Vec::with_capacity(src.len());
    let mut scratch = Vec::with_capacity(num_actions);
    let plain = apply(0.0, &mut out, &mut scratch, &src);
    if plain >= threshold - 1e-12 {
        point.copy_from_slice(&out);
        return Ok(());
    }

    let mut lo = 0.0;
    let mut hi = 1e-3;
    let mut expansions = 0;
    while apply(hi, &mut out, &mut scratch, &src) < threshold {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 400 {
            return Err(Error::numerical(
                "feasibility projection failed to bracket the constraint multiplier",
            ));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if apply(mid, &mut out, &mut scratch, &src) >= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Evaluate at the feasible end of the final bracket.
    apply(hi, &mut out, &mut scratch, &src);
    point.copy_from_slice(&out);
    Ok(())
}

/// Best feasible policy found by direct primal ascent.
#[derive(Debug, Clone)]
pub struct BruteForceSolution {
    pub policy: Policy,
    pub objective: f64,
    /// Expected constraint reward of the returned policy.
    pub constraint_value: f64,
    pub iterations: usize,
}

pub const BRUTE_FORCE_RESTARTS: usize = 4;
pub const BRUTE_FORCE_MAX_ITERATIONS: usize = 200_000;

/// Directly maximizes the regularized constrained objective over the
/// product of per-prompt simplices by projected gradient ascent with a
/// backtracking (and re-expanding) step, run from the reference policy,
/// the uniform policy, and `restarts` random interior starts; the best
/// coarse start is then polished until the iterates stagnate. Intended
/// for desk-scale instances; completely independent of the dual solver's
/// closed-form machinery, so the two sides form a strong-duality check.
pub fn brute_force_primal(
    problem: &DualProblem,
    seed: u64,
    restarts: usize,
    max_iterations: usize,
) -> Result<BruteForceSolution> {
    if problem.num_constraints() != 1 {
        return Err(Error::validation(
            "primal ascent oracle handles exactly one constraint",
        ));
    }
    if max_iterations == 0 {
        return Err(Error::validation("need at least one ascent iteration"));
    }
    let num_prompts = problem.num_prompts();
    let num_actions = problem.num_actions();
    let cells = num_prompts * num_actions;
    let dist = problem.prompt_dist();
    let r1 = problem.target_rewards();
    let r2 = problem.constraint_rewards(0);
    let reference = problem.reference();
    let eta = problem.eta();
    let threshold = problem.j_min()[0];

    // Feasibility precheck: the best achievable constraint expectation is
    // attained by the per-prompt greedy policy.
    let greedy = Policy::greedy(num_prompts, num_actions, r2);
    let greedy_value = expected_reward(&greedy, dist, r2);
    if greedy_value < threshold - 1e-12 {
        return Err(Error::validation(format!(
            "no feasible policy: the best constraint expectation {greedy_value:.6} \
             is below the threshold {threshold:.6}"
        )));
    }
    if greedy_value - threshold <= 1e-10 {
        // The feasible set is (numerically) the single greedy policy.
        let objective = primal_objective(&greedy, reference, dist, r1, eta, Divergence::Kl)?;
        return Ok(BruteForceSolution {
            policy: greedy,
            objective,
            constraint_value: greedy_value,
            iterations: 0,
        });
    }

    let weights: Vec<f64> = (0..cells)
        .map(|i| dist[i / num_actions] * r2[i])
        .collect();

    let objective_raw = |p: &[f64]| -> f64 {
        let mut acc = 0.0;
        for x in 0..num_prompts {
            let mut row_acc = 0.0;
            for a in 0..num_actions {
                let i = x * num_actions + a;
                let pi = p[i];
                if pi > 0.0 {
                    row_acc += pi * r1[i] - eta * pi * (pi / reference.prob(x, a)).ln();
                }
            }
            acc += dist[x] * row_acc;
        }
        acc
    };
    // Probability floor inside the gradient only: the objective itself is
    // evaluated exactly. Projections park iterates on the simplex boundary,
    // where the raw log term diverges and would make the first-order model
    // overstate achievable gains so badly that backtracking never accepts.
    let gradient = |p: &[f64], g: &mut Vec<f64>| {
        g.clear();
        for x in 0..num_prompts {
            for a in 0..num_actions {
                let i = x * num_actions + a;
                let ratio = p[i].max(1e-12) / reference.prob(x, a);
                g.push(dist[x] * (r1[i] - eta * (ratio.ln() + 1.0)));
            }
        }
    };

    let ascend = |p: &mut Vec<f64>, budget: usize| -> Result<(f64, usize)> {
        let mut obj = objective_raw(p);
        let mut grad = Vec::with_capacity(cells);
        let mut step = 1.0f64;
        let mut stagnant = 0usize;
        let mut used = 0usize;
        while used < budget {
            used += 1;
            gradient(p, &mut grad);
            let mut first_try = true;
            // Best strictly improving candidate seen while backtracking;
            // accepted if no step meets the sufficient-increase test (the
            // floored gradient can overstate gains near the boundary).
            let mut fallback: Option<(Vec<f64>, f64)> = None;
            let accepted: Option<(Vec<f64>, f64)>;
            loop {
                let mut cand: Vec<f64> =
                    p.iter().zip(&grad).map(|(v, g)| v + step * g).collect();
                project_feasible(&mut cand, &weights, threshold, num_prompts, num_actions)?;
                let along: f64 = grad
                    .iter()
                    .zip(cand.iter().zip(p.iter()))
                    .map(|(g, (c, v))| g * (c - v))
                    .sum();
                let cand_obj = objective_raw(&cand);
                if cand_obj.is_finite() && cand_obj >= obj + 0.1 * along - 1e-18 {
                    if first_try {
                        step = (step * 2.0).min(64.0);
                    }
                    accepted = Some((cand, cand_obj));
                    break;
                }
                if cand_obj.is_finite()
                    && cand_obj > obj
                    && fallback.as_ref().is_none_or(|(_, b)| cand_obj > *b)
                {
                    fallback = Some((cand, cand_obj));
                }
                step *= 0.5;
                first_try = false;
                if step < 1e-18 {
                    accepted = fallback.take();
                    break;
                }
            }
            let Some((cand, cand_obj)) = accepted else {
                // No improvement representable in floating point remains.
                return Ok((obj, used));
            };
            let moved = cand
                .iter()
                .zip(p.iter())
                .map(|(c, v)| (c - v).abs())
                .fold(0.0f64, f64::max);
            let gained = cand_obj - obj;
            *p = cand;
            obj = cand_obj;
            if moved <= 1e-14 && gained <= 1e-16 {
                stagnant += 1;
            } else {
                stagnant = 0;
            }
            if stagnant >= 25 {
                break;
            }
        }
        Ok((obj, used))
    };

    // Starts: reference, uniform, and random interior points.
    let mut starts: Vec<Vec<f64>> = vec![
        reference.as_slice().to_vec(),
        vec![1.0 / num_actions as f64; cells],
    ];
    let mut rng = stream_rng(seed, Stream::Aux);
    for _ in 0..restarts {
        let mut p: Vec<f64> = (0..cells)
            .map(|_| -(rng.random::<f64>().max(1e-16)).ln())
            .collect();
        for x in 0..num_prompts {
            let row = &mut p[x * num_actions..(x + 1) * num_actions];
            let sum: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        starts.push(p);
    }

    let coarse_budget = 2_000.min(max_iterations);
    let mut total_iterations = 0usize;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mut start in starts {
        project_feasible(&mut start, &weights, threshold, num_prompts, num_actions)?;
        let (obj, used) = ascend(&mut start, coarse_budget)?;
        total_iterations += used;
        if best.as_ref().is_none_or(|(b, _)| obj > *b) {
            best = Some((obj, start));
        }
    }
    let (_, mut point) = best.expect("at least one start");
    let (_, used) = ascend(&mut point, max_iterations.saturating_sub(coarse_budget))?;
    total_iterations += used;

    // Entropic refinement. The additive ascent above crawls once optimal
    // probabilities reach the 1e-4..1e-8 range (its effective conditioning
    // is eta / p_min), so the terminal digits are polished with
    // multiplicative steps that match the simplex geometry: tilt the
    // current point row-wise by exp(s * gradient) and, when the tilt
    // leaves the constraint half-space, restore feasibility exactly with a
    // bisected nonnegative multiplier on the constraint direction.
    // Candidates are only accepted on improvement, so the refinement can
    // only strengthen the ascent result.
    let mut obj = objective_raw(&point);
    let refine_candidate = |p: &[f64], s: f64, nu: f64, out: &mut Vec<f64>| -> f64 {
        out.clear();
        let keep = 1.0 - s * eta;
        for x in 0..num_prompts {
            let base = x * num_actions;
            let mut max_logit = f64::NEG_INFINITY;
            for a in 0..num_actions {
                let i = base + a;
                let logit = keep * p[i].max(1e-300).ln()
                    + s * eta * reference.prob(x, a).ln()
                    + s * (r1[i] + nu * r2[i]);
                out.push(logit);
                max_logit = max_logit.max(logit);
            }
            let mut z = 0.0;
            for v in &mut out[base..base + num_actions] {
                *v = (*v - max_logit).exp();
                z += *v;
            }
            for v in &mut out[base..base + num_actions] {
                *v /= z;
            }
        }
        out.iter().zip(&weights).map(|(y, w)| y * w).sum()
    };
    let mut candidate = Vec::with_capacity(cells);
    let mut flat = 0usize;
    'refine: for _ in 0..200 {
        let mut s = 1.0 / eta;
        let accepted = loop {
            let mut constraint = refine_candidate(&point, s, 0.0, &mut candidate);
            if constraint < threshold {
                // Bracket and bisect the feasibility-restoring multiplier,
                // keeping the upper end feasible.
                let mut lo = 0.0;
                let mut hi = 1e-3;
                let mut bracketed = true;
                for expansions in 0.. {
                    constraint = refine_candidate(&point, s, hi, &mut candidate);
                    if constraint >= threshold {
                        break;
                    }
                    lo = hi;
                    hi *= 2.0;
                    if expansions > 400 {
                        bracketed = false;
                        break;
                    }
                }
                if bracketed {
                    for _ in 0..100 {
                        let mid = 0.5 * (lo + hi);
                        if refine_candidate(&point, s, mid, &mut candidate) >= threshold {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    refine_candidate(&point, s, hi, &mut candidate);
                } else {
                    // The tilt family cannot reach the half-space at this
                    // step size; shrink and retry.
                    s *= 0.5;
                    if s * eta < 1e-12 {
                        break false;
                    }
                    continue;
                }
            }
            let cand_obj = objective_raw(&candidate);
            if cand_obj > obj {
                let gained = cand_obj - obj;
                std::mem::swap(&mut point, &mut candidate);
                obj = cand_obj;
                total_iterations += 1;
                if gained <= 1e-15 {
                    flat += 1;
                } else {
                    flat = 0;
                }
                break true;
            }
            s *= 0.5;
            if s * eta < 1e-12 {
                break false;
            }
        };
        if !accepted || flat >= 2 {
            break 'refine;
        }
    }

    let policy = Policy::new(num_prompts, num_actions, point)?;
    let objective = primal_objective(&policy, reference, dist, r1, eta, Divergence::Kl)?;
    let constraint_value = expected_reward(&policy, dist, r2);
    Ok(BruteForceSolution {
        policy,
        objective,
        constraint_value,
        iterations: total_iterations,
    })
}

/// Largest per-prompt total-variation distance between two policies.
pub fn total_variation(a: &Policy, b: &Policy) -> f64 {
    assert_eq!(a.num_prompts(), b.num_prompts());
    assert_eq!(a.num_actions(), b.num_actions());
    (0..a.num_prompts())
        .map(|x| {
            0.5 * a
                .row(x)
                .iter()
                .zip(b.row(x))
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Full sweep specification: instance shape plus solve/certificate knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: SyntheticConfig,
    /// Mixing weights compared side by side.
    pub w_values: Vec<f64>,
    /// Seeds run per mixing weight: base.seed, base.seed + 1, ...
    pub num_seeds: u64,
    pub eta: f64,
    pub lambda_reg: f64,
    pub delta: f64,
    /// Projected-gradient iteration count T per cell.
    pub iterations: usize,
    /// Grid density for the strong-convexity modulus scan.
    pub modulus_grid: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            base: SyntheticConfig::default(),
            w_values: vec![0.3, 0.6, 0.9],
            num_seeds: 5,
            eta: 0.05,
            lambda_reg: 0.002,
            delta: 0.05,
            iterations: 1000,
            modulus_grid: 64,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.w_values.is_empty() {
            return Err(Error::validation("need at least one mixing weight"));
        }
        if self.w_values.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::validation("mixing weights must lie in [0, 1]"));
        }
        if self.num_seeds == 0 {
            return Err(Error::validation("need at least one seed"));
        }
        if !self.eta.is_finite() || self.eta <= 0.0 {
            return Err(Error::validation("penalty weight eta must be positive"));
        }
        if !self.lambda_reg.is_finite() || self.lambda_reg <= 0.0 {
            return Err(Error::validation("ridge weight must be positive"));
        }
        if !(0.0..0.5).contains(&self.delta) || self.delta <= 0.0 {
            return Err(Error::validation("delta must lie in (0, 0.5)"));
        }
        if self.iterations == 0 {
            return Err(Error::validation("need at least one solver iteration"));
        }
        if self.modulus_grid < 2 {
            return Err(Error::validation("modulus grid needs at least two points"));
        }
        Ok(())
    }
}

/// One (mixing weight, seed, dataset size) sweep cell.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub w: f64,
    pub seed: u64,
    pub n: usize,
    pub j_min: f64,
    /// Positive-part constraint violation of the unconstrained optimum;
    /// identical across the cell's dataset sizes.
    pub initial_violation: f64,
    /// Empirical reward bound of the fitted constraint model.
    pub bound_b_hat: f64,
    /// Reward bound used in certificates: max(1, bound_b_hat).
    pub bound_b_cert: f64,
    /// Projection radius (ground-truth deterministic multiplier bound).
    pub radius: f64,
    pub lambda_star: f64,
    pub lambda_bar: f64,
    pub dual_gap: f64,
    pub violation: f64,
    pub violation_signed: f64,
    pub primal_gap: f64,
    pub deployed_violation: f64,
    pub deployed_violation_signed: f64,
    pub deployed_primal_gap: f64,
    pub theta_err_target: f64,
    pub theta_err_constraint: f64,
    pub beta_n: f64,
    /// Whether both fitted parameters fell inside their confidence balls
    /// (checked against ground truth; the certificates assume it).
    pub mle_event: bool,
    pub bound_dual_gap: f64,
    pub bound_violation: f64,
    pub bound_primal_gap: f64,
    /// Union-bound confidence budget backing the three bounds.
    pub probability_budget: String,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
}

/// Mean and standard error across seeds for one (w, N) summary cell.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub w: f64,
    pub n: usize,
    pub seeds: usize,
    pub mean_violation: f64,
    pub se_violation: f64,
    pub mean_suboptimality: f64,
    pub se_suboptimality: f64,
    pub mean_theta_err_constraint: f64,
    pub se_theta_err_constraint: f64,
    pub mean_initial_violation: f64,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// Runs all rows for one (mixing weight, seed) pair: generate, calibrate,
/// bound the multiplier from ground truth, locate the true optimum, then
/// fit/solve/evaluate on each dataset prefix.
fn sweep_cell(config: &SweepConfig, w: f64, seed_offset: u64) -> Result<Vec<SweepRow>> {
    let mut instance_config = config.base.clone();
    instance_config.seed = config.base.seed + seed_offset;
    instance_config.mixing_weight = w;
    let instance = generate_instance(&instance_config)?;
    let calibration = calibrate_jmin(&instance, config.eta, CalibrationMode::Exact)?;
    let j_min = calibration.j_min;
    let initial_violation = (j_min - calibration.e_zero).max(0.0);
    let truth = instance.dual_problem(config.eta, vec![j_min])?;

    // Ground-truth deterministic multiplier bound; rewards are inner
    // products of unit vectors so 1 bounds the optimal value.
    let r2 = instance.constraint_rewards();
    let greedy = Policy::greedy(instance_config.num_prompts, instance_config.num_actions, &r2);
    let rho = expected_reward(&greedy, &instance.prompt_dist, &r2) - j_min;
    let j_tilde = primal_objective(
        &greedy,
        &instance.reference,
        &instance.prompt_dist,
        &instance.target_rewards(),
        config.eta,
        Divergence::Kl,
    )?;
    let grad_zero = truth.eval(&[0.0])?.gradient[0];
    let radius_first = (TRUE_REWARD_BOUND - j_tilde) / rho;
    let modulus = truth.strong_convexity_modulus(radius_first, config.modulus_grid)?;
    let multiplier = certificates::multiplier_bound_deterministic(
        TRUE_REWARD_BOUND,
        j_tilde,
        rho,
        grad_zero,
        modulus.modulus,
    )?;
    let radius = multiplier.bound;
    let (lambda_star, _) = oracle_lambda_star(&truth, radius)?;

    let dataset = sample_dataset(&instance, instance_config.n_max, instance_config.seed)?;
    let mut rows = Vec::new();
    for n in instance_config.n_grid() {
        let prefix = PreferenceDataset::new(2, dataset.records[..n].to_vec())?;
        let (deltas, fits) =
            mle::fit_all_oracles(&instance.table, &prefix, config.lambda_reg, Some(1.0))?;
        let bundle = CovarianceBundle::new(&deltas, config.lambda_reg)?;
        let models: Vec<RewardModel> = fits.iter().map(|f| f.model.clone()).collect();
        let estimated = DualProblem::from_models(
            &instance.table,
            instance.reference.clone(),
            instance.prompt_dist.clone(),
            &models,
            config.eta,
            vec![j_min],
        )?;
        let bound_b_hat = estimated.empirical_reward_bound();
        let solver_config = SolverConfig::new(radius, config.iterations, StepRule::Auto);
        let trace = solver::solve_dual(&estimated, &solver_config)?;
        let metrics =
            solver::evaluate_solution(&truth, &estimated, &trace.lambda_bar, &[lambda_star])?;

        let bound_b_cert = bound_b_hat.max(1.0);
        let beta_n = mle::confidence_radius(
            n,
            instance_config.dim,
            config.delta,
            bound_b_cert,
            config.lambda_reg,
            1.0,
        )?;
        let err_target = &fits[0].model.theta - &instance.theta_target;
        let err_constraint = &fits[1].model.theta - &instance.theta_constraint;
        let mle_event = mle::matrix_norm(&err_target, &bundle.sigma_reg) <= beta_n
            && mle::matrix_norm(&err_constraint, &bundle.sigma_reg) <= beta_n;
        let envelopes =
            certificates::Envelopes::data_dependent(beta_n, bundle.min_eig, bound_b_cert, config.eta)?;
        let bounds = certificates::solution_bounds(
            envelopes.value(radius),
            envelopes.gradient(radius),
            bound_b_cert,
            config.eta,
            radius,
            config.iterations,
        )?;

        rows.push(SweepRow {
            w,
            seed: instance_config.seed,
            n,
            j_min,
            initial_violation,
            bound_b_hat,
            bound_b_cert,
            radius,
            lambda_star,
            lambda_bar: trace.lambda_bar[0],
            dual_gap: metrics.dual_gap,
            violation: metrics.violation[0],
            violation_signed: metrics.violation_signed[0],
            primal_gap: metrics.primal_gap,
            deployed_violation: metrics.deployed_violation[0],
            deployed_violation_signed: metrics.deployed_violation_signed[0],
            deployed_primal_gap: metrics.deployed_primal_gap,
            theta_err_target: err_target.norm(),
            theta_err_constraint: err_constraint.norm(),
            beta_n,
            mle_event,
            bound_dual_gap: bounds.dual_gap,
            bound_violation: bounds.violation,
            bound_primal_gap: bounds.primal_gap,
            probability_budget: EnvelopeMode::DataDependent.probability_budget().to_string(),
        });
    }
    Ok(rows)
}

/// Runs the full sweep: every (mixing weight, seed) pair in parallel, each
/// visiting every dataset size on the grid. Output rows are ordered by
/// (w_values order, seed, N) regardless of scheduling.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepReport> {
    config.validate()?;
    let cells: Vec<(f64, u64)> = config
        .w_values
        .iter()
        .flat_map(|w| (0..config.num_seeds).map(move |s| (*w, s)))
        .collect();
    let per_cell: Vec<Vec<SweepRow>> = cells
        .par_iter()
        .map(|(w, s)| sweep_cell(config, *w, *s))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        config: config.clone(),
        rows: per_cell.into_iter().flatten().collect(),
    })
}

/// Aggregates deployed-policy metrics per (w, N): mean and standard error
/// across seeds of the signed violation (negative when the constraint is
/// satisfied with slack), the signed primal suboptimality, and the
/// constraint-parameter estimation error.
pub fn summarize(report: &SweepReport) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for w in &report.config.w_values {
        for n in report.config.base.n_grid() {
            let cell: Vec<&SweepRow> = report
                .rows
                .iter()
                .filter(|r| r.w == *w && r.n == n)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let violations: Vec<f64> = cell
                .iter()
                .map(|r| r.deployed_violation_signed)
                .collect();
            let subopts: Vec<f64> = cell.iter().map(|r| r.deployed_primal_gap).collect();
            let errs: Vec<f64> = cell.iter().map(|r| r.theta_err_constraint).collect();
            let initial: Vec<f64> = cell.iter().map(|r| r.initial_violation).collect();
            let (mean_violation, se_violation) = mean_and_se(&violations);
            let (mean_suboptimality, se_suboptimality) = mean_and_se(&subopts);
            let (mean_theta_err_constraint, se_theta_err_constraint) = mean_and_se(&errs);
            let (mean_initial_violation, _) = mean_and_se(&initial);
            out.push(SummaryRow {
                w: *w,
                n,
                seeds: cell.len(),
                mean_violation,
                se_violation,
                mean_suboptimality,
                se_suboptimality,
                mean_theta_err_constraint,
                se_theta_err_constraint,
                mean_initial_violation,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::dense_dual_minimum;
    use approx::assert_abs_diff_eq;

    fn tiny_instance(seed: u64) -> Instance {
        generate_instance(&SyntheticConfig::tiny(seed)).unwrap()
    }

    /// Builds the ground-truth problem of a tiny instance with the
    /// threshold calibrated at the instance's own frac.
    fn tiny_truth(seed: u64, eta: f64) -> (Instance, f64, DualProblem) {
        let instance = tiny_instance(seed);
        let calibration = calibrate_jmin(&instance, eta, CalibrationMode::Exact).unwrap();
        let problem = instance
            .dual_problem(eta, vec![calibration.j_min])
            .unwrap();
        (instance, calibration.j_min, problem)
    }

    // --- instance generation -------------------------------------------

    #[test]
    fn features_and_parameters_are_unit_norm() {
        let instance = tiny_instance(7);
        for x in 0..3 {
            for a in 0..3 {
                assert_abs_diff_eq!(
                    instance.table.feature(x, a).norm(),
                    1.0,
                    epsilon = 1e-12
                );
            }
        }
        assert_abs_diff_eq!(instance.theta_target.norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(instance.theta_constraint.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mixture_endpoints_recover_the_oracle_parameters() {
        let mut config = SyntheticConfig::tiny(3);
        config.mixing_weight = 1.0;
        let at_one = generate_instance(&config).unwrap();
        assert_eq!(at_one.theta_reference, at_one.theta_target);
        config.mixing_weight = 0.0;
        let at_zero = generate_instance(&config).unwrap();
        assert_eq!(at_zero.theta_reference, at_zero.theta_constraint);
    }

    #[test]
    fn same_seed_is_bit_identical_and_w_independent_ground_truth() {
        let a = tiny_instance(11);
        let b = tiny_instance(11);
        assert_eq!(a.theta_target, b.theta_target);
        assert_eq!(a.theta_constraint, b.theta_constraint);
        assert_eq!(a.reference.as_slice(), b.reference.as_slice());
        for x in 0..3 {
            for a_idx in 0..3 {
                assert_eq!(
                    a.table.feature(x, a_idx).as_slice(),
                    b.table.feature(x, a_idx).as_slice()
                );
            }
        }
        // Changing w changes only the reference policy, not the ground truth.
        let mut config = SyntheticConfig::tiny(11);
        config.mixing_weight = 0.9;
        let c = generate_instance(&config).unwrap();
        assert_eq!(a.theta_target, c.theta_target);
        assert_eq!(a.theta_constraint, c.theta_constraint);
        assert_ne!(a.reference.as_slice(), c.reference.as_slice());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut config = SyntheticConfig::tiny(0);
        config.mixing_weight = 1.5;
        assert!(generate_instance(&config).is_err());
        let mut config = SyntheticConfig::tiny(0);
        config.reference_temperature = 0.0;
        assert!(generate_instance(&config).is_err());
        let mut config = SyntheticConfig::tiny(0);
        config.frac = 1.2;
        assert!(config.validate().is_err());
    }

    // --- dataset sampling ----------------------------------------------

    #[test]
    fn dataset_prefix_is_exact() {
        let instance = tiny_instance(5);
        let long = sample_dataset(&instance, 200, 42).unwrap();
        let short = sample_dataset(&instance, 50, 42).unwrap();
        assert_eq!(&long.records[..50], &short.records[..]);
    }

    #[test]
    fn preference_frequency_matches_the_bernoulli_mean() {
        // Two prompts / two actions so each ordered pair appears often.
        let config = SyntheticConfig {
            seed: 9,
            num_prompts: 2,
            num_actions: 2,
            dim: 2,
            ..SyntheticConfig::default()
        };
        let instance = generate_instance(&config).unwrap();
        let dataset = sample_dataset(&instance, 60_000, 1).unwrap();
        let r1 = instance.target_rewards();
        let r2 = instance.constraint_rewards();
        for (oracle, rewards) in [(0usize, &r1), (1usize, &r2)] {
            let z = rewards[0] - rewards[1]; // prompt 0: action 0 vs action 1
            let p = mle::sigmoid(z);
            let hits: Vec<u8> = dataset
                .records
                .iter()
                .filter(|r| r.prompt == 0 && r.first == 0 && r.second == 1)
                .map(|r| r.labels[oracle])
                .collect();
            assert!(hits.len() > 2_000, "only {} matching records", hits.len());
            let freq = hits.iter().map(|y| *y as f64).sum::<f64>() / hits.len() as f64;
            let sigma = (p * (1.0 - p) / hits.len() as f64).sqrt();
            assert!(
                (freq - p).abs() <= 3.0 * sigma + 1e-12,
                "oracle {oracle}: frequency {freq:.4} vs mean {p:.4} (3 sigma = {:.4})",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn identical_oracles_give_matching_label_marginals() {
        let mut instance = tiny_instance(13);
        instance.theta_constraint = instance.theta_target.clone();
        let dataset = sample_dataset(&instance, 20_000, 2).unwrap();
        let mean = |k: usize| {
            dataset.records.iter().map(|r| r.labels[k] as f64).sum::<f64>()
                / dataset.records.len() as f64
        };
        // Two independent Bernoulli draws with identical per-record means;
        // the difference of sample means has std <= sqrt(0.5 / n).
        let tol = 3.0 * (0.5f64 / 20_000.0).sqrt();
        assert!((mean(0) - mean(1)).abs() <= tol);
    }

    #[test]
    fn disjoint_blocks_have_consistent_label_means() {
        let instance = tiny_instance(21);
        let dataset = sample_dataset(&instance, 40_000, 3).unwrap();
        let block_mean = |lo: usize, hi: usize| {
            dataset.records[lo..hi]
                .iter()
                .map(|r| r.labels[0] as f64)
                .sum::<f64>()
                / (hi - lo) as f64
        };
        let first = block_mean(0, 20_000);
        let second = block_mean(20_000, 40_000);
        assert!((first - second).abs() <= 3.0 * (0.5f64 / 20_000.0).sqrt());
    }

    // --- calibration -----------------------------------------------------

    #[test]
    fn calibration_endpoints_interpolate_the_anchors() {
        let eta = 0.2;
        let mut config = SyntheticConfig::tiny(17);
        config.frac = 0.0;
        let instance = generate_instance(&config).unwrap();
        let low = calibrate_jmin(&instance, eta, CalibrationMode::Exact).unwrap();
        assert_eq!(low.j_min, low.e_zero);

        config.frac = 1.0;
        let instance = generate_instance(&config).unwrap();
        let high = calibrate_jmin(&instance, eta, CalibrationMode::Exact).unwrap();
        assert_eq!(high.j_min, high.e_hi);

        // Larger multipliers weight the constraint more (dual convexity).
        assert!(high.e_hi >= high.e_zero);

        // frac = 0 leaves the unconstrained optimum exactly feasible.
        let problem = instance.dual_problem(eta, vec![low.j_min]).unwrap();
        let (lambda_star, eval) = oracle_lambda_star(&problem, 5.0).unwrap();
        assert_eq!(lambda_star, 0.0);
        assert!(eval.gradient[0] >= -1e-12);
    }

    #[test]
    fn sampled_calibration_agrees_with_exact_within_noise() {
        let instance = tiny_instance(19);
        let exact = calibrate_jmin(&instance, 0.2, CalibrationMode::Exact).unwrap();
        let sampled =
            calibrate_jmin(&instance, 0.2, CalibrationMode::Sampled(10_000)).unwrap();
        // Rewards live in [-1, 1]: the Monte-Carlo std of each anchor is
        // below 1/sqrt(10^4) = 0.01, so 0.08 is an 8-sigma guard.
        assert!((exact.e_zero - sampled.e_zero).abs() < 0.08);
        assert!((exact.e_hi - sampled.e_hi).abs() < 0.08);
        assert!((exact.j_min - sampled.j_min).abs() < 0.08);
        assert_eq!(sampled.mode_label, "sampled(10000)");
        assert_eq!(exact.mode_label, "exact");
    }

    // --- ground-truth dual oracle ---------------------------------------

    #[test]
    fn oracle_satisfies_kkt_and_matches_the_dense_grid() {
        let eta = 0.2;
        let (_, j_min, problem) = tiny_truth(23, eta);
        let radius = 30.0;
        let (lambda_star, eval) = oracle_lambda_star(&problem, radius).unwrap();
        assert!(lambda_star > 0.0, "expected an active constraint");
        assert!(lambda_star < radius);
        assert!(
            eval.gradient[0].abs() <= 1e-8,
            "interior KKT violated: gradient {}",
            eval.gradient[0]
        );
        // Complementary slackness: the optimal policy sits on the
        // constraint boundary when the multiplier is strictly positive.
        let slack = eval.gradient[0]; // E[r2] - j_min by the gradient identity
        assert!(slack.abs() <= 1e-8);
        let _ = j_min;

        let points = (radius / 1e-4).ceil() as usize;
        let (grid_value, grid_eval) = dense_dual_minimum(&problem, radius, points).unwrap();
        assert!((grid_eval.lambda[0] - lambda_star).abs() <= 2e-4);
        assert!(grid_value >= eval.value - 1e-12);
    }

    #[test]
    fn oracle_rejects_bad_radii_and_multi_constraint_problems() {
        let (_, _, problem) = tiny_truth(29, 0.2);
        assert!(oracle_lambda_star(&problem, 0.0).is_err());
        assert!(oracle_lambda_star(&problem, f64::INFINITY).is_err());
        let instance = tiny_instance(29);
        let theta3 = oracle_theta(&instance.config, 2);
        let models = vec![
            RewardModel::new(instance.theta_target.clone()),
            RewardModel::new(instance.theta_constraint.clone()),
            RewardModel::new(theta3),
        ];
        let two = DualProblem::from_models(
            &instance.table,
            instance.reference.clone(),
            instance.prompt_dist.clone(),
            &models,
            0.2,
            vec![0.0, 0.0],
        )
        .unwrap();
        assert!(oracle_lambda_star(&two, 1.0).is_err());
        let ([l1, l2], _) = dense_dual_minimum_2d(&two, 0.05, 0.01).unwrap();
        assert!(l1 >= 0.0 && l2 >= 0.0);
    }

    // --- projection helpers ----------------------------------------------

    #[test]
    fn simplex_projection_handles_interior_and_vertex_cases() {
        let mut scratch = Vec::new();
        let mut row = [0.3, 0.3, 0.3];
        project_row_simplex(&mut row, &mut scratch);
        for p in row {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
        }
        let mut row = [0.5, 0.5, 2.0];
        project_row_simplex(&mut row, &mut scratch);
        assert_abs_diff_eq!(row[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(row[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(row[2], 1.0, epsilon = 1e-15);
        let mut row = [0.2, 0.8];
        project_row_simplex(&mut row, &mut scratch);
        assert_abs_diff_eq!(row[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(row[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn feasibility_projection_solves_the_hand_case() {
        // One prompt, two actions, weights (1, 0), threshold 0.8. The
        // projection of (0.5, 0.5) onto the simplex slice {p1 >= 0.8} is
        // (0.8, 0.2): the KKT multiplier shifts mass along the weights.
        let mut point = vec![0.5, 0.5];
        project_feasible(&mut point, &[1.0, 0.0], 0.8, 1, 2).unwrap();
        assert_abs_diff_eq!(point[0], 0.8, epsilon = 1e-9);
        assert_abs_diff_eq!(point[1], 0.2, epsilon = 1e-9);
        // Already-feasible points only get the plain simplex projection.
        let mut point = vec![0.9, 0.1];
        project_feasible(&mut point, &[1.0, 0.0], 0.8, 1, 2).unwrap();
        assert_abs_diff_eq!(point[0], 0.9, epsilon = 1e-12);
    }

    // --- brute-force primal oracle ---------------------------------------

    #[test]
    fn brute_force_agrees_with_the_dual_oracle() {
        let eta = 0.2;
        let (_, j_min, problem) = tiny_truth(31, eta);
        let (lambda_star, star) = oracle_lambda_star(&problem, 30.0).unwrap();
        assert!(lambda_star > 0.0);
        let bf = brute_force_primal(&problem, 31, BRUTE_FORCE_RESTARTS, BRUTE_FORCE_MAX_ITERATIONS)
            .unwrap();
        assert!(bf.constraint_value >= j_min - 1e-9);
        // Strong duality: the primal optimum equals the dual minimum.
        assert!(
            (bf.objective - star.value).abs() <= 1e-6,
            "primal {} vs dual {}",
            bf.objective,
            star.value
        );
        assert!(
            total_variation(&bf.policy, &star.policy) <= 1e-4,
            "total variation {}",
            total_variation(&bf.policy, &star.policy)
        );
    }

    #[test]
    fn brute_force_unconstrained_matches_the_closed_form() {
        let eta = 0.25;
        let instance = tiny_instance(37);
        // A threshold below min r2 makes every policy feasible.
        let problem = instance.dual_problem(eta, vec![-10.0]).unwrap();
        let bf = brute_force_primal(&problem, 37, 2, 60_000).unwrap();
        let closed_form = gibbs::gibbs_from_rewards(
            &instance.reference,
            &instance.target_rewards(),
            eta,
        )
        .unwrap();
        assert!(total_variation(&bf.policy, &closed_form) <= 1e-4);
    }

    #[test]
    fn brute_force_reports_infeasible_thresholds() {
        let instance = tiny_instance(41);
        // Rewards of unit vectors never exceed 1.
        let problem = instance.dual_problem(0.2, vec![0.999]).unwrap();
        let err = brute_force_primal(&problem, 41, 2, 1_000).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    // --- sweep harness ----------------------------------------------------

    fn micro_sweep_config() -> SweepConfig {
        SweepConfig {
            base: SyntheticConfig {
                n_max: 40,
                n_step: 20,
                ..SyntheticConfig::tiny(100)
            },
            w_values: vec![0.3, 0.9],
            num_seeds: 2,
            eta: 0.2,
            iterations: 60,
            modulus_grid: 8,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn micro_sweep_is_deterministic_and_well_formed() {
        let config = micro_sweep_config();
        let first = run_sweep(&config).unwrap();
        let second = run_sweep(&config).unwrap();
        assert_eq!(first.rows.len(), 2 * 2 * 2);
        for (a, b) in first.rows.iter().zip(&second.rows) {
            assert_eq!(a.w.to_bits(), b.w.to_bits());
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.n, b.n);
            assert_eq!(a.lambda_bar.to_bits(), b.lambda_bar.to_bits());
            assert_eq!(a.dual_gap.to_bits(), b.dual_gap.to_bits());
            assert_eq!(a.deployed_violation.to_bits(), b.deployed_violation.to_bits());
            assert_eq!(a.theta_err_constraint.to_bits(), b.theta_err_constraint.to_bits());
            assert_eq!(a.bound_primal_gap.to_bits(), b.bound_primal_gap.to_bits());
        }
        // Rows arrive ordered by (w, seed, n) and all numerics are finite.
        let mut expected = Vec::new();
        for w in &config.w_values {
            for s in 0..config.num_seeds {
                for n in config.base.n_grid() {
                    expected.push((*w, config.base.seed + s, n));
                }
            }
        }
        let got: Vec<(f64, u64, usize)> =
            first.rows.iter().map(|r| (r.w, r.seed, r.n)).collect();
        assert_eq!(got, expected);
        for row in &first.rows {
            for value in [
                row.j_min,
                row.initial_violation,
                row.bound_b_hat,
                row.radius,
                row.lambda_star,
                row.lambda_bar,
                row.dual_gap,
                row.violation,
                row.primal_gap,
                row.deployed_violation,
                row.theta_err_target,
                row.theta_err_constraint,
                row.beta_n,
                row.bound_dual_gap,
                row.bound_violation,
                row.bound_primal_gap,
            ] {
                assert!(value.is_finite());
            }
            assert!(row.dual_gap >= -1e-12, "averaged iterate cannot beat the minimum");
            assert!(row.violation >= 0.0 && row.deployed_violation >= 0.0);
            assert_eq!(row.probability_budget, "1 - 2*delta");
            assert!(row.bound_b_cert >= 1.0);
        }
    }

    #[test]
    fn summaries_aggregate_across_seeds_in_grid_order() {
        let config = micro_sweep_config();
        let report = run_sweep(&config).unwrap();
        let summary = summarize(&report);
        assert_eq!(summary.len(), 2 * 2); // (w, n) cells
        for row in &summary {
            assert_eq!(row.seeds, 2);
            assert!(row.mean_violation >= 0.0);
            assert!(row.se_violation >= 0.0);
            assert!(row.mean_suboptimality >= 0.0);
            assert!(row.mean_theta_err_constraint > 0.0);
        }
        assert_eq!(
            summary.iter().map(|r| (r.w, r.n)).collect::<Vec<_>>(),
            vec![(0.3, 20), (0.3, 40), (0.9, 20), (0.9, 40)]
        );
    }

    #[test]
    fn mean_and_se_match_hand_values() {
        let (mean, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(mean, 2.5, epsilon = 1e-15);
        // Sample variance 5/3, SE = sqrt(5/12).
        assert_abs_diff_eq!(se, (5.0f64 / 12.0).sqrt(), epsilon = 1e-15);
        let (single_mean, single_se) = mean_and_se(&[7.0]);
        assert_eq!(single_mean, 7.0);
        assert_eq!(single_se, 0.0);
    }
}
