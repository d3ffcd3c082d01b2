//! Finite alignment problems: feature maps, linear reward models, tabular
//! policies, pairwise-comparison datasets, and the exact expectations over
//! them.
//!
//! Everything is dense and exact. Prompts are indexed `0..num_prompts`,
//! actions `0..num_actions`, and a (prompt, action) pair maps to the flat
//! index `prompt * num_actions + action`. Rewards are linear in a feature
//! map of Euclidean norm at most 1, so a parameter vector of norm B yields
//! rewards bounded by B. Expectations are plain sums; no Monte Carlo here.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, DVectorView};

/// Slack allowed on ingested probability rows before we reject them.
pub const SIMPLEX_INGEST_TOL: f64 = 1e-9;
/// Slack allowed on the unit feature-norm bound.
pub const FEATURE_NORM_SLOP: f64 = 1e-9;

/// Dense feature map phi(x, a) with ||phi|| <= 1, stored so each pair's
/// vector is contiguous.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    num_prompts: usize,
    num_actions: usize,
    dim: usize,
    /// dim x (num_prompts * num_actions); column `x * num_actions + a`.
    columns: DMatrix<f64>,
}

impl FeatureTable {
    /// Builds a table from per-pair feature blocks laid out as
    /// `[phi(0,0); phi(0,1); ...; phi(X-1,A-1)]`, each block `dim` long.
    pub fn new(
        num_prompts: usize,
        num_actions: usize,
        dim: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if num_prompts == 0 || num_actions == 0 || dim == 0 {
            return Err(Error::validation(
                "feature table needs at least one prompt, action, and dimension",
            ));
        }
        let pairs = num_prompts * num_actions;
        if data.len() != pairs * dim {
            return Err(Error::validation(format!(
                "feature table expects {} values ({} pairs x dim {}), got {}",
                pairs * dim,
                pairs,
                dim,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "feature table contains non-finite value {bad}"
            )));
        }
        let columns = DMatrix::from_column_slice(dim, pairs, &data);
        for (idx, col) in columns.column_iter().enumerate() {
            let norm = col.norm();
            if norm > 1.0 + FEATURE_NORM_SLOP {
                return Err(Error::validation(format!(
                    "feature vector for prompt {} action {} has norm {:.6} > 1",
                    idx / num_actions,
                    idx % num_actions,
                    norm
                )));
            }
        }
        Ok(FeatureTable {
            num_prompts,
            num_actions,
            dim,
            columns,
        })
    }

    pub fn num_prompts(&self) -> usize {
        self.num_prompts
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_prompts * self.num_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pair_index(&self, prompt: usize, action: usize) -> usize {
        debug_assert!(prompt < self.num_prompts && action < self.num_actions);
        prompt * self.num_actions + action
    }

    pub fn feature(&self, prompt: usize, action: usize) -> DVectorView<'_, f64> {
        self.columns.column(self.pair_index(prompt, action))
    }

    /// phi(x, a1) - phi(x, a2); norm at most 2 by the unit bound.
    pub fn difference(&self, prompt: usize, first: usize, second: usize) -> DVector<f64> {
        let mut d = DVector::from_column_slice(self.feature(prompt, first).as_slice());
        d -= &self.columns.column(self.pair_index(prompt, second));
        d
    }

    /// Reward table <theta, phi(x, a)> for all pairs, flat-indexed.
    pub fn rewards(&self, theta: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(theta.len(), self.dim);
        self.columns.tr_mul(theta)
    }

    /// max_{x,a} |<theta, phi(x,a)>|, the reward magnitude a parameter
    /// vector actually realizes on this table.
    pub fn max_abs_reward(&self, theta: &DVector<f64>) -> f64 {
        self.rewards(theta).iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Linear reward model r(x, a) = <theta, phi(x, a)>.
#[derive(Debug, Clone)]
pub struct RewardModel {
    pub theta: DVector<f64>,
}

impl RewardModel {
    pub fn new(theta: DVector<f64>) -> Self {
        RewardModel { theta }
    }

    pub fn norm(&self) -> f64 {
        self.theta.norm()
    }
}

/// Tabular conditional distribution over actions, one simplex row per
/// prompt. Construction normalizes rows exactly, so stored rows sum to 1
/// within 1e-12; inputs further than `SIMPLEX_INGEST_TOL` from a simplex
/// are rejected instead of silently repaired.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    num_prompts: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(num_prompts: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_prompts * num_actions {
            return Err(Error::validation(format!(
                "policy expects {} probabilities, got {}",
                num_prompts * num_actions,
                probs.len()
            )));
        }
        let mut probs = probs;
        for x in 0..num_prompts {
            let row = &mut probs[x * num_actions..(x + 1) * num_actions];
            let mut sum = 0.0;
            for p in row.iter() {
                if !p.is_finite() || *p < 0.0 {
                    return Err(Error::validation(format!(
                        "prompt {x}: invalid probability {p}"
                    )));
                }
                sum += *p;
            }
            if (sum - 1.0).abs() > SIMPLEX_INGEST_TOL {
                return Err(Error::validation(format!(
                    "prompt {x}: probabilities sum to {sum:.6}, expected 1"
                )));
            }
            for p in row.iter_mut() {
                *p /= sum;
            }
        }
        Ok(Policy {
            num_prompts,
            num_actions,
            probs,
        })
    }

    pub fn uniform(num_prompts: usize, num_actions: usize) -> Self {
        Policy {
            num_prompts,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_prompts * num_actions],
        }
    }

    /// Deterministic policy picking the highest-reward action per prompt;
    /// ties go to the lowest action index.
    pub fn greedy(num_prompts: usize, num_actions: usize, rewards: &[f64]) -> Self {
        assert_eq!(rewards.len(), num_prompts * num_actions);
        let mut probs = vec![0.0; rewards.len()];
        for x in 0..num_prompts {
            let row = &rewards[x * num_actions..(x + 1) * num_actions];
            let mut best = 0;
            for (a, r) in row.iter().enumerate().skip(1) {
                if *r > row[best] {
                    best = a;
                }
            }
            probs[x * num_actions + best] = 1.0;
        }
        Policy {
            num_prompts,
            num_actions,
            probs,
        }
    }

    pub fn num_prompts(&self) -> usize {
        self.num_prompts
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, prompt: usize) -> &[f64] {
        &self.probs[prompt * self.num_actions..(prompt + 1) * self.num_actions]
    }

    pub fn prob(&self, prompt: usize, action: usize) -> f64 {
        self.probs[prompt * self.num_actions + action]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn is_full_support(&self) -> bool {
        self.probs.iter().all(|p| *p > 0.0)
    }

    /// Largest per-prompt total-variation distance to `other`.
    pub fn max_tv_distance(&self, other: &Policy) -> f64 {
        assert_eq!(self.num_prompts, other.num_prompts);
        assert_eq!(self.num_actions, other.num_actions);
        let mut worst: f64 = 0.0;
        for x in 0..self.num_prompts {
            let d: f64 = self
                .row(x)
                .iter()
                .zip(other.row(x))
                .map(|(p, q)| (p - q).abs())
                .sum();
            worst = worst.max(0.5 * d);
        }
        worst
    }
}

/// One pairwise comparison: two actions for a prompt plus a binary label
/// per oracle (1 means the first action won).
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceRecord {
    pub prompt: usize,
    pub first: usize,
    pub second: usize,
    pub labels: Vec<u8>,
}

/// Comparison records labeled by `num_oracles` preference oracles; oracle 0
/// is the target, oracles 1.. are constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceDataset {
    pub num_oracles: usize,
    pub records: Vec<PreferenceRecord>,
}

impl PreferenceDataset {
    pub fn new(num_oracles: usize, records: Vec<PreferenceRecord>) -> Result<Self> {
        if num_oracles < 2 {
            return Err(Error::validation(
                "need at least two oracles (one target, one constraint)",
            ));
        }
        for (i, rec) in records.iter().enumerate() {
            if rec.labels.len() != num_oracles {
                return Err(Error::validation(format!(
                    "record {i}: expected {num_oracles} labels, got {}",
                    rec.labels.len()
                )));
            }
            if rec.labels.iter().any(|y| *y > 1) {
                return Err(Error::validation(format!("record {i}: labels must be 0 or 1")));
            }
        }
        Ok(PreferenceDataset {
            num_oracles,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks prompt/action indices against a feature table.
    pub fn validate_against(&self, table: &FeatureTable) -> Result<()> {
        for (i, rec) in self.records.iter().enumerate() {
            if rec.prompt >= table.num_prompts()
                || rec.first >= table.num_actions()
                || rec.second >= table.num_actions()
            {
                return Err(Error::validation(format!(
                    "record {i}: indices ({}, {}, {}) out of range for {} prompts x {} actions",
                    rec.prompt,
                    rec.first,
                    rec.second,
                    table.num_prompts(),
                    table.num_actions()
                )));
            }
        }
        Ok(())
    }

    pub fn labels_for(&self, oracle: usize) -> Vec<u8> {
        self.records.iter().map(|r| r.labels[oracle]).collect()
    }

    /// First `n` records (datasets are sampled sequentially, so this is the
    /// same dataset a shorter run would have produced).
    pub fn prefix(&self, n: usize) -> PreferenceDataset {
        PreferenceDataset {
            num_oracles: self.num_oracles,
            records: self.records[..n.min(self.records.len())].to_vec(),
        }
    }
}

/// Divergence penalizing deviation of a policy from the reference,
/// D(pi || pi0) = E_x sum_a pi0 f(pi / pi0) with f convex and f(1) = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    /// f(t) = t ln t.
    Kl,
    /// f(t) = (t - 1)^2.
    ChiSquare,
    /// f(t) = (t^a - a t + a - 1) / (a (a - 1)), a > 0, a != 1.
    Alpha(f64),
}

impl Divergence {
    pub fn validate(&self) -> Result<()> {
        if let Divergence::Alpha(a) = self {
            if !a.is_finite() || *a <= 0.0 || *a == 1.0 {
                return Err(Error::validation(format!(
                    "alpha divergence needs a > 0, a != 1; got {a}"
                )));
            }
        }
        Ok(())
    }

    /// f(t) for t >= 0.
    pub fn f_value(&self, t: f64) -> f64 {
        match self {
            Divergence::Kl => {
                if t == 0.0 {
                    0.0
                } else {
                    t * t.ln()
                }
            }
            Divergence::ChiSquare => (t - 1.0) * (t - 1.0),
            Divergence::Alpha(a) => (t.powf(*a) - a * t + a - 1.0) / (a * (a - 1.0)),
        }
    }

    /// f'(t) for t > 0.
    pub fn f_prime(&self, t: f64) -> f64 {
        match self {
            Divergence::Kl => t.ln() + 1.0,
            Divergence::ChiSquare => 2.0 * (t - 1.0),
            Divergence::Alpha(a) => (t.powf(a - 1.0) - 1.0) / (a - 1.0),
        }
    }

    /// One-sided slope f'(0+) when finite; `None` means it is -infinity and
    /// optimal policies under this divergence keep full support.
    pub fn f_prime_at_zero(&self) -> Option<f64> {
        match self {
            Divergence::Kl => None,
            Divergence::ChiSquare => Some(-2.0),
            Divergence::Alpha(a) => {
                if *a > 1.0 {
                    Some(-1.0 / (a - 1.0))
                } else {
                    None
                }
            }
        }
    }

    /// Density ratio maximizing t * u - f(t) over t >= 0: the clamped
    /// inverse of f'. Monotone nondecreasing in the tilt u. For alpha < 1
    /// the ratio diverges as u approaches 1 / (1 - a) from below; beyond
    /// that the optimizer is unbounded and we return +infinity.
    pub fn ratio_from_tilt(&self, u: f64) -> f64 {
        match self {
            Divergence::Kl => (u - 1.0).exp(),
            Divergence::ChiSquare => (1.0 + 0.5 * u).max(0.0),
            Divergence::Alpha(a) => {
                let base = 1.0 + (a - 1.0) * u;
                if *a > 1.0 {
                    if base <= 0.0 {
                        0.0
                    } else {
                        base.powf(1.0 / (a - 1.0))
                    }
                } else if base <= 0.0 {
                    f64::INFINITY
                } else {
                    base.powf(1.0 / (a - 1.0))
                }
            }
        }
    }
}

/// E_{x ~ d0} E_{a ~ pi} [r(x, a)] over a flat reward table.
pub fn expected_reward(policy: &Policy, prompt_dist: &[f64], rewards: &[f64]) -> f64 {
    debug_assert_eq!(prompt_dist.len(), policy.num_prompts());
    debug_assert_eq!(rewards.len(), policy.num_prompts() * policy.num_actions());
    let a = policy.num_actions();
    let mut total = 0.0;
    for x in 0..policy.num_prompts() {
        let mut inner = 0.0;
        for (p, r) in policy.row(x).iter().zip(&rewards[x * a..(x + 1) * a]) {
            inner += p * r;
        }
        total += prompt_dist[x] * inner;
    }
    total
}

/// E_{x ~ d0} KL(pi(.|x) || pi0(.|x)) with the 0 ln 0 = 0 convention.
/// Errors if the reference puts zero mass where `pi` puts positive mass.
pub fn kl_divergence(policy: &Policy, reference: &Policy, prompt_dist: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for x in 0..policy.num_prompts() {
        let mut inner = 0.0;
        for (a, (p, q)) in policy.row(x).iter().zip(reference.row(x)).enumerate() {
            if *p == 0.0 {
                continue;
            }
            if *q == 0.0 {
                return Err(Error::validation(format!(
                    "support violation: prompt {x} action {a} has positive probability \
                     but zero reference probability"
                )));
            }
            inner += p * (p / q).ln();
        }
        total += prompt_dist[x] * inner;
    }
    Ok(total)
}

/// E_{x ~ d0} sum_a pi0 f(pi / pi0) for the chosen divergence.
pub fn f_divergence_value(
    divergence: Divergence,
    policy: &Policy,
    reference: &Policy,
    prompt_dist: &[f64],
) -> Result<f64> {
    divergence.validate()?;
    if let Divergence::Kl = divergence {
        return kl_divergence(policy, reference, prompt_dist);
    }
    let mut total = 0.0;
    for x in 0..policy.num_prompts() {
        let mut inner = 0.0;
        for (a, (p, q)) in policy.row(x).iter().zip(reference.row(x)).enumerate() {
            if *q == 0.0 {
                if *p > 0.0 {
                    return Err(Error::validation(format!(
                        "support violation: prompt {x} action {a} has positive probability \
                         but zero reference probability"
                    )));
                }
                continue;
            }
            inner += q * divergence.f_value(p / q);
        }
        total += prompt_dist[x] * inner;
    }
    Ok(total)
}

/// Regularized objective J(pi) = E[r1] - eta * D(pi || pi0).
pub fn primal_objective(
    policy: &Policy,
    reference: &Policy,
    prompt_dist: &[f64],
    target_rewards: &[f64],
    eta: f64,
    divergence: Divergence,
) -> Result<f64> {
    let reward = expected_reward(policy, prompt_dist, target_rewards);
    let penalty = f_divergence_value(divergence, policy, reference, prompt_dist)?;
    Ok(reward - eta * penalty)
}

/// Validates a prompt distribution and normalizes it exactly.
pub fn validate_prompt_dist(dist: &[f64]) -> Result<Vec<f64>> {
    if dist.is_empty() {
        return Err(Error::validation("prompt distribution is empty"));
    }
    let mut sum = 0.0;
    for d in dist {
        if !d.is_finite() || *d < 0.0 {
            return Err(Error::validation(format!(
                "prompt distribution entry {d} is invalid"
            )));
        }
        sum += *d;
    }
    if (sum - 1.0).abs() > SIMPLEX_INGEST_TOL {
        return Err(Error::validation(format!(
            "prompt distribution sums to {sum:.6}, expected 1"
        )));
    }
    Ok(dist.iter().map(|d| d / sum).collect())
}

pub fn uniform_prompt_dist(num_prompts: usize) -> Vec<f64> {
    vec![1.0 / num_prompts as f64; num_prompts]
}

/// Problem statement: maximize J(pi) subject to E_pi[r_k] >= j_min[k - 1]
/// for each constraint oracle k.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub table: FeatureTable,
    pub reference: Policy,
    pub prompt_dist: Vec<f64>,
    pub eta: f64,
    pub j_min: Vec<f64>,
    pub divergence: Divergence,
}

impl ProblemSpec {
    pub fn new(
        table: FeatureTable,
        reference: Policy,
        prompt_dist: Vec<f64>,
        eta: f64,
        j_min: Vec<f64>,
        divergence: Divergence,
    ) -> Result<Self> {
        if reference.num_prompts() != table.num_prompts()
            || reference.num_actions() != table.num_actions()
        {
            return Err(Error::validation(
                "reference policy shape does not match the feature table",
            ));
        }
        if !reference.is_full_support() {
            return Err(Error::validation(
                "reference policy must put positive probability on every action",
            ));
        }
        let prompt_dist = validate_prompt_dist(&prompt_dist)?;
        if prompt_dist.len() != table.num_prompts() {
            return Err(Error::validation(
                "prompt distribution length does not match the feature table",
            ));
        }
        if !eta.is_finite() || eta <= 0.0 {
            return Err(Error::validation(format!(
                "regularization eta must be positive, got {eta}"
            )));
        }
        if j_min.is_empty() || j_min.iter().any(|j| !j.is_finite()) {
            return Err(Error::validation(
                "need at least one finite constraint threshold",
            ));
        }
        divergence.validate()?;
        Ok(ProblemSpec {
            table,
            reference,
            prompt_dist,
            eta,
            j_min,
            divergence,
        })
    }

    /// Number of constraint oracles.
    pub fn num_constraints(&self) -> usize {
        self.j_min.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table_2x2() -> FeatureTable {
        // Two prompts, two actions, dim 2; norms within the unit ball.
        FeatureTable::new(
            2,
            2,
            2,
            vec![0.6, 0.0, 0.0, 0.8, -0.5, 0.5, 0.3, -0.4],
        )
        .unwrap()
    }

    #[test]
    fn feature_table_rejects_oversized_vectors() {
        let err = FeatureTable::new(1, 1, 2, vec![0.9, 0.9]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn rewards_match_manual_dot_products() {
        let table = table_2x2();
        let theta = DVector::from_column_slice(&[1.0, -2.0]);
        let r = table.rewards(&theta);
        assert_eq!(r.len(), 4);
        assert!((r[0] - 0.6).abs() < 1e-15);
        assert!((r[1] + 1.6).abs() < 1e-15);
        assert!((r[2] + 1.5).abs() < 1e-15);
        assert!((r[3] - 1.1).abs() < 1e-15);
        assert!((table.max_abs_reward(&theta) - 1.6).abs() < 1e-15);
    }

    #[test]
    fn difference_is_feature_gap() {
        let table = table_2x2();
        let d = table.difference(1, 0, 1);
        assert!((d[0] + 0.8).abs() < 1e-15);
        assert!((d[1] - 0.9).abs() < 1e-15);
        assert!(d.norm() <= 2.0 + FEATURE_NORM_SLOP);
    }

    #[test]
    fn policy_rejects_bad_rows_naming_the_prompt() {
        let err = Policy::new(2, 2, vec![0.5, 0.5, 0.3, 0.4]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("prompt 1"), "unexpected message: {msg}");
        assert!(msg.contains("0.7"), "unexpected message: {msg}");
    }

    #[test]
    fn policy_rows_are_exactly_normalized() {
        // Slightly off input inside the ingest tolerance gets renormalized.
        let p = Policy::new(1, 3, vec![0.2, 0.3, 0.5 + 5e-10]).unwrap();
        let sum: f64 = p.row(0).iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_breaks_ties_toward_lowest_index() {
        let p = Policy::greedy(1, 3, &[0.5, 0.7, 0.7]);
        assert_eq!(p.row(0), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn kl_matches_hand_computed_value() {
        let pi = Policy::new(1, 2, vec![0.75, 0.25]).unwrap();
        let pi0 = Policy::uniform(1, 2);
        let kl = kl_divergence(&pi, &pi0, &[1.0]).unwrap();
        // 0.75 ln 1.5 + 0.25 ln 0.5
        assert!((kl - 0.13081203594113697).abs() < 1e-15);
    }

    #[test]
    fn chi_square_and_alpha_match_hand_computed_values() {
        let pi = Policy::new(1, 2, vec![0.75, 0.25]).unwrap();
        let pi0 = Policy::uniform(1, 2);
        let chi = f_divergence_value(Divergence::ChiSquare, &pi, &pi0, &[1.0]).unwrap();
        assert!((chi - 0.25).abs() < 1e-15);
        // f_3(1.5) = 0.875/6, f_3(0.5) = 0.625/6, value = 0.5*(sum) = 0.125
        let a3 = f_divergence_value(Divergence::Alpha(3.0), &pi, &pi0, &[1.0]).unwrap();
        assert!((a3 - 0.125).abs() < 1e-15);
    }

    #[test]
    fn kl_flags_support_violations() {
        let pi = Policy::new(1, 2, vec![0.5, 0.5]).unwrap();
        let pi0 = Policy::new(1, 2, vec![1.0, 0.0]).unwrap();
        let err = kl_divergence(&pi, &pi0, &[1.0]).unwrap_err();
        assert!(err.to_string().contains("support violation"));
    }

    #[test]
    fn alpha_two_is_half_chi_square() {
        let pi = Policy::new(1, 3, vec![0.5, 0.3, 0.2]).unwrap();
        let pi0 = Policy::new(1, 3, vec![0.2, 0.5, 0.3]).unwrap();
        let chi = f_divergence_value(Divergence::ChiSquare, &pi, &pi0, &[1.0]).unwrap();
        let a2 = f_divergence_value(Divergence::Alpha(2.0), &pi, &pi0, &[1.0]).unwrap();
        assert!((a2 - 0.5 * chi).abs() < 1e-14);
    }

    #[test]
    fn divergence_inverse_matches_f_prime() {
        for div in [
            Divergence::Kl,
            Divergence::ChiSquare,
            Divergence::Alpha(0.5),
            Divergence::Alpha(3.0),
        ] {
            for u in [-2.0, -0.5, 0.0, 0.4, 1.3] {
                let t = div.ratio_from_tilt(u);
                if t > 0.0 && t.is_finite() {
                    assert!(
                        (div.f_prime(t) - u).abs() < 1e-12,
                        "{div:?} at u={u}: f'({t}) = {}",
                        div.f_prime(t)
                    );
                }
            }
        }
    }

    #[test]
    fn expected_reward_is_linear_in_the_model() {
        let table = table_2x2();
        let pi = Policy::new(2, 2, vec![0.3, 0.7, 0.9, 0.1]).unwrap();
        let d0 = vec![0.25, 0.75];
        let t1 = DVector::from_column_slice(&[0.2, -0.1]);
        let t2 = DVector::from_column_slice(&[-0.4, 0.5]);
        let combo = 1.5 * &t1 + 2.5 * &t2;
        let lhs = expected_reward(&pi, &d0, table.rewards(&combo).as_slice());
        let rhs = 1.5 * expected_reward(&pi, &d0, table.rewards(&t1).as_slice())
            + 2.5 * expected_reward(&pi, &d0, table.rewards(&t2).as_slice());
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn prompt_dist_validation() {
        assert!(validate_prompt_dist(&[0.5, 0.5]).is_ok());
        assert!(validate_prompt_dist(&[0.5, 0.4]).is_err());
        assert!(validate_prompt_dist(&[-0.1, 1.1]).is_err());
    }

    #[test]
    fn dataset_validation_catches_bad_indices_and_labels() {
        let table = table_2x2();
        let ok = PreferenceDataset::new(
            2,
            vec![PreferenceRecord {
                prompt: 1,
                first: 0,
                second: 1,
                labels: vec![1, 0],
            }],
        )
        .unwrap();
        ok.validate_against(&table).unwrap();

        let bad = PreferenceDataset::new(
            2,
            vec![PreferenceRecord {
                prompt: 2,
                first: 0,
                second: 1,
                labels: vec![1, 0],
            }],
        )
        .unwrap();
        assert!(bad.validate_against(&table).is_err());

        assert!(PreferenceDataset::new(
            2,
            vec![PreferenceRecord {
                prompt: 0,
                first: 0,
                second: 1,
                labels: vec![2, 0],
            }],
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative_and_zero_only_at_equality(
            raw_p in proptest::collection::vec(1e-3..1.0f64, 4),
            raw_q in proptest::collection::vec(1e-3..1.0f64, 4),
        ) {
            let norm = |v: &[f64]| {
                let s: f64 = v.iter().sum();
                v.iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let p = Policy::new(1, 4, norm(&raw_p)).unwrap();
            let q = Policy::new(1, 4, norm(&raw_q)).unwrap();
            let kl = kl_divergence(&p, &q, &[1.0]).unwrap();
            prop_assert!(kl >= -1e-15);
            let self_kl = kl_divergence(&p, &p, &[1.0]).unwrap();
            prop_assert!(self_kl.abs() < 1e-15);
        }

        #[test]
        fn f_divergences_are_nonnegative(
            raw_p in proptest::collection::vec(1e-3..1.0f64, 3),
            raw_q in proptest::collection::vec(1e-3..1.0f64, 3),
            alpha in prop_oneof![0.2..0.95f64, 1.05..4.0f64],
        ) {
            let norm = |v: &[f64]| {
                let s: f64 = v.iter().sum();
                v.iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let p = Policy::new(1, 3, norm(&raw_p)).unwrap();
            let q = Policy::new(1, 3, norm(&raw_q)).unwrap();
            for div in [Divergence::ChiSquare, Divergence::Alpha(alpha)] {
                let v = f_divergence_value(div, &p, &q, &[1.0]).unwrap();
                prop_assert!(v >= -1e-12, "{div:?} gave {v}");
            }
        }
    }
}
