//! High-probability certificates for the estimated dual program.
//!
//! Estimation error in the reward parameters propagates into the dual as
//! envelopes around the estimated dual value and derivative:
//!
//! ```text
//!     |g_hat(l) - g(l)|  <= E_g(l)  = (1 + l) beta_N / denom,
//!     |g_hat'(l) - g'(l)| <= E_g'(l) = (1 + B (1 + l) / eta) beta_N / denom,
//! ```
//!
//! where the denominator is either the sample quantity
//! sqrt(lambda_min(Sigma_reg)) (data-dependent mode, probability 1 - 2 delta
//! per constraint pair) or the population factor zeta_min (data-independent
//! mode, probability 1 - 3 delta), obtained from eigenvalue concentration of
//! the sample covariance around its population limit. Multi-constraint
//! callers pass the l1 norm of the multiplier vector as `l`; the factors
//! then carry the O(m) dependence of the union bound.
//!
//! On top of the envelopes sit the derived certificates: a data-driven
//! Slater slack from the greedy constraint policy, upper bounds on the
//! optimal multiplier (a slack-based radius and a curvature refinement),
//! and the end-to-end guarantees for the averaged iterate of projected
//! gradient descent run for T steps on a box of radius R:
//!
//! ```text
//!     dual gap     <= 2 E_g(R) + B^2 R^2 / (2 eta T),
//!     violation    <= E_g'(R) + B^2 R / (eta sqrt(T)),
//!     primal gap   <= 2 E_g(R) + B^2 R^2 / (2 eta T)
//!                     + R E_g'(R) + B^2 R^2 / (eta sqrt(T)).
//! ```
//!
//! Every formula here is exact given its inputs; the probability budget
//! attached to each quantity is recorded in the report so downstream
//! consumers know which union bound they are standing on.

use crate::error::{Error, Result};
use crate::types::{expected_reward, Policy};

/// Eigenvalue-concentration factors converting the sample-covariance norm
/// to the Euclidean norm: with probability 1 - delta,
/// ||v||_Sreg / zeta_max <= ||v||_2 <= ||v||_Sreg / zeta_min.
#[derive(Debug, Clone, Copy)]
pub struct NormChangeFactors {
    pub zeta_min: f64,
    pub zeta_max: f64,
    pub eps_upper: f64,
    pub eps_lower: f64,
    /// Set when the lower relative error reaches 1, so the population term
    /// in zeta_min is clamped at zero and only the ridge keeps it positive.
    pub degenerate: bool,
}

/// zeta factors from the population covariance spectrum. The relative
/// errors are eps_upper = ck2 (sqrt(u) + u) with u = (d + ln(2/delta)) / N
/// and eps_lower = cond * eps_upper; `ck2` is the unspecified absolute
/// constant times the squared sub-Gaussian parameter of the feature
/// differences (default 1, surfaced in every report).
pub fn change_of_norm_factors(
    lambda_min_pop: f64,
    lambda_max_pop: f64,
    lambda_reg: f64,
    n: usize,
    dim: usize,
    delta: f64,
    ck2: f64,
) -> Result<NormChangeFactors> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::validation(format!(
            "confidence level delta must lie in (0,1), got {delta}"
        )));
    }
    if n == 0 || dim == 0 {
        return Err(Error::validation("need n >= 1 and dim >= 1"));
    }
    if !(lambda_min_pop.is_finite() && lambda_max_pop.is_finite())
        || lambda_min_pop < 0.0
        || lambda_max_pop < lambda_min_pop
    {
        return Err(Error::validation(format!(
            "population eigenvalues must satisfy 0 <= min <= max, got ({lambda_min_pop}, {lambda_max_pop})"
        )));
    }
    if !lambda_reg.is_finite() || lambda_reg < 0.0 {
        return Err(Error::validation("ridge weight must be nonnegative"));
    }
    if !ck2.is_finite() || ck2 <= 0.0 {
        return Err(Error::validation("ck2 must be positive"));
    }
    let u = (dim as f64 + (2.0 / delta).ln()) / n as f64;
    let eps_upper = ck2 * (u.sqrt() + u);
    let eps_lower = if lambda_min_pop > 0.0 {
        (lambda_max_pop / lambda_min_pop) * eps_upper
    } else {
        f64::INFINITY
    };
    let degenerate = eps_lower >= 1.0;
    let lower_scale = (1.0 - eps_lower).max(0.0);
    Ok(NormChangeFactors {
        zeta_min: (lower_scale * lambda_min_pop + lambda_reg).sqrt(),
        zeta_max: ((1.0 + eps_upper) * lambda_max_pop + lambda_reg).sqrt(),
        eps_upper,
        eps_lower,
        degenerate,
    })
}

/// Which denominator the envelopes stand on, and hence which probability
/// budget they inherit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeMode {
    /// sqrt(lambda_min(Sigma_reg)) from the observed sample; 1 - 2 delta.
    DataDependent,
    /// zeta_min from population eigenvalues; 1 - 3 delta.
    DataIndependent,
}

impl EnvelopeMode {
    pub fn probability_budget(&self) -> &'static str {
        match self {
            EnvelopeMode::DataDependent => "1 - 2*delta",
            EnvelopeMode::DataIndependent => "1 - 3*delta",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EnvelopeMode::DataDependent => "data-dependent",
            EnvelopeMode::DataIndependent => "data-independent",
        }
    }
}

/// Error envelopes around the estimated dual and its derivative.
#[derive(Debug, Clone, Copy)]
pub struct Envelopes {
    pub mode: EnvelopeMode,
    pub beta_n: f64,
    pub denominator: f64,
    pub bound_b: f64,
    pub eta: f64,
}

/// A uniform-over-[0, radius] envelope: the pointwise value at the radius
/// plus Lipschitz slack for the net spacing used to extend it.
#[derive(Debug, Clone, Copy)]
pub struct UniformEnvelope {
    pub pointwise_at_radius: f64,
    pub net_spacing: f64,
    pub slack: f64,
    pub total: f64,
}

impl Envelopes {
    fn build(
        mode: EnvelopeMode,
        beta_n: f64,
        denominator: f64,
        bound_b: f64,
        eta: f64,
    ) -> Result<Self> {
        if !beta_n.is_finite() || beta_n < 0.0 {
            return Err(Error::validation("beta_N must be nonnegative"));
        }
        if !denominator.is_finite() || denominator <= 0.0 {
            return Err(Error::validation(format!(
                "envelope denominator must be positive, got {denominator}"
            )));
        }
        if !bound_b.is_finite() || bound_b < 0.0 {
            return Err(Error::validation("reward bound must be nonnegative"));
        }
        if !eta.is_finite() || eta <= 0.0 {
            return Err(Error::validation("penalty weight eta must be positive"));
        }
        Ok(Self {
            mode,
            beta_n,
            denominator,
            bound_b,
            eta,
        })
    }

    /// Envelopes over the observed sample: denominator
    /// sqrt(lambda_min(Sigma_reg)).
    pub fn data_dependent(
        beta_n: f64,
        min_eig_sigma_reg: f64,
        bound_b: f64,
        eta: f64,
    ) -> Result<Self> {
        if !min_eig_sigma_reg.is_finite() || min_eig_sigma_reg <= 0.0 {
            return Err(Error::validation(
                "smallest eigenvalue of the regularized covariance must be positive",
            ));
        }
        Self::build(
            EnvelopeMode::DataDependent,
            beta_n,
            min_eig_sigma_reg.sqrt(),
            bound_b,
            eta,
        )
    }

    /// Envelopes decoupled from the sample: denominator zeta_min.
    pub fn data_independent(beta_n: f64, zeta_min: f64, bound_b: f64, eta: f64) -> Result<Self> {
        Self::build(EnvelopeMode::DataIndependent, beta_n, zeta_min, bound_b, eta)
    }

    /// E_g(l) = (1 + l) beta_N / denom. Multi-constraint callers pass
    /// ||lambda||_1.
    pub fn value(&self, lambda: f64) -> f64 {
        (1.0 + lambda) * self.beta_n / self.denominator
    }

    /// E_g'(l) = (1 + B (1 + l) / eta) beta_N / denom.
    pub fn gradient(&self, lambda: f64) -> f64 {
        (1.0 + self.bound_b * (1.0 + lambda) / self.eta) * self.beta_n / self.denominator
    }

    fn uniform(&self, pointwise: f64, radius: f64, net_points: usize) -> Result<UniformEnvelope> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(Error::validation("net radius must be positive"));
        }
        if net_points == 0 {
            return Err(Error::validation("net needs at least one interval"));
        }
        let net_spacing = radius / net_points as f64;
        let slack = (self.bound_b * self.bound_b / self.eta) * net_spacing;
        Ok(UniformEnvelope {
            pointwise_at_radius: pointwise,
            net_spacing,
            slack,
            total: pointwise + slack,
        })
    }

    /// Uniform value envelope over [0, radius]: pointwise at the radius
    /// (the envelopes are affine increasing) plus L * spacing slack for the
    /// net, with L = B^2 / eta the dual gradient's Lipschitz constant.
    pub fn uniform_value(&self, radius: f64, net_points: usize) -> Result<UniformEnvelope> {
        self.uniform(self.value(radius), radius, net_points)
    }

    /// Uniform derivative envelope over [0, radius], same net and slack.
    pub fn uniform_gradient(&self, radius: f64, net_points: usize) -> Result<UniformEnvelope> {
        self.uniform(self.gradient(radius), radius, net_points)
    }
}

/// Number of net intervals used for uniform envelopes unless overridden.
pub const DEFAULT_NET_POINTS: usize = 256;

/// Data-driven Slater certificate from the greedy constraint policy.
#[derive(Debug, Clone)]
pub struct SlaterCertificate {
    /// Per-prompt argmax policy for the estimated constraint reward, ties
    /// broken toward the lowest action index.
    pub greedy_policy: Policy,
    /// E_greedy[r_hat_2], the best achievable estimated constraint value.
    pub greedy_value: f64,
    /// rho_hat = (greedy_value - beta_N / sqrt(min_eig) - j_min) / 2.
    pub rho_hat: f64,
    /// rho_hat > 0: the constraint is strictly satisfiable with high
    /// probability and the multiplier bounds below apply.
    pub feasible: bool,
}

/// Computes the Slater slack certificate for one constraint from its
/// estimated reward table.
pub fn slater_slack(
    num_prompts: usize,
    num_actions: usize,
    constraint_rewards: &[f64],
    prompt_dist: &[f64],
    j_min: f64,
    beta_n: f64,
    min_eig_sigma_reg: f64,
) -> Result<SlaterCertificate> {
    if constraint_rewards.len() != num_prompts * num_actions {
        return Err(Error::validation("constraint reward table shape mismatch"));
    }
    if prompt_dist.len() != num_prompts {
        return Err(Error::validation("prompt distribution shape mismatch"));
    }
    if !min_eig_sigma_reg.is_finite() || min_eig_sigma_reg <= 0.0 {
        return Err(Error::validation(
            "smallest eigenvalue of the regularized covariance must be positive",
        ));
    }
    if !beta_n.is_finite() || beta_n < 0.0 {
        return Err(Error::validation("beta_N must be nonnegative"));
    }
    let greedy_policy = Policy::greedy(num_prompts, num_actions, constraint_rewards);
    let greedy_value = expected_reward(&greedy_policy, prompt_dist, constraint_rewards);
    let rho_hat = 0.5 * (greedy_value - beta_n / min_eig_sigma_reg.sqrt() - j_min);
    Ok(SlaterCertificate {
        greedy_policy,
        greedy_value,
        rho_hat,
        feasible: rho_hat > 0.0,
    })
}

/// Which branch of min{radius, curvature refinement} produced the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundBranch {
    Radius,
    Curvature,
}

impl BoundBranch {
    pub fn label(&self) -> &'static str {
        match self {
            BoundBranch::Radius => "radius",
            BoundBranch::Curvature => "curvature",
        }
    }
}

/// Upper bound on the optimal dual multiplier.
#[derive(Debug, Clone, Copy)]
pub struct MultiplierBound {
    /// Slack-based radius Lambda.
    pub radius: f64,
    /// Curvature refinement [.]_+ / m_g(Lambda); infinite when the
    /// strong-convexity modulus degenerates to zero.
    pub refined: f64,
    /// min(radius, refined).
    pub bound: f64,
    pub branch: BoundBranch,
}

fn finish_multiplier_bound(radius: f64, numerator: f64, m_g: f64) -> MultiplierBound {
    let refined = if m_g > 0.0 {
        numerator.max(0.0) / m_g
    } else {
        // Degenerate curvature: the refinement is vacuous, fall back to
        // the slack radius.
        f64::INFINITY
    };
    if refined <= radius {
        MultiplierBound {
            radius,
            refined,
            bound: refined,
            branch: BoundBranch::Curvature,
        }
    } else {
        MultiplierBound {
            radius,
            refined,
            bound: radius,
            branch: BoundBranch::Radius,
        }
    }
}

/// Deterministic multiplier bound from a known Slater pair (pi_tilde with
/// slack rho): Lambda = (B - J(pi_tilde)) / rho and the curvature
/// refinement [-g'(0)]_+ / m_g(Lambda).
pub fn multiplier_bound_deterministic(
    bound_b: f64,
    j_tilde: f64,
    rho: f64,
    gprime_zero: f64,
    m_g: f64,
) -> Result<MultiplierBound> {
    if !rho.is_finite() || rho <= 0.0 {
        return Err(Error::validation(format!(
            "Slater slack must be positive to bound the multiplier, got {rho}"
        )));
    }
    if !(bound_b.is_finite() && j_tilde.is_finite() && gprime_zero.is_finite()) {
        return Err(Error::validation("non-finite multiplier-bound input"));
    }
    if bound_b < j_tilde {
        return Err(Error::validation(format!(
            "objective bound {bound_b} is below the Slater policy value {j_tilde}; \
             the radius would be negative"
        )));
    }
    let radius = (bound_b - j_tilde) / rho;
    Ok(finish_multiplier_bound(radius, -gprime_zero, m_g))
}

/// Data-driven multiplier bound from the Slater certificate: Lambda =
/// (B + beta_N / sqrt(min_eig) - J_hat(pi_tilde)) / rho_hat and the
/// refinement [-g_hat'(0) + E_g'(0)]_+ / m_g(Lambda). Holds with
/// probability 1 - 3 delta. The modulus may be computed from either the
/// true or the estimated dual; the caller records which.
pub fn multiplier_bound_data_driven(
    bound_b: f64,
    j_hat_tilde: f64,
    slater: &SlaterCertificate,
    beta_n: f64,
    min_eig_sigma_reg: f64,
    ghat_prime_zero: f64,
    envelope_gradient_zero: f64,
    m_g: f64,
) -> Result<MultiplierBound> {
    if !slater.feasible {
        return Err(Error::validation(format!(
            "Slater slack {} is not positive; strict feasibility unverifiable",
            slater.rho_hat
        )));
    }
    if !(bound_b.is_finite() && j_hat_tilde.is_finite() && ghat_prime_zero.is_finite()) {
        return Err(Error::validation("non-finite multiplier-bound input"));
    }
    let inflation = beta_n / min_eig_sigma_reg.sqrt();
    let numerator_radius = bound_b + inflation - j_hat_tilde;
    if numerator_radius < 0.0 {
        return Err(Error::validation(
            "objective bound below the Slater policy value; the radius would be negative",
        ));
    }
    let radius = numerator_radius / slater.rho_hat;
    Ok(finish_multiplier_bound(
        radius,
        -ghat_prime_zero + envelope_gradient_zero,
        m_g,
    ))
}

/// End-to-end guarantees for the averaged iterate of T projected gradient
/// steps on [0, R].
#[derive(Debug, Clone, Copy)]
pub struct SolutionBounds {
    pub dual_gap: f64,
    pub violation: f64,
    pub primal_gap: f64,
}

/// Computes the three performance bounds from the uniform envelopes at the
/// projection radius.
pub fn solution_bounds(
    envelope_value_at_r: f64,
    envelope_gradient_at_r: f64,
    bound_b: f64,
    eta: f64,
    radius: f64,
    iterations: usize,
) -> Result<SolutionBounds> {
    if !radius.is_finite() || radius <= 0.0 {
        return Err(Error::validation("projection radius must be positive"));
    }
    if iterations == 0 {
        return Err(Error::validation("need at least one iteration"));
    }
    if !eta.is_finite() || eta <= 0.0 {
        return Err(Error::validation("penalty weight eta must be positive"));
    }
    if envelope_value_at_r < 0.0 || envelope_gradient_at_r < 0.0 || bound_b < 0.0 {
        return Err(Error::validation("negative certificate input"));
    }
    let t = iterations as f64;
    let b2 = bound_b * bound_b;
    let optimization = b2 * radius * radius / (2.0 * eta * t);
    let dual_gap = 2.0 * envelope_value_at_r + optimization;
    let violation = envelope_gradient_at_r + b2 * radius / (eta * t.sqrt());
    let primal_gap = dual_gap + radius * envelope_gradient_at_r + b2 * radius * radius / (eta * t.sqrt());
    Ok(SolutionBounds {
        dual_gap,
        violation,
        primal_gap,
    })
}

/// Everything the certify pipeline knows, flattened to one quantity per
/// line for the report file. Optional sections are simply absent.
#[derive(Debug, Clone, Default)]
pub struct CertificateReport {
    pub delta: f64,
    pub confidence_c: f64,
    pub ck2: f64,
    pub lambda_reg: f64,
    pub sample_size: usize,
    pub dim: usize,
    pub bound_b: f64,
    pub eta: f64,
    pub beta_n: f64,
    pub min_eig_sigma_reg: f64,
    pub mode_label: String,
    pub probability_budget: String,
    pub norm_change: Option<NormChangeFactors>,
    pub slater: Option<SlaterCertificate>,
    pub multiplier: Option<MultiplierBound>,
    pub strong_convexity: Option<(f64, usize, bool)>,
    pub radius: f64,
    pub iterations: usize,
    pub envelope_value_at_radius: f64,
    pub envelope_gradient_at_radius: f64,
    pub uniform_value: Option<UniformEnvelope>,
    pub uniform_gradient: Option<UniformEnvelope>,
    pub bounds: Option<SolutionBounds>,
}

impl CertificateReport {
    /// Flat key = value lines, one quantity per line, in a fixed order.
    pub fn lines(&self) -> Vec<String> {
        let f = |v: f64| format!("{v:.16e}");
        let mut out = vec![
            format!("delta = {}", f(self.delta)),
            format!("confidence_c = {}", f(self.confidence_c)),
            format!("ck2 = {}", f(self.ck2)),
            format!("lambda_reg = {}", f(self.lambda_reg)),
            format!("sample_size = {}", self.sample_size),
            format!("dim = {}", self.dim),
            format!("bound_b = {}", f(self.bound_b)),
            format!("eta = {}", f(self.eta)),
            format!("beta_n = {}", f(self.beta_n)),
            format!("min_eig_sigma_reg = {}", f(self.min_eig_sigma_reg)),
            format!("mode = {}", self.mode_label),
            format!("probability_budget = {}", self.probability_budget),
        ];
        if let Some(nc) = &self.norm_change {
            out.push(format!("zeta_min = {}", f(nc.zeta_min)));
            out.push(format!("zeta_max = {}", f(nc.zeta_max)));
            out.push(format!("eps_upper = {}", f(nc.eps_upper)));
            out.push(format!("eps_lower = {}", f(nc.eps_lower)));
            out.push(format!("zeta_degenerate = {}", nc.degenerate));
        }
        if let Some(s) = &self.slater {
            out.push(format!("slater_greedy_value = {}", f(s.greedy_value)));
            out.push(format!("slater_rho_hat = {}", f(s.rho_hat)));
            out.push(format!("slater_feasible = {}", s.feasible));
        }
        if let Some(m) = &self.multiplier {
            out.push(format!("multiplier_radius = {}", f(m.radius)));
            out.push(format!("multiplier_refined = {}", f(m.refined)));
            out.push(format!("multiplier_bound = {}", f(m.bound)));
            out.push(format!("multiplier_branch = {}", m.branch.label()));
        }
        if let Some((modulus, grid, degenerate)) = &self.strong_convexity {
            out.push(format!("strong_convexity_modulus = {}", f(*modulus)));
            out.push(format!("strong_convexity_grid = {grid}"));
            out.push(format!("strong_convexity_degenerate = {degenerate}"));
        }
        out.push(format!("radius = {}", f(self.radius)));
        out.push(format!("iterations = {}", self.iterations));
        out.push(format!(
            "envelope_value_at_radius = {}",
            f(self.envelope_value_at_radius)
        ));
        out.push(format!(
            "envelope_gradient_at_radius = {}",
            f(self.envelope_gradient_at_radius)
        ));
        if let Some(u) = &self.uniform_value {
            out.push(format!("uniform_value_net_spacing = {}", f(u.net_spacing)));
            out.push(format!("uniform_value_slack = {}", f(u.slack)));
            out.push(format!("uniform_value_total = {}", f(u.total)));
        }
        if let Some(u) = &self.uniform_gradient {
            out.push(format!("uniform_gradient_net_spacing = {}", f(u.net_spacing)));
            out.push(format!("uniform_gradient_slack = {}", f(u.slack)));
            out.push(format!("uniform_gradient_total = {}", f(u.total)));
        }
        if let Some(b) = &self.bounds {
            out.push(format!("bound_dual_gap = {}", f(b.dual_gap)));
            out.push(format!("bound_violation = {}", f(b.violation)));
            out.push(format!("bound_primal_gap = {}", f(b.primal_gap)));
        }
        out
    }
}
