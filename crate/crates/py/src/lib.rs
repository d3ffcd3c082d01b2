//! Python bindings for the dualign library.
//!
//! The surface mirrors the library's pipeline: generate a synthetic
//! instance, sample preference data, fit per-oracle reward models, build
//! the dual problem (ground-truth or estimated), solve it by projected
//! gradient descent, and price the result with the certificate helpers.
//! Policies cross the boundary as row-major nested lists of floats;
//! parameter vectors as flat lists. Errors map onto the closest builtin
//! Python exception: precondition and parse failures raise ValueError,
//! numerical failures RuntimeError, filesystem failures OSError.

use nalgebra::DVector;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use dualign::certificates;
use dualign::dual::DualProblem;
use dualign::gibbs;
use dualign::mle::{self, CovarianceBundle, DifferenceMatrix};
use dualign::solver::{self, AdaptiveConfig, SolverConfig, StepRule};
use dualign::synthetic::{
    self, CalibrationMode, SweepConfig, SyntheticConfig,
};
use dualign::types::{self, Divergence, Policy, PreferenceDataset, RewardModel};
use dualign::Error;

fn pyerr(e: Error) -> PyErr {
    match &e {
        Error::Validation(_) | Error::Parse { .. } => PyValueError::new_err(e.to_string()),
        Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
    }
}

fn policy_rows(policy: &Policy) -> Vec<Vec<f64>> {
    (0..policy.num_prompts())
        .map(|x| policy.row(x).to_vec())
        .collect()
}

fn policy_from_rows(rows: &[Vec<f64>]) -> PyResult<Policy> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("policy needs at least one row"));
    }
    let num_actions = rows[0].len();
    let mut flat = Vec::with_capacity(rows.len() * num_actions);
    for row in rows {
        if row.len() != num_actions {
            return Err(PyValueError::new_err("policy rows have unequal lengths"));
        }
        flat.extend_from_slice(row);
    }
    Policy::new(rows.len(), num_actions, flat).map_err(pyerr)
}

fn divergence_from_py(divergence: &Bound<'_, PyAny>) -> PyResult<Divergence> {
    if let Ok(name) = divergence.extract::<String>() {
        return match name.as_str() {
            "kl" => Ok(Divergence::Kl),
            "chi2" | "chi-square" | "chi_square" => Ok(Divergence::ChiSquare),
            other => Err(PyValueError::new_err(format!(
                "unknown divergence {other:?}; pass \"kl\", \"chi2\", or a float alpha"
            ))),
        };
    }
    if let Ok(alpha) = divergence.extract::<f64>() {
        let d = Divergence::Alpha(alpha);
        d.validate().map_err(pyerr)?;
        return Ok(d);
    }
    Err(PyValueError::new_err(
        "divergence must be \"kl\", \"chi2\", or a float alpha",
    ))
}

/// One fully materialized synthetic environment: feature table, the two
/// ground-truth oracle parameters, the reference policy, and the prompt
/// distribution.
#[pyclass]
struct Instance {
    inner: synthetic::Instance,
}

#[pymethods]
impl Instance {
    #[getter]
    fn num_prompts(&self) -> usize {
        self.inner.config.num_prompts
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.config.num_actions
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.config.dim
    }

    #[getter]
    fn theta_target(&self) -> Vec<f64> {
        self.inner.theta_target.as_slice().to_vec()
    }

    #[getter]
    fn theta_constraint(&self) -> Vec<f64> {
        self.inner.theta_constraint.as_slice().to_vec()
    }

    #[getter]
    fn reference(&self) -> Vec<Vec<f64>> {
        policy_rows(&self.inner.reference)
    }

    #[getter]
    fn prompt_dist(&self) -> Vec<f64> {
        self.inner.prompt_dist.clone()
    }

    fn target_rewards(&self) -> Vec<f64> {
        self.inner.target_rewards()
    }

    fn constraint_rewards(&self) -> Vec<f64> {
        self.inner.constraint_rewards()
    }

    /// Reward table of an arbitrary parameter vector on this instance's
    /// features.
    fn rewards(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        if theta.len() != self.inner.config.dim {
            return Err(PyValueError::new_err(format!(
                "theta has length {}, feature dimension is {}",
                theta.len(),
                self.inner.config.dim
            )));
        }
        Ok(self
            .inner
            .table
            .rewards(&DVector::from_vec(theta))
            .as_slice()
            .to_vec())
    }

    /// Calibrated constraint threshold from the two anchor policies.
    /// Exact expectations by default; pass `samples` for the Monte-Carlo
    /// mode. Returns a dict with j_min, e_zero, e_hi, and the mode label.
    #[pyo3(signature = (eta, samples=None))]
    fn calibrate<'py>(
        &self,
        py: Python<'py>,
        eta: f64,
        samples: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mode = match samples {
            None => CalibrationMode::Exact,
            Some(s) => CalibrationMode::Sampled(s),
        };
        let cal = synthetic::calibrate_jmin(&self.inner, eta, mode).map_err(pyerr)?;
        let out = PyDict::new(py);
        out.set_item("j_min", cal.j_min)?;
        out.set_item("e_zero", cal.e_zero)?;
        out.set_item("e_hi", cal.e_hi)?;
        out.set_item("mode", cal.mode_label)?;
        Ok(out)
    }

    /// Preference dataset of n comparisons labeled by the two ground-truth
    /// oracles (target first).
    fn sample(&self, n: usize, seed: u64) -> PyResult<Dataset> {
        let dataset = synthetic::sample_dataset(&self.inner, n, seed).map_err(pyerr)?;
        Ok(Dataset { inner: dataset })
    }

    /// Fits one reward model per oracle in the dataset by damped Newton on
    /// the ridge-penalized log-likelihood.
    #[pyo3(signature = (dataset, lambda_reg=0.01, norm_bound=None))]
    fn fit(
        &self,
        dataset: &Dataset,
        lambda_reg: f64,
        norm_bound: Option<f64>,
    ) -> PyResult<FitResult> {
        let (deltas, fits) =
            mle::fit_all_oracles(&self.inner.table, &dataset.inner, lambda_reg, norm_bound)
                .map_err(pyerr)?;
        let bundle = CovarianceBundle::new(&deltas, lambda_reg).map_err(pyerr)?;
        Ok(FitResult {
            fits,
            bundle,
            sample_size: dataset.inner.len(),
            dim: self.inner.config.dim,
            lambda_reg,
        })
    }

    /// Dual problem with the ground-truth reward models.
    fn true_problem(&self, eta: f64, j_min: Vec<f64>) -> PyResult<Problem> {
        let problem = self.inner.dual_problem(eta, j_min).map_err(pyerr)?;
        Ok(Problem { inner: problem })
    }

    /// Dual problem with caller-supplied parameter vectors (target first,
    /// then one per constraint), e.g. fitted models.
    fn estimated_problem(
        &self,
        eta: f64,
        j_min: Vec<f64>,
        thetas: Vec<Vec<f64>>,
    ) -> PyResult<Problem> {
        let models: Vec<RewardModel> = thetas
            .into_iter()
            .map(|t| RewardModel::new(DVector::from_vec(t)))
            .collect();
        let problem = DualProblem::from_models(
            &self.inner.table,
            self.inner.reference.clone(),
            self.inner.prompt_dist.clone(),
            &models,
            eta,
            j_min,
        )
        .map_err(pyerr)?;
        Ok(Problem { inner: problem })
    }
}

/// Pairwise comparisons labeled independently by every oracle.
#[pyclass]
struct Dataset {
    inner: PreferenceDataset,
}

#[pymethods]
impl Dataset {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn num_oracles(&self) -> usize {
        self.inner.num_oracles
    }

    /// Records as (prompt, first, second, labels) tuples.
    fn records(&self) -> Vec<(usize, usize, usize, Vec<u8>)> {
        self.inner
            .records
            .iter()
            .map(|r| (r.prompt, r.first, r.second, r.labels.clone()))
            .collect()
    }

    /// The first n records as a new dataset.
    fn prefix(&self, n: usize) -> Dataset {
        Dataset {
            inner: self.inner.prefix(n),
        }
    }
}

/// Fitted reward models plus the shared regularized difference covariance
/// they concentrate in.
#[pyclass]
struct FitResult {
    fits: Vec<mle::MleFit>,
    bundle: CovarianceBundle,
    sample_size: usize,
    dim: usize,
    lambda_reg: f64,
}

#[pymethods]
impl FitResult {
    /// Fitted parameter vectors, one per oracle (target first).
    fn thetas(&self) -> Vec<Vec<f64>> {
        self.fits
            .iter()
            .map(|f| f.model.theta.as_slice().to_vec())
            .collect()
    }

    #[getter]
    fn iterations(&self) -> Vec<usize> {
        self.fits.iter().map(|f| f.iterations).collect()
    }

    #[getter]
    fn grad_norms(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.grad_norm).collect()
    }

    #[getter]
    fn norm_warnings(&self) -> Vec<bool> {
        self.fits.iter().map(|f| f.norm_warning).collect()
    }

    #[getter]
    fn min_eig_sigma_reg(&self) -> f64 {
        self.bundle.min_eig
    }

    #[getter]
    fn sample_size(&self) -> usize {
        self.sample_size
    }

    /// Norm of a vector in the regularized difference covariance metric;
    /// pass theta_hat - theta_true to check a confidence event post hoc.
    fn matrix_norm(&self, v: Vec<f64>) -> PyResult<f64> {
        if v.len() != self.dim {
            return Err(PyValueError::new_err(format!(
                "vector has length {}, feature dimension is {}",
                v.len(),
                self.dim
            )));
        }
        Ok(mle::matrix_norm(
            &DVector::from_vec(v),
            &self.bundle.sigma_reg,
        ))
    }

    /// Confidence radius beta for these fits at failure probability delta
    /// and reward bound b (constant c scales the whole radius).
    #[pyo3(signature = (delta, b, c=1.0))]
    fn confidence_radius(&self, delta: f64, b: f64, c: f64) -> PyResult<f64> {
        mle::confidence_radius(self.sample_size, self.dim, delta, b, self.lambda_reg, c)
            .map_err(pyerr)
    }
}

/// The dual of the constrained KL-regularized problem, over either
/// ground-truth or estimated reward models.
#[pyclass]
struct Problem {
    inner: DualProblem,
}

#[pymethods]
impl Problem {
    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta()
    }

    #[getter]
    fn j_min(&self) -> Vec<f64> {
        self.inner.j_min().to_vec()
    }

    #[getter]
    fn num_constraints(&self) -> usize {
        self.inner.num_constraints()
    }

    /// Largest absolute constraint reward: the B in step sizes and
    /// smoothness constants.
    fn empirical_reward_bound(&self) -> f64 {
        self.inner.empirical_reward_bound()
    }

    /// Dual value, gradient, Hessian, and maximizing policy at lambda.
    fn eval<'py>(&self, py: Python<'py>, lambda: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let eval = self.inner.eval(&lambda).map_err(pyerr)?;
        let m = eval.gradient.len();
        let hessian: Vec<Vec<f64>> = (0..m)
            .map(|j| (0..m).map(|k| eval.hessian[(j, k)]).collect())
            .collect();
        let out = PyDict::new(py);
        out.set_item("value", eval.value)?;
        out.set_item("gradient", eval.gradient)?;
        out.set_item("hessian", hessian)?;
        out.set_item("policy", policy_rows(&eval.policy))?;
        Ok(out)
    }

    /// Projected gradient descent on [0, radius]^m. `step` is "auto"
    /// (eta / B^2), "fixed" (requires `alpha`), or "adaptive" (library
    /// defaults). Returns the trace with the averaged multiplier and the
    /// policy it deploys.
    #[pyo3(signature = (radius, iterations, step="auto", alpha=None, bound_b=None))]
    fn solve(
        &self,
        radius: f64,
        iterations: usize,
        step: &str,
        alpha: Option<f64>,
        bound_b: Option<f64>,
    ) -> PyResult<Trace> {
        let rule = match step {
            "auto" => StepRule::Auto,
            "fixed" => {
                let alpha = alpha.ok_or_else(|| {
                    PyValueError::new_err("step=\"fixed\" requires alpha")
                })?;
                StepRule::Fixed(alpha)
            }
            "adaptive" => StepRule::Adaptive(AdaptiveConfig::default()),
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown step rule {other:?}; pass \"auto\", \"fixed\", or \"adaptive\""
                )))
            }
        };
        let mut config = SolverConfig::new(radius, iterations, rule);
        config.bound_b = bound_b;
        let trace = solver::solve_dual(&self.inner, &config).map_err(pyerr)?;
        Ok(Trace { inner: trace })
    }

    /// Dense-grid minimizer over [0, radius] with golden-section polish;
    /// single-constraint problems only. Returns (lambda, value).
    #[pyo3(signature = (radius, points=4096))]
    fn dense_minimum(&self, radius: f64, points: usize) -> PyResult<(f64, f64)> {
        let (lambda, eval) =
            solver::dense_dual_minimum(&self.inner, radius, points).map_err(pyerr)?;
        Ok((lambda, eval.value))
    }

    /// Expected true-reward metrics of a solve against this problem as
    /// ground truth: dual gap, signed and positive-part violations, and
    /// primal gaps for both the certified and the deployed policy.
    fn evaluate_against<'py>(
        &self,
        py: Python<'py>,
        estimated: &Problem,
        lambda_bar: Vec<f64>,
        lambda_star: Vec<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let metrics =
            solver::evaluate_solution(&self.inner, &estimated.inner, &lambda_bar, &lambda_star)
                .map_err(pyerr)?;
        let out = PyDict::new(py);
        out.set_item("dual_gap", metrics.dual_gap)?;
        out.set_item("violation", metrics.violation)?;
        out.set_item("violation_signed", metrics.violation_signed)?;
        out.set_item("primal_gap", metrics.primal_gap)?;
        out.set_item("deployed_violation", metrics.deployed_violation)?;
        out.set_item(
            "deployed_violation_signed",
            metrics.deployed_violation_signed,
        )?;
        out.set_item("deployed_primal_gap", metrics.deployed_primal_gap)?;
        Ok(out)
    }
}

/// Full solver output: iterates, averaged multiplier, deployed policy.
#[pyclass]
struct Trace {
    inner: solver::SolverTrace,
}

#[pymethods]
impl Trace {
    #[getter]
    fn lambda_bar(&self) -> Vec<f64> {
        self.inner.lambda_bar.clone()
    }

    #[getter]
    fn final_lambda(&self) -> Vec<f64> {
        self.inner.final_lambda.clone()
    }

    #[getter]
    fn bound_b(&self) -> f64 {
        self.inner.bound_b
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.radius
    }

    fn policy(&self) -> Vec<Vec<f64>> {
        policy_rows(&self.inner.policy)
    }

    /// Dual value at each visited iterate.
    fn dual_values(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.dual_value).collect()
    }

    /// The multiplier path, one vector per iteration.
    fn lambda_path(&self) -> Vec<Vec<f64>> {
        self.inner.records.iter().map(|r| r.lambda.clone()).collect()
    }
}

/// Generates a synthetic instance: unit-normalized Gaussian features and
/// oracle parameters, a softmax reference policy at the given temperature
/// around the w-mixture of the two oracles, uniform prompts.
#[pyfunction]
#[pyo3(signature = (seed=0, num_prompts=100, num_actions=10, dim=8,
        mixing_weight=0.5, reference_temperature=3.5, frac=0.7,
        lambda_hi=5.0))]
#[allow(clippy::too_many_arguments)]
fn generate(
    seed: u64,
    num_prompts: usize,
    num_actions: usize,
    dim: usize,
    mixing_weight: f64,
    reference_temperature: f64,
    frac: f64,
    lambda_hi: f64,
) -> PyResult<Instance> {
    let config = SyntheticConfig {
        seed,
        num_prompts,
        num_actions,
        dim,
        mixing_weight,
        reference_temperature,
        frac,
        lambda_hi,
        ..SyntheticConfig::default()
    };
    let instance = synthetic::generate_instance(&config).map_err(pyerr)?;
    Ok(Instance { inner: instance })
}

/// Closed-form policy improvement under an f-divergence penalty.
/// `divergence` is "kl", "chi2", or a float alpha. Returns a dict with the
/// policy and the per-prompt normalizing thresholds tau.
#[pyfunction]
fn tilt_policy<'py>(
    py: Python<'py>,
    reference: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    eta: f64,
    divergence: &Bound<'py, PyAny>,
) -> PyResult<Bound<'py, PyDict>> {
    let reference = policy_from_rows(&reference)?;
    let divergence = divergence_from_py(divergence)?;
    let tilted = gibbs::f_divergence_policy(&reference, &rewards, eta, divergence).map_err(pyerr)?;
    let out = PyDict::new(py);
    out.set_item("policy", policy_rows(&tilted.policy))?;
    out.set_item("tau", tilted.tau)?;
    Ok(out)
}

/// E_pi[r] under a prompt distribution.
#[pyfunction]
fn expected_reward(
    policy: Vec<Vec<f64>>,
    prompt_dist: Vec<f64>,
    rewards: Vec<f64>,
) -> PyResult<f64> {
    let policy = policy_from_rows(&policy)?;
    Ok(types::expected_reward(&policy, &prompt_dist, &rewards))
}

/// E_pi[r] - eta D(pi || reference) under a prompt distribution;
/// `divergence` as in tilt_policy.
#[pyfunction]
fn primal_objective(
    policy: Vec<Vec<f64>>,
    reference: Vec<Vec<f64>>,
    prompt_dist: Vec<f64>,
    rewards: Vec<f64>,
    eta: f64,
    divergence: &Bound<'_, PyAny>,
) -> PyResult<f64> {
    let policy = policy_from_rows(&policy)?;
    let reference = policy_from_rows(&reference)?;
    let divergence = divergence_from_py(divergence)?;
    types::primal_objective(&policy, &reference, &prompt_dist, &rewards, eta, divergence)
        .map_err(pyerr)
}

/// Confidence radius beta for a ridge-penalized pairwise-comparison fit.
#[pyfunction]
#[pyo3(signature = (n, dim, delta, b, lambda_reg, c=1.0))]
fn confidence_radius(
    n: usize,
    dim: usize,
    delta: f64,
    b: f64,
    lambda_reg: f64,
    c: f64,
) -> PyResult<f64> {
    mle::confidence_radius(n, dim, delta, b, lambda_reg, c).map_err(pyerr)
}

/// Sigmoid curvature floor gamma = 1 / (2 + e^{-b} + e^b).
#[pyfunction]
fn gamma_curvature(b: f64) -> f64 {
    mle::gamma_curvature(b)
}

/// Gradient smoothness constant B^2 / eta of the dual.
#[pyfunction]
fn lipschitz_constant(bound_b: f64, eta: f64) -> PyResult<f64> {
    dualign::dual::lipschitz_constant(bound_b, eta).map_err(pyerr)
}

/// End-to-end guarantees for the averaged iterate: dual gap, violation,
/// and primal gap bounds from the uniform envelope values at the radius.
#[pyfunction]
fn solution_bounds<'py>(
    py: Python<'py>,
    envelope_value_at_r: f64,
    envelope_gradient_at_r: f64,
    bound_b: f64,
    eta: f64,
    radius: f64,
    iterations: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let bounds = certificates::solution_bounds(
        envelope_value_at_r,
        envelope_gradient_at_r,
        bound_b,
        eta,
        radius,
        iterations,
    )
    .map_err(pyerr)?;
    let out = PyDict::new(py);
    out.set_item("dual_gap", bounds.dual_gap)?;
    out.set_item("violation", bounds.violation)?;
    out.set_item("primal_gap", bounds.primal_gap)?;
    Ok(out)
}

/// Error envelopes around the estimated dual: E_g(l) and E_g'(l).
/// In data-dependent mode `scale` is the smallest eigenvalue of the
/// regularized difference covariance (see FitResult.min_eig_sigma_reg);
/// in data-independent mode it is the norm-change factor zeta_min.
#[pyfunction]
#[pyo3(signature = (beta_n, scale, bound_b, eta, mode="data-dependent", lambda_=0.0))]
fn envelopes<'py>(
    py: Python<'py>,
    beta_n: f64,
    scale: f64,
    bound_b: f64,
    eta: f64,
    mode: &str,
    lambda_: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let env = match mode {
        "data-dependent" => {
            certificates::Envelopes::data_dependent(beta_n, scale, bound_b, eta)
        }
        "data-independent" => {
            certificates::Envelopes::data_independent(beta_n, scale, bound_b, eta)
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown envelope mode {other:?}"
            )))
        }
    }
    .map_err(pyerr)?;
    let out = PyDict::new(py);
    out.set_item("value", env.value(lambda_))?;
    out.set_item("gradient", env.gradient(lambda_))?;
    out.set_item("probability_budget", env.mode.probability_budget())?;
    Ok(out)
}

/// Runs the synthetic benchmark sweep and returns one dict per
/// (mixing weight, seed, sample size) row.
#[pyfunction]
#[pyo3(signature = (seed=0, num_prompts=100, num_actions=10, dim=8,
        reference_temperature=3.5, frac=0.7, lambda_hi=5.0, n_max=3000,
        n_step=300, w_values=vec![0.3, 0.6, 0.9], num_seeds=5, eta=0.05,
        lambda_reg=0.002, delta=0.05, iterations=1000, modulus_grid=64))]
#[allow(clippy::too_many_arguments)]
fn run_sweep<'py>(
    py: Python<'py>,
    seed: u64,
    num_prompts: usize,
    num_actions: usize,
    dim: usize,
    reference_temperature: f64,
    frac: f64,
    lambda_hi: f64,
    n_max: usize,
    n_step: usize,
    w_values: Vec<f64>,
    num_seeds: u64,
    eta: f64,
    lambda_reg: f64,
    delta: f64,
    iterations: usize,
    modulus_grid: usize,
) -> PyResult<Bound<'py, PyList>> {
    let config = SweepConfig {
        base: SyntheticConfig {
            seed,
            num_prompts,
            num_actions,
            dim,
            reference_temperature,
            frac,
            lambda_hi,
            n_max,
            n_step,
            ..SyntheticConfig::default()
        },
        w_values,
        num_seeds,
        eta,
        lambda_reg,
        delta,
        iterations,
        modulus_grid,
    };
    let report = synthetic::run_sweep(&config).map_err(pyerr)?;
    let rows = PyList::empty(py);
    for r in &report.rows {
        let row = PyDict::new(py);
        row.set_item("w", r.w)?;
        row.set_item("seed", r.seed)?;
        row.set_item("n", r.n)?;
        row.set_item("j_min", r.j_min)?;
        row.set_item("initial_violation", r.initial_violation)?;
        row.set_item("bound_b_hat", r.bound_b_hat)?;
        row.set_item("bound_b_cert", r.bound_b_cert)?;
        row.set_item("radius", r.radius)?;
        row.set_item("lambda_star", r.lambda_star)?;
        row.set_item("lambda_bar", r.lambda_bar)?;
        row.set_item("dual_gap", r.dual_gap)?;
        row.set_item("certified_violation", r.violation)?;
        row.set_item("certified_violation_signed", r.violation_signed)?;
        row.set_item("certified_primal_gap", r.primal_gap)?;
        row.set_item("violation", r.deployed_violation_signed)?;
        row.set_item("violation_positive", r.deployed_violation)?;
        row.set_item("suboptimality", r.deployed_primal_gap)?;
        row.set_item("theta_err_target", r.theta_err_target)?;
        row.set_item("theta_err_constraint", r.theta_err_constraint)?;
        row.set_item("beta_n", r.beta_n)?;
        row.set_item("mle_event", r.mle_event)?;
        row.set_item("bound_dual_gap", r.bound_dual_gap)?;
        row.set_item("bound_violation", r.bound_violation)?;
        row.set_item("bound_primal_gap", r.bound_primal_gap)?;
        row.set_item("probability_budget", r.probability_budget.clone())?;
        rows.append(row)?;
    }
    Ok(rows)
}

/// Fits reward models from raw arrays without a synthetic instance:
/// features is a nested list indexed [prompt][action][feature], records
/// are (prompt, first, second, labels) tuples.
#[pyfunction]
#[pyo3(signature = (features, records, lambda_reg=0.01, norm_bound=None))]
fn fit_models(
    features: Vec<Vec<Vec<f64>>>,
    records: Vec<(usize, usize, usize, Vec<u8>)>,
    lambda_reg: f64,
    norm_bound: Option<f64>,
) -> PyResult<FitResult> {
    if features.is_empty() || features[0].is_empty() || features[0][0].is_empty() {
        return Err(PyValueError::new_err("features must be non-empty"));
    }
    let num_prompts = features.len();
    let num_actions = features[0].len();
    let dim = features[0][0].len();
    let mut flat = Vec::with_capacity(num_prompts * num_actions * dim);
    for row in &features {
        if row.len() != num_actions {
            return Err(PyValueError::new_err("feature rows have unequal lengths"));
        }
        for cell in row {
            if cell.len() != dim {
                return Err(PyValueError::new_err("feature vectors have unequal lengths"));
            }
            flat.extend_from_slice(cell);
        }
    }
    let table = types::FeatureTable::new(num_prompts, num_actions, dim, flat).map_err(pyerr)?;
    let num_oracles = records
        .first()
        .map(|r| r.3.len())
        .ok_or_else(|| PyValueError::new_err("need at least one record"))?;
    let records: Vec<types::PreferenceRecord> = records
        .into_iter()
        .map(|(prompt, first, second, labels)| types::PreferenceRecord {
            prompt,
            first,
            second,
            labels,
        })
        .collect();
    let dataset = PreferenceDataset::new(num_oracles, records).map_err(pyerr)?;
    dataset.validate_against(&table).map_err(pyerr)?;
    let deltas = DifferenceMatrix::new(&table, &dataset).map_err(pyerr)?;
    let mut fits = Vec::with_capacity(num_oracles);
    for k in 0..num_oracles {
        let labels = dataset.labels_for(k);
        fits.push(mle::fit_mle(&deltas, &labels, lambda_reg, norm_bound).map_err(pyerr)?);
    }
    let bundle = CovarianceBundle::new(&deltas, lambda_reg).map_err(pyerr)?;
    Ok(FitResult {
        fits,
        bundle,
        sample_size: dataset.len(),
        dim,
        lambda_reg,
    })
}

#[pymodule]
fn dualign_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Instance>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<FitResult>()?;
    m.add_class::<Problem>()?;
    m.add_class::<Trace>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(tilt_policy, m)?)?;
    m.add_function(wrap_pyfunction!(expected_reward, m)?)?;
    m.add_function(wrap_pyfunction!(primal_objective, m)?)?;
    m.add_function(wrap_pyfunction!(confidence_radius, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_curvature, m)?)?;
    m.add_function(wrap_pyfunction!(lipschitz_constant, m)?)?;
    m.add_function(wrap_pyfunction!(solution_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(envelopes, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(fit_models, m)?)?;
    Ok(())
}
