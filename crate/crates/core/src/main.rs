//! Experiment driver: generate synthetic instances, fit per-oracle reward
//! models from preferences, solve the penalized dual, certify the result,
//! and benchmark the full pipeline.
//!
//! Every command reads an optional `key = value` config file, applies
//! `--set key=value` overrides, fills documented defaults, and writes a
//! manifest recording the fully resolved parameters plus the tool version.
//! Manifests are themselves valid configs: each command's manifest feeds
//! the next stage (`generate` -> `fit` -> `solve` -> `certify`/`evaluate`)
//! without manual editing, and `run --config <manifest>` replays the run
//! that produced it. Relative paths in configs resolve against `--out`.
//!
//! Exit codes: 0 success, 2 validation/config/parse errors, 3 numerical
//! failures, 4 I/O errors.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use dualign::certificates::{
    change_of_norm_factors, multiplier_bound_data_driven, slater_slack, solution_bounds,
    CertificateReport, Envelopes, DEFAULT_NET_POINTS,
};
use dualign::dual::DualProblem;
use dualign::error::{Error, Result};
use dualign::io::{self, KeyValues};
use dualign::mle::{self, CovarianceBundle};
use dualign::solver::{self, AdaptiveConfig, SolverConfig, StepRule};
use dualign::synthetic::{self, CalibrationMode, SweepConfig, SyntheticConfig};
use dualign::types::{
    primal_objective, uniform_prompt_dist, Divergence, FeatureTable, Policy, RewardModel,
};

#[derive(Parser)]
#[command(
    name = "dualign",
    version,
    about = "Constrained policy alignment from preference data: fit per-oracle \
             rewards, solve the penalized dual, and certify the result."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance: features, reference policy,
    /// preference data, and the ground-truth reward models.
    Generate(CommonArgs),
    /// Fit one reward model per oracle from features and preferences.
    Fit(CommonArgs),
    /// Run projected gradient on the dual; emit the trace and the policy.
    Solve(CommonArgs),
    /// Compute high-probability certificates for a fitted, solved run.
    Certify(CommonArgs),
    /// Run the (mixing weight, seed, sample size) benchmark sweep.
    Sweep(CommonArgs),
    /// Score a solve against ground-truth reward models.
    Evaluate(CommonArgs),
    /// Execute the command named by the config's `command` key.
    Run(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// `key = value` config file; command-specific keys are documented in
    /// the README. Unknown keys are ignored so manifests compose.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing; relative paths in configs
    /// resolve against it.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Config override `key=value`; repeatable, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Generate(a)
        | Command::Fit(a)
        | Command::Solve(a)
        | Command::Certify(a)
        | Command::Sweep(a)
        | Command::Evaluate(a)
        | Command::Run(a) => a,
    };
    let name = match &cli.command {
        Command::Generate(_) => "generate",
        Command::Fit(_) => "fit",
        Command::Solve(_) => "solve",
        Command::Certify(_) => "certify",
        Command::Sweep(_) => "sweep",
        Command::Evaluate(_) => "evaluate",
        Command::Run(_) => "run",
    };
    if let Err(err) = build_ctx(args).and_then(|ctx| dispatch(name, &ctx)) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn dispatch(name: &str, ctx: &Ctx) -> Result<()> {
    match name {
        "generate" => cmd_generate(ctx),
        "fit" => cmd_fit(ctx),
        "solve" => cmd_solve(ctx),
        "certify" => cmd_certify(ctx),
        "sweep" => cmd_sweep(ctx),
        "evaluate" => cmd_evaluate(ctx),
        "run" => cmd_run(ctx),
        other => Err(Error::validation(format!(
            "unknown command {other:?} (expected generate, fit, solve, certify, sweep, or evaluate)"
        ))),
    }
}

/// Resolved invocation: merged config plus the output directory.
struct Ctx {
    cfg: KeyValues,
    out: PathBuf,
}

impl Ctx {
    /// Relative paths resolve against the output directory so a pipeline
    /// keeps all of its artifacts side by side.
    fn resolve(&self, name: &str) -> PathBuf {
        let p = Path::new(name);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }
}

fn build_ctx(args: &CommonArgs) -> Result<Ctx> {
    let mut cfg = match &args.config {
        Some(path) => KeyValues::read(path)?,
        None => KeyValues::new("command line"),
    };
    for pair in &args.set {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(Error::validation(format!(
                "--set expects key=value, got {pair:?}"
            )));
        };
        cfg.set(key.trim(), value.trim());
    }
    if let Some(seed) = args.seed {
        cfg.set("seed", seed.to_string());
    }
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;
    Ok(Ctx {
        cfg,
        out: args.out.clone(),
    })
}

/// Seeds a manifest with the command name, tool version, and every input
/// key; commands then overwrite with resolved values and append results.
fn manifest_base(command: &str, cfg: &KeyValues) -> KeyValues {
    let mut m = KeyValues::new("manifest");
    m.set("command", command);
    m.set("version", env!("CARGO_PKG_VERSION"));
    for (k, v) in cfg.pairs() {
        if k != "command" && k != "version" {
            m.set(k.clone(), v.clone());
        }
    }
    m
}

fn require_f64(cfg: &KeyValues, key: &str) -> Result<f64> {
    cfg.require(key)?;
    cfg.f64_or(key, 0.0)
}

fn require_f64_list(cfg: &KeyValues, key: &str) -> Result<Vec<f64>> {
    cfg.f64_list(key)?
        .ok_or_else(|| Error::validation(format!("{}: missing required key {key:?}", cfg.source)))
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| io::fmt_float(*v))
        .collect::<Vec<_>>()
        .join(", ")
}

fn parse_step(s: &str) -> Result<StepRule> {
    if s == "auto" {
        Ok(StepRule::Auto)
    } else if s == "adaptive" {
        Ok(StepRule::Adaptive(AdaptiveConfig::default()))
    } else if let Some(v) = s.strip_prefix("fixed:") {
        let alpha: f64 = v.trim().parse().map_err(|_| {
            Error::validation(format!("step fixed:<alpha> needs a number, got {v:?}"))
        })?;
        Ok(StepRule::Fixed(alpha))
    } else {
        Err(Error::validation(format!(
            "unknown step rule {s:?} (expected auto, adaptive, or fixed:<alpha>)"
        )))
    }
}

fn set_default(cfg: &mut KeyValues, key: &str, value: &str) {
    if cfg.get(key).is_none() {
        cfg.set(key, value);
    }
}

/// Named parameter bundles. `adaptive` is the tuned large-radius setup:
/// eta 0.3, radius 100, 1000 iterations, adaptive steps.
fn apply_preset(cfg: &mut KeyValues, preset: &str) -> Result<()> {
    match preset {
        "adaptive" => {
            set_default(cfg, "eta", "0.3");
            set_default(cfg, "radius", "100");
            set_default(cfg, "iterations", "1000");
            set_default(cfg, "step", "adaptive");
            Ok(())
        }
        other => Err(Error::validation(format!(
            "unknown preset {other:?} (expected adaptive)"
        ))),
    }
}

/// Shared input loading for the commands that consume a written instance.
struct LoadedInputs {
    table: FeatureTable,
    reference: Policy,
    models: Vec<RewardModel>,
}

fn load_inputs(ctx: &Ctx, models_key: &str, models_default: &str) -> Result<LoadedInputs> {
    let cfg = &ctx.cfg;
    let renormalize = cfg.bool_or("renormalize", true)?;
    let features = ctx.resolve(&cfg.string_or("features", "features.csv"));
    let reference = ctx.resolve(&cfg.string_or("reference", "reference_policy.csv"));
    let models = ctx.resolve(&cfg.string_or(models_key, models_default));
    let (table, renormalized) = io::read_features(&features, renormalize)?;
    if renormalized > 0 {
        eprintln!(
            "warning: renormalized {renormalized} feature vector(s) with norm above 1 to unit norm"
        );
    }
    let reference = io::read_policy(&reference)?;
    if reference.num_prompts() != table.num_prompts()
        || reference.num_actions() != table.num_actions()
    {
        return Err(Error::validation(
            "reference policy shape does not match the feature table",
        ));
    }
    let models = io::read_models(&models)?;
    Ok(LoadedInputs {
        table,
        reference,
        models,
    })
}

// --- generate -----------------------------------------------------------------

fn cmd_generate(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let seed = cfg.u64_or("seed", 0)?;
    let num_prompts = cfg.usize_or("num_prompts", 100)?;
    let num_actions = cfg.usize_or("num_actions", 10)?;
    let dim = cfg.usize_or("dim", 8)?;
    let w = cfg.f64_or("w", 0.5)?;
    let eta0 = cfg.f64_or("eta0", 3.5)?;
    let frac = cfg.f64_or("frac", 0.7)?;
    let lambda_hi = cfg.f64_or("lambda_hi", 5.0)?;
    let n = cfg.usize_or("n", 3000)?;
    let eta = cfg.f64_or("eta", 0.05)?;
    let calibration = cfg.string_or("calibration", "exact");
    let calibration_samples = cfg.usize_or("calibration_samples", 10_000)?;
    if n == 0 {
        return Err(Error::validation("need at least one preference record (n >= 1)"));
    }

    let synth = SyntheticConfig {
        seed,
        num_prompts,
        num_actions,
        dim,
        mixing_weight: w,
        reference_temperature: eta0,
        n_max: n,
        n_step: n,
        frac,
        lambda_hi,
        calibration_samples,
    };
    let instance = synthetic::generate_instance(&synth)?;
    let mode = match calibration.as_str() {
        "exact" => CalibrationMode::Exact,
        "sampled" => CalibrationMode::Sampled(calibration_samples),
        other => {
            return Err(Error::validation(format!(
                "unknown calibration mode {other:?} (expected exact or sampled)"
            )))
        }
    };
    let cal = synthetic::calibrate_jmin(&instance, eta, mode)?;
    let dataset = synthetic::sample_dataset(&instance, n, seed)?;

    let manifest_name = "generate_manifest.kv";
    let features_name = cfg.string_or("features", "features.csv");
    let reference_name = cfg.string_or("reference", "reference_policy.csv");
    let preferences_name = cfg.string_or("preferences", "preferences.csv");
    let true_models_name = cfg.string_or("true_models", "true_models.csv");
    io::write_features(&ctx.resolve(&features_name), manifest_name, &instance.table)?;
    io::write_policy(&ctx.resolve(&reference_name), manifest_name, &instance.reference)?;
    io::write_preferences(&ctx.resolve(&preferences_name), manifest_name, &dataset)?;
    io::write_models(
        &ctx.resolve(&true_models_name),
        manifest_name,
        &instance.true_models(),
    )?;

    let mut m = manifest_base("generate", cfg);
    m.set("seed", seed.to_string());
    m.set("num_prompts", num_prompts.to_string());
    m.set("num_actions", num_actions.to_string());
    m.set("dim", dim.to_string());
    m.set("w", io::fmt_float(w));
    m.set("eta0", io::fmt_float(eta0));
    m.set("frac", io::fmt_float(frac));
    m.set("lambda_hi", io::fmt_float(lambda_hi));
    m.set("n", n.to_string());
    m.set("eta", io::fmt_float(eta));
    m.set("calibration", calibration);
    m.set("calibration_samples", calibration_samples.to_string());
    m.set("features", features_name);
    m.set("reference", reference_name);
    m.set("preferences", preferences_name);
    m.set("true_models", true_models_name);
    m.set("calibration_mode", cal.mode_label.clone());
    m.set("e_zero", io::fmt_float(cal.e_zero));
    m.set("e_hi", io::fmt_float(cal.e_hi));
    m.set("j_min", io::fmt_float(cal.j_min));
    m.set("bound_b_true", io::fmt_float(synthetic::TRUE_REWARD_BOUND));
    let manifest_path = ctx.resolve(manifest_name);
    io::write_key_values(&manifest_path, manifest_name, m.pairs())?;
    println!(
        "generate: {num_prompts} prompts x {num_actions} actions, {n} comparisons, j_min = {} -> {}",
        io::fmt_float(cal.j_min),
        manifest_path.display()
    );
    Ok(())
}

// --- fit ------------------------------------------------------------------------

fn cmd_fit(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let lambda_reg = cfg.f64_or("lambda_reg", 0.01)?;
    let renormalize = cfg.bool_or("renormalize", true)?;
    let norm_bound = match cfg.get("bound_b") {
        Some(_) => Some(require_f64(cfg, "bound_b")?),
        None => None,
    };
    let features_name = cfg.string_or("features", "features.csv");
    let preferences_name = cfg.string_or("preferences", "preferences.csv");
    let (table, renormalized) = io::read_features(&ctx.resolve(&features_name), renormalize)?;
    if renormalized > 0 {
        eprintln!(
            "warning: renormalized {renormalized} feature vector(s) with norm above 1 to unit norm"
        );
    }
    let dataset = io::read_preferences(&ctx.resolve(&preferences_name))?;
    dataset.validate_against(&table)?;
    let (deltas, fits) = mle::fit_all_oracles(&table, &dataset, lambda_reg, norm_bound)?;
    let bundle = CovarianceBundle::new(&deltas, lambda_reg)?;
    let models: Vec<RewardModel> = fits.iter().map(|f| f.model.clone()).collect();

    let manifest_name = "fit_manifest.kv";
    let models_name = cfg.string_or("models", "models.csv");
    io::write_models(&ctx.resolve(&models_name), manifest_name, &models)?;

    let mut m = manifest_base("fit", cfg);
    m.set("lambda_reg", io::fmt_float(lambda_reg));
    m.set("renormalize", renormalize.to_string());
    m.set("features", features_name);
    m.set("preferences", preferences_name);
    m.set("models", models_name.clone());
    m.set("fit_n", dataset.len().to_string());
    m.set("fit_dim", table.dim().to_string());
    m.set("fit_num_oracles", dataset.num_oracles.to_string());
    m.set("fit_renormalized_features", renormalized.to_string());
    m.set("fit_min_eig_sigma_reg", io::fmt_float(bundle.min_eig));
    m.set("fit_max_eig_sigma_reg", io::fmt_float(bundle.max_eig));
    for (k, fit) in fits.iter().enumerate() {
        m.set(format!("fit_oracle{k}_iterations"), fit.iterations.to_string());
        m.set(format!("fit_oracle{k}_grad_norm"), io::fmt_float(fit.grad_norm));
        m.set(format!("fit_oracle{k}_norm"), io::fmt_float(fit.model.norm()));
        if fit.norm_warning {
            m.set(format!("fit_oracle{k}_norm_warning"), "true");
            eprintln!(
                "warning: oracle {k} fitted parameter norm {} exceeds the declared bound",
                io::fmt_float(fit.model.norm())
            );
        }
    }
    let manifest_path = ctx.resolve(manifest_name);
    io::write_key_values(&manifest_path, manifest_name, m.pairs())?;
    println!(
        "fit: {} oracles on {} comparisons -> {}",
        dataset.num_oracles,
        dataset.len(),
        manifest_path.display()
    );
    Ok(())
}

// --- solve -----------------------------------------------------------------------

fn cmd_solve(ctx: &Ctx) -> Result<()> {
    let mut cfg = ctx.cfg.clone();
    if let Some(preset) = cfg.get("preset").map(str::to_string) {
        apply_preset(&mut cfg, &preset)?;
    }
    let ctx = Ctx {
        cfg,
        out: ctx.out.clone(),
    };
    let cfg = &ctx.cfg;
    let eta = cfg.f64_or("eta", 0.05)?;
    let radius = require_f64(cfg, "radius")?;
    let iterations = cfg.usize_or("iterations", 1000)?;
    let step_label = cfg.string_or("step", "auto");
    let step = parse_step(&step_label)?;
    let j_min = require_f64_list(cfg, "j_min")?;
    let inputs = load_inputs(&ctx, "models", "models.csv")?;
    if inputs.models.len() != j_min.len() + 1 {
        return Err(Error::validation(format!(
            "{} reward models support {} constraint(s), but j_min lists {}",
            inputs.models.len(),
            inputs.models.len().saturating_sub(1),
            j_min.len()
        )));
    }
    let problem = DualProblem::from_models(
        &inputs.table,
        inputs.reference.clone(),
        uniform_prompt_dist(inputs.table.num_prompts()),
        &inputs.models,
        eta,
        j_min.clone(),
    )?;
    let mut solver_cfg = SolverConfig::new(radius, iterations, step);
    if cfg.get("bound_b").is_some() {
        solver_cfg.bound_b = Some(require_f64(cfg, "bound_b")?);
    }
    let trace = solver::solve_dual(&problem, &solver_cfg)?;
    let dual_at_bar = problem.eval(&trace.lambda_bar)?.value;

    let manifest_name = "solve_manifest.kv";
    let trace_name = cfg.string_or("trace", "trace.csv");
    let solution_name = cfg.string_or("solution", "solution_policy.csv");
    io::write_trace(&ctx.resolve(&trace_name), manifest_name, &trace)?;
    io::write_policy(&ctx.resolve(&solution_name), manifest_name, &trace.policy)?;

    let mut m = manifest_base("solve", cfg);
    m.set("eta", io::fmt_float(eta));
    m.set("radius", io::fmt_float(radius));
    m.set("iterations", iterations.to_string());
    m.set("step", step_label);
    m.set("j_min", join_floats(&j_min));
    m.set("trace", trace_name);
    m.set("solution", solution_name);
    m.set("bound_b_used", io::fmt_float(trace.bound_b));
    m.set("lambda_bar", join_floats(&trace.lambda_bar));
    m.set("final_lambda", join_floats(&trace.final_lambda));
    m.set("dual_value_at_lambda_bar", io::fmt_float(dual_at_bar));
    let manifest_path = ctx.resolve(manifest_name);
    io::write_key_values(&manifest_path, manifest_name, m.pairs())?;
    println!(
        "solve: lambda_bar = [{}], dual value {} -> {}",
        join_floats(&trace.lambda_bar),
        io::fmt_float(dual_at_bar),
        manifest_path.display()
    );
    Ok(())
}

// --- certify ------------------------------------------------------------------------

fn cmd_certify(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let delta = cfg.f64_or("delta", 0.05)?;
    let confidence_c = cfg.f64_or("confidence_c", 1.0)?;
    let ck2 = cfg.f64_or("ck2", 1.0)?;
    let lambda_reg = cfg.f64_or("lambda_reg", 0.01)?;
    let eta = cfg.f64_or("eta", 0.05)?;
    let radius = require_f64(cfg, "radius")?;
    let iterations = cfg.usize_or("iterations", 1000)?;
    let net_points = cfg.usize_or("net_points", DEFAULT_NET_POINTS)?;
    let modulus_grid = cfg.usize_or("modulus_grid", 64)?;
    let mode = cfg.string_or("mode", "data-dependent");
    let j_min = require_f64_list(cfg, "j_min")?;

    let inputs = load_inputs(ctx, "models", "models.csv")?;
    let preferences_name = cfg.string_or("preferences", "preferences.csv");
    let dataset = io::read_preferences(&ctx.resolve(&preferences_name))?;
    dataset.validate_against(&inputs.table)?;
    if inputs.models.len() != j_min.len() + 1 || inputs.models.len() != dataset.num_oracles {
        return Err(Error::validation(format!(
            "{} reward models, {} labels per record, and {} threshold(s) disagree",
            inputs.models.len(),
            dataset.num_oracles,
            j_min.len()
        )));
    }
    let deltas = mle::DifferenceMatrix::new(&inputs.table, &dataset)?;
    let bundle = CovarianceBundle::new(&deltas, lambda_reg)?;
    let problem = DualProblem::from_models(
        &inputs.table,
        inputs.reference.clone(),
        uniform_prompt_dist(inputs.table.num_prompts()),
        &inputs.models,
        eta,
        j_min.clone(),
    )?;
    let m_constraints = problem.num_constraints();

    let b_hat = problem.empirical_reward_bound();
    let bound_b = if cfg.get("bound_b").is_some() {
        require_f64(cfg, "bound_b")?
    } else if cfg.get("bound_b_used").is_some() {
        require_f64(cfg, "bound_b_used")?
    } else {
        b_hat
    };
    let beta_n = mle::confidence_radius(
        dataset.len(),
        inputs.table.dim(),
        delta,
        bound_b,
        lambda_reg,
        confidence_c,
    )?;
    let (envelopes, norm_change) = match mode.as_str() {
        "data-dependent" => (
            Envelopes::data_dependent(beta_n, bundle.min_eig, bound_b, eta)?,
            None,
        ),
        "data-independent" => {
            let lambda_min_pop = require_f64(cfg, "lambda_min_pop")?;
            let lambda_max_pop = require_f64(cfg, "lambda_max_pop")?;
            let nc = change_of_norm_factors(
                lambda_min_pop,
                lambda_max_pop,
                lambda_reg,
                dataset.len(),
                inputs.table.dim(),
                delta,
                ck2,
            )?;
            (
                Envelopes::data_independent(beta_n, nc.zeta_min, bound_b, eta)?,
                Some(nc),
            )
        }
        other => {
            return Err(Error::validation(format!(
                "unknown certificate mode {other:?} (expected data-dependent or data-independent)"
            )))
        }
    };

    // Slater slack and multiplier bound for the first constraint; with more
    // constraints the per-coordinate versions come from the library, the
    // report carries the leading one.
    let slater = slater_slack(
        inputs.table.num_prompts(),
        inputs.table.num_actions(),
        problem.constraint_rewards(0),
        problem.prompt_dist(),
        j_min[0],
        beta_n,
        bundle.min_eig,
    )?;
    let mut strong_convexity = None;
    let multiplier = if slater.feasible {
        let j_hat_tilde = primal_objective(
            &slater.greedy_policy,
            problem.reference(),
            problem.prompt_dist(),
            problem.target_rewards(),
            eta,
            Divergence::Kl,
        )?;
        let numerator = bound_b + beta_n / bundle.min_eig.sqrt() - j_hat_tilde;
        if numerator >= 0.0 {
            // The curvature refinement needs the modulus over the slack
            // radius it refines; fall back to the projection radius when
            // the slack radius degenerates to zero.
            let slack_radius = numerator / slater.rho_hat;
            let grid_radius = if slack_radius > 0.0 { slack_radius } else { radius };
            let sc = problem.strong_convexity_modulus(grid_radius, modulus_grid)?;
            strong_convexity = Some((sc.modulus, modulus_grid, sc.degenerate));
            let ghat_zero = problem.eval(&vec![0.0; m_constraints])?.gradient[0];
            Some(multiplier_bound_data_driven(
                bound_b,
                j_hat_tilde,
                &slater,
                beta_n,
                bundle.min_eig,
                ghat_zero,
                envelopes.gradient(0.0),
                sc.modulus,
            )?)
        } else {
            None
        }
    } else {
        eprintln!(
            "warning: estimated Slater slack {} is not positive; multiplier bound omitted",
            io::fmt_float(slater.rho_hat)
        );
        None
    };

    // The envelopes take ||lambda||_1, which over the box [0, R]^m peaks at
    // m R; the averaging term pays ||lambda_0 - lambda*||_2 <= sqrt(m) R.
    // Both reduce to R itself for a single constraint.
    let l1_radius = radius * m_constraints as f64;
    let l2_radius = radius * (m_constraints as f64).sqrt();
    let envelope_value_at_radius = envelopes.value(l1_radius);
    let envelope_gradient_at_radius = envelopes.gradient(l1_radius);
    let uniform_value = envelopes.uniform_value(l1_radius, net_points)?;
    let uniform_gradient = envelopes.uniform_gradient(l1_radius, net_points)?;
    let bounds = solution_bounds(
        envelope_value_at_radius,
        envelope_gradient_at_radius,
        bound_b,
        eta,
        l2_radius,
        iterations,
    )?;

    let report = CertificateReport {
        delta,
        confidence_c,
        ck2,
        lambda_reg,
        sample_size: dataset.len(),
        dim: inputs.table.dim(),
        bound_b,
        eta,
        beta_n,
        min_eig_sigma_reg: bundle.min_eig,
        mode_label: envelopes.mode.label().to_string(),
        probability_budget: envelopes.mode.probability_budget().to_string(),
        norm_change,
        slater: Some(slater),
        multiplier,
        strong_convexity,
        radius,
        iterations,
        envelope_value_at_radius,
        envelope_gradient_at_radius,
        uniform_value: Some(uniform_value),
        uniform_gradient: Some(uniform_gradient),
        bounds: Some(bounds),
    };

    let manifest_name = "certify_manifest.kv";
    let certificate_name = cfg.string_or("certificate", "certificate.kv");
    io::write_certificate(&ctx.resolve(&certificate_name), manifest_name, &report)?;

    let mut m = manifest_base("certify", cfg);
    m.set("delta", io::fmt_float(delta));
    m.set("confidence_c", io::fmt_float(confidence_c));
    m.set("ck2", io::fmt_float(ck2));
    m.set("lambda_reg", io::fmt_float(lambda_reg));
    m.set("eta", io::fmt_float(eta));
    m.set("radius", io::fmt_float(radius));
    m.set("iterations", iterations.to_string());
    m.set("net_points", net_points.to_string());
    m.set("modulus_grid", modulus_grid.to_string());
    m.set("mode", mode);
    m.set("j_min", join_floats(&j_min));
    m.set("bound_b", io::fmt_float(bound_b));
    m.set("certificate", certificate_name.clone());
    m.set("probability_budget", report.probability_budget.clone());
    let manifest_path = ctx.resolve(manifest_name);
    io::write_key_values(&manifest_path, manifest_name, m.pairs())?;
    println!(
        "certify: beta_n = {}, bound_dual_gap = {}, bound_violation = {} -> {}",
        io::fmt_float(beta_n),
        io::fmt_float(bounds.dual_gap),
        io::fmt_float(bounds.violation),
        manifest_path.display()
    );
    Ok(())
}

// --- sweep ---------------------------------------------------------------------------

fn cmd_sweep(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let base = SyntheticConfig {
        seed: cfg.u64_or("seed", 0)?,
        num_prompts: cfg.usize_or("num_prompts", 100)?,
        num_actions: cfg.usize_or("num_actions", 10)?,
        dim: cfg.usize_or("dim", 8)?,
        mixing_weight: cfg.f64_or("w", 0.5)?,
        reference_temperature: cfg.f64_or("eta0", 3.5)?,
        n_max: cfg.usize_or("n_max", 3000)?,
        n_step: cfg.usize_or("n_step", 300)?,
        frac: cfg.f64_or("frac", 0.7)?,
        lambda_hi: cfg.f64_or("lambda_hi", 5.0)?,
        calibration_samples: cfg.usize_or("calibration_samples", 10_000)?,
    };
    let sweep_cfg = SweepConfig {
        base,
        w_values: cfg.f64_list("w_values")?.unwrap_or_else(|| vec![0.3, 0.6, 0.9]),
        num_seeds: cfg.u64_or("seeds", 5)?,
        eta: cfg.f64_or("eta", 0.05)?,
        lambda_reg: cfg.f64_or("lambda_reg", 0.002)?,
        delta: cfg.f64_or("delta", 0.05)?,
        iterations: cfg.usize_or("iterations", 1000)?,
        modulus_grid: cfg.usize_or("modulus_grid", 64)?,
    };
    let report = synthetic::run_sweep(&sweep_cfg)?;
    let summary = synthetic::summarize(&report);

    let manifest_name = "sweep_manifest.kv";
    let sweep_name = cfg.string_or("sweep_csv", "sweep.csv");
    let summary_name = cfg.string_or("summary_csv", "sweep_summary.csv");
    io::write_sweep(&ctx.resolve(&sweep_name), manifest_name, &report)?;
    io::write_sweep_summary(&ctx.resolve(&summary_name), manifest_name, &summary)?;

    let mut m = manifest_base("sweep", cfg);
    m.set("seed", sweep_cfg.base.seed.to_string());
    m.set("num_prompts", sweep_cfg.base.num_prompts.to_string());
    m.set("num_actions", sweep_cfg.base.num_actions.to_string());
    m.set("dim", sweep_cfg.base.dim.to_string());
    m.set("eta0", io::fmt_float(sweep_cfg.base.reference_temperature));
    m.set("n_max", sweep_cfg.base.n_max.to_string());
    m.set("n_step", sweep_cfg.base.n_step.to_string());
    m.set("frac", io::fmt_float(sweep_cfg.base.frac));
    m.set("lambda_hi", io::fmt_float(sweep_cfg.base.lambda_hi));
    m.set("w_values", join_floats(&sweep_cfg.w_values));
    m.set("seeds", sweep_cfg.num_seeds.to_string());
    m.set("eta", io::fmt_float(sweep_cfg.eta));
    m.set("lambda_reg", io::fmt_float(sweep_cfg.lambda_reg));
    m.set("delta", io::fmt_float(sweep_cfg.delta));
    m.set("iterations", sweep_cfg.iterations.to_string());
    m.set("modulus_grid", sweep_cfg.modulus_grid.to_string());
    m.set("sweep_csv", sweep_name.clone());
    m.set("summary_csv", summary_name);
    if let Some(row) = report.rows.first() {
        m.set("probability_budget", row.probability_budget.clone());
    }
    let manifest_path = ctx.resolve(manifest_name);
    io::write_key_values(&manifest_path, manifest_name, m.pairs())?;
    println!(
        "sweep: {} cells ({} weights x {} seeds x {} sizes) -> {}",
        report.rows.len(),
        sweep_cfg.w_values.len(),
        sweep_cfg.num_seeds,
        sweep_cfg.base.n_grid().len(),
        manifest_path.display()
    );
    Ok(())
}

// --- evaluate ----------------------------------------------------------------------------

fn cmd_evaluate(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let eta = cfg.f64_or("eta", 0.05)?;
    let j_min = require_f64_list(cfg, "j_min")?;
    let lambda_bar = require_f64_list(cfg, "lambda_bar")?;
    let inputs = load_inputs(ctx, "models", "models.csv")?;
    let true_models_name = cfg.string_or("true_models", "true_models.csv");
    let true_models = io::read_models(&ctx.resolve(&true_models_name))?;
    if true_models.len() != inputs.models.len() {
        return Err(Error::validation(format!(
            "{} true models but {} estimated models",
            true_models.len(),
            inputs.models.len()
        )));
    }
    let prompt_dist = uniform_prompt_dist(inputs.table.num_prompts());
    let truth = DualProblem::from_models(
        &inputs.table,
        inputs.reference.clone(),
        prompt_dist.clone(),
        &true_models,
        eta,
        j_min.clone(),
    )?;
    let estimated = DualProblem::from_models(
        &inputs.table,
        inputs.reference.clone(),
        prompt_dist,
        &inputs.models,
        eta,
        j_min.clone(),
    )?;
    let lambda_star = match cfg.f64_list("lambda_star")? {
        Some(v) => v,
        None if truth.num_constraints() == 1 => {
            let radius = require_f64(cfg, "radius")?;
            vec![synthetic::oracle_lambda_star(&truth, radius)?.0]
        }
        None => {
            return Err(Error::validation(
                "lambda_star must be provided for multi-constraint evaluation",
            ))
        }
    };
    let metrics = solver::evaluate_solution(&truth, &estimated, &lambda_bar, &lambda_star)?;

    let manifest_name = "evaluate_manifest.kv";
    let evaluation_name = cfg.string_or("evaluation", "evaluation.kv");
    let mut report = KeyValues::new("evaluation");
    report.set("lambda_bar", join_floats(&metrics.lambda_bar));
    report.set("lambda_star", join_floats(&metrics.lambda_star));
    report.set("dual_gap", io::fmt_float(metrics.dual_gap));
    report.set("violation", join_floats(&metrics.violation));
    report.set("violation_signed", join_floats(&metrics.violation_signed));
    report.set("primal_gap", io::fmt_float(metrics.primal_gap));
    report.set("deployed_violation", join_floats(&metrics.deployed_violation));
    report.set(
        "deployed_violation_signed",
        join_floats(&metrics.deployed_violation_signed),
    );
    report.set("deployed_primal_gap", io::fmt_float(metrics.deployed_primal_gap));
    io::write_key_values(&ctx.resolve(&evaluation_name), manifest_name, report.pairs())?;

    let mut m = manifest_base("evaluate", cfg);
    m.set("eta", io::fmt_float(eta));
    m.set("j_min", join_floats(&j_min));
    m.set("lambda_bar", join_floats(&lambda_bar));
    m.set("lambda_star", join_floats(&lambda_star));
    m.set("true_models", true_models_name);
    m.set("evaluation", evaluation_name);
    let manifest_path = ctx.resolve(manifest_name);
    io::write_key_values(&manifest_path, manifest_name, m.pairs())?;
    println!(
        "evaluate: deployed violation = [{}], deployed primal gap = {} -> {}",
        join_floats(&metrics.deployed_violation),
        io::fmt_float(metrics.deployed_primal_gap),
        manifest_path.display()
    );
    Ok(())
}

// --- run dispatch ----------------------------------------------------------------------------

fn cmd_run(ctx: &Ctx) -> Result<()> {
    let command = ctx.cfg.require("command")?.to_string();
    if command == "run" {
        return Err(Error::validation("run cannot dispatch to itself"));
    }
    dispatch(&command, ctx)
}
