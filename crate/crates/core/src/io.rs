//! File formats: CSV for tabular data (features, preferences, policies,
//! reward models, solver traces, sweep reports) and a line-oriented
//! `key = value` format for configs, manifests, and certificate reports.
//!
//! Conventions shared by every format:
//! - Lines starting with `#` are comments; blank lines are ignored.
//! - Every file this crate emits opens with `# manifest: <path>`, tying the
//!   artifact to the run manifest that records how to reproduce it.
//! - Floats are written with 17 significant digits (`{:.16e}`), which
//!   round-trips every finite f64 bit-exactly.
//! - Writers are byte-deterministic: same inputs, same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;

use crate::certificates::CertificateReport;
use crate::error::{Error, Result};
use crate::solver::SolverTrace;
use crate::synthetic::{SummaryRow, SweepReport};
use crate::types::{FeatureTable, Policy, PreferenceDataset, PreferenceRecord, RewardModel};

/// 17-significant-digit float formatting; parses back to the same bits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn manifest_header(manifest_ref: &str) -> String {
    format!("# manifest: {manifest_ref}\n")
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn content_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let content =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .collect())
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path_str(path),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(field: &str, path: &Path, line: usize, name: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| parse_error(path, line, format!("{name}: not a number: {field:?}")))
}

fn parse_usize(field: &str, path: &Path, line: usize, name: &str) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| parse_error(path, line, format!("{name}: not an index: {field:?}")))
}

/// Splits the header row and checks it against the expected column names.
fn expect_header(path: &Path, lines: &[(usize, String)], expected: &[String]) -> Result<()> {
    let Some((line_no, header)) = lines.first() else {
        return Err(parse_error(path, 1, "empty file (no header row)"));
    };
    let got: Vec<&str> = header.split(',').map(str::trim).collect();
    if got != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(parse_error(
            path,
            *line_no,
            format!("header {header:?} does not match expected {:?}", expected.join(",")),
        ));
    }
    Ok(())
}

// --- feature tables -------------------------------------------------------

fn feature_header(dim: usize) -> Vec<String> {
    let mut cols = vec!["prompt".to_string(), "action".to_string()];
    cols.extend((0..dim).map(|j| format!("f{j}")));
    cols
}

/// Writes `prompt,action,f0..f{d-1}`, one row per (prompt, action) pair in
/// ascending order.
pub fn write_features(path: &Path, manifest_ref: &str, table: &FeatureTable) -> Result<()> {
    let mut out = manifest_header(manifest_ref);
    out.push_str(&feature_header(table.dim()).join(","));
    out.push('\n');
    for x in 0..table.num_prompts() {
        for a in 0..table.num_actions() {
            let _ = write!(out, "{x},{a}");
            for v in table.feature(x, a).iter() {
                let _ = write!(out, ",{}", fmt_float(*v));
            }
            out.push('\n');
        }
    }
    write_file(path, &out)
}

/// Reads a feature file. Rows may arrive in any order but must cover every
/// (prompt, action) pair exactly once. Vectors with norm above 1 are scaled
/// back to unit norm when `renormalize` is set (the count of affected rows
/// is returned so the caller can warn); otherwise they surface as the
/// table's own validation error.
pub fn read_features(path: &Path, renormalize: bool) -> Result<(FeatureTable, usize)> {
    let lines = content_lines(path)?;
    let Some((header_line, header)) = lines.first() else {
        return Err(parse_error(path, 1, "empty file (no header row)"));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "prompt" || cols[1] != "action" {
        return Err(parse_error(
            path,
            *header_line,
            "feature header must be prompt,action,f0,...",
        ));
    }
    let dim = cols.len() - 2;
    let expected = feature_header(dim);
    expect_header(path, &lines, &expected)?;

    let mut rows: Vec<(usize, usize, Vec<f64>, usize)> = Vec::new();
    let mut max_prompt = 0usize;
    let mut max_action = 0usize;
    for (line_no, line) in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(parse_error(
                path,
                *line_no,
                format!("expected {} fields, got {}", dim + 2, fields.len()),
            ));
        }
        let prompt = parse_usize(fields[0], path, *line_no, "prompt")?;
        let action = parse_usize(fields[1], path, *line_no, "action")?;
        let mut phi = Vec::with_capacity(dim);
        for (j, field) in fields[2..].iter().enumerate() {
            phi.push(parse_f64(field, path, *line_no, &format!("f{j}"))?);
        }
        max_prompt = max_prompt.max(prompt);
        max_action = max_action.max(action);
        rows.push((prompt, action, phi, *line_no));
    }
    if rows.is_empty() {
        return Err(parse_error(path, *header_line, "no feature rows"));
    }
    let num_prompts = max_prompt + 1;
    let num_actions = max_action + 1;
    let pairs = num_prompts * num_actions;
    let mut data = vec![None; pairs];
    for (prompt, action, phi, line_no) in rows {
        let slot = &mut data[prompt * num_actions + action];
        if slot.is_some() {
            return Err(parse_error(
                path,
                line_no,
                format!("duplicate row for prompt {prompt} action {action}"),
            ));
        }
        *slot = Some(phi);
    }
    let mut flat = Vec::with_capacity(pairs * dim);
    let mut renormalized = 0usize;
    for (idx, slot) in data.into_iter().enumerate() {
        let Some(mut phi) = slot else {
            return Err(Error::validation(format!(
                "feature file {} is missing prompt {} action {}",
                path.display(),
                idx / num_actions,
                idx % num_actions
            )));
        };
        if renormalize {
            let norm = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 {
                for v in &mut phi {
                    *v /= norm;
                }
                renormalized += 1;
            }
        }
        flat.extend_from_slice(&phi);
    }
    let table = FeatureTable::new(num_prompts, num_actions, dim, flat)?;
    Ok((table, renormalized))
}

// --- preference datasets ----------------------------------------------------

fn preference_header(num_oracles: usize) -> Vec<String> {
    let mut cols = vec![
        "prompt".to_string(),
        "action1".to_string(),
        "action2".to_string(),
    ];
    cols.extend((1..=num_oracles).map(|k| format!("y{k}")));
    cols
}

/// Writes `prompt,action1,action2,y1..y{K}` with one row per comparison.
pub fn write_preferences(
    path: &Path,
    manifest_ref: &str,
    dataset: &PreferenceDataset,
) -> Result<()> {
    let mut out = manifest_header(manifest_ref);
    out.push_str(&preference_header(dataset.num_oracles).join(","));
    out.push('\n');
    for rec in &dataset.records {
        let _ = write!(out, "{},{},{}", rec.prompt, rec.first, rec.second);
        for y in &rec.labels {
            let _ = write!(out, ",{y}");
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// Reads a preference file; the label column count fixes the oracle count.
pub fn read_preferences(path: &Path) -> Result<PreferenceDataset> {
    let lines = content_lines(path)?;
    let Some((header_line, header)) = lines.first() else {
        return Err(parse_error(path, 1, "empty file (no header row)"));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 5 || cols[0] != "prompt" || cols[1] != "action1" || cols[2] != "action2" {
        return Err(parse_error(
            path,
            *header_line,
            "preference header must be prompt,action1,action2,y1,... with at least two oracles",
        ));
    }
    let num_oracles = cols.len() - 3;
    expect_header(path, &lines, &preference_header(num_oracles))?;

    let mut records = Vec::with_capacity(lines.len() - 1);
    for (line_no, line) in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != num_oracles + 3 {
            return Err(parse_error(
                path,
                *line_no,
                format!("expected {} fields, got {}", num_oracles + 3, fields.len()),
            ));
        }
        let prompt = parse_usize(fields[0], path, *line_no, "prompt")?;
        let first = parse_usize(fields[1], path, *line_no, "action1")?;
        let second = parse_usize(fields[2], path, *line_no, "action2")?;
        let mut labels = Vec::with_capacity(num_oracles);
        for (k, field) in fields[3..].iter().enumerate() {
            let y = field.trim();
            let y = match y {
                "0" => 0u8,
                "1" => 1u8,
                _ => {
                    return Err(parse_error(
                        path,
                        *line_no,
                        format!("y{}: labels must be 0 or 1, got {y:?}", k + 1),
                    ))
                }
            };
            labels.push(y);
        }
        records.push(PreferenceRecord {
            prompt,
            first,
            second,
            labels,
        });
    }
    PreferenceDataset::new(num_oracles, records)
}

// --- policies ---------------------------------------------------------------

const POLICY_HEADER: [&str; 3] = ["prompt", "action", "prob"];

/// Writes `prompt,action,prob` rows in ascending (prompt, action) order.
pub fn write_policy(path: &Path, manifest_ref: &str, policy: &Policy) -> Result<()> {
    let mut out = manifest_header(manifest_ref);
    out.push_str(&POLICY_HEADER.join(","));
    out.push('\n');
    for x in 0..policy.num_prompts() {
        for a in 0..policy.num_actions() {
            let _ = writeln!(out, "{x},{a},{}", fmt_float(policy.prob(x, a)));
        }
    }
    write_file(path, &out)
}

/// Reads a policy file covering every (prompt, action) pair exactly once;
/// per-prompt normalization is enforced by the policy constructor, which
/// names the offending prompt.
pub fn read_policy(path: &Path) -> Result<Policy> {
    let lines = content_lines(path)?;
    expect_header(
        path,
        &lines,
        &POLICY_HEADER.map(String::from),
    )?;
    let mut rows = Vec::new();
    let mut max_prompt = 0usize;
    let mut max_action = 0usize;
    for (line_no, line) in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_error(
                path,
                *line_no,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let prompt = parse_usize(fields[0], path, *line_no, "prompt")?;
        let action = parse_usize(fields[1], path, *line_no, "action")?;
        let prob = parse_f64(fields[2], path, *line_no, "prob")?;
        max_prompt = max_prompt.max(prompt);
        max_action = max_action.max(action);
        rows.push((prompt, action, prob, *line_no));
    }
    if rows.is_empty() {
        return Err(Error::validation(format!(
            "policy file {} has no rows",
            path.display()
        )));
    }
    let num_prompts = max_prompt + 1;
    let num_actions = max_action + 1;
    let mut probs = vec![None; num_prompts * num_actions];
    for (prompt, action, prob, line_no) in rows {
        let slot = &mut probs[prompt * num_actions + action];
        if slot.is_some() {
            return Err(parse_error(
                path,
                line_no,
                format!("duplicate row for prompt {prompt} action {action}"),
            ));
        }
        *slot = Some(prob);
    }
    let mut flat = Vec::with_capacity(probs.len());
    for (idx, slot) in probs.into_iter().enumerate() {
        let Some(p) = slot else {
            return Err(Error::validation(format!(
                "policy file {} is missing prompt {} action {}",
                path.display(),
                idx / num_actions,
                idx % num_actions
            )));
        };
        flat.push(p);
    }
    Policy::new(num_prompts, num_actions, flat)
}

// --- reward models ------------------------------------------------------------

fn model_header(dim: usize) -> Vec<String> {
    let mut cols = vec!["oracle".to_string()];
    cols.extend((0..dim).map(|j| format!("t{j}")));
    cols
}

/// Writes `oracle,t0..t{d-1}` with one row per reward model (oracle 0 is
/// the target, 1.. are constraints).
pub fn write_models(path: &Path, manifest_ref: &str, models: &[RewardModel]) -> Result<()> {
    let Some(first) = models.first() else {
        return Err(Error::validation("no reward models to write"));
    };
    let dim = first.theta.len();
    let mut out = manifest_header(manifest_ref);
    out.push_str(&model_header(dim).join(","));
    out.push('\n');
    for (k, model) in models.iter().enumerate() {
        if model.theta.len() != dim {
            return Err(Error::validation(format!(
                "model {k} has dimension {}, expected {dim}",
                model.theta.len()
            )));
        }
        let _ = write!(out, "{k}");
        for v in model.theta.iter() {
            let _ = write!(out, ",{}", fmt_float(*v));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// Reads reward models, requiring oracle indices to cover 0..K-1.
pub fn read_models(path: &Path) -> Result<Vec<RewardModel>> {
    let lines = content_lines(path)?;
    let Some((header_line, header)) = lines.first() else {
        return Err(parse_error(path, 1, "empty file (no header row)"));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "oracle" {
        return Err(parse_error(
            path,
            *header_line,
            "model header must be oracle,t0,...",
        ));
    }
    let dim = cols.len() - 1;
    expect_header(path, &lines, &model_header(dim))?;
    let mut thetas: Vec<Option<DVector<f64>>> = Vec::new();
    for (line_no, line) in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(parse_error(
                path,
                *line_no,
                format!("expected {} fields, got {}", dim + 1, fields.len()),
            ));
        }
        let oracle = parse_usize(fields[0], path, *line_no, "oracle")?;
        let mut theta = Vec::with_capacity(dim);
        for (j, field) in fields[1..].iter().enumerate() {
            theta.push(parse_f64(field, path, *line_no, &format!("t{j}"))?);
        }
        if thetas.len() <= oracle {
            thetas.resize(oracle + 1, None);
        }
        if thetas[oracle].is_some() {
            return Err(parse_error(
                path,
                *line_no,
                format!("duplicate row for oracle {oracle}"),
            ));
        }
        thetas[oracle] = Some(DVector::from_vec(theta));
    }
    if thetas.is_empty() {
        return Err(Error::validation(format!(
            "model file {} has no rows",
            path.display()
        )));
    }
    thetas
        .into_iter()
        .enumerate()
        .map(|(k, slot)| {
            slot.map(RewardModel::new).ok_or_else(|| {
                Error::validation(format!(
                    "model file {} is missing oracle {k}",
                    path.display()
                ))
            })
        })
        .collect()
}

// --- solver traces --------------------------------------------------------------

/// Writes the per-iteration trace: `t,lambda1..,grad1..,alpha,dual_value`.
pub fn write_trace(path: &Path, manifest_ref: &str, trace: &SolverTrace) -> Result<()> {
    let m = trace.lambda_bar.len();
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=m).map(|k| format!("lambda{k}")));
    cols.extend((1..=m).map(|k| format!("grad{k}")));
    cols.push("alpha".to_string());
    cols.push("dual_value".to_string());
    let mut out = manifest_header(manifest_ref);
    out.push_str(&cols.join(","));
    out.push('\n');
    for rec in &trace.records {
        let _ = write!(out, "{}", rec.t);
        for v in &rec.lambda {
            let _ = write!(out, ",{}", fmt_float(*v));
        }
        for v in &rec.gradient {
            let _ = write!(out, ",{}", fmt_float(*v));
        }
        let _ = writeln!(out, ",{},{}", fmt_float(rec.alpha), fmt_float(rec.dual_value));
    }
    write_file(path, &out)
}

// --- sweep reports ----------------------------------------------------------------

const SWEEP_HEADER: &str = "w,seed,n,suboptimality,violation,violation_positive,lambda_bar,\
lambda_star,j_min,initial_violation,radius,bound_b_hat,bound_b_cert,beta_n,mle_event,\
theta_err_target,theta_err_constraint,dual_gap,certified_violation,\
certified_violation_signed,certified_primal_gap,bound_dual_gap,\
bound_violation,bound_primal_gap,probability_budget";

/// One CSV row per (w, seed, N) cell. `suboptimality` and `violation` are
/// the deployed policy's signed metrics (violation is negative when the
/// constraint is satisfied with slack); `violation_positive` clamps the
/// latter at zero, and the certified policy's metrics plus the
/// high-probability bounds follow.
pub fn write_sweep(path: &Path, manifest_ref: &str, report: &SweepReport) -> Result<()> {
    let mut out = manifest_header(manifest_ref);
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for r in &report.rows {
        let fields = [
            fmt_float(r.w),
            r.seed.to_string(),
            r.n.to_string(),
            fmt_float(r.deployed_primal_gap),
            fmt_float(r.deployed_violation_signed),
            fmt_float(r.deployed_violation),
            fmt_float(r.lambda_bar),
            fmt_float(r.lambda_star),
            fmt_float(r.j_min),
            fmt_float(r.initial_violation),
            fmt_float(r.radius),
            fmt_float(r.bound_b_hat),
            fmt_float(r.bound_b_cert),
            fmt_float(r.beta_n),
            u8::from(r.mle_event).to_string(),
            fmt_float(r.theta_err_target),
            fmt_float(r.theta_err_constraint),
            fmt_float(r.dual_gap),
            fmt_float(r.violation),
            fmt_float(r.violation_signed),
            fmt_float(r.primal_gap),
            fmt_float(r.bound_dual_gap),
            fmt_float(r.bound_violation),
            fmt_float(r.bound_primal_gap),
            r.probability_budget.clone(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

/// Plot-ready long format: one row per (w, N, metric) with mean and
/// standard error across seeds.
pub fn write_sweep_summary(
    path: &Path,
    manifest_ref: &str,
    summary: &[SummaryRow],
) -> Result<()> {
    let mut out = manifest_header(manifest_ref);
    out.push_str("w,n,seeds,metric,mean,se\n");
    for row in summary {
        let metrics = [
            ("violation", row.mean_violation, row.se_violation),
            ("suboptimality", row.mean_suboptimality, row.se_suboptimality),
            (
                "theta_err_constraint",
                row.mean_theta_err_constraint,
                row.se_theta_err_constraint,
            ),
            ("initial_violation", row.mean_initial_violation, 0.0),
        ];
        for (name, mean, se) in metrics {
            let _ = writeln!(
                out,
                "{},{},{},{name},{},{}",
                fmt_float(row.w),
                row.n,
                row.seeds,
                fmt_float(mean),
                fmt_float(se)
            );
        }
    }
    write_file(path, &out)
}

// --- key = value files ----------------------------------------------------------

/// Ordered `key = value` pairs read from or destined for a config,
/// manifest, or report file. Duplicate keys in a file are rejected;
/// [`KeyValues::set`] replaces in place so merged configs stay ordered.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    /// Where the pairs came from, for error messages ("cli override",
    /// a file path, ...).
    pub source: String,
    pairs: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new(source: impl Into<String>) -> Self {
        KeyValues {
            source: source.into(),
            pairs: Vec::new(),
        }
    }

    /// Parses a `key = value` file (whitespace around either side is
    /// trimmed; values may contain `=`).
    pub fn read(path: &Path) -> Result<Self> {
        let lines = content_lines(path)?;
        let mut kv = KeyValues::new(path_str(path));
        for (line_no, line) in lines {
            let Some((key, value)) = line.split_once('=') else {
                return Err(parse_error(
                    path,
                    line_no,
                    format!("expected key = value, got {line:?}"),
                ));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(parse_error(path, line_no, "empty key"));
            }
            if kv.get(key).is_some() {
                return Err(parse_error(path, line_no, format!("duplicate key {key:?}")));
            }
            kv.pairs.push((key.to_string(), value.to_string()));
        }
        Ok(kv)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Replaces the value if the key exists, appends otherwise.
    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.pairs.iter_mut().find(|(k, _)| *k == key) {
            Some(pair) => pair.1 = value,
            None => self.pairs.push((key, value)),
        }
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| {
            Error::validation(format!("{}: missing required key {key:?}", self.source))
        })
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    fn typed<T: std::str::FromStr>(&self, key: &str, value: &str, kind: &str) -> Result<T> {
        value.parse::<T>().map_err(|_| {
            Error::validation(format!(
                "{}: key {key:?} expects {kind}, got {value:?}",
                self.source
            ))
        })
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(v) => self.typed(key, v, "a number"),
            None => Ok(default),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            Some(v) => self.typed(key, v, "a nonnegative integer"),
            None => Ok(default),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            Some(v) => self.typed(key, v, "a nonnegative integer"),
            None => Ok(default),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            Some("true") | Some("1") => Ok(true),
            Some("false") | Some("0") => Ok(false),
            Some(v) => Err(Error::validation(format!(
                "{}: key {key:?} expects true/false, got {v:?}",
                self.source
            ))),
            None => Ok(default),
        }
    }

    pub fn string_or(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    /// Comma-separated float list, e.g. `j_min = 0.5, 0.62`.
    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(raw) = self.get(key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(|field| self.typed(key, field.trim(), "a number"))
            .collect::<Result<Vec<f64>>>()
            .map(Some)
    }
}

/// Writes ordered `key = value` pairs. Keys must not contain `=` or
/// newlines; values must not contain newlines.
pub fn write_key_values(
    path: &Path,
    manifest_ref: &str,
    pairs: &[(String, String)],
) -> Result<()> {
    let mut out = manifest_header(manifest_ref);
    for (key, value) in pairs {
        if key.contains('=') || key.contains('\n') || value.contains('\n') {
            return Err(Error::validation(format!(
                "key/value pair {key:?} cannot be represented in the key = value format"
            )));
        }
        let _ = writeln!(out, "{key} = {value}");
    }
    write_file(path, &out)
}

/// Writes a certificate report in the same `key = value` format.
pub fn write_certificate(
    path: &Path,
    manifest_ref: &str,
    report: &CertificateReport,
) -> Result<()> {
    let mut out = manifest_header(manifest_ref);
    for line in report.lines() {
        out.push_str(&line);
        out.push('\n');
    }
    write_file(path, &out)
}
