#!/usr/bin/env python3
"""End-to-end smoke test for the dualign_py extension module.

Builds the extension (cargo build -p dualign-py --features extension-module),
imports it from a temp directory, and walks the full pipeline: generate a
synthetic instance, calibrate the constraint threshold, sample preference
data, fit reward models, solve the estimated dual, and cross-check the
solver against a dense grid plus the closed-form certificate helpers.

Run from anywhere:  python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]

passed = 0


def check(name: str, cond: bool, detail: str = "") -> None:
    global passed
    if not cond:
        print(f"FAIL {name}" + (f"  ({detail})" if detail else ""))
        sys.exit(1)
    passed += 1
    print(f"PASS {name}" + (f"  ({detail})" if detail else ""))


def build_and_import():
    subprocess.run(
        ["cargo", "build", "-p", "dualign-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "debug" / "libdualign_py.so"
    if not built.exists():  # e.g. macOS
        built = ROOT / "target" / "debug" / "libdualign_py.dylib"
    stage = Path(tempfile.mkdtemp(prefix="dualign_py_"))
    shutil.copy(built, stage / "dualign_py.so")
    sys.path.insert(0, str(stage))
    import dualign_py

    return dualign_py


def main() -> None:
    m = build_and_import()
    check("import", hasattr(m, "generate"))

    # --- instance generation -------------------------------------------
    inst = m.generate(seed=5, num_prompts=6, num_actions=4, dim=3,
                      reference_temperature=1.0)
    check("instance shape",
          inst.num_prompts == 6 and inst.num_actions == 4 and inst.dim == 3)
    for theta in (inst.theta_target, inst.theta_constraint):
        norm = math.sqrt(sum(t * t for t in theta))
        check("oracle parameter on the unit sphere", abs(norm - 1.0) < 1e-12,
              f"norm {norm:.12f}")
    row_err = max(abs(sum(row) - 1.0) for row in inst.reference)
    check("reference rows normalized", row_err < 1e-12, f"max err {row_err:.2e}")
    check("prompt distribution normalized",
          abs(sum(inst.prompt_dist) - 1.0) < 1e-12)
    r2 = inst.constraint_rewards()
    check("rewards bounded by 1", max(abs(v) for v in r2) <= 1.0 + 1e-12)

    # --- threshold calibration ------------------------------------------
    eta = 0.2
    cal = inst.calibrate(eta)
    check("calibration between anchors",
          cal["e_zero"] - 1e-12 <= cal["j_min"] <= cal["e_hi"] + 1e-12,
          f'j_min {cal["j_min"]:.4f} in [{cal["e_zero"]:.4f}, {cal["e_hi"]:.4f}]')
    cal_mc = inst.calibrate(eta, samples=20000)
    check("sampled calibration close to exact",
          abs(cal_mc["j_min"] - cal["j_min"]) < 0.05,
          f'|Δ| = {abs(cal_mc["j_min"] - cal["j_min"]):.4f}')

    # --- preference sampling and MLE -------------------------------------
    n = 2000
    data = inst.sample(n, seed=9)
    check("dataset size", len(data) == n and data.num_oracles == 2)
    prompt, first, second, labels = data.records()[0]
    check("record layout",
          prompt < 6 and first < 4 and second < 4 and len(labels) == 2)
    check("dataset prefix", len(data.prefix(100)) == 100)

    fit = inst.fit(data, lambda_reg=0.002, norm_bound=1.0)
    check("newton converged", max(fit.grad_norms) < 1e-8,
          f"max grad norm {max(fit.grad_norms):.2e}")
    beta = fit.confidence_radius(delta=0.05, b=1.0)
    truths = [inst.theta_target, inst.theta_constraint]
    worst = 0.0
    for theta_hat, theta in zip(fit.thetas(), truths):
        diff = [a - b for a, b in zip(theta_hat, theta)]
        worst = max(worst, fit.matrix_norm(diff))
    check("estimates inside the confidence set", worst <= beta,
          f"worst matrix norm {worst:.4f} vs beta {beta:.4f}")

    # --- dual problems: truth vs estimated -------------------------------
    j_min = [cal["j_min"]]
    truth = inst.true_problem(eta, j_min)
    est = inst.estimated_problem(eta, j_min, fit.thetas())
    check("problem metadata",
          truth.num_constraints == 1 and abs(truth.eta - eta) < 1e-15)

    at0 = est.eval([0.0])
    check("dual eval finite",
          math.isfinite(at0["value"]) and math.isfinite(at0["gradient"][0]))
    check("dual curvature nonnegative", at0["hessian"][0][0] >= 0.0)
    row_err = max(abs(sum(row) - 1.0) for row in at0["policy"])
    check("dual policy normalized", row_err < 1e-10)

    # --- solve + dense-grid cross-check ----------------------------------
    radius, iters = 5.0, 400
    trace = est.solve(radius, iters, step="auto")
    lam_grid, val_grid = est.dense_minimum(radius)
    val_bar = est.eval(trace.lambda_bar)["value"]
    gap = val_bar - val_grid
    theory = trace.bound_b**2 * radius**2 / (2.0 * eta * iters)
    check("averaged iterate beats the theory bound",
          -1e-9 <= gap <= theory,
          f"gap {gap:.3e} vs bound {theory:.3e}")
    check("trace bookkeeping",
          len(trace.dual_values()) == iters and len(trace.lambda_path()) == iters)

    fixed = est.solve(radius, iters, step="fixed", alpha=eta / trace.bound_b**2)
    check("fixed step matches auto",
          abs(fixed.lambda_bar[0] - trace.lambda_bar[0]) < 1e-12)
    adapt = est.solve(radius, 2000, step="adaptive")
    gap_adapt = est.eval(adapt.lambda_bar)["value"] - val_grid
    check("adaptive step converges", -1e-9 <= gap_adapt <= theory,
          f"gap {gap_adapt:.3e}")

    # --- deployed-policy metrics ------------------------------------------
    metrics = truth.evaluate_against(est, trace.lambda_bar, [lam_grid])
    check("metrics keys",
          all(math.isfinite(metrics[k]) for k in ("dual_gap", "primal_gap",
                                                  "deployed_primal_gap"))
          and len(metrics["violation"]) == 1)
    check("positive part consistent",
          abs(metrics["deployed_violation"][0]
              - max(0.0, metrics["deployed_violation_signed"][0])) < 1e-15)

    # --- f-divergence tilts ----------------------------------------------
    ref = inst.reference
    rewards = inst.target_rewards()
    kl = m.tilt_policy(ref, rewards, eta, "kl")
    chi = m.tilt_policy(ref, rewards, eta / 2.0, "chi2")
    alpha2 = m.tilt_policy(ref, rewards, eta, 2.0)
    worst = max(
        abs(a - b)
        for ra, rb in zip(chi["policy"], alpha2["policy"])
        for a, b in zip(ra, rb)
    )
    check("alpha=2 at eta equals chi-square at eta/2", worst < 1e-9,
          f"max |Δp| = {worst:.2e}")
    for name, tilted in (("kl", kl), ("chi2", chi)):
        row_err = max(abs(sum(row) - 1.0) for row in tilted["policy"])
        check(f"{name} tilt normalized", row_err < 1e-10)

    obj_ref = m.primal_objective(ref, ref, inst.prompt_dist, rewards, eta, "kl")
    check("zero divergence at the reference",
          abs(obj_ref - m.expected_reward(ref, inst.prompt_dist, rewards)) < 1e-12)
    obj_kl = m.primal_objective(kl["policy"], ref, inst.prompt_dist, rewards,
                                eta, "kl")
    check("kl tilt improves the objective", obj_kl >= obj_ref - 1e-12,
          f"{obj_kl:.6f} >= {obj_ref:.6f}")

    # --- certificate helpers ----------------------------------------------
    check("sigmoid curvature at zero", abs(m.gamma_curvature(0.0) - 0.25) < 1e-15)
    b1 = m.confidence_radius(1000, 3, 0.05, 1.0, 0.002)
    b2 = m.confidence_radius(4000, 3, 0.05, 1.0, 0.002)
    check("confidence radius shrinks with n", b2 < b1,
          f"{b2:.4f} < {b1:.4f}")
    lip = m.lipschitz_constant(trace.bound_b, eta)
    check("gradient smoothness constant", abs(lip - trace.bound_b**2 / eta) < 1e-12)

    env = m.envelopes(beta, fit.min_eig_sigma_reg, trace.bound_b, eta,
                      mode="data-dependent", lambda_=radius)
    check("envelopes positive", env["value"] > 0.0 and env["gradient"] > 0.0,
          f'E_g(R) {env["value"]:.3f}, budget {env["probability_budget"]}')
    bounds = m.solution_bounds(env["value"], env["gradient"], trace.bound_b,
                               eta, radius, iters)
    check("solution bounds positive",
          min(bounds["dual_gap"], bounds["violation"], bounds["primal_gap"]) > 0.0)
    check("certified metrics inside their bounds",
          metrics["dual_gap"] <= bounds["dual_gap"] + 1e-12
          and metrics["violation"][0] <= bounds["violation"] + 1e-12
          and metrics["primal_gap"] <= bounds["primal_gap"] + 1e-12)

    # --- raw-array fitting path --------------------------------------------
    feats = [[[1.0, 0.0], [0.0, 1.0]], [[0.6, 0.8], [-0.6, 0.8]]]
    recs = [(i % 2, 0, 1, [i % 2, (i + 1) % 2]) for i in range(40)]
    raw = m.fit_models(feats, recs, lambda_reg=0.05, norm_bound=1.0)
    check("raw-array fit",
          all(math.isfinite(v) for t in raw.thetas() for v in t)
          and raw.sample_size == 40)

    # --- micro sweep ---------------------------------------------------------
    rows = m.run_sweep(seed=3, num_prompts=3, num_actions=3, dim=2,
                       reference_temperature=0.7, n_max=60, n_step=20,
                       w_values=[0.5], num_seeds=1, eta=0.2,
                       iterations=300, modulus_grid=16)
    check("sweep rows", len(rows) == 3 and [r["n"] for r in rows] == [20, 40, 60])
    contained = all(
        r["certified_violation"] <= r["bound_violation"] + 1e-12
        and r["dual_gap"] <= r["bound_dual_gap"] + 1e-12
        for r in rows
        if r["mle_event"]
    )
    check("sweep certificates contain their metrics", contained)

    # --- error mapping --------------------------------------------------------
    try:
        m.generate(seed=1, dim=0)
        check("validation raises ValueError", False)
    except ValueError:
        check("validation raises ValueError", True)
    try:
        est.solve(radius, iters, step="warp")
        check("bad step rule raises ValueError", False)
    except ValueError:
        check("bad step rule raises ValueError", True)

    print(f"\nall {passed} checks passed")


if __name__ == "__main__":
    main()
