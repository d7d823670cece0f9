"""End-to-end acceptance checks; each test prints one ``[PASS]``/``[FAIL]`` line.

Run alone with ``python3 tests/test_acceptance.py``.
"""

import json
import time

import numpy as np
import pytest

from avghjb import analytic
from avghjb.cli import main
from avghjb.discretize import assemble_policy_generator
from avghjb.sde import SimConfig, estimate_exit_functional, simulate_average_cost
from avghjb.solvers import SolutionPair, restart, run_pia, truncation_sweep, vanishing_discount_sweep
from avghjb.valuedet import Policy, ValueFunction, evaluate_policy, invariant_density
from avghjb.verify import semigroup_drift_test

ALPHAS = [0.5, 0.1, 0.02, 0.004]


def record(log, n, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    log.append(line)
    print(line)
    assert ok, line


def csv_rows(path):
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln and not ln.startswith("#")]
    head = lines[0].split(",")
    return [dict(zip(head, ln.split(","))) for ln in lines[1:]]


def _pia_cli(tmp_path, tag, extra):
    cfg = tmp_path / f"{tag}.cfg.json"
    cfg.write_text(json.dumps(dict({"grid": {"L": 8, "N": 4001}, "controls": [-1, 0, 1],
                                    "tolerances": {"pia_tol": 1e-9}}, **extra)), encoding="utf-8")
    out = tmp_path / f"{tag}.json"
    t0 = time.perf_counter()
    code = main(["pia", "--config", str(cfg), "--out", str(out)])
    elapsed = time.perf_counter() - t0
    return code, json.loads(out.read_text())["result"], elapsed


def test_c01_optimal_value(tmp_path, acceptance_log):
    # the default start is greedy for x^2; the second start has to descend
    runs = [_pia_cli(tmp_path, "default", {}),
            _pia_cli(tmp_path, "w08", {"pia": {"initial_policy": {"type": "w_rho", "rho": 0.8}}})]
    ok = all(code == 0 and r["iterations"] <= 25 and abs(r["rho_final"] - 1 / 3) <= 1e-2 and t <= 10.0
             for code, r, t in runs)
    detail = "; ".join(f"{name}: rho_final={r['rho_final']:.6f} iterations={r['iterations']} time={t:.2f}s "
                       f"verdict={r['verdict']}" for name, (_, r, t) in zip(("default", "from w_0.8"), runs))
    record(acceptance_log, 1, ok, detail)


def test_c02_spurious_family(tmp_path, acceptance_log):
    out = tmp_path / "sweep.csv"
    code = main(["sweep-rho", "--rhos", "1/3,0.40:0.90:0.05", "--out", str(out)])
    rows = csv_rows(out)
    first, rest = rows[0], rows[1:]
    ok_first = abs(float(first["beta_quad"]) - 1 / 3) <= 1e-6 and first["verdict"] == "Compatible"
    ok_rest = len(rest) == 11 and all(
        float(r["beta_quad"]) < float(r["rho"]) - 0.01 and r["verdict"] == "Spurious" for r in rest)
    min_gap = min(float(r["gap"]) for r in rest)
    record(acceptance_log, 2, code == 0 and ok_first and ok_rest,
           f"beta_quad(1/3)={float(first['beta_quad']):.9f} ({first['verdict']}); "
           f"{sum(r['verdict'] == 'Spurious' for r in rest)}/11 spurious, min gap={min_gap:.4f}")


def test_c03_monotone_descent(example, grid, w_policy, v_grid, acceptance_log):
    traces = []
    for rho in (0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95):
        traces.append(run_pia(example, grid, None, w_policy(rho, grid))[1].rhos)
    traces.append(run_pia(example, grid, None, Policy(grid, -np.sign(grid.nodes)))[1].rhos)
    for rho in (1 / 3, 0.6, 0.8):
        pair = SolutionPair(ValueFunction(grid, v_grid(rho, grid)), rho)
        traces.append(restart(example, grid, None, pair).rhos)
    worst = max((b - a for t in traces for a, b in zip(t, t[1:])), default=-np.inf)
    record(acceptance_log, 3, worst <= 1e-10,
           f"{len(traces)} traces, max increase rho_(k+1)-rho_k={worst:.3e}")


def test_c04_vanishing_discount(example, grid, acceptance_log):
    sweep = vanishing_discount_sweep(example, grid, None, ALPHAS)
    F = [f for _, f in sweep.points]
    # F(alpha) is a decreasing function of alpha: it grows as alpha shrinks
    monotone = all(b >= a - 1e-8 for a, b in zip(F, F[1:]))
    err = abs(F[-1] - 1 / 3)
    ext = abs(sweep.extrapolated - 1 / 3)
    record(acceptance_log, 4, monotone and err <= 0.05 and ext <= 2e-2,
           "F=" + ",".join(f"{f:.5f}" for f in F) + f" |F(0.004)-1/3|={err:.4f} extrapolated={sweep.extrapolated:.5f}")


def test_c05_truncation(example, grid, w_policy, acceptance_log):
    radii = [1.0, 2.0, 4.0]
    good = truncation_sweep(example, grid, None, w_policy(1 / 3, grid), 1 / 3, radii)
    bad = truncation_sweep(example, grid, None, w_policy(0.6, grid), 0.6, radii)
    ok = all(abs(r - 1 / 3) <= 1e-2 for _, r in good) and all(r <= 0.46 for _, r in bad)
    record(acceptance_log, 5, ok,
           "w_1/3: " + ",".join(f"{r:.5f}" for _, r in good) + "; w_0.6: " + ",".join(f"{r:.5f}" for _, r in bad))


def test_c06_semigroup(example, grid, w_policy, v_grid, acceptance_log):
    s13 = semigroup_drift_test(example, grid, w_policy(1 / 3, grid), v_grid(1 / 3, grid)).slope
    s06 = semigroup_drift_test(example, grid, w_policy(0.6, grid), v_grid(0.6, grid)).slope
    target = 0.6 - analytic.beta_quad(0.6)
    ok = abs(s13) <= 5e-3 and abs(s06 - target) <= 0.1 * target
    record(acceptance_log, 6, ok, f"slope(1/3)={s13:.2e} slope(0.6)={s06:.5f} target={target:.5f}")


def test_c07_three_way_beta(example, grid, w_policy, acceptance_log):
    bq = analytic.beta_quad(1 / 3)
    _, _, bg, _ = evaluate_policy(example, grid, w_policy(1 / 3, grid))
    t0 = time.perf_counter()
    mc = simulate_average_cost(example, lambda x: analytic.w_rho(1 / 3, x),
                               SimConfig(dt=1e-2, T=500.0, n_paths=400, seed=0))
    elapsed = time.perf_counter() - t0
    band = max(1e-2, 3 * mc.stderr)
    ok = (abs(bq - bg) <= band and abs(bq - mc.mean) <= band and abs(bg - mc.mean) <= band and elapsed <= 60.0)
    record(acceptance_log, 7, ok, f"quad={bq:.6f} grid={bg:.6f} mc={mc.mean:.6f}+-{mc.stderr:.1e} "
                                  f"band={band:.1e} mc_time={elapsed:.1f}s")


def test_c08_stochastic_representation(example, grid, w_policy, acceptance_log):
    _, _, beta, V = evaluate_policy(example, grid, w_policy(1 / 3, grid))
    cfg = SimConfig(dt=1e-3, T=20.0, n_paths=1500, seed=8)
    est = estimate_exit_functional(example, lambda x: analytic.w_rho(1 / 3, x), 2.0, 1.0, beta, cfg, V=V)
    d = est.identity
    record(acceptance_log, 8, abs(d.mean) <= 3 * d.stderr,
           f"psi+E[V(X_tau)]-V(2)={d.mean:.4f}+-{d.stderr:.4f} censored={est.censored_fraction:.3f}")


def test_c09_analytic_hjb_residual(acceptance_log):
    probes = [-4.0, -2.0, -0.7, -0.25, 0.3, 1.1, 2.5, 5.0]
    worst = 0.0
    for rho in (1 / 3, 0.5, 0.8):
        pts = probes + [analytic.xi(rho) + 0.4]
        worst = max(worst, max(abs(analytic.hjb_residual_fd(rho, x)) for x in pts))
    record(acceptance_log, 9, worst <= 1e-6, f"max |residual| over 27 probes = {worst:.2e}")


def test_c10_density(example, ou, grid, w_policy, acceptance_log):
    psi = invariant_density(assemble_policy_generator(example, grid, w_policy(1 / 3, grid)), grid)
    e1 = np.max(np.abs(psi.values - np.exp(-2 * np.abs(grid.nodes))))
    psi_ou = invariant_density(assemble_policy_generator(ou, grid, Policy.constant(grid, 0.0)), grid)
    x = grid.nodes
    e2 = np.max(np.abs(psi_ou.values - np.exp(-x * x) / np.sqrt(np.pi)))
    record(acceptance_log, 10, e1 <= 5e-3 and e2 <= 5e-3, f"example sup err={e1:.2e} OU sup err={e2:.2e}")


def test_c11_reproducibility(tmp_path, acceptance_log):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sim": {"T": 20, "n_paths": 16, "seed": 7}}), encoding="utf-8")
    runs = {
        "pia": (["pia", "--config", str(cfg)], ".json"),
        "sweep-rho": (["sweep-rho", "--config", str(cfg)], ".csv"),
        "verify": (["verify", "--config", str(cfg), "--analytic-rho", "0.6"], ".json"),
        "discount": (["discount", "--config", str(cfg), "--N", "1001"], ".csv"),
        "truncation": (["truncation", "--config", str(cfg), "--N", "1001"], ".csv"),
        "simulate": (["simulate", "--config", str(cfg)], ".json"),
    }
    same = []
    for name, (argv, ext) in runs.items():
        blobs = []
        for k in range(2):
            out = tmp_path / f"{name}{k}{ext}"
            main(argv + ["--out", str(out)])
            files = sorted(tmp_path.glob(f"{name}{k}.*"))
            blobs.append([f.read_bytes() for f in files])
        same.append(blobs[0] == blobs[1] and len(blobs[0]) > 0)
    record(acceptance_log, 11, all(same), f"{sum(same)}/{len(same)} commands byte-identical across reruns")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
