"""Command line runner: ``avghjb <command> [--config FILE] [--out FILE] ...``.

Every command reads one JSON config (merged over built-in defaults, then
overridden by flags) and writes either a JSON report or a CSV table.
Floats are written with 17 significant digits and nothing time-dependent
is recorded, so identical inputs give byte-identical files.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 verdict differs from ``--expect``.
"""

from __future__ import annotations

import argparse
import copy
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analytic, sde
from .discretize import build_grid
from .errors import AvgHJBError, ConfigError, NumericalError
from .expr import compile_expr
from .model import BUILTIN_MODELS, ControlSet, DiffusionModel
from .solvers import SolutionPair, improve, run_pia, truncation_sweep, vanishing_discount_sweep
from .valuedet import Policy, ValueFunction, evaluate_policy
from .verify import Verdict, check_compatible

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_EXPECT = 0, 1, 2, 3

logger = logging.getLogger("avghjb")

DEFAULTS = {
    "model": "example",
    "model_params": {},
    "controls": [-1.0, 0.0, 1.0],
    "grid": {"L": 8.0, "N": 4001},
    "tolerances": {
        "pia_tol": 1e-9,
        "gap_tol": 1e-2,
        "residual_tol": 5e-3,
        "internal_residual_tol": 1e-8,
        "sweep_gap_tol": 1e-6,
        "quad_tol": 1e-10,
    },
    "sim": {"dt": 1e-2, "T": 500.0, "n_paths": 400, "seed": 0, "x0": 0.0, "reflect_at": "auto"},
    "pia": {"max_iter": 50, "initial_policy": {"type": "greedy_quadratic"}},
    "sweep_rho": {"rhos": "0.4:0.9:0.05"},
    "verify": {"pair_file": None, "analytic_rho": None, "window": None, "lyapunov_radius": 1.0,
               "semigroup_horizon": 50.0, "semigroup_steps": 1000},
    "discount": {"alphas": [0.5, 0.1, 0.02, 0.004]},
    "truncation": {"radii": [1.0, 2.0, 4.0], "rho_hat": 0.6, "policy": {"type": "w_rho", "rho": 0.6}},
    "simulate": {"quantity": "average_cost", "policy": {"type": "greedy_quadratic"},
                 "r": 1.0, "rho": None, "with_value": True, "bins": {"lo": -4.0, "hi": 4.0, "n": 40}},
}


# ---------------------------------------------------------------- serialisation

def fmt_float(v) -> str:
    return format(float(v), ".17g")


def _json(obj) -> str:
    """Deterministic JSON with 17-digit floats; non-finite floats become null."""
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def render_report(command: str, config: dict, result: dict) -> str:
    return _json({"schema_version": SCHEMA_VERSION, "command": command, "config": config, "result": result}) + "\n"


def render_csv(header: dict, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    for k, v in header.items():
        buf.write(f"# {k}: {_json(v) if not isinstance(v, str) else v}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        cells = [v if isinstance(v, str) else fmt_float(v) for v in row]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------- config

def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        user = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigError("config must be a JSON object")
    return _deep_merge(DEFAULTS, user)


def parse_number(v) -> float:
    """A float, or a constant expression such as ``"1/3"``."""
    if isinstance(v, bool):
        raise ConfigError(f"expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        return float(compile_expr(v, ())())
    raise ConfigError(f"expected a number, got {v!r}")


def parse_list(spec) -> list[float]:
    """Numbers from a JSON list or a comma-separated string.

    String items may be inclusive ranges ``"start:stop:step"``.
    """
    if isinstance(spec, (list, tuple)):
        items = list(spec)
    elif isinstance(spec, str):
        items = [p.strip() for p in spec.split(",") if p.strip()]
    elif isinstance(spec, (int, float)) and not isinstance(spec, bool):
        items = [spec]
    else:
        raise ConfigError(f"malformed list or range {spec!r}")
    vals = []
    for item in items:
        if isinstance(item, str) and ":" in item:
            parts = item.split(":")
            if len(parts) != 3:
                raise ConfigError(f"malformed range {item!r}")
            a, b, s = (parse_number(p) for p in parts)
            if not s > 0 or b < a:
                raise ConfigError(f"malformed range {item!r}")
            n = int(math.floor((b - a) / s + 1e-9)) + 1
            vals.extend(round(a + k * s, 12) for k in range(n))
        else:
            vals.append(parse_number(item))
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"malformed list or range {spec!r}")
    return vals


def make_model(cfg: dict) -> DiffusionModel:
    controls = tuple(parse_number(u) for u in cfg["controls"])
    try:
        cset = ControlSet(controls)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    spec = cfg["model"]
    params = cfg.get("model_params") or {}
    if isinstance(spec, str):
        if spec not in BUILTIN_MODELS:
            raise ConfigError(f"unknown model {spec!r}; choose from {sorted(BUILTIN_MODELS)}")
        try:
            return BUILTIN_MODELS[spec](controls=cset.values, **params)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for model {spec!r}: {exc}") from None
    if isinstance(spec, dict):
        missing = {"drift", "dispersion", "cost"} - set(spec)
        if missing:
            raise ConfigError(f"inline model lacks {sorted(missing)}")
        p = dict(spec.get("params", {}), **params)
        drift = compile_expr(spec["drift"], ("x", "u"), p)
        disp = compile_expr(spec["dispersion"], ("x",), p)
        cost = compile_expr(spec["cost"], ("x", "u"), p)
        return DiffusionModel(spec.get("name", "inline"), drift, disp, cost, cset,
                              description=f"b={drift.source}, sigma={disp.source}, c={cost.source}")
    raise ConfigError("model must be a name or an inline definition")


def make_grid(cfg: dict):
    g = cfg["grid"]
    N = g["N"]
    if isinstance(N, float) and N.is_integer():
        N = int(N)
    return build_grid(parse_number(g["L"]), N)


def policy_callable(model, grid, spec: dict):
    """Continuous-state policy described by ``spec``."""
    kind = spec.get("type") if isinstance(spec, dict) else None
    if kind == "w_rho":
        rho = parse_number(spec["rho"])
        analytic.xi(rho)
        return lambda x: analytic.w_rho(rho, x)
    if kind == "constant":
        u = parse_number(spec["u"])
        return lambda x: np.full(np.shape(x), u)
    if kind == "expr":
        return compile_expr(spec["expr"], ("x",))
    if kind == "greedy_quadratic":
        pol = improve(model, grid, None, grid.nodes ** 2)
        return pol.at
    raise ConfigError(f"unknown policy spec {spec!r}")


def make_policy(model, grid, spec: dict) -> Policy:
    pol = Policy(grid, policy_callable(model, grid, spec)(grid.nodes))
    if not pol.check_members(model.control_set):
        raise ConfigError(f"policy {spec!r} takes values outside the control set {model.control_set.values}")
    return pol


def _tol(cfg, key) -> float:
    return parse_number(cfg["tolerances"][key])


def _check_expect(expect: str | None, verdict: str) -> int:
    if expect is None:
        return EXIT_OK
    return EXIT_OK if verdict.lower() == expect.lower() else EXIT_EXPECT


def _sidecar(out: str | None, suffix: str) -> str | None:
    if out is None:
        return None
    p = Path(out)
    return str(p.with_suffix(suffix)) if p.suffix and p.suffix != suffix else out + suffix


# ---------------------------------------------------------------- commands

def cmd_pia(cfg, args) -> int:
    if args.max_iter is not None:
        cfg["pia"]["max_iter"] = args.max_iter
    max_iter = cfg["pia"]["max_iter"]
    if isinstance(max_iter, bool) or not isinstance(max_iter, int) or max_iter < 1:
        raise ConfigError(f"pia.max_iter must be an integer >= 1, got {max_iter!r}")
    model, grid = make_model(cfg), make_grid(cfg)
    v0 = make_policy(model, grid, cfg["pia"]["initial_policy"])
    pair, trace = run_pia(model, grid, None, v0, tol=_tol(cfg, "pia_tol"), max_iter=max_iter)
    rep = check_compatible(model, grid, None, pair, tol=_tol(cfg, "gap_tol"),
                           residual_tol=_tol(cfg, "internal_residual_tol"))
    policy = trace.steps[-1].policy
    result = {
        "rho_final": pair.rho,
        "iterations": trace.iterations,
        "rho_trace": trace.rhos,
        "termination": trace.termination,
        "monotone": trace.is_monotone(1e-10),
        "verdict": rep.verdict.value,
        "compatibility": rep.as_dict(),
    }
    _emit(render_report("pia", cfg, result), args.out)
    csv_out = args.csv or _sidecar(args.out, ".csv")
    if csv_out is not None:
        rows = zip(grid.nodes, pair.V.values, policy.values)
        _emit(render_csv({"rho": pair.rho, "config": cfg}, ("x", "V", "v"), rows), csv_out)
    return _check_expect(args.expect, rep.verdict.value)


def cmd_sweep_rho(cfg, args) -> int:
    if args.rhos is not None:
        cfg["sweep_rho"]["rhos"] = args.rhos
    rhos = parse_list(cfg["sweep_rho"]["rhos"])
    tol = _tol(cfg, "sweep_gap_tol")
    rows = []
    for pt in analytic.family_sweep(rhos, _tol(cfg, "quad_tol")):
        verdict = Verdict.COMPATIBLE if abs(pt.gap) <= tol else Verdict.SPURIOUS
        rows.append((pt.rho, pt.xi, pt.beta_quad, pt.beta_printed, pt.gap, verdict.value))
    _emit(render_csv({"config": cfg}, ("rho", "xi", "beta_quad", "beta_eq7", "gap", "verdict"), rows), args.out)
    return EXIT_OK


def read_pair_file(path: str):
    """Two-column CSV ``x,V`` with a ``# rho: value`` comment line."""
    rho = None
    xs, vs = [], []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read pair file {path}: {exc}") from None
    for line in lines:
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, _, val = s[1:].partition(":")
            if key.strip() == "rho":
                rho = parse_number(val.strip())
            continue
        cells = [c.strip() for c in s.split(",")]
        try:
            xs.append(float(cells[0]))
            vs.append(float(cells[1]))
        except (ValueError, IndexError):
            if xs:
                raise ConfigError(f"bad row in pair file: {line!r}") from None
            # a column header row
    if rho is None:
        raise ConfigError("pair file has no '# rho:' header")
    if len(xs) < 2:
        raise ConfigError("pair file needs at least two rows")
    x = np.asarray(xs)
    if np.any(np.diff(x) <= 0):
        raise ConfigError("pair file x column must be strictly increasing")
    return x, np.asarray(vs), rho


def cmd_verify(cfg, args) -> int:
    vcfg = cfg["verify"]
    if args.pair_file is not None:
        vcfg["pair_file"] = args.pair_file
    if args.analytic_rho is not None:
        vcfg["analytic_rho"] = args.analytic_rho
    model, grid = make_model(cfg), make_grid(cfg)
    if vcfg["pair_file"] is not None:
        x, v, rho = read_pair_file(vcfg["pair_file"])
        if x[0] > grid.nodes[0] + 1e-9 or x[-1] < grid.nodes[-1] - 1e-9:
            raise ConfigError(f"pair file covers [{x[0]}, {x[-1]}], grid needs [{-grid.L}, {grid.L}]")
        V = np.interp(grid.nodes, x, v)
        V -= V[grid.origin_index]
    elif vcfg["analytic_rho"] is not None:
        rho = parse_number(vcfg["analytic_rho"])
        V = analytic.v_rho_on_grid(rho, grid, _tol(cfg, "quad_tol"))
    else:
        raise ConfigError("verify needs verify.pair_file or verify.analytic_rho")
    window = vcfg.get("window")
    rep = check_compatible(
        model, grid, None, SolutionPair(ValueFunction(grid, V), rho),
        tol=_tol(cfg, "gap_tol"), residual_tol=_tol(cfg, "residual_tol"),
        window=None if window is None else parse_number(window),
        lyapunov_radius=parse_number(vcfg["lyapunov_radius"]),
        horizon=parse_number(vcfg["semigroup_horizon"]), steps=int(vcfg["semigroup_steps"]),
    )
    _emit(render_report("verify", cfg, rep.as_dict()), args.out)
    return _check_expect(args.expect, rep.verdict.value)


def cmd_discount(cfg, args) -> int:
    if args.alphas is not None:
        cfg["discount"]["alphas"] = args.alphas
    alphas = parse_list(cfg["discount"]["alphas"])
    model, grid = make_model(cfg), make_grid(cfg)
    sweep = vanishing_discount_sweep(model, grid, None, alphas)
    header = {"extrapolated_F0": sweep.extrapolated, "config": cfg}
    _emit(render_csv(header, ("alpha", "F"), sweep.points), args.out)
    return EXIT_OK


def cmd_truncation(cfg, args) -> int:
    tcfg = cfg["truncation"]
    if args.radii is not None:
        tcfg["radii"] = args.radii
    if args.rho_hat is not None:
        tcfg["rho_hat"] = args.rho_hat
    radii = parse_list(tcfg["radii"])
    rho_hat = parse_number(tcfg["rho_hat"])
    model, grid = make_model(cfg), make_grid(cfg)
    vhat = make_policy(model, grid, tcfg["policy"])
    rows = truncation_sweep(model, grid, None, vhat, rho_hat, radii, tol=_tol(cfg, "pia_tol"))
    gap_tol = _tol(cfg, "gap_tol")
    consistent = all(abs(r - rho_hat) <= gap_tol for _, r in rows)
    verdict = (Verdict.COMPATIBLE if consistent else Verdict.SPURIOUS).value
    _emit(render_csv({"rho_hat": rho_hat, "verdict": verdict, "config": cfg}, ("R", "rho_R"), rows), args.out)
    return _check_expect(args.expect, verdict)


def cmd_simulate(cfg, args) -> int:
    s = cfg["sim"]
    for key, val in (("seed", args.seed), ("T", args.T), ("dt", args.dt), ("n_paths", args.n_paths), ("x0", args.x0)):
        if val is not None:
            s[key] = val
    scfg = cfg["simulate"]
    if args.quantity is not None:
        scfg["quantity"] = args.quantity
    model, grid = make_model(cfg), make_grid(cfg)
    q = scfg["quantity"]
    reflect = s["reflect_at"]
    if reflect == "auto":
        # walls at +-L only where the grid quantity has them too
        reflect = grid.L if q == "histogram" else None
    try:
        sim = sde.SimConfig(dt=parse_number(s["dt"]), T=parse_number(s["T"]), n_paths=s["n_paths"],
                            seed=s["seed"], x0=parse_number(s["x0"]),
                            reflect_at=None if reflect is None else parse_number(reflect))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    v = policy_callable(model, grid, scfg["policy"])
    if q == "average_cost":
        result = sde.simulate_average_cost(model, v, sim).as_dict()
    elif q == "exit":
        pol = make_policy(model, grid, scfg["policy"])
        _, _, beta, V = evaluate_policy(model, grid, pol)
        rho = beta if scfg["rho"] is None else parse_number(scfg["rho"])
        est = sde.estimate_exit_functional(model, v, sim.x0, parse_number(scfg["r"]), rho, sim,
                                           V=V if scfg["with_value"] else None)
        result = dict(est.as_dict(), rho=rho, grid_V_x0=float(V.at(sim.x0)))
    elif q == "histogram":
        b = scfg["bins"]
        edges = np.linspace(parse_number(b["lo"]), parse_number(b["hi"]), int(b["n"]) + 1)
        hist = sde.occupation_histogram(model, v, sim, edges)
        result = {"edges": hist.edges, "mass": hist.mass}
    else:
        raise ConfigError(f"unknown simulate quantity {q!r}")
    _emit(render_report("simulate", cfg, result), args.out)
    return EXIT_OK


def cmd_models(cfg, args) -> int:
    lines = []
    for name, factory in BUILTIN_MODELS.items():
        lines.append(f"{name}\t{factory().description}\n")
    _emit("".join(lines), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--seed", type=int, help="Monte Carlo seed")
    common.add_argument("--expect", choices=("compatible", "spurious"), help="exit 3 if the verdict differs")
    common.add_argument("--L", type=float, help="grid half-width")
    common.add_argument("--N", type=int, help="grid node count (odd)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="avghjb", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("pia", parents=[common], help="policy iteration")
    sp.add_argument("--max-iter", type=int)
    sp.add_argument("--csv", help="CSV of (x, V, v); default: --out with .csv suffix")
    sp.set_defaults(func=cmd_pia)

    sp = sub.add_parser("sweep-rho", parents=[common], help="analytic family sweep")
    sp.add_argument("--rhos", help='list "a,b" or range "start:stop:step"')
    sp.set_defaults(func=cmd_sweep_rho)

    sp = sub.add_parser("verify", parents=[common], help="compatibility check of a candidate pair")
    sp.add_argument("--pair-file")
    sp.add_argument("--analytic-rho")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("discount", parents=[common], help="vanishing-discount sweep")
    sp.add_argument("--alphas")
    sp.set_defaults(func=cmd_discount)

    sp = sub.add_parser("truncation", parents=[common], help="frozen-control truncation sweep")
    sp.add_argument("--radii")
    sp.add_argument("--rho-hat")
    sp.set_defaults(func=cmd_truncation)

    sp = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimates")
    sp.add_argument("--quantity", choices=("average_cost", "exit", "histogram"))
    sp.add_argument("--T", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--n-paths", type=int)
    sp.add_argument("--x0", type=float)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("models", parents=[common], help="built-in models")
    sp.add_argument("action", choices=("list",))
    sp.set_defaults(func=cmd_models)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.L is not None:
            cfg["grid"]["L"] = args.L
        if args.N is not None:
            cfg["grid"]["N"] = args.N
        if args.seed is not None:
            cfg["sim"]["seed"] = args.seed
        return args.func(cfg, args)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except NumericalError as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except AvgHJBError as exc:
        logger.error("%s", exc)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, TypeError) as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
