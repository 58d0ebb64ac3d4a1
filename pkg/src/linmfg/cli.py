"""``linmfg`` command line.

Subcommands and exit codes::

    solve     MODEL            0 converged, 2 iteration cap, 3 solver error
    simulate  MODEL EQ         0 ok, 4 state space over --cap with --exact
    bounds    MODEL            0 ok, 6 an assumption fails
    check     MODEL EQ         0 pass, 5 fail
    w1        A B --metric M   0 ok

Any unreadable or malformed input exits with 1. ``MODEL`` may be a path or the
word ``malware`` for the bundled instance. Each machine-readable output carries
the configuration that produced it.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds as bnd
from .errors import AssumptionViolation, LinMfgError, ModelValidationError, StateSpaceTooLarge
from .finite_n import DEFAULT_CAP, SimConfig, default_horizon, estimate_cost_gap, exact_epsilon_N, simulate_population, w1_csv
from .gnep import default_player_two_cost
from .io import InputError, dumps, load_equilibrium, load_model
from .ipsolver import CONVERGED, MAX_ITER, SolverConfig, extract_equilibrium, result_record, solve
from .mdp import verify_mfe
from .model import FiniteMetricSpace, as_distribution, as_policy
from .transport import w1, w1_empirical

EXIT_OK, EXIT_INPUT, EXIT_MAXITER, EXIT_SOLVER = 0, 1, 2, 3
EXIT_CAP, EXIT_CHECK, EXIT_ASSUMPTION = 4, 5, 6


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    return x


# ---------------------------------------------------------------- solve

def cmd_solve(args) -> int:
    model = load_model(args.model)
    cfg = SolverConfig(
        sigma=args.sigma, kappa=args.kappa, Kparam=args.K, armijo_coeff=args.armijo,
        tol_H=args.tol, max_iter=args.max_iter, init_margin=args.init_margin, seed=args.seed,
    )
    g = default_player_two_cost(model)
    try:
        res = solve(model, g, cfg)
    except LinMfgError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if args.trace:
        Path(args.trace).write_text(res.trace.to_csv())
    eq = None
    if res.status == CONVERGED:
        try:
            eq = extract_equilibrium(model, res.z)
        except LinMfgError as exc:
            res.message = f"extraction failed: {exc}"
    record = result_record(model, g, res, eq)
    record["model"] = model.name or str(args.model)
    _emit(dumps(_jsonable(record)), args.out)
    if res.status == CONVERGED and eq is not None:
        return EXIT_OK
    if res.status == MAX_ITER:
        print(f"iteration cap reached: {res.message}", file=sys.stderr)
        return EXIT_MAXITER
    print(f"{res.status}: {res.message}", file=sys.stderr)
    return EXIT_SOLVER


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    model = load_model(args.model)
    mu, pi = load_equilibrium(args.eq, model)
    mu = as_distribution(mu, model.n_states, tol=1e-6)
    pi = as_policy(pi, model.n_states, model.n_actions, tol=1e-6)
    config = {"model": model.name or str(args.model), "agents": args.agents, "seed": args.seed}
    if args.exact:
        try:
            rec = exact_epsilon_N(model, mu, pi, args.agents, cap=args.cap)
        except StateSpaceTooLarge as exc:
            print(f"exact path refused: {exc}", file=sys.stderr)
            return EXIT_CAP
        rec["config"] = dict(config, exact=True, cap=args.cap)
        _emit(dumps(_jsonable(rec)), args.json)
        return EXIT_OK
    horizon = default_horizon(model) if args.horizon is None else args.horizon
    cfg = SimConfig(N=args.agents, horizon=horizon, reps=args.reps, seed=args.seed,
                    antithetic=args.antithetic, workers=args.workers)
    sim = simulate_population(model, pi, mu, cfg, mu)
    gap = estimate_cost_gap(model, mu, pi, cfg, sim)
    # workers only changes wall time, so it stays out of the audit header
    header = dict(model=config["model"], **{k: v for k, v in cfg.as_dict().items() if k != "workers"})
    gap["config"] = header
    _emit("# " + json.dumps(_jsonable(header), sort_keys=True) + "\n" + w1_csv(sim), args.out)
    if args.json:
        Path(args.json).write_text(dumps(_jsonable(gap)))
    return EXIT_OK


# ---------------------------------------------------------------- bounds

def _parse_pairs(text: str) -> dict:
    out = {}
    for item in filter(None, text.split(",")):
        key, _, val = item.partition("=")
        out[key.strip()] = float(val)
    return out


def _profile(args, model, beta):
    if args.lfun_const:
        a, b = (float(v) for v in args.lfun_const.split(","))
        Lfun = lambda R1, R2, R3: (a, b)  # noqa: E731
    else:
        Lfun = bnd.sufficient_L(_parse_pairs(args.density) if args.density else bnd.UNIT_DENSITY, beta)
    pr = bnd.estimate_lipschitz(model, rho=args.rho, Lfun=Lfun, ddim=args.ddim)
    for key in ("L1", "L2", "L3", "K1", "K2", "K3"):
        val = getattr(args, key)
        if val is not None:
            setattr(pr, key, float(val))
    return pr


def _table(rows) -> str:
    width = max(len(k) for k, _ in rows)
    lines = []
    for k, v in rows:
        if isinstance(v, float):
            v = "inf" if v == math.inf else f"{v:.10g}"
        lines.append(f"{k.ljust(width)}  {v}")
    return "\n".join(lines) + "\n"


def cmd_bounds(args) -> int:
    model = load_model(args.model)
    beta = model.beta if args.beta is None else args.beta
    pr = _profile(args, model, beta)
    dimX = pr.ddim if args.dimX is None else args.dimX
    moment = pr.diam ** args.q if args.moment is None else args.moment
    config = {
        "model": model.name or str(args.model), "N": args.N, "eps": args.eps, "C": args.C, "q": args.q,
        "moment_q": moment, "dimX": dimX, "beta": beta, "t": args.t, "lstar": args.lstar,
        "lfun": args.lfun_const or args.density or "unit-density",
    }
    chk = bnd.check_assumptions(pr, beta, args.N, args.lstar)
    out = {"config": config, "profile": pr.as_dict(), "assumptions": chk}
    rows = [("profile." + k, float(v)) for k, v in pr.as_dict().items()]
    rows += [(f"assumption ({k})", "pass" if chk[k] else "FAIL") for k in ("e", "f", "g")]
    code = EXIT_OK
    try:
        rep = bnd.bound_report(pr, beta, args.N, args.eps, bnd.alpha_N(args.N, args.q, moment, dimX, args.C), args.lstar)
    except AssumptionViolation as exc:
        print(f"assumption failure: {exc}", file=sys.stderr)
        code = EXIT_ASSUMPTION
    else:
        alpha = bnd.alpha_t(args.N, args.eps, args.t, rep.kappa1, rep.kappa2, rep.alphaN)
        alpha_tilde = bnd.alpha_tilde_t(args.N, args.eps, args.t, rep.kappa1, rep.kappa2N, rep.alphaN)
        out["report"] = rep.as_dict()
        out["alpha_t"] = alpha
        out["alpha_tilde_t"] = alpha_tilde
        rows += [(k, float(v)) for k, v in rep.as_dict().items() if not isinstance(v, bool) and k not in ("N", "eps")]
        rows += [(f"alpha_t(t={args.t})", float(alpha)), (f"alpha_tilde_t(t={args.t})", float(alpha_tilde))]
    sys.stdout.write(_table(rows))
    if args.out:
        Path(args.out).write_text(dumps(_jsonable(out)))
    return code


# ---------------------------------------------------------------- check and w1

def cmd_check(args) -> int:
    model = load_model(args.model)
    mu, pi = load_equilibrium(args.eq, model)
    rep = verify_mfe(model, as_distribution(mu, model.n_states, tol=1e-6),
                     as_policy(pi, model.n_states, model.n_actions, tol=1e-6), tol=args.tol)
    rec = dict(rep.as_dict(), config={"model": model.name or str(args.model), "tol": args.tol})
    _emit(dumps(_jsonable(rec)), args.out)
    return EXIT_OK if rep.passed else EXIT_CHECK


def _metric(text: str) -> FiniteMetricSpace:
    if text.startswith("unit") and text[4:].isdigit():
        return FiniteMetricSpace.unit(int(text[4:]))
    if text == "malware":
        return load_model("malware").states
    data = json.loads(Path(text).read_text()) if Path(text).exists() else None
    if data is None:
        raise InputError(f"unknown metric {text!r}: give a JSON file or one of the names unitK and malware")
    if isinstance(data, dict):
        mat = data["metric"]
        labels = data.get("states", [str(i) for i in range(len(mat))])
    else:
        mat, labels = data, [str(i) for i in range(len(data))]
    space = FiniteMetricSpace(labels, np.asarray(mat, dtype=float))
    if space.violations():
        raise InputError(f"{text}: not a metric ({space.violations()[0]})")
    return space


def _vector(text: str, kind):
    try:
        return np.array([kind(v) for v in text.split(",")])
    except ValueError as exc:
        raise InputError(f"cannot parse {text!r}: {exc}") from exc


def cmd_w1(args) -> int:
    space = _metric(args.metric)
    if args.empirical:
        x, z = _vector(args.a, int), _vector(args.b, int)
        if (x < 0).any() or (z < 0).any() or max(x.max(), z.max()) >= space.size:
            raise InputError("state index out of range")
        val = w1_empirical(x, z, space)
    else:
        val = w1(_vector(args.a, float), _vector(args.b, float), space)
    print(f"{val:.12g}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    d = SolverConfig()
    p = argparse.ArgumentParser(prog="linmfg", description="Stationary equilibria of linear mean-field games.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="interior-point solve of the KKT system")
    s.add_argument("model")
    s.add_argument("--sigma", type=float, default=d.sigma)
    s.add_argument("--kappa", type=float, default=d.kappa)
    s.add_argument("--K", type=float, default=None, help="potential weight; default 2m")
    s.add_argument("--tol", type=float, default=d.tol_H)
    s.add_argument("--max-iter", type=int, default=d.max_iter)
    s.add_argument("--armijo", type=float, default=d.armijo_coeff, help="sufficient-decrease coefficient in (0, 1]")
    s.add_argument("--init-margin", type=float, default=d.init_margin)
    s.add_argument("--seed", type=int, default=d.seed)
    s.add_argument("--trace", help="CSV path for the per-iteration trace")
    s.add_argument("--out", help="JSON path; stdout when omitted")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("simulate", help="finite-population Monte Carlo or exact epsilon(N)")
    s.add_argument("model")
    s.add_argument("eq")
    s.add_argument("--agents", type=int, default=100)
    s.add_argument("--horizon", type=int, default=None)
    s.add_argument("--reps", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--antithetic", action="store_true")
    s.add_argument("--exact", action="store_true")
    s.add_argument("--cap", type=int, default=DEFAULT_CAP)
    s.add_argument("--out", help="W1 CSV path; stdout when omitted")
    s.add_argument("--json", help="cost-gap (or exact) JSON path")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("bounds", help="explicit finite-N error bounds")
    s.add_argument("model")
    s.add_argument("--N", type=float, default=10_000)
    s.add_argument("--eps", type=float, default=0.05)
    s.add_argument("--C", type=float, default=1.0)
    s.add_argument("--q", type=float, default=2.0)
    s.add_argument("--moment", type=float, default=None, help="q-th moment of the initial law; default diam^q")
    s.add_argument("--dimX", type=float, default=None, help="case selector of the LLN rate; default ddim")
    s.add_argument("--t", type=int, default=50)
    s.add_argument("--beta", type=float, default=None)
    s.add_argument("--rho", type=float, default=1.0)
    s.add_argument("--ddim", type=float, default=None)
    s.add_argument("--lstar", type=float, default=None, help="override the policy Lipschitz constant")
    s.add_argument("--lfun-const", default=None, help="'a,b': constant Lipschitz map")
    s.add_argument("--density", default=None, help="'L1g=..,K1g=..': sufficient_L parameters")
    for key in ("L1", "L2", "L3", "K1", "K2", "K3"):
        s.add_argument(f"--{key}", type=float, default=None)
    s.add_argument("--out", help="JSON path")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("check", help="verify a candidate equilibrium")
    s.add_argument("model")
    s.add_argument("eq")
    s.add_argument("--tol", type=float, default=0.02)
    s.add_argument("--out")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("w1", help="Wasserstein-1 distance of two distributions or state vectors")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--metric", required=True, help="JSON matrix or model file; unitK and malware are built in")
    s.add_argument("--empirical", action="store_true", help="A and B are state-index vectors")
    s.set_defaults(func=cmd_w1)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ModelValidationError, LinMfgError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
