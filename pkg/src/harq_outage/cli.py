"""Command-line front end: ``harq-outage <command> [--config scenario.yaml] [overrides]``.

Every command writes CSV (12 significant digits, header lines start with
``#``) to stdout or to ``--output``.  ``--replot-from`` re-emits a previously
written CSV unchanged, which is how figure data is regenerated without
recomputation.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import config as cfgmod
from . import selftest
from .asymptotic import asymptotic_outage, coding_modulation_gain, correlation_factor, quasi_static_asymptotic
from .channel import mc_outage
from .errors import DomainError, InfeasibleError
from .optimize import PowerProblem, RateProblem, optimize_equal_power, optimize_power, optimize_rate
from .outage import outage_quasi_static, outage_truncated, write_terms_csv

MC_FLOOR = 1e-5
SWEEP_VARIABLES = ("gamma_db", "gamma", "rho", "rate", "K", "constraint")
METHODS = ("truncated", "asymptotic", "mc", "factors", "opa", "oepa", "ltat")
METHOD_COLUMNS = {
    "truncated": ("truncated", "N", "bound"),
    "asymptotic": ("asymptotic",),
    "mc": ("mc", "mc_stderr"),
    "factors": ("varrho_eq", "varrho_exp", "coding_gain", "coding_gain_qs"),
    "opa": ("opa", "opa_truncated"),
    "oepa": ("oepa", "oepa_truncated"),
    "ltat": ("ltat_rate", "ltat"),
}


# --------------------------------------------------------------------------
# CSV


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def write_csv(fh, columns, rows, meta=()):
    for line in meta:
        fh.write(f"# {line}\n")
    fh.write("# " + ",".join(columns) + "\n")
    for row in rows:
        fh.write(",".join(fmt(v) for v in row) + "\n")


def _parse_cell(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_csv(fh):
    """(columns, rows, meta) from a file written by ``write_csv``."""
    comments, rows = [], []
    for line in fh:
        line = line.rstrip("\n")
        if line.startswith("#"):
            comments.append(line[1:].strip())
        else:
            # a blank line is a one-column row with an empty cell
            rows.append([_parse_cell(c) for c in line.split(",")])
    if not comments:
        raise DomainError("CSV has no header line")
    return comments[-1].split(","), rows, comments[:-1]


def _emit(args, columns, rows, meta=()):
    if args.output:
        with open(args.output, "w") as fh:
            write_csv(fh, columns, rows, meta)
    else:
        write_csv(sys.stdout, columns, rows, meta)


# --------------------------------------------------------------------------
# evaluation helpers shared by commands and sweeps


def _outage(cfg, keep_terms=False):
    model, alloc = cfg.model(), cfg.allocation()
    if cfg.quasi_static:
        return outage_quasi_static(model, alloc, cfg.rate)
    return outage_truncated(
        model, alloc, cfg.rate, N=cfg.N, epsilon=cfg.epsilon, contour=cfg.contour_spec(), keep_terms=keep_terms
    )


def _asymptotic_value(cfg) -> float:
    model, alloc = cfg.model(), cfg.allocation()
    if cfg.quasi_static:
        _check_equal(alloc)
        qs = quasi_static_asymptotic(cfg.m, cfg.K, alloc.theta[0], model.sigma2[0], cfg.rate)
        return qs.value(alloc.gamma)
    return asymptotic_outage(model, alloc, cfg.rate, cfg.contour_spec()).value


def _check_equal(alloc):
    if np.ptp(alloc.theta) > 1e-12:
        raise DomainError("the quasi-static path assumes equal power per round")


def _mc(cfg, threads=1):
    return mc_outage(cfg.model(), cfg.allocation(), cfg.rate, cfg.mc_n, cfg.seed, cfg.quasi_static, threads)


def _factors(cfg):
    form, rho = cfg.correlation
    if form == "vector":
        raise DomainError("varrho_eq / varrho_exp need a scalar rho (equicorrelated or exponential form)")
    eq = correlation_factor(cfgmod.correlation_vector("equicorrelated", rho, cfg.K), cfg.K, cfg.m)[1]
    ex = correlation_factor(cfgmod.correlation_vector("exponential", rho, cfg.K), cfg.K, cfg.m)[1]
    cg = coding_modulation_gain(cfg.rate, cfg.m, cfg.K, cfg.contour_spec())
    cg_qs = quasi_static_asymptotic(cfg.m, cfg.K, 1.0 / cfg.K, 1.0, cfg.rate).coding_gain
    return eq, ex, cg, cg_qs


def _power(cfg, equal: bool):
    problem = PowerProblem(cfg.model(), cfg.rate, cfg.gamma * cfg.n0, cfg.power_evaluator)
    return optimize_equal_power(problem) if equal else optimize_power(problem)


def _rate(cfg):
    problem = RateProblem(cfg.model(), cfg.allocation(), cfg.constraint, cfg.rate_evaluator)
    return optimize_rate(problem)


def evaluate_point(cfg, methods, threads=1) -> dict:
    out: dict = {}
    if "truncated" in methods:
        res = _outage(cfg)
        out.update(truncated=res.value, N=res.truncation_order, bound=res.error_bound)
    if "asymptotic" in methods:
        out["asymptotic"] = _asymptotic_value(cfg)
    if "mc" in methods:
        p = out.get("truncated", out.get("asymptotic"))
        if p is None:
            p = _outage(cfg).value
        # below the floor the estimate would need more than ~1e8 draws
        if p >= MC_FLOOR:
            est = _mc(cfg, threads)
            out.update(mc=est.p_hat, mc_stderr=est.stderr)
    if "factors" in methods:
        out.update(zip(METHOD_COLUMNS["factors"], _factors(cfg)))
    for name, equal in (("opa", False), ("oepa", True)):
        if name in methods:
            try:
                res = _power(cfg, equal)
                out.update({name: res.objective, f"{name}_truncated": res.reported_outage})
            except InfeasibleError:
                pass
    if "ltat" in methods:
        try:
            res = _rate(cfg)
            out.update(ltat_rate=res.x, ltat=res.objective)
        except InfeasibleError:
            pass
    return out


def _apply_variable(cfg, variable: str, value: float):
    if variable == "gamma_db":
        return cfg.with_(gamma=cfgmod.db_to_linear(value))
    if variable == "gamma":
        return cfg.with_(gamma=value)
    if variable == "rho":
        form = cfg.correlation[0]
        if form == "vector":
            raise DomainError("a rho sweep needs the equicorrelated or exponential correlation form")
        return cfg.with_(correlation=(form, value))
    if variable == "rate":
        return cfg.with_(rate=value)
    if variable == "K":
        k = int(round(value))
        sigma2 = cfg.sigma2 if np.ndim(cfg.sigma2) == 0 else tuple(cfg.sigma2)[:1] * k
        return cfg.with_(K=k, sigma2=sigma2, theta="equal")
    if variable == "constraint":
        return cfg.with_(constraint=value)
    raise DomainError(f"unknown sweep variable {variable!r}; choose from {SWEEP_VARIABLES}")


def sweep_values(start, stop, steps, log_scale=False):
    if steps < 1:
        raise DomainError("a sweep needs at least one step")
    if log_scale:
        if not (start > 0 and stop > 0):
            raise DomainError("log-scale sweeps need positive endpoints")
        return list(np.geomspace(start, stop, steps))
    return list(np.linspace(start, stop, steps))


def run_sweep(cfg, variable, values, methods, threads=1):
    """Rows of [index, value, *method columns], ordered by sweep index."""
    columns = ["index", variable] + [c for m in methods for c in METHOD_COLUMNS[m]]

    def point(item):
        i, v = item
        vals = evaluate_point(_apply_variable(cfg, variable, v), methods)
        return [i, v] + [vals.get(c) for c in columns[2:]]

    items = list(enumerate(values))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(point, items))
    else:
        rows = [point(it) for it in items]
    return columns, rows


# --------------------------------------------------------------------------
# commands


def _scenario_meta(cfg, command):
    form, value = cfg.correlation
    return [
        f"harq-outage {command}",
        f"K={cfg.K} m={cfg.m} sigma2={cfg.sigma2} correlation={form}:{value} gamma={fmt(cfg.gamma)} "
        f"rate={fmt(cfg.rate)} quasi_static={int(cfg.quasi_static)}",
    ]


def cmd_outage(cfg, args):
    res = _outage(cfg, keep_terms=bool(args.terms))
    if args.terms:
        write_terms_csv(res, args.terms)
    columns = ["outage", "method", "N", "bound", "terms", "flags"]
    row = [res.value, res.method, res.truncation_order, res.error_bound, res.terms_evaluated, " ".join(res.flags)]
    _emit(args, columns, [row], _scenario_meta(cfg, "outage"))
    return 0


def cmd_asymptotic(cfg, args):
    model, alloc = cfg.model(), cfg.allocation()
    if cfg.quasi_static:
        _check_equal(alloc)
        qs = quasi_static_asymptotic(cfg.m, cfg.K, alloc.theta[0], model.sigma2[0], cfg.rate)
        value = qs.value(alloc.gamma)
        row = [qs.zeta, 1.0, qs.coding_gain, qs.diversity, value, value > 0.1]
    else:
        b = asymptotic_outage(model, alloc, cfg.rate, cfg.contour_spec())
        row = [b.zeta, b.varrho, b.coding_gain, b.diversity, b.value, b.regime_warning]
    columns = ["zeta", "varrho", "coding_gain", "diversity", "p_asy", "regime_warning"]
    _emit(args, columns, [row], _scenario_meta(cfg, "asymptotic"))
    return 0


def cmd_mc(cfg, args):
    est = _mc(cfg, args.threads)
    _emit(args, ["p_hat", "stderr", "n", "seed", "count"], [[est.p_hat, est.stderr, est.n, est.seed, est.count]],
          _scenario_meta(cfg, "mc"))
    return 0


def cmd_sweep(cfg, args):
    methods = _methods(args.method, default=("truncated", "asymptotic"))
    values = sweep_values(args.start, args.stop, args.steps, args.log_scale)
    columns, rows = run_sweep(cfg, args.variable, values, methods, args.threads)
    _emit(args, columns, rows, _scenario_meta(cfg, f"sweep {args.variable}"))
    return 0


def cmd_optimize_power(cfg, args):
    rows = []
    for scheme, equal in (("opa", False), ("oepa", True)):
        res = _power(cfg, equal)
        powers = list(res.x)
        rows.append([scheme, cfg.K, cfg.m, cfg.rate, cfg.gamma * cfg.n0, cfg.power_evaluator, " ".join(fmt(p) for p in powers),
                     res.objective, res.reported_outage, res.certificate_gap, res.iterations, res.slack])
    columns = ["scheme", "K", "m", "rate", "budget", "evaluator", "powers", "outage", "outage_truncated",
               "certificate_gap", "iterations", "slack"]
    _emit(args, columns, rows, _scenario_meta(cfg, "optimize-power"))
    return 0


def cmd_optimize_rate(cfg, args):
    problem = RateProblem(cfg.model(), cfg.allocation(), cfg.constraint, cfg.rate_evaluator)
    res = optimize_rate(problem, certify=args.certify)
    columns = ["K", "m", "gamma", "constraint", "rate", "ltat", "certificate_gap", "iterations", "residual", "slack"]
    row = [cfg.K, cfg.m, cfg.gamma, cfg.constraint, res.x, res.objective, res.certificate_gap, res.iterations,
           res.extra["residual"], res.slack]
    _emit(args, columns, [row], _scenario_meta(cfg, "optimize-rate"))
    return 0


def cmd_selftest(cfg, args):
    checks = selftest.FULL_CHECKS if args.level == "full" else selftest.QUICK_CHECKS
    return 0 if selftest.run(checks) else 1


def cmd_selftest_specialfun(cfg, args):
    return 0 if selftest.run(selftest.SPECIALFUN_CHECKS) else 1


COMMANDS = {
    "outage": cmd_outage,
    "asymptotic": cmd_asymptotic,
    "mc": cmd_mc,
    "sweep": cmd_sweep,
    "optimize-power": cmd_optimize_power,
    "optimize-rate": cmd_optimize_rate,
    "selftest": cmd_selftest,
    "selftest-specialfun": cmd_selftest_specialfun,
}


# --------------------------------------------------------------------------
# argument handling


def _methods(text, default):
    if not text:
        return tuple(default)
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise DomainError(f"unknown methods {bad}; choose from {METHODS}")
    return methods


def _common(parser):
    g = parser.add_argument_group("scenario")
    g.add_argument("--config", help="YAML scenario file")
    g.add_argument("--output", "-o", help="write CSV here instead of stdout")
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("--seed", type=int)
    g.add_argument("--method", help="comma-separated methods: " + ",".join(METHODS))
    g.add_argument("--quasi-static", action="store_true", help="fully correlated rounds (lambda = 1)")
    g.add_argument("--replot-from", metavar="CSV", help="re-emit a CSV written earlier instead of computing")
    g.add_argument("-K", type=int)
    g.add_argument("-m", type=int)
    g.add_argument("--sigma2", type=float)
    g.add_argument("--rho", type=float, help="equicorrelated rho (or exponential with --exponential)")
    g.add_argument("--exponential", action="store_true", help="use lambda = (rho, rho^2, ...)")
    g.add_argument("--lam", type=float, nargs="+", help="explicit correlation vector")
    g.add_argument("--gamma-db", type=float)
    g.add_argument("--gamma", type=float, help="total SNR, linear")
    g.add_argument("--rate", "-R", type=float)
    g.add_argument("-N", type=int, help="truncation order (default: smallest meeting --epsilon)")
    g.add_argument("--epsilon", type=float, help="target truncation error")
    g.add_argument("--n", type=int, help="Monte Carlo sample count")
    g.add_argument("--constraint", type=float, help="outage constraint for rate selection")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harq-outage", description=__doc__.splitlines()[0])
    visible = [c for c in COMMANDS if c != "selftest-specialfun"]
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(visible) + "}")
    for name in COMMANDS:
        p = sub.add_parser(name)
        _common(p)
        if name == "outage":
            p.add_argument("--terms", metavar="CSV", help="also dump per-term (ell, W, F) rows")
        elif name == "sweep":
            p.add_argument("--variable", choices=SWEEP_VARIABLES, required=False, default="gamma_db")
            p.add_argument("--from", dest="start", type=float, default=0.0)
            p.add_argument("--to", dest="stop", type=float, default=50.0)
            p.add_argument("--steps", type=int, default=26)
            p.add_argument("--log-scale", action="store_true")
        elif name == "optimize-rate":
            p.add_argument("--certify", action="store_true", help="compare with a grid search at step 1e-3")
        elif name == "selftest":
            p.add_argument("--level", choices=("quick", "full"), default="quick")
    return parser


def scenario_from_args(args):
    cfg = cfgmod.load(args.config) if args.config else cfgmod.ScenarioConfig()
    simple = {"K": "K", "m": "m", "sigma2": "sigma2", "gamma": "gamma", "rate": "rate", "N": "N",
              "epsilon": "epsilon", "n": "mc_n", "seed": "seed", "constraint": "constraint"}
    for flag, attr in simple.items():
        val = getattr(args, flag, None)
        if val is not None:
            setattr(cfg, attr, val)
    if args.gamma_db is not None:
        cfg.gamma = cfgmod.db_to_linear(args.gamma_db)
    if args.lam is not None:
        cfg.correlation = ("vector", tuple(args.lam))
    elif args.rho is not None:
        cfg.correlation = ("exponential" if args.exponential else "equicorrelated", args.rho)
    elif args.exponential:
        cfg.correlation = ("exponential", cfg.correlation[1])
    if args.quasi_static:
        cfg.quasi_static = True
    return cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.replot_from:
        with open(args.replot_from) as fh:
            columns, rows, meta = read_csv(fh)
        _emit(args, columns, rows, meta)
        return 0
    try:
        cfg = scenario_from_args(args)
        return COMMANDS[args.command](cfg, args)
    except (DomainError, InfeasibleError) as exc:
        print(f"harq-outage: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
