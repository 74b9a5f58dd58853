"""Command-line experiment runner: ``sieve-lab simulate|limit-check|shotnoise|moments``.

Config files are flat ``key = value`` lines; ``#`` starts a comment and
keys may use ``-`` or ``_``. Command-line flags override file values and
unknown keys are errors. Trial i always draws from the Philox stream keyed
by (seed, i), so output does not depend on ``--threads``.
"""

from __future__ import annotations

import argparse
import ast
import csv
import hashlib
import io
import json
import math
import operator
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np

from . import __version__
from . import distributions as dist
from .asymptotics import (
    Regime,
    UnsupportedRegime,
    classify_pair,
    classify_regime,
    norming_plan,
    pair_norming_c,
    shotnoise_stable_norming,
)
from .renewal import deterministic_centering, shot_noise_V
from .rng import trial_rng
from .sieve import (
    DIRECT_MAX_N,
    simulate_sieve_direct,
    simulate_sieve_thinning,
    simulate_zero_decrements,
    simulate_zero_decrements_geomrep,
    sieve_kernel,
)
from .stats import (
    chisq_geometric,
    ks_one_sample_normal,
    ks_two_sample,
    stable_fallback,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_UNSUPPORTED = 0, 1, 2, 3

# trial streams use indices 0..trials-1; the limit-law sample gets its own key
LIMIT_STREAM = 2**64 - 1

SIMULATORS = ("thinning", "direct", "kernel", "geomrep")
VERDICTS = ("auto", "replaceable", "normal", "stable")


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# Parsing


LAWS = {
    "Uniform01": dist.Uniform01,
    "Beta": dist.Beta,
    "PointMass": dist.PointMass,
    "RightLogPareto": dist.RightLogPareto,
    "RightLogLogTail": dist.RightLogLogTail,
    "TwoSidedLogPareto": dist.TwoSidedLogPareto,
    "IndependentExpPareto": dist.IndependentExpPareto,
    "IndependentParetoPareto": dist.IndependentParetoPareto,
    "IndependentExpConstant": dist.IndependentExpConstant,
    "CommonShock": dist.CommonShock,
}

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}
_FUNCS = {"exp": math.exp, "log": math.log, "sqrt": math.sqrt}
_ALIASES = {"θ": "theta", "θ0": "theta0", "θ1": "theta1", "β": "beta", "α": "alpha", "η": "eta"}


def _number(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return node.value
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _number(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_number(node.left), _number(node.right))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and len(node.args) == 1:
        return _FUNCS[node.func.id](_number(node.args[0]))
    if isinstance(node, ast.Name) and node.id in ("pi", "e"):
        return getattr(math, node.id)
    raise ConfigError(f"not a number: {ast.unparse(node)}")


def _law_node(node):
    if isinstance(node, ast.Name):
        node = ast.Call(func=node, args=[], keywords=[])
    if not (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in LAWS):
        raise ConfigError(f"unknown law: {ast.unparse(node)}")
    cls = LAWS[node.func.id]
    args = [_law_node(a) if isinstance(a, (ast.Call, ast.Name)) and _is_law(a) else _number(a) for a in node.args]
    kwargs = {}
    for kw in node.keywords:
        key = _ALIASES.get(kw.arg, kw.arg)
        value = _law_node(kw.value) if _is_law(kw.value) else _number(kw.value)
        if key == "theta" and cls is dist.TwoSidedLogPareto:
            kwargs["theta0"] = kwargs["theta1"] = value
        else:
            kwargs[key] = value
    try:
        return cls(*args, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{node.func.id}: {exc}") from exc


def _is_law(node):
    name = node.func if isinstance(node, ast.Call) else node
    return isinstance(name, ast.Name) and name.id in LAWS


def parse_law(text: str):
    """Parse e.g. ``TwoSidedLogPareto(p=1/3, theta0=0.5, theta1=0.5)``."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse law {text!r}") from exc
    return _law_node(tree.body)


def parse_count(text) -> int:
    """Nonnegative integer from ``100``, ``1e12``, ``10**15`` or ``exp(30)`` (rounded)."""
    s = str(text).strip()
    try:
        d = Decimal(s)
    except InvalidOperation:
        try:
            v = _number(ast.parse(s, mode="eval").body)
        except (SyntaxError, ConfigError) as exc:
            raise ConfigError(f"not a count: {s!r}") from exc
        d = Decimal(round(v)) if isinstance(v, float) else Decimal(v)
    if d != d.to_integral_value() or d < 0:
        raise ConfigError(f"not a nonnegative integer: {s!r}")
    return int(d)


def parse_real(text) -> float:
    try:
        return float(_number(ast.parse(str(text).strip(), mode="eval").body))
    except SyntaxError as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


# --------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ExperimentConfig:
    law: str | None = None
    pair: str | None = None
    n: str | None = None
    t: str | None = None
    trials: int = 1000
    seed: int = 0
    threads: int = 1
    simulator: str = "auto"
    centering: str = "b_prime"
    threshold: float = 1e-3
    verdict: str = "auto"
    a: float | None = None
    k: int | None = None
    out: str | None = None
    plot_data: str | None = None

    # settings that never change numeric output
    NON_NUMERIC = ("threads", "out", "plot_data")

    def config_hash(self) -> str:
        d = {k: v for k, v in asdict(self).items() if k not in self.NON_NUMERIC}
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_FIELD_TYPES = {
    "trials": parse_count,
    "seed": parse_count,
    "threads": parse_count,
    "threshold": parse_real,
    "a": parse_real,
    "k": parse_count,
}


def read_config_file(path) -> dict:
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def build_config(args) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    for key, conv in _FIELD_TYPES.items():
        if key in values and values[key] is not None:
            values[key] = conv(values[key])
    cfg = ExperimentConfig(**values)
    if cfg.trials < 1:
        raise ConfigError("trials must be positive")
    if cfg.threads < 1:
        raise ConfigError("threads must be positive")
    if cfg.simulator not in SIMULATORS + ("auto",):
        raise ConfigError(f"simulator must be one of {SIMULATORS}")
    if cfg.centering not in ("b", "b_prime"):
        raise ConfigError("centering must be b or b_prime")
    if cfg.verdict not in VERDICTS:
        raise ConfigError(f"verdict must be one of {VERDICTS}")
    return cfg


# --------------------------------------------------------------------------
# Trial runners (top level so worker processes can import them)


def _sieve_trial(law, n, simulator, seed, i):
    rng = trial_rng(seed, i)
    if simulator == "thinning":
        return tuple(simulate_sieve_thinning(law, n, rng))
    if simulator == "direct":
        return tuple(simulate_sieve_direct(law, n, rng))
    kernel = sieve_kernel(law)
    run = simulate_zero_decrements if simulator == "kernel" else simulate_zero_decrements_geomrep
    # the chain only sees the zero decrements; K and M are not defined for it
    return (-1, -1, run(kernel, n, rng))


def _sieve_chunk(law, n, simulator, seed, indices):
    return [_sieve_trial(law, n, simulator, seed, i) for i in indices]


def _shot_chunk(pair, t, seed, indices):
    out = []
    for i in indices:
        s = shot_noise_V(pair, t, trial_rng(seed, i))
        out.append((s.v_count, s.r_center, s.n_count))
    return out


def run_trials(func, args, trials: int, threads: int):
    """Apply ``func(*args, indices)`` over all trials, in index order."""
    if threads == 1:
        return func(*args, range(trials))
    size = max(1, -(-trials // (4 * threads)))
    chunks = [range(s, min(s + size, trials)) for s in range(0, trials, size)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(func, *zip(*[(*args, c) for c in chunks]))
        return [row for part in parts for row in part]


def _choose_simulator(cfg, n):
    if cfg.simulator != "auto":
        if cfg.simulator == "direct" and n > DIRECT_MAX_N:
            raise ConfigError(f"direct simulation is limited to n <= {DIRECT_MAX_N}")
        return cfg.simulator
    return "thinning"


def _require(cfg, *keys):
    for key in keys:
        if getattr(cfg, key) is None:
            raise ConfigError(f"missing setting: {key}")


# --------------------------------------------------------------------------
# Output helpers


def _write_text(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _ecdf_rows(name, x, grid):
    x = np.sort(np.asarray(x, dtype=float))
    y = np.searchsorted(x, grid, side="right") / x.size
    return [(name, f"{g:.10g}", f"{v:.10g}") for g, v in zip(grid, y)]


def _write_plot_data(path, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("series", "x", "y"))
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _report(cfg, started, regime, tests, centering=None, norming=None, **extra):
    rep = {
        "config_hash": cfg.config_hash(),
        "regime": regime,
        "centering": centering or {},
        "norming": norming or {},
        "tests": [t.to_dict() for t in tests],
        "runtime_seconds": round(time.perf_counter() - started, 3),
        "version": __version__,
    }
    rep.update(extra)
    return rep


def _emit_report(cfg, rep):
    _write_text(cfg.out, json.dumps(rep, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o).__name__)


# --------------------------------------------------------------------------
# Commands


def cmd_simulate(cfg: ExperimentConfig) -> int:
    _require(cfg, "law", "n")
    law, n = parse_law(cfg.law), parse_count(cfg.n)
    simulator = _choose_simulator(cfg, n)
    rows = run_trials(_sieve_chunk, (law, n, simulator, cfg.seed), cfg.trials, cfg.threads)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("trial_index", "K", "M", "L"))
    for i, (k, m, l) in enumerate(rows):
        w.writerow((i, k, m, l))
    _write_text(cfg.out, buf.getvalue())
    ls = np.array([r[2] for r in rows], dtype=float)
    summary = {
        "config_hash": cfg.config_hash(),
        "law": cfg.law,
        "n": n,
        "simulator": simulator,
        "trials": cfg.trials,
        "mean_L": float(ls.mean()),
        "var_L": float(ls.var(ddof=1)) if ls.size > 1 else 0.0,
    }
    print(json.dumps(summary), file=sys.stderr)
    if cfg.plot_data:
        vals, counts = np.unique(ls, return_counts=True)
        _write_plot_data(cfg.plot_data, [("pmf_L", f"{v:g}", f"{c / ls.size:.10g}") for v, c in zip(vals, counts)])
    return EXIT_OK


def _simulate_L(cfg, law, n):
    simulator = _choose_simulator(cfg, n)
    rows = run_trials(_sieve_chunk, (law, n, simulator, cfg.seed), cfg.trials, cfg.threads)
    return np.array([r[2] for r in rows], dtype=np.int64)


def cmd_limit_check(cfg: ExperimentConfig) -> int:
    started = time.perf_counter()
    _require(cfg, "law", "n")
    law, n = parse_law(cfg.law), parse_count(cfg.n)
    case = classify_regime(law)

    def refuse(msg):
        print(f"{case.label}: {msg}", file=sys.stderr)
        _emit_report(cfg, _report(cfg, started, case.label, [], note=msg, verdict=None))
        return EXIT_UNSUPPORTED

    if dist.is_symmetric(law):
        # W and 1 - W equal in law: L_n is exactly geom(1/2) for every n
        ls = _simulate_L(cfg, law, n)
        test = chisq_geometric(ls, 0.5, cfg.threshold, name="chisq_geom(1/2)")
        return _finish(cfg, started, case.label, [test], ls, geom=0.5)
    if case.regime in (Regime.B3_OPEN, Regime.C3_OPEN):
        return refuse("open case, no limit theorem for L_n is available; " + case.note)
    if case.regime is Regime.COMPARABLE:
        a = 1.0 / (case.c + 1.0)
        ls = _simulate_L(cfg, law, n)
        test = chisq_geometric(ls, a, cfg.threshold, name=f"chisq_geom({a:.6g})")
        target = dist.geometric_moments(a, 3)
        emp = [float(np.mean(ls.astype(float) ** j)) for j in (1, 2, 3)]
        rel = [abs(e / m - 1.0) for e, m in zip(emp, target)]
        checks = {"moments_empirical": emp, "moments_geometric": target, "max_relative_error": max(rel)}
        return _finish(cfg, started, case.label, [test], ls, geom=a, checks=checks)
    if case.regime in (Regime.FINITE_FINITE, Regime.LATTICE, Regime.MU_INF_NU_FIN, Regime.ASYM_INF_ZERO):
        return refuse("no explicit limit law to test for this regime " + (f"({case.note})" if case.note else ""))

    prime = cfg.centering == "b_prime"
    try:
        plan = norming_plan(law, prime=prime)
    except UnsupportedRegime as exc:
        return refuse(str(exc))
    b, bp, a_n = plan.b(n), plan.b_prime(n), plan.a(n)
    center = bp if prime else b
    ls = _simulate_L(cfg, law, n)
    z = (ls - center) / a_n
    cent = {"b_n": b, "b_prime_n": bp, "used": cfg.centering}
    norm = {"a_n": a_n}
    if case.regime is Regime.C2:
        limit = plan.sample_limit(trial_rng(cfg.seed, LIMIT_STREAM), cfg.trials)
        tests = [ks_two_sample(z, limit, cfg.threshold, name=f"ks_two_sample_stable({case.alpha:g},{case.beta:g})")]
        fb = stable_fallback(z, limit)
        verdict = tests[0].passed or fb.passed
        return _finish(cfg, started, case.label, tests, z, limit=limit, centering=cent, norming=norm, fallback=fb, verdict=verdict)
    tests = [ks_one_sample_normal(z, cfg.threshold, name="ks_normal")]
    return _finish(cfg, started, case.label, tests, z, centering=cent, norming=norm, limit="normal")


def _finish(cfg, started, label, tests, sample, geom=None, limit=None, checks=None, fallback=None, verdict=None, **kw):
    if verdict is None:
        verdict = all(t.passed for t in tests)
    extra = {"verdict": bool(verdict)}
    if checks:
        extra["checks"] = checks
    if fallback is not None:
        extra["fallback"] = fallback.to_dict()
    sample = np.asarray(sample, dtype=float)
    extra["sample"] = {"mean": float(sample.mean()), "variance": float(sample.var(ddof=1)) if sample.size > 1 else 0.0}
    _emit_report(cfg, _report(cfg, started, label, tests, **kw, **extra))
    if cfg.plot_data:
        rows = []
        if geom is not None:
            ks = np.arange(int(sample.max()) + 1)
            emp = np.bincount(sample.astype(np.int64), minlength=ks.size) / sample.size
            rows += [("pmf_sample", str(k), f"{v:.10g}") for k, v in zip(ks, emp)]
            rows += [("pmf_geom", str(k), f"{geom * (1 - geom) ** k:.10g}") for k in ks]
        else:
            grid = np.linspace(*np.quantile(sample, [0.001, 0.999]), 201)
            rows += _ecdf_rows("ecdf_sample", sample, grid)
            if isinstance(limit, np.ndarray):
                rows += _ecdf_rows("ecdf_limit", limit, grid)
            else:
                from .stats import normal_cdf

                rows += [("cdf_normal", f"{g:.10g}", f"{v:.10g}") for g, v in zip(grid, normal_cdf(grid))]
        _write_plot_data(cfg.plot_data, rows)
    return EXIT_OK if verdict else EXIT_FAIL


def cmd_shotnoise(cfg: ExperimentConfig) -> int:
    started = time.perf_counter()
    _require(cfg, "pair", "t")
    pair, t = parse_law(cfg.pair), parse_real(cfg.t)
    if not isinstance(pair, dist.PairLaw):
        raise ConfigError("pair must be a pair law such as IndependentExpPareto(...)")
    expected = classify_pair(pair)
    verdict = cfg.verdict
    if verdict == "auto":
        if expected.replaceable is None:
            msg = "replaceability undecided for this pair law: " + expected.note
            print(msg, file=sys.stderr)
            _emit_report(cfg, _report(cfg, started, "Undecided", [], note=msg, verdict=None))
            return EXIT_UNSUPPORTED
        verdict = "replaceable" if expected.replaceable else ("stable" if expected.alpha < 2 else "normal")
    rows = run_trials(_shot_chunk, (pair, t, cfg.seed), cfg.trials, cfg.threads)
    v = np.array([r[0] for r in rows], dtype=float)
    r = np.array([r[1] for r in rows], dtype=float)
    d = deterministic_centering(pair, t)
    tests = []
    if not np.isnan(r).any():
        tests.append(ks_one_sample_normal((v - r) / math.sqrt(d), cfg.threshold, name="ks_normal_random_centering"))
    limit = "normal"
    fb = None
    if verdict == "replaceable":
        z = (v - d) / math.sqrt(d)
        tests.append(ks_one_sample_normal(z, cfg.threshold, name="ks_normal_deterministic_centering"))
        norm = {"a_t": math.sqrt(d)}
    elif verdict == "normal":
        a_t = pair.xi_mean**-1.5 * pair_norming_c(pair, t) * float(pair.eta_sf(t))
        z = (v - d) / a_t
        tests.append(ks_one_sample_normal(z, cfg.threshold, name="ks_normal_deterministic_centering"))
        norm = {"a_t": a_t}
    else:
        a_t = shotnoise_stable_norming(pair, t)
        z = (v - d) / a_t
        limit = dist.sample_limit_integral(expected.alpha, expected.beta, trial_rng(cfg.seed, LIMIT_STREAM), cfg.trials)
        tests.append(ks_two_sample(z, limit, cfg.threshold, name=f"ks_two_sample_stable({expected.alpha:g},{expected.beta:g})"))
        fb = stable_fallback(z, limit)
        norm = {"a_t": a_t}
    ok = all(x.passed for x in tests[:-1]) and (tests[-1].passed or (fb is not None and fb.passed))
    label = {True: "Replaceable", False: "NotReplaceable", None: "Undecided"}[expected.replaceable]
    return _finish(
        cfg, started, label, tests, z, limit=limit, fallback=fb, verdict=ok,
        centering={"deterministic": d, "random_mean": float(np.mean(r)) if not np.isnan(r).any() else None},
        norming=norm, configured_verdict=verdict,
    )


def cmd_moments(cfg: ExperimentConfig) -> int:
    _require(cfg, "a", "k")
    try:
        m = dist.geometric_moments(cfg.a, cfg.k)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("j", "moment"))
    for j, v in enumerate(m, 1):
        w.writerow((j, repr(v)))
    _write_text(cfg.out, buf.getvalue())
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "limit-check": cmd_limit_check,
    "shotnoise": cmd_shotnoise,
    "moments": cmd_moments,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", help="64-bit master seed")
    common.add_argument("--trials")
    common.add_argument("--n", help="number of balls; accepts 1e12, 10**15, exp(30)")
    common.add_argument("--t", help="shot-noise horizon")
    common.add_argument("--threads", help="worker processes")
    common.add_argument("--out", help="CSV or JSON output path (default stdout)")
    common.add_argument("--plot-data", dest="plot_data", help="write (series, x, y) rows for plotting")
    common.add_argument("--law", help='e.g. "TwoSidedLogPareto(p=1/3, theta=0.5)"')
    common.add_argument("--pair", help='e.g. "IndependentExpPareto(rate=1, beta=0.5)"')
    common.add_argument("--simulator", choices=SIMULATORS + ("auto",))
    common.add_argument("--centering", choices=("b", "b_prime"))
    common.add_argument("--threshold")
    common.add_argument("--verdict", choices=VERDICTS)
    common.add_argument("--a", help="geometric parameter for moments")
    common.add_argument("--k", help="number of moments")

    p = argparse.ArgumentParser(prog="sieve-lab", description="Bernoulli sieve experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnsupportedRegime as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED


if __name__ == "__main__":
    sys.exit(main())
