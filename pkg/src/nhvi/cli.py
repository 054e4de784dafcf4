"""Command line front end: ``simulate``, ``check`` and ``compare``.

Configurations are JSON documents with the sections ``system``, ``initial``,
``solver`` and ``run`` (plus ``check`` and ``compare`` for those commands).
Exit codes: 0 success, 1 configuration error or failed check, 2 step failure,
3 oracle failure.
"""

import argparse
import csv
import json
import os
import sys
import warnings
from dataclasses import dataclass, fields

import numpy as np

from .chaplygin import build_chaplygin, project_and_compare
from .core import ExtendedPair, SolverConfig
from .errors import (
    ConfigurationError,
    NHVIError,
    NotChaplyginError,
    OracleError,
    StepFailure,
)
from .geometry import momentum_equation_residual, nonholonomic_momentum, symplectic_evolution_residual
from .reference.catalog import get_system, initial_pair
from .reference.oracle import solve_reference
from .stepper import make_admissible, pair_diagnostics, simulate, step_edla

EXIT_OK, EXIT_CONFIG, EXIT_STEP, EXIT_ORACLE = 0, 1, 2, 3

PROPERTIES = ("energy", "momentum-eq", "horizontal", "symplectic", "chaplygin-projection", "convergence")

DEFAULT_THRESHOLDS = {
    "energy": 1e-10,
    "momentum-eq": 1e-10,
    "horizontal": 1e-10,
    "symplectic": 1e-4,
    "symplectic-unconstrained": 1e-5,
    "chaplygin-projection": 1e-9,
}


@dataclass
class RunSpec:
    entry: object
    pair: ExtendedPair
    cfg: SolverConfig
    steps: int
    raw: dict


def _float(value, where):
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{where}: expected a number, got {value!r}")
    if not np.isfinite(out):
        raise ConfigurationError(f"{where}: must be finite")
    return out


def _vector(value, n, where):
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise ConfigurationError(f"{where}: expected a list of {n} numbers")
    return np.array([_float(v, f"{where}[{i}]") for i, v in enumerate(value)])


def _section(doc, name, required=True):
    if name not in doc:
        if required:
            raise ConfigurationError(f"missing section {name!r}")
        return {}
    sec = doc[name]
    if not isinstance(sec, dict):
        raise ConfigurationError(f"section {name!r} must be an object")
    return sec


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigurationError("config root must be an object")
    return doc


def _solver_config(sec):
    known = {f.name for f in fields(SolverConfig)}
    for key in sec:
        if key not in known:
            raise ConfigurationError(f"solver.{key}: unknown setting")
    kw = {}
    for key, value in sec.items():
        if key == "guess_mode":
            kw[key] = str(value)
        elif key == "max_iter":
            kw[key] = int(_float(value, f"solver.{key}"))
        else:
            kw[key] = _float(value, f"solver.{key}")
    return SolverConfig(**kw)


def parse_run(doc):
    """Build the system, admissible first pair, solver settings and step count."""
    sysec = _section(doc, "system")
    if "name" not in sysec:
        raise ConfigurationError("system.name: missing")
    params = sysec.get("params", {})
    if not isinstance(params, dict):
        raise ConfigurationError("system.params: must be an object")
    try:
        entry = get_system(
            str(sysec["name"]), **{k: _float(v, f"system.params.{k}") for k, v in params.items()}
        )
    except KeyError as exc:
        raise ConfigurationError(f"system.name: {exc.args[0]}")
    except TypeError as exc:
        raise ConfigurationError(f"system.params: {exc}")
    n = entry.system.n

    cfg = _solver_config(_section(doc, "solver", required=False))
    run = _section(doc, "run")
    if "steps" not in run:
        raise ConfigurationError("run.steps: missing")
    steps = int(_float(run["steps"], "run.steps"))
    if steps < 0:
        raise ConfigurationError("run.steps: must be non-negative")

    init = _section(doc, "initial", required=False)
    if "t1" in init or "q1" in init:
        for key in ("t0", "q0", "t1", "q1"):
            if key not in init:
                raise ConfigurationError(f"initial.{key}: missing")
        t0 = _float(init["t0"], "initial.t0")
        t1 = _float(init["t1"], "initial.t1")
        if not t1 > t0:
            raise ConfigurationError("initial.t1: must exceed initial.t0")
        pair = ExtendedPair.of(t0, _vector(init["q0"], n, "initial.q0"), t1, _vector(init["q1"], n, "initial.q1"))
        if init.get("project", False):
            pair = make_admissible(entry.system, pair)
        viol = np.max(np.abs(entry.system.omega_d(*pair.args()))) if entry.system.m else 0.0
        if viol > cfg.tol:
            raise ConfigurationError(f"initial.q1: pair violates the discrete constraints by {viol:.3e}")
    else:
        h = _float(init.get("h", entry.h), "initial.h")
        if not h > 0:
            raise ConfigurationError("initial.h: must be positive")
        t0 = _float(init.get("t0", entry.t0), "initial.t0")
        q0 = _vector(init["q0"], n, "initial.q0") if "q0" in init else entry.q0
        v0 = _vector(init["v0"], n, "initial.v0") if "v0" in init else entry.v0
        method = str(init.get("method", "oracle"))
        if method not in ("oracle", "linear"):
            raise ConfigurationError("initial.method: must be 'oracle' or 'linear'")
        W = entry.continuous.constraint_matrix(t0, q0)
        if W.shape[0] and np.max(np.abs(W @ v0)) > 1e-12:
            raise ConfigurationError("initial.v0: violates the constraints")
        pair = initial_pair(entry, h=h, t0=t0, q0=q0, v0=v0, method=method)
    return RunSpec(entry, pair, cfg, steps, doc)


def _fmt(x):
    return format(float(x), ".17g")


NAN = "nan"


def trajectory_rows(entry, traj):
    """CSV rows: pair ``(k, k+1)`` diagnostics sit on row ``k``, the
    multiplier of point ``k`` on row ``k``, solver stats on the produced point."""
    sysm = entry.system
    n, m = sysm.n, sysm.m
    npts = len(traj.points)
    p = len(traj.diagnostics[0].momentum) if traj.diagnostics else 0
    header = (
        ["k", "t"]
        + [f"q_{i + 1}" for i in range(n)]
        + [f"lambda_{i + 1}" for i in range(m)]
        + ["E_plus", "E_minus", "constraint_res"]
        + [f"momentum_{i + 1}" for i in range(p)]
        + ["newton_iters", "residual"]
    )
    rows = [header]
    for k, pt in enumerate(traj.points):
        row = [str(k), _fmt(pt.t)] + [_fmt(v) for v in pt.q]
        if 1 <= k <= len(traj.multipliers):
            row += [_fmt(v) for v in traj.multipliers[k - 1]]
        else:
            row += [NAN] * m
        if k < len(traj.diagnostics):
            d = traj.diagnostics[k]
            row += [_fmt(d.e_plus), _fmt(d.e_minus), _fmt(d.constraint_residual)]
            row += [_fmt(v) for v in d.momentum]
        else:
            row += [NAN] * (3 + p)
        if k >= 2 and k - 2 < len(traj.solver_stats):
            s = traj.solver_stats[k - 2]
            row += [str(s.iterations), _fmt(s.residual_norm)]
        else:
            row += [NAN, NAN]
        rows.append(row)
    assert len(rows) == npts + 1
    return rows


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def run_simulation(spec):
    """Returns ``(trajectory, failure)``; ``failure`` is a StepFailure or None."""
    try:
        return simulate(spec.entry.system, spec.pair, spec.steps, spec.cfg, spec.entry.sections), None
    except StepFailure as exc:
        return exc.trajectory, exc


def cmd_simulate(args):
    spec = parse_run(load_config(args.config))
    traj, failure = run_simulation(spec)
    write_csv(args.out, trajectory_rows(spec.entry, traj))
    if failure is not None:
        print(f"error: {failure}", file=sys.stderr)
        return EXIT_STEP
    return EXIT_OK


@dataclass
class PropertyResult:
    name: str
    status: str
    worst: float = float("nan")
    threshold: float = float("nan")
    note: str = ""

    def line(self):
        text = f"{self.name}: {self.status}"
        if np.isfinite(self.worst):
            text += f" worst={self.worst:.3e} threshold={self.threshold:.1e}"
        if self.note:
            text += f" ({self.note})"
        return text


def _threshold(spec, name):
    return float(_section(spec.raw, "check", required=False).get("thresholds", {}).get(name, DEFAULT_THRESHOLDS[name]))


def _check_energy(spec, traj):
    e = traj.energies
    worst = float(np.max(np.abs(e - e[0])))
    thr = _threshold(spec, "energy")
    note = "" if spec.entry.system.autonomous else "nonautonomous system: energy is not expected to be conserved"
    return PropertyResult("energy", "PASS" if worst <= thr else "FAIL", worst, thr, note)


def _check_momentum_eq(spec, traj):
    secs = [s for s in spec.entry.sections if not s.constant]
    act = spec.entry.system.action
    if act is None or not secs:
        return PropertyResult("momentum-eq", "SKIP", note="no non-constant section of g^D")
    pairs = traj.pairs()
    worst = max(
        momentum_equation_residual(spec.entry.system, act, a, b, s)
        for s in secs
        for a, b in zip(pairs[:-1], pairs[1:])
    )
    thr = _threshold(spec, "momentum-eq")
    return PropertyResult("momentum-eq", "PASS" if worst <= thr else "FAIL", worst, thr)


def _check_horizontal(spec, traj):
    act = spec.entry.system.action
    if act is None or not spec.entry.horizontal:
        return PropertyResult("horizontal", "SKIP", note="no horizontal symmetry")
    worst = 0.0
    for s in spec.entry.horizontal:
        j = np.array([nonholonomic_momentum(spec.entry.system, act, p, s) for p in traj.pairs()])
        worst = max(worst, float(np.max(np.abs(j - j[0]))))
    thr = _threshold(spec, "horizontal")
    return PropertyResult("horizontal", "PASS" if worst <= thr else "FAIL", worst, thr)


def _check_symplectic(spec, traj, rng):
    sysm = spec.entry.system
    pairs = traj.pairs()[:-1] or traj.pairs()
    count = int(_section(spec.raw, "check", required=False).get("symplectic_samples", 3))
    idx = sorted(rng.choice(len(pairs), size=min(count, len(pairs)), replace=False))
    thr = _threshold(spec, "symplectic" if sysm.m else "symplectic-unconstrained")
    worst = 0.0
    for i in idx:
        try:
            worst = max(worst, symplectic_evolution_residual(sysm, pairs[i], spec.cfg))
        except NHVIError as exc:
            # Perturbed steps without a nearby root: the flow derivative is not resolvable.
            note = f"step map not resolvable at pair {i}: {type(exc).__name__}: {exc}"
            return PropertyResult("symplectic", "FAIL", np.inf, thr, note)
    return PropertyResult("symplectic", "PASS" if worst <= thr else "FAIL", worst, thr, f"{len(idx)} sampled pairs")


def _check_chaplygin(spec, traj):
    entry = spec.entry
    act = entry.system.action
    if act is None:
        return PropertyResult("chaplygin-projection", "SKIP", note="system has no symmetry")
    chart = entry.chaplygin
    try:
        if chart is None:
            cs = build_chaplygin(entry.system, act, act.coordinates)
        else:
            cs = build_chaplygin(
                entry.system, act, chart.group_indices, chart.transition, chart.transition_jacobian
            )
    except NotChaplyginError as exc:
        return PropertyResult("chaplygin-projection", "SKIP", note=f"g^D nontrivial: {exc}")
    worst = project_and_compare(cs, traj, spec.cfg)
    thr = _threshold(spec, "chaplygin-projection")
    return PropertyResult("chaplygin-projection", "PASS" if worst <= thr else "FAIL", worst, thr)


def _check_convergence(spec):
    sec = _section(spec.raw, "compare", required=False)
    if not sec:
        return PropertyResult("convergence", "SKIP", note="no compare section in config")
    hs, errs, slope = convergence_study(spec, sec)
    lo, hi = _band(sec)
    ok = lo <= slope <= hi
    return PropertyResult("convergence", "PASS" if ok else "FAIL", slope, hi, f"slope band [{lo}, {hi}]")


def _band(sec):
    band = sec.get("slope_band", [1.8, 2.2])
    if not isinstance(band, (list, tuple)) or len(band) != 2:
        raise ConfigurationError("compare.slope_band: expected [low, high]")
    return _float(band[0], "compare.slope_band[0]"), _float(band[1], "compare.slope_band[1]")


def seed_from_env():
    raw = os.environ.get("NHVI_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"NHVI_SEED must be an integer, got {raw!r}")


def cmd_check(args):
    spec = parse_run(load_config(args.config))
    props = [p.strip() for p in args.properties.split(",") if p.strip()]
    if props == ["all"]:
        props = list(PROPERTIES)
    for p in props:
        if p not in PROPERTIES:
            raise ConfigurationError(f"--properties: unknown property {p!r}; choose from {PROPERTIES}")
    rng = np.random.default_rng(seed_from_env())
    traj, failure = run_simulation(spec)
    if failure is not None:
        print(f"error: {failure}", file=sys.stderr)
        return EXIT_STEP
    results = []
    for p in PROPERTIES:
        if p not in props:
            continue
        if p == "energy":
            results.append(_check_energy(spec, traj))
        elif p == "momentum-eq":
            results.append(_check_momentum_eq(spec, traj))
        elif p == "horizontal":
            results.append(_check_horizontal(spec, traj))
        elif p == "symplectic":
            results.append(_check_symplectic(spec, traj, rng))
        elif p == "chaplygin-projection":
            results.append(_check_chaplygin(spec, traj))
        else:
            results.append(_check_convergence(spec))
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.status != "FAIL" for r in results) else EXIT_CONFIG


def global_error(entry, pair, cfg, ref, t_end, max_steps=100000):
    """Max-norm configuration error against ``ref`` at every discrete time up to ``t_end``."""
    worst = float(np.max(np.abs(pair.p1.q - ref(pair.p1.t))))
    lam = None
    for _ in range(max_steps):
        res = step_edla(entry.system, pair, cfg, lam)
        lam = res.lam
        if res.next.t > t_end:
            return worst
        worst = max(worst, float(np.max(np.abs(res.next.q - ref(res.next.t)))))
        pair = ExtendedPair(pair.p1, res.next)
    raise NHVIError(f"did not reach t={t_end} in {max_steps} steps")


def convergence_study(spec, sec):
    ladder = sec.get("ladder")
    if not isinstance(ladder, (list, tuple)) or not ladder:
        raise ConfigurationError("compare.ladder: expected a non-empty list of step sizes")
    hs = np.array([_float(h, f"compare.ladder[{i}]") for i, h in enumerate(ladder)])
    if np.any(hs <= 0):
        raise ConfigurationError("compare.ladder: step sizes must be positive")
    if hs.size < 2:
        raise ConfigurationError("compare.ladder: at least two rungs are needed to fit a slope")
    span = _float(sec.get("t_final", 2.0), "compare.t_final")
    accuracy = _float(sec.get("accuracy", 1e-12), "compare.accuracy")
    entry = spec.entry
    t0, q0 = spec.pair.p0.t, spec.pair.p0.q
    init = _section(spec.raw, "initial", required=False)
    if "q1" in init:
        raise ConfigurationError("initial: a convergence study needs (t0, q0, v0) initial data, not a pair")
    v0 = _vector(init["v0"], entry.system.n, "initial.v0") if "v0" in init else entry.v0
    try:
        ref = solve_reference(entry.continuous, t0, q0, v0, t0 + span + 2 * hs.max(), accuracy)
    except NHVIError as exc:
        raise OracleError(str(exc))
    errs = []
    for h in hs:
        pair = make_admissible(entry.system, ExtendedPair.of(t0, q0, t0 + h, ref(t0 + h)))
        errs.append(global_error(entry, pair, spec.cfg, ref, t0 + span))
    errs = np.array(errs)
    slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    return hs, errs, slope


def cmd_compare(args):
    spec = parse_run(load_config(args.config))
    sec = _section(spec.raw, "compare")
    hs, errs, slope = convergence_study(spec, sec)
    rows = [["h", "error"]] + [[_fmt(h), _fmt(e)] for h, e in zip(hs, errs)]
    write_csv(args.out, rows)
    lo, hi = _band(sec)
    print(f"slope={slope:.4f} band=[{lo}, {hi}]")
    return EXIT_OK if lo <= slope <= hi else EXIT_CONFIG


def build_parser():
    parser = argparse.ArgumentParser(prog="nhvi", description="Nonholonomic variational integrators")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="run a trajectory and write CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("check", help="run property suites")
    p.add_argument("--config", required=True)
    p.add_argument("--properties", default="all", help=f"comma separated subset of {', '.join(PROPERTIES)}")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("compare", help="convergence study against the continuous oracle")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except NHVIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STEP


if __name__ == "__main__":
    sys.exit(main())
