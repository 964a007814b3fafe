"""Command-line front end: dispatch queries to the solvers and emit CSV.

Commands mirror the library surface one-to-one: the Gaussian programs
(gaussian-cascade, gaussian-triangular, gaussian-two-way, gaussian-extended),
the discrete evaluators and search (discrete-eval, discrete-search), the
binning simulator (simulate) and the product-coupling checker (kaspi-check).
Every numeric flag can be swept ("--sweep r2:log:0.5:4:32"); results land in
a CSV with provenance comments, one row per sweep point, infeasible points
marked in the status column rather than dropped.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import InfeasibleError
from . import discrete, gaussian, probability, simulate


@dataclass
class ResultTable:
    columns: list
    rows: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def add(self, **cells):
        self.rows.append(cells)

    def has_errors(self) -> bool:
        return any(r.get("status") == "error" for r in self.rows)


def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if not math.isfinite(v):
        return ""  # inf/nan never appear in output cells
    return "%.12g" % v


def emit_csv(table: ResultTable, path: str | None) -> None:
    """Write the table; header first, provenance as leading '#' comments.

    Writes to a temp file and renames so a failed run never leaves a partial
    CSV behind; path None prints to stdout.
    """
    lines = [f"# {k}: {v}" for k, v in table.provenance.items()]
    lines.append(",".join(table.columns))
    for row in table.rows:
        lines.append(",".join(_fmt_cell(row.get(c)) for c in table.columns))
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".cascade-rd-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ConfigError(ValueError):
    pass


def load_config(path: str) -> dict:
    """Flat key-value config: one 'key value' or 'key = value' per line."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace("=", " ", 1).split(None, 1)
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'key value', got {raw!r}")
            out[parts[0].strip()] = (parts[1].strip(), lineno)
    return out


@dataclass(frozen=True)
class Param:
    name: str  # flag name, e.g. "var-a"
    kind: type  # float, int or str
    required: bool = True
    default: object = None
    help: str = ""

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


def _parse_sweep(spec: str, params):
    parts = spec.split(":")
    if len(parts) != 5:
        raise ConfigError("sweep must be 'param:lin|log:min:max:steps'")
    name, scale, lo, hi, steps = parts
    numeric = {p.name for p in params if p.kind in (float, int)}
    if name not in numeric:
        raise ConfigError(f"sweep parameter {name!r} not a numeric parameter "
                          f"of this command (have {sorted(numeric)})")
    if scale not in ("lin", "log"):
        raise ConfigError(f"sweep scale must be lin or log, got {scale!r}")
    lo, hi = float(lo), float(hi)
    steps = int(steps)
    if steps < 1:
        raise ConfigError("sweep needs at least one step")
    if steps == 1:
        values = np.array([lo])
    elif scale == "lin":
        values = np.linspace(lo, hi, steps)
    else:
        if lo <= 0 or hi <= 0:
            raise ConfigError("log sweep bounds must be positive")
        values = np.geomspace(lo, hi, steps)
    return name.replace("-", "_"), values


def _resolve(args, params, swept: str | None = None):
    """Merge config-file values under the flags, validate, coerce types.

    The swept parameter, if any, gets its values from the sweep axis and is
    exempt from the required check.
    """
    values = {}
    cfg = load_config(args.config) if args.config else {}
    known = {p.name: p for p in params}
    for key, (text, lineno) in cfg.items():
        if key in ("seed", "out", "sweep"):
            continue
        if key not in known:
            raise ConfigError(f"{args.config}:{lineno}: unknown key {key!r}")
    for p in params:
        flag_val = getattr(args, p.dest)
        if flag_val is not None:
            values[p.dest] = p.kind(flag_val)
            continue
        if p.name in cfg:
            text, lineno = cfg[p.name]
            try:
                values[p.dest] = p.kind(text)
            except ValueError as exc:
                raise ConfigError(
                    f"{args.config}:{lineno}: bad value for {p.name!r}: {exc}"
                ) from exc
            continue
        if p.default is not None:
            values[p.dest] = p.default
        elif p.required and p.dest != swept:
            raise ConfigError(f"missing required parameter '{p.name}'")
        else:
            values[p.dest] = None
    return values


def _config_hash(command, values, seed) -> str:
    canon = "\n".join(
        [f"command={command}", f"seed={seed}"]
        + sorted(f"{k}={v}" for k, v in values.items())
    )
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _run_points(command, args, params, in_cols, out_cols, compute):
    """Shared driver: resolve params, expand the sweep, evaluate each point."""
    sweep_cells = [(None, [None])]
    if args.sweep:
        dest, vals = _parse_sweep(args.sweep, params)
        sweep_cells = [(dest, vals)]
    values = _resolve(args, params, swept=sweep_cells[0][0])
    seed = int(args.seed)
    table = ResultTable(
        columns=in_cols + out_cols + ["status", "detail"],
        provenance={
            "tool": f"cascade-rd {__version__}",
            "command": command,
            "seed": seed,
            "config-hash": _config_hash(command, values, seed),
        },
    )
    dest, vals = sweep_cells[0]
    for v in vals:
        point = dict(values)
        if dest is not None:
            point[dest] = float(v)
        row = {c: point.get(c) for c in in_cols}
        try:
            row.update(compute(point, seed))
            row["status"] = "ok"
        except InfeasibleError as exc:
            row["status"] = "infeasible"
            row["detail"] = str(exc)
        except Exception as exc:  # noqa: BLE001 - reported as an error row
            row["status"] = "error"
            row["detail"] = f"{type(exc).__name__}: {exc}"
        table.add(**row)
    return table


# ------------------------------------------------------------------- commands

GAUSSIAN_SRC = [
    Param("var-a", float, help="variance of the private component A"),
    Param("var-b", float, help="variance of the shared component B"),
    Param("var-z", float, help="variance of the side-information component Z"),
]


def _gaussian_source(p):
    return gaussian.GaussianCascadeSource(p["var_a"], p["var_b"], p["var_z"])


def cmd_gaussian_cascade(point, seed):
    sol = gaussian.cascade_min_r1(
        _gaussian_source(point), point["d1"], point["d2"], point["r2"]
    )
    return {"r1": sol.r1, "alpha": sol.aux.alpha, "beta": sol.aux.beta}


def cmd_gaussian_triangular(point, seed):
    sol = gaussian.triangular_min_r1(
        _gaussian_source(point), point["d1"], point["d2"], point["r2"], point["r3"]
    )
    return {"r1": sol.r1, "alpha": sol.aux.alpha, "beta": sol.aux.beta}


def cmd_gaussian_two_way(point, seed):
    sol = gaussian.two_way_triangular_min_r1(
        _gaussian_source(point), point["d1"], point["d2"], point["d3"],
        point["r2"], point["r3"], point["r4"],
    )
    return {
        "r1": sol.r1, "alpha": sol.aux.alpha, "beta": sol.aux.beta,
        "r4_threshold": sol.r4_threshold,
    }


def cmd_gaussian_extended(point, seed):
    src = _gaussian_source(point)
    con = gaussian.extended_backward_achievability(
        src, point["dz1"], point["dz2"], point["r3"], point["r4"]
    )
    chk = gaussian.extended_backward_region_check(
        src, (con.r3, con.r4, con.r5), (point["dz1"], point["dz2"])
    )
    return {
        "case": con.case_id,
        "r3_achieved": con.r3, "r4_achieved": con.r4, "r5_achieved": con.r5,
        "dist_z1": con.dist_z1, "dist_z2": con.dist_z2,
        "slack_r3": chk.slacks[0], "slack_r3_r5": chk.slacks[1],
        "slack_r4_r5": chk.slacks[2],
    }


def _load_source(path):
    with open(path) as fh:
        return discrete.load_source_spec(fh.read())


def _load_aux(path):
    with open(path) as fh:
        return discrete.load_aux(fh.read())


_EVALUATORS = {
    "cascade": discrete.eval_cascade_point,
    "triangular": discrete.eval_triangular_point,
    "two-way-cascade": discrete.eval_two_way_cascade_point,
    "two-way-triangular": discrete.eval_two_way_triangular_point,
    "helper": discrete.eval_helper_triangular_point,
}


def cmd_discrete_eval(point, seed):
    setting = point["setting"]
    if setting not in _EVALUATORS:
        raise ConfigError(
            f"unknown setting {setting!r}; choose from {sorted(_EVALUATORS)}"
        )
    pt = _EVALUATORS[setting](_load_source(point["source"]), _load_aux(point["aux"]))
    return {k: getattr(pt, k) for k in ("r1", "r2", "r3", "r4", "rh", "d1", "d2", "d3")}


def cmd_discrete_search(point, seed):
    res = discrete.min_r1_cascade_search(
        _load_source(point["source"]), point["d1"], point["d2"], point["r2"],
        u_size=point["u_size"], restarts=point["restarts"], seed=seed,
    )
    return {
        "r1": res.r1, "r2_achieved": res.point.r2,
        "d1_achieved": res.point.d1, "d2_achieved": res.point.d2,
    }


def cmd_simulate(point, seed):
    res = simulate.run_simulation(
        _load_source(point["source"]), _load_aux(point["aux"]),
        simulate.TypicalityParams(epsilon=point["epsilon"], n=point["n"]),
        delta=point["delta"], trials=point["trials"], seed=seed,
    )
    rates = res.event_rates()
    out = {f"e{i}_rate": rates[i] for i in range(6)}
    out.update({
        "d1_mean": res.d1_mean, "d2_mean": res.d2_mean,
        "d1_ci": res.d1_ci, "d2_ci": res.d2_ci,
        "clean_trials": res.clean_trials,
        "d1_mean_clean": res.d1_mean_clean, "d2_mean_clean": res.d2_mean_clean,
        "summary": res.summary(),
    })
    return out


def cmd_kaspi_check(point, seed):
    rng = np.random.default_rng(seed)
    sizes = (point["size_a1"], point["size_a2"], point["size_b1"], point["size_b2"])
    na1, na2, nb1, nb2 = (int(s) for s in sizes)
    nm1, nm2 = int(point["m1_size"]), int(point["m2_size"])
    worst = (0.0, 0.0, 0.0)
    for _ in range(int(point["instances"])):
        p1 = probability.JointPMF(
            rng.dirichlet(np.ones(na1 * nb1)).reshape(na1, nb1)
        )
        p2 = probability.JointPMF(
            rng.dirichlet(np.ones(na2 * nb2)).reshape(na2, nb2)
        )
        m1 = probability.DeterministicMap(
            rng.integers(0, nm1, size=(na1, na2)), nm1
        )
        m2 = probability.DeterministicMap(
            rng.integers(0, nm2, size=(nb1, nb2, nm1)), nm2
        )
        vals = probability.kaspi_lemma_check(p1, p2, m1, m2)
        worst = tuple(max(w, v) for w, v in zip(worst, vals))
    return {"max_i1": worst[0], "max_i2": worst[1], "max_i3": worst[2]}


COMMANDS = {
    "gaussian-cascade": (
        GAUSSIAN_SRC + [Param("d1", float), Param("d2", float), Param("r2", float)],
        ["var_a", "var_b", "var_z", "d1", "d2", "r2"],
        ["r1", "alpha", "beta"],
        cmd_gaussian_cascade,
    ),
    "gaussian-triangular": (
        GAUSSIAN_SRC + [Param("d1", float), Param("d2", float),
                        Param("r2", float), Param("r3", float)],
        ["var_a", "var_b", "var_z", "d1", "d2", "r2", "r3"],
        ["r1", "alpha", "beta"],
        cmd_gaussian_triangular,
    ),
    "gaussian-two-way": (
        GAUSSIAN_SRC + [Param("d1", float), Param("d2", float), Param("d3", float),
                        Param("r2", float), Param("r3", float), Param("r4", float)],
        ["var_a", "var_b", "var_z", "d1", "d2", "d3", "r2", "r3", "r4"],
        ["r1", "alpha", "beta", "r4_threshold"],
        cmd_gaussian_two_way,
    ),
    "gaussian-extended": (
        GAUSSIAN_SRC + [Param("dz1", float), Param("dz2", float),
                        Param("r3", float), Param("r4", float)],
        ["var_a", "var_b", "var_z", "dz1", "dz2", "r3", "r4"],
        ["case", "r3_achieved", "r4_achieved", "r5_achieved",
         "dist_z1", "dist_z2", "slack_r3", "slack_r3_r5", "slack_r4_r5"],
        cmd_gaussian_extended,
    ),
    "discrete-eval": (
        [Param("source", str), Param("aux", str), Param("setting", str)],
        ["source", "aux", "setting"],
        ["r1", "r2", "r3", "r4", "rh", "d1", "d2", "d3"],
        cmd_discrete_eval,
    ),
    "discrete-search": (
        [Param("source", str), Param("d1", float), Param("d2", float),
         Param("r2", float), Param("u-size", int),
         Param("restarts", int, required=False, default=16)],
        ["source", "d1", "d2", "r2", "u_size", "restarts"],
        ["r1", "r2_achieved", "d1_achieved", "d2_achieved"],
        cmd_discrete_search,
    ),
    "simulate": (
        [Param("source", str), Param("aux", str), Param("n", int),
         Param("epsilon", float), Param("delta", float, required=False, default=0.15),
         Param("trials", int)],
        ["source", "aux", "n", "epsilon", "delta", "trials"],
        ["e0_rate", "e1_rate", "e2_rate", "e3_rate", "e4_rate", "e5_rate",
         "d1_mean", "d1_ci", "d2_mean", "d2_ci", "clean_trials",
         "d1_mean_clean", "d2_mean_clean"],
        cmd_simulate,
    ),
    "kaspi-check": (
        [Param("size-a1", int, required=False, default=2),
         Param("size-a2", int, required=False, default=2),
         Param("size-b1", int, required=False, default=2),
         Param("size-b2", int, required=False, default=2),
         Param("m1-size", int, required=False, default=2),
         Param("m2-size", int, required=False, default=2),
         Param("instances", int, required=False, default=50)],
        ["size_a1", "size_a2", "size_b1", "size_b2", "m1_size", "m2_size",
         "instances"],
        ["max_i1", "max_i2", "max_i3"],
        cmd_kaspi_check,
    ),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascade-rd",
        description="rate-distortion regions for cascade source coding with "
                    "degraded side information",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (params, _, _, _) in COMMANDS.items():
        p = sub.add_parser(name)
        for prm in params:
            p.add_argument(f"--{prm.name}", dest=prm.dest, default=None,
                           help=prm.help or prm.name)
        p.add_argument("--config", default=None, help="key-value config file")
        p.add_argument("--seed", default=0, type=int)
        p.add_argument("--out", default=None, help="CSV output path")
        p.add_argument("--sweep", default=None,
                       help="param:lin|log:min:max:steps")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    params, in_cols, out_cols, compute = COMMANDS[args.command]
    try:
        table = _run_points(args.command, args, params, in_cols, out_cols, compute)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summaries = [r.pop("summary") for r in table.rows if "summary" in r]
    emit_csv(table, args.out)
    stream = sys.stdout if args.out else sys.stderr
    for s in summaries:
        print(s, file=stream)
    return 1 if table.has_errors() else 0


if __name__ == "__main__":
    sys.exit(main())
