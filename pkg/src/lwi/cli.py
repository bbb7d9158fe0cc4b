"""Command-line sweeps producing CSV or JSON tables.

Every subcommand builds a :class:`SweepSpec`, evaluates it point by point
(optionally in a process pool) and writes one row per grid point in
row-major axis order.  Output is deterministic: no wall-clock values appear
unless ``--timestamp`` is given.

Exit codes: 0 success, 2 invalid spec, 3 some points failed (output still
written), 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .params import ModelParams, ParameterError, derive_rates

EXIT_OK, EXIT_INVALID, EXIT_PARTIAL, EXIT_IO = 0, 2, 3, 4

MODELS = ("three_level", "two_level")
METHODS = ("meanfield", "stability", "threshold", "cumulant", "exact")
DERIVED_AXES = ("pump_ratio", "delta_omega")
PARAM_FIELDS = tuple(ModelParams.__dataclass_fields__)

OUTPUTS = {
    "meanfield": ("inversion", "photon_density", "lasing"),
    "stability": ("growth_rate", "lasing"),
    "threshold": ("threshold",),
    "cumulant": ("inversion", "photon_density"),
    "exact": ("inversion", "photon_density", "g2", "fano", "top_fock_occupation", "truncated"),
}


class InvalidSpec(ValueError):
    pass


class OutputUnwritable(OSError):
    pass


# ---------------------------------------------------------------------------
# sweep specs and evaluation

@dataclass(frozen=True)
class SweepSpec:
    """One sweep: a solver, fixed parameters and a list of swept axes.

    Axis names are :class:`ModelParams` fields or ``pump_ratio`` (which sets
    the pump rates at total rate ``gamma_T``) or ``delta_omega`` (which moves
    the cavity).  Field overrides apply first, then detuning, then pump.
    """

    model: str
    method: str
    params: ModelParams
    axes: tuple[tuple[str, tuple[float, ...]], ...] = ()
    outputs: tuple[str, ...] = ()
    gamma_T: Optional[float] = None
    jobs: int = 1

    @property
    def levels(self) -> int:
        return 3 if self.model == "three_level" else 2

    @property
    def total_rate(self) -> float:
        if self.gamma_T is not None:
            return self.gamma_T
        rates = derive_rates(self.params)
        return rates.gamma_T3 if self.levels == 3 else rates.gamma_T2

    def validate(self) -> "SweepSpec":
        if self.model not in MODELS:
            raise InvalidSpec(f"unknown model {self.model!r}")
        if self.method not in METHODS:
            raise InvalidSpec(f"unknown method {self.method!r}")
        names = [n for n, _ in self.axes]
        if len(set(names)) != len(names):
            raise InvalidSpec("duplicate axis names")
        for name, values in self.axes:
            if name not in PARAM_FIELDS and name not in DERIVED_AXES:
                raise InvalidSpec(f"unknown axis {name!r}")
            if self.model == "two_level" and name in ("phi", "Omega", "omega_1", "omega_2"):
                raise InvalidSpec(f"axis {name!r} has no effect on the two-level model")
            if len(values) == 0:
                raise InvalidSpec(f"axis {name!r} is empty")
        allowed = OUTPUTS[self.method]
        bad = [o for o in self.outputs if o not in allowed]
        if bad:
            raise InvalidSpec(f"outputs {bad} not produced by method {self.method!r}")
        if self.jobs < 1:
            raise InvalidSpec("jobs must be positive")
        if self.total_rate <= 0 and "pump_ratio" in names:
            raise InvalidSpec("pump_ratio axis needs a positive gamma_T")
        return self

    @property
    def columns(self) -> tuple[str, ...]:
        return self.outputs or OUTPUTS[self.method]

    def points(self) -> list[tuple[float, ...]]:
        return list(itertools.product(*[v for _, v in self.axes]))

    def params_at(self, point: Sequence[float]) -> ModelParams:
        values = dict(zip([n for n, _ in self.axes], point))
        fields = {k: (int(v) if k in ("n_emitters", "fock_dim") else v)
                  for k, v in values.items() if k in PARAM_FIELDS}
        p = self.params.replace(**fields) if fields else self.params
        if "delta_omega" in values:
            p = p.with_detuning(values["delta_omega"])
        if "pump_ratio" in values:
            p = p.with_pump_ratio(values["pump_ratio"], self.total_rate, levels=self.levels)
        return p

    def to_dict(self) -> dict[str, Any]:
        return {"model": self.model, "method": self.method, "params": self.params.to_dict(),
                "axes": [[n, list(v)] for n, v in self.axes], "outputs": list(self.columns),
                "gamma_T": self.gamma_T}


@dataclass
class SweepResult:
    header: dict[str, Any]
    axis_names: tuple[str, ...]
    columns: tuple[str, ...]
    rows: list[tuple[tuple, dict[str, Any], str]] = field(default_factory=list)

    @property
    def failures(self) -> int:
        return sum(1 for *_, status in self.rows if status != "ok")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.header, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.axis_names) + list(self.columns) + ["status"])
        for point, values, status in self.rows:
            w.writerow([_fmt(x) for x in point] + [_fmt(values.get(c)) for c in self.columns]
                       + [status])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = [dict(zip(self.axis_names, map(_jsonable, point)),
                     **{c: _jsonable(values.get(c)) for c in self.columns}, status=status)
                for point, values, status in self.rows]
        return json.dumps({"header": self.header, "rows": rows}, indent=1, sort_keys=True) + "\n"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _jsonable(x):
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def evaluate_point(model: str, method: str, params: ModelParams,
                   gamma_T: float) -> dict[str, Any]:
    """Observables of one solver at one parameter point."""
    if model == "two_level":
        from . import twolevel as tl
        if method == "meanfield":
            o = tl.mf2_steady(params).observables
            return {"inversion": o.inversion, "photon_density": o.photon_density,
                    "lasing": o.lasing}
        if method == "stability":
            gr = float(np.linalg.eigvals(tl.jacobian2(params)).real.max())
            return {"growth_rate": gr, "lasing": gr > 0}
        if method == "threshold":
            r = tl.growth_rate2(params, np.linspace(0, 1, 101), gamma_T)
            return {"threshold": tl.threshold_scan2(params, gamma_T=gamma_T)
                    if np.any(r > 0) else math.inf}
        if method == "cumulant":
            o = tl.cumulant2_steady(params).observables
            return {"inversion": o.inversion, "photon_density": o.photon_density}
        return _exact_row(tl.exact2_steady(params))
    if method == "meanfield":
        from .meanfield import mf_steady
        o = mf_steady(params).observables
        return {"inversion": o.inversion, "photon_density": o.photon_density, "lasing": o.lasing}
    if method == "stability":
        from .stability import stability_report
        rep = stability_report(params)
        return {"growth_rate": rep.max_real, "lasing": rep.lasing}
    if method == "threshold":
        from .stability import lowest_threshold
        return {"threshold": lowest_threshold(params, gamma_T, np.linspace(0.0, 0.5, 201))}
    if method == "cumulant":
        from .cumulant import cumulant_steady
        o = cumulant_steady(params).observables
        return {"inversion": o.inversion, "photon_density": o.photon_density}
    from .permutation import steady_state
    return _exact_row(steady_state(params))


def _exact_row(res) -> dict[str, Any]:
    o, s = res.observables, res.photon_stats
    return {"inversion": o.inversion, "photon_density": o.photon_density, "g2": s.g2,
            "fano": s.fano, "top_fock_occupation": s.top_fock_occupation,
            "truncated": s.truncated}


def _task(args) -> tuple[dict[str, Any], str]:
    model, method, params, gamma_T = args
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return evaluate_point(model, method, params, gamma_T), "ok"
    except Exception as exc:  # per-point failures are recorded, not fatal
        return {}, f"error:{type(exc).__name__}"


def _map(fn, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def make_header(spec_dict: dict[str, Any], timestamp: bool = False) -> dict[str, Any]:
    header = {"spec": spec_dict, "version": __version__}
    if timestamp:
        header["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return header


def run_sweep(spec: SweepSpec, *, timestamp: bool = False) -> SweepResult:
    """Evaluate ``spec`` at every grid point (row-major over its axes)."""
    spec.validate()
    points = spec.points()
    tasks, prepared = [], []
    for pt in points:
        try:
            tasks.append((spec.model, spec.method, spec.params_at(pt), spec.total_rate))
            prepared.append(None)
        except ParameterError as exc:
            prepared.append(f"error:{type(exc).__name__}")
    results = iter(_map(_task, tasks, spec.jobs))
    rows = []
    for pt, bad in zip(points, prepared):
        values, status = ({}, bad) if bad else next(results)
        rows.append((pt, values, status))
    return SweepResult(make_header(spec.to_dict(), timestamp), tuple(n for n, _ in spec.axes),
                       spec.columns, rows)


def compare_methods(params: ModelParams, pump_axis, n_list, *, model: str = "three_level",
                    methods: Sequence[str] = ("meanfield", "cumulant", "exact"),
                    gamma_T: Optional[float] = None, jobs: int = 1,
                    timestamp: bool = False) -> SweepResult:
    """Inversion and photon density per (pump, N, method); mean field is tagged N=inf."""
    for m in methods:
        if m not in ("meanfield", "cumulant", "exact"):
            raise InvalidSpec(f"unknown comparison method {m!r}")
    base = SweepSpec(model, "meanfield", params, gamma_T=gamma_T).validate()
    keys = []
    for r in pump_axis:
        for m in methods:
            for n in (["inf"] if m == "meanfield" else list(n_list)):
                keys.append((float(r), n, m))
    tasks, prepared = [], []
    for r, n, m in keys:
        try:
            p = base.params if n == "inf" else base.params.replace(n_emitters=int(n))
            p = p.with_pump_ratio(r, base.total_rate, levels=base.levels)
            tasks.append((model, m, p, base.total_rate))
            prepared.append(None)
        except ParameterError as exc:
            prepared.append(f"error:{type(exc).__name__}")
    results = iter(_map(_task, tasks, jobs))
    rows = []
    for key, bad in zip(keys, prepared):
        values, status = ({}, bad) if bad else next(results)
        values = dict(values)
        values.setdefault("truncated", False)
        rows.append((key, values, status))
    spec = {"model": model, "methods": list(methods), "params": params.to_dict(),
            "pump_axis": [float(r) for r in pump_axis], "n_list": [int(n) for n in n_list],
            "gamma_T": gamma_T}
    return SweepResult(make_header(spec, timestamp), ("pump_ratio", "N", "method"),
                       ("inversion", "photon_density", "truncated"), rows)


def _minima_task(args):
    from .stability import MinimaRecord, minima_at
    params, phi, window, step = args
    try:
        return MinimaRecord(phi, *minima_at(params.replace(phi=phi), window, step)), "ok"
    except Exception as exc:
        return MinimaRecord(phi, None, None), f"error:{type(exc).__name__}"


def minima_sweep(params: ModelParams, phi_axis, *, window=(-3.0, 3.0), step: float = 0.02,
                 jump: float = 0.5, jobs: int = 1, timestamp: bool = False) -> SweepResult:
    from .stability import tag_events
    out = _map(_minima_task, [(params, float(phi), tuple(window), step) for phi in phi_axis],
               jobs)
    records = tag_events([r for r, _ in out], jump)
    rows = []
    for rec, (_, status) in zip(records, out):
        v = {}
        for name, m in (("positive", rec.positive), ("negative", rec.negative)):
            v[f"{name}_detuning"] = m.detuning if m else math.nan
            v[f"{name}_pump_ratio"] = m.pump_ratio if m else math.nan
        v["events"] = ";".join(rec.events)
        rows.append(((rec.phi,), v, status))
    spec = {"params": params.to_dict(), "phi_axis": [float(p) for p in phi_axis],
            "window": list(window), "step": step, "jump": jump}
    cols = ("positive_detuning", "positive_pump_ratio", "negative_detuning",
            "negative_pump_ratio", "events")
    return SweepResult(make_header(spec, timestamp), ("phi",), cols, rows)


# ---------------------------------------------------------------------------
# argument handling

def _axis(text: str) -> tuple[float, ...]:
    """``start:stop:num`` (inclusive linspace) or a comma-separated list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return tuple(float(x) for x in np.linspace(float(a), float(b), int(n)))
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad axis {text!r}: {exc}") from exc


def _load_config(path: Optional[str]) -> dict[str, Any]:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise OutputUnwritable(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidSpec(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidSpec("config must be a JSON object")
    return data


def _params(args, config: dict[str, Any]) -> ModelParams:
    data = dict(config.get("params", {}))
    for name in PARAM_FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            data[name] = v
    try:
        p = ModelParams.from_dict(data)
        if getattr(args, "delta_omega", None) is not None:
            p = p.with_detuning(args.delta_omega)
        return p
    except (ParameterError, TypeError) as exc:
        raise InvalidSpec(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lwi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with a 'params' object and defaults")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--jobs", type=int, default=None, help="worker processes")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--timestamp", action="store_true",
                        help="record the wall-clock time in the header")
    for name in PARAM_FIELDS:
        kind = int if name in ("n_emitters", "fock_dim") else float
        flag = "--" + name.replace("_", "-")
        common.add_argument(flag, dest=name, type=kind, default=None)
    common.add_argument("--delta-omega", dest="delta_omega", type=float, default=None,
                        help="set omega_e - nu by moving the cavity")
    common.add_argument("--gamma-T", dest="gamma_T", type=float, default=None,
                        help="total rate used by pump_ratio axes")

    p = sub.add_parser("phase-diagram", parents=[common], help="normal-state stability grid")
    p.add_argument("--model", choices=MODELS, default="three_level")
    p.add_argument("--pumps", type=_axis, default=_axis("0:0.5:201"))
    p.add_argument("--detunings", type=_axis, default=_axis("-3:3:201"))

    p = sub.add_parser("threshold", parents=[common], help="critical pump versus detuning")
    p.add_argument("--model", choices=MODELS, default="three_level")
    p.add_argument("--detunings", type=_axis, default=None)

    p = sub.add_parser("minima-track", parents=[common], help="threshold minima versus phase")
    p.add_argument("--phis", type=_axis, default=_axis(f"0:{math.pi}:33"))
    p.add_argument("--window", type=_axis, default=(-3.0, 3.0))
    p.add_argument("--step", type=float, default=0.02)
    p.add_argument("--jump", type=float, default=0.5)

    p = sub.add_parser("pump-sweep", parents=[common], help="steady states versus pump")
    p.add_argument("--model", choices=MODELS, default="three_level")
    p.add_argument("--method", choices=("meanfield", "cumulant", "exact"), default="meanfield")
    p.add_argument("--pumps", type=_axis, default=_axis("0.05:0.5:10"))

    p = sub.add_parser("compare", parents=[common], help="mean field, cumulant and exact")
    p.add_argument("--model", choices=MODELS, default="three_level")
    p.add_argument("--methods", default="meanfield,cumulant,exact")
    p.add_argument("--n-list", type=lambda s: [int(x) for x in s.split(",")], default=[2, 8])
    p.add_argument("--pumps", type=_axis, default=_axis("0.05:0.5:10"))

    p = sub.add_parser("photon-stats", parents=[common], help="exact g2 and Fano factor")
    p.add_argument("--model", choices=MODELS, default="three_level")
    p.add_argument("--pumps", type=_axis, default=_axis("0.05:0.5:10"))

    p = sub.add_parser("dims", parents=[common], help="symmetric and full basis sizes")
    p.add_argument("--levels", type=int, choices=(2, 3), default=3)
    p.add_argument("--n-list", type=lambda s: [int(x) for x in s.split(",")], default=None)
    return parser


def _setting(args, config, name, default):
    v = getattr(args, name, None)
    if v is None:
        v = config.get(name, default)
    return v


def _dims(args, config) -> SweepResult:
    from .permutation import basis_dimension, build_basis
    levels = args.levels
    n_list = args.n_list or config.get("n_list") or [1, 2, 4, 8]
    P = args.fock_dim or config.get("params", {}).get("fock_dim", 10)
    excitation = [1, 0] if levels == 2 else [1, 0, 0]
    rows = []
    for n in n_list:
        sym, full = basis_dimension(int(n), levels)
        sector = build_basis(int(n), levels, int(P), excitation).dimension
        rows.append(((int(n),), {"symmetric": sym, "full": full, "sector": sector}, "ok"))
    spec = {"levels": levels, "n_list": [int(n) for n in n_list], "fock_dim": int(P)}
    return SweepResult(make_header(spec, args.timestamp), ("N",),
                       ("symmetric", "full", "sector"), rows)


def dispatch(args) -> SweepResult:
    config = _load_config(args.config)
    if args.command == "dims":
        return _dims(args, config)
    params = _params(args, config)
    jobs = int(_setting(args, config, "jobs", 1))
    gamma_T = _setting(args, config, "gamma_T", None)
    ts = args.timestamp
    cmd = args.command
    if cmd == "minima-track":
        return minima_sweep(params, args.phis, window=tuple(args.window), step=args.step,
                            jump=args.jump, jobs=jobs, timestamp=ts)
    model = _setting(args, config, "model", "three_level")
    if cmd == "compare":
        methods = [m for m in args.methods.split(",") if m]
        return compare_methods(params, args.pumps, args.n_list, model=model, methods=methods,
                               gamma_T=gamma_T, jobs=jobs, timestamp=ts)
    if cmd == "phase-diagram":
        spec = SweepSpec(model, "stability", params,
                         (("delta_omega", args.detunings), ("pump_ratio", args.pumps)),
                         gamma_T=gamma_T, jobs=jobs)
    elif cmd == "threshold":
        axes = (("delta_omega", args.detunings),) if args.detunings else ()
        spec = SweepSpec(model, "threshold", params, axes, gamma_T=gamma_T, jobs=jobs)
    elif cmd == "pump-sweep":
        spec = SweepSpec(model, args.method, params, (("pump_ratio", args.pumps),),
                         gamma_T=gamma_T, jobs=jobs)
    else:
        spec = SweepSpec(model, "exact", params, (("pump_ratio", args.pumps),),
                         ("g2", "fano", "top_fock_occupation", "truncated"),
                         gamma_T=gamma_T, jobs=jobs)
    return run_sweep(spec, timestamp=ts)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = dispatch(args)
    except InvalidSpec as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OutputUnwritable as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO
    fmt = args.format or "csv"
    text = result.to_csv() if fmt == "csv" else result.to_json()
    try:
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_PARTIAL if result.failures else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
