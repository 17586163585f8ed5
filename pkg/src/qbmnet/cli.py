"""Command-line driver: parameter sweeps over a detector pair and point probes.

Configuration is a JSON object; command-line flags override file values and
``QBMNET_*`` environment variables override the default quadrature
tolerances.  Output is CSV with a ``#`` header (or JSON), deterministic for a
given effective configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .covariance import GaussianState, QuadratureSettings, evolve_gaussian, thermal_covariance_late
from .detectors import DetectorPair, RootTrackingWarning, decay_rates
from .entanglement import entanglement_report, physicality_margin, to_modewise
from .exceptions import QBMError, ValidationError
from .kernels import ThermalEnvironment, damping_fourier
from .propagator import characteristic_roots

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 2, 3, 4

AXES = ("separation", "detuning", "time")
RATE_QUANTITIES = {
    "gamma_plus": "decay rate of the bright (sum) mode",
    "gamma_minus": "decay rate of the dark (difference) mode",
    "omega_tilde_plus": "observed frequency |Im f| of the bright mode",
    "omega_tilde_minus": "observed frequency |Im f| of the dark mode",
}
STATE_QUANTITIES = {
    "en_raw": "unmaximized logarithmic negativity (base 2)",
    "simon_raw": "PPT polynomial, positive when entangled",
    "margin": "min eig(sigma + iJ/2)",
    "covariance": "upper triangle of sigma in (X1, P1, X2, P2) ordering",
}
QUANTITIES = {**RATE_QUANTITIES, **STATE_QUANTITIES}
_MODEWISE_LABELS = ("x1", "p1", "x2", "p2")
COVARIANCE_COLUMNS = tuple(
    f"cov_{_MODEWISE_LABELS[i]}{_MODEWISE_LABELS[j]}" for i in range(4) for j in range(i, 4)
)
TOLERANCE_KEYS = tuple(f.name for f in fields(QuadratureSettings))


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    min: float
    max: float
    count: int
    spacing: str = "linear"

    def __post_init__(self):
        if not (math.isfinite(self.min) and math.isfinite(self.max)):
            raise ConfigError("grid bounds must be finite")
        if int(self.count) != self.count or self.count < 2:
            raise ConfigError("grid count must be an integer >= 2")
        if self.min > self.max:
            raise ConfigError("grid min must not exceed max")
        if self.spacing not in ("linear", "log"):
            raise ConfigError("grid spacing must be 'linear' or 'log'")
        if self.spacing == "log" and self.min <= 0:
            raise ConfigError("log spacing needs a positive grid min")

    def values(self):
        if self.min == self.max:
            return np.array([float(self.min)])
        if self.spacing == "log":
            pts = np.geomspace(self.min, self.max, int(self.count))
        else:
            pts = np.linspace(self.min, self.max, int(self.count))
        # endpoints exactly as configured
        pts[0], pts[-1] = self.min, self.max
        return np.unique(pts)


@dataclass(frozen=True)
class SweepConfig:
    omega0: float = 1.0
    detuning: float = 0.0
    mass: float = 1.0
    gamma0: float = 0.1
    r0: float = 0.01
    separation: float = 0.01
    pade_order: int | None = 0
    temperature: float = 0.0
    axis: str = "separation"
    grid: Grid = field(default_factory=lambda: Grid(0.01, 2.0, 40, "log"))
    outputs: tuple = ("gamma_plus", "gamma_minus", "en_raw", "simon_raw")
    tolerance: dict = field(default_factory=dict)
    output_path: str | None = None
    format: str = "csv"
    workers: int | None = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}")
        unknown = [q for q in self.outputs if q not in QUANTITIES]
        if unknown or not self.outputs:
            raise ConfigError(f"unknown or empty outputs {unknown}; choose from {sorted(QUANTITIES)}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'")
        bad = set(self.tolerance) - set(TOLERANCE_KEYS)
        if bad:
            raise ConfigError(f"unknown tolerance keys {sorted(bad)}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.temperature < 0 or not math.isfinite(self.temperature):
            raise ConfigError("temperature must be >= 0")
        if self.axis == "time" and self.grid.min < 0:
            raise ConfigError("time grid must be non-negative")
        # validates the fixed physical parameters
        try:
            self.pair()
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "grid" in data and not isinstance(data["grid"], Grid):
            g = data["grid"]
            if not isinstance(g, dict):
                raise ConfigError("grid must be an object")
            missing = {"min", "max", "count"} - set(g)
            if missing:
                raise ConfigError(f"grid lacks {sorted(missing)}")
            try:
                data["grid"] = Grid(**g)
            except TypeError as exc:
                raise ConfigError(f"bad grid: {exc}") from exc
        if "outputs" in data:
            data["outputs"] = tuple(data["outputs"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def effective(self):
        """Configuration fields that determine the output data."""
        d = asdict(self)
        d["outputs"] = list(self.outputs)
        d["tolerance"] = asdict(self.quadrature())
        del d["output_path"], d["workers"], d["format"]
        return d

    def quadrature(self):
        base = asdict(QuadratureSettings.from_env())
        base.update(self.tolerance)
        return QuadratureSettings(**base)

    def pair(self, value=None):
        params = dict(
            omega0=self.omega0,
            detuning=self.detuning,
            gamma0=self.gamma0,
            separation=self.separation,
            r0=self.r0,
            mass=self.mass,
            pade_order=self.pade_order,
        )
        if value is not None and self.axis != "time":
            params[self.axis] = float(value)
        return DetectorPair(**params)

    def columns(self):
        cols = [self.axis]
        for q in self.outputs:
            cols.extend(COVARIANCE_COLUMNS if q == "covariance" else [q])
        return cols + ["status", "reason"]


def _state_at(config, pair, value):
    env = ThermalEnvironment(config.temperature)
    quad = config.quadrature()
    if config.axis == "time":
        net = pair.network()
        return evolve_gaussian(GaussianState.vacuum(net), net, pair.damping_spec(), env, value, quad)
    sigma = thermal_covariance_late(pair.network(), pair.damping_spec(), env, quad)
    return GaussianState(np.zeros(4), sigma.matrix)


_NUMERICAL_FAILURES = (QBMError, ValueError, ArithmeticError, np.linalg.LinAlgError)


def _rate_values(pair):
    rates = decay_rates(pair, exact=pair.pade_order is None)
    return dict(
        gamma_plus=rates.plus.gamma,
        gamma_minus=rates.minus.gamma,
        omega_tilde_plus=rates.plus.omega_observed,
        omega_tilde_minus=rates.minus.omega_observed,
    )


def _state_values(config, pair, value):
    cov = to_modewise(_state_at(config, pair, value).cov)
    rep = entanglement_report(cov)
    return dict(
        en_raw=rep.en_raw,
        simon_raw=rep.simon_raw,
        margin=physicality_margin(cov),
        covariance=[cov[i, j] for i in range(4) for j in range(i, 4)],
    )


def _reason(exc):
    return f"{type(exc).__name__}: {exc}".replace("\n", " ")


def evaluate_point(config, value):
    """One result row ``(values, status, reason)``.

    Rate and state quantities fail independently; a failed group leaves NaN
    in its columns and its exception in ``reason``.
    """
    out, reasons = {}, []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RootTrackingWarning)
        try:
            pair = config.pair(value)
        except _NUMERICAL_FAILURES as exc:
            pair, reasons = None, [_reason(exc)]
        groups = ((RATE_QUANTITIES, lambda: _rate_values(pair)),
                  (STATE_QUANTITIES, lambda: _state_values(config, pair, value)))
        for names, compute in groups:
            if pair is None or not any(q in names for q in config.outputs):
                continue
            try:
                out.update(compute())
            except _NUMERICAL_FAILURES as exc:
                reasons.append(_reason(exc))
    values = []
    for q in config.outputs:
        if q == "covariance":
            values.extend(out.get(q, [math.nan] * len(COVARIANCE_COLUMNS)))
        else:
            values.append(out.get(q, math.nan))
    if reasons:
        return values, "failed", "; ".join(reasons)
    if any(issubclass(w.category, RootTrackingWarning) for w in caught):
        return values, "ambiguous", "bright/dark labels may have swapped"
    return values, "ok", ""


def _evaluate_args(args):
    return evaluate_point(*args)


def run_points(config, values, workers=None):
    """Evaluate all grid points, returning rows in grid order."""
    workers = workers or config.workers or os.cpu_count() or 1
    jobs = [(config, float(v)) for v in values]
    if workers == 1 or len(jobs) == 1:
        return [evaluate_point(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_evaluate_args, jobs))


def _fmt(x):
    # + 0.0 folds -0.0 into 0.0
    return "nan" if not math.isfinite(x) else f"{x + 0.0:.8e}"


def render_csv(config, values, rows):
    lines = [
        f"# qbmnet {__version__}",
        "# config: " + json.dumps(config.effective(), sort_keys=True),
    ]
    for q in config.outputs:
        lines.append(f"# {q}: {QUANTITIES[q]}")
    lines.append("# status: ok, ambiguous (label tracking warning) or failed; reason explains failures")
    lines.append(",".join(config.columns()))
    for v, (vals, status, reason) in zip(values, rows):
        cells = [_fmt(v)] + [_fmt(x) for x in vals] + [status, json.dumps(reason) if reason else ""]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def render_json(config, values, rows):
    cols = config.columns()
    records = []
    for v, (vals, status, reason) in zip(values, rows):
        nums = [float(v)] + [float(x) if math.isfinite(x) else None for x in vals]
        records.append(dict(zip(cols, nums + [status, reason])))
    doc = {"version": __version__, "config": config.effective(), "rows": records}
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def run_sweep(config, workers=None):
    """Run a sweep; returns ``(text, n_failed, n_rows)``."""
    values = config.grid.values()
    rows = run_points(config, values, workers)
    render = render_json if config.format == "json" else render_csv
    failed = sum(1 for r in rows if r[1] == "failed")
    return render(config, values, rows), failed, len(rows)


# --------------------------------------------------------------------------
# presets

PRESETS = {
    "fig3": dict(
        axis="separation",
        gamma0=0.1,
        r0=0.01,
        temperature=0.0,
        grid=dict(min=0.01, max=2.0, count=40, spacing="log"),
        outputs=["en_raw", "simon_raw"],
    ),
    "fig4": dict(
        axis="detuning",
        gamma0=0.1,
        r0=0.01,
        separation=0.01,
        temperature=0.0,
        grid=dict(min=-0.05, max=0.05, count=21, spacing="linear"),
        outputs=["en_raw", "simon_raw"],
    ),
    "fig5": dict(
        axis="separation",
        gamma0=0.1,
        r0=0.01,
        grid=dict(min=0.01, max=30.0, count=60, spacing="log"),
        outputs=["gamma_plus", "gamma_minus", "omega_tilde_plus", "omega_tilde_minus"],
    ),
    "fig6": dict(
        axis="detuning",
        gamma0=0.01,
        r0=0.01,
        separation=0.01,
        grid=dict(min=0.0, max=0.05, count=51, spacing="linear"),
        outputs=["gamma_plus", "gamma_minus", "omega_tilde_plus", "omega_tilde_minus"],
    ),
}
PRESET_NOTES = {
    "fig3": "entanglement vs separation, gamma0 = 0.1, cutoff 100, T = 0",
    "fig4": "entanglement vs detuning at r = r0",
    "fig5": "bright/dark decay rates vs separation, gamma0 = 0.1",
    "fig6": "decay rates vs detuning at r = r0, gamma0 = 0.01",
}


# --------------------------------------------------------------------------
# argument handling

_FLAG_FIELDS = {
    "omega0": float,
    "detuning": float,
    "mass": float,
    "gamma0": float,
    "r0": float,
    "separation": float,
    "temperature": float,
}


def _pade(value):
    return None if value.lower() in ("exact", "none") else int(value)


def _add_model_flags(p):
    g = p.add_argument_group("model")
    for name, conv in _FLAG_FIELDS.items():
        g.add_argument(f"--{name.replace('_', '-')}", type=conv, dest=name)
    g.add_argument("--pade-order", type=_pade, dest="pade_order", default=argparse.SUPPRESS,
                   help="integer order, or 'exact' for the unapproximated regulator")
    g.add_argument("--rtol", type=float)
    g.add_argument("--atol", type=float)


def _add_sweep_flags(p):
    p.add_argument("--axis", choices=AXES)
    p.add_argument("--min", type=float, dest="grid_min")
    p.add_argument("--max", type=float, dest="grid_max")
    p.add_argument("--count", type=int, dest="grid_count")
    p.add_argument("--spacing", choices=("linear", "log"), dest="grid_spacing")
    p.add_argument("--outputs", help="comma-separated quantities")
    p.add_argument("-o", "--output", dest="output_path")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--workers", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="qbmnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qbmnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="run a parameter sweep")
    src = sweep.add_mutually_exclusive_group()
    src.add_argument("-c", "--config", help="JSON config file")
    src.add_argument("--from-header", help="re-run the configuration echoed in an output file")
    _add_model_flags(sweep)
    _add_sweep_flags(sweep)

    probe = sub.add_parser("probe", help="evaluate one quantity at one point")
    probe.add_argument("quantity", choices=("kernel", "roots", "covariance"))
    probe.add_argument("-c", "--config")
    probe.add_argument("--omega", type=float, help="frequency for the kernel probe (default omega0)")
    probe.add_argument("--single", action="store_true", help="covariance of one detector alone")
    _add_model_flags(probe)

    preset = sub.add_parser("preset", help="named figure presets")
    psub = preset.add_subparsers(dest="preset_command", required=True)
    psub.add_parser("list", help="list presets")
    prun = psub.add_parser("run", help="run a preset sweep")
    prun.add_argument("name")
    _add_model_flags(prun)
    _add_sweep_flags(prun)
    return parser


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def config_from_header(path):
    """Effective configuration echoed in a previous CSV or JSON output."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if text.lstrip().startswith("{"):
        try:
            return dict(json.loads(text)["config"]), "json"
        except (json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"{path} has no config block") from exc
    for line in text.splitlines():
        if line.startswith("# config: "):
            return json.loads(line[len("# config: "):]), "csv"
    raise ConfigError(f"{path} has no '# config:' header line")


def _merge_flags(data, args):
    for name in _FLAG_FIELDS:
        if getattr(args, name, None) is not None:
            data[name] = getattr(args, name)
    if hasattr(args, "pade_order"):
        data["pade_order"] = args.pade_order
    tol = dict(data.get("tolerance", {}))
    for key in ("rtol", "atol"):
        if getattr(args, key, None) is not None:
            tol[key] = getattr(args, key)
    if tol:
        data["tolerance"] = tol
    grid = dict(data.get("grid", {}))
    for key in ("min", "max", "count", "spacing"):
        v = getattr(args, f"grid_{key}", None)
        if v is not None:
            grid[key] = v
    if grid:
        data["grid"] = grid
    for key in ("axis", "output_path", "format", "workers"):
        if getattr(args, key, None) is not None:
            data[key] = getattr(args, key)
    if getattr(args, "outputs", None):
        data["outputs"] = [q.strip() for q in args.outputs.split(",") if q.strip()]
    return data


def _write(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_and_report(config):
    text, failed, total = run_sweep(config)
    _write(text, config.output_path)
    where = config.output_path or "stdout"
    print(f"qbmnet: {total} rows, {failed} failed -> {where}", file=sys.stderr)
    if failed == 0:
        return EXIT_OK
    return EXIT_NUMERICAL if failed == total else EXIT_PARTIAL


def _cmd_sweep(args):
    if args.from_header:
        data, fmt = config_from_header(args.from_header)
        data.setdefault("format", fmt)
    elif args.config:
        data = _load_json(args.config)
    else:
        data = {}
    return _run_and_report(SweepConfig.from_dict(_merge_flags(data, args)))


def _cmd_preset(args):
    if args.preset_command == "list":
        for name in sorted(PRESETS):
            print(f"{name}\t{PRESET_NOTES[name]}")
        return EXIT_OK
    if args.name not in PRESETS:
        raise ConfigError(f"unknown preset {args.name!r}; see 'qbmnet preset list'")
    data = json.loads(json.dumps(PRESETS[args.name]))
    return _run_and_report(SweepConfig.from_dict(_merge_flags(data, args)))


def _print_matrix(label, a):
    print(f"{label}:")
    for row in np.atleast_2d(a):
        print("  " + "  ".join(_fmt_complex(x) for x in row))


def _fmt_complex(x):
    x = complex(x)
    if x.imag == 0:
        return f"{x.real:.15e}"
    return f"{x.real:.15e}{x.imag:+.15e}j"


def probe(config, quantity, omega=None, single=False):
    """Print one diagnostic quantity for the configured pair."""
    quad = config.quadrature()
    print(f"# tolerances: {json.dumps(asdict(quad), sort_keys=True)}")
    pair = config.pair()
    if quantity == "kernel":
        w = pair.omega0 if omega is None else omega
        spec = pair.damping_spec(exact=pair.pade_order is None)
        _print_matrix(f"gamma~(omega={w:.15e})", damping_fourier(spec, w))
    elif quantity == "roots":
        exact = pair.pade_order is None
        if not exact:
            try:
                modes = characteristic_roots(pair.network(), pair.damping_spec())
                _print_matrix("characteristic roots", modes.roots[:, None])
            except QBMError as exc:
                print(f"# full root set unavailable: {type(exc).__name__}: {exc}")
        rates = decay_rates(pair, exact=exact)
        print(f"bright root: {_fmt_complex(rates.plus.root)}")
        print(f"dark root: {_fmt_complex(rates.minus.root)}")
    elif quantity == "covariance":
        env = ThermalEnvironment(config.temperature)
        if single:
            from .kernels import FieldPair
            from .propagator import OscillatorNetwork

            net = OscillatorNetwork(np.array([[pair.mass]]), np.array([[pair.mass * pair.omega0**2]]))
            spec = FieldPair(pair.gamma0, [0.0], pair.r0, pair.pade_order)
        else:
            net, spec = pair.network(), pair.damping_spec()
        sigma = thermal_covariance_late(net, spec, env, quad).matrix
        _print_matrix("late-time covariance (X..., P...)", sigma)
    else:
        raise ConfigError(f"unknown probe quantity {quantity!r}")


def _free_roots(config):
    print("# free theory: no coupling, tolerances unused")
    w = np.array([config.omega0 + config.detuning, config.omega0 - config.detuning])
    roots = np.concatenate([-1j * w, 1j * w])
    _print_matrix("characteristic roots", roots[np.lexsort((roots.imag,))][:, None])


def _cmd_probe(args):
    data = _load_json(args.config) if args.config else {}
    data = _merge_flags(data, args)
    data.setdefault("outputs", ["gamma_plus"])
    if args.quantity == "roots" and data.get("gamma0") == 0:
        _free_roots(SweepConfig.from_dict({**data, "gamma0": 1.0}))
        return EXIT_OK
    config = SweepConfig.from_dict(data)
    probe(config, args.quantity, args.omega, args.single)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    handlers = {"sweep": _cmd_sweep, "probe": _cmd_probe, "preset": _cmd_preset}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"qbmnet: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QBMError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"qbmnet: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


__all__ = [
    "ConfigError",
    "Grid",
    "PRESETS",
    "SweepConfig",
    "evaluate_point",
    "main",
    "probe",
    "run_sweep",
]
