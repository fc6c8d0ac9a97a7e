"""Experiment configuration, body files, CSV output and the canned studies.

Configuration files are flat ``key = value`` text with ``#`` comments. Keys
are case-insensitive. Defaults depend on the system and on the study being
run; see :data:`DEFAULTS`.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .diagnostics import (
    ConvergenceRow,
    convergence_study,
    default_cache_dir,
    invariant_series,
    reference_solution,
    verified_reference,
)
from .errors import ConfigError, ConvergenceStudyError, EmsplitError
from .experiments import gravitating_bodies, lj_pair, neo_hookean_spring
from .integrators import IntegratorKind, RescueKind
from .model import PhaseState, SystemSpec
from .solver import Schedule, SolverConfig, Trajectory, integrate

__all__ = [
    "SYSTEMS",
    "OUTPUTS",
    "COMMANDS",
    "DEFAULTS",
    "ExperimentConfig",
    "BodyRecord",
    "BodyList",
    "load_bodies",
    "parse_bodies",
    "solar_system_path",
    "solar_system",
    "parse_config",
    "load_config",
    "build_system",
    "RunOutcome",
    "run",
    "converge",
    "HybridResult",
    "hybrid_study",
    "write_invariants_csv",
    "write_trajectory_csv",
    "write_report_csv",
    "write_convergence_csv",
    "read_csv",
]

SYSTEMS = ("neo-hookean-spring", "lj-pair", "solar", "custom-file")
OUTPUTS = ("trajectory", "invariants", "report")
COMMANDS = ("run", "converge", "hybrid")

_TABLE_DTS = (1e-2, 5e-3, 1e-3, 5e-4, 1e-4)
_LJ_DTS = (6.25e-5, 3.125e-5, 1.5625e-5, 7.8125e-6, 3.90625e-6)

#: Default settings per ``(command, system)``; ``solver`` entries are
#: :class:`SolverConfig` fields.
DEFAULTS: Dict[Tuple[str, str], dict] = {
    ("run", "neo-hookean-spring"): dict(dt=1e-3, T=10.0),
    ("run", "lj-pair"): dict(dt=1e-3, T=2.0, solver=dict(tol_R=1e-12)),
    ("run", "solar"): dict(dt=5.0, T=1.825e6, sample_stride=50,
                           solver=dict(tol_R=1e-12, residual_norm="scaled")),
    ("converge", "neo-hookean-spring"): dict(T=10.0, dt_list=_TABLE_DTS, reference_dt=1e-6),
    ("converge", "lj-pair"): dict(T=1.0, dt_list=_LJ_DTS, reference_dt=1e-7, reference_check=True,
                                  solver=dict(tol_R=1e-12)),
    ("hybrid", "neo-hookean-spring"): dict(
        integrator="lg", dt=0.1, T=100.0, tol_q_list=(1e-1, 1e-8),
        rescue_list=("janz", "pm", "pt"),
        solver=dict(closed_quotient=False, on_nonconvergence="accept")),
    ("hybrid", "lj-pair"): dict(
        integrator="lg", dt=1e-3, T=2.0, tol_q_list=(1e-4, 1e-6, 1e-8),
        rescue_list=("janz", "ge", "pm"),
        solver=dict(tol_R=1e-12, closed_quotient=False, on_nonconvergence="accept")),
    ("hybrid", "solar"): dict(
        integrator="lg", dt=5.0, T=1.825e6, sample_stride=50, tol_q_list=(1e-4, 1e-6, 1e-8),
        rescue_list=("janz", "ge", "pm"),
        solver=dict(tol_R=1e-12, residual_norm="scaled", closed_quotient=False,
                    on_nonconvergence="accept")),
}
for _cmd in COMMANDS:
    DEFAULTS.setdefault((_cmd, "custom-file"), dict(DEFAULTS.get((_cmd, "solar"), {})))
DEFAULTS[("converge", "custom-file")] = {}


# --------------------------------------------------------------------------- config

_SOLVER_KEYS = {
    "tol_r": "tol_R", "tol_a": "tol_A", "l_max": "l_max", "tol_q": "tol_Q",
    "closed_quotient": "closed_quotient", "roundoff_floor": "roundoff_floor",
    "residual_norm": "residual_norm", "on_nonconvergence": "on_nonconvergence",
    "stopping": "stopping",
}
_TOP_KEYS = (
    "system", "integrator", "rescue", "dt", "t", "outputs", "sample_stride", "bodies",
    "dt_list", "reference_dt", "reference_check", "reference_cache", "tol_q_list", "rescue_list",
    "workers",
)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_list(text: str) -> List[str]:
    items = [s.strip() for s in text.replace(",", " ").split()]
    if not items:
        raise ValueError("expected a non-empty list")
    return items


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to run one study.

    Attributes:
        system: One of :data:`SYSTEMS`.
        integrator: Integrator kind.
        rescue: LaBudde-Greenspan rescue (mirrored into ``solver.rescue``).
        dt: Step size (> 0).
        T: Final time (>= 0; ``0`` emits the initial state only).
        solver: Newton settings.
        outputs: Files written by :func:`run`, a subset of :data:`OUTPUTS`.
        sample_stride: Steps between samples (>= 1).
        bodies: Bodies file for ``custom-file`` (and optionally ``solar``).
        dt_list: Step sizes of a convergence study, strictly decreasing.
        reference_dt: Step of the mid-point reference run.
        reference_check: Also run the reference at twice its step and check
            the discrepancy is 10 times below the finest error.
        reference_cache: Directory of cached reference states.
        tol_q_list, rescue_list: Grid of a hybrid study.
        workers: Thread count of sweeps (``None`` uses the CPU count).
        explicit: Keys set by the configuration file or overrides.
    """

    system: str = "neo-hookean-spring"
    integrator: IntegratorKind = IntegratorKind.LABUDDE_GREENSPAN
    rescue: RescueKind = RescueKind.JANZ_MIDPOINT
    dt: float = 1e-3
    T: float = 10.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    outputs: Tuple[str, ...] = ("invariants",)
    sample_stride: int = 1
    bodies: Optional[str] = None
    dt_list: Tuple[float, ...] = ()
    reference_dt: Optional[float] = None
    reference_check: bool = False
    reference_cache: Optional[str] = None
    tol_q_list: Tuple[float, ...] = ()
    rescue_list: Tuple[RescueKind, ...] = ()
    workers: Optional[int] = None
    explicit: frozenset = frozenset()

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ValueError(f"system must be one of {', '.join(SYSTEMS)}, got {self.system!r}")
        object.__setattr__(self, "integrator", IntegratorKind.parse(self.integrator))
        object.__setattr__(self, "rescue", RescueKind.parse(self.rescue))
        if self.solver.rescue != self.rescue:
            object.__setattr__(self, "solver", self.solver.replace(rescue=self.rescue))
        for name in ("dt", "T"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.T < 0:
            raise ValueError(f"T must be non-negative, got {self.T!r}")
        if int(self.sample_stride) != self.sample_stride or self.sample_stride < 1:
            raise ValueError(f"sample_stride must be an integer >= 1, got {self.sample_stride!r}")
        object.__setattr__(self, "sample_stride", int(self.sample_stride))
        outputs = tuple(self.outputs)
        bad = [o for o in outputs if o not in OUTPUTS]
        if bad:
            raise ValueError(f"unknown output {bad[0]!r}; choose from {', '.join(OUTPUTS)}")
        object.__setattr__(self, "outputs", tuple(dict.fromkeys(outputs)))
        dts = tuple(float(d) for d in self.dt_list)
        if any(not (d > 0 and math.isfinite(d)) for d in dts):
            raise ValueError("dt_list entries must be positive")
        if any(b >= a for a, b in zip(dts, dts[1:])):
            raise ValueError("dt_list must be strictly decreasing")
        object.__setattr__(self, "dt_list", dts)
        if self.reference_dt is not None:
            ref = float(self.reference_dt)
            if not ref > 0:
                raise ValueError(f"reference_dt must be positive, got {ref!r}")
            object.__setattr__(self, "reference_dt", ref)
        tols = tuple(float(t) for t in self.tol_q_list)
        if any(not t > 0 for t in tols):
            raise ValueError("tol_q_list entries must be positive")
        object.__setattr__(self, "tol_q_list", tols)
        object.__setattr__(self, "rescue_list", tuple(RescueKind.parse(r) for r in self.rescue_list))
        if self.workers is not None and int(self.workers) < 1:
            raise ValueError("workers must be >= 1")
        if self.system == "custom-file" and not self.bodies:
            raise ValueError("system custom-file needs a bodies file")

    @property
    def schedule(self) -> Schedule:
        return Schedule.uniform(self.dt, self.T)

    def with_overrides(self, **values) -> "ExperimentConfig":
        """Copy with top-level or solver keys replaced (``None`` values are ignored)."""
        values = {k: v for k, v in values.items() if v is not None}
        top, solver = {}, {}
        for key, value in values.items():
            if key.lower() in _SOLVER_KEYS:
                solver[_SOLVER_KEYS[key.lower()]] = value
            else:
                top[key] = value
        new_solver = self.solver.replace(**solver) if solver else self.solver
        explicit = self.explicit | set(k.lower() for k in values)
        return replace(self, solver=new_solver, explicit=frozenset(explicit), **top)


def _convert(key: str, raw: str):
    if key in ("system",):
        return raw.strip()
    if key == "integrator":
        return IntegratorKind.parse(raw.strip())
    if key == "rescue":
        return RescueKind.parse(raw.strip())
    if key in ("dt", "t", "reference_dt", "tol_r", "tol_a", "tol_q", "roundoff_floor"):
        return float(raw)
    if key in ("sample_stride", "l_max", "workers"):
        value = float(raw)
        if value != int(value):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(value)
    if key in ("closed_quotient", "reference_check"):
        return _parse_bool(raw)
    if key == "outputs":
        items = tuple(_parse_list(raw))
        bad = [o for o in items if o not in OUTPUTS]
        if bad:
            raise ValueError(f"unknown output {bad[0]!r}; choose from {', '.join(OUTPUTS)}")
        return items
    if key in ("dt_list", "tol_q_list"):
        return tuple(float(v) for v in _parse_list(raw))
    if key == "rescue_list":
        return tuple(RescueKind.parse(v) for v in _parse_list(raw))
    return raw.strip()


def parse_config(text: str, command: str = "run", path=None,
                 overrides: Optional[dict] = None) -> ExperimentConfig:
    """Parse flat ``key = value`` text into an :class:`ExperimentConfig`.

    Defaults come from :data:`DEFAULTS` for ``(command, system)``; file values
    and then ``overrides`` take precedence.

    Raises:
        ConfigError: Unknown keys, duplicates, malformed lines or invalid
            values, with the offending line number when there is one.
    """
    if command not in COMMANDS:
        raise ValueError(f"command must be one of {', '.join(COMMANDS)}")
    values: Dict[str, object] = {}
    lines: Dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", path, number)
        key, value = (s.strip() for s in line.split("=", 1))
        low = key.lower()
        if low not in _TOP_KEYS and low not in _SOLVER_KEYS:
            raise ConfigError(f"unknown key {key!r}", path, number)
        if low in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[low]})", path, number)
        if not value:
            raise ConfigError(f"missing value for {key!r}", path, number)
        try:
            values[low] = _convert(low, value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", path, number) from None
        lines[low] = number
    for key, value in (overrides or {}).items():
        if value is not None:
            low = key.lower()
            try:
                values[low] = _convert(low, value) if isinstance(value, str) else value
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from None
            lines[low] = None
    system = values.get("system", "neo-hookean-spring")
    if system not in SYSTEMS:
        raise ConfigError(f"system must be one of {', '.join(SYSTEMS)}, got {system!r}",
                          path, lines.get("system"))
    if values.get("bodies") is not None and path is not None:
        bodies = Path(values["bodies"])
        if not bodies.is_absolute():
            values["bodies"] = str(Path(path).parent / bodies)
    defaults = dict(DEFAULTS.get((command, system), {}))
    solver_kw = dict(defaults.pop("solver", {}))
    top = defaults
    for low, value in values.items():
        if low in _SOLVER_KEYS:
            solver_kw[_SOLVER_KEYS[low]] = value
        else:
            top["T" if low == "t" else low] = value
    try:
        solver = SolverConfig(**solver_kw)
    except (ValueError, TypeError) as exc:
        bad = next((k for k in values if k in _SOLVER_KEYS and _SOLVER_KEYS[k] in str(exc)), None)
        raise ConfigError(str(exc), path, lines.get(bad)) from None
    rescue = top.pop("rescue", solver.rescue)
    try:
        return ExperimentConfig(solver=solver, rescue=rescue, explicit=frozenset(values), **top)
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        bad = next((k for k in values if msg.startswith(("T" if k == "t" else k) + " ")), None)
        raise ConfigError(msg, path, lines.get(bad)) from None


def load_config(path, command: str = "run", overrides: Optional[dict] = None) -> ExperimentConfig:
    """Read and parse a configuration file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", path) from None
    return parse_config(text, command, path, overrides)


# --------------------------------------------------------------------------- bodies

@dataclass(frozen=True)
class BodyRecord:
    """One body: name, mass (solar masses), position (AU), momentum (Msun AU/day)."""

    name: str
    mass: float
    q: Tuple[float, float, float]
    p: Tuple[float, float, float]

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ValueError(f"mass of {self.name!r} must be positive, got {self.mass!r}")
        for label, vec in (("q", self.q), ("p", self.p)):
            if len(vec) != 3 or not all(math.isfinite(v) for v in vec):
                raise ValueError(f"{label} of {self.name!r} must be three finite numbers")


class BodyList(list):
    """A list of :class:`BodyRecord` carrying the file's ``G`` and ``units``."""

    def __init__(self, records, G: float, units: str):
        super().__init__(records)
        self.G = G
        self.units = units


def parse_bodies(text: str, path=None) -> BodyList:
    """Parse a bodies file: ``G = ...`` and ``units = ...`` headers, then one
    ``name mass qx qy qz px py pz`` line per body.

    Raises:
        ConfigError: Missing header, malformed rows, non-positive masses,
            duplicate names or no bodies, with line numbers.
    """
    G = None
    units = None
    records: List[BodyRecord] = []
    seen: Dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, value = (s.strip() for s in line.split("=", 1))
            if records:
                raise ConfigError(f"header {key!r} after the first body", path, number)
            if key == "G":
                try:
                    G = float(value)
                except ValueError:
                    raise ConfigError(f"bad G value {value!r}", path, number) from None
                if not (G > 0 and math.isfinite(G)):
                    raise ConfigError(f"G must be positive, got {value!r}", path, number)
            elif key == "units":
                units = value
            else:
                raise ConfigError(f"unknown header {key!r}", path, number)
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ConfigError(f"expected 8 fields (name mass qx qy qz px py pz), got {len(parts)}",
                              path, number)
        try:
            nums = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise ConfigError(f"bad number: {exc}", path, number) from None
        name = parts[0]
        if name in seen:
            raise ConfigError(f"duplicate body {name!r} (first on line {seen[name]})", path, number)
        try:
            records.append(BodyRecord(name, nums[0], tuple(nums[1:4]), tuple(nums[4:7])))
        except ValueError as exc:
            raise ConfigError(str(exc), path, number) from None
        seen[name] = number
    if G is None:
        raise ConfigError("missing 'G = <value>' header", path)
    if not records:
        raise ConfigError("no bodies", path)
    return BodyList(records, G, units or "")


def load_bodies(path) -> BodyList:
    """Read and validate a bodies file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read bodies file: {exc.strerror}", path) from None
    return parse_bodies(text, path)


def solar_system_path() -> Path:
    """Path of the bundled Sun-and-nine-planets file."""
    return Path(str(resources.files("emsplit") / "data" / "solar_system.txt"))


def solar_system(path=None) -> Tuple[SystemSpec, PhaseState, BodyList]:
    """Gravitating system and initial state of a bodies file (default: bundled)."""
    bodies = load_bodies(path or solar_system_path())
    spec, state = gravitating_bodies(
        [b.mass for b in bodies], [b.q for b in bodies], [b.p for b in bodies], bodies.G)
    return spec, state, bodies


def build_system(config: ExperimentConfig) -> Tuple[SystemSpec, PhaseState]:
    """System and initial state named by ``config.system``."""
    if config.system == "neo-hookean-spring":
        return neo_hookean_spring()
    if config.system == "lj-pair":
        return lj_pair()
    spec, state, _ = solar_system(config.bodies)
    return spec, state


# --------------------------------------------------------------------------- CSV

def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(path: Path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


INVARIANT_COLUMNS = ("time", "dH", "dJx", "dJy", "dJz", "dLx", "dLy", "dLz", "dCx", "dCy", "dCz")
REPORT_COLUMNS = ("step", "time", "iterations", "initial_residual", "final_residual",
                  "converged", "switch_count", "energy_delta")
CONVERGENCE_COLUMNS = ("dt", "err_q", "order_q", "err_p", "order_p")


def trajectory_columns(n: int) -> List[str]:
    cols = ["time"]
    for a in range(n):
        cols += [f"q{a}{c}" for c in "xyz"]
        cols += [f"p{a}{c}" for c in "xyz"]
    return cols


def write_invariants_csv(path, series) -> Path:
    """Columns ``time, dH, dJx..dJz, dLx..dLz, dCx..dCz``."""
    rows = (
        [_fmt(t), _fmt(h), *map(_fmt, j), *map(_fmt, l_), *map(_fmt, c)]
        for t, h, j, l_, c in zip(series.times, series.dH, series.dJ, series.dL, series.dC)
    )
    return _write_rows(path, INVARIANT_COLUMNS, rows)


def write_trajectory_csv(path, trajectory: Trajectory) -> Path:
    """Columns ``time`` then ``qAx, qAy, qAz, pAx, pAy, pAz`` per particle."""
    n = trajectory.q.shape[1]
    rows = (
        [_fmt(t)] + [_fmt(v) for a in range(n) for v in (*q[a], *p[a])]
        for t, q, p in zip(trajectory.times, trajectory.q, trajectory.p)
    )
    return _write_rows(path, trajectory_columns(n), rows)


def write_report_csv(path, trajectory: Trajectory) -> Path:
    """Per-sample solver statistics (sample 0 is the initial state)."""
    conv = trajectory.converged if trajectory.converged is not None else np.ones(len(trajectory), bool)
    rows = (
        [int(s), _fmt(t), int(it), _fmt(r0), _fmt(r), int(bool(c)), int(sw), _fmt(dh)]
        for s, t, it, r0, r, c, sw, dh in zip(
            trajectory.steps, trajectory.times, trajectory.iterations, trajectory.initial_residual,
            trajectory.final_residual, conv, trajectory.switch_count, trajectory.energy_delta)
    )
    return _write_rows(path, REPORT_COLUMNS, rows)


def _opt(x) -> str:
    return "" if x is None or math.isnan(x) else _fmt(x)


def write_convergence_csv(path, rows: Sequence[ConvergenceRow]) -> Path:
    """Columns ``dt, err_q, order_q, err_p, order_p``; empty orders where undefined."""
    out = ([_fmt(r.dt), _fmt(r.rel_err_q), _opt(r.order_q), _fmt(r.rel_err_p), _opt(r.order_p)]
           for r in rows)
    return _write_rows(path, CONVERGENCE_COLUMNS, out)


def read_csv(path) -> Tuple[List[str], np.ndarray]:
    """Header and float matrix of a CSV written here (empty cells become ``nan``)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) if v else math.nan for v in row] for row in reader]
    return header, np.array(data, dtype=float).reshape(len(data), len(header))


# --------------------------------------------------------------------------- studies

@dataclass
class RunOutcome:
    """Result of :func:`run`: the (possibly partial) trajectory, its
    invariant series, written files and the failure, if any."""

    trajectory: Trajectory
    series: object
    files: Dict[str, Path]
    error: Optional[EmsplitError] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _write_outputs(config, out_dir, traj, series, prefix="") -> Dict[str, Path]:
    out = Path(out_dir)
    files = {}
    if "trajectory" in config.outputs:
        files["trajectory"] = write_trajectory_csv(out / f"{prefix}trajectory.csv", traj)
    if "invariants" in config.outputs:
        files["invariants"] = write_invariants_csv(out / f"{prefix}invariants.csv", series)
    if "report" in config.outputs:
        files["report"] = write_report_csv(out / f"{prefix}report.csv", traj)
    return files


def run(config: ExperimentConfig, out_dir, system=None) -> RunOutcome:
    """Integrate ``config`` and write the requested CSV files into ``out_dir``.

    A failing step does not raise: the partial trajectory is written and the
    exception is returned in :attr:`RunOutcome.error`.
    """
    spec, state = system or build_system(config)
    error = None
    try:
        traj = integrate(spec, config.integrator, state, config.schedule, config.solver,
                         stride=config.sample_stride)
    except EmsplitError as exc:
        partial = getattr(exc, "partial", None)
        if partial is None:
            raise
        traj, error = partial, exc
    series = invariant_series(traj, spec)
    files = _write_outputs(config, out_dir, traj, series)
    return RunOutcome(traj, series, files, error)


def _reference(config, spec, state):
    if config.reference_dt is None:
        raise ConfigError("converge needs reference_dt")
    cache = config.reference_cache or default_cache_dir()
    if config.reference_check:
        check = verified_reference(spec, state, config.T, config.reference_dt, config.solver, cache)
        return check.state, check
    return reference_solution(spec, state, config.T, config.reference_dt, config.solver, cache), None


def converge(config: ExperimentConfig, out_dir=None, system=None):
    """Convergence study of ``config.integrator`` over ``config.dt_list``.

    Returns ``(rows, reference_check)``; ``reference_check`` is ``None``
    unless ``config.reference_check`` is set. Writes ``convergence.csv`` into
    ``out_dir`` when given, also when some runs fail (their errors are
    ``nan``), in which case :class:`ConvergenceStudyError` is raised after
    writing.
    """
    if not config.dt_list:
        raise ConfigError("converge needs dt_list")
    spec, state = system or build_system(config)
    ref, check = _reference(config, spec, state)
    try:
        rows = convergence_study(spec, config.integrator, state, config.T, config.dt_list, ref,
                                 config.solver, config.workers)
    except ConvergenceStudyError as exc:
        if out_dir is not None:
            write_convergence_csv(Path(out_dir) / "convergence.csv", exc.rows)
        raise
    if out_dir is not None:
        write_convergence_csv(Path(out_dir) / "convergence.csv", rows)
    return rows, check


@dataclass
class HybridResult:
    """One ``(tol_Q, rescue)`` run of a hybrid study. ``rescue`` is ``None``
    for the baseline run with the closed quotient (no switching)."""

    tol_Q: float
    rescue: Optional[RescueKind]
    times: np.ndarray
    dH: np.ndarray
    H0: float
    switch_count: int
    unconverged_steps: int
    error: Optional[EmsplitError] = None

    @property
    def label(self) -> str:
        if self.rescue is None:
            return "baseline"
        return f"{self.rescue.short}_tolq_{self.tol_Q!r}"


def hybrid_study(config: ExperimentConfig, out_dir=None, system=None,
                 baseline: bool = True) -> List[HybridResult]:
    """LaBudde-Greenspan runs over ``tol_q_list`` x ``rescue_list``.

    Runs execute in worker threads. Each writes ``hybrid_<label>.csv``
    (``time, dH``) and ``hybrid_summary.csv`` lists every combination. With
    ``baseline`` a run with the closed quotient (when the family has one) is
    added for comparison.
    """
    if not config.tol_q_list or not config.rescue_list:
        raise ConfigError("hybrid needs tol_q_list and rescue_list")
    spec, state = system or build_system(config)
    jobs: List[Tuple[float, Optional[RescueKind], SolverConfig]] = [
        (tol, rescue, config.solver.replace(tol_Q=tol, rescue=rescue))
        for tol in config.tol_q_list for rescue in config.rescue_list
    ]
    if baseline and spec.family is not None and spec.family.quotient is not None:
        jobs.insert(0, (math.nan, None, config.solver.replace(closed_quotient=True)))

    def one(job):
        tol, rescue, cfg = job
        error = None
        try:
            traj = integrate(spec, IntegratorKind.LABUDDE_GREENSPAN, state, config.schedule, cfg,
                             stride=config.sample_stride)
        except EmsplitError as exc:
            traj = getattr(exc, "partial", None)
            if traj is None:
                raise
            error = exc
        series = invariant_series(traj, spec)
        return HybridResult(tol, rescue, series.times, series.dH, series.H0, traj.total_switches,
                            traj.unconverged_steps, error)

    workers = config.workers or min(len(jobs), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(one, jobs))
    if out_dir is not None:
        out = Path(out_dir)
        for res in results:
            _write_rows(out / f"hybrid_{res.label}.csv", ("time", "dH"),
                        ([_fmt(t), _fmt(h)] for t, h in zip(res.times, res.dH)))
        _write_rows(out / "hybrid_summary.csv",
                    ("tol_Q", "rescue", "switch_count", "unconverged_steps", "max_dH", "final_dH",
                     "failed"),
                    ([_opt(r.tol_Q), "none" if r.rescue is None else r.rescue.short, r.switch_count,
                      r.unconverged_steps, _fmt(r.dH.max()), _fmt(r.dH[-1]), int(r.error is not None)]
                     for r in results))
    return results
