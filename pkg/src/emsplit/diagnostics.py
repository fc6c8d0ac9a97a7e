"""Invariant error series, monotonicity checks, references and convergence studies."""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConvergenceStudyError, EmsplitError
from .integrators import IntegratorKind, system_arrays
from .model import (
    PhaseState,
    SystemSpec,
    angular_momentum,
    center_of_mass,
    linear_momentum,
    total_energy,
)
from .solver import Schedule, SolverConfig, Trajectory, integrate

__all__ = [
    "InvariantSeries",
    "invariant_series",
    "MonotonicityReport",
    "monotonicity_report",
    "reference_solution",
    "ReferenceCheck",
    "verified_reference",
    "relative_errors",
    "ConvergenceRow",
    "convergence_study",
    "state_fingerprint",
    "save_state",
    "load_state",
]


@dataclass(frozen=True, eq=False)
class InvariantSeries:
    """Deviations of H, J, L and C from their initial values.

    Attributes:
        times: ``(S,)`` sample times.
        dH: ``(S,)`` energy deviation.
        dJ, dL, dC: ``(S, 3)`` deviations of angular momentum, linear
            momentum and center of mass.
        H0, J0, L0, C0: Initial values.
    """

    times: np.ndarray
    dH: np.ndarray
    dJ: np.ndarray
    dL: np.ndarray
    dC: np.ndarray
    H0: float
    J0: np.ndarray
    L0: np.ndarray
    C0: np.ndarray

    def __len__(self):
        return len(self.times)


def invariant_series(trajectory, spec: SystemSpec) -> InvariantSeries:
    """Evaluate the invariant functionals on every sample of ``trajectory``.

    ``trajectory`` is a :class:`~emsplit.solver.Trajectory` or any sequence of
    ``PhaseState`` (or ``(PhaseState, report)`` pairs).
    """
    if isinstance(trajectory, Trajectory):
        states = trajectory.states
    else:
        states = [item[0] if isinstance(item, tuple) else item for item in trajectory]
    if not states:
        raise ValueError("trajectory is empty")
    h = np.array([total_energy(s, spec) for s in states])
    j = np.array([angular_momentum(s) for s in states])
    l_ = np.array([linear_momentum(s) for s in states])
    c = np.array([center_of_mass(s, spec.mass) for s in states])
    return InvariantSeries(
        times=np.array([s.t for s in states]),
        dH=h - h[0], dJ=j - j[0], dL=l_ - l_[0], dC=c - c[0],
        H0=float(h[0]), J0=j[0], L0=l_[0], C0=c[0],
    )


class MonotonicityReport(NamedTuple):
    """``ok`` is ``True`` when no increase exceeded the slack; otherwise
    ``first_violation`` is the sample index ``k + 1`` of the first offending
    increment."""

    ok: bool
    first_violation: Optional[int]


def monotonicity_report(series, slack: float) -> MonotonicityReport:
    """Check ``dH[k+1] <= dH[k] + slack`` for every ``k``.

    ``series`` is an :class:`InvariantSeries` or a plain array of energies.
    """
    dh = np.asarray(series.dH if isinstance(series, InvariantSeries) else series, dtype=float)
    bad = np.nonzero(np.diff(dh) > slack)[0]
    if bad.size:
        return MonotonicityReport(False, int(bad[0]) + 1)
    return MonotonicityReport(True, None)


def state_fingerprint(spec: SystemSpec, state: PhaseState, *extra) -> str:
    """Stable hash of a system, an initial state and extra parameters."""
    s = system_arrays(spec)
    h = hashlib.sha256()
    h.update(s.family.name.encode())
    for arr in (s.pi, s.pj, s.prm, s.dmin, spec.mass.matrix, state.q, state.p):
        h.update(np.ascontiguousarray(arr).tobytes())
        h.update(str(arr.shape).encode())
    h.update(repr((state.t,) + tuple(extra)).encode())
    return h.hexdigest()[:24]


def save_state(path, state: PhaseState, header: str = "") -> None:
    """Write ``state`` as text: ``t = <value>`` then one ``q p`` row per particle."""
    lines = [f"# {line}" for line in header.splitlines()]
    lines.append(f"t = {state.t!r}")
    for q, p in zip(state.q, state.p):
        lines.append(" ".join(repr(float(v)) for v in (*q, *p)))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + f".{os.getpid()}.tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def load_state(path) -> PhaseState:
    """Read a state written by :func:`save_state`."""
    t = None
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("t"):
            t = float(line.split("=", 1)[1])
        else:
            rows.append([float(v) for v in line.split()])
    if t is None or not rows:
        raise ValueError(f"{path}: not a state file")
    arr = np.array(rows)
    return PhaseState(arr[:, :3], arr[:, 3:], t)


def default_cache_dir() -> Path:
    return Path(os.environ.get("EMSPLIT_CACHE", Path.home() / ".cache" / "emsplit"))


def reference_solution(spec: SystemSpec, state_0: PhaseState, T: float, dt_fine: float,
                       cfg: Optional[SolverConfig] = None, cache_dir=None,
                       use_cache: bool = True) -> PhaseState:
    """Final state of a mid-point run with ``round(T / dt_fine)`` steps.

    Results are stored as text files named by :func:`state_fingerprint` in
    ``cache_dir`` (default ``$EMSPLIT_CACHE`` or ``~/.cache/emsplit``) and
    reused on later calls.
    """
    cfg = cfg or SolverConfig()
    schedule = Schedule.uniform(dt_fine, T)
    key = state_fingerprint(spec, state_0, "reference", schedule.dt, schedule.n,
                            cfg.tol_R, cfg.tol_A, cfg.roundoff_floor, cfg.residual_norm,
                            cfg.stopping, cfg.l_max)
    path = Path(cache_dir or default_cache_dir()) / f"ref-{key}.txt"
    if use_cache and path.exists():
        return load_state(path)
    traj = integrate(spec, IntegratorKind.MIDPOINT, state_0, schedule, cfg, stride=max(schedule.n, 1))
    final = traj.final
    if use_cache:
        save_state(path, final, f"mid-point reference T={T!r} dt={dt_fine!r} steps={schedule.n}")
    return final


def relative_errors(state: PhaseState, reference: PhaseState):
    """``(|q - q_ref| / |q_ref|, |p - p_ref| / |p_ref|)`` over all particles."""
    eq = np.linalg.norm(state.q - reference.q) / np.linalg.norm(reference.q)
    ep = np.linalg.norm(state.p - reference.p) / np.linalg.norm(reference.p)
    return float(eq), float(ep)


@dataclass(frozen=True)
class ReferenceCheck:
    """A reference and its comparison against a run at twice the step.

    For a second-order method the error of the fine run is about a third of
    the discrepancy between the two runs.
    """

    state: PhaseState
    coarse: PhaseState
    discrepancy_q: float
    discrepancy_p: float

    @property
    def estimated_error(self) -> float:
        return max(self.discrepancy_q, self.discrepancy_p) / 3.0

    def verified_for(self, finest_error: float, factor: float = 10.0) -> bool:
        """``True`` when the discrepancy is at least ``factor`` times below ``finest_error``."""
        return max(self.discrepancy_q, self.discrepancy_p) * factor <= finest_error


def verified_reference(spec: SystemSpec, state_0: PhaseState, T: float, dt_fine: float,
                       cfg: Optional[SolverConfig] = None, cache_dir=None) -> ReferenceCheck:
    """Reference at ``dt_fine`` checked against a second run at ``2 dt_fine``."""
    with ThreadPoolExecutor(max_workers=2) as pool:
        fine = pool.submit(reference_solution, spec, state_0, T, dt_fine, cfg, cache_dir)
        coarse = pool.submit(reference_solution, spec, state_0, T, 2.0 * dt_fine, cfg, cache_dir)
        fine, coarse = fine.result(), coarse.result()
    dq, dp = relative_errors(coarse, fine)
    return ReferenceCheck(fine, coarse, dq, dp)


@dataclass(frozen=True)
class ConvergenceRow:
    """One step size of a convergence study.

    ``order_q``/``order_p`` are ``log(e_prev/e) / log(dt_prev/dt)`` and ``nan``
    for the first row. ``failed`` rows have ``nan`` errors and carry the
    failure message.
    """

    dt: float
    rel_err_q: float
    rel_err_p: float
    order_q: float = math.nan
    order_p: float = math.nan
    failed: bool = False
    message: str = ""


def _order(e_prev, e, dt_prev, dt):
    if not (e_prev > 0 and e > 0):
        return math.nan
    return math.log(e_prev / e) / math.log(dt_prev / dt)


def convergence_study(spec: SystemSpec, kind, state_0: PhaseState, T: float,
                      dt_list: Sequence[float], reference: PhaseState,
                      cfg: Optional[SolverConfig] = None, max_workers: Optional[int] = None
                      ) -> List[ConvergenceRow]:
    """Final-time relative errors against ``reference`` for each step size.

    Runs execute concurrently. If any run fails, :class:`ConvergenceStudyError`
    is raised with all rows attached (failed ones flagged).
    """
    dts = [float(d) for d in dt_list]
    if any(b >= a for a, b in zip(dts, dts[1:])):
        raise ValueError("dt_list must be strictly decreasing")
    kind = IntegratorKind.parse(kind)

    def one(dt):
        sched = Schedule.uniform(dt, T)
        try:
            final = integrate(spec, kind, state_0, sched, cfg, stride=max(sched.n, 1)).final
        except EmsplitError as exc:
            return None, str(exc)
        return relative_errors(final, reference), ""

    with ThreadPoolExecutor(max_workers=max_workers or min(len(dts), os.cpu_count() or 1) or 1) as pool:
        results = list(pool.map(one, dts))
    rows = []
    prev = None
    for dt, (errs, msg) in zip(dts, results):
        if errs is None:
            rows.append(ConvergenceRow(dt, math.nan, math.nan, failed=True, message=msg))
            prev = None
            continue
        eq, ep = errs
        if prev is None:
            rows.append(ConvergenceRow(dt, eq, ep))
        else:
            rows.append(ConvergenceRow(dt, eq, ep, _order(prev[1], eq, prev[0], dt), _order(prev[2], ep, prev[0], dt)))
        prev = (dt, eq, ep)
    if any(r.failed for r in rows):
        raise ConvergenceStudyError(
            f"{sum(r.failed for r in rows)} of {len(rows)} runs failed", rows)
    return rows
