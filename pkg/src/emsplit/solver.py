"""Predictor multi-corrector Newton stepping and trajectory integration.

Each step starts from the predictor ``q1 = q0, p1 = p0`` and applies Newton
corrections. The linear system is reduced to positions:

    (I + dt/2 M^{-1} C) dq = -R_q - dt/2 M^{-1} R_p,
    dp = (2/dt) M (R_q + dq),

solved by a dense LU factorization. The residual norm is the Euclidean norm
of the stacked ``(R_q, R_p)``; with ``residual_norm="scaled"`` the momentum
block enters as ``dt/2 M^{-1} R_p`` (position units), which keeps the test
meaningful when momenta are many orders of magnitude smaller than positions.
Before each solve the current residual is tested: the step has converged
when ``r <= tol_A`` or (after at least one correction) ``r <= tol_R * r_0``. The absolute tolerance is raised to the
rounding floor ``roundoff_floor * eps * |(q, p)|`` of the residual, below
which no iteration can reach. ``l_max`` corrections without convergence
is a :class:`~emsplit.errors.StepFailure`, unless
``on_nonconvergence="accept"``, in which case the last iterate is kept (as a
plain fixed-iteration loop would) and the step is counted in
``Trajectory.unconverged_steps``. With ``stopping="lagged"`` one more
correction is applied after the test first passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from . import _kernels as kern
from .errors import StepFailure, TangentSingularError
from .integrators import IntegratorKind, RescueKind, singular_error, system_arrays
from .model import PhaseState, SystemSpec

__all__ = [
    "SolverConfig",
    "StepReport",
    "Schedule",
    "Trajectory",
    "ENERGY_SLACK_KAPPA",
    "energy_scale",
    "step_energy_slack",
    "advance",
    "integrate",
    "segregated_increment",
]

#: Multiplier in the per-step energy slack ``kappa * (r_final + eps) * (|H0| + 1)``.
ENERGY_SLACK_KAPPA = 10.0


@dataclass(frozen=True)
class SolverConfig:
    """Newton and quotient-switch settings.

    Attributes:
        tol_R: Relative residual tolerance.
        tol_A: Absolute residual tolerance.
        l_max: Maximum number of Newton corrections per step.
        tol_Q: LaBudde-Greenspan switch threshold on ``|d1 - d0|``.
        rescue: Formula used while the quotient is switched off.
        closed_quotient: Use a family's closed-form quotient when it has one.
        roundoff_floor: Multiplier of ``eps * |(q, p)|`` bounding ``tol_A``
            from below; 0 uses ``tol_A`` as given.
        residual_norm: ``"stacked"`` or ``"scaled"`` (see module docs).
        on_nonconvergence: ``"raise"`` or ``"accept"`` (see module docs).
        stopping: ``"current"`` tests the residual of the current iterate;
            ``"lagged"`` accepts the iterate one correction after the test
            first passes.
    """

    tol_R: float = 1e-10
    tol_A: float = 1e-15
    l_max: int = 20
    tol_Q: float = 1e-8
    rescue: RescueKind = RescueKind.JANZ_MIDPOINT
    closed_quotient: bool = True
    roundoff_floor: float = 8.0
    residual_norm: str = "stacked"
    on_nonconvergence: str = "raise"
    stopping: str = "current"

    def __post_init__(self):
        for name in ("tol_R", "tol_A", "tol_Q"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v!r}")
            object.__setattr__(self, name, v)
        if int(self.l_max) != self.l_max or self.l_max < 1:
            raise ValueError(f"l_max must be an integer >= 1, got {self.l_max!r}")
        object.__setattr__(self, "l_max", int(self.l_max))
        object.__setattr__(self, "rescue", RescueKind.parse(self.rescue))
        object.__setattr__(self, "closed_quotient", bool(self.closed_quotient))
        floor = float(self.roundoff_floor)
        if not (floor >= 0 and math.isfinite(floor)):
            raise ValueError(f"roundoff_floor must be non-negative, got {floor!r}")
        object.__setattr__(self, "roundoff_floor", floor)
        if self.residual_norm not in ("stacked", "scaled"):
            raise ValueError(f"residual_norm must be 'stacked' or 'scaled', got {self.residual_norm!r}")
        if self.on_nonconvergence not in ("raise", "accept"):
            raise ValueError(f"on_nonconvergence must be 'raise' or 'accept', got {self.on_nonconvergence!r}")
        if self.stopping not in ("current", "lagged"):
            raise ValueError(f"stopping must be 'current' or 'lagged', got {self.stopping!r}")

    @classmethod
    def many_body(cls, **overrides) -> "SolverConfig":
        """Defaults for many-body runs (``tol_R = 1e-12``)."""
        overrides.setdefault("tol_R", 1e-12)
        return cls(**overrides)

    def replace(self, **changes) -> "SolverConfig":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return SolverConfig(**values)


@dataclass(frozen=True)
class StepReport:
    """Solver statistics of one step.

    ``switch_count`` counts pair evaluations (over all Newton iterations)
    in which a rescue formula replaced the quotient. ``energy_delta`` is
    ``H(next) - H(n)``.
    """

    iterations: int = 0
    initial_residual: float = 0.0
    final_residual: float = 0.0
    converged: bool = True
    switch_count: int = 0
    energy_delta: float = 0.0


def energy_scale(h0: float) -> float:
    """Characteristic energy ``|H0| + 1`` used in solver slack bounds."""
    return abs(h0) + 1.0


def step_energy_slack(report: StepReport, h0: float, kappa: float = ENERGY_SLACK_KAPPA) -> float:
    """Energy change attributable to the solver and rounding for one step."""
    return kappa * (report.final_residual + np.finfo(float).eps) * energy_scale(h0)


@dataclass(frozen=True)
class Schedule:
    """Uniform step sequence without materializing ``n`` step sizes."""

    dt: float
    n: int

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.n < 0:
            raise ValueError("number of steps must be non-negative")

    @classmethod
    def uniform(cls, dt: float, T: float) -> "Schedule":
        """``round(T / dt)`` steps of size ``dt``."""
        return cls(float(dt), int(round(T / dt)))

    def __len__(self):
        return self.n


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled states and step reports of an integration.

    Sample 0 is the initial state with an empty report. Indexing and iteration
    yield ``(PhaseState, StepReport)`` pairs.

    Attributes:
        steps: Step index of each sample (0 for the initial state).
        times, q, p: Sampled times ``(S,)`` and states ``(S, N, 3)``.
        iterations, initial_residual, final_residual, switch_count,
            energy_delta: Per-sample report columns.
        n_steps: Number of steps taken.
        total_iterations, max_iterations, total_switches: Aggregates over
            every step, sampled or not.
        unconverged_steps: Steps kept without convergence (only with
            ``on_nonconvergence="accept"``).
        converged: Per-sample convergence flags.
    """

    steps: np.ndarray
    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    iterations: np.ndarray
    initial_residual: np.ndarray
    final_residual: np.ndarray
    switch_count: np.ndarray
    energy_delta: np.ndarray
    n_steps: int
    total_iterations: int = 0
    max_iterations: int = 0
    total_switches: int = 0
    unconverged_steps: int = 0
    converged: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.times)

    def state(self, i: int) -> PhaseState:
        return PhaseState(self.q[i], self.p[i], self.times[i])

    def report(self, i: int) -> StepReport:
        return StepReport(
            int(self.iterations[i]), float(self.initial_residual[i]), float(self.final_residual[i]),
            True if self.converged is None else bool(self.converged[i]),
            int(self.switch_count[i]), float(self.energy_delta[i]),
        )

    def __getitem__(self, i: int) -> Tuple[PhaseState, StepReport]:
        i = range(len(self))[i]
        return self.state(i), self.report(i)

    def __iter__(self) -> Iterator[Tuple[PhaseState, StepReport]]:
        for i in range(len(self)):
            yield self[i]

    @property
    def final(self) -> PhaseState:
        return self.state(len(self) - 1)

    @property
    def states(self):
        return [self.state(i) for i in range(len(self))]


def _schedule_arrays(schedule) -> Tuple[np.ndarray, int]:
    if isinstance(schedule, Schedule):
        return np.array([schedule.dt]), schedule.n
    dts = np.asarray(schedule, dtype=float).reshape(-1)
    if not np.all(dts > 0) or not np.all(np.isfinite(dts)):
        raise ValueError("all step sizes must be positive and finite")
    if dts.size == 1:
        return dts, 1
    return dts, dts.size


def _check_initial_separations(s, q):
    if not s.pi.size:
        return
    other = np.where(s.pj[:, None] >= 0, q[np.maximum(s.pj, 0)], 0.0)
    dist = np.linalg.norm(q[s.pi] - other, axis=1)
    bad = np.flatnonzero(~(dist > s.dmin))
    if bad.size:
        raise singular_error(s, int(bad[0]), float(dist[bad[0]]), 0)


def integrate(spec: SystemSpec, kind, state_0: PhaseState,
              schedule: Union[Schedule, Sequence[float]], cfg: Optional[SolverConfig] = None,
              stride: int = 1) -> Trajectory:
    """Apply :func:`advance` over ``schedule``, sampling every ``stride`` steps.

    The last state is always sampled. The run stops at the first failing step
    and raises; the exception carries ``step_index`` (0-based position in the
    schedule) and the partial trajectory as ``partial``.

    Raises:
        StepFailure: Newton did not converge within ``l_max`` corrections.
        TangentSingularError: The Newton matrix was singular.
        SingularConfigurationError: A separation reached the domain minimum.
    """
    cfg = cfg or SolverConfig()
    kind = IntegratorKind.parse(kind)
    stride = int(stride)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if state_0.n != spec.n:
        raise ValueError(f"state has {state_0.n} particles, system has {spec.n}")
    dts, nsteps = _schedule_arrays(schedule)
    s = system_arrays(spec)
    _check_initial_separations(s, state_0.q)
    ns = 1 + nsteps // stride + (1 if nsteps % stride else 0)
    n = spec.n
    out_q = np.empty((ns, n, 3))
    out_p = np.empty((ns, n, 3))
    out_t = np.empty(ns)
    s_it = np.empty(ns, dtype=np.int64)
    s_r0 = np.empty(ns)
    s_r = np.empty(ns)
    s_conv = np.empty(ns, dtype=np.bool_)
    s_sw = np.empty(ns, dtype=np.int64)
    s_dh = np.empty(ns)
    agg = np.zeros(9, dtype=np.int64)
    dist, f_it, f_r0, f_r, f_sw = s.kernels.run(
        int(kind), int(cfg.rescue), cfg.tol_Q, cfg.closed_quotient, cfg.tol_R, cfg.tol_A, cfg.roundoff_floor,
        cfg.residual_norm == "scaled", cfg.stopping == "lagged", cfg.l_max, cfg.on_nonconvergence == "accept",
        s.minv, s.mass, s.pi, s.pj, s.prm, s.dmin,
        np.ascontiguousarray(state_0.q), np.ascontiguousarray(state_0.p), float(state_0.t),
        dts, nsteps, stride, out_q, out_p, out_t, s_it, s_r0, s_r, s_conv, s_sw, s_dh, agg)
    written = int(agg[0])
    steps = np.minimum(np.arange(ns, dtype=np.int64) * stride, nsteps)
    traj = Trajectory(
        steps[:written], out_t[:written], out_q[:written], out_p[:written], s_it[:written],
        s_r0[:written], s_r[:written], s_sw[:written], s_dh[:written], int(agg[1]),
        int(agg[5]), int(agg[6]), int(agg[7]), int(agg[8]), s_conv[:written],
    )
    status = int(agg[2])
    if status == kern.STATUS_OK:
        return traj
    step_index = int(agg[4]) - 1
    report = StepReport(int(f_it), float(f_r0), float(f_r), False, int(f_sw), math.nan)
    if status == kern.STATUS_SINGULAR:
        err = singular_error(s, int(agg[3]), dist, step_index)
    elif status == kern.STATUS_TANGENT:
        err = TangentSingularError("Newton matrix is singular", report, step_index)
    else:
        err = StepFailure(
            f"Newton did not converge in {cfg.l_max} corrections "
            f"(residual {f_r:.3e}, initial {f_r0:.3e})", report, step_index)
    err.partial = traj
    raise err


def advance(spec: SystemSpec, kind, state_n: PhaseState, dt: float,
            cfg: Optional[SolverConfig] = None) -> Tuple[PhaseState, StepReport]:
    """One implicit step of size ``dt``; returns the new state and its report."""
    traj = integrate(spec, kind, state_n, [float(dt)], cfg)
    return traj[-1]


def segregated_increment(dt, mass_inverse, mass, tangent, r_q, r_p) -> Tuple[np.ndarray, np.ndarray]:
    """Newton increments ``(dq, dp)`` from the reduced position system.

    Raises:
        TangentSingularError: if the reduced matrix is singular.
    """
    r_q = np.ascontiguousarray(r_q, dtype=float)
    n = r_q.shape[0]
    a = np.empty((3 * n, 3 * n))
    x = np.empty(3 * n)
    dq = np.empty((n, 3))
    dp = np.empty((n, 3))
    ok = kern.segregated_increment(float(dt), np.ascontiguousarray(mass_inverse, dtype=float),
                                   np.ascontiguousarray(mass, dtype=float),
                                   np.ascontiguousarray(tangent, dtype=float), r_q,
                                   np.ascontiguousarray(r_p, dtype=float), a, x, dq, dp)
    if not ok:
        raise TangentSingularError("Newton matrix is singular")
    return dq, dp
