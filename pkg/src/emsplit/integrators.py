"""Algorithmic force coefficients, step residuals and the consistent tangent.

Every integrator updates positions with the mid-point rule,
``q1 - q0 = dt M^{-1} (p0 + p1)/2``, and differs only in the pair force
``f^AB``. Writing ``x = q_A,mid - q_B,mid``, ``d0``/``d1`` for the pair
separation at the start/end of the step and ``s = d0 + d1``:

* mid-point: ``f = dt V'(|x|) x / |x|``;
* all others: ``f = dt 2 Lambda(d0, d1) x / s`` with ``Lambda`` chosen by kind:

  - LaBudde-Greenspan: ``(V(d1) - V(d0)) / (d1 - d0)``, replaced by a rescue
    formula when ``|d1 - d0| <= tol_Q``;
  - generalized Eyre: ``V_c'(d1) + V_e'(d0)``;
  - perturbed mid-point: ``V'(d_mid) + h^2/24 (V_+'''(d1) + V_-'''(d0))``;
  - perturbed trapezoidal: ``(V'(d0) + V'(d1))/2 - h^2/12 (V_+'''(d0) + V_-'''(d1))``

  where ``h = d1 - d0`` and ``d_mid = (d0 + d1)/2``.

Derivatives with respect to ``d1`` (``Lambda'``) are closed forms of the
expressions above, e.g. ``(V'(d1) - Lambda)/h`` for the quotient and
``V''(d_mid)/2 + h/12 w + h^2/24 V_+''''(d1)`` for the perturbed mid-point
rule with ``w = V_+'''(d1) + V_-'''(d0)``. Through ``dd1/dq_A1 = u1/d1`` the
pair block of ``C = dR_p/dq1`` is

    K = dt [ x (x) grad(beta) + beta/2 I ],   beta = 2 Lambda / s,

with ``grad(beta) = (2 Lambda'/s - 2 Lambda/s^2) u1/d1``; for the mid-point
rule ``beta = V'(d_m)/d_m`` and ``grad(beta) = (V''/d_m - V'/d_m^2) x/(2 d_m)``.
Block ``K`` enters ``C_AA`` and ``C_BB`` with a plus sign and ``C_AB``,
``C_BA`` with a minus sign.

The LaBudde-Greenspan quotient uses a family's closed-form quotient when one
is available and ``closed_quotient`` is set; closed forms are regular at
``d1 = d0`` so no rescue is needed.
"""

from __future__ import annotations

import enum
import weakref
from dataclasses import dataclass
from types import SimpleNamespace
from typing import Union

import numpy as np

from . import _kernels as kern
from .errors import SingularConfigurationError
from .model import CentralField, PhaseState, SplitPotential, SystemSpec
from .potentials import ZERO

__all__ = [
    "IntegratorKind",
    "RescueKind",
    "ForceEval",
    "lambda_midpoint",
    "lambda_labudde_greenspan",
    "lambda_generalized_eyre",
    "lambda_perturbed_midpoint",
    "lambda_perturbed_trapezoidal",
    "pair_force",
    "step_residual",
    "step_tangent",
]


class IntegratorKind(enum.IntEnum):
    """The five algorithmic force definitions."""

    MIDPOINT = kern.KIND_MP
    LABUDDE_GREENSPAN = kern.KIND_LG
    GENERALIZED_EYRE = kern.KIND_GE
    PERTURBED_MIDPOINT = kern.KIND_PM
    PERTURBED_TRAPEZOIDAL = kern.KIND_PT

    @property
    def short(self) -> str:
        return _KIND_SHORT[self]

    @classmethod
    def parse(cls, text: Union[str, "IntegratorKind"]) -> "IntegratorKind":
        """Accept a member, its name, or a short alias (``mp``, ``lg``, ``ge``, ``pm``, ``pt``)."""
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("-", "_")
        for kind, short in _KIND_SHORT.items():
            if key in (short, kind.name.lower()):
                return kind
        raise ValueError(f"unknown integrator {text!r}; expected one of {sorted(_KIND_SHORT.values())}")


_KIND_SHORT = {
    IntegratorKind.MIDPOINT: "mp",
    IntegratorKind.LABUDDE_GREENSPAN: "lg",
    IntegratorKind.GENERALIZED_EYRE: "ge",
    IntegratorKind.PERTURBED_MIDPOINT: "pm",
    IntegratorKind.PERTURBED_TRAPEZOIDAL: "pt",
}


class RescueKind(enum.IntEnum):
    """Replacement for the quotient when ``|d1 - d0| <= tol_Q``.

    ``GONZALEZ_THIRD_DERIVATIVE`` is a consistent approximation only: it does
    not make the energy change sign-definite while it is active.
    """

    JANZ_MIDPOINT = kern.RESCUE_JANZ
    GONZALEZ_THIRD_DERIVATIVE = kern.RESCUE_GONZALEZ
    GENERALIZED_EYRE = kern.RESCUE_GE
    PERTURBED_MIDPOINT = kern.RESCUE_PM
    PERTURBED_TRAPEZOIDAL = kern.RESCUE_PT

    @property
    def short(self) -> str:
        return _RESCUE_SHORT[self]

    @classmethod
    def parse(cls, text: Union[str, "RescueKind"]) -> "RescueKind":
        """Accept a member, its name, or a short alias (``janz``, ``gonzalez``, ``ge``, ``pm``, ``pt``)."""
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("-", "_")
        for kind, short in _RESCUE_SHORT.items():
            if key in (short, kind.name.lower()):
                return kind
        raise ValueError(f"unknown rescue {text!r}; expected one of {sorted(_RESCUE_SHORT.values())}")


_RESCUE_SHORT = {
    RescueKind.JANZ_MIDPOINT: "janz",
    RescueKind.GONZALEZ_THIRD_DERIVATIVE: "gonzalez",
    RescueKind.GENERALIZED_EYRE: "ge",
    RescueKind.PERTURBED_MIDPOINT: "pm",
    RescueKind.PERTURBED_TRAPEZOIDAL: "pt",
}


@dataclass(frozen=True)
class ForceEval:
    """Scalar force coefficient with its derivative.

    Attributes:
        lam: ``Lambda``.
        dlam_dq_next: For the mid-point rule, the gradient of ``V'(|q_mid|)``
            with respect to ``q_next`` (a 3-vector). For the distance-based
            kinds, the scalar ``dLambda/dd_next``; multiply by
            ``(q_A,next - q_B,next)/d_next`` for the gradient.
        switched: ``True`` when a LaBudde-Greenspan rescue formula was used.
    """

    lam: float
    dlam_dq_next: Union[float, np.ndarray]
    switched: bool = False


def _check_distance(pot: SplitPotential, *ds):
    for d in ds:
        if not d > pot.domain_min:
            raise SingularConfigurationError((0, None), float(d))


def _radial(kind, pot, d_n, d_next, tol_q=1e-8, rescue=RescueKind.JANZ_MIDPOINT, closed_quotient=True):
    d_n = float(d_n)
    d_next = float(d_next)
    _check_distance(pot, d_n, d_next)
    k = kern.build_kernels(pot.family)
    lam, dl, sw = k.radial_lambda(int(kind), int(rescue), float(tol_q), bool(closed_quotient),
                                  pot.param_array, d_n, d_next)
    return ForceEval(float(lam), float(dl), bool(sw))


def lambda_midpoint(pot: SplitPotential, q_n, q_next) -> ForceEval:
    """``V'`` at the norm of the mid-point position of a single particle."""
    xm = 0.5 * (np.asarray(q_n, dtype=float) + np.asarray(q_next, dtype=float))
    dm = float(np.linalg.norm(xm))
    _check_distance(pot, dm)
    _, d1, d2, _, _ = pot.total.derivatives(dm)
    return ForceEval(d1, 0.5 * d2 * xm / dm, False)


def lambda_labudde_greenspan(pot: SplitPotential, d_n, d_next, tol_Q=1e-8,
                             rescue=RescueKind.JANZ_MIDPOINT, closed_quotient=True) -> ForceEval:
    """Difference quotient of ``V``, or the chosen rescue when ``|d_next - d_n| <= tol_Q``."""
    return _radial(IntegratorKind.LABUDDE_GREENSPAN, pot, d_n, d_next, tol_Q,
                   RescueKind.parse(rescue), closed_quotient)


def lambda_generalized_eyre(pot: SplitPotential, d_n, d_next) -> ForceEval:
    """Convex part implicit, concave part explicit."""
    return _radial(IntegratorKind.GENERALIZED_EYRE, pot, d_n, d_next)


def lambda_perturbed_midpoint(pot: SplitPotential, d_n, d_next) -> ForceEval:
    """Mid-point derivative plus the third-derivative correction of the split parts."""
    return _radial(IntegratorKind.PERTURBED_MIDPOINT, pot, d_n, d_next)


def lambda_perturbed_trapezoidal(pot: SplitPotential, d_n, d_next) -> ForceEval:
    """Trapezoidal average minus the third-derivative correction of the split parts."""
    return _radial(IntegratorKind.PERTURBED_TRAPEZOIDAL, pot, d_n, d_next)


def pair_force(kind, pot: SplitPotential, q_a_n, q_a_next, q_b_n, q_b_next, dt,
               tol_Q=1e-8, rescue=RescueKind.JANZ_MIDPOINT, closed_quotient=True) -> np.ndarray:
    """Impulse ``f^AB`` on particle A from B over one step; B feels ``-f^AB``.

    Pass zeros for ``q_b_*`` to get the central-field force on a single
    particle.
    """
    kind = IntegratorKind.parse(kind)
    u0 = np.asarray(q_a_n, dtype=float) - np.asarray(q_b_n, dtype=float)
    u1 = np.asarray(q_a_next, dtype=float) - np.asarray(q_b_next, dtype=float)
    xm = 0.5 * (u0 + u1)
    if kind == IntegratorKind.MIDPOINT:
        ev = lambda_midpoint(pot, u0, u1)
        return dt * (ev.lam / float(np.linalg.norm(xm))) * xm
    d0 = float(np.linalg.norm(u0))
    d1 = float(np.linalg.norm(u1))
    ev = _radial(kind, pot, d0, d1, tol_Q, RescueKind.parse(rescue), closed_quotient)
    return dt * (2.0 * ev.lam / (d0 + d1)) * xm


_SYSTEMS: "weakref.WeakKeyDictionary[SystemSpec, SimpleNamespace]" = weakref.WeakKeyDictionary()


def system_arrays(spec: SystemSpec) -> SimpleNamespace:
    """Flat arrays describing ``spec`` for the compiled kernels (cached per spec)."""
    cached = _SYSTEMS.get(spec)
    if cached is not None:
        return cached
    pairs = spec.pairs()
    family = spec.family or ZERO
    if pairs:
        width = max(len(pot.params) for _, _, pot in pairs) or 1
        prm = np.zeros((len(pairs), width))
        for e, (_, _, pot) in enumerate(pairs):
            prm[e, : len(pot.params)] = pot.params
    else:
        prm = np.zeros((0, 1))
    arrays = SimpleNamespace(
        family=family,
        kernels=kern.build_kernels(family),
        pi=np.array([a for a, _, _ in pairs], dtype=np.int64),
        pj=np.array([-1 if b is None else b for _, b, _ in pairs], dtype=np.int64),
        prm=prm,
        dmin=np.array([pot.domain_min for _, _, pot in pairs], dtype=float),
        minv=np.ascontiguousarray(spec.mass.inverse),
        mass=np.ascontiguousarray(spec.mass.matrix),
        central=isinstance(spec.interaction, CentralField),
    )
    _SYSTEMS[spec] = arrays
    return arrays


def singular_error(arrays, pair_index, distance, step_index=None) -> SingularConfigurationError:
    a = int(arrays.pi[pair_index])
    b = int(arrays.pj[pair_index])
    err = SingularConfigurationError((a, None if b < 0 else b), float(distance))
    err.step_index = step_index
    return err


def _assemble(kind, spec, state_n, state_guess, dt, tol_Q, rescue, closed_quotient, want_tangent):
    kind = IntegratorKind.parse(kind)
    rescue = RescueKind.parse(rescue)
    s = system_arrays(spec)
    n = spec.n
    rq = np.empty((n, 3))
    rp = np.empty((n, 3))
    c = np.empty((3 * n, 3 * n))
    sw, status, bad, dist = s.kernels.assemble(
        int(kind), int(rescue), float(tol_Q), bool(closed_quotient), float(dt), s.minv,
        s.pi, s.pj, s.prm, s.dmin, np.ascontiguousarray(state_n.q), np.ascontiguousarray(state_n.p),
        np.ascontiguousarray(state_guess.q), np.ascontiguousarray(state_guess.p), rq, rp, c, want_tangent)
    if status != kern.STATUS_OK:
        raise singular_error(s, bad, dist)
    return rq, rp, c, sw


def step_residual(kind, spec: SystemSpec, state_n: PhaseState, state_guess: PhaseState, dt,
                  tol_Q=1e-8, rescue=RescueKind.JANZ_MIDPOINT, closed_quotient=True):
    """Residuals ``(R_q, R_p, any_switched)`` of one step at a trial end state.

    ``R_q = q1 - q0 - dt M^{-1} (p0 + p1)/2`` and
    ``R_p = p1 - p0 + sum_B f^AB``, both of shape ``(N, 3)``.
    """
    rq, rp, _, sw = _assemble(kind, spec, state_n, state_guess, dt, tol_Q, rescue, closed_quotient, False)
    return rq, rp, sw > 0


def step_tangent(kind, spec: SystemSpec, state_n: PhaseState, state_guess: PhaseState, dt,
                 tol_Q=1e-8, rescue=RescueKind.JANZ_MIDPOINT, closed_quotient=True) -> np.ndarray:
    """``C = dR_p/dq_next`` as a dense ``(3N, 3N)`` matrix, index ``3 A + k``."""
    return _assemble(kind, spec, state_n, state_guess, dt, tol_Q, rescue, closed_quotient, True)[2]
