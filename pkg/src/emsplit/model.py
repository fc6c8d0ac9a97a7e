"""Phase-space states, mass models, split potentials and invariant functionals.

Vectors are plain ``numpy`` arrays: a single 3-vector has shape ``(3,)`` and
the positions or momenta of ``N`` particles have shape ``(N, 3)``.

A potential is described by a :class:`PotentialFamily` (five compiled radial
functions, one per additive part) and a parameter tuple. Each radial function
has the signature ``fn(r, params) -> (v, v', v'', v''', v'''')`` and must be
compilable by ``numba.njit``; the time-stepping kernels are specialized on the
family so that potential calls inline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import linalg

from .errors import IllPosedMassError, SingularConfigurationError, SplitValidationError

__all__ = [
    "PhaseState",
    "MassModel",
    "PotentialFamily",
    "PotentialPart",
    "SplitPotential",
    "CentralField",
    "PairTable",
    "SystemSpec",
    "kinetic_energy",
    "potential_energy",
    "total_energy",
    "angular_momentum",
    "linear_momentum",
    "center_of_mass",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PhaseState:
    """Positions ``q``, momenta ``p`` (both ``(N, 3)``) and time ``t``."""

    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        q = _frozen(self.q)
        p = _frozen(self.p)
        if q.ndim == 1:
            q = _frozen(q.reshape(1, -1))
        if p.ndim == 1:
            p = _frozen(p.reshape(1, -1))
        if q.ndim != 2 or q.shape[1] != 3 or q.shape[0] < 1:
            raise ValueError(f"positions must have shape (N, 3), got {q.shape}")
        if p.shape != q.shape:
            raise ValueError(f"momenta shape {p.shape} does not match positions {q.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("positions and momenta must be finite")
        t = float(self.t)
        if not math.isfinite(t):
            raise ValueError("time must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t", t)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def replace(self, q=None, p=None, t=None) -> "PhaseState":
        return PhaseState(
            self.q if q is None else q,
            self.p if p is None else p,
            self.t if t is None else t,
        )

    def __eq__(self, other):
        if not isinstance(other, PhaseState):
            return NotImplemented
        return (
            self.t == other.t
            and np.array_equal(self.q, other.q)
            and np.array_equal(self.p, other.p)
        )

    __hash__ = None


class MassModel:
    """Symmetric positive definite ``N x N`` mass coupling ``m_AB``.

    The coefficient matrix acts blockwise on 3-vectors: the kinetic energy is
    ``0.5 * sum_AB minv_AB p^A . p^B``. A Cholesky factorization is computed
    once at construction; the inverse used by the stepping kernels is formed
    from it.
    """

    def __init__(self, coefficients):
        m = np.atleast_2d(np.array(coefficients, dtype=float))
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise IllPosedMassError(f"mass matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise IllPosedMassError("mass matrix has non-finite entries")
        scale = np.max(np.abs(m)) if m.size else 0.0
        if np.max(np.abs(m - m.T)) > 64 * np.finfo(float).eps * scale:
            raise IllPosedMassError("mass matrix is not symmetric")
        try:
            cho = linalg.cho_factor(m, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise IllPosedMassError("mass matrix is not positive definite") from exc
        if not np.all(np.diag(cho[0]) > 0):
            raise IllPosedMassError("mass matrix is not positive definite")
        self._cho = cho
        self._matrix = _frozen(m)
        self._inverse = _frozen(linalg.cho_solve(cho, np.eye(m.shape[0])))

    @classmethod
    def diagonal(cls, masses) -> "MassModel":
        masses = np.atleast_1d(np.asarray(masses, dtype=float))
        return cls(np.diag(masses))

    @property
    def n(self) -> int:
        return self._matrix.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def inverse(self) -> np.ndarray:
        return self._inverse

    def apply_inverse(self, p) -> np.ndarray:
        """Return ``M^{-1} p`` for ``p`` of shape ``(N, 3)`` via the factorization."""
        return linalg.cho_solve(self._cho, np.asarray(p, dtype=float), check_finite=False)

    def total(self) -> float:
        return math.fsum(self._matrix.ravel())

    def __repr__(self):
        return f"MassModel({self._matrix.tolist()!r})"


@dataclass(frozen=True, eq=False)
class PotentialFamily:
    """Compiled radial functions making up a split potential.

    Attributes:
        name: Identifier used in fingerprints and error messages.
        total: ``V``.
        convex, concave: ``V_c`` and ``V_e`` with ``V = V_c + V_e``.
        superconvex, superconcave: ``V_+`` and ``V_-`` with ``V = V_+ + V_-``.
        quotient: Optional closed form of the difference quotient
            ``(V(r1) - V(r0)) / (r1 - r0)`` returning ``(value, d/dr1)``. When
            present the LaBudde-Greenspan force can avoid the quotient formula.

    Families compare by identity; the stepping kernels are compiled once per
    family.
    """

    name: str
    total: Callable
    convex: Callable
    concave: Callable
    superconvex: Callable
    superconcave: Callable
    quotient: Optional[Callable] = None


def _evaluate(fn, r, params):
    r_arr = np.asarray(r, dtype=float)
    if r_arr.ndim == 0:
        return tuple(float(x) for x in fn(float(r_arr), params))
    flat = r_arr.ravel()
    out = np.empty((5, flat.size))
    for i, ri in enumerate(flat):
        out[:, i] = fn(float(ri), params)
    return tuple(row.reshape(r_arr.shape) for row in out)


class PotentialPart:
    """Callable view of one additive part of a :class:`SplitPotential`."""

    def __init__(self, fn, params):
        self._fn = fn
        self._params = params

    def derivatives(self, r):
        """Return ``(v, v', v'', v''', v'''')`` at ``r`` (scalar or array)."""
        return _evaluate(self._fn, r, self._params)

    def v(self, r):
        return self.derivatives(r)[0]

    def dv(self, r):
        return self.derivatives(r)[1]

    def d2v(self, r):
        return self.derivatives(r)[2]

    def d3v(self, r):
        return self.derivatives(r)[3]

    def d4v(self, r):
        return self.derivatives(r)[4]


@dataclass(frozen=True, eq=False)
class SplitPotential:
    """A radial pair potential ``V(r)`` with its two additive splits.

    The convex/concave split (``V_c'' >= 0``, ``V_e'' <= 0``) and the
    super-convex/super-concave split (``V_+'''' >= 0``, ``V_-'''' <= 0``) are
    checked by sampling at construction unless ``validate=False``.

    Args:
        family: The compiled radial functions.
        params: Parameters passed to every radial function.
        domain_min: Smallest admissible separation; stepping to or below it
            raises :class:`~emsplit.errors.SingularConfigurationError`.
        sample_range: ``(lo, hi)`` interval for construction-time validation.
            Defaults to ``(1.01 * domain_min, 1e3 * domain_min)``.
        validate: Set to ``False`` to skip the sampling checks.
    """

    family: PotentialFamily
    params: tuple = ()
    domain_min: float = 1e-12
    sample_range: Optional[tuple] = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(x) for x in self.params))
        if not self.domain_min > 0:
            raise ValueError("domain_min must be positive")
        if self.sample_range is None:
            object.__setattr__(self, "sample_range", (1.01 * self.domain_min, 1e3 * self.domain_min))
        if self.validate:
            self.check_split(*self.sample_range)

    @property
    def param_array(self) -> np.ndarray:
        return np.array(self.params, dtype=float).reshape(-1) if self.params else np.zeros(1)

    def _part(self, fn):
        return PotentialPart(fn, self.param_array)

    @property
    def total(self) -> PotentialPart:
        return self._part(self.family.total)

    @property
    def convex_part(self) -> PotentialPart:
        return self._part(self.family.convex)

    @property
    def concave_part(self) -> PotentialPart:
        return self._part(self.family.concave)

    @property
    def superconvex_part(self) -> PotentialPart:
        return self._part(self.family.superconvex)

    @property
    def superconcave_part(self) -> PotentialPart:
        return self._part(self.family.superconcave)

    def v(self, r):
        return self.total.v(r)

    def dv(self, r):
        return self.total.dv(r)

    def d2v(self, r):
        return self.total.d2v(r)

    def d3v(self, r):
        return self.total.d3v(r)

    def d4v(self, r):
        return self.total.d4v(r)

    def check_split(self, lo, hi, n=2000, rtol=1e-12):
        """Sample ``n`` log-uniform points on ``[lo, hi]`` and verify both splits.

        Raises:
            SplitValidationError: if a reconstruction error exceeds ``rtol``
                (relative to the magnitudes of the parts) or a sign condition
                fails.
        """
        r = np.geomspace(lo, hi, n)
        tot = self.total.derivatives(r)
        c = self.convex_part.derivatives(r)
        e = self.concave_part.derivatives(r)
        sp = self.superconvex_part.derivatives(r)
        sm = self.superconcave_part.derivatives(r)
        name = self.family.name
        for label, a, b in (("convex/concave", c, e), ("super-convex/super-concave", sp, sm)):
            err = np.abs(tot[0] - (a[0] + b[0]))
            scale = np.abs(a[0]) + np.abs(b[0]) + np.finfo(float).tiny
            if np.any(err > rtol * scale):
                i = int(np.argmax(err / scale))
                raise SplitValidationError(f"{name}: {label} split does not reconstruct V at r={r[i]!r}")
        checks = (
            ("convex part has V_c'' < 0", c[2] < 0),
            ("concave part has V_e'' > 0", e[2] > 0),
            ("super-convex part has V_+'''' < 0", sp[4] < 0),
            ("super-concave part has V_-'''' > 0", sm[4] > 0),
        )
        for msg, bad in checks:
            if np.any(bad):
                i = int(np.argmax(bad))
                raise SplitValidationError(f"{name}: {msg} at r={r[i]!r}")


@dataclass(frozen=True, eq=False)
class CentralField:
    """Single particle in a central field ``V(||q||)``."""

    potential: SplitPotential


@dataclass(frozen=True, eq=False)
class PairTable:
    """Symmetric ``N x N`` table of pair potentials ``V_AB``.

    Entries may be ``None`` for non-interacting pairs; the diagonal is
    ignored. All interacting pairs must share one :class:`PotentialFamily`
    (parameters may differ per pair).
    """

    potentials: tuple

    def __post_init__(self):
        rows = tuple(tuple(row) for row in self.potentials)
        n = len(rows)
        if n < 1 or any(len(row) != n for row in rows):
            raise ValueError("pair table must be square")
        family = None
        for a in range(n):
            for b in range(a + 1, n):
                vab, vba = rows[a][b], rows[b][a]
                if (vab is None) != (vba is None):
                    raise ValueError(f"pair table is not symmetric at ({a}, {b})")
                if vab is None:
                    continue
                if vab is not vba and (vab.family is not vba.family or vab.params != vba.params):
                    raise ValueError(f"pair table is not symmetric at ({a}, {b})")
                if family is None:
                    family = vab.family
                elif vab.family is not family:
                    raise ValueError("all pair potentials must share one potential family")
        object.__setattr__(self, "potentials", rows)

    @classmethod
    def uniform(cls, n: int, potential: SplitPotential) -> "PairTable":
        return cls(tuple(tuple(None if a == b else potential for b in range(n)) for a in range(n)))

    @classmethod
    def from_function(cls, n: int, make: Callable[[int, int], SplitPotential]) -> "PairTable":
        """Build a table calling ``make(a, b)`` once per unordered pair ``a < b``."""
        table = [[None] * n for _ in range(n)]
        for a in range(n):
            for b in range(a + 1, n):
                table[a][b] = table[b][a] = make(a, b)
        return cls(tuple(tuple(row) for row in table))

    @property
    def n(self) -> int:
        return len(self.potentials)


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Mass model plus interaction (central field or pair table)."""

    mass: MassModel
    interaction: Union[CentralField, PairTable]

    def __post_init__(self):
        if isinstance(self.interaction, CentralField):
            if self.mass.n != 1:
                raise ValueError("a central field requires exactly one particle")
        elif isinstance(self.interaction, PairTable):
            if self.interaction.n != self.mass.n:
                raise ValueError("pair table size does not match the mass model")
        else:
            raise TypeError("interaction must be a CentralField or PairTable")

    @property
    def n(self) -> int:
        return self.mass.n

    def pairs(self):
        """List of ``(A, B, potential)``; ``B`` is ``None`` for the central field."""
        if isinstance(self.interaction, CentralField):
            return [(0, None, self.interaction.potential)]
        table = self.interaction.potentials
        n = len(table)
        return [(a, b, table[a][b]) for a in range(n) for b in range(a + 1, n) if table[a][b] is not None]

    @property
    def family(self) -> Optional[PotentialFamily]:
        pairs = self.pairs()
        return pairs[0][2].family if pairs else None


def _check_state(state: PhaseState, n: int):
    if state.n != n:
        raise ValueError(f"state has {state.n} particles, model expects {n}")


def kinetic_energy(state: PhaseState, mass: MassModel) -> float:
    """``0.5 * sum_AB minv_AB p^A . p^B``, with ``M^{-1} p`` from the Cholesky factor."""
    _check_state(state, mass.n)
    v = mass.apply_inverse(state.p)
    return 0.5 * math.fsum((state.p * v).ravel())


def potential_energy(state: PhaseState, spec: SystemSpec) -> float:
    """Central field ``V(||q||)`` or the sum of ``V_AB(d_AB)`` over unordered pairs."""
    _check_state(state, spec.n)
    terms = []
    for a, b, pot in spec.pairs():
        d = float(np.linalg.norm(state.q[a] if b is None else state.q[a] - state.q[b]))
        if not d > pot.domain_min:
            raise SingularConfigurationError((a, b), d)
        terms.append(pot.v(d))
    return math.fsum(terms)


def total_energy(state: PhaseState, spec: SystemSpec) -> float:
    return kinetic_energy(state, spec.mass) + potential_energy(state, spec)


def _fsum_rows(a):
    return np.array([math.fsum(a[:, k]) for k in range(a.shape[1])])


def angular_momentum(state: PhaseState) -> np.ndarray:
    """``sum_A q_A x p^A``."""
    return _fsum_rows(np.cross(state.q, state.p))


def linear_momentum(state: PhaseState) -> np.ndarray:
    """``sum_A p^A``."""
    return _fsum_rows(state.p)


def center_of_mass(state: PhaseState, mass: MassModel) -> np.ndarray:
    """``(sum_AB m_AB q_B - t L) / sum_AB m_AB``."""
    _check_state(state, mass.n)
    weights = mass.matrix.sum(axis=0)
    moment = _fsum_rows(weights[:, None] * state.q)
    return (moment - state.t * linear_momentum(state)) / mass.total()
