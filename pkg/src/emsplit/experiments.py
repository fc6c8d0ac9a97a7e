"""Ready-made systems: the stiff spring, the Lennard-Jones pair and gravitating bodies."""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

from .model import CentralField, MassModel, PairTable, PhaseState, SystemSpec
from .potentials import (
    GRAVITATIONAL_CONSTANT,
    GravityParams,
    LennardJonesParams,
    NeoHookeanParams,
    gravitational,
    lennard_jones,
    neo_hookean,
)

__all__ = ["neo_hookean_spring", "lj_pair", "gravitating_bodies"]


def neo_hookean_spring(c: float = 1e3, r_bar: float = 4.0, mass: float = 10.0,
                       q0=(2.0, 1.0, 1.0), p0=(-30.0, 15.0, 45.0)) -> Tuple[SystemSpec, PhaseState]:
    """Single particle on a stiff neo-Hookean spring anchored at the origin.

    The defaults give ``H0 = 1866.8`` and ``J0 = (30, -120, 60)``.
    """
    spec = SystemSpec(MassModel.diagonal([mass]), CentralField(neo_hookean(NeoHookeanParams(c, r_bar))))
    return spec, PhaseState([q0], [p0], 0.0)


def lj_pair(epsilon: float = 100.0, sigma: float = 1.0, half_gap: float = 0.5612,
            p1=(5.0, 0.0, 0.0), p2=(10.0, 0.0, 0.0)) -> Tuple[SystemSpec, PhaseState]:
    """Two unit masses on the y-axis at ``-/+ half_gap`` with momenta along x."""
    pot = lennard_jones(LennardJonesParams(epsilon, sigma))
    spec = SystemSpec(MassModel.diagonal([1.0, 1.0]), PairTable.uniform(2, pot))
    q = [(0.0, -half_gap, 0.0), (0.0, half_gap, 0.0)]
    return spec, PhaseState(q, [p1, p2], 0.0)


def gravitating_bodies(masses: Sequence[float], q, p, G: float = GRAVITATIONAL_CONSTANT,
                       t: float = 0.0) -> Tuple[SystemSpec, PhaseState]:
    """Point masses with pairwise Newtonian attraction and a diagonal mass model."""
    masses = [float(m) for m in masses]
    table = PairTable.from_function(
        len(masses), lambda a, b: gravitational(GravityParams(masses[a], masses[b], G), validate=False))
    spec = SystemSpec(MassModel.diagonal(masses), table)
    return spec, PhaseState(np.asarray(q, dtype=float), np.asarray(p, dtype=float), t)
