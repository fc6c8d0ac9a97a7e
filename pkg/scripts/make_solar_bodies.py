"""Regenerate ``src/emsplit/data/solar_system.txt`` from the DE421 ephemeris.

Needs the optional packages ``jplephem`` and ``de421``::

    pip install jplephem de421
    python scripts/make_solar_bodies.py

States are barycentric (ICRF) at the ephemeris epoch JD 2440400.5. Earth and
Moon are merged into the Earth-Moon barycenter, and Pluto is its system
barycenter. Masses are GM ratios to the Sun, so the Sun has unit mass.
"""
import os

import de421
import numpy as np
from jplephem.ephem import Ephemeris

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "emsplit", "data", "solar_system.txt")

BODIES = [
    ("Sun", "sun", "GMS"),
    ("Mercury", "mercury", "GM1"),
    ("Venus", "venus", "GM2"),
    ("Earth-Moon", "earthmoon", "GMB"),
    ("Mars", "mars", "GM4"),
    ("Jupiter", "jupiter", "GM5"),
    ("Saturn", "saturn", "GM6"),
    ("Uranus", "uranus", "GM7"),
    ("Neptune", "neptune", "GM8"),
    ("Pluto", "pluto", "GM9"),
]


def main():
    consts = np.load(os.path.join(os.path.dirname(de421.__file__), "constants.npy"))
    consts = {row[0].decode(): float(row[1]) for row in consts}
    au_km = consts["AU"]
    epoch = consts["JDEPOC"]
    gm_sun = consts["GMS"]
    eph = Ephemeris(de421)

    lines = [
        "# Sun and nine planets, barycentric ICRF at JD %.1f (DE421)" % epoch,
        "# columns: name mass qx qy qz px py pz",
        "# mass in solar masses, q in AU, p = mass * velocity in Msun AU/day",
        "G = 2.95912208286e-4",
        "units = AU, day, Msun",
    ]
    for name, key, gm in BODIES:
        state = eph.compute(key, epoch)[:, 0]
        q = state[:3] / au_km
        v = state[3:] / au_km
        m = consts[gm] / gm_sun
        p = m * v
        lines.append(" ".join([name, repr(m)] + [repr(float(x)) for x in (*q, *p)]))
    with open(OUT, "w") as fh:
        fh.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
