"""Compiled stepping kernels, specialized per potential family.

Arrays follow a fixed layout:

* ``q``, ``p``: ``(N, 3)`` positions and momenta.
* ``minv``, ``mass``: ``(N, N)`` inverse and forward mass coefficients.
* ``pi``, ``pj``: ``(P,)`` particle indices of each interacting pair; ``pj``
  is ``-1`` for the fixed origin of a central field.
* ``prm``: ``(P, K)`` potential parameters per pair; ``dmin``: ``(P,)``.

The tangent ``C`` is ``(3N, 3N)`` with row/column index ``3 * A + k``.
"""

from __future__ import annotations

import hashlib
import importlib
import importlib.util
import inspect
import math
import os
import sys
import threading
from functools import lru_cache
from pathlib import Path
from types import ModuleType, SimpleNamespace

import numba
import numpy as np
from numba import njit

KIND_MP, KIND_LG, KIND_GE, KIND_PM, KIND_PT = 0, 1, 2, 3, 4
RESCUE_JANZ, RESCUE_GONZALEZ, RESCUE_GE, RESCUE_PM, RESCUE_PT = 0, 1, 2, 3, 4

STATUS_OK = 0
STATUS_SINGULAR = 1
STATUS_TANGENT = 2
STATUS_DIVERGED = 3

EPS = np.finfo(np.float64).eps

_TEMPLATE = Path(__file__).with_name("_family_kernels.py")


@njit(nogil=True, cache=True)
def _no_quotient(r0, r1, prm):
    return 0.0, 0.0


@njit(nogil=True, cache=True)
def lu_solve(a, x):
    """Solve ``a y = x`` in place (``x`` becomes ``y``); ``a`` is overwritten.

    Returns ``False`` when a pivot is zero or non-finite.
    """
    m = a.shape[0]
    for k in range(m):
        piv = k
        big = abs(a[k, k])
        for i in range(k + 1, m):
            if abs(a[i, k]) > big:
                big = abs(a[i, k])
                piv = i
        if not (big > 0.0) or not math.isfinite(big):
            return False
        if piv != k:
            for j in range(m):
                tmp = a[k, j]
                a[k, j] = a[piv, j]
                a[piv, j] = tmp
            tmp = x[k]
            x[k] = x[piv]
            x[piv] = tmp
        inv = 1.0 / a[k, k]
        for i in range(k + 1, m):
            f = a[i, k] * inv
            if f != 0.0:
                for j in range(k + 1, m):
                    a[i, j] -= f * a[k, j]
                x[i] -= f * x[k]
    for k in range(m - 1, -1, -1):
        s = x[k]
        for j in range(k + 1, m):
            s -= a[k, j] * x[j]
        x[k] = s / a[k, k]
    return True


@njit(nogil=True, cache=True)
def segregated_increment(dt, minv, mass, c, rq, rp, a, x, dq, dp):
    """Newton increments from the reduced position system.

    Solves ``(I + dt/2 Minv C) dq = -R_q - dt/2 Minv R_p`` and sets
    ``dp = (2/dt) M (R_q + dq)``. ``a`` (3N x 3N) and ``x`` (3N) are scratch.
    Returns ``False`` if the matrix is singular.
    """
    n = rq.shape[0]
    m = 3 * n
    h = 0.5 * dt
    for ai in range(n):
        for k in range(3):
            row = 3 * ai + k
            s = 0.0
            for b in range(n):
                s += minv[ai, b] * rp[b, k]
            x[row] = -rq[ai, k] - h * s
            for col in range(m):
                s = 0.0
                for b in range(n):
                    s += minv[ai, b] * c[3 * b + k, col]
                a[row, col] = h * s
            a[row, row] += 1.0
    if not lu_solve(a, x):
        return False
    for ai in range(n):
        for k in range(3):
            dq[ai, k] = x[3 * ai + k]
    g = 2.0 / dt
    for ai in range(n):
        for k in range(3):
            s = 0.0
            for b in range(n):
                s += mass[ai, b] * (rq[b, k] + dq[b, k])
            dp[ai, k] = g * s
    return True


_BINDINGS = ("total", "convex", "concave", "sup", "sub", "quotient")


def _family_functions(family):
    quotient = family.quotient if family.quotient is not None else _no_quotient
    return dict(total=family.total, convex=family.convex, concave=family.concave,
                sup=family.superconvex, sub=family.superconcave, quotient=quotient)


def _import_path(fn):
    """``(module, name)`` under which ``fn`` is importable, or ``None``."""
    py = getattr(fn, "py_func", None)
    if py is None or "<locals>" in py.__qualname__ or py.__module__ == "__main__":
        return None
    try:
        found = getattr(importlib.import_module(py.__module__), py.__qualname__)
    except (ImportError, AttributeError):
        return None
    return (py.__module__, py.__qualname__) if found is fn else None


def kernel_cache_dir() -> Path:
    """Directory of generated kernel modules and their compiled caches."""
    return Path(os.environ.get("EMSPLIT_CACHE", Path.home() / ".cache" / "emsplit")) / "kernels"


def _generated_source(family, fns):
    paths = {name: _import_path(fn) for name, fn in fns.items()}
    if any(v is None for v in paths.values()):
        return None
    lines = ["# Generated kernel module; edits are overwritten."]
    lines += [f"from {mod} import {name} as {bind}" for bind, (mod, name) in paths.items()]
    lines.append(f"has_quotient = {family.quotient is not None}")
    lines.append("CACHE = True")
    return "\n".join(lines) + "\n" + _TEMPLATE.read_text()


def _dependency_digest(fns) -> str:
    """Hash of the source files defining the bound functions.

    Compiled caches are keyed on the generated module only, so edits to a
    potential's source must change the generated file name.
    """
    h = hashlib.sha256(numba.__version__.encode())
    for name in sorted({fn.py_func.__module__ for fn in fns.values()}):
        h.update(name.encode())
        h.update(Path(inspect.getfile(sys.modules[name])).read_bytes())
    return h.hexdigest()


def _load_cached(family, fns):
    source = _generated_source(family, fns)
    if source is None:
        return None
    try:
        deps = _dependency_digest(fns)
    except (OSError, TypeError):
        return None
    digest = hashlib.sha256((source + deps).encode()).hexdigest()[:16]
    slug = "".join(ch if ch.isalnum() else "_" for ch in family.name)
    path = kernel_cache_dir() / f"family_{slug}_{digest}.py"
    try:
        if not path.exists() or path.read_text() != source:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(f".{os.getpid()}.{threading.get_ident()}.tmp")
            tmp.write_text(source)
            tmp.replace(path)
    except OSError:
        return None
    spec = importlib.util.spec_from_file_location(f"emsplit._generated_{slug}_{digest}", path)
    module = importlib.util.module_from_spec(spec)
    # compiled caches re-import their module by name when loaded
    sys.modules[spec.name] = module
    spec.loader.exec_module(module)
    return module


def _load_uncached(family, fns):
    module = ModuleType(f"emsplit._generated_{id(family):x}")
    module.__dict__.update(fns, has_quotient=family.quotient is not None, CACHE=False)
    exec(compile(_TEMPLATE.read_text(), str(_TEMPLATE), "exec"), module.__dict__)
    return module


_lock = threading.Lock()


@lru_cache(maxsize=None)
def _build(family):
    fns = _family_functions(family)
    module = _load_cached(family, fns) or _load_uncached(family, fns)
    return SimpleNamespace(
        radial_lambda=module.radial_lambda,
        assemble=module.assemble,
        advance=module.advance,
        energy=module.energy,
        run=module.run,
    )


def build_kernels(family):
    """Force, residual, Newton and loop kernels specialized for ``family``.

    When the family's functions are importable by name, the kernels live in
    a generated module under :func:`kernel_cache_dir` so that compiled code
    is reused across processes; otherwise they are compiled per process.
    """
    with _lock:
        return _build(family)
