"""Root scan for Hermitian matrix families ``A(E)``: energies where ``A`` is singular.

Eigenvalue branches of ``A(E)`` are followed across a uniform grid, pairing
branches between neighbouring points by eigenvector overlap so that crossings
do not hide sign changes.  Each sign change is narrowed by bisection on the
tracked branch and finished with Brent's method; roots closer than the
clustering threshold are merged into one degenerate group whose null space is
extracted jointly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment

from .errors import RootRefinementError

log = logging.getLogger(__name__)

CLUSTER_RTOL = 1e-8


@dataclass
class RootGroup:
    energy: float
    null_space: np.ndarray  # (dim, k) orthonormal columns
    branch_values: np.ndarray  # |eigenvalue| of A at the root for each null vector


@dataclass
class ScanResult:
    groups: list
    grid_step: float
    n_brackets: int
    failures: list = field(default_factory=list)
    n_evaluations: int = 0


def _hermitize(m):
    return 0.5 * (m + m.conj().T)


class _Tracker:
    def __init__(self, fn):
        self.fn = fn
        self.count = 0

    def eigh(self, E):
        self.count += 1
        return np.linalg.eigh(_hermitize(np.asarray(self.fn(E), dtype=complex)))

    def branch(self, E, ref):
        w, v = self.eigh(E)
        i = int(np.argmax(np.abs(ref.conj() @ v)))
        return w[i], v[:, i]


def _refine(tr: _Tracker, a, b, fa, fb, va):
    """Root of the branch that carries eigenvector ``va`` at ``a`` inside ``[a, b]``."""
    scale = max(1.0, abs(a), abs(b))
    width0 = b - a
    # bisection keeps the reference vector fresh while the branch is followed
    while b - a > 1e-6 * width0:
        m = 0.5 * (a + b)
        fm, vm = tr.branch(m, va)
        if fm == 0.0:
            return m
        if np.sign(fm) == np.sign(fa):
            a, fa, va = m, fm, vm
        else:
            b, fb = m, fm
    ref = va
    g = lambda E: tr.branch(E, ref)[0]  # noqa: E731
    ga, gb = g(a), g(b)
    if ga == 0.0:
        return a
    if gb == 0.0:
        return b
    if np.sign(ga) == np.sign(gb):
        raise RootRefinementError(f"lost branch sign change in [{a}, {b}]")
    return brentq(g, a, b, xtol=1e-15 * scale, rtol=4 * np.finfo(float).eps, maxiter=200)


def scan_roots(fn, lo: float, hi: float, n_points: int = 400, cluster_rtol: float = CLUSTER_RTOL,
               strict: bool = True) -> ScanResult:
    """Find all energies in ``(lo, hi)`` where the Hermitian ``fn(E)`` is singular.

    Roots exactly on the window boundary are not reported (no bracket exists there).
    With ``strict=False`` a failed bracket refinement is logged in
    ``ScanResult.failures`` and the scan continues.
    """
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise ValueError(f"invalid window [{lo}, {hi}]")
    if n_points < 2:
        raise ValueError("grid needs at least two intervals")
    tr = _Tracker(fn)
    grid = np.linspace(lo, hi, n_points + 1)
    w_prev, v_prev = tr.eigh(grid[0])
    roots = []
    brackets = 0
    failures = []
    for k in range(1, len(grid)):
        w, v = tr.eigh(grid[k])
        overlap = np.abs(v_prev.conj().T @ v)
        _, cols = linear_sum_assignment(-overlap)
        w, v = w[cols], v[:, cols]
        for i in range(len(w)):
            if w[i] == 0.0 and k < len(grid) - 1:
                roots.append(grid[k])
                continue
            if w_prev[i] * w[i] < 0.0:
                brackets += 1
                try:
                    roots.append(_refine(tr, grid[k - 1], grid[k], w_prev[i], w[i], v_prev[:, i]))
                except (RootRefinementError, RuntimeError, ValueError) as exc:
                    if strict:
                        raise RootRefinementError(str(exc)) from exc
                    log.warning("bracket [%g, %g] failed: %s", grid[k - 1], grid[k], exc)
                    failures.append((grid[k - 1], grid[k], str(exc)))
        w_prev, v_prev = w, v

    roots.sort()
    clusters = []
    for r in roots:
        if clusters and abs(r - clusters[-1][-1]) <= cluster_rtol * max(1.0, abs(r)):
            clusters[-1].append(r)
        else:
            clusters.append([r])

    groups = []
    for c in clusters:
        E = float(np.mean(c))
        w, v = tr.eigh(E)
        idx = np.argsort(np.abs(w), kind="stable")[: len(c)]
        idx = np.sort(idx)
        groups.append(RootGroup(E, v[:, idx], np.abs(w[idx])))
    return ScanResult(groups, (hi - lo) / n_points, brackets, failures, tr.count)


def phase_fix(v: np.ndarray) -> np.ndarray:
    """Rotate ``v`` so its first largest-magnitude component is real and positive."""
    mags = np.abs(v)
    top = mags.max()
    if top == 0.0:
        return v
    i = int(np.flatnonzero(mags >= top * (1.0 - 1e-8))[0])
    if np.imag(v[i]) == 0:
        return v * np.sign(np.real(v[i]))
    # angle rather than |z|/z: the quotient overflows for subnormal entries
    return v * np.exp(-1j * np.angle(v[i]))
