"""Brute-force ground truth for bound-state problems.

``dense_eigs`` diagonalizes a Hermitian matrix; ``exact_states`` finds every
energy at which ``G0^-1(E) - K0(E) - K1(E)`` is singular by scanning a fine
grid, with no use of the perturbative machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import operators as ops
from ._scan import phase_fix, scan_roots
from .errors import OperatorError
from .operators import is_hermitian
from .unperturbed import residue_normalize

ORACLE_GRID = 800


@dataclass
class OracleResult:
    energies: np.ndarray
    vectors: list
    method: str
    scan_diagnostics: dict = field(default_factory=dict)
    metric_signs: list = field(default_factory=list)

    def nearest(self, E: float):
        """``(energy, vector)`` of the root closest to ``E``."""
        if len(self.energies) == 0:
            raise LookupError("oracle found no roots")
        i = int(np.argmin(np.abs(np.asarray(self.energies) - E)))
        return float(self.energies[i]), self.vectors[i]


def dense_eigs(h, window: Sequence[float]) -> OracleResult:
    """Eigenpairs of the Hermitian matrix ``h`` with eigenvalue in ``[lo, hi]``."""
    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h):
        raise OperatorError("dense_eigs needs a Hermitian matrix")
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    lo, hi = window
    keep = (w >= lo) & (w <= hi)
    vecs = [phase_fix(v[:, j]) for j in np.flatnonzero(keep)]
    return OracleResult(w[keep], vecs, "dense_eig", {}, [1] * len(vecs))


def full_matrix(g0inv, k0, k1, E: float) -> np.ndarray:
    return ops.evaluate(g0inv, E) - ops.evaluate(k0, E) - ops.evaluate(k1, E)


def exact_states(g0inv, k0, k1, window: Sequence[float], n_grid: int = ORACLE_GRID) -> OracleResult:
    """All singular energies of ``A(E) = G0^-1 - K0 - K1`` inside ``window``.

    Null vectors are residue normalized (by ``sqrt|<v|dA/dE|v>|``; the sign of
    the metric is kept in ``metric_signs``).  A bracket that fails to refine is
    recorded in ``scan_diagnostics['failures']`` and the scan goes on.
    """
    lo, hi = map(float, window)
    scan = scan_roots(lambda E: full_matrix(g0inv, k0, k1, E), lo, hi, n_grid, strict=False)
    energies, vectors, signs = [], [], []
    for g in scan.groups:
        slope = (ops.derivative(g0inv, g.energy, 1) - ops.derivative(k0, g.energy, 1)
                 - ops.derivative(k1, g.energy, 1))
        try:
            phi, metric = residue_normalize(g.null_space, slope, allow_negative=True)
        except Exception:
            # zero metric: keep the unit null vectors
            phi = np.column_stack([phase_fix(g.null_space[:, j]) for j in range(g.null_space.shape[1])])
            metric = np.zeros(phi.shape[1])
        for j in range(phi.shape[1]):
            energies.append(g.energy)
            vectors.append(phi[:, j])
            signs.append(int(np.sign(metric[j])) if phi.shape[1] == len(metric) else 1)
    diag = {"grid_step": scan.grid_step, "brackets": scan.n_brackets, "failures": scan.failures,
            "evaluations": scan.n_evaluations}
    return OracleResult(np.array(energies), vectors, "det_scan", diag, signs)
