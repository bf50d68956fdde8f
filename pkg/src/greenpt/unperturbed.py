"""Unperturbed bound states, the unperturbed Green function and its pole/background split.

For ``A(E) = G0^-1(E) - K0(E)`` the unperturbed Green function is
``G_u(E) = A(E)^-1``.  Near a bound-state energy ``e_n`` it behaves as
``|phi_n><phi_n| / (E - e_n) + G_u^b(E)`` provided ``phi_n`` is normalized with
``<phi_n| dA/dE |phi_n> = 1``; the finite remainder ``G_u^b`` is what the
perturbation expansion is built from.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import operators as ops
from ._scan import phase_fix, scan_roots
from .errors import DecompositionError, OperatorError, ResidueNormalizationError, SingularEnergyError
from .operators import EnergyOperator

log = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-10
CLUSTER_RTOL = 1e-8
DEFAULT_GRID = 400


@dataclass(frozen=True)
class BoundState:
    """An energy with its (residue-normalized) state vector.

    ``level_index`` counts distinct levels in the scanned window from the bottom;
    states of one degenerate level share ``level_index`` and carry the same
    ``degeneracy_group``.
    """

    energy: float
    vector: np.ndarray
    residue_normalized: bool = True
    level_index: int = 0
    degeneracy_group: Optional[int] = None


def system_matrix(g0inv: EnergyOperator, k0: EnergyOperator, E: float) -> np.ndarray:
    """``A(E) = G0^-1(E) - K0(E)``."""
    return ops.evaluate(g0inv, E) - ops.evaluate(k0, E)


def system_slope(g0inv: EnergyOperator, k0: EnergyOperator, E: float) -> np.ndarray:
    """``dA/dE`` at ``E``."""
    return ops.derivative(g0inv, E, 1) - ops.derivative(k0, E, 1)


def residue_normalize(null_space: np.ndarray, slope: np.ndarray, allow_negative: bool = False):
    """Rescale an orthonormal null-space basis so that ``Phi^dag (dA/dE) Phi = I``.

    Returns ``(Phi, metric_eigenvalues)``.  For a single vector this divides by
    ``sqrt(<q|dA/dE|q>)``.  A non-positive metric raises
    :class:`ResidueNormalizationError` unless ``allow_negative`` is set, in which
    case ``|metric|`` is used.
    """
    q = np.atleast_2d(null_space.T).T
    metric = q.conj().T @ slope @ q
    metric = 0.5 * (metric + metric.conj().T)
    w, u = np.linalg.eigh(metric)
    scale = max(1.0, np.linalg.norm(slope, 2))
    if np.any(w <= 1e-14 * scale):
        if not allow_negative or np.any(np.abs(w) <= 1e-14 * scale):
            raise ResidueNormalizationError(
                f"residue metric <phi|dA/dE|phi> has non-positive eigenvalues {w}")
    inv_sqrt = u @ np.diag(1.0 / np.sqrt(np.abs(w))) @ u.conj().T
    phi = q @ inv_sqrt
    phi = np.column_stack([phase_fix(phi[:, j]) for j in range(phi.shape[1])])
    return phi, w


def solve_unperturbed(g0inv: EnergyOperator, k0: EnergyOperator, window: Sequence[float],
                      n_grid: int = DEFAULT_GRID, cluster_rtol: float = CLUSTER_RTOL) -> list:
    """All bound states of ``[G0^-1(E) - K0(E)] phi = 0`` with energy inside ``window``.

    Parameters
    ----------
    g0inv, k0 : EnergyOperator
        Inverse free propagator and unperturbed kernel, Hermitian on ``window``.
    window : (lo, hi)
        Open energy interval to scan.
    n_grid : int
        Number of grid intervals (default: window length / 400 steps).

    Returns
    -------
    list of BoundState
        Sorted by energy, residue-normalized.  An empty list is a valid result.
    """
    if g0inv.dim != k0.dim:
        raise OperatorError(f"dimension mismatch: G0^-1 is {g0inv.dim}, K0 is {k0.dim}")
    lo, hi = map(float, window)
    scan = scan_roots(lambda E: system_matrix(g0inv, k0, E), lo, hi, n_grid, cluster_rtol)
    states = []
    for level, group in enumerate(scan.groups):
        phi, _ = residue_normalize(group.null_space, system_slope(g0inv, k0, group.energy))
        degen = level if phi.shape[1] > 1 else None
        for j in range(phi.shape[1]):
            states.append(BoundState(group.energy, phi[:, j], True, level, degen))
    log.debug("found %d unperturbed states in [%g, %g]", len(states), lo, hi)
    return states


def select_level(states: Sequence[BoundState], n: int) -> list:
    """States of the ``n``-th distinct level (a degeneracy group may hold several)."""
    chosen = [s for s in states if s.level_index == n]
    if not chosen:
        raise IndexError(f"level {n} not found among {len({s.level_index for s in states})} levels")
    return chosen


def residue_metric(g0inv, k0, state: BoundState) -> complex:
    """``<phi| dA/dE |phi>`` at the state's energy (1 for a residue-normalized state)."""
    v = state.vector
    return complex(v.conj() @ system_slope(g0inv, k0, state.energy) @ v)


def green_u(g0inv: EnergyOperator, k0: EnergyOperator, E: float) -> np.ndarray:
    """Unperturbed Green function ``G_u(E) = [G0^-1(E) - K0(E)]^-1``."""
    a = system_matrix(g0inv, k0, E)
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] <= 1e-14 * max(s[0], 1.0):
        raise SingularEnergyError(f"G_u is singular at E={E} (pole of the unperturbed system)")
    return np.linalg.solve(a, np.eye(a.shape[0], dtype=complex))


@dataclass
class PoleDecomposition:
    """Split of ``G_u(E)`` into the pole of one level and a background.

    Attributes
    ----------
    states : tuple of BoundState
        The level's state(s); more than one for a degenerate level.
    mode : {'spectral', 'subtraction'}
        ``spectral`` sums ``|phi_m><phi_m|/(E-e_m)`` over all other eigenstates
        (energy-independent QM systems only); ``subtraction`` computes
        ``G_u(E)`` minus the pole term.
    exclusion_radius : float
        Half-width of the region around the pole where subtraction-mode values
        are interpolated rather than computed directly.
    """

    g0inv: EnergyOperator
    k0: EnergyOperator
    states: tuple
    mode: str
    exclusion_radius: float
    spectrum_energies: Optional[np.ndarray] = None
    spectrum_vectors: Optional[np.ndarray] = None
    _other: Optional[tuple] = field(default=None, repr=False)

    @property
    def energy(self) -> float:
        return self.states[0].energy

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def vectors(self) -> np.ndarray:
        return np.column_stack([s.vector for s in self.states])

    @property
    def phi(self) -> np.ndarray:
        if self.size != 1:
            raise DecompositionError(f"level is {self.size}-fold degenerate; no single phi")
        return self.states[0].vector

    def pole_term(self, E: float) -> np.ndarray:
        p = self.vectors
        return (p @ p.conj().T) / (E - self.energy)

    def background(self, E: float) -> np.ndarray:
        return background_eval(self, E)

    def background_taylor(self, E: float, order: int) -> list:
        """Taylor coefficients ``[G^b(E), G^b'(E), G^b''(E)/2, ...]`` up to ``order``.

        Exact in spectral mode; finite differences otherwise.
        """
        out = [background_eval(self, E)]
        if self.mode == "spectral":
            ev, vo = self._other
            d = E - ev
            for k in range(1, order + 1):
                out.append((vo * ((-1.0) ** k / d ** (k + 1))) @ vo.conj().T)
        else:
            for k in range(1, order + 1):
                fd = ops.central_difference(lambda x: background_eval(self, x), E, k)
                out.append(fd / math.factorial(k))
        return out


def _nearest_unitary(m):
    u, _, vh = np.linalg.svd(m)
    return u @ vh


def pole_decomposition(g0inv: EnergyOperator, k0: EnergyOperator, level, mode: str = "auto",
                       exclusion_radius: Optional[float] = None, window: Optional[Sequence[float]] = None,
                       cluster_rtol: float = CLUSTER_RTOL) -> PoleDecomposition:
    """Build the pole/background split of ``G_u`` for one (possibly degenerate) level.

    ``level`` is a :class:`BoundState` or a sequence of them sharing one energy.
    ``mode='auto'`` picks ``spectral`` whenever ``K0`` is energy independent and
    ``G0^-1 = E - H0``, and ``subtraction`` otherwise.
    """
    states = (level,) if isinstance(level, BoundState) else tuple(level)
    if not states:
        raise DecompositionError("empty level")
    e_n = states[0].energy
    if any(abs(s.energy - e_n) > cluster_rtol * max(1.0, abs(e_n)) for s in states):
        raise DecompositionError("states of one level must share an energy")
    slope = system_slope(g0inv, k0, e_n)
    phi = np.column_stack([s.vector for s in states])
    metric = phi.conj().T @ slope @ phi
    if not all(s.residue_normalized for s in states) or \
            np.max(np.abs(metric - np.eye(len(states)))) > 1e-8:
        raise DecompositionError("level is not residue-normalized: <phi|dA/dE|phi> != 1")

    qm = k0.energy_independent and g0inv.is_qm_free_inverse
    if mode == "auto":
        mode = "spectral" if qm else "subtraction"
    if mode not in ("spectral", "subtraction"):
        raise DecompositionError(f"unknown decomposition mode {mode!r}")
    if exclusion_radius is None:
        length = (window[1] - window[0]) if window is not None else 1.0
        exclusion_radius = 1e-4 * length

    if mode == "subtraction":
        return PoleDecomposition(g0inv, k0, states, mode, float(exclusion_radius))

    if not qm:
        raise DecompositionError("spectral mode needs an energy-independent K0 and G0^-1 = E - H0")
    h_u = -system_matrix(g0inv, k0, 0.0)
    h_u = 0.5 * (h_u + h_u.conj().T)
    energies, vecs = np.linalg.eigh(h_u)
    vecs = np.column_stack([phase_fix(vecs[:, j]) for j in range(vecs.shape[1])])
    in_group = np.abs(energies - e_n) <= max(cluster_rtol, 1e-9) * max(1.0, abs(e_n))
    if in_group.sum() != len(states):
        raise DecompositionError(
            f"level at {e_n} has multiplicity {in_group.sum()} in the spectrum but {len(states)} states were given")
    v_group = vecs[:, in_group]
    # keep the caller's basis inside the level, but exactly orthogonal to the rest
    rot = _nearest_unitary(v_group.conj().T @ phi)
    pole_vecs = v_group @ rot
    new_states = tuple(
        BoundState(s.energy, pole_vecs[:, j], True, s.level_index, s.degeneracy_group)
        for j, s in enumerate(states))
    other = (energies[~in_group], vecs[:, ~in_group])
    return PoleDecomposition(g0inv, k0, new_states, mode, float(exclusion_radius),
                             energies, vecs, other)


def background_eval(decomp: PoleDecomposition, E: float) -> np.ndarray:
    """Background Green function ``G_u^b(E)`` (pole of the chosen level removed).

    Poles of the other levels remain; evaluating on one of them raises
    :class:`SingularEnergyError`.
    """
    E = float(E)
    if decomp.mode == "spectral":
        ev, vo = decomp._other
        d = E - ev
        if np.any(np.abs(d) <= 1e-14 * max(1.0, abs(E))):
            raise SingularEnergyError(f"E={E} sits on another unperturbed pole")
        return (vo / d) @ vo.conj().T

    e_n, delta = decomp.energy, decomp.exclusion_radius
    if abs(E - e_n) >= delta:
        return green_u(decomp.g0inv, decomp.k0, E) - decomp.pole_term(E)
    # cubic interpolation through e_n +- delta, e_n +- 2 delta; at E = e_n this is
    # the Richardson combination (4 avg(delta) - avg(2 delta)) / 3
    nodes = np.array([-2.0, -1.0, 1.0, 2.0]) * delta
    x = E - e_n
    total = None
    for i, xi in enumerate(nodes):
        w = np.prod([(x - xj) / (xi - xj) for j, xj in enumerate(nodes) if j != i])
        term = w * (green_u(decomp.g0inv, decomp.k0, e_n + xi) - decomp.pole_term(e_n + xi))
        total = term if total is None else total + term
    return total
