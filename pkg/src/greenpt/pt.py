"""Perturbation theory through the separable-kernel form of the bound-state equation.

With the pole of the targeted level split off, ``G_u = |phi><phi|/(E-e) + G_u^b``,
the perturbed equation ``[G0^-1(E) - K0 - K1] psi = 0`` becomes a rank-one
(separable) equation.  It is solved exactly by

    E   = e + <phi| K1(E) [1 - G_u^b(E) K1(E)]^-1 |phi>
    psi = [1 - G_u^b(E) K1(E)]^-1 |phi>

which is iterated to self-consistency (:func:`energy_fixed_point`) or expanded
in powers of ``K1`` (:func:`pt_expand`).  Neither ``K0``, ``K1`` nor ``G0^-1``
needs to be linear in the energy.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import operators as ops
from ._scan import phase_fix, scan_roots
from .errors import (ConvergenceError, DecompositionError, OperatorError, PreconditionError,
                     SingularEnergyError)
from .jets import SeriesJet, compose
from .operators import EnergyOperator
from .unperturbed import PoleDecomposition, pole_decomposition, select_level, solve_unperturbed

log = logging.getLogger(__name__)

MAX_SERIES_ORDER = 4


@dataclass(frozen=True)
class PTProblem:
    """One perturbation-theory task: the systems ``(G0^-1, K0)`` and ``K1`` plus the targeted level."""

    g0inv: EnergyOperator
    k0: EnergyOperator
    k1: EnergyOperator
    level: PoleDecomposition
    window: tuple

    def __post_init__(self):
        dims = {self.g0inv.dim, self.k0.dim, self.k1.dim}
        if len(dims) != 1:
            raise OperatorError(f"operators disagree on dimension: {sorted(dims)}")
        if self.level.g0inv is not self.g0inv or self.level.k0 is not self.k0:
            raise DecompositionError("level decomposition was built from a different (G0^-1, K0)")
        lo, hi = self.window
        if not lo < hi:
            raise ValueError(f"empty window {self.window}")

    @property
    def dim(self) -> int:
        return self.k1.dim

    @property
    def unperturbed_energy(self) -> float:
        return self.level.energy


@dataclass
class PTReport:
    """Outcome of one solver run for one level."""

    energy: float
    wavefunction: np.ndarray
    series_energies: list = field(default_factory=list)
    series_wavefunctions: list = field(default_factory=list)
    iterations: int = 0
    residual: float = float("nan")
    converged: bool = False
    method_tag: str = "fixed_point"
    history: list = field(default_factory=list)
    ambiguous: bool = False
    message: str = ""


def make_problem(g0inv: EnergyOperator, k0: EnergyOperator, k1: EnergyOperator, window: Sequence[float],
                 level: int = 0, mode: str = "auto", n_grid: int = 400) -> PTProblem:
    """Scan the unperturbed system on ``window`` and target its ``level``-th level."""
    window = (float(window[0]), float(window[1]))
    states = solve_unperturbed(g0inv, k0, window, n_grid=n_grid)
    chosen = select_level(states, level)
    decomp = pole_decomposition(g0inv, k0, chosen, mode=mode, window=window)
    return PTProblem(g0inv, k0, k1, decomp, window)


def residual_norm(g0inv: EnergyOperator, k0: EnergyOperator, k1: EnergyOperator, E: float,
                  psi: np.ndarray) -> float:
    """Relative residual ``||[G0^-1(E) - K0(E) - K1(E)] psi|| / ||psi||`` of the perturbed equation."""
    a = ops.evaluate(g0inv, E) - ops.evaluate(k0, E) - ops.evaluate(k1, E)
    return float(np.linalg.norm(a @ psi) / np.linalg.norm(psi))


def _single_phi(problem: PTProblem) -> np.ndarray:
    if problem.level.size != 1:
        raise PreconditionError(
            f"level is {problem.level.size}-fold degenerate; use degenerate_solve")
    return problem.level.phi


def _factor(problem: PTProblem, E: float, k1: Optional[np.ndarray] = None) -> np.ndarray:
    k = ops.evaluate(problem.k1, E) if k1 is None else k1
    return np.eye(problem.dim) - problem.level.background(E) @ k


def _solve(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularEnergyError(f"resolvent factor 1 - G_u^b K1 is singular: {exc}") from None


def resolvent_apply(problem: PTProblem, E: float, v: np.ndarray, method: str = "direct",
                    terms: int = 30) -> np.ndarray:
    """Apply ``[1 - G_u^b(E) K1(E)]^-1`` to ``v``.

    ``method='direct'`` solves the linear system; ``method='neumann'`` returns the
    partial sum ``sum_{s=0}^{terms} (G_u^b K1)^s v`` and raises
    :class:`ConvergenceError` when the term norms stop decreasing for three
    consecutive steps.
    """
    v = np.asarray(v, dtype=complex)
    if method == "direct":
        return _solve(_factor(problem, E), v)
    if method != "neumann":
        raise ValueError(f"unknown resolvent method {method!r}")
    gk = problem.level.background(E) @ ops.evaluate(problem.k1, E)
    total, term = v.copy(), v.copy()
    prev, rising = np.linalg.norm(v), 0
    for _ in range(terms):
        term = gk @ term
        size = np.linalg.norm(term)
        if size == 0.0:
            break
        rising = rising + 1 if size >= prev else 0
        if rising >= 3:
            raise ConvergenceError("Neumann series diverges (term norms not decreasing)")
        prev = size
        total = total + term
    return total


def wavefunction(problem: PTProblem, E: float) -> np.ndarray:
    """``psi = [1 - G_u^b(E) K1(E)]^-1 phi`` at energy ``E``."""
    return _solve(_factor(problem, E), _single_phi(problem).astype(complex))


def energy_map(problem: PTProblem, E: float):
    """Right-hand side of the self-consistent energy equation and the wavefunction at ``E``.

    Returns ``(e + <phi|K1(E) psi(E)>, psi(E))``.
    """
    phi = _single_phi(problem)
    k = ops.evaluate(problem.k1, E)
    psi = _solve(_factor(problem, E, k), phi.astype(complex))
    shift = phi.conj() @ k @ psi
    return problem.unperturbed_energy + float(shift.real), psi


def _iterate(update, E0: float, window, tol: float, max_iter: int, damping: float):
    """Damped fixed-point iteration of ``E -> update(E)[0]``, switching to secant
    steps on ``r(E) = E - f(E)`` once half the budget is spent."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    lo, hi = window
    switch = max(max_iter // 2, 2)
    E = float(E0)
    history = []
    best = None
    for it in range(1, max_iter + 1):
        fE, psi = update(E)
        r = E - fE
        history.append((E, r))
        if best is None or abs(r) < abs(best[1]):
            best = (E, r, psi, it)
        if abs(r) <= tol:
            return E, psi, it, True, history
        if it > switch and len(history) >= 2 and history[-1][1] != history[-2][1]:
            (e0, r0), (e1, r1) = history[-2], history[-1]
            E_new = e1 - r1 * (e1 - e0) / (r1 - r0)
        else:
            E_new = (1.0 - damping) * E + damping * fE
        if not (lo <= E_new <= hi) or not math.isfinite(E_new):
            raise ConvergenceError(f"iterate E={E_new} left the window [{lo}, {hi}]")
        log.debug("iteration %d: E=%.17g residual=%.3e", it, E, r)
        E = E_new
    E, _, psi, _ = best
    return E, psi, max_iter, False, history


def energy_fixed_point(problem: PTProblem, tol: float = 1e-12, max_iter: int = 200,
                       damping: float = 1.0) -> PTReport:
    """Solve the self-consistent energy equation by iteration from the unperturbed energy.

    Converged means ``|E - f(E)| <= tol`` at the reported energy.  When the
    budget runs out the report has ``converged=False`` and carries the best
    iterate seen.
    """
    E, psi, it, ok, hist = _iterate(lambda x: energy_map(problem, x), problem.unperturbed_energy,
                                    problem.window, tol, max_iter, damping)
    res = residual_norm(problem.g0inv, problem.k0, problem.k1, E, psi)
    return PTReport(E, psi, iterations=it, residual=res, converged=ok, method_tag="fixed_point",
                    history=hist)


def sakurai_map(problem: PTProblem, E: float, background=None):
    """Energy update with the background frozen at the unperturbed energy ``e``:
    ``psi = [1 - G_u^b(e) (K1(E) - (E - e))]^-1 phi``, ``f = e + <phi|K1(E)|psi>``."""
    phi = _single_phi(problem)
    e = problem.unperturbed_energy
    gb = problem.level.background(e) if background is None else background
    k = ops.evaluate(problem.k1, E)
    m = np.eye(problem.dim) - gb @ (k - (E - e) * np.eye(problem.dim))
    psi = _solve(m, phi.astype(complex))
    return e + float((phi.conj() @ k @ psi).real), psi


def sakurai_solve(problem: PTProblem, tol: float = 1e-12, max_iter: int = 200,
                  damping: float = 1.0) -> PTReport:
    """Self-consistent solution with ``G_u^b`` held at the unperturbed energy.

    Only valid for an energy-independent ``K0`` with ``G0^-1 = E - H0`` (the
    spectral decomposition); ``K1`` may depend on energy.
    """
    if not problem.k0.energy_independent:
        raise PreconditionError("sakurai_solve needs an energy-independent K0")
    if problem.level.mode != "spectral":
        raise PreconditionError("sakurai_solve needs a spectral-mode pole decomposition")
    gb = problem.level.background(problem.unperturbed_energy)
    E, psi, it, ok, hist = _iterate(lambda x: sakurai_map(problem, x, gb), problem.unperturbed_energy,
                                    problem.window, tol, max_iter, damping)
    res = residual_norm(problem.g0inv, problem.k0, problem.k1, E, psi)
    return PTReport(E, psi, iterations=it, residual=res, converged=ok, method_tag="sakurai",
                    history=hist)


def _k1_taylor(problem: PTProblem, E: float, order: int) -> list:
    out = [ops.evaluate(problem.k1, E)]
    for j in range(1, order + 1):
        out.append(ops.derivative(problem.k1, E, j) / math.factorial(j))
    return out


def pt_expand(problem: PTProblem, order: int = 2) -> PTReport:
    """Coefficients of the energy and wavefunction in powers of ``lambda`` for ``K1 -> lambda K1``.

    ``K1(E(lambda))`` and ``G_u^b(E(lambda))`` are Taylor expanded about the
    unperturbed energy and composed with the energy series found so far; the
    order-``k`` coefficients then follow from the order-``k-1`` ones.  The
    report's ``energy``/``wavefunction`` are the partial sums at ``lambda = 1``.
    """
    if int(order) != order or not 0 <= order <= MAX_SERIES_ORDER:
        raise ValueError(f"series order must be an integer in [0, {MAX_SERIES_ORDER}]")
    phi = _single_phi(problem).astype(complex)
    e = problem.unperturbed_energy
    top = max(order - 1, 0)
    k_tay = _k1_taylor(problem, e, top)
    g_tay = problem.level.background_taylor(e, top)

    energies = [e]
    states = [phi]
    for k in range(1, order + 1):
        shift = SeriesJet([0.0] + energies[1:k], k - 1)
        kj = compose(k_tay[:k], shift)
        gj = compose(g_tay[:k], shift)
        psi = SeriesJet(states[:k], k - 1)
        k_psi = kj @ psi
        energies.append(complex(phi.conj() @ k_psi[k - 1]).real)
        states.append((gj @ k_psi)[k - 1])

    E = float(sum(energies))
    psi = sum(states[1:], states[0])
    res = residual_norm(problem.g0inv, problem.k0, problem.k1, E, psi)
    return PTReport(E, psi, series_energies=energies, series_wavefunctions=states, iterations=order,
                    residual=res, converged=True, method_tag="series")


def effective_kernel(k1: EnergyOperator, g0inv: EnergyOperator, g1inv: EnergyOperator) -> EnergyOperator:
    """``K1 + G0^-1 - G1^-1``: the perturbation that turns the ``G0`` system into the ``G1`` one."""
    if not k1.dim == g0inv.dim == g1inv.dim:
        raise OperatorError("effective_kernel needs operators of one dimension")

    def rule(E):
        return ops.evaluate(k1, E) + (ops.evaluate(g0inv, E) - ops.evaluate(g1inv, E))

    def drule(E, k):
        return ops.derivative(k1, E, k) + (ops.derivative(g0inv, E, k) - ops.derivative(g1inv, E, k))

    slopes = (k1.linear_slope, g0inv.linear_slope, g1inv.linear_slope)
    slope = None if None in slopes else slopes[0] + slopes[1] - slopes[2]
    singular = sorted(set(k1.singular_points) | set(g0inv.singular_points) | set(g1inv.singular_points))
    return EnergyOperator(k1.dim, "sum", {"terms": ((1.0, k1), (1.0, g0inv), (-1.0, g1inv))},
                          rule=rule, drule=drule, singular_points=singular, linear_slope=slope)


def degenerate_matrix(problem: PTProblem, E: float) -> np.ndarray:
    """``M_ij(E) = <phi_i| K1(E) [1 - G_u^b(E) K1(E)]^-1 |phi_j>`` over the degenerate group."""
    phi = problem.level.vectors.astype(complex)
    k = ops.evaluate(problem.k1, E)
    x = _solve(_factor(problem, E, k), phi)
    m = phi.conj().T @ k @ x
    return 0.5 * (m + m.conj().T)


def degenerate_solve(problem: PTProblem, n_grid: int = 200) -> list:
    """Perturbed energies and states emerging from a degenerate level.

    The energies are the roots of ``det[(E - e) I - M(E)]``, located by a scan
    of a local window of width ``4 ||M(e)||`` around ``e`` and refined to
    machine precision.  Each state is ``[1 - G_u^b K1]^-1 sum_j c_j |phi_j>``
    with ``c`` the null vector of ``(E - e) I - M(E)``.
    """
    lvl = problem.level
    d, e = lvl.size, lvl.energy
    phi = lvl.vectors.astype(complex)
    m0 = degenerate_matrix(problem, e)
    half = 2.0 * np.linalg.norm(m0, 2)
    if half == 0.0:
        return [PTReport(e, phi[:, j].copy(), iterations=0, residual=residual_norm(
            problem.g0inv, problem.k0, problem.k1, e, phi[:, j]), converged=True,
            method_tag="degenerate") for j in range(d)]

    lo_w, hi_w = problem.window
    others = lvl._other[0] if lvl.mode == "spectral" else ()
    gap = min((abs(x - e) for x in others), default=np.inf)
    half = min(half, 0.5 * gap)
    fn = lambda E: (E - e) * np.eye(d) - degenerate_matrix(problem, E)  # noqa: E731
    for _ in range(3):
        scan = scan_roots(fn, max(lo_w, e - half), min(hi_w, e + half), n_grid)
        roots = [(g.energy, g.null_space) for g in scan.groups]
        if sum(ns.shape[1] for _, ns in roots) == d:
            break
        half = min(2.0 * half, 0.5 * gap)
        n_grid *= 2
    found = sum(ns.shape[1] for _, ns in roots)
    if found != d:
        raise ConvergenceError(f"resolved {found} of {d} perturbed roots from the degenerate level")

    reports = []
    for E, ns in roots:
        for j in range(ns.shape[1]):
            c = phase_fix(ns[:, j])
            psi = _solve(_factor(problem, E), phi @ c)
            res = residual_norm(problem.g0inv, problem.k0, problem.k1, E, psi)
            reports.append(PTReport(E, psi, iterations=scan.n_evaluations, residual=res,
                                    converged=True, method_tag="degenerate",
                                    series_wavefunctions=[phi @ c]))
    return reports


def flag_ambiguity(report: PTReport, unperturbed_energy: float, oracle_energies: Sequence[float]) -> PTReport:
    """Mark ``report.ambiguous`` when a second oracle root lies within ``2|E - e|`` of ``e``."""
    radius = 2.0 * abs(report.energy - unperturbed_energy)
    if len(oracle_energies) == 0:
        return report
    nearest = min(oracle_energies, key=lambda x: abs(x - report.energy))
    close = [x for x in oracle_energies if abs(x - unperturbed_energy) <= radius and x != nearest]
    report.ambiguous = bool(close)
    return report
