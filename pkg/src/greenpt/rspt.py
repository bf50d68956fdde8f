"""Textbook Rayleigh-Schroedinger perturbation theory, used as an independent comparator.

Coefficients are the closed-form sums over the unperturbed eigenbasis, with
intermediate normalization ``<phi_n|psi_n^(k)> = 0`` for ``k >= 1``.  Orders 1
and 2 are the familiar textbook expressions; the third-order energy and state
are the standard extensions of the same recursion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError


@dataclass(frozen=True)
class Spectrum:
    """Complete orthonormal eigen-system ``{e_m, phi_m}`` of the unperturbed Hamiltonian."""

    energies: np.ndarray
    vectors: np.ndarray  # columns are phi_m
    complete: bool = True

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=complex)
        gram = v.conj().T @ v
        if np.max(np.abs(gram - np.eye(v.shape[1]))) > 1e-12:
            raise ValueError("spectrum vectors are not orthonormal")
        if self.complete and (v.shape[0] != v.shape[1] or
                              np.max(np.abs(v @ v.conj().T - np.eye(v.shape[0]))) > 1e-10):
            raise ValueError("spectrum marked complete but does not resolve the identity")

    @classmethod
    def from_hamiltonian(cls, h: np.ndarray) -> "Spectrum":
        w, v = np.linalg.eigh(0.5 * (h + np.conj(h).T))
        return cls(w, v, True)


def rspt_series(spectrum: Spectrum, k1: np.ndarray, n: int, order: int = 2):
    """Energy and wavefunction coefficients of level ``n`` up to ``order`` (at most 3).

    Returns
    -------
    energies : list of float
        ``[e_n, E^(1), ..., E^(order)]``.
    states : list of ndarray
        ``[phi_n, psi^(1), ..., psi^(order)]`` in the original basis.
    """
    if not 0 <= order <= 3:
        raise ValueError("rspt_series supports orders 0..3")
    if not spectrum.complete:
        raise PreconditionError("rspt_series needs a complete spectrum")
    e = np.asarray(spectrum.energies, dtype=float)
    phi = np.asarray(spectrum.vectors, dtype=complex)
    others = np.array([m for m in range(len(e)) if m != n])
    denom = e[n] - e[others]
    if np.any(np.abs(denom) <= 1e-8 * max(1.0, abs(e[n]))):
        raise PreconditionError(f"level {n} is degenerate")

    v = phi.conj().T @ np.asarray(k1, dtype=complex) @ phi
    vnn = v[n, n].real
    vmn = v[others, n]            # <m|V|n>
    vnm = v[n, others]            # <n|V|m>
    voo = v[np.ix_(others, others)]  # <m|V|k>, m,k != n

    energies = [float(e[n])]
    coeffs = []  # coefficients on phi_m, m != n
    if order >= 1:
        energies.append(float(vnn))
        coeffs.append(vmn / denom)
    if order >= 2:
        energies.append(float(np.sum(np.abs(vmn) ** 2 / denom).real))
        c2 = (voo @ (vmn / denom)) / denom - vmn * vnn / denom**2
        coeffs.append(c2)
    if order >= 3:
        e2 = energies[2]
        e3 = vnm @ ((voo @ (vmn / denom)) / denom) - vnn * np.sum(np.abs(vmn) ** 2 / denom**2)
        energies.append(float(e3.real))
        x = vmn / denom                      # V_ln / D_l
        t1 = (voo @ ((voo @ x) / denom)) / denom
        t2 = -vnn * (voo @ x) / denom**2
        t3 = -vnn * (voo @ (vmn / denom**2)) / denom
        t4 = vnn**2 * vmn / denom**3
        t5 = -e2 * vmn / denom**2
        coeffs.append(t1 + t2 + t3 + t4 + t5)

    states = [phi[:, n].copy()] + [phi[:, others] @ c for c in coeffs]
    return energies, states
