"""Catalog of reproducible test problems.

Every model is built from a :class:`ModelSpec` (name, parameters, seed) and
returns the operators of one perturbation task together with a scan window.
Randomized models draw from numpy's PCG64 bit generator seeded with the spec's
seed, so equal specs give bitwise-equal operators.

==================== ===========================================================
name                 problem
==================== ===========================================================
two_level            H0 = diag(0, gap), K0 = 0, K1 = coupling * sigma_x
oscillator_quartic   H0 = diag(n + 1/2), K1 = lam * X^4 in an N-level truncation
random_hermitian     random diagonal H0 (optionally plus random K0), random K1
degenerate_triple    H0 = diag(1, 1, 3), K1 couples the degenerate pair
relativistic_modes   G1^-1 relativistic per mode against G0^-1 = E - p^2/2m
separable_energy     K1(E) = g(E) u u^dagger with an energy profile g
energy_dependent_k0  K0(E) = (1 + slope*E) e0 e0^dagger, K1 = coupling * sigma_x
==================== ===========================================================
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import operators as ops
from .errors import ConfigError
from .operators import EnergyOperator
from .pt import effective_kernel


@dataclass(frozen=True)
class ModelSpec:
    name: str
    params: dict = field(default_factory=dict)
    seed: Optional[int] = None


@dataclass
class Model:
    """Operators of one catalog problem.

    ``g1inv`` is set for models whose perturbed system has a different free
    propagator; the perturbation handed to the solvers is then the effective
    kernel ``K1 + G0^-1 - G1^-1``.
    """

    name: str
    g0inv: EnergyOperator
    k0: EnergyOperator
    k1: EnergyOperator
    window: tuple
    g1inv: Optional[EnergyOperator] = None

    def perturbation(self) -> EnergyOperator:
        if self.g1inv is None:
            return self.k1
        return effective_kernel(self.k1, self.g0inv, self.g1inv)

    def exact_system(self):
        """``(G^-1, K0, K1)`` of the perturbed problem as posed (before any rewriting)."""
        return (self.g1inv or self.g0inv), self.k0, self.k1

    def scaled(self, lam: float) -> "Model":
        """Same model with ``K1 -> lam * K1``."""
        return Model(self.name, self.g0inv, self.k0, ops.scaled(self.k1, lam), self.window, self.g1inv)


def _zero(dim):
    return ops.constant(np.zeros((dim, dim)))


def _hermitian_noise(rng, dim):
    r = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    s = 0.5 * (r + r.conj().T)
    return s / np.linalg.norm(s, 2)


def two_level(gap=2.0, coupling=1.0):
    if gap == 0:
        raise ConfigError("two_level needs a nonzero gap")
    g0 = ops.qm_free_inverse([0.0, gap])
    k1 = ops.constant(coupling * np.array([[0.0, 1.0], [1.0, 0.0]]))
    lo, hi = min(0.0, gap), max(0.0, gap)
    pad = 2.0 * abs(coupling) + 1.0
    return g0, _zero(2), k1, (lo - pad, hi + pad)


def ladder_x(n_levels: int) -> np.ndarray:
    """Position operator ``(a + a^dagger)/sqrt(2)`` truncated to ``n_levels`` levels."""
    a = np.diag(np.sqrt(np.arange(1, n_levels, dtype=float)), 1)
    return (a + a.T) / np.sqrt(2.0)


def oscillator_quartic(N=20, lam=0.05):
    N = int(N)
    if N < 2:
        raise ConfigError("oscillator_quartic needs N >= 2")
    x = ladder_x(N)
    x4 = x @ x @ x @ x
    g0 = ops.qm_free_inverse(np.arange(N) + 0.5)
    return g0, _zero(N), ops.constant(lam * x4), (-1.0, N + 0.5)


def random_hermitian(dim=8, strength=0.1, min_gap=0.0, k0_strength=0.0, *, seed=0):
    """Diagonal ``H0`` uniform on ``[0, dim]`` conditioned on level spacing ``>= min_gap``;
    ``K1`` (and optionally ``K0``) Hermitian with spectral norm ``strength``."""
    dim = int(dim)
    if dim < 2:
        raise ConfigError("random_hermitian needs dim >= 2")
    span = dim - (dim - 1) * min_gap
    if span <= 0:
        raise ConfigError("min_gap too large for the interval [0, dim]")
    rng = np.random.Generator(np.random.PCG64(seed))
    # uniform order statistics on the shrunken interval, then re-inflated by the gaps
    h0 = np.sort(rng.uniform(0.0, span, dim)) + min_gap * np.arange(dim)
    k1 = strength * _hermitian_noise(rng, dim)
    k0 = k0_strength * _hermitian_noise(rng, dim)
    pad = 1.0 + strength + k0_strength
    return ops.qm_free_inverse(h0), ops.constant(k0), ops.constant(k1), (-pad, dim + pad)


def degenerate_triple(c=0.1, leak=0.5):
    """``K1 = c (e0 e1^dag + h.c.) + leak * c (e0 e2^dag + h.c.)``; the leak to the
    third level keeps the splitting beyond first order small but nonzero."""
    k1 = np.zeros((3, 3))
    k1[0, 1] = k1[1, 0] = c
    k1[0, 2] = k1[2, 0] = leak * c
    return ops.qm_free_inverse([1.0, 1.0, 3.0]), _zero(3), ops.constant(k1), (0.0, 4.0)


def relativistic_modes(p=(0.5, 1.0, 1.5, 2.0), m=1.0, coupling=0.1, form="linear"):
    """Modes of momentum ``p`` with nonrelativistic ``G0^-1 = E - p^2/2m``.

    ``form='linear'``: ``G1^-1 = E - sqrt(p^2 + m^2) + m``.
    ``form='klein_gordon'``: ``G1^-1 = ((E + m)^2 - p^2 - m^2) / 2m``, nonlinear in E.
    ``K1`` is a nearest-neighbour coupling between modes; ``K0 = 0``.
    """
    p = np.asarray(p, dtype=float)
    n = p.size
    if n < 1 or m <= 0:
        raise ConfigError("relativistic_modes needs at least one mode and m > 0")
    kin = p**2 / (2.0 * m)
    g0 = ops.qm_free_inverse(kin)
    if form == "linear":
        g1 = ops.qm_free_inverse(np.sqrt(p**2 + m**2) - m)
    elif form == "klein_gordon":
        omega2 = p**2 + m**2

        def fn(E):
            return np.diag(((E + m) ** 2 - omega2) / (2.0 * m)).astype(complex)

        def dfn(E, k):
            if k == 1:
                return np.diag(np.full(n, (E + m) / m)).astype(complex)
            if k == 2:
                return np.eye(n, dtype=complex) / m
            return np.zeros((n, n), dtype=complex)

        g1 = ops.from_callable(fn, n, dfn, hermitian_window=(-m, kin.max() + 1.0))
    else:
        raise ConfigError(f"unknown relativistic form {form!r}")
    hop = np.diag(np.ones(n - 1), 1)
    k1 = ops.constant(coupling * (hop + hop.T))
    lo = -1.0 if form == "linear" else -0.5 * m
    return g0, _zero(n), k1, (lo, kin.max() + 1.0), g1


def separable_energy(u=(0.6, 0.8, 0.0, 0.0), profile="inverse", scale=0.2, shift=3.0,
                     h0=(0.5, 1.5, 2.5, 3.5)):
    """``K1(E) = g(E) u u^dagger`` with ``g`` one of ``inverse`` (scale/(E+shift)),
    ``square`` (scale*E^2) or ``constant`` (scale)."""
    u = np.asarray(u, dtype=float)
    h0 = np.asarray(h0, dtype=float)
    if u.size != h0.size:
        raise ConfigError("u and h0 must have equal length")
    if profile == "inverse":
        prof = ops.make_profile("inverse", scale=scale, shift=shift)
    elif profile in ("square", "constant"):
        prof = ops.make_profile(profile, scale=scale)
    else:
        raise ConfigError(f"unknown profile {profile!r}")
    window = (h0.min() - 1.0, h0.max() + 1.0)
    if profile == "inverse" and window[0] <= -shift <= window[1]:
        raise ConfigError("profile pole lies inside the model window")
    return ops.qm_free_inverse(h0), _zero(h0.size), ops.separable(u, prof), window


def energy_dependent_k0(slope=0.25, coupling=0.1):
    """``G0^-1 = E - diag(0, 2)``, ``K0(E) = (1 + slope*E) e0 e0^dagger``: the lower
    unperturbed level sits at ``1/(1 - slope)`` with residue factor ``1 - slope``."""
    if slope >= 1:
        raise ConfigError("slope must be < 1 for a positive residue metric")
    k0 = ops.separable([1.0, 0.0], ops.make_profile("affine", a=1.0, b=slope))
    k1 = ops.constant(coupling * np.array([[0.0, 1.0], [1.0, 0.0]]))
    return ops.qm_free_inverse([0.0, 2.0]), k0, k1, (0.0, 3.0)


CATALOG = {
    "two_level": two_level,
    "oscillator_quartic": oscillator_quartic,
    "random_hermitian": random_hermitian,
    "degenerate_triple": degenerate_triple,
    "relativistic_modes": relativistic_modes,
    "separable_energy": separable_energy,
    "energy_dependent_k0": energy_dependent_k0,
}

SEEDED = {"random_hermitian"}


def build_model(spec: ModelSpec) -> Model:
    """Instantiate a catalog model; unknown names or parameters raise :class:`ConfigError`."""
    if spec.name not in CATALOG:
        raise ConfigError(f"unknown model {spec.name!r}; known: {sorted(CATALOG)}")
    builder = CATALOG[spec.name]
    accepted = set(inspect.signature(builder).parameters) - {"seed"}
    unknown = set(spec.params) - accepted
    if unknown:
        raise ConfigError(f"model {spec.name!r} got unknown parameters {sorted(unknown)}")
    kwargs = dict(spec.params)
    if spec.name in SEEDED:
        kwargs["seed"] = 0 if spec.seed is None else int(spec.seed)
    try:
        parts = builder(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameters for {spec.name!r}: {exc}") from None
    g0, k0, k1, window = parts[:4]
    g1 = parts[4] if len(parts) > 4 else None
    return Model(spec.name, g0, k0, k1, tuple(float(x) for x in window), g1)
