"""Energy-dependent operators: square matrices as functions of a real energy.

Every kernel and inverse propagator in the package (K0, K1, G0^-1, G1^-1) is an
:class:`EnergyOperator`.  Operators are immutable; ``evaluate`` and ``derivative``
are pure and return fresh complex arrays.

Supported kinds
---------------
constant
    ``K(E) = M`` for a fixed Hermitian matrix ``M``.
qm_free_inverse
    ``G0^-1(E) = E*I - H0`` (``H0`` given by its diagonal or as a Hermitian matrix).
separable
    ``K(E) = g(E) u u^dagger`` with a real scalar profile ``g``.
callable
    An arbitrary rule ``E -> matrix`` with an optional analytic derivative rule.
sum
    A linear combination ``sum_i c_i O_i(E)`` of other operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DerivativeOrderError, OperatorError, SingularEnergyError

MAX_DERIVATIVE_ORDER = 6
HERMITIAN_RTOL = 1e-12

KINDS = ("constant", "qm_free_inverse", "separable", "callable", "sum")


def _fd_step(E: float, order: int) -> float:
    # optimal central-difference scaling eps**(1/(order+2)); cbrt(eps) at order 1
    return np.finfo(float).eps ** (1.0 / (order + 2)) * max(1.0, abs(E))


def central_difference(fn: Callable[[float], np.ndarray], E: float, order: int) -> np.ndarray:
    """Central finite-difference estimate of ``d^order fn / dE^order`` at ``E``.

    Uses the ``order``-fold central difference stencil (equivalent to repeating the
    first-order stencil), with a step widened per order.
    """
    h = _fd_step(E, order)
    total = None
    for j in range(order + 1):
        w = (-1) ** j * math.comb(order, j)
        term = w * np.asarray(fn(E + (order / 2.0 - j) * h))
        total = term if total is None else total + term
    return total / h**order


def is_hermitian(m: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    scale = max(np.linalg.norm(m), 1.0)
    return bool(np.linalg.norm(m - m.conj().T) <= rtol * scale)


# ---------------------------------------------------------------------------
# scalar profiles for separable kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Profile:
    """Real scalar energy profile ``g(E)`` with analytic derivatives.

    Named profiles are serializable; ``name='custom'`` wraps user callables.
    """

    name: str
    params: tuple = ()
    fn: Optional[Callable[[float], float]] = field(default=None, compare=False)
    dfn: Optional[Callable[[float, int], float]] = field(default=None, compare=False)

    @property
    def kw(self) -> dict:
        return dict(self.params)

    @property
    def singular_points(self) -> tuple:
        if self.name == "inverse":
            return (-self.kw.get("shift", 0.0),)
        return ()

    def __call__(self, E: float) -> float:
        p = self.kw
        scale = p.get("scale", 1.0)
        if self.name == "inverse":
            return scale / (E + p.get("shift", 0.0))
        if self.name == "square":
            return scale * E * E
        if self.name == "constant":
            return scale
        if self.name == "affine":
            return p.get("a", 0.0) + p.get("b", 0.0) * E
        return float(self.fn(E))

    def derivative(self, E: float, order: int) -> Optional[float]:
        p = self.kw
        scale = p.get("scale", 1.0)
        if self.name == "inverse":
            x = E + p.get("shift", 0.0)
            return scale * (-1) ** order * math.factorial(order) / x ** (order + 1)
        if self.name == "square":
            return [2.0 * scale * E, 2.0 * scale][order - 1] if order <= 2 else 0.0
        if self.name == "constant":
            return 0.0
        if self.name == "affine":
            return p.get("b", 0.0) if order == 1 else 0.0
        if self.dfn is None:
            return None
        return float(self.dfn(E, order))

    def to_dict(self) -> dict:
        if self.name == "custom":
            raise OperatorError("custom profiles cannot be serialized")
        return {"name": self.name, **self.kw}


PROFILE_PARAMS = {
    "inverse": ("scale", "shift"),
    "square": ("scale",),
    "constant": ("scale",),
    "affine": ("a", "b"),
}


def make_profile(name: str, **params) -> Profile:
    """Build a named profile: ``inverse`` (scale/(E+shift)), ``square`` (scale*E^2),
    ``constant`` (scale) or ``affine`` (a + b*E)."""
    if name not in PROFILE_PARAMS:
        raise OperatorError(f"unknown profile {name!r}; expected one of {sorted(PROFILE_PARAMS)}")
    unknown = set(params) - set(PROFILE_PARAMS[name])
    if unknown:
        raise OperatorError(f"profile {name!r} got unknown parameters {sorted(unknown)}")
    clean = tuple(sorted((k, float(v)) for k, v in params.items()))
    return Profile(name, clean)


def custom_profile(fn, dfn=None) -> Profile:
    return Profile("custom", (), fn, dfn)


# ---------------------------------------------------------------------------
# EnergyOperator
# ---------------------------------------------------------------------------


class EnergyOperator:
    """Square complex-matrix-valued function of a real energy.

    Build instances with :func:`make_operator` (or the helpers :func:`constant`,
    :func:`qm_free_inverse`, :func:`separable`, :func:`from_callable`,
    :func:`combine`) rather than calling the constructor directly.

    Attributes
    ----------
    dim : int
        Matrix side length.
    kind : str
        One of :data:`KINDS`.
    singular_points : tuple of float
        Energies where evaluation is refused.
    linear_slope : float or None
        ``s`` if the operator is known to be ``s*E*I + const``; ``None`` otherwise.
    """

    __slots__ = ("dim", "kind", "payload", "singular_points", "linear_slope", "_rule", "_drule")

    def __init__(self, dim, kind, payload, rule, drule=None, singular_points=(), linear_slope=None):
        object.__setattr__(self, "dim", int(dim))
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "payload", payload)
        object.__setattr__(self, "singular_points", tuple(float(s) for s in singular_points))
        object.__setattr__(self, "linear_slope", linear_slope)
        object.__setattr__(self, "_rule", rule)
        object.__setattr__(self, "_drule", drule)

    def __setattr__(self, name, value):
        raise AttributeError("EnergyOperator is immutable")

    def __repr__(self):
        return f"EnergyOperator(kind={self.kind!r}, dim={self.dim})"

    @property
    def energy_independent(self) -> bool:
        return self.linear_slope == 0.0

    @property
    def is_qm_free_inverse(self) -> bool:
        """True when the operator is ``E*I - H`` for a constant Hermitian ``H``."""
        return self.linear_slope == 1.0

    @property
    def has_analytic_derivative(self) -> bool:
        return self._drule is not None

    def evaluate(self, E: float) -> np.ndarray:
        return evaluate(self, E)

    def derivative(self, E: float, order: int = 1, method: str = "auto") -> np.ndarray:
        return derivative(self, E, order, method)

    def __call__(self, E: float) -> np.ndarray:
        return evaluate(self, E)


def _check_energy(op: EnergyOperator, E: float) -> float:
    E = float(E)
    if not math.isfinite(E):
        raise SingularEnergyError(f"non-finite energy {E}")
    for s in op.singular_points:
        if abs(E - s) <= 1e-14 * max(1.0, abs(s)):
            raise SingularEnergyError(f"{op!r} evaluated at its singular point E={s}")
    return E


def evaluate(op: EnergyOperator, E: float) -> np.ndarray:
    """Return the ``dim x dim`` complex matrix ``op(E)``."""
    E = _check_energy(op, E)
    m = np.array(op._rule(E), dtype=complex)
    if not np.all(np.isfinite(m)):
        raise SingularEnergyError(f"{op!r} produced non-finite entries at E={E}")
    return m


def derivative(op: EnergyOperator, E: float, order: int = 1, method: str = "auto") -> np.ndarray:
    """``d^order op / dE^order`` at ``E``.

    ``method='auto'`` uses the analytic rule when the operator declares one and
    central finite differences otherwise; ``'analytic'`` and ``'fd'`` force a route.
    """
    if int(order) != order or order < 1:
        raise DerivativeOrderError(f"derivative order must be a positive integer, got {order}")
    if order > MAX_DERIVATIVE_ORDER:
        raise DerivativeOrderError(f"derivative order {order} exceeds cap {MAX_DERIVATIVE_ORDER}")
    E = _check_energy(op, E)
    if method not in ("auto", "analytic", "fd"):
        raise ValueError(f"unknown derivative method {method!r}")
    if method != "fd" and op._drule is not None:
        return np.array(op._drule(E, int(order)), dtype=complex)
    if method == "analytic":
        raise DerivativeOrderError(f"{op!r} has no analytic derivative rule")
    return central_difference(lambda x: evaluate(op, x), E, int(order))


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def _as_matrix(m, name="matrix") -> np.ndarray:
    a = np.array(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise OperatorError(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] == 0:
        raise OperatorError(f"{name} has empty dimension")
    return a


def constant(matrix) -> EnergyOperator:
    m = _as_matrix(matrix)
    if not is_hermitian(m):
        raise OperatorError("constant operator is not Hermitian")
    m.setflags(write=False)
    zero = np.zeros_like(m)
    zero.setflags(write=False)
    return EnergyOperator(
        m.shape[0], "constant", {"matrix": m},
        rule=lambda E: m.copy(), drule=lambda E, k: zero.copy(), linear_slope=0.0,
    )


def qm_free_inverse(h0) -> EnergyOperator:
    """``G0^-1(E) = E*I - H0``; ``h0`` is a diagonal (1-d) or a Hermitian matrix."""
    h = np.asarray(h0)
    if h.ndim == 1:
        if h.size == 0:
            raise OperatorError("qm_free_inverse has empty dimension")
        if np.iscomplexobj(h) and np.any(np.imag(h) != 0):
            raise OperatorError("diagonal H0 must be real")
        h = np.diag(np.real(h).astype(float)).astype(complex)
    else:
        h = _as_matrix(h, "H0")
        if not is_hermitian(h):
            raise OperatorError("H0 is not Hermitian")
    h.setflags(write=False)
    n = h.shape[0]
    eye = np.eye(n, dtype=complex)
    zero = np.zeros((n, n), dtype=complex)

    def drule(E, k):
        return eye.copy() if k == 1 else zero.copy()

    return EnergyOperator(n, "qm_free_inverse", {"h0": h}, rule=lambda E: E * eye - h,
                          drule=drule, linear_slope=1.0)


def separable(u, profile: Profile) -> EnergyOperator:
    """``K(E) = g(E) u u^dagger`` for a real profile ``g``."""
    v = np.array(u, dtype=complex).ravel()
    if v.size == 0:
        raise OperatorError("separable operator has empty dimension")
    outer = np.outer(v, v.conj())
    outer.setflags(write=False)
    v.setflags(write=False)
    drule = None
    if profile.name != "custom" or profile.dfn is not None:
        drule = lambda E, k: profile.derivative(E, k) * outer  # noqa: E731
    slope = 0.0 if profile.name == "constant" else None
    return EnergyOperator(
        v.size, "separable", {"u": v, "profile": profile},
        rule=lambda E: profile(E) * outer, drule=drule,
        singular_points=profile.singular_points, linear_slope=slope,
    )


def from_callable(fn, dim: int, dfn=None, singular_points=(), hermitian_window=(-1.0, 1.0)) -> EnergyOperator:
    """Wrap ``fn(E) -> matrix``; ``dfn(E, order)`` is an optional analytic derivative.

    Hermiticity is probed at three energies of ``hermitian_window`` at construction.
    """
    if dim < 1:
        raise OperatorError("callable operator has empty dimension")
    op = EnergyOperator(dim, "callable", {"fn": fn, "hermitian_window": tuple(hermitian_window)},
                        rule=fn, drule=dfn, singular_points=singular_points)
    lo, hi = hermitian_window
    for E in (lo, 0.5 * (lo + hi) + 1e-3 * (hi - lo), hi):
        try:
            m = evaluate(op, E)
        except SingularEnergyError:
            continue
        if m.shape != (dim, dim):
            raise OperatorError(f"callable returned shape {m.shape}, expected {(dim, dim)}")
        if not is_hermitian(m):
            raise OperatorError(f"callable operator is not Hermitian at E={E}")
    return op


def combine(terms: Sequence[tuple]) -> EnergyOperator:
    """Linear combination ``sum c_i O_i`` of ``(c_i, O_i)`` pairs with real ``c_i``."""
    terms = [(float(c), op) for c, op in terms]
    if not terms:
        raise OperatorError("empty combination")
    dims = {op.dim for _, op in terms}
    if len(dims) != 1:
        raise OperatorError(f"dimension mismatch in combination: {sorted(dims)}")
    slopes = [op.linear_slope for _, op in terms]
    slope = None if any(s is None for s in slopes) else sum(c * s for (c, _), s in zip(terms, slopes))

    def rule(E):
        total = terms[0][0] * evaluate(terms[0][1], E)
        for c, op in terms[1:]:
            total = total + c * evaluate(op, E)
        return total

    def drule(E, k):
        total = terms[0][0] * derivative(terms[0][1], E, k)
        for c, op in terms[1:]:
            total = total + c * derivative(op, E, k)
        return total

    singular = sorted({s for _, op in terms for s in op.singular_points})
    return EnergyOperator(dims.pop(), "sum", {"terms": tuple(terms)}, rule=rule, drule=drule,
                          singular_points=singular, linear_slope=slope)


def scaled(op: EnergyOperator, factor: float) -> EnergyOperator:
    return combine([(factor, op)])


def make_operator(spec: dict) -> EnergyOperator:
    """Build an operator from a descriptor dictionary.

    Descriptors carry a ``kind`` tag plus kind-specific parameters; complex
    entries may be given as ``[re, im]`` pairs or as plain numbers::

        {"kind": "constant", "matrix": [[[0, 0], [1, 0]], [[1, 0], [0, 0]]]}
        {"kind": "qm_free_inverse", "h0": [0.0, 2.0]}
        {"kind": "separable", "u": [[1, 0], [0, 0]],
         "profile": {"name": "inverse", "scale": 1.0, "shift": 1.0}}

    ``callable`` operators may be built in-process by passing ``fn`` (and
    optionally ``dfn``) instead of serialized data.
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise OperatorError("operator descriptor must be a mapping with a 'kind' entry")
    kind = spec["kind"]
    params = {k: v for k, v in spec.items() if k != "kind"}
    allowed = {
        "constant": {"matrix"},
        "qm_free_inverse": {"h0"},
        "separable": {"u", "profile"},
        "callable": {"fn", "dim", "dfn", "singular_points", "hermitian_window"},
    }
    if kind not in allowed:
        raise OperatorError(f"unknown operator kind {kind!r}")
    extra = set(params) - allowed[kind]
    if extra:
        raise OperatorError(f"unexpected parameters for {kind}: {sorted(extra)}")
    try:
        if kind == "constant":
            return constant(decode_complex(params["matrix"], ndim=2))
        if kind == "qm_free_inverse":
            h0 = params["h0"]
            arr = np.asarray(h0, dtype=float) if _is_real_list(h0) else decode_complex(h0, ndim=2)
            return qm_free_inverse(arr)
        if kind == "separable":
            prof = params["profile"]
            if isinstance(prof, Profile):
                profile = prof
            else:
                prof = dict(prof)
                profile = make_profile(prof.pop("name"), **prof)
            return separable(decode_complex(params["u"], ndim=1), profile)
        return from_callable(params["fn"], int(params["dim"]), params.get("dfn"),
                             params.get("singular_points", ()),
                             params.get("hermitian_window", (-1.0, 1.0)))
    except KeyError as exc:
        raise OperatorError(f"{kind} descriptor is missing parameter {exc.args[0]!r}") from None


def operator_to_descriptor(op: EnergyOperator) -> dict:
    """Inverse of :func:`make_operator` for the serializable kinds."""
    if op.kind == "constant":
        return {"kind": "constant", "matrix": encode_complex(op.payload["matrix"])}
    if op.kind == "qm_free_inverse":
        h = op.payload["h0"]
        if np.count_nonzero(h - np.diag(np.diag(h))) == 0 and np.all(np.diag(h).imag == 0):
            return {"kind": "qm_free_inverse", "h0": [float(x) for x in np.diag(h).real]}
        return {"kind": "qm_free_inverse", "h0": encode_complex(h)}
    if op.kind == "separable":
        return {"kind": "separable", "u": encode_complex(op.payload["u"]),
                "profile": op.payload["profile"].to_dict()}
    raise OperatorError(f"operators of kind {op.kind!r} cannot be serialized")


# ---------------------------------------------------------------------------
# [re, im] encoding
# ---------------------------------------------------------------------------


def _is_real_list(x) -> bool:
    return isinstance(x, (list, tuple)) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x)


def _decode_scalar(x) -> complex:
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise OperatorError(f"complex entry must be an [re, im] pair, got {x!r}")
        return complex(float(x[0]), float(x[1]))
    if isinstance(x, bool):
        raise OperatorError("boolean is not a number")
    return complex(x)


def decode_complex(data, ndim: int) -> np.ndarray:
    """Decode nested lists of ``[re, im]`` pairs (or plain numbers) into an array."""
    if isinstance(data, np.ndarray):
        arr = data.astype(complex)
    elif ndim == 1:
        arr = np.array([_decode_scalar(x) for x in data], dtype=complex)
    else:
        rows = [[_decode_scalar(x) for x in row] for row in data]
        if len({len(r) for r in rows}) > 1:
            raise OperatorError("ragged matrix rows")
        arr = np.array(rows, dtype=complex)
    if arr.ndim != ndim:
        raise OperatorError(f"expected a {ndim}-d array, got shape {arr.shape}")
    return arr


def encode_complex(arr) -> list:
    a = np.asarray(arr, dtype=complex)
    if a.ndim == 1:
        return [[float(z.real), float(z.imag)] for z in a]
    return [encode_complex(row) for row in a]
