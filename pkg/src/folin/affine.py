"""Input-affine systems and Lie-derivative machinery.

A system has the form ``xdot = f(x) + g(x) u`` with output ``y = h(x)``.
Lie derivatives of scalar fields are evaluated numerically: analytic
gradients are used where supplied, central finite differences otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CapabilityError, DomainError

EPS_FD = np.cbrt(np.finfo(float).eps)

# Finite differencing may be nested at most this deep (L_f^2 needs one level
# inside another); deeper orders require analytic inner gradients.
MAX_LIE_ORDER = 2

Vector = np.ndarray
Evaluator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ScalarField:
    """Scalar function of the state with optional analytic derivatives.

    ``hess`` may be given as a constant matrix (e.g. zeros for a linear
    field) or as a callable.
    """

    func: Callable[[np.ndarray], float]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess: Optional[Callable[[np.ndarray], np.ndarray] | np.ndarray] = None
    name: str = "field"

    def __call__(self, x: np.ndarray) -> float:
        return float(self.func(x))

    def hessian(self, x: np.ndarray) -> Optional[np.ndarray]:
        if self.hess is None:
            return None
        if callable(self.hess):
            return np.asarray(self.hess(x), dtype=float)
        return np.asarray(self.hess, dtype=float)

    @classmethod
    def linear(cls, c: Sequence[float], name: str = "field") -> "ScalarField":
        """The field ``x -> c @ x``."""
        c = np.asarray(c, dtype=float)
        zeros = np.zeros((c.size, c.size))
        return cls(lambda x: float(c @ x), lambda x: c, zeros, name)


def as_field(obj) -> ScalarField:
    if isinstance(obj, ScalarField):
        return obj
    if callable(obj):
        return ScalarField(obj)
    raise TypeError(f"expected a ScalarField or callable, got {type(obj).__name__}")


@dataclass(frozen=True)
class AffineSystem:
    """Smooth input-affine system ``xdot = f(x) + g(x) u, y = h(x)``.

    Parameters
    ----------
    n_state, n_input, n_output
        Dimensions l_x, l_u, l_y.
    f, g, h
        Drift (l_x,), input matrix (l_x, l_u) and output (l_y,) evaluators.
    jac_f, jac_h
        Optional analytic Jacobians of ``f`` and ``h``.
    outputs
        Optional per-output scalar fields carrying analytic gradients and
        Hessians. When absent they are derived from ``h`` and ``jac_h``.
    admissible
        Predicate on states; probing outside it is a caller error.
    singularity
        Returns a short message when the state is close to a known singular
        surface of the system, ``None`` otherwise.
    """

    n_state: int
    n_input: int
    n_output: int
    f: Evaluator
    g: Evaluator
    h: Evaluator
    jac_f: Optional[Evaluator] = None
    jac_h: Optional[Evaluator] = None
    outputs: Optional[tuple[ScalarField, ...]] = None
    admissible: Optional[Callable[[np.ndarray], bool]] = None
    singularity: Optional[Callable[[np.ndarray], Optional[str]]] = None
    name: str = "system"

    def __post_init__(self):
        for label in ("n_state", "n_input", "n_output"):
            if int(getattr(self, label)) < 1:
                raise ValueError(f"{label} must be a positive integer")
        if self.outputs is not None and len(self.outputs) != self.n_output:
            raise ValueError("number of output fields does not match n_output")

    def output_field(self, i: int) -> ScalarField:
        if self.outputs is not None:
            return self.outputs[i]
        grad = None
        if self.jac_h is not None:
            grad = lambda x, i=i: np.asarray(self.jac_h(x), dtype=float)[i]
        return ScalarField(lambda x, i=i: float(np.asarray(self.h(x))[i]), grad, name=f"h{i + 1}")

    def rhs(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.f(x) + self.g(x) @ u

    def is_admissible(self, x: np.ndarray) -> bool:
        return True if self.admissible is None else bool(self.admissible(x))

    def check_shapes(self, x: np.ndarray) -> None:
        """Evaluate f, g, h once and raise if shapes or finiteness are off."""
        x = np.asarray(x, dtype=float)
        expected = {
            "f": (self.f, (self.n_state,)),
            "g": (self.g, (self.n_state, self.n_input)),
            "h": (self.h, (self.n_output,)),
        }
        for label, (fn, shape) in expected.items():
            val = np.asarray(fn(x), dtype=float)
            if val.shape != shape:
                raise ValueError(f"{label}(x) has shape {val.shape}, expected {shape}")
            _require_finite(val, label)


def _require_finite(val: np.ndarray, label: str) -> np.ndarray:
    val = np.asarray(val, dtype=float)
    bad = np.flatnonzero(~np.isfinite(val))
    if bad.size:
        idx = np.unravel_index(bad[0], val.shape) if val.ndim > 1 else int(bad[0])
        raise DomainError(f"non-finite value in {label} at component {idx}")
    return val


def fd_gradient(func: Callable[[np.ndarray], float], x: np.ndarray) -> np.ndarray:
    """Central-difference gradient with step cbrt(eps) * max(1, |x_i|)."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        step = EPS_FD * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        # use the representable step actually taken
        grad[i] = (func(xp) - func(xm)) / (xp[i] - xm[i])
    return grad


def fd_jacobian(func: Evaluator, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(func(x), dtype=float)
    jac = np.empty((f0.size, x.size))
    for i in range(x.size):
        step = EPS_FD * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        jac[:, i] = (np.asarray(func(xp)) - np.asarray(func(xm))).ravel() / (xp[i] - xm[i])
    return jac


def lie_gradient(sys: AffineSystem, scalar_field, order: int, at: np.ndarray) -> np.ndarray:
    """Gradient of ``L_f^order`` applied to the field, evaluated at ``at``.

    Order 0 and 1 are analytic when the field carries its gradient (and, for
    order 1, its Hessian) and the system carries ``jac_f``. Otherwise the
    gradient is taken by central differences of the lower-order value.
    """
    fld = as_field(scalar_field)
    x = np.asarray(at, dtype=float)
    if order == 0 and fld.grad is not None:
        return _require_finite(fld.grad(x), f"grad {fld.name}")
    if order == 1 and fld.grad is not None and sys.jac_f is not None:
        hess = fld.hessian(x)
        if hess is not None:
            jf = np.asarray(sys.jac_f(x), dtype=float)
            grad = jf.T @ np.asarray(fld.grad(x), dtype=float) + hess @ np.asarray(sys.f(x))
            return _require_finite(grad, f"grad L_f {fld.name}")
    if order >= MAX_LIE_ORDER:
        raise CapabilityError(
            f"gradient of L_f^{order} {fld.name} would nest finite differences "
            f"beyond order {MAX_LIE_ORDER}; supply analytic derivatives"
        )
    return _require_finite(
        fd_gradient(lambda y: iterated_lie_f(sys, fld, order, y), x), f"grad L_f^{order} {fld.name}"
    )


def lie_f(sys: AffineSystem, scalar_field, at: np.ndarray) -> float:
    """``L_f zeta(x) = grad zeta(x) . f(x)``."""
    return iterated_lie_f(sys, scalar_field, 1, at)


def lie_g(sys: AffineSystem, scalar_field, at: np.ndarray) -> np.ndarray:
    """``L_g zeta(x)``, one entry per input channel."""
    return lie_g_lie_f(sys, scalar_field, 0, at)


def iterated_lie_f(sys: AffineSystem, scalar_field, order: int, at: np.ndarray) -> float:
    """``L_f^order zeta(x)``; order 0 returns the field value."""
    if order < 0:
        raise ValueError("order must be non-negative")
    if order > MAX_LIE_ORDER:
        raise CapabilityError(f"Lie derivative order {order} exceeds limit {MAX_LIE_ORDER}")
    fld = as_field(scalar_field)
    x = np.asarray(at, dtype=float)
    if order == 0:
        val = fld(x)
        if not np.isfinite(val):
            raise DomainError(f"non-finite value of {fld.name}")
        return val
    fx = _require_finite(sys.f(x), "f")
    return float(lie_gradient(sys, fld, order - 1, x) @ fx)


def lie_g_lie_f(sys: AffineSystem, scalar_field, order: int, at: np.ndarray) -> np.ndarray:
    """``L_g L_f^order zeta(x)`` as a row of length l_u."""
    x = np.asarray(at, dtype=float)
    gx = _require_finite(sys.g(x), "g")
    return lie_gradient(sys, scalar_field, order, x) @ gx


@dataclass(frozen=True)
class RelativeDegreeProfile:
    """Per-output relative degrees and the probe states they were checked at."""

    rho: tuple[int, ...]
    verified_at: tuple[tuple[float, ...], ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "rho", tuple(int(r) for r in self.rho))
        if any(r < 0 for r in self.rho):
            raise ValueError("relative degrees must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.rho)


@dataclass(frozen=True)
class RelativeDegreeCheck:
    output: int
    order: int
    probe: int
    magnitude: float
    expect_zero: bool
    ok: bool


@dataclass(frozen=True)
class VerificationReport:
    profile: RelativeDegreeProfile
    checks: tuple[RelativeDegreeCheck, ...]
    tol: float

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def failures(self) -> list[RelativeDegreeCheck]:
        return [c for c in self.checks if not c.ok]


def _scaled_magnitude(sys: AffineSystem, row: np.ndarray, x: np.ndarray) -> float:
    scale = max(1.0, float(np.linalg.norm(sys.g(x))))
    return float(np.linalg.norm(row)) / scale


def verify_relative_degree(
    sys: AffineSystem,
    claimed: RelativeDegreeProfile | Sequence[int],
    probes: Sequence[np.ndarray],
    tol: float = 1e-9,
) -> VerificationReport:
    """Check ``L_g L_f^j h_i = 0`` for ``j < rho_i - 1`` and ``!= 0`` at ``rho_i - 1``.

    Magnitudes are divided by ``max(1, ||g(x)||)`` before comparison with
    ``tol``. A relative degree of zero is rejected since the output chain
    construction needs at least one derivative.
    """
    if not isinstance(claimed, RelativeDegreeProfile):
        claimed = RelativeDegreeProfile(tuple(claimed))
    probes = [np.asarray(p, dtype=float) for p in probes]
    if not probes:
        raise ValueError("probe list is empty")
    if len(claimed.rho) != sys.n_output:
        raise ValueError(f"profile has {len(claimed.rho)} entries, system has {sys.n_output} outputs")
    if any(r == 0 for r in claimed.rho):
        raise ValueError("relative degree 0 is not supported")
    for k, p in enumerate(probes):
        if not sys.is_admissible(p):
            raise DomainError(f"probe {k} is outside the admissible region")

    checks = []
    for i, r in enumerate(claimed.rho):
        fld = sys.output_field(i)
        for k, x in enumerate(probes):
            for j in range(r):
                mag = _scaled_magnitude(sys, lie_g_lie_f(sys, fld, j, x), x)
                expect_zero = j < r - 1
                ok = mag < tol if expect_zero else mag >= tol
                checks.append(RelativeDegreeCheck(i, j, k, mag, expect_zero, ok))
    profile = RelativeDegreeProfile(claimed.rho, tuple(tuple(p) for p in probes))
    return VerificationReport(profile, tuple(checks), tol)


def find_relative_degree(
    sys: AffineSystem, probes: Sequence[np.ndarray], tol: float = 1e-9, max_order: int = MAX_LIE_ORDER
) -> RelativeDegreeProfile:
    """Smallest ``rho_i`` per output with ``L_g L_f^(rho_i-1) h_i`` nonvanishing at every probe."""
    probes = [np.asarray(p, dtype=float) for p in probes]
    if not probes:
        raise ValueError("probe list is empty")
    rho = []
    for i in range(sys.n_output):
        fld = sys.output_field(i)
        for j in range(max_order):
            mags = [_scaled_magnitude(sys, lie_g_lie_f(sys, fld, j, x), x) for x in probes]
            if all(m >= tol for m in mags):
                rho.append(j + 1)
                break
            if any(m >= tol for m in mags):
                raise DomainError(f"output {i + 1}: relative degree is not constant over the probes")
        else:
            raise CapabilityError(f"output {i + 1}: relative degree exceeds {max_order}")
    return RelativeDegreeProfile(tuple(rho), tuple(tuple(p) for p in probes))


def check_jacobians(sys: AffineSystem, states: Sequence[np.ndarray], rtol: float = 1e-5) -> float:
    """Worst ``|analytic - FD| / max(1, |analytic|)`` over the supplied states."""
    worst = 0.0
    for x in states:
        x = np.asarray(x, dtype=float)
        for analytic, fn in ((sys.jac_f, sys.f), (sys.jac_h, sys.h)):
            if analytic is None:
                continue
            a = np.asarray(analytic(x), dtype=float)
            n = fd_jacobian(fn, x)
            worst = max(worst, float(np.max(np.abs(a - n) / np.maximum(1.0, np.abs(a)))))
    if worst > rtol:
        raise AssertionError(f"analytic Jacobian disagrees with finite differences: {worst:.3e}")
    return worst
