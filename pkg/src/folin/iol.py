"""Input-output linearizing control for square, wide and tall plants.

The control law is ``u = alpha(x) + gamma(x)^+ v``. With a tall ``gamma``
(more outputs than inputs) the commanded derivatives are only reachable
through the projection ``Lambda(x) = gamma gamma^+``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from .affine import AffineSystem, RelativeDegreeProfile, iterated_lie_f, lie_g_lie_f
from .errors import SingularityWarning

DEFAULT_PINV_TOL = 1e-12


@dataclass(frozen=True)
class CompanionForm:
    A: np.ndarray
    B: np.ndarray
    block_sizes: tuple[int, ...]


def companion_matrices(profile: RelativeDegreeProfile | Sequence[int]) -> CompanionForm:
    """Block-diagonal integrator chains, one block per output."""
    rho = profile.rho if isinstance(profile, RelativeDegreeProfile) else tuple(int(r) for r in profile)
    if any(r < 1 for r in rho):
        raise ValueError(f"unsupported relative-degree profile {rho}: every entry must be >= 1")
    total = sum(rho)
    A = np.zeros((total, total))
    B = np.zeros((total, len(rho)))
    start = 0
    for i, r in enumerate(rho):
        for k in range(r - 1):
            A[start + k, start + k + 1] = 1.0
        B[start + r - 1, i] = 1.0
        start += r
    return CompanionForm(A, B, rho)


def pseudo_inverse(mat: np.ndarray, rel_tol: float = DEFAULT_PINV_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse by SVD.

    Singular values at or below ``rel_tol * sigma_max`` are dropped.
    """
    return _pinv_rank(mat, rel_tol)[0]


def numerical_rank(mat: np.ndarray, rel_tol: float = DEFAULT_PINV_TOL) -> int:
    return _pinv_rank(mat, rel_tol)[1]


def _pinv_rank(mat, rel_tol):
    a = np.atleast_2d(np.asarray(mat, dtype=float))
    if not np.isfinite(a.sum()):
        raise ValueError("pseudo_inverse needs finite entries")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(a.T.shape), 0
    keep = s > rel_tol * s[0]
    s_inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return (vt.T * s_inv) @ u.T, int(np.count_nonzero(keep))


def build_psi(sys: AffineSystem, profile: RelativeDegreeProfile) -> Callable[[np.ndarray], np.ndarray]:
    """Evaluator ``x -> xi`` stacking ``[h_i, L_f h_i, ..., L_f^(rho_i-1) h_i]`` per output."""
    if len(profile.rho) != sys.n_output:
        raise ValueError(f"profile has {len(profile.rho)} entries, system has {sys.n_output} outputs")
    if profile.total > sys.n_state:
        raise ValueError("total relative degree exceeds the state dimension")
    fields = [sys.output_field(i) for i in range(sys.n_output)]

    def psi(x):
        x = np.asarray(x, dtype=float)
        return np.array([iterated_lie_f(sys, fld, k, x) for fld, r in zip(fields, profile.rho) for k in range(r)])

    return psi


def _warn_if_singular(sys: AffineSystem, x: np.ndarray) -> Optional[str]:
    if sys.singularity is None:
        return None
    msg = sys.singularity(x)
    if msg:
        warnings.warn(msg, SingularityWarning, stacklevel=3)
    return msg


def gamma_matrix(sys: AffineSystem, profile: RelativeDegreeProfile, at: np.ndarray) -> np.ndarray:
    """``gamma(x)``: row i is ``L_g L_f^(rho_i-1) h_i``."""
    x = np.asarray(at, dtype=float)
    _warn_if_singular(sys, x)
    return np.vstack([lie_g_lie_f(sys, sys.output_field(i), r - 1, x) for i, r in enumerate(profile.rho)])


def lf_rho_vector(sys: AffineSystem, profile: RelativeDegreeProfile, at: np.ndarray) -> np.ndarray:
    x = np.asarray(at, dtype=float)
    return np.array([iterated_lie_f(sys, sys.output_field(i), r, x) for i, r in enumerate(profile.rho)])


def alpha_term(
    sys: AffineSystem, profile: RelativeDegreeProfile, at: np.ndarray, pinv_tol: float = DEFAULT_PINV_TOL
) -> np.ndarray:
    """``alpha(x) = gamma(x)^+ (-[L_f^rho_i h_i])``."""
    x = np.asarray(at, dtype=float)
    return pseudo_inverse(gamma_matrix(sys, profile, x), pinv_tol) @ (-lf_rho_vector(sys, profile, x))


def iol_control(
    sys: AffineSystem,
    profile: RelativeDegreeProfile,
    at: np.ndarray,
    v: np.ndarray,
    pinv_tol: float = DEFAULT_PINV_TOL,
) -> np.ndarray:
    x = np.asarray(at, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.shape != (sys.n_output,):
        raise ValueError(f"command has shape {v.shape}, expected ({sys.n_output},)")
    gp = pseudo_inverse(gamma_matrix(sys, profile, x), pinv_tol)
    return gp @ (v - lf_rho_vector(sys, profile, x))


@dataclass(frozen=True)
class LambdaSnapshot:
    matrix: np.ndarray
    diagonal: np.ndarray
    rank: int
    time: float = 0.0

    @property
    def offdiag_mass(self) -> float:
        """Frobenius norm of the off-diagonal part."""
        off = self.matrix - np.diag(self.diagonal)
        return float(np.linalg.norm(off))


def projection_snapshot(gamma: np.ndarray, pinv_tol: float = DEFAULT_PINV_TOL, time: float = 0.0) -> LambdaSnapshot:
    gp, rank = _pinv_rank(gamma, pinv_tol)
    lam = gamma @ gp
    return LambdaSnapshot(lam, np.diag(lam).copy(), rank, time)


def lambda_snapshot(
    sys: AffineSystem,
    profile: RelativeDegreeProfile,
    at: np.ndarray,
    pinv_tol: float = DEFAULT_PINV_TOL,
    time: float = 0.0,
) -> LambdaSnapshot:
    return projection_snapshot(gamma_matrix(sys, profile, at), pinv_tol, time)


@dataclass(frozen=True)
class ChainGains:
    """Per-output linear feedback on that output's chain states.

    ``per_output[i]`` has one gain per chain state of output ``i``, so the
    command is ``v_i = sum_k per_output[i][k] * xi_(i,k)``. Gains must be
    negative for the shipped stabilizing policy.
    """

    per_output: tuple[tuple[float, ...], ...]

    @classmethod
    def from_flat(cls, gains: Sequence[float], profile: RelativeDegreeProfile | Sequence[int]) -> "ChainGains":
        rho = profile.rho if isinstance(profile, RelativeDegreeProfile) else tuple(profile)
        gains = [float(k) for k in gains]
        if len(gains) != sum(rho):
            raise ValueError(f"{len(gains)} gains given for a profile of total degree {sum(rho)}")
        out, start = [], 0
        for r in rho:
            out.append(tuple(gains[start : start + r]))
            start += r
        return cls(tuple(out))

    @property
    def flat(self) -> tuple[float, ...]:
        return tuple(k for chain in self.per_output for k in chain)

    @cached_property
    def matrix(self) -> np.ndarray:
        """Block gain matrix K with ``v = K xi``."""
        K = np.zeros((len(self.per_output), len(self.flat)))
        start = 0
        for i, chain in enumerate(self.per_output):
            K[i, start : start + len(chain)] = chain
            start += len(chain)
        return K


def outer_command(state_error: np.ndarray, gains: ChainGains) -> np.ndarray:
    """``v_i = k_i . xi_i`` for each output chain."""
    xi = np.asarray(state_error, dtype=float)
    K = gains.matrix
    if K.shape[1] != xi.size:
        raise ValueError(f"{K.shape[1]} gains for a chain state of length {xi.size}")
    return K @ xi


@dataclass(frozen=True)
class LinearizingController:
    """Immutable IOL controller.

    ``psi``, ``gamma`` and ``lf_rho`` default to the generic Lie-derivative
    evaluators for ``sys``; a model may substitute closed-form versions.
    """

    sys: AffineSystem
    profile: RelativeDegreeProfile
    gains: Optional[ChainGains] = None
    pinv_tol: float = DEFAULT_PINV_TOL
    psi: Optional[Callable[[np.ndarray], np.ndarray]] = None
    gamma: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lf_rho: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if len(self.profile.rho) != self.sys.n_output:
            raise ValueError("profile does not match the number of outputs")
        companion_matrices(self.profile)
        if self.psi is None:
            object.__setattr__(self, "psi", build_psi(self.sys, self.profile))
        if self.gamma is None:
            object.__setattr__(self, "gamma", lambda x: gamma_matrix(self.sys, self.profile, x))
        if self.lf_rho is None:
            object.__setattr__(self, "lf_rho", lambda x: lf_rho_vector(self.sys, self.profile, x))
        if self.gains is not None and len(self.gains.flat) != self.profile.total:
            raise ValueError("gain specification does not match the relative-degree profile")

    @property
    def companion(self) -> CompanionForm:
        return companion_matrices(self.profile)

    def command(self, x: np.ndarray) -> np.ndarray:
        if self.gains is None:
            raise ValueError("controller has no outer-loop gains")
        return outer_command(self.psi(x), self.gains)

    def alpha(self, x: np.ndarray) -> np.ndarray:
        return pseudo_inverse(self.gamma(x), self.pinv_tol) @ (-self.lf_rho(x))

    def control(self, x: np.ndarray, v: Optional[np.ndarray] = None) -> np.ndarray:
        """``u = alpha(x) + gamma(x)^+ v``; ``v`` defaults to the outer-loop command."""
        if v is None:
            v = self.command(x)
        gp = pseudo_inverse(self.gamma(x), self.pinv_tol)
        return gp @ (np.asarray(v, dtype=float) - self.lf_rho(x))

    def control_and_projection(self, x: np.ndarray, v: np.ndarray, time: float = 0.0):
        """One SVD serving both the input and the Lambda(x) snapshot."""
        gam = self.gamma(x)
        gp, rank = _pinv_rank(gam, self.pinv_tol)
        u = gp @ (np.asarray(v, dtype=float) - self.lf_rho(x))
        lam = gam @ gp
        return u, LambdaSnapshot(lam, np.diag(lam).copy(), rank, time)

    def projection(self, x: np.ndarray, time: float = 0.0) -> LambdaSnapshot:
        return projection_snapshot(self.gamma(x), self.pinv_tol, time)

    def row_scaled_condition(self, x: np.ndarray) -> float:
        """Condition number of gamma after normalizing each row; diagnostic only."""
        gam = np.asarray(self.gamma(x), dtype=float)
        norms = np.linalg.norm(gam, axis=1)
        norms[norms == 0.0] = 1.0
        return float(np.linalg.cond(gam / norms[:, None]))
