"""Constraint submanifold C, complements, the adapted frame on TQ and iota* omega_L.

Everything here is pointwise linear algebra at a single state: the adapted
frame fields are not projectable in general, so they are realised as
component matrices in the coordinates (q, u) of TQ.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .geometry import (
    RANK_RTOL,
    DistributionD,
    FrameQ,
    TangentState,
    box_samples,
    quasi_velocities,
)
from .lagrangian import (
    REGULARITY_COND_MAX,
    Lagrangian,
    LagrangianDerivatives,
    MechanicalLagrangian,
    RegularityError,
    cartan_forms,
    regular_inverse,
)

__all__ = [
    "ConstrainedSystem",
    "LocalData",
    "AdaptedFrame",
    "PullbackBlocks",
    "OffConstraintError",
    "orthogonal_complement",
    "g_orthogonal_complement",
    "membership",
    "adapted_frame",
    "pullback_omega",
    "characteristic_kernel",
    "omega_ab_rank",
    "scaled_tol",
]

# a coordinate direction is usable for the complement when its residual after
# removing D keeps at least this fraction of its own length
COMPLEMENT_MIN_FRACTION = 1e-3
MEMBERSHIP_TOL = 1e-9


class OffConstraintError(ValueError):
    pass


def scaled_tol(tol: float, *magnitudes) -> float:
    """Zero-test tolerance scaled by the largest relevant entry."""
    big = 0.0
    for m in magnitudes:
        arr = np.asarray(m, dtype=float)
        if arr.size:
            big = max(big, float(np.max(np.abs(arr))))
    return tol * (1.0 + big)


def g_orthogonal_complement(B: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Columns X_a spanning the g-orthogonal complement of span(B), g-orthonormal.

    Coordinate directions are taken in index order, each stripped of its
    component along D and along the directions already chosen; a direction
    is skipped when too little of it survives.  If that scan comes up short
    the remaining directions are picked by largest surviving residual.
    """
    n, m = B.shape
    k = n - m
    if k == 0:
        return np.zeros((n, 0))
    gBB = B.T @ g @ B
    proj = B @ (regular_inverse(gBB, "g restricted to D") @ (B.T @ g))  # g-orthogonal projector onto D
    eye = np.eye(n)
    R = eye - proj
    R = R - proj @ R  # re-orthogonalise for accuracy

    def strip(r, chosen):
        for _ in range(2):
            for c in chosen:
                r = r - (c @ g @ r) * c
        return r

    def g_norm(r):
        return np.sqrt(max(r @ g @ r, 0.0))

    chosen: list[np.ndarray] = []
    for i in range(n):
        r = strip(R[:, i], chosen)
        norm = g_norm(r)
        if norm > COMPLEMENT_MIN_FRACTION * np.sqrt(g[i, i]):
            chosen.append(r / norm)
            if len(chosen) == k:
                return np.column_stack(chosen)
    # fallback: greedy by largest residual
    chosen = []
    remaining = list(range(n))
    while len(chosen) < k:
        cands = [(g_norm(r := strip(R[:, i], chosen)), -i, r) for i in remaining]
        norm, neg_i, r = max(cands, key=lambda c: (c[0], c[1]))
        remaining.remove(-neg_i)
        chosen.append(r / norm)
    return np.column_stack(chosen)


@dataclass(frozen=True, eq=False)
class LocalData:
    """Everything the pointwise computations need at one state.

    ``B`` holds the D basis as columns, ``dB[alpha, i, j] = dX_alpha^i/dq^j``,
    ``C`` the complement X_a, ``F = [B | C]`` with inverse ``Finv`` whose rows
    are the dual coframe on Q; ``v = Finv u`` are the quasi-velocities.
    """

    state: TangentState
    L: LagrangianDerivatives
    B: np.ndarray
    dB: np.ndarray
    C: np.ndarray
    F: np.ndarray
    Finv: np.ndarray
    v: np.ndarray

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def g(self) -> np.ndarray:
        return self.L.g

    @property
    def theta_D(self) -> np.ndarray:
        return self.Finv[: self.m]

    @property
    def theta_N(self) -> np.ndarray:
        """Rows annihilating D and dual to the complement."""
        return self.Finv[self.m:]

    @cached_property
    def transport(self) -> np.ndarray:
        """Matrix T with T @ dq = sum_beta v^beta dX_beta[dq]."""
        return np.einsum("b,bij->ij", self.v[: self.m], self.dB)

    @cached_property
    def constraint_differential(self) -> np.ndarray:
        """(n-m) x 2n rows rho^a: the differential of v^a along C."""
        return np.hstack([-self.theta_N @ self.transport, self.theta_N])


class ConstrainedSystem:
    """A Lagrangian together with a linear constraint distribution."""

    def __init__(self, lagrangian: Lagrangian, distribution: DistributionD,
                 velocity_bound: float = 1.0, check_samples: int = 256, seed: int = 0):
        if lagrangian.chart != distribution.chart:
            raise ValueError("Lagrangian and distribution use different charts")
        self.lagrangian = lagrangian
        self.distribution = distribution
        self.velocity_bound = float(velocity_bound)
        if check_samples:
            for state in self.sample_states(check_samples, seed):
                if isinstance(lagrangian, MechanicalLagrangian):
                    lagrangian.check_metric(state.q)
                lagrangian.check_regular(state)
                d = lagrangian.derivatives(state)
                B = distribution.matrix(state.q)
                if np.linalg.cond(B.T @ d.g @ B) > REGULARITY_COND_MAX:
                    raise RegularityError(f"L is not regular with respect to D at q={state.q.tolist()}")

    @property
    def chart(self):
        return self.distribution.chart

    @property
    def n(self) -> int:
        return self.distribution.n

    @property
    def m(self) -> int:
        return self.distribution.m

    @property
    def domain(self):
        return self.distribution.domain

    @property
    def mechanical(self) -> bool:
        return isinstance(self.lagrangian, MechanicalLagrangian)

    def local(self, state: TangentState, complement: np.ndarray | None = None) -> LocalData:
        """Pointwise data at ``state``; ``complement`` overrides the policy X_a."""
        d = self.lagrangian.derivatives(state)
        B = self.distribution.matrix(state.q)
        dB = self.distribution.jacobians(state.q)
        if complement is None:
            C = g_orthogonal_complement(B, d.g)
        else:
            C = np.asarray(complement, dtype=float).reshape(self.n, self.n - self.m)
            cross = B.T @ d.g @ C
            if np.max(np.abs(cross), initial=0.0) > scaled_tol(1e-10, d.g, B, C):
                raise ValueError("supplied complement is not g-orthogonal to D")
        F = np.hstack([B, C])
        Finv = np.linalg.inv(F)
        return LocalData(state, d, B, dB, C, F, Finv, Finv @ state.u)

    def state_on_c(self, q, v_alpha) -> TangentState:
        q = np.asarray(q, dtype=float)
        return TangentState(q, self.distribution.matrix(q) @ np.asarray(v_alpha, dtype=float))

    def sample_states(self, count: int = 256, seed: int = 42, on_constraint: bool = True) -> list[TangentState]:
        """Low-discrepancy states; on C the velocity is sum v^alpha X_alpha with |v^alpha| <= bound."""
        lo, hi = self.domain
        k = self.m if on_constraint else self.n
        b = self.velocity_bound
        pts = box_samples(np.concatenate([lo, -b * np.ones(k)]), np.concatenate([hi, b * np.ones(k)]), count, seed)
        n = self.n
        if on_constraint:
            return [self.state_on_c(p[:n], p[n:]) for p in pts]
        return [TangentState(p[:n], p[n:]) for p in pts]

    def require_on_c(self, state: TangentState, tol: float = MEMBERSHIP_TOL) -> LocalData:
        loc = self.local(state)
        va = loc.v[self.m:]
        if va.size and np.max(np.abs(va)) > tol * (1.0 + np.max(np.abs(state.u))):
            raise OffConstraintError(f"state is not on C (max |v^a| = {np.max(np.abs(va)):.3e})")
        return loc


def orthogonal_complement(system: ConstrainedSystem, state: TangentState) -> np.ndarray:
    """The policy complement X_a at ``state`` as columns of an n x (n-m) array."""
    B = system.distribution.matrix(state.q)
    return g_orthogonal_complement(B, system.lagrangian.derivatives(state).g)


def membership(system: ConstrainedSystem, state: TangentState, tol: float = MEMBERSHIP_TOL,
               frame: FrameQ | None = None) -> tuple[np.ndarray, bool]:
    """Complement quasi-velocities v^a and whether the state lies on C."""
    if frame is None:
        va = system.local(state).v[system.m:]
    else:
        va = quasi_velocities(frame, state)[frame.m:]
    return va, bool(va.size == 0 or np.max(np.abs(va)) <= tol)


# ---------------------------------------------------------------------------
# adapted frame
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AdaptedFrame:
    """Adapted frame {X_alpha, X_a, Y_alpha, Y_a} on T(TQ) at one state on C.

    Frame vectors are columns of 2n-row matrices in (dq, du) components.  The
    coframe rows of ``coframe`` are ordered theta^alpha, theta^a, phi^alpha,
    phi^a.  ``omega`` is the coordinate matrix of omega_L at the state.
    """

    local: LocalData
    X_alpha: np.ndarray
    X_a: np.ndarray
    Y_alpha: np.ndarray
    Y_a: np.ndarray
    coframe: np.ndarray
    omega: np.ndarray

    @property
    def m(self) -> int:
        return self.X_alpha.shape[1]

    @property
    def n(self) -> int:
        return self.X_alpha.shape[0] // 2

    @cached_property
    def matrix(self) -> np.ndarray:
        return np.hstack([self.X_alpha, self.X_a, self.Y_alpha, self.Y_a])

    @cached_property
    def tangent_basis(self) -> np.ndarray:
        """Basis {X_alpha, X_a, Y_alpha} of T_u C."""
        return np.hstack([self.X_alpha, self.X_a, self.Y_alpha])

    @cached_property
    def d_tilde(self) -> np.ndarray:
        """Basis {X_alpha, Y_alpha} of the distribution D-tilde."""
        return np.hstack([self.X_alpha, self.Y_alpha])

    def w(self, A: np.ndarray, Bm: np.ndarray) -> np.ndarray:
        """omega_L contracted with frame vector columns: A^T Omega B."""
        return A.T @ self.omega @ Bm

    @cached_property
    def g_alpha_beta(self) -> np.ndarray:
        return self.w(self.Y_alpha, self.X_alpha)

    @cached_property
    def g_ab(self) -> np.ndarray:
        return self.w(self.Y_a, self.X_a)

    @cached_property
    def omega_ab(self) -> np.ndarray:
        return self.w(self.X_a, self.X_a)

    @cached_property
    def omega_a_alpha(self) -> np.ndarray:
        return self.w(self.X_a, self.X_alpha)

    @cached_property
    def omega_alpha_beta(self) -> np.ndarray:
        return self.w(self.X_alpha, self.X_alpha)

    def components(self, vector: np.ndarray) -> np.ndarray:
        """Coefficients of a 2n vector along (X_alpha, X_a, Y_alpha, Y_a)."""
        return self.coframe @ vector

    def invariant_residuals(self) -> dict[str, float]:
        """Residuals of the frame invariants (all should be near zero)."""
        n, m = self.n, self.m
        loc = self.local
        g = loc.g
        frame = self.matrix
        S_X = np.vstack([np.zeros((n, n)), np.hstack([self.X_alpha, self.X_a])[:n]])
        Y = np.hstack([self.Y_alpha, self.Y_a])
        tangency = loc.constraint_differential @ self.tangent_basis
        out = {
            "vertical_endomorphism": float(np.max(np.abs(Y - S_X))),
            "omega_a_alpha": float(np.max(np.abs(self.omega_a_alpha), initial=0.0)),
            "omega_alpha_beta": float(np.max(np.abs(self.omega_alpha_beta), initial=0.0)),
            "coframe_duality": float(np.max(np.abs(self.coframe @ frame - np.eye(2 * n)))),
            "g_alpha_a": float(np.max(np.abs(self.Y_alpha[n:].T @ g @ self.Y_a[n:]), initial=0.0)),
            "tangency": float(np.max(np.abs(tangency), initial=0.0)),
        }
        blocks = pullback_blocks(self)
        out["pullback_reconstruction"] = blocks.reconstruction_residual
        return out


def adapted_frame(system: ConstrainedSystem, state: TangentState, local: LocalData | None = None,
                  check: bool = True) -> AdaptedFrame:
    """Build the normalised adapted frame at a state on C.

    X_alpha start as the complete lifts of the D basis projected into T C
    along the Y_a; X_a start as the tangent lift (X_a, v^beta dX_beta[X_a]).
    Then X_a -= g^{alpha beta} omega_{a beta} Y_alpha and
    X_alpha -= 1/2 g^{beta gamma} omega_{alpha gamma} Y_beta.
    """
    loc = local or (system.require_on_c(state) if check else system.local(state))
    n, m = system.n, system.m
    B, C, u = loc.B, loc.C, state.u
    rho = loc.constraint_differential
    omega = cartan_forms(system.lagrangian, state, loc.L).omega

    Y_alpha = np.vstack([np.zeros((n, m)), B])
    Y_a = np.vstack([np.zeros((n, n - m)), C])
    # complete lifts X_alpha^C = (X_alpha, dX_alpha u)
    XC = np.vstack([B, np.einsum("aij,j->ia", loc.dB, u)])
    X_alpha = XC - Y_a @ (rho @ XC)
    X_a = np.vstack([C, loc.transport @ C])
    X_a = X_a - Y_a @ (rho @ X_a)

    g_ab_D = Y_alpha.T @ omega @ X_alpha  # g_alpha beta
    if m and np.linalg.cond(g_ab_D) > REGULARITY_COND_MAX:
        raise RegularityError("L is not regular with respect to D at this state")
    ginv = np.linalg.inv(g_ab_D) if m else np.zeros((0, 0))
    if m and n - m:
        w_a_beta = X_a.T @ omega @ X_alpha
        X_a = X_a - Y_alpha @ (ginv @ w_a_beta.T)
    if m:
        w_ab = X_alpha.T @ omega @ X_alpha
        X_alpha = X_alpha - 0.5 * Y_alpha @ (ginv @ w_ab.T)

    frame = np.hstack([X_alpha, X_a, Y_alpha, Y_a])
    coframe = np.linalg.inv(frame)
    return AdaptedFrame(loc, X_alpha, X_a, Y_alpha, Y_a, coframe, omega)


@dataclass(frozen=True, eq=False)
class PullbackBlocks:
    g_alpha_beta: np.ndarray
    omega_ab: np.ndarray
    direct: np.ndarray  # iota* omega_L on the basis {X_alpha, X_a, Y_alpha}

    @cached_property
    def from_blocks(self) -> np.ndarray:
        m = self.g_alpha_beta.shape[0]
        k = self.omega_ab.shape[0]
        P = np.zeros((2 * m + k, 2 * m + k))
        P[m:m + k, m:m + k] = self.omega_ab
        P[m + k:, :m] = self.g_alpha_beta  # (Y_alpha, X_beta)
        P[:m, m + k:] = -self.g_alpha_beta.T  # (X_beta, Y_alpha)
        return P

    @property
    def reconstruction_residual(self) -> float:
        return float(np.max(np.abs(self.direct - self.from_blocks), initial=0.0))

    @property
    def rank(self) -> int:
        from .geometry import numerical_rank

        return numerical_rank(self.direct)


def pullback_blocks(frame: AdaptedFrame) -> PullbackBlocks:
    T = frame.tangent_basis
    return PullbackBlocks(frame.g_alpha_beta, frame.omega_ab, T.T @ frame.omega @ T)


def pullback_omega(system: ConstrainedSystem, state: TangentState) -> PullbackBlocks:
    """Blocks of iota* omega_L = g_ab phi^a ^ theta^b + 1/2 omega_ab theta^a ^ theta^b."""
    return pullback_blocks(adapted_frame(system, state))


def _omega_ab_svd(frame: AdaptedFrame, rtol: float):
    W = frame.omega_ab
    if W.shape[0] == 0:
        return 0, np.zeros((0, 0))
    _, s, vt = np.linalg.svd(W)
    # relative cut, floored by the scaled absolute zero test
    cutoff = max(rtol * s[0], scaled_tol(1e-10, frame.omega))
    rank = int(np.sum(s > cutoff))
    return rank, vt[rank:].T


def omega_ab_rank(frame: AdaptedFrame, rtol: float = RANK_RTOL) -> int:
    """Numerical rank of the omega_ab block (same zero test as the kernel)."""
    return _omega_ab_svd(frame, rtol)[0]


def characteristic_kernel(system: ConstrainedSystem, state: TangentState,
                          rtol: float = RANK_RTOL, frame: AdaptedFrame | None = None) -> np.ndarray:
    """Basis (columns) of {xi^a : omega_ab xi^b = 0}, the characteristic subspace.

    Returned as coefficient vectors on X_a.  A singular value counts as zero
    when it is at most ``rtol`` times the largest, or below the scaled
    absolute tolerance 1e-10 * (1 + max |omega|).
    """
    frame = frame or adapted_frame(system, state)
    return _omega_ab_svd(frame, rtol)[1]
