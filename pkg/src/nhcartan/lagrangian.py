"""Lagrangians on TQ, their lifts, fibre metric, energy and Cartan forms.

Two concrete forms are supported: a general expression ``L(q, u)`` and the
mechanical form ``L = 1/2 g_q(u, u) - phi(q)``.  Only the latter carries a
Levi-Civita connection.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import expr as ex
from .geometry import Chart, FrameQ, TangentState, VectorFieldQ, _as_q

__all__ = [
    "Lagrangian",
    "GeneralLagrangian",
    "MechanicalLagrangian",
    "LagrangianDerivatives",
    "FibreMetricSample",
    "CartanSample",
    "RegularityError",
    "regular_inverse",
    "UnsupportedOperationError",
    "vertical_lift_L",
    "complete_lift_L",
    "hessian_metric",
    "energy",
    "energy_differential",
    "cartan_forms",
    "christoffels",
    "covariant_derivative",
    "grad_potential",
]

REGULARITY_COND_MAX = 1e12


class RegularityError(ValueError):
    """Singular Hessian (on TQ or on the constraint distribution)."""


class UnsupportedOperationError(TypeError):
    pass


def regular_inverse(matrix: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Inverse of a square matrix, refusing ones whose 1-norm condition exceeds the limit."""
    try:
        inv = np.linalg.inv(matrix)
    except np.linalg.LinAlgError as err:
        raise RegularityError(f"{what} is singular") from err
    cond = np.linalg.norm(matrix, 1) * np.linalg.norm(inv, 1)
    if not np.isfinite(cond) or cond > REGULARITY_COND_MAX:
        raise RegularityError(f"{what} is singular")
    return inv


@dataclass(frozen=True, eq=False)
class LagrangianDerivatives:
    """Value and exact derivatives of L at one state.

    ``g[i, j] = d2L/du^i du^j`` and ``M[i, j] = d2L/du^i dq^j``.
    """

    value: float
    dq: np.ndarray
    du: np.ndarray
    g: np.ndarray
    M: np.ndarray


class Lagrangian:
    chart: Chart

    @property
    def n(self) -> int:
        return self.chart.n

    def derivatives(self, state: TangentState) -> LagrangianDerivatives:
        raise NotImplementedError

    def __call__(self, state: TangentState) -> float:
        return self.derivatives(state).value

    def check_regular(self, state: TangentState) -> None:
        g = self.derivatives(state).g
        if np.linalg.cond(g) > REGULARITY_COND_MAX:
            raise RegularityError(f"Hessian of L is singular at q={state.q.tolist()}, u={state.u.tolist()}")

    @property
    def is_mechanical(self) -> bool:
        return False


class GeneralLagrangian(Lagrangian):
    """L given by an arbitrary expression in (q, u)."""

    def __init__(self, chart: Chart, source: ex.Node | str):
        if isinstance(source, str):
            source = chart.parse(source)
        self.chart = chart
        self.source = source

    @cached_property
    def _fn(self):
        n = self.n
        qs, us = self.chart.q_names, self.chart.u_names
        L = self.source
        dq = [ex.diff(L, a) for a in qs]
        du = [ex.diff(L, a) for a in us]
        guu = [ex.diff(du[i], us[j]) for i in range(n) for j in range(i, n)]
        guq = [ex.diff(du[i], qs[j]) for i in range(n) for j in range(n)]
        return ex.compile_many([L] + dq + du + guu + guq, qs + us)

    def derivatives(self, state: TangentState) -> LagrangianDerivatives:
        n = self.n
        out = self._fn(*state.values())
        dq = np.array(out[1:1 + n])
        du = np.array(out[1 + n:1 + 2 * n])
        k = 1 + 2 * n
        g = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                g[i, j] = g[j, i] = out[k]
                k += 1
        M = np.array(out[k:k + n * n]).reshape(n, n)
        return LagrangianDerivatives(out[0], dq, du, g, M)


class MechanicalLagrangian(Lagrangian):
    """L = 1/2 g_ij(q) u^i u^j - phi(q)."""

    def __init__(self, chart: Chart, metric: Sequence[Sequence[ex.Node | str | float]],
                 potential: ex.Node | str | float = 0.0):
        n = chart.n
        if len(metric) != n or any(len(row) != n for row in metric):
            raise ValueError(f"metric must be {n} x {n}")

        def node(x):
            if isinstance(x, str):
                x = chart.parse(x, velocities=False)
            elif not isinstance(x, ex.Node):
                x = ex.Const(float(x))
            if ex.variables(x) - set(chart.q_names):
                raise ValueError("metric and potential may only depend on q")
            return x

        self.chart = chart
        self.metric_nodes = tuple(tuple(node(x) for x in row) for row in metric)
        self.potential_node = node(potential)

    @property
    def is_mechanical(self) -> bool:
        return True

    @cached_property
    def _fn(self):
        qs = self.chart.q_names
        G = [x for row in self.metric_nodes for x in row]
        dG = [ex.diff(x, a) for a in qs for x in G]
        phi = self.potential_node
        dphi = [ex.diff(phi, a) for a in qs]
        return ex.compile_many(G + dG + [phi] + dphi, qs)

    def _parts(self, q):
        n = self.n
        out = self._fn(*_as_q(q).tolist())
        nn = n * n
        G = np.array(out[:nn]).reshape(n, n)
        dG = np.array(out[nn:nn + n * nn]).reshape(n, n, n)  # dG[k] = d G / d q^k
        phi = out[nn + n * nn]
        dphi = np.array(out[nn + n * nn + 1:])
        return G, dG, phi, dphi

    def metric(self, q) -> np.ndarray:
        return self._parts(q)[0]

    def metric_derivatives(self, q) -> np.ndarray:
        """``dG[k, i, j] = d g_ij / d q^k``."""
        return self._parts(q)[1]

    def potential(self, q) -> float:
        return self._parts(q)[2]

    def potential_gradient(self, q) -> np.ndarray:
        """Coordinate differential d(phi) (not raised)."""
        return self._parts(q)[3]

    def check_metric(self, q, tol: float = 1e-12) -> None:
        G = self.metric(q)
        if np.max(np.abs(G - G.T)) > tol * (1.0 + np.max(np.abs(G))):
            raise RegularityError(f"metric is not symmetric at q={_as_q(q).tolist()}")
        if np.min(np.linalg.eigvalsh(0.5 * (G + G.T))) <= 0.0:
            raise RegularityError(f"metric is not positive definite at q={_as_q(q).tolist()}")

    def derivatives(self, state: TangentState) -> LagrangianDerivatives:
        G, dG, phi, dphi = self._parts(state.q)
        u = state.u
        Gu = G @ u
        dGu = dG @ u  # dGu[k, i] = (d_k G u)_i
        dq = 0.5 * (dGu @ u) - dphi
        return LagrangianDerivatives(0.5 * u @ Gu - phi, dq, Gu, G, dGu.T)

    def as_general(self) -> GeneralLagrangian:
        """Equivalent expression Lagrangian (used to cross-check the two paths)."""
        n = self.n
        us = [ex.Var(a) for a in self.chart.u_names]
        kin: ex.Node = ex.ZERO
        for i in range(n):
            for j in range(n):
                kin = ex.add(kin, ex.mul(self.metric_nodes[i][j], ex.mul(us[i], us[j])))
        return GeneralLagrangian(self.chart, ex.sub(ex.mul(ex.Const(0.5), kin), self.potential_node))


# ---------------------------------------------------------------------------
# lifts, metric and energy
# ---------------------------------------------------------------------------


def _vec(X, q) -> np.ndarray:
    return X(q) if isinstance(X, VectorFieldQ) else np.asarray(X, dtype=float)


def vertical_lift_L(L: Lagrangian, X: VectorFieldQ, state: TangentState,
                    d: LagrangianDerivatives | None = None) -> float:
    """X^V(L) = X^i dL/du^i."""
    d = d or L.derivatives(state)
    return float(_vec(X, state.q) @ d.du)


def complete_lift_L(L: Lagrangian, X: VectorFieldQ, state: TangentState,
                    d: LagrangianDerivatives | None = None) -> float:
    """X^C(L) = X^i dL/dq^i + u^j (dX^i/dq^j) dL/du^i."""
    d = d or L.derivatives(state)
    return float(X(state.q) @ d.dq + (X.jacobian(state.q) @ state.u) @ d.du)


def energy(L: Lagrangian, state: TangentState, d: LagrangianDerivatives | None = None) -> float:
    """E_L = u^i dL/du^i - L."""
    d = d or L.derivatives(state)
    return float(state.u @ d.du - d.value)


def energy_differential(state: TangentState, d: LagrangianDerivatives) -> np.ndarray:
    """dE_L as a 2n covector in (dq, du) coordinates."""
    u = state.u
    return np.concatenate([u @ d.M - d.dq, d.g @ u])


@dataclass(frozen=True, eq=False)
class FibreMetricSample:
    g: np.ndarray
    m: int | None = None
    frame_matrix: np.ndarray | None = None

    @cached_property
    def in_frame(self) -> np.ndarray:
        F = self.frame_matrix
        return F.T @ self.g @ F

    @property
    def g_alpha_beta(self) -> np.ndarray:
        return self.in_frame[: self.m, : self.m]

    @property
    def g_ab(self) -> np.ndarray:
        return self.in_frame[self.m:, self.m:]

    @property
    def g_a_alpha(self) -> np.ndarray:
        return self.in_frame[self.m:, : self.m]


def hessian_metric(L: Lagrangian, state: TangentState, frame: FrameQ | np.ndarray | None = None,
                   m: int | None = None) -> FibreMetricSample:
    """Fibre metric g_ij = d2L/du^i du^j, with frame blocks by congruence."""
    g = L.derivatives(state).g
    if frame is None:
        return FibreMetricSample(g)
    if isinstance(frame, FrameQ):
        F, m = frame.matrix(state.q), frame.m
    else:
        F = np.asarray(frame, dtype=float)
        if m is None:
            raise ValueError("m is required with a matrix frame")
    sample = FibreMetricSample(g, m, F)
    if m and np.linalg.cond(sample.g_alpha_beta) > REGULARITY_COND_MAX:
        raise RegularityError("L is not regular with respect to the distribution (g_alpha_beta singular)")
    return sample


@dataclass(frozen=True, eq=False)
class CartanSample:
    """Coordinate components of theta_L and omega_L at one state.

    ``omega[I, J] = omega_L(e_I, e_J)`` in the basis (d/dq, d/du).
    """

    theta: np.ndarray
    omega: np.ndarray


def cartan_forms(L: Lagrangian, state: TangentState, d: LagrangianDerivatives | None = None) -> CartanSample:
    """theta_L = (dL/du^i) dq^i and omega_L = d theta_L."""
    d = d or L.derivatives(state)
    n = L.n
    theta = np.concatenate([d.du, np.zeros(n)])
    omega = np.zeros((2 * n, 2 * n))
    omega[:n, :n] = d.M.T - d.M
    omega[:n, n:] = -d.g
    omega[n:, :n] = d.g
    return CartanSample(theta, omega)


# ---------------------------------------------------------------------------
# Riemannian pieces (mechanical type only)
# ---------------------------------------------------------------------------


def _mechanical(L: Lagrangian) -> MechanicalLagrangian:
    if not isinstance(L, MechanicalLagrangian):
        raise UnsupportedOperationError("operation requires a Lagrangian of mechanical type")
    return L


def christoffels(L: Lagrangian, q) -> np.ndarray:
    """``Gamma[i, j, k]`` of the Levi-Civita connection of the kinetic metric."""
    L = _mechanical(L)
    G, dG, _, _ = L._parts(q)
    Ginv = np.linalg.inv(G)
    # Gamma_ljk (first kind) = 1/2 (d_j g_lk + d_k g_lj - d_l g_jk)
    first = 0.5 * (np.einsum("jlk->ljk", dG) + np.einsum("klj->ljk", dG) - dG)
    return np.einsum("il,ljk->ijk", Ginv, first)


def covariant_derivative(L: Lagrangian, X, Y: VectorFieldQ, q) -> np.ndarray:
    """(nabla_X Y)^i = X^j dY^i/dq^j + Gamma^i_jk X^j Y^k."""
    q = _as_q(q)
    x = _vec(X, q)
    return Y.jacobian(q) @ x + np.einsum("ijk,j,k->i", christoffels(L, q), x, Y(q))


def grad_potential(L: Lagrangian, q) -> np.ndarray:
    """grad(phi) = g^{-1} d(phi)."""
    L = _mechanical(L)
    G, _, _, dphi = L._parts(q)
    return np.linalg.solve(G, dphi)
