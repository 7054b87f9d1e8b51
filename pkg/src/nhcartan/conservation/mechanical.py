"""Riemannian side for mechanical Lagrangians: Killing restriction, Pi, induced connection,
and conditions for polynomial first integrals in the quasi-velocities."""

from __future__ import annotations

import itertools
import math
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .. import expr as ex
from ..constraint import ConstrainedSystem, LocalData
from ..dynamics import Trajectory
from ..geometry import TangentState, VectorFieldQ
from ..lagrangian import MechanicalLagrangian, UnsupportedOperationError, christoffels
from ._sampling import DEFAULT_COUNT, DEFAULT_SEED, resolve_samples
from .report import ConservationReport

__all__ = [
    "CTensor",
    "killing_restricted",
    "second_fundamental_form",
    "induced_connection",
    "symmetrize",
    "quadratic_integral_check",
    "restricted_tensor_check",
    "higher_degree_check",
]


def _mech(system: ConstrainedSystem) -> MechanicalLagrangian:
    if not isinstance(system.lagrangian, MechanicalLagrangian):
        raise UnsupportedOperationError("this check needs a Lagrangian of mechanical type")
    return system.lagrangian


def _static_local(system: ConstrainedSystem, q) -> LocalData:
    return system.local(TangentState(q, np.zeros(system.n)))


def _nabla(Gam: np.ndarray, X: np.ndarray, Y: np.ndarray, JY: np.ndarray) -> np.ndarray:
    """(nabla_X Y)^i = JY^i_j X^j + Gamma^i_jk X^j Y^k for a field Y with Jacobian JY."""
    return JY @ X + np.einsum("ijk,j,k->i", Gam, X, Y)


def _basis_derivatives(system, q, loc=None):
    """N[i, alpha] = nabla_{X_i} X_alpha (n-vectors) for the frame X_i = (X_alpha, X_a)."""
    loc = loc or _static_local(system, q)
    Gam = christoffels(system.lagrangian, q)
    F = loc.F
    n, m = system.n, system.m
    N = np.empty((n, m, n))
    for i in range(n):
        for al in range(m):
            N[i, al] = _nabla(Gam, F[:, i], loc.B[:, al], loc.dB[al])
    return N, loc


def killing_restricted(system: ConstrainedSystem, Z: VectorFieldQ, q) -> np.ndarray:
    """K[alpha, beta] = g(nabla_{X_alpha} Z, X_beta) + g(nabla_{X_beta} Z, X_alpha)."""
    L = _mech(system)
    q = np.asarray(q, dtype=float)
    G = L.metric(q)
    Gam = christoffels(L, q)
    B = system.distribution.matrix(q)
    z, Jz = Z(q), Z.jacobian(q)
    nab = np.column_stack([_nabla(Gam, B[:, a], z, Jz) for a in range(system.m)])
    K = nab.T @ G @ B
    return K + K.T


def second_fundamental_form(system: ConstrainedSystem, q, local: LocalData | None = None) -> np.ndarray:
    """Pi[a, alpha, beta]: components along X_a of the normal part of
    1/2 (nabla_{X_alpha} X_beta + nabla_{X_beta} X_alpha)."""
    _mech(system)
    q = np.asarray(q, dtype=float)
    N, loc = _basis_derivatives(system, q, local)
    m = system.m
    DD = N[:m]  # DD[alpha, beta] = nabla_{X_alpha} X_beta
    sym = 0.5 * (DD + DD.transpose(1, 0, 2))
    return np.einsum("aj,bcj->abc", loc.theta_N, sym)


def induced_connection(system: ConstrainedSystem, q, local: LocalData | None = None) -> np.ndarray:
    """Gbar[beta, i, alpha]: D-block of the frame components of nabla_{X_i} X_alpha."""
    _mech(system)
    q = np.asarray(q, dtype=float)
    N, loc = _basis_derivatives(system, q, local)
    return np.einsum("bj,iaj->bia", loc.theta_D, N)


def symmetrize(T: np.ndarray) -> np.ndarray:
    """Average of T over all permutations of its axes."""
    k = T.ndim
    out = np.zeros_like(T)
    for perm in itertools.permutations(range(k)):
        out += np.transpose(T, perm)
    return out / math.factorial(k)


class CTensor:
    """Symmetric covariant tensor with a companion scalar f.

    ``components`` maps 0-based index tuples to expressions in q; missing
    entries are zero and symmetric partners are filled in.  With
    ``basis="distribution"`` the indices range over the D basis (size m),
    with ``basis="coordinates"`` over coordinate directions (size n).
    """

    def __init__(self, chart, degree: int, components: Mapping[tuple[int, ...], ex.Node | str | float],
                 f: ex.Node | str | float = 0.0, basis: str = "distribution", size: int | None = None,
                 name: str = "A"):
        if degree < 2:
            raise ValueError("tensor degree must be at least 2")
        if basis not in ("distribution", "coordinates"):
            raise ValueError("basis must be 'distribution' or 'coordinates'")
        self.chart, self.degree, self.basis, self.name = chart, degree, basis, name
        self.size = chart.n if size is None and basis == "coordinates" else size

        def node(x):
            if isinstance(x, str):
                x = chart.parse(x, velocities=False)
            elif not isinstance(x, ex.Node):
                x = ex.Const(float(x))
            if ex.variables(x) - set(chart.q_names):
                raise ValueError("tensor components may only depend on q")
            return x

        comps: dict[tuple[int, ...], ex.Node] = {}
        for idx, val in components.items():
            idx = tuple(int(i) for i in idx)
            if len(idx) != degree:
                raise ValueError(f"index {idx} does not have {degree} entries")
            key = tuple(sorted(idx))
            nd = node(val)
            if key in comps and ex.to_source(comps[key]) != ex.to_source(nd):
                raise ValueError(f"components for {idx} are not symmetric")
            comps[key] = nd
        self.components = comps
        self.f = node(f)

    def _check_size(self, size: int):
        if self.size is not None and self.size != size:
            raise ValueError("tensor size does not match the system")
        if any(i >= size or i < 0 for idx in self.components for i in idx):
            raise ValueError("tensor index out of range")

    @cached_property
    def _fn(self):
        qs = self.chart.q_names
        keys = sorted(self.components)
        nodes = []
        for k in keys:
            c = self.components[k]
            nodes.append(c)
            nodes.extend(ex.diff(c, v) for v in qs)
        nodes.append(self.f)
        nodes.extend(ex.diff(self.f, v) for v in qs)
        return keys, ex.compile_many(nodes, qs)

    def evaluate(self, q, size: int):
        """(A, dA, f, df) with ``dA[j, ...] = dA/dq^j``."""
        self._check_size(size)
        keys, fn = self._fn
        n = self.chart.n
        out = fn(*np.asarray(q, dtype=float).tolist())
        A = np.zeros((size,) * self.degree)
        dA = np.zeros((n,) + (size,) * self.degree)
        for pos, key in enumerate(keys):
            base = pos * (n + 1)
            val, grad = out[base], out[base + 1: base + 1 + n]
            for perm in set(itertools.permutations(key)):
                A[perm] = val
                dA[(slice(None),) + perm] = grad
        tail = len(keys) * (n + 1)
        return A, dA, out[tail], np.array(out[tail + 1: tail + 1 + n])

    def symmetry_residual(self, q, size: int) -> float:
        A = self.evaluate(q, size)[0]
        return float(np.max(np.abs(A - symmetrize(A))))

    def value_on(self, system: ConstrainedSystem, state: TangentState) -> float:
        """A(v, ..., v) + f with v the D quasi-velocities (or u in coordinates)."""
        if self.basis == "distribution":
            loc = system.local(state)
            v, size = loc.v[: system.m], system.m
        else:
            v, size = state.u, system.n
        A, _, f, _ = self.evaluate(state.q, size)
        val = A
        for _ in range(self.degree):
            val = val @ v
        return float(val) + f


def _grad_phi_D(L: MechanicalLagrangian, loc: LocalData, q) -> np.ndarray:
    """(grad phi)^beta = g^{beta gamma} X_gamma(phi), using the D block of g."""
    gD = loc.B.T @ loc.g @ loc.B
    return np.linalg.solve(gD, loc.B.T @ L.potential_gradient(q))


def _nabla_bar(A: np.ndarray, dA: np.ndarray, B: np.ndarray, Gbar: np.ndarray) -> np.ndarray:
    """T[alpha, beta1..betak] = X_alpha(A) - sum over slots of A with Gbar^delta_{alpha beta_s} inserted."""
    m = B.shape[1]
    k = A.ndim
    T = np.einsum("ja,j...->a...", B, dA)
    GD = Gbar[:, :m, :]  # GD[delta, alpha, beta]
    for s in range(k):
        # contract slot s of A with delta
        moved = np.moveaxis(A, s, 0)  # delta first
        term = np.einsum("d...,dab->ab...", moved, GD)  # (alpha, beta_s, rest...)
        # put beta_s back into position s+1
        term = np.moveaxis(term, 1, s + 1)
        T = T - term
    return T


def _monitor_drift(rep, tensor, system, trajectory, drift_tol, passed):
    if trajectory is None:
        return
    vals = [tensor.value_on(system, s) for s in trajectory.states()]
    drift = trajectory.drift(vals)
    rep.flags["trajectory_drift"] = drift
    if passed:
        rep.add_drift("integral", drift, drift_tol)


def quadratic_integral_check(system: ConstrainedSystem, tensor: CTensor,
                             samples: Sequence[TangentState] | None = None, trajectory: Trajectory | None = None,
                             count: int = DEFAULT_COUNT, seed: int = DEFAULT_SEED, tol: float = 1e-9,
                             drift_tol: float = 1e-8) -> ConservationReport:
    """Conditions for psi = A_{beta gamma} v^beta v^gamma + f to be a first integral.

    parallel:  symmetrized nabla-bar_alpha A_{beta gamma} = 0;
    potential: X_alpha(f) = 2 A_{alpha beta} (grad phi)^beta.
    """
    L = _mech(system)
    if tensor.degree != 2 or tensor.basis != "distribution":
        raise ValueError("quadratic_integral_check needs a degree-2 tensor on the D basis")
    states, prov = resolve_samples(system, samples, count, seed)
    m = system.m
    par, pot, symres = [], [], []
    for st in states:
        q = st.q
        loc = _static_local(system, q)
        A, dA, _, df = tensor.evaluate(q, m)
        Gbar = induced_connection(system, q, loc)
        T = _nabla_bar(A, dA, loc.B, Gbar)
        par.append(np.max(np.abs(symmetrize(T))))
        pot.append(np.max(np.abs(loc.B.T @ df - 2 * A @ _grad_phi_D(L, loc, q))))
        symres.append(np.max(np.abs(A - A.T)))
    rep = ConservationReport(provenance=prov, required=["parallel", "potential"])
    c1 = rep.add("parallel", par, tol)
    c2 = rep.add("potential", pot, tol)
    rep.add("tensor_symmetry", symres, 1e-12)
    _monitor_drift(rep, tensor, system, trajectory, drift_tol, c1.passed and c2.passed)
    return rep


def restricted_tensor_check(system: ConstrainedSystem, tensor: CTensor,
                            samples: Sequence[TangentState] | None = None, trajectory: Trajectory | None = None,
                            count: int = DEFAULT_COUNT, seed: int = DEFAULT_SEED,
                            tol: float = 1e-9, drift_tol: float = 1e-8) -> ConservationReport:
    """Conditions for psi = A(u, u) + f on C, with A a symmetric tensor on all of Q.

    cubic:  sym(nabla_alpha A_{beta gamma} + 2 A_{a alpha} Pi^a_{beta gamma}) = 0
    potential: X_alpha(f) = 2 A_{alpha beta} (grad phi)^beta
    upgrade_pi, upgrade_potential: A_{a(alpha} Pi^a_{beta gamma)} and A_{alpha a}(grad phi)^a,
    the extra terms that must vanish for an integral of the free system to survive on C.
    Frame indices alpha refer to the D basis and a to the policy complement.
    """
    L = _mech(system)
    if tensor.degree != 2 or tensor.basis != "coordinates":
        raise ValueError("restricted_tensor_check needs a degree-2 tensor in coordinates")
    states, prov = resolve_samples(system, samples, count, seed)
    n, m = system.n, system.m
    cub, pot, upi, upot, amb = [], [], [], [], []
    for st in states:
        q = st.q
        loc = _static_local(system, q)
        A, dA, _, df = tensor.evaluate(q, n)
        Gam = christoffels(L, q)
        F = loc.F
        # (nabla_k A)_ij = d_k A_ij - Gamma^l_ki A_lj - Gamma^l_kj A_il
        nA = dA - np.einsum("lki,lj->kij", Gam, A) - np.einsum("lkj,il->kij", Gam, A)
        amb.append(np.max(np.abs(symmetrize(nA))))
        nA_frame = np.einsum("kij,ka,ib,jc->abc", nA, loc.B, loc.B, loc.B)
        Af = F.T @ A @ F
        Pi = second_fundamental_form(system, q, loc)
        A_na = Af[m:, :m]  # A(X_a, X_alpha)
        pi_term = symmetrize(np.einsum("ab,acd->bcd", A_na, Pi))
        cub.append(np.max(np.abs(symmetrize(nA_frame) + 2 * pi_term)))
        upi.append(np.max(np.abs(pi_term), initial=0.0))
        grad_phi = np.linalg.solve(loc.g, L.potential_gradient(q))
        comps = loc.Finv @ grad_phi
        gD = comps[:m]
        pot.append(np.max(np.abs(loc.B.T @ df - 2 * Af[:m, :m] @ gD)))
        upot.append(np.max(np.abs(Af[:m, m:] @ comps[m:]), initial=0.0))
    rep = ConservationReport(provenance=prov, required=["cubic", "potential"])
    c1 = rep.add("cubic", cub, tol)
    c2 = rep.add("potential", pot, tol)
    rep.add("upgrade_pi", upi, tol)
    rep.add("upgrade_potential", upot, tol)
    rep.add("ambient_cubic", amb, tol)
    _monitor_drift(rep, tensor, system, trajectory, drift_tol, c1.passed and c2.passed)
    return rep


def higher_degree_check(system: ConstrainedSystem, tensor: CTensor,
                        samples: Sequence[TangentState] | None = None, trajectory: Trajectory | None = None,
                        count: int = DEFAULT_COUNT, seed: int = DEFAULT_SEED, tol: float = 1e-9,
                        drift_tol: float = 1e-8) -> ConservationReport:
    """Conditions for a homogeneous integral A(v, ..., v) + f of degree k.

    parallel: sym nabla-bar A = 0 over k+1 indices; constant_f: X_alpha(f) = 0;
    potential: A_{alpha ... delta}(grad phi)^delta = 0.
    """
    L = _mech(system)
    if tensor.basis != "distribution":
        raise ValueError("higher_degree_check needs a tensor on the D basis")
    states, prov = resolve_samples(system, samples, count, seed)
    m = system.m
    par, cf, pot = [], [], []
    for st in states:
        q = st.q
        loc = _static_local(system, q)
        A, dA, _, df = tensor.evaluate(q, m)
        Gbar = induced_connection(system, q, loc)
        par.append(np.max(np.abs(symmetrize(_nabla_bar(A, dA, loc.B, Gbar)))))
        cf.append(np.max(np.abs(loc.B.T @ df)))
        pot.append(np.max(np.abs(A @ _grad_phi_D(L, loc, q))))
    rep = ConservationReport(provenance=prov, required=["parallel", "constant_f", "potential"])
    c1 = rep.add("parallel", par, tol)
    c2 = rep.add("constant_f", cf, tol)
    c3 = rep.add("potential", pot, tol)
    _monitor_drift(rep, tensor, system, trajectory, drift_tol, c1.passed and c2.passed and c3.passed)
    return rep
