"""The Z_f correspondence on C and the identities built on it."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .. import expr as ex
from ..constraint import AdaptedFrame, ConstrainedSystem, adapted_frame
from ..dynamics import DynamicsSample, gamma_constrained
from ..geometry import TangentState
from ..lagrangian import energy, energy_differential
from ._sampling import DEFAULT_COUNT, DEFAULT_SEED, resolve_samples
from .report import ConservationReport, two_imply_third

__all__ = [
    "ScalarFunction",
    "ExpressionFunction",
    "EnergyFunction",
    "ScaledFunction",
    "ZfSample",
    "z_f_field",
    "z_f_least_squares",
    "gamma_vector",
    "thm_int_check",
    "symmetry_pairing",
    "newfasso_check",
]


class ScalarFunction:
    """A smooth function on TQ with exact value and differential."""

    name = "f"

    def value(self, system: ConstrainedSystem, state: TangentState) -> float:
        raise NotImplementedError

    def differential(self, system: ConstrainedSystem, state: TangentState) -> np.ndarray:
        """2n covector in (dq, du) components."""
        raise NotImplementedError

    def __neg__(self) -> "ScalarFunction":
        return ScaledFunction(self, -1.0)


class ExpressionFunction(ScalarFunction):
    def __init__(self, chart, source: ex.Node | str, name: str = "f"):
        self.chart = chart
        self.node = chart.parse(source) if isinstance(source, str) else source
        self.name = name

    @cached_property
    def _fn(self):
        names = self.chart.q_names + self.chart.u_names
        return ex.compile_many([self.node] + [ex.diff(self.node, v) for v in names], names)

    def value(self, system, state):
        return self._fn(*state.values())[0]

    def differential(self, system, state):
        return np.array(self._fn(*state.values())[1:])


class EnergyFunction(ScalarFunction):
    name = "E_L"

    def value(self, system, state):
        return energy(system.lagrangian, state)

    def differential(self, system, state):
        return energy_differential(state, system.lagrangian.derivatives(state))


class ScaledFunction(ScalarFunction):
    def __init__(self, base: ScalarFunction, factor: float):
        self.base, self.factor = base, float(factor)
        self.name = f"{factor:g}*{base.name}"

    def value(self, system, state):
        return self.factor * self.base.value(system, state)

    def differential(self, system, state):
        return self.factor * self.base.differential(system, state)


def gamma_vector(sample: DynamicsSample) -> np.ndarray:
    """The constrained field at the state as a 2n vector (u, a)."""
    return np.concatenate([sample.state.u, sample.a])


@dataclass(frozen=True, eq=False)
class ZfSample:
    """Z_f at one state: coordinate vector, frame components, and defect residual."""

    frame: AdaptedFrame
    df: np.ndarray
    vector: np.ndarray

    @property
    def components(self) -> np.ndarray:
        return self.frame.components(self.vector)

    @cached_property
    def defect(self) -> np.ndarray:
        """(Z_f contracted into omega) - df, evaluated on the D-tilde basis."""
        fr = self.frame
        return self.vector @ fr.omega @ fr.d_tilde - self.df @ fr.d_tilde

    def apply(self, differential: np.ndarray) -> float:
        return float(differential @ self.vector)


def z_f_field(system: ConstrainedSystem, f: ScalarFunction, state: TangentState,
              frame: AdaptedFrame | None = None) -> ZfSample:
    """Z_f = g^{alpha beta}(<X_beta, df> Y_alpha - <Y_beta, df> X_alpha)."""
    frame = frame or adapted_frame(system, state)
    df = f.differential(system, state)
    ginv = np.linalg.inv(frame.g_alpha_beta)
    c_Y = ginv @ (df @ frame.X_alpha)
    c_X = -ginv @ (df @ frame.Y_alpha)
    vec = frame.Y_alpha @ c_Y + frame.X_alpha @ c_X
    return ZfSample(frame, df, vec)


def z_f_least_squares(system: ConstrainedSystem, f: ScalarFunction, state: TangentState,
                      frame: AdaptedFrame | None = None) -> np.ndarray:
    """Z_f from its defining conditions alone, without the adapted frame.

    D-tilde is the joint kernel of the constraint differentials rho^a and of
    theta^a composed with the projection; Z is the vector in it whose
    contraction into omega matches df on D-tilde.
    """
    loc = (frame.local if frame is not None else system.require_on_c(state))
    n = system.n
    omega = frame.omega if frame is not None else _omega(system, state)
    rows = np.vstack([loc.constraint_differential, np.hstack([loc.theta_N, np.zeros((n - system.m, n))])])
    if rows.shape[0]:
        _, s, vt = np.linalg.svd(rows)
        N = vt[rows.shape[0]:].T
    else:
        N = np.eye(2 * n)
    df = f.differential(system, state)
    W = N.T @ omega @ N  # W[i, j] = omega(N_i, N_j)
    c, *_ = np.linalg.lstsq(W.T, N.T @ df, rcond=None)
    return N @ c


def _omega(system, state):
    from ..lagrangian import cartan_forms

    return cartan_forms(system.lagrangian, state).omega


def _frames(system, states):
    for st in states:
        fr = adapted_frame(system, st)
        yield st, fr, gamma_constrained(system, st, local=fr.local)


def thm_int_check(system: ConstrainedSystem, f: ScalarFunction, samples: Sequence[TangentState] | None = None,
                  count: int = DEFAULT_COUNT, seed: int = DEFAULT_SEED, tol: float = 1e-9,
                  identity_tol: float = 1e-9) -> ConservationReport:
    """Gamma(f) and Z_f(E_L) side by side; f is a first integral iff either vanishes."""
    states, prov = resolve_samples(system, samples, count, seed)
    E = EnergyFunction()
    gf, zE, ident, uniq = [], [], [], []
    for st, fr, dyn in _frames(system, states):
        zf = z_f_field(system, f, st, fr)
        g_f = float(zf.df @ gamma_vector(dyn))
        z_E = zf.apply(E.differential(system, st))
        gf.append(g_f)
        zE.append(z_E)
        ident.append(g_f - z_E)
        uniq.append(np.max(np.abs(zf.vector - z_f_least_squares(system, f, st, fr))))
    rep = ConservationReport(provenance=prov)
    rep.add("gamma_f", gf, tol)
    rep.add("zf_energy", zE, tol)
    rep.add("identity", ident, identity_tol)
    rep.add("zf_uniqueness", uniq, identity_tol)
    rep.flags["function"] = f.name
    return rep


def symmetry_pairing(system: ConstrainedSystem, f1: ScalarFunction, f2: ScalarFunction,
                     samples: Sequence[TangentState] | None = None, count: int = DEFAULT_COUNT,
                     seed: int = DEFAULT_SEED, tol: float = 1e-9) -> ConservationReport:
    """Z1(f2) = -Z2(f1) = omega(Z2, Z1) (omega(Z, .) = Z contracted into omega)."""
    states, prov = resolve_samples(system, samples, count, seed)
    anti, pair, vals = [], [], []
    for st in states:
        fr = adapted_frame(system, st)
        z1, z2 = z_f_field(system, f1, st, fr), z_f_field(system, f2, st, fr)
        z1f2 = z1.apply(z2.df)
        z2f1 = z2.apply(z1.df)
        w = float(z2.vector @ fr.omega @ z1.vector)
        anti.append(z1f2 + z2f1)
        pair.append(z1f2 - w)
        vals.append(z1f2)
    rep = ConservationReport(provenance=prov, required=["antisymmetry", "pairing"])
    rep.add("antisymmetry", anti, tol)
    rep.add("pairing", pair, tol)
    rep.add("bracket_value", vals, tol)
    return rep


ZBuilder = Callable[[AdaptedFrame, ZfSample, DynamicsSample], np.ndarray]


def newfasso_check(system: ConstrainedSystem, f: ScalarFunction, Z: ZBuilder | None = None,
                   samples: Sequence[TangentState] | None = None, count: int = DEFAULT_COUNT,
                   seed: int = DEFAULT_SEED, tol: float = 1e-9, defect_tol: float = 1e-9) -> ConservationReport:
    """Gamma(f) = Z(E_L) - epsilon(Z) for tangent Z whose defect annihilates D-tilde.

    ``Z`` builds the tangent vector at each state from the adapted frame,
    the Z_f sample and the dynamics sample; by default Z = Z_f.
    """
    states, prov = resolve_samples(system, samples, count, seed)
    E = EnergyFunction()
    gf, zE, eps, ident = [], [], [], []
    for st, fr, dyn in _frames(system, states):
        zf = z_f_field(system, f, st, fr)
        z = zf.vector if Z is None else np.asarray(Z(fr, zf, dyn), dtype=float)
        tangency = fr.local.constraint_differential @ z
        defect = z @ fr.omega @ fr.d_tilde - zf.df @ fr.d_tilde
        worst = max(np.max(np.abs(defect), initial=0.0), np.max(np.abs(tangency), initial=0.0))
        if worst > defect_tol * (1.0 + np.max(np.abs(zf.df))):
            raise ValueError(f"Z is not admissible at q={st.q.tolist()}: defect {worst:.3e}")
        g_f = float(zf.df @ gamma_vector(dyn))
        z_E = float(E.differential(system, st) @ z)
        e_Z = dyn.epsilon(z[: system.n])
        gf.append(g_f)
        zE.append(z_E)
        eps.append(e_Z)
        ident.append(g_f - z_E + e_Z)
    rep = ConservationReport(provenance=prov, required=["identity"])
    rep.add("identity", ident, tol)
    c1, c2, c3 = rep.add("gamma_f", gf, tol), rep.add("z_energy", zE, tol), rep.add("reaction", eps, tol)
    rep.flags["two_imply_third"] = two_imply_third(c1.max_residual, c2.max_residual, c3.max_residual, tol)
    return rep
