"""Euler-Lagrange field, constrained field by fibre-normal projection, reactions, RK4 flow."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .constraint import ConstrainedSystem, LocalData, OffConstraintError, scaled_tol
from .expr import EvaluationError
from .geometry import TangentState, VectorFieldQ
from .lagrangian import (
    Lagrangian,
    LagrangianDerivatives,
    MechanicalLagrangian,
    RegularityError,
    complete_lift_L,
    energy,
    regular_inverse,
)

__all__ = [
    "DynamicsSample",
    "Trajectory",
    "Monitor",
    "IntegrationError",
    "gamma0",
    "gamma_constrained",
    "reaction_form",
    "mechanical_reaction_check",
    "integrate",
]


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (t = {t!r})")
        self.t = t


def _solve_regular(g: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    return regular_inverse(g, what) @ rhs


def _a0(d: LagrangianDerivatives, u: np.ndarray) -> np.ndarray:
    return _solve_regular(d.g, d.dq - d.M @ u, "Hessian of L")


def gamma0(L: Lagrangian | ConstrainedSystem, state: TangentState) -> np.ndarray:
    """Unconstrained acceleration: g a0 = dL/dq - (d2L/du dq) u."""
    if isinstance(L, ConstrainedSystem):
        L = L.lagrangian
    return _a0(L.derivatives(state), state.u)


@dataclass(frozen=True, eq=False)
class DynamicsSample:
    """Accelerations and reaction data at one state on C.

    ``gamma`` are coefficients on the complement vectors X_a held by
    ``local.C``; ``lam[a] = g(a - a0, X_a)``.
    """

    local: LocalData
    a0: np.ndarray
    a: np.ndarray
    gamma: np.ndarray
    lam: np.ndarray
    a_frame: np.ndarray | None = None

    @property
    def state(self) -> TangentState:
        return self.local.state

    @property
    def correction(self) -> np.ndarray:
        return self.a - self.a0

    def epsilon(self, Z) -> float:
        """Reaction form on a vector (or field) Z at this state."""
        z = Z(self.state.q) if isinstance(Z, VectorFieldQ) else np.asarray(Z, dtype=float)
        return float(self.correction @ self.local.g @ z)

    def invariant_residuals(self) -> dict[str, float]:
        loc = self.local
        g = loc.g
        dev = self.correction
        out = {
            "fibre_normal": float(np.max(np.abs(dev - loc.C @ self.gamma), initial=0.0)),
            "dalembert": float(np.max(np.abs(loc.B.T @ g @ dev), initial=0.0)),
            "multipliers": float(np.max(np.abs(self.lam - loc.C.T @ g @ dev), initial=0.0)),
            "tangency": float(np.max(np.abs(loc.constraint_differential
                                            @ np.concatenate([self.state.u, self.a])), initial=0.0)),
        }
        if self.a_frame is not None:
            out["algorithm_agreement"] = float(np.max(np.abs(self.a - self.a_frame)))
        return out


def _frame_acceleration(system: ConstrainedSystem, loc: LocalData) -> np.ndarray:
    """Acceleration from Gamma = v^alpha X_alpha^C + Gamma^alpha X_alpha^V.

    g_{alpha beta} Gamma^beta = X_alpha^C(L) - [u^j d_j X_alpha^i dL/du^i
    + X_alpha^i M_ij u^j + g(X_alpha, v^beta dX_beta u)].
    """
    state, d, B = loc.state, loc.L, loc.B
    u = state.u
    transported = loc.transport @ u
    rhs = np.empty(loc.m)
    for alpha, X in enumerate(system.distribution.basis):
        XC = complete_lift_L(system.lagrangian, X, state, d)
        drift = (loc.dB[alpha] @ u) @ d.du + B[:, alpha] @ (d.M @ u) + B[:, alpha] @ d.g @ transported
        rhs[alpha] = XC - drift
    G = _solve_regular(B.T @ d.g @ B, rhs, "g restricted to D")
    return transported + B @ G


def gamma_constrained(system: ConstrainedSystem, state: TangentState, verify: bool = False,
                      check_on_c: bool = True, local: LocalData | None = None) -> DynamicsSample:
    """Constrained acceleration a = a0 + gamma^a X_a with gamma fixed by tangency to C.

    Tangency of (u, a) to C reads theta^a(a - v^beta dX_beta u) = 0 and the
    theta^a are dual to the X_a, so gamma^a = -theta^a(a0 - v^beta dX_beta u).
    With ``verify`` the frame-based algorithm is also run and stored.
    """
    if local is None:
        local = system.require_on_c(state) if check_on_c else system.local(state)
    u = state.u
    a0 = _a0(local.L, u)
    theta_N = local.theta_N
    gamma = -theta_N @ (a0 - local.transport @ u)
    a = a0 + local.C @ gamma
    lam = local.C.T @ local.g @ (local.C @ gamma)
    a_frame = _frame_acceleration(system, local) if verify else None
    return DynamicsSample(local, a0, a, gamma, lam, a_frame)


def reaction_form(system: ConstrainedSystem, Z, state: TangentState,
                  sample: DynamicsSample | None = None) -> float:
    """epsilon(Z) = g(a - a0, Z)."""
    sample = sample or gamma_constrained(system, state)
    return sample.epsilon(Z)


def mechanical_reaction_check(system: ConstrainedSystem, Y, state: TangentState,
                              tol: float = 1e-10) -> tuple[float, float]:
    """(epsilon(Y), g(Y, Pi(u, u)) + Y(phi)) for Y g-normal to D."""
    from .conservation.mechanical import second_fundamental_form

    L = system.lagrangian
    if not isinstance(L, MechanicalLagrangian):
        from .lagrangian import UnsupportedOperationError

        raise UnsupportedOperationError("mechanical_reaction_check needs a mechanical Lagrangian")
    sample = gamma_constrained(system, state)
    loc = sample.local
    y = Y(state.q) if isinstance(Y, VectorFieldQ) else np.asarray(Y, dtype=float)
    G = loc.g
    along_D = loc.B.T @ G @ y
    if np.max(np.abs(along_D)) > scaled_tol(tol, G, y, loc.B):
        raise ValueError("Y is not normal to D")
    if np.max(np.abs(y)) == 0.0:
        return 0.0, 0.0
    Pi = second_fundamental_form(system, state.q, local=loc)  # (k, m, m)
    v = loc.v[: loc.m]
    pi_uu = loc.C @ np.einsum("abc,b,c->a", Pi, v, v)
    return sample.epsilon(y), float(y @ G @ pi_uu + y @ L.potential_gradient(state.q))


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Monitor:
    name: str
    fn: Callable[[TangentState], float]


@dataclass
class Trajectory:
    """Recorded samples of a constrained flow; arrays are indexed by sample."""

    n: int
    m: int
    t: np.ndarray
    q: np.ndarray
    u: np.ndarray
    v: np.ndarray
    E: np.ndarray
    lam: np.ndarray
    monitors: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.shape[0]

    def states(self):
        for q, u in zip(self.q, self.u):
            yield TangentState(q, u)

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.E - self.E[0])))

    @property
    def constraint_drift(self) -> float:
        va = self.v[:, self.m:]
        return float(np.max(np.abs(va))) if va.size else 0.0

    def drift(self, values: np.ndarray) -> float:
        values = np.asarray(values, dtype=float)
        return float(np.max(np.abs(values - values[0])))

    def monitor_drifts(self) -> dict[str, float]:
        return {k: self.drift(v) for k, v in self.monitors.items()}

    def header(self) -> list[str]:
        n, k = self.n, self.n - self.m
        return (["t"] + [f"q_{i}" for i in range(1, n + 1)] + [f"u_{i}" for i in range(1, n + 1)]
                + [f"v_{i}" for i in range(1, n + 1)] + ["E"] + [f"lambda_{a}" for a in range(1, k + 1)]
                + list(self.monitors))

    def rows(self) -> np.ndarray:
        cols = [self.t[:, None], self.q, self.u, self.v, self.E[:, None], self.lam]
        cols += [np.asarray(v)[:, None] for v in self.monitors.values()]
        return np.hstack(cols)

    def to_csv(self, stream=None) -> str:
        """CSV text with 17 significant digits; also written to ``stream`` if given."""
        buf = io.StringIO()
        buf.write(",".join(self.header()) + "\n")
        for row in self.rows():
            buf.write(",".join("%.17g" % x for x in row) + "\n")
        text = buf.getvalue()
        if stream is not None:
            stream.write(text)
        return text


def integrate(system: ConstrainedSystem, initial: TangentState, t_end: float, step: float,
              project_drift: bool = False, monitors: Sequence[Monitor] = (),
              record_every: int = 1) -> Trajectory:
    """Classical RK4 with fixed step on (q, u); acceleration from the projected field.

    The number of steps is ceil(t_end / step); the final step is shortened
    so the run ends exactly at ``t_end``.
    """
    if not (step > 0.0) or not math.isfinite(step):
        raise ValueError("step must be positive")
    if not (t_end >= 0.0) or not math.isfinite(t_end):
        raise ValueError("t_end must be non-negative")
    system.require_on_c(initial)
    n, m = system.n, system.m
    nsteps = int(math.ceil(t_end / step - 1e-12)) if t_end > 0 else 0

    ts, qs, us, vs, Es, lams = [], [], [], [], [], []
    mon = {mo.name: [] for mo in monitors}

    def record(t, state, sample):
        ts.append(t)
        qs.append(state.q.copy())
        us.append(state.u.copy())
        vs.append(sample.local.v.copy())
        Es.append(energy(system.lagrangian, state, sample.local.L))
        lams.append(sample.lam.copy())
        for mo in monitors:
            mon[mo.name].append(float(mo.fn(state)))

    def accel(q, u, t):
        try:
            st = TangentState(q, u)
            return gamma_constrained(system, st, check_on_c=False)
        except (ValueError, ArithmeticError, EvaluationError) as err:
            raise IntegrationError(str(err), t) from err

    q = initial.q.copy()
    u = initial.u.copy()
    t = 0.0
    s1 = accel(q, u, t)
    record(t, initial, s1)
    for k in range(nsteps):
        h = min(step, t_end - k * step)
        k1q, k1u = u, s1.a
        s2 = accel(q + 0.5 * h * k1q, u + 0.5 * h * k1u, t)
        k2q, k2u = u + 0.5 * h * k1u, s2.a
        s3 = accel(q + 0.5 * h * k2q, u + 0.5 * h * k2u, t)
        k3q, k3u = u + 0.5 * h * k2u, s3.a
        s4 = accel(q + h * k3q, u + h * k3u, t)
        k4q, k4u = u + h * k3u, s4.a
        q = q + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
        u = u + h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        t = t_end if k == nsteps - 1 else (k + 1) * step
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(u))):
            raise IntegrationError("state became non-finite", t)
        if project_drift:
            loc = system.local(TangentState(q, u))
            u = loc.B @ loc.v[:m]
        state = TangentState(q, u)
        s1 = accel(q, u, t)
        if (k + 1) % record_every == 0 or k == nsteps - 1:
            try:
                record(t, state, s1)
            except (ValueError, ArithmeticError, EvaluationError) as err:
                raise IntegrationError(str(err), t) from err

    mon_arr = {name: np.array(vals) for name, vals in mon.items()}
    return Trajectory(n, m, np.array(ts), np.array(qs), np.array(us), np.array(vs), np.array(Es),
                      np.array(lams).reshape(len(ts), n - m), mon_arr)


__all__ += ["OffConstraintError"]
