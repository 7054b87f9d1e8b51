"""Charts, tangent states, vector fields on Q and distribution diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from . import expr as ex

__all__ = [
    "Chart",
    "ChartPoint",
    "TangentState",
    "VectorFieldQ",
    "DistributionD",
    "FrameQ",
    "SingularFrameError",
    "RankError",
    "lie_bracket",
    "bracket_field",
    "quasi_velocities",
    "reconstruct_velocity",
    "numerical_rank",
    "derived_flag",
    "box_samples",
    "RANK_RTOL",
]

RANK_RTOL = 1e-9
FRAME_COND_MAX = 1e12


class SingularFrameError(ValueError):
    pass


class RankError(ValueError):
    """A distribution basis that is not of full rank somewhere in its box."""


class Chart:
    """Symbol table of a single global chart.

    Coordinates are canonically ``q_1..q_n`` and velocities ``u_1..u_n``.
    User names are aliases: a coordinate ``x`` (or ``q_x``) is paired with
    the velocity ``u_x``, and ``q_x`` is accepted for ``x``.
    """

    def __init__(self, n: int, names: Sequence[str] | None = None):
        if n < 1:
            raise ValueError("dimension must be positive")
        self.n = n
        canonical_q = [f"q_{i + 1}" for i in range(n)]
        canonical_u = [f"u_{i + 1}" for i in range(n)]
        names = list(names) if names is not None else canonical_q
        if len(names) != n:
            raise ValueError(f"expected {n} coordinate names, got {len(names)}")
        self.names = names
        alias: dict[str, str] = {}

        def bind(name: str, target: str):
            if name in alias and alias[name] != target:
                raise ValueError(f"coordinate name {name!r} is ambiguous")
            alias[name] = target

        for i in range(n):
            bind(canonical_q[i], canonical_q[i])
            bind(canonical_u[i], canonical_u[i])
        for i, name in enumerate(names):
            stem = name[2:] if name.startswith("q_") else name
            bind(name, canonical_q[i])
            bind(f"q_{stem}", canonical_q[i])
            bind(f"u_{stem}", canonical_u[i])
        self.alias = alias
        self.q_names = canonical_q
        self.u_names = canonical_u

    @property
    def coordinate_symbols(self) -> list[str]:
        return [k for k, v in self.alias.items() if v.startswith("q_")]

    @property
    def all_symbols(self) -> list[str]:
        return list(self.alias)

    def parse(self, source: str, velocities: bool = True) -> ex.Node:
        """Parse user text and rewrite every name to its canonical form."""
        symbols = self.all_symbols if velocities else self.coordinate_symbols
        node = ex.parse(source, symbols)
        return ex.rename(node, self.alias)

    def __eq__(self, other):
        return isinstance(other, Chart) and self.n == other.n and self.names == other.names

    def __hash__(self):
        return hash((self.n, tuple(self.names)))

    def __repr__(self):
        return f"Chart(n={self.n}, names={self.names})"


def _finite_vector(x, n: int | None, label: str) -> np.ndarray:
    arr = np.array(x, dtype=float).reshape(-1)
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{label} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{label} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ChartPoint:
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _finite_vector(self.q, None, "q"))

    @property
    def n(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True, eq=False)
class TangentState:
    """A point (q, u) of TQ; ``q`` is the base point, ``u`` the velocity."""

    q: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        q = _finite_vector(self.q, None, "q")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "u", _finite_vector(self.u, q.shape[0], "u"))

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def base(self) -> ChartPoint:
        return ChartPoint(self.q)

    def values(self) -> list[float]:
        return self.q.tolist() + self.u.tolist()


class VectorFieldQ:
    """Vector field on Q with components given by coordinate-only expressions."""

    def __init__(self, chart: Chart, components: Sequence[ex.Node | str | float]):
        if len(components) != chart.n:
            raise ValueError(f"expected {chart.n} components, got {len(components)}")
        nodes = []
        for c in components:
            if isinstance(c, str):
                c = chart.parse(c, velocities=False)
            elif not isinstance(c, ex.Node):
                c = ex.Const(float(c))
            bad = ex.variables(c) - set(chart.q_names)
            if bad:
                raise ValueError(f"vector field components may only depend on q, got {sorted(bad)}")
            nodes.append(c)
        self.chart = chart
        self.components = tuple(nodes)

    @property
    def n(self) -> int:
        return self.chart.n

    @cached_property
    def _value_fn(self):
        return ex.compile_many(self.components, self.chart.q_names)

    @cached_property
    def jacobian_nodes(self) -> tuple[tuple[ex.Node, ...], ...]:
        """``J[i][j] = d X^i / d q^j`` as expressions."""
        return tuple(
            tuple(ex.diff(c, qj) for qj in self.chart.q_names) for c in self.components
        )

    @cached_property
    def _jac_fn(self):
        flat = [d for row in self.jacobian_nodes for d in row]
        return ex.compile_many(flat, self.chart.q_names)

    def __call__(self, q) -> np.ndarray:
        q = _as_q(q)
        return np.array(self._value_fn(*q.tolist()))

    def jacobian(self, q) -> np.ndarray:
        q = _as_q(q)
        n = self.n
        return np.array(self._jac_fn(*q.tolist())).reshape(n, n)

    def apply(self, f: ex.Node) -> ex.Node:
        """The function X(f) = X^i df/dq^i as an expression."""
        out: ex.Node = ex.ZERO
        for c, qi in zip(self.components, self.chart.q_names):
            out = ex.add(out, ex.mul(c, ex.diff(f, qi)))
        return out

    def __add__(self, other: "VectorFieldQ") -> "VectorFieldQ":
        return VectorFieldQ(self.chart, [ex.add(a, b) for a, b in zip(self.components, other.components)])

    def scaled(self, factor: ex.Node | float) -> "VectorFieldQ":
        factor = ex._wrap(factor)
        return VectorFieldQ(self.chart, [ex.mul(factor, c) for c in self.components])

    @classmethod
    def constant(cls, chart: Chart, values: Sequence[float]) -> "VectorFieldQ":
        return cls(chart, [ex.Const(float(v)) for v in values])

    def __repr__(self):
        return f"VectorFieldQ({[ex.to_source(c) for c in self.components]})"


def _as_q(q) -> np.ndarray:
    if isinstance(q, (ChartPoint, TangentState)):
        return q.q
    return np.asarray(q, dtype=float)


def bracket_field(X: VectorFieldQ, Y: VectorFieldQ) -> VectorFieldQ:
    """[X, Y] as a symbolic vector field: X(Y^i) - Y(X^i)."""
    comps = [ex.sub(X.apply(yi), Y.apply(xi)) for xi, yi in zip(X.components, Y.components)]
    return VectorFieldQ(X.chart, comps)


def lie_bracket(X: VectorFieldQ, Y: VectorFieldQ, q) -> np.ndarray:
    """[X,Y]^i = X^j dY^i/dq^j - Y^j dX^i/dq^j at q, from exact Jacobians."""
    if X.chart != Y.chart:
        raise ValueError("vector fields live on different charts")
    q = _as_q(q)
    return Y.jacobian(q) @ X(q) - X.jacobian(q) @ Y(q)


def numerical_rank(matrix: np.ndarray, rtol: float = RANK_RTOL) -> int:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.size == 0:
        return 0
    s = np.linalg.svd(matrix, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def box_samples(lo, hi, count: int, seed: int) -> np.ndarray:
    """Scrambled Halton points in the box [lo, hi]; deterministic per seed."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    sampler = qmc.Halton(d=lo.shape[0], scramble=True, seed=np.random.default_rng(seed))
    pts = sampler.random(count)
    return qmc.scale(pts, lo, hi) if lo.shape[0] else pts


class DistributionD:
    """Constant-rank distribution spanned by ``m`` vector fields on Q."""

    def __init__(self, basis: Sequence[VectorFieldQ], domain: tuple[Sequence[float], Sequence[float]],
                 check_samples: int = 256, seed: int = 0):
        basis = list(basis)
        if not basis:
            raise ValueError("distribution basis must be nonempty")
        chart = basis[0].chart
        if any(b.chart != chart for b in basis):
            raise ValueError("basis fields live on different charts")
        if len(basis) > chart.n:
            raise ValueError("more basis fields than dimensions")
        self.chart = chart
        self.basis = tuple(basis)
        lo, hi = (np.asarray(d, dtype=float) for d in domain)
        if lo.shape != (chart.n,) or hi.shape != (chart.n,) or np.any(lo > hi):
            raise ValueError("domain box does not match the chart dimension")
        self.domain = (lo, hi)
        if check_samples:
            for q in box_samples(lo, hi, check_samples, seed):
                r = numerical_rank(self.matrix(q))
                if r != self.m:
                    raise RankError(f"basis has rank {r} < {self.m} at q = {q.tolist()}")

    @property
    def n(self) -> int:
        return self.chart.n

    @property
    def m(self) -> int:
        return len(self.basis)

    def matrix(self, q) -> np.ndarray:
        """n x m matrix whose columns are the basis vectors at q."""
        return np.column_stack([X(q) for X in self.basis])

    def jacobians(self, q) -> np.ndarray:
        """Array ``J[alpha, i, j] = d X_alpha^i / d q^j``."""
        return np.stack([X.jacobian(q) for X in self.basis])


class FrameQ:
    """n vector fields on Q; the first ``m`` span a distribution."""

    def __init__(self, fields: Sequence[VectorFieldQ], m: int | None = None):
        fields = list(fields)
        if not fields or len(fields) != fields[0].chart.n:
            raise ValueError("a frame needs exactly n vector fields")
        self.fields = tuple(fields)
        self.m = len(fields) if m is None else m

    @property
    def n(self) -> int:
        return len(self.fields)

    def matrix(self, q) -> np.ndarray:
        return np.column_stack([X(q) for X in self.fields])


def _frame_matrix(frame, q) -> np.ndarray:
    if isinstance(frame, FrameQ):
        return frame.matrix(q)
    return np.asarray(frame, dtype=float)


def quasi_velocities(frame, state: TangentState) -> np.ndarray:
    """Solve u = v^i X_i(q) for the quasi-velocities v."""
    F = _frame_matrix(frame, state.q)
    if np.linalg.cond(F) > FRAME_COND_MAX:
        raise SingularFrameError(f"frame is singular at q = {state.q.tolist()}")
    return np.linalg.solve(F, state.u)


def reconstruct_velocity(frame, q, v) -> np.ndarray:
    return _frame_matrix(frame, _as_q(q)) @ np.asarray(v, dtype=float)


def derived_flag(D: DistributionD, q, max_depth: int = 8, rtol: float = RANK_RTOL) -> list[int]:
    """Ranks of D, D^1 = D + [D,D], D^2 = D^1 + [D^1,D^1], ... at q.

    Stops once the rank reaches n or stops growing.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    q = _as_q(q)
    n = D.n
    fields = list(D.basis)
    ranks = [numerical_rank(np.column_stack([X(q) for X in fields]), rtol)]
    depth = 0
    while ranks[-1] < n and depth < max_depth:
        depth += 1
        fields = _independent(fields, q, rtol)
        new = list(fields)
        for i in range(len(fields)):
            for j in range(i + 1, len(fields)):
                new.append(bracket_field(fields[i], fields[j]))
        rank = numerical_rank(np.column_stack([X(q) for X in new]), rtol)
        ranks.append(rank)
        fields = new
        if rank == ranks[-2]:
            break
    return ranks


def _independent(fields: list[VectorFieldQ], q, rtol: float) -> list[VectorFieldQ]:
    """Greedy subset of fields whose values at q are linearly independent."""
    chosen: list[VectorFieldQ] = []
    cols: list[np.ndarray] = []
    for X in fields:
        trial = np.column_stack(cols + [X(q)])
        if numerical_rank(trial, rtol) == len(cols) + 1:
            chosen.append(X)
            cols.append(X(q))
    return chosen
