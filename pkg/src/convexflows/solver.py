"""Dual assembly, orthant transformation, and the solve drivers.

The dual of the flow problem minimizes

    g(nu, eta) = conj_U(nu) + sum_i [ conj_V_i(eta_i - A_i^T nu) + support_i(eta_i) ]

over node prices ``nu >= 0`` and local edge prices ``eta_i >= A_i^T nu``.
The lower-triangular change of variables ``eta_i -> eta_i - A_i^T nu``
maps the feasible set onto the nonnegative orthant, where a
limited-memory quasi-Newton driver with bound projection runs.  Edges
without a utility term force ``eta_i = A_i^T nu`` (their transformed
block is pinned at zero), so zero-utility instances reduce to a problem
in ``nu`` alone, which :func:`solve_zero_edge` exploits directly.

Gradients assemble from the subproblem maximizers: the transformed
node-price gradient is the net-flow mismatch ``sum_i A_i x_arb_i - y``,
so the driver's convergence literally is primal feasibility.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Hyperedge, PrimalPoint, ProblemInstance, assemble_net_flow, check_feasibility, primal_objective
from .edges.base import ArbitrageResult, UnattainedSupremumError, UnboundedEdgeError
from .qn import InfeasibleStartError, QNConfig, minimize_bound_lbfgs

__all__ = [
    "DualPoint",
    "SolverConfig",
    "TraceRow",
    "ConvergenceTrace",
    "EdgeSolution",
    "DualEval",
    "SolveResult",
    "UnboundedDualError",
    "InfeasibleStartError",
    "transform",
    "untransform",
    "eval_dual",
    "solve_dual",
    "solve_zero_edge",
    "solve",
    "duality_gap",
]

_ZERO_UTILITY_PRICE_TOL = 1e-9


class UnboundedDualError(RuntimeError):
    """An edge subproblem is unbounded; the instance is likely unbounded."""


@dataclass
class DualPoint:
    """Node prices plus one local price vector per edge."""

    node_prices: np.ndarray
    edge_prices: list[np.ndarray]


@dataclass
class SolverConfig:
    """Driver parameters; every field must be positive.

    ``workers`` of None reads CONVEXFLOWS_THREADS (default 1).  The
    ``snap_polish`` flag lets the driver evaluate rounded copies of the
    final iterate (integers and threshold cuts) and keep any that are at
    least as good, which lands exactly on the vertex solutions of
    combinatorial instances.
    """

    grad_tol: float = 1e-7
    max_iter: int = 1000
    memory: int = 10
    shrink: float = 0.5
    workers: int | None = None
    snap_polish: bool = True
    feas_tol: float = 1e-6

    def resolved_workers(self) -> int:
        if self.workers is not None:
            return max(1, int(self.workers))
        return max(1, int(os.environ.get("CONVEXFLOWS_THREADS", "1")))


@dataclass
class TraceRow:
    iteration: int
    value: float
    pg_norm: float
    primal_residual: float
    gap: float
    time_s: float
    nonsmooth: bool = False


class ConvergenceTrace:
    """Per-iteration solve record; exportable as CSV."""

    columns = ("iter", "g", "pg_norm", "primal_residual", "gap", "time_s")

    def __init__(self) -> None:
        self.rows: list[TraceRow] = []

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def best_values(self) -> np.ndarray:
        """Best-so-far objective along the iterations."""
        return np.minimum.accumulate(np.array([r.value for r in self.rows]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(self.columns)
            for r in self.rows:
                writer.writerow(
                    [r.iteration, repr(r.value), repr(r.pg_norm), repr(r.primal_residual), repr(r.gap), repr(r.time_s)]
                )


@dataclass
class EdgeSolution:
    """Per-edge subproblem outcome at one dual point."""

    support_value: float
    flow_arbitrage: np.ndarray
    flow_utility: np.ndarray
    non_unique: bool


@dataclass
class DualEval:
    """Dual value, gradients, and all subproblem maximizers at a point."""

    value: float
    grad_nodes: np.ndarray | None
    grad_edges: list[np.ndarray] | None
    grad_nodes_orthant: np.ndarray | None
    y_star: np.ndarray | None
    y_non_unique: bool
    edges: list[EdgeSolution] | None
    net_flow_arbitrage: np.ndarray | None
    primal_residual: float
    nonsmooth: bool

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


def _infinite_eval() -> DualEval:
    return DualEval(
        value=math.inf,
        grad_nodes=None,
        grad_edges=None,
        grad_nodes_orthant=None,
        y_star=None,
        y_non_unique=False,
        edges=None,
        net_flow_arbitrage=None,
        primal_residual=math.nan,
        nonsmooth=False,
    )


def transform(instance: ProblemInstance, point: DualPoint) -> np.ndarray:
    """Stack ``(nu, eta_i - A_i^T nu, ...)``, mapping duals onto the orthant.

    The change of variables is lower triangular with unit diagonal, so it
    is its own cheap inverse (see :func:`untransform`); no matrix is ever
    materialized.
    """
    nu = np.asarray(point.node_prices, dtype=float)
    parts = [nu]
    for edge, eta in zip(instance.edges, point.edge_prices):
        parts.append(np.asarray(eta, dtype=float) - edge.incidence.gather(nu))
    return np.concatenate(parts)


def untransform(instance: ProblemInstance, stacked: np.ndarray) -> DualPoint:
    """Inverse of :func:`transform`."""
    stacked = np.asarray(stacked, dtype=float)
    nu = stacked[: instance.n]
    etas = []
    offset = instance.n
    for edge in instance.edges:
        d = edge.incidence.dim
        etas.append(stacked[offset : offset + d] + edge.incidence.gather(nu))
        offset += d
    if offset != len(stacked):
        raise ValueError(f"stacked vector of length {len(stacked)}, expected {offset}")
    return DualPoint(node_prices=nu, edge_prices=etas)


def _evaluate_edges(
    edges: list[Hyperedge],
    etas: list[np.ndarray],
    executor: ThreadPoolExecutor | None,
) -> list[ArbitrageResult] | None:
    """Evaluate all edges; None signals degenerate boundary prices."""
    try:
        if executor is None:
            return [edge.oracle.evaluate(eta) for edge, eta in zip(edges, etas)]
        return list(executor.map(lambda pair: pair[0].oracle.evaluate(pair[1]), zip(edges, etas)))
    except UnattainedSupremumError:
        return None
    except UnboundedEdgeError as exc:
        raise UnboundedDualError(f"unbounded edge subproblem: {exc}") from exc


def eval_dual(
    instance: ProblemInstance,
    point: DualPoint,
    *,
    executor: ThreadPoolExecutor | None = None,
) -> DualEval:
    """Evaluate the dual function, its gradient, and all maximizers.

    Infinite conjugate values yield an infinite dual value with no
    gradient.  Edges without a utility term require ``eta_i = A_i^T nu``;
    any violation is likewise an infinite value.

    Raises:
        UnboundedDualError: An edge's price subproblem is unbounded.
    """
    nu = np.asarray(point.node_prices, dtype=float)
    conj_u = instance.net_objective.conj(nu)
    if not conj_u.finite:
        return _infinite_eval()

    etas = [np.asarray(eta, dtype=float) for eta in point.edge_prices]
    utility_flows: list[np.ndarray] = []
    value = conj_u.value
    nonsmooth = conj_u.non_unique
    for edge, eta in zip(instance.edges, etas):
        xi = eta - edge.incidence.gather(nu)
        if edge.utility is None:
            if np.max(np.abs(xi), initial=0.0) > _ZERO_UTILITY_PRICE_TOL * (
                1.0 + float(np.max(np.abs(eta)))
            ):
                return _infinite_eval()
            utility_flows.append(None)
        else:
            conj_v = edge.utility.conj(xi)
            if not conj_v.finite:
                return _infinite_eval()
            value += conj_v.value
            nonsmooth = nonsmooth or conj_v.non_unique
            utility_flows.append(conj_v.maximizer)

    arb = _evaluate_edges(instance.edges, etas, executor)
    if arb is None:
        return _infinite_eval()

    solutions: list[EdgeSolution] = []
    grad_edges: list[np.ndarray] = []
    y_arb = np.zeros(instance.n)
    grad_nodes = np.zeros(instance.n)
    for edge, eta, res, x_util in zip(instance.edges, etas, arb, utility_flows):
        value += res.value
        nonsmooth = nonsmooth or res.non_unique
        x_util = res.flow if x_util is None else x_util
        solutions.append(
            EdgeSolution(
                support_value=res.value,
                flow_arbitrage=res.flow,
                flow_utility=x_util,
                non_unique=res.non_unique,
            )
        )
        grad_edges.append(res.flow - x_util)
        edge.incidence.scatter_add(res.flow, y_arb)
        edge.incidence.scatter_add(x_util, grad_nodes)

    y_star = conj_u.maximizer
    grad_nodes -= y_star
    grad_orthant = y_arb - y_star
    if conj_u.non_unique:
        residual = float(instance.net_objective.domain_violation(y_arb))
    else:
        residual = float(np.max(np.abs(y_star - y_arb)))
    return DualEval(
        value=float(value),
        grad_nodes=grad_nodes,
        grad_edges=grad_edges,
        grad_nodes_orthant=grad_orthant,
        y_star=y_star,
        y_non_unique=conj_u.non_unique,
        edges=solutions,
        net_flow_arbitrage=y_arb,
        primal_residual=residual,
        nonsmooth=nonsmooth,
    )


class _ZeroEdgeEval:
    """Specialized dual evaluation for instances with no edge utilities.

    Only node prices are variables; local prices are the gathered node
    prices and the gradient is the net arbitrage flow minus the objective
    maximizer.  The light path skips the per-edge solution objects, which
    the driver's line search never looks at.
    """

    def __init__(self, instance: ProblemInstance, executor: ThreadPoolExecutor | None = None):
        self.instance = instance
        self.executor = executor
        # Scalar fast path for two-node oracles; array path for the rest.
        self._pair_edges = []
        self._array_edges = []
        for pos, e in enumerate(instance.edges):
            idx = e.incidence._index
            if executor is None and e.incidence.dim == 2 and hasattr(e.oracle, "evaluate_pair"):
                self._pair_edges.append((pos, int(idx[0]), int(idx[1]), e.oracle.evaluate_pair))
            else:
                self._array_edges.append((pos, idx, e.oracle))

    def light(self, nu: np.ndarray):
        """Returns ``(value, results, conj_u, grad, y_arb, nonsmooth)``.

        ``results`` holds per-edge ``(value, flow_in, flow_out, flag)``
        tuples for scalar edges and ArbitrageResults otherwise, in edge
        order.
        """
        instance = self.instance
        conj_u = instance.net_objective.conj(nu)
        if not conj_u.finite:
            return math.inf, None, conj_u, None, None, False
        value = conj_u.value
        nonsmooth = conj_u.non_unique
        y_arb = np.zeros(instance.n)
        results = [None] * instance.m
        try:
            for pos, i0, i1, evaluate_pair in self._pair_edges:
                out = evaluate_pair(nu[i0], nu[i1])
                value += out[0]
                y_arb[i0] += out[1]
                y_arb[i1] += out[2]
                nonsmooth = nonsmooth or out[3]
                results[pos] = out
            if self._array_edges:
                if self.executor is None:
                    evaluated = [
                        (pos, oracle.evaluate(nu[idx])) for pos, idx, oracle in self._array_edges
                    ]
                else:
                    evaluated = list(
                        self.executor.map(
                            lambda item: (item[0], item[2].evaluate(nu[item[1]])),
                            self._array_edges,
                        )
                    )
                for (_, idx, _), (pos, res) in zip(self._array_edges, evaluated):
                    value += res.value
                    y_arb[idx] += res.flow
                    nonsmooth = nonsmooth or res.non_unique
                    results[pos] = res
        except UnattainedSupremumError:
            # Degenerate boundary prices: treat the point as infinitely
            # bad so the line search backs into the interior.
            return math.inf, None, conj_u, None, None, False
        except UnboundedEdgeError as exc:
            raise UnboundedDualError(f"unbounded edge subproblem: {exc}") from exc
        grad = y_arb - conj_u.maximizer
        return float(value), results, conj_u, grad, y_arb, nonsmooth

    def __call__(self, nu: np.ndarray) -> DualEval:
        return self.assemble(self.light(nu))

    def residual(self, conj_u, y_arb) -> float:
        if conj_u.non_unique:
            return float(self.instance.net_objective.domain_violation(y_arb))
        return float(np.max(np.abs(conj_u.maximizer - y_arb)))

    def assemble(self, raw) -> DualEval:
        value, results, conj_u, grad, y_arb, nonsmooth = raw
        if not math.isfinite(value):
            return _infinite_eval()
        instance = self.instance
        solutions = []
        for res in results:
            if isinstance(res, tuple):
                flow = np.array([res[1], res[2]])
                solutions.append(
                    EdgeSolution(
                        support_value=res[0],
                        flow_arbitrage=flow,
                        flow_utility=flow,
                        non_unique=res[3],
                    )
                )
            else:
                solutions.append(
                    EdgeSolution(
                        support_value=res.value,
                        flow_arbitrage=res.flow,
                        flow_utility=res.flow,
                        non_unique=res.non_unique,
                    )
                )
        return DualEval(
            value=value,
            grad_nodes=grad,
            grad_edges=[np.zeros(e.incidence.dim) for e in instance.edges],
            grad_nodes_orthant=grad,
            y_star=conj_u.maximizer,
            y_non_unique=conj_u.non_unique,
            edges=solutions,
            net_flow_arbitrage=y_arb,
            primal_residual=self.residual(conj_u, y_arb),
            nonsmooth=nonsmooth,
        )


class _FullDualEval:
    """Light/full dual evaluation with edge-utility terms.

    Mirrors :class:`_ZeroEdgeEval` for the general problem: the light
    path returns value and gradient pieces with minimal allocation, the
    cached raw results assemble into a :class:`DualEval` on demand.
    """

    def __init__(self, program: "DualProgram"):
        self.program = program
        self.instance = program.instance

    def light(self, x: np.ndarray):
        """Returns ``(value, results, conj_u, grad_vec, y_arb, nonsmooth)``.

        ``results`` holds ``(support_value, flow, flow_utility,
        non_unique)`` per edge in order; ``grad_vec`` is the reduced
        gradient (transformed node block plus utility-edge blocks).
        """
        program = self.program
        instance = self.instance
        nu = program.node_prices(x)
        conj_u = instance.net_objective.conj(nu)
        if not conj_u.finite:
            return math.inf, None, conj_u, None, None, False
        value = conj_u.value
        nonsmooth = conj_u.non_unique
        y_arb = np.zeros(instance.n)
        results = [None] * instance.m
        grad_blocks = [None] * len(program.utility_edges)
        offsets = program.utility_offsets
        try:
            for slot, i in enumerate(program.utility_edges):
                edge = instance.edges[i]
                idx = edge.incidence._index
                xi = x[offsets[slot] : offsets[slot] + edge.incidence.dim]
                conj_v = edge.utility.conj(xi)
                if not conj_v.finite:
                    return math.inf, None, conj_u, None, None, False
                value += conj_v.value
                nonsmooth = nonsmooth or conj_v.non_unique
                eta = nu[idx] + xi
                res = edge.oracle.evaluate(eta)
                value += res.value
                nonsmooth = nonsmooth or res.non_unique
                y_arb[idx] += res.flow
                results[i] = (res.value, res.flow, conj_v.maximizer, res.non_unique)
                grad_blocks[slot] = res.flow - conj_v.maximizer
            plain = set(program.utility_edges)
            for i, edge in enumerate(instance.edges):
                if i in plain:
                    continue
                idx = edge.incidence._index
                if edge.incidence.dim == 2 and hasattr(edge.oracle, "evaluate_pair"):
                    out = edge.oracle.evaluate_pair(nu[idx[0]], nu[idx[1]])
                    value += out[0]
                    y_arb[idx[0]] += out[1]
                    y_arb[idx[1]] += out[2]
                    nonsmooth = nonsmooth or out[3]
                    results[i] = out
                else:
                    res = edge.oracle.evaluate(nu[idx])
                    value += res.value
                    y_arb[idx] += res.flow
                    nonsmooth = nonsmooth or res.non_unique
                    results[i] = res
        except UnattainedSupremumError:
            return math.inf, None, conj_u, None, None, False
        except UnboundedEdgeError as exc:
            raise UnboundedDualError(f"unbounded edge subproblem: {exc}") from exc
        grad_nodes = (y_arb - conj_u.maximizer)[program.free_nodes]
        grad_vec = np.concatenate([grad_nodes] + grad_blocks) if grad_blocks else grad_nodes
        return float(value), results, conj_u, grad_vec, y_arb, nonsmooth

    def residual(self, conj_u, y_arb) -> float:
        if conj_u.non_unique:
            return float(self.instance.net_objective.domain_violation(y_arb))
        return float(np.max(np.abs(conj_u.maximizer - y_arb)))

    def assemble(self, raw) -> DualEval:
        value, results, conj_u, grad_vec, y_arb, nonsmooth = raw
        if not math.isfinite(value):
            return _infinite_eval()
        instance = self.instance
        solutions = []
        grad_edges = []
        for res in results:
            if isinstance(res, tuple) and len(res) == 4 and isinstance(res[1], np.ndarray):
                support, flow, x_util, flag = res
            elif isinstance(res, tuple):
                support = res[0]
                flow = np.array([res[1], res[2]])
                x_util = flow
                flag = res[3]
            else:
                support, flow, x_util, flag = res.value, res.flow, res.flow, res.non_unique
            solutions.append(
                EdgeSolution(
                    support_value=support,
                    flow_arbitrage=flow,
                    flow_utility=x_util,
                    non_unique=flag,
                )
            )
            grad_edges.append(flow - x_util)
        grad_nodes = np.zeros(instance.n)
        for edge, sol in zip(instance.edges, solutions):
            edge.incidence.scatter_add(sol.flow_utility, grad_nodes)
        grad_nodes -= conj_u.maximizer
        return DualEval(
            value=value,
            grad_nodes=grad_nodes,
            grad_edges=grad_edges,
            grad_nodes_orthant=y_arb - conj_u.maximizer,
            y_star=conj_u.maximizer,
            y_non_unique=conj_u.non_unique,
            edges=solutions,
            net_flow_arbitrage=y_arb,
            primal_residual=self.residual(conj_u, y_arb),
            nonsmooth=nonsmooth,
        )


class DualProgram:
    """Reduced optimization vector for the dual problem.

    Node-price coordinates pinned by the objective are substituted out;
    transformed price blocks of utility-free edges are identically zero
    and never enter the vector.  What remains is exactly the variable
    set the bound-constrained driver sees.
    """

    def __init__(self, instance: ProblemInstance, *, zero_edge: bool = False, executor=None):
        if zero_edge and instance.has_edge_utilities():
            raise ValueError("zero-edge path requires an instance without edge utilities")
        self.instance = instance
        self.zero_edge = zero_edge
        objective = instance.net_objective
        fixed = dict(objective.fixed_coordinates())
        for j, val in fixed.items():
            if j < 0 or j >= instance.n:
                raise ValueError(f"fixed coordinate {j} out of range")
            if val < 0:
                raise ValueError("fixed prices must be nonnegative")
        self.fixed = fixed
        self.free_nodes = np.array([j for j in range(instance.n) if j not in fixed], dtype=int)
        self.utility_edges = (
            []
            if zero_edge
            else [i for i, e in enumerate(instance.edges) if e.utility is not None]
        )
        self._zero_eval = _ZeroEdgeEval(instance, executor) if zero_edge else None
        self.executor = executor
        offset = len(self.free_nodes)
        self.utility_offsets = []
        for i in self.utility_edges:
            self.utility_offsets.append(offset)
            offset += instance.edges[i].incidence.dim
        self._full_eval = None if zero_edge else _FullDualEval(self)
        self.n_vars = len(self.free_nodes) + sum(
            instance.edges[i].incidence.dim for i in self.utility_edges
        )
        bounds = np.maximum(np.asarray(objective.lower_bounds(), dtype=float), 0.0)
        self.lower = np.concatenate(
            [bounds[self.free_nodes]]
            + [np.zeros(instance.edges[i].incidence.dim) for i in self.utility_edges]
        )
        self._last_x: np.ndarray | None = None
        self._last_eval: DualEval | None = None
        self._last_raw = None

    # -- vector packing -------------------------------------------------

    def node_prices(self, x: np.ndarray) -> np.ndarray:
        nu = np.zeros(self.instance.n)
        for j, val in self.fixed.items():
            nu[j] = val
        nu[self.free_nodes] = x[: len(self.free_nodes)]
        return nu

    def to_point(self, x: np.ndarray) -> DualPoint:
        nu = self.node_prices(x)
        etas = [edge.incidence.gather(nu).astype(float) for edge in self.instance.edges]
        offset = len(self.free_nodes)
        for i in self.utility_edges:
            d = self.instance.edges[i].incidence.dim
            etas[i] = etas[i] + x[offset : offset + d]
            offset += d
        return DualPoint(node_prices=nu, edge_prices=etas)

    def initial_vector(self, start: DualPoint | None) -> np.ndarray:
        if start is None:
            nu = np.asarray(self.instance.net_objective.initial_prices(), dtype=float)
            tilde = {i: np.zeros(self.instance.edges[i].incidence.dim) for i in self.utility_edges}
        else:
            nu = np.asarray(start.node_prices, dtype=float)
            tilde = {
                i: np.asarray(start.edge_prices[i], dtype=float)
                - self.instance.edges[i].incidence.gather(nu)
                for i in self.utility_edges
            }
        parts = [nu[self.free_nodes]] + [tilde[i] for i in self.utility_edges]
        x = np.concatenate(parts) if parts else np.zeros(0)
        return np.maximum(x, self.lower)

    # -- evaluation ------------------------------------------------------

    def _light_engine(self):
        return self._zero_eval if self.zero_edge else self._full_eval

    def evaluate(self, x: np.ndarray) -> DualEval:
        if self.executor is not None and not self.zero_edge:
            ev = eval_dual(self.instance, self.to_point(x), executor=self.executor)
        else:
            engine = self._light_engine()
            arg = self.node_prices(x) if self.zero_edge else x
            ev = engine.assemble(engine.light(arg))
        self._last_x = np.array(x, copy=True)
        self._last_eval = ev
        return ev

    def cached_eval(self, x: np.ndarray) -> DualEval:
        if self._last_x is not None and np.array_equal(self._last_x, x):
            if self._last_eval is None:
                self._last_eval = self._light_engine().assemble(self._last_raw)
            return self._last_eval
        return self.evaluate(x)

    def trace_info(self, x: np.ndarray):
        """(primal_residual, net_flow, nonsmooth) at a cached point, cheaply."""
        if (
            self._last_x is not None
            and np.array_equal(self._last_x, x)
            and self._last_eval is None
            and self._last_raw is not None
        ):
            value, _, conj_u, _, y_arb, nonsmooth = self._last_raw
            if not math.isfinite(value):
                return math.nan, None, False
            return self._light_engine().residual(conj_u, y_arb), y_arb, nonsmooth
        ev = self.cached_eval(x)
        if not ev.finite:
            return math.nan, None, False
        return ev.primal_residual, ev.net_flow_arbitrage, ev.nonsmooth

    def escape_directions(self, x: np.ndarray) -> list[np.ndarray]:
        """Structural stall-escape directions from the current tie graph.

        Nodes joined by an edge whose prices support a flat face must
        move together to preserve the tie; scaling such a component by a
        common factor preserves every price-ratio tie inside it, and a
        uniform shift covers the zero-price components.  Both signed
        variants are returned per component, in reduced coordinates.
        """
        nu = self.node_prices(x)
        parent = list(range(self.instance.n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        free_pos = {int(j): k for k, j in enumerate(self.free_nodes)}
        directions: list[np.ndarray] = []
        for edge in self.instance.edges:
            prices = edge.incidence.gather(nu)
            face = edge.oracle.supported_face(prices, 1e-7)
            if face is None:
                continue
            nodes = edge.incidence.nodes
            root = find(nodes[0])
            for j in nodes[1:]:
                parent[find(j)] = root
            # Single-tie moves: vary the output price and scale the input
            # price along with it, preserving this tie while letting the
            # neighbours' ties break.
            if len(nodes) == 2 and prices[1] > 0.0:
                d = np.zeros(len(x))
                if nodes[1] in free_pos:
                    d[free_pos[nodes[1]]] = 1.0
                if nodes[0] in free_pos:
                    d[free_pos[nodes[0]]] = prices[0] / prices[1]
                if np.any(d):
                    directions.append(d)
                    directions.append(-d)

        components: dict[int, list[int]] = {}
        for j in range(self.instance.n):
            components.setdefault(find(j), []).append(j)
        for group in components.values():
            if len(group) < 2:
                continue
            for values in (nu[group], np.ones(len(group))):
                d = np.zeros(len(x))
                for j, v in zip(group, values):
                    if j in free_pos:
                        d[free_pos[j]] = v
                if np.any(d):
                    directions.append(d)
                    directions.append(-d)
        return directions

    def value_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray | None]:
        if self.executor is not None and not self.zero_edge:
            ev = self.evaluate(x)
            if not ev.finite:
                return math.inf, None
            return ev.value, self.gradient_vector(ev)
        # Light path: skip building the per-edge solution objects; the
        # cache keeps the raw pieces so they can be assembled on demand.
        engine = self._light_engine()
        raw = engine.light(self.node_prices(x) if self.zero_edge else x)
        self._last_x = np.array(x, copy=True)
        self._last_eval = None
        self._last_raw = raw
        value, grad = raw[0], raw[3]
        if not math.isfinite(value):
            return math.inf, None
        return value, grad[self.free_nodes] if self.zero_edge else grad

    def gradient_vector(self, ev: DualEval) -> np.ndarray:
        parts = [ev.grad_nodes_orthant[self.free_nodes]]
        for i in self.utility_edges:
            parts.append(ev.grad_edges[i])
        return np.concatenate(parts)


@dataclass
class SolveResult:
    """Everything a solve produces.

    ``flows`` and the derived primal quantities are filled by
    :func:`solve`; the dual-only drivers leave them at the arbitrage
    maximizers without a recovery pass.
    """

    dual_point: DualPoint
    dual_value: float
    flows: list[np.ndarray]
    net_flow: np.ndarray
    primal_value: float
    duality_gap: float
    relative_gap: float
    trace: ConvergenceTrace
    iterations: int
    n_evals: int
    converged: bool
    status: str
    nonsmooth: bool
    recovery_residual: float = math.nan
    evaluation: DualEval | None = field(default=None, repr=False)


def _threshold_candidates(x: np.ndarray) -> list[np.ndarray]:
    """Indicator vectors of the clipped iterate's superlevel sets.

    For combinatorial instances the optimal dual is an indicator vector,
    and the best threshold cut of any point clipped into the unit box is
    at least as good as the point itself, so these candidates certify
    exact vertex optima from a merely near-optimal iterate.
    """
    z = np.clip(x, 0.0, 1.0)
    values = np.unique(z)
    if len(values) > 64 or len(values) < 2:
        return []
    candidates = [np.zeros_like(z)]  # threshold above the maximum
    seen = {candidates[0].tobytes()}
    for v in values:
        if v <= 0.0:
            continue
        pattern = (z >= v).astype(float)
        key = pattern.tobytes()
        if key not in seen:
            seen.add(key)
            candidates.append(pattern)
    return candidates


def _run_driver(
    program: DualProgram, start: DualPoint | None, config: SolverConfig
) -> tuple:
    instance = program.instance
    trace = ConvergenceTrace()
    t0 = time.perf_counter()

    def fun(x: np.ndarray):
        return program.value_and_grad(x)

    has_utilities = instance.has_edge_utilities()

    def record(iteration, x, f, grad, pg_norm):
        gap = math.nan
        if has_utilities:
            ev = program.cached_eval(x)
            residual, net, nonsmooth = ev.primal_residual, ev.net_flow_arbitrage, ev.nonsmooth
            if ev.finite:
                flows = [sol.flow_arbitrage for sol in ev.edges]
                p = primal_objective(
                    instance,
                    PrimalPoint(edge_flows=flows, net_flow=net),
                    tol=config.feas_tol,
                )
                if math.isfinite(p):
                    gap = f - p
        else:
            residual, net, nonsmooth = program.trace_info(x)
            if net is not None:
                p = instance.net_objective.evaluate_primal(net, tol=config.feas_tol)
                if math.isfinite(p):
                    gap = f - p
        trace.append(
            TraceRow(
                iteration=iteration,
                value=f,
                pg_norm=pg_norm,
                primal_residual=residual,
                gap=gap,
                time_s=time.perf_counter() - t0,
                nonsmooth=nonsmooth,
            )
        )

    x0 = program.initial_vector(start)
    qn_config = QNConfig(
        grad_tol=config.grad_tol,
        max_iter=config.max_iter,
        memory=config.memory,
        shrink=config.shrink,
    )
    candidates = [np.round, _threshold_candidates] if config.snap_polish else None
    result = minimize_bound_lbfgs(
        fun,
        x0,
        program.lower,
        qn_config,
        callback=record,
        polish_candidates=candidates,
        escape_directions=program.escape_directions,
    )
    final = program.cached_eval(result.x)
    return result, final, trace


def _dual_only_result(program: DualProgram, driver, final: DualEval, trace) -> SolveResult:
    point = program.to_point(driver.x)
    flows = [sol.flow_arbitrage for sol in final.edges]
    return SolveResult(
        dual_point=point,
        dual_value=final.value,
        flows=flows,
        net_flow=final.net_flow_arbitrage,
        primal_value=math.nan,
        duality_gap=math.nan,
        relative_gap=math.nan,
        trace=trace,
        iterations=driver.iterations,
        n_evals=driver.n_evals,
        converged=driver.converged,
        status=driver.status,
        nonsmooth=final.nonsmooth,
        evaluation=final,
    )


def _with_executor(config: SolverConfig, body):
    workers = config.resolved_workers()
    if workers <= 1:
        return body(None)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return body(executor)


def solve_dual(
    instance: ProblemInstance,
    start: DualPoint | None = None,
    config: SolverConfig | None = None,
) -> SolveResult:
    """Minimize the full dual over the transformed orthant.

    Works for any instance; utility-free edges contribute no variables.
    Returns a dual-focused result whose flows are the raw arbitrage
    maximizers (no recovery pass; see :func:`solve`).
    """
    config = config or SolverConfig()

    def body(executor):
        program = DualProgram(instance, zero_edge=False, executor=executor)
        driver, final, trace = _run_driver(program, start, config)
        return _dual_only_result(program, driver, final, trace)

    return _with_executor(config, body)


def solve_zero_edge(
    instance: ProblemInstance,
    start: DualPoint | None = None,
    config: SolverConfig | None = None,
) -> SolveResult:
    """Minimize the reduced dual in node prices only.

    Requires every edge utility to be absent; the variable count drops
    from ``n + sum(n_i)`` to ``n``, which is the common fast path.
    """
    config = config or SolverConfig()

    def body(executor):
        program = DualProgram(instance, zero_edge=True, executor=executor)
        driver, final, trace = _run_driver(program, start, config)
        return _dual_only_result(program, driver, final, trace)

    return _with_executor(config, body)


def duality_gap(
    instance: ProblemInstance,
    dual,
    primal: PrimalPoint,
    feas_tol: float = 1e-6,
) -> float:
    """Dual value minus primal objective; ``+inf`` for an infeasible primal.

    ``dual`` may be a precomputed dual value or a :class:`DualPoint` to
    evaluate.  Feasibility is judged at ``feas_tol`` (scaled residuals).
    """
    if isinstance(dual, DualPoint):
        dual_value = eval_dual(instance, dual).value
    else:
        dual_value = float(dual)
    report = check_feasibility(instance, primal, feas_tol)
    y_scale = 1.0 + float(np.max(np.abs(primal.net_flow)))
    if not report.ok or report.net_flow_residual > feas_tol * y_scale:
        return math.inf
    p = primal_objective(instance, primal, tol=feas_tol)
    if not math.isfinite(p):
        return math.inf
    return dual_value - p


def solve(
    instance: ProblemInstance,
    start: DualPoint | None = None,
    config: SolverConfig | None = None,
    recovery_tol: float = 1e-6,
) -> SolveResult:
    """Solve the instance end to end: dual minimization plus recovery.

    Zero-utility instances take the reduced path automatically.  After
    the dual solve, flows on edges whose maximizer is a supported segment
    are re-fit so their net flow matches the objective's target (see
    :mod:`convexflows.recovery`); strictly convex edges pass through.
    """
    from .recovery import recover_flows

    config = config or SolverConfig()
    if instance.has_edge_utilities():
        result = solve_dual(instance, start, config)
    else:
        result = solve_zero_edge(instance, start, config)

    flows, residual = recover_flows(
        instance, result.dual_point, result.evaluation, tol=recovery_tol
    )
    net = assemble_net_flow(flows, instance.incidences, instance.n)
    primal = PrimalPoint(edge_flows=flows, net_flow=net)
    p = primal_objective(instance, primal, tol=config.feas_tol)
    gap = result.dual_value - p if math.isfinite(p) else math.inf
    result.flows = flows
    result.net_flow = net
    result.primal_value = p
    result.duality_gap = gap
    result.relative_gap = gap / (1.0 + abs(result.dual_value))
    result.recovery_residual = residual
    return result
