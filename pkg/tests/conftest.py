"""Shared fixture builders for the test suite."""

import numpy as np

from convexflows import (
    EdgeIncidence,
    Hyperedge,
    LinearNonnegObjective,
    MaxFlowObjective,
    OpfQuadraticObjective,
    ProblemInstance,
    QuadraticPenalty,
    TwoAssetGeometricPool,
    GeometricMeanPool,
    lossless_edge,
)
from convexflows.io_cli import gen_cfmm, gen_maxflow, gen_opf, instance_from_dict


def path_maxflow_instance(caps=(1.0, 2.0)):
    """Chain 0 -> 1 -> ... -> len(caps) with lossless capacities."""
    n = len(caps) + 1
    edges = [
        Hyperedge(EdgeIncidence((i, i + 1)), lossless_edge(cap))
        for i, cap in enumerate(caps)
    ]
    return ProblemInstance(n=n, edges=edges, net_objective=MaxFlowObjective(n))


def two_pool_arbitrage_instance():
    """Two-asset arbitrage between pools quoting different prices."""
    edges = [
        Hyperedge(EdgeIncidence((0, 1)), TwoAssetGeometricPool([100.0, 100.0], 0.5, 1.0)),
        Hyperedge(EdgeIncidence((0, 1)), TwoAssetGeometricPool([80.0, 120.0], 0.5, 1.0)),
    ]
    return ProblemInstance(
        n=2, edges=edges, net_objective=LinearNonnegObjective([1.0, 1.0])
    )


def three_asset_pool_instance():
    """One three-asset pool serving quadratic demands."""
    pool = GeometricMeanPool([100.0, 150.0, 200.0], [1 / 3, 1 / 3, 1 / 3], 1.0)
    edges = [Hyperedge(EdgeIncidence((0, 1, 2)), pool)]
    return ProblemInstance(
        n=3, edges=edges, net_objective=OpfQuadraticObjective([0.5, 1.0, 2.0])
    )


def opf_instance(n=10, seed=0):
    return instance_from_dict(gen_opf(n, seed))


def cfmm_instance(m=10, seed=0, edge_penalties=False):
    return instance_from_dict(gen_cfmm(m, seed, edge_penalties=edge_penalties))


def maxflow_instance(n=8, density=0.35, seed=0):
    return instance_from_dict(gen_maxflow(n, density, seed))


def maxflow_arcs(instance):
    """(u, v, cap) arc list of a lossless max-flow instance."""
    arcs = []
    for edge in instance.edges:
        u, v = edge.incidence.nodes
        arcs.append((u, v, edge.oracle.gain.capacity))
    return arcs


def quadratic_penalty_on(instance):
    """Copy of the instance with a quadratic penalty on every edge."""
    edges = [
        Hyperedge(e.incidence, e.oracle, QuadraticPenalty(e.incidence.dim))
        for e in instance.edges
    ]
    return ProblemInstance(n=instance.n, edges=edges, net_objective=instance.net_objective)


def random_prices(rng, dim, lo=0.05, hi=3.0):
    return rng.uniform(lo, hi, size=dim)


def interior_dual_point(instance, rng):
    """Random dual point strictly inside the domain (off the bounds)."""
    from convexflows.solver import DualPoint

    lower = np.maximum(np.asarray(instance.net_objective.lower_bounds(), float), 0.0)
    nu = lower + rng.uniform(0.25, 1.75, size=instance.n)
    for j, value in instance.net_objective.fixed_coordinates():
        nu[j] = value
    etas = []
    for edge in instance.edges:
        base = edge.incidence.gather(nu)
        if edge.utility is None:
            etas.append(base)
        else:
            etas.append(base + rng.uniform(0.05, 0.9, size=edge.incidence.dim))
    return DualPoint(node_prices=nu, edge_prices=etas)
