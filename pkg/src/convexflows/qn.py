"""Bound-constrained limited-memory quasi-Newton minimizer.

Minimizes a convex function over coordinate lower bounds.  The search
direction comes from the standard two-loop recursion restricted to the
free coordinates; steps follow a projected weak-Wolfe line search.  The
objective may return ``+inf`` (an implicit constraint), which only ever
shrinks the step, so iterates stay inside the finite region.  Near the
float noise floor, steps are accepted on the curvature condition alone,
letting the gradients keep converging after objective differences stop
being measurable.  Nonsmooth objectives can jam the iteration at points
where no single coordinate descends; a stall then triggers exact line
searches along coordinated group directions (equal-value groups,
superlevel sets, or caller-supplied structure), and a final polish
evaluates rounded candidate points, keeping any that are at least as
good.

The objective callable returns ``(value, gradient)``; the gradient is
ignored (and may be None) when the value is infinite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = ["QNConfig", "QNResult", "InfeasibleStartError", "minimize_bound_lbfgs"]


class InfeasibleStartError(RuntimeError):
    """The starting point has an infinite objective value."""


@dataclass
class QNConfig:
    grad_tol: float = 1e-7
    max_iter: int = 1000
    memory: int = 10
    shrink: float = 0.5
    armijo: float = 1e-4
    curvature: float = 0.9
    max_backtracks: int = 70
    # Stop when the value improves by less than stall_tol (relative) over
    # a full window; catches nonsmooth plateaus the gradient test misses.
    stall_window: int = 40
    stall_tol: float = 1e-14
    # Coordinated group-move escapes allowed per run; keeps pathological
    # nonsmooth cases from consuming the whole iteration budget.
    max_escapes: int = 12

    def __post_init__(self) -> None:
        if (
            min(self.grad_tol, self.max_iter, self.memory, self.shrink, self.armijo) <= 0
            or not (0 < self.armijo < self.curvature < 1)
            or self.stall_window <= 0
            or self.stall_tol <= 0
        ):
            raise ValueError("driver parameters out of range")


@dataclass
class QNResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    pg_norm: float
    iterations: int
    n_evals: int
    converged: bool
    status: str


def _projected_gradient(x: np.ndarray, g: np.ndarray, lower: np.ndarray) -> np.ndarray:
    pg = g.copy()
    at_bound = x <= lower
    pg[at_bound] = np.minimum(g[at_bound], 0.0)
    return pg


def _equal_value_directions(x: np.ndarray) -> list[np.ndarray]:
    """Signed indicator directions of coordinate groups sharing a value.

    Polyhedral objectives (network duals in particular) jam quasi-Newton
    iterates at points where tied coordinates must move together; these
    group moves span the escape directions that elementwise steps miss.
    """
    order = np.argsort(x)
    xs = x[order]
    directions: list[np.ndarray] = []
    start = 0
    groups: list[np.ndarray] = []
    for k in range(1, len(xs) + 1):
        if k == len(xs) or xs[k] - xs[start] > 1e-8 * (1.0 + abs(xs[start])):
            groups.append(order[start:k])
            start = k
    for group in groups:
        # Singletons are ordinary coordinate moves the main iteration
        # already explores; only joint moves add anything.
        if len(group) >= 2:
            d = np.zeros_like(x)
            d[group] = 1.0
            directions.append(d)
            directions.append(-d)
    # Superlevel sets: polyhedral network objectives often descend only
    # when every coordinate above a threshold moves together (the cut
    # moves of flow duals).
    tail = np.zeros_like(x)
    for group in reversed(groups):
        tail = tail.copy()
        tail[group] = 1.0
        count = int(np.sum(tail))
        if 2 <= count < len(x):
            directions.append(tail)
            directions.append(-tail)
    return directions


def _escape_move(fun, x, f, lower, extra_directions=None, probe=1e-7):
    """Try coordinated group moves; return (x, f, g, evals) or None.

    Each promising direction (detected by a cheap probe) is minimized
    exactly in 1-D: the restriction of a convex function is unimodal, so
    a doubling bracket plus golden-section search suffices.  Callers with
    structural knowledge may supply extra directions; those are tried
    before the generic equal-value group moves.
    """
    scale = 1.0 + float(np.max(np.abs(x), initial=0.0))
    evals = 0
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    directions = list(extra_directions) if extra_directions is not None else []
    directions += _equal_value_directions(x)
    for d in directions:

        def phi(t):
            return fun(np.maximum(x + t * d, lower))

        step = probe * scale
        f_probe, _ = phi(step)
        evals += 1
        if not (f_probe < f - 1e-14 * scale):
            continue
        hi = step
        f_prev = f_probe
        for _ in range(80):
            hi *= 2.0
            f_hi, _ = phi(hi)
            evals += 1
            if not math.isfinite(f_hi) or f_hi >= f_prev:
                break
            f_prev = f_hi
        a, b = 0.0, hi
        c = b - inv_phi * (b - a)
        e = a + inv_phi * (b - a)
        fc, _ = phi(c)
        fe, _ = phi(e)
        evals += 2
        while b - a > 1e-9 * max(1.0, b):
            if fc <= fe:
                b, e, fe = e, c, fc
                c = b - inv_phi * (b - a)
                fc, _ = phi(c)
            else:
                a, c, fc = c, e, fe
                e = a + inv_phi * (b - a)
                fe, _ = phi(e)
            evals += 1
        t_best = 0.5 * (a + b)
        x_new = np.maximum(x + t_best * d, lower)
        f_new, g_new = fun(x_new)
        evals += 1
        if math.isfinite(f_new) and f_new < f - 1e-14 * scale:
            return x_new, f_new, np.asarray(g_new, dtype=float), evals
    return None


def _two_loop(g: np.ndarray, pairs: list[tuple[np.ndarray, np.ndarray, float]]) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def minimize_bound_lbfgs(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray | None]],
    x0: np.ndarray,
    lower: np.ndarray,
    config: QNConfig | None = None,
    callback: Callable | None = None,
    polish_candidates: Sequence[Callable[[np.ndarray], np.ndarray]] | None = None,
    escape_directions: Callable[[np.ndarray], list] | None = None,
) -> QNResult:
    """Minimize ``fun`` subject to ``x >= lower``.

    Args:
        fun: Returns ``(value, gradient)``; value may be ``+inf``.
        x0: Starting point (projected onto the bounds if needed).
        lower: Coordinate lower bounds (``-inf`` allowed).
        config: Driver parameters.
        callback: Called as ``callback(k, x, value, grad, pg_norm)`` once
            per iteration before the step.
        polish_candidates: Point generators tried after termination; a
            candidate is adopted when it does not worsen the value.
        escape_directions: Optional structural direction generator used
            when progress stalls, tried before the generic group moves.

    Returns:
        The best point found with convergence diagnostics.

    Raises:
        InfeasibleStartError: ``fun(x0)`` is infinite.
    """
    config = config or QNConfig()
    lower = np.asarray(lower, dtype=float)
    x = np.maximum(np.asarray(x0, dtype=float), lower)
    n_evals = 1
    f, g = fun(x)
    if not math.isfinite(f):
        raise InfeasibleStartError("objective is infinite at the starting point")
    g = np.asarray(g, dtype=float)

    pairs: list[tuple[np.ndarray, np.ndarray, float]] = []
    status = "max_iter"
    converged = False
    iteration = 0
    fresh_restart = False
    recent: list[float] = []
    recent_pg: list[float] = []

    escapes_left = config.max_escapes

    def try_escape():
        nonlocal x, f, g, n_evals, escapes_left
        if escapes_left <= 0:
            return False
        escapes_left -= 1
        extra = escape_directions(x) if escape_directions is not None else None
        moved = _escape_move(fun, x, f, lower, extra_directions=extra)
        if moved is None:
            return False
        x, f, g, extra = moved[0], moved[1], moved[2], moved[3]
        n_evals += extra
        pairs.clear()
        recent.clear()
        recent_pg.clear()
        return True

    while iteration < config.max_iter:
        pg = _projected_gradient(x, g, lower)
        pg_norm = float(np.max(np.abs(pg))) if len(pg) else 0.0
        if callback is not None:
            callback(iteration, x, f, g, pg_norm)
        if pg_norm <= config.grad_tol * max(1.0, abs(f)):
            status = "converged"
            converged = True
            break
        recent.append(f)
        recent_pg.append(pg_norm)
        if len(recent) > config.stall_window:
            recent.pop(0)
            recent_pg.pop(0)
            half = config.stall_window // 2
            f_flat = recent[0] - f <= config.stall_tol * max(1.0, abs(f))
            pg_flat = min(recent_pg[half:]) >= 0.7 * min(recent_pg[:half])
            if f_flat and pg_flat:
                if try_escape():
                    iteration += 1
                    continue
                status = "stalled"
                break

        # Direction: two-loop on the free-coordinate gradient, holding
        # coordinates that press against their bound.
        active = (x <= lower) & (g > 0.0)
        g_free = np.where(active, 0.0, g)
        d = -_two_loop(g_free, pairs)
        d[active] = 0.0
        descent = float(d @ g_free)
        if not np.all(np.isfinite(d)) or descent >= -1e-14 * float(
            np.linalg.norm(d) * np.linalg.norm(g_free)
        ):
            pairs.clear()
            d = -g_free

        # Projected weak-Wolfe line search.  Infinite values and failed
        # sufficient decrease shrink the bracket; a failed curvature
        # condition grows it.  The curvature test keeps the supplied
        # (s, y) pairs well scaled, which is what lets the memory track
        # nonsmooth objectives without collapsing the step size.
        alpha, lo_a, hi_a = 1.0, 0.0, math.inf
        accepted = False
        x_new = x
        f_new, g_new = f, g
        fallback = None
        # Objective differences below the summation noise floor cannot
        # certify decrease; gradients remain accurate there, so a step
        # whose decrease drowns in noise is still accepted when the
        # curvature condition holds.
        noise = 32.0 * np.finfo(float).eps * (1.0 + abs(f))
        for _ in range(config.max_backtracks):
            x_try = np.maximum(x + alpha * d, lower)
            step = x_try - x
            if not np.any(step):
                break
            f_try, g_try = fun(x_try)
            n_evals += 1
            slope = float(g @ step)
            threshold = config.armijo * slope
            if -threshold <= noise:
                threshold = noise
            if not math.isfinite(f_try) or f_try > f + threshold:
                hi_a = alpha
            else:
                if f_try <= f + config.armijo * slope:
                    fallback = (x_try, f_try, g_try)
                if float(np.asarray(g_try) @ step) < config.curvature * slope:
                    lo_a = alpha
                else:
                    x_new, f_new, g_new = x_try, f_try, g_try
                    accepted = True
                    break
            alpha = 2.0 * lo_a if math.isinf(hi_a) else lo_a + config.shrink * (hi_a - lo_a)
            if alpha > 1e12:
                break
        if not accepted and fallback is not None:
            # Sufficient decrease was found but curvature never held
            # (typical right at a kink); take the decrease.
            x_new, f_new, g_new = fallback
            accepted = True

        if not accepted:
            if pairs or not fresh_restart:
                # Retry once from a clean slate along steepest descent.
                pairs.clear()
                fresh_restart = True
                iteration += 1
                continue
            if try_escape():
                fresh_restart = False
                iteration += 1
                continue
            status = "stalled"
            break
        fresh_restart = False

        s = x_new - x
        yv = np.asarray(g_new, dtype=float) - g
        sy = float(s @ yv)
        if sy > 1e-10 * float(np.linalg.norm(s) * np.linalg.norm(yv)):
            pairs.append((s, yv, 1.0 / sy))
            if len(pairs) > config.memory:
                pairs.pop(0)
        x, f, g = x_new, f_new, np.asarray(g_new, dtype=float)
        iteration += 1

    # Optional final polish: evaluate externally proposed points and keep
    # anything at least as good (every point is admissible, and an exact
    # vertex at equal value recovers better than one plus float dust).
    # Each generator may propose several points for the current best.
    if polish_candidates:
        tie_slack = 8.0 * np.finfo(float).eps
        for generator in polish_candidates:
            proposals = generator(x)
            if isinstance(proposals, np.ndarray):
                proposals = [proposals]
            for x_c in proposals:
                x_c = np.maximum(np.asarray(x_c, dtype=float), lower)
                if np.array_equal(x_c, x):
                    continue
                f_c, g_c = fun(x_c)
                n_evals += 1
                if math.isfinite(f_c) and f_c <= f + tie_slack * (1.0 + abs(f)):
                    x, f, g = x_c, f_c, np.asarray(g_c, dtype=float)
                    status = "polished"

    pg = _projected_gradient(x, g, lower)
    pg_norm = float(np.max(np.abs(pg))) if len(pg) else 0.0
    if pg_norm <= config.grad_tol * max(1.0, abs(f)):
        converged = True
    return QNResult(
        x=x,
        value=f,
        grad=g,
        pg_norm=pg_norm,
        iterations=iteration,
        n_evals=n_evals,
        converged=converged,
        status=status,
    )
