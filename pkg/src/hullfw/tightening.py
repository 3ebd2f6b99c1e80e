"""Dual bound tightening and node lower bounds derived from convexity.

All rules start from a relaxed node solution ``x_hat`` with certified
Frank-Wolfe gap ``g`` and use ``f(x) >= f(x_hat) + <grad, x - x_hat>``
(plus ``mu/2 |x - x_hat|^2`` under strong convexity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .blmo import BoundState

AT_BOUND_TOL = 1e-6
# Slack added to the right-hand side before a rule may fire; guards against
# round-off in f, g and UB.
SAFETY = 1e-9


class Unsupported(Exception):
    """The context lacks the data a bound needs (mu or sharpness)."""


@dataclass
class TighteningContext:
    gradient: np.ndarray
    f_hat: float
    gap: float
    upper_bound: float
    mu: Optional[float] = None
    sharpness: Optional[tuple[float, float]] = None

    def __post_init__(self):
        self.gradient = np.asarray(self.gradient, dtype=float)
        if self.gap < 0:
            self.gap = 0.0

    def with_upper_bound(self, ub: float) -> "TighteningContext":
        return TighteningContext(self.gradient, self.f_hat, self.gap, ub, self.mu, self.sharpness)


@dataclass(frozen=True)
class TighteningEvent:
    variable: int
    side: str
    old: float
    new: float
    rule: str

    def to_dict(self) -> dict:
        return {"variable": self.variable, "side": self.side, "old": self.old, "new": self.new, "rule": self.rule}


def _first_violating(grad_j: float, span: int, budget: float, mu: float) -> Optional[int]:
    """Smallest M in 1..span with ``M grad_j > budget - mu/2 M^2``."""
    for M in range(1, span + 1):
        if M * grad_j > budget - 0.5 * mu * M * M:
            return M
    return None


def tighten_bounds(ctx: TighteningContext, x_hat, bounds: BoundState, J: Sequence[int],
                   active: Optional[Sequence[np.ndarray]] = None, region=None,
                   events: Optional[list] = None, use_strong_convexity: bool = True) -> BoundState:
    """Tighten integer bounds of variables sitting at a bound of ``bounds``.

    A variable at its lower bound with nonnegative gradient cannot move up by
    ``M`` if ``M grad_j > UB - f + g`` (minus ``mu/2 M^2`` when ``mu`` is
    known); the smallest such ``M`` caps ``u_j`` at ``l_j + M - 1``.  The
    upper-bound case is symmetric.

    ``active`` restricts tightening to variables where every active vertex
    sits at that bound.  ``region``, when given, must be monotone in the
    variable (see ``FeasibleRegion.monotone_in``) for the rule to apply.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    out = bounds.copy()
    if not math.isfinite(ctx.upper_bound):
        return out
    mu = (ctx.mu or 0.0) if use_strong_convexity else 0.0
    budget = ctx.upper_bound - ctx.f_hat + ctx.gap + SAFETY * max(1.0, abs(ctx.upper_bound))
    verts = None if active is None else np.asarray(active, dtype=float)
    for j in J:
        lo, hi = out.lower[j], out.upper[j]
        span = int(round(hi - lo))
        if span < 1:
            continue
        gj = float(ctx.gradient[j])
        if abs(x_hat[j] - lo) <= AT_BOUND_TOL and gj >= 0:
            side = "upper"
            if verts is not None and np.any(np.abs(verts[:, j] - lo) > AT_BOUND_TOL):
                continue
            if region is not None and not region.monotone_in(j, "down"):
                continue
        elif abs(x_hat[j] - hi) <= AT_BOUND_TOL and gj <= 0:
            side = "lower"
            if verts is not None and np.any(np.abs(verts[:, j] - hi) > AT_BOUND_TOL):
                continue
            if region is not None and not region.monotone_in(j, "up"):
                continue
        else:
            continue
        M = _first_violating(abs(gj), span, budget, mu)
        if M is None:
            continue
        rule = "gap" if M * abs(gj) > budget else "strong_convexity"
        if side == "upper":
            new = lo + M - 1
            if new < hi:
                out.upper[j] = new
                if events is not None:
                    events.append(TighteningEvent(int(j), side, float(hi), float(new), rule))
        else:
            new = hi - M + 1
            if new > lo:
                out.lower[j] = new
                if events is not None:
                    events.append(TighteningEvent(int(j), side, float(lo), float(new), rule))
    return out


def rounding_distance_sq(x_hat, branch_j: int, direction: str, J: Sequence[int]) -> float:
    """Squared distance from ``x_hat`` to any integer point of the child.

    Uses the branching coordinate's distance to its new bound and, for every
    other fractional integer coordinate, the distance to the nearer integer.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    xj = x_hat[branch_j]
    dist_j = xj - math.floor(xj) if direction == "down" else math.ceil(xj) - xj
    total = dist_j * dist_j
    for k in J:
        if k == branch_j:
            continue
        frac = x_hat[k] - math.floor(x_hat[k])
        if frac > AT_BOUND_TOL and frac < 1.0 - AT_BOUND_TOL:
            total += min(frac, 1.0 - frac) ** 2
    return total


def strong_convexity_node_bound(ctx: TighteningContext, x_hat, branch_j: int, direction: str,
                                J: Sequence[int]) -> float:
    """Lower bound on every integer point of the child created by branching."""
    if ctx.mu is None:
        raise Unsupported("strong convexity parameter mu is not available")
    d2 = rounding_distance_sq(x_hat, branch_j, direction, J)
    return ctx.f_hat + 0.5 * ctx.mu * d2 - ctx.gap


def sharpness_node_bound(ctx: TighteningContext, x_hat, dist_lower: float) -> float:
    """Hölder error bound variant; valid only if the node optimum is unique."""
    if ctx.sharpness is None:
        raise Unsupported("sharpness constants are not available")
    theta, M = ctx.sharpness
    inner = dist_lower - M * ctx.gap ** theta
    base = ctx.f_hat - ctx.gap
    if inner <= 0 or theta <= 0:
        return base
    return base + M ** (-1.0 / theta) * inner ** (1.0 / theta)


def global_tightening(root_ctx: TighteningContext, root_x, new_upper_bound: float,
                      global_bounds: BoundState, J: Sequence[int], region=None,
                      events: Optional[list] = None, use_strong_convexity: bool = True) -> BoundState:
    """Re-run the root tightening with an improved incumbent value."""
    return tighten_bounds(root_ctx.with_upper_bound(new_upper_bound), root_x, global_bounds, J,
                          region=region, events=events, use_strong_convexity=use_strong_convexity)
