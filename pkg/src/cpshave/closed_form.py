"""Analytic Nash equilibria and a best-response verification oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game_core import (
    CLS_TOL,
    GameInstance,
    GameType,
    canonicalize,
    classify_game,
    derive_points,
    period_costs,
    system_demand,
    to_original,
)

BALANCE_TOL = 1e-9


@dataclass
class HybridShifts:
    """Set-level equilibrium: one set pinned, the other known only in aggregate."""

    determined: dict[str, float]
    aggregate_set: list[str]
    aggregate_target: float
    representative: dict[str, float]
    pinned_set: str  # "cp", "ncp" or "none"
    note: str = ""


@dataclass
class EquilibriumResult:
    game_type: GameType
    ids: list[str]
    shifts: np.ndarray
    s1: float
    s2: float
    per_agent_cost: np.ndarray
    total_cost: float
    balanced: bool
    hybrid: HybridShifts | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "game_type": self.game_type.value,
            "shifts": {i: float(x) for i, x in zip(self.ids, self.shifts)},
            "s1": self.s1,
            "s2": self.s2,
            "per_agent_cost": {i: float(c) for i, c in zip(self.ids, self.per_agent_cost)},
            "total_cost": self.total_cost,
            "balanced": self.balanced,
        }
        if self.hybrid is not None:
            h = self.hybrid
            d["hybrid"] = {
                "pinned_set": h.pinned_set,
                "determined": h.determined,
                "aggregate_set": h.aggregate_set,
                "aggregate_target": h.aggregate_target,
                "representative": h.representative,
            }
            if h.note:
                d["hybrid"]["note"] = h.note
        d.update(self.extra)
        return d


def _result(orig: GameInstance, canon: GameInstance, gtype: GameType, x_canon,
            hybrid: HybridShifts | None = None) -> EquilibriumResult:
    x = to_original(canon, x_canon)
    s1, s2 = system_demand(orig, x)
    c1, c2 = period_costs(orig, x)
    # costs of a balanced equilibrium are read off the tie period
    costs = c1 if s1 >= s2 else c2
    balanced = abs(s1 - s2) <= BALANCE_TOL * max(1.0, abs(s1) + abs(s2))
    if hybrid is not None and canon.swapped:
        hybrid.determined = {k: -v for k, v in hybrid.determined.items()}
        hybrid.representative = {k: -v for k, v in hybrid.representative.items()}
        hybrid.aggregate_target = -hybrid.aggregate_target
    return EquilibriumResult(gtype, orig.ids, x, s1, s2, costs, float(costs.sum()), balanced, hybrid)


def two_agent_ne(instance: GameInstance) -> EquilibriumResult:
    """Unique equilibrium of the two-agent game."""
    if instance.n != 2:
        raise ValueError(f"two_agent_ne needs exactly 2 agents, got {instance.n}")
    g = canonicalize(instance)
    p = derive_points(g)
    gtype = classify_game(g, p)
    # agent "x" has the larger balance point (ties -> input order)
    ix = 0 if p.balance[0] >= p.balance[1] else 1
    iy = 1 - ix
    rx, ry = p.critical[ix], p.critical[iy]
    bx, by = p.balance[ix], p.balance[iy]
    b = p.system_balance
    if gtype is GameType.CONCAVE:
        sx, sy = rx, ry
    elif gtype is GameType.QUASICONCAVE:
        sx, sy = bx, by
    else:
        up_x = bx > rx + CLS_TOL
        low_y = by < -ry - CLS_TOL
        if up_x and low_y:
            # both agents non-capable: whichever pin keeps the other within reach
            sx, sy = (rx, b - rx) if b - rx >= -ry else (b + ry, -ry)
        elif up_x:
            sx, sy = rx, b - rx
        elif low_y:
            sx, sy = b + ry, -ry
        else:
            sx, sy = b - ry, ry
    x = np.empty(2)
    x[ix], x[iy] = sx, sy
    return _result(instance, g, gtype, x)


def water_fill(alpha, target: float, lo, hi) -> np.ndarray:
    """Minimise sum(alpha*x^2) subject to sum(x) = target and lo <= x <= hi.

    The minimiser is x_i = clip(lam/alpha_i, lo_i, hi_i) for a scalar
    multiplier ``lam``; it is found by bisection and then made exact on the
    unclamped members.
    """
    alpha = np.asarray(alpha, float)
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    if alpha.size == 0:
        if abs(target) > BALANCE_TOL:
            raise ValueError("empty set cannot absorb a non-zero target")
        return np.zeros(0)
    if target < lo.sum() - 1e-9 or target > hi.sum() + 1e-9:
        raise ValueError(f"target {target} outside [{lo.sum()}, {hi.sum()}]")

    def total(lam):
        return np.clip(lam / alpha, lo, hi).sum()

    a_lo = float(np.min(lo * alpha)) - 1.0
    a_hi = float(np.max(hi * alpha)) + 1.0
    for _ in range(200):
        mid = 0.5 * (a_lo + a_hi)
        if total(mid) < target:
            a_lo = mid
        else:
            a_hi = mid
        if a_hi - a_lo <= 1e-15 * max(1.0, abs(mid)):
            break
    lam = 0.5 * (a_lo + a_hi)
    x = np.clip(lam / alpha, lo, hi)
    free = (lam / alpha > lo) & (lam / alpha < hi)
    if free.any():
        rest = target - x[~free].sum()
        lam = rest / np.sum(1.0 / alpha[free])
        x[free] = lam / alpha[free]
    return x


def _hybrid(g: GameInstance, p) -> tuple[np.ndarray, HybridShifts]:
    r, bi, b = p.critical, p.balance, p.system_balance
    cp = bi >= 0
    ncp = ~cp
    up = np.minimum(r, bi)
    down = np.maximum(-r, bi)
    # the CP-set pin needs the non-CP set to reach the remaining aggregate
    # from above its own pins; the other pin needs the reverse
    q = up[cp].sum() + down[ncp].sum()
    ids = np.array(g.ids)
    x = np.zeros(g.n)
    note = ""
    if ncp.any() and b >= q:
        pinned, free, tag = cp, ncp, "cp"
        lo, hi = down[free], r[free]
        x[pinned] = up[pinned]
    else:
        pinned, free, tag = ncp, cp, "ncp"
        lo, hi = -r[free], up[free]
        x[pinned] = down[pinned]
    target = b - x[pinned].sum()
    if not (lo.sum() - 1e-9 <= target <= hi.sum() + 1e-9):
        # no pinned set is admissible: every agent sits between its lower
        # cap and its critical point and the set shares the balance
        x[:] = 0.0
        pinned = np.zeros(g.n, bool)
        free = np.ones(g.n, bool)
        lo, hi = up, r
        target = b
        tag = "none"
        note = "outside the pinned-set conditions; aggregate shared by all agents"
    x[free] = water_fill(g.alpha[free], target, lo, hi)
    h = HybridShifts(
        determined={str(k): float(v) for k, v in zip(ids[pinned], x[pinned])},
        aggregate_set=[str(k) for k in ids[free]],
        aggregate_target=float(target),
        representative={str(k): float(v) for k, v in zip(ids[free], x[free])},
        pinned_set=tag,
        note=note,
    )
    return x, h


def multi_agent_ne(instance: GameInstance) -> EquilibriumResult:
    """Concave, quasiconcave or hybrid equilibrium for any number of agents."""
    g = canonicalize(instance)
    p = derive_points(g)
    gtype = classify_game(g, p)
    if gtype is GameType.CONCAVE:
        return _result(instance, g, gtype, p.critical.copy())
    if gtype is GameType.QUASICONCAVE:
        return _result(instance, g, gtype, p.balance.copy())
    x, h = _hybrid(g, p)
    return _result(instance, g, gtype, x, h)


def solve_ne(instance: GameInstance) -> EquilibriumResult:
    """Two-agent table for n == 2, multi-agent construction otherwise."""
    return two_agent_ne(instance) if instance.n == 2 else multi_agent_ne(instance)


# -- verification oracle -------------------------------------------------------

@dataclass
class VerifyReport:
    passes: bool
    max_improvement: float
    per_agent_improvement: np.ndarray
    on_switching_surface: bool
    up_pushers: list[str]
    down_pushers: list[str]
    eps_ne: float
    out_of_range: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passes": self.passes,
            "max_improvement": self.max_improvement,
            "per_agent_improvement": [float(v) for v in self.per_agent_improvement],
            "on_switching_surface": self.on_switching_surface,
            "up_pushers": self.up_pushers,
            "down_pushers": self.down_pushers,
            "out_of_range": self.out_of_range,
            "eps_ne": self.eps_ne,
        }


def verify_ne(instance: GameInstance, shifts, grid: float | None = None,
              eps_ne: float = 1e-6, surface_tol: float = 1e-9,
              economic_range: bool = True) -> VerifyReport:
    """Search unilateral deviations for a payoff improvement.

    Off the switching surface payoffs are the usual tie-to-period-1 payoffs.
    On the surface (S1 == S2) an agent is credited with the better of its two
    period payoffs, the limit it can reach by an arbitrarily small move. A
    balanced profile also fails when some agent wants to push the aggregate
    up (x_i < min(r_i, b_i)) while another wants to push it down
    (x_i > max(-r_i, b_i)), judged with a shift tolerance of eps_ne/pi.

    With ``economic_range`` strategies are limited to each agent's shifting
    range [-r_i, r_i]: deviations are searched there and a profile outside
    it fails. Without it, an agent in a concave game can often tie the
    periods by a costly overshoot and be billed in its light period.
    """
    g = canonicalize(instance)
    x = np.asarray(to_original(g, shifts), float)  # into the canonical frame
    p = derive_points(g)
    r, bi, b = p.critical, p.balance, p.system_balance
    pi = g.cp_price
    X1, X2, a = g.X1, g.X2, g.alpha
    rmax = float(r.max())
    step = grid if grid is not None else 1e-3 * rmax
    base_grid = np.arange(-2 * rmax, 2 * rmax + step / 2, step)
    total = x.sum()
    scale = max(1.0, abs(p.system_average))

    def payoff(i, xi, others):
        gap = 2.0 * (others + xi - b)  # S1 - S2
        f1 = -pi * (X1[i] + xi) - a[i] * xi * xi
        f2 = -pi * (X2[i] - xi) - a[i] * xi * xi
        on = np.abs(gap) <= surface_tol * scale
        return np.where(on, np.maximum(f1, f2), np.where(gap >= 0, f1, f2))

    imp = np.zeros(g.n)
    for i in range(g.n):
        others = total - x[i]
        cands = np.concatenate([base_grid, [r[i], -r[i], bi[i], b - others]])
        if economic_range:
            cands = cands[np.abs(cands) <= r[i] * (1 + 1e-12)]
        cands = cands[cands != x[i]]
        f0 = payoff(i, x[i], others)
        imp[i] = max(0.0, float(np.max(payoff(i, cands, others)) - f0))
    on_surface = abs(2.0 * (total - b)) <= surface_tol * scale
    up = down = []
    # being d off a pin is worth about pi*d, so match the payoff tolerance
    tol = max(CLS_TOL, eps_ne / pi)
    if on_surface:
        ids = np.array(g.ids)
        up = [str(k) for k in ids[x < np.minimum(r, bi) - tol]]
        down = [str(k) for k in ids[x > np.maximum(-r, bi) + tol]]
    slide_ok = not (up and down)
    outside = []
    if economic_range:
        outside = [str(k) for k in np.array(g.ids)[np.abs(x) > r + tol]]
    worst = float(imp.max())
    ok = worst <= eps_ne and slide_ok and not outside
    return VerifyReport(ok, worst, imp, on_surface, up, down, eps_ne, outside)
