"""Centralized peak-shaving benchmark, peak ratio and efficiency loss."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .game_core import GameInstance, canonicalize, derive_points, system_demand, to_original


@dataclass
class BenchmarkReport:
    ids: list[str]
    game_shifts: np.ndarray
    centralized_shifts: np.ndarray
    centralized_cost: float
    game_cost: float
    peak_ratio: float
    efficiency_loss: float
    marginal_cost: np.ndarray
    marginal_gap: float

    def to_dict(self) -> dict:
        return {
            "game_shifts": {i: float(v) for i, v in zip(self.ids, self.game_shifts)},
            "centralized_shifts": {i: float(v) for i, v in zip(self.ids, self.centralized_shifts)},
            "centralized_cost": self.centralized_cost,
            "game_cost": self.game_cost,
            "peak_ratio": self.peak_ratio,
            "efficiency_loss": self.efficiency_loss,
            "marginal_cost": {i: float(v) for i, v in zip(self.ids, self.marginal_cost)},
            "marginal_gap": self.marginal_gap,
        }


def centralized_solve(instance: GameInstance) -> np.ndarray:
    """Minimiser of pi*max(S1, S2) + sum(alpha x^2).

    When the critical points cannot close the gap every agent stops at r_i;
    otherwise the system is balanced with x_i proportional to 1/alpha_i.
    """
    g = canonicalize(instance)
    p = derive_points(g)
    if p.system_balance > p.critical.sum():
        x = p.critical.copy()
    else:
        w = 1.0 / g.alpha
        x = p.system_balance * w / w.sum()
    return to_original(g, x)


def system_cost(instance: GameInstance, shifts) -> float:
    """Total cost of all agents: pi*max(S1, S2) + sum(alpha x^2)."""
    x = np.asarray(shifts, float)
    s1, s2 = system_demand(instance, x)
    return instance.cp_price * max(s1, s2) + float(np.sum(instance.alpha * x * x))


def centralized_oracle(instance: GameInstance, grid: float | None = None) -> np.ndarray:
    """Independent numerical check of :func:`centralized_solve`.

    Up to three agents: exhaustive grid over [-2 r_max, 2 r_max] followed by
    successively finer local grids. Larger instances: the epigraph QP
    ``min pi t + sum(alpha x^2)  s.t.  t >= S1, t >= S2`` via SLSQP.
    """
    p = derive_points(instance)
    rmax = float(p.critical.max())
    n = instance.n
    if n <= 3:
        step = grid if grid is not None else (4 * rmax / 80 if n == 3 else 4 * rmax / 400)
        axis = np.arange(-2 * rmax, 2 * rmax + step / 2, step)
        pts = np.array(list(itertools.product(axis, repeat=n)))
        costs = _vec_cost(instance, pts)
        k = int(np.argmin(costs))
        best, best_c = pts[k], costs[k]
        span = step
        offs = np.linspace(-1, 1, 11)
        for _ in range(40):
            local = best + span * np.array(list(itertools.product(offs, repeat=n)))
            costs = _vec_cost(instance, local)
            k = int(np.argmin(costs))
            if costs[k] < best_c:
                best, best_c = local[k], costs[k]
            span *= 0.5
        return best
    pi, a = instance.cp_price, instance.alpha
    sb1, sb2 = instance.X1.sum(), instance.X2.sum()
    z0 = np.concatenate([np.zeros(n), [max(sb1, sb2)]])
    res = minimize(
        lambda z: pi * z[-1] + np.sum(a * z[:-1] ** 2),
        z0,
        jac=lambda z: np.concatenate([2 * a * z[:-1], [pi]]),
        constraints=[
            {"type": "ineq", "fun": lambda z: z[-1] - sb1 - z[:-1].sum()},
            {"type": "ineq", "fun": lambda z: z[-1] - sb2 + z[:-1].sum()},
        ],
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 1000},
    )
    return res.x[:-1]


def _vec_cost(instance: GameInstance, pts: np.ndarray) -> np.ndarray:
    tot = pts.sum(axis=1)
    peak = np.maximum(instance.X1.sum() + tot, instance.X2.sum() - tot)
    return instance.cp_price * peak + (pts * pts) @ instance.alpha


def peak_ratio(instance: GameInstance, game_shifts, cen_shifts) -> float:
    return max(system_demand(instance, game_shifts)) / max(system_demand(instance, cen_shifts))


def efficiency_loss(instance: GameInstance, game_shifts, cen_shifts) -> float:
    """Ratio of total game cost to total centralized cost (both >= 0)."""
    return system_cost(instance, game_shifts) / system_cost(instance, cen_shifts)


def marginal_gap_identity_check(instance: GameInstance, game_shifts) -> float:
    """Relative residual of the two-agent marginal-cost gap identity.

    For a balanced two-agent equilibrium,
    (game cost - centralized cost)(a_x + a_y) = (a_x x - a_y y)^2.
    """
    if instance.n != 2:
        raise ValueError("identity holds for two agents only")
    g = canonicalize(instance)
    p = derive_points(g)
    if p.system_balance > p.critical.sum():
        raise ValueError("identity requires a balanced (non-concave or quasiconcave) equilibrium")
    x = np.asarray(game_shifts, float)
    a = instance.alpha
    diff = system_cost(instance, x) - system_cost(instance, centralized_solve(instance))
    lhs = diff * a.sum()
    rhs = float((a[0] * x[0] - a[1] * x[1]) ** 2)
    return abs(lhs - rhs) / max(1.0, abs(rhs))


def benchmark(instance: GameInstance, game_shifts) -> BenchmarkReport:
    x = np.asarray(game_shifts, float)
    cen = centralized_solve(instance)
    mc = instance.alpha * x
    return BenchmarkReport(
        ids=instance.ids,
        game_shifts=x,
        centralized_shifts=cen,
        centralized_cost=system_cost(instance, cen),
        game_cost=system_cost(instance, x),
        peak_ratio=peak_ratio(instance, x, cen),
        efficiency_loss=efficiency_loss(instance, x, cen),
        marginal_cost=mc,
        marginal_gap=float(mc.max() - mc.min()),
    )
