"""Switched gradient-play dynamics with per-agent backtracking and gated updates.

Each iteration moves every agent along the gradient of its payoff in the
active CP period, ``x <- x + diag(tau) F_j(x)``. Learning rates are chosen per
agent by Armijo backtracking against the cost of the period the candidate
lands in; an agent with no admissible rate sits the step out (``tau = 0``).
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .game_core import GameInstance, canonicalize, derive_points, to_original


class StartOutsideStabilitySet(ValueError):
    pass


class ConvergenceMode(enum.Enum):
    GRADIENT_ZERO = "gradient_zero"
    SWITCHING_SURFACE = "switching_surface"


@dataclass(frozen=True)
class SolverConfig:
    beta1: float = 1e-4
    beta2: float = 0.5
    tau0: float | None = None  # default 1/(4 max alpha)
    per_agent_tau0: bool = False  # start each agent at 1/(4 alpha_i) instead
    eps_grad: float = 1e-8
    eps_gap: float = 1e-8
    max_iters: int = 100_000
    max_backtracks: int = 60
    window: int = 10
    stall_tol: float = 1e-9
    stagnation_window: int = 200  # shrink tau0 when progress stalls this long

    def __post_init__(self):
        if not 0 < self.beta1 <= 0.5:
            raise ValueError("beta1 must lie in (0, 0.5]")
        if not 0 < self.beta2 < 1:
            raise ValueError("beta2 must lie in (0, 1)")
        if self.tau0 is not None and self.tau0 <= 0:
            raise ValueError("tau0 must be > 0")
        for name in ("eps_grad", "eps_gap", "stall_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("max_iters", "max_backtracks", "window", "stagnation_window"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver option(s): {', '.join(sorted(unknown))}")
        return replace(cls(), **d)


@dataclass
class Trajectory:
    """Iterates in the caller's period labelling.

    ``iterates`` holds every recorded profile (row 0 is the start). When the
    solve ran with ``record=False`` only the start and final rows are kept,
    and the per-step annotations cover those two rows.
    """

    ids: list[str]
    iterates: np.ndarray
    active_period: np.ndarray
    lyapunov: np.ndarray
    payoff_gap: np.ndarray
    converged: bool
    convergence_mode: ConvergenceMode | None
    iterations: int
    step_sizes: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    def to_csv(self, path: str | Path, instance: GameInstance, every: int = 1) -> None:
        every = max(1, int(every))
        sb1, sb2 = instance.X1.sum(), instance.X2.sum()
        rows = list(range(0, len(self.iterates), every))
        if rows[-1] != len(self.iterates) - 1:
            rows.append(len(self.iterates) - 1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "period"] + [f"x_{i}" for i in self.ids]
                       + ["S1", "S2", "V1", "V2", "payoff_gap"])
            for h in rows:
                x = self.iterates[h]
                tot = x.sum()
                w.writerow([h, int(self.active_period[h])] + [repr(float(v)) for v in x]
                           + [repr(float(sb1 + tot)), repr(float(sb2 - tot)),
                              repr(float(self.lyapunov[h, 0])), repr(float(self.lyapunov[h, 1])),
                              repr(float(self.payoff_gap[h]))])


def gradient(instance: GameInstance, shifts, period: int) -> np.ndarray:
    """Per-agent derivative of the period-``period`` payoff."""
    x = np.asarray(shifts, float)
    pi, a = instance.cp_price, instance.alpha
    if period == 1:
        return -(pi + 2.0 * a * x)
    if period == 2:
        return pi - 2.0 * a * x
    raise ValueError("period must be 1 or 2")


def lyapunov_values(instance: GameInstance, shifts) -> tuple[float, float]:
    x = np.asarray(shifts, float)
    pi = instance.cp_price
    q = float(np.sum(instance.alpha * x * x))
    tot = float(x.sum())
    return q + pi * tot + pi * instance.X1.sum(), q - pi * tot + pi * instance.X2.sum()


def stability_set_contains(instance: GameInstance, shifts) -> bool:
    v1, v2 = lyapunov_values(instance, shifts)
    return v1 > 0 and v2 > 0


def _opposed(x, up_cap, down_cap, tol) -> bool:
    """True when one agent still gains by raising the aggregate and another by lowering it."""
    return bool(np.any(x < up_cap - tol) and np.any(x > down_cap + tol))


def solve(instance: GameInstance, start=None, config: SolverConfig | None = None,
          record: bool = True) -> Trajectory:
    """Run the switched dynamics from ``start`` (default: zero shifts)."""
    config = config or SolverConfig()
    g = canonicalize(instance)
    n = g.n
    x = np.zeros(n) if start is None else np.array(to_original(g, start), float)
    if x.shape != (n,):
        raise ValueError(f"start must have {n} entries")
    if not stability_set_contains(g, x):
        raise StartOutsideStabilitySet("start profile lies outside the stability set")

    pi = g.cp_price
    X1, X2, a = g.X1, g.X2, g.alpha
    pts = derive_points(g)
    b = pts.system_balance
    # tolerances scale with the instance so kW- and MW-sized data behave alike
    scale = max(1.0, pts.system_average)
    gap_tol = config.eps_gap * pi * scale
    stall_tol = config.stall_tol * scale
    grad_tol = config.eps_grad * max(1.0, pi)
    if config.tau0 is not None:
        tau0 = np.full(n, config.tau0)
    elif config.per_agent_tau0:
        tau0 = 1.0 / (4.0 * a)
    else:
        tau0 = np.full(n, 1.0 / (4.0 * a.max()))
    base_taus = tau0[None, :] * (config.beta2 ** np.arange(config.max_backtracks + 1))[:, None]
    taus = base_taus
    beta1 = config.beta1
    cols = np.arange(n)

    def dcost(cand, landing1: bool | np.ndarray, j: int):
        # cost(candidate, landing period) - cost(x, j) without cancellation
        d = cand - x
        quad = a * d * (cand + x)
        if j == 1:
            same, cross = pi * d, pi * (X2 - cand - X1 - x)
        else:
            same, cross = -pi * d, pi * (X1 + cand - X2 + x)
        return quad + np.where(landing1 == (j == 1), same, cross)

    def first_ok(ok):
        idx = np.where(ok.any(axis=0), ok.argmax(axis=0), -1)
        return np.where(idx >= 0, taus[np.maximum(idx, 0), cols], 0.0)

    up_cap = np.minimum(pts.critical, pts.balance)
    down_cap = np.maximum(-pts.critical, pts.balance)
    best_merit = np.inf
    since_best = 0
    hist_x = [x.copy()]
    hist_tau = []
    grad_run = 0
    recent = []
    converged = False
    mode = None
    h = 0
    for h in range(1, config.max_iters + 1):
        s = x.sum()
        j = 1 if s >= b else 2
        F = -(pi + 2.0 * a * x) if j == 1 else pi - 2.0 * a * x
        step = taus * F
        need = -beta1 * taus * F * F
        cand = x + step
        # unilateral landing period: others held fixed
        ok = dcost(cand, (s + step) >= b, j) < need
        tau = first_ok(ok)
        # re-check once against the period the composed move lands in
        land1 = bool((x + tau * F).sum() >= b)
        ok2 = (dcost(cand, land1, j) < need) & (taus <= tau)
        tau2 = first_ok(ok2)
        if tau.any() and np.max(np.abs(tau2 * F)) < stall_tol:
            # the movers would be hurt by the joint crossing: shrink all
            # steps together until the composed move stays in period j
            t = tau.copy()
            for _ in range(config.max_backtracks):
                t = t * config.beta2
                if ((x + t * F).sum() >= b) == (j == 1):
                    break
            tau2 = t
        x_new = x + tau2 * F
        moved = float(np.max(np.abs(x_new - x)))
        x = x_new
        if record:
            hist_x.append(x.copy())
            hist_tau.append(tau2)
        recent.append(moved)
        if len(recent) > config.window:
            recent.pop(0)

        if j == 2 and np.linalg.norm(F) < grad_tol:
            grad_run += 1
        else:
            grad_run = 0
        if grad_run >= config.window:
            converged, mode = True, ConvergenceMode.GRADIENT_ZERO
            break
        gap = 2.0 * pi * abs(x.sum() - b)
        # progress merit: vanishes at either kind of equilibrium
        merit = min(gap, float(np.linalg.norm(pi - 2.0 * a * x)))
        if merit < 0.9 * best_merit:
            best_merit, since_best = merit, 0
            taus = base_taus
        else:
            since_best += 1
            if since_best >= config.stagnation_window and taus[0, 0] > base_taus[0, 0] * 1e-6:
                # damp a persistent cycle across the switching surface;
                # full steps return once progress resumes
                taus = taus * config.beta2
                since_best = 0
        if (gap < gap_tol and len(recent) == config.window
                and max(recent) < stall_tol and not _opposed(x, up_cap, down_cap, 1e-6 * scale)):
            converged, mode = True, ConvergenceMode.SWITCHING_SURFACE
            break

    if not record:
        hist_x.append(x.copy())
    its = np.array(hist_x)
    orig_its = to_original(g, its)
    sb1, sb2 = X1.sum(), X2.sum()
    tot = its.sum(axis=1)
    period = np.where(sb1 + tot >= sb2 - tot, 1, 2)
    q = (its * its) @ a
    lyap = np.column_stack([q + pi * tot + pi * sb1, q - pi * tot + pi * sb2])
    gap = 2.0 * pi * np.abs(tot - b)
    if g.swapped:
        # period labels and Lyapunov pair exchange under relabelling; a tie
        # stays billed to the caller's period 1
        o_tot = orig_its.sum(axis=1)
        period = np.where(instance.X1.sum() + o_tot >= instance.X2.sum() - o_tot, 1, 2)
        lyap = lyap[:, ::-1]
    notes = [] if converged else [f"no convergence within {config.max_iters} iterations"]
    return Trajectory(
        ids=instance.ids,
        iterates=orig_its,
        active_period=period,
        lyapunov=lyap,
        payoff_gap=gap,
        converged=converged,
        convergence_mode=mode,
        iterations=h,
        step_sizes=np.array(hist_tau) if record else None,
        notes=notes,
    )
