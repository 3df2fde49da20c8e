"""Domain types, canonicalization, derived points and game classification.

Agents shift demand ``x_i`` from period 2 into period 1 (negative values move
it the other way). The coincident-peak (CP) period is whichever period carries
the larger system demand, with ties billed to period 1.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

CLS_TOL = 1e-9


class InputError(ValueError):
    """Invalid instance data. ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class Capability(enum.Enum):
    CAPABLE = "capable"
    UPPER_NON_CAPABLE = "upper_non_capable"
    LOWER_NON_CAPABLE = "lower_non_capable"


class GameType(enum.Enum):
    CONCAVE = "concave"
    QUASICONCAVE = "quasiconcave"
    NON_CONCAVE = "non_concave"


@dataclass(frozen=True)
class Agent:
    id: str
    demand_p1: float
    demand_p2: float
    penalty: float

    def __post_init__(self):
        for name in ("demand_p1", "demand_p2", "penalty"):
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating, np.integer)) or isinstance(v, bool):
                raise InputError(name, f"expected a number, got {v!r}")
            if not math.isfinite(float(v)):
                raise InputError(name, "must be finite")
        if self.penalty <= 0:
            raise InputError("penalty", f"agent {self.id!r}: must be > 0")
        if self.demand_p1 < 0:
            raise InputError("demand_p1", f"agent {self.id!r}: must be >= 0")
        if self.demand_p2 < 0:
            raise InputError("demand_p2", f"agent {self.id!r}: must be >= 0")

    def swapped(self) -> "Agent":
        return Agent(self.id, self.demand_p2, self.demand_p1, self.penalty)


@dataclass(frozen=True)
class GameInstance:
    """Agents plus the CP price.

    ``swapped`` records that period labels were exchanged by
    :func:`canonicalize`; shifts in a swapped instance are negated relative
    to the original labelling.
    """

    agents: tuple[Agent, ...]
    cp_price: float
    swapped: bool = False
    _arrays: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if len(self.agents) < 2:
            raise InputError("agents", "at least 2 agents are required")
        if not isinstance(self.cp_price, (int, float, np.floating, np.integer)) or isinstance(
            self.cp_price, bool
        ):
            raise InputError("cp_price", f"expected a number, got {self.cp_price!r}")
        if not (math.isfinite(self.cp_price) and self.cp_price > 0):
            raise InputError("cp_price", "must be > 0")
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise InputError("agents", "agent ids must be unique")

    @classmethod
    def from_arrays(cls, demand_p1, demand_p2, penalty, cp_price, ids=None) -> "GameInstance":
        demand_p1 = np.asarray(demand_p1, float)
        demand_p2 = np.asarray(demand_p2, float)
        penalty = np.asarray(penalty, float)
        if ids is None:
            ids = [str(i + 1) for i in range(len(penalty))]
        agents = tuple(
            Agent(str(i), float(a), float(b), float(c))
            for i, a, b, c in zip(ids, demand_p1, demand_p2, penalty)
        )
        return cls(agents, float(cp_price))

    def _arr(self, name):
        if name not in self._arrays:
            self._arrays["X1"] = np.array([a.demand_p1 for a in self.agents])
            self._arrays["X2"] = np.array([a.demand_p2 for a in self.agents])
            self._arrays["alpha"] = np.array([a.penalty for a in self.agents])
        return self._arrays[name]

    @property
    def X1(self) -> np.ndarray:
        return self._arr("X1")

    @property
    def X2(self) -> np.ndarray:
        return self._arr("X2")

    @property
    def alpha(self) -> np.ndarray:
        return self._arr("alpha")

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def ids(self) -> list[str]:
        return [a.id for a in self.agents]

    def to_dict(self) -> dict:
        return {
            "cp_price": self.cp_price,
            "agents": [
                {"id": a.id, "demand_p1": a.demand_p1, "demand_p2": a.demand_p2, "penalty": a.penalty}
                for a in self.agents
            ],
        }


@dataclass(frozen=True)
class DerivedPoints:
    critical: np.ndarray
    balance: np.ndarray
    system_balance: float
    system_average: float


def canonicalize(instance: GameInstance) -> GameInstance:
    """Relabel periods so that baseline period-1 demand does not exceed period 2."""
    if instance.X1.sum() > instance.X2.sum():
        return GameInstance(
            tuple(a.swapped() for a in instance.agents), instance.cp_price, not instance.swapped
        )
    return instance


def to_original(instance: GameInstance, shifts) -> np.ndarray:
    """Map shifts of a canonical instance back to the original period labels."""
    shifts = np.asarray(shifts, float)
    return -shifts if instance.swapped else shifts


def from_original(instance: GameInstance, shifts) -> np.ndarray:
    return to_original(instance, shifts)


def derive_points(instance: GameInstance) -> DerivedPoints:
    pi = instance.cp_price
    X1, X2 = instance.X1, instance.X2
    return DerivedPoints(
        critical=pi / (2.0 * instance.alpha),
        balance=(X2 - X1) / 2.0,
        system_balance=float((X2.sum() - X1.sum()) / 2.0),
        system_average=float((X2.sum() + X1.sum()) / 2.0),
    )


def classify_agent(r: float, b: float, tol: float = CLS_TOL) -> Capability:
    if b > r + tol:
        return Capability.UPPER_NON_CAPABLE
    if b < -r - tol:
        return Capability.LOWER_NON_CAPABLE
    return Capability.CAPABLE


def classify_agents(points: DerivedPoints, tol: float = CLS_TOL) -> list[Capability]:
    return [classify_agent(r, b, tol) for r, b in zip(points.critical, points.balance)]


def classify_game(instance: GameInstance, points: DerivedPoints | None = None,
                  tol: float = CLS_TOL) -> GameType:
    """Concave if b > sum(r); quasiconcave if every agent is capable; else non-concave.

    Expects a canonical instance (b >= 0). The boundary b == sum(r) is
    non-concave.
    """
    if points is None:
        points = derive_points(instance)
    if points.system_balance > points.critical.sum() + tol:
        return GameType.CONCAVE
    if all(c is Capability.CAPABLE for c in classify_agents(points, tol)):
        return GameType.QUASICONCAVE
    return GameType.NON_CONCAVE


def system_demand(instance: GameInstance, shifts) -> tuple[float, float]:
    total = float(np.sum(shifts))
    return float(instance.X1.sum()) + total, float(instance.X2.sum()) - total


def negative_demand_agents(instance: GameInstance, shifts) -> list[str]:
    """Ids of agents whose post-shift demand is negative in either period."""
    x = np.asarray(shifts, float)
    bad = (instance.X1 + x < 0) | (instance.X2 - x < 0)
    return [aid for aid, flag in zip(instance.ids, bad) if flag]


def indicator(s1: float, s2: float) -> int:
    return 1 if s1 >= s2 else 0


def period_payoffs(agent: Agent, shift: float, cp_price: float) -> tuple[float, float]:
    """Payoffs (f1, f2) the agent would get if period 1 or period 2 were the CP period."""
    q = agent.penalty * shift * shift
    return (-cp_price * (agent.demand_p1 + shift) - q,
            -cp_price * (agent.demand_p2 - shift) - q)


def agent_payoff(agent: Agent, shift: float, s1: float, s2: float, cp_price: float) -> float:
    f1, f2 = period_payoffs(agent, shift, cp_price)
    return f1 if indicator(s1, s2) else f2


def period_costs(instance: GameInstance, shifts) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised per-agent costs (-f1, -f2)."""
    x = np.asarray(shifts, float)
    pi = instance.cp_price
    q = instance.alpha * x * x
    return pi * (instance.X1 + x) + q, pi * (instance.X2 - x) + q


def agent_costs(instance: GameInstance, shifts) -> np.ndarray:
    """Realised per-agent cost under the tie-to-period-1 rule."""
    c1, c2 = period_costs(instance, shifts)
    s1, s2 = system_demand(instance, shifts)
    return c1 if indicator(s1, s2) else c2


# -- instance IO ------------------------------------------------------------

def _number(obj: dict, key: str, where: str) -> float:
    if key not in obj:
        raise InputError(key, f"missing in {where}")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InputError(key, f"expected a number in {where}, got {v!r}")
    return float(v)


def instance_from_dict(data: Any) -> GameInstance:
    if not isinstance(data, dict):
        raise InputError("instance", "top level must be a JSON object")
    price = _number(data, "cp_price", "instance")
    raw = data.get("agents")
    if raw is None:
        raise InputError("agents", "missing in instance")
    if not isinstance(raw, list):
        raise InputError("agents", "must be a list")
    agents = []
    for k, a in enumerate(raw):
        where = f"agents[{k}]"
        if not isinstance(a, dict):
            raise InputError(where, "must be an object")
        aid = a.get("id", str(k + 1))
        try:
            agents.append(Agent(str(aid), _number(a, "demand_p1", where),
                                _number(a, "demand_p2", where), _number(a, "penalty", where)))
        except InputError as e:
            raise InputError(f"{where}.{e.field}", str(e).split(": ", 1)[-1]) from None
    return GameInstance(tuple(agents), price)


def load_instance(path: str | Path) -> GameInstance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InputError("instance", f"invalid JSON: {e}") from None
    return instance_from_dict(data)


def as_shifts(instance: GameInstance, shifts: Iterable[float] | Sequence[float]) -> np.ndarray:
    x = np.asarray(list(shifts), float)
    if x.shape != (instance.n,):
        raise InputError("shifts", f"expected {instance.n} values, got {x.size}")
    return x
