"""Case studies, the agent-number sweep and the 4CP-style real-world pipeline.

Random draws use numpy's PCG64 generator seeded through ``SeedSequence``
with a spawn key per unit of work, ``(n, sample)`` for the sweep and
``(level_index, sample)`` for the real-world study. Results therefore do not
depend on worker count or execution order.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .benchmark import centralized_solve, efficiency_loss, peak_ratio
from .closed_form import solve_ne
from .dynamics import SolverConfig, solve
from .game_core import (
    Agent,
    GameInstance,
    GameType,
    InputError,
    canonicalize,
    classify_game,
    derive_points,
    system_demand,
)

THREADS_ENV = "CPSHAVE_THREADS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


# -- case studies ---------------------------------------------------------------

def two_agent_case(alpha: tuple[float, float]) -> GameInstance:
    return GameInstance((Agent("x", 3.0, 10.0, alpha[0]), Agent("y", 6.0, 3.0, alpha[1])), 1.0)


CASE_ALPHAS = {"case1": (0.1, 0.2), "case2": (0.1, 0.5), "case3": (0.6, 0.5)}
CASE_REFERENCE_P = {"case1": 1.125, "case2": 1.0941, "case3": 1.0, "table1": 1.1317}
TABLE1_REPORTED_SHIFTS = np.array([-2.0, 3.85, -1.25, 0.93, 1.97, -1.0])
TABLE1_REPORTED_CENTRALIZED = np.array([0.36, 0.72, 0.18, 0.15, 0.36, 0.73])


def table1_instance() -> GameInstance:
    return GameInstance.from_arrays(
        [7, 3, 10, 1, 2, 5], [3, 13, 4, 4, 6, 3], [0.2, 0.1, 0.4, 0.5, 0.2, 0.1], 1.0
    )


def case_instances() -> dict[str, GameInstance]:
    cases = {k: two_agent_case(a) for k, a in CASE_ALPHAS.items()}
    cases["table1"] = table1_instance()
    return cases


def run_case_studies(config: SolverConfig | None = None) -> list[dict]:
    rows = []
    for name, g in case_instances().items():
        ne = solve_ne(g)
        tr = solve(g, config=config, record=False)
        cen = centralized_solve(g)
        rows.append({
            "case": name,
            "game_type": ne.game_type.value,
            "closed_form_shifts": [float(v) for v in ne.shifts],
            "dynamics_shifts": [float(v) for v in tr.final],
            "dynamics_converged": tr.converged,
            "dynamics_iterations": tr.iterations,
            "centralized_shifts": [float(v) for v in cen],
            "efficiency_loss_closed_form": efficiency_loss(g, ne.shifts, cen),
            "efficiency_loss_dynamics": efficiency_loss(g, tr.final, cen),
            "peak_ratio": peak_ratio(g, ne.shifts, cen),
            "reference_efficiency_loss": CASE_REFERENCE_P[name],
        })
    return rows


# -- agent-number sweep -----------------------------------------------------------

class RejectionBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    n_min: int = 2
    n_max: int = 50
    samples_per_n: int = 1000
    demand_range: tuple[float, float] = (0.0, 15.0)
    penalty_range: tuple[float, float] = (0.0, 0.5)
    cp_price: float = 1.0
    seed: int = 0
    min_penalty: float = 1e-6
    max_draws: int = 10_000
    filter: str = "non_concave_or_quasiconcave"

    def __post_init__(self):
        if self.n_min < 2 or self.n_max < self.n_min:
            raise InputError("n_min", "need 2 <= n_min <= n_max")
        if self.samples_per_n < 1:
            raise InputError("samples_per_n", "must be >= 1")
        for name in ("demand_range", "penalty_range"):
            lo, hi = getattr(self, name)
            if not (0 <= lo < hi):
                raise InputError(name, "need 0 <= low < high")
        if self.cp_price <= 0:
            raise InputError("cp_price", "must be > 0")
        if self.filter not in ("non_concave_or_quasiconcave", "none"):
            raise InputError("filter", f"unknown filter {self.filter!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(sorted(unknown)[0], "unknown sweep option")
        d = dict(d)
        for k in ("demand_range", "penalty_range"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def admitted(instance: GameInstance) -> bool:
    """Sweep admission rule: -sum(r) < b < sum(r) on the canonical instance."""
    p = derive_points(canonicalize(instance))
    rs = p.critical.sum()
    return -rs < p.system_balance < rs


def draw_instance(rng: np.random.Generator, n: int, cfg: SweepConfig) -> tuple[GameInstance, int]:
    """Draw until admitted. Returns the instance and the number of draws used."""
    lo, hi = cfg.demand_range
    plo, phi = cfg.penalty_range
    for k in range(1, cfg.max_draws + 1):
        X = rng.uniform(lo, hi, size=(2, n))
        a = rng.uniform(plo, phi, size=n)
        if np.any(a < cfg.min_penalty) or np.any(X <= lo):
            continue
        g = GameInstance.from_arrays(X[0], X[1], a, cfg.cp_price)
        if cfg.filter == "none" or admitted(g):
            return g, k
    raise RejectionBudgetExceeded(f"no admissible draw for n={n} in {cfg.max_draws} tries")


def _sweep_n(args) -> list[dict]:
    cfg, n = args
    rows = []
    for s in range(cfg.samples_per_n):
        rng = stream(cfg.seed, n, s)
        try:
            g, draws = draw_instance(rng, n, cfg)
        except RejectionBudgetExceeded:
            rows.append({"n": n, "sample": s, "game_type": "rejected",
                         "efficiency_loss": float("nan"), "peak_ratio": float("nan"), "draws": cfg.max_draws})
            continue
        ne = solve_ne(g)
        cen = centralized_solve(g)
        rows.append({
            "n": n,
            "sample": s,
            "game_type": ne.game_type.value,
            "efficiency_loss": efficiency_loss(g, ne.shifts, cen),
            "peak_ratio": peak_ratio(g, ne.shifts, cen),
            "draws": draws,
        })
    return rows


def agent_number_sweep(cfg: SweepConfig, workers: int | None = None) -> list[dict]:
    workers = workers or default_workers()
    jobs = [(cfg, n) for n in range(cfg.n_min, cfg.n_max + 1)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_sweep_n, jobs))
    else:
        parts = [_sweep_n(j) for j in jobs]
    return [row for part in parts for row in part]


def sweep_summary(rows: list[dict]) -> list[dict]:
    out = []
    for n in sorted({r["n"] for r in rows}):
        sub = [r for r in rows if r["n"] == n and r["game_type"] != "rejected"]
        p = np.array([r["efficiency_loss"] for r in sub])
        types = [r["game_type"] for r in sub]
        q1, med, q3 = np.percentile(p, [25, 50, 75]) if p.size else (np.nan,) * 3
        iqr = q3 - q1
        out.append({
            "n": n,
            "samples": len(sub),
            "rejected_samples": sum(1 for r in rows if r["n"] == n) - len(sub),
            "median": float(med),
            "q1": float(q1),
            "q3": float(q3),
            "iqr": float(iqr),
            "mean": float(p.mean()) if p.size else float("nan"),
            "outliers": int(np.sum((p < q1 - 1.5 * iqr) | (p > q3 + 1.5 * iqr))),
            "frac_non_concave": types.count("non_concave") / max(1, len(types)),
            "frac_quasiconcave": types.count("quasiconcave") / max(1, len(types)),
            "frac_concave": types.count("concave") / max(1, len(types)),
        })
    return out


SWEEP_COLUMNS = ["n", "sample", "game_type", "efficiency_loss", "peak_ratio"]


def write_csv(path: str | Path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


# -- real-world pipeline ---------------------------------------------------------------

@dataclass(frozen=True)
class CpRecord:
    participant_id: str
    cp_demands: tuple[float, float, float, float]

    @property
    def avg_cp_demand(self) -> float:
        return float(np.mean(self.cp_demands))


@dataclass(frozen=True)
class RealWorldConfig:
    cp_price: float = 66.76
    levels: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0, 1.25)
    penalty_variation: float = 0.2
    samples: int = 50
    seed: int = 0
    noncp_ratio: float = 0.65  # system non-CP average / total CP demand

    def __post_init__(self):
        if self.cp_price <= 0:
            raise InputError("cp_price", "must be > 0")
        if any(v < 0 for v in self.levels) or not self.levels:
            raise InputError("levels", "variations must be >= 0")
        if self.penalty_variation < 0:
            raise InputError("penalty_variation", "must be >= 0")
        if self.samples < 1:
            raise InputError("samples", "must be >= 1")
        if self.noncp_ratio <= 0:
            raise InputError("noncp_ratio", "must be > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "RealWorldConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(sorted(unknown)[0], "unknown real-world option")
        d = dict(d)
        if "levels" in d:
            d["levels"] = tuple(d["levels"])
        return cls(**d)


@dataclass
class IngestReport:
    records: list[CpRecord]
    excluded: list[str] = field(default_factory=list)


def ingest_cp_records(path: str | Path) -> IngestReport:
    """Read ``participant_id,cp1,cp2,cp3,cp4`` rows; drop all-zero participants."""
    recs, excluded = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expect = ["participant_id", "cp1", "cp2", "cp3", "cp4"]
        if header is None or [h.strip() for h in header] != expect:
            raise InputError("header", f"expected {','.join(expect)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise InputError(f"row {lineno}", f"expected 5 fields, got {len(row)}")
            try:
                vals = tuple(float(c) for c in row[1:])
            except ValueError:
                raise InputError(f"row {lineno}", "non-numeric CP demand") from None
            if any(v < 0 or not np.isfinite(v) for v in vals):
                raise InputError(f"row {lineno}", "CP demand must be finite and >= 0")
            if all(v == 0 for v in vals):
                excluded.append(row[0].strip())
                continue
            recs.append(CpRecord(row[0].strip(), vals))
    if not recs:
        raise InputError("records", "no participant with non-zero CP demand")
    return IngestReport(recs, excluded)


def bundled_records_path():
    return resources.files("cpshave") / "data" / "synthetic_4cp.csv"


def generate_synthetic_records(n: int = 136, seed: int = 2024, n_zero: int = 6) -> list[list]:
    """Synthetic 4CP table: lognormal participant sizes (kW), mild event-to-event noise.

    ``n_zero`` extra all-zero rows mimic entities the ingestion step drops.
    """
    rng = stream(seed, 0)
    base = rng.lognormal(mean=np.log(1.5e5), sigma=1.3, size=n)
    noise = rng.uniform(0.85, 1.15, size=(n, 4))
    rows = [[f"P{k + 1:03d}"] + [round(float(v), 1) for v in base[k] * noise[k]] for k in range(n)]
    for z in range(n_zero):
        rows.append([f"Z{z + 1:03d}", 0.0, 0.0, 0.0, 0.0])
    return rows


def write_records(path: str | Path, rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant_id", "cp1", "cp2", "cp3", "cp4"])
        w.writerows(rows)


def build_real_world_instance(records: list[CpRecord], system_noncp_avg: float, config: RealWorldConfig,
                              rng: np.random.Generator, demand_variation: float) -> GameInstance:
    """CP period is period 2; non-CP demand follows each participant's CP share."""
    if not records:
        raise InputError("records", "empty")
    if system_noncp_avg <= 0:
        raise InputError("system_noncp_avg", "must be > 0")
    cp = np.array([r.avg_cp_demand for r in records])
    share = cp / cp.sum()
    v, w = demand_variation, config.penalty_variation
    noncp = np.maximum(0.0, share * system_noncp_avg * (1.0 + rng.uniform(-v, v, cp.size)))
    a_min = config.cp_price / (2.0 * cp)
    alpha = np.maximum(a_min, a_min * (1.0 + rng.uniform(-w, w, cp.size)))
    return GameInstance.from_arrays(noncp, cp, alpha, config.cp_price,
                                    ids=[r.participant_id for r in records])


def cp_charges(instance: GameInstance, shifts) -> np.ndarray:
    """Per-agent charge: price times own demand in the realised CP period."""
    x = np.asarray(shifts, float)
    s1, s2 = system_demand(instance, x)
    own = instance.X1 + x if s1 >= s2 else instance.X2 - x
    return instance.cp_price * own


def _rw_sample(args) -> tuple[list[dict], dict]:
    records, config, solver, noncp_avg, li, level, s = args
    rng = stream(config.seed, li, s)
    g = build_real_world_instance(records, noncp_avg, config, rng, level)
    tr = solve(g, config=solver, record=False)
    x = tr.final
    cen = centralized_solve(g)
    before = config.cp_price * g.X2 if g.X2.sum() >= g.X1.sum() else config.cp_price * g.X1
    after = cp_charges(g, x)
    rows = [
        {"level": level, "sample": s, "participant_id": pid, "charge_before": float(cb),
         "charge_after": float(ca), "shift": float(xi)}
        for pid, cb, ca, xi in zip(g.ids, before, after, x)
    ]
    summary = {
        "level": level,
        "sample": s,
        "game_type": classify_game(canonicalize(g)).value,
        "converged": tr.converged,
        "iterations": tr.iterations,
        "efficiency_loss": efficiency_loss(g, x, cen),
        "peak_ratio": peak_ratio(g, x, cen),
        "charge_before": float(before.sum()),
        "charge_after": float(after.sum()),
        "savings": float(before.sum() - after.sum()),
    }
    return rows, summary


def real_world_study(records: list[CpRecord], config: RealWorldConfig,
                     solver: SolverConfig | None = None, workers: int | None = None,
                     system_noncp_avg: float | None = None) -> tuple[list[dict], list[dict]]:
    """Per-participant charge rows and per-sample summaries for every level."""
    if system_noncp_avg is None:
        system_noncp_avg = config.noncp_ratio * sum(r.avg_cp_demand for r in records)
    jobs = [(records, config, solver, system_noncp_avg, li, lv, s)
            for li, lv in enumerate(config.levels) for s in range(config.samples)]
    workers = workers or default_workers()
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            out = list(ex.map(_rw_sample, jobs))
    else:
        out = [_rw_sample(j) for j in jobs]
    rows = [r for part, _ in out for r in part]
    return rows, [s for _, s in out]


def level_summary(samples: list[dict]) -> list[dict]:
    out = []
    for lv in sorted({s["level"] for s in samples}):
        sub = [s for s in samples if s["level"] == lv]
        ok = [s for s in sub if s["converged"]]
        p = np.array([s["efficiency_loss"] for s in ok])
        pr = np.array([s["peak_ratio"] for s in ok])
        q1, med, q3 = np.percentile(p, [25, 50, 75]) if p.size else (np.nan,) * 3
        out.append({
            "level": lv,
            "samples": len(sub),
            "converged": len(ok),
            "median_efficiency_loss": float(med),
            "q1_efficiency_loss": float(q1),
            "q3_efficiency_loss": float(q3),
            "max_efficiency_loss": float(p.max()) if p.size else float("nan"),
            "frac_within_1_05": float(np.mean(p <= 1.05)) if p.size else float("nan"),
            "max_peak_ratio_error": float(np.max(np.abs(pr - 1))) if pr.size else float("nan"),
            "mean_savings": float(np.mean([s["savings"] for s in ok])) if ok else float("nan"),
        })
    return out


REALWORLD_COLUMNS = ["level", "sample", "participant_id", "charge_before", "charge_after", "shift"]


def config_dict(cfg) -> dict:
    d = asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def game_type_counts(rows: list[dict]) -> dict[str, int]:
    counts = {t.value: 0 for t in GameType}
    for r in rows:
        if r["game_type"] in counts:
            counts[r["game_type"]] += 1
    return counts
