"""Command-line front end.

Exit codes: 0 computation completed (non-convergence is flagged in the
payload), 1 internal error, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .benchmark import benchmark as benchmark_report, marginal_gap_identity_check
from . import experiments as ex
from .closed_form import solve_ne, verify_ne
from .dynamics import SolverConfig, solve
from .game_core import (
    InputError,
    as_shifts,
    canonicalize,
    classify_agents,
    classify_game,
    derive_points,
    load_instance,
    negative_demand_agents,
    period_costs,
    system_demand,
)

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT = 0, 1, 2

EPILOG = "exit codes: 0 = computed, 1 = internal error, 2 = bad input"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _finite(o):
    # JSON has no NaN/inf; emit null instead
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    return o


def emit(payload) -> None:
    sys.stdout.write(json.dumps(_finite(json.loads(json.dumps(payload, default=_json_default))),
                                indent=2, allow_nan=False) + "\n")


def _read_json(path: str, what: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(what, f"file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise InputError(what, f"invalid JSON: {e}") from None
    if not isinstance(data, dict):
        raise InputError(what, "must be a JSON object")
    return data


def _load(path: str):
    if not Path(path).exists():
        raise InputError("instance", f"file not found: {path}")
    g = load_instance(path)
    bad = negative_demand_agents(g, np.zeros(g.n))
    if bad:
        raise InputError("demand", f"negative baseline demand for {bad}")
    return g


def _solver_config(path: str | None) -> SolverConfig:
    if not path:
        return SolverConfig()
    try:
        return SolverConfig.from_dict(_read_json(path, "config"))
    except (TypeError, ValueError) as e:
        if isinstance(e, InputError):
            raise
        raise InputError("config", str(e)) from None


# -- commands -----------------------------------------------------------------------

def cmd_classify(args) -> int:
    g = _load(args.instance)
    c = canonicalize(g)
    p = derive_points(c)
    caps = classify_agents(p)
    sign = -1.0 if c.swapped else 1.0
    emit({
        "game_type": classify_game(c, p).value,
        "periods_swapped": c.swapped,
        "system_balance": p.system_balance,
        "system_average": p.system_average,
        "agents": [
            {"id": aid, "critical": float(r), "balance": float(sign * b), "capability": cap.value}
            for aid, r, b, cap in zip(g.ids, p.critical, p.balance, caps)
        ],
    })
    return EXIT_OK


def _evaluate_payload(g, x) -> dict:
    s1, s2 = system_demand(g, x)
    c1, c2 = period_costs(g, x)
    costs = c1 if s1 >= s2 else c2
    return {
        "shifts": dict(zip(g.ids, map(float, x))),
        "s1": s1,
        "s2": s2,
        "per_agent_cost": dict(zip(g.ids, map(float, costs))),
        "total_cost": float(costs.sum()),
    }


def cmd_solve(args) -> int:
    g = _load(args.instance)
    if args.evaluate:
        data = _read_json(args.evaluate, "evaluate")
        sh = data.get("shifts")
        if not isinstance(sh, dict):
            raise InputError("shifts", "expected an object mapping agent id to shift")
        missing = [i for i in g.ids if i not in sh]
        if missing:
            raise InputError("shifts", f"missing agent(s) {missing}")
        x = as_shifts(g, [sh[i] for i in g.ids])
        payload = _evaluate_payload(g, x)
    elif args.method == "closed":
        res = solve_ne(g)
        payload = res.to_dict()
        payload["method"] = "closed"
        x = res.shifts
    else:
        cfg = _solver_config(args.config)
        tr = solve(g, config=cfg)
        x = tr.final
        payload = _evaluate_payload(g, x)
        payload.update({
            "method": "dynamics",
            "game_type": classify_game(canonicalize(g)).value,
            "converged": tr.converged,
            "convergence_mode": tr.convergence_mode.value if tr.convergence_mode else None,
            "iterations": tr.iterations,
        })
        if tr.notes:
            payload["notes"] = tr.notes
            print(f"warning: {'; '.join(tr.notes)}", file=sys.stderr)
        if args.trajectory:
            tr.to_csv(args.trajectory, g, every=args.every)
        if args.figures:
            from .plotting import trajectory_figure

            fig = trajectory_figure(tr, Path(args.figures) / "trajectory.png")
            payload["figures"] = [str(fig)]
    if args.verify:
        payload["verification"] = verify_ne(g, x).to_dict()
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "shift", "cost"])
        for aid in g.ids:
            w.writerow([aid, repr(payload["shifts"][aid]), repr(payload["per_agent_cost"][aid])])
        sys.stdout.write(buf.getvalue())
    else:
        emit(payload)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    g = _load(args.instance)
    res = solve_ne(g)
    payload = {"game_type": res.game_type.value, "closed_form": benchmark_report(g, res.shifts).to_dict()}
    if g.n == 2 and res.balanced:
        payload["closed_form"]["identity_residual"] = marginal_gap_identity_check(g, res.shifts)
    if args.dynamics:
        tr = solve(g, config=_solver_config(args.config), record=False)
        d = benchmark_report(g, tr.final).to_dict()
        d["converged"] = tr.converged
        payload["dynamics"] = d
    emit(payload)
    return EXIT_OK


def cmd_cases(args) -> int:
    emit({"cases": ex.run_case_studies()})
    return EXIT_OK


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InputError("out", str(e)) from None
    return out


def cmd_sweep(args) -> int:
    d = _read_json(args.config, "config") if args.config else {}
    for key in ("seed", "samples_per_n", "n_min", "n_max"):
        v = getattr(args, key)
        if v is not None:
            d[key] = v
    try:
        cfg = ex.SweepConfig.from_dict(d)
    except TypeError as e:
        raise InputError("config", str(e)) from None
    out = _out_dir(args.out)
    rows = ex.agent_number_sweep(cfg, workers=args.workers)
    summary = ex.sweep_summary(rows)
    ex.write_csv(out / "sweep.csv", rows, ex.SWEEP_COLUMNS)
    ex.write_csv(out / "sweep_summary.csv", summary, list(summary[0]))
    (out / "sweep_config.json").write_text(json.dumps(ex.config_dict(cfg), indent=2) + "\n")
    for s in summary:
        print(f"n={s['n']} samples={s['samples']} median={s['median']:.6f} iqr={s['iqr']:.6f} "
              f"non_concave={s['frac_non_concave']:.3f}")
    if args.figures:
        from .plotting import sweep_figure

        sweep_figure(rows, Path(args.figures) / "sweep_efficiency_loss.png")
    return EXIT_OK


def cmd_realworld(args) -> int:
    d = _read_json(args.config, "config") if args.config else {}
    if args.seed is not None:
        d["seed"] = args.seed
    if args.samples is not None:
        d["samples"] = args.samples
    try:
        cfg = ex.RealWorldConfig.from_dict(d)
    except TypeError as e:
        raise InputError("config", str(e)) from None
    path = args.records or str(ex.bundled_records_path())
    if not Path(path).exists():
        raise InputError("records", f"file not found: {path}")
    rep = ex.ingest_cp_records(path)
    for pid in rep.excluded:
        print(f"note: excluded {pid} (zero CP demand)", file=sys.stderr)
    out = _out_dir(args.out)
    rows, samples = ex.real_world_study(rep.records, cfg, solver=_solver_config(args.solver_config),
                                        workers=args.workers)
    summary = ex.level_summary(samples)
    ex.write_csv(out / "realworld.csv", rows, ex.REALWORLD_COLUMNS)
    ex.write_csv(out / "realworld_samples.csv", samples, list(samples[0]))
    ex.write_csv(out / "realworld_summary.csv", summary, list(summary[0]))
    failed = sum(1 for s in samples if not s["converged"])
    for s in summary:
        print(f"level={s['level']} converged={s['converged']}/{s['samples']} "
              f"median={s['median_efficiency_loss']:.6f} within_1.05={s['frac_within_1_05']:.3f}")
    if failed:
        print(f"warning: {failed} sample(s) did not converge", file=sys.stderr)
    if args.figures:
        from .plotting import realworld_figures

        realworld_figures(rows, samples, args.figures)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cpshave", description=__doc__.splitlines()[0], epilog=EPILOG)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="derived points, capabilities and game type", epilog=EPILOG)
    p.add_argument("instance")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("solve", help="equilibrium by closed form or dynamics", epilog=EPILOG)
    p.add_argument("instance")
    p.add_argument("--method", choices=["closed", "dynamics"], default="closed")
    p.add_argument("--verify", action="store_true", help="append the deviation-oracle report")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--config", help="solver options as JSON (dynamics)")
    p.add_argument("--trajectory", help="write the iterate CSV here (dynamics)")
    p.add_argument("--every", type=int, default=1, help="trajectory decimation")
    p.add_argument("--evaluate", help="re-evaluate costs of the shifts in a solve JSON output")
    p.add_argument("--figures", help="directory for a trajectory figure (dynamics)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("benchmark", help="centralized comparison and efficiency loss", epilog=EPILOG)
    p.add_argument("instance")
    p.add_argument("--dynamics", action="store_true", help="also benchmark the dynamics limit")
    p.add_argument("--config", help="solver options as JSON")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("cases", help="the built-in two-agent and six-agent studies", epilog=EPILOG)
    p.set_defaults(func=cmd_cases)

    p = sub.add_parser("sweep", help="efficiency loss against agent count", epilog=EPILOG)
    p.add_argument("--config", help="sweep options as JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--samples-per-n", dest="samples_per_n", type=int)
    p.add_argument("--n-min", dest="n_min", type=int)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--figures", help="directory for a box-plot figure")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("realworld", help="4CP-style study on participant records", epilog=EPILOG)
    p.add_argument("--records", help="CP record CSV (default: bundled synthetic data)")
    p.add_argument("--config", help="study options as JSON")
    p.add_argument("--solver-config", dest="solver_config", help="solver options as JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--figures", help="directory for figures")
    p.set_defaults(func=cmd_realworld)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
