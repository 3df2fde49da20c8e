import filecmp

import numpy as np
import pytest

from cpshave.experiments import (
    CpRecord,
    RealWorldConfig,
    RejectionBudgetExceeded,
    SWEEP_COLUMNS,
    SweepConfig,
    admitted,
    agent_number_sweep,
    build_real_world_instance,
    bundled_records_path,
    cp_charges,
    draw_instance,
    generate_synthetic_records,
    ingest_cp_records,
    level_summary,
    real_world_study,
    run_case_studies,
    stream,
    sweep_summary,
    write_csv,
    write_records,
)
from cpshave.game_core import InputError, canonicalize, derive_points


def test_streams_are_reproducible_and_distinct():
    a = stream(1, 5, 3).random(4)
    np.testing.assert_array_equal(a, stream(1, 5, 3).random(4))
    assert not np.array_equal(a, stream(1, 5, 4).random(4))
    assert not np.array_equal(a, stream(2, 5, 3).random(4))


def test_admission_rule():
    cfg = SweepConfig(filter="none")
    seen_in = seen_out = 0
    for s in range(300):
        g, _ = draw_instance(stream(0, 3, s), 3, cfg)
        p = derive_points(canonicalize(g))
        inside = -p.critical.sum() < p.system_balance < p.critical.sum()
        assert admitted(g) == inside
        seen_in += inside
        seen_out += not inside
    assert seen_in and seen_out


def test_admitted_draws_satisfy_rule():
    cfg = SweepConfig()
    for s in range(100):
        g, draws = draw_instance(stream(0, 2, s), 2, cfg)
        p = derive_points(canonicalize(g))
        assert p.system_balance < p.critical.sum()
        assert draws >= 1
        assert np.all(g.alpha >= cfg.min_penalty)


def test_rejection_budget():
    cfg = SweepConfig(penalty_range=(0.0, 1e-7), max_draws=20, n_min=2, n_max=2, samples_per_n=2)
    with pytest.raises(RejectionBudgetExceeded):
        draw_instance(stream(0, 2, 0), 2, cfg)
    rows = agent_number_sweep(cfg, workers=1)
    assert [r["game_type"] for r in rows] == ["rejected", "rejected"]
    assert sweep_summary(rows)[0]["rejected_samples"] == 2


def test_sweep_config_validation():
    with pytest.raises(InputError):
        SweepConfig(n_min=1)
    with pytest.raises(InputError):
        SweepConfig(penalty_range=(0.5, 0.1))
    with pytest.raises(InputError):
        SweepConfig.from_dict({"samples": 3})
    assert SweepConfig.from_dict({"demand_range": [0, 10]}).demand_range == (0, 10)


def test_sweep_is_deterministic_across_workers(tmp_path):
    cfg = SweepConfig(n_min=2, n_max=6, samples_per_n=20, seed=9)
    a = agent_number_sweep(cfg, workers=1)
    b = agent_number_sweep(cfg, workers=2)
    write_csv(tmp_path / "a.csv", a, SWEEP_COLUMNS)
    write_csv(tmp_path / "b.csv", b, SWEEP_COLUMNS)
    assert filecmp.cmp(tmp_path / "a.csv", tmp_path / "b.csv", shallow=False)
    assert len(a) == 5 * 20


def test_sweep_summary_statistics():
    cfg = SweepConfig(n_min=2, n_max=3, samples_per_n=50, seed=1)
    rows = agent_number_sweep(cfg, workers=1)
    summ = sweep_summary(rows)
    assert [s["n"] for s in summ] == [2, 3]
    for s in summ:
        p = np.array([r["efficiency_loss"] for r in rows if r["n"] == s["n"]])
        assert s["median"] == pytest.approx(np.median(p))
        assert s["iqr"] == pytest.approx(s["q3"] - s["q1"])
        assert s["frac_concave"] == 0.0
        assert s["frac_non_concave"] + s["frac_quasiconcave"] == pytest.approx(1.0)
    assert all(r["efficiency_loss"] >= 1 - 1e-12 for r in rows)
    assert all(abs(r["peak_ratio"] - 1) < 1e-6 for r in rows)


def test_identical_capable_agents_any_n():
    from cpshave.closed_form import solve_ne
    from cpshave.game_core import GameInstance, GameType

    for n in (2, 5, 20):
        g = GameInstance.from_arrays([4] * n, [6] * n, [0.2] * n, 1.0)
        assert solve_ne(g).game_type is GameType.QUASICONCAVE


def _write(tmp_path, text):
    path = tmp_path / "cp.csv"
    path.write_text(text)
    return path


def test_ingest_records(tmp_path):
    path = _write(tmp_path, "participant_id,cp1,cp2,cp3,cp4\nP1,10,12,11,9\nZ,0,0,0,0\n\nP2,1,2,3,4\n")
    rep = ingest_cp_records(path)
    assert [r.participant_id for r in rep.records] == ["P1", "P2"]
    assert rep.records[0].avg_cp_demand == 10.5
    assert rep.excluded == ["Z"]


@pytest.mark.parametrize("text, field", [
    ("id,a,b,c,d\nP1,1,2,3,4\n", "header"),
    ("participant_id,cp1,cp2,cp3,cp4\nP1,1,2,3\n", "row 2"),
    ("participant_id,cp1,cp2,cp3,cp4\nP1,1,2,3,4\nP2,1,x,3,4\n", "row 3"),
    ("participant_id,cp1,cp2,cp3,cp4\nP1,1,-2,3,4\n", "row 2"),
    ("participant_id,cp1,cp2,cp3,cp4\nZ,0,0,0,0\n", "records"),
])
def test_ingest_errors_name_the_row(tmp_path, text, field):
    with pytest.raises(InputError) as e:
        ingest_cp_records(_write(tmp_path, text))
    assert e.value.field == field


def test_bundled_data_matches_generator(tmp_path):
    rep = ingest_cp_records(bundled_records_path())
    assert len(rep.records) == 136
    assert len(rep.excluded) == 6
    path = tmp_path / "regen.csv"
    write_records(path, generate_synthetic_records())
    assert path.read_text() == bundled_records_path().read_text()


def test_zero_variation_instance():
    recs = [CpRecord("a", (10, 10, 10, 10)), CpRecord("b", (90, 90, 90, 90))]
    cfg = RealWorldConfig(cp_price=2.0, penalty_variation=0.0)
    g = build_real_world_instance(recs, 1000.0, cfg, stream(0, 0), demand_variation=0.0)
    np.testing.assert_allclose(g.X1, [100.0, 900.0])
    np.testing.assert_allclose(g.X2, [10.0, 90.0])
    np.testing.assert_allclose(g.alpha, 2.0 / (2 * g.X2))


def test_full_pipeline_instance_is_valid():
    recs = ingest_cp_records(bundled_records_path()).records
    cfg = RealWorldConfig()
    noncp = cfg.noncp_ratio * sum(r.avg_cp_demand for r in recs)
    g = build_real_world_instance(recs, noncp, cfg, stream(0, 1, 0), demand_variation=0.5)
    assert g.n == 136
    p = derive_points(canonicalize(g))
    assert p.balance.sum() == pytest.approx(p.system_balance, rel=1e-12)
    assert not canonicalize(g).swapped  # CP period is period 2
    assert np.all(g.X1 >= 0)
    a_min = cfg.cp_price / (2 * g.X2)
    assert np.all(g.alpha >= a_min) and np.all(g.alpha <= a_min * 1.2 + 1e-12)
    with pytest.raises(InputError):
        build_real_world_instance(recs, 0.0, cfg, stream(0, 0), 0.5)


def test_charge_accounting_identity():
    recs = ingest_cp_records(bundled_records_path()).records
    cfg = RealWorldConfig(levels=(0.25, 1.25), samples=2, seed=3)
    rows, samples = real_world_study(recs, cfg, workers=1)
    assert len(rows) == 2 * 2 * 136
    for s in samples:
        sub = [r for r in rows if r["level"] == s["level"] and r["sample"] == s["sample"]]
        before = sum(r["charge_before"] for r in sub)
        after = sum(r["charge_after"] for r in sub)
        assert before == pytest.approx(s["charge_before"])
        assert after == pytest.approx(s["charge_after"])
        assert s["savings"] == pytest.approx(before - after)
        assert s["converged"]
        assert abs(s["peak_ratio"] - 1) < 1e-6
    summ = level_summary(samples)
    assert [s["level"] for s in summ] == [0.25, 1.25]


def test_cp_charges_use_realised_period(cases):
    g = cases["case3"]
    x = np.array([5 / 6, 1.0])
    # period 2 stays the CP period at the concave equilibrium
    np.testing.assert_allclose(cp_charges(g, x), g.X2 - x)


def test_real_world_config_validation():
    with pytest.raises(InputError):
        RealWorldConfig(levels=(-0.1,))
    with pytest.raises(InputError):
        RealWorldConfig(cp_price=0)
    with pytest.raises(InputError):
        RealWorldConfig.from_dict({"variation": 1})


def test_case_studies_report(cases):
    rows = {r["case"]: r for r in run_case_studies()}
    assert set(rows) == set(cases)
    assert rows["case1"]["efficiency_loss_closed_form"] == pytest.approx(1.125)
    assert rows["table1"]["game_type"] == "non_concave"
    assert all(r["dynamics_converged"] for r in rows.values())
