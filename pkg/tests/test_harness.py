import csv
import json
import math

import numpy as np
import pytest

from mixdro.core import INF, DiscreteSchema, GroundMetric, Hypothesis
from mixdro.cutter import train
from mixdro.dataio import split_indices
from mixdro.harness import (GRID_LIMIT, DEFAULT_ALPHAS, DEFAULT_EPSILONS, BenchmarkReport, CVGrid, SplitPlan,
                            SyntheticSpec, expected_loss, generate_synthetic, method_config, prediction_error,
                            run_benchmark, run_cv, run_feature_treatment_study, run_runtime_comparison,
                            run_toy_study, runtime_instance, synthetic_instance)
from mixdro.losses import LossSpec
from mixdro.master import ModelConfig

from _gen import random_dataset


def test_paper_grid_shape():
    assert DEFAULT_EPSILONS == (0.0, 1e-5, 1e-3, 1e-1)
    assert len(DEFAULT_ALPHAS) == 13 and DEFAULT_ALPHAS[0] == 0.0 and min(DEFAULT_ALPHAS[1:]) == pytest.approx(1e-6)
    g = CVGrid()
    assert len(g.combos("nom")) == 1
    assert len(g.combos("mixf")) == 1 + 3 * 3  # eps = 0 needs no kappa_y
    assert len(g.combos("r_mixf")) == 13 * 10
    assert len(g.combos("r_nom")) == 13
    assert g.folds == 5


def test_grid_validation():
    with pytest.raises(ValueError):
        CVGrid(epsilons=())
    with pytest.raises(ValueError):
        CVGrid(epsilons=(-1.0,))
    with pytest.raises(ValueError):
        CVGrid(kappa_ys=("J",))
    with pytest.raises(ValueError):
        CVGrid(folds=1)
    with pytest.raises(ValueError, match="limit"):
        CVGrid(epsilons=tuple(range(101)), kappa_ys=tuple(range(1, 11)), alphas=tuple(range(11)))
    assert 101 * 10 * 11 > GRID_LIMIT
    with pytest.raises(ValueError):
        CVGrid().combos("svm")


def test_method_config_resolves_tokens():
    loss = LossSpec("hinge")
    cfg = method_config("mixf", {"epsilon": 0.1, "kappa_y": "K", "alpha": 0.0}, loss, 7)
    assert cfg.metric.kappa_y == 7.0 and cfg.mode == "mixed"
    cfg = method_config("conf", {"epsilon": 0.1, "kappa_y": INF, "alpha": 0.5}, loss, 7)
    assert math.isinf(cfg.metric.kappa_y) and cfg.mode == "continuous_baseline" and cfg.ridge_alpha == 0.5


def test_prediction_error_and_loss():
    data = random_dataset(np.random.default_rng(0), "classification", N=6, Mx=1, schema=DiscreteSchema(()))
    h = Hypothesis(0.0, [0.0])
    assert prediction_error(h, data) == float(np.mean(data.y != 1))  # sign(0) -> +1
    assert expected_loss(h, data, LossSpec("hinge")) == 1.0
    reg = random_dataset(np.random.default_rng(1), "regression", N=5, Mx=1, schema=DiscreteSchema(()))
    assert prediction_error(Hypothesis(0.0, [0.0]), reg) == pytest.approx(float(np.mean(reg.y ** 2)))


def test_synthetic_is_deterministic():
    spec = SyntheticSpec(seed=4)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert a.X.tobytes() == b.X.tobytes() and a.Z.tobytes() == b.Z.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert not np.array_equal(generate_synthetic(SyntheticSpec(seed=5)).Z, a.Z)


def test_synthetic_shapes_and_noise():
    data = generate_synthetic(SyntheticSpec())
    assert (data.N, data.Mx, data.Mz, data.K) == (20, 0, 20, 20)
    assert set(np.unique(data.y)) <= {-1.0, 1.0}
    inst = synthetic_instance(SyntheticSpec(N=200, seed=1))
    clean = np.where(inst.truth.score(inst.train) >= 0, 1.0, -1.0)
    assert np.mean(clean != inst.train.y) == pytest.approx(0.15, abs=1e-12)
    reg = synthetic_instance(SyntheticSpec(N=500, Mx=2, K=5, levels=3, loss=LossSpec("huber"), seed=2))
    r = reg.train.y * 3 * reg.signal_scale - reg.truth.score(reg.train)
    assert np.std(r) == pytest.approx(0.1 * reg.signal_scale, rel=0.15)
    assert runtime_instance(30, seed=3).K == 8 and runtime_instance(30, seed=3).Mx == 22


def test_single_combo_cv_equals_direct_train(rng):
    data = random_dataset(rng, "classification", N=20, Mx=2, schema=DiscreteSchema((3, 2)))
    grid = CVGrid((0.1,), (2.0,), (0.0,))
    res = run_cv(data, "mixf", grid, LossSpec("hinge"))
    direct = train(data, ModelConfig(LossSpec("hinge"), GroundMetric("l1", 1.0, 2.0, 1), 0.1)).hypothesis
    assert res.hypothesis == direct
    assert res.best == {"epsilon": 0.1, "kappa_y": 2.0, "alpha": 0.0}


def test_zero_epsilon_mixf_equals_nom(rng):
    data = random_dataset(rng, "classification", N=25, Mx=2, schema=DiscreteSchema((3, 2)))
    grid = CVGrid((0.0,), (1.0, INF), (0.0,))
    a = run_cv(data, "mixf", grid, LossSpec("logloss"), seed=1)
    b = run_cv(data, "nom", grid, LossSpec("logloss"), seed=1)
    for u, v in ((a.hypothesis.beta_x, b.hypothesis.beta_x), (a.hypothesis.beta_z, b.hypothesis.beta_z)):
        assert np.allclose(u, v, atol=1e-7)
    assert abs(a.hypothesis.beta0 - b.hypothesis.beta0) <= 1e-7


def test_cv_is_deterministic_and_breaks_ties_early(rng):
    data = random_dataset(rng, "classification", N=20, Mx=1, schema=DiscreteSchema((2, 2)))
    grid = CVGrid((0.0, 1e-5, 0.01), (1.0, INF), (0.0,), folds=4)
    a = run_cv(data, "mixf", grid, LossSpec("hinge"), seed=3)
    b = run_cv(data, "mixf", grid, LossSpec("hinge"), seed=3)
    assert a.best == b.best and a.scores == b.scores
    best_score = min(s for _, s in a.scores)
    first = next(c for c, s in a.scores if s == best_score)
    assert a.best == first


def test_failing_combo_is_skipped(monkeypatch, rng, caplog):
    from mixdro import harness

    data = random_dataset(rng, "classification", N=15, Mx=1, schema=DiscreteSchema((2,)))
    real = harness._fit

    def flaky(data, method, combo, *a):
        if combo["epsilon"] == 0.5:
            raise RuntimeError("boom")
        return real(data, method, combo, *a)

    monkeypatch.setattr(harness, "_fit", flaky)
    res = run_cv(data, "mixf", CVGrid((0.0, 0.5), (1.0,), (0.0,), 3), LossSpec("hinge"))
    assert [c["epsilon"] for c, _ in res.scores] == [0.0]
    assert "skipped" in caplog.text


def test_benchmark_with_nom_only(tmp_path, rng):
    data = random_dataset(rng, "classification", N=30, Mx=2, schema=DiscreteSchema((3,)))
    plan = SplitPlan(count=3, fraction=0.8, seed=7)
    rep = run_benchmark(data, ["nom"], plan, CVGrid((0.0,), (1.0,), (0.0,), 3), LossSpec("hinge"),
                        name="toy", out_dir=tmp_path)
    assert rep.methods == ["nom"] and len(rep.table_rows()) == 1
    assert all(0 <= e <= 1 for e in rep.errors["nom"])
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["seeds"] == [7, 8, 9] and doc["splits"] == 3 and list(doc["errors"]) == ["nom"]
    rows = list(csv.DictReader((tmp_path / "table.csv").read_text().splitlines()))
    assert [r["method"] for r in rows] == ["nom"]
    assert sorted(p.name for p in (tmp_path / "log").iterdir()) == [f"nom_split00{s}.csv" for s in range(3)]
    # each split error reproduces from (seed, grid)
    tr, te = split_indices(data.N, 0.8, 8)
    h = train(data.subset(tr), method_config("nom", {"epsilon": 0.0, "kappa_y": None, "alpha": 0.0},
                                             LossSpec("hinge"), 3)).hypothesis
    assert rep.errors["nom"][1] == prediction_error(h, data.subset(te))


def test_benchmark_records_failures(monkeypatch, rng):
    from mixdro import harness

    data = random_dataset(rng, "classification", N=20, Mx=1, schema=DiscreteSchema(()))
    monkeypatch.setattr(harness, "run_cv", lambda *a, **k: (_ for _ in ()).throw(RuntimeError("x")))
    rep = run_benchmark(data, ["nom", "mixf"], SplitPlan(2), CVGrid((0.0,), (1.0,), (0.0,), 2), LossSpec("hinge"))
    assert len(rep.failures) == 4 and all(math.isnan(e) for e in rep.errors["mixf"])


def test_report_statistics():
    rep = BenchmarkReport("d", "h", "hinge", ["nom", "mixf"], SplitPlan(4), {},
                          {"nom": [0.1, 0.2, 0.3, 0.2], "mixf": [0.05, 0.1, 0.25, 0.1]},
                          {"nom": [1.0] * 4, "mixf": [2.0] * 4})
    assert rep.mean("nom") == pytest.approx(0.2)
    assert rep.std("nom") == pytest.approx(np.std([0.1, 0.2, 0.3, 0.2], ddof=1))
    p = rep.p_value("mixf", "nom")
    assert 0 < p < 0.05
    assert rep.table_rows()[1]["p_vs_nom"] == p


def test_feature_treatment_endpoints(rng):
    """t = K reproduces the mixed model and t = 0 the continuous baseline exactly."""
    spec = SyntheticSpec(N=12, K=4, seed=3)
    inst = synthetic_instance(spec)
    data = inst.train
    cfg = ModelConfig(spec.loss, GroundMetric("l1", 1.0, 1.0, 1), 0.05)
    full = train(data.fold_discrete(range(data.K)), cfg).hypothesis
    assert full == train(data, cfg).hypothesis
    none = train(data.fold_discrete(()), cfg)
    conf = train(data, ModelConfig(cfg.loss, cfg.metric, 0.05, mode="continuous_baseline"))
    assert none.objective == conf.objective
    assert np.array_equal(none.hypothesis.beta_x, np.concatenate([conf.hypothesis.beta_x, conf.hypothesis.beta_z]))


def test_feature_treatment_curve(tmp_path):
    curve = run_feature_treatment_study(SyntheticSpec(N=10, K=3, seed=0), [0, 3], grid_eps=(0.01, 0.1),
                                        replicates=2, folds=2, test_size=50)
    assert curve.losses.shape == (2, 2) and np.all(np.isfinite(curve.losses))
    assert curve.spearman in (-1.0, 1.0) or math.isnan(curve.spearman)
    curve.write_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "treated,mean_loss,std_loss"
    with pytest.raises(ValueError):
        run_feature_treatment_study(SyntheticSpec(K=3), [4], replicates=1)


def test_toy_study(tmp_path):
    rep = run_toy_study(replicates=40, epsilons=(0.0, 0.85, 2.0, 10.0), seed=1)
    s = rep.summary()
    assert s[0]["mixf_mean"] == pytest.approx(s[0]["empirical_mean"], abs=1e-7)
    assert s[0]["conf_mean"] == pytest.approx(s[0]["empirical_mean"], abs=1e-6)
    assert np.allclose(rep.mixf[:, 2:], 2.0, atol=1e-9)  # all mass on the atoms with loss 2
    assert s[3]["conf_mean"] > 5 and s[3]["conf_mean"] > s[2]["conf_mean"] > s[1]["conf_mean"]
    assert np.allclose(rep.mixf_atoms.sum(axis=2), 1.0)
    assert np.all(rep.conf_off_mass[:, 0] < 1e-9)
    rep.write(tmp_path / "atoms.csv", tmp_path / "values.csv")
    rows = list(csv.DictReader((tmp_path / "atoms.csv").read_text().splitlines()))
    assert {r["model"] for r in rows} == {"empirical", "mixf", "conf"}
    assert len(list(csv.DictReader((tmp_path / "values.csv").read_text().splitlines()))) == 4
    again = run_toy_study(replicates=40, epsilons=(0.0, 0.85, 2.0, 10.0), seed=1)
    assert np.array_equal(again.conf, rep.conf) and np.array_equal(again.empirical, rep.empirical)


def test_runtime_comparison():
    rows = run_runtime_comparison(Ns=(20,), losses=(LossSpec("hinge"),))
    assert len(rows) == 1 and rows[0]["gap"] < 1e-5
