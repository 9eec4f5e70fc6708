import csv
import json

import numpy as np
import pytest

from rulkit import cmapss, evaluation as ev, regimes, windowing as win
from rulkit.errors import EmptyInput, UsageError
from rulkit.model import ModelConfig, init_params
from rulkit.training import TrainConfig, train


class TestRmse:
    def test_hand_example(self):
        assert ev.rmse([3.0, -4.0], [0.0, 0.0]) == pytest.approx(np.sqrt(12.5))

    def test_zero_for_perfect(self):
        assert ev.rmse([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            ev.rmse([], [])


class TestScore:
    def test_late_unit_term(self):
        # +10 cycles late with a_late=10 contributes e - 1
        assert ev.phm08_score([10.0], [0.0]) == pytest.approx(np.e - 1.0)

    def test_early_unit_term(self):
        # 13 cycles early with a_early=13 contributes e - 1
        assert ev.phm08_score([0.0], [13.0]) == pytest.approx(np.e - 1.0)

    def test_asymmetry_penalizes_late_more(self):
        late = ev.phm08_score([20.0], [0.0])
        early = ev.phm08_score([0.0], [20.0])
        assert late > early

    def test_zero_error_zero_score(self):
        assert ev.phm08_score([5.0, 7.0], [5.0, 7.0]) == 0.0

    def test_sums_over_units(self):
        single = ev.phm08_score([10.0], [0.0])
        double = ev.phm08_score([10.0, 10.0], [0.0, 0.0])
        assert double == pytest.approx(2 * single)

    def test_custom_constants(self):
        p = ev.ScoreParams(a_early=5.0, a_late=2.0)
        assert ev.phm08_score([2.0], [0.0], p) == pytest.approx(np.e - 1.0)
        assert ev.phm08_score([0.0], [5.0], p) == pytest.approx(np.e - 1.0)

    def test_invalid_constants(self):
        with pytest.raises(UsageError):
            ev.ScoreParams(a_early=0.0)


class TestErrorStats:
    def test_simple_vector(self):
        s = ev.error_stats([1.0, 2.0, 3.0])
        assert s.mean == 2.0
        assert s.median == 2.0
        assert s.std == pytest.approx(1.0)
        assert s.skew == pytest.approx(0.0)

    def test_right_skewed(self):
        s = ev.error_stats([1.0, 1.0, 10.0])
        assert s.mean == 4.0
        assert s.median == 1.0
        assert s.skew > 0
        assert s.pearson_skew > 0

    def test_adjusted_skew_formula(self):
        e = np.array([1.0, 2.0, 4.0, 8.0])
        n = 4
        m2 = ((e - e.mean()) ** 2).mean()
        m3 = ((e - e.mean()) ** 3).mean()
        expected = (m3 / m2 ** 1.5) * np.sqrt(n * (n - 1)) / (n - 2)
        assert ev.error_stats(e).skew == pytest.approx(expected, rel=1e-12)

    def test_mirrored_sign_flip(self):
        a = ev.error_stats([1.0, 1.0, 10.0]).skew
        b = ev.error_stats([-1.0, -1.0, -10.0]).skew
        assert a == pytest.approx(-b)

    def test_constant_vector(self):
        s = ev.error_stats([5.0, 5.0, 5.0])
        assert s.std == 0.0 and s.skew == 0.0 and s.pearson_skew == 0.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            ev.error_stats([])


def fitted_pipeline(seed=0, n_units=8):
    train_ds, test_ds = cmapss.generate_synthetic(cmapss.SyntheticSpec(
        n_units=n_units, life_range=(40, 50), seed=seed))
    rmodel = regimes.fit_regime_model(train_ds, k=1, seed=seed)
    normed = regimes.normalize(train_ds, rmodel)
    spec = win.WindowSpec(mode="expanding")
    samples = win.build_training_set(normed, spec)
    spec = win.WindowSpec(mode="expanding", pad_to=samples.pad_to)
    cfg = ModelConfig(d_features=samples.n_features, d_model=8, n_heads=2,
                      n_blocks=1, dim_ffw=6, dropout_rate=0.0,
                      input_transform="linear", max_len=samples.pad_to)
    return train_ds, test_ds, rmodel, spec, samples, cfg


class TestEvaluate:
    def test_report_shape_and_consistency(self):
        _, test_ds, rmodel, spec, samples, cfg = fitted_pipeline()
        params, buffers = init_params(cfg, seed=0)
        report = ev.evaluate(cfg, params, buffers, rmodel, spec, test_ds)
        n = len(test_ds)
        assert len(report.unit_ids) == n
        assert (report.predictions >= 0).all()
        assert (report.predictions <= 125).all()
        assert report.rmse == pytest.approx(
            ev.rmse(report.predictions, report.truths))
        assert report.score == pytest.approx(
            ev.phm08_score(report.predictions, report.truths))

    def test_truth_clipped_to_ceiling(self):
        _, test_ds, rmodel, spec, _, cfg = fitted_pipeline()
        test_ds.true_test_ruls = {u: 300 for u in test_ds.trajectories}
        params, buffers = init_params(cfg, seed=0)
        report = ev.evaluate(cfg, params, buffers, rmodel, spec, test_ds)
        assert (report.truths == 125).all()

    def test_missing_truth_rejected(self):
        train_ds, _, rmodel, spec, _, cfg = fitted_pipeline()
        params, buffers = init_params(cfg, seed=0)
        with pytest.raises(UsageError):
            ev.evaluate(cfg, params, buffers, rmodel, spec, train_ds)

    def test_trained_model_beats_constant_zero(self):
        train_ds, test_ds, rmodel, spec, samples, cfg = fitted_pipeline(seed=3)
        tc = TrainConfig(max_epochs=30, patience=30, learning_rate=3e-3, seed=3)
        _, params, buffers = train(samples, cfg, tc)
        report = ev.evaluate(cfg, params, buffers, rmodel, spec, test_ds)
        zero_rmse = ev.rmse(np.zeros_like(report.truths), report.truths)
        assert report.rmse < zero_rmse

    def test_oracle_predictor_scores_zero(self):
        # scoring the truth against itself: both metrics collapse to zero
        truths = np.array([30.0, 80.0, 125.0])
        assert ev.rmse(truths, truths) == 0.0
        assert ev.phm08_score(truths, truths) == 0.0

    def test_constant_offset_rmse(self):
        truths = np.full(10, 50.0)
        preds = truths + 5.0
        assert ev.rmse(preds, truths) == pytest.approx(5.0)


class TestReportFiles:
    def make_report(self):
        return ev.EvalReport(
            unit_ids=np.array([1, 2]), end_cycles=np.array([40, 55]),
            truths=np.array([30.0, 60.0]), predictions=np.array([28.0, 66.0]),
            rmse=ev.rmse([28.0, 66.0], [30.0, 60.0]),
            score=ev.phm08_score([28.0, 66.0], [30.0, 60.0]),
            stats=ev.error_stats([-2.0, 6.0]))

    def test_per_unit_csv(self, tmp_path):
        path = tmp_path / "per_unit.csv"
        self.make_report().write_per_unit_csv(path)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["unit_id", "end_cycle", "true", "predicted", "error"]
        assert rows[1][:2] == ["1", "40"]
        assert float(rows[2][4]) == pytest.approx(6.0)

    def test_metrics_csv(self, tmp_path):
        path = tmp_path / "metrics.csv"
        report = self.make_report()
        report.write_metrics_csv(path)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["rmse", "score", "mean", "median", "std", "skew"]
        assert float(rows[1][0]) == pytest.approx(report.rmse, abs=1e-6)

    def test_summary_json(self, tmp_path):
        path = tmp_path / "summary.json"
        report = self.make_report()
        report.write_summary(path)
        d = json.loads(path.read_text())
        assert d["rmse"] == pytest.approx(report.rmse)
        assert set(d) == {"rmse", "score", "mean", "median", "std", "skew",
                          "pearson_skew"}
