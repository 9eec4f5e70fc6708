import io

import numpy as np
import pytest

from rulkit import cmapss
from rulkit.errors import CountMismatch, MalformedRow, NonContiguousCycles


def row(unit, cycle, settings=(0.0, 0.0, 100.0), sensors=None):
    sensors = sensors if sensors is not None else [float(i) for i in range(21)]
    return " ".join(str(v) for v in [unit, cycle, *settings, *sensors])


def test_parse_single_row():
    ds = cmapss.parse_trajectories(row(1, 1) + "\n")
    assert len(ds) == 1
    assert ds.trajectories[1].length == 1


def test_parse_groups_by_unit():
    text = "\n".join([row(1, 1), row(1, 2), row(2, 1)]) + "\n"
    ds = cmapss.parse_trajectories(text)
    assert sorted(ds.trajectories) == [1, 2]
    assert ds.trajectories[1].length == 2
    assert ds.trajectories[2].length == 1


def test_parse_wrong_field_count_carries_line_number():
    text = row(1, 1) + "\n1 2 3\n"
    with pytest.raises(MalformedRow) as exc:
        cmapss.parse_trajectories(text)
    assert exc.value.line_no == 2


def test_parse_non_numeric():
    bad = row(1, 1).replace("100.0", "oops")
    with pytest.raises(MalformedRow):
        cmapss.parse_trajectories(bad + "\n")


def test_parse_scientific_notation():
    text = row(1, 1, sensors=[1e-3] + [float(i) for i in range(20)]) + "\n"
    ds = cmapss.parse_trajectories(text)
    assert ds.trajectories[1].sensors[0, 0] == pytest.approx(1e-3)


def test_cycle_gap_rejected():
    text = "\n".join([row(1, 1), row(1, 3)]) + "\n"
    with pytest.raises(NonContiguousCycles):
        cmapss.parse_trajectories(text)


def test_cycle_restart_rejected():
    text = "\n".join([row(1, 1), row(1, 2), row(1, 1)]) + "\n"
    with pytest.raises(NonContiguousCycles):
        cmapss.parse_trajectories(text)


def make_test_dataset(n_units=3, length=4):
    text = "\n".join(row(u, c) for u in range(1, n_units + 1)
                     for c in range(1, length + 1)) + "\n"
    return cmapss.parse_trajectories(text, kind="test")


class TestRulTruth:
    def test_positional_pairing(self):
        ds = cmapss.parse_rul_truth("112\n98\n20\n", make_test_dataset(3))
        assert ds.true_test_ruls == {1: 112, 2: 98, 3: 20}

    def test_count_mismatch(self):
        with pytest.raises(CountMismatch):
            cmapss.parse_rul_truth("\n", make_test_dataset(1))

    def test_negative_value(self):
        with pytest.raises(MalformedRow):
            cmapss.parse_rul_truth("-5\n10\n3\n", make_test_dataset(3))


class TestRoundTrip:
    def test_parse_write_parse(self):
        text = "\n".join([row(1, 1, (0.25, -3.0, 100.0)), row(1, 2), row(2, 1)]) + "\n"
        ds = cmapss.parse_trajectories(text)
        buf = io.StringIO()
        cmapss.write_trajectories(ds, buf)
        ds2 = cmapss.parse_trajectories(buf.getvalue())
        for u in ds.trajectories:
            np.testing.assert_allclose(ds.trajectories[u].sensors,
                                       ds2.trajectories[u].sensors, rtol=1e-6)
            np.testing.assert_allclose(ds.trajectories[u].op_settings,
                                       ds2.trajectories[u].op_settings, rtol=1e-6)

    def test_empty_dataset(self):
        buf = io.StringIO()
        cmapss.write_trajectories(cmapss.Dataset({}, "train"), buf)
        assert buf.getvalue() == ""

    def test_synthetic_round_trip(self):
        train, _ = cmapss.generate_synthetic(cmapss.SyntheticSpec(n_units=5, seed=1))
        buf = io.StringIO()
        cmapss.write_trajectories(train, buf)
        back = cmapss.parse_trajectories(buf.getvalue())
        for u in train.trajectories:
            np.testing.assert_allclose(train.trajectories[u].sensors,
                                       back.trajectories[u].sensors, rtol=1e-6)


class TestSynthetic:
    def test_same_seed_bit_identical(self):
        spec = cmapss.SyntheticSpec(n_units=4, seed=42)
        a_train, a_test = cmapss.generate_synthetic(spec)
        b_train, b_test = cmapss.generate_synthetic(spec)
        for u in a_train.trajectories:
            assert np.array_equal(a_train.trajectories[u].sensors,
                                  b_train.trajectories[u].sensors)
        assert a_test.true_test_ruls == b_test.true_test_ruls

    def test_different_seeds_differ(self):
        a, _ = cmapss.generate_synthetic(cmapss.SyntheticSpec(n_units=4, seed=1))
        b, _ = cmapss.generate_synthetic(cmapss.SyntheticSpec(n_units=4, seed=2))
        assert not np.array_equal(a.trajectories[1].sensors,
                                  b.trajectories[1].sensors)

    def test_regime_count(self):
        train, _ = cmapss.generate_synthetic(
            cmapss.SyntheticSpec(n_units=6, n_regimes=6, seed=0))
        ops = np.concatenate([t.op_settings for t in train.trajectories.values()])
        centroids = cmapss._regime_centroids(6)
        d = np.linalg.norm(ops[:, None, :] - centroids[None], axis=2)
        labels = d.argmin(axis=1)
        assert set(labels) == set(range(6))
        assert d.min(axis=1).max() < 0.1  # every row near one centroid

    def test_zero_noise_piecewise_linear(self):
        train, _ = cmapss.generate_synthetic(
            cmapss.SyntheticSpec(n_units=2, n_regimes=1, noise_std=0.0, seed=5))
        traj = train.trajectories[1]
        s = traj.sensors[:, 1]  # sensor 2 carries the trend
        second_diff = np.diff(s, 2)
        # flat then linear: at most one knee in the second difference
        assert (np.abs(second_diff) > 1e-9).sum() <= 2

    def test_test_truths_recorded(self):
        _, test = cmapss.generate_synthetic(cmapss.SyntheticSpec(n_units=5, seed=9))
        assert set(test.true_test_ruls) == set(test.trajectories)
        assert all(v >= 0 for v in test.true_test_ruls.values())
