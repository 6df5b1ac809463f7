import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajlstm.dataset import FeatureSegment, HorizonSpec, scale_features, select_layout
from trajlstm.evaluation import (Ensemble, EvaluationError, HorizonErrors, aggregate_report,
                                 bag_predict, evaluate, pooled_mse, predict_full_track,
                                 read_horizon_table, rmse_per_vehicle, select_best,
                                 write_horizon_table, write_per_vehicle, write_percentiles)
from trajlstm.neural import init_params, variant_config, zero_params
from trajlstm.neighborhood import FeatureLayout

H2 = HorizonSpec((1, 2))


def small(seed=0, out=4, name="reference"):
    return init_params(variant_config(name, output_size=out, lstm_size=6, dense_sizes=(5, 4)), seed)


def constant_output(value, out=4):
    p = zero_params(variant_config("reference", output_size=out, lstm_size=3, dense_sizes=(2, 2)))
    # outputs are scaled by 10 (x) and 10 (vy) on the way out
    p.arrays["out.b"][:] = value / 10.0
    return p


def random_segments(n_vehicles=4, frames=40, seed=0, horizons=H2):
    rng = np.random.default_rng(seed)
    segs = {}
    for vid in range(1, n_vehicles + 1):
        feats = rng.normal(0, 3, (frames, 59))
        targets = rng.normal(0, 2, (frames, horizons.output_size))
        targets[-5:] = np.nan
        segs[vid] = [FeatureSegment(vid, np.arange(frames), feats, targets)]
    return segs


def test_rmse_examples():
    truth = np.zeros((2, 4))
    pred = np.array([[3.0, 0, 3.0, 0], [4.0, 0, 4.0, 0]])
    e = rmse_per_vehicle(pred, truth, H2)
    np.testing.assert_allclose(e.lateral_rmse, [np.sqrt(12.5)] * 2)
    assert e.lateral_rmse[0] == pytest.approx(3.5355, abs=1e-4)
    assert not e.long_speed_rmse.any()
    e = rmse_per_vehicle(np.ones((5, 4)), np.zeros((5, 4)), H2)
    assert e.lateral_rmse.tolist() == [1.0, 1.0]


def test_rmse_skips_absent_targets():
    truth = np.array([[0.0, 0, 0, 0], [np.nan] * 4])
    e = rmse_per_vehicle(np.array([[2.0, 0, 2, 0], [100.0] * 4]), truth, H2)
    assert e.lateral_rmse.tolist() == [2.0, 2.0]
    with pytest.raises(EvaluationError):
        rmse_per_vehicle(np.zeros((1, 4)), np.full((1, 4), np.nan), H2)
    with pytest.raises(EvaluationError):
        rmse_per_vehicle(np.zeros((1, 4)), np.zeros((1, 6)), H2)


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_rmse_invariant_under_reordering(seed):
    rng = np.random.default_rng(seed)
    pred, truth = rng.normal(size=(20, 4)), rng.normal(size=(20, 4))
    perm = rng.permutation(20)
    a, b = rmse_per_vehicle(pred, truth, H2), rmse_per_vehicle(pred[perm], truth[perm], H2)
    np.testing.assert_allclose(a.lateral_rmse, b.lateral_rmse, rtol=1e-14)
    assert (a.lateral_rmse >= 0).all() and (a.long_speed_rmse >= 0).all()


def test_aggregate_is_vehicle_mean():
    per = {1: HorizonErrors((1,), np.array([0.5]), np.array([1.0])),
           2: HorizonErrors((1,), np.array([0.9]), np.array([3.0]))}
    rep = aggregate_report(per, [np.zeros((3, 2))])
    assert rep.mean.lateral_rmse[0] == pytest.approx(0.7)
    assert rep.mean.long_speed_rmse[0] == pytest.approx(2.0)
    single = aggregate_report({1: per[1]}, [np.zeros((1, 2))])
    assert single.mean.lateral_rmse.tolist() == [0.5]
    with pytest.raises(EvaluationError):
        aggregate_report({}, [])


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_percentiles_monotone(seed):
    rng = np.random.default_rng(seed)
    errs = rng.standard_cauchy(size=(50, 4))
    errs[rng.random((50, 4)) < 0.2] = np.nan
    rep = aggregate_report({1: HorizonErrors((1, 2), np.zeros(2), np.zeros(2))}, [errs])
    assert (np.diff(rep.percentiles, axis=-1) >= 0).all()


def test_predict_zero_model():
    p = zero_params(variant_config("reference", output_size=4, lstm_size=4, dense_sizes=(3, 3)))
    out = predict_full_track(p, np.ones((7, 49)))
    assert out.shape == (7, 4) and not out.any()
    with pytest.raises(EvaluationError):
        predict_full_track(p, np.ones((7, 44)))


def test_predict_unscales_bypass_exactly():
    p = zero_params(variant_config("reference", output_size=2, lstm_size=4, dense_sizes=(3, 3)))
    # route x_targ -> lateral output and vy_targ -> speed output
    p.arrays["out.W"][0, -4] = 1.0
    p.arrays["out.W"][1, -1] = 1.0
    rng = np.random.default_rng(0)
    raw = rng.normal(0, 20, (9, 49))
    out = predict_full_track(p, scale_features(raw))
    np.testing.assert_allclose(out[:, 0], raw[:, 0], rtol=1e-12)
    np.testing.assert_allclose(out[:, 1], raw[:, 3], rtol=1e-12)


def test_predict_chunked_matches_whole():
    p = small(3)
    x = np.random.default_rng(1).normal(size=(50, 49))
    whole = predict_full_track(p, x)
    a, state = predict_full_track(p, x[:20], return_state=True)
    b = predict_full_track(p, x[20:], initial=state)
    np.testing.assert_allclose(np.vstack([a, b]), whole, rtol=0, atol=1e-12)


def test_bagging_examples():
    x = np.zeros((3, 49))
    np.testing.assert_allclose(bag_predict([constant_output(1.0), constant_output(3.0)], x), 2.0)
    p = small(2)
    feats = np.random.default_rng(0).normal(size=(10, 49))
    assert np.array_equal(bag_predict([p], feats), predict_full_track(p, feats))
    np.testing.assert_allclose(bag_predict([p] * 4, feats), predict_full_track(p, feats), rtol=1e-15)


def test_ensemble_rejects_mismatch():
    with pytest.raises(EvaluationError):
        Ensemble([])
    with pytest.raises(EvaluationError):
        Ensemble([small(0, out=4), small(1, out=6)])
    with pytest.raises(EvaluationError):
        Ensemble([small(0), small(1, name="no-ff")])


def test_bagged_mse_below_member_mean():
    segs = random_segments()
    members = [small(s) for s in range(4)]
    ids = list(segs)
    bagged = pooled_mse(Ensemble(members), segs, ids, H2)
    mean_member = np.mean([pooled_mse(m, segs, ids, H2) for m in members], axis=0)
    assert (bagged <= mean_member + 1e-12).all()


def test_evaluate_report_consistency():
    segs = random_segments()
    p = small(0)
    rep = evaluate(p, segs, [1, 2, 3], H2)
    assert sorted(rep.per_vehicle) == [1, 2, 3]
    np.testing.assert_allclose(rep.mean.lateral_rmse,
                               np.mean([e.lateral_rmse for e in rep.per_vehicle.values()], axis=0))
    # hand recomputation for one vehicle
    seg = segs[2][0]
    lay = FeatureLayout()
    pred = predict_full_track(p, scale_features(select_layout(seg.features, lay), lay))
    ok = ~np.isnan(seg.targets[:, 0])
    expected = np.sqrt(np.mean((pred[ok, 0] - seg.targets[ok, 0]) ** 2))
    assert rep.per_vehicle[2].lateral_rmse[0] == pytest.approx(expected, rel=1e-12)
    with pytest.raises(EvaluationError):
        evaluate(p, segs, [1], HorizonSpec((1, 2, 3)))


def test_select_best_orders_by_last_horizon():
    segs = random_segments()
    cands = {f"m{i}": small(i) for i in range(6)}
    best = select_best(cands, segs, [1, 2], H2, k=4)
    scores = {n: evaluate(p, segs, [1, 2], H2).mean.lateral_rmse[-1] for n, p in cands.items()}
    assert best == sorted(scores, key=scores.get)[:4]


def test_report_writers(tmp_path):
    segs = random_segments()
    rep = evaluate(small(0), segs, [1, 2], H2)
    write_horizon_table({"reference": rep}, tmp_path / "h.csv")
    rows = read_horizon_table(tmp_path / "h.csv")
    assert [r[:2] for r in rows] == [("reference", 1), ("reference", 2)]
    assert rows[0][2] == rep.mean.lateral_rmse[0]
    write_horizon_table({"reference": rep}, tmp_path / "t.csv", horizons=(2,))
    assert len(read_horizon_table(tmp_path / "t.csv")) == 1
    write_percentiles(rep, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "horizon,channel,p5,p25,p50,p75,p95"
    assert lines[1].startswith("1,lateral_position,") and lines[2].startswith("1,longitudinal_speed,")
    write_per_vehicle(rep, tmp_path / "v.csv")
    assert len((tmp_path / "v.csv").read_text().splitlines()) == 1 + 2 * 2
