import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparsenav.scenestim import (ACTIVATION, CUE_KINDS, PRECISION, CalibCurve, CueEvent,
                                 FeatureBelief, IntersectionTruth, RangeBelief, SceneConfigError,
                                 SegmentObs, classify_parked_car, classify_road_rois,
                                 distance_from_height, fit_calibration, frame_messages,
                                 kf1d_predict, kf1d_update, message_for_cue, propagate, read_jsonl,
                                 replay, run_approach, simulate_cues, track_cross_traffic,
                                 write_jsonl)


def car(x, area=1000.0, ratio=2.5, score=0.97, h=20.0, left=None, right=None, y=300.0, frame=0):
    w = ratio * h
    return SegmentObs(frame, "car", score, (x - w / 2, y - h / 2, x + w / 2, y + h / 2), h,
                      left if left is not None else h, right if right is not None else h,
                      area, x, 1232.0)


# --- range filter ---------------------------------------------------------------------

def test_kf1d_predict_example():
    rb = kf1d_predict(RangeBelief(50.0, 4.0, q=0.01), 1.0)
    assert (rb.x, rb.var) == (49.0, pytest.approx(4.01))
    same = kf1d_predict(RangeBelief(50.0, 4.0, q=0.0), 0.0)
    assert (same.x, same.var) == (50.0, 4.0)
    with pytest.raises(ValueError):
        kf1d_predict(rb, -1.0)


def test_kf1d_update_example():
    rb = kf1d_update(RangeBelief(49.0, 4.01), 47.0, 2.89)
    k = 4.01 / (4.01 + 2.89)
    assert k == pytest.approx(0.5812, abs=1e-4)
    assert rb.x == pytest.approx(47.84, abs=5e-3)
    assert rb.var == pytest.approx(1.680, abs=5e-4)


def test_kf1d_equal_variance_midpoint():
    rb = kf1d_update(RangeBelief(10.0, 3.0), 20.0, 3.0)
    assert rb.x == pytest.approx(15.0) and rb.var == pytest.approx(1.5)


def test_kf1d_huge_noise_keeps_prior():
    rb = kf1d_update(RangeBelief(10.0, 3.0), 90.0, 1e12)
    assert rb.x == pytest.approx(10.0, abs=1e-9) and rb.var == pytest.approx(3.0)


def _information_oracle(x, var, z, r):
    prec = 1.0 / var + 1.0 / r
    return (x / var + z / r) / prec, 1.0 / prec


def test_kf1d_matches_information_form():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        rb = RangeBelief(rng.uniform(20, 80), rng.uniform(0.5, 10), q=0.01)
        x, var = rb.x, rb.var
        for _ in range(rng.integers(1, 30)):
            dt = rng.uniform(0, 1)
            rb = kf1d_predict(rb, dt)
            x, var = x - dt, var + 0.01
            z, r = rng.normal(x, 2), rng.uniform(1, 40)
            rb = kf1d_update(rb, z, r)
            x, var = _information_oracle(x, var, z, r)
            assert abs(rb.x - x) <= 1e-9 and abs(rb.var - var) <= 1e-9


# --- calibration -----------------------------------------------------------------------

def test_calibration_fit_recovers_curve():
    h = np.linspace(10, 200, 40)
    fit = fit_calibration(h, 750.0 / h + 1.0)
    assert fit.a == pytest.approx(750.0) and fit.b == pytest.approx(1.0, abs=1e-9)
    assert fit.sigma < 1e-9
    with pytest.raises(ValueError):
        fit_calibration([1, 2], [3, 4])


def test_distance_out_of_range_is_none():
    c = CalibCurve()
    assert distance_from_height(c, "stop-sign", 1.0) is None
    d, sig = distance_from_height(c, "stop-sign", 25.0)
    assert d == pytest.approx(30.0) and sig == 1.7
    assert distance_from_height(c, "traffic-light", 50.0)[1] == 5.9


# --- classifiers -------------------------------------------------------------------------

@pytest.mark.parametrize("n,flag", [(21, 1), (20, 0)])
def test_road_threshold(n, flag):
    m = np.zeros((10, 30), dtype=bool)
    m[:, 0:10].flat[:n] = True
    assert classify_road_rois(m, [(0, 10, 0, 10), (0, 10, 10, 20), (0, 10, 20, 30)])[0] == flag


def test_three_way_pattern():
    m = np.zeros((10, 30), dtype=bool)
    m[:, 0:10] = True
    m[:, 20:30] = True
    assert classify_road_rois(m, [(0, 10, 0, 10), (0, 10, 10, 20), (0, 10, 20, 30)]) == (1, 0, 1)


def test_empty_roi_rejected():
    with pytest.raises(SceneConfigError):
        classify_road_rois(np.ones((5, 5)), [(0, 0, 0, 5), (0, 5, 0, 5), (0, 5, 0, 5)])


def test_cross_traffic_match():
    assert track_cross_traffic([car(400, 1000)], [car(430, 1025)]) == (1, 0)
    assert track_cross_traffic([car(430, 1025)], [car(400, 1000)]) == (0, 1)


def test_cross_traffic_area_rule():
    assert track_cross_traffic([car(400, 1000)], [car(430, 1100)]) == (0, 0)


def test_cross_traffic_ratio_filter():
    assert track_cross_traffic([car(400, ratio=1.5)], [car(430, ratio=1.5)]) == (0, 0)


def test_parked_car_orientation():
    prev = car(600, left=60, right=80)
    assert classify_parked_car(prev, prev) == (0, 1)
    mirrored = car(600, left=80, right=60)
    assert classify_parked_car(mirrored, mirrored) == (1, 0)
    even = car(600, left=70, right=70)
    assert classify_parked_car(even, even) == (0, 0)


def test_classifiers_are_pure():
    a = [car(400, 1000)], [car(430, 1025)]
    assert track_cross_traffic(*a) == track_cross_traffic(*a)


# --- messages and beliefs ------------------------------------------------------------------

def test_one_way_exclusion_message():
    b = FeatureBelief(active=True)
    out = propagate(b, message_for_cue(CueEvent("z_owR", True), b))
    assert out.p("L") == 0.05


def test_neutral_is_identity():
    b = FeatureBelief.from_logodds((0.3, -1.2, 0.0, 2.5), True)
    msgs = [m for k in CUE_KINDS for m in message_for_cue(CueEvent(k, False), b)]
    assert all(mu == 0.5 for _, mu in msgs)
    assert propagate(b, msgs) == b


def test_signal_pair_example():
    b = propagate(FeatureBelief(), [("int", 0.95), ("int", 0.97)])
    oracle = Fraction(95 * 97, 95 * 97 + 5 * 3)
    assert b.p("int") == pytest.approx(0.99838, abs=1e-5)
    assert abs(b.p("int") - float(oracle)) < 1e-12
    assert b.active


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=12))
def test_log_odds_equals_product(mus):
    b = propagate(FeatureBelief(), [("S", mu) for mu in mus])
    num = Fraction(1, 2)
    den = Fraction(1, 2)
    for mu in mus:
        num *= Fraction(mu)
        den *= 1 - Fraction(mu)
    assert abs(b.p("S") - float(num / (num + den))) <= 1e-12


def test_all_neutral_stream_stays_half():
    b = FeatureBelief()
    for _ in range(500):
        b = propagate(b, frame_messages([CueEvent(k, False) for k in CUE_KINDS], b, 100.0))
    assert all(v == 0.5 for v in b.probabilities.values())


def test_no_drift_before_activation():
    # car and lane cues are ignored until the intersection itself is established
    b = FeatureBelief()
    cues = [CueEvent(k, True) for k in ("z_ctR", "z_ctL", "z_pcR", "z_lanes", "z_owR")]
    for _ in range(50):
        b = propagate(b, frame_messages(cues, b, 10.0))
    assert b.logodds == (0.0, 0.0, 0.0, 0.0) and not b.active


def test_dissent_near_intersection():
    b = FeatureBelief.from_logodds((3.0, 0.0, 0.0, 0.0), True)
    msgs = frame_messages([CueEvent("z_roadR", True)], b, 15.0)
    assert ("L", 0.49) in msgs and ("S", 0.49) in msgs
    assert ("R", 0.49) not in msgs
    far = frame_messages([CueEvent("z_roadR", True)], b, 25.0)
    assert all(mu != 0.49 for _, mu in far)


def test_message_range_checked():
    with pytest.raises(ValueError):
        propagate(FeatureBelief(), [("S", 1.0)])


# --- simulation -----------------------------------------------------------------------

FOUR_WAY = IntersectionTruth(left=True, straight=True, right=True, traffic_light=True)


def test_rate_zero_never_detects():
    rng = np.random.default_rng(0)
    assert not any(c.detected for _ in range(200) for c in simulate_cues(FOUR_WAY, 30.0, 0.0, rng))


def test_rate_one_always_sees_light():
    rng = np.random.default_rng(0)
    for _ in range(100):
        cues = {c.kind: c.detected for c in simulate_cues(FOUR_WAY, 30.0, 1.0, rng)}
        assert cues["z_TL"]


def test_empirical_rate():
    rng = np.random.default_rng(7)
    hits = sum({c.kind: c.detected for c in simulate_cues(FOUR_WAY, 30.0, 0.6, rng)}["z_TL"]
               for _ in range(10000))
    assert 0.58 <= hits / 10000 <= 0.62


def test_default_rates_are_precisions():
    rng = np.random.default_rng(3)
    n = 4000
    hits = sum({c.kind: c.detected for c in simulate_cues(FOUR_WAY, 30.0, rng=rng)}["z_roadL"]
               for _ in range(n))
    assert abs(hits / n - PRECISION["z_roadL"]) < 0.03


def test_out_of_range_silent():
    rng = np.random.default_rng(0)
    assert not any(c.detected for c in simulate_cues(FOUR_WAY, 500.0, 1.0, rng))


def test_approach_detects_four_way():
    res = run_approach(FOUR_WAY, np.random.default_rng(1))
    assert res.full_detection_m is not None and res.full_detection_m > 0
    assert all(res.final.p(f) > ACTIVATION for f in "LSR")
    assert res.range_error_m is not None


def test_plain_road_stays_inactive():
    res = run_approach(IntersectionTruth(straight=True), np.random.default_rng(1))
    assert res.activation_m is None and not res.final.active


# --- replay ---------------------------------------------------------------------------------

def test_replay_round_trip(tmp_path):
    recs = [{"t": 0.1 * k, "frame": k, "odo_dt_m": 0.5,
             "cues": [{"kind": "z_SS", "detected": k % 2 == 0},
                      {"kind": "z_roadL", "detected": True}],
             "segments": [{"frame": k, "cls": "stop-sign", "score": 0.99,
                           "bbox": [0, 0, 10, 10], "height_px": 750.0 / (40 - 0.5 * k),
                           "area_px": 100, "x_center_px": 600, "image_width_px": 1232}]}
            for k in range(40)]
    path = tmp_path / "cues.jsonl"
    write_jsonl(path, recs)
    rows = replay(read_jsonl(path))
    assert len(rows) == 40
    assert rows[-1]["active"] and rows[-1]["p_int"] > 0.99
    assert rows[-1]["range_m"] == pytest.approx(40 - 0.5 * 39, abs=0.5)
    assert replay(read_jsonl(path)) == rows


def test_from_logodds_round_trip():
    b = FeatureBelief.from_logodds((0.3, -1.2, 0.0, 2.5))
    assert b.logodds == pytest.approx((0.3, -1.2, 0.0, 2.5), abs=1e-12)
    assert b.p("R") == pytest.approx(1 / (1 + math.exp(-2.5)), abs=1e-15)


def test_long_streams_do_not_saturate():
    b = FeatureBelief()
    for _ in range(3000):
        b = propagate(b, [("S", 0.97)])
    assert b.logodds[2] == pytest.approx(3000 * math.log(0.97 / 0.03), rel=1e-12)
    for _ in range(3000):
        b = propagate(b, [("S", 0.03)])
    assert abs(b.logodds[2]) < 1e-9


def test_exclusion_outweighs_road_detection():
    b = propagate(FeatureBelief(active=True), [("L", 0.77), ("L", 0.05)])
    assert b.p("L") < 0.5
