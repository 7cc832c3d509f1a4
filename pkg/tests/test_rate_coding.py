import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_model
from evsnn.core_model import ConfigError, random_model
from evsnn.rate_coding import (
    N_CHANNELS,
    WINDOW,
    BnnModel,
    FeatureFrame,
    InputWindow,
    bnn_forward,
    bnn_forward_batch,
    compare_snn_to_oracle,
    decode,
    encode,
    encode_values,
    map_thresholds,
    sliding_windows,
    steady_trace,
)
from evsnn.sim_kernel import run


@pytest.mark.parametrize("value", [0, 1, 16, 63])
def test_encode_counts_and_spacing(value):
    values = np.zeros(WINDOW, int)
    values[7] = value
    tr = encode(InputWindow(values), 80_000)
    assert len(tr) == value and np.all(tr.neurons == 7) and np.all(tr.polarities == 1)
    if value:
        expected = [(s * 80_000) // (value + 1) for s in range(1, value + 1)]
        assert tr.times.tolist() == expected


def test_encode_is_deterministic_and_frame_offset():
    v = np.arange(WINDOW) % 64
    a, b = encode_values(v, 80_000, 3), encode_values(v, 80_000, 3)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.neurons, b.neurons)
    assert a.times.min() >= 3 * 80_000 and a.times.max() < 4 * 80_000


def test_burst_mode_packs_spikes_at_frame_start():
    tr = encode_values(np.array([5, 0, 2]), 80_000, 1, burst=True)
    assert sorted(tr.times.tolist()) == [80_000, 80_000, 80_050, 80_050, 80_100, 80_150, 80_200]


def test_negative_values_rejected():
    with pytest.raises(ValueError):
        encode_values(np.array([-1]), 100)


@given(st.integers(1, 8), st.data())
def test_encoding_exactness_for_any_k(k, data):
    cap = (1 << k) - 1
    values = np.array(data.draw(st.lists(st.integers(0, cap), min_size=1, max_size=64)))
    frame = 80_000 if k <= 6 else 500_000
    tr = encode_values(values, frame)
    counts = np.bincount(tr.neurons, minlength=len(values))
    assert np.array_equal(counts, values)
    assert np.all(tr.times < frame)


def test_feature_frame_validation():
    FeatureFrame(np.full(N_CHANNELS, 63))
    with pytest.raises(ValueError):
        FeatureFrame(np.full(N_CHANNELS, 64))
    with pytest.raises(ValueError):
        FeatureFrame(np.zeros(15))
    FeatureFrame(np.full(N_CHANNELS, 255), activation_bits=8)


def test_window_slides_by_one_frame():
    frames = [FeatureFrame(np.full(N_CHANNELS, i)) for i in range(20)]
    wins = sliding_windows(frames)
    assert all(len(w) == WINDOW for w in wins)
    for a, b in zip(wins, wins[1:]):
        assert np.array_equal(b.values[N_CHANNELS:], a.values[:-N_CHANNELS])
    assert np.all(wins[0].values[N_CHANNELS:] == 0)


def test_single_path_identity():
    signs = -np.ones((4, 1), int)
    signs[2, 0] = 1
    x = np.array([0, 0, 5, 0])
    out = bnn_forward(BnnModel((signs,), (1, 1)), x)
    assert out.scores.tolist() == [5]


def test_hidden_floor_division_and_relu():
    w1 = np.ones((100, 2), int)
    w1[:, 1] = -1
    w2 = np.ones((2, 1), int)
    out = bnn_forward(BnnModel((w1, w2), (1, 28, 1)), np.ones(100, int))
    assert out.activations[1].tolist() == [3, 0]


def test_hidden_activation_clamped_to_cap():
    w = np.ones((100, 1), int)
    out = bnn_forward(BnnModel((w, np.ones((1, 1), int)), (1, 1, 1)), np.ones(100, int))
    assert out.activations[1][0] == 63


def test_shape_mismatch_is_an_error():
    with pytest.raises(ConfigError):
        bnn_forward_batch(BnnModel((np.ones((4, 2), int),), (1, 1)), np.ones((1, 5), int))


def test_zero_input_gives_zero_counts():
    model = random_model([16, 8, 4], [1, 2, 1], seed=1)
    res = run(model, None, 160_000)
    rep = compare_snn_to_oracle(res, bnn_forward(BnnModel.from_model(model), np.zeros(16, int)))
    assert rep.ok and rep.max_deviation(2) == 0


def _steady_compare(model, x, frames=4, frame=500_000):
    cfg = model.config
    res = run(model, steady_trace(x, frame, frames), frame * frames)
    return compare_snn_to_oracle(res, bnn_forward(BnnModel.from_model(model), x), activation_bits=cfg.activation_bits)


def test_small_net_steady_state_within_one_count():
    rng = np.random.default_rng(5)
    signs = [np.where(rng.random(s) < 0.5, 1, -1) for s in [(16, 8), (8, 8), (8, 4)]]
    x = rng.integers(0, 64, 16)
    ths = map_thresholds(signs, x[None, :])
    model = make_model([16, 8, 8, 4], ths, signs=signs, frame_ticks=500_000)
    rep = _steady_compare(model, x)
    assert all(r.deviation <= 1 for r in rep.rows)


def test_doubled_threshold_halves_counts():
    w = [np.ones((4, 3), int)]
    x = np.array([10, 10, 10, 10])
    for th in (2, 4):
        model = make_model([4, 3], [1, th], signs=w, frame_ticks=500_000)
        rep = _steady_compare(model, x)
        assert rep.ok
        assert all(r.snn == 40 // th for r in rep.rows if r.layer == 1)


def test_low_thresholds_violate_cap_and_explain():
    model = make_model([16, 8, 2], [1, 1, 1], frame_ticks=2_000_000)
    rep = _steady_compare(model, np.full(16, 40), frame=2_000_000)
    assert not rep.ok and rep.cap_violations
    assert "cap" in rep.explain()[0]


@settings(max_examples=25)
@given(st.integers(0, 2**31), st.integers(1, 8))
def test_mapped_thresholds_respect_cap(seed, k):
    rng = np.random.default_rng(seed)
    sizes = [12, 10, 6]
    signs = [np.where(rng.random((a, b)) < 0.6, 1, -1) for a, b in zip(sizes, sizes[1:])]
    cap = (1 << k) - 1
    x = rng.integers(0, cap + 1, 12)
    ths = map_thresholds(signs, x[None, :], activation_bits=k)
    frame = 80_000 if k <= 6 else 500_000
    frames = 3 if k <= 6 else 2
    model = make_model(sizes, ths, signs=signs, activation_bits=k, frame_ticks=frame * (4 if k > 6 else 6))
    res = run(model, steady_trace(x, model.config.frame_ticks, frames), model.config.frame_ticks * frames)
    assert res.layer_spike_counts[1].max() <= cap


def test_decode_rules():
    assert decode([0, 5, 2]).label == 1
    d = decode([0, 0, 0])
    assert d.label == 0 and d.no_spike
    assert decode([1, 2, 4, 4]).label == 2
    assert decode([[0, 3], [5, 0]]).label == 0
    with pytest.raises(ValueError):
        decode(np.zeros((0, 3)))
