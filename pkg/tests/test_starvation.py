import csv
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evsnn.core_model import GSCD_LAYERS, GSCD_THRESHOLDS, NetworkConfig, random_model
from evsnn.rate_coding import BnnModel, bnn_forward_batch
from evsnn.sim_kernel import run
from evsnn.starvation import (
    LayerLoad,
    evaluate,
    loads_from_ledger,
    loads_from_oracle,
    n_req,
    n_serve,
    single_block_case,
    sweep,
    verify_against_sim,
)
from evsnn.rate_coding import steady_trace


def test_request_count_examples():
    assert n_req(LayerLoad(63, 256, 28)) == 576
    assert n_req(LayerLoad(1, 1, 1)) == 1
    assert n_req(LayerLoad(0, 128, 5)) == 0


def test_service_count_examples():
    assert n_serve(17_000, 0.08, 4) == pytest.approx(340)
    assert n_serve(34_000, 0.08, 4) == pytest.approx(2 * 340)
    assert n_serve(1, 1, 1) == 1


def test_invalid_inputs():
    with pytest.raises(ValueError):
        LayerLoad(1, 1, 0)
    with pytest.raises(ValueError):
        n_serve(1, 1, 0)


def test_full_first_layer_load_at_chip_clock_starves():
    p = evaluate([LayerLoad(63, 256, 28)], 17_000, 4, 0.08)
    assert not p.feasible and p.margin == pytest.approx(340 - 576)


def test_exact_balance_is_feasible_with_zero_margin():
    p = evaluate([LayerLoad(34, 10, 1)], 17_000, 4, 0.08)
    assert p.feasible and p.margin == pytest.approx(0)


@given(
    st.integers(0, 200),
    st.integers(1, 256),
    st.integers(1, 63),
    st.integers(1, 70_000),
    st.integers(1, 8),
)
def test_feasibility_is_monotone(n_spk, n_nrn, th, f, n_cyc):
    load = LayerLoad(n_spk, n_nrn, th)
    base = evaluate([load], f, n_cyc, 0.08)
    assert n_req(load.with_threshold(th + 1)) <= n_req(load)
    if n_spk > 0:
        assert n_req(load.with_threshold(th + 1)) < n_req(load)
    if base.feasible:
        assert evaluate([load.with_threshold(th + 1)], f, n_cyc, 0.08).feasible
        assert evaluate([load], f + 1, n_cyc, 0.08).feasible


def test_sweep_grid_order_and_recommendation():
    loads = [LayerLoad(63, 256, 1), LayerLoad(63, 128, 1)]
    res = sweep(loads, [range(40, 60), range(20, 30)], [5_000, 10_000, 17_000], t_frame_s=0.08)
    assert len(res.points) == 20 * 10 * 3
    assert res.points[0].thresholds == (40, 20) and res.points[1].f_clk_a == 10_000
    rec = res.recommended
    assert rec and all(p.feasible for p in rec)
    f_min = min(p.f_clk_a for p in res.points if p.feasible)
    assert all(p.f_clk_a == f_min for p in rec)
    best = min(max(p.thresholds) for p in res.points if p.feasible and p.f_clk_a == f_min)
    assert all(max(p.thresholds) == best for p in rec)


def test_coupled_sweep_and_csv():
    res = sweep([LayerLoad(63, 256, 1), LayerLoad(20, 128, 1)], [range(1, 65)], range(1_000, 71_000, 1_000), coupled=True)
    assert len(res.points) == 64 * 70
    rows = list(csv.DictReader(io.StringIO(res.to_csv())))
    assert len(rows) == len(res.points)
    assert rows[0].keys() >= {"th_0", "th_1", "f_clk_a_hz", "margin", "feasible"}
    # along each threshold row, feasibility never flips back as the clock rises
    for th in range(1, 65):
        flags = [int(r["feasible"]) for r in rows if int(r["th_0"]) == th]
        assert flags == sorted(flags)


def test_one_hertz_clock_is_always_infeasible():
    res = sweep([LayerLoad(1, 4, 1)], [range(1, 5)], [1], t_frame_s=0.08)
    assert not any(p.feasible for p in res.points) and res.recommended == []


def test_empty_ranges_rejected():
    with pytest.raises(ValueError):
        sweep([LayerLoad(1, 4, 1)], [[]], [1])
    with pytest.raises(ValueError):
        sweep([LayerLoad(1, 4, 1)], [[1]], [])


def test_loads_from_ledger_measure_arrivals():
    cfg = NetworkConfig.from_sizes([16, 8, 2], [1, 4, 1])
    model = random_model([16, 8, 2], [1, 4, 1], seed=2)
    res = run(model, steady_trace(np.full(16, 5), 80_000, 2), 160_000)
    loads = loads_from_ledger(cfg, res)
    assert loads[0].n_spk == pytest.approx(5)
    assert loads[1].n_spk == pytest.approx(res.ledger.per_layer["spikes_delivered"][1] / 2 / 8)


def test_oracle_estimate_equals_activation_total():
    model = random_model([16, 8, 2], [1, 2, 1], seed=2)
    x = np.random.default_rng(0).integers(0, 20, (5, 16))
    acts, _ = bnn_forward_batch(BnnModel.from_model(model), x)
    loads = loads_from_oracle(model.config, acts)
    for load, a in zip(loads, acts):
        assert n_req(load) == pytest.approx(a.sum(axis=1).mean())


def test_gscd_thresholds_reduce_deeper_load():
    model = random_model(GSCD_LAYERS, GSCD_THRESHOLDS, seed=0)
    x = np.full((1, 256), 63)
    acts, _ = bnn_forward_batch(BnnModel.from_model(model), x)
    loads = loads_from_oracle(model.config, acts)
    assert n_req(loads[0]) == 63 * 256


def test_feasible_point_with_half_margin_serves_within_a_frame():
    load = LayerLoad(10, 17, 1)  # 170 requests against 340 services
    model, trace, dur, point = single_block_case(load, 17_000)
    assert point.relative_margin == pytest.approx(0.5, abs=0.01)
    v = verify_against_sim(point, model, trace, dur)
    assert v.agrees and not v.simulated_starved


def test_double_load_starves_lowest_priority():
    load = LayerLoad(40, 17, 1)  # 680 requests, twice the service rate
    model, trace, dur, point = single_block_case(load, 17_000)
    v = verify_against_sim(point, model, trace, dur)
    assert v.predicted_starved and v.simulated_starved
    assert v.evidence["layer_0"]["neuron"] == 16


def test_boundary_band_is_flagged():
    load = LayerLoad(20, 17, 1)  # 340 vs 339 services at the rounded clock
    _, _, _, point = single_block_case(load, 17_000)
    assert point.in_boundary_band()
