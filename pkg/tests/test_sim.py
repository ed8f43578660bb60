import csv

import numpy as np
import pytest

from ehaoi.core import Policy, UnstableQueueError, default_config
from ehaoi.queueing import QueueParams, md1_mean_delay
from ehaoi.sim import (
    EVENT_KINDS,
    SimSpec,
    energy_trace,
    event_trace,
    make_rng,
    simulate,
    write_event_trace,
)

N = 200_000


def test_deterministic_per_seed():
    spec = SimSpec(QueueParams(0.5, 1.0, 0.4), Policy.MV, 50_000, seed=7)
    a, b = simulate(spec), simulate(spec)
    assert a.mean_peak_aoi_s == b.mean_peak_aoi_s
    for k in a.batches:
        np.testing.assert_array_equal(a.batches[k], b.batches[k])
    c = simulate(SimSpec(QueueParams(0.5, 1.0, 0.4), Policy.MV, 50_000, seed=8))
    assert c.mean_peak_aoi_s != a.mean_peak_aoi_s


def test_replications_are_distinct_streams():
    x = make_rng(1, 0).random(5)
    y = make_rng(1, 1).random(5)
    assert not np.allclose(x, y)
    np.testing.assert_array_equal(x, make_rng(1, 0).random(5))


@pytest.mark.parametrize("policy,params,peak", [
    (Policy.MV, QueueParams(0.5, 1.0, 0.4), 3.7),
    (Policy.ST, QueueParams(0.5, 1.0, threshold=3), 5.5),
])
def test_peak_against_closed_form(policy, params, peak):
    st = simulate(SimSpec(params, policy, N, seed=1))
    assert st.mean_peak_aoi_s.mean == pytest.approx(peak, rel=0.015)


def test_policy_free_reduction():
    ref = md1_mean_delay(QueueParams(0.5, 1.0))
    for policy, params in ((Policy.MV, QueueParams(0.5, 1.0, 1e-9)),
                           (Policy.ST, QueueParams(0.5, 1.0, threshold=1))):
        st = simulate(SimSpec(params, policy, N, seed=2))
        assert st.mean_delay_s.mean == pytest.approx(ref, rel=0.015)


def test_st_m1_and_mv_zero_are_the_same_queue():
    a = simulate(SimSpec(QueueParams(0.5, 1.0, 0.0), Policy.MV, 20_000, seed=5))
    b = simulate(SimSpec(QueueParams(0.5, 1.0, threshold=1), Policy.ST, 20_000, seed=5))
    assert a.mean_delay_s == b.mean_delay_s


@pytest.mark.parametrize("policy,params", [
    (Policy.MV, QueueParams(0.7, 1.0, 0.5)),
    (Policy.ST, QueueParams(0.3, 2.0, threshold=4)),
])
def test_empirical_identities(policy, params):
    st = simulate(SimSpec(params, policy, N, seed=3))
    lam = params.lambda_rate
    # Little's law, rho and the per-packet identity within combined CIs
    assert st.mean_queue_len.covers(lam * st.mean_delay_s.mean, lam * st.mean_delay_s.half_width)
    assert st.rho_observed.covers(params.rho)
    half = 0.5 * (st.mean_delay_s.mean + st.mean_peak_aoi_s.mean)
    assert st.mean_per_packet_aoi_s.covers(
        half, 0.5 * (st.mean_delay_s.half_width + st.mean_peak_aoi_s.half_width))
    assert st.busy_fraction + st.idle_fraction == pytest.approx(1.0)


def test_time_average_exceeds_per_interval_average():
    # the long-run time average weights long intervals more heavily
    st = simulate(SimSpec(QueueParams(0.5, 1.0, 0.4), Policy.MV, N, seed=4))
    assert st.time_avg_aoi_s.mean > st.mean_per_packet_aoi_s.mean + 3 * (
        st.time_avg_aoi_s.half_width + st.mean_per_packet_aoi_s.half_width)


def test_unstable_rejected_but_traceable():
    with pytest.raises(UnstableQueueError):
        simulate(SimSpec(QueueParams(1.2, 1.0), Policy.MV, 1000))
    ev = event_trace(QueueParams(1.2, 1.0), Policy.MV, 200, seed=0)
    assert max(q for _, _, q in ev) > 20  # backlog keeps growing


def test_spec_validation():
    with pytest.raises(ValueError):
        SimSpec(QueueParams(0.5, 1.0), Policy.MV, 100, warmup_departures=100)
    with pytest.raises(ValueError):
        SimSpec(QueueParams(0.5, 1.0, threshold=0), Policy.ST, 100)
    with pytest.raises(ValueError):
        SimSpec(QueueParams(0.5, 1.0), Policy.MV, 100, batch_count=5)


def test_energy_trace_worked_example():
    cfg = default_config()
    spec = SimSpec(QueueParams(25.0, 0.02, 0.02), Policy.MV, N, seed=0)
    assert energy_trace(spec, cfg, 0.2) == pytest.approx(0.1095, rel=0.02)
    assert energy_trace(spec, cfg, 0.2, benchmark=True) == pytest.approx(0.150, rel=0.02)


@pytest.mark.parametrize("policy,params", [
    (Policy.MV, QueueParams(10.0, 0.02, 0.03)),
    (Policy.ST, QueueParams(10.0, 0.02, threshold=3)),
])
def test_energy_trace_constant_power(policy, params):
    c = 0.25
    cfg = default_config(power_active_w=c * 1e3, power_idle_w=c * 1e3, power_switch_w=c * 1e3)
    spec = SimSpec(params, policy, 20_000, seed=0)
    assert energy_trace(spec, cfg, 0.0) == pytest.approx(c, rel=1e-9)


def test_energy_trace_full_load():
    cfg = default_config()
    tb = 0.02
    spec = SimSpec(QueueParams(0.995 / tb, tb, 0.01), Policy.MV, N, seed=0)
    total = energy_trace(spec, cfg, 0.2)
    active = 0.995 * ((tb - cfg.tau_p_s) / tb * 0.2 + cfg.power_active_w)
    assert (total - active) / total < 0.01


def test_event_trace_fifo_and_csv(tmp_path):
    ev = event_trace(QueueParams(0.5, 1.0, 0.4), Policy.MV, 500, seed=2)
    kinds = [k for _, k, _ in ev]
    assert set(kinds) <= set(EVENT_KINDS)
    assert kinds.count("departure") == 500
    assert kinds.count("arrival") >= 500
    times = [t for t, _, _ in ev]
    assert times == sorted(times)
    assert all(q >= 0 for _, _, q in ev)
    assert ev[-1][2] == kinds.count("arrival") - 500
    path = tmp_path / "ev.csv"
    write_event_trace(path, ev)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["time_s", "kind", "queue_len"]
    assert len(rows) == len(ev) + 1


def test_event_trace_st_wakes_with_threshold():
    ev = event_trace(QueueParams(0.2, 1.0, threshold=3), Policy.ST, 300, seed=1)
    for i, (t, kind, q) in enumerate(ev):
        if kind == "wake":
            assert q >= 3
