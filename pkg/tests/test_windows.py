import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marssnet.errors import ValidationError
from marssnet.gibbs import PosteriorSummary
from marssnet.model import validate_recording
from marssnet.windows import (
    WindowedProbabilities,
    aggregate_all,
    aggregate_window,
    baseline_thresholds,
    build_network,
    nearest_rank,
    segment_recording,
)


def summary(E, C=None, sz="sz0", off=0):
    d = E.shape[0]
    return PosteriorSummary(E, np.eye(d) if C is None else C, 10, 20, 0, sz, off)


def rand_sym(rng, d):
    C = rng.random((d, d))
    C = (C + C.T) / 2
    np.fill_diagonal(C, 1.0)
    return C


# ---------------------------------------------------------------- segmentation

def test_segment_full_span():
    rate = 4
    rec = validate_recording(np.random.default_rng(0).standard_normal((2, 600 * rate)), rate, 300 * rate)
    segs = segment_recording(rec, (-300, 300))
    assert len(segs) == 600
    assert [s.start_offset_seconds for s in segs] == list(range(-300, 300))
    assert all(s.data.shape == (2, rate) for s in segs)
    np.testing.assert_allclose(segs[0].data.mean(1), 0, atol=1e-12)


def test_segment_unit_span_and_alignment():
    raw = np.arange(40.0).reshape(2, 20) ** 1.5
    rec = validate_recording(raw, 5, 10)
    (seg,) = segment_recording(rec, (0, 1))
    assert seg.start_offset_seconds == 0
    ref = raw[:, 10:15]
    ref = (ref - ref.mean(1, keepdims=True)) / ref.std(1, keepdims=True)
    np.testing.assert_allclose(seg.data, ref)


def test_segment_out_of_bounds():
    rec = validate_recording(np.random.default_rng(1).standard_normal((2, 50)), 5, 25)
    with pytest.raises(ValidationError, match="span out of bounds"):
        segment_recording(rec, (-2, 6))


def test_segment_requires_integral_rate():
    rec = validate_recording(np.random.default_rng(1).standard_normal((2, 50)), 5.5, 25)
    with pytest.raises(ValidationError, match="integral"):
        segment_recording(rec, (0, 1))


# ---------------------------------------------------------------- aggregation

def test_identical_summaries_average_to_themselves():
    rng = np.random.default_rng(2)
    E = rng.random((4, 4))
    sums = {("a", k): summary(E, sz="a", off=k) for k in range(25)}
    P_d, _ = aggregate_window(sums, 0)
    np.testing.assert_allclose(P_d, E, rtol=1e-15)


def test_two_seizure_mean():
    sums = {}
    for sz, v in (("a", 0.4), ("b", 0.6)):
        for k in range(25):
            sums[(sz, k)] = summary(np.full((3, 3), v), sz=sz, off=k)
    P_d, _ = aggregate_window(sums, 0)
    np.testing.assert_allclose(P_d, 0.5, atol=1e-15)


def test_flat_mean_oracle():
    rng = np.random.default_rng(3)
    sums, flat_e, flat_c = {}, [], []
    for sz in ("a", "b", "c"):
        for k in range(-5, 25):
            E, C = rng.random((5, 5)), rand_sym(rng, 5)
            sums[(sz, k)] = summary(E, C, sz, k)
            if 0 <= k < 25:
                flat_e.append(E)
                flat_c.append(C)
    P_d, P_c = aggregate_window(sums, 0)
    np.testing.assert_allclose(P_d, np.mean(flat_e, axis=0), atol=1e-12)
    np.testing.assert_allclose(P_c, np.mean(flat_c, axis=0), atol=1e-12)


def test_missing_segment_is_named():
    sums = {("a", k): summary(np.eye(2), sz="a", off=k) for k in range(25) if k != 7}
    with pytest.raises(ValidationError, match=r"\('a', 7\)"):
        aggregate_window(sums, 0)


def test_aggregate_all_grid_and_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    sums = [summary(rng.random((3, 3)), rand_sym(rng, 3), sz, k) for sz in ("a", "b") for k in range(-30, 5)]
    wp = aggregate_all(sums, labels=["x", "y", "z"])
    assert wp.window_starts == list(range(-30, -19))
    for M in wp.cocluster.values():
        np.testing.assert_array_equal(M, M.T)
    wp.save(tmp_path / "w.json")
    back = WindowedProbabilities.load(tmp_path / "w.json")
    assert back.window_starts == wp.window_starts and back.labels == ["x", "y", "z"]
    for t in wp.window_starts:
        assert back.edge[t].tobytes() == wp.edge[t].tobytes()


def test_aggregate_all_needs_one_full_window():
    sums = [summary(np.eye(2), sz="a", off=k) for k in range(10)]
    with pytest.raises(ValidationError, match="shorter"):
        aggregate_all(sums)


# ---------------------------------------------------------------- thresholds

def test_threshold_uniform_order_statistic():
    rng = np.random.default_rng(5)
    d = 101  # 10100 off-diagonal entries
    P = rng.random((d, d))
    tau_d, _ = baseline_thresholds(P, rand_sym(rng, d))
    assert 0.985 <= tau_d <= 0.995


def test_threshold_constant_yields_no_edges():
    P = np.full((12, 12), 0.3)
    tau_d, tau_c = baseline_thresholds(P, P)
    assert tau_d == tau_c == 0.3
    net = build_network(P, P, tau_d, tau_c)
    assert not net.edges and not net.clusters


def test_threshold_explicit_rank():
    vals = np.r_[np.arange(1, 101) / 100.0, np.zeros(9900 - 100)]
    rng = np.random.default_rng(6)
    rng.shuffle(vals)
    d = 100  # 9900 off-diagonal entries
    P = np.zeros((d, d))
    P[~np.eye(d, dtype=bool)] = vals
    tau, _ = baseline_thresholds(P, P)
    assert tau == np.sort(vals)[math.ceil(0.99 * vals.size) - 1]


def test_threshold_small_candidate_set_warns():
    P = np.random.default_rng(7).random((5, 5))
    with pytest.warns(RuntimeWarning, match="candidate"):
        tau_d, _ = baseline_thresholds(P, P)
    assert tau_d == P[~np.eye(5, dtype=bool)].max()


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=300), st.floats(0.1, 100))
def test_nearest_rank_matches_brute_force(vals, q):
    srt = sorted(vals)
    n = len(srt)
    # smallest value with at least q% of the data at or below it
    brute = next(v for k, v in enumerate(srt) if (k + 1) / n * 100 >= q - 1e-12 * 100)
    assert nearest_rank(vals, q) == brute


@settings(max_examples=1000, deadline=None)
@given(st.integers(11, 16), st.integers(0, 2**32 - 1))
def test_baseline_thresholds_brute_force(d, seed):
    rng = np.random.default_rng(seed)
    P_d = rng.random((d, d))
    P_c = rand_sym(rng, d)
    off = [P_d[i, j] for i in range(d) for j in range(d) if i != j]
    upper = [P_c[i, j] for i in range(d) for j in range(i + 1, d)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        tau_d, tau_c = baseline_thresholds(P_d, P_c)
    assert abs(tau_d - sorted(off)[math.ceil(0.99 * len(off)) - 1]) <= 1e-12
    exp_c = sorted(upper)[math.ceil(0.99 * len(upper)) - 1] if len(upper) >= 100 else max(upper)
    assert abs(tau_c - exp_c) <= 1e-12


# ---------------------------------------------------------------- networks

def test_subthreshold_network_is_empty():
    P = np.full((4, 4), 0.2)
    net = build_network(P, P, 0.5, 0.5, soz_label=1)
    assert net.edges == frozenset() and net.clusters == () and net.soz_cluster is None
    assert net.cluster_size(1) == 1 and net.degree(1) == 0


def test_cluster_transitive_closure():
    P_c = np.zeros((5, 5))
    P_c[1, 2] = P_c[2, 1] = 0.9
    P_c[2, 3] = P_c[3, 2] = 0.9
    net = build_network(np.zeros((5, 5)), P_c, 0.5, 0.5, soz_label=3)
    assert net.clusters == (frozenset({1, 2, 3}),)
    assert net.soz_cluster == 0 and net.cluster_size(3) == 3


def test_edges_match_brute_force():
    rng = np.random.default_rng(8)
    P = rng.random((20, 20))
    net = build_network(P, np.zeros((20, 20)), 0.5, 0.5)
    brute = {(j, i) for i in range(20) for j in range(20) if i != j and P[i, j] > 0.5}
    assert net.edges == brute


def test_threshold_monotonicity():
    rng = np.random.default_rng(9)
    P_d = rng.random((15, 15))
    P_c = rand_sym(rng, 15)
    prev = None
    for tau in np.linspace(0, 1, 21):
        net = build_network(P_d, P_c, tau, tau)
        n_comp = len(net.clusters) + (15 - sum(len(c) for c in net.clusters))
        if prev is not None:
            assert net.edges <= prev[0]
            assert n_comp >= prev[1]
        prev = (net.edges, n_comp)


def test_strict_threshold_and_no_self_edges():
    P = np.eye(3) + 0.5 * (1 - np.eye(3))
    net = build_network(P, P, 0.5, 0.5)
    assert not net.edges
    net = build_network(P, P, 0.49, 0.49)
    assert all(i != j for (j, i) in net.edges) and len(net.edges) == 6


def test_dot_and_json_output():
    P_d = np.zeros((4, 4))
    P_d[1, 0] = 0.9
    P_c = np.zeros((4, 4))
    P_c[0, 1] = P_c[1, 0] = 0.9
    net = build_network(P_d, P_c, 0.5, 0.5, soz_label=0, t=-3, labels=["A", "B", "C", "D"])
    dot = net.to_dot()
    assert '"A" -> "B";' in dot and 'color="red"' in dot and '"A" [shape=diamond]' in dot
    assert dot.startswith('digraph "window_-3"')
    js = net.to_dict()
    assert js["edges"] == [["A", "B"]] and js["clusters"] == [["A", "B"]] and js["soz"] == "A"
