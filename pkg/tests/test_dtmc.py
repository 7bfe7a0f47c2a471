#!/usr/bin/env python3

from functools import lru_cache

import numpy as np
import pandas as pd
import pytest
from scipy import sparse
from scipy.sparse.csgraph import breadth_first_order

from compverify.dtmc import (
    ABORT, SAFETY_ERR, ConfusionProfile, MonitoredDtmc, StateDescriptor, bounded_reachability,
    build_monitored_dtmc, closed_loop_response, estimate_profile, export_prism,
    identity_profile, load_profile_csv, noisy_profile, plot_curve, reachability_curve,
    simulate, uniform_profile, write_curve_csv, write_profile_csv,
)
from compverify.assumptions import build_assume
from compverify.errors import DtmcError, ProfileError
from compverify import taxinet
from compverify.taxinet import DiscretizationConfig, SystemState


@pytest.fixture(scope="module")
def monitor(w_est):
    return w_est.err_automaton


@pytest.fixture(scope="module")
def uniform_dtmc(m1, monitor, cfg2):
    return build_monitored_dtmc(m1, uniform_profile(cfg2), monitor, cfg2)


def hand_dtmc(rows):
    """DTMC over explicit dense rows; states 0 and 1 are the absorbing targets"""
    matrix = sparse.csr_matrix(np.array(rows, dtype=float))
    descriptors = [StateDescriptor(0, -1, -1, None, None, -1), StateDescriptor(2, -1, -1, None, None, -1)]
    descriptors += [StateDescriptor(0, 0, 0, None, None, i) for i in range(len(rows) - 2)]
    return MonitoredDtmc(matrix, descriptors, initial=2)


def path_probability(rows, start, target, n):
    """Sum over all paths of length <= n that first hit target"""
    if start == target:
        return 1.0
    if n == 0:
        return 0.0
    return sum(p * path_probability(rows, t, target, n - 1)
               for t, p in enumerate(rows[start]) if p > 0 and start not in (ABORT, SAFETY_ERR))


# ==================== PROFILES ====================

def test_profile_relative_frequencies(cfg2):
    rows = [(1, 0, 1, 0, 3), (1, 0, 2, 2, 1), (1, 0, 1, 0, 0)]
    profile = estimate_profile(rows, cfg2, required=[SystemState(1, 0)])
    assert profile.distribution(SystemState(1, 0)) == [(SystemState(1, 0), 0.75), (SystemState(2, 2), 0.25)]
    assert profile.per_actual_accuracy == {SystemState(1, 0): 0.75}
    assert not profile.covers(SystemState(0, 0))


def test_profile_from_records(cfg2):
    records = [{"actual_cte": 0, "actual_he": 1, "est_cte": 0, "est_he": 0, "count": 2}]
    profile = estimate_profile(records, cfg2, required=[])
    assert profile.probability(SystemState(0, 1), SystemState(0, 0)) == 1.0


def test_profile_requires_reachable_actuals(cfg2):
    with pytest.raises(ProfileError) as error:
        estimate_profile([(1, 0, 1, 0, 1)], cfg2)
    assert SystemState(2, 2) in error.value.missing
    assert SystemState(1, 0) not in error.value.missing


@pytest.mark.parametrize("rows", [
    [(1, 0, 1, 0, -1)],
    [(1, 0, 7, 0, 1)],
    [(1, 0, "x", 0, 1)],
])
def test_malformed_profile_rows(cfg2, rows):
    with pytest.raises(ProfileError):
        estimate_profile(rows, cfg2, required=[])


def test_profile_missing_column(cfg2):
    with pytest.raises(ProfileError):
        estimate_profile(pd.DataFrame({"actual_cte": [1]}), cfg2)


def test_noisy_profile_bounds(cfg2):
    with pytest.raises(ProfileError):
        noisy_profile(cfg2, 1.5)
    assert noisy_profile(cfg2, 0.9).accuracy == pytest.approx(0.9)
    assert identity_profile(cfg2).accuracy == 1.0


def test_profile_csv_round_trip(cfg2, tmp_path):
    path = str(tmp_path / "profile.csv")
    original = noisy_profile(cfg2, 0.8)
    write_profile_csv(original, path)
    restored = load_profile_csv(path, cfg2)
    assert np.allclose(restored.probabilities, original.probabilities)


# ==================== CONSTRUCTION ====================

def test_closed_loop_response(m1, cfg2):
    loop = closed_loop_response(m1, cfg2.actions("est"))
    assert loop.actual[loop.initial] == SystemState(1, 0)
    assert len(loop.actual) == 7
    assert set(loop.actual.values()) == set(SystemState(c, h) for c, h in
                                            [(1, 0), (0, 1), (2, 2), (0, 0), (1, 2), (2, 0), (1, 1)])


def test_uniform_dtmc_is_stochastic(uniform_dtmc):
    d = uniform_dtmc
    assert np.allclose(np.asarray(d.matrix.sum(axis=1)).ravel(), 1.0)
    assert d.matrix[ABORT, ABORT] == 1.0
    assert d.matrix[SAFETY_ERR, SAFETY_ERR] == 1.0
    pc0 = [x for x in d.descriptors[2:] if x.pc == 0]
    assert len(pc0) == 7
    assert d.descriptors[d.initial] == StateDescriptor(0, 1, 0, None, None, 0)


def test_monitor_must_read_estimates_only(m1, w_full, cfg2):
    with pytest.raises(DtmcError):
        build_monitored_dtmc(m1, uniform_profile(cfg2), w_full.err_automaton, cfg2)


def test_profile_must_cover_visited_actuals(m1, monitor, cfg2):
    counts = np.ones((9, 9))
    # row 0 is actual [0][0], which uniform estimates drive the loop into
    counts[0, :] = 0
    with pytest.raises(ProfileError):
        build_monitored_dtmc(m1, ConfusionProfile(cfg2, counts), monitor, cfg2)


# ==================== REACHABILITY ====================

def test_identity_profile_never_aborts(m1, monitor, cfg2):
    d = build_monitored_dtmc(m1, identity_profile(cfg2), monitor, cfg2)
    assert reachability_curve(d, "abort", 100) == [0.0] * 101


PROFILES = {
    "uniform": uniform_profile,
    "noisy-0.9": lambda cfg: noisy_profile(cfg, 0.9),
    "noisy-0.7": lambda cfg: noisy_profile(cfg, 0.7),
}


@lru_cache(maxsize=None)
def monitored(m, profile):
    cfg = DiscretizationConfig(m)
    m1 = taxinet.gen_m1(cfg)
    w = build_assume(m1, taxinet.safety_property(), taxinet.interface_alphabet(cfg))
    return build_monitored_dtmc(m1, PROFILES[profile](cfg), w.err_automaton, cfg)


@pytest.mark.parametrize("m", [2, 3, 4])
@pytest.mark.parametrize("profile", sorted(PROFILES))
def test_monitor_prevents_safety_violations(m, profile):
    assert max(reachability_curve(monitored(m, profile), "safety_err", 200)) == 0.0


@pytest.mark.parametrize("m", [2, 3, 4])
@pytest.mark.parametrize("profile", sorted(PROFILES))
def test_abort_probability_tends_to_one(m, profile):
    d = monitored(m, profile)
    # abort is reachable from every live state, so the curve converges to 1
    can_abort = breadth_first_order(d.matrix.T.tocsr(), ABORT, directed=True, return_predecessors=False)
    assert set(can_abort.tolist()) == set(range(d.num_states)) - {SAFETY_ERR}
    # every live state is within k steps of abort
    k = d.num_states
    curve = reachability_curve(d, "abort", 2 * k)
    assert all(x <= y + 1e-15 for x, y in zip(curve, curve[1:]))
    assert 0.0 < curve[k] <= 1.0
    assert curve[2 * k] > curve[k] or curve[k] > 0.999


def test_curve_is_monotone(uniform_dtmc):
    curve = reachability_curve(uniform_dtmc, "abort", 60)
    assert curve[0] == 0.0
    assert all(x <= y + 1e-15 for x, y in zip(curve, curve[1:]))
    assert bounded_reachability(uniform_dtmc, "abort", 60) == curve[-1]


def test_accuracy_dominance(m1, monitor, cfg2):
    good = reachability_curve(build_monitored_dtmc(m1, noisy_profile(cfg2, 0.95), monitor, cfg2), "abort", 80)
    bad = reachability_curve(build_monitored_dtmc(m1, noisy_profile(cfg2, 0.7), monitor, cfg2), "abort", 80)
    assert all(g <= b + 1e-12 for g, b in zip(good, bad))
    assert good[-1] < bad[-1]


def test_noisy_perception_eventually_aborts(uniform_dtmc):
    assert bounded_reachability(uniform_dtmc, "abort", 400) >= 0.99


def test_hand_dtmc_against_path_enumeration():
    rows = [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0],
        [0.1, 0.0, 0.2, 0.7, 0.0],
        [0.0, 0.3, 0.0, 0.2, 0.5],
        [0.25, 0.0, 0.75, 0.0, 0.0],
    ]
    d = hand_dtmc(rows)
    for target, index in (("abort", ABORT), ("safety_err", SAFETY_ERR)):
        curve = reachability_curve(d, target, 8)
        for n, value in enumerate(curve):
            assert value == pytest.approx(path_probability(rows, 2, index, n), abs=1e-12)


def test_geometric_closed_form():
    p = 0.05
    d = hand_dtmc([[1, 0, 0], [0, 1, 0], [p, 0, 1 - p]])
    for n in (0, 1, 10, 100):
        assert bounded_reachability(d, "abort", n) == pytest.approx(1 - (1 - p) ** n, abs=1e-12)


def test_target_by_predicate(uniform_dtmc):
    def left_edge(desc):
        return desc.pc == 0 and desc.cte == 0

    assert uniform_dtmc.target_mask(left_edge).any()
    assert reachability_curve(uniform_dtmc, left_edge, 4)[-1] > 0
    assert reachability_curve(uniform_dtmc, [uniform_dtmc.initial], 0) == [1.0]


def test_simulation_agrees_with_exact(uniform_dtmc):
    exact = bounded_reachability(uniform_dtmc, "abort", 20)
    estimate = simulate(uniform_dtmc, "abort", 20, runs=2000, seed=7)
    assert abs(exact - estimate) < 0.05


# ==================== OUTPUTS ====================

def test_prism_export(uniform_dtmc, cfg2):
    text = export_prism(uniform_dtmc, cfg2)
    assert text.startswith("dtmc\n")
    assert "module monitored_taxinet" in text
    assert "  cte : [0..2] init 1;" in text
    assert 'label "abort" = Q=-1;' in text
    assert 'label "unsafe" = pc=2;' in text
    assert text.count("[] pc=0 &") == 7


def test_curve_files(uniform_dtmc, tmp_path):
    curve = reachability_curve(uniform_dtmc, "abort", 10)
    csv_path = tmp_path / "curve.csv"
    write_curve_csv(curve, str(csv_path))
    frame = pd.read_csv(csv_path)
    assert list(frame.columns) == ["n", "probability"]
    assert list(frame["n"]) == list(range(11))

    html_path = tmp_path / "curve.html"
    plot_curve({"uniform": curve}, str(html_path))
    assert "uniform" in html_path.read_text()
