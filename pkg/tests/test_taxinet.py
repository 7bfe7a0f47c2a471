#!/usr/bin/env python3

import os
from collections import deque

import pytest

from compverify.assumptions import build_assume, check_context
from compverify.errors import DiscretizationError
from compverify.fsp import parse
from compverify.lts import ERR, Action, check_safety, reaches_err, size
from compverify import taxinet
from compverify.taxinet import DiscretizationConfig, SystemState, discretize


def m1_size_law(m):
    return 9 * (m * m + 3 * m + 1)


# ==================== DISCRETIZATION ====================

@pytest.mark.parametrize("cte, he, expected", [
    (0.0, 0.0, (1, 0)),
    (-5.0, 20.0, (0, 2)),
    (5.0, -20.0, (2, 1)),
    (-8.0, -35.0, (0, 1)),
    (8.0, 35.0, (2, 2)),
    (-2.7, 11.66, (1, 0)),
    (2.7, -11.67, (1, 0)),
    (-2.71, 0.0, (0, 0)),
    (2.71, 11.67, (2, 2)),
])
def test_discretize_m2(cfg2, cte, he, expected):
    assert discretize(cte, he, cfg2) == SystemState(*expected)


@pytest.mark.parametrize("cte, he", [(8.01, 0.0), (-9.0, 0.0), (0.0, 35.5), (0.0, -40.0)])
def test_discretize_rejects_values_off_the_grid(cfg2, cte, he):
    with pytest.raises(DiscretizationError):
        discretize(cte, he, cfg2)


def test_bins_partition_the_taxiway():
    for m in (2, 3, 4, 6):
        cfg = DiscretizationConfig(m)
        bins = cfg.cte_bins()
        assert len(bins) == m + 1
        assert bins[0].lo == -8 and bins[-1].hi == 8
        for left, right in zip(bins, bins[1:]):
            assert left.hi == right.lo
            assert left.hi_closed != right.lo_closed
        assert bins[cfg.center].lo_closed and bins[cfg.center].hi_closed


def test_spec_bins_render_as_published(cfg2):
    assert [str(b) for b in cfg2.cte_spec_bins()] == ["[-8,-2.7)", "[-2.7,2.7]", "[2.7,8)"]
    assert [str(taxinet.HE_BINS[h]) for h in (1, 0, 2)] == \
        ["[-35,-11.67)", "[-11.67,11.66]", "(11.66,35.0]"]


def test_config_validation():
    with pytest.raises(DiscretizationError):
        DiscretizationConfig(0)
    with pytest.raises(DiscretizationError):
        DiscretizationConfig(2).check(SystemState(3, 0))
    assert DiscretizationConfig(3).center == 1


# ==================== CLOSED-LOOP LAWS ====================

def test_controller_issues_exactly_one_command(cfg2):
    controller = taxinet.gen_controller(cfg2)
    for s in controller.states:
        labels = [x for x, _ in controller.out[s]]
        if any(x.base == "cmd" for x in labels):
            assert len(labels) == 1


def test_controller_law_examples(cfg2):
    assert taxinet.controller_command(cfg2, SystemState(1, 0)) == taxinet.GO_STRAIGHT
    assert taxinet.controller_command(cfg2, SystemState(0, 2)) == taxinet.GO_STRAIGHT
    assert taxinet.controller_command(cfg2, SystemState(2, 0)) == taxinet.TURN_LEFT
    assert taxinet.controller_command(cfg2, SystemState(0, 0)) == taxinet.TURN_RIGHT


def test_dynamics_step_rejects_unsafe_moves(cfg2):
    assert taxinet.dynamics_step(cfg2, SystemState(1, 0), taxinet.TURN_LEFT) == SystemState(0, 1)
    assert taxinet.dynamics_step(cfg2, SystemState(0, 1), taxinet.GO_STRAIGHT) is None
    assert taxinet.dynamics_step(cfg2, SystemState(1, 2), taxinet.TURN_RIGHT) is None


def test_reachable_actual_states(cfg2):
    states = taxinet.reachable_states(cfg2)
    assert len(states) == 7
    assert SystemState(0, 2) not in states
    assert SystemState(2, 1) not in states


# ==================== GENERATED MODELS ====================

def test_m1_size_at_m2(m1):
    assert size(m1) == (99, 155)


@pytest.mark.parametrize("m", [4, 6])
def test_m1_size_law(m):
    assert taxinet.gen_m1(DiscretizationConfig(m)).num_states == m1_size_law(m)


@pytest.mark.slow
@pytest.mark.parametrize("m", [14, 30, 50, 100])
def test_m1_size_law_large(m):
    assert taxinet.gen_m1(DiscretizationConfig(m)).num_states == m1_size_law(m)


def test_m1_alphabet(m1, cfg2):
    bases = {x.base for x in m1.alphabet}
    assert bases == {"act", "est", "cmd", "turn"}
    assert len([x for x in m1.alphabet if x.base == "est"]) == 9
    assert len([x for x in m1.alphabet if x.base == "act"]) == 9


def test_m1_starts_at_the_center(m1):
    assert [x for x, _ in m1.out[m1.initial]] == [Action("act", (1, 0))]


def test_perception_sizes(cfg2):
    perfect = taxinet.perfect_perception(cfg2)
    worst = taxinet.worst_perception(cfg2)
    assert size(perfect) == (10, 18)
    assert len([t for t in worst.transitions if t.action.base == "est"]) == 81


def test_perfect_loop_is_safe(cfg2):
    verdict = check_safety(taxinet.closed_loop(cfg2, taxinet.perfect_perception(cfg2)),
                           taxinet.safety_property())
    assert verdict.safe


def test_worst_loop_is_unsafe_with_replayable_counterexample(cfg2):
    loop = taxinet.closed_loop(cfg2, taxinet.worst_perception(cfg2))
    verdict = check_safety(loop, taxinet.safety_property())
    assert not verdict.safe
    assert verdict.counterexample[0] == Action("act", (1, 0))
    assert reaches_err(loop, verdict.counterexample)


def test_perfect_refines_worst(cfg2):
    assert check_context(taxinet.perfect_perception(cfg2), taxinet.worst_perception(cfg2))
    assert not check_context(taxinet.worst_perception(cfg2), taxinet.perfect_perception(cfg2))


def test_composites_match_generators(cfg2):
    models = parse(taxinet.model_source(cfg2))
    assert models["M1"].num_states == 99
    assert check_safety(models["PerfectLoop"], taxinet.safety_property()).safe
    assert not check_safety(models["WorstLoop"], taxinet.safety_property()).safe


def interface_phases(m):
    """Next interface base expected in each reachable state; asserts act and est alternate"""
    phase = {m.initial: taxinet.ACT}
    queue = deque([m.initial])
    while queue:
        s = queue.popleft()
        for action, t in m.out[s]:
            nxt = phase[s]
            if action.base in (taxinet.ACT, taxinet.EST):
                assert action.base == phase[s], f"{action} out of turn in {m.names[s]}"
                nxt = taxinet.EST if action.base == taxinet.ACT else taxinet.ACT
            if t == ERR:
                continue
            if t in phase:
                assert phase[t] == nxt, f"{m.names[t]} entered in two phases"
            else:
                phase[t] = nxt
                queue.append(t)
    return phase


@pytest.mark.parametrize("m", [2, 3, 4])
def test_actuals_and_estimates_alternate(m):
    cfg = DiscretizationConfig(m)
    for model in (taxinet.gen_m1(cfg), taxinet.perfect_perception(cfg), taxinet.worst_perception(cfg),
                  taxinet.closed_loop(cfg, taxinet.worst_perception(cfg))):
        phases = interface_phases(model)
        assert set(phases.values()) == {taxinet.ACT, taxinet.EST}


# ==================== ASSUMPTION SIZE ====================

@pytest.mark.parametrize("m", [2, 3, 4, 6])
def test_est_assumption_size(m):
    cfg = DiscretizationConfig(m)
    result = build_assume(taxinet.gen_m1(cfg), taxinet.safety_property(), taxinet.interface_alphabet(cfg))
    assert result.stats.states == 3 * m + 1


@pytest.mark.slow
@pytest.mark.parametrize("m", [14, 30, 50, 100])
def test_est_assumption_size_large(m):
    cfg = DiscretizationConfig(m)
    result = build_assume(taxinet.gen_m1(cfg), taxinet.safety_property(), taxinet.interface_alphabet(cfg))
    assert result.stats.states == 3 * m + 1


# ==================== FILES ====================

def test_write_models(cfg2, tmp_path):
    written = taxinet.write_models(cfg2, str(tmp_path))
    names = sorted(os.path.basename(p) for p in written)
    assert names == sorted([
        "taxinet_m2.fsp", "controller_m2.aut", "dynamics_m2.aut", "perfect_m2.aut",
        "worst_m2.aut", "m1_m2.aut", "property_m2.aut",
    ])
    with open(tmp_path / "m1_m2.aut") as f:
        assert f.readline().startswith("des (1, 155, ")
