import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caextract import maca
from caextract.maca import MacaMachine
from helpers import as_int, naive_analysis, naive_step


def random_rules(rng, n):
    return tuple(int(r) for r in rng.choice([90, 150], size=n))


def test_zero_fixed():
    m = MacaMachine((90, 150, 90, 150))
    assert maca.step(m, 0) == 0


def test_hand_step():
    m = MacaMachine((90, 90, 90))
    assert maca.to_bits(maca.step(m, "010"), 3) == "101"


@settings(max_examples=60)
@given(st.lists(st.sampled_from([90, 150]), min_size=1, max_size=16), st.data())
def test_linearity_and_naive_step(rules, data):
    m = MacaMachine(tuple(rules))
    n = m.n
    s = data.draw(st.integers(0, 2 ** n - 1))
    t = data.draw(st.integers(0, 2 ** n - 1))
    assert maca.step(m, s ^ t) == maca.step(m, s) ^ maca.step(m, t)
    bits = tuple(int(b) for b in maca.to_bits(s, n))
    assert maca.step(m, s) == as_int(naive_step(rules, bits))


def test_single_cell_rule_150():
    a = maca.analyze(MacaMachine((150,)))
    assert a.attractors == [[0], [1]]
    assert a.depth == 0 and a.pef_positions == [0]
    assert a.basin_sizes == [1, 1] and a.exhaustive


def test_two_cell_rule_90():
    rules = (90, 90)
    a = maca.analyze(MacaMachine(rules))
    cycles, depth, basins, _ = naive_analysis(rules)
    assert a.attractors == [[as_int(s) for s in c] for c in cycles.values()]
    assert a.depth == depth and a.basin_sizes == basins
    # 01 <-> 10 is a 2-cycle, 11 -> 11, 00 -> 00
    assert a.attractors == [[0], [1, 2], [3]]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from([90, 150]), min_size=1, max_size=10))
def test_analyze_matches_oracle(rules):
    rules = tuple(rules)
    m = MacaMachine(rules)
    a = maca.analyze(m)
    cycles, depth, basins, cycle_of = naive_analysis(rules)
    assert a.attractors == [[as_int(s) for s in c] for c in cycles.values()]
    assert a.depth == depth
    assert a.basin_sizes == basins
    assert sum(a.basin_sizes) == 2 ** m.n
    canon = sorted(cycles)
    for s, c in cycle_of.items():
        assert maca.classify(m, a, as_int(s)) == canon.index(c)
    # pef bits separate the canonical attractor states
    pef_values = [a.pef_value(c[0]) for c in a.attractors]
    assert len(set(pef_values)) == len(a.attractors)
    assert len(a.attractors) <= 2 ** len(a.pef_positions)
    if len(a.attractors) == 2 ** len(a.pef_positions):
        assert a.exhaustive


def test_pef_is_lexicographically_first_minimal(rng):
    import itertools
    for _ in range(10):
        m = MacaMachine(random_rules(rng, 8))
        a = maca.analyze(m)
        canon = [c[0] for c in a.attractors]
        size = len(a.pef_positions)
        for smaller in range(size):
            for combo in itertools.combinations(range(m.n), smaller):
                codes = {tuple((c >> (m.n - 1 - p)) & 1 for p in combo) for c in canon}
                assert len(codes) < len(canon)
        for combo in itertools.combinations(range(m.n), size):
            codes = {tuple((c >> (m.n - 1 - p)) & 1 for p in combo) for c in canon}
            if len(codes) == len(canon):
                assert list(combo) == a.pef_positions
                break


def test_classify_attractor_state_takes_no_steps(rng):
    m = MacaMachine(random_rules(rng, 9))
    a = maca.analyze(m)
    for i, cyc in enumerate(a.attractors):
        for s in cyc:
            assert maca.classify(m, a, s, return_steps=True) == (i, 0)
    assert maca.classify(m, a, 0) == 0


@settings(max_examples=20, deadline=None)
@given(st.lists(st.sampled_from([90, 150]), min_size=2, max_size=10), st.data())
def test_classify_constant_along_trajectory(rules, data):
    m = MacaMachine(tuple(rules))
    a = maca.analyze(m)
    p = data.draw(st.integers(0, 2 ** m.n - 1))
    assert maca.classify(m, a, maca.step(m, p)) == maca.classify(m, a, p)
    _, steps = maca.classify(m, a, p, return_steps=True)
    assert steps <= a.depth + a.max_cycle


def test_default_machine():
    m = maca.default_machine()
    a = maca.analyze(m)
    assert m.n == 16
    assert len(a.attractors) == 4 and a.depth == 8
    assert a.pef_positions == [4, 7] and a.exhaustive
    assert sum(a.basin_sizes) == 2 ** 16


def test_spec_round_trip(tmp_path):
    m = MacaMachine((90, 150, 150))
    p = tmp_path / "m.txt"
    p.write_text(m.spec())
    assert maca.load_machine(p) == m
    assert MacaMachine.parse("n=2; rules=150,90").rules == (150, 90)
    with pytest.raises(ValueError):
        MacaMachine.parse("n=3; rules=90,90")
    with pytest.raises(ValueError):
        MacaMachine((90, 30))


def test_to_state_forms():
    assert maca.to_state("0101", 4) == 5
    assert maca.to_state([0, 1, 0, 1], 4) == 5
    assert maca.to_state(np.array([[0, 1], [0, 1]]), 4) == 5
    with pytest.raises(ValueError):
        maca.to_state("01", 4)
    with pytest.raises(ValueError):
        maca.to_state(16, 4)


def test_analysis_json():
    a = maca.analyze(MacaMachine((90, 90)))
    d = json.loads(a.to_json())
    assert d["attractors"] == [["00"], ["01", "10"], ["11"]]
    assert d["depth"] == 0


def test_analyze_size_limit():
    with pytest.raises(ValueError):
        maca.analyze(MacaMachine((90,) * 21))
