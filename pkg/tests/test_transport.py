import time

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from treealign.core import DataValidationError, RngConfig
from treealign.semantic import SemanticCost, SemanticProfile
from treealign.transport import DEFAULT_EXACT_CAP, HiRefParams, exact_assignment, hiref

from oracles import assignment_cost_by_enumeration


def _unit_profiles(matrix: np.ndarray) -> SemanticProfile:
    m = np.asarray(matrix, dtype=np.float64)
    m = m / np.linalg.norm(m, axis=1, keepdims=True)
    return SemanticProfile(matrix=m, normalized=True)


def _random_profiles(n, c, gen) -> SemanticProfile:
    return _unit_profiles(gen.standard_normal((n, c)) + 2.0)


def test_exact_assignment_matches_enumeration():
    gen = np.random.default_rng(0)
    for _ in range(5):
        cost = gen.random((6, 6))
        coupling, objective = exact_assignment(cost)
        assert objective == pytest.approx(
            assignment_cost_by_enumeration(cost), abs=1e-12
        )
        rows = np.arange(6)
        assert objective == pytest.approx(
            cost[rows, coupling.forward].sum(), abs=1e-12
        )


def test_exact_assignment_accepts_cost_operator():
    gen = np.random.default_rng(1)
    a = _random_profiles(12, 3, gen)
    b = _random_profiles(12, 3, gen)
    op = SemanticCost(a, b)
    coupling, objective = exact_assignment(op)
    r, c = linear_sum_assignment(op.full())
    assert objective == pytest.approx(op.full()[r, c].sum(), abs=1e-12)
    assert np.array_equal(coupling.forward, c[np.argsort(r)])


def test_exact_assignment_cap_names_alternative():
    gen = np.random.default_rng(2)
    a = _random_profiles(8, 2, gen)
    b = _random_profiles(8, 2, gen)
    with pytest.raises(DataValidationError, match="hiref"):
        exact_assignment(SemanticCost(a, b), cap=4)
    assert DEFAULT_EXACT_CAP >= 1024


def test_hiref_is_bijective_and_deterministic():
    gen = np.random.default_rng(3)
    a = _random_profiles(300, 4, gen)
    b = _random_profiles(300, 4, gen)
    rng = RngConfig(17)
    c1 = hiref(a, b, HiRefParams(), rng.child("t"))
    c2 = hiref(a, b, HiRefParams(), RngConfig(17).child("t"))
    fwd = c1.forward
    assert np.array_equal(np.sort(fwd), np.arange(300))  # a permutation
    assert np.array_equal(fwd, c2.forward)


def test_hiref_on_identical_profiles_is_near_zero_cost():
    gen = np.random.default_rng(4)
    a = _random_profiles(256, 3, gen)
    coupling = hiref(a, a, HiRefParams(), RngConfig(5).child("t"))
    cost = SemanticCost(a, a).coupling_cost(coupling.forward)
    assert cost <= 1e-9


def test_hiref_close_to_exact_on_random_instances():
    ratios = []
    for seed in range(5):
        rng = RngConfig(seed)
        gen = rng.stream("profiles")
        a = _random_profiles(256, 4, gen)
        b = _random_profiles(256, 4, gen)
        op = SemanticCost(a, b)
        _, exact_cost = exact_assignment(op)
        coupling = hiref(a, b, HiRefParams(), rng.child("t"))
        approx_cost = op.coupling_cost(coupling.forward)
        assert approx_cost >= exact_cost - 1e-9
        ratios.append(approx_cost / max(exact_cost, 1e-12))
    assert np.mean(ratios) <= 1.25
    assert max(ratios) <= 1.5


def test_hiref_respects_base_size_leaves():
    gen = np.random.default_rng(6)
    a = _random_profiles(200, 3, gen)
    b = _random_profiles(200, 3, gen)
    small = hiref(a, b, HiRefParams(base_size=16), RngConfig(0).child("t"))
    big = hiref(a, b, HiRefParams(base_size=128), RngConfig(0).child("t"))
    assert np.array_equal(np.sort(small.forward), np.arange(200))
    assert np.array_equal(np.sort(big.forward), np.arange(200))
    op = SemanticCost(a, b)
    # larger leaves solve bigger exact subproblems: cost must not get worse
    assert op.coupling_cost(big.forward) <= op.coupling_cost(small.forward) + 1e-9


def test_hiref_size_mismatch_rejected():
    gen = np.random.default_rng(7)
    a = _random_profiles(10, 2, gen)
    b = _random_profiles(12, 2, gen)
    with pytest.raises(DataValidationError):
        hiref(a, b, HiRefParams(), RngConfig(1).child("t"))


def test_params_validation():
    with pytest.raises(DataValidationError):
        HiRefParams(base_size=1)
    with pytest.raises(DataValidationError):
        HiRefParams(branching=1)
    with pytest.raises(DataValidationError):
        HiRefParams(base_size=8, branching=16)


def test_hiref_runtime_stays_reasonable():
    gen = np.random.default_rng(8)
    a = _random_profiles(2000, 5, gen)
    b = _random_profiles(2000, 5, gen)
    t0 = time.time()
    coupling = hiref(a, b, HiRefParams(), RngConfig(2).child("t"))
    assert time.time() - t0 < 30.0
    assert np.array_equal(np.sort(coupling.forward), np.arange(2000))
