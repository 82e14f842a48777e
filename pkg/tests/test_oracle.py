import math
import numpy as np
import pytest
from dsmin.core.errors import InputError, UnsupportedError
from dsmin.services.setfn import (
    make_concave_of_modular,
    make_function,
    make_modular,
    make_set_cover,
    make_zero,
    random_cover_instance,
)
from dsmin.services.lovasz import Permutation, greedy_subgradient
from dsmin.services.oracle import (
    approx_submodular_bound,
    nonpositive_supermodular_bound,
    best_flip,
    brute_force_max,
    brute_force_min,
    check_base_polytope,
    check_nondecreasing,
    check_submodular,
    code_of,
    is_local_min,
    is_strong_local_min,
    lovasz_bruteforce,
    members,
    modularity_constants,
    subdifferential_vertices,
    subset_values,
    weak_dr_bound,
    weak_dr_constants,
)
from dsmin.services.harness import gen_speech_synthetic


def test_subset_codes():
    """Test the bit encoding of subsets"""
    assert code_of([0, 2]) == 5
    assert members(5, 3) == [0, 2]
    
    values = subset_values(make_set_cover(3, [[0], [0, 1], [0, 1, 2]]))
    assert values.tolist() == [0, 1, 2, 2, 3, 3, 3, 3]


def test_brute_force_min(tiny_a_inst, tiny_c_inst, tiny_d_inst):
    """Test global minima of the named instances"""
    report = brute_force_min(tiny_a_inst.F)
    assert report.global_min_value == -2.0
    assert report.global_minimizers == [[2]]
    
    assert brute_force_min(tiny_c_inst.F).global_min_value == -1.0
    assert brute_force_min(tiny_d_inst.F).global_minimizers == [[3]]
    assert brute_force_max(tiny_a_inst.F).global_min_value == 0.0


def test_brute_force_lists_all_minimizers():
    """Test that the zero function is minimized by every subset"""
    report = brute_force_min(make_zero(3))
    
    assert report.global_min_value == 0.0
    assert len(report.global_minimizers) == 8


def test_oracle_size_caps():
    """Test that exhaustive checks refuse large ground sets"""
    with pytest.raises(UnsupportedError):
        brute_force_min(make_zero(21))
    with pytest.raises(UnsupportedError):
        lovasz_bruteforce(make_zero(8), np.zeros(8))
    with pytest.raises(UnsupportedError):
        check_submodular(make_zero(13))


def test_local_minimality(tiny_c_inst):
    """Test that {0} is a local but not a strong local minimum"""
    assert is_local_min(tiny_c_inst.F, [0]).holds
    
    report = is_strong_local_min(tiny_c_inst.F, [0])
    assert not report.holds
    assert report.witness == [0, 1, 2]


def test_strong_local_min_of_supermodular_instance(tiny_d_inst):
    """Test that {1} is a strong local minimum far from the optimum"""
    assert tiny_d_inst.F.evaluate([1]) == 0.0
    assert is_strong_local_min(tiny_d_inst.F, [1]).holds


def test_local_min_witness_and_slack(tiny_a_inst):
    """Test the flip witness and the eps slack"""
    report = is_local_min(tiny_a_inst.F, [0, 2])
    assert not report.holds
    assert report.witness == [2]
    assert is_local_min(tiny_a_inst.F, [0, 2], eps=1.0).holds


def test_best_flip(tiny_a_inst):
    """Test the best Hamming-one neighbor"""
    assert best_flip(tiny_a_inst.F, []) == ([2], -2.0)


def test_check_submodular():
    """Test submodular and supermodular examples"""
    assert check_submodular(make_set_cover(3, [[0], [0, 1], [1, 2]])).holds
    assert check_submodular(make_modular([1.0, -1.0, 2.0])).holds
    
    square = make_function(3, lambda S: float(len(S)) ** 2)
    report = check_submodular(square)
    assert not report.holds
    assert set(report.details["A"]) <= set(report.details["B"])
    assert report.details["gain_A"] < report.details["gain_B"]


def test_check_nondecreasing():
    """Test monotonicity with a witness"""
    assert check_nondecreasing(make_set_cover(2, [[0], [1]])).holds
    
    report = check_nondecreasing(make_modular([1.0, -1.0]))
    assert not report.holds
    assert report.details["i"] == 1


def test_base_polytope_membership():
    """Test greedy vertices and a scaled non-member"""
    F = random_cover_instance(np.random.default_rng(5), 5).G
    y = greedy_subgradient(F, Permutation((4, 2, 0, 1, 3))).y
    
    assert check_base_polytope(F, y).holds
    report = check_base_polytope(F, 1.5 * y)
    assert not report.holds
    assert report.witness == [0, 1, 2, 3, 4]
    with pytest.raises(InputError):
        check_base_polytope(F, y[:3])


def test_weak_dr_constants():
    """Test modular, √|X| and min(|X|, 1) constants"""
    assert weak_dr_constants(make_modular([1.0, 2.0, 0.5])) == (1.0, 1.0)
    
    alpha, beta = weak_dr_constants(make_function(3, lambda S: math.sqrt(len(S)), nondecreasing=True))
    assert alpha == pytest.approx(1.0)
    assert beta == pytest.approx(math.sqrt(3) - math.sqrt(2))
    
    coverage = make_function(2, lambda S: float(min(len(S), 1)), nondecreasing=True)
    assert weak_dr_constants(coverage) == (1.0, None)
    
    with pytest.raises(UnsupportedError):
        weak_dr_constants(make_modular([1.0, -1.0]))


def test_speech_beta_lower_bound():
    """Test that the group-weight bound never exceeds the enumerated beta"""
    for seed in range(3):
        speech = gen_speech_synthetic(seed, d=10, n_words=20, r=3)
        _, beta = weak_dr_constants(speech.instance().H)
        assert speech.beta_lower_bound() <= beta + 1e-12


def test_modularity_constants():
    """Test pairwise constants of modular and submodular functions"""
    report = modularity_constants(make_modular([1.0, 2.0, 3.0]))
    assert report.details["alpha"] == pytest.approx(1.0)
    assert report.details["beta"] == pytest.approx(1.0)
    
    cover = modularity_constants(make_set_cover(2, [[0, 1], [0, 1]]))
    assert cover.details["alpha"] == pytest.approx(1.0)
    assert cover.details["beta"] == pytest.approx(0.5)
    assert cover.details["nonnegative"]


def test_subdifferential_vertices(tiny_c_inst):
    """Test vertex enumeration of ∂h_L"""
    single = subdifferential_vertices(tiny_c_inst.H, [1.0, 0.0, 0.0, 0.0, 0.0])
    assert len(single) == 1
    np.testing.assert_allclose(single[0], [1.0, 1.0, 1.0, 0.0, 0.0])
    
    H = make_set_cover(2, [[0], [0, 1]])
    vertices = subdifferential_vertices(H, [0.5, 0.5], rho=1.0)
    assert sorted(v.tolist() for v in vertices) == [[0.5, 2.5], [1.5, 1.5]]


def test_strong_local_minima_respect_weak_dr_bound():
    """Test F(X̂) ≤ G(X*) − β·H(X*) at every strong local minimum of a speech instance"""
    inst = gen_speech_synthetic(3, d=8, n_words=12, r=2, lam=1.0).instance()
    _, beta = weak_dr_constants(inst.H)
    best = brute_force_min(inst.F)
    X_star = best.global_minimizers[0]
    bound = weak_dr_bound(inst.G.evaluate(X_star), inst.H.evaluate(X_star), beta, 0.0)
    
    checked = 0
    for code in range(1 << inst.d):
        X = members(code, inst.d)
        if is_strong_local_min(inst.F, X).holds:
            assert inst.F.evaluate(X) <= bound + 1e-9
            checked += 1
    assert checked >= 1


def test_approximation_bounds():
    """Test the closed-form bounds"""
    assert approx_submodular_bound(-2.0, 0.0, 1.0) == -2.0
    assert weak_dr_bound(3.0, 4.0, 0.5, 0.1) == pytest.approx(1.1)
    assert nonpositive_supermodular_bound(-3.0, 0.3, 1.0) == pytest.approx(-0.8)
    assert nonpositive_supermodular_bound(-3.0, 0.0, 0.5) == pytest.approx(-4.0)
    with pytest.raises(InputError):
        approx_submodular_bound(-2.0, 0.0, 0.5)
