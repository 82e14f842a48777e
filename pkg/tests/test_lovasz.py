import math
import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st
from dsmin.core.errors import InputError, UnsupportedError
from dsmin.services.setfn import make_function, make_modular, random_cover_instance
from dsmin.services.lovasz import (
    Permutation,
    check_box,
    greedy_subgradient,
    lipschitz_bound,
    local_tie_breaks,
    lovasz_eval,
    lovasz_eval_and_subgradient,
    round_f,
    sort_decreasing,
)
from dsmin.services.oracle import lovasz_bruteforce

D = 5
INSTANCE = random_cover_instance(np.random.default_rng(2024), D)
points = st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=D, max_size=D)


def test_greedy_vertex_of_sqrt():
    """Test the greedy vertex of √|X| along the identity order"""
    F = make_function(2, lambda S: math.sqrt(len(S)))
    y = greedy_subgradient(F, Permutation((0, 1))).y
    
    np.testing.assert_allclose(y, [1.0, math.sqrt(2) - 1.0])
    x = np.array([0.7, 0.3])
    assert lovasz_eval(F, x) == pytest.approx(0.7 + 0.3 * (math.sqrt(2) - 1.0))


def test_sort_decreasing_ties():
    """Test that ties go to the smaller index unless a tie-break says otherwise"""
    assert sort_decreasing([0.5, 0.5, 1.0]).order == (2, 0, 1)
    assert sort_decreasing([0.5, 0.5, 1.0], tie_break=[0.0, 1.0, 0.0]).order == (2, 1, 0)


def test_sort_decreasing_rejects_nan():
    """Test NaN input"""
    with pytest.raises(InputError):
        sort_decreasing([0.1, float("nan")])


def test_permutation_validation():
    """Test that only permutations of 0..d-1 are accepted"""
    with pytest.raises(InputError):
        Permutation((0, 0, 1))
    sigma = Permutation.with_prefix([3, 1], 4)
    assert sigma.order == (1, 3, 0, 2)
    assert sigma.prefix(2) == frozenset({1, 3})


def test_check_box():
    """Test the box check with its small slack"""
    check_box([0.0, 1.0 + 1e-13])
    with pytest.raises(InputError):
        check_box([0.0, 1.1])
    with pytest.raises(InputError):
        check_box([0.5], d=2)


def test_round_f_prefers_shortest_prefix(tiny_a_inst):
    """Test that ties along the chain go to the smallest prefix"""
    rounded = round_f(tiny_a_inst.F, np.zeros(3))
    
    assert rounded.set == frozenset()
    assert rounded.chain_index == 0
    assert round_f(tiny_a_inst.F, [0.0, 0.0, 1.0]).set == frozenset({2})


def test_lipschitz_bound():
    """Test F(V) for nondecreasing F, 3·value_bound otherwise"""
    assert lipschitz_bound(INSTANCE.G) == INSTANCE.G.evaluate(range(D))
    assert lipschitz_bound(make_modular([1.0, -2.0])) == 6.0
    with pytest.raises(UnsupportedError):
        lipschitz_bound(make_function(2, lambda S: float(len(S) % 2)))


def test_lipschitz_on_random_pairs():
    """Test |f_L(x) − f_L(z)| ≤ κ‖x − z‖ for G, H and their difference"""
    rng = np.random.default_rng(7)
    kappa_G, kappa_H = lipschitz_bound(INSTANCE.G), lipschitz_bound(INSTANCE.H)
    for fn, kappa in ((INSTANCE.G, kappa_G), (INSTANCE.H, kappa_H), (INSTANCE.F, kappa_G + kappa_H)):
        for _ in range(1000):
            x, z = rng.random(D), rng.random(D)
            assert abs(lovasz_eval(fn, x) - lovasz_eval(fn, z)) <= kappa * np.linalg.norm(x - z) + 1e-9


def test_local_tie_breaks_reach_neighbors():
    """Test that permutation i passes through X∖{i} or X∪{i}"""
    X = {0, 2, 3}
    x = np.array([1.0 if i in X else 0.0 for i in range(6)])
    for i, tb in enumerate(local_tie_breaks(x)):
        sigma = sort_decreasing(x, tb)
        assert sigma.prefix(len(X)) == frozenset(X)
        if i in X:
            assert sigma.prefix(len(X) - 1) == frozenset(X - {i})
        else:
            assert sigma.prefix(len(X) + 1) == frozenset(X | {i})


@given(st.lists(st.booleans(), min_size=D, max_size=D))
def test_extension_agrees_on_indicators(bits):
    """Test f_L(1_X) = F(X)"""
    mask = np.array(bits)
    assert lovasz_eval(INSTANCE.F, mask.astype(float)) == pytest.approx(INSTANCE.F.evaluate(mask), abs=1e-9)


@given(points)
def test_extension_is_additive(x):
    """Test f_L of G − H equals g_L − h_L"""
    value = lovasz_eval(INSTANCE.F, x)
    assert value == pytest.approx(lovasz_eval(INSTANCE.G, x) - lovasz_eval(INSTANCE.H, x), abs=1e-9)


@given(points, st.floats(min_value=0.0, max_value=1.0))
def test_extension_is_positively_homogeneous(x, t):
    """Test f_L(t·x) = t·f_L(x)"""
    x = np.asarray(x)
    assert lovasz_eval(INSTANCE.F, t * x) == pytest.approx(t * lovasz_eval(INSTANCE.F, x), abs=1e-9)


@hyp_settings(max_examples=50)
@given(points)
def test_extension_is_support_function(x):
    """Test that the greedy value is the maximum over all greedy vertices"""
    assert lovasz_eval(INSTANCE.H, x) == pytest.approx(lovasz_bruteforce(INSTANCE.H, x), abs=1e-9)


@given(points)
def test_rounding_never_increases(x):
    """Test F(Round_F(x)) ≤ f_L(x)"""
    rounded = round_f(INSTANCE.F, x)
    assert rounded.value <= lovasz_eval(INSTANCE.F, x) + 1e-9
    assert rounded.value == pytest.approx(INSTANCE.F.evaluate(rounded.set), abs=1e-12)


@given(points)
def test_eval_and_subgradient_agree(x):
    """Test that the returned value is ⟨x, y⟩ for the returned vertex"""
    value, point = lovasz_eval_and_subgradient(INSTANCE.G, x)
    assert value == pytest.approx(float(np.dot(x, point.y)), abs=1e-12)
    assert point.y.sum() == pytest.approx(INSTANCE.G.evaluate(range(D)))
