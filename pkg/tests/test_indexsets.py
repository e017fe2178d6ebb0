"""Index-set algebra: worked examples, oracle agreement, and invariants."""

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phicalc.indexsets import (
    EMPTY,
    IndexFamily,
    IndexSet,
    add,
    extended_union,
    geq,
    greater_than,
    make_index_set,
    real_set,
    scale,
    shift,
    small_family,
)

from oracles import (
    brute_add,
    brute_extended_union,
    closure_members,
    random_generators,
    truncation_of,
)


def iset(*pairs):
    return make_index_set(list(pairs))


# ---------------------------------------------------------------------------
# construction and canonical form


def test_empty_construction():
    assert make_index_set([]) is not None
    assert make_index_set([]).is_empty
    assert make_index_set([]) == EMPTY


def test_dominated_generator_removed():
    # (1,0) lies in the closure of (0,0)
    assert iset((0, 0), (1, 0)) == iset((0, 0))


def test_closure_membership_log_generator():
    # frozen from the brute-force closure of {(0,1)} below Re z <= 3
    members = closure_members([(0, 1)], 3)
    I = iset((0, 1))
    for probe in [(0, 0), (0, 1), (1, 1), (2, 0)]:
        assert (float(probe[0]), 0.0, probe[1]) in members
        assert I.member(probe[0], probe[1])
    for probe in [(-1, 0), (0, 2)]:
        assert (float(probe[0]), 0.0, probe[1]) not in members
        assert not I.member(probe[0], probe[1])


def test_negative_log_power_rejected():
    with pytest.raises(ValueError):
        make_index_set([(0, -1)])


def test_incomparable_generators_kept():
    I = iset((0, 1), (1, 2))
    assert len(I.generators) == 2
    assert I.member(1, 2) and I.member(0, 1) and not I.member(0, 2)


# ---------------------------------------------------------------------------
# the four empty-set identities and basic operations


def test_add_empty_absorbing():
    I = iset((0, 1), (2, 0))
    assert add(I, EMPTY) == EMPTY
    assert add(EMPTY, I) == EMPTY
    assert add(EMPTY, real_set(5)) == EMPTY


def test_add_identity_at_zero():
    I = iset((Fraction(1, 2), 1), (3, 0))
    assert add(I, real_set(0)) == I
    assert add(real_set(0), I) == I


def test_add_translation():
    assert add(iset((1, 0)), iset((1, 0))) == iset((2, 0))


def test_extended_union_empty_identity():
    J = iset((0, 1), (2, 0))
    assert extended_union(EMPTY, J) == J
    assert extended_union(J, EMPTY) == J


def test_extended_union_self_boost():
    assert extended_union(iset((0, 0)), iset((0, 0))) == iset((0, 1))
    got = extended_union(iset((0, 0)), iset((0, 0)))
    assert got.member(0, 0) and got.member(0, 1) and got.member(1, 1)


def test_extended_union_boost_inside_closure():
    # the closure of {(0,0)} reaches z=1, so the boost appears there
    assert extended_union(iset((0, 0)), iset((1, 0))) == iset((0, 0), (1, 1))


def test_shift_examples():
    assert shift(EMPTY, 5) == EMPTY
    assert shift(iset((0, 1)), 2) == iset((2, 1))


def test_scale_examples():
    assert scale(iset((-1, 0)), 2) == iset((-2, 0))
    # evaluate 1 unioned-with 2 first, then scale minimal elements by 2
    inner = extended_union(real_set(1), real_set(2))
    assert inner == iset((1, 0), (2, 1))
    assert scale(inner, 2) == iset((2, 0), (4, 1))


def test_scale_rejects_bad_factor():
    with pytest.raises(ValueError):
        scale(real_set(0), 0)
    with pytest.raises(ValueError):
        scale(real_set(0), -2)


def test_comparisons():
    assert greater_than(EMPTY, 1e6)
    assert geq(iset((0, 0)), 0)
    assert not geq(iset((0, 1)), 0)
    assert greater_than(iset((0.5, 0)), 0)
    assert not greater_than(iset((0.5, 0)), 0.5)
    assert geq(iset((0.5, 0)), 0.5)


def test_float_tolerance_in_union():
    # numerics-imported exponent within 1e-9 of an exact one gets boosted
    got = extended_union(iset(((1.0 + 2e-10, 0.0), 0)), iset((1, 0)))
    assert len(got.generators) == 1
    assert got.generators[0][2] == 1


# ---------------------------------------------------------------------------
# oracle agreement on random sets


def test_membership_matches_bruteforce_closure():
    rng = random.Random(20260810)
    for _ in range(300):
        gens = random_generators(rng)
        I = make_index_set(gens)
        members = closure_members(gens, 8)
        assert truncation_of(I, 8).keys() == members.keys()


def test_add_matches_bruteforce():
    rng = random.Random(7)
    for _ in range(120):
        ga, gb = random_generators(rng, 3), random_generators(rng, 3)
        A, B = make_index_set(ga), make_index_set(gb)
        cutoff = 8
        # enumerate each factor far enough that all sums below the cutoff appear
        reach = cutoff + 8
        got = truncation_of(add(A, B), cutoff)
        want = brute_add(closure_members(ga, reach), closure_members(gb, reach), cutoff)
        assert got.keys() == want.keys()


def test_extended_union_matches_bruteforce():
    rng = random.Random(11)
    for _ in range(150):
        ga, gb = random_generators(rng, 3), random_generators(rng, 3)
        A, B = make_index_set(ga), make_index_set(gb)
        got = truncation_of(extended_union(A, B), 8)
        want = brute_extended_union(closure_members(ga, 8), closure_members(gb, 8), 8)
        assert got.keys() == want.keys()


def test_extended_union_contains_union_equality_iff_disjoint_exponents():
    rng = random.Random(13)
    for _ in range(150):
        ga, gb = random_generators(rng, 3), random_generators(rng, 3)
        A, B = make_index_set(ga), make_index_set(gb)
        mem_a, mem_b = closure_members(ga, 8), closure_members(gb, 8)
        union = dict(mem_a)
        union.update(mem_b)
        got = truncation_of(extended_union(A, B), 8)
        assert union.keys() <= got.keys()
        zs_a = {(r, i) for (r, i, _) in mem_a}
        zs_b = {(r, i) for (r, i, _) in mem_b}
        shares = bool(zs_a & zs_b)
        assert (got.keys() == union.keys()) == (not shares)


def test_extended_union_associativity_probe():
    """Associativity is not assumed; we search for counterexamples and
    report any that appear instead of canonicalizing them away."""
    rng = random.Random(17)
    counterexamples = []
    for _ in range(200):
        A = make_index_set(random_generators(rng, 3))
        B = make_index_set(random_generators(rng, 3))
        C = make_index_set(random_generators(rng, 3))
        lhs = extended_union(extended_union(A, B), C)
        rhs = extended_union(A, extended_union(B, C))
        if truncation_of(lhs, 8).keys() != truncation_of(rhs, 8).keys():
            counterexamples.append((A, B, C, lhs, rhs))
    assert not counterexamples, f"extended union not associative: {counterexamples[:3]}"


# ---------------------------------------------------------------------------
# algebraic invariants (property-based)


exact_reals = st.one_of(
    st.integers(min_value=-4, max_value=6),
    st.fractions(min_value=-4, max_value=6, max_denominator=4),
)
gen_lists = st.lists(
    st.tuples(exact_reals, st.integers(min_value=0, max_value=2)), max_size=4
)


@settings(max_examples=150, deadline=None)
@given(gen_lists, gen_lists)
def test_add_and_union_commute(ga, gb):
    A, B = make_index_set(ga), make_index_set(gb)
    assert add(A, B) == add(B, A)
    assert extended_union(A, B) == extended_union(B, A)


@settings(max_examples=100, deadline=None)
@given(gen_lists, gen_lists, gen_lists)
def test_add_associative(ga, gb, gc):
    A, B, C = make_index_set(ga), make_index_set(gb), make_index_set(gc)
    assert add(add(A, B), C) == add(A, add(B, C))


@settings(max_examples=150, deadline=None)
@given(gen_lists)
def test_canonicalization_idempotent(ga):
    I = make_index_set(ga)
    again = make_index_set([((g[0], g[1]), g[2]) for g in I.generators])
    assert again == I


@settings(max_examples=150, deadline=None)
@given(gen_lists, gen_lists)
def test_monotonicity_of_add(ga, gb):
    A, B = make_index_set(ga), make_index_set(gb)
    if A.is_empty or B.is_empty:
        return
    alpha = A.min_re() - 1
    beta = B.min_re() - 1
    assert greater_than(A, alpha) and greater_than(B, beta)
    assert greater_than(add(A, B), alpha + beta)


# ---------------------------------------------------------------------------
# serialization and families


def test_json_round_trip():
    I = iset((Fraction(1, 2), 1), ((2, -1), 0))
    assert IndexSet.from_json(I.to_json()) == I
    assert IndexSet.from_json(EMPTY.to_json()) == EMPTY


def test_family_validation():
    with pytest.raises(ValueError):
        IndexFamily("b", ff=real_set(0))
    with pytest.raises(ValueError):
        IndexFamily("phi")  # missing ff
    fam = IndexFamily("phi", lf=EMPTY, rf=EMPTY, bf=EMPTY, ff=real_set(0))
    assert fam.faces == ("lf", "rf", "bf", "ff")
    assert fam == small_family("phi")


def test_family_json_round_trip():
    fam = IndexFamily("phi", lf=real_set(1), rf=EMPTY, bf=iset((0, 1)), ff=real_set(0))
    assert IndexFamily.from_json(fam.to_json()) == fam
    famb = small_family("b")
    assert IndexFamily.from_json(famb.to_json()) == famb
