"""Independent brute-force oracles used across the test suite.

Everything here works on *finite truncations*: an index set is represented
as the plain Python set of its members (re, im, k) with Re z below a
cutoff, enumerated directly from the defining closure rules.  None of it
reuses the package's canonical-generator algebra, so agreement between the
two is a genuine cross-check.
"""

from __future__ import annotations

from fractions import Fraction

KEY_DECIMALS = 9


def _key(re, im, k):
    return (round(float(re), KEY_DECIMALS), round(float(im), KEY_DECIMALS), int(k))


def closure_members(generators, re_max):
    """All (re, im, k) in the closure of the generators with re <= re_max."""
    out = {}
    for (z, k) in generators:
        if isinstance(z, tuple):
            re, im = z
        elif isinstance(z, complex):
            re, im = z.real, z.imag
        else:
            re, im = z, 0
        n = 0
        while float(re) + n <= float(re_max) + 1e-12:
            for kk in range(int(k) + 1):
                out[_key(re + n, im, kk)] = (re + n, im, kk)
            n += 1
    return out


def truncation_of(index_set, re_max):
    """Truncation of a package IndexSet, keyed the same way as the oracle."""
    return {_key(re, im, k): (re, im, k) for (re, im, k) in index_set.truncate(re_max)}


def brute_add(mem_a, mem_b, re_max):
    """Pairwise sums of two truncated member dicts, re-truncated."""
    out = {}
    for (ra, ia, ka) in mem_a.values():
        for (rb, ib, kb) in mem_b.values():
            re = ra + rb
            if float(re) <= float(re_max) + 1e-12:
                out[_key(re, ia + ib, ka + kb)] = (re, ia + ib, ka + kb)
    return out


def brute_extended_union(mem_a, mem_b, re_max):
    """Union plus log-boosted pairs at shared exponents, on truncations."""
    out = dict(mem_a)
    out.update(mem_b)
    zs_a = {}
    for (re, im, k) in mem_a.values():
        zkey = (round(float(re), KEY_DECIMALS), round(float(im), KEY_DECIMALS))
        zs_a[zkey] = max(zs_a.get(zkey, -1), k)
    for (re, im, k) in mem_b.values():
        zkey = (round(float(re), KEY_DECIMALS), round(float(im), KEY_DECIMALS))
        if zkey in zs_a:
            boosted = zs_a[zkey] + k + 1
            for kk in range(boosted + 1):
                out[_key(re, im, kk)] = (re, im, kk)
    return out


def random_generators(rng, max_gens=4, allow_halves=True, allow_imag=True):
    """Random exact generator list on a small rational grid."""
    n = rng.randrange(0, max_gens + 1)
    gens = []
    for _ in range(n):
        re = Fraction(rng.randrange(-4, 7), 2 if allow_halves and rng.random() < 0.5 else 1)
        im = rng.choice([0, 0, 0, -1, 1]) if allow_imag else 0
        k = rng.randrange(0, 3)
        gens.append(((re, im), k))
    return gens
