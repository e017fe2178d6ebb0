"""Exact arithmetic on polyhomogeneous index sets and index families.

An index set is a discrete subset of C x N0 that is closed under the two
rules (z, k) -> (z + 1, k) and (z, k) -> (z, k - 1) for k >= 1, and that
contains only finitely many elements with Re z below any given bound.  It
prescribes which terms x^z (log x)^k may occur in an asymptotic expansion
at a boundary face.

We store the finitely many *minimal* generators and keep closure implicit:
(z, k) belongs to the set iff some generator (z0, k0) satisfies
z - z0 in N0 and k <= k0.  This makes membership decidable and gives a
canonical form (no generator dominated by another), hence decidable
equality.

Exponents are kept exact (int / Fraction) when constructed symbolically.
Exponents imported from numerics are floats and are compared with an
absolute tolerance of 1e-9; in particular the log-boost rule of the
extended union decides exponent equality at that tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

__all__ = [
    "IndexSet",
    "IndexFamily",
    "EMPTY",
    "make_index_set",
    "real_set",
    "add",
    "extended_union",
    "shift",
    "scale",
    "greater_than",
    "geq",
]

RealLike = Union[int, Fraction, float]

#: absolute tolerance for float exponent comparisons
TOL = 1e-9


def _is_exact(v: RealLike) -> bool:
    return not isinstance(v, float)


def _req(u: RealLike, v: RealLike) -> bool:
    """Real equality, exact when both operands are exact."""
    if _is_exact(u) and _is_exact(v):
        return u == v
    return abs(u - v) <= TOL


def _is_nonneg_int(d: RealLike) -> bool:
    """Is d a nonnegative integer (to tolerance when float)?"""
    if _is_exact(d):
        return d >= 0 and d.denominator == 1
    n = round(d)
    return n >= 0 and abs(d - n) <= TOL


def _as_real(v) -> RealLike:
    if isinstance(v, bool):
        raise TypeError("boolean is not a valid exponent part")
    if isinstance(v, (int, Fraction)):
        return v
    if isinstance(v, float):
        return v
    raise TypeError(f"exponent part must be int, Fraction or float, got {type(v)!r}")


def _split_exponent(z) -> tuple[RealLike, RealLike]:
    """Accept complex, (re, im) pairs or plain reals for an exponent."""
    if isinstance(z, complex):
        re = z.real
        im = z.imag
        return (int(re) if re.is_integer() else re, int(im) if im.is_integer() else im)
    if isinstance(z, tuple):
        if len(z) != 2:
            raise TypeError("exponent tuple must be (re, im)")
        return (_as_real(z[0]), _as_real(z[1]))
    return (_as_real(z), 0)


# A generator is a triple (re, im, k) with k a nonnegative int.
Gen = tuple


def _gen_key(g: Gen):
    return (float(g[0]), float(g[1]), g[2])


def _z_eq(g: Gen, h: Gen) -> bool:
    return _req(g[0], h[0]) and _req(g[1], h[1])


def _z_diff_nonneg_int(g: Gen, h: Gen) -> bool:
    """True when h.z - g.z lies in N0 (so g's cone reaches h's exponent)."""
    return _req(g[1], h[1]) and _is_nonneg_int(h[0] - g[0])


def _dominates(g: Gen, h: Gen) -> bool:
    """g dominates h when the closure of {g} already contains h."""
    return h[2] <= g[2] and _z_diff_nonneg_int(g, h)


def _canonical(gens: Iterable[Gen]) -> tuple[Gen, ...]:
    gens = list(gens)
    kept: list[Gen] = []
    for i, h in enumerate(gens):
        dominated = False
        for j, g in enumerate(gens):
            if i == j:
                continue
            if _dominates(g, h):
                # identical pairs: keep the first occurrence only
                if _dominates(h, g) and j > i:
                    continue
                dominated = True
                break
        if not dominated:
            kept.append(h)
    # collapse exact duplicates that survived mutual domination
    out: list[Gen] = []
    for g in sorted(kept, key=_gen_key):
        if not any(_z_eq(g, h) and g[2] == h[2] for h in out):
            out.append(g)
    return tuple(out)


@dataclass(frozen=True)
class IndexSet:
    """Canonical index set given by its minimal generators.

    ``generators`` is a sorted tuple of (re, im, k) triples, none dominated
    by another.  The empty tuple represents the empty index set.
    """

    generators: tuple = ()

    @property
    def is_empty(self) -> bool:
        return not self.generators

    def member(self, z, k: int = 0) -> bool:
        """Decide membership of (z, k) in the closed set."""
        re, im = _split_exponent(z)
        probe = (re, im, int(k))
        return any(_dominates(g, probe) for g in self.generators)

    def min_re(self) -> RealLike:
        """Smallest real part among minimal elements (inf for the empty set)."""
        if self.is_empty:
            return float("inf")
        return min((g[0] for g in self.generators), key=float)

    def truncate(self, re_max: RealLike = 10) -> list[tuple[RealLike, RealLike, int]]:
        """All members (re, im, k) with re <= re_max, sorted.

        Used for display and serialization of the (infinite) closed set.
        """
        seen: list[tuple[RealLike, RealLike, int]] = []
        for (re, im, kmax) in self.generators:
            n = 0
            while float(re) + n <= float(re_max) + TOL:
                for k in range(kmax + 1):
                    cand = (re + n, im, k)
                    if not any(
                        _req(cand[0], s[0]) and _req(cand[1], s[1]) and cand[2] == s[2]
                        for s in seen
                    ):
                        seen.append(cand)
                n += 1
        return sorted(seen, key=lambda s: (float(s[0]), float(s[1]), s[2]))

    def close_to(self, other: "IndexSet", tol: float = TOL) -> bool:
        """Generator-wise equality up to tolerance in the exponents."""
        if len(self.generators) != len(other.generators):
            return False
        for g, h in zip(self.generators, other.generators):
            if g[2] != h[2] or abs(g[0] - h[0]) > tol or abs(g[1] - h[1]) > tol:
                return False
        return True

    def to_json(self) -> dict:
        return {
            "empty": self.is_empty,
            "generators": [
                {"re": _json_num(g[0]), "im": _json_num(g[1]), "k": g[2]}
                for g in self.generators
            ],
        }

    @staticmethod
    def from_json(data: dict) -> "IndexSet":
        if data.get("empty") and not data.get("generators"):
            return EMPTY
        gens = [
            ((_load_num(g["re"]), _load_num(g["im"])), int(g["k"]))
            for g in data.get("generators", [])
        ]
        return make_index_set(gens)

    def __repr__(self) -> str:
        if self.is_empty:
            return "IndexSet(∅)"
        parts = ", ".join(
            f"({_fmt(g[0])}{'' if _req(g[1], 0) else '+' + _fmt(g[1]) + 'i'},{g[2]})"
            for g in self.generators
        )
        return f"IndexSet[{parts}]"


def _json_num(v: RealLike):
    if isinstance(v, Fraction):
        return int(v) if v.denominator == 1 else float(v)
    if isinstance(v, float) and v.is_integer():
        return int(v)
    return v


def _load_num(v) -> RealLike:
    if isinstance(v, int):
        return v
    f = float(v)
    return int(f) if f.is_integer() else f


def _fmt(v: RealLike) -> str:
    if isinstance(v, Fraction) and v.denominator != 1:
        return f"{v.numerator}/{v.denominator}"
    return str(_json_num(v))


EMPTY = IndexSet()


def make_index_set(generators: Sequence) -> IndexSet:
    """Build the canonical index set generated by (z, k) pairs.

    Each entry is (z, k) where z may be real, complex or an (re, im) pair
    and k is a nonnegative integer log power.  The represented set is the
    closure of the generators; dominated generators are removed.
    """
    gens = []
    for z, k in generators:
        k = int(k)
        if k < 0:
            raise ValueError(f"log power must be nonnegative, got {k}")
        re, im = _split_exponent(z)
        gens.append((re, im, k))
    return IndexSet(_canonical(gens))


def real_set(r: RealLike) -> IndexSet:
    """The index set written shorthand as a real number: (r + N0) x {0}."""
    return make_index_set([(r, 0)])


def add(I: IndexSet, J: IndexSet) -> IndexSet:
    """Set addition {(z + z', k + k')}; the empty set is absorbing."""
    if I.is_empty or J.is_empty:
        return EMPTY
    gens = [
        (g[0] + h[0], g[1] + h[1], g[2] + h[2])
        for g in I.generators
        for h in J.generators
    ]
    return IndexSet(_canonical(gens))


def _max_logpower(I: IndexSet, z: Gen) -> int:
    """Largest k with (z, k) in I, or -1 when z is not an exponent of I."""
    best = -1
    for g in I.generators:
        if _z_diff_nonneg_int(g, (z[0], z[1], 0)):
            best = max(best, g[2])
    return best


def extended_union(I: IndexSet, J: IndexSet) -> IndexSet:
    """Extended union: I u J plus (z, l1 + l2 + 1) at shared exponents z.

    The log boost applies at every exponent of the *closed* sets, not just
    at generator exponents; the candidate scan below covers all points
    where the combined maximal log power can jump.
    """
    if I.is_empty:
        return J
    if J.is_empty:
        return I
    candidates: list[Gen] = []
    for g in list(I.generators) + list(J.generators):
        z = (g[0], g[1], 0)
        if not any(_z_eq(z, c) for c in candidates):
            candidates.append(z)
    gens = []
    for z in candidates:
        mi = _max_logpower(I, z)
        mj = _max_logpower(J, z)
        m = max(mi, mj)
        if mi >= 0 and mj >= 0:
            m = max(m, mi + mj + 1)
        if m >= 0:
            gens.append((z[0], z[1], m))
    return IndexSet(_canonical(gens))


def shift(I: IndexSet, r: RealLike) -> IndexSet:
    """Shift every exponent by the real number r (empty set unchanged)."""
    r = _as_real(r)
    return IndexSet(_canonical((g[0] + r, g[1], g[2]) for g in I.generators))


def scale(I: IndexSet, a: int) -> IndexSet:
    """Map the minimal elements by (z, k) -> (a z, k), then re-close.

    The scaling acts on minimal generators and the result is the closure of
    the scaled generators (integer steps, not steps of a).
    """
    if not isinstance(a, int) or a < 1:
        raise ValueError(f"scale factor must be a positive integer, got {a!r}")
    return IndexSet(_canonical((a * g[0], a * g[1], g[2]) for g in I.generators))


def greater_than(I: IndexSet, alpha: RealLike) -> bool:
    """I > alpha: every element has Re z > alpha.  Empty set: True."""
    alpha = _as_real(alpha)
    for g in I.generators:
        if _req(g[0], alpha) or float(g[0]) < float(alpha):
            return False
    return True


def geq(I: IndexSet, alpha: RealLike) -> bool:
    """I >= alpha: Re z >= alpha throughout, and k = 0 where Re z = alpha."""
    alpha = _as_real(alpha)
    for g in I.generators:
        if _req(g[0], alpha):
            if g[2] != 0:
                return False
        elif float(g[0]) < float(alpha):
            return False
    return True


# ---------------------------------------------------------------------------
# index families


_B_FACES = ("lf", "rf", "bf")
_PHI_FACES = ("lf", "rf", "bf", "ff")


@dataclass(frozen=True)
class IndexFamily:
    """An index set per boundary face of a blown-up double space.

    b-type families carry faces (lf, rf, bf); phi-type families add ff.
    """

    kind: str  # "b" | "phi"
    lf: IndexSet = EMPTY
    rf: IndexSet = EMPTY
    bf: IndexSet = EMPTY
    ff: IndexSet | None = None

    def __post_init__(self):
        if self.kind not in ("b", "phi"):
            raise ValueError(f"family kind must be 'b' or 'phi', got {self.kind!r}")
        if self.kind == "b" and self.ff is not None:
            raise ValueError("b-type family must not carry an ff index set")
        if self.kind == "phi" and self.ff is None:
            raise ValueError("phi-type family must carry an ff index set")

    @property
    def faces(self) -> tuple[str, ...]:
        return _B_FACES if self.kind == "b" else _PHI_FACES

    def face(self, name: str) -> IndexSet:
        if name not in self.faces:
            raise KeyError(f"{self.kind}-type family has no face {name!r}")
        value = getattr(self, name)
        return value

    def replace(self, **updates) -> "IndexFamily":
        fields = {f: getattr(self, f) for f in ("kind", "lf", "rf", "bf", "ff")}
        fields.update(updates)
        return IndexFamily(**fields)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        for f in self.faces:
            out[f] = self.face(f).to_json()
        return out

    @staticmethod
    def from_json(data: dict) -> "IndexFamily":
        kind = data["kind"]
        sets = {f: IndexSet.from_json(data[f]) for f in (_B_FACES if kind == "b" else _PHI_FACES)}
        if kind == "b":
            sets["ff"] = None
        return IndexFamily(kind=kind, **sets)

    def __repr__(self) -> str:
        inner = ", ".join(f"{f}={self.face(f)!r}" for f in self.faces)
        return f"IndexFamily({self.kind}; {inner})"


def small_family(kind: str) -> IndexFamily:
    """The index family of the small calculus: all empty except bf=0 (b-type)
    or ff=0 (phi-type)."""
    if kind == "b":
        return IndexFamily("b", lf=EMPTY, rf=EMPTY, bf=real_set(0))
    return IndexFamily("phi", lf=EMPTY, rf=EMPTY, bf=EMPTY, ff=real_set(0))
