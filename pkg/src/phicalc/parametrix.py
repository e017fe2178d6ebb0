"""Split parametrix construction replayed at the level of operator classes.

A :class:`SplitOperator` is the 2x2 block form of an operator that splits
under the fibre-harmonic projection: an elliptic b-block scaled by x^(am),
x^(am)-suppressed off-diagonal blocks, and a perpendicular block with
invertible normal family.  For an admissible weight alpha the engine
replays the five-step construction of right and left parametrices purely
on operator classes:

1.  diagonal parametrix (b-parametrix for the harmonic block, normal
    inverse for the perpendicular block),
2.  off-diagonal correction making the remainder vanish at the compressed
    faces,
3.  formal-solution correction removing the left-face expansion,
4.  asymptotic Neumann summation,
5.  composition with an interior symbolic parametrix.

Every class the engine asserts is checked against the target class matrix
of the corresponding combination identity, with each assertion carrying a
replayable chain of rule applications from :mod:`phicalc.opclasses`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .indexsets import make_index_set, shift
from . import opclasses as oc
from .opclasses import (
    CHAIN_PRIMITIVES,
    ClassSum,
    GeomConstants,
    NEG_INF,
    OpClass,
    RuleApp,
    ZERO,
    adjoint_class,
    compose,
    contains,
    decompose_near_ff,
    eq_classes,
    small_b,
    small_phi,
    sum_of,
    weight_b,
    weight_phi,
    x_left,
    x_right,
)

INF = float("inf")

__all__ = [
    "SplitOperator",
    "ParametrixError",
    "WeightConditionError",
    "HypothesisError",
    "EngineError",
    "check_weight",
    "step1_diagonal",
    "step2_offdiagonal",
    "step3_lf_correction",
    "step4_neumann",
    "step5_interior",
    "right_parametrix",
    "left_parametrix",
    "parametrix_report",
    "fredholm_report",
    "regularity_predict",
    "gauss_bonnet_split",
    "hodge_split",
    "Mat",
]


class ParametrixError(Exception):
    pass


class WeightConditionError(ParametrixError):
    pass


class HypothesisError(ParametrixError):
    pass


class EngineError(ParametrixError):
    """An internal containment failed: a combination-rule bug."""


# ---------------------------------------------------------------------------
# 2x2 class matrices


class Mat:
    """2x2 matrix of operator classes indexed by the projections
    (row/column 0: fibre-harmonic part, 1: perpendicular part)."""

    def __init__(self, entries):
        self.entries = [[entries[0][0], entries[0][1]], [entries[1][0], entries[1][1]]]

    @staticmethod
    def diag(a, d) -> "Mat":
        return Mat([[a, ZERO], [ZERO, d]])

    @staticmethod
    def offdiag(b, c) -> "Mat":
        return Mat([[ZERO, b], [c, ZERO]])

    @staticmethod
    def proj_cols(base, c) -> "Mat":
        """base (Pi + x^c Piperp): perpendicular column scaled on the right."""
        return Mat([[base, x_right(base, c)], [base, x_right(base, c)]])

    @staticmethod
    def proj_rows(base, c) -> "Mat":
        """(Pi + x^c Piperp) base: perpendicular row scaled on the left."""
        return Mat([[base, base], [x_left(base, c), x_left(base, c)]])

    def __getitem__(self, ij):
        return self.entries[ij[0]][ij[1]]

    def map(self, f) -> "Mat":
        return Mat([[f(self[0, 0]), f(self[0, 1])], [f(self[1, 0]), f(self[1, 1])]])

    def add(self, other: "Mat") -> "Mat":
        return Mat(
            [
                [sum_of(self[i, j], other[i, j]) for j in (0, 1)]
                for i in (0, 1)
            ]
        )

    def adjoint(self) -> "Mat":
        return Mat(
            [
                [adjoint_class(self[j, i]) for j in (0, 1)]
                for i in (0, 1)
            ]
        )

    def x_left_all(self, c) -> "Mat":
        return self.map(lambda e: oc.multiply_x_power(e, c, "left"))

    def matmul(self, other: "Mat", geom, route=None, trace=None) -> "Mat":
        out = []
        for i in (0, 1):
            row = []
            for j in (0, 1):
                acc = []
                for k in (0, 1):
                    p, q = self[i, k], other[k, j]
                    if getattr(p, "is_zero", False) or getattr(q, "is_zero", False):
                        continue
                    acc.append(compose(p, q, geom, route=route, trace=trace))
                row.append(sum_of(*acc))
            out.append(row)
        return Mat(out)

    def canonical(self, geom=None) -> "Mat":
        def canon(e):
            if isinstance(e, ClassSum):
                s = e.canonical(geom)
                return s.terms[0] if len(s.terms) == 1 else s
            return e

        return self.map(canon)

    def contained_in(self, other: "Mat", geom) -> bool:
        return all(contains(self[i, j], other[i, j], geom) for i in (0, 1) for j in (0, 1))

    def equals(self, other: "Mat") -> bool:
        return all(eq_classes(self[i, j], other[i, j]) for i in (0, 1) for j in (0, 1))

    def to_json(self):
        def ent(e):
            if getattr(e, "is_zero", False):
                return None
            return e.to_json()

        return [[ent(self[0, 0]), ent(self[0, 1])], [ent(self[1, 0]), ent(self[1, 1])]]

    def __repr__(self):
        return (
            f"[[{self[0,0]!r}, {self[0,1]!r}],\n"
            f" [{self[1,0]!r}, {self[1,1]!r}]]"
        )


# ---------------------------------------------------------------------------
# the split operator


@dataclass
class SplitOperator:
    """Block data of a split operator of degeneracy order a and order m.

    The harmonic block carries x^(am) P00 with P00 an elliptic b-operator;
    the off-diagonal blocks carry x^(am) P01 and x^(am) P10; the
    perpendicular block P11 has invertible normal family.  ``imspec_p00``
    lists the critical weights of P00 (supplied externally, for instance by
    the model numerics).
    """

    a: int
    m: int
    p00: OpClass
    p01: OpClass
    p10: OpClass
    p11: OpClass
    imspec_p00: list
    normal_invertible: bool = True
    p00_elliptic: bool = True
    phi_elliptic: bool = True
    b_dim: int = 1

    def __post_init__(self):
        if self.a < 1 or self.m < 1:
            raise ValueError("degeneracy order a and operator order m must be >= 1")
        if self.p00.kind != "b":
            raise ValueError("the harmonic block must be a b-kind class")
        for name in ("p01", "p10", "p11"):
            cls = getattr(self, name)
            if not cls.is_zero and cls.kind != "phi":
                raise ValueError(f"{name} must be a phi-kind class (or zero)")

    @property
    def am(self) -> int:
        return self.a * self.m

    @property
    def geom(self) -> GeomConstants:
        return GeomConstants(a=self.a, b_dim=self.b_dim)

    @property
    def diagonal_only(self) -> bool:
        return self.p01.is_zero and self.p10.is_zero

    def adjoint(self) -> "SplitOperator":
        """The adjoint split operator.

        Its harmonic block is the conjugated adjoint x^(-am) P00* x^(am);
        the critical weights reflect, then shift down by am.
        """
        return SplitOperator(
            a=self.a,
            m=self.m,
            p00=adjoint_class(self.p00),
            p01=adjoint_class(self.p10),
            p10=adjoint_class(self.p01),
            p11=adjoint_class(self.p11),
            imspec_p00=[-s - self.am for s in self.imspec_p00],
            normal_invertible=self.normal_invertible,
            p00_elliptic=self.p00_elliptic,
            phi_elliptic=self.phi_elliptic,
            b_dim=self.b_dim,
        )

    def to_json(self):
        return {
            "a": self.a,
            "m": self.m,
            "b_dim": self.b_dim,
            "p00": self.p00.to_json(),
            "p01": None if self.p01.is_zero else self.p01.to_json(),
            "p10": None if self.p10.is_zero else self.p10.to_json(),
            "p11": self.p11.to_json(),
            "imspec_p00": list(self.imspec_p00),
            "normal_invertible": self.normal_invertible,
            "p00_elliptic": self.p00_elliptic,
            "phi_elliptic": self.phi_elliptic,
        }

    @staticmethod
    def from_json(data: dict) -> "SplitOperator":
        def cls(key):
            raw = data.get(key)
            return ZERO if raw is None else OpClass.from_json(raw)

        return SplitOperator(
            a=int(data["a"]),
            m=int(data["m"]),
            p00=OpClass.from_json(data["p00"]),
            p01=cls("p01"),
            p10=cls("p10"),
            p11=OpClass.from_json(data["p11"]),
            imspec_p00=[float(s) for s in data.get("imspec_p00", [])],
            normal_invertible=bool(data.get("normal_invertible", True)),
            p00_elliptic=bool(data.get("p00_elliptic", True)),
            phi_elliptic=bool(data.get("phi_elliptic", True)),
            b_dim=int(data.get("b_dim", 1)),
        )


def gauss_bonnet_split(a: int = 1, b_dim: int = 1, imspec=()) -> SplitOperator:
    """First-order split block data (the x^a-scaled Gauss-Bonnet shape)."""
    return SplitOperator(
        a=a,
        m=1,
        p00=small_b(1),
        p01=small_phi(1, ext=True),
        p10=small_phi(1, ext=True),
        p11=small_phi(1, ext=True),
        imspec_p00=list(imspec),
        b_dim=b_dim,
    )


def hodge_split(a: int = 1, b_dim: int = 1, imspec=()) -> SplitOperator:
    """Second-order split block data (the x^(2a)-scaled Hodge Laplacian shape)."""
    return SplitOperator(
        a=a,
        m=2,
        p00=small_b(2),
        p01=small_phi(2, ext=True),
        p10=small_phi(2, ext=True),
        p11=small_phi(2, ext=True),
        imspec_p00=list(imspec),
        b_dim=b_dim,
    )


# ---------------------------------------------------------------------------
# assertions and reports


@dataclass
class Assertion:
    label: str
    derived: object  # Mat | Entry json-able
    target: object
    contained: bool
    exact: bool
    chain: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.contained

    def to_json(self):
        def enc(x):
            if isinstance(x, Mat):
                return x.to_json()
            if hasattr(x, "to_json"):
                return x.to_json()
            return x

        return {
            "label": self.label,
            "derived": enc(self.derived),
            "target": enc(self.target),
            "contained": self.contained,
            "exact": self.exact,
            "verdict": "PASS" if self.passed else "FAIL",
            "chain": [r.to_json() for r in self.chain],
        }


@dataclass
class StepResult:
    name: str
    assertions: list
    data: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def to_json(self):
        return {
            "step": self.name,
            "verdict": "PASS" if self.passed else "FAIL",
            "assertions": [a.to_json() for a in self.assertions],
        }


def _assert_mat(label, derived: Mat, target: Mat, geom, chain=None) -> Assertion:
    canon = derived.canonical(geom)
    return Assertion(
        label=label,
        derived=canon,
        target=target,
        contained=canon.contained_in(target, geom),
        exact=canon.equals(target),
        chain=chain or [],
    )


# ---------------------------------------------------------------------------
# target class matrices of the construction identities


def target_diag_parametrix(a, m, al) -> Mat:
    am = a * m
    return Mat.diag(weight_b(-m, al, xl=-am), small_phi(-m, ext=True))


def target_diag_remainder(a, m, al) -> Mat:
    return Mat.diag(
        x_left(weight_phi(0, al, ext=True), INF), x_left(small_phi(0, ext=True), INF)
    )


def target_po_qd(a, m, al) -> Mat:
    am = a * m
    return Mat.offdiag(x_right(small_phi(0, ext=True), am), weight_phi(0, al, ext=True))


def target_offdiag_correction(a, m, al) -> Mat:
    am = a * m
    return Mat.offdiag(
        weight_phi(-m, al, ext=True, xl=-am, xr=am), weight_phi(-m, al, ext=True)
    )


def target_remainder_cross(a, m, al) -> Mat:
    am = a * m
    s = x_left(weight_phi(0, al, ext=True), INF)
    return Mat.offdiag(x_right(s, am), s)


def target_squared_offdiag(a, m, al) -> Mat:
    am = a * m
    w = weight_phi(0, al, ext=True)
    return Mat.diag(x_left(w, am), x_right(w, am))


def psi_lf(al) -> OpClass:
    """Weight-alpha phi-class whose kernels vanish to infinite order at lf."""
    return weight_phi(0, al, ext=True, vanish=("lf",))


def target_r3_space(a, m, al) -> Mat:
    am = a * m
    w = psi_lf(al)
    return Mat([[x_left(w, am), x_right(w, am)], [w, x_right(w, am)]])


def target_r3_squared(a, m, al) -> Mat:
    am = a * m
    w = psi_lf(al)
    return Mat([[x_left(w, am), x_left(x_right(w, am), am)], [x_left(w, am), x_right(w, am)]])


def target_boundary_remainder(a, m, al) -> Mat:
    am = a * m
    return Mat.proj_cols(x_left(weight_phi(0, al, ext=True), INF), am)


def target_products_diag(a, m, al) -> Mat:
    am = a * m
    pi_pi = ClassSum(
        (weight_b(NEG_INF, al, ext=True, xl=-am), oc.bphi_class(-m, ext=True))
    )
    return Mat.diag(pi_pi, x_right(weight_phi(-m, al, ext=True), am))


def target_products_offdiag(a, m, al) -> Mat:
    am = a * m
    return Mat.offdiag(
        weight_phi(-m, al, ext=True, xl=-am, xr=am), weight_phi(-m, al, ext=True)
    )


def target_lfsolve_classes(a, m, al) -> Mat:
    am = a * m
    q = weight_b(NEG_INF, al, ext=True, vanish=("rf",))
    return Mat([[q, q], [x_right(q, am), x_right(q, am)]])


def target_lfsolve_times_tail(a, m, al) -> Mat:
    am = a * m
    return Mat.proj_cols(weight_phi(NEG_INF, al, ext=True), am)


def target_final_right_remainder(a, m, al) -> Mat:
    am = a * m
    return Mat.proj_cols(x_left(weight_phi(NEG_INF, al, ext=True), INF), am)


def target_final_left_remainder(a, m, al) -> Mat:
    # (x^{-am} Pi + Piperp) S x^inf = (Pi + x^{am} Piperp) x^{-am} S x^inf
    am = a * m
    base = x_left(x_right(weight_phi(NEG_INF, al, ext=True), INF), -am)
    return Mat.proj_rows(base, am)


def target_parametrix_statement(a, m, al) -> Mat:
    """The containing class matrix asserted for the completed parametrix."""
    am = a * m
    pi_pi = ClassSum(
        (weight_b(-m, al, xl=-am), oc.bphi_class(-m, ext=True))
    )
    pp = ClassSum(
        (small_phi(-m, ext=True), x_right(weight_phi(-m, al, ext=True), am))
    )
    return Mat(
        [
            [pi_pi, weight_phi(-m, al, ext=True, xl=-am, xr=am)],
            [weight_phi(-m, al, ext=True), pp],
        ]
    )


# ---------------------------------------------------------------------------
# axiomatic primitives (registered for chain replay)


def _prim(rule, params, output, trace):
    if trace is not None:
        trace.append(RuleApp(rule, (), params, output.to_json()))
    return output


def _prim_b_parametrix_Q(inputs, params, geom):
    return weight_b(-params["m"], params["alpha"])


def _prim_b_parametrix_R(inputs, params, geom):
    return x_left(weight_b(0, params["alpha"]), INF)


def _prim_normal_inverse_Q(inputs, params, geom):
    return small_phi(-params["m"], ext=True)


def _prim_normal_inverse_R(inputs, params, geom):
    return x_left(small_phi(0, ext=True), INF)


def _prim_interior_Q(inputs, params, geom):
    return small_phi(-params["m"])


def _prim_interior_R(inputs, params, geom):
    return small_phi(NEG_INF)


def _prim_lf_solve_Q(inputs, params, geom):
    q = weight_b(NEG_INF, params["alpha"], ext=True, vanish=("rf",))
    return x_right(q, params["am"]) if params["row"] == 1 else q


def _prim_lf_solve_R(inputs, params, geom):
    base = weight_b(NEG_INF, params["alpha"], ext=True, vanish=("lf",))
    return (
        x_right(base, params["am"]) if params["col"] == 1 else x_left(base, params["am"])
    )


def _prim_neumann_limit(inputs, params, geom):
    base = x_left(weight_phi(0, params["alpha"], ext=True), INF)
    return x_right(base, params["am"]) if params["col"] == 1 else base


CHAIN_PRIMITIVES.update(
    {
        "b-parametrix-Q": _prim_b_parametrix_Q,
        "b-parametrix-R": _prim_b_parametrix_R,
        "normal-inverse-Q": _prim_normal_inverse_Q,
        "normal-inverse-R": _prim_normal_inverse_R,
        "interior-parametrix-Q": _prim_interior_Q,
        "interior-parametrix-R": _prim_interior_R,
        "lf-solve-Q": _prim_lf_solve_Q,
        "lf-solve-R": _prim_lf_solve_R,
        "neumann-limit": _prim_neumann_limit,
    }
)


# ---------------------------------------------------------------------------
# weight gate


def check_weight(op: SplitOperator, alpha: float, tol: float = 1e-9) -> bool:
    """Admissibility of alpha: alpha - am stays clear of the critical set."""
    if not op.imspec_p00:
        raise WeightConditionError(
            "no critical-weight data supplied: the weight condition is unverifiable"
        )
    target = alpha - op.am
    return min(abs(target - s) for s in op.imspec_p00) > tol


# ---------------------------------------------------------------------------
# the five steps


def step1_diagonal(op: SplitOperator, alpha: float) -> StepResult:
    """Diagonal parametrix and remainder classes."""
    if not check_weight(op, alpha):
        raise WeightConditionError(
            f"weight {alpha} - am = {alpha - op.am} hits the critical set "
            f"{sorted(op.imspec_p00)}"
        )
    if not op.normal_invertible:
        raise ParametrixError(
            "the perpendicular block needs an invertible normal family"
        )
    if not op.p00_elliptic:
        raise ParametrixError("the harmonic block must be b-elliptic")
    a, m, am = op.a, op.m, op.am
    chain_q: list = []
    chain_r: list = []
    q00 = _prim("b-parametrix-Q", {"m": m, "alpha": alpha}, weight_b(-m, alpha), chain_q)
    r00 = _prim(
        "b-parametrix-R", {"m": m, "alpha": alpha}, x_left(weight_b(0, alpha), INF), chain_r
    )
    q11 = _prim(
        "normal-inverse-Q", {"m": m}, small_phi(-m, ext=True), chain_q
    )
    r11 = _prim(
        "normal-inverse-R", {"m": m}, x_left(small_phi(0, ext=True), INF), chain_r
    )
    Qd = Mat.diag(x_left(q00, -am), q11)
    Rd = Mat.diag(r00, r11)
    assertions = [
        _assert_mat("diag-parametrix", Qd, target_diag_parametrix(a, m, alpha), op.geom, chain_q),
        _assert_mat("diag-remainder", Rd, target_diag_remainder(a, m, alpha), op.geom, chain_r),
    ]
    return StepResult("step1-diagonal", assertions, {"Qd": Qd, "Rd": Rd})


def _po_matrix(op: SplitOperator) -> Mat:
    am = op.am
    off01 = ZERO if op.p01.is_zero else x_left(op.p01, am)
    off10 = ZERO if op.p10.is_zero else x_left(op.p10, am)
    return Mat.offdiag(off01, off10)


def step2_offdiagonal(op: SplitOperator, alpha: float, step1: StepResult) -> StepResult:
    """Off-diagonal correction and the improved remainder's class pieces."""
    a, m, am = op.a, op.m, op.am
    geom = op.geom
    Qd, Rd = step1.data["Qd"], step1.data["Rd"]
    Po = _po_matrix(op)

    if op.diagonal_only:
        zero = Mat.diag(ZERO, ZERO)
        assertions = [
            Assertion("offdiag-vanishes", zero, zero, True, True),
            _assert_mat("remainder-after-offdiag", Rd, target_diag_remainder(a, m, alpha), geom),
        ]
        return StepResult(
            "step2-offdiagonal",
            assertions,
            {"PoQd": zero, "Qo": zero, "Ro": zero, "PoQd_sq": zero, "R2": Rd, "Q2": Qd},
        )

    ch_poqd: list = []
    ch_qo: list = []
    ch_ro: list = []
    ch_sq: list = []
    PoQd = Po.matmul(Qd, geom, trace=ch_poqd)
    Qo = Qd.matmul(PoQd, geom, trace=ch_qo)
    Ro = Rd.matmul(PoQd, geom, trace=ch_ro)
    PoQd_sq = PoQd.matmul(PoQd, geom, trace=ch_sq)
    R2 = Rd.add(Ro).add(PoQd_sq)
    Q2 = Qd.add(Qo)

    sq = PoQd_sq.canonical(geom)
    overall_factor_kept = not eq_classes(
        sq[0, 0], x_right(weight_phi(0, alpha, ext=True), am)
    ) and not eq_classes(sq[1, 1], x_left(weight_phi(0, alpha, ext=True), am))

    assertions = [
        _assert_mat("offdiag-times-diag-parametrix", PoQd, target_po_qd(a, m, alpha), geom, ch_poqd),
        _assert_mat("offdiag-correction", Qo, target_offdiag_correction(a, m, alpha), geom, ch_qo),
        _assert_mat("remainder-cross-terms", Ro, target_remainder_cross(a, m, alpha), geom, ch_ro),
        _assert_mat("squared-offdiag-terms", PoQd_sq, target_squared_offdiag(a, m, alpha), geom, ch_sq),
        Assertion(
            "overall-power-not-commuted",
            sq,
            target_squared_offdiag(a, m, alpha),
            overall_factor_kept,
            overall_factor_kept,
        ),
    ]
    return StepResult(
        "step2-offdiagonal",
        assertions,
        {"PoQd": PoQd, "Qo": Qo, "Ro": Ro, "PoQd_sq": PoQd_sq, "R2": R2, "Q2": Q2},
    )


def _away_from_lf(entry):
    if isinstance(entry, ClassSum):
        return ClassSum(tuple(_away_from_lf(t) for t in entry.terms))
    if entry.is_zero:
        return entry
    return oc.replace(entry, vanish=entry.vanish | {"lf"})


def _hypothesis_rows(R2: Mat, alpha, am, geom):
    """Check the left-face solving hypothesis row by row.

    Harmonic row: index sets > alpha + am at lf, >= am at bf.
    Perpendicular row: > alpha at lf, >= am at bf.
    Returns the list of failing entries.
    """
    failures = []
    for i, (lf_t, bf_t) in enumerate([(alpha + am, am), (alpha, am)]):
        for j in (0, 1):
            entry = R2[i, j]
            for term in oc.as_terms(entry):
                f = oc.fold(term)
                lf_ok = oc._face_implies(f.face("lf"), oc.Bound(lf_t, True))
                bf_ok = oc._face_implies(f.face("bf"), oc.Bound(bf_t, False))
                if not (lf_ok and bf_ok):
                    failures.append((i, j, term))
    return failures


def step3_lf_correction(op: SplitOperator, alpha: float, step2: StepResult) -> StepResult:
    """Left-face correction by formal solutions; remainder lands in the
    lf-vanishing remainder space."""
    a, m, am = op.a, op.m, op.am
    geom = op.geom
    R2 = step2.data["R2"]

    failures = _hypothesis_rows(R2, alpha, am, geom)
    if failures:
        locs = ", ".join(f"entry ({i},{j}): {t!r}" for i, j, t in failures)
        raise HypothesisError(f"left-face solving hypothesis fails at {locs}")

    chain_q: list = []
    chain_r: list = []
    qrow0 = _prim(
        "lf-solve-Q",
        {"alpha": alpha, "am": am, "row": 0},
        weight_b(NEG_INF, alpha, ext=True, vanish=("rf",)),
        chain_q,
    )
    qrow1 = _prim(
        "lf-solve-Q",
        {"alpha": alpha, "am": am, "row": 1},
        x_right(weight_b(NEG_INF, alpha, ext=True, vanish=("rf",)), am),
        chain_q,
    )
    Qprime = Mat([[qrow0, qrow0], [qrow1, qrow1]])
    rcol0 = _prim(
        "lf-solve-R",
        {"alpha": alpha, "am": am, "col": 0},
        x_left(weight_b(NEG_INF, alpha, ext=True, vanish=("lf",)), am),
        chain_r,
    )
    rcol1 = _prim(
        "lf-solve-R",
        {"alpha": alpha, "am": am, "col": 1},
        x_right(weight_b(NEG_INF, alpha, ext=True, vanish=("lf",)), am),
        chain_r,
    )
    Rpp = Mat([[rcol0, rcol1], [rcol0, rcol1]])

    R2_cut = R2.map(_away_from_lf)
    R3 = R2_cut.add(Rpp)
    psi_R = target_r3_space(a, m, alpha)

    bf_ff_ok = True
    for i in (0, 1):
        for j in (0, 1):
            for term in oc.as_terms(R3[i, j]):
                f = oc.fold(term)
                if not oc._face_implies(f.face("bf"), oc.Bound(am, False)):
                    bf_ff_ok = False
                if "ff" in f.face_names and not oc._face_implies(
                    f.face("ff"), oc.Bound(am, True)
                ):
                    bf_ff_ok = False

    assertions = [
        _assert_mat("lfsolve-correction", Qprime, target_lfsolve_classes(a, m, alpha), geom, chain_q),
        _assert_mat("lf-corrected-remainder", R3, psi_R, geom, chain_r),
        Assertion("remainder-bf-ff-orders", R3, psi_R, bf_ff_ok, bf_ff_ok),
    ]
    return StepResult(
        "step3-lf-correction",
        assertions,
        {"Qprime": Qprime, "Rpp": Rpp, "R3": R3, "PsiR": psi_R},
    )


def step4_neumann(op: SplitOperator, alpha: float, step1, step2, step3) -> StepResult:
    """Asymptotic Neumann summation and the boundary parametrix products."""
    a, m, am = op.a, op.m, op.am
    geom = op.geom
    psi_R = step3.data["PsiR"]
    Qd, Qo, Qprime = step1.data["Qd"], step2.data["Qo"], step3.data["Qprime"]

    chain: list = []
    # squaring gains an overall x^(am); higher even powers gain (N-1) copies
    R_sq = psi_R.matmul(psi_R, geom, trace=chain)
    tgt_sq = target_r3_squared(a, m, alpha)
    powers = [psi_R, R_sq]
    growth_ok = True
    for N in (2, 3):
        nxt = powers[-1].matmul(R_sq, geom, trace=None)
        powers.append(nxt)
        target = target_r3_space(a, m, alpha).x_left_all((N - 1) * am)
        if not nxt.contained_in(target, geom):
            growth_ok = False
    if not growth_ok:
        raise EngineError(
            "remainder powers fail the expected x^((N-1)am) gain: "
            "a combination rule is wrong"
        )

    def rf_faces(mat: Mat):
        out = []
        for i in (0, 1):
            for j in (0, 1):
                faces = set()
                for t in oc.as_terms(mat[i, j]):
                    f = oc.fold(t)
                    faces.add(repr(f.face("rf")))
                out.append((i, j, tuple(sorted(faces))))
        return out

    rf_stable = rf_faces(powers[1]) == rf_faces(powers[2]) == rf_faces(powers[3])

    # the asymptotic sum of the tail stays in the remainder space
    tail = psi_R
    tail_d = Mat.diag(tail[0, 0], tail[1, 1])
    tail_o = Mat.offdiag(tail[0, 1], tail[1, 0])

    # the harmonic-block products pass through the mixed rule; the
    # perpendicular-block products compose directly
    chain_d: list = []
    dd00 = compose(Qd[0, 0], tail_d[0, 0], geom, route="split", trace=chain_d)
    dd11 = compose(Qd[1, 1], tail_d[1, 1], geom, trace=chain_d)
    oo00 = compose(Qo[0, 1], tail_o[1, 0], geom, route="split", trace=chain_d)
    oo11 = compose(Qo[1, 0], tail_o[0, 1], geom, trace=chain_d)
    diag_products = Mat.diag(sum_of(dd00, oo00), sum_of(dd11, oo11))

    chain_o: list = []
    prod_do = Qd.matmul(tail_o, geom, trace=chain_o)
    prod_od = Qo.matmul(tail_d, geom, trace=chain_o)
    offdiag_products = prod_do.add(prod_od)

    chain_q: list = []
    qprime_tail = Qprime.matmul(tail, geom, trace=chain_q)

    chain_lim: list = []
    b0 = _prim(
        "neumann-limit",
        {"alpha": alpha, "am": am, "col": 0},
        x_left(weight_phi(0, alpha, ext=True), INF),
        chain_lim,
    )
    b1 = _prim(
        "neumann-limit",
        {"alpha": alpha, "am": am, "col": 1},
        x_right(x_left(weight_phi(0, alpha, ext=True), INF), am),
        chain_lim,
    )
    R_boundary = Mat([[b0, b1], [b0, b1]])

    assertions = [
        _assert_mat("remainder-squared", R_sq, tgt_sq, geom, chain),
        Assertion("power-gain", powers[3], target_r3_space(a, m, alpha).x_left_all(2 * am), growth_ok, False),
        Assertion("rf-sets-stabilize", rf_faces(powers[1]), rf_faces(powers[3]), rf_stable, rf_stable),
        _assert_mat("neumann-tail-products-diag", diag_products, target_products_diag(a, m, alpha), geom, chain_d),
        _assert_mat("neumann-tail-products-offdiag", offdiag_products, target_products_offdiag(a, m, alpha), geom, chain_o),
        _assert_mat("lfsolve-times-tail", qprime_tail, target_lfsolve_times_tail(a, m, alpha), geom, chain_q),
        _assert_mat("boundary-remainder", R_boundary, target_boundary_remainder(a, m, alpha), geom, chain_lim),
    ]
    data = {
        "diag_products": diag_products,
        "offdiag_products": offdiag_products,
        "qprime_tail": qprime_tail,
        "R_boundary": R_boundary,
    }
    return StepResult("step4-neumann", assertions, data)


def step5_interior(op: SplitOperator, alpha: float, step1, step2, step3, step4) -> StepResult:
    """Combine with the interior symbolic parametrix; collect the final
    right parametrix and remainder classes."""
    if not op.phi_elliptic:
        raise ParametrixError("interior step needs the phi-ellipticity flag")
    a, m, am = op.a, op.m, op.am
    geom = op.geom
    R_boundary = step4.data["R_boundary"]

    chain: list = []
    q_sigma = _prim("interior-parametrix-Q", {"m": m}, small_phi(-m), chain)
    r_sigma = _prim("interior-parametrix-R", {"m": m}, small_phi(NEG_INF), chain)
    Qsig = Mat([[q_sigma, q_sigma], [q_sigma, q_sigma]])
    Rsig = Mat([[r_sigma, r_sigma], [r_sigma, r_sigma]])

    QsR = Qsig.matmul(R_boundary, geom, trace=chain)
    Rr = Rsig.matmul(R_boundary, geom, trace=chain)
    tgt_qsr = target_boundary_remainder(a, m, alpha).map(
        lambda e: e if getattr(e, "is_zero", False) else e.shifted_order(-m)
    )

    # assemble the full right parametrix class and split the harmonic-block
    # interior-smoothing piece into b-part plus bphi-part before the check
    qprime_tail = step4.data["qprime_tail"]
    b_part, bphi_part = decompose_near_ff(qprime_tail[0, 0])
    qprime_fixed = Mat(
        [
            [sum_of(b_part, bphi_part), qprime_tail[0, 1]],
            [qprime_tail[1, 0], qprime_tail[1, 1]],
        ]
    )
    Qr = (
        step1.data["Qd"]
        .add(step2.data["Qo"])
        .add(step3.data["Qprime"])
        .add(step4.data["diag_products"])
        .add(step4.data["offdiag_products"])
        .add(qprime_fixed)
        .add(QsR)
    )

    assertions = [
        _assert_mat(
            "interior-smoothing-product",
            QsR,
            tgt_qsr,
            geom,
            chain,
        ),
        _assert_mat("final-right-remainder", Rr, target_final_right_remainder(a, m, alpha), geom),
        _assert_mat("right-parametrix-class", Qr, target_parametrix_statement(a, m, alpha), geom),
    ]
    return StepResult("step5-interior", assertions, {"Qr": Qr, "Rr": Rr})


# ---------------------------------------------------------------------------
# drivers


def right_parametrix(op: SplitOperator, alpha: float):
    """Run steps 1-5; returns (steps, Qr, Rr)."""
    s1 = step1_diagonal(op, alpha)
    s2 = step2_offdiagonal(op, alpha, s1)
    s3 = step3_lf_correction(op, alpha, s2)
    s4 = step4_neumann(op, alpha, s1, s2, s3)
    s5 = step5_interior(op, alpha, s1, s2, s3, s4)
    return [s1, s2, s3, s4, s5], s5.data["Qr"], s5.data["Rr"]


def left_parametrix(op: SplitOperator, alpha: float):
    """Left parametrix via the adjoint: run the right construction for the
    adjoint data at weight am - alpha, then take adjoints entrywise."""
    adj = op.adjoint()
    adj_alpha = op.am - alpha
    if not check_weight(adj, adj_alpha):
        raise WeightConditionError(
            f"adjoint weight {adj_alpha} - am hits the reflected critical set"
        )
    steps, Qr_adj, Rr_adj = right_parametrix(adj, adj_alpha)
    Ql = Qr_adj.adjoint()
    Rl = Rr_adj.adjoint()
    geom = op.geom
    assertions = [
        _assert_mat("final-left-remainder", Rl, target_final_left_remainder(op.a, op.m, alpha), geom),
        Assertion(
            "left-parametrix-same-type",
            Ql.canonical(geom),
            target_parametrix_statement(op.a, op.m, alpha),
            Ql.canonical(geom).contained_in(target_parametrix_statement(op.a, op.m, alpha), geom),
            target_parametrix_statement(op.a, op.m, adj_alpha).adjoint().canonical(geom).equals(
                target_parametrix_statement(op.a, op.m, alpha).canonical(geom)
            ),
        ),
    ]
    result = StepResult("left-parametrix", assertions, {"Ql": Ql, "Rl": Rl})
    return steps, result


def parametrix_report(op: SplitOperator, alpha: float) -> dict:
    """Full right+left construction with per-assertion verdicts (JSON-able)."""
    report = {
        "operator": op.to_json(),
        "alpha": alpha,
        "weight_condition": None,
        "steps": [],
        "verdict": "FAIL",
    }
    try:
        admissible = check_weight(op, alpha)
    except WeightConditionError as exc:
        report["weight_condition"] = {"admissible": False, "error": str(exc)}
        return report
    report["weight_condition"] = {
        "admissible": admissible,
        "alpha_minus_am": alpha - op.am,
        "critical_set": sorted(op.imspec_p00),
    }
    if not admissible:
        return report
    steps, _, _ = right_parametrix(op, alpha)
    _, left = left_parametrix(op, alpha)
    all_steps = steps + [left]
    report["steps"] = [s.to_json() for s in all_steps]
    report["verdict"] = "PASS" if all(s.passed for s in all_steps) else "FAIL"
    return report


# ---------------------------------------------------------------------------
# Fredholm gates and kernel regularity


def fredholm_report(op: SplitOperator, alpha: float, tol: float = 1e-9) -> dict:
    """The two Fredholm maps and their distinct weight gates.

    The split-Sobolev-to-L2 map needs alpha - am clear of the critical set;
    the dual L2-to-negative-order map needs alpha itself clear.
    """
    if not op.imspec_p00:
        raise WeightConditionError("no critical-weight data supplied")
    spec = sorted(op.imspec_p00)
    d_primal = min(abs((alpha - op.am) - s) for s in spec)
    d_dual = min(abs(alpha - s) for s in spec)
    dom_p = oc.SobolevSpaceSpec(alpha, op.m, "split")
    cod_p = oc.SobolevSpaceSpec(alpha, 0, "split")
    dom_d = oc.SobolevSpaceSpec(alpha, 0, "split")
    cod_d = oc.SobolevSpaceSpec(alpha, -op.m, "split")
    return {
        "alpha": alpha,
        "am": op.am,
        "critical_set": spec,
        "primal": {
            "map": f"{dom_p.describe()} -> {cod_p.describe()}",
            "gate": alpha - op.am,
            "distance": d_primal,
            "fredholm": d_primal > tol,
        },
        "dual": {
            "map": f"{dom_d.describe()} -> {cod_d.describe()}",
            "gate": alpha,
            "distance": d_dual,
            "fredholm": d_dual > tol,
        },
    }


def regularity_predict(
    op: SplitOperator,
    alpha: float,
    spec_b: Optional[list] = None,
    statement: str = "L2",
):
    """Index sets of the two parts of a kernel element.

    ``spec_b`` lists (weight, log_power) pairs; when omitted, the plain
    critical weights are used with log power 0 and a warning is attached.
    For a kernel element of the weighted L2 space the harmonic part carries
    the set K > alpha and the perpendicular part x^(am) K; for the split
    Sobolev space the prefactors move to the harmonic side.
    """
    import warnings as _warnings

    if spec_b is None:
        if not op.imspec_p00:
            raise WeightConditionError("no spectral data supplied")
        spec_b = [(s, 0) for s in op.imspec_p00]
        _warnings.warn(
            "no pole-order data supplied: predicting exponents with log power 0",
            stacklevel=2,
        )
    gens = [((float(s), 0.0), int(k)) for s, k in spec_b if float(s) > alpha]
    K = make_index_set(gens)
    if statement == "L2":
        return K, shift(K, op.am)
    if statement == "Hsplit":
        return shift(K, -op.am), K
    raise ValueError("statement must be 'L2' or 'Hsplit'")
