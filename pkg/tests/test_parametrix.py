"""Split-parametrix engine: step-by-step class verification and gates."""

import pytest

from phicalc.opclasses import (
    ClassSum,
    NEG_INF,
    bphi_class,
    eq_classes,
    replay_chain,
    small_phi,
    weight_b,
    weight_phi,
    x_left,
    x_right,
)
from phicalc.parametrix import (
    HypothesisError,
    Mat,
    ParametrixError,
    SplitOperator,
    StepResult,
    WeightConditionError,
    check_weight,
    fredholm_report,
    gauss_bonnet_split,
    hodge_split,
    left_parametrix,
    parametrix_report,
    regularity_predict,
    right_parametrix,
    step1_diagonal,
    step2_offdiagonal,
    step3_lf_correction,
)
from phicalc.indexsets import make_index_set, shift

INF = float("inf")
SPEC = [-2, -1, 0, 1, 2]


def op_gb(a=1):
    return gauss_bonnet_split(a=a, b_dim=1, imspec=SPEC)


# ---------------------------------------------------------------------------
# weight gate


def test_check_weight_membership():
    op = op_gb()
    assert not check_weight(op, 0)  # 0 - 1 = -1 lies in the critical set
    assert check_weight(op, 0.5)


def test_check_weight_with_model_scale():
    op = hodge_split(a=1, b_dim=1, imspec=SPEC)  # am = 2
    assert check_weight(op, 0.5)
    assert not check_weight(op, 1.0)


def test_check_weight_requires_data():
    op = gauss_bonnet_split(imspec=[])
    with pytest.raises(WeightConditionError):
        check_weight(op, 0.5)


def test_step1_gate_on_spectrum():
    with pytest.raises(WeightConditionError):
        step1_diagonal(op_gb(), 0.0)


def test_step1_requires_normal_invertibility():
    op = op_gb()
    op.normal_invertible = False
    with pytest.raises(ParametrixError):
        step1_diagonal(op, 0.5)


# ---------------------------------------------------------------------------
# step-by-step class checks against independently transcribed targets


def transcribed_step1(a, m, al):
    am = a * m
    Qd = Mat.diag(x_left(weight_b(-m, al), -am), small_phi(-m, ext=True))
    Rd = Mat.diag(
        x_left(weight_phi(0, al, ext=True), INF),
        x_left(small_phi(0, ext=True), INF),
    )
    return Qd, Rd


@pytest.mark.parametrize("a,m,al", [(1, 1, 0.5), (2, 2, 1.3), (1, 2, -0.5), (2, 2, 1.0)])
def test_step1_classes(a, m, al):
    op = (gauss_bonnet_split if m == 1 else hodge_split)(a=a, b_dim=1, imspec=SPEC)
    s1 = step1_diagonal(op, al)
    Qd_t, Rd_t = transcribed_step1(a, m, al)
    assert s1.data["Qd"].canonical(op.geom).equals(Qd_t)
    assert s1.data["Rd"].canonical(op.geom).equals(Rd_t)
    assert s1.passed


@pytest.mark.parametrize("a,m,al", [(1, 1, 0.0), (1, 1, 0.5), (2, 1, 0.5)])
def test_step2_classes(a, m, al):
    if al == 0.0:
        # inadmissible for the integer critical set
        with pytest.raises(WeightConditionError):
            step1_diagonal(op_gb(a), al)
        return
    op = op_gb(a)
    am = a * m
    s1 = step1_diagonal(op, al)
    s2 = step2_offdiagonal(op, al, s1)
    g = op.geom
    w0 = weight_phi(0, al, ext=True)
    PoQd_t = Mat.offdiag(x_right(small_phi(0, ext=True), am), w0)
    Qo_t = Mat.offdiag(
        weight_phi(-m, al, ext=True, xl=-am, xr=am), weight_phi(-m, al, ext=True)
    )
    Ro_t = Mat.offdiag(x_right(x_left(w0, INF), am), x_left(w0, INF))
    sq_t = Mat.diag(x_left(w0, am), x_right(w0, am))
    assert s2.data["PoQd"].canonical(g).equals(PoQd_t)
    assert s2.data["Qo"].canonical(g).equals(Qo_t)
    assert s2.data["Ro"].canonical(g).equals(Ro_t)
    assert s2.data["PoQd_sq"].canonical(g).equals(sq_t)
    # the overall x^(am) gain must stay on the displayed side
    wrong00 = x_right(w0, am)
    assert not eq_classes(s2.data["PoQd_sq"].canonical(g)[0, 0], wrong00)
    assert s2.passed


def test_step2_diagonal_shortcircuit():
    op = op_gb()
    op.p01 = op.p10 = __import__("phicalc.opclasses", fromlist=["ZERO"]).ZERO
    s1 = step1_diagonal(op, 0.5)
    s2 = step2_offdiagonal(op, 0.5, s1)
    assert s2.data["R2"].equals(s1.data["Rd"])
    assert s2.passed


def test_step3_outputs_and_space():
    op = op_gb()
    a, m, al = 1, 1, 0.5
    am = a * m
    s1 = step1_diagonal(op, al)
    s2 = step2_offdiagonal(op, al, s1)
    s3 = step3_lf_correction(op, al, s2)
    g = op.geom
    q = weight_b(NEG_INF, al, ext=True, vanish=("rf",))
    Qp_t = Mat([[q, q], [x_right(q, am), x_right(q, am)]])
    assert s3.data["Qprime"].canonical(g).equals(Qp_t)
    wlf = weight_phi(0, al, ext=True, vanish=("lf",))
    PsiR_t = Mat([[x_left(wlf, am), x_right(wlf, am)], [wlf, x_right(wlf, am)]])
    assert s3.data["PsiR"].equals(PsiR_t)
    assert s3.data["R3"].canonical(g).contained_in(PsiR_t, g)
    assert s3.passed


def test_step3_hypothesis_violation_reports_entry():
    op = op_gb()
    al = 0.5
    # remainder whose harmonic row only vanishes past alpha (not alpha + am)
    bad = weight_phi(0, al, ext=True)
    R2 = Mat([[bad, bad], [bad, bad]])
    fake = StepResult("step2-offdiagonal", [], {"R2": R2})
    with pytest.raises(HypothesisError) as err:
        step3_lf_correction(op, al, fake)
    assert "entry (0,0)" in str(err.value)


def test_steps_4_and_5_classes():
    op = op_gb()
    a, m, al = 1, 1, 0.5
    am = a * m
    g = op.geom
    steps, Qr, Rr = right_parametrix(op, al)
    s4, s5 = steps[3], steps[4]
    # boundary remainder: x^inf weight class with perpendicular column x^(am)
    binf = x_left(weight_phi(0, al, ext=True), INF)
    Rb_t = Mat([[binf, x_right(binf, am)], [binf, x_right(binf, am)]])
    assert s4.data["R_boundary"].equals(Rb_t)
    # harmonic-block tail products split into b-part plus bphi-part
    pi_pi = ClassSum((x_left(weight_b(NEG_INF, al, ext=True), -am), bphi_class(-m, ext=True)))
    dp = s4.data["diag_products"].canonical(g)
    assert eq_classes(dp[0, 0], pi_pi)
    assert eq_classes(dp[1, 1], x_right(weight_phi(-m, al, ext=True), am))
    # final remainder: smoothing, x^inf, perpendicular column x^(am)
    rinf = x_left(weight_phi(NEG_INF, al, ext=True), INF)
    Rr_t = Mat([[rinf, x_right(rinf, am)], [rinf, x_right(rinf, am)]])
    assert Rr.canonical(g).equals(Rr_t)
    for i in (0, 1):
        for j in (0, 1):
            for t in __import__("phicalc.opclasses", fromlist=["as_terms"]).as_terms(
                Rr.canonical(g)[i, j]
            ):
                assert float(t.order) == NEG_INF
    assert s4.passed and s5.passed


def test_step5_requires_ellipticity():
    op = op_gb()
    op.phi_elliptic = False
    with pytest.raises(ParametrixError):
        right_parametrix(op, 0.5)


def test_left_remainder_class():
    op = op_gb()
    a, m, al = 1, 1, 0.5
    am = a * m
    g = op.geom
    _, left = left_parametrix(op, al)
    Rl = left.data["Rl"].canonical(g)
    s = x_right(weight_phi(NEG_INF, al, ext=True), INF)
    harmonic_row = x_left(s, -am)
    Rl_t = Mat([[harmonic_row, harmonic_row], [s, s]])
    assert Rl.equals(Rl_t)
    assert left.passed


def test_left_gate_self_adjoint_edge():
    # alpha = am/2 makes the adjoint weight equal to alpha: the same gate
    op = op_gb()
    assert check_weight(op, 0.5) == check_weight(op.adjoint(), op.am - 0.5)


def test_adjoint_route_consistency_of_final_remainders():
    # the adjoint of the right-remainder class at weight am - alpha is the
    # left-remainder class at weight alpha
    from phicalc.parametrix import (
        target_final_left_remainder,
        target_final_right_remainder,
    )

    for a, m, al in [(1, 1, 0.5), (2, 2, 1.3), (1, 2, -0.5)]:
        right_dual = target_final_right_remainder(a, m, a * m - al)
        assert right_dual.adjoint().equals(target_final_left_remainder(a, m, al))


def test_full_construction_with_diagonal_input():
    from phicalc.opclasses import ZERO
    from phicalc.parametrix import parametrix_report

    op = op_gb()
    op.p01 = op.p10 = ZERO
    rep = parametrix_report(op, 0.5)
    assert rep["verdict"] == "PASS"


def test_check_weight_small_spectrum_examples():
    op = gauss_bonnet_split(a=1, b_dim=1, imspec=[-1, 0, 1])
    assert not check_weight(op, 0)  # 0 - 1 = -1 lies in the set
    assert check_weight(op, 0.5)


def test_full_grid_matches_statement_classes():
    for a in (1, 2):
        for mk in (gauss_bonnet_split, hodge_split):
            op = mk(a=a, b_dim=1, imspec=SPEC)
            for al in (-0.5, 0, 0.5, 1.3):
                if not check_weight(op, al):
                    assert al - op.am in SPEC
                    continue
                rep = parametrix_report(op, al)
                assert rep["verdict"] == "PASS", (a, mk.__name__, al)


def test_report_chains_replay():
    op = op_gb()
    rep = parametrix_report(op, 0.5)
    from phicalc.opclasses import RuleApp

    n_records = 0
    for step in rep["steps"]:
        for assertion in step["assertions"]:
            chain = [
                RuleApp(r["rule"], tuple(r["inputs"]), r["params"], r["output"])
                for r in assertion["chain"]
            ]
            n_records += len(chain)
            assert replay_chain(chain, op.geom)
    assert n_records > 20


def test_report_json_round_trips_operator():
    op = op_gb()
    again = SplitOperator.from_json(op.to_json())
    assert again.a == op.a and again.m == op.m
    assert again.p00 == op.p00 and again.p11 == op.p11
    assert again.imspec_p00 == [float(s) for s in SPEC]


# ---------------------------------------------------------------------------
# Fredholm gates and regularity prediction


def test_fredholm_gates_are_distinct():
    op = op_gb()
    rep = fredholm_report(op, 0.5)
    assert rep["primal"]["fredholm"] and rep["dual"]["fredholm"]
    rep2 = fredholm_report(op, 1.0)  # alpha - am = 0 in the set; alpha = 1 too
    assert not rep2["primal"]["fredholm"] and not rep2["dual"]["fredholm"]
    # alpha = 2.5: alpha - am = 1.5 clear, alpha = 2.5 clear
    rep3 = fredholm_report(op, 2.5)
    assert rep3["primal"]["fredholm"] and rep3["dual"]["fredholm"]


def test_regularity_prediction_from_spectrum():
    op = op_gb()
    spec_b = [(-2, 0), (-1, 0), (0, 1), (1, 0), (2, 0)]
    pi_set, perp_set = regularity_predict(op, 0.0, spec_b=spec_b)
    assert pi_set == make_index_set([((1.0, 0.0), 0)])
    assert perp_set == shift(pi_set, op.am)


def test_regularity_prediction_warns_without_pole_data():
    op = op_gb()
    with pytest.warns(UserWarning):
        pi_set, perp_set = regularity_predict(op, 0.0)
    assert pi_set == make_index_set([((1.0, 0.0), 0)])


def test_regularity_prediction_split_statement():
    op = op_gb()
    spec_b = [(0, 1), (1, 0)]
    pi_set, perp_set = regularity_predict(op, 0.0, spec_b=spec_b, statement="Hsplit")
    assert perp_set == make_index_set([((1.0, 0.0), 0)])
    assert pi_set == shift(perp_set, -op.am)
