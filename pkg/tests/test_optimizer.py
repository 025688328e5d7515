"""Impulse policy search, value function and optimality certificates."""
from __future__ import annotations

import pytest

from parisian_impulse import (
    DomainError,
    ImpulsePolicy,
    SolverFailureError,
    check_sufficiency_pair,
    check_transfer_inequality,
    find_optimal_policy,
    generator_residual,
    payout_ratio,
    value_function,
)
from parisian_impulse.optimizer import (
    CSV_COLUMNS,
    brute_force_payout_grid,
    result_csv_row,
    result_record,
)
from parisian_impulse.parisian import parisian_scale

from params import brownian_spec, cramer_lundberg_spec

# Frozen optima (50-digit stationarity solves of the closed form).  The
# compound Poisson beta=1 pair is interior by a ~5e-9 margin in the payout
# ratio; see test_acceptance for the classification consequences.
FROZEN = {
    ("bm", 0.05): ("interior", 0.593910211912, 2.16208917931, 0.158989763938),
    ("bm", 1.0): ("boundary", 0.0, 5.2090698049, 0.216066078454),
    ("cl", 1.0): ("interior", 0.00258506708484, 9.36985528927, 0.132265073333),
    ("cl", 0.02): ("interior", 2.68786194109, 5.06398191237, 0.112360847342),
}


def _spec(kind, beta):
    return brownian_spec(beta) if kind == "bm" else cramer_lundberg_spec(beta)


def test_payout_ratio_matches_definition(bm_scale):
    spec = bm_scale.spec
    g = payout_ratio(bm_scale, 0.5, 2.0)
    manual = (bm_scale.value(2.0) - bm_scale.value(0.5)) / (2.0 - 0.5 - spec.beta)
    assert g == pytest.approx(manual, rel=1e-15)
    assert g > 0.0


def test_payout_ratio_domain(bm_scale):
    with pytest.raises(DomainError):
        payout_ratio(bm_scale, -0.1, 2.0)
    with pytest.raises(DomainError):
        payout_ratio(bm_scale, 1.0, 1.05)  # gap equals beta
    with pytest.raises(DomainError):
        payout_ratio(bm_scale, 1.0, 0.5)


def test_payout_ratio_blows_up_near_gap():
    # g explodes as the net payout shrinks to zero
    for spec in (brownian_spec(1.0), cramer_lundberg_spec(1.0)):
        ps = parisian_scale(spec)
        near = payout_ratio(ps, 0.0, spec.beta + 1e-4)
        far = payout_ratio(ps, 0.0, spec.beta + 1.0)
        assert near > 1e3 * far


def test_policy_validation():
    with pytest.raises(DomainError):
        ImpulsePolicy(-0.2, 3.0).validate(0.05)
    with pytest.raises(DomainError):
        ImpulsePolicy(1.0, 1.04).validate(0.05)
    ImpulsePolicy(0.0, 2.0).validate(0.05)


@pytest.mark.parametrize("kind,beta", list(FROZEN))
def test_optimal_policy_frozen(kind, beta, optimum):
    case, c1, c2, g = FROZEN[(kind, beta)]
    result = optimum(_spec(kind, beta))
    assert result.case == case
    assert result.policy.lower == pytest.approx(c1, rel=1e-8, abs=1e-12)
    assert result.policy.upper == pytest.approx(c2, rel=1e-9)
    assert result.payout_ratio == pytest.approx(g, rel=1e-9)
    assert result.fo_residual < 1e-8
    assert result.sufficiency_pass
    assert result.search_bound > result.derivative_argmin


def test_boundary_case_is_exact_zero(optimum):
    result = optimum(brownian_spec(1.0))
    assert result.policy.lower == 0.0


def test_first_order_conditions_hold(bm_scale, optimum):
    result = optimum(bm_scale.spec)
    c1, c2 = result.policy.lower, result.policy.upper
    g = result.payout_ratio
    assert bm_scale.derivative(c2) == pytest.approx(g, rel=1e-10)
    assert bm_scale.derivative(c1) == pytest.approx(g, rel=1e-10)  # interior case


def test_brute_force_cannot_beat_polished(bm_scale, optimum):
    result = optimum(bm_scale.spec)
    g_brute, c1_b, c2_b = brute_force_payout_grid(bm_scale, 8.0, step=5e-3)
    assert g_brute >= result.payout_ratio - 1e-12
    assert g_brute - result.payout_ratio < 1e-4  # grid is that fine
    assert c1_b == pytest.approx(result.policy.lower, abs=6e-3)
    assert c2_b == pytest.approx(result.policy.upper, abs=6e-3)


def test_search_fails_cleanly_for_unpayable_cost():
    with pytest.raises(SolverFailureError):
        find_optimal_policy(parisian_scale(brownian_spec(1e6)))


def test_value_function_shape(bm_scale, optimum):
    result = optimum(bm_scale.spec)
    pol = result.policy
    up = pol.upper
    v = lambda x: value_function(bm_scale, pol, x)
    # continuous at the trigger, unit slope above it
    assert v(up - 1e-10) == pytest.approx(v(up), rel=1e-9)
    assert v(up + 2.0) - v(up + 1.0) == pytest.approx(1.0, rel=1e-12)
    # at the optimum the scaling factor is exactly 1/V'(c2*)
    for x in (0.0, 0.7, up):
        assert v(x) == pytest.approx(
            bm_scale.value(x) / bm_scale.derivative(up), rel=1e-10
        )
    assert v(0.0) > 0.0


def test_value_function_rejects_bad_policies(bm_scale):
    with pytest.raises(DomainError):
        value_function(bm_scale, ImpulsePolicy(1.0, 1.02), 0.5)


def test_sufficiency_certificate(bm_scale, cl_scale, optimum):
    for ps in (bm_scale, cl_scale):
        result = optimum(ps.spec)
        report = check_sufficiency_pair(ps, result.policy.upper)
        assert report.passed
        assert report.worst_slack >= -1e-9
        # a trigger below the derivative minimum cannot satisfy the condition
        half = check_sufficiency_pair(ps, 0.5 * report.derivative_argmin)
        assert not half.passed


def test_sufficiency_argmin_frozen(bm_scale):
    report = check_sufficiency_pair(bm_scale, 2.0)
    assert report.derivative_argmin == pytest.approx(1.222869037, rel=1e-8)


def test_transfer_inequality_at_optimum(bm_scale, cl_scale, optimum):
    for ps in (bm_scale, cl_scale):
        report = check_transfer_inequality(ps, optimum(ps.spec).policy)
        assert report.passed
        assert report.worst_margin >= -1e-9


def test_transfer_inequality_detects_bad_policy(bm_scale):
    # a wildly censored trigger scales V down so far that an immediate
    # transfer beats the policy, and the checker must notice
    report = check_transfer_inequality(bm_scale, ImpulsePolicy(0.0, 20.0))
    assert not report.passed
    assert report.worst_margin < -1e-6


def test_generator_residual(bm_scale, cl_scale, optimum):
    for ps in (bm_scale, cl_scale):
        result = optimum(ps.spec)
        pol = result.policy
        up = pol.upper
        for x in (0.35 * up, 0.6 * up, 0.9 * up):
            res = generator_residual(ps, pol, x)
            v = value_function(ps, pol, x)
            assert abs(res) <= 1e-4 * (1.0 + v), f"{ps.spec.model} x={x}"
        # above the trigger paying out dominates: residual strictly negative
        for x in (1.2 * up, 1.8 * up):
            assert generator_residual(ps, pol, x) < 0.0


def test_csv_row_and_record(cl_scale, optimum):
    result = optimum(cl_scale.spec)
    row = result_csv_row(cl_scale, result)
    assert len(row) == len(CSV_COLUMNS)
    by_name = dict(zip(CSV_COLUMNS, row))
    assert by_name["model"] == "cramer-lundberg"
    assert by_name["mu"] == ""  # foreign model columns stay empty
    assert float(by_name["c2_star"]) == result.policy.upper
    record = result_record(cl_scale, result)
    assert "case: interior" in record
    assert "c1_star:" in record and "sufficiency_pass: true" in record
