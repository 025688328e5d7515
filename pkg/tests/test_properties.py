"""Property-based invariants over randomized models, specs and paths."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from parisian_impulse import (
    BrownianMotion,
    CramerLundberg,
    DomainError,
    ImpulsePolicy,
    ProblemSpec,
    compute_coefficients,
    laplace_exponent,
    parisian_clock,
    payout_ratio,
    right_inverse,
)
from parisian_impulse.config import build_problem_spec, parse_config_text
from parisian_impulse.formatting import sig17
from parisian_impulse.parisian import parisian_scale
from parisian_impulse.scale import ScaleFunction, refracted_scale

from params import brownian_spec, cramer_lundberg_spec

finite = dict(allow_nan=False, allow_infinity=False)

brownian_models = st.builds(
    BrownianMotion,
    mu=st.floats(-1.5, 2.5),
    sigma=st.floats(0.3, 2.0),
)
cl_models = st.builds(
    CramerLundberg,
    p=st.floats(0.5, 5.0),
    lam=st.floats(0.1, 4.0),
    mu_claim=st.floats(0.3, 3.0),
)
models = st.one_of(brownian_models, cl_models)


@st.composite
def specs(draw):
    model = draw(models)
    if isinstance(model, BrownianMotion):
        delta = draw(st.floats(0.01, 1.0))
    else:
        delta = model.p * draw(st.floats(0.05, 0.9))
    return ProblemSpec(
        model=model,
        delta=delta,
        q=draw(st.floats(0.01, 0.5)),
        r=draw(st.floats(0.2, 4.0)),
        beta=draw(st.floats(0.01, 2.0)),
    )


@given(model=models, a=st.floats(0.0, 5.0), b=st.floats(0.0, 5.0),
       lam=st.floats(0.0, 1.0))
def test_laplace_exponent_convex(model, a, b, lam):
    mid = lam * a + (1.0 - lam) * b
    lhs = laplace_exponent(model, mid)
    rhs = lam * laplace_exponent(model, a) + (1.0 - lam) * laplace_exponent(model, b)
    assert lhs <= rhs + 1e-9 * (1.0 + abs(rhs))


@given(model=models, q1=st.floats(1e-3, 1.0), q2=st.floats(1e-3, 1.0))
def test_right_inverse_solves_and_is_monotone(model, q1, q2):
    for q in (q1, q2):
        phi = right_inverse(model, q)
        assert phi > 0.0
        assert laplace_exponent(model, phi) == pytest.approx(q, rel=1e-9, abs=1e-12)
    lo, hi = sorted((q1, q2))
    assert right_inverse(model, lo) <= right_inverse(model, hi) + 1e-12


@given(spec=specs())
def test_coefficient_invariants(spec):
    cs = compute_coefficients(spec)
    for coeffs in (cs.surplus, cs.refracted):
        assert coeffs.rate_plus > 0.0 > coeffs.rate_minus
        assert coeffs.weight_plus > 0.0
        assert coeffs.weight_minus > 0.0
    if isinstance(spec.model, CramerLundberg):
        assert cs.surplus.mass_at_zero == pytest.approx(1.0 / spec.model.p, rel=1e-12)
        assert cs.surplus.rate_minus > -spec.model.mu_claim
    else:
        assert cs.surplus.mass_at_zero == 0.0
    # removing drift pushes the dominant growth rate up
    assert cs.refracted.rate_plus > cs.surplus.rate_plus


@given(spec=specs(), z=st.floats(0.0, 6.0))
def test_refracted_scale_joins_surplus_scale_at_zero(spec, z):
    # at x = 0 the convolution term vanishes and w(0; -z) collapses to W(z)
    cs = compute_coefficients(spec)
    surplus = ScaleFunction.for_surplus(spec)
    # abs floor: the two-regime formula cancels exactly at z = 0, and the
    # leftover float noise grows with the exponential rates (steep specs
    # with sigma near 0.3 reach ~1e-12)
    assert refracted_scale(cs, 0.0, z) == pytest.approx(
        surplus.value(z), rel=1e-9, abs=1e-10
    )


@given(lower=st.floats(0.0, 5.0), extra=st.floats(1e-3, 6.0),
       kind=st.sampled_from(["bm", "cl"]))
def test_payout_ratio_positive_and_value_increasing(lower, extra, kind):
    spec = brownian_spec() if kind == "bm" else cramer_lundberg_spec()
    ps = parisian_scale(spec)
    upper = lower + spec.beta + extra
    assert payout_ratio(ps, lower, upper) > 0.0
    assert ps.value(upper) > ps.value(lower)


@given(x1=st.floats(-5.5, 10.0), x2=st.floats(-5.5, 10.0),
       kind=st.sampled_from(["bm", "cl"]))
def test_value_nondecreasing(x1, x2, kind):
    spec = brownian_spec() if kind == "bm" else cramer_lundberg_spec()
    ps = parisian_scale(spec)
    lo, hi = sorted((x1, x2))
    assert ps.value(lo) <= ps.value(hi) * (1.0 + 1e-12) + 1e-15


@given(v=st.floats(**finite))
def test_sig17_round_trips(v):
    assert float(sig17(v)) == v


@given(mu=st.floats(-3.0, 3.0), sigma=st.floats(0.1, 3.0),
       delta=st.floats(1e-3, 2.0), q=st.floats(1e-3, 1.0),
       r=st.floats(0.05, 5.0), beta=st.floats(1e-3, 3.0))
def test_config_text_round_trips(mu, sigma, delta, q, r, beta):
    text = "\n".join(
        [
            "model = brownian",
            f"mu = {mu!r}",
            f"sigma = {sigma!r}",
            f"delta = {delta!r}",
            f"q = {q!r}",
            f"r = {r!r}",
            f"beta = {beta!r}",
        ]
    )
    spec = build_problem_spec(parse_config_text(text))
    assert spec.model == BrownianMotion(mu=mu, sigma=sigma)
    assert (spec.delta, spec.q, spec.r, spec.beta) == (delta, q, r, beta)


def _brute_clock(times, values, delay):
    anchor = times[0]
    for t, v in zip(times, values):
        if v >= 0.0:
            anchor = t
        elif t - anchor >= delay:
            return t
    return None


@given(
    steps=st.lists(st.floats(0.05, 0.5), min_size=1, max_size=50),
    seed=st.integers(0, 2**31 - 1),
    delay=st.floats(0.05, 3.0),
)
def test_parisian_clock_matches_reference_loop(steps, seed, delay):
    times = np.concatenate([[0.0], np.cumsum(steps)])
    values = np.random.default_rng(seed).uniform(-2.0, 2.0, size=times.size)
    assert parisian_clock(times, values, delay) == _brute_clock(times, values, delay)


@given(lower=st.floats(0.0, 5.0), gap=st.floats(0.0, 0.05))
def test_policy_rejects_nonpositive_net(lower, gap):
    beta = 0.05
    with pytest.raises(DomainError):
        ImpulsePolicy(lower, lower + beta * (1.0 - 1e-9) + 0.0).validate(beta)
    with pytest.raises(DomainError):
        ImpulsePolicy(lower, lower + gap).validate(beta)
