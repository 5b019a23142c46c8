import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraclab import (
    Ball,
    IterationConfig,
    ParameterError,
    ProblemSpec,
    assemble,
    ball_membership,
    build_domain,
    lemma_g_root,
    lemma_g_value,
    manufacture_forcing,
    picard_iterate,
    sample,
    threshold_from_constants,
)
from fraclab.fixedpoint import ThresholdConstants

S = 0.6


@pytest.fixture(scope="module")
def small():
    dom = build_domain(Ball(center=(0.0,), radius=1.0), 160, margin_cells=16)
    solver = assemble(dom, S).factorize()
    return dom, solver


def test_lemma_g_root_unit_case():
    c_star, t_star = lemma_g_root(1.0, 1.0, 2.0)
    assert c_star == pytest.approx(0.25, rel=1e-15)
    assert t_star == pytest.approx(0.25, rel=1e-15)
    assert abs(lemma_g_value(1.0, 1.0, 2.0, c_star, t_star)) <= 1e-15


def test_lemma_g_root_a2_case():
    c_star, t_star = lemma_g_root(2.0, 1.0, 2.0)
    assert c_star == pytest.approx(1.0 / 16.0, rel=1e-15)
    assert t_star == pytest.approx(1.0 / 16.0, rel=1e-15)


@settings(max_examples=60, deadline=None)
@given(
    a=st.floats(1e-3, 1e3),
    b=st.floats(1e-3, 1e3),
    p=st.floats(1.1, 8.0),
)
def test_lemma_g_root_residual_and_uniqueness(a, b, p):
    c_star, t_star = lemma_g_root(a, b, p)
    g_at_root = lemma_g_value(a, b, p, c_star, t_star)
    scale = max(t_star, a**p * (b * t_star + c_star) ** p)
    assert abs(g_at_root) <= 1e-12 * scale
    # g > 0 away from the root (global minimum at t*)
    ts = t_star * np.concatenate([np.geomspace(1e-3, 0.8, 40), np.geomspace(1.25, 1e3, 40)])
    vals = lemma_g_value(a, b, p, c_star, ts)
    assert np.all(vals > -1e-12 * scale)
    assert np.all(vals[ts < 0.5 * t_star] > 0)
    assert np.all(vals[ts > 2.0 * t_star] > 0)


def test_lemma_g_root_validation():
    with pytest.raises(ParameterError):
        lemma_g_root(0.0, 1.0, 2.0)
    with pytest.raises(ParameterError):
        lemma_g_root(1.0, 1.0, 1.0)


def test_threshold_all_ones_P_lambda():
    c = ThresholdConstants(reg_constant=1.0, mu_inf=1.0, f_norm=1.0, embed_constant=1.0)
    done = threshold_from_constants(c, "P_lambda")
    assert done.lambda_star == pytest.approx(0.25, rel=1e-15)
    assert done.l == pytest.approx(0.25, rel=1e-15)
    assert done.identity_residual <= 1e-12


def test_threshold_P_tilde_identity():
    c = ThresholdConstants(reg_constant=1.3, mu_inf=0.7, f_norm=2.1, embed_constant=0.9)
    done = threshold_from_constants(c, "P_tilde")
    # the defining identity C2 (C11 ||mu|| l + lambda* ||f||) = l^{1/3}
    lhs = 1.3 * (0.9 * 0.7 * done.l + done.lambda_star * 2.1)
    assert lhs == pytest.approx(done.l ** (1.0 / 3.0), rel=1e-12)


def test_threshold_lambda_star_antitone():
    base = ThresholdConstants(reg_constant=1.0, mu_inf=1.0, f_norm=1.0, embed_constant=1.0)
    lam0 = threshold_from_constants(base, "P_lambda").lambda_star
    lam_mu = threshold_from_constants(
        ThresholdConstants(reg_constant=1.0, mu_inf=2.0, f_norm=1.0, embed_constant=1.0),
        "P_lambda",
    ).lambda_star
    lam_f = threshold_from_constants(
        ThresholdConstants(reg_constant=1.0, mu_inf=1.0, f_norm=3.0, embed_constant=1.0),
        "P_lambda",
    ).lambda_star
    assert lam_mu < lam0 and lam_f < lam0


@pytest.mark.parametrize("variant", ["lambda_star", "l_equation"])
def test_threshold_Q_lambda_both_variants(variant):
    rng = np.random.default_rng(5)
    for _ in range(50):
        C3, mu, f, om = rng.uniform(0.1, 3.0, 4)
        q = rng.uniform(1.2, 4.0)
        m = rng.uniform(1.0, 3.0)
        r = q * m * rng.uniform(1.05, 2.0)
        c = ThresholdConstants(
            reg_constant=C3,
            mu_inf=mu,
            f_norm=f,
            omega_measure=om,
            r=r,
            q=q,
            m=m,
            omega_exponent_variant=variant,
        )
        done = threshold_from_constants(c, "Q_lambda")
        e = (r - q * m) / r
        if variant == "l_equation":
            e /= m
        lhs = C3 * (om**e * mu * done.l + done.lambda_star * f)
        assert abs(lhs - done.l ** (1.0 / q)) <= 1e-12 * done.l ** (1.0 / q)


def test_threshold_scheme_mismatch():
    c = ThresholdConstants(reg_constant=1.0, mu_inf=1.0, f_norm=1.0)
    with pytest.raises(ParameterError):
        threshold_from_constants(c, "P_lambda")  # missing embed_constant
    with pytest.raises(ParameterError):
        threshold_from_constants(c, "Q_lambda")  # missing omega/r/q/m
    with pytest.raises(ParameterError):
        threshold_from_constants(c, "nope")


def test_picard_zero_forcing_converges_at_zero(small):
    dom, solver = small
    mu = sample(lambda x: np.ones_like(x), dom)
    spec = ProblemSpec(rhs_kind="D_s2", s=S, lam=0.3, mu=mu, f=dom.zeros())
    rep = picard_iterate(spec, IterationConfig(), solver)
    assert rep.verdict == "converged"
    assert rep.iterations == 0
    assert np.all(rep.u_final.values == 0.0)


def test_picard_manufactured_recovery(small):
    dom, solver = small
    mu = sample(lambda x: np.full_like(x, 0.5), dom)
    u_star = sample(lambda x: 0.2 * np.maximum(1.0 - (x / 0.8) ** 2, 0.0) ** 2, dom)
    spec0 = ProblemSpec(rhs_kind="D_s2", s=S, lam=0.05, mu=mu, f=dom.zeros())
    f = manufacture_forcing(spec0, u_star, solver)
    spec = ProblemSpec(rhs_kind="D_s2", s=S, lam=0.05, mu=mu, f=f)
    rep = picard_iterate(spec, IterationConfig(tolerance=1e-12, max_iter=100), solver)
    assert rep.verdict == "converged"
    err = np.abs(rep.u_final.interior - u_star.interior).max() / np.abs(u_star.interior).max()
    assert err <= 1e-6
    assert rep.final_residual <= 1e-8


def test_picard_monotone_iterates_for_positive_data(small):
    dom, solver = small
    mu = sample(lambda x: np.ones_like(x), dom)
    f = sample(lambda x: np.maximum(1.0 - (x / 0.9) ** 2, 0.0), dom)
    spec = ProblemSpec(rhs_kind="D_s2", s=S, lam=0.2, mu=mu, f=f)

    # replicate the iteration to inspect monotonicity node-wise
    u = dom.zeros()
    prev = u.interior
    from fraclab.fixedpoint import _rhs_eval

    for _ in range(8):
        u = dom.from_interior(solver.solve_vector(_rhs_eval(spec, u)))
        assert np.all(u.interior >= prev - 1e-14)
        assert np.all(u.interior >= 0.0)
        prev = u.interior


def test_picard_B_sq_alpha_matches_D_s2(small):
    dom, solver = small
    mu = sample(lambda x: np.full_like(x, 0.8), dom)
    f = sample(lambda x: np.maximum(1.0 - (x / 0.7) ** 2, 0.0) ** 2, dom)
    cfg = IterationConfig(tolerance=1e-11, max_iter=60)
    rep_d = picard_iterate(ProblemSpec(rhs_kind="D_s2", s=S, lam=0.05, mu=mu, f=f), cfg, solver)
    rep_b = picard_iterate(
        ProblemSpec(rhs_kind="B_sq_alpha", s=S, lam=0.05, mu=mu, f=f, q=2.0, alpha=2.0),
        cfg,
        solver,
    )
    assert rep_d.verdict == rep_b.verdict == "converged"
    diff = np.abs(rep_d.u_final.interior - rep_b.u_final.interior).max()
    assert diff <= 1e-11 * np.abs(rep_d.u_final.interior).max()


def test_picard_lambda_doubling_eventually_diverges(small):
    dom, solver = small
    mu = sample(lambda x: np.ones_like(x), dom)
    f = sample(lambda x: np.maximum(1.0 - x**2, 0.0), dom)
    lam = 0.25
    verdicts = []
    for _ in range(14):
        spec = ProblemSpec(rhs_kind="D_s2", s=S, lam=lam, mu=mu, f=f)
        rep = picard_iterate(spec, IterationConfig(tolerance=1e-9, max_iter=120), solver)
        verdicts.append(rep.verdict)
        if rep.verdict == "diverged":
            break
        lam *= 2.0
    assert verdicts[-1] == "diverged"


def test_picard_deterministic(small):
    dom, solver = small
    mu = sample(lambda x: np.ones_like(x), dom)
    f = sample(lambda x: np.maximum(1.0 - x**2, 0.0), dom)
    spec = ProblemSpec(rhs_kind="D_s2", s=S, lam=0.1, mu=mu, f=f)
    cfg = IterationConfig(tolerance=1e-10, max_iter=80)
    r1 = picard_iterate(spec, cfg, solver)
    r2 = picard_iterate(spec, cfg, solver)
    assert r1.verdict == r2.verdict and r1.iterations == r2.iterations
    assert np.array_equal(r1.u_final.values, r2.u_final.values)


def test_picard_all_rhs_kinds_converge_small_lambda(small):
    dom, solver = small
    mu = sample(lambda x: np.full_like(x, 0.5), dom)
    f = sample(lambda x: np.maximum(1.0 - (x / 0.8) ** 2, 0.0) ** 2, dom)
    kinds = [
        dict(rhs_kind="D_s2"),
        dict(rhs_kind="u_times_D_s2"),
        dict(rhs_kind="abs_frac_power_q", t=0.5, q=1.5),
        dict(rhs_kind="riesz_grad_q", q=1.5),
        dict(rhs_kind="B_sq_alpha", q=2.0, alpha=1.5),
    ]
    for kw in kinds:
        spec = ProblemSpec(s=S, lam=0.02, mu=mu, f=f, **kw)
        rep = picard_iterate(spec, IterationConfig(tolerance=1e-10, max_iter=150), solver)
        assert rep.verdict == "converged", kw
        assert rep.final_residual <= 1e-8


def test_integrability_window_warning(small):
    dom, solver = small
    mu = sample(lambda x: np.ones_like(x), dom)
    f = dom.zeros()
    # N=1, s=0.6: window is (0.833, 5); m=20 falls outside and warns
    spec = ProblemSpec(rhs_kind="D_s2", s=S, lam=0.1, mu=mu, f=f, m=20.0)
    with pytest.warns(UserWarning):
        picard_iterate(spec, IterationConfig(max_iter=2), solver)


def test_ball_membership_zero_and_monotone(small):
    dom, _ = small
    member, value = ball_membership(dom.zeros(), S, 0.1, 2.0, 0.5)
    assert member and value == 0.0
    u = sample(lambda x: 0.1 * np.maximum(1.0 - x**2, 0.0) ** 2, dom)
    m_small, v1 = ball_membership(u, S, 0.1, 2.0, 1e-6)
    m_big, v2 = ball_membership(u, S, 0.1, 2.0, 1e6)
    assert v1 == v2
    assert (not m_small) and m_big


def test_ball_membership_high_order_path(small):
    dom, _ = small
    u = sample(lambda x: 0.1 * np.maximum(1.0 - x**2, 0.0) ** 2, dom)
    # order (s+eps)*r = 0.7*4 = 2.8 < N+2 = 3: direct pairwise summation path
    member, value = ball_membership(u, S, 0.1, 4.0, 1e9)
    assert member and math.isfinite(value)
    with pytest.raises(ParameterError):
        ball_membership(u, S, 0.1, 5.0, 1.0)  # order 3.5 > N+2


def test_converged_iterate_in_derived_ball(small):
    # end-to-end: all-ones constants give l = 1/4; a small-lambda converged
    # iterate stays in the ball of radius l for the (s+eps, r) seminorm
    dom, solver = small
    done = threshold_from_constants(
        ThresholdConstants(reg_constant=1.0, mu_inf=1.0, f_norm=1.0, embed_constant=1.0),
        "P_lambda",
    )
    mu = sample(lambda x: np.ones_like(x), dom)
    f = sample(lambda x: 0.05 * np.maximum(1.0 - x**2, 0.0) ** 2, dom)
    spec = ProblemSpec(rhs_kind="D_s2", s=S, lam=min(0.05, done.lambda_star), mu=mu, f=f)
    rep = picard_iterate(
        spec,
        IterationConfig(tolerance=1e-10, max_iter=100),
        solver,
        ball_check=(0.05, 2.0, done.l),
    )
    assert rep.verdict == "converged"
    assert rep.ball_member is True
    assert rep.ball_seminorm <= done.l
