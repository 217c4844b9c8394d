import math

import numpy as np
import pytest

from app.core.errors import ConfigError, SignChangeError
from app.core.expr import Expr, as_expr
from app.core.reduce import (
    NAMED_SYSTEMS,
    ErmakovForm,
    ExponentialOfIntegral,
    GaugeTransform,
    SecondOrderSystem,
    TransformedCoefficients,
    damped_system,
    lie_time_system,
    named_system,
    omega_reduced,
    omega_squared_reduced,
    quasi_lie_transform,
    reducibility_check,
    remove_damping,
    reparametrize,
    velocity_killing_alpha,
    zeta_factor,
)

GRID = np.linspace(0.0, 2.0, 21)


def max_gap(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


# ----------------------------
# damping removal
# ----------------------------
def test_zero_damping_keeps_zeta_constant():
    zeta = zeta_factor("0", zeta0=2.5)
    for t in (0.0, 1.0, 7.5):
        assert zeta.eval(t) == pytest.approx(2.5, abs=1e-15)


def test_constant_damping_zeta_closed_form():
    zeta = zeta_factor("2")
    assert zeta.as_expr() is not None
    assert zeta.eval(1.0) == pytest.approx(0.3678794411714423, abs=1e-9)
    assert zeta.eval(0.0) == 1.0


def test_time_dependent_damping_zeta_is_sampled():
    zeta = zeta_factor("1/(1+t)", t1=3.0, step=1e-3)
    assert zeta.as_expr() is None
    assert zeta.eval(0.0) == 1.0
    assert zeta.eval(3.0) == pytest.approx(0.5, abs=1e-8)
    assert zeta.eval(1.0) == pytest.approx(2.0 ** -0.5, abs=1e-8)


def test_time_dependent_rate_needs_interval_end():
    with pytest.raises(ValueError):
        zeta_factor("t")
    with pytest.raises(ValueError):
        zeta_factor("1", zeta0=0.0)


def test_omega_reduced():
    assert omega_reduced("3", "0").eval(0.4) == pytest.approx(9.0)
    assert omega_squared_reduced("1", "3").eval(0.0) == pytest.approx(-1.25)
    assert omega_reduced("2", "2*t").eval(1.0) == pytest.approx(2.0)


def test_caldirola_kanai_coupling_becomes_constant():
    sys_ = named_system("caldirola_kanai", gamma0=0.5, omega="1", k0=2.0)
    red = remove_damping(sys_)
    assert isinstance(red.system.c, Expr)
    for t in np.linspace(0.0, 5.0, 11):
        a, b, c = red.system.coefficients_at(t)
        assert a == 0.0
        assert b == pytest.approx(-(1.0 - 0.0625), abs=1e-14)
        assert c == pytest.approx(2.0, abs=2e-12)


def test_zero_damping_is_identity_reduction():
    sys_ = damped_system("0", "1.5", "3")
    red = remove_damping(sys_, zeta0=1.0)
    assert red.system.coefficients_at(2.0) == pytest.approx((0.0, -2.25, 3.0))
    assert red.initial_state(1.2, -0.4, 0.0) == pytest.approx((1.2, -0.4))


def _cross_check(sys_, t1, x0, v0):
    step = 1e-3
    direct = sys_.integrate(0.0, t1, step, x0, v0)
    red = remove_damping(sys_, t1=t1, step=step)
    y0, vy0 = red.initial_state(x0, v0, 0.0)
    pulled = red.pull_back(red.system.integrate(0.0, t1, step, y0, vy0))
    assert pulled.same_grid(direct)
    return max_gap(pulled.component(0), direct.component(0))


def test_constant_damping_cross_integration():
    assert _cross_check(damped_system("1", "1", "1"), 5.0, 1.3, 0.0) <= 1e-6


def test_time_dependent_damping_cross_integration():
    sys_ = damped_system("1/(1+t)", "1", "1")
    red = remove_damping(sys_, t1=3.0, step=1e-3)
    assert red.system.c.eval(3.0) == pytest.approx(16.0, rel=1e-7)
    assert _cross_check(sys_, 3.0, 1.1, 0.2) <= 1e-6


def test_sampled_coupling_is_not_a_closed_form():
    red = remove_damping(damped_system("1/(1+t)", "1", "1"), t1=1.0, step=1e-2)
    assert not isinstance(red.system.c, Expr)
    with pytest.raises(TypeError):
        TransformedCoefficients.of(red.system)


# ----------------------------
# time reparametrization
# ----------------------------
def test_unit_alpha_is_identity():
    sys_ = SecondOrderSystem.from_text("sin(t)", "-1-t", "2")
    rep = reparametrize(sys_, "1", 0.0, 2.0, 1e-3)
    assert rep.s_range == pytest.approx((0.0, 2.0), abs=1e-12)
    for s in (0.3, 1.1, 1.9):
        assert rep.system.coefficients_at(s) == pytest.approx(sys_.coefficients_at(s), abs=1e-10)


def test_velocity_killing_alpha_removes_velocity_term():
    sys_ = SecondOrderSystem.from_text("1", "-1", "0")
    alpha = velocity_killing_alpha("1")
    assert isinstance(alpha, Expr)
    rep = reparametrize(sys_, alpha, 0.0, 1.0, 1e-3)
    assert rep.velocity_coefficient is not None
    assert max(abs(rep.velocity_coefficient.eval(t)) for t in np.linspace(0.0, 1.0, 101)) <= 1e-13
    s = math.exp(0.5) - 1.0
    a_s, b_s, c_s = rep.system.coefficients_at(s)
    assert abs(a_s) <= 1e-12
    assert b_s == pytest.approx(-math.exp(-1.0), abs=1e-8)
    assert c_s == 0.0


def test_chini_lie_time_inverse():
    sys_ = named_system("chini", p="(1+t)^2", q="1", k="1")
    rep = reparametrize(sys_, "1/(1+t)", 0.0, 2.0, 1e-3)
    assert rep.s_range[1] == pytest.approx(math.log(3.0), abs=1e-10)
    assert rep.mapping.invert(math.log(2.0)) == pytest.approx(1.0, abs=1e-8)


def test_transport_matches_direct_integration():
    sys_ = SecondOrderSystem.from_text("1", "-1", "1")
    direct = sys_.integrate(0.0, 1.0, 1e-3, 1.0, 0.0)
    rep = reparametrize(sys_, velocity_killing_alpha("1"), 0.0, 1.0, 1e-3)
    xs = rep.integrate(1.0, 0.0, step=1e-3)
    ts = direct.times()[::50]
    moved = [rep.transport(xs, t) for t in ts]
    assert max_gap(moved, direct.component(0)[::50]) <= 1e-6


def test_negative_constant_alpha_runs_time_backwards():
    sys_ = SecondOrderSystem.from_text("0", "-1", "0")
    rep = reparametrize(sys_, "-2", 0.0, 1.0, 1e-3)
    assert rep.orientation == -1.0
    assert rep.s_range == pytest.approx((0.0, -2.0), abs=1e-12)
    assert rep.s_of(0.5) == pytest.approx(-1.0, abs=1e-12)
    assert rep.time_of(-1.0) == pytest.approx(0.5, abs=1e-10)
    assert rep.velocity_coefficient.eval(0.3) == pytest.approx(0.0, abs=1e-15)

    xs = rep.integrate(1.0, 0.0, step=1e-3)
    ts = np.linspace(0.0, 1.0, 11)
    assert max_gap([rep.transport(xs, t) for t in ts], np.cos(ts)) <= 1e-6

    ss, x, v = rep.in_s_time(xs)
    assert ss[-1] == pytest.approx(-2.0, abs=1e-12)
    assert x[-1] == pytest.approx(math.cos(1.0), abs=1e-9)
    # dx/ds = (dx/dt) / alpha
    assert v[-1] == pytest.approx(math.sin(1.0) / 2.0, abs=1e-9)


def test_alpha_sign_change_is_rejected():
    sys_ = SecondOrderSystem.from_text("0", "-1", "1")
    with pytest.raises(SignChangeError):
        reparametrize(sys_, "t - 0.5", 0.0, 1.0, 1e-3)


def test_sampled_velocity_killing_alpha():
    alpha = velocity_killing_alpha("sin(t)", t1=2.0, step=1e-3)
    assert isinstance(alpha, ExponentialOfIntegral)
    assert alpha.eval(2.0) == pytest.approx(math.exp(1.0 - math.cos(2.0)), abs=1e-9)

    sys_ = SecondOrderSystem.from_text("sin(t)", "-1", "1")
    rep = reparametrize(sys_, alpha, 0.0, 2.0, 1e-3)
    assert rep.velocity_coefficient is None
    for t in (0.0, 0.7, 1.9):
        assert abs(rep.system.coefficients_at_t(t)[0]) <= 1e-12


# ----------------------------
# quasi-Lie gauge
# ----------------------------
def test_identity_gauge():
    sys_ = SecondOrderSystem.from_text("sin(t)", "-1-t", "2+cos(t)")
    tc = quasi_lie_transform(sys_, GaugeTransform.from_text(1, 0))
    for t in GRID:
        a, b, c, d, e = tc.values(t)
        assert (a, b, c) == pytest.approx(sys_.coefficients_at(t), abs=1e-15)
        assert (d, e) == (1.0, 0.0)


def test_caldirola_kanai_gauge_gives_ermakov_coupling():
    sys_ = named_system("caldirola_kanai", gamma0=0.5, omega="1", k0=2.0)
    g = GaugeTransform.from_text("exp(-0.5*t)")
    tc = quasi_lie_transform(sys_, g)
    for t in GRID:
        a, b, c, d, e = tc.values(t)
        assert abs(a) <= 1e-12
        assert c == pytest.approx(2.0 * math.exp(-0.5 * t), rel=1e-12)
        assert c / g.alpha.eval(t) == pytest.approx(2.0, rel=1e-12)
        assert e == 0.0


def test_gauge_inverse_round_trip():
    sys_ = SecondOrderSystem.from_text("sin(t)", "-1-t", "2+cos(t)")
    g = GaugeTransform.from_text("1+t^2", "t")
    back = TransformedCoefficients.of(sys_).transform(g).transform(g.inverse())
    original = TransformedCoefficients.of(sys_)
    for t in GRID:
        assert back.values(t) == pytest.approx(original.values(t), rel=1e-12, abs=1e-12)


def test_gauge_alpha_must_keep_sign():
    with pytest.raises(SignChangeError):
        GaugeTransform.from_text("cos(t)").check(np.linspace(0.0, 3.0, 31))


# ----------------------------
# reducibility
# ----------------------------
def test_chini_is_reducible():
    sys_ = named_system("chini", p="1+t^2", q="1", k="1")
    report = reducibility_check(sys_, 0.0, 5.0)
    assert report.passed
    k, g = report.result()
    assert k == 1.0
    for t in np.linspace(0.0, 5.0, 11):
        assert g.alpha.eval(t) == pytest.approx(1.0 / math.sqrt(1.0 + t * t), rel=1e-12)
    assert g.beta.eval(1.0) == 0.0


def test_walter_is_reducible():
    sys_ = named_system("walter", p="1+t^2", q="1", k="2")
    report = reducibility_check(sys_, 0.0, 5.0)
    assert report.passed
    assert report.max_residual <= 1e-12
    assert report.k == 2.0
    for t in np.linspace(0.0, 5.0, 11):
        assert report.gauge.alpha.eval(t) == pytest.approx(1.0 / (1.0 + t * t), rel=1e-12)


def test_colegrave_abdalla_is_reducible():
    sys_ = named_system("colegrave_abdalla", p="exp(t)", k="1")
    assert sys_.coefficients_at(1.0) == pytest.approx((2.0, -math.exp(2.0), math.exp(4.0)))
    report = reducibility_check(sys_, 0.0, 2.0)
    assert report.passed
    for t in np.linspace(0.0, 2.0, 11):
        assert report.gauge.alpha.eval(t) == pytest.approx(math.exp(2.0 * t), rel=1e-12)


def test_non_reducible_control():
    sys_ = SecondOrderSystem.from_text("1", "0", "1")
    report = reducibility_check(sys_, 0.0, 1.0)
    assert not report.passed
    assert report.max_residual == pytest.approx(1.0)
    assert report.result() is None
    assert report.exact is False
    assert report.as_dict()["alpha"] is None


def test_reducibility_requires_constant_sign_coupling():
    sys_ = SecondOrderSystem.from_text("0", "0", "t - 1")
    with pytest.raises(SignChangeError):
        reducibility_check(sys_, 0.0, 2.0)


def test_ermakov_form_coupling_error():
    sys_ = named_system("colegrave_abdalla", p="exp(t)", k="1")
    form = ErmakovForm.from_report(sys_, reducibility_check(sys_, 0.0, 2.0))
    assert form.k == 1.0
    assert form.coupling_error(sys_, np.linspace(0.0, 2.0, 21)) <= 1e-12


def test_ermakov_form_rejects_failed_report():
    sys_ = SecondOrderSystem.from_text("1", "0", "1")
    with pytest.raises(ValueError):
        ErmakovForm.from_report(sys_, reducibility_check(sys_, 0.0, 1.0))


def test_chini_lie_time_system_is_autonomous():
    sys_ = named_system("chini", p="(1+t)^2", q="1", k="1")
    form = ErmakovForm.from_report(sys_, reducibility_check(sys_, 0.0, 1.0))
    rep = lie_time_system(form, 0.0, 1.0, 1e-3)
    for t in (0.0, 0.5, 1.0):
        assert rep.system.coefficients_at_t(t) == pytest.approx((0.0, -1.0, 1.0), abs=1e-10)
    assert rep.s_range[1] == pytest.approx(math.log(2.0), abs=1e-10)


# ----------------------------
# named systems
# ----------------------------
def test_chini_with_constant_p_is_milne_pinney():
    sys_ = named_system("chini", p="1", q="2+sin(t)", k="0.5")
    assert sys_.coefficients_at(0.3) == pytest.approx((0.0, -(2.0 + math.sin(0.3)), 0.5))


def test_caldirola_kanai_coefficients():
    sys_ = named_system("Caldirola-Kanai", gamma0=0.5, omega="1", k0=2.0)
    assert sys_.coefficients_at(1.0) == pytest.approx((-0.5, -1.0, 2.0 * math.exp(-1.0)))


def test_milne_pinney_accepts_omega_or_omega_squared():
    a = named_system("milne_pinney", k=1.0, omega="2")
    b = named_system("milne_pinney", k=1.0, omega_squared="4")
    assert a.coefficients_at(0.0) == pytest.approx(b.coefficients_at(0.0))


def test_variable_mass_system():
    sys_ = named_system("variable_mass", f="exp(t)", omega="1", k="1")
    for t in GRID:
        assert sys_.coefficients_at(t) == pytest.approx((1.0, -1.0, 1.0), abs=1e-12)

    sys_ = named_system("variable_mass", f="1+t", omega="1", k="1")
    red = remove_damping(sys_, t1=3.0, step=1e-3)
    assert red.zeta.eval(3.0) == pytest.approx(2.0, abs=1e-8)
    assert red.omega_squared.eval(1.0) == pytest.approx(1.0 - 3.0 / 16.0, abs=1e-12)
    assert red.system.c.eval(1.0) == pytest.approx(0.25, rel=1e-7)
    assert _cross_check(sys_, 3.0, 1.1, 0.2) <= 1e-6


def test_named_system_errors():
    with pytest.raises(ConfigError):
        named_system("chini", p="1")
    with pytest.raises(ConfigError):
        named_system("pendulum")
    assert set(NAMED_SYSTEMS) >= {"chini", "walter", "colegrave_abdalla", "caldirola_kanai", "milne_pinney", "variable_mass"}
    with pytest.raises(ConfigError):
        named_system("variable_mass", omega="1", k="1")


def test_describe_uses_expression_text():
    sys_ = SecondOrderSystem.from_text("0", "-1", as_expr(2.0), name="demo")
    assert sys_.describe()["name"] == "demo"
    assert sys_.is_linear is False
    assert SecondOrderSystem.from_text("0", "-1", "0").is_linear
