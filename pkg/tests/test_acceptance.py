"""End-to-end checks over the whole toolkit, one test per behaviour."""
import math
import textwrap

import numpy as np
import pytest

from app.cli import main
from app.core.errors import RealityViolation
from app.core.expr import as_expr
from app.core.liealg import verify_preset
from app.core.reduce import (
    SecondOrderSystem,
    damped_system,
    named_system,
    reducibility_check,
    remove_damping,
    reparametrize,
    velocity_killing_alpha,
)
from app.core.superpose import (
    LinearOscillator,
    SuperpositionConstants,
    general_solution,
    invariant_drift,
    superpose,
    wronskian_drift,
)

WOBBLE = LinearOscillator(as_expr(1.0), as_expr("1 + 0.1*sin(t)"))


def test_algebraic_structure_is_exact():
    for name in ("sl2", "ermakov", "quasi_lie"):
        report = verify_preset(name)
        assert report.passed, report.lines()
    escapes = verify_preset("quasi_lie").escapes
    assert [(e.a, e.b, e.escapes) for e in escapes] == [("X3", "X4", True)]


def test_equilibrium_reproduction():
    unit = LinearOscillator.from_omega("1")
    direct = unit.integrate_ermakov(1.0, 0.0, 10.0, 1e-3, 1.0, 0.0)
    assert np.max(np.abs(direct.component(0) - 1.0)) <= 1e-9
    sol = general_solution(unit, 1.0, SuperpositionConstants(0.5, 0.5, 1.0), 0.0, 10.0, 1e-3)
    assert np.max(np.abs(sol.trajectory.component(0) - 1.0)) <= 1e-9


def test_superposition_matches_direct_integration():
    direct = WOBBLE.integrate_ermakov(1.0, 0.0, 10.0, 1e-3, 1.2, 0.0)
    sol = general_solution(WOBBLE, 1.0, None, 0.0, 10.0, 1e-3, initial=(1.2, 0.0))
    assert np.max(np.abs(sol.trajectory.component(0) - direct.component(0))) <= 1e-6


def test_invariants_are_conserved():
    x = WOBBLE.integrate_ermakov(1.0, 0.0, 10.0, 1e-3, 1.2, 0.0)
    y = WOBBLE.integrate(0.0, 10.0, 1e-3, 1.0, 0.0)
    z = WOBBLE.integrate(0.0, 10.0, 1e-3, 0.0, 1.0)
    assert invariant_drift(x, y, 1.0) <= 1e-8
    assert invariant_drift(x, z, 1.0) <= 1e-8
    assert wronskian_drift(y, z) <= 1e-8

    def drift(step):
        xs = WOBBLE.integrate_ermakov(1.0, 0.0, 10.0, step, 1.2, 0.0)
        ys = WOBBLE.integrate(0.0, 10.0, step, 1.0, 0.0)
        return invariant_drift(xs, ys, 1.0)

    # at 1e-3 the drift already sits at the roundoff floor
    ratio = drift(0.0125) / drift(0.00625)
    assert 12.0 <= ratio <= 20.0


def test_damping_removal():
    sys_ = damped_system("1", "1", "1")
    direct = sys_.integrate(0.0, 5.0, 1e-3, 1.3, 0.0)
    red = remove_damping(sys_, t1=5.0, step=1e-3)
    y0, vy0 = red.initial_state(1.3, 0.0, 0.0)
    pulled = red.pull_back(red.system.integrate(0.0, 5.0, 1e-3, y0, vy0))
    assert np.max(np.abs(pulled.component(0) - direct.component(0))) <= 1e-6

    ck = remove_damping(named_system("caldirola_kanai", gamma0=0.7, omega="1", k0=1.5))
    couplings = [ck.system.c.eval(t) for t in np.linspace(0.0, 5.0, 51)]
    assert np.max(np.abs(np.array(couplings) - 1.5)) <= 1e-12


@pytest.mark.parametrize(
    "name, p, alpha",
    [
        ("chini", "(1+t)^2", lambda t: 1.0 / (1.0 + t)),
        ("walter", "1+t^2", lambda t: 1.0 / (1.0 + t * t)),
        ("colegrave_abdalla", "exp(t)", lambda t: math.exp(2.0 * t)),
    ],
)
def test_reducibility_condition(name, p, alpha):
    params = {"p": p, "k": "1"} if name == "colegrave_abdalla" else {"p": p, "q": "1", "k": "1"}
    sys_ = named_system(name, **params)
    report = reducibility_check(sys_, 0.0, 2.0)
    assert report.passed
    assert report.max_residual <= 1e-10
    for t in np.linspace(0.0, 2.0, 21):
        assert report.gauge.alpha.eval(t) == pytest.approx(alpha(t), rel=1e-12)


def test_reducibility_control_fails():
    report = reducibility_check(SecondOrderSystem.from_text("1", "0", "1"), 0.0, 1.0)
    assert not report.passed
    assert report.max_residual == pytest.approx(1.0)


def test_reparametrization_kills_velocity_term():
    sys_ = SecondOrderSystem.from_text("1", "-1", "1")
    rep = reparametrize(sys_, velocity_killing_alpha("1"), 0.0, 1.0, 1e-3)
    points = np.random.default_rng(0).uniform(0.0, 1.0, 20)
    assert max(abs(rep.velocity_coefficient.eval(t)) for t in points) <= 1e-13

    direct = sys_.integrate(0.0, 1.0, 1e-3, 1.0, 0.0)
    xs = rep.integrate(1.0, 0.0, step=1e-3)
    ts = direct.times()[::25]
    moved = np.array([rep.transport(xs, t) for t in ts])
    assert np.max(np.abs(moved - direct.component(0)[::25])) <= 1e-6


def test_reality_guard(tmp_path):
    with pytest.raises(RealityViolation):
        superpose(1.0, 0.0, SuperpositionConstants(0.2, 0.2, 1.0), 1.0)
    assert superpose(1.0, 0.0, SuperpositionConstants(0.5, 0.5, 1.0), 1.0) == pytest.approx(1.0)

    cfg = tmp_path / "unreal.ini"
    cfg.write_text(
        textwrap.dedent(
            """
            [system]
            name = milne_pinney
            omega = "1"
            k = "1"

            [time]
            t1 = 1

            [action]
            name = superpose
            I1 = 0.2
            I2 = 0.2
            """
        ),
        encoding="utf-8",
    )
    assert main(["--config", str(cfg)]) == 4


def test_cli_determinism(tmp_path):
    cfg = tmp_path / "damped.ini"
    cfg.write_text(
        textwrap.dedent(
            """
            [system]
            name = damped
            gamma = "1/(1+t)"
            omega = "1"
            k = "1"

            [time]
            t1 = 2
            step = 0.005

            [action]
            name = reduce
            method = damping
            x0 = 1.1
            v0 = 0.2
            """
        ),
        encoding="utf-8",
    )
    outputs = []
    for name in ("one.csv", "two.csv"):
        out = tmp_path / name
        assert main(["--config", str(cfg), "--out", str(out)]) == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
