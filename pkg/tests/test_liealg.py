from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.core.errors import ExponentBoundError, FieldSyntaxError, VariableMismatchError
from app.core.liealg import (
    PHASE,
    Relation,
    VectorField,
    bracket,
    ermakov_algebra,
    escapes_span,
    in_span,
    infer_variables,
    linear_combination,
    milne_pinney_algebra,
    parse_combination,
    parse_field,
    quasi_lie_space,
    verify_preset,
    verify_structure,
)


def field(text, symbols=("k",)):
    return parse_field(text, PHASE, symbols)


# ----------------------------
# bracket
# ----------------------------
def test_sl2_brackets():
    alg = milne_pinney_algebra()
    assert bracket(alg["X1"], alg["X2"]) == alg["X3"].scale(2)
    assert bracket(alg["X3"], alg["X2"]) == -alg["X2"]
    assert bracket(alg["X3"], alg["X1"]) == alg["X1"]


def test_bracket_with_itself_vanishes():
    alg = milne_pinney_algebra()
    assert bracket(alg["X2"], alg["X2"]).is_zero()


def test_bracket_of_coordinate_fields():
    x_dx = field("x*d/dx")
    v_dx = field("v*d/dx")
    assert bracket(x_dx, v_dx) == -v_dx
    assert bracket(field("d/dx"), field("x^2*d/dv")) == field("2*x*d/dv")


def test_escaping_bracket_is_explicit():
    q = quasi_lie_space()
    computed = bracket(q["X3"], q["X4"])
    assert computed == parse_field("x^-3*d/dx + 3*x^-4*v*d/dv", PHASE, ())
    basis = [q[n] for n in ("X1", "X2", "X3", "X4", "X5")]
    assert in_span(computed, basis) is None
    assert escapes_span(q["X3"], q["X4"], basis)


def test_ermakov_brackets_hold_for_symbolic_k():
    alg = ermakov_algebra()
    assert bracket(alg["N1"], alg["N2"]) == alg["N3"].scale(2)
    assert bracket(alg["N3"], alg["N1"]) == alg["N1"]
    assert bracket(alg["N2"], alg["N3"]) == alg["N2"]


def test_fields_on_different_spaces_cannot_be_bracketed():
    a = parse_field("x*d/dx", ("x",), ())
    b = parse_field("x*d/dx", PHASE, ())
    with pytest.raises(VariableMismatchError):
        bracket(a, b)
    with pytest.raises(VariableMismatchError):
        a + b


def test_exponent_bound_is_enforced():
    with pytest.raises(ExponentBoundError):
        field("x^17*d/dx")
    with pytest.raises(ExponentBoundError):
        bracket(field("x^-16*d/dx"), field("x*d/dx"))


# ----------------------------
# in_span
# ----------------------------
def test_in_span_returns_exact_coefficients():
    q = quasi_lie_space()
    basis = [q[n] for n in ("X1", "X2", "X3", "X4", "X5")]
    coeffs = in_span(parse_field("x*d/dx - v*d/dv", PHASE, ()), basis)
    assert coeffs == [Fraction(-1), Fraction(0), Fraction(0), Fraction(0), Fraction(1)]


def test_in_span_of_zero_and_outside():
    alg = milne_pinney_algebra()
    basis = [alg["X1"], alg["X3"]]
    assert in_span(VectorField.zero(PHASE, ("k",)), basis) == [Fraction(0), Fraction(0)]
    assert in_span(alg["X2"], basis) is None
    assert in_span(alg["X1"].scale(Fraction(3, 4)), basis) == [Fraction(3, 4), Fraction(0)]


def test_linear_combination():
    alg = milne_pinney_algebra()
    combo = linear_combination([(2, alg["X3"]), (-1, alg["X1"])], PHASE, ("k",))
    assert combo == field("x*d/dx - v*d/dv - x*d/dv")


# ----------------------------
# textual notation
# ----------------------------
def test_field_string_form():
    alg = milne_pinney_algebra()
    assert str(alg["X3"]) == "1/2*x*d/dx - 1/2*v*d/dv"
    assert str(VectorField.zero(PHASE)) == "0"
    assert str(field("-x*d/dv")) == "-x*d/dv"


@pytest.mark.parametrize(
    "text",
    [
        "",
        "x*d/dx +",
        "x + d/dx",
        "x*d/dy",
        "q*d/dx",
        "2 $ d/dx",
        "d/dx*d/dv",
        "x*d/dx ++ v*d/dv",
        "x^a*d/dx",
        "1/0*d/dx",
    ],
)
def test_malformed_fields(text):
    with pytest.raises(FieldSyntaxError):
        field(text)


def test_infer_variables_skips_symbols():
    assert infer_variables(["v*d/dx + k*x^-3*d/dv"]) == ("v", "x")
    assert parse_field("v*d/dx").variables == ("v", "x")


def test_parse_combination():
    assert parse_combination("X5 - X1") == (("X5", Fraction(1)), ("X1", Fraction(-1)))
    assert parse_combination("2*X3") == (("X3", Fraction(2)),)
    assert parse_combination("1/2*X1") == (("X1", Fraction(1, 2)),)
    assert parse_combination("0") == ()
    with pytest.raises(FieldSyntaxError):
        parse_combination("X1 * X2")


def test_relation_parse():
    rel = Relation.parse("[X1, X2] = 2*X3")
    assert (rel.left, rel.right) == ("X1", "X2")
    assert rel.expected == (("X3", Fraction(2)),)
    with pytest.raises(FieldSyntaxError):
        Relation.parse("X1,X2 = X3")


# ----------------------------
# structure reports
# ----------------------------
@pytest.mark.parametrize("name", ["sl2", "ermakov", "quasi_lie"])
def test_presets_pass(name):
    report = verify_preset(name)
    assert report.passed
    assert all("FAIL" not in line for line in report.lines())


def test_sl2_report_lines():
    assert verify_preset("sl2").lines() == [
        "[X1,X2] = 2*X3  PASS (exact)",
        "[X3,X2] = -X2  PASS (exact)",
        "[X3,X1] = X1  PASS (exact)",
    ]


def test_quasi_lie_report_contents():
    report = verify_preset("quasi_lie")
    assert len(report.relations) == 7
    assert len(report.invariance) == 10
    assert report.lines()[-1] == "[X3,X4] = x^-3*d/dx + 3*x^-4*v*d/dv  PASS (not in span)"
    data = report.as_dict()
    assert data["passed"] is True
    assert data["escapes"][0]["escapes"] is True


def test_failed_relation_shows_computed_field():
    report = verify_structure(["[X1,X2] = X3"], milne_pinney_algebra())
    assert not report.passed
    assert report.lines() == ["[X1,X2] = X3  FAIL: computed x*d/dx - v*d/dv"]


def test_unknown_field_in_relation():
    with pytest.raises(FieldSyntaxError):
        verify_structure(["[X1,X9] = 0"], milne_pinney_algebra())


def test_unknown_preset():
    with pytest.raises(FieldSyntaxError):
        verify_preset("so3")


# ----------------------------
# properties
# ----------------------------
monomials = st.tuples(st.integers(-3, 3), st.integers(-3, 3), st.integers(0, 2))
coefficients = st.fractions(min_value=-3, max_value=3, max_denominator=4)
polys = st.dictionaries(monomials, coefficients, max_size=3)
random_fields = st.builds(lambda p, q: VectorField(PHASE, ("k",), (p, q)), polys, polys)


@given(random_fields)
@settings(max_examples=50)
def test_string_form_round_trips(a):
    if a.is_zero():
        assert str(a) == "0"
    else:
        assert field(str(a)) == a


@given(random_fields, random_fields)
@settings(max_examples=50)
def test_bracket_is_antisymmetric(a, b):
    assert bracket(a, b) == -bracket(b, a)


@given(random_fields, random_fields, random_fields)
@settings(max_examples=30)
def test_jacobi_identity(a, b, c):
    total = bracket(a, bracket(b, c)) + bracket(b, bracket(c, a)) + bracket(c, bracket(a, b))
    assert total.is_zero()


@given(random_fields, random_fields, random_fields, coefficients, coefficients)
@settings(max_examples=30)
def test_bracket_is_bilinear(a, b, c, p, q):
    lhs = bracket(a.scale(p) + b.scale(q), c)
    rhs = bracket(a, c).scale(p) + bracket(b, c).scale(q)
    assert lhs == rhs
