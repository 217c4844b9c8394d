"""
Vector fields with Laurent-monomial coefficients and exact rational arithmetic.

A field on variables (x, v) with formal symbols (k,) is stored as one Laurent
polynomial per variable; each polynomial maps an exponent tuple over
variables + symbols to a Fraction. Symbols commute with everything and are
never differentiated, so relations verified with k symbolic hold for every k.

Textual notation:  "v*d/dx + k*x^-3*d/dv",  "1/2*x*d/dx - 1/2*v*d/dv".
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from app.core.errors import ExponentBoundError, FieldSyntaxError, VariableMismatchError

logger = logging.getLogger(__name__)

MAX_EXPONENT = 16

Monomial = Tuple[int, ...]
Poly = Tuple[Tuple[Monomial, Fraction], ...]
Rational = Union[Fraction, int]


def _canonical(poly: Mapping[Monomial, Fraction]) -> Poly:
    return tuple(sorted((m, Fraction(c)) for m, c in poly.items() if c != 0))


def _check_bound(m: Monomial) -> None:
    if any(abs(e) > MAX_EXPONENT for e in m):
        raise ExponentBoundError(f"exponent outside [-{MAX_EXPONENT}, {MAX_EXPONENT}] in monomial {m}")


def _poly_add(p: Poly, q: Poly, scale: Fraction = Fraction(1)) -> Poly:
    out: Dict[Monomial, Fraction] = dict(p)
    for m, c in q:
        out[m] = out.get(m, Fraction(0)) + scale * c
    return _canonical(out)


def _poly_mul(p: Poly, q: Poly) -> Poly:
    out: Dict[Monomial, Fraction] = {}
    for mp, cp in p:
        for mq, cq in q:
            m = tuple(a + b for a, b in zip(mp, mq))
            _check_bound(m)
            out[m] = out.get(m, Fraction(0)) + cp * cq
    return _canonical(out)


def _poly_partial(p: Poly, index: int) -> Poly:
    out: Dict[Monomial, Fraction] = {}
    for m, c in p:
        e = m[index]
        if e == 0:
            continue
        dm = m[:index] + (e - 1,) + m[index + 1:]
        _check_bound(dm)
        out[dm] = out.get(dm, Fraction(0)) + c * e
    return _canonical(out)


@dataclass(frozen=True)
class VectorField:
    """sum_j P_j(variables, symbols) d/d(variable_j), in canonical form."""

    variables: Tuple[str, ...]
    symbols: Tuple[str, ...] = ()
    components: Tuple[Poly, ...] = ()

    def __post_init__(self):
        variables = tuple(self.variables)
        symbols = tuple(self.symbols)
        names = variables + symbols
        if len(set(names)) != len(names):
            raise VariableMismatchError(f"duplicate names in {names}")
        comps = tuple(self.components) or tuple(() for _ in variables)
        if len(comps) != len(variables):
            raise VariableMismatchError("one coefficient polynomial is required per variable")
        canon = []
        for poly in comps:
            items = dict(poly) if not isinstance(poly, dict) else poly
            for m in items:
                if len(m) != len(names):
                    raise VariableMismatchError(f"monomial {m} does not match names {names}")
                _check_bound(m)
            canon.append(_canonical(items))
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "components", tuple(canon))

    @classmethod
    def zero(cls, variables: Sequence[str], symbols: Sequence[str] = ()) -> "VectorField":
        return cls(tuple(variables), tuple(symbols))

    @property
    def names(self) -> Tuple[str, ...]:
        return self.variables + self.symbols

    def is_zero(self) -> bool:
        return all(not poly for poly in self.components)

    def _check_space(self, other: "VectorField") -> None:
        if self.variables != other.variables or self.symbols != other.symbols:
            raise VariableMismatchError(
                f"fields live on different spaces: {self.names} vs {other.names}"
            )

    def apply(self, poly: Poly) -> Poly:
        """Directional derivative of a coefficient polynomial along this field."""
        out: Poly = ()
        for i, coeff in enumerate(self.components):
            if coeff:
                out = _poly_add(out, _poly_mul(coeff, _poly_partial(poly, i)))
        return out

    def __add__(self, other: "VectorField") -> "VectorField":
        self._check_space(other)
        comps = tuple(_poly_add(p, q) for p, q in zip(self.components, other.components))
        return VectorField(self.variables, self.symbols, comps)

    def __sub__(self, other: "VectorField") -> "VectorField":
        self._check_space(other)
        comps = tuple(_poly_add(p, q, Fraction(-1)) for p, q in zip(self.components, other.components))
        return VectorField(self.variables, self.symbols, comps)

    def __neg__(self) -> "VectorField":
        return self.scale(-1)

    def __rmul__(self, q: Rational) -> "VectorField":
        return self.scale(q)

    def scale(self, q: Rational) -> "VectorField":
        q = Fraction(q)
        comps = tuple(_canonical({m: q * c for m, c in poly}) for poly in self.components)
        return VectorField(self.variables, self.symbols, comps)

    def __str__(self) -> str:
        parts: List[Tuple[Fraction, str]] = []
        for j, poly in enumerate(self.components):
            for m, c in poly:
                factors = []
                for name, e in zip(self.names, m):
                    if e == 1:
                        factors.append(name)
                    elif e != 0:
                        factors.append(f"{name}^{e}")
                factors.append(f"d/d{self.variables[j]}")
                parts.append((c, "*".join(factors)))
        if not parts:
            return "0"
        out = ""
        for n, (c, body) in enumerate(parts):
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            text = body if mag == 1 else f"{mag}*{body}"
            if n == 0:
                out = ("-" if sign == "-" else "") + text
            else:
                out += f" {sign} {text}"
        return out


def bracket(a: VectorField, b: VectorField) -> VectorField:
    """[A, B] = A(B) - B(A), component-wise."""
    a._check_space(b)
    comps = tuple(_poly_add(a.apply(bj), b.apply(aj), Fraction(-1)) for aj, bj in zip(a.components, b.components))
    return VectorField(a.variables, a.symbols, comps)


def linear_combination(terms: Iterable[Tuple[Rational, VectorField]], variables: Sequence[str], symbols: Sequence[str] = ()) -> VectorField:
    out = VectorField.zero(variables, symbols)
    for q, f in terms:
        out = out + f.scale(q)
    return out


def in_span(a: VectorField, basis: Sequence[VectorField]) -> Optional[List[Fraction]]:
    """
    Exact coefficients c with a = sum c_i basis_i, or None when a is outside
    the span. Solved by Gauss-Jordan elimination over the monomial slots.
    """
    for b in basis:
        a._check_space(b)
    m = len(basis)

    slots = set()
    for f in [a, *basis]:
        for j, poly in enumerate(f.components):
            for mono, _ in poly:
                slots.add((j, mono))

    def coeff(f: VectorField, slot) -> Fraction:
        j, mono = slot
        return dict(f.components[j]).get(mono, Fraction(0))

    rows = [[coeff(b, s) for b in basis] + [coeff(a, s)] for s in sorted(slots)]

    pivots: List[int] = []
    r = 0
    for col in range(m):
        pivot = next((i for i in range(r, len(rows)) if rows[i][col] != 0), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        pv = rows[r][col]
        rows[r] = [x / pv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][col] != 0:
                factor = rows[i][col]
                rows[i] = [x - factor * y for x, y in zip(rows[i], rows[r])]
        pivots.append(col)
        r += 1

    for i in range(r, len(rows)):
        if rows[i][m] != 0:
            return None

    out = [Fraction(0)] * m
    for i, col in enumerate(pivots):
        out[col] = rows[i][m]
    return out


def escapes_span(a: VectorField, b: VectorField, basis: Sequence[VectorField]) -> bool:
    return in_span(bracket(a, b), basis) is None


# ----------------------------
# Textual notation
# ----------------------------
_FIELD_TOKEN = re.compile(
    r"\s*(?:(?P<deriv>d/d(?P<dvar>[A-Za-z_][A-Za-z0-9_]*))"
    r"|(?P<num>\d+(?:\.\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^]))"
)


def _field_tokens(text: str) -> List[Tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if not text[pos:].strip():
            break
        m = _FIELD_TOKEN.match(text, pos)
        if not m:
            raise FieldSyntaxError(f"unexpected character {text[pos:].lstrip()[:1]!r} in field '{text}'")
        if m.group("deriv"):
            tokens.append(("deriv", m.group("dvar"), m.start()))
        elif m.group("num"):
            tokens.append(("num", m.group("num"), m.start()))
        elif m.group("name"):
            tokens.append(("name", m.group("name"), m.start()))
        else:
            tokens.append(("op", m.group("op"), m.start()))
        pos = m.end()
    return tokens


def _split_terms(tokens: List[Tuple[str, str, int]], text: str) -> List[Tuple[int, List[Tuple[str, str, int]]]]:
    terms: List[Tuple[int, List]] = []
    sign = 1
    current: List = []
    prev = None
    for tok in tokens:
        kind, val, _ = tok
        # '-' right after '^' belongs to the exponent
        if kind == "op" and val in "+-" and not (prev and prev[:2] == ("op", "^")):
            if current:
                terms.append((sign, current))
                current = []
            elif terms or (prev is not None):
                raise FieldSyntaxError(f"dangling '{val}' in field '{text}'")
            sign = -1 if val == "-" else 1
        else:
            current.append(tok)
        prev = tok
    if current:
        terms.append((sign, current))
    elif tokens:
        raise FieldSyntaxError(f"field '{text}' ends with an operator")
    return terms


def parse_field(text: str, variables: Optional[Sequence[str]] = None, symbols: Sequence[str] = ("k",)) -> VectorField:
    symbols = tuple(symbols)
    if variables is None:
        variables = infer_variables([text], symbols)
    variables = tuple(variables)
    names = variables + symbols
    index = {n: i for i, n in enumerate(names)}
    tokens = _field_tokens(text)
    if not tokens:
        raise FieldSyntaxError("empty field")

    comps: List[Dict[Monomial, Fraction]] = [dict() for _ in variables]
    for sign, term in _split_terms(tokens, text):
        coeff = Fraction(sign)
        mono = [0] * len(names)
        target: Optional[str] = None
        i = 0
        while i < len(term):
            kind, val, pos = term[i]
            if kind == "op" and val == "*":
                i += 1
                continue
            if kind == "deriv":
                if target is not None:
                    raise FieldSyntaxError(f"term at offset {pos} has two d/d factors")
                if val not in variables:
                    raise FieldSyntaxError(f"d/d{val}: '{val}' is not a phase variable")
                target = val
                i += 1
            elif kind == "num":
                num = Fraction(val)
                i += 1
                if i + 1 < len(term) and term[i][:2] == ("op", "/") and term[i + 1][0] == "num":
                    den = Fraction(term[i + 1][1])
                    if den == 0:
                        raise FieldSyntaxError(f"zero denominator at offset {term[i + 1][2]}")
                    num /= den
                    i += 2
                coeff *= num
            elif kind == "name":
                if val not in index:
                    raise FieldSyntaxError(f"unknown name '{val}' at offset {pos}")
                exp = 1
                i += 1
                if i < len(term) and term[i][:2] == ("op", "^"):
                    i += 1
                    neg = False
                    if i < len(term) and term[i][:2] == ("op", "-"):
                        neg = True
                        i += 1
                    if i >= len(term) or term[i][0] != "num" or not term[i][1].isdigit():
                        raise FieldSyntaxError(f"integer exponent expected after '{val}^'")
                    exp = -int(term[i][1]) if neg else int(term[i][1])
                    i += 1
                mono[index[val]] += exp
            else:
                raise FieldSyntaxError(f"unexpected '{val}' at offset {pos} in field '{text}'")
        if target is None:
            raise FieldSyntaxError(f"term without d/d factor in field '{text}'")
        m = tuple(mono)
        _check_bound(m)
        slot = comps[variables.index(target)]
        slot[m] = slot.get(m, Fraction(0)) + coeff
    return VectorField(variables, symbols, tuple(_canonical(c) for c in comps))


def infer_variables(texts: Iterable[str], symbols: Sequence[str] = ("k",)) -> Tuple[str, ...]:
    found = set()
    for text in texts:
        for kind, val, _ in _field_tokens(text):
            if kind in ("deriv", "name") and val not in symbols:
                found.add(val)
    return tuple(sorted(found))


# ----------------------------
# Relations and structure reports
# ----------------------------
_RELATION_RE = re.compile(r"^\s*\[\s*(\w+)\s*,\s*(\w+)\s*\]\s*=\s*(.+?)\s*$")
_COMBO_TERM_RE = re.compile(r"^(?:(\d+(?:\.\d+)?(?:/\d+)?)\s*\*?\s*)?([A-Za-z_]\w*)?$")


def parse_combination(text: str) -> Tuple[Tuple[str, Fraction], ...]:
    """'X5 - X1' -> (('X5', 1), ('X1', -1)); '0' -> ()."""
    body = text.replace(" ", "")
    if body in ("0", ""):
        return ()
    pieces = re.findall(r"[+-]?[^+-]+", body)
    if "".join(pieces) != body:
        raise FieldSyntaxError(f"cannot parse combination '{text}'")
    out: Dict[str, Fraction] = {}
    for piece in pieces:
        sign = Fraction(-1) if piece.startswith("-") else Fraction(1)
        piece = piece.lstrip("+-")
        m = _COMBO_TERM_RE.match(piece)
        if not m or not m.group(2):
            raise FieldSyntaxError(f"cannot parse term '{piece}' in '{text}'")
        q = Fraction(m.group(1)) if m.group(1) else Fraction(1)
        out[m.group(2)] = out.get(m.group(2), Fraction(0)) + sign * q
    return tuple((name, q) for name, q in out.items() if q != 0)


@dataclass(frozen=True)
class Relation:
    left: str
    right: str
    expected: Tuple[Tuple[str, Fraction], ...]
    text: str = ""

    @classmethod
    def parse(cls, text: str) -> "Relation":
        m = _RELATION_RE.match(text)
        if not m:
            raise FieldSyntaxError(f"relation must look like '[A,B] = 2*C', got '{text}'")
        return cls(m.group(1), m.group(2), parse_combination(m.group(3)), text.strip())


@dataclass(frozen=True)
class RelationResult:
    relation: Relation
    passed: bool
    computed: VectorField
    expected: VectorField


@dataclass(frozen=True)
class InvarianceResult:
    w: str
    v: str
    coefficients: Optional[Tuple[Fraction, ...]]

    @property
    def passed(self) -> bool:
        return self.coefficients is not None


@dataclass(frozen=True)
class EscapeResult:
    a: str
    b: str
    computed: VectorField
    escapes: bool


@dataclass
class StructureReport:
    relations: List[RelationResult] = field(default_factory=list)
    invariance: List[InvarianceResult] = field(default_factory=list)
    escapes: List[EscapeResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (
            all(r.passed for r in self.relations)
            and all(r.passed for r in self.invariance)
            and all(e.escapes for e in self.escapes)
        )

    def lines(self) -> List[str]:
        out = []
        for r in self.relations:
            text = r.relation.text or f"[{r.relation.left},{r.relation.right}]"
            if r.passed:
                out.append(f"{text}  PASS (exact)")
            else:
                out.append(f"{text}  FAIL: computed {r.computed}")
        for inv in self.invariance:
            verdict = "PASS (exact)" if inv.passed else "FAIL: not in span"
            out.append(f"[{inv.w},{inv.v}] in span  {verdict}")
        for e in self.escapes:
            verdict = "PASS (not in span)" if e.escapes else "FAIL: in span"
            out.append(f"[{e.a},{e.b}] = {e.computed}  {verdict}")
        return out

    def as_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "relations": [
                {
                    "relation": r.relation.text,
                    "passed": r.passed,
                    "computed": str(r.computed),
                }
                for r in self.relations
            ],
            "invariance": [
                {
                    "pair": [i.w, i.v],
                    "passed": i.passed,
                    "coefficients": None if i.coefficients is None else [str(c) for c in i.coefficients],
                }
                for i in self.invariance
            ],
            "escapes": [
                {"pair": [e.a, e.b], "escapes": e.escapes, "computed": str(e.computed)}
                for e in self.escapes
            ],
        }


def _lookup(fields: Mapping[str, VectorField], name: str) -> VectorField:
    if name not in fields:
        raise FieldSyntaxError(f"relation refers to undefined field '{name}'")
    return fields[name]


def verify_structure(
    relations: Sequence[Union[str, Relation]],
    fields: Mapping[str, VectorField],
    subalgebra: Sequence[str] = (),
    space: Sequence[str] = (),
    escaping: Sequence[Tuple[str, str]] = (),
) -> StructureReport:
    """
    Check each bracket relation exactly; if `subalgebra` and `space` are
    given, also check [W, V] subset of V pair by pair; `escaping` lists
    brackets expected to leave the span of `space`.
    """
    report = StructureReport()
    if not fields:
        return report
    first = next(iter(fields.values()))

    for rel in relations:
        rel = Relation.parse(rel) if isinstance(rel, str) else rel
        computed = bracket(_lookup(fields, rel.left), _lookup(fields, rel.right))
        expected = linear_combination(
            [(q, _lookup(fields, n)) for n, q in rel.expected], first.variables, first.symbols
        )
        result = RelationResult(rel, computed == expected, computed, expected)
        logger.debug("%s -> %s", rel.text, "PASS" if result.passed else f"FAIL ({computed})")
        report.relations.append(result)

    basis = [_lookup(fields, n) for n in space]
    for w in subalgebra:
        for v in space:
            coeffs = in_span(bracket(_lookup(fields, w), _lookup(fields, v)), basis)
            report.invariance.append(InvarianceResult(w, v, None if coeffs is None else tuple(coeffs)))

    for a, b in escaping:
        computed = bracket(_lookup(fields, a), _lookup(fields, b))
        report.escapes.append(EscapeResult(a, b, computed, in_span(computed, basis) is None))

    logger.info("structure check: %s", "PASS" if report.passed else "FAIL")
    return report


# ----------------------------
# Catalog
# ----------------------------
PHASE = ("x", "v")
ERMAKOV_PHASE = ("x", "y", "z", "v_x", "v_y", "v_z")


def milne_pinney_algebra() -> Dict[str, VectorField]:
    return {
        "X1": parse_field("x*d/dv", PHASE),
        "X2": parse_field("v*d/dx + k*x^-3*d/dv", PHASE),
        "X3": parse_field("1/2*x*d/dx - 1/2*v*d/dv", PHASE),
    }


def ermakov_algebra() -> Dict[str, VectorField]:
    return {
        "N1": parse_field("x*d/dv_x + y*d/dv_y + z*d/dv_z", ERMAKOV_PHASE),
        "N2": parse_field("v_x*d/dx + v_y*d/dy + v_z*d/dz + k*x^-3*d/dv_x", ERMAKOV_PHASE),
        "N3": parse_field(
            "1/2*x*d/dx + 1/2*y*d/dy + 1/2*z*d/dz - 1/2*v_x*d/dv_x - 1/2*v_y*d/dv_y - 1/2*v_z*d/dv_z",
            ERMAKOV_PHASE,
        ),
    }


def quasi_lie_space() -> Dict[str, VectorField]:
    fields = {
        "X1": parse_field("v*d/dv", PHASE, ()),
        "X2": parse_field("x*d/dv", PHASE, ()),
        "X3": parse_field("x^-3*d/dv", PHASE, ()),
        "X4": parse_field("v*d/dx", PHASE, ()),
        "X5": parse_field("x*d/dx", PHASE, ()),
    }
    fields["Y1"] = fields["X1"]
    fields["Y2"] = fields["X2"]
    return fields


SL2_RELATIONS = ("[X1,X2] = 2*X3", "[X3,X2] = -X2", "[X3,X1] = X1")
ERMAKOV_RELATIONS = ("[N1,N2] = 2*N3", "[N3,N1] = N1", "[N2,N3] = N2")
SUBALGEBRA_RELATIONS = ("[Y1,Y2] = -Y2",)
QUASI_LIE_TABLE = (
    "[Y1,X3] = -X3",
    "[Y1,X4] = X4",
    "[Y1,X5] = 0",
    "[Y2,X3] = 0",
    "[Y2,X4] = X5 - X1",
    "[Y2,X5] = -X2",
)
QUASI_LIE_W = ("Y1", "Y2")
QUASI_LIE_V = ("X1", "X2", "X3", "X4", "X5")
QUASI_LIE_ESCAPES = (("X3", "X4"),)


def verify_preset(name: str) -> StructureReport:
    if name == "sl2":
        return verify_structure(SL2_RELATIONS, milne_pinney_algebra())
    if name == "ermakov":
        return verify_structure(ERMAKOV_RELATIONS, ermakov_algebra())
    if name == "quasi_lie":
        return verify_structure(
            SUBALGEBRA_RELATIONS + QUASI_LIE_TABLE,
            quasi_lie_space(),
            subalgebra=QUASI_LIE_W,
            space=QUASI_LIE_V,
            escaping=QUASI_LIE_ESCAPES,
        )
    raise FieldSyntaxError(f"unknown algebra preset '{name}' (expected sl2, ermakov or quasi_lie)")
