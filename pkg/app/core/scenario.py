"""
Scenario files: sectioned key = value text.

    [system]    name = chini | walter | colegrave_abdalla | caldirola_kanai | variable_mass
                       | milne_pinney | damped | custom, plus its parameters
    [time]      t0, t1, step
    [action]    name = integrate | reduce | reparametrize | superpose
                       | verify | algebra-check, plus its parameters
    [output]    path, precision, diagnostics
    [fields]    NAME = "vector field"   (algebra-check only)

Expression values may be quoted.
"""
from __future__ import annotations

import configparser
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from app.core.errors import ConfigError
from app.core.expr import Expr, as_expr
from app.core.reduce import NAMED_SYSTEMS, SecondOrderSystem, damped_system, named_system

ACTIONS = ("integrate", "reduce", "reparametrize", "superpose", "verify", "algebra-check")

ActionName = Literal["integrate", "reduce", "reparametrize", "superpose", "verify", "algebra-check"]


def strip_quotes(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in ("'", '"'):
        return value[1:-1].strip()
    return value


def split_list(value: Optional[str]) -> List[str]:
    """Items separated by ';' or newlines."""
    if not value:
        return []
    items = []
    for line in value.replace(";", "\n").splitlines():
        line = strip_quotes(line)
        if line:
            items.append(line)
    return items


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SystemSpec(_Section):
    name: str = "custom"
    a: Optional[str] = None
    b: Optional[str] = None
    c: Optional[str] = None
    p: Optional[str] = None
    q: Optional[str] = None
    k: Optional[str] = None
    gamma: Optional[str] = None
    gamma0: Optional[float] = None
    omega: Optional[str] = None
    omega_squared: Optional[str] = None
    f: Optional[str] = None
    k0: Optional[float] = None

    @field_validator("name")
    @classmethod
    def _known_name(cls, v: str) -> str:
        v = v.strip().lower().replace("-", "_")
        if v not in NAMED_SYSTEMS + ("damped", "custom"):
            raise ValueError(f"unknown system '{v}'")
        return v

    @model_validator(mode="after")
    def _required(self) -> "SystemSpec":
        if self.name == "custom" and None in (self.a, self.b, self.c):
            raise ValueError("a custom system needs a, b and c")
        if self.name == "damped" and None in (self.gamma, self.omega, self.k):
            raise ValueError("a damped system needs gamma, omega and k")
        return self

    def build(self) -> SecondOrderSystem:
        if self.name == "custom":
            return SecondOrderSystem.from_text(self.a, self.b, self.c, "custom")
        if self.name == "damped":
            return damped_system(self.gamma, self.omega, self.k)
        params = {
            key: getattr(self, key)
            for key in ("p", "q", "k", "gamma0", "omega", "omega_squared", "k0", "f")
            if getattr(self, key) is not None
        }
        return named_system(self.name, **params)

    def omega_expr(self) -> Optional[Expr]:
        if self.omega is not None:
            return as_expr(self.omega)
        return None

    def k_value(self) -> Optional[float]:
        """Constant coupling, when k is given as a constant expression."""
        if self.k is None:
            return None
        e = as_expr(self.k)
        if not e.is_constant():
            return None
        return e.eval(0.0)


class TimeWindow(_Section):
    t0: float = 0.0
    t1: Optional[float] = None
    step: Optional[float] = None

    @model_validator(mode="after")
    def _window(self) -> "TimeWindow":
        if self.t1 is not None and not self.t1 > self.t0:
            raise ValueError(f"t1 must exceed t0 (t0={self.t0}, t1={self.t1})")
        if self.step is not None and not self.step > 0.0:
            raise ValueError("step must be positive")
        return self


class ActionSpec(_Section):
    name: ActionName
    x0: Optional[float] = None
    v0: Optional[float] = None
    k: Optional[float] = None
    I1: Optional[float] = None
    I2: Optional[float] = None
    sign: int = 1
    alpha: Optional[str] = None
    beta: Optional[str] = None
    method: Literal["reducibility", "damping", "gauge"] = "reducibility"
    zeta0: float = 1.0
    points: int = 1001
    algebra: Optional[Literal["sl2", "ermakov", "quasi_lie"]] = None
    relations: Optional[str] = None
    subalgebra: Optional[str] = None
    space: Optional[str] = None
    escapes: Optional[str] = None
    symbols: str = "k"

    @field_validator("sign", mode="before")
    @classmethod
    def _sign(cls, v: Any) -> int:
        text = str(v).strip().lower()
        if text in ("+", "+1", "1", "plus"):
            return 1
        if text in ("-", "-1", "minus"):
            return -1
        raise ValueError(f"sign must be + or -, got {v!r}")

    def relation_list(self) -> List[str]:
        return split_list(self.relations)

    def name_list(self, value: Optional[str]) -> List[str]:
        if not value:
            return []
        return [n.strip() for n in value.replace(";", ",").split(",") if n.strip()]

    def escape_pairs(self) -> List[Tuple[str, str]]:
        pairs = []
        for item in split_list(self.escapes):
            names = [n.strip() for n in item.strip("[] ").split(",")]
            if len(names) != 2 or not all(names):
                raise ConfigError(f"escape entries look like '[X3,X4]', got '{item}'")
            pairs.append((names[0], names[1]))
        return pairs


class OutputSpec(_Section):
    path: Optional[str] = None
    precision: Optional[int] = None
    diagnostics: bool = False

    @field_validator("precision")
    @classmethod
    def _precision(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and not 1 <= v <= 17:
            raise ValueError("precision must lie in [1, 17]")
        return v


class Scenario(_Section):
    system: Optional[SystemSpec] = None
    time: TimeWindow = TimeWindow()
    action: ActionSpec
    output: OutputSpec = OutputSpec()
    fields: Dict[str, str] = {}
    source: str = ""

    @model_validator(mode="after")
    def _action_requirements(self) -> "Scenario":
        act = self.action
        name = act.name
        needs_system = name in ("integrate", "reduce", "reparametrize", "superpose")
        if needs_system and self.system is None:
            raise ValueError(f"action '{name}' needs a [system] section")
        if needs_system and self.time.t1 is None:
            raise ValueError(f"action '{name}' needs t1 in [time]")
        if name == "reduce" and act.method == "gauge" and act.alpha is None:
            raise ValueError("gauge transform needs alpha")
        if name in ("integrate", "reparametrize") or (name == "reduce" and act.method == "damping"):
            if act.x0 is None or act.v0 is None:
                raise ValueError(f"action '{name}' needs x0 and v0")
        if name == "reparametrize" and act.alpha is None:
            raise ValueError("reparametrize needs alpha (an expression or 'velocity_killing')")
        if name == "superpose":
            have_consts = act.I1 is not None and act.I2 is not None
            have_state = act.x0 is not None and act.v0 is not None
            if not (have_consts or have_state):
                raise ValueError("superpose needs I1 and I2, or x0 and v0")
        if name == "verify" and act.algebra is None:
            raise ValueError("verify needs algebra = sl2 | ermakov | quasi_lie")
        if name == "algebra-check":
            if not self.fields:
                raise ValueError("algebra-check needs a [fields] section")
            if not act.relations and not act.space:
                raise ValueError("algebra-check needs relations or a subalgebra/space pair")
        return self


_SECTIONS = ("system", "time", "action", "output", "fields")


def _action_key(key: str) -> str:
    key = key.strip().lower()
    return key.upper() if key in ("i1", "i2") else key


def parse_scenario(text: str, source: str = "") -> Scenario:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source or "<scenario>")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse scenario {source or ''}: {exc}".strip()) from None

    unknown = [s for s in parser.sections() if s.lower() not in _SECTIONS]
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")

    data: Dict[str, Any] = {"source": source}
    for section in parser.sections():
        key = section.lower()
        items = {k: strip_quotes(v) for k, v in parser.items(section)}
        if key in ("fields",):
            data[key] = items
        elif key == "action":
            data[key] = {_action_key(k): v for k, v in items.items()}
        else:
            data[key] = {k.strip().lower(): v for k, v in items.items()}

    if "action" not in data:
        raise ConfigError("scenario needs an [action] section")
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(f"invalid scenario {source}: {problems}".replace("  ", " ")) from None
