"""Network description files: YAML with exact rational numbers.

See ``networks/SCHEMA.md`` for the format.  Every problem is reported with
the path of the offending field, e.g. ``amms[1].state.Z``.
"""
from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Mapping

import yaml

from .core import (
    DEFAULT_TOL,
    AmmDef,
    AmmInstance,
    ConstantMean,
    ConstantProduct,
    ExplicitGraph,
    Linear,
    StateVector,
    Tolerances,
    Valuation,
    _as_point,
    manifold_bound,
)
from .errors import AmmError, ConfigError

FAMILIES = ("constant_product", "constant_mean", "linear", "explicit_graph")


@dataclass(frozen=True)
class AmmEntry:
    name: str
    instance: AmmInstance


@dataclass(frozen=True)
class CompositionEntry:
    name: str
    mode: str                      # "seq" or "par"
    amms: tuple[str, str]
    hidden: str | None = None
    hidden_valuation: Mapping[str, Any] | None = None
    t: Any = None


@dataclass(frozen=True)
class NetworkConfig:
    assets: tuple[str, ...]
    amms: dict[str, AmmInstance]
    market_valuation: Valuation | None = None
    tolerances: Tolerances = DEFAULT_TOL
    seed: int | None = None
    compositions: tuple[CompositionEntry, ...] = ()
    source: str = field(default="", compare=False)

    def amm(self, name: str) -> AmmInstance:
        try:
            return self.amms[name]
        except KeyError:
            raise ConfigError(f"no AMM named {name!r}; known: {sorted(self.amms)}") from None


# --------------------------------------------------------------------------
# numbers

def parse_number(value, path: str):
    """Ints and ``"p/q"`` or decimal strings become exact; YAML floats stay floats."""
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if isinstance(value, (int, Fraction)):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ConfigError(f"{path}: number must be finite")
        return value
    if isinstance(value, str):
        try:
            q = Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"{path}: cannot read {value!r} as a number") from None
        return int(q) if q.denominator == 1 else q
    raise ConfigError(f"{path}: expected a number, got {type(value).__name__}")


def parse_positive(value, path: str):
    q = parse_number(value, path)
    if not q > 0:
        raise ConfigError(f"{path}: must be positive, got {value!r}")
    return q


# --------------------------------------------------------------------------
# expressions for explicit graphs

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_FUNCS = {"sqrt": math.sqrt, "exp": math.exp, "log": math.log}


def compile_expression(text: str, names: tuple[str, ...], path: str = "expression") -> Callable:
    """Compile arithmetic in the inputs to ``h(xs)``.

    Allowed: numbers, the input names (asset ids, or ``x1..xk``; plain ``x``
    when there is one input), ``+ - * / **``, and ``sqrt``, ``exp``, ``log``.
    Integer literals stay exact so rational inputs give rational outputs.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"{path}: invalid expression {text!r}: {exc.msg}") from None
    index = {n: i for i, n in enumerate(names)}
    index.update({f"x{i + 1}": i for i in range(len(names))})
    if len(names) == 1:
        index["x"] = 0

    def check(node):
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return
        if isinstance(node, ast.Name):
            if node.id not in index:
                raise ConfigError(f"{path}: unknown name {node.id!r} (inputs: {', '.join(names)})")
            return
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            check(node.left)
            check(node.right)
            return
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            check(node.operand)
            return
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
                and len(node.args) == 1 and not node.keywords:
            check(node.args[0])
            return
        raise ConfigError(f"{path}: unsupported syntax {ast.dump(node)[:40]!r} in {text!r}")

    check(tree)

    def ev(node, xs):
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            return xs[index[node.id]]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left, xs), ev(node.right, xs))
        if isinstance(node, ast.UnaryOp):
            val = ev(node.operand, xs)
            return -val if isinstance(node.op, ast.USub) else val
        return _FUNCS[node.func.id](ev(node.args[0], xs))

    def h(xs):
        try:
            return ev(tree.body, xs)
        except (ZeroDivisionError, ValueError, OverflowError):
            return math.nan

    return h


# --------------------------------------------------------------------------
# schema

def _require(d: Mapping, key: str, path: str):
    if key not in d:
        raise ConfigError(f"{path}.{key}: required field missing")
    return d[key]


def _mapping(value, path: str) -> Mapping:
    if not isinstance(value, Mapping):
        raise ConfigError(f"{path}: expected a mapping, got {type(value).__name__}")
    return value


def _list(value, path: str) -> list:
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
    return value


def _asset_list(value, path: str, declared: tuple[str, ...] | None) -> tuple[str, ...]:
    items = _list(value, path)
    out = []
    for i, a in enumerate(items):
        if not isinstance(a, str) or not a:
            raise ConfigError(f"{path}[{i}]: asset ids are non-empty strings")
        if declared is not None and a not in declared:
            raise ConfigError(f"{path}[{i}]: undeclared asset {a!r}")
        out.append(a)
    if len(set(out)) != len(out):
        raise ConfigError(f"{path}: duplicate asset ids")
    return tuple(out)


def _numbers(value, path: str, n: int, positive: bool = True) -> tuple:
    items = _list(value, path)
    if len(items) != n:
        raise ConfigError(f"{path}: expected {n} entries, got {len(items)}")
    parse = parse_positive if positive else parse_number
    return tuple(parse(q, f"{path}[{i}]") for i, q in enumerate(items))


def _state(value, path: str, assets: tuple[str, ...], declared: tuple[str, ...]) -> tuple:
    if isinstance(value, list):
        return _numbers(value, path, len(assets))
    m = _mapping(value, path)
    for a in m:
        if a not in declared:
            raise ConfigError(f"{path}.{a}: undeclared asset {a!r}")
        if a not in assets:
            raise ConfigError(f"{path}.{a}: asset {a!r} is not traded by this AMM")
    missing = [a for a in assets if a not in m]
    if missing:
        raise ConfigError(f"{path}: missing balances for {missing}")
    return tuple(parse_positive(m[a], f"{path}.{a}") for a in assets)


def build_amm(spec: Mapping, path: str, declared: tuple[str, ...]) -> AmmDef:
    spec = _mapping(spec, path)
    kind = _require(spec, "type", path)
    assets = _asset_list(_require(spec, "assets", path), f"{path}.assets", declared)
    if len(assets) < 2:
        raise ConfigError(f"{path}.assets: an AMM trades at least 2 assets")
    if kind == "constant_product":
        return ConstantProduct(assets, parse_positive(_require(spec, "level", path), f"{path}.level"))
    if kind == "constant_mean":
        w = _numbers(_require(spec, "weights", path), f"{path}.weights", len(assets))
        return ConstantMean(assets, w, parse_positive(_require(spec, "level", path), f"{path}.level"))
    if kind == "linear":
        lam = _numbers(_require(spec, "lam", path), f"{path}.lam", len(assets))
        return Linear(assets, lam, parse_positive(_require(spec, "level", path), f"{path}.level"))
    if kind == "explicit_graph":
        text = _require(spec, "expression", path)
        if not isinstance(text, str):
            raise ConfigError(f"{path}.expression: expected a string")
        h = compile_expression(text, assets[:-1], f"{path}.expression")
        lower = spec.get("lower")
        if lower is not None:
            lower = _numbers(lower, f"{path}.lower", len(assets) - 1, positive=False)
        return ExplicitGraph(assets, h, lower=lower, label=text)
    raise ConfigError(f"{path}.type: unknown AMM type {kind!r}; expected one of {', '.join(FAMILIES)}")


def _valuation(value, path: str, declared: tuple[str, ...]) -> Valuation:
    m = _mapping(value, path)
    for a in m:
        if a not in declared:
            raise ConfigError(f"{path}.{a}: undeclared asset {a!r}")
    missing = [a for a in declared if a not in m]
    if missing:
        raise ConfigError(f"{path}: market valuation must cover every declared asset; missing {missing}")
    w = [parse_positive(m[a], f"{path}.{a}") for a in declared]
    total = sum(w)
    try:
        return Valuation(declared, tuple(q / total for q in w))
    except (ValueError, AmmError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _tolerances(value, path: str) -> Tolerances:
    m = _mapping(value, path)
    known = Tolerances.__dataclass_fields__
    changes = {}
    for k, q in m.items():
        if k not in known:
            raise ConfigError(f"{path}.{k}: unknown tolerance; known: {', '.join(known)}")
        num = parse_positive(q, f"{path}.{k}")
        changes[k] = int(num) if k in ("max_iter", "max_halvings") else float(num)
    return DEFAULT_TOL.replace(**changes)


def _composition(spec, path: str, names: set[str], declared) -> CompositionEntry:
    spec = _mapping(spec, path)
    name = _require(spec, "name", path)
    mode = _require(spec, "mode", path)
    if mode not in ("seq", "par"):
        raise ConfigError(f"{path}.mode: expected 'seq' or 'par', got {mode!r}")
    amms = _list(_require(spec, "amms", path), f"{path}.amms")
    if len(amms) != 2:
        raise ConfigError(f"{path}.amms: composition takes exactly 2 AMMs")
    for i, a in enumerate(amms):
        if a not in names:
            raise ConfigError(f"{path}.amms[{i}]: unknown AMM {a!r}")
    hv = spec.get("hidden_valuation")
    if hv is not None:
        hv = _mapping(hv, f"{path}.hidden_valuation")
        for a in hv:
            if a not in declared:
                raise ConfigError(f"{path}.hidden_valuation.{a}: undeclared asset {a!r}")
        hv = {a: parse_positive(q, f"{path}.hidden_valuation.{a}") for a, q in hv.items()}
    t = spec.get("t")
    if t is not None:
        t = tuple(parse_number(q, f"{path}.t[{i}]") for i, q in enumerate(t)) if isinstance(t, list) \
            else parse_number(t, f"{path}.t")
    return CompositionEntry(name, mode, tuple(amms), spec.get("hidden"), hv, t)


def parse_config(doc: Any, source: str = "<memory>") -> NetworkConfig:
    """Validate a parsed document and build every AMM instance."""
    doc = _mapping(doc, "config") if doc is not None else {}
    unknown = set(doc) - {"assets", "amms", "market_valuation", "tolerances", "seed", "compositions"}
    if unknown:
        raise ConfigError(f"config: unknown top-level field(s) {sorted(unknown)}")
    declared = _asset_list(_require(doc, "assets", "config"), "assets", None)
    tol = _tolerances(doc["tolerances"], "tolerances") if "tolerances" in doc else DEFAULT_TOL
    amms: dict[str, AmmInstance] = {}
    for i, spec in enumerate(_list(_require(doc, "amms", "config"), "amms")):
        path = f"amms[{i}]"
        spec = _mapping(spec, path)
        name = _require(spec, "name", path)
        if not isinstance(name, str) or not name:
            raise ConfigError(f"{path}.name: expected a non-empty string")
        if name in amms:
            raise ConfigError(f"{path}.name: duplicate AMM name {name!r}")
        defn = build_amm(spec, path, declared)
        vals = _state(_require(spec, "state", path), f"{path}.state", defn.assets, declared)
        try:
            x = _as_point(defn, StateVector(defn.assets, vals), tol)
            resid = abs(defn.value(x))
        except AmmError as exc:
            raise ConfigError(f"{path}.state: {exc}") from None
        bound = manifold_bound(defn, x, tol.manifold)
        if resid > bound:
            raise ConfigError(f"{path}.state: initial state is off the manifold, |A(state)| = {resid:.9g}")
        amms[name] = AmmInstance(defn, StateVector(defn.assets, vals), tol)
    mv = _valuation(doc["market_valuation"], "market_valuation", declared) \
        if doc.get("market_valuation") is not None else None
    seed = doc.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ConfigError("seed: expected an integer")
    comps = tuple(_composition(c, f"compositions[{i}]", set(amms), declared)
                  for i, c in enumerate(_list(doc.get("compositions", []), "compositions")))
    return NetworkConfig(declared, amms, mv, tol, seed, comps, source)


def load_config(path: str | Path) -> NetworkConfig:
    """Read and validate a network file.

    Raises:
        ConfigError: unreadable file, YAML syntax error (with line and
            column), or a validation failure naming the field.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read: {exc.strerror}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{path}: parse error{where}: {problem}") from None
    return parse_config(doc, str(path))
