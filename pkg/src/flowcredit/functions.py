"""Node functions: a small expression language, linear forms, lookup tables
and black-box external models.

Every function is bound to an ordered tuple of parameter names (the node's
parents) and is evaluated positionally. Booleans are the reals 0.0 and 1.0;
categorical values are plain strings.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

from .errors import (
    ArityMismatch,
    DomainError,
    ExpressionSyntaxError,
    NumericError,
    SchemaError,
    UnboundVariable,
)

Value = Any  # float or str

# --------------------------------------------------------------------------
# expression AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Var:
    name: str
    index: int


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "not"
    operand: Any


@dataclass(frozen=True)
class Binary:
    op: str
    left: Any
    right: Any


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


FUNCTIONS = {"min": (1, None), "max": (1, None), "abs": (1, 1), "exp": (1, 1),
             "log": (1, 1), "if": (3, 3)}
KEYWORDS = {"and", "or", "not"}
COMPARISONS = {"<", "<=", "==", "!=", ">=", ">"}

_PREC = {"or": 1, "and": 2, "not": 3, **{c: 4 for c in COMPARISONS},
         "+": 5, "-": 5, "*": 6, "/": 6, "neg": 7}
_ATOM = 8

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<str>'[^']*'|"[^"]*")
  | (?P<op><=|>=|==|!=|[-+*/<>(),])
    """,
    re.VERBOSE,
)


def _tokenize(text):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            tok = m.group()
            if kind == "ident" and tok in KEYWORDS:
                kind = "op"
            tokens.append((kind, tok, pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, variables):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.vars = {name: k for k, name in enumerate(variables)}

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, tok, what=None):
        kind, val, pos = tok
        if what is None:
            what = "unexpected end of input" if kind == "eof" else f"unexpected token {val!r}"
        raise ExpressionSyntaxError(what, pos, self.text)

    def expect(self, val):
        tok = self.take()
        if tok[0] != "op" or tok[1] != val:
            self.fail(tok, f"expected {val!r}")
        return tok

    def at(self, *vals):
        kind, val, _ = self.peek()
        return kind == "op" and val in vals

    def parse(self):
        node = self.or_()
        if self.peek()[0] != "eof":
            self.fail(self.peek())
        return node

    def or_(self):
        node = self.and_()
        while self.at("or"):
            self.take()
            node = Binary("or", node, self.and_())
        return node

    def and_(self):
        node = self.not_()
        while self.at("and"):
            self.take()
            node = Binary("and", node, self.not_())
        return node

    def not_(self):
        if self.at("not"):
            self.take()
            return Unary("not", self.not_())
        return self.comparison()

    def comparison(self):
        node = self.additive()
        if self.at(*COMPARISONS):
            op = self.take()[1]
            node = Binary(op, node, self.additive())
            if self.at(*COMPARISONS):
                self.fail(self.peek(), "comparisons cannot be chained")
        return node

    def additive(self):
        node = self.multiplicative()
        while self.at("+", "-"):
            op = self.take()[1]
            node = Binary(op, node, self.multiplicative())
        return node

    def multiplicative(self):
        node = self.unary()
        while self.at("*", "/"):
            op = self.take()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        if self.at("-"):
            self.take()
            return Unary("-", self.unary())
        return self.primary()

    def primary(self):
        tok = self.take()
        kind, val, pos = tok
        if kind == "num":
            return Num(float(val))
        if kind == "str":
            return Str(val[1:-1])
        if kind == "op" and val == "(":
            node = self.or_()
            self.expect(")")
            return node
        if kind == "ident":
            if self.at("("):
                return self.call(val, pos)
            if val not in self.vars:
                raise UnboundVariable(val)
            return Var(val, self.vars[val])
        self.fail(tok)

    def call(self, name, pos):
        if name not in FUNCTIONS:
            raise ExpressionSyntaxError(f"unknown function {name!r}", pos, self.text)
        self.expect("(")
        args = [self.or_()]
        while self.at(","):
            self.take()
            args.append(self.or_())
        self.expect(")")
        lo, hi = FUNCTIONS[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            raise ExpressionSyntaxError(
                f"{name}() takes {lo if lo == hi else f'at least {lo}'} argument(s)", pos, self.text)
        return Call(name, tuple(args))


def _prec(node):
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary):
        return _PREC["not"] if node.op == "not" else _PREC["neg"]
    if isinstance(node, Num) and math.copysign(1.0, node.value) < 0:
        return _PREC["neg"]
    return _ATOM


def to_source(node) -> str:
    """Render an AST back to expression text using minimal parentheses."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Str):
        quote = '"' if "'" in node.value else "'"
        return f"{quote}{node.value}{quote}"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    if isinstance(node, Unary):
        inner = to_source(node.operand)
        if _prec(node.operand) < _prec(node):
            inner = f"({inner})"
        return f"not {inner}" if node.op == "not" else f"-{inner}"
    p = _PREC[node.op]
    left, right = to_source(node.left), to_source(node.right)
    left_p = _prec(node.left)
    # comparisons do not chain, so an equal-precedence left operand needs parens too
    if left_p < p or (p == 4 and left_p == 4):
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


def free_variables(node) -> set:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Unary):
        return free_variables(node.operand)
    if isinstance(node, Binary):
        return free_variables(node.left) | free_variables(node.right)
    if isinstance(node, Call):
        out = set()
        for a in node.args:
            out |= free_variables(a)
        return out
    return set()


# --------------------------------------------------------------------------
# compilation to closures


def _num(x):
    if isinstance(x, str):
        raise DomainError(f"categorical value {x!r} used in arithmetic")
    return x


def _truth(x):
    return _num(x) != 0


def _div(a, b):
    a, b = _num(a), _num(b)
    if b == 0:
        raise NumericError("division by zero")
    return a / b


def _log(a):
    a = _num(a)
    if a <= 0:
        raise NumericError(f"log of non-positive value {a!r}")
    return math.log(a)


def _exp(a):
    try:
        return math.exp(_num(a))
    except OverflowError as exc:
        raise NumericError(f"exp overflow for {a!r}") from exc


def _eq(a, b):
    if isinstance(a, str) != isinstance(b, str):
        raise DomainError(f"cannot compare categorical and numeric values ({a!r}, {b!r})")
    return a == b


def _order(op):
    cmp = {"<": lambda a, b: a < b, "<=": lambda a, b: a <= b,
           ">": lambda a, b: a > b, ">=": lambda a, b: a >= b}[op]

    def f(a, b):
        return 1.0 if cmp(_num(a), _num(b)) else 0.0
    return f


_BINARY = {
    "+": lambda a, b: _num(a) + _num(b),
    "-": lambda a, b: _num(a) - _num(b),
    "*": lambda a, b: _num(a) * _num(b),
    "/": _div,
    "==": lambda a, b: 1.0 if _eq(a, b) else 0.0,
    "!=": lambda a, b: 0.0 if _eq(a, b) else 1.0,
    "and": lambda a, b: 1.0 if _truth(a) and _truth(b) else 0.0,
    "or": lambda a, b: 1.0 if _truth(a) or _truth(b) else 0.0,
    **{op: _order(op) for op in ("<", "<=", ">", ">=")},
}


def compile_ast(node) -> Callable[[Sequence[Value]], Value]:
    """Turn an AST into a closure over a positional argument sequence."""
    if isinstance(node, Num):
        v = node.value
        return lambda args: v
    if isinstance(node, Str):
        s = node.value
        return lambda args: s
    if isinstance(node, Var):
        k = node.index
        return lambda args: args[k]
    if isinstance(node, Unary):
        f = compile_ast(node.operand)
        if node.op == "-":
            return lambda args: -_num(f(args))
        return lambda args: 0.0 if _truth(f(args)) else 1.0
    if isinstance(node, Binary):
        op = _BINARY[node.op]
        lf, rf = compile_ast(node.left), compile_ast(node.right)
        return lambda args: op(lf(args), rf(args))
    fs = [compile_ast(a) for a in node.args]
    name = node.name
    if name == "if":
        c, a, b = fs
        return lambda args: a(args) if _truth(c(args)) else b(args)
    if name == "abs":
        (a,) = fs
        return lambda args: abs(_num(a(args)))
    if name == "exp":
        (a,) = fs
        return lambda args: _exp(a(args))
    if name == "log":
        (a,) = fs
        return lambda args: _log(a(args))
    agg = min if name == "min" else max
    return lambda args: float(agg(_num(f(args)) for f in fs))


# --------------------------------------------------------------------------
# function specs


class FunctionSpec:
    """A node's computation, bound to its ordered parameter names."""

    variant = "abstract"
    params: tuple

    @property
    def arity(self) -> int:
        return len(self.params)

    def evaluate(self, args: Sequence[Value]) -> Value:
        raise NotImplementedError

    def reorder(self, params) -> "FunctionSpec":
        """Same function with its parameters listed in the order ``params``."""
        raise NotImplementedError

    def _permutation(self, params):
        params = tuple(params)
        if sorted(params) != sorted(self.params):
            raise ArityMismatch(self.arity, len(params), "reorder must permute the parameters")
        return params, [self.params.index(p) for p in params]

    def __call__(self, *args):
        return evaluate_function(self, args)


@dataclass(frozen=True, eq=False)
class Expression(FunctionSpec):
    params: tuple
    ast: Any
    variant = "expr"
    _fn: Callable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        unknown = free_variables(self.ast) - set(self.params)
        if unknown:
            raise UnboundVariable(sorted(unknown)[0])
        object.__setattr__(self, "_fn", compile_ast(self.ast))

    def __getstate__(self):
        return {"params": self.params, "ast": self.ast}

    def __setstate__(self, state):
        object.__setattr__(self, "params", state["params"])
        object.__setattr__(self, "ast", state["ast"])
        object.__setattr__(self, "_fn", compile_ast(state["ast"]))

    def __eq__(self, other):
        return isinstance(other, Expression) and (self.params, self.ast) == (other.params, other.ast)

    def __hash__(self):
        return hash((self.params, self.ast))

    @property
    def text(self) -> str:
        return to_source(self.ast)

    def evaluate(self, args):
        return self._fn(args)

    def reorder(self, params):
        params, _ = self._permutation(params)
        return Expression(params, _reindex(self.ast, {n: i for i, n in enumerate(params)}))


def _reindex(node, index):
    if isinstance(node, Var):
        return Var(node.name, index[node.name])
    if isinstance(node, Unary):
        return Unary(node.op, _reindex(node.operand, index))
    if isinstance(node, Binary):
        return Binary(node.op, _reindex(node.left, index), _reindex(node.right, index))
    if isinstance(node, Call):
        return Call(node.name, tuple(_reindex(a, index) for a in node.args))
    return node


@dataclass(frozen=True)
class Linear(FunctionSpec):
    params: tuple
    weights: tuple
    bias: float = 0.0
    variant = "linear"

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "bias", float(self.bias))
        if len(self.weights) != len(self.params):
            raise ArityMismatch(len(self.params), len(self.weights), "linear weights")

    def evaluate(self, args):
        total = self.bias
        for w, x in zip(self.weights, args):
            total += w * _num(x)
        return total

    def reorder(self, params):
        params, perm = self._permutation(params)
        return Linear(params, [self.weights[k] for k in perm], self.bias)

    def weight_of(self, name) -> float:
        return self.weights[self.params.index(name)] if name in self.params else 0.0

    def as_expression(self) -> Expression:
        terms = None
        for k, (w, name) in enumerate(zip(self.weights, self.params)):
            term = Binary("*", Num(w), Var(name, k))
            terms = term if terms is None else Binary("+", terms, term)
        ast = Binary("+", terms, Num(self.bias)) if terms is not None else Num(self.bias)
        return Expression(self.params, ast)


def _key(values):
    return tuple(float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v
                 for v in values)


@dataclass(frozen=True)
class Table(FunctionSpec):
    """Lookup table from argument tuples to values."""

    params: tuple
    entries: Mapping
    default: Any = None
    domains: tuple = None  # per parameter: tuple of allowed values, or None
    variant = "table"

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        entries = {}
        for k, v in dict(self.entries).items():
            key = _key(k if isinstance(k, tuple) else (k,))
            if len(key) != len(self.params):
                raise ArityMismatch(len(self.params), len(key), f"table key {key!r}")
            entries[key] = v
        object.__setattr__(self, "entries", entries)
        if self.domains is not None:
            doms = tuple(None if d is None else tuple(d) for d in self.domains)
            object.__setattr__(self, "domains", doms)
            for key in entries:
                self._check_domains(key)

    def __hash__(self):
        return hash((self.params, tuple(sorted(map(repr, self.entries.items())))))

    def _check_domains(self, key):
        if self.domains is None:
            return
        for name, v, dom in zip(self.params, key, self.domains):
            if dom is not None and v not in dom:
                raise DomainError(f"value {v!r} for {name!r} is outside its domain {list(dom)}")

    def evaluate(self, args):
        key = _key(args)
        self._check_domains(key)
        try:
            return self.entries[key]
        except KeyError:
            if self.default is None:
                raise DomainError(f"no table entry for {key!r} and no default") from None
            return self.default

    def reorder(self, params):
        params, perm = self._permutation(params)
        entries = {tuple(k[j] for j in perm): v for k, v in self.entries.items()}
        domains = None if self.domains is None else tuple(self.domains[j] for j in perm)
        return Table(params, entries, self.default, domains)


def parse_expression(text: str, variables: Sequence[str]) -> Expression:
    """Parse ``text`` into an Expression bound to ``variables`` (in order)."""
    ast = _Parser(text, list(variables)).parse()
    return Expression(tuple(variables), ast)


def evaluate_function(fn: FunctionSpec, args: Sequence[Value]) -> Value:
    if len(args) != fn.arity:
        raise ArityMismatch(fn.arity, len(args), fn.variant)
    try:
        return fn.evaluate(tuple(args))
    except (ZeroDivisionError, OverflowError) as exc:
        raise NumericError(str(exc)) from exc


# --------------------------------------------------------------------------
# documents


def function_from_doc(doc: Mapping, params: Sequence[str], domains=None) -> FunctionSpec:
    """Build a FunctionSpec from its JSON object form."""
    from .external import External
    params = tuple(params)
    kind = doc.get("type")
    if kind == "expr":
        return parse_expression(doc["expr"], params)
    if kind == "linear":
        return Linear(params, doc["weights"], doc.get("bias", 0.0))
    if kind == "table":
        entries = {tuple(row["key"]): row["value"] for row in doc["table"]}
        return Table(params, entries, doc.get("default"), domains)
    if kind == "external":
        return External(params, tuple(doc["command"]), doc.get("protocol", "jsonl-v1"),
                        float(doc.get("timeout", 10.0)))
    from .synthetic import function_from_noise_doc
    fn = function_from_noise_doc(doc, params, domains)
    if fn is None:
        raise SchemaError(f"unknown function type {kind!r}")
    return fn


def function_to_doc(fn: FunctionSpec) -> dict:
    if isinstance(fn, Expression):
        return {"type": "expr", "expr": fn.text}
    if isinstance(fn, Linear):
        return {"type": "linear", "weights": list(fn.weights), "bias": fn.bias}
    if isinstance(fn, Table):
        rows = [{"key": list(k), "value": v} for k, v in fn.entries.items()]
        out = {"type": "table", "table": rows}
        if fn.default is not None:
            out["default"] = fn.default
        return out
    to_doc = getattr(fn, "to_doc", None)
    if to_doc is None:
        raise SchemaError(f"{type(fn).__name__} has no document form")
    return to_doc()
