"""A small arithmetic expression language for scenario files.

Grammar, loosest binding first::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" unary)?          # right associative
    atom    := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"

So ``-x^2`` is ``-(x^2)`` and ``2^3^2`` is ``2^(3^2)``.  Functions are
``sin cos exp abs tanh ln``; ``pi`` is a constant.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

from .errors import BfppcError

FUNCTIONS = ("sin", "cos", "exp", "abs", "tanh", "ln")
CONSTANTS = {"pi": math.pi}
_DEFAULT_VAR = re.compile(r"^(x[1-9][0-9]*|t)$")


class ExpressionSyntaxError(BfppcError):
    def __init__(self, message: str, position: int, text: str = ""):
        super().__init__(f"{message} at position {position}")
        self.position = position
        self.text = text


class EvaluationError(BfppcError, ArithmeticError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionSyntaxError(f"unexpected character {text[start]!r}", start, text)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, accept_name: Callable[[str], bool]):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.accept_name = accept_name

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def next(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message: str, tok=None) -> ExpressionSyntaxError:
        tok = tok or self.peek()
        return ExpressionSyntaxError(message, tok[2], self.text)

    def expect(self, value: str) -> None:
        tok = self.next()
        if tok[1] != value or tok[0] != "op":
            found = tok[1] or "end of input"
            raise self.error(f"expected {value!r}, found {found!r}", tok)

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected {self.peek()[1]!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.next()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.next()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.next()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.next()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        tok = self.next()
        kind, value, pos = tok
        if kind == "num":
            return Num(float(value))
        if kind == "name":
            if value in FUNCTIONS:
                if not (self.peek()[0] == "op" and self.peek()[1] == "("):
                    raise self.error(f"function {value!r} must be called with parentheses")
                self.next()
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.next()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != 1:
                    raise ExpressionSyntaxError(
                        f"arity error: {value} takes 1 argument, got {len(args)}", pos, self.text
                    )
                return Call(value, args[0])
            if value in CONSTANTS:
                return Num(CONSTANTS[value])
            if not self.accept_name(value):
                raise ExpressionSyntaxError(f"unknown identifier {value!r}", pos, self.text)
            return Var(value)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = value or "end of input"
        raise ExpressionSyntaxError(f"unexpected {found!r}", pos, self.text)


class Expression:
    """Parsed expression tree plus evaluation helpers."""

    def __init__(self, tree: Node, text: str = ""):
        self.tree = tree
        self.text = text

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Expression) and self.tree == other.tree

    def __hash__(self) -> int:
        return hash(self.tree)

    def __repr__(self) -> str:
        return f"Expression({pretty(self.tree)!r})"

    def __str__(self) -> str:
        return pretty(self.tree)

    @property
    def variables(self) -> set[str]:
        return set(_variables(self.tree))

    def evaluate(self, env: Mapping[str, float]) -> float:
        names = sorted(self.variables)
        missing = [n for n in names if n not in env]
        if missing:
            raise EvaluationError(f"no value for variable(s) {', '.join(missing)}")
        return self.compile(names)(*[env[n] for n in names])

    def compile(self, names: Sequence[str]) -> Callable[..., float]:
        """Compile to a function taking the values of ``names`` positionally."""
        params = self._params(names)
        return self._build(", ".join(params.values()), "", params)

    def compile_state(self, n: int) -> Callable[[Sequence[float], float], float]:
        """Compile to ``f(x, t)`` with ``x1..xn`` read from the state vector."""
        params = self._params([f"x{i + 1}" for i in range(n)] + ["t"])
        used = [i for i in range(n) if f"x{i + 1}" in self.variables]
        unpack = "".join(f"    _v{i} = x[{i}]\n" for i in used)
        return self._build(f"x, _v{n}=0.0", unpack, params)

    def _params(self, names: Sequence[str]) -> dict[str, str]:
        unknown = self.variables - set(names)
        if unknown:
            raise EvaluationError(f"expression uses unbound variable(s) {sorted(unknown)}")
        return {n: f"_v{i}" for i, n in enumerate(names)}

    def _build(self, signature: str, prologue: str, params: Mapping[str, str]) -> Callable[..., float]:
        body = _source(self.tree, params)
        code = (
            f"def _f({signature}):\n{prologue}"
            f"    try:\n        return float({body})\n"
            f"    except (ValueError, ZeroDivisionError, OverflowError, TypeError) as exc:\n"
            f"        raise _EvaluationError(f'{{exc}} in {{_text}}') from None\n"
        )
        ns = dict(_RUNTIME, _EvaluationError=EvaluationError, _text=self.text or pretty(self.tree))
        exec(code, ns)
        return ns["_f"]


def _ln(v: float) -> float:
    if v <= 0:
        raise ValueError(f"ln of non-positive argument {v!r}")
    return math.log(v)


def _pow(a: float, b: float) -> float:
    return math.pow(a, b)


def _div(a: float, b: float) -> float:
    if b == 0:
        raise ZeroDivisionError("division by zero")
    return a / b


_RUNTIME = {
    "_sin": math.sin,
    "_cos": math.cos,
    "_exp": math.exp,
    "_abs": abs,
    "_tanh": math.tanh,
    "_ln": _ln,
    "_pow": _pow,
    "_div": _div,
    "float": float,
}


def _source(node: Node, params: Mapping[str, str]) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return params[node.name]
    if isinstance(node, Neg):
        return f"(-{_source(node.operand, params)})"
    if isinstance(node, Call):
        return f"_{node.func}({_source(node.arg, params)})"
    left, right = _source(node.left, params), _source(node.right, params)
    if node.op == "^":
        if isinstance(node.right, Num) and node.right.value.is_integer() and abs(node.right.value) <= 16:
            # native power on a float base; same C pow as math.pow, no call overhead
            return f"(float({left}) ** {int(node.right.value)})"
        return f"_pow({left}, {right})"
    if node.op == "/":
        return f"_div({left}, {right})"
    return f"({left} {node.op} {right})"


def _variables(node: Node) -> Iterable[str]:
    if isinstance(node, Var):
        yield node.name
    elif isinstance(node, Neg):
        yield from _variables(node.operand)
    elif isinstance(node, Call):
        yield from _variables(node.arg)
    elif isinstance(node, BinOp):
        yield from _variables(node.left)
        yield from _variables(node.right)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return 5


def pretty(node: Node) -> str:
    """Render with the fewest parentheses that reparse to the same tree."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({pretty(node.arg)})"
    if isinstance(node, Neg):
        inner = pretty(node.operand)
        # operand of unary minus is itself a unary: power or tighter, or another Neg
        if _prec(node.operand) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[node.op]
    left, right = pretty(node.left), pretty(node.right)
    if node.op == "^":
        # base must be an atom; exponent may be any unary
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < _PREC["neg"]:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    # left associative: equal precedence on the right needs parentheses;
    # a Neg on the right of * or / is fine since unary binds tighter
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


def parse_expression(text: str, variables: Iterable[str] | Callable[[str], bool] | None = None) -> Expression:
    """Parse ``text`` into an :class:`Expression`.

    ``variables`` restricts the accepted identifiers; by default ``x1, x2, ...``
    and ``t`` are accepted.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0, text if isinstance(text, str) else "")
    if variables is None:
        accept = lambda name: bool(_DEFAULT_VAR.match(name))  # noqa: E731
    elif callable(variables):
        accept = variables
    else:
        allowed = set(variables)
        accept = allowed.__contains__
    return Expression(_Parser(text, accept).parse(), text)
