"""
Expression DSL for gains, storage functions, vector fields and densities.

Expressions are parsed with a small LALR grammar into an immutable tree and
evaluated either on floats (raising DomainError) or on numpy arrays (where
domain errors become NaN entries).
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterable, Mapping, Sequence, Tuple, Union

import numpy as np
from lark import Lark, Transformer, v_args
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, UnexpectedToken, VisitError

from .models import ArityError, DomainError, ExprSyntaxError, UnknownIdentifier


GRAMMAR = r"""
    ?start: sum

    ?sum: product
        | sum "+" product   -> add
        | sum "-" product   -> sub

    ?product: unary
        | product "*" unary -> mul
        | product "/" unary -> div

    ?unary: power
        | "-" unary         -> neg
        | "+" unary         -> pos

    ?power: atom
        | atom "^" unary    -> pow

    ?atom: NUMBER           -> number
        | NAME "(" [sum ("," sum)*] ")" -> call
        | NAME              -> var
        | "(" sum ")"

    NUMBER: /(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?/
    NAME: /[A-Za-z_][A-Za-z_0-9]*/

    %ignore /[ \t\r\n]+/
"""


@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    child: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: Tuple["Expr", ...]


Expr = Union[Number, Var, Unary, Binary, Call]
Env = Mapping[str, float]


def _sign(x: float) -> float:
    # sign(0) is 0
    return float((x > 0) - (x < 0))


def _checked_sqrt(x: float, node: "Expr") -> float:
    if x < 0:
        raise DomainError(node, "sqrt of a negative number")
    return math.sqrt(x)


def _checked_ln(x: float, node: "Expr") -> float:
    if x < 0:
        raise DomainError(node, "ln of a negative number")
    if x == 0:
        return -math.inf
    return math.log(x)


def _checked_exp(x: float, node: "Expr") -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


# name -> (arity, scalar implementation taking (args..., node), numpy implementation)
BUILTINS: Dict[str, Tuple[int, Callable, Callable]] = {
    "sin": (1, lambda x, node: math.sin(x), np.sin),
    "cos": (1, lambda x, node: math.cos(x), np.cos),
    "tan": (1, lambda x, node: math.tan(x), np.tan),
    "exp": (1, _checked_exp, np.exp),
    "ln": (1, _checked_ln, np.log),
    "sqrt": (1, _checked_sqrt, np.sqrt),
    "abs": (1, lambda x, node: abs(x), np.abs),
    "tanh": (1, lambda x, node: math.tanh(x), np.tanh),
    "sign": (1, lambda x, node: _sign(x), np.sign),
    "min": (2, lambda a, b, node: min(a, b), np.minimum),
    "max": (2, lambda a, b, node: max(a, b), np.maximum),
}

CONSTANTS: Dict[str, float] = {"pi": math.pi}


@v_args(inline=True)
class _TreeBuilder(Transformer):
    """Turns the lark parse tree into Expr nodes."""

    def number(self, token):
        value = float(token)
        if not math.isfinite(value):
            raise ExprSyntaxError(token.start_pos, f"numeric literal {str(token)!r} is out of range")
        return Number(value)

    def var(self, token):
        name = str(token)
        if name in CONSTANTS:
            return Number(CONSTANTS[name])
        return Var(name)

    def call(self, name, *args):
        return Call(str(name), tuple(arg for arg in args if arg is not None))

    def add(self, lhs, rhs):
        return Binary("+", lhs, rhs)

    def sub(self, lhs, rhs):
        return Binary("-", lhs, rhs)

    def mul(self, lhs, rhs):
        return Binary("*", lhs, rhs)

    def div(self, lhs, rhs):
        return Binary("/", lhs, rhs)

    def pow(self, lhs, rhs):
        return Binary("^", lhs, rhs)

    def neg(self, child):
        return Unary("-", child)

    def pos(self, child):
        return child


_parser = Lark(GRAMMAR, parser="lalr", maybe_placeholders=True)


def _check_names(node: Expr, allowed_vars: FrozenSet[str]) -> None:
    if isinstance(node, Var):
        if node.name not in allowed_vars:
            raise UnknownIdentifier(node.name)
    elif isinstance(node, Unary):
        _check_names(node.child, allowed_vars)
    elif isinstance(node, Binary):
        _check_names(node.lhs, allowed_vars)
        _check_names(node.rhs, allowed_vars)
    elif isinstance(node, Call):
        if node.fn not in BUILTINS:
            raise UnknownIdentifier(node.fn)
        arity = BUILTINS[node.fn][0]
        if len(node.args) != arity:
            raise ArityError(node.fn, arity, len(node.args))
        for arg in node.args:
            _check_names(arg, allowed_vars)


def parse(text: str, allowed_vars: Iterable[str]) -> Expr:
    """
    Parse an expression over a fixed set of variable names.

    Args:
        text: Expression source, e.g. ``"s + 0.1*sin(pi*s)"``
        allowed_vars: Variable names the expression may use

    Returns:
        Expr: Immutable expression tree

    Raises:
        ExprSyntaxError: Malformed input (carries the character position)
        UnknownIdentifier: A name outside ``allowed_vars`` and the builtins
        ArityError: A builtin called with the wrong number of arguments

    Examples:
        >>> parse("s", {"s"})
        Var(name='s')
        >>> parse("2^3^2", {"s"})  # right-associative
        Binary(op='^', lhs=Number(value=2.0), rhs=Binary(op='^', lhs=Number(value=3.0), rhs=Number(value=2.0)))
    """
    allowed = frozenset(allowed_vars)
    if not allowed:
        raise ValueError("allowed_vars cannot be empty")
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError(0, "empty expression")
    try:
        tree = _parser.parse(text)
    except UnexpectedCharacters as e:
        raise ExprSyntaxError(e.pos_in_stream, f"unexpected character {text[e.pos_in_stream]!r}")
    except UnexpectedEOF:
        raise ExprSyntaxError(len(text), "unexpected end of input")
    except UnexpectedToken as e:
        if e.token.type == "$END":
            raise ExprSyntaxError(len(text), "unexpected end of input")
        raise ExprSyntaxError(e.token.start_pos, f"unexpected token {str(e.token)!r}")
    except UnexpectedInput as e:
        raise ExprSyntaxError(getattr(e, "pos_in_stream", None), str(e))
    try:
        node = _TreeBuilder().transform(tree)
    except VisitError as e:
        if isinstance(e.orig_exc, ExprSyntaxError):
            raise e.orig_exc from None
        raise
    _check_names(node, allowed)
    return node


def evaluate(e: Expr, env: Env) -> float:
    """
    Evaluate an expression in double precision.

    Raises:
        DomainError: ln/sqrt of a negative argument or division by exact zero
        KeyError: ``env`` is missing a variable of ``e``
    """
    if isinstance(e, Number):
        return e.value
    if isinstance(e, Var):
        return float(env[e.name])
    if isinstance(e, Unary):
        return -evaluate(e.child, env)
    if isinstance(e, Binary):
        a = evaluate(e.lhs, env)
        b = evaluate(e.rhs, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0:
                raise DomainError(e, "division by zero")
            return a / b
        try:
            return math.pow(a, b)
        except OverflowError:
            return math.inf
        except (ValueError, ZeroDivisionError):
            raise DomainError(e, "invalid power")
    if isinstance(e, Call):
        impl = BUILTINS[e.fn][1]
        return float(impl(*(evaluate(arg, env) for arg in e.args), e))
    raise TypeError(f"Not an expression node: {e!r}")


def evaluate_array(e: Expr, env: Mapping[str, Union[float, np.ndarray]]) -> np.ndarray:
    """
    Vectorised evaluation over numpy arrays.

    Points where the scalar evaluator would raise DomainError come back as NaN.
    """
    with np.errstate(all="ignore"):
        return np.asarray(_evaluate_array(e, env), dtype=float)


def _evaluate_array(e: Expr, env):
    if isinstance(e, Number):
        return np.float64(e.value)
    if isinstance(e, Var):
        return np.asarray(env[e.name], dtype=float)
    if isinstance(e, Unary):
        return -_evaluate_array(e.child, env)
    if isinstance(e, Binary):
        a = _evaluate_array(e.lhs, env)
        b = _evaluate_array(e.rhs, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return np.where(b == 0, np.nan, a / np.where(b == 0, 1.0, b))
        return np.where((a == 0) & (b < 0), np.nan, np.power(a, b))
    if isinstance(e, Call):
        impl = BUILTINS[e.fn][2]
        return impl(*(_evaluate_array(arg, env) for arg in e.args))
    raise TypeError(f"Not an expression node: {e!r}")


def evaluate_vector(exprs: Sequence[Expr], env: Mapping[str, Union[float, np.ndarray]], size: int) -> np.ndarray:
    """Evaluate several expressions on a batch; returns shape (size, len(exprs))."""
    out = np.empty((size, len(exprs)))
    for j, e in enumerate(exprs):
        out[:, j] = evaluate_array(e, env)
    return out


def compile_vector(exprs: Sequence[Expr], names: Sequence[str]) -> Callable[[np.ndarray], np.ndarray]:
    """
    Bind a list of expressions to a positional variable order.

    The returned function accepts a (len(names),) vector or an (N, len(names))
    batch and returns (len(exprs),) or (N, len(exprs)).
    """
    exprs = tuple(exprs)
    names = tuple(names)

    def fn(values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        single = values.ndim == 1
        batch = np.atleast_2d(values)
        env = {name: batch[:, i] for i, name in enumerate(names)}
        out = evaluate_vector(exprs, env, batch.shape[0])
        return out[0] if single else out

    return fn


def variables(e: Expr) -> FrozenSet[str]:
    """Names of the variables an expression reads."""
    if isinstance(e, Var):
        return frozenset({e.name})
    if isinstance(e, Unary):
        return variables(e.child)
    if isinstance(e, Binary):
        return variables(e.lhs) | variables(e.rhs)
    if isinstance(e, Call):
        return frozenset().union(*(variables(arg) for arg in e.args))
    return frozenset()


def substitute(e: Expr, name: str, replacement: Expr) -> Expr:
    """Replace every occurrence of a variable with another expression."""
    if isinstance(e, Var):
        return replacement if e.name == name else e
    if isinstance(e, Unary):
        return Unary(e.op, substitute(e.child, name, replacement))
    if isinstance(e, Binary):
        return Binary(e.op, substitute(e.lhs, name, replacement), substitute(e.rhs, name, replacement))
    if isinstance(e, Call):
        return Call(e.fn, tuple(substitute(arg, name, replacement) for arg in e.args))
    return e


def to_string(e: Expr) -> str:
    """Fully parenthesised source text that parses back to an equivalent tree."""
    if isinstance(e, Number):
        text = repr(e.value)
        return f"({text})" if e.value < 0 else text
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        return f"(-{to_string(e.child)})"
    if isinstance(e, Binary):
        return f"({to_string(e.lhs)} {e.op} {to_string(e.rhs)})"
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(to_string(arg) for arg in e.args)})"
    raise TypeError(f"Not an expression node: {e!r}")
