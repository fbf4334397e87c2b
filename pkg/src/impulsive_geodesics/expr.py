"""Closed-form expressions in chart coordinates.

The grammar is deliberately small: ``+ - * / ^``, unary minus, the functions
``sin``, ``cos``, ``exp``, numeric literals, the constant ``pi`` and the
coordinate names of the chart.  Expressions are validated on the Python AST
and then handed to sympy, which supplies exact partial derivatives.
"""

from __future__ import annotations

import ast
from functools import cached_property

import numpy as np
import sympy as sp

from .errors import ExpressionError

_FUNCTIONS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp}
_CONSTANTS = {"pi": sp.pi}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.UAdd, ast.USub)


def _check(node, names):
    if isinstance(node, ast.Expression):
        _check(node.body, names)
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, _BINOPS):
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _check(node.left, names)
        _check(node.right, names)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, _UNARY):
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _check(node.operand, names)
    elif isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCTIONS):
            raise ExpressionError("only sin, cos and exp may be called")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        _check(node.args[0], names)
    elif isinstance(node, ast.Name):
        if node.id not in names and node.id not in _CONSTANTS:
            raise ExpressionError(f"unknown name {node.id!r}; expected one of {sorted(names)}")
    elif isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"literal {node.value!r} is not a number")
    else:
        raise ExpressionError(f"syntax {type(node).__name__} not allowed")


def parse(text, names):
    """Parse ``text`` into a sympy expression over the symbols ``names``."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(text)
    if not isinstance(text, str):
        raise ExpressionError(f"expression must be a string, got {type(text).__name__}")
    src = text.replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    _check(tree, set(names))
    symbols = {n: sp.Symbol(n, real=True) for n in names}
    namespace = {**_FUNCTIONS, **_CONSTANTS, **symbols}
    return sp.sympify(src, locals=namespace), [symbols[n] for n in names]


class Expression:
    """A scalar closed-form function of the chart coordinates.

    Calling the object evaluates it at a single point ``x`` (length-n array).
    ``gradient`` and ``hessian`` are exact derivatives obtained from sympy.
    """

    def __init__(self, text, names):
        self.text = str(text)
        self.names = tuple(names)
        self._expr, self._symbols = parse(text, self.names)

    def __reduce__(self):
        return (type(self), (self.text, self.names))

    def __repr__(self):
        return f"Expression({self.text!r}, {self.names!r})"

    @cached_property
    def _f(self):
        return sp.lambdify(self._symbols, self._expr, "math")

    @cached_property
    def _grad(self):
        exprs = [sp.diff(self._expr, s) for s in self._symbols]
        return sp.lambdify(self._symbols, exprs, "math")

    @cached_property
    def _hess(self):
        exprs = [[sp.diff(self._expr, a, b) for b in self._symbols] for a in self._symbols]
        return sp.lambdify(self._symbols, exprs, "math")

    @property
    def is_zero(self):
        return self._expr == 0

    def __call__(self, x):
        return float(self._f(*x))

    def gradient(self, x):
        return np.array(self._grad(*x), dtype=float)

    def hessian(self, x):
        return np.array(self._hess(*x), dtype=float).reshape(len(self.names), len(self.names))
