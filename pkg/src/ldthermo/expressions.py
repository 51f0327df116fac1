"""
Safe arithmetic expressions for user-defined drift and diffusion fields.

Grammar: numbers, variables ``x1..xn`` and named parameters, binary ``+ - * / ^``,
unary ``-``/``+``, parentheses, and the functions ``exp``, ``sin``, ``cos``.
Parsing goes through :mod:`ast` after mapping ``^`` to ``**``; any node outside
the whitelist is rejected, so nothing is ever passed to ``eval``.
"""
from __future__ import annotations

import ast
import operator
import re

import numpy as np

from .errors import ExpressionError

__all__ = ["Expression", "compile_expression"]

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"exp": np.exp, "sin": np.sin, "cos": np.cos}
_VAR = re.compile(r"^x([1-9][0-9]*)$")


class Expression:
    """A compiled expression; call it with points shaped ``(..., dim)``."""

    def __init__(self, source: str, dim: int, params: dict | None = None):
        self.source = str(source)
        self.dim = int(dim)
        self.params = {k: float(v) for k, v in (params or {}).items()}
        text = self.source.replace("^", "**")
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse expression {self.source!r}: {exc.msg}") from exc
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"operator not allowed in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNARY:
                raise ExpressionError(f"unary operator not allowed in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExpressionError(f"bad constant {node.value!r} in {self.source!r}")
        elif isinstance(node, ast.Name):
            m = _VAR.match(node.id)
            if m:
                if int(m.group(1)) > self.dim:
                    raise ExpressionError(f"{node.id} out of range for dimension {self.dim}")
            elif node.id not in self.params:
                raise ExpressionError(f"unknown name {node.id!r} in {self.source!r}")
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ExpressionError(f"only exp/sin/cos may be called in {self.source!r}")
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"{node.func.id} takes exactly one argument")
            self._check(node.args[0])
        else:
            raise ExpressionError(f"unsupported syntax {type(node).__name__} in {self.source!r}")

    def _eval(self, node, x):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, x), self._eval(node.right, x))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, x))
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            m = _VAR.match(node.id)
            if m:
                return x[..., int(m.group(1)) - 1]
            return self.params[node.id]
        # ast.Call, already whitelisted
        return _FUNCS[node.func.id](self._eval(node.args[0], x))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self._eval(self._tree, x)
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()

    def __repr__(self):
        return f"Expression({self.source!r}, dim={self.dim})"


def compile_expression(source: str, dim: int, params: dict | None = None) -> Expression:
    return Expression(source, dim, params)
