"""Small arithmetic expressions over ``(x, t)`` used in scenario documents.

Expressions are parsed with :mod:`ast` and checked against a whitelist, then
evaluated with numpy so they broadcast over grids.  ``^`` means power.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field

import numpy as np

_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_VARIABLES = ("x", "t")
_CONSTANTS = ("pi", "T", "L0")

_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARYOPS = (ast.UAdd, ast.USub)


class ExpressionError(ValueError):
    pass


def _check(node: ast.AST, source: str) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, source)
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, _BINOPS):
            raise ExpressionError(f"operator not allowed in {source!r}")
        _check(node.left, source)
        _check(node.right, source)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, _UNARYOPS):
            raise ExpressionError(f"operator not allowed in {source!r}")
        _check(node.operand, source)
    elif isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCTIONS):
            raise ExpressionError(f"unknown function in {source!r}")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"functions take one argument in {source!r}")
        _check(node.args[0], source)
    elif isinstance(node, ast.Name):
        if node.id not in _VARIABLES + _CONSTANTS:
            raise ExpressionError(f"unknown name {node.id!r} in {source!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ExpressionError(f"bad literal in {source!r}")
    else:
        raise ExpressionError(f"unsupported syntax in {source!r}")


@dataclass(frozen=True)
class Expression:
    """A parsed expression; call it with arrays ``x`` and ``t``."""

    source: str
    _code: object = field(repr=False, compare=False, default=None)

    @classmethod
    def parse(cls, source: str) -> "Expression":
        text = source.strip()
        if not text:
            raise ExpressionError("empty expression")
        try:
            tree = ast.parse(text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        _check(tree, source)
        return cls(text, compile(tree, "<expr>", "eval"))

    @classmethod
    def constant(cls, value: float) -> "Expression":
        return cls.parse(repr(float(value)))

    def __call__(self, x, t=0.0, *, T: float = 1.0, L0: float = 1.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        scope = {"x": x, "t": t, "pi": np.pi, "T": float(T), "L0": float(L0), **_FUNCTIONS}
        value = eval(self._code, {"__builtins__": {}}, scope)  # noqa: S307 - whitelisted AST
        return np.broadcast_to(np.asarray(value, dtype=float), np.broadcast(x, t).shape).copy()

    def is_zero(self) -> bool:
        try:
            return float(self.source) == 0.0
        except ValueError:
            return False
