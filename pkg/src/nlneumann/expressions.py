"""Small arithmetic expression grammar for coefficient fields.

Expressions use the identifiers ``x1..xN`` for coordinates, the operators
``+ - * / ^`` (``**`` is accepted too), numeric constants, ``pi`` and ``e``,
and the functions ``exp, log, sqrt, abs, sin, cos, tanh, min, max``.
They compile to vectorized callables mapping points of shape ``(M, N)``
to values of shape ``(M,)``.
"""

from __future__ import annotations

import ast
import math
import re

import numpy as np

_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "min": np.minimum,
    "max": np.maximum,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_COORD = re.compile(r"^x([1-9][0-9]*)$")

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class ExpressionError(ValueError):
    pass


class Expression:
    """Compiled scalar field ``x -> value``."""

    def __init__(self, source, dim):
        self.source = str(source).strip()
        self.dim = dim
        text = self.source.replace("^", "**")
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {self.source!r}: {exc.msg}") from None
        self._tree = tree.body
        self._check(self._tree)
        self.is_constant = not self._uses_coords(self._tree)
        self._const_value = None
        if self.is_constant:
            self._const_value = float(self._eval(self._tree, None))

    def _uses_coords(self, node):
        return any(isinstance(n, ast.Name) and _COORD.match(n.id) for n in ast.walk(node))

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"operator not allowed in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise ExpressionError(f"operator not allowed in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ExpressionError(f"unknown function in {self.source!r}")
            if node.keywords:
                raise ExpressionError(f"keyword arguments not allowed in {self.source!r}")
            expected = 2 if node.func.id in ("min", "max") else 1
            if len(node.args) != expected:
                raise ExpressionError(f"{node.func.id} takes {expected} argument(s)")
            for arg in node.args:
                self._check(arg)
        elif isinstance(node, ast.Name):
            m = _COORD.match(node.id)
            if m:
                if int(m.group(1)) > self.dim:
                    raise ExpressionError(f"{node.id} exceeds dimension {self.dim}")
            elif node.id not in _CONSTS:
                raise ExpressionError(f"unknown identifier {node.id!r}")
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExpressionError(f"bad constant in {self.source!r}")
        else:
            raise ExpressionError(f"unsupported syntax in {self.source!r}")

    def _eval(self, node, x):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, x), self._eval(node.right, x))
        if isinstance(node, ast.UnaryOp):
            val = self._eval(node.operand, x)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](*(self._eval(a, x) for a in node.args))
        if isinstance(node, ast.Name):
            m = _COORD.match(node.id)
            if m:
                return x[:, int(m.group(1)) - 1]
            return _CONSTS[node.id]
        return float(node.value)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.is_constant:
            return np.full(x.shape[0], self._const_value)
        with np.errstate(all="ignore"):
            out = np.asarray(self._eval(self._tree, x), dtype=float)
        return np.broadcast_to(out, (x.shape[0],)).copy()

    def __repr__(self):
        return f"Expression({self.source!r})"


def constant(value):
    """Scalar field returning ``value`` everywhere."""
    value = float(value)

    def field(x):
        x = np.atleast_2d(x)
        return np.full(x.shape[0], value)

    field.constant_value = value
    return field


def as_scalar_field(spec, dim):
    """Coerce a number, expression string or callable into a scalar field."""
    if callable(spec):
        return spec
    if isinstance(spec, (int, float, np.floating, np.integer)):
        return constant(spec)
    expr = Expression(spec, dim)
    if expr.is_constant:
        return constant(expr._const_value)
    return expr


def as_vector_field(spec, dim):
    """Vector field from a callable, a list of components, or "e1, e2" text."""
    if callable(spec):
        return spec
    if isinstance(spec, str):
        spec = [s for s in spec.split(",")]
    comps = [as_scalar_field(s, dim) for s in spec]
    if len(comps) != dim:
        raise ExpressionError(f"vector field needs {dim} components, got {len(comps)}")

    def field(x):
        x = np.atleast_2d(x)
        return np.stack([c(x) for c in comps], axis=-1)

    return field


def as_matrix_field(spec, dim):
    """Matrix field from a callable, a scalar (times identity) or "a, b; c, d" text."""
    if callable(spec):
        return spec
    if isinstance(spec, (int, float)):
        spec = str(spec)
    if isinstance(spec, str) and ";" not in spec and "," not in spec:
        scal = as_scalar_field(spec, dim)
        eye = np.eye(dim)

        def iso(x):
            return scal(x)[:, None, None] * eye

        iso.scalar = scal
        return iso
    rows = spec.split(";") if isinstance(spec, str) else spec
    entries = [[as_scalar_field(e, dim) for e in (r.split(",") if isinstance(r, str) else r)] for r in rows]
    if len(entries) != dim or any(len(r) != dim for r in entries):
        raise ExpressionError(f"matrix field must be {dim}x{dim}")

    def field(x):
        x = np.atleast_2d(x)
        return np.stack([np.stack([e(x) for e in row], axis=-1) for row in entries], axis=-2)

    return field


def is_zero_field(field):
    return getattr(field, "constant_value", None) == 0.0
