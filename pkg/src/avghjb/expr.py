"""A tiny, safe interpreter for model expressions in config files.

Grammar: numeric literals, the variables ``x`` and ``u`` (plus any named
parameters), ``+ - * / **``, unary minus, comparisons, and the functions
``abs exp log sqrt min max sign where``.  Expressions are parsed with
``ast`` and compiled to closures over numpy; nothing is ``eval``-ed.

>>> f = compile_expr("1 - exp(-abs(x))", ("x", "u"))
>>> float(f(0.0, 1.0))
0.0
"""

from __future__ import annotations

import ast
import operator

import numpy as np

from .errors import InvalidConfig

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_CMPOPS = {
    ast.Lt: np.less,
    ast.LtE: np.less_equal,
    ast.Gt: np.greater,
    ast.GtE: np.greater_equal,
    ast.Eq: np.equal,
    ast.NotEq: np.not_equal,
}
_FUNCS = {
    "abs": (1, np.abs),
    "exp": (1, np.exp),
    "log": (1, np.log),
    "sqrt": (1, np.sqrt),
    "sign": (1, np.sign),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
    "where": (3, np.where),
}


def _compile(node, names):
    if isinstance(node, ast.Expression):
        return _compile(node.body, names)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        value = float(node.value)
        return lambda env: value
    if isinstance(node, ast.Name):
        if node.id not in names:
            raise InvalidConfig(f"unknown name {node.id!r} (allowed: {', '.join(names)})")
        key = node.id
        return lambda env: env[key]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, names)
        if isinstance(node.op, ast.USub):
            return lambda env: -inner(env)
        return inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left, right = _compile(node.left, names), _compile(node.right, names)
        return lambda env: op(left(env), right(env))
    if isinstance(node, ast.Compare) and len(node.ops) == 1 and type(node.ops[0]) in _CMPOPS:
        op = _CMPOPS[type(node.ops[0])]
        left, right = _compile(node.left, names), _compile(node.comparators[0], names)
        return lambda env: op(left(env), right(env))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        spec = _FUNCS.get(node.func.id)
        if spec is None:
            raise InvalidConfig(f"unknown function {node.func.id!r}")
        arity, fn = spec
        if len(node.args) != arity:
            raise InvalidConfig(f"{node.func.id} takes {arity} argument(s), got {len(node.args)}")
        args = [_compile(a, names) for a in node.args]
        return lambda env: fn(*(a(env) for a in args))
    raise InvalidConfig(f"unsupported syntax: {ast.dump(node)[:60]}")


def compile_expr(text: str, variables=("x", "u"), params: dict | None = None):
    """Compile ``text`` into ``f(*variables)`` returning a numpy array."""
    if not isinstance(text, (str, int, float)) or isinstance(text, bool):
        raise InvalidConfig(f"expression must be a string or number, got {text!r}")
    params = {k: float(v) for k, v in (params or {}).items()}
    names = tuple(variables) + tuple(params)
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise InvalidConfig(f"cannot parse expression {text!r}: {exc.msg}") from None
    body = _compile(tree, names)

    def fn(*args):
        if len(args) != len(variables):
            raise TypeError(f"expected {len(variables)} arguments")
        arrays = [np.asarray(a, dtype=float) for a in args]
        env = dict(params)
        env.update(zip(variables, arrays))
        shape = np.broadcast_shapes(*(a.shape for a in arrays)) if arrays else ()
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.asarray(body(env), dtype=float)
        return np.broadcast_to(out, np.broadcast_shapes(out.shape, shape)).copy()

    fn.source = str(text)
    return fn
