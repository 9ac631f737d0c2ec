"""Position samplers: callables mapping an ``(..., 3)`` array of points to values.

Any vectorised callable works as a sampler. The classes here add JSON
round-tripping so media can be described in files.
"""

import ast
import operator

import numpy as np

from .errors import InputError


def encode_complex(z):
    z = complex(z)
    return [z.real, z.imag]


def decode_complex(v):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise InputError(f"complex value must be a [re, im] pair, got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


class Constant:
    def __init__(self, value):
        self.value = value

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.value)

    def to_json(self):
        return {"kind": "constant", "value": encode_complex(self.value)}

    def __repr__(self):
        return f"Constant({self.value!r})"


class PiecewiseBox:
    """Piecewise-constant sampler: ``background`` overridden inside boxes.

    Boxes are half-open ``[lo, hi)`` and later boxes take precedence.
    """

    def __init__(self, background=0.0, boxes=()):
        self.background = background
        self.boxes = [(np.asarray(lo, float), np.asarray(hi, float), v) for lo, hi, v in boxes]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        dtype = complex if any(np.iscomplexobj(v) for *_, v in self.boxes) or np.iscomplexobj(self.background) else float
        out = np.full(x.shape[:-1], self.background, dtype=dtype)
        for lo, hi, v in self.boxes:
            inside = np.all((x >= lo) & (x < hi), axis=-1)
            out[inside] = v
        return out

    def to_json(self):
        return {
            "kind": "piecewise_box",
            "background": encode_complex(self.background),
            "boxes": [
                {"lo": lo.tolist(), "hi": hi.tolist(), "value": encode_complex(v)}
                for lo, hi, v in self.boxes
            ],
        }


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {
    name: getattr(np, name)
    for name in (
        "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "arctan",
        "sinh", "cosh", "minimum", "maximum", "where", "heaviside",
    )
}
_CONSTS = {"pi": np.pi, "e": np.e}
_COMPARE = {
    ast.Lt: operator.lt, ast.LtE: operator.le,
    ast.Gt: operator.gt, ast.GtE: operator.ge,
}


_SPATIAL = ("x", "y", "z", "r")


def _compile_expression(text, names=_SPATIAL):
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise InputError(f"cannot parse expression {text!r}: {exc}") from None

    def check(node):
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            check(node.operand)
        elif isinstance(node, ast.Compare) and all(type(op) in _COMPARE for op in node.ops):
            check(node.left)
            for c in node.comparators:
                check(c)
        elif isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS) or node.keywords:
                raise InputError(f"function not allowed in expression: {ast.dump(node.func)}")
            for arg in node.args:
                check(arg)
        elif isinstance(node, ast.Name):
            if node.id not in names and node.id not in _CONSTS:
                raise InputError(f"unknown name {node.id!r} in expression {text!r}")
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            pass
        else:
            raise InputError(f"construct not allowed in expression {text!r}: {type(node).__name__}")

    check(tree)
    return tree


def _eval_node(node, env):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body, env)
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval_node(node.left, env), _eval_node(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_eval_node(node.operand, env))
    if isinstance(node, ast.Compare):
        left = _eval_node(node.left, env)
        result = True
        for op, comp in zip(node.ops, node.comparators):
            right = _eval_node(comp, env)
            result = result & _COMPARE[type(op)](left, right)
            left = right
        return np.asarray(result, dtype=float)
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](*[_eval_node(a, env) for a in node.args])
    if isinstance(node, ast.Name):
        return env[node.id] if node.id in env else _CONSTS[node.id]
    return node.value


class Expression:
    """Sampler defined by arithmetic expressions in ``x, y, z`` (and ``r = |x|``).

    Only arithmetic, comparisons and a fixed set of numpy functions are
    accepted; nothing else is evaluated.
    """

    def __init__(self, re, im=None):
        self.re = re
        self.im = im
        self._re = _compile_expression(re)
        self._im = _compile_expression(im) if im else None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        env = {"x": x[..., 0], "y": x[..., 1], "z": x[..., 2]}
        env["r"] = np.sqrt(env["x"] ** 2 + env["y"] ** 2 + env["z"] ** 2)
        shape = x.shape[:-1]
        out = np.broadcast_to(_eval_node(self._re, env), shape).astype(float)
        if self._im is not None:
            out = out + 1j * np.broadcast_to(_eval_node(self._im, env), shape)
        return out

    def to_json(self):
        d = {"kind": "expression", "re": self.re}
        if self.im:
            d["im"] = self.im
        return d


def scalar_function(text, name):
    """Vectorised function of one variable ``name`` from an expression string."""
    if not isinstance(text, str):
        raise InputError(f"expression must be a string, got {text!r}")
    tree = _compile_expression(text, (name,))

    def f(v):
        v = np.asarray(v, dtype=float)
        return np.broadcast_to(_eval_node(tree, {name: v}), v.shape).astype(float)

    return f


def sampler_from_json(d):
    if isinstance(d, (int, float, list)) and not isinstance(d, bool):
        return Constant(_maybe_real(decode_complex(d)))
    if not isinstance(d, dict):
        raise InputError(f"cannot interpret sampler {d!r}")
    kind = d.get("kind")
    if kind == "constant":
        return Constant(_maybe_real(decode_complex(d["value"])))
    if kind == "piecewise_box":
        boxes = [(b["lo"], b["hi"], _maybe_real(decode_complex(b["value"]))) for b in d.get("boxes", [])]
        return PiecewiseBox(_maybe_real(decode_complex(d.get("background", 0.0))), boxes)
    if kind == "expression":
        text = d.get("re", d.get("expr"))
        if not isinstance(text, str):
            raise InputError("expression sampler needs a string 're'")
        return Expression(text, d.get("im"))
    raise InputError(f"unknown sampler kind {kind!r}")


def sampler_to_json(s):
    if hasattr(s, "to_json"):
        return s.to_json()
    raise InputError(f"sampler {s!r} is not serialisable")


def _maybe_real(z):
    return z.real if z.imag == 0 else z
