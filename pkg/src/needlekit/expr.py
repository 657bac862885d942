"""Recursive-descent parser and evaluator for scalar field expressions.

Grammar (whitespace insignificant, ``^`` binds tightest, ``+ - * /``
left-associative)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ('-')? atom ('^' atom)?
    atom   := number | 'x1'..'x3' | func '(' expr ')' | '(' expr ')'
    func   := sin | cos | exp | log | abs | sqrt

ASTs are plain tuples, evaluable on numpy arrays of points and
differentiable symbolically (needed for exact gradients of test
functions).
"""

from __future__ import annotations

import numpy as np

from .errors import ExprSyntaxError, UnknownIdentifier

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "abs": np.abs,
    "sqrt": np.sqrt,
}

_VARS = {"x1": 0, "x2": 1, "x3": 2}


class _Tokenizer:
    SYMBOLS = "+-*/^()"

    def __init__(self, source: str):
        self.source = source
        self.pos = 0
        self.tokens = []  # (kind, value, offset)
        self._scan()
        self.index = 0

    def _scan(self):
        s = self.source
        i = 0
        n = len(s)
        while i < n:
            c = s[i]
            if c.isspace():
                i += 1
                continue
            if c in self.SYMBOLS:
                self.tokens.append(("sym", c, i))
                i += 1
                continue
            if c.isdigit() or c == ".":
                j = i
                seen_e = False
                while j < n and (s[j].isdigit() or s[j] == "." or s[j] in "eE"
                                 or (seen_e and s[j] in "+-" and s[j - 1] in "eE")):
                    if s[j] in "eE":
                        seen_e = True
                    j += 1
                text = s[i:j]
                try:
                    value = float(text)
                except ValueError:
                    raise ExprSyntaxError(f"bad number {text!r}", i)
                self.tokens.append(("num", value, i))
                i = j
                continue
            if c.isalpha() or c == "_":
                j = i
                while j < n and (s[j].isalnum() or s[j] == "_"):
                    j += 1
                self.tokens.append(("name", s[i:j], i))
                i = j
                continue
            raise ExprSyntaxError(f"unexpected character {c!r}", i)
        self.tokens.append(("end", None, n))

    def peek(self):
        return self.tokens[self.index]

    def next(self):
        tok = self.tokens[self.index]
        self.index += 1
        return tok


def parse_expr(source: str):
    """Parse an expression string into an AST tuple tree."""
    tz = _Tokenizer(source)
    ast = _parse_expr(tz)
    kind, _, off = tz.peek()
    if kind != "end":
        raise ExprSyntaxError("trailing input", off)
    return ast


def _parse_expr(tz):
    node = _parse_term(tz)
    while True:
        kind, val, _ = tz.peek()
        if kind == "sym" and val in "+-":
            tz.next()
            rhs = _parse_term(tz)
            node = ("add" if val == "+" else "sub", node, rhs)
        else:
            return node


def _parse_term(tz):
    node = _parse_factor(tz)
    while True:
        kind, val, _ = tz.peek()
        if kind == "sym" and val in "*/":
            tz.next()
            rhs = _parse_factor(tz)
            node = ("mul" if val == "*" else "div", node, rhs)
        else:
            return node


def _parse_factor(tz):
    kind, val, _ = tz.peek()
    negate = False
    if kind == "sym" and val == "-":
        tz.next()
        negate = True
    node = _parse_atom(tz)
    kind, val, _ = tz.peek()
    if kind == "sym" and val == "^":
        tz.next()
        exponent = _parse_atom(tz)
        node = ("pow", node, exponent)
    if negate:
        node = ("neg", node)
    return node


def _parse_atom(tz):
    kind, val, off = tz.next()
    if kind == "num":
        return ("num", val)
    if kind == "name":
        if val in _VARS:
            return ("var", _VARS[val])
        if val in FUNCTIONS:
            k, v, o = tz.next()
            if not (k == "sym" and v == "("):
                raise ExprSyntaxError(f"expected '(' after {val}", o)
            arg = _parse_expr(tz)
            k, v, o = tz.next()
            if not (k == "sym" and v == ")"):
                raise ExprSyntaxError("expected ')'", o)
            return ("call", val, arg)
        raise UnknownIdentifier(val, off)
    if kind == "sym" and val == "(":
        node = _parse_expr(tz)
        k, v, o = tz.next()
        if not (k == "sym" and v == ")"):
            raise ExprSyntaxError("expected ')'", o)
        return node
    raise ExprSyntaxError("expected number, variable, function or '('", off)


def arity(ast) -> int:
    """Highest variable index used, plus one (0 for constant expressions)."""
    kind = ast[0]
    if kind == "num":
        return 0
    if kind == "var":
        return ast[1] + 1
    if kind in ("neg",):
        return arity(ast[1])
    if kind == "call":
        return arity(ast[2])
    return max(arity(ast[1]), arity(ast[2]))


def evaluate(ast, points: np.ndarray):
    """Evaluate an AST on points of shape (n, d) or (d,); returns array or scalar."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if arity(ast) > pts.shape[1]:
        raise UnknownIdentifier(f"x{arity(ast)}", 0)
    out = _eval(ast, pts)
    out = np.broadcast_to(out, (pts.shape[0],)).astype(float)
    return float(out[0]) if single else np.array(out)


def _eval(ast, pts):
    kind = ast[0]
    if kind == "num":
        return ast[1]
    if kind == "var":
        return pts[:, ast[1]]
    if kind == "neg":
        return -_eval(ast[1], pts)
    if kind == "add":
        return _eval(ast[1], pts) + _eval(ast[2], pts)
    if kind == "sub":
        return _eval(ast[1], pts) - _eval(ast[2], pts)
    if kind == "mul":
        return _eval(ast[1], pts) * _eval(ast[2], pts)
    if kind == "div":
        return _eval(ast[1], pts) / _eval(ast[2], pts)
    if kind == "pow":
        return _eval(ast[1], pts) ** _eval(ast[2], pts)
    if kind == "call":
        return FUNCTIONS[ast[1]](_eval(ast[2], pts))
    raise ValueError(f"bad AST node {kind!r}")


def differentiate(ast, var: int):
    """Symbolic partial derivative with respect to variable index ``var``."""
    kind = ast[0]
    if kind == "num":
        return ("num", 0.0)
    if kind == "var":
        return ("num", 1.0 if ast[1] == var else 0.0)
    if kind == "neg":
        return ("neg", differentiate(ast[1], var))
    if kind in ("add", "sub"):
        return (kind, differentiate(ast[1], var), differentiate(ast[2], var))
    if kind == "mul":
        a, b = ast[1], ast[2]
        return ("add", ("mul", differentiate(a, var), b), ("mul", a, differentiate(b, var)))
    if kind == "div":
        a, b = ast[1], ast[2]
        num = ("sub", ("mul", differentiate(a, var), b), ("mul", a, differentiate(b, var)))
        return ("div", num, ("mul", b, b))
    if kind == "pow":
        a, b = ast[1], ast[2]
        if b[0] == "num":
            # d(a^c) = c * a^(c-1) * a'
            return ("mul", ("mul", b, ("pow", a, ("num", b[1] - 1.0))), differentiate(a, var))
        # general a^b = exp(b log a)
        inner = ("add", ("mul", differentiate(b, var), ("call", "log", a)),
                 ("div", ("mul", b, differentiate(a, var)), a))
        return ("mul", ("pow", a, b), inner)
    if kind == "call":
        name, a = ast[1], ast[2]
        da = differentiate(a, var)
        if name == "sin":
            outer = ("call", "cos", a)
        elif name == "cos":
            outer = ("neg", ("call", "sin", a))
        elif name == "exp":
            outer = ("call", "exp", a)
        elif name == "log":
            outer = ("div", ("num", 1.0), a)
        elif name == "sqrt":
            outer = ("div", ("num", 0.5), ("call", "sqrt", a))
        elif name == "abs":
            # a / |a|, defined away from the zero set
            outer = ("div", a, ("call", "abs", a))
        else:
            raise ValueError(f"bad function {name!r}")
        return ("mul", outer, da)
    raise ValueError(f"bad AST node {kind!r}")


def gradient(ast, dim: int):
    """List of partial-derivative ASTs for variables 0 .. dim-1."""
    return [differentiate(ast, k) for k in range(dim)]


def eval_gradient_sq(ast, points: np.ndarray) -> np.ndarray:
    """|grad f|^2 evaluated at points of shape (n, d)."""
    pts = np.asarray(points, dtype=float)
    total = np.zeros(pts.shape[0])
    for k in range(pts.shape[1]):
        total += np.asarray(evaluate(differentiate(ast, k), pts)) ** 2
    return total
