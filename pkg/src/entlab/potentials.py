"""Textual grammar for potential specifications.

A spec is a sum of named forms separated by ``+`` (at the top level only):

    spec  := form ('+' form)*
    form  := NUMBER                      constant
           | 'quadratic(a,b,c)'          a*|x|^2 + b*(x_1+...+x_d) + c
           | 'abs-norm(a)'               a*|x|
           | 'indicator-ball(r)'         0 on {|x| <= r}, +inf outside
           | 'piecewise-linear(x1:y1,x2:y2,...)'   1D only; linear
             interpolation between breakpoints, end slopes extended

All named forms except piecewise-linear are convex for nonnegative leading
coefficients; piecewise-linear is convex iff the breakpoint slopes are
nondecreasing (not enforced here; shape is checked downstream).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PotentialGrammarError", "PotentialSpec", "parse_potential",
           "evaluate_potential"]

FORM_NAMES = ("quadratic", "abs-norm", "indicator-ball", "piecewise-linear")


class PotentialGrammarError(ValueError):
    """Malformed potential spec; ``column`` is the 0-based offending offset."""

    def __init__(self, message: str, column: int = 0):
        super().__init__(message)
        self.column = column


@dataclass(frozen=True)
class PotentialSpec:
    """Parsed potential: a list of (form name, argument tuple) terms."""

    text: str
    terms: tuple


def _split_top_level(text: str):
    """Split on '+' outside parentheses; yields (offset, chunk)."""
    depth = 0
    start = 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise PotentialGrammarError("unbalanced ')'", i)
        elif ch == "+" and depth == 0:
            yield start, text[start:i]
            start = i + 1
    if depth != 0:
        raise PotentialGrammarError("unbalanced '('", len(text) - 1)
    yield start, text[start:]


def _parse_number(chunk: str, offset: int) -> float:
    try:
        return float(chunk)
    except ValueError:
        raise PotentialGrammarError(f"expected a number, got {chunk!r}", offset) from None


def _parse_form(chunk: str, offset: int):
    s = chunk.strip()
    off = offset + (len(chunk) - len(chunk.lstrip()))
    if not s:
        raise PotentialGrammarError("empty term", offset)
    if "(" not in s:
        return ("constant", (_parse_number(s, off),))
    name, _, rest = s.partition("(")
    name = name.strip()
    if name not in FORM_NAMES:
        raise PotentialGrammarError(f"unknown potential form {name!r} "
                                    f"(expected one of {', '.join(FORM_NAMES)})", off)
    if not rest.endswith(")"):
        raise PotentialGrammarError(f"missing ')' in {s!r}", off + len(s) - 1)
    args_text = rest[:-1]
    arg_off = off + len(name) + 1
    if name == "piecewise-linear":
        pairs = []
        for piece in args_text.split(","):
            if ":" not in piece:
                raise PotentialGrammarError(
                    f"piecewise-linear needs 'x:y' pairs, got {piece.strip()!r}", arg_off)
            xs, ys = piece.split(":", 1)
            pairs.append((_parse_number(xs.strip(), arg_off),
                          _parse_number(ys.strip(), arg_off)))
            arg_off += len(piece) + 1
        if len(pairs) < 2:
            raise PotentialGrammarError("piecewise-linear needs at least 2 breakpoints",
                                        arg_off)
        xs = [p[0] for p in pairs]
        if sorted(xs) != xs or len(set(xs)) != len(xs):
            raise PotentialGrammarError("piecewise-linear breakpoints must be strictly "
                                        "increasing", arg_off)
        return (name, tuple(pairs))
    args = tuple(_parse_number(a.strip(), arg_off) for a in args_text.split(","))
    expected = {"quadratic": 3, "abs-norm": 1, "indicator-ball": 1}[name]
    if len(args) != expected:
        raise PotentialGrammarError(f"{name} takes {expected} argument(s), "
                                    f"got {len(args)}", arg_off)
    if name == "indicator-ball" and args[0] <= 0:
        raise PotentialGrammarError("indicator-ball radius must be positive", arg_off)
    return (name, args)


def parse_potential(text: str) -> PotentialSpec:
    """Parse a potential spec string; raises PotentialGrammarError with the
    offending column on malformed input."""
    if not text.strip():
        raise PotentialGrammarError("empty potential spec", 0)
    terms = tuple(_parse_form(chunk, off) for off, chunk in _split_top_level(text))
    return PotentialSpec(text, terms)


def _eval_term(name, args, nodes):
    n = nodes.shape[0]
    if name == "constant":
        return np.full(n, args[0])
    if name == "quadratic":
        a, b, c = args
        return a * (nodes ** 2).sum(axis=1) + b * nodes.sum(axis=1) + c
    r = np.sqrt((nodes ** 2).sum(axis=1))
    if name == "abs-norm":
        return args[0] * r
    if name == "indicator-ball":
        return np.where(r <= args[0], 0.0, np.inf)
    if name == "piecewise-linear":
        if nodes.shape[1] != 1:
            raise PotentialGrammarError("piecewise-linear is 1D only", 0)
        xs = np.array([p[0] for p in args])
        ys = np.array([p[1] for p in args])
        x = nodes[:, 0]
        out = np.interp(x, xs, ys)
        # np.interp clamps outside [xs[0], xs[-1]]; extend the end slopes
        lo = x < xs[0]
        hi = x > xs[-1]
        out[lo] = ys[0] + (ys[1] - ys[0]) / (xs[1] - xs[0]) * (x[lo] - xs[0])
        out[hi] = ys[-1] + (ys[-1] - ys[-2]) / (xs[-1] - xs[-2]) * (x[hi] - xs[-1])
        return out
    raise PotentialGrammarError(f"unknown form {name!r}", 0)


def evaluate_potential(spec: PotentialSpec | str, nodes: np.ndarray) -> np.ndarray:
    """Evaluate a (parsed or textual) potential spec on (n, d) node array."""
    if isinstance(spec, str):
        spec = parse_potential(spec)
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim == 1:
        nodes = nodes[:, None]
    total = np.zeros(nodes.shape[0])
    for name, args in spec.terms:
        total = total + _eval_term(name, args, nodes)
    return total
