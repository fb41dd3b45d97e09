"""Built-in trend and boundary families, and the string specs the CLI accepts.

Trend specs::

    zero
    builtin:NAME[,key=value...]        e.g. builtin:parabola-product,scale=0.5
    product:NAME1[,..]*NAME2[,..]      product of two 1D builtins
    csv:PATH                           GridFn1D / GridFn2D CSV

A 1D builtin used where a 2D trend is expected means its self-product.
Boundary specs add ``const:C``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError
from .gridfn import GridFn1D, GridFn2D, nodes, outer, read_csv

NAMES_1D = ("parabola", "tent", "skew-tent", "four-vertex")
NAMES_2D = ("parabola-product", "tent-product", "negative-bump", "mixed-sign")

FOUR_VERTEX = ((0.0, 0.0), (0.5, 0.1), (0.75, 0.5), (1.0, 0.0))


def _pin(v):
    v = np.array(v, dtype=float)
    if v.ndim == 1:
        v[0] = v[-1] = 0.0
    else:
        v[0, :] = v[-1, :] = v[:, 0] = v[:, -1] = 0.0
    return v


def _one_d(name, s, params):
    if name == "parabola":
        return s * (1 - s)
    if name == "tent":
        return np.minimum(s, 1 - s)
    if name == "skew-tent":
        a = float(params.get("apex", 0.3))
        if not 0 < a < 1:
            raise DomainError(f"skew-tent apex must lie in (0,1), got {a}")
        return np.minimum((1 - a) * s, a * (1 - s))
    if name == "four-vertex":
        xs, ys = zip(*FOUR_VERTEX)
        return np.interp(s, xs, ys)
    raise DomainError(f"unknown builtin {name!r}; choose from {NAMES_1D + NAMES_2D}")


def builtin_trend(name: str, n: int, **params):
    """Sample a named family on the grid with exact zeros on the boundary."""
    scale = float(params.pop("scale", 1.0))
    s = nodes(n)
    if name in NAMES_1D:
        return GridFn1D(n, _pin(scale * _one_d(name, s, params)))
    S, T = s[:, None], s[None, :]
    if name == "parabola-product":
        v = S * (1 - S) * T * (1 - T)
    elif name == "tent-product":
        v = np.minimum(S, 1 - S) * np.minimum(T, 1 - T)
    elif name == "negative-bump":
        v = -S * (1 - S) * T * (1 - T)
    elif name == "mixed-sign":
        v = 0.25 * np.sin(2 * np.pi * S) * np.sin(np.pi * T) + 0.125 * np.sin(np.pi * S) * np.sin(3 * np.pi * T)
    else:
        raise DomainError(f"unknown builtin {name!r}; choose from {NAMES_1D + NAMES_2D}")
    return GridFn2D(n, _pin(scale * v))


def _parse_named(text: str):
    parts = [p for p in text.split(",") if p]
    if not parts:
        raise DomainError("empty builtin name")
    params = {}
    for p in parts[1:]:
        if "=" not in p:
            raise DomainError(f"builtin parameter {p!r} is not key=value")
        k, v = p.split("=", 1)
        params[k.strip()] = float(v)
    return parts[0].strip(), params


def _load_csv(path, n, want_2d):
    p = Path(path)
    if not p.exists():
        raise DomainError(f"CSV file not found: {path}")
    fn = read_csv(p)
    if fn.n != n:
        raise DimensionError(f"{path}: grid has n={fn.n}, run expects n={n}")
    if want_2d and isinstance(fn, GridFn1D):
        return outer(fn, fn)
    return fn


def parse_trend(spec: str, n: int, dim: int = 2):
    """Resolve a trend spec to a GridFn2D (dim=2) or GridFn1D (dim=1)."""
    spec = spec.strip()
    if spec == "zero":
        return GridFn2D.zeros(n) if dim == 2 else GridFn1D(n, np.zeros(n + 1))
    kind, _, rest = spec.partition(":")
    if kind == "builtin":
        name, params = _parse_named(rest)
        fn = builtin_trend(name, n, **params)
        if dim == 2 and isinstance(fn, GridFn1D):
            return outer(fn, fn)
        if dim == 1 and isinstance(fn, GridFn2D):
            raise DomainError(f"{name!r} is two-dimensional; a 1D trend is required")
        return fn
    if kind == "product":
        if dim == 1:
            raise DomainError("product trends are two-dimensional")
        f1, f2 = parse_product(spec, n)
        return outer(f1, f2)
    if kind == "csv":
        fn = _load_csv(rest, n, want_2d=(dim == 2))
        if dim == 1 and isinstance(fn, GridFn2D):
            raise DomainError(f"{rest}: a 1D trend is required")
        return fn
    raise DomainError(f"unrecognised trend spec {spec!r}")


def parse_product(spec: str, n: int):
    """Factors (GridFn1D, GridFn1D) of a 'product:A*B' spec."""
    kind, _, rest = spec.strip().partition(":")
    if kind != "product" or rest.count("*") != 1:
        raise DomainError(f"product spec must look like product:A*B, got {spec!r}")
    out = []
    for part in rest.split("*"):
        name, params = _parse_named(part)
        fn = builtin_trend(name, n, **params)
        if not isinstance(fn, GridFn1D):
            raise DomainError(f"product factors must be 1D builtins, got {name!r}")
        out.append(fn)
    return tuple(out)


def parse_boundary(spec: str, n: int) -> GridFn2D:
    spec = spec.strip()
    kind, _, rest = spec.partition(":")
    if kind == "const":
        try:
            return GridFn2D.constant(float(rest), n)
        except ValueError:
            raise DomainError(f"bad constant boundary {spec!r}") from None
    if kind == "csv":
        return _load_csv(rest, n, want_2d=True)
    if kind == "builtin":
        return parse_trend(spec, n, dim=2)
    raise DomainError(f"unrecognised boundary spec {spec!r}")
