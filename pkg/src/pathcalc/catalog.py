"""Built-in catalog of scalar functions addressable by name from configs.

Derivative entries are the a.e. derivatives with the right-continuous
convention at kinks (``sign(0) = +1``), which is the version the
decomposition code uses for the integrand g and the curvature surrogate.
"""

from __future__ import annotations

import numpy as np

from .functional import ScalarFn

__all__ = ["make_scalar_fn", "list_catalog", "sign_rc", "CATALOG_NAMES"]


def sign_rc(x):
    """Right-continuous sign: -1 for x < 0, +1 for x >= 0."""
    return np.where(np.asarray(x, dtype=float) >= 0.0, 1.0, -1.0)


def _step_rc(x):
    return np.where(np.asarray(x, dtype=float) >= 0.0, 1.0, 0.0)


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _one(x):
    return np.ones_like(np.asarray(x, dtype=float))


def _abs_fn(label: str) -> ScalarFn:
    return ScalarFn(
        label=label, fn=np.abs,
        derivatives={1: sign_rc, 2: _zero},
        lipschitz_bounds=(((-1e9, 1e9), 1.0),),
        convex=True, kinks=(0.0,),
    )


def _square() -> ScalarFn:
    return ScalarFn(
        label="square", fn=lambda x: np.asarray(x, dtype=float) ** 2,
        derivatives={1: lambda x: 2.0 * np.asarray(x, dtype=float), 2: lambda x: 2.0 * _one(x)},
        lipschitz_bounds=(((-10.0, 10.0), 20.0),),
        convex=True,
    )


def _cube() -> ScalarFn:
    return ScalarFn(
        label="cube", fn=lambda x: np.asarray(x, dtype=float) ** 3,
        derivatives={1: lambda x: 3.0 * np.asarray(x, dtype=float) ** 2,
                     2: lambda x: 6.0 * np.asarray(x, dtype=float)},
        lipschitz_bounds=(((-10.0, 10.0), 300.0),),
    )


def _x_abs_x_half() -> ScalarFn:
    return ScalarFn(
        label="x_abs_x_half",
        fn=lambda x: np.asarray(x, dtype=float) * np.abs(x) / 2.0,
        derivatives={1: np.abs, 2: sign_rc},
        lipschitz_bounds=(((-10.0, 10.0), 10.0),),
        kinks=(0.0,),
    )


def _sign() -> ScalarFn:
    return ScalarFn(
        label="sign", fn=sign_rc,
        derivatives={1: _zero},
        kinks=(0.0,),
    )


def _identity() -> ScalarFn:
    return ScalarFn(
        label="identity", fn=lambda x: np.asarray(x, dtype=float),
        derivatives={1: _one, 2: _zero},
        lipschitz_bounds=(((-1e9, 1e9), 1.0),),
        convex=True,
    )


def _relu() -> ScalarFn:
    return ScalarFn(
        label="relu", fn=lambda x: np.maximum(np.asarray(x, dtype=float), 0.0),
        derivatives={1: _step_rc, 2: _zero},
        lipschitz_bounds=(((-1e9, 1e9), 1.0),),
        convex=True, kinks=(0.0,),
    )


def _cos() -> ScalarFn:
    return ScalarFn(
        label="cos", fn=np.cos,
        derivatives={1: lambda x: -np.sin(x), 2: lambda x: -np.cos(x)},
        lipschitz_bounds=(((-1e9, 1e9), 1.0),),
    )


def _piecewise_linear(breakpoints, slopes, y0: float = 0.0) -> ScalarFn:
    """Continuous piecewise-linear f with f(0) = y0.

    ``slopes`` has one more entry than ``breakpoints``; slope i applies on
    [b_i, b_{i+1}).  Convex exactly when the slopes are nondecreasing.
    """
    bp = np.asarray(breakpoints, dtype=float)
    sl = np.asarray(slopes, dtype=float)
    if bp.ndim != 1 or sl.ndim != 1 or len(sl) != len(bp) + 1:
        raise ValueError("need len(slopes) == len(breakpoints) + 1")
    if len(bp) and np.any(np.diff(bp) <= 0):
        raise ValueError("breakpoints must be strictly increasing")

    def _slope_integral_from_zero(x: float) -> float:
        lo, hi = (x, 0.0) if x < 0 else (0.0, x)
        inner = bp[(bp > lo) & (bp < hi)]
        edges = np.concatenate(([lo], inner, [hi]))
        segs = np.searchsorted(bp, (edges[:-1] + edges[1:]) / 2, side="right")
        val = float(np.sum(sl[segs] * np.diff(edges)))
        return val if x >= 0 else -val

    knot_vals = np.array([y0 + _slope_integral_from_zero(float(v)) for v in bp])

    def _anti(x):
        x = np.asarray(x, dtype=float)
        if len(bp) == 0:
            return y0 + sl[0] * x
        seg = np.searchsorted(bp, x, side="right")
        anchor_idx = np.maximum(seg - 1, 0)
        return knot_vals[anchor_idx] + sl[seg] * (x - bp[anchor_idx])

    def _deriv(x):
        x = np.asarray(x, dtype=float)
        return sl[np.searchsorted(bp, x, side="right")]

    lip = float(np.max(np.abs(sl)))
    return ScalarFn(
        label=f"piecewise_linear[{','.join(str(v) for v in bp)}]",
        fn=_anti,
        derivatives={1: _deriv, 2: _zero},
        lipschitz_bounds=(((-1e9, 1e9), lip),),
        convex=bool(np.all(np.diff(sl) >= 0)),
        kinks=tuple(float(v) for v in bp),
    )


_BUILDERS = {
    "abs": lambda **kw: _abs_fn("abs"),
    "square": lambda **kw: _square(),
    "cube": lambda **kw: _cube(),
    "x_abs_x_half": lambda **kw: _x_abs_x_half(),
    "sign_primitive": lambda **kw: _abs_fn("sign_primitive"),
    "sign": lambda **kw: _sign(),
    "identity": lambda **kw: _identity(),
    "relu": lambda **kw: _relu(),
    "cos": lambda **kw: _cos(),
    "piecewise_linear": lambda **kw: _piecewise_linear(**kw),
}

CATALOG_NAMES = tuple(sorted(_BUILDERS))


def make_scalar_fn(name: str, **params) -> ScalarFn:
    """Build a catalog function by name; raises ``ValueError`` for unknown names."""
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown catalog function {name!r}; known: {CATALOG_NAMES}") from None
    return builder(**params)


def list_catalog():
    """Names and one-line descriptions of the built-in scalar functions."""
    return {
        "abs": "|x|, convex, Lipschitz 1",
        "square": "x^2",
        "cube": "x^3",
        "x_abs_x_half": "x|x|/2, primitive of |x|",
        "sign_primitive": "primitive of sign (equals |x|)",
        "sign": "right-continuous sign, -1/+1",
        "identity": "x",
        "relu": "max(x, 0), convex",
        "cos": "cos(x)",
        "piecewise_linear": "continuous piecewise linear; params: breakpoints, slopes, y0",
    }
