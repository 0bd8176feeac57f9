"""Named test functions, states and policies shared by the CLI and the checks."""

from __future__ import annotations

import numpy as np

from .freecalc import CylinderFunction, LinearOuter, PolynomialOuter, QuadraticOuter, TimeCylinder
from .ncpoly import NCPolynomial, letters
from .randmat import MatrixTuple, gue_tuple, stream


def _sym(p: NCPolynomial) -> NCPolynomial:
    return (p + p.adjoint()) * 0.5


def ito_functions(d: int = 2) -> dict[str, CylinderFunction]:
    """The four functions of the Ito suite on ``d >= 2`` letters."""
    if d < 2:
        raise ValueError("the suite uses two letters")
    x = letters(d)
    return {
        "tr_x2": CylinderFunction([x[0] * x[0]], LinearOuter((1.0,))),
        "tr_x4": CylinderFunction([x[0] ** 4], LinearOuter((1.0,))),
        "tr_x_sq": CylinderFunction([x[0]], QuadraticOuter(((1.0,),))),
        "tr_x1x2": CylinderFunction([_sym(x[0] * x[1])], LinearOuter((1.0,))),
    }


def laplacian_functions(d: int = 2) -> dict[str, CylinderFunction]:
    """Ten cylinder functions exercising every term of the free Laplacian."""
    x = letters(d)
    x1, x2 = x[0], x[1]
    return {
        "tr_x2": CylinderFunction([x1 * x1], LinearOuter((1.0,))),
        "tr_x4": CylinderFunction([x1 ** 4], LinearOuter((1.0,))),
        "tr_x3": CylinderFunction([x1 ** 3], LinearOuter((1.0,))),
        "tr_x_sq": CylinderFunction([x1], QuadraticOuter(((1.0,),))),
        "tr_x1x2": CylinderFunction([_sym(x1 * x2)], LinearOuter((1.0,))),
        "tr_x1x1x2x2": CylinderFunction([_sym(x1 * x1 * x2 * x2)], LinearOuter((1.0,))),
        "tr_x1x2x1x2": CylinderFunction([_sym(x1 * x2 * x1 * x2)], LinearOuter((1.0,))),
        "tr_x1sq_tr_x2sq": CylinderFunction([x1 * x1, x2 * x2], QuadraticOuter(((0.0, 0.5), (0.5, 0.0)))),
        "tr_x2_cubed": CylinderFunction([x1 * x1], PolynomialOuter(((3,),), (1.0,))),
        "mixed": CylinderFunction([x1 * x1 + x2, x2 ** 4, x1], QuadraticOuter(
            ((0.3, 0.1, 0.0), (0.1, 0.0, 0.2), (0.0, 0.2, -0.4)), (1.0, 0.5, 0.7))),
    }


def static(U: CylinderFunction) -> TimeCylinder:
    return TimeCylinder.static(U)


def reference_state(d: int, n: int, seed: int = 0, scale: float = 0.5, shift: float = 0.2) -> MatrixTuple:
    """``scale * GUE + shift * 1``: a generic state with nonzero traces."""
    X = gue_tuple(d, n, stream(seed, 0, "x0"), 1.0).data * scale + shift * np.eye(n)
    return MatrixTuple(X)


def reference_control(d: int, n: int, seed: int = 0, scale: float = 1.0) -> MatrixTuple:
    return MatrixTuple(gue_tuple(d, n, stream(seed, 1, "aux"), 1.0).data * scale)
