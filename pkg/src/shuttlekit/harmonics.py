"""Real regular solid harmonics in Cartesian form, through degree 4.

The basis functions are the harmonic polynomials that restrict to the real
spherical harmonics on the unit sphere. They are built from the standard
complex harmonics (Condon-Shortley phases included) via the usual
real/imaginary combinations, so e.g. the degree-1 functions are
``-sqrt(3/4pi)*y``, ``+sqrt(3/4pi)*z`` and ``-sqrt(3/4pi)*x``. All sign
conventions downstream (fields, Hessians, ponderomotive quantities) are tied
to this table; see :mod:`shuttlekit.confinement`.

Each function is stored as a tuple of monomials ``(coefficient, (px, py, pz))``
so that values and derivatives of any order are exact up to rounding.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "MAX_ORDER",
    "num_coefficients",
    "index_to_lm",
    "lm_to_index",
    "solid_harmonic",
    "solid_harmonic_gradient",
    "solid_harmonic_hessian",
    "basis_matrix",
    "gradient_table",
    "hessian_table",
    "third_derivative_table",
]

MAX_ORDER = 4

_SQ = math.sqrt
_PI = math.pi

# monomial tables: (l, m) -> tuple of (coefficient, (px, py, pz))
MONOMIALS = {
    (0, 0): ((_SQ(1 / (4 * _PI)), (0, 0, 0)),),
    (1, -1): ((-_SQ(3 / (4 * _PI)), (0, 1, 0)),),
    (1, 0): ((_SQ(3 / (4 * _PI)), (0, 0, 1)),),
    (1, 1): ((-_SQ(3 / (4 * _PI)), (1, 0, 0)),),
    (2, -2): ((-_SQ(15 / (4 * _PI)), (1, 1, 0)),),
    (2, -1): ((-_SQ(15 / (4 * _PI)), (0, 1, 1)),),
    (2, 0): ((-_SQ(5 / (16 * _PI)), (2, 0, 0)), (-_SQ(5 / (16 * _PI)), (0, 2, 0)),
             (_SQ(5 / (4 * _PI)), (0, 0, 2))),
    (2, 1): ((-_SQ(15 / (4 * _PI)), (1, 0, 1)),),
    (2, 2): ((_SQ(15 / (16 * _PI)), (2, 0, 0)), (-_SQ(15 / (16 * _PI)), (0, 2, 0))),
    (3, -3): ((-_SQ(315 / (32 * _PI)), (2, 1, 0)), (_SQ(35 / (32 * _PI)), (0, 3, 0))),
    (3, -2): ((-_SQ(105 / (4 * _PI)), (1, 1, 1)),),
    (3, -1): ((_SQ(21 / (32 * _PI)), (2, 1, 0)), (_SQ(21 / (32 * _PI)), (0, 3, 0)),
              (-_SQ(21 / (2 * _PI)), (0, 1, 2))),
    (3, 0): ((-_SQ(63 / (16 * _PI)), (2, 0, 1)), (-_SQ(63 / (16 * _PI)), (0, 2, 1)),
             (_SQ(7 / (4 * _PI)), (0, 0, 3))),
    (3, 1): ((_SQ(21 / (32 * _PI)), (3, 0, 0)), (_SQ(21 / (32 * _PI)), (1, 2, 0)),
             (-_SQ(21 / (2 * _PI)), (1, 0, 2))),
    (3, 2): ((_SQ(105 / (16 * _PI)), (2, 0, 1)), (-_SQ(105 / (16 * _PI)), (0, 2, 1))),
    (3, 3): ((-_SQ(35 / (32 * _PI)), (3, 0, 0)), (_SQ(315 / (32 * _PI)), (1, 2, 0))),
    (4, -4): ((-_SQ(315 / (16 * _PI)), (3, 1, 0)), (_SQ(315 / (16 * _PI)), (1, 3, 0))),
    (4, -3): ((-_SQ(2835 / (32 * _PI)), (2, 1, 1)), (_SQ(315 / (32 * _PI)), (0, 3, 1))),
    (4, -2): ((_SQ(45 / (16 * _PI)), (3, 1, 0)), (_SQ(45 / (16 * _PI)), (1, 3, 0)),
              (-_SQ(405 / (4 * _PI)), (1, 1, 2))),
    (4, -1): ((_SQ(405 / (32 * _PI)), (2, 1, 1)), (_SQ(405 / (32 * _PI)), (0, 3, 1)),
              (-_SQ(45 / (2 * _PI)), (0, 1, 3))),
    (4, 0): ((_SQ(81 / (256 * _PI)), (4, 0, 0)), (_SQ(81 / (64 * _PI)), (2, 2, 0)),
             (-_SQ(81 / (4 * _PI)), (2, 0, 2)), (_SQ(81 / (256 * _PI)), (0, 4, 0)),
             (-_SQ(81 / (4 * _PI)), (0, 2, 2)), (_SQ(9 / (4 * _PI)), (0, 0, 4))),
    (4, 1): ((_SQ(405 / (32 * _PI)), (3, 0, 1)), (_SQ(405 / (32 * _PI)), (1, 2, 1)),
             (-_SQ(45 / (2 * _PI)), (1, 0, 3))),
    (4, 2): ((-_SQ(45 / (64 * _PI)), (4, 0, 0)), (_SQ(405 / (16 * _PI)), (2, 0, 2)),
             (_SQ(45 / (64 * _PI)), (0, 4, 0)), (-_SQ(405 / (16 * _PI)), (0, 2, 2))),
    (4, 3): ((-_SQ(315 / (32 * _PI)), (3, 0, 1)), (_SQ(2835 / (32 * _PI)), (1, 2, 1))),
    (4, 4): ((_SQ(315 / (256 * _PI)), (4, 0, 0)), (-_SQ(2835 / (64 * _PI)), (2, 2, 0)),
             (_SQ(315 / (256 * _PI)), (0, 4, 0))),
}

# flat index order: i = 0 -> (0,0), then l ascending with m = -l..+l
_INDEX_TO_LM = tuple((l, m) for l in range(MAX_ORDER + 1) for m in range(-l, l + 1))
_LM_TO_INDEX = {lm: i for i, lm in enumerate(_INDEX_TO_LM)}


def num_coefficients(order: int) -> int:
    """Number of basis functions for an expansion through degree ``order``."""
    return (order + 1) ** 2


def index_to_lm(i: int) -> tuple[int, int]:
    """Map a flat coefficient index (0-based) to its ``(l, m)`` labels."""
    return _INDEX_TO_LM[i]


def lm_to_index(l: int, m: int) -> int:
    """Map ``(l, m)`` labels to the flat coefficient index (0-based)."""
    _check_lm(l, m)
    return _LM_TO_INDEX[(l, m)]


def _check_lm(l, m):
    if not (0 <= l <= MAX_ORDER) or abs(m) > l:
        raise ValueError(f"unsupported solid harmonic (l={l}, m={m}); "
                         f"implemented through l={MAX_ORDER}")


def _diff_monomial(coef, powers, axis):
    p = powers[axis]
    if p == 0:
        return None
    new = list(powers)
    new[axis] = p - 1
    return coef * p, tuple(new)


def _derive_terms(terms, axes):
    """Differentiate a monomial list along the given sequence of axes."""
    out = list(terms)
    for ax in axes:
        nxt = []
        for coef, powers in out:
            d = _diff_monomial(coef, powers, ax)
            if d is not None:
                nxt.append(d)
        out = nxt
    return out


def _eval_terms(terms, points):
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    vals = np.zeros(pts.shape[0])
    for coef, (px, py, pz) in terms:
        vals += coef * pts[:, 0] ** px * pts[:, 1] ** py * pts[:, 2] ** pz
    return vals[0] if single else vals


def solid_harmonic(l: int, m: int, points) -> np.ndarray:
    """Evaluate R_{l,m} at one point or an ``(n, 3)`` array of points."""
    _check_lm(l, m)
    return _eval_terms(MONOMIALS[(l, m)], points)


def solid_harmonic_gradient(l: int, m: int, points) -> np.ndarray:
    """Gradient of R_{l,m}; shape ``(3,)`` or ``(n, 3)``."""
    _check_lm(l, m)
    terms = MONOMIALS[(l, m)]
    cols = [_eval_terms(_derive_terms(terms, (ax,)), points) for ax in range(3)]
    return np.stack(cols, axis=-1)


def solid_harmonic_hessian(l: int, m: int, points) -> np.ndarray:
    """Hessian of R_{l,m}; shape ``(3, 3)`` or ``(n, 3, 3)``."""
    _check_lm(l, m)
    terms = MONOMIALS[(l, m)]
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    n = 1 if single else pts.shape[0]
    out = np.zeros((n, 3, 3))
    for r in range(3):
        for s in range(r, 3):
            v = _eval_terms(_derive_terms(terms, (r, s)), pts if not single else pts[None, :])
            out[:, r, s] = v
            out[:, s, r] = v
    return out[0] if single else out


def basis_matrix(order: int, points) -> np.ndarray:
    """Design matrix of basis values, shape ``(n_points, (order+1)**2)``.

    Column ``i`` holds R_{l_i,m_i} evaluated at every point, with the flat
    index order of :func:`index_to_lm`.
    """
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in 0..{MAX_ORDER}, got {order}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cols = [solid_harmonic(l, m, pts) for (l, m) in _INDEX_TO_LM[:num_coefficients(order)]]
    return np.stack(cols, axis=1)


def _origin_table(shape, axes_list, lm_list):
    table = np.zeros(shape)
    for j, (l, m) in enumerate(lm_list):
        terms = MONOMIALS[(l, m)]
        for idx, axes in axes_list:
            derived = _derive_terms(terms, axes)
            val = sum(c for c, p in derived if p == (0, 0, 0))
            table[(j,) + idx] = val
    return table


def gradient_table() -> np.ndarray:
    """Gradients of the three l=1 functions at the origin, shape ``(3, 3)``.

    ``table[j, s]`` is the s-derivative of the function with flat index 1+j.
    """
    lms = [(1, m) for m in (-1, 0, 1)]
    axes_list = [((s,), (s,)) for s in range(3)]
    return _origin_table((3, 3), axes_list, lms)


def hessian_table() -> np.ndarray:
    """Hessians of the five l=2 functions at the origin, shape ``(5, 3, 3)``."""
    lms = [(2, m) for m in range(-2, 3)]
    axes_list = [((r, s), (r, s)) for r in range(3) for s in range(3)]
    return _origin_table((5, 3, 3), axes_list, lms)


def third_derivative_table() -> np.ndarray:
    """Third derivatives of the seven l=3 functions at the origin.

    Shape ``(7, 3, 3, 3)``; the trailing axes are fully symmetric.
    """
    lms = [(3, m) for m in range(-3, 4)]
    axes_list = [((r, s, t), (r, s, t))
                 for r in range(3) for s in range(3) for t in range(3)]
    return _origin_table((7, 3, 3, 3), axes_list, lms)


# cached constant tables used by the confinement formulas
GRAD_L1 = gradient_table()
HESS_L2 = hessian_table()
THIRD_L3 = third_derivative_table()
