"""Uniform dyadic B-splines on [0, 1], their Gram systems and L2 projection.

Index conventions
-----------------
A basis of order ``r`` at level ``j`` holds the functions
``N_l(x) = N^{(r)}(2**j * x - l)`` for ``l = -r+1, ..., 2**j - 1``. Arrays
store them 0-based, so basis ``l`` lives at position ``l + r - 1``.

Inside dyadic cell ``c`` (``c = floor(2**j x)``) exactly ``r`` basis
functions are nonzero, namely ``l = c - s`` for ``s = 0, ..., r-1``, and
``N_{c-s}(x) = N^{(r)}(u + s)`` with ``u = 2**j x - c``. Those ``r`` local
polynomials ("pieces") are tabulated once per ``(r, deriv)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import comb
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from . import _kernels
from .errors import ContractError, NumericalError

MAX_LEVEL = 14


def _check_deriv(r: int, deriv_order: int) -> None:
    if r < 1:
        raise ContractError(f"spline order must be >= 1, got {r}")
    if deriv_order < 0:
        raise ContractError(f"deriv_order must be >= 0, got {deriv_order}")
    if deriv_order == 0:
        return
    # r = 2, d = 1 is the weak derivative N^(1) - N^(1)(. - 1)
    if deriv_order <= r - 2 or (r == 2 and deriv_order == 1):
        return
    raise ContractError(
        f"derivative of order {deriv_order} is not defined for order-{r} B-splines"
    )


def eval_bspline(r: int, u: float, deriv_order: int = 0) -> float:
    """Cardinal B-spline ``N^{(r)}`` (or a derivative) at a single point.

    Values use the convolution recurrence
    ``N^{(r)}(u) = (u N^{(r-1)}(u) + (r-u) N^{(r-1)}(u-1)) / (r-1)``,
    derivatives the difference rule ``N^{(r)'} = N^{(r-1)} - N^{(r-1)}(. - 1)``,
    both bottoming out at the indicator of ``[0, 1)``.
    """
    _check_deriv(r, deriv_order)
    return _bspline_rec(r, float(u), deriv_order)


def _bspline_rec(r: int, u: float, d: int) -> float:
    if d > 0:
        return _bspline_rec(r - 1, u, d - 1) - _bspline_rec(r - 1, u - 1.0, d - 1)
    if r == 1:
        return 1.0 if 0.0 <= u < 1.0 else 0.0
    if u <= 0.0 or u >= r:
        return 0.0
    return (u * _bspline_rec(r - 1, u, 0) + (r - u) * _bspline_rec(r - 1, u - 1.0, 0)) / (r - 1)


@lru_cache(maxsize=None)
def _value_pieces(r: int) -> tuple[Polynomial, ...]:
    if r == 1:
        return (Polynomial([1.0]),)
    lower = _value_pieces(r - 1)
    u = Polynomial([0.0, 1.0])
    pieces = []
    for s in range(r):
        acc = Polynomial([0.0])
        if s <= r - 2:
            acc = acc + (u + s) * lower[s]
        if s >= 1:
            acc = acc + (r - u - s) * lower[s - 1]
        pieces.append(acc / (r - 1))
    return tuple(pieces)


@lru_cache(maxsize=None)
def piece_coefficients(r: int, deriv_order: int = 0) -> np.ndarray:
    """Coefficients ``C[s, p]`` with ``N^{(r)(d)}(u + s) = sum_p C[s, p] u**p`` on [0, 1].

    The derivative is taken with respect to the unscaled argument ``u``.
    """
    _check_deriv(r, deriv_order)
    lower = _value_pieces(r - deriv_order)
    coef = np.zeros((r, r))
    for s in range(r):
        acc = Polynomial([0.0])
        for i in range(deriv_order + 1):
            if 0 <= s - i < len(lower):
                acc = acc + (-1) ** i * comb(deriv_order, i) * lower[s - i]
        c = acc.coef
        coef[s, : c.size] = c
    coef.flags.writeable = False
    return coef


@dataclass(frozen=True)
class SplineBasis:
    """Order-``r`` B-spline basis of the dyadic Schoenberg space at level ``j``."""

    order: int
    level: int

    def __post_init__(self):
        if self.order < 1:
            raise ContractError(f"order must be >= 1, got {self.order}")
        if not 0 <= self.level <= MAX_LEVEL:
            raise ContractError(f"level must lie in [0, {MAX_LEVEL}], got {self.level}")

    @property
    def n_cells(self) -> int:
        return 2**self.level

    @property
    def dim(self) -> int:
        return self.n_cells + self.order - 1

    @property
    def knot_step(self) -> float:
        return 2.0**-self.level

    @property
    def first_index(self) -> int:
        return 1 - self.order

    @property
    def indices(self) -> range:
        return range(self.first_index, self.n_cells)

    def support(self, l: int) -> tuple[float, float]:
        h = self.knot_step
        return max(0.0, l * h), min(1.0, (l + self.order) * h)


def eval_basis(basis: SplineBasis, l: int, x: float, deriv_order: int = 0) -> float:
    """Evaluate ``N_{lj}^{(r)}`` (derivatives carry the chain-rule factor ``2**(j d)``)."""
    if l not in basis.indices:
        raise ContractError(f"basis index {l} outside {basis.indices}")
    if not 0.0 <= x <= 1.0:
        raise ContractError(f"x must lie in [0, 1], got {x}")
    r, j = basis.order, basis.level
    _check_deriv(r, deriv_order)
    u = 2.0**j * x - l
    if r == 1 and l == basis.n_cells - 1:
        # closed right endpoint so the last Haar function reaches x = 1
        return 1.0 if 0.0 <= u <= 1.0 else 0.0
    return 2.0 ** (j * deriv_order) * _bspline_rec(r, u, deriv_order)


def _cells(basis: SplineBasis, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(x, dtype=float) * basis.n_cells
    c = np.clip(np.floor(t).astype(np.int64), 0, basis.n_cells - 1)
    return c, t - c


def basis_values(
    basis: SplineBasis, x: np.ndarray, deriv_order: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Local representation of all basis functions at the points ``x``.

    Returns ``(cells, values)``; ``values[i, s]`` is basis function
    ``cells[i] - s`` (0-based column ``cells[i] - s + r - 1``) at ``x[i]``,
    derivatives already scaled by ``2**(j d)``.
    """
    coef = piece_coefficients(basis.order, deriv_order)
    c, u = _cells(basis, x)
    vals = np.polynomial.polynomial.polyval(u, coef.T).T
    vals = np.atleast_2d(vals)
    if deriv_order:
        vals = vals * 2.0 ** (basis.level * deriv_order)
    return c, vals


def design_matrix(basis: SplineBasis, x: np.ndarray, deriv_order: int = 0) -> np.ndarray:
    """Dense ``(len(x), dim)`` matrix of basis values; meant for small inputs."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    c, vals = basis_values(basis, x, deriv_order)
    out = np.zeros((x.size, basis.dim))
    rows = np.arange(x.size)
    for s in range(basis.order):
        out[rows, c - s + basis.order - 1] = vals[:, s]
    return out


def sum_basis(
    basis: SplineBasis,
    x: np.ndarray,
    deriv_order: int = 0,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """``sum_i N_q^{(d)}(x_i) [* weights_i]`` for every basis function ``q``.

    Uses the compiled single-pass kernel. With ``weights`` of shape
    ``(m, b)`` the result has shape ``(dim, b)``.
    """
    coef = np.ascontiguousarray(piece_coefficients(basis.order, deriv_order))
    x = np.ascontiguousarray(x, dtype=float)
    scale = float(basis.n_cells)
    if weights is None:
        out = np.empty(basis.dim)
        _kernels.accumulate(x, scale, coef, basis.n_cells, out)
    else:
        w = np.ascontiguousarray(weights, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        if w.shape[0] != x.size:
            raise ContractError("weights must have one row per point")
        out = np.empty((basis.dim, w.shape[1]))
        _kernels.accumulate_weighted(x, w, scale, coef, basis.n_cells, out)
    if deriv_order:
        out *= 2.0 ** (basis.level * deriv_order)
    return out


@dataclass(frozen=True, eq=False)
class GramFactor:
    """Banded Gram matrix ``G_j^{(r)}`` and its Cholesky factor.

    ``band`` and ``chol`` use LAPACK upper band storage: ``band[r-1+i-k, k]``
    holds ``G[i, k]`` for ``i <= k``. Note ``G`` is the Gram matrix of the
    rescaled functions on ``[0, 2**j]``; on [0, 1] the inner products are
    ``2**-j * G``.
    """

    basis: SplineBasis
    band: np.ndarray
    chol: np.ndarray

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve_banded((self.chol, False), rhs, check_finite=False)

    def dense(self) -> np.ndarray:
        return _band_to_dense(self.band)

    @cached_property
    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.basis.dim))


def _band_to_dense(band: np.ndarray) -> np.ndarray:
    w, n = band.shape
    out = np.zeros((n, n))
    for d in range(w):
        off = w - 1 - d
        idx = np.arange(off, n)
        out[idx - off, idx] = band[d, off:]
        out[idx, idx - off] = band[d, off:]
    return out


@lru_cache(maxsize=None)
def gauss_legendre(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    x, w = 0.5 * (t + 1.0), 0.5 * w
    # absorb the rounding residual so the weights sum to exactly 1
    for i in range(nodes):
        residual = 1.0 - math.fsum(w)
        if residual == 0.0:
            break
        w[i] += residual
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


@lru_cache(maxsize=64)
def _element_matrix(r: int) -> np.ndarray:
    # r nodes integrate products of two degree r-1 pieces exactly
    u, w = gauss_legendre(r)
    vals = np.polynomial.polynomial.polyval(u, piece_coefficients(r).T)
    vals = np.atleast_2d(vals)
    return (vals * w) @ vals.T


def gram_matrix(basis: SplineBasis) -> GramFactor:
    """Assemble and factor ``G_j^{(r)}`` cell by cell (boundary cells truncated)."""
    r, dim = basis.order, basis.dim
    elem = _element_matrix(r)
    band = np.zeros((r, dim))
    cells = np.arange(basis.n_cells)
    for s in range(r):
        for sp in range(s + 1):
            # row i = c - s + r - 1 <= column k = c - sp + r - 1
            np.add.at(band[r - 1 - (s - sp)], cells - sp + r - 1, elem[s, sp])
    band.flags.writeable = False
    try:
        chol = cholesky_banded(band, lower=False, check_finite=False)
    except LinAlgError as exc:
        m = re.search(r"(\d+)", str(exc))
        pivot = int(m.group(1)) if m else None
        raise NumericalError(
            f"Gram matrix for r={r}, j={basis.level} is not positive definite "
            f"(leading minor {pivot})",
            pivot=pivot,
        ) from exc
    chol.flags.writeable = False
    return GramFactor(basis=basis, band=band, chol=chol)


def inf_norm_inverse_gram(gram: GramFactor) -> float:
    """Max absolute row sum of ``G^{-1}``, the measured Gram constant ``d_r``."""
    return float(np.abs(gram.inverse).sum(axis=1).max())


def project(basis: SplineBasis, gram: GramFactor, moments: np.ndarray) -> np.ndarray:
    """Coefficients of the L2 projection given ``moments[m] = int N_m f``."""
    moments = np.asarray(moments, dtype=float)
    if moments.shape[0] != basis.dim:
        raise ContractError(
            f"expected {basis.dim} moments, got {moments.shape[0]}"
        )
    if gram.basis != basis:
        raise ContractError("Gram factor belongs to a different basis")
    return basis.n_cells * gram.solve(moments)


@lru_cache(maxsize=32)
def dyadic_nodes(level: int, nodes_per_cell: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on the ``2**level`` dyadic cells of [0, 1]."""
    u, w = gauss_legendre(nodes_per_cell)
    h = 2.0**-level
    left = np.arange(2**level) * h
    x = (left[:, None] + h * u[None, :]).ravel()
    ww = np.tile(h * w, 2**level)
    x.flags.writeable = False
    ww.flags.writeable = False
    return x, ww


def quadrature_l2(
    f: Callable[[np.ndarray], np.ndarray], cells_level: int, nodes_per_cell: int = 10
) -> float:
    """Composite Gauss-Legendre approximation of ``int_0^1 f``; ``f`` is vectorized.

    The weighted sum is accumulated with ``math.fsum`` so constants integrate to 1 exactly.
    """
    x, w = dyadic_nodes(cells_level, nodes_per_cell)
    return math.fsum(w * np.asarray(f(x), dtype=float))


def basis_moments(
    basis: SplineBasis,
    f: Callable[[np.ndarray], np.ndarray],
    level: int | None = None,
    nodes_per_cell: int = 10,
) -> np.ndarray:
    """``int N_m f`` for every basis function, by composite quadrature.

    ``f`` may return shape ``(npts,)`` or ``(npts, b)``.
    """
    level = basis.level if level is None else max(level, basis.level)
    x, w = dyadic_nodes(level, nodes_per_cell)
    fx = np.asarray(f(x), dtype=float)
    if fx.ndim == 1:
        return _weighted_basis_sum(basis, x, w * fx)
    return np.stack(
        [_weighted_basis_sum(basis, x, w * fx[:, q]) for q in range(fx.shape[1])], axis=1
    )


def _weighted_basis_sum(basis: SplineBasis, x: np.ndarray, wts: np.ndarray) -> np.ndarray:
    c, vals = basis_values(basis, x)
    out = np.zeros(basis.dim)
    for s in range(basis.order):
        out += np.bincount(c - s + basis.order - 1, weights=vals[:, s] * wts, minlength=basis.dim)
    return out


def spline_eval(basis: SplineBasis, coeffs: np.ndarray, x: np.ndarray, deriv_order: int = 0) -> np.ndarray:
    """Evaluate ``sum_l coeffs[l] N_l^{(d)}(x)``; ``coeffs`` may carry a trailing axis."""
    x = np.asarray(x, dtype=float)
    c, vals = basis_values(basis, x.ravel(), deriv_order)
    coeffs = np.asarray(coeffs, dtype=float)
    r = basis.order
    if coeffs.ndim == 1:
        out = np.zeros(c.size)
        for s in range(r):
            out += coeffs[c - s + r - 1] * vals[:, s]
        return out.reshape(x.shape)
    out = np.zeros((c.size, coeffs.shape[1]))
    for s in range(r):
        out += coeffs[c - s + r - 1] * vals[:, s, None]
    return out.reshape(x.shape + (coeffs.shape[1],))


@lru_cache(maxsize=64)
def cached_gram(basis: SplineBasis) -> GramFactor:
    """:func:`gram_matrix` memoized per basis; factors are immutable."""
    return gram_matrix(basis)
