"""Uniform pixel grids and node-centred finite differences of order m.

Fields are plain ``numpy`` arrays of shape ``(ny, nx)`` indexed ``[j, i]``
(row-major, ``i`` along x).  Node ``(i, j)`` sits at the pixel centre
``((i + 0.5) h, (j + 0.5) h)``.  A tensor field of order ``m`` is an array of
shape ``(m + 1, ny, nx)`` whose leading axis holds the compressed
:class:`~topoedge.symtensor.SymTensor` components, i.e. component ``j`` is
``d^m u / dx^(m-j) dy^j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
import scipy.sparse as sp

from .symtensor import SymTensor, binomial_weights

__all__ = [
    "Grid",
    "fd_weights",
    "diff_matrix_1d",
    "deriv_operators",
    "deriv_m",
    "deriv_m_adjoint",
    "frobenius_sq_field",
    "tensor_at",
    "inner",
    "tensor_inner",
]


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    h: float = 1.0

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid dimensions must be positive, got {self.nx}x{self.ny}")
        if not self.h > 0:
            raise ValueError(f"pixel size must be positive, got {self.h}")

    @classmethod
    def like(cls, arr: np.ndarray, h: float = 1.0) -> "Grid":
        ny, nx = np.shape(arr)[-2:]
        return cls(nx, ny, h)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.h

    @property
    def y(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.h

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """World coordinates ``(X, Y)`` of all pixel centres, each ``(ny, nx)``."""
        return np.meshgrid(self.x, self.y)

    def index_of(self, point) -> tuple[int, int]:
        """``(i, j)`` of the pixel containing a world point."""
        px, py = point
        return int(np.floor(px / self.h)), int(np.floor(py / self.h))

    def center(self, i: int, j: int) -> np.ndarray:
        return np.array([(i + 0.5) * self.h, (j + 0.5) * self.h])

    def check_order(self, m: int) -> None:
        need = 4 * m + 1
        if self.nx < need or self.ny < need:
            raise ValueError(
                f"grid {self.nx}x{self.ny} too small for order {m} (needs >= {need} per side)"
            )


def fd_weights(offsets, k: int) -> np.ndarray:
    """Weights ``w`` with ``sum_p w_p u(o_p) ~ u^(k)(0)`` for unit spacing.

    Exact for polynomials of degree below ``len(offsets)``.
    """
    offsets = np.asarray(offsets, dtype=float)
    n = len(offsets)
    if k >= n:
        raise ValueError(f"need more than {k} points for a derivative of order {k}")
    V = np.vander(offsets, n, increasing=True).T  # V[q, p] = o_p**q
    rhs = np.zeros(n)
    rhs[k] = factorial(k)
    return np.linalg.solve(V, rhs)


def _stencil_offsets(i: int, n: int, k: int) -> np.ndarray:
    if k == 0:
        return np.array([0])
    r = (k + 1) // 2
    if r <= i <= n - 1 - r:
        return np.arange(-r, r + 1)
    # second order one-sided: k + 2 points pushed inside [0, n - 1]
    npts = k + 2
    start = min(max(i - r, 0), n - npts)
    return np.arange(start, start + npts) - i


@lru_cache(maxsize=64)
def diff_matrix_1d(n: int, k: int) -> sp.csr_matrix:
    """Second-order accurate ``d^k/dx^k`` on ``n`` nodes of unit spacing.

    Central stencils in the interior, one-sided ones near both ends.
    """
    if k == 0:
        return sp.identity(n, format="csr")
    if n < k + 2:
        raise ValueError(f"{n} nodes cannot carry a derivative of order {k}")
    rows, cols, vals = [], [], []
    cache: dict[tuple, np.ndarray] = {}
    for i in range(n):
        offs = _stencil_offsets(i, n, k)
        key = tuple(offs)
        if key not in cache:
            w = fd_weights(offs, k)
            w[np.abs(w) < 1e-13 * np.abs(w).max()] = 0.0
            cache[key] = w
        rows.extend([i] * len(offs))
        cols.extend(i + offs)
        vals.extend(cache[key])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@lru_cache(maxsize=32)
def _deriv_operators(nx: int, ny: int, h: float, m: int) -> tuple[sp.csr_matrix, ...]:
    ops = []
    for j in range(m + 1):
        op = sp.kron(diff_matrix_1d(ny, j), diff_matrix_1d(nx, m - j), format="csr")
        ops.append(op / h**m)
    return tuple(ops)


def deriv_operators(grid: Grid, m: int) -> tuple[sp.csr_matrix, ...]:
    """Sparse matrices of the ``m + 1`` components of ``deriv_m`` (row-major)."""
    grid.check_order(m)
    return _deriv_operators(grid.nx, grid.ny, float(grid.h), m)


def deriv_m(u: np.ndarray, grid: Grid, m: int) -> np.ndarray:
    """Order-``m`` derivative tensor field, shape ``(m + 1, ny, nx)``."""
    u = np.asarray(u, dtype=float)
    if u.shape != grid.shape:
        raise ValueError(f"field shape {u.shape} does not match grid {grid.shape}")
    flat = u.ravel()
    return np.stack([(op @ flat).reshape(grid.shape) for op in deriv_operators(grid, m)])


def deriv_m_adjoint(T: np.ndarray, grid: Grid) -> np.ndarray:
    """Adjoint of :func:`deriv_m` for the weighted inner products of :func:`inner`
    and :func:`tensor_inner` (the ``h**2`` factors cancel)."""
    T = np.asarray(T, dtype=float)
    m = T.shape[0] - 1
    w = binomial_weights(m)
    out = np.zeros(grid.size)
    for wj, op, comp in zip(w, deriv_operators(grid, m), T):
        out += wj * (op.T @ comp.ravel())
    return out.reshape(grid.shape)


def frobenius_sq_field(T: np.ndarray) -> np.ndarray:
    """Per-node ``|T|^2`` with binomial multiplicities."""
    T = np.asarray(T, dtype=float)
    w = binomial_weights(T.shape[0] - 1)
    return np.tensordot(w, T**2, axes=1)


def tensor_at(T: np.ndarray, i: int, j: int) -> SymTensor:
    return SymTensor.from_comps(np.asarray(T)[:, j, i])


def inner(u: np.ndarray, w: np.ndarray, grid: Grid) -> float:
    return float(grid.h**2 * np.sum(u * w))


def tensor_inner(S: np.ndarray, T: np.ndarray, grid: Grid) -> float:
    w = binomial_weights(S.shape[0] - 1)
    return float(grid.h**2 * np.sum(np.tensordot(w, S * T, axes=1)))
