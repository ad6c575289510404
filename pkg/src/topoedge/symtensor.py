"""Symmetric tensors over R^2 and the thin-stripe polarization tensor.

A symmetric tensor of order ``m`` on R^2 has only ``m + 1`` independent
entries: the value of a hypermatrix entry depends only on how many of its
indices point along ``y``.  ``SymTensor.comps[j]`` stores the entry with
``j`` indices equal to 2; the entry occurs ``C(m, j)`` times in the full
``2 x ... x 2`` hypermatrix, which is the weight used by the Frobenius inner
product.

The polarization tensor of a thin stripe with direction ``tau`` and
conductivity ratio ``kappa`` acts diagonally in the basis returned by
:func:`basis`: eigenvalue 1 on ``E^1..E^m`` and ``1/kappa`` on ``E^{m+1}``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb, sqrt

import numpy as np

__all__ = [
    "SymTensor",
    "TensorBasis",
    "Polarization",
    "frobenius_inner",
    "binomial_weights",
    "basis",
    "basis_comps",
    "apply_M",
    "quadratic_form",
    "quadratic_form_comps",
    "perp",
    "eig_sym2",
    "optimal_direction_m2",
    "kernel_matrix_m3",
    "dominant_direction_m3",
    "canonical_direction",
]

_UNIT_TOL = 1e-12


def binomial_weights(m: int) -> np.ndarray:
    """Multiplicities ``C(m, j)`` of the ``m + 1`` stored components."""
    return np.array([comb(m, j) for j in range(m + 1)], dtype=float)


@dataclass(frozen=True)
class SymTensor:
    """Order-``m`` symmetric tensor over R^2 in compressed form."""

    order: int
    comps: tuple[float, ...]

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"tensor order must be >= 1, got {self.order}")
        comps = tuple(float(c) for c in np.asarray(self.comps, dtype=float).ravel())
        if len(comps) != self.order + 1:
            raise ValueError(
                f"order-{self.order} tensor needs {self.order + 1} components, got {len(comps)}"
            )
        object.__setattr__(self, "comps", comps)

    @classmethod
    def from_comps(cls, comps) -> "SymTensor":
        comps = np.asarray(comps, dtype=float).ravel()
        return cls(len(comps) - 1, tuple(comps))

    @classmethod
    def zeros(cls, m: int) -> "SymTensor":
        return cls(m, (0.0,) * (m + 1))

    @classmethod
    def from_full(cls, full) -> "SymTensor":
        """Compress a full hypermatrix; the input is assumed symmetric."""
        full = np.asarray(full, dtype=float)
        m = full.ndim
        comps = [full[(0,) * (m - j) + (1,) * j] for j in range(m + 1)]
        return cls(m, tuple(comps))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.comps)

    def to_full(self) -> np.ndarray:
        """Expand to the full ``2^m`` hypermatrix (indices 0 = x, 1 = y)."""
        m = self.order
        full = np.empty((2,) * m)
        for idx in itertools.product((0, 1), repeat=m):
            full[idx] = self.comps[sum(idx)]
        return full

    def norm(self) -> float:
        return sqrt(frobenius_inner(self, self))

    def __add__(self, other: "SymTensor") -> "SymTensor":
        _check_orders(self, other)
        return SymTensor(self.order, tuple(np.add(self.comps, other.comps)))

    def __sub__(self, other: "SymTensor") -> "SymTensor":
        _check_orders(self, other)
        return SymTensor(self.order, tuple(np.subtract(self.comps, other.comps)))

    def __mul__(self, scalar: float) -> "SymTensor":
        return SymTensor(self.order, tuple(scalar * np.array(self.comps)))

    __rmul__ = __mul__


def _check_orders(a: SymTensor, b: SymTensor) -> None:
    if a.order != b.order:
        raise ValueError(f"tensor order mismatch: {a.order} vs {b.order}")


def frobenius_inner(a: SymTensor, b: SymTensor) -> float:
    """Full-hypermatrix scalar product ``sum_i a_i b_i`` from compressed storage."""
    _check_orders(a, b)
    w = binomial_weights(a.order)
    return float(np.dot(w, np.multiply(a.comps, b.comps)))


def perp(tau) -> np.ndarray:
    """Rotate by +90 degrees: ``(x, y) -> (-y, x)``.  Works on ``(..., 2)`` arrays."""
    tau = np.asarray(tau, dtype=float)
    return np.stack([-tau[..., 1], tau[..., 0]], axis=-1)


def _as_unit(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (2,):
        raise ValueError(f"direction must be a 2-vector, got shape {tau.shape}")
    if abs(np.hypot(*tau) - 1.0) > _UNIT_TOL:
        raise ValueError(f"direction must be a unit vector, |tau| = {np.hypot(*tau)!r}")
    return tau


def basis_comps(tau, m: int) -> np.ndarray:
    """Compressed components of ``E^1..E^{m+1}`` for directions ``tau``.

    ``tau`` may carry leading batch dimensions; the result has shape
    ``(..., m + 1, m + 1)`` with ``[..., h, j]`` the ``j``-th component of
    ``E^{h+1}``.  No unit-norm check is done here.
    """
    tau = np.asarray(tau, dtype=float)
    t1, t2 = tau[..., 0], tau[..., 1]
    p1, p2 = -t2, t1
    out = np.zeros(tau.shape[:-1] + (m + 1, m + 1))
    for b in range(m + 1):  # b = number of tau-perp factors, E^{b+1}
        scale = 1.0 / sqrt(comb(m, b))
        for j in range(m + 1):
            # entry with indices (1,..,1,2,..,2): m - j ones, j twos.  Place s of
            # the perp factors on the "2" slots and b - s on the "1" slots.
            acc = 0.0
            for s in range(max(0, b - (m - j)), min(b, j) + 1):
                acc = acc + (
                    comb(m - j, b - s)
                    * comb(j, s)
                    * t1 ** (m - j - (b - s))
                    * p1 ** (b - s)
                    * t2 ** (j - s)
                    * p2**s
                )
            out[..., b, j] = scale * acc
    return out


@dataclass(frozen=True)
class TensorBasis:
    """Orthonormal basis ``E^1..E^{m+1}`` of order-``m`` symmetric tensors aligned with ``tau``."""

    tau: tuple[float, float]
    order: int
    elements: tuple[SymTensor, ...]

    def __getitem__(self, h: int) -> SymTensor:
        """1-based access matching the usual ``E^h`` labelling."""
        if not 1 <= h <= self.order + 1:
            raise IndexError(h)
        return self.elements[h - 1]

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)


def basis(tau, m: int) -> TensorBasis:
    tau = _as_unit(tau)
    if m < 1:
        raise ValueError(f"order must be >= 1, got {m}")
    comps = basis_comps(tau, m)
    elements = tuple(SymTensor(m, tuple(row)) for row in comps)
    return TensorBasis((float(tau[0]), float(tau[1])), m, elements)


@dataclass(frozen=True)
class Polarization:
    """Polarization tensor of a thin stripe with direction ``tau``.

    ``kappa`` is the coefficient inside the stripe.  The detector requires
    ``0 < kappa < 1/2``; the tensor itself is well defined (and its bounds
    hold) for any ``0 < kappa <= 1``, which the asymptotic checks use.
    """

    tau: tuple[float, float]
    kappa: float
    order: int

    def __post_init__(self):
        tau = _as_unit(self.tau)
        object.__setattr__(self, "tau", (float(tau[0]), float(tau[1])))
        if not 0.0 < self.kappa <= 1.0:
            raise ValueError(f"kappa must lie in (0, 1], got {self.kappa}")
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")

    @property
    def eigenvalues(self) -> np.ndarray:
        mu = np.ones(self.order + 1)
        mu[-1] = 1.0 / self.kappa
        return mu


def _check_pol(p: Polarization, e: SymTensor) -> None:
    if e.order != p.order:
        raise ValueError(f"tensor order {e.order} does not match polarization order {p.order}")


def apply_M(p: Polarization, e: SymTensor) -> SymTensor:
    _check_pol(p, e)
    m = p.order
    b = basis_comps(np.array(p.tau), m)
    coeff = b @ (binomial_weights(m) * np.array(e.comps))  # E . E^h
    return SymTensor(m, tuple((p.eigenvalues * coeff) @ b))


def quadratic_form_comps(tau, kappa, comps) -> np.ndarray:
    """Vectorized ``M(tau, kappa) E . E`` for batches of directions and/or tensors.

    ``tau`` has shape ``(..., 2)`` and ``comps`` shape ``(..., m + 1)``; both
    broadcast against each other.
    """
    comps = np.asarray(comps, dtype=float)
    m = comps.shape[-1] - 1
    b = basis_comps(tau, m)
    proj = np.einsum("...hj,...j->...h", b, binomial_weights(m) * comps)
    kappa = np.asarray(kappa, dtype=float)
    return np.sum(proj[..., :-1] ** 2, axis=-1) + proj[..., -1] ** 2 / kappa


def quadratic_form(p: Polarization, e: SymTensor) -> float:
    _check_pol(p, e)
    return float(quadratic_form_comps(np.array(p.tau), p.kappa, np.array(e.comps)))


def canonical_direction(v) -> np.ndarray:
    """Representative of the line ``+-v`` with polar angle in ``[0, pi)``."""
    v = np.asarray(v, dtype=float)
    flip = (v[..., 1] < 0) | ((v[..., 1] == 0) & (v[..., 0] < 0))
    return np.where(flip[..., None], -v, v) + 0.0  # + 0.0 turns -0.0 into 0.0


def eig_sym2(a, b, d):
    """Closed-form eigen-decomposition of ``[[a, b], [b, d]]`` (array-friendly).

    Returns ``(lam_plus, lam_minus, v_plus)`` with ``lam_plus >= lam_minus``;
    the ``lam_minus`` eigenvector is ``perp(v_plus)``.  For a multiple of the
    identity ``v_plus = (1, 0)``.
    """
    a, b, d = np.broadcast_arrays(*(np.asarray(z, dtype=float) for z in (a, b, d)))
    mean = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    theta = 0.5 * np.arctan2(2.0 * b, a - d)
    v_plus = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return mean + rad, mean - rad, v_plus


def _small_large(H: SymTensor):
    a, b, d = H.comps
    lp, lm, vp = eig_sym2(a, b, d)
    lp, lm = float(lp), float(lm)
    vm = perp(vp)
    if abs(lp) < abs(lm):
        return (lp, vp), (lm, vm)
    if abs(lp) > abs(lm):
        return (lm, vm), (lp, vp)
    # |lambda_1| == |lambda_2|: report the eigenvector of the algebraically smaller
    # eigenvalue as the small one (for lp == lm this is (0, 1) rotated back to (1, 0)).
    if lp == lm:
        return (lp, np.array([1.0, 0.0])), (lm, np.array([0.0, 1.0]))
    return (lm, vm), (lp, vp)


def optimal_direction_m2(H: SymTensor, kappa: float) -> tuple[float, np.ndarray]:
    """Maximum of ``M(tau) H . H`` over unit ``tau`` and a maximizing direction.

    With eigenpairs ``(l1, t1)``, ``(l2, t2)`` of ``H`` ordered so that
    ``|l1| <= |l2|`` the maximum equals ``l1**2 + l2**2 / kappa`` and is
    attained at ``tau = +-t1``: the stripe runs along the direction of the
    weaker curvature, so that its normal carries the strong one.
    """
    if H.order != 2:
        raise ValueError(f"expected an order-2 tensor, got order {H.order}")
    if not any(H.comps):
        raise ValueError("zero tensor has no optimal direction")
    (l1, t1), (l2, _) = _small_large(H)
    return l1**2 + l2**2 / kappa, canonical_direction(t1)


def kernel_matrix_m3(T: SymTensor) -> np.ndarray:
    """``U_ij = sum_{k,h} T_ikh T_khj`` from the full expansion of an order-3 tensor."""
    if T.order != 3:
        raise ValueError(f"expected an order-3 tensor, got order {T.order}")
    full = T.to_full()
    return np.einsum("ikh,khj->ij", full, full)


def dominant_direction_m3(T: SymTensor) -> np.ndarray:
    if not any(T.comps):
        raise ValueError("zero tensor has no dominant direction")
    U = kernel_matrix_m3(T)
    lp, lm, vp = eig_sym2(U[0, 0], U[0, 1], U[1, 1])
    # U is a sum of squares of symmetric slices, hence PSD: lp has the largest modulus.
    v = vp if abs(lp) >= abs(lm) else perp(vp)
    return canonical_direction(v)
