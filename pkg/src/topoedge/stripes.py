"""Thin stripes around short segments, their pixel footprints and dilations."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from math import pi

import numpy as np
from scipy import ndimage

from .errors import ConfigError, EmptyRegionError
from .grid import Grid

__all__ = [
    "Stripe",
    "StripeSet",
    "stripe_area",
    "box_area",
    "caps_area",
    "segment_distance",
    "rasterize",
    "disk_offsets",
    "dilate",
    "admissible_region",
    "CSV_FIELDS",
]

CSV_FIELDS = ("y_x", "y_y", "tau_x", "tau_y", "eps")

# pixel centres exactly on the open stripe boundary stay outside
_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class Stripe:
    """Segment ``{y + rho tau : |rho| <= eps}`` and its ``eps**2`` neighbourhood."""

    y: tuple[float, float]
    tau: tuple[float, float]
    eps: float

    def __post_init__(self):
        y = tuple(float(c) for c in self.y)
        tau = tuple(float(c) for c in self.tau)
        if len(y) != 2 or len(tau) != 2:
            raise ConfigError("stripe centre and direction must be 2-vectors")
        if abs(np.hypot(*tau) - 1.0) > 1e-9:
            raise ConfigError(f"stripe direction must be a unit vector, got {tau}")
        if not self.eps > 0:
            raise ConfigError(f"stripe half-length must be positive, got {self.eps}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "eps", float(self.eps))

    @property
    def half_width(self) -> float:
        return self.eps**2

    @property
    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        y, t = np.array(self.y), np.array(self.tau)
        return y - self.eps * t, y + self.eps * t

    def as_record(self) -> tuple[float, ...]:
        return (*self.y, *self.tau, self.eps)


def stripe_area(s: Stripe | float) -> float:
    """``|Omega_eps| = eps^3 (4 + pi eps)``."""
    eps = s.eps if isinstance(s, Stripe) else float(s)
    return eps**3 * (4.0 + pi * eps)


def box_area(s: Stripe | float) -> float:
    """Area ``4 eps^3`` of the rectangle around the segment (caps excluded)."""
    eps = s.eps if isinstance(s, Stripe) else float(s)
    return 4.0 * eps**3


def caps_area(s: Stripe | float) -> float:
    """Area ``pi eps^4`` of the two half-disc caps."""
    eps = s.eps if isinstance(s, Stripe) else float(s)
    return pi * eps**4


def segment_distance(X: np.ndarray, Y: np.ndarray, s: Stripe) -> np.ndarray:
    """Euclidean distance from points ``(X, Y)`` to the stripe's segment."""
    dx, dy = X - s.y[0], Y - s.y[1]
    rho = np.clip(dx * s.tau[0] + dy * s.tau[1], -s.eps, s.eps)
    return np.hypot(dx - rho * s.tau[0], dy - rho * s.tau[1])


def _window(s: Stripe, grid: Grid, reach: float) -> tuple[slice, slice]:
    a, b = s.endpoints
    lo = np.minimum(a, b) - reach
    hi = np.maximum(a, b) + reach
    if lo[0] < 0 or lo[1] < 0 or hi[0] > grid.nx * grid.h or hi[1] > grid.ny * grid.h:
        raise ConfigError(f"stripe at {s.y} with eps={s.eps} leaves the grid")
    i0 = max(int(np.floor(lo[0] / grid.h - 0.5)), 0)
    i1 = min(int(np.ceil(hi[0] / grid.h - 0.5)) + 1, grid.nx)
    j0 = max(int(np.floor(lo[1] / grid.h - 0.5)), 0)
    j1 = min(int(np.ceil(hi[1] / grid.h - 0.5)) + 1, grid.ny)
    return slice(j0, j1), slice(i0, i1)


def rasterize(s: Stripe, grid: Grid) -> np.ndarray:
    """Boolean mask of the pixels whose centre lies in the stripe.

    A centre is inside when its distance to the segment is below ``eps**2``
    or at most ``h/2``; the second rule keeps a one-pixel footprint when the
    stripe is thinner than a pixel.
    """
    reach = max(s.half_width, 0.5 * grid.h)
    sj, si = _window(s, grid, reach)
    X, Y = np.meshgrid(grid.x[si], grid.y[sj])
    d = segment_distance(X, Y, s)
    inside = (d < s.half_width * (1 - _EDGE_TOL)) | (d <= 0.5 * grid.h * (1 + _EDGE_TOL))
    mask = np.zeros(grid.shape, dtype=bool)
    mask[sj, si] = inside
    return mask


def disk_offsets(r: float, h: float) -> np.ndarray:
    """Boolean structuring element of pixel offsets within distance ``r``."""
    k = int(np.floor(r / h + 1e-9))
    d = np.arange(-k, k + 1) * h
    DX, DY = np.meshgrid(d, d)
    return np.hypot(DX, DY) <= r * (1 + 1e-12) + 1e-12 * h


def dilate(mask: np.ndarray, r: float, h: float = 1.0) -> np.ndarray:
    """Minkowski sum of a pixel set with the closed disk of radius ``r``."""
    if r < 0:
        raise ConfigError(f"dilation radius must be non-negative, got {r}")
    mask = np.asarray(mask, dtype=bool)
    se = disk_offsets(r, h)
    if se.shape == (1, 1):
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=se)


def admissible_region(grid: Grid, delta0: float, excluded: np.ndarray | None = None) -> np.ndarray:
    """Pixels farther than ``delta0`` from the border and not excluded."""
    if delta0 < 0:
        raise ConfigError(f"delta0 must be non-negative, got {delta0}")
    di = np.minimum(grid.x, grid.nx * grid.h - grid.x)
    dj = np.minimum(grid.y, grid.ny * grid.h - grid.y)
    thr = delta0 + 1e-9 * grid.h
    region = (dj[:, None] > thr) & (di[None, :] > thr)
    if excluded is not None:
        region &= ~np.asarray(excluded, dtype=bool)
    if not region.any():
        raise EmptyRegionError(
            f"no admissible pixels on a {grid.nx}x{grid.ny} grid with delta0={delta0}"
        )
    return region


@dataclass
class StripeSet:
    """Ordered stripes and the union of their footprints on a grid."""

    grid: Grid
    stripes: list[Stripe] = field(default_factory=list)
    mask: np.ndarray = None

    def __post_init__(self):
        stripes, self.stripes = list(self.stripes), []
        self.mask = np.zeros(self.grid.shape, dtype=bool)
        for s in stripes:
            self.insert(s)

    def __len__(self) -> int:
        return len(self.stripes)

    def __iter__(self):
        return iter(self.stripes)

    def insert(self, s: Stripe) -> np.ndarray:
        """Add a stripe; returns its footprint."""
        fp = rasterize(s, self.grid)
        self.stripes.append(s)
        self.mask |= fp
        return fp

    def coefficient(self, kappa: float) -> np.ndarray:
        """``kappa`` on the stripes, 1 elsewhere."""
        return np.where(self.mask, kappa, 1.0)

    def midpoints(self) -> np.ndarray:
        return np.array([s.y for s in self.stripes], dtype=float).reshape(-1, 2)

    def records(self) -> list[dict]:
        return [dict(zip(CSV_FIELDS, s.as_record())) for s in self.stripes]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(CSV_FIELDS)
        for s in self.stripes:
            w.writerow([repr(v) for v in s.as_record()])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.records())

    @classmethod
    def from_csv(cls, text: str, grid: Grid) -> "StripeSet":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ConfigError(f"segment CSV must have columns {','.join(CSV_FIELDS)}")
        return cls(grid, [_stripe_from_record(row) for row in reader])

    @classmethod
    def from_json(cls, text: str, grid: Grid) -> "StripeSet":
        return cls(grid, [_stripe_from_record(rec) for rec in json.loads(text)])


def _stripe_from_record(rec) -> Stripe:
    return Stripe(
        (float(rec["y_x"]), float(rec["y_y"])),
        (float(rec["tau_x"]), float(rec["tau_y"])),
        float(rec["eps"]),
    )
