"""Synthetic quantitative photoacoustic data.

A phantom is a pair of piecewise-constant maps: absorption ``mu`` and
diffusion ``D``.  The fluence ``u`` solves ``-div(D grad u) + mu u = 0`` with
boundary illumination ``g`` and the recorded datum is the absorbed energy
``E = Gamma mu u``.  Jumps of ``mu`` show up as jumps of ``E``; jumps of ``D``
only bend ``u``, so they appear as jumps of ``grad E``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .grid import Grid
from .solver import DiffusionProblem, solve_diffusion

__all__ = [
    "Shape",
    "Phantom",
    "Illumination",
    "QpatData",
    "make_phantom",
    "default_shapes",
    "default_phantom",
    "illumination_field",
    "forward",
    "add_noise",
]

SHAPE_KINDS = ("disk", "rect")


@dataclass(frozen=True)
class Shape:
    """A disk ``(cx, cy, r)`` or rectangle ``(x0, y0, x1, y1)`` with value overrides.

    ``mu`` and ``D`` are absolute values; ``None`` leaves that map untouched.
    """

    kind: str
    params: tuple[float, ...]
    mu: float | None = None
    D: float | None = None

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ConfigError(f"unknown shape kind {self.kind!r}; expected one of {SHAPE_KINDS}")
        params = tuple(float(p) for p in self.params)
        n = 3 if self.kind == "disk" else 4
        if len(params) != n:
            raise ConfigError(f"{self.kind} needs {n} parameters, got {len(params)}")
        if self.kind == "disk" and params[2] <= 0:
            raise ConfigError("disk radius must be positive")
        if self.kind == "rect" and (params[2] <= params[0] or params[3] <= params[1]):
            raise ConfigError("rectangle corners must satisfy x0 < x1 and y0 < y1")
        if self.mu is not None and self.mu < 0:
            raise ConfigError("absorption override must be non-negative")
        if self.D is not None and self.D <= 0:
            raise ConfigError("diffusion override must be positive")
        object.__setattr__(self, "params", params)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        if self.kind == "disk":
            cx, cy, r = self.params
            return cx - r, cy - r, cx + r, cy + r
        return self.params

    def contains(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Points on or inside the shape."""
        if self.kind == "disk":
            cx, cy, r = self.params
            return (X - cx) ** 2 + (Y - cy) ** 2 <= r * r
        x0, y0, x1, y1 = self.params
        return (X >= x0) & (X <= x1) & (Y >= y0) & (Y <= y1)

    def boundary_distance(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Euclidean distance to the shape's outline."""
        X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
        if self.kind == "disk":
            cx, cy, r = self.params
            return np.abs(np.hypot(X - cx, Y - cy) - r)
        x0, y0, x1, y1 = self.params
        dx = np.maximum(np.maximum(x0 - X, X - x1), 0.0)
        dy = np.maximum(np.maximum(y0 - Y, Y - y1), 0.0)
        outside = np.hypot(dx, dy)
        inside = np.minimum(np.minimum(X - x0, x1 - X), np.minimum(Y - y0, y1 - Y))
        return np.where((dx > 0) | (dy > 0), outside, np.abs(inside))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "params": list(self.params)}
        if self.mu is not None:
            d["mu"] = self.mu
        if self.D is not None:
            d["D"] = self.D
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Shape":
        unknown = set(d) - {"kind", "params", "mu", "D"}
        if unknown:
            raise ConfigError(f"unknown shape keys: {sorted(unknown)}")
        return cls(d["kind"], tuple(d["params"]), d.get("mu"), d.get("D"))


@dataclass
class Phantom:
    """Rasterized coefficient maps plus the shapes they came from."""

    grid: Grid
    mu: np.ndarray
    D: np.ndarray
    shapes: tuple[Shape, ...] = ()
    mu0: float = 0.0
    D0: float = 1.0
    Gamma: float = 1.0

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.D = np.asarray(self.D, dtype=float)
        if self.mu.shape != self.grid.shape or self.D.shape != self.grid.shape:
            raise ConfigError("coefficient maps must match the grid shape")
        if np.any(self.mu < 0):
            raise ConfigError("absorption must be non-negative")
        if np.any(self.D <= 0):
            raise ConfigError("diffusion must be positive")
        if not self.Gamma > 0:
            raise ConfigError("Gamma must be positive")

    def jump_distance(self, points, which: str = "all") -> np.ndarray:
        """Distance from world points ``(k, 2)`` to the outlines of the shapes
        that change ``mu`` (``which="mu"``), ``D`` (``"D"``) or either."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        sel = [s for s in self.shapes if _shape_affects(s, which)]
        if not sel:
            return np.full(len(pts), np.inf)
        return np.min([s.boundary_distance(pts[:, 0], pts[:, 1]) for s in sel], axis=0)

    def jump_mask(self, width: float, which: str = "all") -> np.ndarray:
        """Pixels whose centre lies within ``width`` of a jump outline."""
        X, Y = self.grid.meshgrid()
        d = self.jump_distance(np.column_stack([X.ravel(), Y.ravel()]), which)
        return (d <= width).reshape(self.grid.shape)


def _shape_affects(s: Shape, which: str) -> bool:
    if which == "mu":
        return s.mu is not None
    if which == "D":
        return s.D is not None
    if which == "all":
        return s.mu is not None or s.D is not None
    raise ConfigError(f"unknown coefficient selector {which!r}")


def make_phantom(shapes, grid: Grid, mu0: float = 0.01, D0: float = 1.0, Gamma: float = 1.0) -> Phantom:
    """Paint shapes over constant backgrounds; later shapes override earlier ones."""
    if not mu0 > 0:
        raise ConfigError(f"background absorption must be positive, got {mu0}")
    if not D0 > 0:
        raise ConfigError(f"background diffusion must be positive, got {D0}")
    shapes = tuple(s if isinstance(s, Shape) else Shape.from_dict(s) for s in shapes)
    W, H = grid.nx * grid.h, grid.ny * grid.h
    mu = np.full(grid.shape, float(mu0))
    D = np.full(grid.shape, float(D0))
    X, Y = grid.meshgrid()
    for s in shapes:
        x0, y0, x1, y1 = s.bbox
        if x0 < 0 or y0 < 0 or x1 > W or y1 > H:
            raise ConfigError(f"{s.kind} {s.params} extends outside the {W}x{H} domain")
        inside = s.contains(X, Y)
        if s.mu is not None:
            mu[inside] = s.mu
        if s.D is not None:
            D[inside] = s.D
    return Phantom(grid, mu, D, shapes, float(mu0), float(D0), float(Gamma))


# Default four-disk layout on a 130 x 130 pixel image (unit pixels).  The
# coefficient values are synthetic.  With mu0 = 0.01 and D0 = 1 the diffusion
# length is 10 pixels; Gamma sets the data scale so that the jumps of the
# absorption disks and the kinks of the diffusion disks straddle the detection
# thresholds of the shipped parameter presets.
DEFAULT_SIZE = 130
DEFAULT_MU0 = 0.01
DEFAULT_D0 = 1.0
DEFAULT_GAMMA = 60.0


def default_shapes(mu0: float = DEFAULT_MU0, D0: float = DEFAULT_D0) -> list[Shape]:
    """Two absorption disks (x5 large, x2 small at lower left) and two diffusion
    disks (x3 and x0.25)."""
    return [
        Shape("disk", (80.0, 80.0, 16.0), mu=5.0 * mu0),
        Shape("disk", (40.0, 40.0, 7.0), mu=2.0 * mu0),
        Shape("disk", (24.0, 70.0, 12.0), D=3.0 * D0),
        Shape("disk", (104.0, 100.0, 12.0), D=0.25 * D0),
    ]


def default_phantom(n: int = DEFAULT_SIZE, mu0: float = DEFAULT_MU0, D0: float = DEFAULT_D0,
                    Gamma: float = DEFAULT_GAMMA) -> Phantom:
    """Default four-disk phantom, rescaled to an ``n x n`` image."""
    scale = n / DEFAULT_SIZE
    shapes = []
    for s in default_shapes(mu0, D0):
        cx, cy, r = s.params
        shapes.append(replace(s, params=(cx * scale, cy * scale, r * scale)))
    return make_phantom(shapes, Grid(n, n, 1.0), mu0, D0, Gamma)


@dataclass(frozen=True)
class Illumination:
    """Constant boundary values per side (``bottom`` is the ``j = 0`` row)."""

    left: float = 1.0
    right: float = 1.0
    bottom: float = 1.0
    top: float = 1.0

    def __post_init__(self):
        if min(self.left, self.right, self.bottom, self.top) < 0:
            raise ConfigError("illumination must be non-negative")


def illumination_field(grid: Grid, g: Illumination | float | np.ndarray | None = None) -> np.ndarray:
    """Full-size array whose outer ring carries the boundary values."""
    if g is None:
        g = Illumination()
    if isinstance(g, Illumination):
        out = np.zeros(grid.shape)
        out[:, 0], out[:, -1] = g.left, g.right
        out[0, :], out[-1, :] = g.bottom, g.top
        return out
    arr = np.broadcast_to(np.asarray(g, dtype=float), grid.shape).copy()
    if np.any(arr < 0):
        raise ConfigError("illumination must be non-negative")
    return arr


@dataclass
class QpatData:
    fluence: np.ndarray
    energy: np.ndarray
    noisy_energy: np.ndarray | None = None
    noise_sigma: float = 0.0
    noise_percent: float = 0.0
    seed: int | None = None

    @property
    def data(self) -> np.ndarray:
        """The noisy energy if present, otherwise the clean one."""
        return self.energy if self.noisy_energy is None else self.noisy_energy


def forward(p: Phantom, g=None, cg_tol: float = 1e-12) -> QpatData:
    """Solve the diffusion model and form ``E = Gamma mu u``."""
    gfield = illumination_field(p.grid, g)
    u = solve_diffusion(DiffusionProblem(p.D, p.mu, gfield, p.grid.h, cg_tol))
    return QpatData(fluence=u, energy=p.Gamma * p.mu * u)


def add_noise(d: QpatData, percent: float, seed: int = 0) -> QpatData:
    """Add i.i.d. Gaussian noise with ``sigma = percent/100 * mean(E)``."""
    if percent < 0:
        raise ConfigError(f"noise percentage must be non-negative, got {percent}")
    sigma = percent / 100.0 * float(np.mean(d.energy))
    if sigma == 0:
        noisy = d.energy.copy()
    else:
        noisy = d.energy + np.random.default_rng(seed).normal(0.0, sigma, d.energy.shape)
    return replace(d, noisy_energy=noisy, noise_sigma=sigma, noise_percent=float(percent), seed=seed)
