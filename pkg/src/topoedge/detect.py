"""Greedy edge detection with thin-stripe inclusions.

Each iteration picks the admissible pixel where the first-order decrease of
the functional is largest, inserts a stripe there and removes a dilated
neighbourhood of the stripe from the admissible set.  The loop stops when the
best achievable decrease no longer pays for the perimeter penalty.

Three drivers are provided:

``algorithm_no_update``
    one smoothing solve with ``v = 1``, indicator ``|grad^m u|^2``;
``algorithm_eigen_m2``
    as above for ``m = 2`` with the sharper indicator ``l1^2 + l2^2 / kappa``;
``algorithm_with_update``
    after every batch of ``s`` stripes, ``v`` is set to ``kappa`` on the
    stripes and the smoother is solved again.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError
from .grid import Grid, deriv_m, frobenius_sq_field, tensor_at
from .solver import CGInfo, SmootherProblem, solve_smoother
from .stripes import Stripe, StripeSet, admissible_region, dilate
from .symtensor import (
    SymTensor,
    canonical_direction,
    dominant_direction_m3,
    eig_sym2,
    optimal_direction_m2,
    perp,
)

__all__ = [
    "DetectorConfig",
    "DetectionResult",
    "TraceRow",
    "PRESETS",
    "preset",
    "algo_defaults",
    "indicator_field",
    "threshold",
    "select_direction",
    "algorithm_no_update",
    "algorithm_eigen_m2",
    "algorithm_with_update",
    "run",
]

log = logging.getLogger(__name__)

DIRECTION_POLICIES = ("lemma", "paper_text")
CRITERIA = ("grad_norm", "eigen_m2")


@dataclass(frozen=True)
class DetectorConfig:
    """Parameters of a detection run.  Lengths are in world units (pixel size ``h``).

    ``direction_policy="lemma"`` lays the stripe along the direction that
    maximizes the topological gradient (perpendicular to the dominant
    variation); ``"paper_text"`` lays it along the dominant eigenvector.
    ``max_segments`` caps the number of insertions (``None``: no cap).
    """

    m: int = 2
    alpha: float = 0.1
    kappa: float = 0.01
    beta: float = 1.1029e-4
    eps: float = 1.0
    delta0: float = 12.0
    rho0: float = 1.0
    s: int = 50
    direction_policy: str = "lemma"
    criterion: str = "grad_norm"
    h: float = 1.0
    cg_tol: float = 1e-10
    max_segments: int | None = None
    allow_m3_update: bool = False

    def __post_init__(self):
        if self.m not in (1, 2, 3):
            raise ConfigError(f"m must be 1, 2 or 3, got {self.m}")
        if not 0 < self.kappa < 0.5:
            raise ConfigError(f"kappa must lie in (0, 1/2), got {self.kappa}")
        for name in ("alpha", "beta", "eps", "rho0", "h", "cg_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.delta0 < 0:
            raise ConfigError(f"delta0 must be non-negative, got {self.delta0}")
        if int(self.s) != self.s or self.s < 1:
            raise ConfigError(f"s must be a positive integer, got {self.s}")
        if self.direction_policy not in DIRECTION_POLICIES:
            raise ConfigError(f"direction_policy must be one of {DIRECTION_POLICIES}")
        if self.criterion not in CRITERIA:
            raise ConfigError(f"criterion must be one of {CRITERIA}")
        if self.criterion == "eigen_m2" and self.m != 2:
            raise ConfigError("the eigenvalue criterion is defined for m = 2 only")
        if self.max_segments is not None and self.max_segments < 0:
            raise ConfigError("max_segments must be non-negative")

    def replace(self, **changes) -> "DetectorConfig":
        d = asdict(self)
        d.update(changes)
        return DetectorConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown detector keys: {sorted(unknown)}")
        return cls(**d)


# Published parameter sets, keyed by (test number, m).  kappa = 0.01 throughout,
# eps = rho0 = h, delta0 = 12 h.
PRESETS: dict[tuple[int, int], dict] = {
    (1, 1): dict(alpha=0.1, beta=0.0072),
    (1, 2): dict(alpha=0.1, beta=1.1029e-4),
    (1, 3): dict(alpha=0.1, beta=6.4453e-5),
    (2, 2): dict(alpha=0.1, beta=9.5803e-5, criterion="eigen_m2"),
    (3, 1): dict(alpha=0.1, beta=0.0072, s=40),
    (3, 2): dict(alpha=0.1, beta=1.1029e-4, s=50),
    (4, 2): dict(alpha=1.0, beta=9.288e-4),
    (5, 1): dict(alpha=1.0, beta=0.0724),
    (5, 2): dict(alpha=1.0, beta=0.0020),
    (5, 3): dict(alpha=1.0, beta=0.0015),
}


def preset(test: int, m: int, **overrides) -> DetectorConfig:
    """Configuration of a published test for order ``m``."""
    try:
        params = PRESETS[(test, m)]
    except KeyError:
        raise ConfigError(f"no parameter set for test {test} with m = {m}") from None
    return DetectorConfig(**{"m": m, "kappa": 0.01, **params, **overrides})


def algo_defaults(algo: int, m: int) -> DetectorConfig:
    """Default configuration for detection algorithm 1, 2 or 3 at order ``m``."""
    if algo not in (1, 2, 3):
        raise ConfigError(f"algorithm must be 1, 2 or 3, got {algo}")
    if algo == 2 and m != 2:
        raise ConfigError("algorithm 2 requires m = 2")
    if algo == 3 and m == 3:
        return preset(1, 3, s=50)
    return preset(algo, m)


@dataclass
class TraceRow:
    iteration: int
    y: tuple[float, float]
    tau: tuple[float, float]
    value: float
    solve: int


@dataclass
class DetectionResult:
    """Outcome of a run.

    ``indicator_trace`` lists the indicator maximum of every iteration; when
    the run stopped on the threshold, the final entry is that terminating probe
    (below the threshold) and has no segment.  ``solve_iterations`` holds, for
    every smoother solve, the number of segments inserted before it.
    """

    segments: StripeSet
    u_final: np.ndarray
    iterations: int
    threshold_used: float
    indicator_trace: list[float]
    rows: list[TraceRow] = field(default_factory=list)
    solve_iterations: list[int] = field(default_factory=list)
    stop_reason: str = ""
    config: DetectorConfig | None = None

    @property
    def n_solves(self) -> int:
        return len(self.solve_iterations)

    def to_dict(self) -> dict:
        return {
            "config": None if self.config is None else self.config.to_dict(),
            "iterations": self.iterations,
            "threshold": self.threshold_used,
            "stop_reason": self.stop_reason,
            "solve_iterations": list(self.solve_iterations),
            "indicator_trace": [float(v) for v in self.indicator_trace],
            "segments": self.segments.records(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        return self.segments.to_csv()

    def trace_csv(self) -> str:
        """One line per iteration: position, direction, indicator, solve count."""
        lines = ["iteration,y_x,y_y,tau_x,tau_y,indicator,solve"]
        for r in self.rows:
            lines.append(
                f"{r.iteration},{r.y[0]!r},{r.y[1]!r},{r.tau[0]!r},{r.tau[1]!r},{r.value!r},{r.solve}"
            )
        return "\r\n".join(lines) + "\r\n"


def _hessian_eig_indicator(T: np.ndarray, kappa: float) -> np.ndarray:
    lp, lm, _ = eig_sym2(T[0], T[1], T[2])
    a, b = lp**2, lm**2
    return np.minimum(a, b) + np.maximum(a, b) / kappa


def indicator_field(u: np.ndarray, cfg: DetectorConfig, grid: Grid | None = None) -> np.ndarray:
    """Per-pixel score: ``|grad^m u|^2`` or, for ``eigen_m2``, ``l1^2 + l2^2/kappa``."""
    grid = grid or Grid.like(u, cfg.h)
    T = deriv_m(u, grid, cfg.m)
    if cfg.criterion == "eigen_m2":
        if cfg.m != 2:
            raise ConfigError("the eigenvalue criterion is defined for m = 2 only")
        return _hessian_eig_indicator(T, cfg.kappa)
    return frobenius_sq_field(T)


def threshold(cfg: DetectorConfig) -> float:
    """Smallest indicator value whose stripe still lowers the penalized functional."""
    t = cfg.beta / (cfg.alpha * cfg.eps**2 * (1.0 - cfg.kappa))
    return t * cfg.kappa if cfg.criterion == "grad_norm" else t


def select_direction(T: SymTensor, cfg: DetectorConfig) -> np.ndarray:
    """Stripe direction for the derivative tensor ``T`` at the chosen pixel."""
    if T.order != cfg.m:
        raise ConfigError(f"tensor order {T.order} does not match m = {cfg.m}")
    if not any(T.comps):
        raise ConfigError("zero derivative tensor has no direction")
    if T.order == 1:
        g = np.array(T.comps, dtype=float)
        return canonical_direction(perp(g / np.hypot(*g)))
    if T.order == 2:
        _, t1 = optimal_direction_m2(T, cfg.kappa)
        return t1 if cfg.direction_policy == "lemma" else canonical_direction(perp(t1))
    d = dominant_direction_m3(T)
    return canonical_direction(perp(d) if cfg.direction_policy == "lemma" else d)


class _Detector:
    """Mutable state of a greedy run."""

    def __init__(self, f: np.ndarray, cfg: DetectorConfig):
        self.f = np.asarray(f, dtype=float)
        if self.f.ndim != 2:
            raise ConfigError("input data must be a 2D array")
        if not np.all(np.isfinite(self.f)):
            raise ConfigError("input data contains non-finite values")
        self.cfg = cfg
        self.grid = Grid.like(self.f, cfg.h)
        try:
            self.grid.check_order(cfg.m)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.L = admissible_region(self.grid, cfg.delta0)
        self.stripes = StripeSet(self.grid)
        self.thr = threshold(cfg)
        self.trace: list[float] = []
        self.rows: list[TraceRow] = []
        self.solves: list[int] = []
        self.u = None
        self.T = None
        self.ind = None
        self.stop_reason = ""

    def solve(self, v: np.ndarray | None = None) -> None:
        info = CGInfo()
        p = SmootherProblem(self.f, v, self.cfg.alpha, self.cfg.m, self.cfg.h, self.cfg.cg_tol, x0=self.u)
        self.u = solve_smoother(p, info)
        self.solves.append(len(self.stripes))
        self.T = deriv_m(self.u, self.grid, self.cfg.m)
        if self.cfg.criterion == "eigen_m2":
            self.ind = _hessian_eig_indicator(self.T, self.cfg.kappa)
        else:
            self.ind = frobenius_sq_field(self.T)
        log.info("smoother solve %d after %d segments (%d CG iterations)",
                 len(self.solves), len(self.stripes), info.iterations)

    def budget_left(self) -> bool:
        cap = self.cfg.max_segments
        if cap is not None and len(self.stripes) >= cap:
            self.stop_reason = "budget"
            return False
        return True

    def step(self) -> bool:
        """Insert one stripe; ``False`` when the run is over."""
        if not self.L.any():
            self.stop_reason = "region_exhausted"
            return False
        masked = np.where(self.L, self.ind, -np.inf)
        k = int(np.argmax(masked))  # first maximum: lowest row-major index
        j, i = divmod(k, self.grid.nx)
        value = float(masked[j, i])
        self.trace.append(value)
        if value < self.thr:
            self.stop_reason = "threshold"
            return False
        tau = select_direction(tensor_at(self.T, i, j), self.cfg)
        y = self.grid.center(i, j)
        stripe = Stripe(tuple(y), tuple(tau), self.cfg.eps)
        footprint = self.stripes.insert(stripe)
        self.L &= ~dilate(footprint, self.cfg.rho0, self.grid.h)
        self.rows.append(TraceRow(len(self.stripes), stripe.y, stripe.tau, value, len(self.solves)))
        return True

    def result(self) -> DetectionResult:
        return DetectionResult(
            segments=self.stripes,
            u_final=self.u,
            iterations=len(self.stripes),
            threshold_used=self.thr,
            indicator_trace=self.trace,
            rows=self.rows,
            solve_iterations=self.solves,
            stop_reason=self.stop_reason,
            config=self.cfg,
        )


def _greedy(f, cfg: DetectorConfig) -> DetectionResult:
    det = _Detector(f, cfg)
    det.solve()
    while det.budget_left() and det.step():
        pass
    log.info("detection finished: %d segments (%s)", len(det.stripes), det.stop_reason)
    return det.result()


def algorithm_no_update(f, cfg: DetectorConfig) -> DetectionResult:
    """Single smoothing solve, indicator ``|grad^m u|^2``."""
    if cfg.criterion != "grad_norm":
        raise ConfigError("algorithm 1 uses the grad_norm criterion")
    return _greedy(f, cfg)


def algorithm_eigen_m2(f, cfg: DetectorConfig) -> DetectionResult:
    """Single smoothing solve for ``m = 2`` with the Hessian-eigenvalue indicator."""
    if cfg.m != 2:
        raise ConfigError("algorithm 2 requires m = 2")
    if cfg.criterion != "eigen_m2":
        cfg = cfg.replace(criterion="eigen_m2")
    return _greedy(f, cfg)


def algorithm_with_update(f, cfg: DetectorConfig) -> DetectionResult:
    """Greedy insertion in batches of ``s`` with a ``v``-update and re-solve after
    every full batch.  A batch that ends on the threshold ends the run."""
    if cfg.criterion != "grad_norm":
        raise ConfigError("algorithm 3 uses the grad_norm criterion")
    if cfg.m == 3 and not cfg.allow_m3_update:
        raise ConfigError("algorithm 3 with m = 3 must be enabled explicitly (allow_m3_update)")
    det = _Detector(f, cfg)
    det.solve()
    while True:
        inserted = 0
        while inserted < cfg.s and det.budget_left() and det.step():
            inserted += 1
        if inserted < cfg.s:
            break
        if not det.budget_left() or not det.L.any():
            det.stop_reason = det.stop_reason or "region_exhausted"
            break
        det.solve(det.stripes.coefficient(cfg.kappa))
    log.info("detection finished: %d segments, %d solves (%s)",
             len(det.stripes), len(det.solves), det.stop_reason)
    return det.result()


def run(f, cfg: DetectorConfig, algo: int = 1) -> DetectionResult:
    """Dispatch to algorithm 1, 2 or 3."""
    if algo == 1:
        return algorithm_no_update(f, cfg)
    if algo == 2:
        return algorithm_eigen_m2(f, cfg)
    if algo == 3:
        return algorithm_with_update(f, cfg)
    raise ConfigError(f"algorithm must be 1, 2 or 3, got {algo}")
