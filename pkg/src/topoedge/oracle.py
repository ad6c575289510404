"""Brute-force checks of the closed-form results used by the detector.

* :func:`validate_topo_gradient` inserts one stripe into a finely resolved
  smoothing problem and compares the exact change of the functional with the
  first-order prediction ``2 eps^3 alpha (kappa - 1) M grad^m u(y) . grad^m u(y)``.
* :func:`convergence_study` measures discretization errors against
  manufactured solutions.
* :func:`tau_sweep` maximizes the polarization quadratic form over a dense
  set of directions.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from math import comb

import numpy as np
from numpy.polynomial import Polynomial

from .errors import ConfigError
from .grid import Grid, deriv_m
from .solver import (
    CGInfo,
    DiffusionProblem,
    SmootherProblem,
    functional_J,
    solve_diffusion,
    solve_smoother,
)
from .stripes import Stripe, rasterize
from .symtensor import SymTensor, canonical_direction, dominant_direction_m3, perp, quadratic_form_comps

__all__ = [
    "AsymptoticsReport",
    "band_limited",
    "validate_topo_gradient",
    "ConvergenceRow",
    "ConvergenceTable",
    "convergence_study",
    "CONVERGENCE_KINDS",
    "flux_continuity",
    "tau_sweep",
    "direction_gap_m3",
    "sweep_values",
    "tensor_bounds_check",
    "eigenstructure_check",
    "lemma_check",
    "tensor_suites",
]

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Topological gradient


@dataclass
class AsymptoticsReport:
    eps_list: list[float]
    measured_dJ: list[float]
    predicted_dJ: list[float]
    ratios: list[float]
    h_list: list[float] = field(default_factory=list)
    n_list: list[int] = field(default_factory=list)
    identity_dJ: list[float] = field(default_factory=list)
    cg_iterations: list[int] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    kappa: float = 0.0
    alpha: float = 0.0
    m: int = 2

    def errors(self) -> np.ndarray:
        return np.abs(np.asarray(self.ratios) - 1.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["eps", "h", "n", "measured_dJ", "predicted_dJ", "ratio", "identity_dJ", "cg_iterations"])
        for row in zip(self.eps_list, self.h_list, self.n_list, self.measured_dJ, self.predicted_dJ,
                       self.ratios, self.identity_dJ, self.cg_iterations):
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def band_limited(L: float = 1.0):
    """A smooth ``L``-periodic test function with a few low Fourier modes."""
    k = 2 * np.pi / L

    def f(X, Y):
        return np.cos(k * X + 0.3) + 0.5 * np.sin(2 * k * Y + 1.0) + 0.3 * np.cos(k * (X + Y))

    return f


def _interp(T: np.ndarray, grid: Grid, y) -> np.ndarray:
    """Bilinear interpolation of a tensor field at a world point."""
    fx = y[0] / grid.h - 0.5
    fy = y[1] / grid.h - 0.5
    i0, j0 = int(np.floor(fx)), int(np.floor(fy))
    tx, ty = fx - i0, fy - j0
    return (
        (1 - tx) * (1 - ty) * T[:, j0, i0]
        + tx * (1 - ty) * T[:, j0, i0 + 1]
        + (1 - tx) * ty * T[:, j0 + 1, i0]
        + tx * ty * T[:, j0 + 1, i0 + 1]
    )


def validate_topo_gradient(
    f=None,
    y=None,
    tau=(1.0, 0.0),
    kappa: float = 0.25,
    alpha: float = 0.0625,
    m: int = 2,
    eps_list=(0.2, 0.1, 0.05),
    L: float = 1.0,
    cells_per_width: float = 4.0,
    cg_tol: float = 1e-11,
) -> AsymptoticsReport:
    """Exact versus predicted change of ``J`` when one stripe is inserted.

    The smoothing problem is posed on the periodic square ``[0, L]^2`` so that
    the unperturbed solve is exact in Fourier space and the perturbed one is
    preconditioned by it.  ``f`` is a callable ``f(X, Y)`` (default
    :func:`band_limited`); ``y`` defaults to the square's centre, which is a
    pixel corner on every grid used here.  Each level uses ``h <= eps^2 /
    cells_per_width`` with ``cells_per_width >= 4``.
    """
    eps_list = [float(e) for e in eps_list]
    if any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps_list must be strictly decreasing")
    if cells_per_width < 4:
        raise ConfigError("the stripe width must span at least 4 pixels (h <= eps^2 / 4)")
    if not 0 < kappa <= 1:
        raise ConfigError(f"kappa must lie in (0, 1], got {kappa}")
    f = f or band_limited(L)
    y = np.array([L / 2, L / 2] if y is None else y, dtype=float)
    tau = np.asarray(tau, dtype=float)
    tau = tau / np.hypot(*tau)
    rep = AsymptoticsReport([], [], [], [], kappa=kappa, alpha=alpha, m=m)
    for eps in eps_list:
        t0 = time.perf_counter()
        n = int(np.ceil(cells_per_width * L / eps**2))
        n += n % 2
        h = L / n
        if h > eps**2 / 4 * (1 + 1e-12):
            raise ConfigError(f"stripe of eps={eps} is unresolved on h={h}")
        grid = Grid(n, n, h)
        X, Y = grid.meshgrid()
        fv = f(X, Y)
        u = solve_smoother(SmootherProblem(fv, None, alpha, m, h, cg_tol, boundary="periodic",
                                           preconditioner="fft"))
        ve = np.where(rasterize(Stripe(tuple(y), tuple(tau), eps), grid), kappa, 1.0)
        info = CGInfo()
        ue = solve_smoother(SmootherProblem(fv, ve, alpha, m, h, cg_tol, boundary="periodic",
                                            preconditioner="fft", x0=u), info)
        dJ = functional_J(ue, ve, fv, alpha, m, h, "periodic") - functional_J(u, None, fv, alpha, m, h, "periodic")
        # at both minimizers J = 1/2 (|f|^2 - <u, f>), hence the difference below
        dJ_id = -0.5 * h * h * float(np.sum((ue - u) * fv))
        T = _interp(deriv_m(u, grid, m), grid, y)
        q = float(quadratic_form_comps(tau, kappa, T))
        pred = 2.0 * eps**3 * alpha * (kappa - 1.0) * q
        rep.eps_list.append(eps)
        rep.h_list.append(h)
        rep.n_list.append(n)
        rep.measured_dJ.append(dJ)
        rep.identity_dJ.append(dJ_id)
        rep.predicted_dJ.append(pred)
        rep.ratios.append(dJ / pred if pred != 0 else float("nan"))
        rep.cg_iterations.append(info.iterations)
        rep.seconds.append(time.perf_counter() - t0)
        log.info("eps=%g n=%d ratio=%.4f (%d CG iterations)", eps, n, rep.ratios[-1], info.iterations)
    return rep


# ---------------------------------------------------------------------------
# Convergence studies

CONVERGENCE_KINDS = ("smoother_m1", "smoother_m2", "smoother_m3", "diffusion")
_ALPHA = {1: 0.1, 2: 0.01, 3: 0.001}


@dataclass
class ConvergenceRow:
    h: float
    error: float
    order: float | None


@dataclass
class ConvergenceTable:
    kind: str
    rows: list[ConvergenceRow]

    @property
    def orders(self) -> list[float]:
        return [r.order for r in self.rows if r.order is not None]

    def to_csv(self) -> str:
        lines = ["h,error,order"]
        for r in self.rows:
            lines.append(f"{r.h!r},{r.error!r},{'' if r.order is None else repr(r.order)}")
        return "\r\n".join(lines) + "\r\n"


def _bubble(power: int) -> Polynomial:
    return Polynomial([0.0, 1.0, -1.0]) ** power  # (t (1 - t))^power


def _manufactured(m: int):
    """Exact solution and forcing of ``u + alpha (-1)^m Delta^m u = f`` on the unit
    square, vanishing to order ``m`` on the boundary."""
    alpha = _ALPHA[m]
    if m == 1:
        def u_exact(X, Y):
            return np.sin(np.pi * X) * np.sin(np.pi * Y)

        def forcing(X, Y):
            return (1 + 2 * alpha * np.pi**2) * u_exact(X, Y)

        return alpha, u_exact, forcing

    p = _bubble(m)

    def u_exact(X, Y):
        return p(X) * p(Y)

    def forcing(X, Y):
        # Delta^m (p(x) p(y)) = sum_k C(m, k) p^(2k)(x) p^(2m-2k)(y)
        lap = sum(comb(m, k) * p.deriv(2 * k)(X) * p.deriv(2 * m - 2 * k)(Y) for k in range(m + 1))
        return u_exact(X, Y) + alpha * (-1) ** m * lap

    return alpha, u_exact, forcing


def _slab_exact(D1: float, D2: float, mu: float, x0: float = 0.5):
    """Two-slab solution of ``-(D u')' + mu u = 0`` with continuous ``u`` and flux at ``x0``."""
    if mu == 0:
        s1, s2 = 1.0, D1 / D2

        def u(X):
            return np.where(X < x0, 1.0 + s1 * (X - x0), 1.0 + s2 * (X - x0))

        return u
    k1, k2 = np.sqrt(mu / D1), np.sqrt(mu / D2)
    b = D1 * k1 / (D2 * k2)

    def u(X):
        z = X - x0
        return np.where(z < 0, np.cosh(k1 * z) + np.sinh(k1 * z), np.cosh(k2 * z) + b * np.sinh(k2 * z))

    return u


def _slab_problem(n: int, D1=1.0, D2=10.0, mu=1.0):
    """Pixel-centred ``n x n`` grid on the unit square, interface at the face ``x = 1/2``."""
    if n % 2:
        raise ConfigError("the two-slab grid needs an even pixel count")
    h = 1.0 / n
    grid = Grid(n, n, h)
    X, _ = grid.meshgrid()
    D = np.where(X < 0.5, D1, D2)
    exact = _slab_exact(D1, D2, mu)(X)
    return grid, DiffusionProblem(D, np.full_like(X, mu), exact, h, cg_tol=1e-13), exact


def convergence_study(kind: str, h_list=(1 / 32, 1 / 64, 1 / 128, 1 / 256)) -> ConvergenceTable:
    """Discrete L2 errors against a manufactured solution and observed orders
    ``log2(e(2h) / e(h))`` (for halving sequences; general ratios use ``log``)."""
    if kind not in CONVERGENCE_KINDS:
        raise ConfigError(f"unknown convergence kind {kind!r}; choose from {CONVERGENCE_KINDS}")
    rows: list[ConvergenceRow] = []
    for h in h_list:
        n = int(round(1.0 / h))
        if kind == "diffusion":
            grid, prob, exact = _slab_problem(n)
            u = solve_diffusion(prob)
            keep = np.abs(grid.meshgrid()[0] - 0.5) > 0.125  # fixed band around the interface
            err = np.sqrt(grid.h**2 * np.sum(((u - exact) * keep)[1:-1, 1:-1] ** 2))
            hh = grid.h
        else:
            m = int(kind[-1])
            alpha, u_exact, forcing = _manufactured(m)
            # n - 1 unknowns; the clamped ring sits on x = 0 and x = 1
            hh = 1.0 / n
            x = np.arange(1, n) * hh
            XX, YY = np.meshgrid(x, x)
            u = solve_smoother(SmootherProblem(forcing(XX, YY), None, alpha, m, hh, method="direct"))
            err = np.sqrt(hh**2 * np.sum((u - u_exact(XX, YY)) ** 2))
        order = None
        if rows:
            order = float(np.log(rows[-1].error / err) / np.log(rows[-1].h / hh))
        rows.append(ConvergenceRow(hh, float(err), order))
        log.info("%s h=%g error=%.3e order=%s", kind, hh, err, order)
    return ConvergenceTable(kind, rows)


def flux_continuity(n: int = 256, D1: float = 1.0, D2: float = 10.0) -> float:
    """Relative mismatch of ``D u_x`` on the two sides of a diffusion interface.

    Steady two-slab problem with ``mu = 0``; fluxes are one-sided face
    differences one pixel away from the interface, averaged over the rows
    not touching the boundary ring.
    """
    grid, prob, _ = _slab_problem(n, D1, D2, mu=0.0)
    u = solve_diffusion(prob)
    i = n // 2  # first pixel right of the interface
    rows = slice(1, -1)
    left = D1 * (u[rows, i - 1] - u[rows, i - 2]) / grid.h
    right = D2 * (u[rows, i + 1] - u[rows, i]) / grid.h
    return float(np.max(np.abs(left - right) / np.abs(left)))


# ---------------------------------------------------------------------------
# Direction sweeps


def tau_sweep(T: SymTensor, kappa: float, n_angles: int = 3600) -> tuple[float, float]:
    """Best direction angle in ``[0, pi)`` and the maximum of ``M(tau) T . T``."""
    if n_angles < 360:
        raise ConfigError("use at least 360 angles")
    theta = np.arange(n_angles) * (np.pi / n_angles)
    taus = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    vals = quadratic_form_comps(taus, kappa, np.asarray(T.comps, dtype=float))
    k = int(np.argmax(vals))
    return float(theta[k]), float(vals[k])


def sweep_values(T: SymTensor, kappa: float, n_angles: int = 3600) -> tuple[np.ndarray, np.ndarray]:
    """All sweep angles and values (for plots and flatness checks)."""
    theta = np.arange(n_angles) * (np.pi / n_angles)
    taus = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return theta, quadratic_form_comps(taus, kappa, np.asarray(T.comps, dtype=float))


def direction_gap_m3(T: SymTensor, kappa: float, n_angles: int = 3600) -> dict:
    """Compare the swept optimum for an order-3 tensor with the kernel-matrix rules.

    Returns the sweep maximum and the form's value along the dominant kernel
    eigenvector and along its perpendicular.
    """
    if T.order != 3:
        raise ConfigError("direction_gap_m3 expects an order-3 tensor")
    angle, vmax = tau_sweep(T, kappa, n_angles)
    d = dominant_direction_m3(T)
    comps = np.asarray(T.comps, dtype=float)
    along = float(quadratic_form_comps(d, kappa, comps))
    across = float(quadratic_form_comps(canonical_direction(perp(d)), kappa, comps))
    return {"sweep_angle": angle, "sweep_max": vmax, "kernel_value": along, "kernel_perp_value": across}


# ---------------------------------------------------------------------------
# Randomized tensor suites


def _random_comps(rng: np.random.Generator, m: int, n: int) -> np.ndarray:
    return rng.standard_normal((n, m + 1))


def _random_taus(rng: np.random.Generator, n: int) -> np.ndarray:
    theta = rng.uniform(0.0, 2 * np.pi, n)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def tensor_bounds_check(n: int = 10_000, seed: int = 0, rtol: float = 1e-9) -> dict:
    """``|E|^2 <= M E . E <= |E|^2 / kappa`` for random orders, ``kappa``, ``tau``, ``E``."""
    rng = np.random.default_rng(seed)
    ms = rng.integers(1, 4, n)
    worst_low = worst_high = np.inf
    for m in (1, 2, 3):
        k = int(np.sum(ms == m))
        if not k:
            continue
        kappa = rng.uniform(0.01, 0.49, k)
        taus = _random_taus(rng, k)
        comps = _random_comps(rng, m, k)
        q = quadratic_form_comps(taus, kappa, comps)
        norm2 = comps**2 @ np.array([comb(m, j) for j in range(m + 1)], dtype=float)
        worst_low = min(worst_low, float(np.min(q / norm2 - (1 - rtol))))
        worst_high = min(worst_high, float(np.min(norm2 / kappa * (1 + rtol) - q)))
    return {"name": "bounds", "samples": n, "passed": bool(worst_low >= 0 and worst_high >= 0),
            "lower_margin": worst_low, "upper_margin": worst_high}


def eigenstructure_check(n: int = 100, seed: int = 0, tol: float = 1e-12) -> dict:
    """``M E^h = E^h`` for ``h <= m`` and ``M E^(m+1) = E^(m+1) / kappa``."""
    from .symtensor import Polarization, apply_M, basis

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        m = int(rng.integers(1, 4))
        kappa = float(rng.uniform(0.01, 0.49))
        tau = _random_taus(rng, 1)[0]
        p = Polarization(tuple(tau), kappa, m)
        for h, E in enumerate(basis(tau, m), start=1):
            mu = 1.0 if h <= m else 1.0 / kappa
            res = np.asarray(apply_M(p, E).comps) - mu * np.asarray(E.comps)
            worst = max(worst, float(np.max(np.abs(res))))
    return {"name": "eigenstructure", "samples": n, "passed": bool(worst <= tol), "max_residual": worst}


def lemma_check(n: int = 100, seed: int = 0, kappas=(0.01, 0.1, 0.25), n_angles: int = 3600,
                rtol: float = 1e-6, angle_tol_deg: float = 0.1) -> dict:
    """Swept maximum of ``M(tau) H . H`` against ``l1^2 + l2^2 / kappa`` and its
    direction, for random symmetric ``H`` with ``|l1| < |l2|``."""
    from .symtensor import optimal_direction_m2

    rng = np.random.default_rng(seed)
    worst_rel = worst_ang = 0.0
    done = 0
    while done < n:
        H = SymTensor.from_comps(rng.standard_normal(3))
        lam = np.linalg.eigvalsh(np.array([[H.comps[0], H.comps[1]], [H.comps[1], H.comps[2]]]))
        if abs(abs(lam[0]) - abs(lam[1])) < 1e-3 * max(abs(lam)):
            continue  # near-degenerate: the maximizer is ill-conditioned
        kappa = kappas[done % len(kappas)]
        value, tau_hat = optimal_direction_m2(H, kappa)
        angle, vmax = tau_sweep(H, kappa, n_angles)
        worst_rel = max(worst_rel, abs(vmax - value) / value)
        ref = np.arctan2(tau_hat[1], tau_hat[0]) % np.pi
        d = abs(angle - ref) % np.pi
        worst_ang = max(worst_ang, float(np.degrees(min(d, np.pi - d))))
        done += 1
    return {"name": "lemma_m2", "samples": n, "passed": bool(worst_rel <= rtol and worst_ang <= angle_tol_deg),
            "max_rel_value_error": worst_rel, "max_angle_error_deg": worst_ang}


def tensor_suites(seed: int = 0) -> list[dict]:
    """Run the bounds, eigenstructure and direction suites."""
    return [tensor_bounds_check(seed=seed), eigenstructure_check(seed=seed), lemma_check(seed=seed)]
