"""Command-line front end: ``simulate``, ``detect``, ``validate``, ``tensor-check``.

Settings are resolved in three layers: built-in defaults, then a TOML file
given with ``--config``, then command-line flags.  Exit codes: 0 success,
1 configuration error, 2 I/O error, 3 solver failure, 4 empty admissible
region, 5 a validation check failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .detect import DetectorConfig, algo_defaults, run
from .errors import ConfigError, EmptyRegionError, SolverError
from .fileio import (
    dump_toml,
    load_toml,
    read_field,
    resize_box,
    write_field_csv,
    write_json,
    write_overlay,
    write_pgm,
)
from .grid import Grid
from .oracle import (
    convergence_study,
    flux_continuity,
    tensor_suites,
    validate_topo_gradient,
)
from .qpat import (
    DEFAULT_D0,
    DEFAULT_GAMMA,
    DEFAULT_MU0,
    DEFAULT_SIZE,
    Illumination,
    Shape,
    add_noise,
    default_shapes,
    forward,
    make_phantom,
)

log = logging.getLogger("topoedge")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_SOLVER, EXIT_EMPTY, EXIT_CHECK = 0, 1, 2, 3, 4, 5
SUBCOMMANDS = ("simulate", "detect", "validate", "tensor-check")
DETECTOR_KEYS = ("m", "alpha", "kappa", "beta", "eps", "delta0", "rho0", "s",
                 "direction_policy", "criterion", "max_segments", "allow_m3_update")
CHECKS = ("topo", "convergence", "tensor", "all")

# minimum observed orders accepted by ``validate --check convergence``
ORDER_FLOORS = {"smoother_m1": 1.8, "smoother_m2": 1.5, "smoother_m3": 1.5, "diffusion": 1.8}


@dataclass
class PhantomSpec:
    size: int = DEFAULT_SIZE
    mu0: float = DEFAULT_MU0
    D0: float = DEFAULT_D0
    Gamma: float = DEFAULT_GAMMA
    shapes: list[dict] | None = None
    illumination: dict = field(default_factory=lambda: asdict(Illumination()))

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        _reject_unknown(d, cls, "phantom")
        spec = cls(**d)
        unknown = set(spec.illumination) - {"left", "right", "bottom", "top"}
        if unknown:
            raise ConfigError(f"unknown illumination keys: {sorted(unknown)}")
        spec.illumination = {**asdict(Illumination()), **spec.illumination}
        return spec

    def resolved_shapes(self) -> list[Shape]:
        if self.shapes is None:
            scale = self.size / DEFAULT_SIZE
            return [Shape(s.kind, tuple(p * scale for p in s.params), s.mu, s.D)
                    for s in default_shapes(self.mu0, self.D0)]
        return [Shape.from_dict(s) for s in self.shapes]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shapes"] = [s.to_dict() for s in self.resolved_shapes()]
        return d


@dataclass
class RunConfig:
    """Everything a subcommand needs; serializes to and from flat dictionaries."""

    subcommand: str = "detect"
    input: str | None = None
    out_dir: str = "out"
    algo: int = 1
    m: int | None = None
    alpha: float | None = None
    kappa: float | None = None
    beta: float | None = None
    eps: float | None = None
    delta0: float | None = None
    rho0: float | None = None
    s: int | None = None
    direction_policy: str | None = None
    criterion: str | None = None
    max_segments: int | None = None
    allow_m3_update: bool | None = None
    noise_percent: float | None = None
    seed: int = 0
    resize: int | None = None
    check: str = "all"
    eps_list: list[float] = field(default_factory=lambda: [0.2, 0.1, 0.05])
    overlay: bool = True
    phantom: PhantomSpec = field(default_factory=PhantomSpec)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if self.algo not in (1, 2, 3):
            raise ConfigError(f"--algo must be 1, 2 or 3, got {self.algo}")
        if self.check not in CHECKS:
            raise ConfigError(f"--check must be one of {CHECKS}")
        if self.noise_percent is not None and self.noise_percent < 0:
            raise ConfigError("--noise-percent must be non-negative")
        if self.resize is not None and self.resize < 1:
            raise ConfigError("--resize must be positive")
        if isinstance(self.phantom, dict):
            self.phantom = PhantomSpec.from_dict(self.phantom)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phantom"] = self.phantom.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _reject_unknown(d, cls, "run")
        return cls(**d)

    def detector(self) -> DetectorConfig:
        m = 2 if self.m is None else self.m
        base = algo_defaults(self.algo, m)
        changes = {k: getattr(self, k) for k in DETECTOR_KEYS if getattr(self, k) is not None}
        if self.algo == 2:
            changes.setdefault("criterion", "eigen_m2")
        return base.replace(**changes)


def _reject_unknown(d: dict, cls, what: str) -> None:
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {what} configuration keys: {sorted(unknown)}")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_simulate(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ph = cfg.phantom
    phantom = make_phantom(ph.resolved_shapes(), Grid(ph.size, ph.size, 1.0), ph.mu0, ph.D0, ph.Gamma)
    data = forward(phantom, Illumination(**ph.illumination))
    meta = {"config": cfg.to_dict(), "scales": {}, "version": __version__}
    fields_out = {"mu": phantom.mu, "d": phantom.D, "energy": data.energy, "fluence": data.fluence}
    if cfg.noise_percent is not None:
        data = add_noise(data, cfg.noise_percent, cfg.seed)
        fields_out["noisy"] = data.noisy_energy
        meta["noise"] = {"percent": cfg.noise_percent, "sigma": data.noise_sigma, "seed": cfg.seed}
    for name, arr in fields_out.items():
        meta["scales"][name] = write_pgm(out / f"{name}.pgm", arr)
        write_field_csv(out / f"{name}.csv", arr)
    write_json(out / "metadata.json", meta)
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_detect(cfg: RunConfig) -> int:
    if cfg.input is None:
        raise ConfigError("detect needs an input file")
    det = cfg.detector()
    f = read_field(cfg.input)
    if cfg.resize is not None:
        f = resize_box(f, cfg.resize)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = run(f, det, cfg.algo)
    (out / "segments.csv").write_bytes(res.to_csv().encode())
    (out / "segments.json").write_text(res.to_json() + "\n")
    (out / "trace.csv").write_bytes(res.trace_csv().encode())
    if cfg.overlay:
        write_overlay(out / "overlay.png", f, res.segments)
    summary = {
        "segments": res.iterations,
        "threshold": res.threshold_used,
        "solves": res.n_solves,
        "stop_reason": res.stop_reason,
        "config": det.to_dict(),
        "algo": cfg.algo,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _check_topo(rep) -> bool:
    errs = rep.errors()
    negative = all(v < 0 for v in rep.measured_dJ)
    improving = all(a >= b for a, b in zip(errs, errs[1:]))
    return bool(negative and improving and errs[-1] <= 0.25)


def cmd_validate(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checks = ("topo", "convergence", "tensor") if cfg.check == "all" else (cfg.check,)
    results = {}
    if "topo" in checks:
        kw = {k: v for k, v in (("kappa", cfg.kappa), ("alpha", cfg.alpha), ("m", cfg.m)) if v is not None}
        rep = validate_topo_gradient(eps_list=cfg.eps_list, **kw)
        (out / "asymptotics.csv").write_bytes(rep.to_csv().encode())
        (out / "asymptotics.json").write_text(rep.to_json() + "\n")
        results["topo"] = {"passed": _check_topo(rep), "ratios": rep.ratios}
    if "convergence" in checks:
        kinds = [f"smoother_m{cfg.m or 2}", "diffusion"]
        for kind in kinds:
            table = convergence_study(kind)
            (out / f"convergence_{kind}.csv").write_bytes(table.to_csv().encode())
            results[kind] = {"passed": min(table.orders) >= ORDER_FLOORS[kind], "orders": table.orders}
        mismatch = flux_continuity()
        results["flux_continuity"] = {"passed": mismatch <= 0.02, "relative_mismatch": mismatch}
    if "tensor" in checks:
        for r in tensor_suites(cfg.seed):
            results[r["name"]] = r
    write_json(out / "validation.json", results)
    print(json.dumps(results, indent=2, sort_keys=True))
    return EXIT_OK if all(r["passed"] for r in results.values()) else EXIT_CHECK


def cmd_tensor_check(cfg: RunConfig) -> int:
    results = tensor_suites(cfg.seed)
    for r in results:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']}: "
              + ", ".join(f"{k}={v}" for k, v in r.items() if k not in ("name", "passed")))
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_CHECK


COMMANDS = {
    "simulate": cmd_simulate,
    "detect": cmd_detect,
    "validate": cmd_validate,
    "tensor-check": cmd_tensor_check,
}


# ---------------------------------------------------------------------------
# Argument parsing


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with run settings (flags override it)")
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--m", type=int, choices=(1, 2, 3))
    common.add_argument("--alpha", type=float)
    common.add_argument("--kappa", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--eps", type=float)
    common.add_argument("--delta0", type=float)
    common.add_argument("--rho0", type=float)
    common.add_argument("--s", type=int)
    common.add_argument("--direction-policy", dest="direction_policy", choices=("lemma", "paper_text"))
    common.add_argument("--criterion", choices=("grad_norm", "eigen_m2"))
    common.add_argument("--noise-percent", dest="noise_percent", type=float)
    common.add_argument("--resize", type=int)
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="topoedge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sub.add_parser("simulate", parents=[common], help="generate synthetic qPAT data")

    p = sub.add_parser("detect", parents=[common], help="detect edges in an image or CSV field")
    p.add_argument("input", nargs="?", help="input .pgm, .png or .csv")
    p.add_argument("--algo", type=int, choices=(1, 2, 3))
    p.add_argument("--max-segments", dest="max_segments", type=int)
    p.add_argument("--allow-m3-update", dest="allow_m3_update", action="store_const", const=True)
    p.add_argument("--no-overlay", dest="overlay", action="store_const", const=False)

    p = sub.add_parser("validate", parents=[common], help="run the numerical oracles")
    p.add_argument("--check", choices=CHECKS)
    p.add_argument("--eps-list", dest="eps_list", type=_float_list)

    sub.add_parser("tensor-check", parents=[common], help="randomized tensor identity checks")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the optional TOML file and explicit flags."""
    data: dict = {}
    if getattr(args, "config", None):
        data.update(load_toml(args.config))
    data["subcommand"] = args.subcommand
    for key, value in vars(args).items():
        if key in ("config", "verbose", "subcommand") or value is None:
            continue
        data[key] = value
    return RunConfig.from_dict(data)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if cfg.subcommand != "tensor-check":
            Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
            dump_toml(cfg.to_dict(), Path(cfg.out_dir) / "effective_config.toml")
        return COMMANDS[cfg.subcommand](cfg)
    except EmptyRegionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (ConfigError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SolverError as exc:
        print(f"solver error: {exc} (residual {exc.residual:.3e} after {exc.iterations} iterations)",
              file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
