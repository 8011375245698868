"""Command-line front-end.

Subcommands::

    blemu synth     write a synthetic scenario grid
    blemu fit       split data, elicit the prior by least squares, adjust, save
    blemu predict   export mean/sd surfaces from a saved emulator
    blemu diagnose  resolution and SPE report for held-out runs
    blemu cv        cross-validate the correlation length

Settings come from defaults, then an optional JSON ``--config`` file, then
flags (flags win). Exit status: 0 success, 1 usage/config error, 2 data
error, 3 numerical failure, 4 diagnostics found conflicts.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .data import grid_levels, load_grid, split, write_grid
from .diagnostics import DEFAULT_THRESHOLD, cross_validate_theta, log_spaced_candidates, report
from .emulator import adjust, load_emulator, predict_grid, save_emulator
from .errors import ConfigError, EmulatorError
from .regression import DEFAULT_NUGGET, DEFAULT_TERMS, BasisSpec, elicit_prior, ols_fit, theta_vector
from .synthetic import ScenarioSpec, generate_grid

logger = logging.getLogger("blemu")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL, EXIT_CONFLICTS = 0, 1, 2, 3, 4


@dataclass
class RunConfig:
    data: str | None = None
    synthetic: dict | None = None
    schema: dict = field(default_factory=lambda: {"n": "n", "p": "p", "yield": "yield"})
    delimiter: str | None = None
    basis: list = field(default_factory=lambda: list(DEFAULT_TERMS))
    theta: tuple = (0.015, 0.015)
    nugget: float = DEFAULT_NUGGET
    fraction: float = 0.8
    seed: int = 0
    grid: tuple = (13, 13)
    threshold: float = DEFAULT_THRESHOLD
    out_dir: str = "blemu-out"
    artifact: str | None = None
    test: str | None = None
    cv: dict = field(default_factory=lambda: {"folds": 5, "candidates": None, "range": [0.0015, 0.15, 11]})

    def __post_init__(self):
        self.theta = theta_vector(self.theta)
        self.grid = parse_grid(self.grid)
        BasisSpec(tuple(self.basis))
        if not 0 < float(self.fraction) < 1:
            raise ConfigError(f"fraction must lie in (0, 1), got {self.fraction}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if not float(self.threshold) > 0:
            raise ConfigError(f"threshold must be positive, got {self.threshold}")
        if float(self.nugget) < 0:
            raise ConfigError(f"nugget must be non-negative, got {self.nugget}")
        unknown = set(self.cv) - {"folds", "candidates", "range"}
        if unknown:
            raise ConfigError(f"unknown cv settings: {sorted(unknown)}")
        self.fraction = float(self.fraction)
        self.threshold = float(self.threshold)
        self.nugget = float(self.nugget)

    @property
    def basis_spec(self) -> BasisSpec:
        return BasisSpec(tuple(self.basis))

    def levels(self):
        return grid_levels(self.grid[0]), grid_levels(self.grid[1])


def parse_grid(value) -> tuple[int, int]:
    """``13`` or ``"13"`` -> (13, 13); ``"50x40"`` or ``[50, 40]`` -> (50, 40)."""
    try:
        if isinstance(value, str):
            parts = value.lower().replace("×", "x").split("x")
            counts = tuple(int(v) for v in parts)
        elif isinstance(value, (int, np.integer)):
            counts = (int(value),)
        else:
            counts = tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse grid {value!r}; use e.g. 13 or 50x50") from None
    if len(counts) == 1:
        counts = counts * 2
    if len(counts) != 2 or min(counts) < 1:
        raise ConfigError(f"grid needs one or two positive counts, got {value!r}")
    return counts


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def build_config(args) -> RunConfig:
    settings: dict = {}
    base = Path(".")
    if args.config:
        path = Path(args.config)
        try:
            settings = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"no such config file: {path}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(settings, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        base = path.parent
        for key in ("data", "artifact", "test", "out_dir"):
            if settings.get(key) is not None and not Path(settings[key]).is_absolute():
                settings[key] = str(base / settings[key])

    overrides = {
        "seed": args.seed,
        "out_dir": args.out_dir,
        "fraction": args.fraction,
        "threshold": args.threshold,
        "grid": args.grid,
        "theta": _parse_floats(args.theta) if args.theta else None,
    }
    for key in ("data", "artifact", "test", "nugget"):
        overrides[key] = getattr(args, key, None)
    if getattr(args, "basis", None):
        overrides["basis"] = [t.strip() for t in args.basis.split(",")]
    settings.update({k: v for k, v in overrides.items() if v is not None})

    cv = {"folds": 5, "candidates": None, "range": [0.0015, 0.15, 11]}
    cv.update(settings.pop("cv", None) or {})
    if getattr(args, "folds", None) is not None:
        cv["folds"] = args.folds
    if getattr(args, "candidates", None):
        cv["candidates"] = _parse_floats(args.candidates)
    if getattr(args, "cv_range", None):
        cv["range"] = _parse_floats(args.cv_range)
        cv["candidates"] = None
    settings["cv"] = cv

    if getattr(args, "command", None) == "synth":
        spec = dict(settings.get("synthetic") or {})
        if args.shape:
            spec["shape"] = args.shape
        if args.noise_sd is not None:
            spec["noise_sd"] = args.noise_sd
        if args.seed is not None:
            spec["seed"] = args.seed
        params = dict(spec.get("params") or {})
        for item in args.param or []:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"--param expects key=value, got {item!r}")
            params[key.strip()] = value.strip()
        spec["params"] = params
        settings["synthetic"] = spec

    try:
        return RunConfig(**settings)
    except TypeError as exc:
        raise ConfigError(f"bad configuration: {exc}") from None


def scenario_spec(config: RunConfig) -> ScenarioSpec:
    spec = dict(config.synthetic or {})
    unknown = set(spec) - {"shape", "params", "noise_sd", "seed", "levels", "scenario_id"}
    if unknown:
        raise ConfigError(f"unknown synthetic settings: {sorted(unknown)}")
    spec.setdefault("seed", config.seed)
    spec.setdefault("levels", config.levels())
    return ScenarioSpec(**spec)


def load_data(config: RunConfig):
    if config.data:
        return load_grid(config.data, config.schema, config.delimiter)
    if config.synthetic:
        return generate_grid(scenario_spec(config))
    raise ConfigError("no data: give --data PATH or a 'data'/'synthetic' entry in the config file")


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_synth(config: RunConfig, out: str | None = None) -> int:
    spec = scenario_spec(config)
    grid = generate_grid(spec)
    path = Path(out) if out else _out_dir(config) / "synthetic.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_grid(grid, path)
    print(f"wrote {len(grid)} records ({spec.shape}, seed {spec.seed}) to {path}")
    return EXIT_OK


def cmd_fit(config: RunConfig) -> int:
    grid = load_data(config)
    parts = split(grid, config.fraction, config.seed)
    basis = config.basis_spec
    fit = ols_fit(parts.train, basis)
    prior = elicit_prior(fit, config.theta, config.nugget)
    em = adjust(parts.train, basis, prior)

    out = _out_dir(config)
    meta = {
        "seed": config.seed,
        "fraction": config.fraction,
        "n_train": len(parts.train),
        "n_test": len(parts.test),
        "source": config.data if config.data else {"synthetic": scenario_spec(config).to_dict()},
        "sigma2_hat": fit.sigma2_hat,
        "nugget_requested": config.nugget,
    }
    save_emulator(em, out / "emulator.json", meta)
    write_grid(parts.train, out / "train.csv")
    write_grid(parts.test, out / "test.csv")

    lines = [
        f"scenario: {grid.scenario_id}",
        f"records: {len(grid)} ({len(parts.train)} train / {len(parts.test)} test, fraction {config.fraction}, seed {config.seed})",
        "coefficients (prior mean, sd):",
    ]
    sds = np.sqrt(np.diag(prior.beta_var))
    for term, b, s in zip(basis.terms, prior.beta_mean, sds):
        lines.append(f"  {term:>6}: {b: .6g}  ({s:.3g})")
    lines += [
        f"sigma2: {prior.sigma2:.6g} (least-squares {fit.sigma2_hat:.6g})",
        f"theta: {prior.theta[0]:g}, {prior.theta[1]:g}",
        f"nugget used: {em.nugget:.1e}",
    ]
    text = "\n".join(lines) + "\n"
    (out / "fit_summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _artifact_path(config: RunConfig) -> Path:
    return Path(config.artifact) if config.artifact else Path(config.out_dir) / "emulator.json"


def cmd_predict(config: RunConfig) -> int:
    em, _ = load_emulator(_artifact_path(config))
    surface = predict_grid(em, *config.levels())
    out = _out_dir(config)
    surface.write_csv(out / "surface.csv")
    _write_json(out / "surface.json", surface.to_dict())
    print(f"wrote {len(surface)} predictions to {out / 'surface.csv'}")
    return EXIT_OK


def cmd_diagnose(config: RunConfig) -> int:
    artifact = _artifact_path(config)
    em, _ = load_emulator(artifact)
    test_path = Path(config.test) if config.test else artifact.parent / "test.csv"
    test = load_grid(test_path, config.schema, config.delimiter)
    rep = report(em, test, config.levels(), config.threshold)
    out = _out_dir(config)
    rep.write_json(out / "report.json")
    rep.write_csv(out / "report.csv")
    s = rep.summary
    line = f"test points: {s['n_test']}, conflicts (|SPE| > {s['threshold']:g}): {s['n_conflicts']}"
    if s["max_abs_spe"] is not None:
        line += f", max |SPE|: {s['max_abs_spe']:.3f}"
    print(line)
    print(f"fraction of grid with resolution > 0.7: {s['fraction_resolution_gt_0.7']:.3f}")
    return EXIT_CONFLICTS if s["n_conflicts"] else EXIT_OK


def cv_candidates(config: RunConfig) -> list:
    if config.cv.get("candidates"):
        return [theta_vector(c) for c in config.cv["candidates"]]
    rng = config.cv.get("range") or [0.0015, 0.15, 11]
    if len(rng) != 3:
        raise ConfigError(f"cv range needs lo, hi, num; got {rng}")
    return log_spaced_candidates(float(rng[0]), float(rng[1]), int(rng[2]))


def cmd_cv(config: RunConfig) -> int:
    grid = load_data(config)
    parts = split(grid, config.fraction, config.seed)
    result = cross_validate_theta(
        parts.train, config.basis_spec, cv_candidates(config), int(config.cv["folds"]), config.seed, config.nugget
    )
    out = _out_dir(config)
    _write_json(out / "cv.json", result.to_dict())
    _write_json(out / "chosen_theta.json", {"theta": list(result.chosen)})
    with (out / "cv_scores.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta_n", "theta_p", "rmse"])
        for t, s in zip(result.theta_grid, result.scores):
            w.writerow([repr(t[0]), repr(t[1]), repr(s)])
    print(f"chosen theta: {result.chosen[0]:g}, {result.chosen[1]:g} (pooled RMSE {result.chosen_score:.6g})")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="split / fold / synthetic seed (default 0)")
    common.add_argument("--out-dir", dest="out_dir", help="output directory (default blemu-out)")
    common.add_argument("--theta", help="correlation length(s), e.g. 0.015 or 0.015,0.02")
    common.add_argument("--fraction", type=float, help="training fraction (default 0.8)")
    common.add_argument("--threshold", type=float, help="|SPE| conflict threshold (default 3)")
    common.add_argument("--grid", help="prediction grid levels per axis, e.g. 13 or 50x50")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="blemu", description="Bayes linear emulation of gridded simulator output")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic scenario grid")
    p.add_argument("--shape", choices=["monotone", "constant", "step", "kernel-draw"])
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="shape parameter (repeatable)")
    p.add_argument("--noise-sd", dest="noise_sd", type=float)
    p.add_argument("--out", help="output file (default OUT_DIR/synthetic.csv)")

    for name, help_ in (("fit", "fit and save an emulator"), ("cv", "cross-validate theta")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--data", help="delimited data file with n, p, yield columns")
        p.add_argument("--basis", help="comma-separated basis terms (default 1,N,P)")
        p.add_argument("--nugget", type=float, help="initial jitter fraction (default 1e-8)")
        if name == "cv":
            p.add_argument("--folds", type=int)
            p.add_argument("--candidates", help="comma-separated isotropic theta candidates")
            p.add_argument("--cv-range", dest="cv_range", help="log-spaced candidates as lo,hi,num")

    p = sub.add_parser("predict", parents=[common], help="export prediction surfaces")
    p.add_argument("--artifact", help="emulator file (default OUT_DIR/emulator.json)")

    p = sub.add_parser("diagnose", parents=[common], help="diagnostic report for test runs")
    p.add_argument("--artifact", help="emulator file (default OUT_DIR/emulator.json)")
    p.add_argument("--test", help="test data (default test.csv beside the artifact)")
    return parser


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "diagnose": cmd_diagnose, "cv": cmd_cv}


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        config = build_config(args)
        if args.command == "synth":
            return cmd_synth(config, args.out)
        return COMMANDS[args.command](config)
    except EmulatorError as exc:
        print(f"blemu {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"blemu {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
