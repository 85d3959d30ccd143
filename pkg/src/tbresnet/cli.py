"""``tbresnet`` command line: generate, fit, sweep, eval, perturb, elasticity, surface.

Every command reads an optional JSON config, writes its outputs under
``--out`` and finishes with a ``manifest.json`` listing each file's sha256,
the fully resolved config (defaults included) and the config hash.

Exit codes: 0 success, 1 numerical failure, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from tbresnet import metrics, robustness, surface
from tbresnet.dataset import (RESIDUAL_FORMS, SCENARIOS, DataError, SyntheticTruth, generate_synthetic, load_csv,
                              save_csv, split, summary_table)
from tbresnet.dcm import DcmSpec, SpecError
from tbresnet.model import DEFAULT_DELTA_GRID, REDUCED_DELTA_GRID, TRAINERS, DnnConfig, TbResNetModel, \
    TrainingError, check_delta_grid, sweep

log = logging.getLogger("tbresnet")

COMMANDS = ("generate", "fit", "sweep", "eval", "perturb", "elasticity", "surface")
NAMED_GRIDS = {"default": DEFAULT_DELTA_GRID, "reduced": REDUCED_DELTA_GRID}


class ConfigError(ValueError):
    pass


@dataclass
class SurfaceOptions:
    alternative: int = 0
    attr_a: str | None = None
    attr_b: str | None = None
    range_a: list | None = None
    range_b: list | None = None
    resolution: list = field(default_factory=lambda: [surface.DEFAULT_RESOLUTION, surface.DEFAULT_RESOLUTION])


@dataclass
class RunConfig:
    """Everything a command needs; unset dataset paths mean "generate synthetic data"."""

    scenario: str = "mnl"
    data: str | None = None
    dcm_spec: str | None = None
    model: str | None = None
    n: int = 4000
    noise: str = "gumbel"
    truth_scale: float = 1.0
    truth_residual: float = 0.0
    truth_residual_form: str = "interaction"
    train_fraction: float = 0.8
    delta: float = 0.5
    delta_grid: object = "default"
    trainer: str = "sequential"
    depth: int = 3
    width: int = 100
    iterations: int = 5000
    batch_size: int = 100
    learning_rate: float = 0.01
    dcm_learning_rate: float | None = None
    attacks: list = field(default_factory=lambda: list(robustness.ATTACKS))
    epsilon_grid: list = field(default_factory=lambda: list(robustness.DEFAULT_EPSILONS))
    target_rule: object = "least_likely"
    perturb_covariates: bool = True
    elasticity_columns: list | None = None
    surface: SurfaceOptions = field(default_factory=SurfaceOptions)
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        d = dict(d)
        if "surface" in d:
            s = d["surface"]
            if not isinstance(s, dict):
                raise ConfigError("surface must be an object")
            sknown = {f.name for f in dataclasses.fields(SurfaceOptions)}
            bad = sorted(set(s) - sknown)
            if bad:
                raise ConfigError(f"unknown surface keys: {bad}")
            d["surface"] = SurfaceOptions(**s)
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.scenario in SCENARIOS, f"scenario must be one of {SCENARIOS}")
        need(isinstance(self.n, int) and self.n >= 1, "n must be a positive integer")
        need(self.noise in ("gumbel", "none"), "noise must be 'gumbel' or 'none'")
        need(self.truth_residual_form in RESIDUAL_FORMS, f"truth_residual_form must be one of {RESIDUAL_FORMS}")
        need(0.0 < self.train_fraction < 1.0, "train_fraction must lie in (0, 1)")
        need(0.0 <= self.delta <= 1.0, "delta must lie in [0, 1]")
        need(self.trainer in TRAINERS, f"trainer must be one of {sorted(TRAINERS)}")
        for name in ("depth", "width", "iterations", "batch_size"):
            v = getattr(self, name)
            need(isinstance(v, int) and v >= 1, f"{name} must be a positive integer")
        need(self.learning_rate > 0, "learning_rate must be positive")
        need(self.dcm_learning_rate is None or self.dcm_learning_rate > 0, "dcm_learning_rate must be positive")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed must be a non-negative integer")
        try:
            self.grid()
        except ValueError as exc:
            raise ConfigError(f"delta_grid: {exc}") from None
        need(all(a in robustness.ATTACKS for a in self.attacks), f"attacks must be drawn from {robustness.ATTACKS}")
        eps = [float(e) for e in self.epsilon_grid]
        need(0.0 in eps, "epsilon_grid must contain 0")
        need(all(e >= 0 for e in eps) and eps == sorted(set(eps)), "epsilon_grid must be sorted, unique, >= 0")
        need(self.target_rule == "least_likely" or (isinstance(self.target_rule, int) and self.target_rule >= 0),
             "target_rule must be 'least_likely' or a class index")
        res = self.surface.resolution
        need(len(res) == 2 and all(isinstance(r, int) and r >= 2 for r in res),
             "surface.resolution must be two integers >= 2")

    def grid(self) -> tuple:
        g = self.delta_grid
        if isinstance(g, str):
            if g not in NAMED_GRIDS:
                raise ValueError(f"unknown named grid {g!r}")
            return NAMED_GRIDS[g]
        return check_delta_grid(g)

    def dnn(self) -> DnnConfig:
        return DnnConfig(depth=self.depth, width=self.width, learning_rate=self.learning_rate,
                         iterations=self.iterations, batch_size=self.batch_size,
                         dcm_learning_rate=self.dcm_learning_rate)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# output helpers


class Outputs:
    """Collects files written under ``root`` for the manifest."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []
        root.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> Path:
        path = self.root / name
        path.write_text(text, encoding="utf-8")
        self.files.append(name)
        return path

    def add(self, name: str) -> None:
        self.files.append(name)

    def manifest(self, command: str, cfg: RunConfig) -> None:
        config = cfg.to_dict()
        config_text = json.dumps(config, sort_keys=True)
        files = {name: hashlib.sha256((self.root / name).read_bytes()).hexdigest() for name in sorted(self.files)}
        doc = {
            "command": command,
            "config": config,
            "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
            "files": files,
        }
        (self.root / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _metrics_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# shared steps


def _dataset(cfg: RunConfig):
    if cfg.data is not None:
        if not Path(cfg.data).is_file():
            raise FileNotFoundError(f"data file not found: {cfg.data}")
        return load_csv(cfg.data)
    truth = SyntheticTruth(residual=cfg.truth_residual, scale=cfg.truth_scale,
                           residual_form=cfg.truth_residual_form)
    return generate_synthetic(cfg.scenario, cfg.n, truth, noise=cfg.noise, seed=cfg.seed)


def _spec(cfg: RunConfig, data) -> DcmSpec:
    if cfg.dcm_spec is not None:
        path = Path(cfg.dcm_spec)
        if not path.is_file():
            raise FileNotFoundError(f"dcm spec not found: {path}")
        spec = DcmSpec.from_dict(json.loads(path.read_text(encoding="utf-8")))
        spec.check_data(data)
        return spec
    return DcmSpec.for_dataset(cfg.scenario, data)


def _splits(cfg: RunConfig):
    data = _dataset(cfg)
    train, test = split(data, cfg.train_fraction, cfg.seed)
    return data, train, test


def _fitted(cfg: RunConfig, data, train) -> TbResNetModel:
    if cfg.model is not None:
        path = Path(cfg.model)
        if not path.is_file():
            raise FileNotFoundError(f"model file not found: {path}")
        model = TbResNetModel.load(path)
        model.check_schema(data)
        return model
    return TRAINERS[cfg.trainer](_spec(cfg, data), cfg.delta, train, cfg.dnn(), cfg.seed)


# ---------------------------------------------------------------------------
# commands


def cmd_generate(cfg: RunConfig, out: Outputs, args) -> None:
    data = _dataset(cfg)
    save_csv(data, out.root / "data.csv")
    out.add("data.csv")
    out.write("dcm_spec.json", DcmSpec.for_dataset(cfg.scenario, data).dumps() + "\n")
    table = summary_table(data)
    out.write("summary.txt", table + "\n")
    print(table)


def cmd_fit(cfg: RunConfig, out: Outputs, args) -> None:
    data, train, test = _splits(cfg)
    model = TRAINERS[cfg.trainer](_spec(cfg, data), cfg.delta, train, cfg.dnn(), cfg.seed)
    model.save(out.root / "model.json")
    out.add("model.json")
    losses = model.training.get("stage2_loss", model.training.get("loss", []))
    out.write("training_log.csv", _metrics_csv([{"iteration": i, "loss": l} for i, l in enumerate(losses)],
                                               ["iteration", "loss"]))
    rep = {"train": metrics.evaluate(model, train).to_dict(), "test": metrics.evaluate(model, test).to_dict()}
    out.write("metrics.json", _json(rep))
    print(f"delta={cfg.delta!r} train accuracy {rep['train']['accuracy']:.4f} "
          f"test accuracy {rep['test']['accuracy']:.4f}")


def cmd_sweep(cfg: RunConfig, out: Outputs, args) -> int:
    data, train, test = _splits(cfg)
    res = sweep(_spec(cfg, data), cfg.grid(), train, test, cfg.dnn(), cfg.trainer, cfg.seed,
                workers=args.workers)
    rows = [dict(r, baseline=res.baseline) for r in res.rows]
    out.write("sweep.csv", _metrics_csv(rows, ["delta", "accuracy", "cross_entropy", "f1", "baseline", "seed",
                                               "status", "error"]))
    best = {"best_accuracy_delta": res.best_accuracy_delta, "best_loss_delta": res.best_loss_delta,
            "baseline": res.baseline, "trainer": res.trainer,
            "failed": [r["delta"] for r in res.rows if r["status"] != "ok"]}
    out.write("sweep_summary.json", _json(best))
    print(f"best delta (accuracy) {best['best_accuracy_delta']!r}, best delta (cross-entropy) "
          f"{best['best_loss_delta']!r}, baseline {res.baseline:.4f}")
    return 1 if best["best_accuracy_delta"] is None else 0


def cmd_eval(cfg: RunConfig, out: Outputs, args) -> None:
    data, train, test = _splits(cfg)
    model = _fitted(cfg, data, train)
    rep = metrics.evaluate(model, test)
    out.write("eval.json", _json({"delta": model.delta, **rep.to_dict()}))
    print(f"accuracy {rep.accuracy:.4f} cross-entropy {rep.cross_entropy:.4f} f1 {rep.f1:.4f}")


def cmd_perturb(cfg: RunConfig, out: Outputs, args) -> None:
    data, train, test = _splits(cfg)
    model = _fitted(cfg, data, train)
    reports = [robustness.robustness_curve(model, test, a, cfg.epsilon_grid, cfg.seed,
                                           include_z=cfg.perturb_covariates, target_rule=cfg.target_rule)
               for a in cfg.attacks]
    out.write("perturbation.csv", robustness.reports_to_csv(reports))
    for rep in reports:
        print(f"{rep.attack}: " + " ".join(f"{e:g}:{a:.4f}" for e, a in zip(rep.epsilons, rep.accuracy)))


def cmd_elasticity(cfg: RunConfig, out: Outputs, args) -> None:
    data, train, test = _splits(cfg)
    model = _fitted(cfg, data, train)
    table = metrics.elasticity_table(model, test, cfg.elasticity_columns)
    out.write("elasticity.csv", table.to_csv())
    print(table.to_csv(), end="")


def cmd_surface(cfg: RunConfig, out: Outputs, args) -> None:
    data, train, test = _splits(cfg)
    model = _fitted(cfg, data, train)
    s = cfg.surface
    cols = model.input_columns
    raw = {c: v for c, v in zip(cols, list(train.x.T) + list(train.z.T))}
    # default to the first two attribute columns that actually vary
    varying = [c for c in model.x_columns if raw[c].min() < raw[c].max()] or model.x_columns
    attr_a = s.attr_a or varying[0]
    attr_b = s.attr_b or varying[1 if len(varying) > 1 else 0]
    for a in (attr_a, attr_b):
        if a not in cols:
            raise ConfigError(f"unknown surface attribute {a!r}")
    range_a = s.range_a or [float(raw[attr_a].min()), float(raw[attr_a].max())]
    range_b = s.range_b or [float(raw[attr_b].min()), float(raw[attr_b].max())]
    ref = surface.reference_observation(model, train)
    grid = surface.utility_grid(model, s.alternative, attr_a, attr_b, range_a, range_b, tuple(s.resolution), ref)
    out.write("surface.csv", grid.to_csv())
    out.write("surface.json", grid.sidecar() + "\n")
    print(f"{grid.utility.shape[0]}x{grid.utility.shape[1]} utility grid for alternative {s.alternative} "
          f"over ({attr_a}, {attr_b})")


HANDLERS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
    "perturb": cmd_perturb,
    "elasticity": cmd_elasticity,
    "surface": cmd_surface,
}


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    try:
        return RunConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tbresnet", description="Theory-based residual networks for choice data.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--workers", type=int, default=1, help="parallel fits for sweep")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.validate()
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        out = Outputs(Path(args.out))
        status = HANDLERS[args.command](cfg, out, args) or 0
        out.manifest(args.command, cfg)
        return status
    except (ConfigError, DataError, SpecError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
