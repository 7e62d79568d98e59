"""Command-line runner: train, sweep, eval and gen-data.

Configs are TOML files with flat top-level keys; schedules may be given as
tables (``[generator_schedule]`` with ``base_lr``, ``step_size``, ``gamma``).
``--override KEY=VALUE`` takes a TOML literal and supports dotted keys such as
``generator_schedule.gamma=0.8``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import eval as ev
from . import finance as fin
from . import generator as gen
from . import targets, training
from .nn import StepSchedule, TrainingError

EXPERIMENTS = ("circle2d", "square2d", "finance")
SAMPLE_POINTS = 2000
SWEEP_SEGMENTS = 16
SWEEP_DRAWS = 512
FRONTIER_GRID = 101

# two-asset synthetic market used when no price file is given; the pair is
# negatively correlated (rho = -0.2) so the frontier bends left
SYNTHETIC_DEFAULTS = {"mu_a": 0.001, "sigma_a": 0.018, "mu_b": 0.0025, "sigma_b": 0.035,
                      "rho": -0.2, "n_days": 3000}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    experiment: str = "circle2d"
    mode: str = training.INFOQGAN
    seed: int = 0
    train: training.TrainConfig = field(default_factory=training.TrainConfig)
    n_points: int = 2000
    center: tuple = targets.CIRCLE_CENTER
    radius: float = targets.CIRCLE_RADIUS
    side: float = targets.SQUARE_SIDE
    prices: str = ""
    asset_a: str = ""
    asset_b: str = ""
    synthetic: dict = field(default_factory=lambda: dict(SYNTHETIC_DEFAULTS))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["center"] = list(self.center)
        return out


def table_defaults(experiment: str, mode: str) -> RunConfig:
    """Settings of the three experiments; QGAN spends every qubit on noise."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment: expected one of {EXPERIMENTS}, got {experiment!r}")
    if mode not in (training.QGAN, training.INFOQGAN):
        raise ConfigError(f"mode: expected 'qgan' or 'infoqgan', got {mode!r}")
    info = mode == training.INFOQGAN
    if experiment == "finance":
        tc = training.TrainConfig(
            mode=mode, readout=gen.DISTRIBUTION, epochs=450, layers=5,
            noise_dim=3 if info else 4, code_dim=1 if info else 0, beta=0.15,
            generator_schedule=StepSchedule(0.0004, 30, 0.7),
            discriminator_schedule=StepSchedule(0.00004, 30, 0.7),
            mine_schedule=StepSchedule(0.001, 30, 0.7),
            minibatch_size=training.FINANCE_MINIBATCH)
        return RunConfig(experiment, mode, train=tc)
    tc = training.TrainConfig(
        mode=mode, readout=gen.POINT2D, epochs=300,
        layers=20 if experiment == "circle2d" else 5,
        noise_dim=3 if info else 5, code_dim=2 if info else 0,
        beta=0.5 if experiment == "circle2d" else 0.1,
        generator_schedule=StepSchedule(0.001, 30, 0.7),
        discriminator_schedule=StepSchedule(0.0003, 30, 0.85),
        mine_schedule=StepSchedule(0.001, 30, 0.7),
        minibatch_size=training.POINT_MINIBATCH)
    if experiment == "circle2d":
        return RunConfig(experiment, mode, train=tc)
    return RunConfig(experiment, mode, train=tc, center=targets.SQUARE_CENTER)


def _parse_literal(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_override(item: str):
    key, sep, value = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {item!r}: expected KEY=VALUE")
    return key.strip(), _parse_literal(value.strip())


def _nest(flat: dict) -> dict:
    out = {}
    for key, value in flat.items():
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{key}: {p} is not a table")
        node[parts[-1]] = value
    return out


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _coerce(name, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, tuple):
        ok = isinstance(value, (list, tuple)) and len(value) == len(default)
        value = tuple(float(v) for v in value) if ok else value
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{name}: expected {type(default).__name__}, got {value!r}")
    return value


def _schedule(name, value, default: StepSchedule) -> StepSchedule:
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected a table with base_lr, step_size, gamma")
    merged = dataclasses.asdict(default)
    for k, v in value.items():
        if k not in merged:
            raise ConfigError(f"{name}.{k}: unknown field")
        merged[k] = _coerce(f"{name}.{k}", v, merged[k])
    try:
        return StepSchedule(**merged)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def build_config(raw: dict, seed=None) -> RunConfig:
    """Resolve a nested dict of settings on top of the table defaults."""
    raw = dict(raw)
    cfg = table_defaults(raw.pop("experiment", "circle2d"), raw.pop("mode", training.INFOQGAN))
    train_fields = {f.name: f for f in fields(training.TrainConfig)}
    run_fields = {f.name for f in fields(RunConfig)} - {"experiment", "mode", "train"}
    train_changes = {}
    for key, value in raw.items():
        if key in train_fields:
            if key in ("mode", "readout"):
                raise ConfigError(f"{key}: set through experiment/mode, not directly")
            default = getattr(cfg.train, key)
            if isinstance(default, StepSchedule):
                train_changes[key] = _schedule(key, value, default)
            elif key == "minibatch_size" and value in (0, None):
                train_changes[key] = None
            else:
                train_changes[key] = _coerce(key, value, default if default is not None else 0)
        elif key == "synthetic":
            if not isinstance(value, dict):
                raise ConfigError("synthetic: expected a table")
            for k, v in value.items():
                if k not in SYNTHETIC_DEFAULTS:
                    raise ConfigError(f"synthetic.{k}: unknown field")
                cfg.synthetic[k] = _coerce(f"synthetic.{k}", v, SYNTHETIC_DEFAULTS[k])
        elif key in run_fields:
            setattr(cfg, key, _coerce(key, value, getattr(cfg, key)))
        else:
            raise ConfigError(f"{key}: unknown setting")
    if seed is not None:
        cfg.seed = seed
    train_changes["seed"] = cfg.seed
    try:
        cfg.train = dataclasses.replace(cfg.train, **train_changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.seed < 0 or cfg.seed >= 2 ** 64:
        raise ConfigError("seed: must be an unsigned 64-bit integer")
    return cfg


def load_config(path=None, overrides=(), seed=None) -> RunConfig:
    raw = {}
    if path:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    raw = _merge(raw, _nest(dict(parse_override(o) for o in overrides)))
    return build_config(raw, seed)


# --- file output ------------------------------------------------------------

def _fmt(v):
    return f"{v:.17g}" if isinstance(v, (float, np.floating)) else str(v)


def write_csv_atomic(path, header, rows):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    os.replace(tmp, path)


def write_json(path, obj):
    training.write_json_atomic(path, obj)


def _float_rows(array):
    return [[float(v) for v in row] for row in np.atleast_2d(array)]


# --- data preparation -------------------------------------------------------

def target_cloud(cfg: RunConfig, rng) -> targets.PointCloud:
    if cfg.experiment == "circle2d":
        return targets.biased_circle(cfg.n_points, rng, cfg.center, cfg.radius)
    return targets.central_square(cfg.n_points, rng, cfg.center, cfg.side)


def synthetic_pair(cfg: RunConfig, rng):
    s = cfg.synthetic
    cov = s["rho"] * s["sigma_a"] * s["sigma_b"]
    return fin.synthetic_assets(s["mu_a"], s["sigma_a"], s["mu_b"], s["sigma_b"], cov,
                                int(s["n_days"]), rng)


def asset_pair(cfg: RunConfig, rng):
    """The two return series for the finance experiment."""
    if not cfg.prices:
        return synthetic_pair(cfg, rng)
    if not os.path.isfile(cfg.prices):
        raise ConfigError(f"prices: file not found: {cfg.prices}")
    series = fin.load_prices(cfg.prices)
    names = sorted(series)
    a = cfg.asset_a or (names[0] if names else "")
    b = cfg.asset_b or (names[1] if len(names) > 1 else "")
    for name in (a, b):
        if name not in series:
            raise ConfigError(f"asset {name!r} not found in {cfg.prices}")
    if a == b:
        raise ConfigError("asset_a and asset_b must differ")
    return series[a], series[b]


# --- commands ---------------------------------------------------------------

def _progress(state, m):
    if (m.epoch + 1) % training.CHECKPOINT_EVERY == 0:
        print(f"epoch {m.epoch + 1}: g_loss {m.generator_loss:.4f} d_loss "
              f"{m.discriminator_loss:.4f} mine {m.mine_estimate:.4f}", file=sys.stderr)


def cmd_train(cfg: RunConfig, out_dir) -> dict:
    """Train one configuration and write all artifacts to ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    rngs = training.seed_streams(cfg.seed)
    write_json(os.path.join(out_dir, "config.json"), cfg.to_dict())
    if cfg.experiment == "finance":
        a, b = asset_pair(cfg, rngs["data"])
        datasets = fin.build_training_datasets(a, b, rngs["data"])
        fin.save_datasets(os.path.join(out_dir, "datasets.csv"), datasets)
        data = np.array([d.bins for d in datasets])
    else:
        cloud = target_cloud(cfg, rngs["data"])
        cloud.to_csv(os.path.join(out_dir, "target.csv"))
        data = cloud.points

    state = training.TrainState.initial(cfg.train, rngs)
    state, history = training.train(cfg.train, data, out_dir, state, _progress)
    write_csv_atomic(os.path.join(out_dir, "metrics.csv"), training.EpochMetrics.CSV_HEADER,
                     [m.row() for m in history])

    g = state.generator
    z = gen.sample_latents(rngs["eval"], SAMPLE_POINTS, g)
    samples = gen.generate_batch(g, z)
    result = {}
    if cfg.experiment == "finance":
        header = [f"z{i}" for i in range(g.qubits)] + [f"p{i}" for i in range(samples.shape[1])]
        write_csv_atomic(os.path.join(out_dir, "samples.csv"), header,
                         _float_rows(np.hstack([z, samples])))
        frontier = ev.code_sweep(g, g.qubits - 1, SWEEP_SEGMENTS, SWEEP_DRAWS, rngs["eval"])
        write_frontier(os.path.join(out_dir, "frontier.csv"), frontier)
        assets = fin.empirical_frontier(a, b, np.linspace(0, 1, FRONTIER_GRID))
        write_frontier(os.path.join(out_dir, "asset_frontier.csv"), assets)
        means = [p.mean for p in frontier]
        result = {"mean_range": [min(means), max(means)]}
    else:
        targets.PointCloud(samples, ((-0.5, 1.5), (-0.5, 1.5))).to_csv(
            os.path.join(out_dir, "samples.csv"))
        result = ev.ks2d(samples, data).to_dict()
        write_json(os.path.join(out_dir, "ks.json"), result)
    return result


def write_frontier(path, points):
    write_csv_atomic(path, ["code_or_alpha", "mean", "stdev"],
                     [[p.code_or_alpha, p.mean, p.stdev] for p in points])


def read_frontier(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [ev.FrontierPoint(float(r["mean"]), float(r["stdev"]), float(r["code_or_alpha"]))
                for r in reader]


def load_generator(path) -> gen.GeneratorSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"checkpoint not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    try:
        return gen.GeneratorSpec.from_dict(data.get("generator", data))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a generator checkpoint ({exc})") from None


def cmd_sweep(checkpoint, out_dir, seed=0, code_index=None, segments=SWEEP_SEGMENTS,
              draws=SWEEP_DRAWS, experiment=None):
    """Pin one latent entry at each segment midpoint and record the outputs."""
    g = load_generator(checkpoint)
    if experiment is not None:
        want = gen.DISTRIBUTION if experiment == "finance" else gen.POINT2D
        if g.readout != want:
            raise ConfigError(f"experiment {experiment!r} does not match the checkpoint "
                              f"readout {g.readout!r}")
    code_index = g.qubits - 1 if code_index is None else code_index
    if not 0 <= code_index < g.qubits:
        raise ConfigError(f"code index {code_index} outside latent width {g.qubits}")
    os.makedirs(out_dir, exist_ok=True)
    rng = training.seed_streams(seed)["eval"]
    if g.readout == gen.DISTRIBUTION:
        codes, hists = ev.sweep_histograms(g, code_index, segments, draws, rng)
        points = [ev.mean_std_of_distribution(h, c) for c, h in zip(codes, hists)]
        write_frontier(os.path.join(out_dir, "frontier.csv"), points)
        write_csv_atomic(os.path.join(out_dir, "sweep_histograms.csv"),
                         ["code"] + [f"p{i}" for i in range(hists.shape[1])],
                         _float_rows(np.column_stack([codes, hists])))
        return points
    clouds = ev.code_sweep(g, code_index, segments, draws, rng)
    rows = [[code, float(x), float(y)] for code, pts in clouds for x, y in pts]
    write_csv_atomic(os.path.join(out_dir, "sweep_points.csv"), ["code", "x", "y"], rows)
    return clouds


def cmd_eval(samples_path, target, out_dir=None, seed=0) -> dict:
    """KS test of a samples CSV against a target CSV or a named target shape."""
    samples = targets.read_points_csv(samples_path)
    if target in ("circle", "circle2d", "square", "square2d"):
        experiment = "circle2d" if target.startswith("circle") else "square2d"
        cfg = table_defaults(experiment, training.INFOQGAN)
        ref = target_cloud(cfg, training.seed_streams(seed)["data"]).points
    else:
        if not os.path.isfile(target):
            raise ConfigError(f"target file not found: {target}")
        ref = targets.read_points_csv(target)
    for name, pts in (("samples", samples), ("target", ref)):
        if len(pts) == 0:
            raise ConfigError(f"{name} file contains no points")
    result = ev.ks2d(samples, ref).to_dict()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_json(os.path.join(out_dir, "ks.json"), result)
    return result


def cmd_gen_data(kind, out_dir, cfg: RunConfig):
    """Write a target cloud (circle/square) or synthetic asset prices."""
    os.makedirs(out_dir, exist_ok=True)
    rng = training.seed_streams(cfg.seed)["data"]
    if kind == "assets":
        a, b = synthetic_pair(cfg, rng)
        path = os.path.join(out_dir, "prices.csv")
        tmp = f"{path}.tmp"
        fin.write_prices(tmp, [a, b])
        os.replace(tmp, path)
        return path
    cfg = dataclasses.replace(cfg, experiment="circle2d" if kind == "circle" else "square2d")
    if kind == "square" and cfg.center == targets.CIRCLE_CENTER:
        cfg.center = targets.SQUARE_CENTER
    path = os.path.join(out_dir, "target.csv")
    target_cloud(cfg, rng).to_csv(path)
    return path


# --- entry point ------------------------------------------------------------

def _seed(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="infoqgan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="TOML config file")
            sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        sp.add_argument("--seed", type=_seed, default=None)
        sp.add_argument("--out", default=".", help="output directory")

    t = sub.add_parser("train", help="train a generator and write its artifacts")
    common(t)

    s = sub.add_parser("sweep", help="sweep one latent entry of a trained generator")
    common(s, config=False)
    s.add_argument("checkpoint")
    s.add_argument("--code-index", type=int, default=None)
    s.add_argument("--segments", type=int, default=SWEEP_SEGMENTS)
    s.add_argument("--draws", type=int, default=SWEEP_DRAWS)
    s.add_argument("--experiment", choices=EXPERIMENTS, default=None)

    e = sub.add_parser("eval", help="2D KS test of samples against a target")
    common(e, config=False)
    e.add_argument("samples")
    e.add_argument("target", help="target CSV path, or 'circle' / 'square'")

    g = sub.add_parser("gen-data", help="write a target cloud or synthetic prices")
    common(g)
    g.add_argument("kind", choices=("circle", "square", "assets"))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            cfg = load_config(args.config, args.override, args.seed)
            result = cmd_train(cfg, args.out)
            print(json.dumps(result))
        elif args.command == "sweep":
            cmd_sweep(args.checkpoint, args.out, args.seed or 0, args.code_index,
                      args.segments, args.draws, args.experiment)
        elif args.command == "eval":
            print(json.dumps(cmd_eval(args.samples, args.target, args.out, args.seed or 0)))
        else:
            cfg = load_config(args.config, args.override, args.seed)
            print(cmd_gen_data(args.kind, args.out, cfg))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
