"""Config-driven experiment pipeline: generate -> fit -> propagate -> evaluate.

Configs are TOML or JSON (same schema); CLI flags override file values.  Every
command is a pure function of (config, input files, seed) and re-running it
reproduces its outputs.  Exit codes: 0 success, 2 config error, 3 numerical or
invariant failure, 4 IO error.
"""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

from . import bernstein, propagation, storage, systems, training
from .flow import InvalidModelError
from .propagation import Belief, PropagationError
from .storage import StorageError
from .systems import SystemSpec
from .training import TrainConfig, TrainingError
from .transform import TransformError, moment_match

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "system": {"kind": "vanderpol", "dt": 0.3, "mu": 1.0},
    "dataset": {"n_initial": 1000, "trajectories": 1000, "horizon": 10, "seed": 7},
    "transform": {"mode": "moment_match", "variance_buffer": 2.2},
    "degrees": {"initial": 30, "transition": 30},
    "train": {
        "initial": {"epochs": 3000, "batch_size": 128, "learning_rate": 0.01,
                    "degree_raise": 20, "penalty_weight": 10.0, "seed": 11},
        "transition": {"epochs": 150, "batch_size": 1048, "learning_rate": 0.1,
                       "degree_raise": 0, "penalty_weight": 0.0, "seed": 12},
    },
    "propagate": {"horizon": 9, "test_samples": 10000, "test_seed": 99},
    "export": {"window_lo": [-3.0, -3.0], "window_hi": [3.0, 3.0], "resolution": 50},
    "evaluate": {"k": 9},
    "output": {"dir": "runs/out"},
}


def _deep_update(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_update(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path: str | None, overrides: tuple[str, ...] = ()) -> dict:
    cfg = DEFAULTS
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            if p.suffix == ".json":
                cfg = _deep_update(cfg, json.loads(p.read_text()))
            else:
                cfg = _deep_update(cfg, tomllib.loads(p.read_text()))
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override must look like section.key=value: {ov!r}")
        dotted, raw = ov.split("=", 1)
        keys = dotted.split(".")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg = _deep_update(cfg, {})
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override through scalar at {key!r}")
        node[keys[-1]] = value
    if cfg["degrees"]["initial"] < 1 or cfg["degrees"]["transition"] < 1:
        raise ConfigError("degrees must be >= 1")
    return cfg


def out_dir(cfg: dict) -> Path:
    root = os.environ.get("BERNFLOW_OUTPUT_ROOT", ".")
    d = Path(root) / cfg["output"]["dir"]
    d.mkdir(parents=True, exist_ok=True)
    return d


def _system(cfg: dict) -> SystemSpec:
    try:
        return SystemSpec(**cfg["system"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad system spec: {exc}") from exc


def _train_config(cfg: dict, which: str) -> TrainConfig:
    try:
        return TrainConfig(**cfg["train"][which])
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad train.{which} config: {exc}") from exc


def _transform_from_dataset(cfg: dict, ds: systems.Dataset):
    mode = cfg["transform"]["mode"]
    if mode != "moment_match":
        raise ConfigError(f"unknown transform mode: {mode}")
    pooled = np.vstack([ds.initials, ds.pairs_x, ds.pairs_xp])
    return moment_match(pooled, cfg["transform"]["variance_buffer"])


def _fit(cfg: dict, which: str, ds: systems.Dataset):
    transform = _transform_from_dataset(cfg, ds)
    tc = _train_config(cfg, which)
    degree = (cfg["degrees"][which],) * 2
    if which == "initial":
        if tc.degree_raise > 0:
            model, history = training.train_relaxed(ds.initials, transform, degree, tc)
        else:
            model, history = training.fit_initial(ds.initials, transform, degree, tc)
    else:
        if tc.degree_raise > 0:
            model, history = training.train_relaxed(
                (ds.pairs_x, ds.pairs_xp), transform, degree, tc, conditional=True)
        else:
            model, history = training.fit_transition(
                ds.pairs_x, ds.pairs_xp, transform, degree, tc)
    return model, transform, history


def _write_history(path: Path, history: list[dict]):
    lines = ["epoch,nll,penalty,seconds"]
    for row in history:
        lines.append(f"{row['epoch']},{row['nll']!r},{row['penalty']!r},"
                     f"{row['seconds']!r}")
    path.write_text("\n".join(lines) + "\n")


def _write_grid(path: Path, grid: np.ndarray, cfg: dict, k: int):
    exp = cfg["export"]
    header = (f"# window x1=[{exp['window_lo'][0]},{exp['window_hi'][0]}] "
              f"x2=[{exp['window_lo'][1]},{exp['window_hi'][1]}] "
              f"resolution={exp['resolution']} k={k}")
    lines = [header, "x1,x2,density"]
    for row in grid:
        lines.append(f"{float(row[0])!r},{float(row[1])!r},{float(row[2])!r}")
    path.write_text("\n".join(lines) + "\n")


@click.group()
def main():
    """Learn polynomial Markov chain models and propagate beliefs exactly."""


def _run(fn):
    try:
        fn()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (TrainingError, PropagationError, InvalidModelError, TransformError,
            bernstein.ContractError, systems.SystemError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)
    except (StorageError, OSError) as exc:
        click.echo(f"io error: {exc}", err=True)
        sys.exit(EXIT_IO)


_config_opt = click.option("--config", "config_path", default=None,
                           help="TOML or JSON experiment config.")
_set_opt = click.option("--set", "overrides", multiple=True,
                        help="Override config values, e.g. --set train.initial.epochs=5")


@main.command()
@_config_opt
@_set_opt
def generate(config_path, overrides):
    """Simulate the configured system and write the dataset files."""
    def body():
        cfg = load_config(config_path, overrides)
        spec = _system(cfg)
        d = cfg["dataset"]
        ds = systems.generate(spec, d["n_initial"], d["trajectories"], d["horizon"],
                              d["seed"])
        out = out_dir(cfg)
        storage.save_dataset(ds, out / "dataset.csv")
        storage.write_manifest(
            out / "generate.manifest.json", cfg,
            [out / "dataset.csv", out / "dataset.meta.json"],
            {"dataset": d["seed"]})
        click.echo(f"wrote {ds.initials.shape[0]} initials and "
                   f"{ds.pairs_x.shape[0]} pairs to {out}")
    _run(body)


@main.command()
@_config_opt
@_set_opt
@click.option("--which", type=click.Choice(["initial", "transition"]), required=True)
def fit(config_path, overrides, which):
    """Train the initial or transition model on the generated dataset."""
    def body():
        cfg = load_config(config_path, overrides)
        out = out_dir(cfg)
        ds = storage.load_dataset(out / "dataset.csv")
        t0 = time.perf_counter()
        model, transform, history = _fit(cfg, which, ds)
        model_path = out / f"model_{which}.json"
        tmp = model_path.with_suffix(".tmp")
        storage.save_model(model, tmp, transform=transform)
        tmp.replace(model_path)  # overwrite atomically so reruns are resume-safe
        _write_history(out / f"train_{which}.csv", history)
        storage.write_manifest(
            out / f"fit_{which}.manifest.json", cfg,
            [model_path, out / f"train_{which}.csv"],
            {"train": cfg["train"][which]["seed"]})
        click.echo(f"trained {which} model in {time.perf_counter() - t0:.1f}s; "
                   f"final nll {history[-1]['nll']:.4f}")
    _run(body)


@main.command()
@_config_opt
@_set_opt
def propagate(config_path, overrides):
    """Propagate the learned belief and export per-step artifacts."""
    def body():
        cfg = load_config(config_path, overrides)
        out = out_dir(cfg)
        initial, transform = storage.load_model(out / "model_initial.json")
        transition, _ = storage.load_model(out / "model_transition.json")
        horizon = cfg["propagate"]["horizon"]
        spec = _system(cfg)
        test = systems.simulate_marginal(
            spec, 0, cfg["propagate"]["test_samples"], cfg["propagate"]["test_seed"])
        metrics = ["k,log_likelihood,mass_residual,wall_time"]
        files = []
        belief = Belief.from_flow(initial)
        exp = cfg["export"]
        for k in range(horizon + 1):
            t0 = time.perf_counter()
            if k > 0:
                belief = propagation.propagate_step(belief, transition)
                test_k = systems.simulate_marginal(
                    spec, k, cfg["propagate"]["test_samples"],
                    cfg["propagate"]["test_seed"])
            else:
                test_k = test
            wall = time.perf_counter() - t0
            ll, _flagged = propagation.log_likelihood(belief, transform, test_k)
            bpath = out / f"belief_{k}.json"
            storage.save_belief(belief, bpath)
            grid = propagation.density_grid(belief, transform, exp["window_lo"],
                                            exp["window_hi"], exp["resolution"])
            gpath = out / f"grid_{k}.csv"
            _write_grid(gpath, grid, cfg, k)
            mc = systems.mc_belief_grid(
                spec, k, max(cfg["propagate"]["test_samples"], 10000),
                exp["window_lo"], exp["window_hi"], exp["resolution"],
                cfg["propagate"]["test_seed"])
            mpath = out / f"grid_mc_{k}.csv"
            _write_grid(mpath, mc, cfg, k)
            files += [bpath, gpath, mpath]
            metrics.append(f"{k},{ll!r},{belief.mass_residual!r},{wall!r}")
        (out / "metrics.csv").write_text("\n".join(metrics) + "\n")
        storage.write_manifest(out / "propagate.manifest.json", cfg,
                               files + [out / "metrics.csv"],
                               {"test": cfg["propagate"]["test_seed"]})
        click.echo(f"propagated to k={horizon}; metrics in {out / 'metrics.csv'}")
    _run(body)


@main.command()
@_config_opt
@_set_opt
@click.option("--box", required=True,
              help="State-space box lo1,lo2,hi1,hi2 (inf allowed).")
@click.option("--k", "step_k", type=int, default=None, help="Belief time index.")
@click.option("--mc-check", is_flag=True,
              help="Cross-check against rejection-sampled frequencies.")
def evaluate(config_path, overrides, box, step_k, mc_check):
    """Probability that the state at time k lies in an axis-aligned box."""
    def body():
        cfg = load_config(config_path, overrides)
        out = out_dir(cfg)
        k = cfg["evaluate"]["k"] if step_k is None else step_k
        belief = storage.load_belief(out / f"belief_{k}.json")
        _, transform = storage.load_model(out / "model_initial.json")
        try:
            vals = [float(v) for v in box.split(",")]
            lo, hi = np.array(vals[:2]), np.array(vals[2:])
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"bad box spec {box!r}: {exc}") from exc
        p = propagation.evaluate(belief, lo, hi, transform)
        click.echo(f"P(x_{k} in box) = {p:.6f}")
        if mc_check:
            rng = np.random.default_rng(cfg["propagate"]["test_seed"])
            u = propagation.sample_belief(belief, rng, 100_000)
            x = transform.inverse(np.clip(u, 1e-12, 1 - 1e-12))
            freq = float(np.mean(np.all((x >= lo) & (x <= hi), axis=1)))
            se = np.sqrt(max(freq * (1 - freq), 1e-12) / 100_000)
            click.echo(f"MC frequency = {freq:.6f} (3 SE = {3 * se:.6f})")
            if abs(freq - p) > max(3 * se, 1e-3):
                raise PropagationError("evaluate() disagrees with MC frequency")
    _run(body)


@main.command()
@click.option("--model", "model_path", required=True)
@click.option("--count", type=int, default=1000)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", default="samples.csv")
@click.option("--ks-check", is_flag=True,
              help="1-D models: KS test of samples against the flow CDF.")
def sample(model_path, count, seed, out_path, ks_check):
    """Draw state-space samples from a saved initial model."""
    def body():
        model, transform = storage.load_model(model_path)
        if not hasattr(model, "sample"):
            raise ConfigError("sampling needs an initial model")
        rng = np.random.default_rng(seed)
        u = model.sample(rng, count)
        x = transform.inverse(np.clip(u, 1e-12, 1 - 1e-12)) if transform else u
        header = ",".join(f"x{i + 1}" for i in range(u.shape[1]))
        lines = [header]
        for row in np.atleast_2d(x):
            lines.append(",".join(repr(float(v)) for v in row))
        Path(out_path).write_text("\n".join(lines) + "\n")
        click.echo(f"wrote {count} samples to {out_path}")
        if ks_check:
            if model.n != 1:
                raise ConfigError("--ks-check requires a 1-D model")
            g = bernstein.antiderivative_axis(model.factors[0], 0)
            cdf = np.array([bernstein.eval_point(g, [v]) for v in np.sort(u[:, 0])])
            grid = (np.arange(1, count + 1)) / count
            ks = float(np.max(np.abs(cdf - grid)))
            click.echo(f"KS statistic = {ks:.5f}")
    _run(body)


if __name__ == "__main__":
    main()
