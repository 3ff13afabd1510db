"""Desk-scale experiment recipes shared by the scripts and the acceptance suite."""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

from .episodes import OraclePolicy, generate_splits
from .metrics import EvalReport, evaluate
from .model import StartConfig, StartModel, StartPolicy, ablation_config
from .scene import FloorplanParams, SceneMap, gen_floorplan
from .sim import SignNavEnv
from .training import (
    Adam,
    AggregatedDataset,
    DaggerStats,
    LogRecord,
    ObservationCache,
    TrainConfig,
    dagger_iterate,
    scene_graphs,
    train_teacher_forcing,
)

MICRO_SEED = 42
# Small floorplans keep 50 episodes short enough for one CPU core.
MICRO_EXTENT = 14.0
MICRO_SCENES = 3


@dataclass
class MicroData:
    scenes: dict  # scene_id -> SceneMap
    train: list
    val: list  # held-out start/goal pairs in the training scenes
    seed: int = MICRO_SEED


def make_scenes(count: int, extent: float, seed_base: int = 0) -> list[SceneMap]:
    params = FloorplanParams(extent=extent)
    return [gen_floorplan(seed_base + i, params) for i in range(count)]


def micro_data(n_train: int = 50, n_val: int = 10, seed: int = MICRO_SEED, extent: float = MICRO_EXTENT,
               n_scenes: int = MICRO_SCENES, min_geodesic: float = 5.0) -> MicroData:
    scenes = make_scenes(n_scenes, extent)
    splits = generate_splits(scenes, {"train": n_train, "val_seen": n_val}, seed, min_geodesic=min_geodesic)
    return MicroData({s.scene_id: s for s in scenes}, splits["train"], splits["val_seen"], seed)


def micro_train_config(**overrides) -> TrainConfig:
    """Teacher-forcing recipe: Adam 1e-3, two episodes per batch, stop at 90% accuracy."""
    kw = dict(seed=MICRO_SEED, epochs=200, batch_size=2, lr=1e-3, target_accuracy=0.9)
    kw.update(overrides)
    return TrainConfig(**kw)


@dataclass
class MicroRun:
    model: StartModel
    records: list[LogRecord]
    cache: ObservationCache
    seconds: float


def run_micro_tf(data: MicroData, cfg: TrainConfig | None = None, model_cfg: StartConfig | None = None,
                 log_fn=None) -> MicroRun:
    t0 = time.perf_counter()
    model = StartModel(model_cfg or StartConfig(seed=MICRO_SEED))
    cache = ObservationCache(data.scenes, max_depth=model.config.max_depth)
    records = train_teacher_forcing(model, data.train, cache, cfg or micro_train_config(), log_fn=log_fn)
    return MicroRun(model, records, cache, time.perf_counter() - t0)


def eval_model(model: StartModel, episodes, scenes: dict, max_steps: int = 150, split: str = "val_seen") -> EvalReport:
    return evaluate(lambda sc, ep: StartPolicy(model), episodes, scenes, SignNavEnv(), max_steps, "start", split)


def eval_oracle(episodes, scenes: dict, split: str = "train") -> EvalReport:
    return evaluate(lambda sc, ep: OraclePolicy(sc, ep), episodes, scenes, SignNavEnv(), 500, "oracle", split)


@dataclass
class DaggerRun:
    sizes: list[int]
    stats: list[DaggerStats]
    records: list[LogRecord] = field(default_factory=list)
    model: StartModel | None = None


def run_dagger(model: StartModel, data: MicroData, cfg: TrainConfig, cache: ObservationCache | None = None,
               copy_model: bool = True, log_fn=None) -> DaggerRun:
    """cfg.dagger_iterations rounds of DAgger on ``data.train``; the input model is left untouched by default."""
    m = copy.deepcopy(model) if copy_model else model
    cache = cache or ObservationCache(data.scenes, max_depth=m.config.max_depth)
    graphs = scene_graphs(data.scenes, data.seed)
    agg = AggregatedDataset(list(data.train))
    opt = Adam(m.parameters(), cfg.lr)
    run = DaggerRun([len(agg)], [], model=m)
    for i in range(1, cfg.dagger_iterations + 1):
        st, rec = dagger_iterate(m, data.train, agg, data.scenes, graphs, cache, cfg, i, opt, log_fn)
        run.sizes.append(len(agg))
        run.stats.append(st)
        run.records += rec
    return run


ABLATIONS = ("full", "spatial_only", "temporal_only", "rgb_only", "depth_only")


def run_ablation(name: str, data: MicroData, base: StartConfig | None = None, epochs: int = 1,
                 max_steps: int = 60, cache: ObservationCache | None = None):
    """Build the named variant, train it for ``epochs`` and evaluate it on ``data.val``."""
    model = StartModel(ablation_config(name, base or StartConfig(seed=MICRO_SEED)))
    cache = cache or ObservationCache(data.scenes, max_depth=model.config.max_depth)
    cfg = TrainConfig(seed=MICRO_SEED, epochs=epochs, batch_size=2)
    records = train_teacher_forcing(model, data.train, cache, cfg)
    return records, eval_model(model, data.val, data.scenes, max_steps=max_steps)
