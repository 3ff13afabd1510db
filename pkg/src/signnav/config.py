"""Flat ``key = value`` run configuration: defaults < config file < command-line overrides."""

from __future__ import annotations

import math
from pathlib import Path

from .model import StartConfig
from .render import CameraModel
from .scene import FloorplanParams
from .training import TrainConfig


class ConfigKeyError(ValueError):
    """Unknown key or unparsable value."""


def _defaults() -> dict:
    fp = FloorplanParams()
    cam = CameraModel()
    mc = StartConfig()
    tc = TrainConfig()
    d = {
        "seed": 42,
        # scenes
        "scene.count": 3,
        "scene.extent": fp.extent,
        "scene.corridor_width": fp.corridor_width,
        "scene.room_count_min": fp.room_count[0],
        "scene.room_count_max": fp.room_count[1],
        "scene.room_size_min": fp.room_size[0],
        "scene.room_size_max": fp.room_size[1],
        "scene.door_width": fp.door_width,
        "scene.wall_thickness": fp.wall_thickness,
        "scene.branch_count_min": fp.branch_count[0],
        "scene.branch_count_max": fp.branch_count[1],
        "scene.loop_prob": fp.loop_prob,
        "scene.cell_size": fp.cell_size,
        # episodes
        "graph.r": 1.0,
        "graph.r_edge": 2.5,
        "graph.c_min": 0.4,
        "episode.min_geodesic": 5.0,
        "episode.train": 40,
        "episode.val_seen": 10,
        "episode.val_unseen": 10,
        # rendering and environment
        "camera.image_width": cam.image_width,
        "camera.image_height": cam.image_height,
        "camera.hfov": cam.hfov,
        "camera.wall_height": cam.wall_height,
        "camera.eye_height": cam.eye_height,
        "camera.max_depth": cam.max_depth,
        "env.max_steps": 500,
        # model
        "model.enc_channels": ",".join(str(c) for c in mc.enc_channels),
        "model.fused_channels": mc.fused_channels,
        "model.patch": mc.patch,
        "model.width": mc.width,
        "model.spatial_layers": mc.spatial_layers,
        "model.spatial_heads": mc.spatial_heads,
        "model.temporal_layers": mc.temporal_layers,
        "model.temporal_heads": mc.temporal_heads,
        "model.history": mc.history,
        "model.hint_channels": ",".join(str(c) for c in mc.hint_channels),
        "model.hint_dim": mc.hint_dim,
        "model.ffn_dim": mc.ffn_dim,
        "model.use_rgb": mc.use_rgb,
        "model.use_depth": mc.use_depth,
        "model.spatial": mc.spatial,
        "model.seed": mc.seed,
        # training
        "train.lr": tc.lr,
        "train.batch_size": tc.batch_size,
        "train.epochs": tc.epochs,
        "train.dagger_iterations": tc.dagger_iterations,
        "train.dagger_epochs": tc.dagger_epochs,
        "train.dagger_episodes": tc.dagger_episodes,
        "train.beta0": tc.beta0,
        "train.target_accuracy": tc.target_accuracy,
    }
    return d


DEFAULTS = _defaults()


def _parse(key: str, text: str):
    default = DEFAULTS[key]
    s = text.strip()
    try:
        if isinstance(default, bool):
            low = s.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(s)
        if isinstance(default, int):
            return int(s)
        if isinstance(default, float):
            v = float(s)
            if not math.isfinite(v):
                raise ValueError(s)
            return v
    except ValueError:
        raise ConfigKeyError(f"{key}: cannot parse {text!r} as {type(default).__name__}") from None
    return s


class RunConfig:
    """Effective configuration; every key has a built-in default."""

    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ConfigKeyError(f"unknown config key {key!r}")
        self.values[key] = _parse(key, value) if isinstance(value, str) else value

    def __getitem__(self, key: str):
        return self.values[key]

    def update_text(self, text: str, source: str = "<config>") -> None:
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigKeyError(f"{source}:{lineno}: expected 'key = value'")
            key, value = (p.strip() for p in line.split("=", 1))
            try:
                self.set(key, value)
            except ConfigKeyError as exc:
                raise ConfigKeyError(f"{source}:{lineno}: {exc}") from None

    @classmethod
    def load(cls, path=None, overrides=()) -> "RunConfig":
        cfg = cls()
        if path is not None:
            cfg.update_text(Path(path).read_text(), str(path))
        for item in overrides:
            if "=" not in item:
                raise ConfigKeyError(f"override {item!r} must look like key=value")
            k, v = item.split("=", 1)
            cfg.set(k.strip(), v)
        return cfg

    def dumps(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in sorted(self.values.items()))

    def to_dict(self) -> dict:
        return dict(sorted(self.values.items()))

    # typed views ---------------------------------------------------------------------------
    def floorplan(self) -> FloorplanParams:
        v = self.values
        return FloorplanParams(
            extent=v["scene.extent"],
            corridor_width=v["scene.corridor_width"],
            room_count=(v["scene.room_count_min"], v["scene.room_count_max"]),
            room_size=(v["scene.room_size_min"], v["scene.room_size_max"]),
            door_width=v["scene.door_width"],
            wall_thickness=v["scene.wall_thickness"],
            branch_count=(v["scene.branch_count_min"], v["scene.branch_count_max"]),
            loop_prob=v["scene.loop_prob"],
            cell_size=v["scene.cell_size"],
        )

    def graph_params(self) -> dict:
        return {"r": self["graph.r"], "r_edge": self["graph.r_edge"], "c_min": self["graph.c_min"]}

    def camera(self) -> CameraModel:
        v = self.values
        return CameraModel(
            image_width=v["camera.image_width"],
            image_height=v["camera.image_height"],
            hfov=v["camera.hfov"],
            wall_height=v["camera.wall_height"],
            eye_height=v["camera.eye_height"],
            max_depth=v["camera.max_depth"],
        )

    def model(self) -> StartConfig:
        v = self.values

        def ints(key):
            return tuple(int(x) for x in str(v[key]).split(",") if x.strip())

        return StartConfig(
            image_size=(v["camera.image_height"], v["camera.image_width"]),
            enc_channels=ints("model.enc_channels"),
            fused_channels=v["model.fused_channels"],
            patch=v["model.patch"],
            width=v["model.width"],
            spatial_layers=v["model.spatial_layers"],
            spatial_heads=v["model.spatial_heads"],
            temporal_layers=v["model.temporal_layers"],
            temporal_heads=v["model.temporal_heads"],
            history=v["model.history"],
            hint_channels=ints("model.hint_channels"),
            hint_dim=v["model.hint_dim"],
            ffn_dim=v["model.ffn_dim"],
            use_rgb=v["model.use_rgb"],
            use_depth=v["model.use_depth"],
            spatial=v["model.spatial"],
            max_depth=v["camera.max_depth"],
            seed=v["model.seed"],
        )

    def train(self) -> TrainConfig:
        v = self.values
        return TrainConfig(
            lr=v["train.lr"],
            batch_size=v["train.batch_size"],
            epochs=v["train.epochs"],
            dagger_iterations=v["train.dagger_iterations"],
            dagger_epochs=v["train.dagger_epochs"],
            dagger_episodes=v["train.dagger_episodes"],
            beta0=v["train.beta0"],
            seed=v["seed"],
            target_accuracy=v["train.target_accuracy"],
        )


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)
