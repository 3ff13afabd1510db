"""On-disk scene sets and episode datasets with FNV-1a content hashes."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .episodes import SPLITS, Episode, EpisodeError
from .rng import fnv1a64_hex
from .scene import SceneError, SceneMap

SCENE_INDEX = "index.json"
MANIFEST = "manifest.json"


class DataError(RuntimeError):
    """Missing, corrupt or inconsistent stored data."""


def content_hash(data: bytes) -> str:
    return fnv1a64_hex(data)


def _write(path: Path, text: str) -> str:
    data = text.encode()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return content_hash(data)


def _read_verified(path: Path, expected: str) -> bytes:
    if not path.is_file():
        raise DataError(f"missing file {path}")
    data = path.read_bytes()
    got = content_hash(data)
    if got != expected:
        raise DataError(f"hash mismatch for {path}: manifest {expected}, file {got}")
    return data


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _load_json(path: Path) -> dict:
    if not path.is_file():
        raise DataError(f"missing file {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON ({exc})") from None


# -- scene sets ------------------------------------------------------------------------------------


def write_scenes(out_dir, scenes: list[SceneMap], seed: int, config: dict) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for sc in scenes:
        name = f"{sc.scene_id}.json"
        entries.append({"file": name, "scene_id": sc.scene_id, "hash": _write(out / name, sc.dumps())})
    index = {"seed": seed, "config": config, "scenes": entries}
    _write(out / SCENE_INDEX, _dump_json(index))
    return index


def read_scenes(scene_dir) -> tuple[dict, list[SceneMap]]:
    d = Path(scene_dir)
    index = _load_json(d / SCENE_INDEX)
    scenes = []
    for e in index.get("scenes", []):
        data = _read_verified(d / e["file"], e["hash"])
        try:
            scenes.append(SceneMap.loads(data.decode()))
        except SceneError as exc:
            raise DataError(f"{d / e['file']}: {exc}") from None
    return index, scenes


# -- datasets --------------------------------------------------------------------------------------


@dataclass
class Dataset:
    root: Path
    manifest: dict
    scenes: dict = field(default_factory=dict)  # scene_id -> SceneMap
    splits: dict = field(default_factory=dict)  # split -> list[Episode]

    @property
    def seed(self) -> int:
        return int(self.manifest["seed"])

    @property
    def config(self) -> dict:
        return dict(self.manifest.get("config", {}))

    def split(self, name: str) -> list[Episode]:
        if name not in self.splits:
            raise DataError(f"unknown split {name!r}; have {sorted(self.splits)}")
        return self.splits[name]


def write_dataset(out_dir, scenes: list[SceneMap], splits: dict, seed: int, config: dict) -> dict:
    """Scenes are copied into the dataset so it is self-contained."""
    out = Path(out_dir)
    scene_entries = []
    for sc in scenes:
        name = f"scenes/{sc.scene_id}.json"
        scene_entries.append({"file": name, "scene_id": sc.scene_id, "hash": _write(out / name, sc.dumps())})
    split_entries = {}
    for split in SPLITS:
        rows = []
        for ep in splits.get(split, []):
            name = f"episodes/{split}/{ep.episode_id}.jsonl"
            rows.append({"file": name, "hash": _write(out / name, ep.dumps())})
        split_entries[split] = rows
    manifest = {"seed": seed, "config": config, "scenes": scene_entries, "splits": split_entries}
    _write(out / MANIFEST, _dump_json(manifest))
    return manifest


def manifest_hash(root) -> str:
    return content_hash((Path(root) / MANIFEST).read_bytes())


def read_dataset(root, splits=None) -> Dataset:
    """Load and hash-verify a dataset; ``splits`` limits which episode lists are read."""
    root = Path(root)
    manifest = _load_json(root / MANIFEST)
    for key in ("seed", "scenes", "splits"):
        if key not in manifest:
            raise DataError(f"{root / MANIFEST}: missing {key!r}")
    ds = Dataset(root, manifest)
    for e in manifest["scenes"]:
        data = _read_verified(root / e["file"], e["hash"])
        try:
            sc = SceneMap.loads(data.decode())
        except SceneError as exc:
            raise DataError(f"{root / e['file']}: {exc}") from None
        ds.scenes[sc.scene_id] = sc
    wanted = manifest["splits"].keys() if splits is None else splits
    for split in wanted:
        if split not in manifest["splits"]:
            raise DataError(f"unknown split {split!r}")
        eps = []
        for e in manifest["splits"][split]:
            data = _read_verified(root / e["file"], e["hash"])
            try:
                ep = Episode.loads(data.decode())
            except (EpisodeError, KeyError, ValueError) as exc:
                raise DataError(f"{root / e['file']}: {exc}") from None
            if ep.scene_id not in ds.scenes:
                raise DataError(f"{root / e['file']}: unknown scene {ep.scene_id!r}")
            eps.append(ep)
        ds.splits[split] = eps
    unseen = {ep.scene_id for ep in ds.splits.get("val_unseen", [])}
    train = {ep.scene_id for ep in ds.splits.get("train", [])}
    if unseen & train:
        raise DataError(f"val_unseen shares scenes with train: {sorted(unseen & train)}")
    return ds
