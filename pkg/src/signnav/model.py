"""Spatial-temporal transformer policy: observation/hint encoders, hint-initialized CLS,
state fusion over a fixed history window, and the action head."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .nn import (
    AttnParams,
    BlockParams,
    Param,
    Tensor,
    concat,
    conv2d_nhwc,
    dump_params,
    gelu,
    layer_norm,
    linear,
    load_into,
    mean,
    no_grad,
    relu,
    reshape,
    softmax,
    take_rows,
    transformer_block,
    transpose,
)
from .nn.functional import ShapeError
from .render import HINT_CROP, SENTINEL_BBOX, Frame
from .rng import fnv1a64_hex, substream
from .sim import ActionId

N_ACTIONS = 4
NO_ACTION = 4  # embedding row used for the current step, whose action is not yet chosen


class ConfigError(ValueError):
    pass


def _down(n: int) -> int:
    # 3x3 conv, stride 2, padding 1
    return (n - 1) // 2 + 1


@dataclass(frozen=True)
class StartConfig:
    image_size: tuple = (64, 64)
    enc_channels: tuple = (8, 16)
    fused_channels: int = 16
    patch: int = 4
    width: int = 64
    spatial_layers: int = 2
    spatial_heads: int = 2
    temporal_layers: int = 2
    temporal_heads: int = 2
    history: int = 8
    hint_channels: tuple = (8, 16)
    hint_dim: int = 32
    ffn_dim: int = 128
    use_rgb: bool = True
    use_depth: bool = True
    spatial: bool = True  # False: no spatial blocks, hint token excluded
    max_depth: float = 20.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        object.__setattr__(self, "enc_channels", tuple(int(v) for v in self.enc_channels))
        object.__setattr__(self, "hint_channels", tuple(int(v) for v in self.hint_channels))
        self.validate()

    @classmethod
    def full_scale(cls, **kw) -> "StartConfig":
        """768-wide, six-layer, six-head transformers: constructible, far too slow to train here."""
        base = dict(width=768, spatial_layers=6, spatial_heads=6, temporal_layers=6, temporal_heads=6, ffn_dim=3072)
        base.update(kw)
        return cls(**base)

    @property
    def feature_size(self) -> tuple[int, int]:
        h, w = self.image_size
        for _ in self.enc_channels:
            h, w = _down(h), _down(w)
        return h, w

    @property
    def n_patches(self) -> int:
        ho, wo = self.feature_size
        return ho * wo // (self.patch * self.patch)

    @property
    def temporal(self) -> bool:
        return self.history > 0

    def validate(self) -> None:
        if len(self.image_size) != 2 or min(self.image_size) < 1:
            raise ConfigError(f"image_size must be two positive extents, got {self.image_size}")
        if not self.enc_channels or min(self.enc_channels) < 1:
            raise ConfigError("enc_channels must be a nonempty list of positive widths")
        if len(self.hint_channels) != 2 or min(self.hint_channels) < 1:
            raise ConfigError("hint_channels must hold two positive widths")
        ho, wo = self.feature_size
        if self.patch < 1 or ho % self.patch or wo % self.patch:
            raise ConfigError(f"feature map {ho}x{wo} is not tiled by patch size {self.patch}")
        for name in ("spatial_heads", "temporal_heads"):
            h = getattr(self, name)
            if h < 1 or self.width % h:
                raise ConfigError(f"width {self.width} is not divisible by {name}={h}")
        if self.history < 0:
            raise ConfigError("history must be >= 0")
        if min(self.spatial_layers, self.temporal_layers) < 0:
            raise ConfigError("layer counts must be >= 0")
        if not (self.use_rgb or self.use_depth):
            raise ConfigError("at least one of use_rgb / use_depth must be enabled")
        if min(self.fused_channels, self.width, self.hint_dim, self.ffn_dim) < 1 or self.max_depth <= 0:
            raise ConfigError("widths and max_depth must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("image_size", "enc_channels", "hint_channels"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StartConfig":
        return cls(**d)

    def hash(self) -> str:
        return fnv1a64_hex(json.dumps(self.to_dict(), sort_keys=True).encode())


# -- observation packing --------------------------------------------------------------------


@dataclass
class ObsBatch:
    """Network-ready channels-last observations.

    rgb [B,H,W,3] in [0, 1], depth [B,H,W,1] scaled to [0, 1], crops [B,16,16,3], fb [B,5].
    """

    rgb: np.ndarray
    depth: np.ndarray
    crops: np.ndarray
    fb: np.ndarray

    def __len__(self) -> int:
        return len(self.rgb)

    def take(self, idx) -> "ObsBatch":
        return ObsBatch(self.rgb[idx], self.depth[idx], self.crops[idx], self.fb[idx])

    @classmethod
    def concat(cls, parts) -> "ObsBatch":
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("rgb", "depth", "crops", "fb")))


def bbox_features(bbox, width: int, height: int) -> np.ndarray:
    """[x0/W, y0/H, x1/W, y1/H, w*h/(W*H)]; the absent-hint sentinel maps to zeros."""
    if bbox is None or tuple(bbox) == SENTINEL_BBOX:
        return np.zeros(5)
    x0, y0, x1, y1 = (float(v) for v in bbox)
    if not (0 <= x0 <= x1 <= width and 0 <= y0 <= y1 <= height):
        raise ShapeError(f"bbox {tuple(bbox)} lies outside the {width}x{height} image")
    return np.array([x0 / width, y0 / height, x1 / width, y1 / height, (x1 - x0) * (y1 - y0) / (width * height)])


def pack_frames(frames, max_depth: float) -> ObsBatch:
    rgb = np.stack([f.rgb for f in frames]).astype(np.float64)
    depth = np.clip(np.stack([f.depth for f in frames]).astype(np.float64) / max_depth, 0.0, 1.0)
    crops = np.zeros((len(frames), HINT_CROP, HINT_CROP, 3))
    fb = np.zeros((len(frames), 5))
    H, W = rgb.shape[1:3]
    for i, f in enumerate(frames):
        if f.hint is not None:
            crops[i] = f.hint.crop
            fb[i] = bbox_features(f.hint.bbox, W, H)
    return ObsBatch(rgb, depth, crops, fb)


# -- the model ------------------------------------------------------------------------------


class StartModel:
    def __init__(self, config: StartConfig | None = None):
        self.config = cfg = config or StartConfig()
        self.params: dict[str, Param] = {}
        rng = substream(cfg.seed, "init")
        D, C = cfg.width, cfg.fused_channels

        def mat(name, shape, fan_in=None, fan_out=None):
            fi = fan_in if fan_in is not None else shape[0]
            fo = fan_out if fan_out is not None else shape[-1]
            a = math.sqrt(6.0 / (fi + fo))
            self.params[name] = Param(rng.uniform(-a, a, size=shape), name)

        def conv(name, cout, cin):
            mat(name, (cout, cin, 3, 3), cin * 9, cout * 9)

        def const(name, shape, value):
            self.params[name] = Param(np.full(shape, float(value)), name)

        def norm(name, d):
            const(name + ".gamma", (d,), 1.0)
            const(name + ".beta", (d,), 0.0)

        def block(prefix, ffn):
            for w in ("w_q", "w_k", "w_v", "w_o"):
                mat(f"{prefix}.attn.{w}", (D, D))
            norm(prefix + ".ln1", D)
            mat(prefix + ".ffn.w1", (D, ffn))
            mat(prefix + ".ffn.w2", (ffn, D))
            norm(prefix + ".ln2", D)

        for enc, cin, used in (("enc_rgb", 3, cfg.use_rgb), ("enc_depth", 1, cfg.use_depth)):
            if not used:
                continue
            prev = cin
            for i, ch in enumerate(cfg.enc_channels):
                conv(f"{enc}.conv{i}", ch, prev)
                prev = ch
            mat(f"{enc}.proj", (prev, C))
        norm("obs_ln", C)

        h1, h2 = cfg.hint_channels
        conv("hint.conv0", h1, 3)
        conv("hint.conv1", h2, h1)
        hs = _down(_down(HINT_CROP))
        mat("hint.fc", (h2 * hs * hs, cfg.hint_dim))
        mat("hint.w_h", (cfg.hint_dim, D))
        norm("hint.ln_h", D)
        mat("hint.w_p", (5, D))
        norm("hint.ln_p", D)

        N = cfg.n_patches
        mat("spatial.patch_w", (cfg.patch * cfg.patch * C, D))
        const("spatial.patch_b", (D,), 0.0)
        if cfg.spatial:
            mat("spatial.pos", (N + 1, D))
            for i in range(cfg.spatial_layers):
                block(f"spatial.{i}", cfg.ffn_dim)
        else:
            mat("spatial.pos", (N, D))

        mat("state.w_spa", (D, D))
        norm("state.ln_spa", D)
        mat("state.action_table", (N_ACTIONS + 1, D))
        mat("state.w_a", (D, D))
        norm("state.ln_a", D)

        if cfg.temporal:
            mat("temporal.pos", (cfg.history + 2, D))
            for i in range(cfg.temporal_layers):
                block(f"temporal.{i}", cfg.ffn_dim)
        else:
            mat("bypass.w", (D, D))
            norm("bypass.ln", D)

        # zero head: a fresh model predicts the uniform distribution
        const("head.w_s", (D, N_ACTIONS), 0.0)
        const("head.b", (N_ACTIONS,), 0.0)

    # parameters -----------------------------------------------------------------------
    def parameters(self) -> list[Param]:
        return list(self.params.values())

    def p(self, name: str) -> Param:
        return self.params[name]

    def _ln(self, x, name):
        return layer_norm(x, self.params[name + ".gamma"], self.params[name + ".beta"])

    def _block_params(self, prefix) -> BlockParams:
        P = self.params
        attn = AttnParams(*(P[f"{prefix}.attn.{w}"] for w in ("w_q", "w_k", "w_v", "w_o")))
        return BlockParams(
            attn,
            (P[prefix + ".ln1.gamma"], P[prefix + ".ln1.beta"]),
            P[prefix + ".ffn.w1"],
            P[prefix + ".ffn.w2"],
            (P[prefix + ".ln2.gamma"], P[prefix + ".ln2.beta"]),
        )

    def param_count(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def save_bytes(self) -> bytes:
        return dump_params(self.parameters(), self.config.hash(), self.config.to_dict())

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.save_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "StartModel":
        from .nn import parse_checkpoint

        header, _ = parse_checkpoint(blob)
        cfg = StartConfig.from_dict(header["config"])
        model = cls(cfg)
        load_into(model.parameters(), blob, cfg.hash())
        return model

    @classmethod
    def load(cls, path) -> "StartModel":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    # batched forward pieces (leading batch axis B) ------------------------------------------
    def _encoder(self, x, prefix) -> Tensor:
        h = x
        for i in range(len(self.config.enc_channels)):
            h = relu(conv2d_nhwc(h, self.params[f"{prefix}.conv{i}"]))
        return linear(h, self.params[prefix + ".proj"])

    def observation_features(self, rgb, depth) -> Tensor:
        """v_o, channels-last [B, H_o, W_o, C_o]."""
        cfg = self.config
        B = len(rgb) if cfg.use_rgb else len(depth)
        H, W = cfg.image_size
        if cfg.use_rgb and tuple(np.shape(rgb)[1:]) != (H, W, 3):
            raise ShapeError(f"rgb must be [B, {H}, {W}, 3], got {np.shape(rgb)}")
        if cfg.use_depth and tuple(np.shape(depth)[1:]) != (H, W, 1):
            raise ShapeError(f"depth must be [B, {H}, {W}, 1], got {np.shape(depth)}")
        parts = []
        if cfg.use_rgb:
            parts.append(self._encoder(rgb, "enc_rgb"))
        if cfg.use_depth:
            parts.append(self._encoder(depth, "enc_depth"))
        v = parts[0] if len(parts) == 1 else parts[0] + parts[1]
        assert v.shape[0] == B
        return self._ln(v, "obs_ln")

    def hint_features(self, crops, fb) -> Tensor:
        """v_h [B, D] from crops [B, 16, 16, 3] and normalized boxes [B, 5]."""
        h = relu(conv2d_nhwc(crops, self.params["hint.conv0"]))
        h = relu(conv2d_nhwc(h, self.params["hint.conv1"]))
        f_h = linear(reshape(h, (h.shape[0], -1)), self.params["hint.fc"])
        a = self._ln(linear(f_h, self.params["hint.w_h"]), "hint.ln_h")
        b = self._ln(linear(Tensor(fb), self.params["hint.w_p"]), "hint.ln_p")
        return a + b

    def patches(self, v_o: Tensor) -> Tensor:
        B, Ho, Wo, C = v_o.shape
        P = self.config.patch
        x = reshape(v_o, (B, Ho // P, P, Wo // P, P, C))
        x = transpose(x, (0, 1, 3, 2, 4, 5))
        return reshape(x, (B, (Ho // P) * (Wo // P), P * P * C))

    def spatial_batch(self, v_o: Tensor, v_h: Tensor) -> tuple[Tensor, Tensor]:
        cfg = self.config
        tok = linear(self.patches(v_o), self.params["spatial.patch_w"], self.params["spatial.patch_b"])
        if not cfg.spatial:
            return tok + self.params["spatial.pos"], v_h
        B = tok.shape[0]
        x = concat([reshape(v_h, (B, 1, cfg.width)), tok], axis=1) + self.params["spatial.pos"]
        for i in range(cfg.spatial_layers):
            x = transformer_block(x, self._block_params(f"spatial.{i}"), cfg.spatial_heads)
        return x[:, 1:, :], x[:, 0, :]

    def state_parts(self, f_spa: Tensor) -> Tensor:
        """LN(mean(f_spa) W^spa), the observation half of the state."""
        return self._ln(linear(mean(f_spa, axis=-2), self.params["state.w_spa"]), "state.ln_spa")

    def action_parts(self, actions) -> Tensor:
        """LN(e^a W^a) for an int array of action ids (NO_ACTION allowed)."""
        e = take_rows(self.params["state.action_table"], np.asarray(actions, dtype=np.int64))
        return self._ln(linear(e, self.params["state.w_a"]), "state.ln_a")

    def head(self, f_s: Tensor) -> Tensor:
        return linear(f_s, self.params["head.w_s"], self.params["head.b"])

    def _temporal_out(self, seq: Tensor, key_mask=None) -> Tensor:
        cfg = self.config
        x = seq
        for i in range(cfg.temporal_layers):
            x = transformer_block(x, self._block_params(f"temporal.{i}"), cfg.temporal_heads, key_mask)
        return x[..., -1, :]

    def _bypass(self, s_t: Tensor, cls_out: Tensor) -> Tensor:
        return self._ln(linear(s_t + cls_out, self.params["bypass.w"]), "bypass.ln")

    def sequence_logits(self, obs: ObsBatch, hist_actions, episode_lengths) -> Tensor:
        """Teacher-forced logits [B, 4] for consecutive frames of several episodes.

        ``hist_actions[t]`` is the action taken at frame t (fed into later steps'
        history); ``episode_lengths`` partitions the B frames into episodes.
        """
        cfg = self.config
        v_o = self.observation_features(obs.rgb, obs.depth)
        v_h = self.hint_features(obs.crops, obs.fb)
        f_spa, cls_out = self.spatial_batch(v_o, v_h)
        spa = self.state_parts(f_spa)
        acts = self.action_parts(np.arange(N_ACTIONS + 1))
        B = len(obs)
        s_cur = spa + take_rows(acts, np.full(B, NO_ACTION))
        if not cfg.temporal:
            return self.head(self._bypass(s_cur, cls_out))
        s_hist = spa + take_rows(acts, np.asarray(hist_actions, dtype=np.int64))
        k = cfg.history
        table = concat([cls_out, s_hist, s_cur, Tensor(np.zeros((1, cfg.width)))], axis=0)
        pad = 3 * B
        idx = np.full((B, k + 2), pad, dtype=np.int64)
        start = 0
        for n in episode_lengths:
            for t in range(n):
                g = start + t
                idx[g, 0] = g
                for j in range(1, min(t, k) + 1):
                    idx[g, k + 1 - j] = B + g - j
                idx[g, k + 1] = 2 * B + g
            start += n
        if start != B:
            raise ShapeError(f"episode lengths sum to {start}, expected {B}")
        seq = take_rows(table, idx) + self.params["temporal.pos"]
        f_s = self._temporal_out(seq, idx != pad)
        return self.head(f_s)

    # single-step API ------------------------------------------------------------------------
    def encode_observation(self, rgb, depth) -> Tensor:
        """v_o as [C_o, H_o, W_o] for one frame (rgb [3,H,W], depth [1,H,W] in [0, 1])."""
        rgb = np.asarray(rgb, dtype=np.float64).transpose(1, 2, 0)[None] if self.config.use_rgb else None
        depth = np.asarray(depth, dtype=np.float64).transpose(1, 2, 0)[None] if self.config.use_depth else None
        v = self.observation_features(rgb, depth)
        return transpose(v, (0, 3, 1, 2))[0]

    def encode_hint(self, crop, bbox) -> Tensor:
        """v_h [D] for one crop [3, 16, 16] (or None when no hint is visible)."""
        H, W = self.config.image_size
        crop = np.zeros((3, HINT_CROP, HINT_CROP)) if crop is None else np.asarray(crop, dtype=np.float64)
        fb = bbox_features(bbox, W, H)
        return self.hint_features(crop.transpose(1, 2, 0)[None], fb[None])[0]

    def spatial_forward(self, v_o, v_h) -> tuple[Tensor, Tensor]:
        """(f_spa [N, D], cls_out [D]) for v_o [C_o, H_o, W_o] and v_h [D]."""
        v = transpose(v_o, (1, 2, 0))
        f_spa, cls_out = self.spatial_batch(reshape(v, (1,) + v.shape), reshape(v_h, (1, -1)))
        return f_spa[0], cls_out[0]

    def make_state(self, f_spa, action: int) -> Tensor:
        return self.state_parts(f_spa) + self.action_parts(np.array([action]))[0]

    def temporal_forward(self, history: list, cls_out, s_t) -> Tensor:
        """f_s from [cls_out, s_{t-m}, ..., s_{t-1}, s_t] with right-aligned positions.

        ``history`` holds (f_spa, action) pairs in chronological order.
        """
        cfg = self.config
        if not cfg.temporal:
            return self._bypass(s_t, cls_out)
        m = len(history)
        if m > cfg.history:
            raise ShapeError(f"history of length {m} exceeds window {cfg.history}")
        D = cfg.width
        toks = [reshape(cls_out, (1, D))]
        toks += [reshape(self.make_state(f, a), (1, D)) for f, a in history]
        toks.append(reshape(s_t, (1, D)))
        rows = np.array([0] + list(range(cfg.history + 1 - m, cfg.history + 2)))
        seq = concat(toks, axis=0) + take_rows(self.params["temporal.pos"], rows)
        return self._temporal_out(seq)

    def action_distribution(self, f_s) -> Tensor:
        return softmax(self.head(f_s))


class HistoryBuffer:
    """The last k (f_spa, action) pairs, oldest first."""

    def __init__(self, k: int):
        self.k = k
        self._items: deque = deque(maxlen=k if k > 0 else 0)

    def clear(self) -> None:
        self._items.clear()

    def push(self, f_spa: np.ndarray, action: int) -> None:
        if self.k > 0:
            self._items.append((np.asarray(f_spa), int(action)))

    def entries(self) -> list:
        return list(self._items)

    def __len__(self) -> int:
        return len(self._items)


def greedy(p) -> int:
    """argmax with ties broken toward the lowest action index."""
    p = np.asarray(p)
    return int(np.flatnonzero(p == p.max())[0])


@dataclass
class StepOutput:
    action: ActionId
    probs: np.ndarray
    f_spa: np.ndarray = field(repr=False, default=None)


class StartPolicy:
    """Stateful policy wrapper: owns a history buffer; parameters may be shared read-only."""

    needs_frame = True

    def __init__(self, model: StartModel, mode: str = "greedy", rng: np.random.Generator | None = None):
        if mode not in ("greedy", "sample"):
            raise ValueError(f"unknown decoding mode {mode!r}")
        if mode == "sample" and rng is None:
            raise ValueError("sample mode needs a random stream")
        self.model = model
        self.mode = mode
        self.rng = rng
        self.history = HistoryBuffer(model.config.history)

    def reset(self) -> None:
        self.history.clear()

    def step(self, frame: Frame, forced_action: int | None = None) -> StepOutput:
        m = self.model
        obs = pack_frames([frame], m.config.max_depth)
        with no_grad():
            v_o = m.observation_features(obs.rgb, obs.depth)
            v_h = m.hint_features(obs.crops, obs.fb)
            f_spa, cls_out = m.spatial_batch(v_o, v_h)
            f_spa, cls_out = f_spa[0], cls_out[0]
            s_t = m.make_state(f_spa, NO_ACTION)
            f_s = m.temporal_forward([(Tensor(f), a) for f, a in self.history.entries()], cls_out, s_t)
            p = m.action_distribution(f_s).data
        if forced_action is not None:
            a = int(forced_action)
        elif self.mode == "greedy":
            a = greedy(p)
        else:
            a = int(self.rng.choice(N_ACTIONS, p=p))
        self.history.push(f_spa.data, a)
        return StepOutput(ActionId(a), p, f_spa.data)

    def act(self, result) -> ActionId:
        return self.step(result.frame).action


def ablation_config(name: str, base: StartConfig | None = None) -> StartConfig:
    """Named architecture variants: full, spatial_only, temporal_only, rgb_only, depth_only."""
    base = base or StartConfig()
    variants = {
        "full": {},
        "spatial_only": {"history": 0},
        "temporal_only": {"spatial": False},
        "rgb_only": {"use_depth": False},
        "depth_only": {"use_rgb": False},
    }
    if name not in variants:
        raise ConfigError(f"unknown ablation {name!r}; choose from {sorted(variants)}")
    return replace(base, **variants[name])
