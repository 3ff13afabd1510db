import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signnav.model import (
    NO_ACTION,
    ConfigError,
    HistoryBuffer,
    ObsBatch,
    StartConfig,
    StartModel,
    StartPolicy,
    ablation_config,
    bbox_features,
    greedy,
    pack_frames,
)
from signnav.nn import CheckpointError, ShapeError, Tensor, attention_weights, no_grad, softmax
from signnav.render import CameraModel, HintQuery, render_with_hint
from signnav.scene import Pose, gen_floorplan
from signnav.sim import ActionId

TINY = dict(width=16, ffn_dim=32, hint_dim=8, enc_channels=(4, 4), fused_channels=4, hint_channels=(4, 4))


@pytest.fixture(scope="module")
def model():
    return StartModel(StartConfig(seed=3))


def rand_obs(B, seed=0, size=64):
    rng = np.random.default_rng(seed)
    fb = np.zeros((B, 5))
    fb[:, :4] = np.sort(rng.random((B, 4)), axis=1)[:, [0, 1, 2, 3]]
    fb[:, 4] = rng.random(B)
    return ObsBatch(rng.random((B, size, size, 3)), rng.random((B, size, size, 1)), rng.random((B, 16, 16, 3)), fb)


def randomize_head(m, seed=1):
    rng = np.random.default_rng(seed)
    m.p("head.w_s").data[:] = rng.normal(0, 0.3, m.p("head.w_s").data.shape)
    m.p("head.b").data[:] = rng.normal(0, 0.3, 4)


# -- config ------------------------------------------------------------------------------------


def test_micro_config_geometry():
    cfg = StartConfig()
    assert cfg.feature_size == (16, 16)
    assert cfg.n_patches == 16


def test_full_scale_constructible():
    cfg = StartConfig.full_scale()
    assert (cfg.width, cfg.spatial_layers, cfg.spatial_heads) == (768, 6, 6)
    assert (cfg.temporal_layers, cfg.temporal_heads) == (6, 6)


@pytest.mark.parametrize(
    "kw",
    [dict(width=63), dict(patch=5), dict(history=-1), dict(use_rgb=False, use_depth=False), dict(temporal_heads=5)],
)
def test_bad_configs_rejected(kw):
    with pytest.raises(ConfigError):
        StartConfig(**kw)


def test_config_dict_round_trip_and_hash():
    cfg = StartConfig(history=3)
    assert StartConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.hash() == StartConfig(history=3).hash() != StartConfig().hash()


# -- observation and hint encoders -----------------------------------------------------------


def test_observation_shape(model):
    v = model.encode_observation(np.random.rand(3, 64, 64), np.random.rand(1, 64, 64))
    assert v.shape == (16, 16, 16)


def test_zero_observation_is_beta(model):
    m = StartModel(StartConfig(seed=3))
    m.p("obs_ln.beta").data[:] = np.arange(16) * 0.1
    v = m.encode_observation(np.zeros((3, 64, 64)), np.zeros((1, 64, 64)))
    assert np.allclose(v.data, (np.arange(16) * 0.1)[:, None, None], atol=0, rtol=0)


def test_rgb_depth_encoders_distinct(model):
    x = np.random.default_rng(0).random((64, 64))
    a = model.encode_observation(np.stack([x, x, x]), x[None] * 0)
    b = model.encode_observation(np.zeros((3, 64, 64)), x[None])
    assert not np.allclose(a.data, b.data)


def test_observation_shape_error(model):
    with pytest.raises(ShapeError):
        model.observation_features(np.zeros((1, 32, 32, 3)), np.zeros((1, 32, 32, 1)))


def test_bbox_features_examples():
    assert bbox_features((0, 0, 64, 64), 64, 64).tolist() == [0, 0, 1, 1, 1]
    assert bbox_features((16, 16, 48, 48), 64, 64).tolist() == [0.25, 0.25, 0.75, 0.75, 0.25]
    assert bbox_features((-1, -1, -1, -1), 64, 64).tolist() == [0.0] * 5
    assert bbox_features(None, 64, 64).tolist() == [0.0] * 5
    with pytest.raises(ShapeError):
        bbox_features((10, 10, 70, 20), 64, 64)


def test_absent_hint_convention(model):
    v = model.encode_hint(None, (-1, -1, -1, -1))
    assert v.shape == (64,)
    # LN(0 W^p) = beta_p, so v_h = LN(f_h(0) W^h) + beta_p
    a = model.hint_features(np.zeros((1, 16, 16, 3)), np.zeros((1, 5)))
    assert np.array_equal(v.data, a.data[0])


# -- spatial transformer ------------------------------------------------------------------------


def test_spatial_shapes(model):
    v_o = model.encode_observation(np.random.rand(3, 64, 64), np.random.rand(1, 64, 64))
    f_spa, cls = model.spatial_forward(v_o, model.encode_hint(None, None))
    assert f_spa.shape == (16, 64) and cls.shape == (64,)
    assert model.p("spatial.pos").data.shape == (17, 64)


def test_spatial_attention_sequence_length(model):
    obs = rand_obs(1)
    v_o = model.observation_features(obs.rgb, obs.depth)
    tok = model.patches(v_o)
    assert tok.shape == (1, 16, 4 * 4 * 16)


def test_cls_law_with_zero_layers():
    m = StartModel(StartConfig(spatial_layers=0, seed=5))
    obs = rand_obs(2, seed=1)
    v_o = m.observation_features(obs.rgb, obs.depth)
    v_h = m.hint_features(obs.crops, obs.fb)
    f_spa, cls = m.spatial_batch(v_o, v_h)
    pos = m.p("spatial.pos").data
    assert np.array_equal(cls.data, v_h.data + pos[0])
    proj = m.patches(v_o).data @ m.p("spatial.patch_w").data + m.p("spatial.patch_b").data
    assert np.allclose(f_spa.data, proj + pos[1:], atol=1e-12)


def test_attention_rows_sum_to_one(model):
    obs = rand_obs(1, seed=2)
    v_o = model.observation_features(obs.rgb, obs.depth)
    tok = model.patches(v_o).data @ model.p("spatial.patch_w").data
    x = np.concatenate([np.zeros((1, 1, 64)), tok], axis=1)
    bp = model._block_params("spatial.0")
    w = attention_weights(Tensor(x), bp.attn, 2)
    assert w.shape == (1, 2, 17, 17)
    assert np.allclose(w.data.sum(-1), 1.0, atol=1e-9)


# -- state, temporal and head ----------------------------------------------------------------


def test_make_state_constant_patches(model):
    row = np.random.default_rng(0).normal(size=64)
    f = Tensor(np.tile(row, (16, 1)))
    s = model.make_state(f, NO_ACTION)
    ref = model.state_parts(Tensor(row[None]))
    assert s.shape == (64,)
    assert np.allclose(model.state_parts(f).data, ref.data, atol=1e-12)
    assert not np.allclose(model.make_state(f, 0).data, model.make_state(f, 1).data)


def test_temporal_lengths_and_order_sensitivity(model):
    m = StartModel(StartConfig(seed=4))
    randomize_head(m)
    rng = np.random.default_rng(0)
    cls = Tensor(rng.normal(size=64))
    s_t = Tensor(rng.normal(size=64))
    hist = [(Tensor(rng.normal(size=(16, 64))), a) for a in (0, 1, 2)]
    out = m.temporal_forward(hist, cls, s_t)
    assert out.shape == (64,)
    swapped = m.temporal_forward([hist[1], hist[0], hist[2]], cls, s_t)
    assert not np.allclose(out.data, swapped.data)
    assert m.temporal_forward([], cls, s_t).shape == (64,)
    full = [(Tensor(rng.normal(size=(16, 64))), 0)] * 8
    assert m.temporal_forward(full, cls, s_t).shape == (64,)
    with pytest.raises(ShapeError):
        m.temporal_forward(full + full[:1], cls, s_t)


def test_fresh_model_is_uniform(model):
    p = model.action_distribution(Tensor(np.random.rand(64)))
    assert np.array_equal(p.data, np.full(4, 0.25))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(-50, 50))
def test_distribution_sums_to_one_and_shift_invariant(seed, c):
    rng = np.random.default_rng(seed)
    z = rng.normal(0, 5, size=4)
    p = softmax(Tensor(z)).data
    q = softmax(Tensor(z + c)).data
    assert abs(p.sum() - 1) <= 1e-9
    assert greedy(p) == greedy(q)


def test_greedy_tie_break():
    assert greedy([0.25] * 4) == 0
    assert greedy([0.1, 0.4, 0.4, 0.1]) == 1


# -- teacher-forced batch equals step-by-step policy ----------------------------------------------


@pytest.mark.parametrize("history", [0, 2, 8])
def test_sequence_logits_match_policy_steps(history):
    m = StartModel(StartConfig(history=history, seed=7))
    randomize_head(m)
    sc = gen_floorplan(0)
    cam = CameraModel()
    q = HintQuery(sc.goals[0].goal_id)
    x, y = sc.goals[1].position
    frames = [render_with_hint(sc, Pose(x, y, 0.3 * t), cam, q) for t in range(11)]
    acts = [0, 1, 2, 0, 0, 3, 1, 1, 2, 0, 3]
    obs = pack_frames(frames, 20.0)
    with no_grad():
        logits = m.sequence_logits(obs.take(slice(0, 11)), acts, [5, 6])
    probs = np.exp(logits.data - logits.data.max(1, keepdims=True))
    probs /= probs.sum(1, keepdims=True)
    pol = StartPolicy(m)
    for t in range(11):
        if t == 5:
            pol.reset()
        out = pol.step(frames[t], forced_action=acts[t])
        assert np.allclose(out.probs, probs[t], atol=1e-12)
    assert len(pol.history) == min(6, history)


def test_history_buffer_discipline():
    h = HistoryBuffer(3)
    for i in range(5):
        h.push(np.zeros(1), i % 4)
        assert len(h) == min(i + 1, 3)
    assert [a for _, a in h.entries()] == [2, 3, 0]
    h.clear()
    assert len(h) == 0


def test_policy_determinism_and_sampling():
    m = StartModel(StartConfig(seed=2))
    randomize_head(m)
    sc = gen_floorplan(1)
    f = render_with_hint(sc, Pose(*sc.goals[0].position, 1.0), CameraModel(), HintQuery(sc.goals[1].goal_id))
    a1 = StartPolicy(m).step(f).action
    a2 = StartPolicy(m).step(f).action
    assert a1 == a2 and isinstance(a1, ActionId)
    s1 = [StartPolicy(m, "sample", np.random.default_rng(5)).step(f).action for _ in range(3)]
    s2 = [StartPolicy(m, "sample", np.random.default_rng(5)).step(f).action for _ in range(3)]
    assert s1 == s2
    with pytest.raises(ValueError):
        StartPolicy(m, "sample")


# -- ablations and checkpoints -----------------------------------------------------------------


@pytest.mark.parametrize("name", ["full", "spatial_only", "temporal_only", "rgb_only", "depth_only"])
def test_ablation_variants_give_distributions(name):
    cfg = ablation_config(name, StartConfig(**TINY))
    m = StartModel(cfg)
    randomize_head(m)
    obs = rand_obs(4, seed=3)
    logits = m.sequence_logits(obs, [0, 1, 2, 3], [4])
    p = np.exp(logits.data) / np.exp(logits.data).sum(1, keepdims=True)
    assert p.shape == (4, 4) and np.allclose(p.sum(1), 1.0)
    if name == "spatial_only":
        assert "bypass.w" in m.params and not any(k.startswith("temporal.") for k in m.params)
    if name == "temporal_only":
        assert m.p("spatial.pos").data.shape == (16, TINY["width"])


def test_unknown_ablation():
    with pytest.raises(ConfigError):
        ablation_config("nope")


def test_checkpoint_round_trip(tmp_path):
    m = StartModel(StartConfig(**TINY, seed=9))
    randomize_head(m)
    m.save(tmp_path / "m.ckpt")
    again = StartModel.load(tmp_path / "m.ckpt")
    assert again.save_bytes() == m.save_bytes()
    assert again.config == m.config
    other = StartModel(StartConfig(**dict(TINY, history=2)))
    from signnav.nn import load_into

    with pytest.raises(CheckpointError):
        load_into(other.parameters(), m.save_bytes(), other.config.hash())
