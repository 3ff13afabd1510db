"""Acceptance suite: one test per acceptance criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the full suite takes roughly fifteen
minutes on one core, dominated by the micro teacher-forcing run.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from signnav.episodes import generate_splits, replay
from signnav.experiments import (
    ABLATIONS,
    eval_model,
    eval_oracle,
    make_scenes,
    micro_data,
    micro_train_config,
    run_ablation,
    run_dagger,
    run_micro_tf,
)
from signnav.metrics import dtw, evaluate, ndtw, sdtw
from signnav.model import StartConfig, StartModel, greedy
from signnav.nn import (
    AttnParams,
    BlockParams,
    Param,
    Tensor,
    attention_weights,
    concat,
    conv2d,
    conv2d_nhwc,
    cross_entropy_weighted,
    gelu,
    grad_check,
    layer_norm,
    linear,
    log_softmax,
    mhsa,
    relu,
    softmax,
    take_rows,
    transformer_block,
)
from signnav.nn import tensor as T
from signnav.scene import FloorplanParams, gen_floorplan
from signnav.sim import ActionId, SignNavEnv, StopPolicy
from signnav.store import manifest_hash, write_dataset
from signnav.training import (
    ObservationCache,
    TrainConfig,
    batch_loss,
    inflection_ratio,
    inflection_weights,
    smoothed,
)

from test_metrics import enumerate_dtw
from test_model import rand_obs

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    """Print one PASS/FAIL line to the terminal, then assert."""

    def _report(n: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        assert ok, f"criterion {n} failed: {detail}"

    return _report


@pytest.fixture(scope="module")
def oracle_world():
    """At least 200 episodes over 3 procedural floorplans of the default size."""
    t0 = time.perf_counter()
    scenes = make_scenes(3, FloorplanParams().extent, seed_base=100)
    eps = generate_splits(scenes, {"train": 200}, 7)["train"]
    return {s.scene_id: s for s in scenes}, eps, time.perf_counter() - t0


@pytest.fixture(scope="module")
def micro():
    return micro_data()


@pytest.fixture(scope="module")
def micro_run(micro):
    return run_micro_tf(micro)


# -- 1 --------------------------------------------------------------------------------------------


def test_c1_dtw_equals_exhaustive_enumeration(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        r = rng.uniform(-5, 5, size=(int(rng.integers(1, 7)), 2))
        q = rng.uniform(-5, 5, size=(int(rng.integers(1, 7)), 2))
        ref = enumerate_dtw(r, q)
        worst = max(worst, abs(dtw(r, q) - ref) / max(1.0, ref))
    dt = time.perf_counter() - t0
    report(1, "DTW oracle equivalence", worst <= 1e-12 and dt < 5.0, f"max rel err {worst:.2e} over 200 pairs, {dt:.2f} s")


# -- 2 --------------------------------------------------------------------------------------------


def test_c2_ndtw_identities(report, oracle_world):
    rng = np.random.default_rng(5)
    self_err = max(abs(ndtw(r, r) - 1.0) for r in (rng.normal(size=(int(rng.integers(1, 30)), 2)) for _ in range(50)))
    off = abs(ndtw([(0, 0), (1, 0)], [(0, 1), (1, 1)]) - math.exp(-1))
    scenes, eps, _ = oracle_world
    stop = evaluate(lambda sc, ep: StopPolicy(), eps[:20], scenes, SignNavEnv(), name="stop")
    timeout = evaluate(lambda sc, ep: _Spin(), eps[:5], scenes, SignNavEnv(), max_steps=10, name="spin")
    failed = [e for e in stop.episodes + timeout.episodes if not e.success]
    sdtw_ok = len(failed) == 25 and all(e.sdtw == 0.0 for e in failed) and sdtw(0, 0.97) == 0.0
    ok = self_err <= 1e-12 and off <= 1e-9 and sdtw_ok
    report(2, "nDTW identities", ok, f"|ndtw(r,r)-1|={self_err:.1e}, |offset-1/e|={off:.1e}, "
                                     f"{len(failed)} failed episodes all SDTW=0: {sdtw_ok}")


class _Spin:
    needs_frame = False

    def reset(self):
        pass

    def act(self, result):
        return ActionId.LEFT


# -- 3 --------------------------------------------------------------------------------------------


def test_c3_oracle_navigation(report, oracle_world):
    t0 = time.perf_counter()
    scenes, eps, gen_seconds = oracle_world
    agg = eval_oracle(eps, scenes).aggregates
    dt = time.perf_counter() - t0 + gen_seconds
    n_scenes = len({e.scene_id for e in eps})
    ok = len(eps) >= 200 and n_scenes >= 3 and agg["SR"] == 1.0 and agg["NDTW"] >= 0.9 and agg["RMSE"] <= 0.25
    ok = ok and dt < 120.0
    report(3, "oracle navigation", ok, f"{len(eps)} episodes / {n_scenes} scenes: SR={agg['SR']:.3f} "
                                      f"NDTW={agg['NDTW']:.4f} RMSE={agg['RMSE']:.4f} m, generate+evaluate {dt:.1f} s")


# -- 4 --------------------------------------------------------------------------------------------


def test_c4_replay_and_generation_determinism(report, oracle_world, tmp_path):
    scenes, eps, _ = oracle_world
    mismatches = 0
    for ep in eps[:100]:
        poses = replay(scenes[ep.scene_id], ep)
        mismatches += sum(
            (p.x, p.y, p.theta) != (s.pose.x, s.pose.y, s.pose.theta) for p, s in zip(poses, ep.steps)
        ) + (len(poses) != len(ep.steps))
    hashes = []
    for k in range(2):
        sc = [gen_floorplan(300 + i, FloorplanParams(extent=14.0)) for i in range(3)]
        splits = generate_splits(sc, {"train": 8, "val_seen": 4, "val_unseen": 4}, 11)
        write_dataset(tmp_path / f"run{k}", sc, splits, 11, {"seed": 11})
        hashes.append(manifest_hash(tmp_path / f"run{k}"))
    ok = mismatches == 0 and hashes[0] == hashes[1]
    report(4, "replay determinism", ok, f"100 episodes, {mismatches} pose mismatches; manifest hashes "
                                       f"{hashes[0]} / {hashes[1]}")


# -- 5 --------------------------------------------------------------------------------------------


def _proj(out, seed=0):
    c = np.random.default_rng(seed).normal(size=out.shape)
    return (out * Tensor(c)).sum()


def _op_checks():
    rng = np.random.default_rng(17)

    def P(shape, name, scale=1.0):
        return Param(rng.normal(size=shape) * scale, name)

    def attn(D):
        return AttnParams(*(P((D, D), n, 0.4) for n in ("q", "k", "v", "o")))

    x, y = P((3, 4), "x"), P((3, 4), "y")
    w, b, m = P((4, 5), "w"), P((5,), "b"), P((4, 2), "m")
    pos = Param(rng.uniform(0.5, 2.0, size=(3, 4)), "pos")
    signed = Param(rng.uniform(0.1, 1.0, size=12) * rng.choice([-1, 1], size=12), "signed")
    g, be = Param(1 + 0.1 * rng.normal(size=4), "g"), Param(0.1 * rng.normal(size=4), "b")
    img, k = P((2, 6, 6), "img"), P((3, 2, 3, 3), "k")
    nhwc = P((2, 5, 5, 2), "nhwc")
    ap = attn(8)
    xa = P((2, 4, 8), "xa")
    mask = np.array([[True, True, True, True], [False, True, False, True]])
    bp = BlockParams(attn(8), (P((8,), "l1g", 0.1), P((8,), "l1b", 0.1)), P((8, 16), "f1", 0.3),
                     P((16, 8), "f2", 0.3), (P((8,), "l2g", 0.1), P((8,), "l2b", 0.1)))
    bp.ln1[0].data += 1.0
    bp.ln2[0].data += 1.0
    xb = P((3, 8), "xb")
    block_params = [bp.attn.w_q, bp.attn.w_k, bp.attn.w_v, bp.attn.w_o, *bp.ln1, bp.w_f1, bp.w_f2, *bp.ln2]
    table, logits = P((6, 4), "table"), P((5, 4), "logits")
    return {
        "add": (lambda: _proj(T.add(x, y)), [x, y]),
        "sub": (lambda: _proj(T.sub(x, y)), [x, y]),
        "mul": (lambda: _proj(T.mul(x, y)), [x, y]),
        "matmul": (lambda: _proj(T.matmul(x, m)), [x, m]),
        "reshape/transpose": (lambda: _proj(T.transpose(T.reshape(x, (4, 3)))), [x]),
        "getitem": (lambda: _proj(T.getitem(x, (slice(1, 3), [0, 2]))), [x]),
        "sum/mean": (lambda: T.tsum(x * x, axis=0).sum() + T.mean(x * y), [x, y]),
        "exp/log": (lambda: _proj(T.log(pos) + T.exp(x * 0.5)), [pos, x]),
        "take_rows": (lambda: _proj(take_rows(table, np.array([0, 3, 3, 5]))), [table]),
        "concat": (lambda: _proj(concat([x, y], axis=1)), [x, y]),
        "linear": (lambda: _proj(linear(x, w, b)), [x, w, b]),
        "layer_norm": (lambda: _proj(layer_norm(x, g, be)), [x, g, be]),
        "softmax": (lambda: _proj(softmax(x)), [x]),
        "softmax(mask)": (lambda: _proj(softmax(x, mask=np.array([True, False, True, True]))), [x]),
        "log_softmax": (lambda: _proj(log_softmax(x)), [x]),
        "gelu": (lambda: _proj(gelu(x)), [x]),
        "relu": (lambda: _proj(relu(signed)), [signed]),
        "conv2d": (lambda: _proj(conv2d(img, k)), [img, k]),
        "conv2d_nhwc": (lambda: _proj(conv2d_nhwc(nhwc, Param(k.data.copy(), "k2"))), [nhwc]),
        "attention_weights": (lambda: _proj(attention_weights(xa, ap, 2, mask)), [xa, ap.w_q, ap.w_k]),
        "mhsa(mask)": (lambda: _proj(mhsa(xa, ap, 2, mask)), [xa, ap.w_q, ap.w_k, ap.w_v, ap.w_o]),
        "transformer_block": (lambda: _proj(transformer_block(xb, bp, 2)), [xb, *block_params]),
        "cross_entropy_weighted": (
            lambda: cross_entropy_weighted(logits, np.array([0, 1, 2, 3, 1]), np.array([0.5, 1.0, 2.0, 1.5, 1.0])),
            [logits],
        ),
    }


def test_c5_gradient_fidelity(report):
    t0 = time.perf_counter()
    errs = {name: grad_check(f, params) for name, (f, params) in _op_checks().items()}
    worst_op = max(errs, key=errs.get)

    params = FloorplanParams(extent=12.0)
    scenes = [gen_floorplan(i, params) for i in range(2)]
    ep = generate_splits(scenes, {"train": 1}, 5, min_geodesic=3.0)["train"][0]
    cache = ObservationCache({s.scene_id: s for s in scenes})
    model = StartModel(StartConfig(seed=1))
    # The action head starts at zero; perturb it so gradients reach every parameter.
    model.p("head.w_s").data[:] = np.random.default_rng(0).normal(0, 0.5, model.p("head.w_s").data.shape)
    short = type(ep)(ep.episode_id + "_t3", ep.scene_id, ep.goal_id, ep.start, ep.gt_path, ep.steps[:3])
    rho = inflection_ratio([[s.action for s in short.steps]])
    e2e = grad_check(lambda: batch_loss(model, [short], cache, rho)[0], model.parameters(), max_coords=60, seed=0)
    dt = time.perf_counter() - t0
    ok = errs[worst_op] <= 1e-4 and e2e <= 1e-3 and dt < 180.0
    report(5, "gradient fidelity", ok, f"{len(errs)} ops, worst {worst_op}={errs[worst_op]:.2e}; "
                                      f"end-to-end T=3 {e2e:.2e}; {dt:.1f} s")


# -- 6 --------------------------------------------------------------------------------------------


def test_c6_architecture_laws(report):
    cfg = StartConfig(seed=3)
    model = StartModel(cfg)
    obs = rand_obs(1, seed=2)
    v_o = model.observation_features(obs.rgb, obs.depth)
    n_tokens = model.patches(v_o).shape[1]
    seq_len = model.p("spatial.pos").data.shape[0]
    h, w = cfg.feature_size
    n_expected = h * w // cfg.patch**2
    len_ok = n_tokens == n_expected and seq_len == n_expected + 1 == 17

    m0 = StartModel(StartConfig(spatial_layers=0, seed=5))
    obs2 = rand_obs(2, seed=1)
    v_h = m0.hint_features(obs2.crops, obs2.fb)
    _, cls = m0.spatial_batch(m0.observation_features(obs2.rgb, obs2.depth), v_h)
    cls_ok = np.array_equal(cls.data, v_h.data + m0.p("spatial.pos").data[0])

    tok = model.patches(v_o).data @ model.p("spatial.patch_w").data
    x = np.concatenate([np.zeros((1, 1, cfg.width)), tok], axis=1)
    a = attention_weights(Tensor(x), model._block_params("spatial.0").attn, cfg.spatial_heads).data
    attn_err = float(np.abs(a.sum(-1) - 1.0).max())

    rng = np.random.default_rng(0)
    dist_err, argmax_ok = 0.0, True
    for _ in range(200):
        z = rng.normal(0, 5, size=4)
        p = softmax(Tensor(z)).data
        dist_err = max(dist_err, abs(p.sum() - 1.0))
        argmax_ok &= greedy(p) == greedy(softmax(Tensor(z + rng.uniform(-50, 50))).data)
    ok = len_ok and cls_ok and attn_err <= 1e-9 and dist_err <= 1e-9 and argmax_ok
    report(6, "architecture laws", ok, f"sequence {seq_len} (N={n_tokens}), CLS law {cls_ok}, "
                                      f"attention row err {attn_err:.1e}, distribution err {dist_err:.1e}, "
                                      f"argmax shift-invariant {argmax_ok}")


# -- 7 --------------------------------------------------------------------------------------------


def test_c7_inflection_weighting(report):
    F, L = ActionId.FORWARD, ActionId.LEFT
    ex1 = inflection_weights([F, F, F, F], 0.25).tolist() == [16 / 7, 4 / 7, 4 / 7, 4 / 7]
    ex2 = np.allclose(inflection_weights([F, F, L], 2 / 3), [1.125, 0.75, 1.125], rtol=0, atol=1e-15)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        seq = rng.integers(0, 4, size=int(rng.integers(1, 80)))
        worst = max(worst, abs(inflection_weights(seq, float(rng.uniform(0.01, 1.0))).mean() - 1.0))
    ok = ex1 and ex2 and worst <= 1e-12
    report(7, "inflection weighting", ok, f"examples {ex1 and ex2}, max |mean-1| over 1000 sequences {worst:.1e}")


# -- 8 --------------------------------------------------------------------------------------------


def test_c8_micro_training(report, micro, micro_run):
    recs = micro_run.records
    best = max(r.accuracy for r in recs)
    sm = smoothed([r.loss for r in recs], 10)
    rises = int((np.diff(sm) > 0).sum())
    ok = len(micro.train) == 50 and best >= 0.9 and len(recs) <= 200 and rises == 0 and micro_run.seconds < 900
    report(8, "micro training", ok, f"accuracy {recs[-1].accuracy:.4f} after {len(recs)} epochs, "
                                   f"smoothed-loss increases {rises}, {micro_run.seconds:.0f} s")


# -- 9 --------------------------------------------------------------------------------------------


def test_c9_dagger_mechanics(report, micro, micro_run):
    from signnav.training import dagger_rollout, scene_graphs

    cfg = micro_train_config(beta0=0.75, dagger_iterations=3, dagger_epochs=1, dagger_episodes=10)
    run = run_dagger(micro_run.model, micro, cfg, cache=micro_run.cache)
    sizes_ok = all(b > a for a, b in zip(run.sizes, run.sizes[1:]))
    frac = run.stats[0].expert_fraction
    frac_ok = abs(frac - 0.75) <= 0.10

    graphs = scene_graphs(micro.scenes, micro.seed)
    pure_ok = True
    for j, ep in enumerate(micro.train[:5]):
        ro = dagger_rollout(micro_run.model, ep, micro.scenes[ep.scene_id], graphs[ep.scene_id], 1.0,
                            np.random.default_rng(j), 0)
        pure_ok &= bool(ro.steps) and all(s.executed == s.action and s.source == "expert" for s in ro.steps)

    before = eval_model(micro_run.model, micro.val, micro.scenes).aggregates["SR"]
    after = eval_model(run.model, micro.val, micro.scenes).aggregates["SR"]
    ok = sizes_ok and frac_ok and pure_ok
    report(9, "DAgger mechanics", ok, f"aggregate sizes {run.sizes}, iteration-1 expert fraction {frac:.3f}, "
                                     f"beta=1 pure expert {pure_ok}; held-out SR before {before:.2f} "
                                     f"after {after:.2f} (reported, not gated)")


# -- 10 -------------------------------------------------------------------------------------------


def test_c10_ablation_harness(report):
    data = micro_data(n_train=6, n_val=3, extent=12.0, n_scenes=2, min_geodesic=3.0)
    cache = ObservationCache(data.scenes)
    lines, ok = [], True
    for name in ABLATIONS:
        recs, rep = run_ablation(name, data, cache=cache)
        a = rep.aggregates
        good = len(recs) == 1 and math.isfinite(recs[0].loss) and len(rep.episodes) == 3
        good = good and all(math.isfinite(a[c]) for c in ("SR", "NDTW", "SDTW", "RMSE"))
        ok &= good
        lines.append(f"{name}: loss {recs[0].loss:.3f} SR {a['SR']:.2f}")
    report(10, "ablation harness", ok, "; ".join(lines))
