"""Command-line entry point: scene and episode generation, training, evaluation, rollouts.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import traceback
from pathlib import Path

from .config import ConfigKeyError, RunConfig
from .episodes import (
    EpisodeError,
    OraclePolicy,
    SmoothPath,
    annotate_signs,
    build_scene_graph,
    generate_splits,
    shortest_path,
    smooth_path,
)
from .metrics import evaluate, trajectory_svg
from .model import ConfigError, StartModel, StartPolicy
from .nn import CheckpointError
from .render import RenderError, write_pgm16, write_ppm
from .rng import substream, substream_seed
from .scene import Pose, SceneError, SceneMap, gen_floorplan
from .sim import ActionId, EnvError, RulePolicy, SignNavEnv, StopPolicy, apply_action, is_pose_free
from .store import DataError, read_dataset, read_scenes, write_dataset, write_scenes
from .training import (
    Adam,
    AggregatedDataset,
    Expert,
    ObservationCache,
    TrainingError,
    dagger_iterate,
    scene_graphs,
    train_teacher_forcing,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
DATA_ERRORS = (
    DataError,
    SceneError,
    EpisodeError,
    ConfigKeyError,
    ConfigError,
    CheckpointError,
    TrainingError,
    RenderError,
    EnvError,
    OSError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _config(args, base: dict | None = None) -> RunConfig:
    cfg = RunConfig(base)
    if getattr(args, "config", None):
        cfg.update_text(Path(args.config).read_text(), args.config)
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigKeyError(f"--set {item!r} must look like key=value")
        k, v = item.split("=", 1)
        cfg.set(k.strip(), v)
    return cfg


def _echo(msg: str) -> None:
    print(msg, flush=True)


# -- gen-scenes --------------------------------------------------------------------------------------


def cmd_gen_scenes(args) -> int:
    cfg = _config(args)
    if args.seed is not None:
        cfg.set("seed", args.seed)
    if args.count is not None:
        cfg.set("scene.count", args.count)
    for flag, key in (("extent", "scene.extent"), ("corridor_width", "scene.corridor_width")):
        v = getattr(args, flag)
        if v is not None:
            cfg.set(key, v)
    if cfg["scene.count"] < 0:
        raise ConfigKeyError("scene.count: must be >= 0")
    params = cfg.floorplan()
    seed = cfg["seed"]
    scenes = [
        gen_floorplan(substream_seed(seed, "scene", i), params, scene_id=f"scene_{i:03d}")
        for i in range(cfg["scene.count"])
    ]
    write_scenes(args.out, scenes, seed, cfg.to_dict())
    _echo(f"wrote {len(scenes)} scenes to {args.out}")
    return EXIT_OK


# -- gen-episodes ------------------------------------------------------------------------------------


def cmd_gen_episodes(args) -> int:
    index, scenes = read_scenes(args.scenes)
    cfg = _config(args, index.get("config"))
    for flag, key in (("seed", "seed"), ("train", "episode.train"), ("val_seen", "episode.val_seen"),
                      ("val_unseen", "episode.val_unseen")):
        v = getattr(args, flag)
        if v is not None:
            cfg.set(key, v)
    counts = {"train": cfg["episode.train"], "val_seen": cfg["episode.val_seen"], "val_unseen": cfg["episode.val_unseen"]}
    if min(counts.values()) < 0:
        raise ConfigKeyError("episode counts must be >= 0")
    splits = generate_splits(
        scenes, counts, cfg["seed"], cfg.graph_params(), cfg["episode.min_geodesic"], cfg.camera()
    )
    write_dataset(args.out, scenes, splits, cfg["seed"], cfg.to_dict())
    _echo(" ".join(f"{k}={len(v)}" for k, v in splits.items()) + f" -> {args.out}")
    return EXIT_OK


# -- train ---------------------------------------------------------------------------------------------


def cmd_train(args) -> int:
    if args.stage == "dagger":
        if not args.init or not Path(args.init).is_file():
            raise DataError("stage dagger needs an existing teacher-forcing checkpoint (--init)")
    ds = read_dataset(args.dataset, splits=["train"])
    cfg = _config(args, ds.config)
    tcfg = cfg.train()
    train_eps = ds.split("train")
    if not train_eps:
        raise DataError("dataset has no training episodes")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(args.log) if args.log else out.with_suffix(out.suffix + ".log.jsonl")
    cam = cfg.camera()
    log_file = open(log_path, "w")

    def log_fn(rec):
        log_file.write(rec.to_json() + "\n")
        log_file.flush()
        if args.verbose:
            _echo(f"{rec.stage} it={rec.iteration} epoch={rec.epoch} loss={rec.loss:.4f} acc={rec.accuracy:.4f}")

    try:
        if args.stage == "tf":
            model = StartModel(cfg.model())
            cache = ObservationCache(ds.scenes, cam, model.config.max_depth)
            records = train_teacher_forcing(model, train_eps, cache, tcfg, log_fn=log_fn)
        else:
            model = StartModel.load(args.init)
            cache = ObservationCache(ds.scenes, cam, model.config.max_depth)
            graphs = scene_graphs(ds.scenes, ds.seed, cfg.graph_params())
            agg = AggregatedDataset(list(train_eps))
            opt = Adam(model.parameters(), tcfg.lr)
            records = []
            for i in range(1, tcfg.dagger_iterations + 1):
                st, rec = dagger_iterate(model, train_eps, agg, ds.scenes, graphs, cache, tcfg, i, opt, log_fn)
                records += rec
                _echo(
                    f"dagger it={i} beta={st.beta:.4f} aggregate={len(agg)} "
                    f"expert_fraction={st.expert_fraction:.3f} truncated={st.truncated}"
                )
    finally:
        log_file.close()
    model.save(out)
    out.with_suffix(out.suffix + ".cfg").write_text(cfg.dumps())
    if records:
        last = records[-1]
        _echo(f"{args.stage}: epochs={len(records)} loss={last.loss:.4f} accuracy={last.accuracy:.4f} -> {out}")
    return EXIT_OK


# -- eval ----------------------------------------------------------------------------------------------


def _policy_factory(name: str):
    if name == "oracle":
        return (lambda sc, ep: OraclePolicy(sc, ep)), "oracle"
    if name == "rule":
        return (lambda sc, ep: RulePolicy(sc, ep.goal_id)), "rule"
    if name == "stop":
        return (lambda sc, ep: StopPolicy()), "stop"
    if name.startswith("start:"):
        path = name.split(":", 1)[1]
        if not Path(path).is_file():
            raise DataError(f"checkpoint {path} not found")
        model = StartModel.load(path)
        return (lambda sc, ep: StartPolicy(model)), f"start({Path(path).name})"
    raise UsageError(f"unknown policy {name!r}; use oracle, rule, stop or start:CHECKPOINT")


def cmd_eval(args) -> int:
    factory, name = _policy_factory(args.policy)
    ds = read_dataset(args.dataset, splits=[args.split])
    cfg = _config(args, ds.config)
    env = SignNavEnv(cfg.camera())
    report = evaluate(factory, ds.split(args.split), ds.scenes, env, cfg["env.max_steps"], name, args.split)
    text = report.to_json() if args.format == "json" else report.to_text()
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    if args.plots:
        pdir = Path(args.plots)
        pdir.mkdir(parents=True, exist_ok=True)
        for ep, res in zip(ds.split(args.split), report.episodes):
            sc = ep.annotated_scene(ds.scenes[ep.scene_id])
            (pdir / f"{ep.episode_id}.svg").write_text(trajectory_svg(sc, ep, res.trajectory))
    a = report.aggregates
    _echo(f"{name} {args.split}: SR={a['SR']:.2f} NDTW={a['NDTW']:.4f} SDTW={a['SDTW']:.4f} RMSE={a['RMSE']:.4f}")
    return EXIT_OK


# -- rollout -------------------------------------------------------------------------------------------


class _ExpertPolicy:
    """Oracle for arbitrary starts: follows a plan, replanning when pushed off it."""

    needs_frame = False

    def __init__(self, expert: Expert):
        self.expert = expert

    def reset(self) -> None:
        pass

    def act(self, result):
        return self.expert.label(result.state.pose)


def _parse_pose(text: str) -> Pose:
    parts = [float(v) for v in text.split(",")]
    if len(parts) not in (2, 3):
        raise UsageError("--start takes x,y or x,y,theta")
    return Pose(*parts)


def _start_pose(path) -> Pose:
    tx, ty = path.tangents[0]
    return Pose(float(path.points[0, 0]), float(path.points[0, 1]), math.atan2(ty, tx))


def _rollout_policy(name: str, scene: SceneMap, goal_id: str, expert: Expert):
    if name == "oracle":
        return _ExpertPolicy(expert)
    if name == "rule":
        return RulePolicy(scene, goal_id)
    if name == "stop":
        return StopPolicy()
    if name.startswith("start:"):
        ck = name.split(":", 1)[1]
        if not Path(ck).is_file():
            raise DataError(f"checkpoint {ck} not found")
        return StartPolicy(StartModel.load(ck))
    raise UsageError(f"unknown policy {name!r}; use oracle, rule, stop or start:CHECKPOINT")


def cmd_rollout(args) -> int:
    scene = SceneMap.load(args.scene)
    if not any(g.goal_id == args.goal for g in scene.goals):
        raise DataError(f"unknown goal {args.goal!r} in {args.scene}")
    cfg = _config(args)
    seed = args.seed if args.seed is not None else cfg["seed"]
    graph = build_scene_graph(scene, substream_seed(seed, "graph:" + scene.scene_id), **cfg.graph_params())
    gv = graph.goal_vertices[args.goal]
    if args.start:
        start = _parse_pose(args.start)
        if not is_pose_free(scene, start.x, start.y):
            raise DataError(f"start ({start.x}, {start.y}) collides with the scene")
        goal = scene.goal(args.goal).position
        expert = Expert(scene, graph, args.goal, SmoothPath.from_points([start.xy, tuple(goal)]))
        expert.replan(start)
        path = expert.follower.path
    else:
        rng = substream(seed, "rollout:start")
        dist = graph.distances_from(gv)
        cands = [v for v in range(len(graph.vertices)) if v != gv and math.isfinite(dist[v])]
        far = [v for v in cands if dist[v] >= cfg["episode.min_geodesic"]]
        cands = far or cands
        if not cands:
            raise DataError(f"goal {args.goal!r} is unreachable from every waypoint")
        sv = cands[int(rng.integers(0, len(cands)))]
        path = smooth_path(scene, [graph.vertices[v] for v in shortest_path(graph, sv, gv)])
        start = _start_pose(path)
        expert = Expert(scene, graph, args.goal, path)
    # Signs point along the planned route, as in generated episodes.
    ep_scene = scene.with_arrows(annotate_signs(scene, path, args.goal))
    expert.scene = ep_scene
    policy = _rollout_policy(args.policy, ep_scene, args.goal, expert)

    env = SignNavEnv(cfg.camera())
    result = env.reset(ep_scene, args.goal, start, cfg["env.max_steps"])
    policy.reset()
    dump = Path(args.dump) if args.dump else None
    if dump:
        dump.mkdir(parents=True, exist_ok=True)
    lines = []
    while not result.state.done:
        t = len(lines)
        frame = result.frame
        if dump:
            write_ppm(dump / f"frame_{t:04d}.ppm", frame.rgb)
            write_pgm16(dump / f"depth_{t:04d}.pgm", frame.depth)
        a = ActionId(policy.act(result))
        pose = result.state.pose
        lines.append({
            "t": t,
            "pose": [pose.x, pose.y, pose.theta],
            "action": int(a),
            "hint_dir": frame.hint.dir.value if frame.hint else None,
            "bbox": [float(v) for v in frame.hint.bbox] if frame.hint else None,
        })
        result = env.step(a)
    end = result.state.pose
    header = {
        "scene_id": scene.scene_id,
        "goal_id": args.goal,
        "policy": args.policy,
        "seed": seed,
        "start": [start.x, start.y, start.theta],
        "end": [end.x, end.y, end.theta],
        "outcome": result.state.outcome.value,
        "steps": len(lines),
    }
    text = "".join(json.dumps(x) + "\n" for x in [header] + lines)
    trace = Path(args.trace) if args.trace else (dump / "trace.jsonl" if dump else None)
    if trace:
        trace.parent.mkdir(parents=True, exist_ok=True)
        trace.write_text(text)
        _echo(f"{header['outcome']} after {len(lines)} steps -> {trace}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def replay_trace(scene: SceneMap, text: str) -> list[Pose]:
    """Re-execute a rollout trace's actions; returns every pose including the final one."""
    rows = [json.loads(l) for l in text.splitlines() if l.strip()]
    header, steps = rows[0], rows[1:]
    pose = Pose(*header["start"])
    out = [pose]
    for row in steps:
        pose = apply_action(scene, pose, ActionId(row["action"]))
        out.append(pose)
    return out


# -- parser --------------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="signnav", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="flat key = value file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    s = sub.add_parser("gen-scenes", help="generate procedural floorplans")
    common(s)
    s.add_argument("--seed", type=int)
    s.add_argument("--count", type=int)
    s.add_argument("--extent", type=float)
    s.add_argument("--corridor-width", dest="corridor_width", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_scenes)

    s = sub.add_parser("gen-episodes", help="generate an episode dataset from a scene set")
    common(s)
    s.add_argument("--scenes", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--train", type=int)
    s.add_argument("--val-seen", dest="val_seen", type=int)
    s.add_argument("--val-unseen", dest="val_unseen", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_episodes)

    s = sub.add_parser("train", help="teacher forcing or DAgger fine-tuning")
    common(s)
    s.add_argument("--dataset", required=True)
    s.add_argument("--stage", choices=("tf", "dagger"), default="tf")
    s.add_argument("--init", "--from", dest="init", help="teacher-forcing checkpoint to fine-tune (stage dagger)")
    s.add_argument("--out", required=True)
    s.add_argument("--log")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a policy on a dataset split")
    common(s)
    s.add_argument("--dataset", required=True)
    s.add_argument("--split", default="val_seen")
    s.add_argument("--policy", required=True, help="oracle | rule | stop | start:CHECKPOINT")
    s.add_argument("--report")
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.add_argument("--plots")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("rollout", help="run one policy in one scene and dump its trace")
    common(s)
    s.add_argument("--scene", required=True)
    s.add_argument("--goal", required=True)
    s.add_argument("--policy", default="oracle")
    s.add_argument("--seed", type=int)
    s.add_argument("--start", help="x,y[,theta]; default: a seeded waypoint")
    s.add_argument("--dump")
    s.add_argument("--trace")
    s.set_defaults(func=cmd_rollout)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a command is required; see --help")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
