"""Pipeline stages: collect -> train-vae -> train-rl -> eval, plus metrics IO.

Stage artifacts are files; a run directory is self-describing (resolved config
snapshot + sidecars) and every stage is a pure function of (config, seed).
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .. import envs, rl
from ..envs import dataset as ds
from ..errors import MissingArtifactError
from ..numerics import RngStream, label_id
from ..physics import build_constraint_set
from ..sampler import (
    GoalSampler,
    LatentDynamicsModel,
    append_goal_log,
    train_dynamics,
)
from ..vae import EnhancedVae, RigVae, load_model, save_model, train_enhanced, train_rig
from ..vae.checkpoint import read_stores, write_stores
from .config import ExperimentConfig

METRICS_HEADER = "method,env,seed,epoch,vae_dist,image_dist,object_dist,goal_feasibility_rate,wall_clock_s"


def stream(cfg: ExperimentConfig, seed: int, purpose: str) -> RngStream:
    return RngStream(seed, label_id(f"{cfg.env}/{purpose}"))


def dataset_path(out: Path, cfg: ExperimentConfig, seed: int) -> Path:
    return out / f"dataset_{cfg.env}_seed{seed}.bin"


def vae_path(out: Path, cfg: ExperimentConfig, seed: int) -> Path:
    return out / f"vae_{cfg.method}_{cfg.env}_seed{seed}.ckpt"


def policy_path(out: Path, cfg: ExperimentConfig, seed: int) -> Path:
    return out / f"policy_{cfg.method}_{cfg.env}_seed{seed}.ckpt"


def metrics_path(out: Path) -> Path:
    return out / "metrics.csv"


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingArtifactError(str(path))
    return path


def _fmt(x: float) -> str:
    return "nan" if np.isnan(x) else f"{x:.6f}"


def append_metrics_row(out: Path, cfg: ExperimentConfig, seed: int, epoch: int,
                       m: rl.EvalMetrics, wall_clock_s: float) -> None:
    path = metrics_path(out)
    if not path.exists():
        path.write_text(METRICS_HEADER + "\n")
    wc = wall_clock_s if cfg.record_wall_clock else 0.0
    row = (f"{cfg.method},{cfg.env},{seed},{epoch},{_fmt(m.vae_dist)},{_fmt(m.image_dist)},"
           f"{_fmt(m.object_dist)},{_fmt(m.goal_feasibility_rate)},{wc:.3f}")
    with open(path, "a") as fh:
        fh.write(row + "\n")


def write_run_info(out: Path, entry: dict) -> None:
    path = out / "run_info.json"
    data = json.loads(path.read_text()) if path.exists() else {"stages": []}
    data["stages"].append(entry)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# -- collect ---------------------------------------------------------------------

def collect_dataset(cfg: ExperimentConfig, seed: int) -> ds.TrajectoryData:
    """Random-policy rollouts; row t holds (state_t, action applied at t)."""
    kind, c = cfg.kind, cfg.env_constants
    rng = stream(cfg, seed, "collect")
    vocab = rl.action_vocab(kind)
    n = cfg.dataset_size
    states, actions, labels, apps, dones, images = [], [], [], [], [], []
    while len(states) < n:
        ep_rng = rng.spawn(f"ep{len(states)}")
        state, obs = envs.reset(kind, ep_rng, c, res=cfg.resolution)
        for t in range(c.horizon):
            if len(states) >= n:
                break
            a = vocab[int(ep_rng.integers(len(vocab)))]
            states.append(envs.state_to_vec(kind, state))
            actions.append(np.concatenate([a, np.zeros(3 - len(a))]))
            labels.append(envs.physics_label(kind, state, c))
            apps.append(obs.appearance.as_array())
            dones.append(float(t == c.horizon - 1))
            images.append(obs.image)
            state = envs.step(kind, state, a, None, c)
            obs = envs.observe(kind, state, obs.appearance, cfg.resolution, c)
        if dones:
            dones[-1] = 1.0  # episode boundary even when truncated by n
    mask = ds.labeled_mask(n, cfg.labeled_fraction, stream(cfg, seed, "labelmask"))
    return ds.TrajectoryData(
        kind=kind, constants=c, resolution=cfg.resolution,
        states=np.array(states), actions=np.array(actions), labels=np.array(labels),
        label_mask=mask, appearances=np.array(apps), dones=np.array(dones),
        images=np.array(images))


def cmd_collect(cfg: ExperimentConfig, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for seed in cfg.seeds:
        t0 = time.time()
        data = collect_dataset(cfg, seed)
        path = dataset_path(out, cfg, seed)
        ds.save(data, path)
        write_run_info(out, {"stage": "collect", "seed": seed, "records": len(data),
                             "wall_clock_s": time.time() - t0, "path": path.name})
        paths.append(path)
    return paths


# -- train-vae ---------------------------------------------------------------------

def cmd_train_vae(cfg: ExperimentConfig, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for seed in cfg.seeds:
        if cfg.method == "oracle":
            write_run_info(out, {"stage": "train-vae", "seed": seed,
                                 "note": "oracle uses state goals; no VAE trained"})
            continue
        data = ds.load(_require(dataset_path(out, cfg, seed)))
        t0 = time.time()
        rng = stream(cfg, seed, f"vae-{cfg.method}")
        vcfg = replace(cfg.vae, resolution=cfg.resolution)
        if cfg.method == "pi-rig":
            model = EnhancedVae(cfg.kind, cfg.env_constants, vcfg, rng.spawn("init"))
            cset = build_constraint_set(cfg.kind, cfg.env_constants, cfg.physics_weights or None)
            history = train_enhanced(model, data, vcfg.epochs, rng.spawn("train"), cset=cset)
        else:
            model = RigVae(cfg.kind, cfg.env_constants, vcfg, rng.spawn("init"))
            history = train_rig(model, data, vcfg.epochs, rng.spawn("train"))
        path = vae_path(out, cfg, seed)
        save_model(model, path)
        (out / f"vae_history_{cfg.method}_{cfg.env}_seed{seed}.json").write_text(
            json.dumps([asdict(b) for b in history], indent=2) + "\n")
        write_run_info(out, {"stage": "train-vae", "seed": seed,
                             "wall_clock_s": time.time() - t0, "path": path.name,
                             "final_loss": history[-1].total if history else None})
        paths.append(path)
    return paths


# -- train-rl ----------------------------------------------------------------------

def encode_dataset_mu(model, images: np.ndarray, chunk: int = 256) -> np.ndarray:
    outs = []
    for start in range(0, len(images), chunk):
        mu, _ = model.encode_mu_np(images[start:start + chunk])
        outs.append(mu)
    return np.concatenate(outs, axis=0)


def build_goal_source(cfg: ExperimentConfig, vae_model, dynamics) -> rl.GoalSource:
    kind, c = cfg.kind, cfg.env_constants
    if cfg.method == "oracle":
        return rl.GoalSource("oracle", kind, c)
    if cfg.method == "rig":
        return rl.GoalSource("rig", kind, c, rig_vae=vae_model)
    cset = build_constraint_set(kind, c, cfg.physics_weights or None)
    sampler = GoalSampler(vae_model, dynamics, cset, rl.action_vocab(kind), cfg.sampler)
    return rl.GoalSource("pi-rig", kind, c, sampler=sampler)


def train_dynamics_from_dataset(cfg: ExperimentConfig, model: EnhancedVae,
                                data: ds.TrajectoryData, seed: int) -> LatentDynamicsModel:
    mu = encode_dataset_mu(model, data.images)
    within = np.nonzero(data.dones[:-1] == 0.0)[0]
    z, a, z_next = mu[within], data.actions[within, :2], mu[within + 1]
    if cfg.kind.value == "pickplace2":
        a = data.actions[within, :3]
    dyn = LatentDynamicsModel(d_I=model.cfg.d_I, action_dim=a.shape[1],
                              hidden=cfg.dynamics.hidden)
    train_dynamics(dyn, z, a, z_next, cfg.dynamics.epochs,
                   stream(cfg, seed, "dynamics"), batch_size=cfg.dynamics.batch_size,
                   lr=cfg.dynamics.lr)
    return dyn


def cmd_train_rl(cfg: ExperimentConfig, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    kind, c = cfg.kind, cfg.env_constants
    paths = []
    for seed in cfg.seeds:
        t0 = time.time()
        vae_model, dynamics = None, None
        if cfg.method != "oracle":
            vae_model = load_model(_require(vae_path(out, cfg, seed)))
        if cfg.method == "pi-rig":
            data = ds.load(_require(dataset_path(out, cfg, seed)))
            dynamics = train_dynamics_from_dataset(cfg, vae_model, data, seed)
        embedder = rl.Embedder(kind, c, vae_model)
        source = build_goal_source(cfg, vae_model, dynamics)
        goal_log = (out / f"goals_{cfg.method}_{cfg.env}_seed{seed}.ndjson"
                    if cfg.log_goals else None)
        if goal_log is not None and goal_log.exists():
            goal_log.unlink()

        epoch_every = max(1, cfg.rl.episodes // cfg.metric_epochs)
        eval_rng_root = stream(cfg, seed, "train-eval")

        def on_episode(ep, q, _seed=seed, _src=source, _emb=embedder, _log=goal_log):
            if _log is not None and _src.last_candidates is not None:
                append_goal_log(_log, ep, _src.last_candidates)
                _src.last_candidates = None
            if (ep + 1) % epoch_every == 0:
                epoch = (ep + 1) // epoch_every - 1
                if epoch < cfg.metric_epochs:
                    m = rl.evaluate(kind, c, q, _emb, _src, cfg.eval_episodes_per_epoch,
                                    eval_rng_root.spawn(f"epoch{epoch}"),
                                    resolution=cfg.resolution,
                                    success_tol=cfg.rl.success_tol)
                    append_metrics_row(out, cfg, _seed, epoch, m, time.time() - t0)

        q = rl.train_policy(kind, c, embedder, source, cfg.rl,
                            stream(cfg, seed, f"rl-{cfg.method}"),
                            resolution=cfg.resolution, epoch_callback=on_episode)
        path = policy_path(out, cfg, seed)
        stores = {"q": q.params}
        meta = {"method": cfg.method, "env": cfg.env, "seed": seed,
                "in_dim": q.in_dim, "n_actions": q.n_actions, "hidden": q.hidden}
        if dynamics is not None:
            stores["dynamics"] = dynamics.params
            meta["dynamics"] = {"d_I": dynamics.d_I, "action_dim": dynamics.action_dim,
                                "hidden": dynamics.hidden}
        write_stores(path, meta, stores)
        write_run_info(out, {"stage": "train-rl", "seed": seed,
                             "wall_clock_s": time.time() - t0, "path": path.name})
        paths.append(path)
    return paths


def load_policy(cfg: ExperimentConfig, out: Path, seed: int):
    """(QFunction, LatentDynamicsModel | None) from the policy checkpoint."""
    meta, stores = read_stores(_require(policy_path(out, cfg, seed)))
    q = rl.QFunction(meta["in_dim"], meta["n_actions"], meta["hidden"], RngStream(0, 0))
    for name, arr in stores["q"].items():
        q.params[name].data = arr
    q.sync_target()
    dynamics = None
    if "dynamics" in stores:
        d = meta["dynamics"]
        dynamics = LatentDynamicsModel(d_I=d["d_I"], action_dim=d["action_dim"],
                                       hidden=d["hidden"])
        for name, arr in stores["dynamics"].items():
            dynamics.params[name].data = arr
    return q, dynamics


# -- eval --------------------------------------------------------------------------

def cmd_eval(cfg: ExperimentConfig, out: Path) -> list[rl.EvalMetrics]:
    out.mkdir(parents=True, exist_ok=True)
    kind, c = cfg.kind, cfg.env_constants
    results = []
    for seed in cfg.seeds:
        t0 = time.time()
        vae_model = None
        if cfg.method != "oracle":
            vae_model = load_model(_require(vae_path(out, cfg, seed)))
        q, dynamics = load_policy(cfg, out, seed)
        embedder = rl.Embedder(kind, c, vae_model)
        source = build_goal_source(cfg, vae_model, dynamics)
        m = rl.evaluate(kind, c, q, embedder, source, cfg.eval_episodes,
                        stream(cfg, seed, "final-eval"), resolution=cfg.resolution,
                        success_tol=cfg.rl.success_tol)
        append_metrics_row(out, cfg, seed, cfg.metric_epochs, m, time.time() - t0)
        write_run_info(out, {"stage": "eval", "seed": seed,
                             "wall_clock_s": time.time() - t0,
                             "object_dist": m.object_dist,
                             "goal_feasibility_rate": m.goal_feasibility_rate})
        results.append(m)
    return results


def run_pipeline(cfg: ExperimentConfig, out: Path) -> list[rl.EvalMetrics]:
    """collect -> train-vae -> train-rl -> eval for one method config."""
    cmd_collect(cfg, out)
    cmd_train_vae(cfg, out)
    cmd_train_rl(cfg, out)
    return cmd_eval(cfg, out)
