"""Acceptance gate: every criterion at its stated tolerance, one PASS line each.

Run with `pytest tests/test_acceptance.py -v -s`. The heavy criteria (4-6)
train real models at the default desk-scale budget; total suite time is
dominated by criterion 6 (full three-method comparison on two environments,
five seeds, bounded at 60 minutes on one CPU).
"""

import dataclasses
import time

import numpy as np
import pytest

from goalforge import physics, rl
from goalforge.envs import EnvConstants, EnvKind, PusherState, dataset as ds, sample_state, step
from goalforge.harness import pipeline
from goalforge.harness.config import config_from_dict
from goalforge.harness.report import parse_metrics_file, percent_improvement
from goalforge.harness.selftest import gradient_checks
from goalforge.numerics import RngStream, Tensor, rk4_integrate
from goalforge.physics import build_constraint_set, feasible_from_label
from goalforge.sampler import (
    GoalSampler,
    LatentDynamicsModel,
    SamplerConfig,
    sample_prior_goals,
    train_dynamics,
)
from goalforge.vae import load_model, unsupervised_bound
from goalforge.vae.model import LatentCode

C = EnvConstants()


def _report(criterion: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


# -- shared artifacts for criteria 4 and 5 ------------------------------------------


@pytest.fixture(scope="session")
def pusher_default(tmp_path_factory):
    """Default-config pusher dataset + trained enhanced VAE + dynamics model."""
    out = tmp_path_factory.mktemp("acc_pusher")
    cfg = config_from_dict({"env": "pusher2", "method": "pi-rig", "seeds": [0]})
    t0 = time.time()
    pipeline.cmd_collect(cfg, out)
    pipeline.cmd_train_vae(cfg, out)
    train_s = time.time() - t0
    data = ds.load(pipeline.dataset_path(out, cfg, 0))
    model = load_model(pipeline.vae_path(out, cfg, 0))
    dyn = pipeline.train_dynamics_from_dataset(cfg, model, data, 0)
    return {"cfg": cfg, "out": out, "data": data, "model": model, "dyn": dyn,
            "train_s": train_s}


# -- criterion 1: gradient suite ------------------------------------------------------


@pytest.mark.acceptance
def test_criterion_1_gradient_suite():
    t0 = time.time()
    results = gradient_checks(n_coords=64)
    elapsed = time.time() - t0
    assert len(results) == 8, "all eight loss families must be checked"
    bad = [r for r in results if not r[1]]
    _report("criterion 1 (gradients)",
            not bad and elapsed < 120.0,
            f"8 losses, >=64 coords each, rel err < 1e-4, {elapsed:.0f}s")


# -- criterion 2: physics core --------------------------------------------------------


@pytest.mark.acceptance
def test_criterion_2_physics_core():
    # RK4 free fall vs closed form
    s = rk4_integrate(lambda s: np.array([s[1], -9.81]), np.array([0.0, 0.0]), 1e-3, 1000)
    rk4_ok = abs(s[0] + 4.905) < 1e-6

    # frictionless collision momentum
    cfree = EnvConstants(friction_mu=0.0, restitution=1.0, servo_gain=0.0)
    st = PusherState(eff_p=np.array([-0.05, 0.0]), eff_v=np.array([0.2, 0.0]),
                     puck_p=np.zeros(2), puck_v=np.array([-0.1, 0.0]))
    p0 = cfree.pusher_mass * st.eff_v + cfree.puck_mass * st.puck_v
    out = step(EnvKind.PUSHER2, st, np.zeros(2), None, cfree)
    p1 = cfree.pusher_mass * out.eff_v + cfree.puck_mass * out.puck_v
    momentum_ok = bool(np.all(np.abs(p0 - p1) < 1e-8))

    # friction-only energy over 1e3 random rollouts
    rng = RngStream(2024, 1)
    energy_ok = True
    for _ in range(1000):
        state = sample_state(EnvKind.PUSHER2, rng, C)
        ke = 0.5 * C.puck_mass * float(state.puck_v @ state.puck_v)
        for _ in range(20):
            state = step(EnvKind.PUSHER2, state, np.zeros(2), None, C)
            ke2 = 0.5 * C.puck_mass * float(state.puck_v @ state.puck_v)
            energy_ok = energy_ok and ke2 <= ke + 1e-12
            ke = ke2

    # 1e4 random steps, zero invariant violations
    violations = 0
    total_steps = 0
    for kind in (EnvKind.REACHER2, EnvKind.PUSHER2, EnvKind.PICKPLACE2):
        vocab = rl.action_vocab(kind)
        krng = rng.spawn(kind.value)
        state = sample_state(kind, krng, C)
        for i in range(3400):
            total_steps += 1
            try:
                state = step(kind, state, vocab[int(krng.integers(len(vocab)))], None, C)
                if not physics.ground_truth_feasible(kind, state, C):
                    violations += 1
            except Exception:
                violations += 1
            if (i + 1) % C.horizon == 0:
                state = sample_state(kind, krng, C)

    ok = rk4_ok and momentum_ok and energy_ok and violations == 0
    _report("criterion 2 (physics core)", ok,
            f"rk4 {abs(s[0] + 4.905):.1e}, momentum exact, energy 1000 rollouts, "
            f"{violations} violations / {total_steps} steps")


# -- criterion 3: stop-gradient semantics ----------------------------------------------


@pytest.mark.acceptance
def test_criterion_3_stop_gradient(pusher_default):
    model = pusher_default["model"]
    data = pusher_default["data"]
    x = Tensor(data.images[:4])
    eps = (RngStream(7, 1).normal((4, model.cfg.d_I)), RngStream(7, 2).normal((4, model.cfg.d_E)))
    total, _ = unsupervised_bound(x, model, eps=eps)
    model.params.zero_grads()
    total.backward()
    theta_blocked = all(
        model.params[n].grad is None or np.all(model.params[n].grad == 0.0)
        for n in model.params.names() if n.startswith("dec.phys."))
    model.params.zero_grads()

    on_val = total.item()
    saved = model.cfg
    model.cfg = dataclasses.replace(model.cfg, stop_grad_unsupervised=False)
    off_val, _ = unsupervised_bound(x, model, eps=eps)
    model.cfg = saved
    forward_equal = on_val == off_val.item()

    fE_zero = model.f_E_param_count() == 0
    _report("criterion 3 (stop-gradient)",
            theta_blocked and forward_equal and fE_zero,
            f"dU/dtheta = 0 exactly, forward identical, render params = {model.f_E_param_count()}")


# -- criterion 4: sampler equivalence and uplift -----------------------------------------


@pytest.mark.acceptance
def test_criterion_4_sampler_equivalence_and_uplift(pusher_default):
    t0 = time.time()
    model = pusher_default["model"]
    dyn = pusher_default["dyn"]
    cfg = pusher_default["cfg"]
    data = pusher_default["data"]
    cset = build_constraint_set(EnvKind.PUSHER2, cfg.env_constants)
    vocab = rl.action_vocab(EnvKind.PUSHER2)

    # (a) scores forced to 1 == prior sampler + uniform pick, bitwise
    off = GoalSampler(model, dyn, cset, vocab,
                      SamplerConfig(n_candidates=16, use_physics=False, use_reachability=False))
    mu_I, mu_E = model.encode_mu_np(data.images[:1])
    z_start = LatentCode(mu_I[0], mu_E[0])
    goal, _, _ = off.propose_goal(z_start, RngStream(42, 42))
    ref_rng = RngStream(42, 42)
    ref = sample_prior_goals(16, ref_rng, model.cfg.d_I, model.cfg.d_E)
    pick = ref_rng.choice_prob(np.ones(16) / 16.0)
    bitwise_ok = np.array_equal(goal.concat(), ref[pick].concat())

    # (b) feasibility uplift over 1000 goals
    on = GoalSampler(model, dyn, cset, vocab, cfg.sampler)
    rng = RngStream(777, 1)
    prior = sample_prior_goals(1000, rng, model.cfg.d_I, model.cfg.d_E)
    prior_feas = float(np.mean([
        feasible_from_label(EnvKind.PUSHER2, model.phys_of_latent_np(g.z_I[None])[0],
                            cfg.env_constants) for g in prior]))
    filt_feas = float(np.mean([
        feasible_from_label(EnvKind.PUSHER2,
                            model.phys_of_latent_np(
                                on.propose_goal(z_start, rng.spawn(f"p{i}"))[0].z_I[None])[0],
                            cfg.env_constants) for i in range(1000)]))
    uplift = 100.0 * (filt_feas - prior_feas)
    elapsed = time.time() - t0
    _report("criterion 4 (sampler)",
            bitwise_ok and uplift >= 20.0 and elapsed < 300.0,
            f"bitwise baseline equality, uplift {uplift:.1f} pts "
            f"(prior {prior_feas:.2f} -> filtered {filt_feas:.2f}), {elapsed:.0f}s")


# -- criterion 5: disentanglement probe ---------------------------------------------------


@pytest.mark.acceptance
def test_criterion_5_disentanglement_probe(pusher_default):
    t0 = time.time()
    model = pusher_default["model"]
    data = pusher_default["data"]
    cfg = pusher_default["cfg"]
    mu_I_parts, mu_E_parts = [], []
    for s in range(0, len(data), 256):
        mi, me = model.encode_mu_np(data.images[s:s + 256])
        mu_I_parts.append(mi)
        mu_E_parts.append(me)
    mu_I = np.concatenate(mu_I_parts)
    mu_E = np.concatenate(mu_E_parts)
    pos = data.labels[:, :2]

    def r2(X, Y):
        X1 = np.concatenate([X, np.ones((len(X), 1))], axis=1)
        W, *_ = np.linalg.lstsq(X1, Y, rcond=None)
        return float(1.0 - ((Y - X1 @ W) ** 2).sum() / ((Y - Y.mean(axis=0)) ** 2).sum())

    r2_I, r2_E = r2(mu_I, pos), r2(mu_E, pos)
    elapsed = pusher_default["train_s"] + (time.time() - t0)
    ok = (r2_I >= cfg.probe.r2_zi_min and r2_E <= cfg.probe.r2_ze_max
          and elapsed < 600.0)
    _report("criterion 5 (disentanglement probe)", ok,
            f"mu_I->puck R2 {r2_I:.3f} (>= {cfg.probe.r2_zi_min}), "
            f"mu_E->puck R2 {r2_E:.3f} (<= {cfg.probe.r2_ze_max}), {elapsed:.0f}s incl. training")


# -- criterion 6: directional end-to-end --------------------------------------------------


@pytest.mark.acceptance
def test_criterion_6_directional_end_to_end(tmp_path_factory):
    t0 = time.time()
    seeds = [0, 1, 2, 3, 4]
    envs_under_test = ("reacher2", "pusher2")
    finals: dict = {}
    random_dists: dict = {}
    for env in envs_under_test:
        out = tmp_path_factory.mktemp(f"acc_e2e_{env}")
        collect_cfg = config_from_dict({"env": env, "method": "oracle", "seeds": seeds})
        pipeline.cmd_collect(collect_cfg, out)
        for method in ("oracle", "rig", "pi-rig"):
            cfg = config_from_dict({"env": env, "method": method, "seeds": seeds})
            pipeline.cmd_train_vae(cfg, out)
            pipeline.cmd_train_rl(cfg, out)
            for seed, m in zip(seeds, pipeline.cmd_eval(cfg, out)):
                finals[(env, method, seed)] = m.object_dist
        # random-policy reference on the pi-rig goal distribution
        cfg = config_from_dict({"env": env, "method": "pi-rig", "seeds": seeds})
        for seed in seeds:
            model = load_model(pipeline.vae_path(out, cfg, seed))
            _, dyn = pipeline.load_policy(cfg, out, seed)
            source = pipeline.build_goal_source(cfg, model, dyn)
            emb = rl.Embedder(cfg.kind, cfg.env_constants, model)
            m = rl.evaluate(cfg.kind, cfg.env_constants, None, emb, source, 20,
                            pipeline.stream(cfg, seed, "random-ref"))
            random_dists[(env, seed)] = m.object_dist

    lines = []
    all_ok = True
    for env in envs_under_test:
        order_ok = sum(
            finals[(env, "oracle", s)] <= finals[(env, "pi-rig", s)] <= finals[(env, "rig", s)]
            for s in seeds)
        beats_random = sum(
            finals[(env, "pi-rig", s)] <= random_dists[(env, s)] for s in seeds)
        lines.append(f"{env}: oracle<=pi-rig<=rig on {order_ok}/5 seeds, "
                     f"pi-rig<=random on {beats_random}/5")
        all_ok = all_ok and order_ok >= 4
        for m in ("oracle", "pi-rig", "rig"):
            mean = np.mean([finals[(env, m, s)] for s in seeds])
            lines.append(f"  {m:<7} mean object_dist {mean:.4f}")
    elapsed = time.time() - t0
    all_ok = all_ok and elapsed < 3600.0
    _report("criterion 6 (directional end-to-end)", all_ok,
            "; ".join(lines) + f"; {elapsed:.0f}s")


# -- criterion 7: reporting arithmetic ------------------------------------------------------


@pytest.mark.acceptance
def test_criterion_7_report_arithmetic():
    a = percent_improvement(0.22, 0.10)
    b = percent_improvement(0.11, 0.04)
    ok = abs(a - 54.5) < 0.1 and abs(b - 63.6) < 0.1
    _report("criterion 7 (report arithmetic)", ok,
            f"(0.22, 0.10) -> {a:.2f}%, (0.11, 0.04) -> {b:.2f}%")


# -- criterion 8: pipeline determinism --------------------------------------------------------


@pytest.mark.acceptance
def test_criterion_8_pipeline_determinism(tmp_path_factory):
    spec = {
        "env": "pusher2", "method": "pi-rig", "seeds": [11],
        "dataset_size": 400, "eval_episodes": 4, "metric_epochs": 2,
        "eval_episodes_per_epoch": 2,
        "vae": {"epochs": 3, "batch_size": 128},
        "rl": {"episodes": 8, "updates_per_episode": 8, "batch_size": 32},
        "dynamics": {"epochs": 3},
        "sampler": {"n_candidates": 8, "n_sequences": 16, "shoot_horizon": 4},
    }
    outs = []
    for run in ("r1", "r2"):
        out = tmp_path_factory.mktemp(f"acc_det_{run}")
        pipeline.run_pipeline(config_from_dict(spec), out)
        outs.append(pipeline.metrics_path(out).read_bytes())
    ok = outs[0] == outs[1]
    _report("criterion 8 (determinism)", ok,
            f"two full runs, metrics CSV byte-identical ({len(outs[0])} bytes)")