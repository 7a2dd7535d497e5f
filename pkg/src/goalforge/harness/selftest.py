"""`selftest` verb: quick gradient and physics invariant batteries.

Runs in seconds and prints one line per check; any failure exits with the
numeric-divergence code.
"""

from __future__ import annotations

import numpy as np

from .. import physics
from ..envs import Appearance, EnvConstants, EnvKind, physics_label, render, sample_state, state_to_vec, step
from ..numerics import RngStream, Tensor, finite_difference_check, rk4_integrate
from ..numerics import tensor as T
from ..physics import build_constraint_set
from ..rl import QFunction, Transition, bellman_loss
from ..sampler import LatentDynamicsModel, dynamics_loss
from ..vae import EnhancedVae, RigVae, VaeConfig, elbo, rig_loss, supervised_bound, total_loss, unsupervised_bound

C = EnvConstants()
SMALL = VaeConfig(resolution=16, conv_channels=(4, 8), trunk_width=32, phys_hidden=16,
                  stop_grad_unsupervised=False)


def _images(kind, n, res=16):
    rng = RngStream(101, 7)
    imgs, labels = [], []
    for _ in range(n):
        s = sample_state(kind, rng, C)
        imgs.append(render(kind, s, Appearance(0.4, 0.3), res, C))
        labels.append(physics_label(kind, s, C))
    return np.stack(imgs), np.stack(labels)


def gradient_checks(n_coords: int = 24) -> list[tuple[str, bool, str]]:
    """Finite-difference spot checks for every loss family."""
    results = []
    kind = EnvKind.PUSHER2
    x, labels = _images(kind, 2)
    model = EnhancedVae(kind, C, SMALL, RngStream(1, 1))
    rig = RigVae(kind, C, SMALL, RngStream(2, 2))
    cset = build_constraint_set(kind, C)
    eps = (RngStream(3, 1).normal((2, SMALL.d_I)), RngStream(3, 2).normal((2, SMALL.d_E)))
    eps_r = RngStream(3, 3).normal((2, rig.d))
    mask = np.array([1.0, 0.0])

    checks = [
        ("elbo", lambda: finite_difference_check(
            lambda p: elbo(Tensor(x), model, eps=eps)[0], model.params,
            RngStream(4, 1), n_coords=n_coords)),
        ("rig_loss", lambda: finite_difference_check(
            lambda p: rig_loss(Tensor(x), rig, eps=eps_r)[0], rig.params,
            RngStream(4, 2), n_coords=n_coords)),
        ("supervised_bound", lambda: finite_difference_check(
            lambda p: supervised_bound(Tensor(x), Tensor(labels), model, eps_E=eps[1])[0],
            model.params, RngStream(4, 3), n_coords=n_coords)),
        ("unsupervised_bound", lambda: finite_difference_check(
            lambda p: unsupervised_bound(Tensor(x), model, eps=eps)[0],
            model.params, RngStream(4, 4), n_coords=n_coords)),
        ("total_loss", lambda: finite_difference_check(
            lambda p: total_loss(Tensor(x), Tensor(labels), mask, model, cset, eps=eps)[0],
            model.params, RngStream(4, 5), n_coords=n_coords)),
    ]

    def phys_loss_check():
        from ..numerics import ParamStore
        rngl = RngStream(5, 5)
        z = rngl.normal((8, SMALL.d_I))
        head = ParamStore()
        head.add("w", rngl.normal((SMALL.d_I, 4)) * 0.8)
        head.add("b", rngl.normal(4) * 0.3)

        def loss_fn(p):
            phys_vec = T.tanh(T.affine(Tensor(z), p["w"], p["b"])) * 1.75
            return physics.physics_loss(cset, None, lambda _: phys_vec)

        loss = float(loss_fn(head).data)
        assert loss > 0.0, "physics penalty inactive; check not exercising hinges"
        return finite_difference_check(loss_fn, head, RngStream(4, 6), n_coords=n_coords)

    checks.append(("physics_loss", phys_loss_check))

    def bellman_check():
        q = QFunction(4, 9, 16, RngStream(6, 6))
        rngl = RngStream(7, 7)
        batch = [Transition(z_s=rngl.normal(4), action=int(rngl.integers(9)),
                            reward=float(rngl.normal()), z_next=rngl.normal(4),
                            z_goal=rngl.normal(4), done=False, achieved=np.zeros(4))
                 for _ in range(6)]
        return finite_difference_check(lambda p: bellman_loss(batch, q, 0.98),
                                       q.params, RngStream(4, 7), n_coords=n_coords)

    checks.append(("bellman", bellman_check))

    def dynamics_check():
        rngl = RngStream(8, 8)
        dyn = LatentDynamicsModel(d_I=6, action_dim=2, hidden=16)
        z, a, zn = rngl.normal((8, 6)), rngl.normal((8, 2)), rngl.normal((8, 6))
        return finite_difference_check(lambda p: dynamics_loss(dyn, z, a, zn),
                                       dyn.params, RngStream(4, 8), n_coords=n_coords)

    checks.append(("dynamics_model", dynamics_check))

    for name, fn in checks:
        try:
            report = fn()
            results.append((f"gradcheck {name}", True,
                            f"worst rel err {report['worst_rel']:.2e}"))
        except AssertionError as e:
            results.append((f"gradcheck {name}", False, str(e)))
    return results


def physics_checks() -> list[tuple[str, bool, str]]:
    results = []

    def deriv(s):
        return np.array([s[1], -9.81])

    s = rk4_integrate(deriv, np.array([0.0, 0.0]), 1e-3, 1000)
    err = abs(s[0] + 4.905)
    results.append(("rk4 free fall vs closed form", err < 1e-6, f"err {err:.2e}"))

    cfree = EnvConstants(friction_mu=0.0, restitution=1.0, servo_gain=0.0)
    from ..envs import PusherState
    st = PusherState(eff_p=np.array([-0.05, 0.0]), eff_v=np.array([0.2, 0.0]),
                     puck_p=np.zeros(2), puck_v=np.array([-0.1, 0.0]))
    p0 = cfree.pusher_mass * st.eff_v + cfree.puck_mass * st.puck_v
    out = step(EnvKind.PUSHER2, st, np.zeros(2), None, cfree)
    p1 = cfree.pusher_mass * out.eff_v + cfree.puck_mass * out.puck_v
    dp = float(np.abs(p0 - p1).max())
    results.append(("collision momentum conservation", dp < 1e-8, f"|dp| {dp:.2e}"))

    rng = RngStream(11, 11)
    ok = True
    for _ in range(200):
        state = sample_state(EnvKind.PUSHER2, rng, C)
        ke = 0.5 * C.puck_mass * float(state.puck_v @ state.puck_v)
        for _ in range(20):
            state = step(EnvKind.PUSHER2, state, np.zeros(2), None, C)
            ke2 = 0.5 * C.puck_mass * float(state.puck_v @ state.puck_v)
            ok = ok and (ke2 <= ke + 1e-12)
            ke = ke2
    results.append(("friction-only energy non-increasing", ok, "4000 steps"))

    from ..rl import action_vocab
    violations = 0
    for kind in (EnvKind.REACHER2, EnvKind.PUSHER2, EnvKind.PICKPLACE2):
        vocab = action_vocab(kind)
        krng = rng.spawn(kind.value)
        state = sample_state(kind, krng, C)
        for i in range(700):
            try:
                state = step(kind, state, vocab[int(krng.integers(len(vocab)))], None, C)
                if not physics.ground_truth_feasible(kind, state, C):
                    violations += 1
            except Exception:
                violations += 1
            if (i + 1) % C.horizon == 0:
                state = sample_state(kind, krng, C)
    results.append(("boundary/penetration/grasp invariants", violations == 0,
                    f"{violations} violations in 2100 random steps"))
    return results


def run_selftest() -> bool:
    all_ok = True
    for name, ok, detail in gradient_checks() + physics_checks():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        all_ok = all_ok and ok
    return all_ok
