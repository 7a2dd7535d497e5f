"""Goal-conditioned Q-learning over a discretized action set, with hindsight
relabeling, latent-distance rewards, rollouts, and distance-metric evaluation.

Transitions store cached encodings (z_I views of s and s'), never raw images:
rewards are recomputed from the cache, so relabeling is deterministic and the
buffer stays small. The goal-space is z_I for the latent methods and the
physics label for the state oracle — the same code path serves both.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import envs
from .envs import EnvConstants, EnvKind
from .errors import ConfigError, ShapeError
from .numerics import ParamStore, RngStream, adam_update
from .numerics import tensor as T
from .numerics.tensor import Tensor
from .physics import feasible_from_label
from .sampler import GoalSampler, sample_prior_goals
from .vae.model import EnhancedVae, LatentCode, RigVae

SQRT2_HALF = np.sqrt(0.5)


def action_vocab(kind: EnvKind) -> np.ndarray:
    """Null + 8 unit compass directions; pick-and-place doubles with grasp toggle."""
    dirs = [(0.0, 0.0)]
    for k in range(8):
        ang = k * np.pi / 4.0
        dirs.append((float(np.cos(ang)), float(np.sin(ang))))
    moves = np.array(dirs)
    if kind != EnvKind.PICKPLACE2:
        return moves
    no_toggle = np.concatenate([moves, np.zeros((9, 1))], axis=1)
    toggle = np.concatenate([moves, np.ones((9, 1))], axis=1)
    return np.concatenate([no_toggle, toggle], axis=0)


@dataclass
class Transition:
    z_s: np.ndarray       # encoded state (z_I view or physics label)
    action: int
    reward: float
    z_next: np.ndarray
    z_goal: np.ndarray
    done: bool
    achieved: np.ndarray  # achieved z of s' (same array as z_next, cached)


class ReplayBuffer:
    """Ring buffer with FIFO eviction and uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError("replay capacity must be >= 1")
        self.capacity = int(capacity)
        self._items: list[Transition] = []
        self._next = 0

    def __len__(self):
        return len(self._items)

    def push(self, tr: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(tr)
        else:
            self._items[self._next] = tr
            self._next = (self._next + 1) % self.capacity

    def sample(self, n: int, rng: RngStream) -> list[Transition]:
        if not self._items:
            raise ConfigError("cannot sample from an empty replay buffer")
        idx = rng.integers(len(self._items), shape=(n,))
        return [self._items[i] for i in idx]


def latent_reward(z_achieved: np.ndarray, z_goal: np.ndarray) -> float:
    """r = -||z_achieved - z_goal||_2, always <= 0, zero exactly at the goal."""
    z_achieved, z_goal = np.asarray(z_achieved), np.asarray(z_goal)
    if z_achieved.shape != z_goal.shape:
        raise ShapeError(f"latent_reward: {z_achieved.shape} vs {z_goal.shape}")
    return -float(np.linalg.norm(z_achieved - z_goal))


class QFunction:
    """MLP (z_s, z_g) -> |A| action values, with a lag-synced target copy."""

    def __init__(self, in_dim: int, n_actions: int, hidden: int, rng: RngStream):
        self.in_dim = in_dim
        self.n_actions = n_actions
        self.hidden = hidden
        self.params = ParamStore()
        d = 2 * in_dim
        self.params.add("w1", rng.normal((d, hidden)) * np.sqrt(2.0 / d))
        self.params.add("b1", np.zeros(hidden))
        self.params.add("w2", rng.normal((hidden, hidden)) * np.sqrt(2.0 / hidden))
        self.params.add("b2", np.zeros(hidden))
        self.params.add("w3", rng.normal((hidden, n_actions)) * 0.01)
        self.params.add("b3", np.zeros(n_actions))
        self.target = self.params.clone()

    def sync_target(self) -> None:
        self.target.copy_values_from(self.params)

    def values_t(self, z_s: Tensor, z_g: Tensor) -> Tensor:
        p = self.params
        h = T.relu(T.affine(T.concat([z_s, z_g], axis=1), p["w1"], p["b1"]))
        h = T.relu(T.affine(h, p["w2"], p["b2"]))
        return T.affine(h, p["w3"], p["b3"])

    def _values_np(self, store: ParamStore, z_s: np.ndarray, z_g: np.ndarray) -> np.ndarray:
        x = np.concatenate([np.atleast_2d(z_s), np.atleast_2d(z_g)], axis=1)
        h = np.maximum(x @ store["w1"].data + store["b1"].data, 0.0)
        h = np.maximum(h @ store["w2"].data + store["b2"].data, 0.0)
        return h @ store["w3"].data + store["b3"].data

    def values(self, z_s, z_g) -> np.ndarray:
        return self._values_np(self.params, z_s, z_g)

    def target_values(self, z_s, z_g) -> np.ndarray:
        return self._values_np(self.target, z_s, z_g)


def act(q: QFunction, z_s: np.ndarray, z_g: np.ndarray, eps: float, rng: RngStream) -> int:
    """Epsilon-greedy; greedy ties break to the lowest index."""
    if not 0.0 <= eps <= 1.0:
        raise ConfigError(f"epsilon must be in [0, 1], got {eps}")
    if eps > 0.0 and float(rng.uniform()) < eps:
        return int(rng.integers(q.n_actions))
    return int(np.argmax(q.values(z_s, z_g)[0]))


def bellman_loss(batch: list[Transition], q: QFunction, gamma: float) -> Tensor:
    """Mean squared TD error; the bootstrap term uses the target network and
    is dropped on terminal transitions. Gradients flow only through the
    online network (targets are constants)."""
    if not batch:
        raise ConfigError("bellman_loss: empty batch")
    if not 0.0 <= gamma < 1.0:
        raise ConfigError(f"gamma must be in [0, 1), got {gamma}")
    z_s = np.stack([t.z_s for t in batch])
    z_g = np.stack([t.z_goal for t in batch])
    z_n = np.stack([t.z_next for t in batch])
    a = np.array([t.action for t in batch])
    r = np.array([t.reward for t in batch])
    done = np.array([t.done for t in batch], dtype=np.float64)
    boot = q.target_values(z_n, z_g).max(axis=1)
    target = r + gamma * (1.0 - done) * boot
    values = q.values_t(Tensor(z_s), Tensor(z_g))
    onehot = np.zeros((len(batch), q.n_actions))
    onehot[np.arange(len(batch)), a] = 1.0
    chosen = T.sum_(values * onehot, axis=1)
    return T.mean(T.square(chosen - target))


def her_relabel(episode: list[Transition], rho: float, strategy: str,
                rng: RngStream, success_tol: float) -> list[Transition]:
    """Additional transitions with goals replaced by later achieved states."""
    if strategy not in ("final", "future"):
        raise ConfigError(f"unknown relabel strategy {strategy!r}")
    out = []
    T_len = len(episode)
    for t, tr in enumerate(episode):
        if float(rng.uniform()) >= rho:
            continue
        j = T_len - 1 if strategy == "final" else t + int(rng.integers(T_len - t))
        new_goal = episode[j].achieved.copy()
        r = latent_reward(tr.achieved, new_goal)
        out.append(replace(tr, z_goal=new_goal, reward=r, done=bool(-r < success_tol)))
    return out


# -- rollouts and evaluation ---------------------------------------------------


@dataclass
class GoalSpec:
    """Everything evaluation needs to know about one episode's goal."""

    z_goal: np.ndarray                  # goal in policy space (z_I or label)
    full_latent: np.ndarray | None      # full latent for vae_dist, None for oracle
    image: np.ndarray | None            # decoded goal image, None for oracle
    label: np.ndarray                   # normalized physics vector of the goal
    label_estimated: bool = False       # true when read back from the decoded image


class Embedder:
    """Observation -> policy-space vector; label space for the oracle."""

    def __init__(self, kind: EnvKind, constants: EnvConstants,
                 vae: EnhancedVae | RigVae | None):
        self.kind = kind
        self.constants = constants
        self.vae = vae

    @property
    def dim(self) -> int:
        if self.vae is None:
            return envs.LABEL_DIMS[self.kind]
        return self.vae.cfg.d_I if isinstance(self.vae, EnhancedVae) else self.vae.d

    def z_of(self, image: np.ndarray, state) -> np.ndarray:
        if self.vae is None:
            return envs.physics_label(self.kind, state, self.constants)
        mu_I, _ = self.vae.encode_mu_np(image[None])
        return mu_I[0]

    def full_of(self, image: np.ndarray) -> np.ndarray | None:
        if self.vae is None:
            return None
        mu_I, mu_E = self.vae.encode_mu_np(image[None])
        return mu_I[0] if mu_E is None else np.concatenate([mu_I[0], mu_E[0]])


class GoalSource:
    """Per-episode goal provider: 'pi-rig' (filtered sampler), 'rig' (prior
    draws on the baseline VAE), or 'oracle' (feasible sampled state labels)."""

    def __init__(self, method: str, kind: EnvKind, constants: EnvConstants,
                 sampler: GoalSampler | None = None, rig_vae: RigVae | None = None):
        if method not in ("pi-rig", "rig", "oracle"):
            raise ConfigError(f"unknown method {method!r}")
        if method == "pi-rig" and sampler is None:
            raise ConfigError("pi-rig needs a GoalSampler")
        if method == "rig" and rig_vae is None:
            raise ConfigError("rig needs the baseline VAE")
        self.method = method
        self.kind = kind
        self.constants = constants
        self.sampler = sampler
        self.rig_vae = rig_vae
        self.last_candidates = None

    def _label_from_image(self, img: np.ndarray) -> np.ndarray:
        from .envs import label_bounds
        from .envs.raster import extract_object_position

        center, half = label_bounds(self.kind, self.constants)
        pos = extract_object_position(self.kind, img, self.constants)
        raw = np.zeros(len(center))
        raw[:2] = pos
        return (raw - center) / half

    def draw(self, obs_image: np.ndarray, state, rng: RngStream) -> GoalSpec:
        if self.method == "oracle":
            goal_state = envs.sample_state(self.kind, rng, self.constants)
            label = envs.physics_label(self.kind, goal_state, self.constants)
            return GoalSpec(z_goal=label, full_latent=None, image=None, label=label)
        if self.method == "rig":
            vae = self.rig_vae
            z = sample_prior_goals(1, rng, vae.d, 0)[0].z_I
            img = vae.decode_np(z[None])[0]
            return GoalSpec(z_goal=z, full_latent=z, image=img,
                            label=self._label_from_image(img), label_estimated=True)
        vae = self.sampler.vae
        mu_I, mu_E = vae.encode_mu_np(obs_image[None])
        z_start = LatentCode(z_I=mu_I[0], z_E=mu_E[0])
        goal, img, log = self.sampler.propose_goal(z_start, rng)
        self.last_candidates = log
        label = vae.phys_of_latent_np(goal.z_I[None])[0]
        return GoalSpec(z_goal=goal.z_I, full_latent=goal.concat(), image=img, label=label)


@dataclass
class RlConfig:
    gamma: float = 0.98
    buffer_capacity: int = 100_000
    batch_size: int = 64
    lr: float = 1e-3
    hidden: int = 64
    target_sync_every: int = 500
    updates_per_episode: int = 40
    relabel_rho: float = 0.8
    relabel_strategy: str = "future"
    success_tol: float = 0.25
    eps_start: float = 1.0
    eps_final: float = 0.05
    eps_anneal_frac: float = 0.2
    episodes: int = 150


def rollout(kind: EnvKind, constants: EnvConstants, q: QFunction | None,
            embedder: Embedder, goal: GoalSpec, horizon: int, eps: float,
            rng: RngStream, resolution: int = 32, start=None,
            success_tol: float = 0.25):
    """One episode (H steps or early success); returns (transitions, final state).

    Pass start=(state, obs) to roll from an existing reset — the goal is
    normally drawn conditioned on that same start.
    """
    vocab = action_vocab(kind)
    if start is None:
        state, obs = envs.reset(kind, rng.spawn("reset"), constants, res=resolution)
    else:
        state, obs = start
    act_rng = rng.spawn("actions")
    z_s = embedder.z_of(obs.image, state)
    episode: list[Transition] = []
    for _ in range(int(horizon)):
        if q is None:
            a_idx = int(act_rng.integers(len(vocab)))
        else:
            a_idx = act(q, z_s, goal.z_goal, eps, act_rng)
        state = envs.step(kind, state, vocab[a_idx], None, constants)
        img = envs.render(kind, state, obs.appearance, resolution, constants)
        z_next = embedder.z_of(img, state)
        r = latent_reward(z_next, goal.z_goal)
        done = bool(-r < success_tol)
        episode.append(Transition(z_s=z_s, action=a_idx, reward=r, z_next=z_next,
                                  z_goal=goal.z_goal.copy(), done=done, achieved=z_next))
        z_s = z_next
        if done:
            break
    return episode, state


def train_policy(kind: EnvKind, constants: EnvConstants, embedder: Embedder,
                 source: GoalSource, cfg: RlConfig, rng: RngStream,
                 resolution: int = 32, epoch_callback=None, horizon: int | None = None):
    """Episode loop: collect with eps-greedy, relabel, update, periodically report."""
    vocab = action_vocab(kind)
    q = QFunction(embedder.dim, len(vocab), cfg.hidden, rng.spawn("qinit"))
    buf = ReplayBuffer(cfg.buffer_capacity)
    env_rng = rng.spawn("episodes")
    her_rng = rng.spawn("her")
    learn_rng = rng.spawn("learner")
    goal_rng = rng.spawn("goals")
    updates = 0
    anneal = max(1, int(cfg.episodes * cfg.eps_anneal_frac))
    for ep in range(cfg.episodes):
        frac = min(1.0, ep / anneal)
        eps = cfg.eps_start + (cfg.eps_final - cfg.eps_start) * frac
        ep_rng = env_rng.spawn(f"ep{ep}")
        start = envs.reset(kind, ep_rng.spawn("reset"), constants, res=resolution)
        goal = source.draw(start[1].image, start[0], goal_rng.spawn(f"g{ep}"))
        episode, _ = rollout(kind, constants, q, embedder, goal,
                             horizon or constants.horizon, eps, ep_rng,
                             resolution, start=start, success_tol=cfg.success_tol)
        for tr in episode:
            buf.push(tr)
        for tr in her_relabel(episode, cfg.relabel_rho, cfg.relabel_strategy,
                              her_rng.spawn(f"ep{ep}"), cfg.success_tol):
            buf.push(tr)
        for _ in range(cfg.updates_per_episode):
            batch = buf.sample(min(cfg.batch_size, len(buf)), learn_rng)
            loss = bellman_loss(batch, q, cfg.gamma)
            q.params.zero_grads()
            loss.backward()
            adam_update(q.params, lr=cfg.lr)
            updates += 1
            if updates % cfg.target_sync_every == 0:
                q.sync_target()
        if epoch_callback is not None:
            epoch_callback(ep, q)
    return q


@dataclass
class EvalMetrics:
    vae_dist: float
    image_dist: float
    object_dist: float
    goal_feasibility_rate: float
    vae_dist_std: float = 0.0
    image_dist_std: float = 0.0
    object_dist_std: float = 0.0


def evaluate(kind: EnvKind, constants: EnvConstants, q: QFunction | None,
             embedder: Embedder, source: GoalSource, n_episodes: int,
             rng: RngStream, resolution: int = 32,
             success_tol: float = 0.25) -> EvalMetrics:
    """Greedy terminal-distance metrics over n episodes (means +- std)."""
    from .envs import label_bounds, object_position

    center, half = label_bounds(kind, constants)
    vae_d, img_d, obj_d, feas = [], [], [], []
    for ep in range(int(n_episodes)):
        ep_rng = rng.spawn(f"eval{ep}")
        start = envs.reset(kind, ep_rng.spawn("reset"), constants, res=resolution)
        goal = source.draw(start[1].image, start[0], ep_rng.spawn("goal"))
        episode, final_state = rollout(kind, constants, q, embedder, goal,
                                       constants.horizon, 0.0, ep_rng,
                                       resolution, start=start, success_tol=success_tol)
        final_img = envs.render(kind, final_state, start[1].appearance, resolution, constants)
        if goal.full_latent is not None:
            full = embedder.full_of(final_img)
            vae_d.append(float(np.linalg.norm(full - goal.full_latent)))
        if goal.image is not None:
            img_d.append(float(np.linalg.norm(final_img - goal.image)))
        goal_pos = goal.label[:2] * half[:2] + center[:2]
        obj_d.append(float(np.linalg.norm(object_position(kind, final_state, constants) - goal_pos)))
        if goal.label_estimated:
            ok = abs(goal_pos[0]) <= half[0] + 1e-9 and (
                abs(goal_pos[1] - center[1]) <= half[1] + 1e-9)
            feas.append(1.0 if ok else 0.0)
        else:
            feas.append(1.0 if feasible_from_label(kind, goal.label, constants) else 0.0)

    def stats(vals):
        return (float(np.mean(vals)), float(np.std(vals))) if vals else (float("nan"), float("nan"))

    vm, vs = stats(vae_d)
    im, is_ = stats(img_d)
    om, os_ = stats(obj_d)
    return EvalMetrics(vae_dist=vm, image_dist=im, object_dist=om,
                       goal_feasibility_rate=float(np.mean(feas)),
                       vae_dist_std=vs, image_dist_std=is_, object_dist_std=os_)
