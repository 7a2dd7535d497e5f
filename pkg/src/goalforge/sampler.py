"""Goal imagination: prior candidates, physics scoring, learned-dynamics
reachability, and proportional selection; plus the plain prior sampler used
by the unfiltered baseline.

Draw-order contract (relied on by the baseline-equality check): a proposal
consumes exactly one (N, d_I+d_E) normal block for candidates, then — only
when scoring is enabled — one (n_sequences, K) integer block for shooting,
then one uniform for the selection draw.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .numerics import ParamStore, RngStream, adam_update
from .numerics import tensor as T
from .numerics.tensor import Tensor
from .physics import ConstraintSet, physics_scores
from .vae.model import EnhancedVae, LatentCode


def sample_prior_goals(n: int, rng: RngStream, d_I: int, d_E: int) -> list[LatentCode]:
    """n independent standard-normal draws over the full latent."""
    if n < 1:
        raise ConfigError(f"need at least one goal, got n={n}")
    block = rng.normal((n, d_I + d_E))
    return [LatentCode.split(row, d_I) for row in block]


@dataclass
class LatentDynamicsModel:
    """One-step residual predictor (z_I, action) -> z_I'."""

    d_I: int
    action_dim: int
    hidden: int = 64
    params: ParamStore = field(default_factory=ParamStore)
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if "w1" not in self.params:
            rng = RngStream(0xD1, 0)
            self.params.add("w1", rng.normal((self.d_I + self.action_dim, self.hidden))
                            * np.sqrt(2.0 / (self.d_I + self.action_dim)))
            self.params.add("b1", np.zeros(self.hidden))
            self.params.add("w2", rng.normal((self.hidden, self.d_I)) * 0.01)
            self.params.add("b2", np.zeros(self.d_I))

    def predict_t(self, z: Tensor, a: Tensor) -> Tensor:
        h = T.tanh(T.affine(T.concat([z, a], axis=1), self.params["w1"], self.params["b1"]))
        return z + T.affine(h, self.params["w2"], self.params["b2"])

    def predict(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        p = self.params
        za = np.concatenate([z, a], axis=1)
        h = np.tanh(za @ p["w1"].data + p["b1"].data)
        return z + h @ p["w2"].data + p["b2"].data


def dynamics_loss(model: LatentDynamicsModel, z: np.ndarray, a: np.ndarray,
                  z_next: np.ndarray) -> Tensor:
    pred = model.predict_t(Tensor(z), Tensor(a))
    return T.mean(T.sum_(T.square(pred - Tensor(z_next)), axis=1))


def train_dynamics(model: LatentDynamicsModel, z: np.ndarray, a: np.ndarray,
                   z_next: np.ndarray, epochs: int, rng: RngStream,
                   batch_size: int = 256, lr: float = 1e-3) -> LatentDynamicsModel:
    """Adam on one-step squared prediction error; history records epoch means."""
    n = len(z)
    if n == 0:
        raise ConfigError("train_dynamics: empty transition set")
    bs = min(batch_size, n)
    shuffle = rng.spawn("shuffle")
    for _ in range(int(epochs)):
        order = shuffle.permutation(n)
        losses = []
        for start in range(0, n - bs + 1, bs):
            idx = order[start:start + bs]
            loss = dynamics_loss(model, z[idx], a[idx], z_next[idx])
            model.params.zero_grads()
            loss.backward()
            adam_update(model.params, lr=lr)
            losses.append(float(loss.data))
        model.loss_history.append(float(np.mean(losses)))
    return model


def shoot_terminals(model: LatentDynamicsModel, z_start: np.ndarray, horizon: int,
                    n_sequences: int, rng: RngStream, action_vocab: np.ndarray) -> np.ndarray:
    """Terminal z_I of n_sequences random action rollouts from z_start."""
    if horizon < 1 or n_sequences < 1:
        raise ConfigError("shooting needs horizon >= 1 and n_sequences >= 1")
    idx = rng.integers(len(action_vocab), shape=(n_sequences, horizon))
    z = np.tile(np.asarray(z_start, dtype=np.float64)[None, :], (n_sequences, 1))
    for k in range(horizon):
        z = model.predict(z, action_vocab[idx[:, k]])
    return z


def distance_to_score(d, scale: float):
    return np.exp(-np.asarray(d, dtype=np.float64) / scale)


def reachability(model: LatentDynamicsModel, z_start_I: np.ndarray, z_goal_I: np.ndarray,
                 horizon: int, n_sequences: int, rng: RngStream,
                 action_vocab: np.ndarray, scale: float = 0.5) -> float:
    """Random shooting: r = exp(-min_seq ||z_K - z_goal|| / scale) in (0, 1]."""
    terminals = shoot_terminals(model, z_start_I, horizon, n_sequences, rng, action_vocab)
    d_min = float(np.linalg.norm(terminals - np.asarray(z_goal_I)[None, :], axis=1).min())
    return float(distance_to_score(d_min, scale))


@dataclass
class GoalCandidate:
    z_g: LatentCode
    physics_score: float
    reachability: float
    weight: float
    probability: float = 0.0
    selected: bool = False


@dataclass(frozen=True)
class SamplerConfig:
    n_candidates: int = 32
    shoot_horizon: int = 10
    n_sequences: int = 64
    reach_scale: float = 0.5
    use_physics: bool = True
    use_reachability: bool = True


class GoalSampler:
    """Bundles the trained models behind the four-step proposal pipeline."""

    def __init__(self, vae: EnhancedVae, dynamics: LatentDynamicsModel | None,
                 cset: ConstraintSet, action_vocab: np.ndarray,
                 cfg: SamplerConfig = SamplerConfig()):
        self.vae = vae
        self.dynamics = dynamics
        self.cset = cset
        self.action_vocab = action_vocab
        self.cfg = cfg
        if cfg.n_candidates < 1:
            raise ConfigError("n_candidates must be >= 1")
        if cfg.use_reachability and dynamics is None:
            raise ConfigError("reachability scoring requires a dynamics model")

    def propose_goal(self, z_start: LatentCode, rng: RngStream
                     ) -> tuple[LatentCode, np.ndarray, list[GoalCandidate]]:
        """Sample candidates, score, select proportionally, decode the pick.

        The decoded goal image holds z_E at the current observation's encoding
        (appearance cannot change within an episode).
        """
        cfg = self.cfg
        d_I, d_E = self.vae.cfg.d_I, self.vae.cfg.d_E
        cands = sample_prior_goals(cfg.n_candidates, rng, d_I, d_E)
        z_I_block = np.stack([c.z_I for c in cands])

        if cfg.use_physics:
            phys = self.vae.phys_of_latent_np(z_I_block)
            s = physics_scores(self.cset, phys)
        else:
            s = np.ones(cfg.n_candidates)
        if cfg.use_reachability:
            terminals = shoot_terminals(self.dynamics, z_start.z_I, cfg.shoot_horizon,
                                        cfg.n_sequences, rng, self.action_vocab)
            d_min = np.linalg.norm(terminals[None, :, :] - z_I_block[:, None, :], axis=2).min(axis=1)
            r = distance_to_score(d_min, cfg.reach_scale)
        else:
            r = np.ones(cfg.n_candidates)

        weights = s * r
        probs = weights / weights.sum()
        pick = rng.choice_prob(probs)
        log = [GoalCandidate(z_g=c, physics_score=float(s[i]), reachability=float(r[i]),
                             weight=float(weights[i]), probability=float(probs[i]),
                             selected=(i == pick))
               for i, c in enumerate(cands)]
        goal = cands[pick]
        img = self.vae.decode_np(goal.z_I[None, :], z_start.z_E[None, :])[0]
        return goal, img, log


def append_goal_log(path: str | Path, episode: int, log: list[GoalCandidate]) -> None:
    """Newline-delimited JSON audit records, one per candidate."""
    with open(path, "a") as fh:
        for i, cand in enumerate(log):
            fh.write(json.dumps({
                "episode": episode, "candidate": i,
                "s": cand.physics_score, "r": cand.reachability,
                "weight": cand.weight, "probability": cand.probability,
                "selected": cand.selected,
            }, sort_keys=True) + "\n")
