"""Latent models: the physics-structured VAE and the unstructured baseline.

The structured model splits the latent into z_I (physics, first label_dim
coordinates supervised by physics labels) and z_E (appearance + effector
pose). Its decoder is a trainable physics head followed by two fixed stages:
an RK4 dynamics functional and the shared scene rasterizer — the render
stage holds zero trainable parameters by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..envs import EnvConstants, EnvKind, label_bounds, smooth_dynamics
from ..envs.raster import scene_image
from ..envs.types import LABEL_DIMS
from ..errors import ConfigError, ShapeError
from ..numerics import ParamStore, RngStream, clamp_log_sigma
from ..numerics import tensor as T
from ..numerics.backend import TENSOR
from ..numerics.ode import rk4_integrate
from ..numerics.tensor import Tensor

# fixed z_E -> scene-parameter map (part of the non-trainable render stage)
APP_SQUASH = 1.2
EFF_SQUASH = 0.8
SHADE_LO, SHADE_SPAN = 0.25, 0.30


@dataclass(frozen=True)
class VaeConfig:
    d_I: int = 8
    d_E: int = 4
    resolution: int = 32
    conv_channels: tuple[int, int] = (8, 16)
    trunk_width: int = 64
    phys_hidden: int = 64
    sigma_x: float = 0.1
    beta: float = 1.0
    alpha: float = 0.2
    lam: float = 10.0
    w_phys: float = 1.0
    ode_horizon: int = 4
    phys_head_range: float = 1.75
    stop_grad_unsupervised: bool = True
    lr: float = 1e-3
    batch_size: int = 256
    epochs: int = 30
    # baseline decoder: fc to a half-resolution RGB seed map, upsample, smooth
    rig_dec_hidden: int = 128


@dataclass
class EncoderOut:
    mu_I: Tensor
    log_sigma_I: Tensor
    mu_E: Tensor
    log_sigma_E: Tensor


@dataclass(frozen=True)
class LatentCode:
    """Split latent: physics factors + environment factors."""

    z_I: np.ndarray
    z_E: np.ndarray

    def concat(self) -> np.ndarray:
        return np.concatenate([self.z_I, self.z_E])

    @staticmethod
    def split(vec: np.ndarray, d_I: int) -> "LatentCode":
        vec = np.asarray(vec, dtype=np.float64)
        return LatentCode(z_I=vec[:d_I].copy(), z_E=vec[d_I:].copy())


def _conv_out(res: int) -> int:
    return res // 4  # two stride-2 k4 p1 convolutions


def _init_conv(rng, o, i, k):
    return rng.normal((o, i, k, k)) * np.sqrt(2.0 / (i * k * k))


def _init_affine(rng, i, o, scale=1.0):
    return rng.normal((i, o)) * (scale * np.sqrt(2.0 / i))


class EncoderTrunk:
    """Shared convolutional feature extractor.

    Two fixed coordinate channels ride along with the RGB input so blob
    positions are linearly recoverable from mask-times-coordinate products
    (position regression is the whole game here)."""

    def __init__(self, cfg: VaeConfig, params: ParamStore, rng: RngStream, prefix: str):
        c1, c2 = cfg.conv_channels
        self.cfg = cfg
        self.prefix = prefix
        side = _conv_out(cfg.resolution)
        self.flat = c2 * side * side
        lin = np.linspace(-1.0, 1.0, cfg.resolution)
        cx, cy = np.meshgrid(lin, lin)
        self._coords = np.stack([cx, cy])[None, :, :, :]  # (1, 2, H, W)
        params.add(f"{prefix}.conv1.w", _init_conv(rng, c1, 5, 4))
        params.add(f"{prefix}.conv1.b", np.zeros(c1))
        params.add(f"{prefix}.conv2.w", _init_conv(rng, c2, c1, 4))
        params.add(f"{prefix}.conv2.b", np.zeros(c2))
        params.add(f"{prefix}.fc.w", _init_affine(rng, self.flat, cfg.trunk_width))
        params.add(f"{prefix}.fc.b", np.zeros(cfg.trunk_width))

    def _with_coords_np(self, x: np.ndarray) -> np.ndarray:
        B = x.shape[0]
        return np.concatenate([x, np.broadcast_to(self._coords, (B, 2, x.shape[2], x.shape[3]))], axis=1)

    def __call__(self, x: Tensor, p: ParamStore) -> Tensor:
        if x.shape[1:] != (3, self.cfg.resolution, self.cfg.resolution):
            raise ShapeError(f"encoder expects (B,3,{self.cfg.resolution},{self.cfg.resolution}), got {x.shape}")
        xc = Tensor(self._with_coords_np(x.data)) if not x.requires_grad else T.concat(
            [x, Tensor(np.broadcast_to(self._coords, (x.shape[0], 2) + x.shape[2:]).copy())], axis=1)
        h = T.relu(T.conv2d(xc, p[f"{self.prefix}.conv1.w"], p[f"{self.prefix}.conv1.b"], stride=2, pad=1))
        h = T.relu(T.conv2d(h, p[f"{self.prefix}.conv2.w"], p[f"{self.prefix}.conv2.b"], stride=2, pad=1))
        h = T.reshape(h, (x.shape[0], self.flat))
        return T.relu(T.affine(h, p[f"{self.prefix}.fc.w"], p[f"{self.prefix}.fc.b"]))

    def forward_np(self, x: np.ndarray, p: ParamStore) -> np.ndarray:
        """Tape-free inference path (identical arithmetic, no gradients)."""
        from ..numerics.tensor import _im2col

        def conv(xx, w, b):
            B = xx.shape[0]
            O, Ci, kh, kw = w.shape
            cols, Ho, Wo = _im2col(xx, kh, kw, 2, 1)
            out = cols.reshape(B * Ho * Wo, Ci * kh * kw) @ w.reshape(O, -1).T + b
            return out.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)

        h = np.maximum(conv(self._with_coords_np(np.asarray(x, dtype=np.float64)),
                            p[f"{self.prefix}.conv1.w"].data, p[f"{self.prefix}.conv1.b"].data), 0.0)
        h = np.maximum(conv(h, p[f"{self.prefix}.conv2.w"].data, p[f"{self.prefix}.conv2.b"].data), 0.0)
        h = h.reshape(x.shape[0], self.flat)
        return np.maximum(h @ p[f"{self.prefix}.fc.w"].data + p[f"{self.prefix}.fc.b"].data, 0.0)


class EnhancedVae:
    """Conditioned-split encoder + physics-structured decoder."""

    def __init__(self, kind: EnvKind, constants: EnvConstants, cfg: VaeConfig, rng: RngStream):
        self.kind = kind
        self.constants = constants
        self.cfg = cfg
        self.label_dim = LABEL_DIMS[kind]
        if cfg.d_I < self.label_dim:
            raise ConfigError(f"d_I={cfg.d_I} must be >= label dim {self.label_dim}")
        if cfg.d_E < 2:
            raise ConfigError("d_E must be >= 2 (shade, hue)")
        self.params = ParamStore()
        p, r = self.params, rng
        self.trunk = EncoderTrunk(cfg, p, r.spawn("trunk"), "enc")
        tw = cfg.trunk_width
        p.add("enc.head_I.w", _init_affine(r.spawn("hI"), tw, 2 * cfg.d_I, 0.3))
        p.add("enc.head_I.b", np.zeros(2 * cfg.d_I))
        p.add("enc.head_E.w", _init_affine(r.spawn("hE"), tw + cfg.d_I, 2 * cfg.d_E, 0.3))
        p.add("enc.head_E.b", np.zeros(2 * cfg.d_E))
        p.add("dec.phys.w1", _init_affine(r.spawn("dp1"), cfg.d_I, cfg.phys_hidden))
        p.add("dec.phys.b1", np.zeros(cfg.phys_hidden))
        p.add("dec.phys.w2", _init_affine(r.spawn("dp2"), cfg.phys_hidden, self.label_dim, 0.3))
        p.add("dec.phys.b2", np.zeros(self.label_dim))
        center, half = label_bounds(kind, constants)
        self._center, self._half = center, half
        self._deriv = smooth_dynamics(kind, constants)

    # -- encoder -----------------------------------------------------------
    def encode(self, x: Tensor | None, cond_mu_I: Tensor | None = None,
               h: Tensor | None = None) -> EncoderOut:
        """Split heads over shared features; the z_E head sees (features, mu_I)
        so the appearance path can subtract what the physics path already
        explains. Pass cond_mu_I to condition on a known intrinsic vector;
        pass h to reuse precomputed trunk features."""
        p = self.params
        if h is None:
            h = self.trunk(x, p)
        out_I = T.affine(h, p["enc.head_I.w"], p["enc.head_I.b"])
        mu_I = out_I[:, : self.cfg.d_I]
        ls_I = clamp_log_sigma(out_I[:, self.cfg.d_I:])
        cond = cond_mu_I if cond_mu_I is not None else mu_I
        out_E = T.affine(T.concat([h, cond], axis=1), p["enc.head_E.w"], p["enc.head_E.b"])
        mu_E = out_E[:, : self.cfg.d_E]
        ls_E = clamp_log_sigma(out_E[:, self.cfg.d_E:])
        return EncoderOut(mu_I=mu_I, log_sigma_I=ls_I, mu_E=mu_E, log_sigma_E=ls_E)

    def encode_mu_np(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior means only, tape-free; returns (mu_I, mu_E) arrays."""
        p = self.params
        h = self.trunk.forward_np(np.asarray(x, dtype=np.float64), p)
        out_I = h @ p["enc.head_I.w"].data + p["enc.head_I.b"].data
        mu_I = out_I[:, : self.cfg.d_I]
        out_E = np.concatenate([h, mu_I], axis=1) @ p["enc.head_E.w"].data + p["enc.head_E.b"].data
        return mu_I, out_E[:, : self.cfg.d_E]

    # -- decoder -----------------------------------------------------------
    def phys_of_latent(self, z_I: Tensor) -> Tensor:
        """Trainable physics head: z_I -> normalized physics vector.

        tanh output scaled past 1 so decodable states form a strict superset
        of the feasible set (prior samples CAN be infeasible)."""
        p = self.params
        h = T.tanh(T.affine(z_I, p["dec.phys.w1"], p["dec.phys.b1"]))
        out = T.tanh(T.affine(h, p["dec.phys.w2"], p["dec.phys.b2"]))
        return out * self.cfg.phys_head_range

    def phys_of_latent_np(self, z_I: np.ndarray) -> np.ndarray:
        p = self.params
        h = np.tanh(np.asarray(z_I) @ p["dec.phys.w1"].data + p["dec.phys.b1"].data)
        return np.tanh(h @ p["dec.phys.w2"].data + p["dec.phys.b2"].data) * self.cfg.phys_head_range

    def integrate_phys(self, phys_norm):
        """The fixed dynamics functional: denormalize, RK4, back to world units."""
        raw = phys_norm * self._half + self._center
        dt = self.constants.dt / self.cfg.ode_horizon
        return rk4_integrate(self._deriv, raw, dt, self.cfg.ode_horizon)

    def appearance_of_latent(self, z_E: Tensor) -> dict:
        """Fixed linear map + fixed squashing from z_E to scene parameters."""
        c = self.constants
        shade = T.sigmoid(z_E[:, 0] * APP_SQUASH) * SHADE_SPAN + SHADE_LO
        hue = T.sigmoid(z_E[:, 1] * APP_SQUASH)
        out = {"shade": shade, "hue": hue}
        if self.kind == EnvKind.PUSHER2:
            lo, hi = c.pusher_center_bounds()
            out["eff_x"] = T.tanh(z_E[:, 2] * EFF_SQUASH) * hi[0]
            out["eff_y"] = T.tanh(z_E[:, 3] * EFF_SQUASH) * hi[1]
        elif self.kind == EnvKind.PICKPLACE2:
            zmid = (c.grip_z_min + c.pp_z_max) / 2.0
            zhalf = (c.pp_z_max - c.grip_z_min) / 2.0
            out["eff_x"] = T.tanh(z_E[:, 2] * EFF_SQUASH) * (c.pp_half_x - c.gripper_radius)
            out["eff_y"] = T.tanh(z_E[:, 3] * EFF_SQUASH) * zhalf + zmid
        return out

    def appearance_latent_for(self, shade: float, hue: float, eff=None) -> np.ndarray:
        """Inverse of the fixed map (exact), for tests and goal construction."""
        def logit(u):
            return float(np.log(u / (1.0 - u)))

        z = np.zeros(self.cfg.d_E)
        z[0] = logit((shade - SHADE_LO) / SHADE_SPAN) / APP_SQUASH
        z[1] = logit(np.clip(hue, 1e-9, 1 - 1e-9)) / APP_SQUASH
        if eff is not None:
            c = self.constants
            if self.kind == EnvKind.PUSHER2:
                lo, hi = c.pusher_center_bounds()
                z[2] = float(np.arctanh(eff[0] / hi[0])) / EFF_SQUASH
                z[3] = float(np.arctanh(eff[1] / hi[1])) / EFF_SQUASH
            elif self.kind == EnvKind.PICKPLACE2:
                zmid = (c.grip_z_min + c.pp_z_max) / 2.0
                zhalf = (c.pp_z_max - c.grip_z_min) / 2.0
                z[2] = float(np.arctanh(eff[0] / (c.pp_half_x - c.gripper_radius))) / EFF_SQUASH
                z[3] = float(np.arctanh((eff[1] - zmid) / zhalf)) / EFF_SQUASH
        return z

    def decode(self, z_I: Tensor, z_E: Tensor, stop_grad_phys: bool = False) -> Tensor:
        """(z_I, z_E) -> image mean (B, 3, H, W) in [0, 1]."""
        if z_I.shape[-1] != self.cfg.d_I or z_E.shape[-1] != self.cfg.d_E:
            raise ShapeError(f"decode: latent dims {z_I.shape}/{z_E.shape} do not match config")
        phys = self.phys_of_latent(z_I)
        if stop_grad_phys:
            phys = T.stop_gradient(phys)
        return self.render_phys(phys, z_E)

    def render_phys(self, phys_norm: Tensor, z_E: Tensor) -> Tensor:
        """Fixed stages only: dynamics functional + rasterizer (0 trainable params)."""
        B = phys_norm.shape[0]
        res = self.cfg.resolution
        evolved = self.integrate_phys(phys_norm)
        app = self.appearance_of_latent(z_E)

        def cell(t):
            return T.reshape(t, (B, 1, 1, 1))

        obj = (cell(evolved[:, 0]), cell(evolved[:, 1]))
        eff = None
        if "eff_x" in app:
            eff = (cell(app["eff_x"]), cell(app["eff_y"]))
        return scene_image(TENSOR, self.kind, self.constants, res,
                           obj, eff, cell(app["shade"]), cell(app["hue"]))

    def decode_np(self, z_I: np.ndarray, z_E: np.ndarray) -> np.ndarray:
        """Tape-free decode for evaluation paths."""
        out = self.decode(Tensor(np.atleast_2d(z_I)), Tensor(np.atleast_2d(z_E)))
        return out.data

    def f_E_param_count(self) -> int:
        """Trainable parameters in the fixed render stage (must be 0)."""
        return sum(t.data.size for name, t in self.params.items()
                   if name.startswith("dec.") and not name.startswith("dec.phys."))


class RigVae:
    """Unstructured baseline: one latent block, fully trainable decoder."""

    def __init__(self, kind: EnvKind, constants: EnvConstants, cfg: VaeConfig, rng: RngStream):
        self.kind = kind
        self.constants = constants
        self.cfg = cfg
        self.d = cfg.d_I + cfg.d_E
        self.params = ParamStore()
        p, r = self.params, rng
        self.trunk = EncoderTrunk(cfg, p, r.spawn("trunk"), "enc")
        p.add("enc.head.w", _init_affine(r.spawn("h"), cfg.trunk_width, 2 * self.d, 0.3))
        p.add("enc.head.b", np.zeros(2 * self.d))
        res = cfg.resolution
        self.seed_side = res // 2
        p.add("dec.fc1.w", _init_affine(r.spawn("d1"), self.d, cfg.rig_dec_hidden))
        p.add("dec.fc1.b", np.zeros(cfg.rig_dec_hidden))
        p.add("dec.fc2.w", _init_affine(r.spawn("d2"), cfg.rig_dec_hidden, 3 * self.seed_side ** 2))
        p.add("dec.fc2.b", np.zeros(3 * self.seed_side ** 2))
        p.add("dec.conv.w", _init_conv(r.spawn("d3"), 3, 3, 3))
        p.add("dec.conv.b", np.zeros(3))

    def encode(self, x: Tensor) -> EncoderOut:
        p = self.params
        h = self.trunk(x, p)
        out = T.affine(h, p["enc.head.w"], p["enc.head.b"])
        mu = out[:, : self.d]
        ls = clamp_log_sigma(out[:, self.d:])
        # single block: expose it through the same struct (z_E part empty)
        return EncoderOut(mu_I=mu, log_sigma_I=ls, mu_E=None, log_sigma_E=None)

    def encode_mu_np(self, x: np.ndarray) -> tuple[np.ndarray, None]:
        p = self.params
        h = self.trunk.forward_np(np.asarray(x, dtype=np.float64), p)
        out = h @ p["enc.head.w"].data + p["enc.head.b"].data
        return out[:, : self.d], None

    def decode(self, z: Tensor) -> Tensor:
        p = self.params
        B = z.shape[0]
        h = T.relu(T.affine(z, p["dec.fc1.w"], p["dec.fc1.b"]))
        h = T.relu(T.affine(h, p["dec.fc2.w"], p["dec.fc2.b"]))
        h = T.reshape(h, (B, 3, self.seed_side, self.seed_side))
        h = T.sigmoid(T.conv2d(h, p["dec.conv.w"], p["dec.conv.b"], stride=1, pad=1))
        return T.upsample_nearest(h, 2)

    def decode_np(self, z: np.ndarray) -> np.ndarray:
        return self.decode(Tensor(np.atleast_2d(z))).data
