"""Scene geometry and the backend-generic rasterizer.

One drawing routine serves two callers: environment observation rendering
(numpy backend, scalar body parameters) and the decoder's fixed render layer
(tensor backend, batched (B,1,1) body parameters, gradients flowing into body
positions and colors). Keeping a single code path is what makes "decoded
image equals direct render" an exact identity rather than an approximation.

Bodies are discs with a hard core and a Gaussian edge:
alpha(d) = exp(-max(d - r, 0)^2 / (2 sigma^2)), sigma = EDGE_SOFT_PX pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics.backend import NUMPY
from .types import Appearance, EnvConstants, EnvKind, PhysState

EDGE_SOFT_PX = 0.75
DIST_EPS = 1e-12  # keeps sqrt gradient finite at disc centers

BASE_MARKER_COLOR = (0.15, 0.15, 0.18)
EFFECTOR_COLOR = (0.10, 0.78, 0.30)
TABLE_BRIGHTNESS = 1.0
OUTSIDE_BRIGHTNESS = 0.55


@dataclass(frozen=True)
class ViewBox:
    """Square world window mapped onto the image (uniform scale)."""

    x0: float
    y0: float
    side: float

    def pixel_size(self, res: int) -> float:
        return self.side / res

    def to_pixel(self, x: float, y: float, res: int) -> tuple[float, float]:
        """World point -> (col, row) in pixel units (row 0 at the top)."""
        px = (x - self.x0) / self.side * res - 0.5
        py = (self.y0 + self.side - y) / self.side * res - 0.5
        return px, py


def view_box(kind: EnvKind, c: EnvConstants) -> ViewBox:
    if kind == EnvKind.PICKPLACE2:
        return ViewBox(x0=-0.24, y0=-0.06, side=0.48)
    return ViewBox(x0=-0.24, y0=-0.24, side=0.48)


_GRID_CACHE: dict = {}


def world_grids(kind: EnvKind, c: EnvConstants, res: int):
    """(X, Y) world coordinates of pixel centers, each (res, res)."""
    key = (kind, res, c)
    if key not in _GRID_CACHE:
        v = view_box(kind, c)
        px = v.pixel_size(res)
        xs = v.x0 + (np.arange(res) + 0.5) * px
        ys = v.y0 + v.side - (np.arange(res) + 0.5) * px
        X, Y = np.meshgrid(xs, ys)
        _GRID_CACHE[key] = (X, Y, _region_mask(kind, c, X, Y))
    return _GRID_CACHE[key]


def _region_mask(kind: EnvKind, c: EnvConstants, X, Y) -> np.ndarray:
    """Soft mask of the support surface (table band / ground), constant per env."""
    soft = 0.25 * (X[0, 1] - X[0, 0])
    if kind == EnvKind.PUSHER2:
        dx = np.abs(X) - c.table_half_x
        dy = np.abs(Y) - c.table_half_y
        d = np.maximum(dx, dy)
        return 1.0 / (1.0 + np.exp(d / soft))
    if kind == EnvKind.PICKPLACE2:
        return 1.0 / (1.0 + np.exp(Y / soft))  # ground fills z < 0
    r = np.sqrt(X * X + Y * Y)
    return 1.0 / (1.0 + np.exp((r - (c.link1 + c.link2 + 0.02)) / soft))


def object_color(be, hue):
    """Fixed smooth hue sweep, red (hue=0) to blue-violet (hue=1)."""
    return be.stack_channels((
        0.95 - 0.55 * hue,
        0.15 + 0.25 * hue,
        0.25 + 0.65 * hue,
    ))


def background(be, kind: EnvKind, c: EnvConstants, shade, res: int):
    """Gray background: support surface at full shade, outside darker.

    Single channel; the first composite broadcasts it across channels."""
    _, _, mask = world_grids(kind, c, res)
    return shade * (OUTSIDE_BRIGHTNESS + (TABLE_BRIGHTNESS - OUTSIDE_BRIGHTNESS) * mask)


_BASE_MARKER = np.array(BASE_MARKER_COLOR).reshape(3, 1, 1)
_EFFECTOR = np.array(EFFECTOR_COLOR).reshape(3, 1, 1)


def draw_disc(be, img, kind, c, res, cx, cy, radius, color):
    """Alpha-composite one Gaussian-edged disc onto the stacked image.

    color is (3,1,1) (constant) or a stacked per-sample color; broadcasting
    carries the channel axis in both backends.
    """
    X, Y, _ = world_grids(kind, c, res)
    sigma = EDGE_SOFT_PX * view_box(kind, c).pixel_size(res)
    dx = cx - X
    dy = cy - Y
    d = be.sqrt(be.square(dx) + be.square(dy), eps=DIST_EPS)
    edge = be.relu(d - radius)
    alpha = be.exp(be.square(edge) * (-0.5 / (sigma * sigma)))
    return img * (1.0 - alpha) + alpha * color


def scene_image(be, kind: EnvKind, c: EnvConstants, res: int,
                object_xy, effector_xy, shade, hue):
    """Rasterize the full scene.

    numpy path: scalar body parameters in, (3, res, res) out. Tensor path:
    (B,1,1,1)-shaped parameters in, (B, 3, res, res) out. The arithmetic and
    its order are identical, so a decoded dynamics fixed point reproduces the
    environment raster exactly. effector_xy is None for the reacher (the tip
    marker IS the manipulable object).
    """
    img = background(be, kind, c, shade, res)
    if kind == EnvKind.REACHER2:
        img = draw_disc(be, img, kind, c, res, 0.0, 0.0, 0.018, _BASE_MARKER)
        return draw_disc(be, img, kind, c, res,
                         object_xy[0], object_xy[1], 0.02, object_color(be, hue))
    if kind == EnvKind.PUSHER2:
        eff_r, obj_r = c.pusher_radius, c.puck_radius
    else:
        eff_r, obj_r = c.gripper_radius, c.obj_radius
    img = draw_disc(be, img, kind, c, res,
                    effector_xy[0], effector_xy[1], eff_r, _EFFECTOR)
    return draw_disc(be, img, kind, c, res,
                     object_xy[0], object_xy[1], obj_r, object_color(be, hue))


def render_state(kind: EnvKind, state: PhysState, appearance: Appearance,
                 res: int, c: EnvConstants) -> np.ndarray:
    """Deterministic raster of a physical state -> (3, res, res) in [0, 1]."""
    from .api import object_position, effector_position  # late import, no cycle at call time

    obj = object_position(kind, state, c)
    eff = None if kind == EnvKind.REACHER2 else effector_position(kind, state)
    img = scene_image(NUMPY, kind, c, res, obj, eff, appearance.shade, appearance.hue)
    return np.clip(img, 0.0, 1.0)


def extract_object_position(kind: EnvKind, image: np.ndarray, c: EnvConstants) -> np.ndarray:
    """Weighted-centroid estimate of the object's world position in an image.

    The object's color family satisfies R + B - 2G > 0 against both the gray
    background and the green effector for every hue, so that response map
    localizes the object even in soft decoded images.
    """
    r, g, b = image[0], image[1], image[2]
    resp = np.maximum(r + b - 2.0 * g, 0.0)
    res = image.shape[1]
    if resp.sum() <= 0.0:
        return np.zeros(2)
    resp = np.where(resp >= 0.5 * resp.max(), resp, 0.0)
    rows, cols = np.mgrid[0:res, 0:res]
    col = float((resp * cols).sum() / resp.sum())
    row = float((resp * rows).sum() / resp.sum())
    v = view_box(kind, c)
    px = v.pixel_size(res)
    x = v.x0 + (col + 0.5) * px
    y = v.y0 + v.side - (row + 0.5) * px
    return np.array([x, y])
