"""Images of scenes, maps and trajectories (Pillow), plus per-channel PGM dumps."""

from __future__ import annotations

import colorsys
import json
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .gridmap import EXPLORED, OBSTACLE, SEMANTIC0, SemanticMap
from .simworld import FREE, OBJECT0, WALL, Scene

FREE_RGB = (255, 255, 255)
UNKNOWN_RGB = (235, 235, 235)
OBSTACLE_RGB = (110, 110, 110)
TRAJ_RGB = (220, 30, 30)
GOAL_RGB = (30, 60, 230)


def palette(n: int) -> np.ndarray:
    """``n`` well-separated saturated colours."""
    cols = [colorsys.hsv_to_rgb((i * 0.618034) % 1.0, 0.75, 0.9) for i in range(n)]
    return (np.array(cols) * 255).astype(np.uint8)


def scene_rgb(scene: Scene) -> np.ndarray:
    g = scene.grid
    img = np.empty(g.shape + (3,), dtype=np.uint8)
    img[:] = FREE_RGB
    img[g == WALL] = OBSTACLE_RGB
    pal = palette(len(scene.categories))
    obj = g >= OBJECT0
    img[obj] = pal[g[obj] - OBJECT0]
    return img


def map_rgb(smap: SemanticMap) -> np.ndarray:
    ch = smap.channels
    img = np.empty(ch.shape[1:] + (3,), dtype=np.uint8)
    img[:] = UNKNOWN_RGB
    img[ch[EXPLORED] > 0] = FREE_RGB
    img[ch[OBSTACLE] > 0] = OBSTACLE_RGB
    pal = palette(ch.shape[0] - SEMANTIC0)
    for k in range(ch.shape[0] - SEMANTIC0):
        img[ch[SEMANTIC0 + k] > 0] = pal[k]
    return img


def _to_image(rgb: np.ndarray, scale: int) -> Image.Image:
    # rows are world x; show x to the right and y upward
    arr = np.flipud(np.transpose(rgb, (1, 0, 2)))
    img = Image.fromarray(np.ascontiguousarray(arr), "RGB")
    if scale > 1:
        img = img.resize((img.width * scale, img.height * scale), Image.NEAREST)
    return img


def compose(rgb: np.ndarray, origin, resolution: float, poses=(), goals=(), scale: int = 2) -> Image.Image:
    """Overlay a trajectory (red line) and long-term goals (blue dots) on a grid image."""
    img = _to_image(rgb, scale)
    h = rgb.shape[1]

    def px(x, y):
        c = (x - origin[0]) / resolution
        r = (y - origin[1]) / resolution
        return c * scale, (h - r) * scale

    draw = ImageDraw.Draw(img)
    pts = [px(p[0], p[1]) for p in poses]
    if len(pts) > 1:
        draw.line(pts, fill=TRAJ_RGB, width=max(1, scale))
    rad = max(2, 2 * scale)
    for g in goals:
        u, v = px(g[0], g[1])
        draw.ellipse([u - rad, v - rad, u + rad, v + rad], fill=GOAL_RGB)
    return img


def read_step_log(path) -> list[dict]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            d = json.loads(line)
            if "header" not in d:
                out.append(d)
    return out


def render_episode(scene: Scene, steps: list[dict] | None = None, scale: int = 2) -> Image.Image:
    steps = steps or []
    poses = [s["pose"] for s in steps]
    goals = []
    for s in steps:
        g = s.get("goal")
        if g is not None and (not goals or goals[-1] != g):
            goals.append(g)
    return compose(scene_rgb(scene), (0.0, 0.0), scene.resolution, poses, goals, scale)


def write_channel_pgms(smap: SemanticMap, out_dir) -> list[Path]:
    """One 8-bit PGM per map channel (0 or 255)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(smap.channels.shape[0]):
        arr = np.flipud((smap.channels[k] > 0).astype(np.uint8).T * 255)
        p = out / f"channel_{k:02d}.pgm"
        Image.fromarray(np.ascontiguousarray(arr), "L").save(p)
        paths.append(p)
    return paths
