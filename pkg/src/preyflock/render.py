"""Frame rendering to binary PPM (P6) images."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .analysis import DEFAULT_BANDWIDTH, kde_density

BACKGROUND = (16, 24, 40)
BORDER = (128, 128, 128)
PREY = (40, 200, 60)
PREDATOR = (255, 140, 0)
HEAT = np.array([90.0, 160.0, 255.0])


def write_ppm(path, image: np.ndarray) -> Path:
    path = Path(path)
    h, w, _ = image.shape
    with path.open("wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())
    return path


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def _disc(img, cx, cy, r, color, L, scale):
    """Filled disc, repeated across the torus seam."""
    h, w, _ = img.shape
    yy, xx = np.mgrid[0:h, 0:w]
    for ox in (-L, 0.0, L):
        for oy in (-L, 0.0, L):
            px, py = (cx + ox) * scale, (L - (cy + oy)) * scale
            if -r * scale <= px <= w + r * scale and -r * scale <= py <= h + r * scale:
                mask = (xx + 0.5 - px) ** 2 + (yy + 0.5 - py) ** 2 <= (r * scale) ** 2
                img[mask] = color


def render_frame(prey_pos, pred_pos, L: float, scale: int = 8, radius: float = 1.0,
                 heat: bool = False, bandwidth: float = DEFAULT_BANDWIDTH) -> np.ndarray:
    size = int(round(L * scale))
    img = np.empty((size, size, 3), dtype=np.float64)
    img[:] = BACKGROUND
    if heat and len(prey_pos):
        c = (np.arange(size) + 0.5) / scale
        gx, gy = np.meshgrid(c, L - c)
        dens = kde_density(prey_pos, np.stack([gx, gy], axis=-1), bandwidth, L)
        peak = dens.max()
        if peak > 0:
            a = (dens / peak)[..., None]
            img = img * (1 - a) + HEAT * a
    img[0, :] = img[-1, :] = BORDER
    img[:, 0] = img[:, -1] = BORDER
    for x, y in prey_pos:
        _disc(img, x, y, radius, PREY, L, scale)
    _disc(img, pred_pos[0], pred_pos[1], radius, PREDATOR, L, scale)
    return np.clip(img, 0, 255).astype(np.uint8)


def render_trajectory(traj, out_dir, L: float, scale: int = 8, heat: bool = False,
                      bandwidth: float = DEFAULT_BANDWIDTH, radius: float = 1.0) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in range(traj.num_frames):
        img = render_frame(traj.prey_pos[t], traj.pred_pos[t], L, scale, radius, heat, bandwidth)
        paths.append(write_ppm(out / f"frame_{t:06d}.ppm", img))
    return paths
