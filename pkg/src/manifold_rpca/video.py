"""Background/foreground separation of a frame sequence.

Frames become the columns of a ``pixels x frames`` matrix; the low-rank part is
the background, the thresholded-away residual the foreground.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import fileio
from .baseline import bm_solve
from .errors import InputError
from .solver import solve, sparse_estimate


def frames_to_matrix(frames):
    frames = list(frames)
    if not frames:
        raise InputError("no frames given")
    shape = frames[0].shape
    for k, f in enumerate(frames):
        if f.shape != shape:
            raise InputError(f"frame {k} has shape {f.shape}, expected {shape}")
    return np.stack([f.reshape(-1) for f in frames], axis=1), shape


def load_frames(path):
    """Every ``*.pgm`` in a directory, in sorted filename order."""
    files = sorted(Path(path).glob("*.pgm"))
    return [fileio.read_pgm(f) for f in files]


def synthetic_clip(height=48, width=64, n_frames=50, blob=6, speed=3, seed=0):
    """Static rank-1 background with a bright square moving left to right.

    Returns ``(frames, truth_mask)`` where ``truth_mask[k]`` marks blob pixels.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    texture = 0.4 + 0.2 * np.sin(xx / 5.0) * np.cos(yy / 7.0) + 0.05 * rng.random((height, width))
    gain = 1.0 + 0.1 * np.sin(np.linspace(0, 2 * np.pi, n_frames))
    frames, masks = [], []
    y0 = height // 2 - blob // 2
    for k in range(n_frames):
        f = texture * gain[k]
        m = np.zeros((height, width), dtype=bool)
        x0 = (k * speed) % (width - blob)
        m[y0 : y0 + blob, x0 : x0 + blob] = True
        f = np.where(m, 1.0, f)
        frames.append(f)
        masks.append(m)
    return frames, masks


def separate(M, config, mask=None, solver="manifold"):
    """Return ``(background, foreground, trace)`` matrices for a pixels x frames ``M``."""
    if solver == "bm":
        pair, trace = bm_solve(M, config, mask)
        L = pair.dense()
    else:
        L, trace = solve(M, config, mask)
        L = L.dense()
    S = sparse_estimate(L, M, config.gamma, mask)
    return L, S, trace


def export_frames(out_dir, background, foreground, frame_shape):
    out = Path(out_dir)
    (out / "background").mkdir(parents=True, exist_ok=True)
    (out / "foreground").mkdir(parents=True, exist_ok=True)
    for k in range(background.shape[1]):
        fileio.write_pgm(out / "background" / f"frame_{k:04d}.pgm", background[:, k].reshape(frame_shape))
        fileio.write_pgm(out / "foreground" / f"frame_{k:04d}.pgm", foreground[:, k].reshape(frame_shape))
