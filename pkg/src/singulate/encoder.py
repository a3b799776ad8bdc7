"""Push-centric network input.

The working image is translated so the push start sits on the crop anchor
and rotated so the push direction points along +x, then cropped to 64x64
with bilinear sampling and zero fill.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .perception import ObservationImage
from .proposals import PushProposal

SIZE = 64
ANCHOR = (32, 32)

CONVENTIONS = {
    "size": SIZE,
    "anchor": list(ANCHOR),
    "interpolation": "bilinear",
    "fill": 0.0,
}


@dataclass(frozen=True, eq=False)
class PushImage:
    pixels: np.ndarray
    proposal: PushProposal | None = None


def bilinear(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample ``img`` at continuous (column ``u``, row ``v``); zero outside."""
    h, w = img.shape
    j0 = np.floor(u).astype(np.int64)
    i0 = np.floor(v).astype(np.int64)
    fu = (u - j0).astype(img.dtype)
    fv = (v - i0).astype(img.dtype)
    out = np.zeros(u.shape, dtype=img.dtype)
    for di, wi in ((0, 1 - fv), (1, fv)):
        for dj, wj in ((0, 1 - fu), (1, fu)):
            ii, jj = i0 + di, j0 + dj
            ok = (ii >= 0) & (ii < h) & (jj >= 0) & (jj < w)
            vals = np.zeros(u.shape, dtype=img.dtype)
            vals[ok] = img[ii[ok], jj[ok]]
            out += wi * wj * vals
    return out


def sample_grid(c, alpha, size: int = SIZE, anchor=ANCHOR):
    """Source coordinates in the working image for every output pixel."""
    dj = np.arange(size, dtype=float) - anchor[0]
    di = np.arange(size, dtype=float) - anchor[1]
    dj, di = np.meshgrid(dj, di)
    ca, sa = np.cos(alpha), np.sin(alpha)
    u = c[0] + ca * dj - sa * di
    v = c[1] + sa * dj + ca * di
    return u, v


def encode(observation: ObservationImage, proposal: PushProposal) -> PushImage:
    u, v = sample_grid(proposal.c, proposal.alpha)
    px = np.clip(bilinear(observation.pixels, u, v), 0.0, 1.0)
    return PushImage(px.astype(np.float32), proposal)


def encode_batch(observation: ObservationImage, proposals: list[PushProposal]) -> np.ndarray:
    """Stack of encoded images, shape ``(M, 64, 64)``."""
    if not proposals:
        return np.zeros((0, SIZE, SIZE), dtype=np.float32)
    c = np.array([p.c for p in proposals])
    a = np.array([p.alpha for p in proposals])
    dj = np.arange(SIZE, dtype=float) - ANCHOR[0]
    di = np.arange(SIZE, dtype=float) - ANCHOR[1]
    dj, di = np.meshgrid(dj, di)
    ca, sa = np.cos(a)[:, None, None], np.sin(a)[:, None, None]
    u = c[:, 0, None, None] + ca * dj - sa * di
    v = c[:, 1, None, None] + sa * dj + ca * di
    px = np.clip(bilinear(observation.pixels, u, v), 0.0, 1.0)
    return px.astype(np.float32)
