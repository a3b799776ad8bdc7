"""Independent reference implementations used as test oracles."""
import math

import numpy as np

from singulate.perception import make_segment


def rotate_segments(segments, center, phi):
    """Rigidly rotate segment polygons about ``center`` by ``phi`` (world frame)."""
    cx, cy = center
    c, s = math.cos(phi), math.sin(phi)
    out = []
    for seg in segments:
        poly = [(cx + c * (x - cx) - s * (y - cy), cy + s * (x - cx) + c * (y - cy))
                for x, y in seg.polygon]
        out.append(make_segment(seg.id, seg.parent_object, poly))
    return out


def _seg_dist(p, a, b):
    ab = np.subtract(b, a)
    t = np.clip(np.dot(np.subtract(p, a), ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(np.subtract(p, np.add(a, t * ab))))


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def brute_force_distance(pa, pb):
    """Minimum over all edge pairs, zero if any edges cross or one contains the other."""
    best = math.inf
    na, nb = len(pa), len(pb)
    for i in range(na):
        a0, a1 = pa[i], pa[(i + 1) % na]
        for j in range(nb):
            b0, b1 = pb[j], pb[(j + 1) % nb]
            d1, d2 = _cross(a0, a1, b0), _cross(a0, a1, b1)
            d3, d4 = _cross(b0, b1, a0), _cross(b0, b1, a1)
            if d1 * d2 < 0 and d3 * d4 < 0:
                return 0.0
            best = min(best, _seg_dist(a0, b0, b1), _seg_dist(a1, b0, b1),
                       _seg_dist(b0, a0, a1), _seg_dist(b1, a0, a1))
    if all(_cross(pa[i], pa[(i + 1) % na], pb[0]) >= 0 for i in range(na)):
        return 0.0
    if all(_cross(pb[j], pb[(j + 1) % nb], pa[0]) >= 0 for j in range(nb)):
        return 0.0
    return best


def naive_conv(x, W, b):
    """'same' 3x3 (or kxk) convolution on a (C, H, W) array with explicit loops."""
    c_in, h, w = x.shape
    c_out, _, k, _ = W.shape
    p = k // 2
    out = np.zeros((c_out, h, w))
    for o in range(c_out):
        for i in range(h):
            for j in range(w):
                acc = b[o]
                for c in range(c_in):
                    for di in range(k):
                        for dj in range(k):
                            ii, jj = i + di - p, j + dj - p
                            if 0 <= ii < h and 0 <= jj < w:
                                acc += W[o, c, di, dj] * x[c, ii, jj]
                out[o, i, j] = acc
    return out


def naive_pool(x, s):
    c, h, w = x.shape
    out = np.zeros((c, h // s, w // s))
    for ch in range(c):
        for i in range(h // s):
            for j in range(w // s):
                best = -np.inf
                for a in range(s):
                    for b in range(s):
                        best = max(best, x[ch, i * s + a, j * s + b])
                out[ch, i, j] = best
    return out


def naive_forward(arch, weights, image):
    """Single-image forward pass written with plain loops, float64 throughout."""
    x = np.asarray(image, dtype=np.float64)[None]
    for L, w in zip(arch, weights):
        if L.kind == "convolution":
            x = naive_conv(x, w["W"].astype(np.float64), w["b"].astype(np.float64))
        elif L.kind == "relu":
            x = np.where(x > 0, x, 0.0)
        elif L.kind == "max_pool":
            x = naive_pool(x, L.pool)
        elif L.kind == "flatten":
            x = x.reshape(-1)
        elif L.kind == "fully_connected":
            W, bb = w["W"].astype(np.float64), w["b"].astype(np.float64)
            y = np.zeros(W.shape[1])
            for u in range(W.shape[1]):
                acc = bb[u]
                for i in range(W.shape[0]):
                    acc += x[i] * W[i, u]
                y[u] = acc
            x = y
        elif L.kind == "sigmoid":
            x = 1.0 / (1.0 + np.exp(-x))
    return float(x[0])


def textbook_adam(grad_fn, w0, steps, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Plain-Python Adam on a list of floats."""
    w = list(w0)
    m = [0.0] * len(w)
    v = [0.0] * len(w)
    for t in range(1, steps + 1):
        g = grad_fn(w)
        for i in range(len(w)):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] ** 2
            mh = m[i] / (1 - b1 ** t)
            vh = v[i] / (1 - b2 ** t)
            w[i] -= lr * mh / (math.sqrt(vh) + eps)
    return w


def equivariance_fraction(scene, segments, handle, phi, view, tol=4 / 255):
    """Share of o_res pixels unchanged when the scene turns by ``phi`` about the push start.

    Turning the world by -phi (clockwise) turns the image by +phi because the
    image v axis points down, so the proposal angle gains +phi.
    """
    from singulate.encoder import encode
    from singulate.perception import render
    from singulate.proposals import PushProposal, to_proposals, wrap_angle

    p = to_proposals([handle], view)[0]
    e1 = encode(render(scene, segments, view), p).pixels
    segs2 = rotate_segments(segments, handle.position, -phi)
    e2 = encode(render(scene, segs2, view), PushProposal(p.c, wrap_angle(p.alpha + phi), handle)).pixels
    return float(np.mean(np.abs(e1 - e2) <= tol))


def activation_pattern(params, x):
    """ReLU on/off masks and max-pool winners for a batch: the piecewise-linear region."""
    from singulate.network import model

    _, _, caches = model._run(params, model._as_batch(params, x), keep=True)
    out = []
    for L, c in zip(params.arch, caches):
        if L.kind == "relu":
            out.append(c.copy())
        elif L.kind == "max_pool":
            out.extend(m.copy() for m in c[0])
    return out


def finite_difference_check(params, x, y, n_coords, rng, h=1e-4, max_draws=None):
    """Central differences on random coordinates, skipping kink crossings.

    A coordinate counts only when the activation pattern at +h and -h is the
    one at the base point, so the loss is smooth over the whole stencil.
    Returns ``(worst relative error, coordinates checked, coordinates skipped)``.
    """
    from singulate.network.model import loss_and_gradients

    _, grads = loss_and_gradients(params, x, y)
    base = activation_pattern(params, x)
    slots = [(i, k) for i, w in enumerate(params.weights) for k in w]
    sizes = np.array([params.weights[i][k].size for i, k in slots], dtype=float)
    order = list(range(len(slots)))  # every tensor first, then size-weighted draws
    worst, checked, skipped = 0.0, 0, 0
    max_draws = max_draws or 20 * n_coords
    while checked < n_coords and checked + skipped < max_draws:
        s = order.pop(0) if order else int(rng.choice(len(slots), p=sizes / sizes.sum()))
        i, k = slots[s]
        arr = params.weights[i][k]
        idx = np.unravel_index(int(rng.integers(arr.size)), arr.shape)
        old = arr[idx]
        arr[idx] = old + h
        lp, _ = loss_and_gradients(params, x, y)
        same = all(np.array_equal(a, b) for a, b in zip(base, activation_pattern(params, x)))
        arr[idx] = old - h
        lm, _ = loss_and_gradients(params, x, y)
        same = same and all(np.array_equal(a, b) for a, b in zip(base, activation_pattern(params, x)))
        arr[idx] = old
        if not same:
            skipped += 1
            continue
        a, n = float(grads[i][k][idx]), (lp - lm) / (2 * h)
        worst = max(worst, abs(a - n) / max(abs(a), abs(n), 1e-8))
        checked += 1
    return worst, checked, skipped
