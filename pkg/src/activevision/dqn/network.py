"""Convolutional Q-network in plain numpy, with hand-written backprop.

Observations come in channels-first ``(N, C, H, W)``; internally everything
is channels-last so im2col is a set of contiguous slice copies. Conv weights
are stored ``(K, K, C_in, F)`` and the flatten before fc1 is in (H, W, C)
order.

    conv 32 5x5/2 + ReLU -> maxpool 2x2/2 -> conv 64 3x3/2 + ReLU
    -> conv 64 3x3/2 + ReLU -> fc 512 + ReLU -> fc n_actions (linear)

All convolutions and the pool use "same" padding, so every spatial size
is ``ceil(size / stride)``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import ConfigurationError

PARAM_ORDER = ("conv1.w", "conv1.b", "conv2.w", "conv2.b", "conv3.w", "conv3.b",
               "fc1.w", "fc1.b", "out.w", "out.b")

CONV_LAYERS = (("conv1", 32, 5, 2), ("conv2", 64, 3, 2), ("conv3", 64, 3, 2))
POOL = (2, 2)
HIDDEN = 512


def same_out(size, stride):
    return -(-size // stride)


def _same_pad(size, k, stride):
    out = same_out(size, stride)
    total = max((out - 1) * stride + k - size, 0)
    return out, total // 2, total - total // 2


@dataclass(frozen=True)
class Architecture:
    height: int
    width: int
    stack: int
    n_actions: int

    def shapes(self):
        """Per-stage activation shapes (C, H, W), input first, then flat sizes."""
        c, h, w = self.stack, self.height, self.width
        out = [(c, h, w)]
        h, w, c = same_out(h, 2), same_out(w, 2), 32
        out.append((c, h, w))
        h, w = same_out(h, POOL[1]), same_out(w, POOL[1])
        out.append((c, h, w))
        for _, filters, _, stride in CONV_LAYERS[1:]:
            h, w, c = same_out(h, stride), same_out(w, stride), filters
            out.append((c, h, w))
        flat = c * h * w
        return out, flat

    def param_shapes(self):
        stages, flat = self.shapes()
        chans = [self.stack, 32, 64]
        shapes = {}
        for (name, filters, k, _), cin in zip(CONV_LAYERS, chans):
            shapes[f"{name}.w"] = (k, k, cin, filters)
            shapes[f"{name}.b"] = (filters,)
        shapes["fc1.w"] = (flat, HIDDEN)
        shapes["fc1.b"] = (HIDDEN,)
        shapes["out.w"] = (HIDDEN, self.n_actions)
        shapes["out.b"] = (self.n_actions,)
        return {k: shapes[k] for k in PARAM_ORDER}

    def n_params(self):
        return sum(int(np.prod(s)) for s in self.param_shapes().values())

    def digest(self):
        desc = {"layers": [list(l) for l in CONV_LAYERS], "pool": list(POOL), "hidden": HIDDEN,
                "padding": "same", "input": [self.stack, self.height, self.width],
                "n_actions": self.n_actions}
        return hashlib.sha256(json.dumps(desc, sort_keys=True).encode()).digest()[:16]


def init_params(arch: Architecture, rng, dtype=np.float32):
    """He-uniform weights for ReLU layers, fan-in uniform output layer, zero biases."""
    params = {}
    for name, shape in arch.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        fan_in = int(np.prod(shape[:3])) if name.startswith("conv") else shape[0]
        bound = math.sqrt(6.0 / fan_in) if not name.startswith("out") else 1.0 / math.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return params


def zeros_like_params(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def flatten_params(params):
    return np.concatenate([params[k].ravel() for k in PARAM_ORDER])


def unflatten_params(vec, arch: Architecture, dtype=np.float32):
    out, pos = {}, 0
    for name, shape in arch.param_shapes().items():
        n = int(np.prod(shape))
        out[name] = np.asarray(vec[pos:pos + n], dtype=dtype).reshape(shape).copy()
        pos += n
    if pos != len(vec):
        raise ConfigurationError("parameters", f"expected {pos} values, got {len(vec)}")
    return out


# -- layers (channels-last internally) ------------------------------------

def conv_forward(x, w, b, stride):
    """x (N, H, W, C), w (K, K, C, F) -> (N, oh, ow, F)."""
    n, h, wd, c = x.shape
    k, _, _, f = w.shape
    oh, pt, pb = _same_pad(h, k, stride)
    ow, pl, pr = _same_pad(wd, k, stride)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x
    sn, sh, sw, sc = xp.strides
    win = as_strided(xp, (n, oh, ow, k, k, c), (sn, stride * sh, stride * sw, sh, sw, sc), writeable=False)
    cols = win.reshape(n * oh * ow, k * k * c)
    out = cols @ w.reshape(-1, f) + b
    return out.reshape(n, oh, ow, f), (x.shape, cols, (pt, pb, pl, pr), stride)


def conv_backward(dout, w, cache, need_dx=True):
    (n, h, wd, c), cols, (pt, pb, pl, pr), stride = cache
    k, _, _, f = w.shape
    _, oh, ow, _ = dout.shape
    d2 = dout.reshape(-1, f)
    dw = (cols.T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (d2 @ w.reshape(-1, f).T).reshape(n, oh, ow, k, k, c)
    dxp = np.zeros((n, h + pt + pb, wd + pl + pr, c), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + stride * oh:stride, j:j + stride * ow:stride, :] += dcols[:, :, :, i, j, :]
    return dxp[:, pt:pt + h, pl:pl + wd, :], dw, db


def pool_forward(x, size=2, stride=2):
    """Non-overlapping max pool, x (N, H, W, C)."""
    if size != stride:
        raise ConfigurationError("pool", "only non-overlapping pooling is supported")
    n, h, w, c = x.shape
    oh, pt, pb = _same_pad(h, size, stride)
    ow, pl, pr = _same_pad(w, size, stride)
    xp = x
    if pt or pb or pl or pr:
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)), constant_values=-np.inf)
    win = xp.reshape(n, oh, size, ow, size, c)
    out = win.max(axis=(2, 4))
    return out, (x.shape, win, out, (pt, pb, pl, pr))


def pool_backward(dout, cache):
    # ties only occur between exact zeros from the ReLU below, whose
    # gradient is masked there anyway
    (n, h, w, c), win, out, (pt, pb, pl, pr) = cache
    mask = win == out[:, :, None, :, None, :]
    dwin = mask * dout[:, :, None, :, None, :]
    _, oh, size, ow, _, _ = win.shape
    dxp = dwin.reshape(n, oh * size, ow * size, c)
    return dxp[:, pt:pt + h, pl:pl + w, :]


# -- network -------------------------------------------------------------

def to_nhwc(x):
    """(N, C, H, W) or (C, H, W) observation stacks -> (N, H, W, C)."""
    if x.ndim == 3:
        x = x[None]
    return np.ascontiguousarray(x.transpose(0, 2, 3, 1))


def q_forward(params, x, keep=False):
    """Q-values (N, n_actions) for a batch ``x`` of shape (N, C, H, W), or (n_actions,) for (C, H, W).

    ``x`` is expected already scaled to [0, 1]; uint8 input is scaled here.
    """
    single = x.ndim == 3
    w1 = params["conv1.w"]
    if x.shape[-3] != w1.shape[2]:
        raise ConfigurationError("stack", f"input has {x.shape[-3]} channels, network expects {w1.shape[2]}")
    if x.dtype == np.uint8:
        x = x.astype(w1.dtype) * w1.dtype.type(1 / 255)
    x = to_nhwc(x.astype(w1.dtype, copy=False))
    z1, c1 = conv_forward(x, w1, params["conv1.b"], 2)
    a1 = np.maximum(z1, 0)
    p1, cp = pool_forward(a1)
    z2, c2 = conv_forward(p1, params["conv2.w"], params["conv2.b"], 2)
    a2 = np.maximum(z2, 0)
    z3, c3 = conv_forward(a2, params["conv3.w"], params["conv3.b"], 2)
    a3 = np.maximum(z3, 0)
    flat = a3.reshape(len(x), -1)
    if flat.shape[1] != params["fc1.w"].shape[0]:
        raise ConfigurationError("input", f"flattened size {flat.shape[1]} does not match fc1 "
                                          f"input {params['fc1.w'].shape[0]}")
    z4 = flat @ params["fc1.w"] + params["fc1.b"]
    a4 = np.maximum(z4, 0)
    q = a4 @ params["out.w"] + params["out.b"]
    if keep:
        return q, (c1, z1, cp, c2, z2, c3, z3, a3.shape, flat, z4, a4)
    return q[0] if single else q


def q_backward(params, caches, dq):
    """Gradients of a scalar loss w.r.t. every parameter, given dL/dQ (N, n_actions)."""
    c1, z1, cp, c2, z2, c3, z3, a3_shape, flat, z4, a4 = caches
    dq = dq.astype(a4.dtype, copy=False)
    g = {}
    g["out.w"] = a4.T @ dq
    g["out.b"] = dq.sum(axis=0)
    dz4 = (dq @ params["out.w"].T) * (z4 > 0)
    g["fc1.w"] = flat.T @ dz4
    g["fc1.b"] = dz4.sum(axis=0)
    dz3 = (dz4 @ params["fc1.w"].T).reshape(a3_shape) * (z3 > 0)
    da2, g["conv3.w"], g["conv3.b"] = conv_backward(dz3, params["conv3.w"], c3)
    dz2 = da2 * (z2 > 0)
    dp1, g["conv2.w"], g["conv2.b"] = conv_backward(dz2, params["conv2.w"], c2)
    dz1 = pool_backward(dp1, cp) * (z1 > 0)
    _, g["conv1.w"], g["conv1.b"] = conv_backward(dz1, params["conv1.w"], c1, need_dx=False)
    return {k: g[k] for k in PARAM_ORDER}


def layer_shapes(params, x):
    """Activation shapes (H, W, C) after every stage for input ``x`` (N, C, H, W)."""
    x = to_nhwc(x.astype(params["conv1.w"].dtype))
    z1, _ = conv_forward(x, params["conv1.w"], params["conv1.b"], 2)
    p1, _ = pool_forward(z1)
    z2, _ = conv_forward(p1, params["conv2.w"], params["conv2.b"], 2)
    z3, _ = conv_forward(z2, params["conv3.w"], params["conv3.b"], 2)
    flat = z3.reshape(len(x), -1)
    h = flat @ params["fc1.w"]
    q = h @ params["out.w"]
    return [z1.shape[1:], p1.shape[1:], z2.shape[1:], z3.shape[1:], flat.shape[1:], h.shape[1:], q.shape[1:]]
