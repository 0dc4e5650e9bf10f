"""Slow, obviously-correct reference implementations used only by the tests."""
import itertools
import math

import numpy as np


def conv2d_loops(x, w, b, stride):
    """x (C, H, W), w (Co, Ci, kh, kw); zero "same" padding."""
    c, h, wd = x.shape
    co, ci, kh, kw = w.shape
    sh, sw = stride
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    ho, wo = math.ceil(h / sh), math.ceil(wd / sw)
    out = np.zeros((co, ho, wo))
    for o, i, j in itertools.product(range(co), range(ho), range(wo)):
        acc = b[o] if b is not None else 0.0
        for cc, u, v in itertools.product(range(ci), range(kh), range(kw)):
            y, xx = i * sh + u - ph, j * sw + v - pw
            if 0 <= y < h and 0 <= xx < wd:
                acc += w[o, cc, u, v] * x[cc, y, xx]
        out[o, i, j] = acc
    return out


def conv3d_loops(x, w, b, stride):
    """x (C, L, H, W), w (Co, Ci, kd, kh, kw); valid in time, same in space."""
    c, l, h, wd = x.shape
    co, ci, kd, kh, kw = w.shape
    st, sh, sw = stride
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    lo = (l - kd) // st + 1
    ho, wo = math.ceil(h / sh), math.ceil(wd / sw)
    out = np.zeros((co, lo, ho, wo))
    for o, t, i, j in itertools.product(range(co), range(lo), range(ho), range(wo)):
        acc = b[o]
        for cc, d, u, v in itertools.product(range(ci), range(kd), range(kh), range(kw)):
            y, xx = i * sh + u - ph, j * sw + v - pw
            if 0 <= y < h and 0 <= xx < wd:
                acc += w[o, cc, d, u, v] * x[cc, t * st + d, y, xx]
        out[o, t, i, j] = acc
    return out


def conv2d_matrix(in_shape, w, stride):
    """Dense matrix of the bias-free conv2d acting on flattened inputs."""
    n = int(np.prod(in_shape))
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        cols.append(conv2d_loops(e.reshape(in_shape), w, None, stride).ravel())
    return np.stack(cols, axis=1)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def convlstm_numpy(x, h, c, w, b):
    gates = conv2d_loops(np.concatenate([x, h]), w, b, (1, 1))
    i, f, o, g = np.split(gates, 4)
    c2 = sigmoid(f) * c + sigmoid(i) * np.tanh(g)
    return sigmoid(o) * np.tanh(c2), c2


def auc_pairs(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def runs_scan(scores, threshold, merge_gap):
    idx = [i for i, s in enumerate(scores) if s >= threshold]
    out = []
    for i in idx:
        if out and (i == out[-1][1] + 1 or i - out[-1][1] - 1 < merge_gap):
            out[-1] = (out[-1][0], i)
        else:
            out.append((i, i))
    return out
