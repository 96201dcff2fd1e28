"""Slow, obviously-correct reference implementations used only by tests."""

import numpy as np

from signrobust import nn


def naive_matmul(a, b):
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def naive_conv2d(x, w, b, pad):
    """Cross-correlation of one (C, H, W) image, zero padding ``pad``."""
    c, h, wd = x.shape
    f, _, k, _ = w.shape
    xp = np.zeros((c, h + 2 * pad, wd + 2 * pad))
    xp[:, pad:pad + h, pad:pad + wd] = x
    ho, wo = h + 2 * pad - k + 1, wd + 2 * pad - k + 1
    out = np.zeros((f, ho, wo))
    for o in range(f):
        for i in range(ho):
            for j in range(wo):
                out[o, i, j] = np.sum(xp[:, i:i + k, j:j + k] * w[o]) + b[o]
    return out


def naive_loss(logits, label):
    p = np.exp(logits) / np.sum(np.exp(logits))
    return -np.log(p[label])


def naive_bilinear(img, out_side):
    """Per-pixel bilinear resampling, half-pixel centres, clamped coordinates."""
    h, w, ch = img.shape
    out = np.zeros((out_side, out_side, ch))
    for i in range(out_side):
        for j in range(out_side):
            y = min(max((i + 0.5) * h / out_side - 0.5, 0.0), h - 1)
            x = min(max((j + 0.5) * w / out_side - 0.5, 0.0), w - 1)
            y0, x0 = int(np.floor(y)), int(np.floor(x))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            dy, dx = y - y0, x - x0
            out[i, j] = ((1 - dy) * (1 - dx) * img[y0, x0] + (1 - dy) * dx * img[y0, x1]
                         + dy * (1 - dx) * img[y1, x0] + dy * dx * img[y1, x1])
    return out


def _pattern(trace):
    """Which ReLU units are active and which pool inputs win."""
    parts = []
    for spec, cache in zip(trace.layers, trace.caches):
        if spec.kind == nn.RELU:
            parts.append(cache)
        elif spec.kind == nn.MAXPOOL:
            parts.append(cache[1])
    return parts


def _same_pattern(a, b):
    return all(np.array_equal(p, q) for p, q in zip(a, b))


def finite_difference_check(model, x, label, h=1e-5, floor=1e-6):
    """Compare analytic gradients with central differences.

    Coordinates where the +-h probe changes a ReLU mask or pool winner sit on
    a kink of the piecewise-linear network and are skipped. Returns
    ``(max_relative_error, n_checked, n_skipped)``.
    """
    logits, trace = nn.forward(model, x)
    base = _pattern(trace)
    pgrads, xgrad = nn.backward(model, trace, label)

    def probe(m, inp):
        z, tr = nn.forward(m, inp)
        return nn.loss(z, label), _pattern(tr)

    worst, checked, skipped = 0.0, 0, 0

    def compare(analytic, f_plus, f_minus):
        nonlocal worst, checked, skipped
        (lp, pp), (lm, pm) = f_plus, f_minus
        if not (_same_pattern(pp, base) and _same_pattern(pm, base)):
            skipped += 1
            return
        numeric = (lp - lm) / (2 * h)
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        worst = max(worst, rel)
        checked += 1

    for pi, p in enumerate(model.params):
        for idx in np.ndindex(p.shape):
            plus = [q.copy() for q in model.params]
            minus = [q.copy() for q in model.params]
            plus[pi][idx] += h
            minus[pi][idx] -= h
            compare(pgrads[pi][idx], probe(model.with_params(plus), x),
                    probe(model.with_params(minus), x))
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        compare(xgrad[idx], probe(model, xp), probe(model, xm))
    return worst, checked, skipped
