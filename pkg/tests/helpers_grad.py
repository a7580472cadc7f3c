"""Shared finite-difference oracles for gradient verification."""

import numpy as np

from layoutpref.neural import forward, init_params

H = 1e-4


def naive_conv(x, w, b, stride, padding):
    """Independent nested-loop cross-correlation oracle."""
    n, c, h, wdt = x.shape
    oc, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - k) // stride + 1
    ow = (wdt + 2 * padding - k) // stride + 1
    out = np.zeros((n, oc, oh, ow))
    for bi in range(n):
        for o in range(oc):
            for yy in range(oh):
                for xx in range(ow):
                    acc = 0.0
                    for ci in range(c):
                        for i in range(k):
                            for j in range(k):
                                acc += xp[bi, ci, yy * stride + i, xx * stride + j] * w[o, ci, i, j]
                    out[bi, o, yy, xx] = acc + b[o]
    return out


def weighted_output_loss(spec, params, x, direction):
    out, _ = forward(spec, params, x)
    return float((out * direction).sum())


def fd_param_grads(spec, params, x, direction):
    """Central finite differences for every parameter element."""
    fd = [{k: np.zeros_like(v) for k, v in layer.items()} for layer in params]
    for i, layer in enumerate(params):
        for key, arr in layer.items():
            flat = arr.reshape(-1)
            for t in range(flat.size):
                orig = flat[t]
                flat[t] = orig + H
                up = weighted_output_loss(spec, params, x, direction)
                flat[t] = orig - H
                down = weighted_output_loss(spec, params, x, direction)
                flat[t] = orig
                fd[i][key].reshape(-1)[t] = (up - down) / (2 * H)
    return fd


def fd_input_grad(spec, params, x, direction):
    fd = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_fd = fd.reshape(-1)
    for t in range(flat_x.size):
        orig = flat_x[t]
        flat_x[t] = orig + H
        up = weighted_output_loss(spec, params, x, direction)
        flat_x[t] = orig - H
        down = weighted_output_loss(spec, params, x, direction)
        flat_x[t] = orig
        flat_fd[t] = (up - down) / (2 * H)
    return fd


def max_rel_err(a, b):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float((np.abs(a - b) / denom).max())


def check_gradients(spec, x_seed=0):
    """Worst elementwise relative error between analytic and FD gradients."""
    from layoutpref.neural import backward

    rng = np.random.default_rng(x_seed)
    params = init_params(spec)
    x = rng.normal(size=(2,) + tuple(spec.input_shape))
    out, caches = forward(spec, params, x)
    direction = rng.normal(size=out.shape)
    grads, dx = backward(spec, params, caches, direction)
    fd = fd_param_grads(spec, params, x, direction)
    worst = 0.0
    for i in range(len(params)):
        for key in params[i]:
            worst = max(worst, max_rel_err(grads[i][key], fd[i][key]))
    worst = max(worst, max_rel_err(dx, fd_input_grad(spec, params, x, direction)))
    return worst
