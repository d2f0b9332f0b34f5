"""Slow, obviously-correct reference implementations used as test oracles."""

import numpy as np

from hifigan import tensor as T
from hifigan.tensor import Tensor


def conv1d_loops(x, w, b=None, stride=1, padding=0, dilation=1, groups=1):
    bsz, cin, length = x.shape
    cout, cpg, k = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding)))
    lout = (length + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    y = np.zeros((bsz, cout, lout))
    per_out = cout // groups
    for n in range(bsz):
        for o in range(cout):
            g = o // per_out
            for t in range(lout):
                acc = 0.0
                for c in range(cpg):
                    for j in range(k):
                        acc += w[o, c, j] * xp[n, g * cpg + c, t * stride + j * dilation]
                y[n, o, t] = acc + (0.0 if b is None else b[o])
    return y


def conv_transpose1d_scatter(x, w, b=None, stride=1, padding=0):
    """Every input sample scatters a scaled copy of the kernel into the output."""
    bsz, cin, length = x.shape
    _, cout, k = w.shape
    full = (length - 1) * stride + k
    y = np.zeros((bsz, cout, full))
    for n in range(bsz):
        for i in range(cin):
            for t in range(length):
                y[n, :, t * stride:t * stride + k] += x[n, i, t] * w[i]
    y = y[:, :, padding:full - padding]
    if b is not None:
        y = y + b[None, :, None]
    return y


def avg_pool_loops(x, kernel, stride, padding):
    bsz, c, length = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding)))
    lout = (length + 2 * padding - kernel) // stride + 1
    y = np.zeros((bsz, c, lout))
    for t in range(lout):
        y[:, :, t] = xp[:, :, t * stride:t * stride + kernel].sum(axis=-1) / kernel
    return y


def dft(x):
    """Direct O(N^2) DFT over the last axis."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return x @ basis.T


def numeric_grad(fn, arrays, which, eps=1e-5, entries=None):
    """Central finite differences of scalar ``fn(*arrays)`` w.r.t. ``arrays[which]``.

    ``entries`` restricts the probe to those flat indices; the rest stay NaN.
    """
    base = [np.array(a, dtype=np.float64) for a in arrays]
    a = base[which]
    out = np.full(a.shape, np.nan)
    flat = range(a.size) if entries is None else entries
    for j in flat:
        i = np.unravel_index(j, a.shape)
        orig = a[i]
        a[i] = orig + eps
        fp = fn(*base)
        a[i] = orig - eps
        fm = fn(*base)
        a[i] = orig
        out[i] = (fp - fm) / (2 * eps)
    return out


def gradcheck(build, arrays, rtol=1e-4, eps=1e-5, seed=0, max_entries=None):
    """Compare reverse-mode gradients of ``build(*tensors)`` against finite differences.

    ``build`` may return any shape; it is contracted with a fixed random
    projection so every output element contributes. ``max_entries`` probes a
    random subset of each input. Raises AssertionError on mismatch and returns
    the worst error relative to the gradient scale.
    """
    rng = np.random.default_rng(seed)
    with T.default_dtype(np.float64):
        probe = build(*[Tensor(a) for a in arrays])
        proj = rng.normal(size=probe.shape)

        def scalar(*arrs):
            with T.no_grad():
                return float((build(*[Tensor(a) for a in arrs]).data * proj).sum())

        ts = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
        out = build(*ts)
        T.sum(T.mul(out, Tensor(proj))).backward()
    worst = 0.0
    for i, t in enumerate(ts):
        size = np.asarray(arrays[i]).size
        entries = None
        if max_entries is not None and size > max_entries:
            entries = rng.choice(size, max_entries, replace=False)
        num = numeric_grad(scalar, arrays, i, eps, entries).ravel()
        ana = (t.grad if t.grad is not None else np.zeros(t.shape)).ravel()
        keep = ~np.isnan(num)
        num, ana = num[keep], ana[keep]
        scale = max(np.abs(num).max(), np.abs(ana).max(), 1e-12)
        # relative per element; entries that are ~0 in both pass on an absolute floor
        ok = np.abs(ana - num) <= rtol * np.abs(num) + 1e-7 * scale
        if not ok.all():
            bad = int(np.argmax(~ok))
            raise AssertionError(f"input {i}: analytic {ana[bad]!r} vs numeric {num[bad]!r}")
        worst = max(worst, float(np.max(np.abs(ana - num)) / scale))
    return worst


def _stencil(loss_fn, flat, j, eps):
    orig = flat[j]
    vals = {}
    with T.no_grad():
        for m in (-2, -1, 1, 2):
            flat[j] = orig + m * eps
            vals[m] = loss_fn().item()
    flat[j] = orig
    return (8 * (vals[1] - vals[-1]) - (vals[2] - vals[-2])) / (12 * eps)


def param_gradcheck(loss_fn, params, rtol=1e-4, eps=1e-5, max_entries=8, seed=0):
    """Finite-difference check of ``loss_fn()`` (scalar Tensor) w.r.t. module parameters.

    Each parameter is perturbed in place on a random subset of entries with a
    five-point stencil. Leaky-ReLU kinks make the loss piecewise smooth; when
    the estimates at ``eps`` and ``eps / 10`` disagree a kink sits inside the
    stencil, so the step keeps shrinking until two estimates agree.
    """
    rng = np.random.default_rng(seed)
    for p in params:
        p.grad = None
    loss_fn().backward()
    for p in params:
        ana = p.grad.ravel().copy()
        flat = p.data.reshape(-1)
        scale = max(np.abs(ana).max(), 1e-12)
        idx = rng.choice(flat.size, min(max_entries, flat.size), replace=False)
        for j in idx:
            h = eps
            num = _stencil(loss_fn, flat, j, h)
            for _ in range(3):
                finer = _stencil(loss_fn, flat, j, h / 10)
                if abs(finer - num) <= rtol * abs(finer) + 1e-7 * scale:
                    break
                h, num = h / 10, finer
            if abs(ana[j] - num) > rtol * abs(num) + 1e-7 * scale:
                raise AssertionError(f"param entry {j}: analytic {ana[j]!r} vs numeric {num!r}")


def well_conditioned(module, rng):
    """Move a freshly built stack into a regime where finite differences are meaningful.

    At init the biases are zero and kernels tiny, so every pre-activation sits on
    the leaky-ReLU kink and deep gradients fall below round-off. Unit row gains
    and random biases fix both.
    """
    for name, p in module.named_parameters():
        if name.endswith(".b"):
            p.data[...] = rng.normal(0.0, 0.3, size=p.shape)
        elif name.endswith(".g"):
            p.data[...] = rng.uniform(0.8, 1.2, size=p.shape)
    return module
