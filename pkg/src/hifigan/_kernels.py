"""Raw numpy kernels for 1-D convolution and its adjoint.

All kernels work on ``[batch, channels, length]`` arrays and are written as
im2col + GEMM so the heavy lifting lands in BLAS. Reductions over the batch
and time axes happen inside a single GEMM call in a fixed order, so results
do not depend on how many BLAS threads are active beyond BLAS's own
(deterministic, per-call) blocking.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def conv_out_len(length, kernel, stride=1, padding=0, dilation=1):
    return (length + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def conv_transpose_out_len(length, kernel, stride=1, padding=0):
    return (length - 1) * stride - 2 * padding + kernel


def im2col(xp, kernel, stride, dilation, out_len):
    """[B, C, Lp] -> contiguous [B, C, K, Lout] window stack."""
    b, c, _ = xp.shape
    s0, s1, s2 = xp.strides
    view = as_strided(
        xp,
        shape=(b, c, kernel, out_len),
        strides=(s0, s1, s2 * dilation, s2 * stride),
        writeable=False,
    )
    return np.ascontiguousarray(view)


def col2im(cols, padded_len, stride, dilation):
    """Adjoint of :func:`im2col`: scatter-add [B, C, K, Lout] into [B, C, Lp]."""
    b, c, kernel, out_len = cols.shape
    out = np.zeros((b, c, padded_len), dtype=cols.dtype)
    span = stride * (out_len - 1) + 1
    for k in range(kernel):
        start = k * dilation
        out[:, :, start:start + span:stride] += cols[:, :, k, :]
    return out


def _pad_time(x, left, right):
    if left == 0 and right == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (left, right)))


def _cols_cm(xp, kernel, stride, dilation, out_len):
    """[B, C, Lp] -> contiguous channel-major window stack [C, K, B, Lout].

    Putting the batch next to time lets one GEMM per group cover every batch
    item, which matters when the batch is large and Lout is short (the
    period-folded views of the multi-period discriminator).
    """
    b, c, _ = xp.shape
    s0, s1, s2 = xp.strides
    view = as_strided(xp, shape=(c, kernel, b, out_len),
                      strides=(s1, s2 * dilation, s0, s2 * stride), writeable=False)
    return np.ascontiguousarray(view)


def _col2im_cm(gcols, bsz, padded_len, stride, dilation):
    """Adjoint of :func:`_cols_cm`: [C, K, B, Lout] -> [B, C, Lp]."""
    c, kernel, _, out_len = gcols.shape
    out = np.zeros((c, bsz, padded_len), dtype=gcols.dtype)
    span = stride * (out_len - 1) + 1
    for k in range(kernel):
        start = k * dilation
        out[:, :, start:start + span:stride] += gcols[:, k]
    return out.transpose(1, 0, 2)


def _cols_tm(xp, kernel, stride, dilation, out_len, groups):
    """[B, C, Lp] -> time-major window stack [G, B * Lout, C/G * K]."""
    b, c, _ = xp.shape
    cpg = c // groups
    s0, s1, s2 = xp.strides
    view = as_strided(xp, shape=(groups, b, out_len, cpg, kernel),
                      strides=(cpg * s1, s0, s2 * stride, s1, s2 * dilation), writeable=False)
    return np.ascontiguousarray(view).reshape(groups, b * out_len, cpg * kernel)


def conv1d_forward(x, w, b, stride, padding, dilation, groups):
    bsz, cin, length = x.shape
    cout, cpg, kernel = w.shape
    out_len = conv_out_len(length, kernel, stride, padding, dilation)
    xp = _pad_time(x, padding, padding)
    if groups > 1:
        # narrow per-group GEMMs run much faster with time as the long dimension
        m = cout // groups
        cols = _cols_tm(xp, kernel, stride, dilation, out_len, groups)
        y = np.matmul(cols, w.reshape(groups, m, cpg * kernel).transpose(0, 2, 1))
        y = y.reshape(groups, bsz, out_len, m).transpose(1, 0, 3, 2)
        y = np.ascontiguousarray(y).reshape(bsz, cout, out_len)
    elif bsz == 1:
        cols = im2col(xp, kernel, stride, dilation, out_len).reshape(groups, cpg * kernel, out_len)
        y = np.matmul(w.reshape(groups, cout // groups, cpg * kernel), cols)
        y = y.reshape(1, cout, out_len)
    else:
        cols = _cols_cm(xp, kernel, stride, dilation, out_len)
        cols = cols.reshape(groups, cpg * kernel, bsz * out_len)
        y = np.matmul(w.reshape(groups, cout // groups, cpg * kernel), cols)
        y = np.ascontiguousarray(y.reshape(cout, bsz, out_len).transpose(1, 0, 2))
    if b is not None:
        y += b[None, :, None]
    return y


def conv1d_backward(gy, x, w, stride, padding, dilation, groups,
                    need_x=True, need_w=True):
    bsz, cin, length = x.shape
    cout, cpg, kernel = w.shape
    out_len = gy.shape[-1]
    ck = cpg * kernel
    plen = length + 2 * padding
    # gradient columns laid out [groups, cout/groups, B * Lout]
    if bsz == 1:
        gyg = gy.reshape(groups, cout // groups, out_len)
    else:
        gyg = np.ascontiguousarray(gy.transpose(1, 0, 2)).reshape(groups, cout // groups,
                                                                  bsz * out_len)
    gx = gw = None
    if need_w:
        xp = _pad_time(x, padding, padding)
        if bsz == 1:
            cols = im2col(xp, kernel, stride, dilation, out_len)
        else:
            cols = _cols_cm(xp, kernel, stride, dilation, out_len)
        cols = cols.reshape(groups, ck, bsz * out_len)
        gw = np.matmul(gyg, cols.transpose(0, 2, 1)).reshape(w.shape)
    if need_x:
        wm = w.reshape(groups, cout // groups, ck)
        gcols = np.matmul(wm.transpose(0, 2, 1), gyg)
        if bsz == 1:
            gxp = col2im(gcols.reshape(1, cin, kernel, out_len), plen, stride, dilation)
        else:
            gxp = _col2im_cm(gcols.reshape(cin, kernel, bsz, out_len), bsz, plen, stride, dilation)
        gx = gxp[:, :, padding:padding + length]
        gx = np.ascontiguousarray(gx)
    return gx, gw


def conv_transpose1d_forward(x, w, b, stride, padding):
    bsz, cin, length = x.shape
    _, cout, kernel = w.shape
    wm = w.reshape(cin, cout * kernel)
    cols = np.matmul(wm.T, x).reshape(bsz, cout, kernel, length)
    full_len = (length - 1) * stride + kernel
    y = col2im(cols, full_len, stride, 1)
    if padding:
        y = y[:, :, padding:full_len - padding]
    y = np.ascontiguousarray(y)
    if b is not None:
        y += b[None, :, None]
    return y


def conv_transpose1d_backward(gy, x, w, stride, padding, need_x=True, need_w=True):
    bsz, cin, length = x.shape
    _, cout, kernel = w.shape
    gfull = _pad_time(gy, padding, padding)
    gcols = im2col(gfull, kernel, stride, 1, length).reshape(bsz, cout * kernel, length)
    gx = gw = None
    if need_x:
        gx = np.matmul(w.reshape(cin, cout * kernel), gcols)
    if need_w:
        if bsz == 1:
            gw = x[0] @ gcols[0].T
        else:
            xt = x.transpose(1, 0, 2).reshape(cin, bsz * length)
            gt = gcols.transpose(1, 0, 2).reshape(cout * kernel, bsz * length)
            gw = xt @ gt.T
        gw = gw.reshape(w.shape)
    return gx, gw


def avg_pool1d_forward(x, kernel, stride, padding):
    bsz, c, length = x.shape
    out_len = conv_out_len(length, kernel, stride, padding)
    xp = _pad_time(x, padding, padding)
    cols = im2col(xp, kernel, stride, 1, out_len)
    return cols.mean(axis=2)


def avg_pool1d_backward(gy, x_shape, kernel, stride, padding):
    bsz, c, length = x_shape
    out_len = gy.shape[-1]
    cols = np.broadcast_to((gy / kernel)[:, :, None, :], (bsz, c, kernel, out_len))
    gxp = col2im(np.ascontiguousarray(cols), length + 2 * padding, stride, 1)
    return gxp[:, :, padding:padding + length]
