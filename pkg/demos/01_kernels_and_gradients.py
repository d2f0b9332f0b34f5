"""Tour of the tensor core: a convolution, its transpose, and a gradient check.

Run: python demos/01_kernels_and_gradients.py
"""

import numpy as np

from hifigan import tensor as T
from hifigan.tensor import Tensor


def main():
    rng = np.random.default_rng(0)
    x = Tensor(np.array([[[1.0, 2.0, 3.0]]]))
    k = Tensor(np.array([[[1.0, 0.0, -1.0]]]))
    print("conv1d([1,2,3], [1,0,-1]) =", T.conv1d(x, k).data.ravel())

    up = T.conv_transpose1d(Tensor(np.array([[[2.0, 5.0]]])), Tensor(np.ones((1, 1, 2))), stride=2)
    print("conv_transpose1d([2,5], [1,1], stride 2) =", up.data.ravel())

    # conv_transpose1d is the adjoint of conv1d: <conv(x), y> == <x, convT(y)>
    w = rng.normal(size=(3, 2, 5))
    xs = rng.normal(size=(1, 2, 21))
    ys = rng.normal(size=(1, 3, 10))
    lhs = (T.conv1d(Tensor(xs), Tensor(w), stride=2, padding=1).data * ys).sum()
    rhs = (xs * T.conv_transpose1d(Tensor(ys), Tensor(w), stride=2, padding=1).data).sum()
    print(f"adjoint check: {lhs:.12f} vs {rhs:.12f}")

    # reverse-mode gradient against a central difference
    a = Tensor(rng.normal(size=(1, 2, 21)), requires_grad=True)
    loss = T.sum(T.tanh(T.conv1d(a, Tensor(w), stride=2, padding=1)))
    loss.backward()
    i = (0, 1, 7)
    eps = 1e-6
    bumped = a.data.copy()
    bumped[i] += eps
    up_val = T.sum(T.tanh(T.conv1d(Tensor(bumped), Tensor(w), stride=2, padding=1))).item()
    bumped[i] -= 2 * eps
    dn_val = T.sum(T.tanh(T.conv1d(Tensor(bumped), Tensor(w), stride=2, padding=1))).item()
    print(f"d loss / d x{i}: autodiff {a.grad[i]:.8f}, finite difference {(up_val - dn_val) / (2 * eps):.8f}")


if __name__ == "__main__":
    main()
