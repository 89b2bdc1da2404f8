"""Tour of the reverse-mode engine: building expressions, reading
gradients back, and verifying an adjoint with finite differences."""

import numpy as np

from urgentbayes.autodiff import (
    Parameter,
    Tensor,
    affine,
    backward,
    grad_check,
    matmul,
    sigmoid,
    softmax_stable,
    tanh_op,
)


def main():
    print("== scalar chain ==")
    x = Parameter(np.array([[2.0]]), "x")
    y = tanh_op(x * 0.5) * 3.0
    backward(y.sum())
    # d/dx 3 tanh(x/2) = 1.5 (1 - tanh^2(x/2))
    expected = 1.5 * (1.0 - np.tanh(1.0) ** 2)
    print(f"value {y.item():.6f}, grad {x.grad[0, 0]:.6f} (closed form {expected:.6f})")

    print("\n== a tiny layer, gradients for every parameter ==")
    rng = np.random.default_rng(0)
    inputs = Tensor(rng.standard_normal((4, 3)))
    weight = Parameter(rng.standard_normal((3, 2)) * 0.5, "weight")
    bias = Parameter(np.zeros(2), "bias")
    out = sigmoid(affine(inputs, weight, bias))
    loss = (out * out).mean()
    backward(loss)
    print(f"loss {loss.item():.6f}")
    print(f"weight grad norm {np.linalg.norm(weight.grad):.6f}")
    print(f"bias grad        {bias.grad}")

    print("\n== the same check the shipping suite runs ==")
    a = Parameter(rng.uniform(-1, 1, (3, 4)), "a")
    b = Parameter(rng.uniform(-1, 1, (4, 2)), "b")
    # weight the softmax output: the raw row sum is constant 1, which
    # would leave nothing for the check to differentiate
    w = Tensor(rng.uniform(-1, 1, (3, 2)))
    report = grad_check(lambda: (softmax_stable(matmul(a, b), axis=1) * w).sum(), [a, b])
    print(report.summary())


if __name__ == "__main__":
    main()
