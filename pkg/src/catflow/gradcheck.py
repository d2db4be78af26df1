"""Central finite-difference checking of analytic gradients."""

from __future__ import annotations

import numpy as np

from .tensor import REGISTERED_OPS, Tensor, backward, tsum

__all__ = ["finite_difference_grad", "check_gradients", "check_registered_op"]


def finite_difference_grad(f, xs: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Central differences of a scalar function of several arrays."""
    grads = []
    for i, x in enumerate(xs):
        g = np.zeros_like(x, dtype=np.float64)
        flat = x.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            hi = f(xs)
            flat[j] = orig - h
            lo = f(xs)
            flat[j] = orig
            gflat[j] = (hi - lo) / (2.0 * h)
        grads.append(g)
    return grads


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b) / denom))


def check_gradients(apply_fn, xs: list[np.ndarray], h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``apply_fn`` maps a list of Tensors to a scalar Tensor. Inputs are checked
    one coordinate at a time, so keep them small.
    """
    leaves = [Tensor(x.copy(), requires_grad=True) for x in xs]
    out = apply_fn(leaves)
    backward(out)
    analytic = [np.array(p.grad) for p in leaves]

    def numeric_f(arrays):
        ts = [Tensor(a) for a in arrays]
        return apply_fn(ts).item()

    numeric = finite_difference_grad(numeric_f, [x.copy() for x in xs], h=h)
    return max(_rel_err(a, n) for a, n in zip(analytic, numeric))


def check_registered_op(name: str, rng: np.random.Generator, trials: int = 100, tol: float = 1e-4) -> float:
    """Run the gradient check for one registry entry; returns the worst error."""
    if name not in REGISTERED_OPS:
        raise KeyError(f"unknown op {name!r}; registered: {sorted(REGISTERED_OPS)}")
    sample, apply_op = REGISTERED_OPS[name]
    worst = 0.0
    for _ in range(trials):
        xs = sample(rng)
        weights = [rng.uniform(-1.0, 1.0, size=np.shape(apply_op([Tensor(x) for x in xs]).data))]

        def scalarize(ts, w=weights[0]):
            return tsum(apply_op(ts) * w)

        err = check_gradients(scalarize, xs)
        worst = max(worst, err)
        if err > tol:
            raise AssertionError(f"op {name!r} failed gradient check: rel err {err:.3e} > {tol}")
    return worst
