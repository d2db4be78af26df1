import math

import numpy as np
import pytest

from catflow.optim import AdamW, EmaState, cosine_lr
from catflow.tensor import Tensor


def make_param(value):
    p = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
    return p


def test_zero_grad_zero_decay_is_identity():
    p = make_param([1.0, -2.0, 3.0])
    opt = AdamW([p], lr=0.1, weight_decay=0.0)
    p.grad = np.zeros(3)
    opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0, 3.0])


def test_single_scalar_step_matches_hand_calculation():
    # independent scalar arithmetic for one update of p=1, g=1, lr=0.1
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    m = (1 - b1) * 1.0
    v = (1 - b2) * 1.0
    mhat = m / (1 - b1**1)
    vhat = v / (1 - b2**1)
    expected = 1.0 - lr * mhat / (math.sqrt(vhat) + eps)

    p = make_param(1.0)
    opt = AdamW([p], lr=lr, weight_decay=0.0)
    p.grad = np.array(1.0)
    opt.step()
    assert float(p.data) == pytest.approx(expected, abs=1e-16)


def test_decay_applied_before_moment_update():
    p = make_param(2.0)
    opt = AdamW([p], lr=0.5, weight_decay=0.1)
    p.grad = np.array(0.0)
    opt.step()
    # only the decoupled decay moves the parameter when the gradient is zero
    assert float(p.data) == pytest.approx(2.0 - 0.5 * 0.1 * 2.0)


def test_nan_gradient_rejected_without_update():
    p = make_param([1.0, 2.0])
    opt = AdamW([p], lr=0.1)
    p.grad = np.array([np.nan, 0.0])
    with pytest.raises(ValueError, match="non-finite"):
        opt.step()
    np.testing.assert_array_equal(p.data, [1.0, 2.0])
    assert opt.step_count == 0


def test_paper_defaults():
    opt = AdamW([make_param(0.0)])
    assert opt.lr == pytest.approx(2e-4)
    assert opt.weight_decay == pytest.approx(1e-12)
    assert (opt.beta1, opt.beta2) == (0.9, 0.999)


def test_step_count_increments():
    p = make_param(1.0)
    opt = AdamW([p], lr=0.01)
    for i in range(3):
        p.grad = np.array(1.0)
        opt.step()
    assert opt.step_count == 3


def test_cosine_endpoints_and_midpoint():
    assert cosine_lr(0, 100, 3e-4) == pytest.approx(3e-4)
    assert cosine_lr(100, 100, 3e-4) == pytest.approx(0.0, abs=1e-19)
    assert cosine_lr(50, 100, 3e-4) == pytest.approx(1.5e-4)


def test_cosine_monotone_non_increasing():
    values = [cosine_lr(s, 500, 1.0) for s in range(501)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_cosine_rejects_bad_arguments():
    with pytest.raises(ValueError):
        cosine_lr(0, 0, 1.0)
    with pytest.raises(ValueError):
        cosine_lr(11, 10, 1.0)


def test_ema_decay_zero_tracks_params():
    p = make_param([1.0, 2.0])
    ema = EmaState([p], decay=0.0)
    p.data[...] = [5.0, 6.0]
    ema.update()
    np.testing.assert_array_equal(ema.shadow[0], [5.0, 6.0])


def test_ema_decay_one_never_moves():
    p = make_param([1.0, 2.0])
    ema = EmaState([p], decay=1.0)
    p.data[...] = [5.0, 6.0]
    ema.update()
    np.testing.assert_array_equal(ema.shadow[0], [1.0, 2.0])


def test_ema_half_decay_average():
    p = make_param(0.0)
    ema = EmaState([p], decay=0.5)
    p.data[...] = 1.0
    ema.update()
    assert float(ema.shadow[0]) == pytest.approx(0.5)


def test_ema_swap_roundtrip():
    p = make_param([1.0])
    ema = EmaState([p], decay=0.5)
    p.data[...] = [3.0]
    ema.update()  # shadow 2.0, live 3.0
    ema.swap()
    assert float(p.data) == pytest.approx(2.0)
    ema.swap()
    assert float(p.data) == pytest.approx(3.0)


def test_ema_shape_drift_rejected():
    p = make_param([1.0, 2.0])
    ema = EmaState([p], decay=0.9)
    p.data = np.zeros(3)
    with pytest.raises(ValueError, match="drift"):
        ema.update()


def test_ema_decay_range_validated():
    with pytest.raises(ValueError):
        EmaState([make_param(0.0)], decay=1.5)
