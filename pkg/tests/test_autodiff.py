"""Tape autodiff tests: every primitive against central finite differences."""
import numpy as np
import pytest

from exploitlab import autodiff as ad


def fd_check(fn, *arrays, eps=1e-6, tol=1e-7):
    """Compare analytic gradients of sum(fn(*tensors)) with central FD."""
    tensors = [ad.Tensor(a.astype(np.float64), requires_grad=True)
               for a in arrays]
    out = ad.tsum(fn(*tensors))
    out.backward()
    for t in tensors:
        flat = t.data.reshape(-1)
        grad = np.zeros_like(t.grad).reshape(-1) if t.grad is None \
            else t.grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            with ad.no_grad():
                flat[i] = orig + eps
                hi = float(ad.tsum(fn(*tensors)).data)
                flat[i] = orig - eps
                lo = float(ad.tsum(fn(*tensors)).data)
                flat[i] = orig
            fd = (hi - lo) / (2 * eps)
            assert abs(fd - grad[i]) < tol * max(1.0, abs(fd)), \
                f"coord {i}: fd={fd} analytic={grad[i]}"


RNG = np.random.default_rng(0)


def test_add_mul_broadcasting():
    a = RNG.normal(size=(3, 4))
    b = RNG.normal(size=(4,))
    fd_check(lambda x, y: ad.add(x, y), a, b)
    fd_check(lambda x, y: ad.mul(x, y), a, b)


def test_matmul():
    fd_check(lambda x, y: ad.matmul(x, y),
             RNG.normal(size=(3, 4)), RNG.normal(size=(4, 2)))


def test_batched_matmul():
    fd_check(lambda x, y: ad.matmul(x, y),
             RNG.normal(size=(2, 3, 4)), RNG.normal(size=(2, 4, 2)))


def test_relu_exp_log_power():
    a = RNG.normal(size=(5,)) + 3.0  # away from relu kink and log pole
    fd_check(ad.relu, a)
    fd_check(ad.exp, RNG.normal(size=(5,)))
    fd_check(ad.log, a)
    fd_check(lambda x: ad.power(x, 3.0), RNG.normal(size=(5,)))


def test_sum_mean_axes():
    a = RNG.normal(size=(3, 4))
    fd_check(lambda x: ad.tsum(x, axis=1), a)
    fd_check(lambda x: ad.mean(x, axis=0, keepdims=True), a)


def test_reshape_swapaxes_concat():
    a = RNG.normal(size=(2, 6))
    fd_check(lambda x: ad.reshape(x, (3, 4)), a)
    fd_check(lambda x: ad.swapaxes(x, 0, 1), a)
    fd_check(lambda x, y: ad.concat([x, y], axis=1), a, RNG.normal(size=(2, 3)))


def test_gather_accumulates_repeats():
    table = RNG.normal(size=(4, 3))
    idx = np.array([0, 2, 0, 0])
    fd_check(lambda t: ad.gather(t, idx), table)


def test_take():
    a = RNG.normal(size=(4, 3))
    idx = (np.arange(4), np.array([0, 2, 1, 2]))
    fd_check(lambda x: ad.take(x, idx), a)


def test_maximum_minimum_clip():
    a = RNG.normal(size=(6,))
    b = RNG.normal(size=(6,))
    fd_check(lambda x, y: ad.maximum(x, y), a, b)
    fd_check(lambda x, y: ad.minimum(x, y), a, b)
    fd_check(lambda x: ad.clip(x, -0.5, 0.5), a * 2)


def test_layer_norm_fused():
    x = RNG.normal(size=(2, 8))
    g = RNG.normal(size=(8,))
    b = RNG.normal(size=(8,))
    fd_check(lambda xx, gg, bb: ad.layer_norm(xx, gg, bb), x, g, b)


def test_softmax_and_log_softmax_fused():
    x = RNG.normal(size=(3, 5))
    w = RNG.normal(size=(3, 5))
    # weight the outputs so the gradient is not the trivial all-ones case
    fd_check(lambda xx: ad.mul(ad.softmax(xx, axis=-1), w), x)
    fd_check(lambda xx: ad.mul(ad.log_softmax(xx, axis=-1), w), x)


def test_softmax_rows_sum_to_one():
    x = ad.Tensor(RNG.normal(size=(4, 6)) * 10)
    y = ad.softmax(x, axis=-1)
    assert np.allclose(y.data.sum(axis=-1), 1.0)
    assert np.allclose(np.exp(ad.log_softmax(x, axis=-1).data), y.data)


def test_dropout_train_and_eval():
    x = ad.Tensor(np.ones((1000,)), requires_grad=True)
    rng = np.random.default_rng(0)
    out = ad.dropout(x, 0.25, rng, train_mode=True)
    kept = out.data != 0.0
    assert 0.65 < kept.mean() < 0.85
    assert np.allclose(out.data[kept], 1.0 / 0.75)
    ad.tsum(out).backward()
    assert np.allclose(x.grad[~kept], 0.0)
    ident = ad.dropout(x, 0.25, rng, train_mode=False)
    assert ident is x or np.array_equal(ident.data, x.data)


def test_constants_adopt_tensor_dtype():
    x = ad.Tensor(np.ones((3,), dtype=np.float32), requires_grad=True)
    for out in (ad.add(x, 1.0), ad.mul(x, 0.5), x - 0.25, x / 2.0):
        assert out.data.dtype == np.float32
    ad.tsum(ad.mul(ad.add(x, 1.0), 2.0)).backward()
    assert x.grad.dtype == np.float32


def test_backward_accumulates_through_reuse():
    x = ad.Tensor(np.array([2.0]), requires_grad=True)
    y = ad.add(ad.mul(x, x), ad.mul(x, 3.0))  # x^2 + 3x
    y.backward()
    assert x.grad[0] == pytest.approx(2 * 2.0 + 3.0)


def test_backward_requires_scalar():
    x = ad.Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ad.AutodiffError):
        ad.mul(x, 2.0).backward()


def test_no_grad_suppresses_tape():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        y = ad.mul(x, 2.0)
    assert not y.requires_grad


def test_parameters_and_zero_grads():
    tree = {"a": ad.Tensor(np.ones(2), requires_grad=True),
            "sub": {"b": ad.Tensor(np.ones(3), requires_grad=True)}}
    params = ad.parameters(tree)
    assert len(params) == 2
    tree["a"].grad = np.ones(2)
    ad.zero_grads(tree)
    assert tree["a"].grad is None
