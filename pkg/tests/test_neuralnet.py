import numpy as np
import pytest

from oracles import central_difference
from shiftext.neuralnet import (
    AdamState,
    Checkpoint,
    CheckpointError,
    ShapeError,
    adam_step,
    clone_params,
    forward,
    init_params,
    layer_sizes,
    mse_loss_and_gradient,
    params_equal,
)


def test_init_shapes_and_finite():
    p = init_params([12, 64, 64, 64, 64, 16], np.random.default_rng(0))
    assert layer_sizes(p) == [12, 64, 64, 64, 64, 16]
    assert all(np.all(np.isfinite(w)) and np.all(b == 0) for w, b in p)
    assert forward(p, np.zeros((5, 12))).shape == (5, 16)


def test_zero_net_outputs_zero():
    p = [(np.zeros((3, 4)), np.zeros(4)), (np.zeros((4, 2)), np.zeros(2))]
    assert np.all(forward(p, np.ones(3)) == 0.0)


def test_hand_computed_two_by_two():
    w1 = np.array([[1.0, -1.0], [2.0, 0.5]])
    b1 = np.array([0.0, 0.25])
    w2 = np.array([[1.0], [3.0]])
    b2 = np.array([-1.0])
    x = np.array([1.0, 1.0])
    # hidden pre-activation [3, -0.25] -> relu [3, 0] -> 3*1 + 0*3 - 1 = 2
    assert forward([(w1, b1), (w2, b2)], x) == pytest.approx([2.0])


def test_forward_rejects_wrong_width():
    p = init_params([3, 2], np.random.default_rng(0))
    with pytest.raises(ShapeError):
        forward(p, np.zeros(4))


def test_zero_error_gives_zero_gradient():
    rng = np.random.default_rng(1)
    p = init_params([4, 8, 3], rng)
    x = rng.normal(size=(6, 4))
    a = rng.integers(3, size=6)
    targets = forward(p, x)[np.arange(6), a]
    loss, grads = mse_loss_and_gradient(p, x, a, targets)
    assert loss == 0.0
    assert all(np.all(gw == 0) and np.all(gb == 0) for gw, gb in grads)


def test_linear_single_sample_closed_form():
    w = np.array([[0.5, -1.0], [2.0, 0.0]])
    b = np.array([0.1, 0.2])
    x = np.array([[1.0, 3.0]])
    q = x @ w + b  # action 0 -> 6.6
    loss, grads = mse_loss_and_gradient([(w, b)], x, np.array([0]), np.array([5.0]))
    err = q[0, 0] - 5.0
    assert loss == pytest.approx(err**2)
    assert grads[0][0] == pytest.approx(np.array([[2 * err * 1.0, 0.0], [2 * err * 3.0, 0.0]]))
    assert grads[0][1] == pytest.approx(np.array([2 * err, 0.0]))


@pytest.mark.parametrize("seed", range(6))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(2, 6)) for _ in range(int(rng.integers(2, 5)))] + [int(rng.integers(2, 5))]
    p = init_params(sizes, rng)
    for w, b in p:
        b += rng.normal(scale=0.1, size=b.shape)
    n = int(rng.integers(1, 8))
    x = rng.normal(size=(n, sizes[0]))
    a = rng.integers(sizes[-1], size=n)
    t = rng.normal(size=n)
    _, grads = mse_loss_and_gradient(p, x, a, t)
    num = central_difference(lambda: mse_loss_and_gradient(p, x, a, t)[0], p)
    for (gw, gb), (nw, nb) in zip(grads, num):
        np.testing.assert_allclose(gw, nw, rtol=1e-4, atol=1e-7)
        np.testing.assert_allclose(gb, nb, rtol=1e-4, atol=1e-7)


def test_empty_batch_rejected():
    p = init_params([2, 2], np.random.default_rng(0))
    with pytest.raises(ValueError):
        mse_loss_and_gradient(p, np.zeros((0, 2)), np.zeros(0, dtype=int), np.zeros(0))


def test_adam_zero_gradient_leaves_params():
    p = init_params([3, 4, 2], np.random.default_rng(0))
    before = clone_params(p)
    st = AdamState.zeros_like(p)
    adam_step(p, st, [(np.zeros_like(w), np.zeros_like(b)) for w, b in p])
    assert params_equal(p, before)
    assert st.step == 1


def test_adam_first_step_moves_by_learning_rate():
    p = [(np.array([[1.0]]), np.array([0.0]))]
    st = AdamState.zeros_like(p, lr=0.01)
    adam_step(p, st, [(np.array([[0.37]]), np.array([-5.0]))])
    assert p[0][0][0, 0] == pytest.approx(1.0 - 0.01, rel=1e-6)
    assert p[0][1][0] == pytest.approx(0.01, rel=1e-6)


def test_adam_descends_quadratic_bowl():
    p = [(np.array([[4.0]]), np.array([0.0]))]
    st = AdamState.zeros_like(p, lr=0.05)
    losses = []
    for _ in range(60):
        w = p[0][0]
        losses.append(float(w[0, 0] ** 2))
        adam_step(p, st, [(2 * w, np.zeros(1))])
    assert all(b < a for a, b in zip(losses[1:], losses[2:]))


def test_adam_shape_mismatch():
    p = init_params([3, 2], np.random.default_rng(0))
    st = AdamState.zeros_like(p)
    with pytest.raises(ShapeError):
        adam_step(p, st, [(np.zeros((2, 2)), np.zeros(2))])


def test_clone_independence():
    p = init_params([3, 4, 2], np.random.default_rng(0))
    c = clone_params(p)
    assert params_equal(c, p) and params_equal(clone_params(c), p)
    p[0][0][0, 0] += 1.0
    assert not params_equal(c, p)


def test_checkpoint_roundtrip_and_fingerprint(tmp_path):
    p = init_params([3, 5, 2], np.random.default_rng(0))
    st = AdamState.zeros_like(p)
    adam_step(p, st, [(np.ones_like(w), np.ones_like(b)) for w, b in p])
    Checkpoint(p, "abc", st, {"k": 1}).save(tmp_path / "c.json")
    back = Checkpoint.load(tmp_path / "c.json", expected_fingerprint="abc")
    assert params_equal(back.params, p) and back.adam.step == 1 and back.meta == {"k": 1}
    with pytest.raises(CheckpointError):
        Checkpoint.load(tmp_path / "c.json", expected_fingerprint="other")


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(CheckpointError):
        Checkpoint.load(tmp_path / "bad.json")
    (tmp_path / "v.json").write_text('{"version": 99}')
    with pytest.raises(CheckpointError):
        Checkpoint.load(tmp_path / "v.json")


def test_fits_frozen_teacher_regression():
    rng = np.random.default_rng(0)
    teacher = init_params([4, 8, 3], rng)
    student = init_params([4, 32, 32, 3], rng)
    st = AdamState.zeros_like(student, lr=0.003)
    x_all = rng.uniform(0, 1, size=(512, 4))
    y_all = forward(teacher, x_all)
    for _ in range(3000):
        idx = rng.integers(512, size=64)
        a = rng.integers(3, size=64)
        _, grads = mse_loss_and_gradient(student, x_all[idx], a, y_all[idx, a])
        adam_step(student, st, grads)
    mse = float(np.mean((forward(student, x_all) - y_all) ** 2))
    assert mse < 1e-3


def test_forward_is_pure():
    p = init_params([3, 4, 2], np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=(5, 3))
    before = clone_params(p)
    assert np.array_equal(forward(p, x), forward(p, x))
    assert params_equal(p, before)
