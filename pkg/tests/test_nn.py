import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bipde import autodiff as ad
from bipde import container, nn
from bipde.autodiff import Tensor


def test_dense_identity_and_bias():
    layer = nn.Dense(3, 3)
    layer.W.data = np.eye(3)
    x = np.array([[1.0, -2.0, 3.0]])
    np.testing.assert_array_equal(layer(x).data, x)
    relu = nn.Dense(2, 2, "relu")
    relu.W.data = np.zeros((2, 2))
    relu.b.data = np.array([-1.0, 2.0])
    np.testing.assert_array_equal(relu(np.ones((1, 2))).data, [[0.0, 2.0]])


def test_dense_shape_mismatch():
    with pytest.raises(ad.ShapeError):
        nn.Dense(3, 2)(np.ones((1, 4)))


def test_dense_grad_check(rng):
    layer = nn.Dense(4, 3, "tanh", rng=rng)
    x0 = rng.normal(size=(2, 4))

    def f(ts):
        layer.W, layer.b = ts[1], ts[2]
        return ad.sum(ad.square(layer(ts[0])))
    assert ad.grad_check(f, [x0, layer.W.data.copy(), rng.normal(size=3)]) <= 1e-6


def test_scaled_sigmoid_examples():
    assert nn.scaled_sigmoid(0.0, 1.0, 3.0).item() == 2.0
    assert nn.scaled_sigmoid(1.0, 0.0, 1.0).item() == pytest.approx(0.7310586, abs=1e-7)
    assert nn.scaled_sigmoid(50.0, 1.0, 3.0).item() == pytest.approx(3.0)
    with pytest.raises(ValueError):
        nn.scaled_sigmoid(0.0, 2.0, 2.0)


@given(st.floats(-30, 30))
def test_property_scaled_sigmoid_inside_bounds(x):
    y = nn.scaled_sigmoid(np.array([x]), 0.5, 2.5).item()
    assert 0.5 < y < 2.5


def test_conv_zero_kernel_gives_bias(rng):
    conv = nn.Conv2D(1, 2, 3, rng=rng)
    conv.W.data = np.zeros_like(conv.W.data)
    conv.b.data = np.array([0.5, -1.0])
    out = conv(rng.normal(size=(1, 1, 5, 5))).data
    assert out.shape == (1, 2, 3, 3)
    np.testing.assert_array_equal(out[0, 0], 0.5)
    np.testing.assert_array_equal(out[0, 1], -1.0)


def test_conv2d_matches_scipy(rng):
    from scipy.signal import correlate2d
    conv = nn.Conv2D(2, 1, 3, rng=rng)
    x = rng.normal(size=(1, 2, 6, 5))
    expected = sum(correlate2d(x[0, c], conv.W.data[0, c], mode="valid") for c in range(2))
    np.testing.assert_allclose(conv(x).data[0, 0], expected + conv.b.data[0], atol=1e-12)


def test_conv1d_matches_numpy(rng):
    conv = nn.Conv1D(1, 1, 4, rng=rng)
    x = rng.normal(size=(1, 1, 10))
    expected = np.correlate(x[0, 0], conv.W.data[0, 0], mode="valid") + conv.b.data[0]
    np.testing.assert_allclose(conv(x).data[0, 0], expected, atol=1e-12)


@pytest.mark.parametrize("cls,shape", [(nn.Conv1D, (2, 2, 9)), (nn.Conv2D, (2, 2, 5, 6))])
def test_conv_grad_check(cls, shape, rng):
    conv = cls(2, 3, 3, "tanh", rng=rng)
    x0 = rng.normal(size=shape)

    def f(ts):
        conv.W, conv.b = ts[1], ts[2]
        return ad.sum(ad.square(conv(ts[0])))
    assert ad.grad_check(f, [x0, conv.W.data.copy(), rng.normal(size=3)]) <= 1e-5


def test_maxpool_example_and_ties():
    out = nn.maxpool(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), 2, 2)
    assert out.data.item() == 4.0
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    ad.backward(ad.sum(nn.maxpool(x, 2, 2)))
    np.testing.assert_array_equal(x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])


def test_pool_larger_than_input():
    with pytest.raises(ad.ShapeError):
        nn.maxpool(np.ones((1, 1, 1)), 2, 1)


@pytest.mark.parametrize("pool", [nn.maxpool, nn.avgpool])
@pytest.mark.parametrize("dims,shape", [(1, (2, 2, 9)), (2, (1, 2, 5, 4))])
def test_pool_grad_check(pool, dims, shape, rng):
    x0 = rng.normal(size=shape)
    assert ad.grad_check(lambda t: ad.sum(ad.square(pool(t, 2, dims))), x0) <= 1e-5


def test_avgpool_values():
    out = nn.avgpool(np.arange(6.0).reshape(1, 1, 6), 2, 1).data
    np.testing.assert_array_equal(out, [[[0.5, 2.5, 4.5]]])


def test_dropout_inference_identity(rng):
    x = rng.normal(size=(4, 5))
    np.testing.assert_array_equal(nn.dropout(x, 0.2, training=False).data, x)


def test_dropout_expectation():
    out = nn.dropout(np.full(100_000, 3.0), 0.2, True, np.random.default_rng(0)).data
    assert abs(out.mean() - 3.0) / 3.0 < 0.01
    assert np.isclose(np.mean(out == 0.0), 0.2, atol=0.01)


def test_dropout_grad_with_frozen_mask(rng):
    x0 = rng.normal(size=10)
    seed = 7
    f = lambda t: ad.sum(ad.square(nn.dropout(t, 0.3, True, np.random.default_rng(seed))))
    assert ad.grad_check(f, x0) <= 1e-5


def test_losses():
    assert nn.mse([1.0, 2.0], [1.0, 2.0]).item() == 0.0
    assert nn.mse([0.0, 2.0], [0.0, 0.0]).item() == 2.0
    assert nn.mae([1.0, -1.0], [0.0, 0.0]).item() == 1.0
    with pytest.raises(ad.ShapeError):
        nn.mse([1.0], [1.0, 2.0])


def test_adam_zero_grad_keeps_params():
    p = np.array([1.0, -2.0])
    state = nn.AdamState(np.zeros(2), np.zeros(2))
    np.testing.assert_array_equal(nn.adam_step([p], [np.zeros(2)], [state])[0], p)


def test_adam_first_step_closed_form():
    state = nn.AdamState(np.zeros(1), np.zeros(1))
    new = nn.adam_step([np.zeros(1)], [np.ones(1)], [state], lr=1e-3)[0]
    assert new[0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)
    assert state.t == 1


def test_adam_steps_shrink_for_constant_gradient():
    # with a constant gradient the first step is the largest
    state = nn.AdamState(np.zeros(1), np.zeros(1))
    p0 = np.zeros(1)
    p1 = nn.adam_step([p0], [np.ones(1)], [state])[0]
    p2 = nn.adam_step([p1], [np.ones(1)], [state])[0]
    assert abs(p2 - p1)[0] <= abs(p1 - p0)[0]


def test_adam_minimises_quadratic():
    x = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = nn.Adam([x], lr=0.1)
    for _ in range(300):
        ad.backward(ad.sum(ad.square(x)))
        opt.step()
    assert np.abs(x.data).max() < 1e-2


def test_build_encoder_shapes(rng):
    model = nn.build_encoder("c4,p,c8,a,f,d16,o", (1, 12, 12), 3, rng=rng)
    out = model(rng.normal(size=(2, 1, 12, 12))).data
    assert out.shape == (2, 3)
    assert np.all((out > 0) & (out < 1))
    with pytest.raises(ValueError):
        nn.build_encoder("x5", (4,), 1)
    with pytest.raises(ValueError):
        nn.build_encoder("c4:9", (1, 5), 1)


def _model(rng):
    return nn.build_encoder("c3,p,d5", (1, 10), 2, "scaled_sigmoid", (0.5, 2.0), rng=rng)


def test_checkpoint_round_trip(tmp_path, rng):
    model = _model(rng)
    x = rng.normal(size=(3, 1, 10))
    p1 = nn.save_checkpoint(model, tmp_path / "a.bin", {"note": "x"})
    loaded = nn.load_checkpoint(p1)
    assert loaded.meta == {"note": "x"}
    np.testing.assert_array_equal(loaded(x).data, model(x).data)
    p2 = nn.save_checkpoint(loaded, tmp_path / "b.bin", {"note": "x"})
    assert p1.read_bytes() == p2.read_bytes()
    np.testing.assert_array_equal(nn.checkpoint_from_bytes(p1.read_bytes())(x).data, model(x).data)


def test_checkpoint_shape_mismatch_diagnosed(rng):
    blob = nn.checkpoint_bytes(_model(rng))
    arrays, meta = container.loads(blob, container.CHECKPOINT_MAGIC)
    arrays["0.W"] = np.zeros((2, 2, 2))
    bad = container.dumps(container.CHECKPOINT_MAGIC, arrays, meta)
    with pytest.raises(container.ContainerError, match="declared shape"):
        nn.checkpoint_from_bytes(bad)


def test_checkpoint_rejects_dataset_file(rng):
    blob = container.dumps(container.DATASET_MAGIC, {}, {})
    with pytest.raises(container.ContainerError):
        nn.checkpoint_from_bytes(blob)


def test_parameter_table():
    table = nn.ParameterTable(3, 2, n_shared=1, init=[0.5, 1.0])
    out = table.forward(Tensor(np.zeros((3, 4))))
    np.testing.assert_array_equal(out.data, [[0.5, 1.0]] * 3)
    np.testing.assert_array_equal(table.forward(Tensor(np.zeros((1, 4))), index=[2]).data,
                                  [[0.5, 1.0]])
