import numpy as np
import pytest

from fuzzlab.nn import LSTM, Conv2D, Dense, Embedding, MaxPool2D, ReLU, Sequential, bce_with_logits, hinge, sigmoid

EPS = 1e-6
TOL = 1e-3


def numeric_grad(f, array):
    """Central differences of scalar f() with respect to every entry of array."""
    grad = np.zeros_like(array)
    for idx in np.ndindex(array.shape):
        old = array[idx]
        array[idx] = old + EPS
        up = f()
        array[idx] = old - EPS
        down = f()
        array[idx] = old
        grad[idx] = (up - down) / (2 * EPS)
    return grad


def check_layer(layer, x, check_input=True):
    rng = np.random.default_rng(99)
    out = layer.forward(x)
    weights = rng.normal(size=out.shape)

    def loss():
        return float((layer.forward(x) * weights).sum())

    layer.forward(x)
    dx = layer.backward(weights)
    for name, param in layer.params.items():
        analytic = layer.grads[name].copy()
        assert np.max(np.abs(numeric_grad(loss, param) - analytic)) < TOL, name
    if check_input:
        assert np.max(np.abs(numeric_grad(loss, x) - dx)) < TOL


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def test_dense_gradients(rng):
    check_layer(Dense(5, 3, rng), rng.normal(size=(4, 5)))


def test_relu_gradients(rng):
    x = rng.normal(size=(3, 6))
    x[np.abs(x) < 0.01] = 0.5  # keep away from the kink
    check_layer(ReLU(), x)


def test_conv_gradients(rng):
    check_layer(Conv2D(2, 3, 3, rng), rng.normal(size=(2, 2, 5, 4)))


def test_conv_keeps_spatial_size(rng):
    out = Conv2D(1, 4, 3, rng).forward(rng.normal(size=(2, 1, 8, 40)))
    assert out.shape == (2, 4, 8, 40)


def test_conv_rejects_even_kernel(rng):
    with pytest.raises(ValueError):
        Conv2D(1, 1, 2, rng)


def test_maxpool_gradients(rng):
    check_layer(MaxPool2D(), rng.normal(size=(2, 2, 5, 6)))


def test_maxpool_values():
    x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
    assert MaxPool2D().forward(x)[0, 0].tolist() == [[5.0, 7.0], [13.0, 15.0]]


def test_lstm_gradients(rng):
    check_layer(LSTM(3, 4, rng), rng.normal(size=(2, 5, 3)))


def test_embedding_gradients(rng):
    """Repeated ids accumulate into the same row."""
    layer = Embedding(4, 3, rng)
    ids = np.array([[0, 2, 2], [3, 2, 1]])
    check_layer(layer, ids, check_input=False)


def test_stacked_network_gradients(rng):
    net = Sequential([Dense(4, 6, rng), ReLU(), Dense(6, 1, rng)])
    x = rng.normal(size=(5, 4))
    y = np.array([0.0, 1.0, 1.0, 0.0, 1.0])

    def loss():
        return bce_with_logits(net.forward(x), y)[0]

    _, grad = bce_with_logits(net.forward(x), y)
    net.backward(grad)
    for param, analytic in net.param_grads():
        assert np.max(np.abs(numeric_grad(loss, param) - analytic)) < TOL


def test_sigmoid_is_stable():
    out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert out.tolist() == [0.0, 0.5, 1.0]


def test_bce_gradient(rng):
    z = rng.normal(size=(6, 1))
    y = np.array([0, 1, 1, 0, 0, 1], dtype=np.float64)
    _, grad = bce_with_logits(z, y)
    numeric = numeric_grad(lambda: bce_with_logits(z, y)[0], z)
    assert np.max(np.abs(numeric - grad)) < TOL


def test_hinge_loss():
    z = np.array([[2.0], [0.5], [-3.0]])
    y = np.array([1.0, 1.0, 1.0])
    loss, grad = hinge(z, y)
    assert loss == pytest.approx((0 + 0.5 + 4.0) / 3)
    assert grad.reshape(-1).tolist() == pytest.approx([0.0, -1 / 3, -1 / 3])
