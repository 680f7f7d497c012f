"""Small numpy layers with explicit forward and backward passes.

Every layer keeps what its backward pass needs from the last forward call.
Parameters and their gradients live in per-layer dicts keyed by name.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    r = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-r, r, size=shape)


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.params["W"] = uniform_init(rng, (n_in, n_out), n_in)
        self.params["b"] = uniform_init(rng, (n_out,), n_in)

    def forward(self, x):
        self.x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, grad):
        self.grads["W"] = self.x.T @ grad
        self.grads["b"] = grad.sum(axis=0)
        return grad @ self.params["W"].T


class ReLU(Layer):
    def forward(self, x):
        self.mask = x > 0
        return x * self.mask

    def backward(self, grad):
        return grad * self.mask


class Flatten(Layer):
    def forward(self, x):
        self.shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self.shape)


class Conv2D(Layer):
    """Stride-1 'same' convolution over (N, C, H, W) inputs, via im2col."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator):
        super().__init__()
        if kernel % 2 == 0:
            raise ValueError("same padding needs an odd kernel")
        fan_in = c_in * kernel * kernel
        self.kernel = kernel
        self.params["W"] = uniform_init(rng, (c_out, c_in, kernel, kernel), fan_in)
        self.params["b"] = uniform_init(rng, (c_out,), fan_in)

    def forward(self, x):
        n, c, h, w = x.shape
        p = self.kernel // 2
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        windows = sliding_window_view(xp, (self.kernel, self.kernel), axis=(2, 3))
        # (N, C, H, W, k, k) -> (N*H*W, C*k*k)
        self.cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, -1)
        self.in_shape = x.shape
        weights = self.params["W"].reshape(self.params["W"].shape[0], -1)
        out = self.cols @ weights.T + self.params["b"]
        return out.reshape(n, h, w, -1).transpose(0, 3, 1, 2)

    def backward(self, grad):
        n, c, h, w = self.in_shape
        k, p = self.kernel, self.kernel // 2
        f = grad.shape[1]
        g = grad.transpose(0, 2, 3, 1).reshape(-1, f)
        weights = self.params["W"].reshape(f, -1)
        self.grads["W"] = (g.T @ self.cols).reshape(self.params["W"].shape)
        self.grads["b"] = g.sum(axis=0)
        dcols = (g @ weights).reshape(n, h, w, c, k, k)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + h, j : j + w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, p : p + h, p : p + w]


class MaxPool2D(Layer):
    """2x2 max pooling; odd trailing rows and columns are dropped."""

    def forward(self, x):
        n, c, h, w = x.shape
        self.in_shape = x.shape
        h2, w2 = h // 2, w // 2
        blocks = x[:, :, : 2 * h2, : 2 * w2].reshape(n, c, h2, 2, w2, 2)
        blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
        self.argmax = blocks.argmax(axis=-1)
        return np.take_along_axis(blocks, self.argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        n, c, h, w = self.in_shape
        h2, w2 = h // 2, w // 2
        d = np.zeros((n, c, h2, w2, 4))
        np.put_along_axis(d, self.argmax[..., None], grad[..., None], axis=-1)
        d = d.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
        out = np.zeros(self.in_shape)
        out[:, :, : 2 * h2, : 2 * w2] = d
        return out


class Embedding(Layer):
    def __init__(self, vocab: int, dim: int, rng: np.random.Generator):
        super().__init__()
        self.params["E"] = uniform_init(rng, (vocab, dim), dim)

    def forward(self, x):
        self.ids = x.astype(np.int64)
        return self.params["E"][self.ids]

    def backward(self, grad):
        d = np.zeros_like(self.params["E"])
        np.add.at(d, self.ids, grad)
        self.grads["E"] = d
        return np.zeros(self.ids.shape)


class LSTM(Layer):
    """Single LSTM layer returning the last hidden state. Gate order i, f, o, g."""

    def __init__(self, n_in: int, units: int, rng: np.random.Generator):
        super().__init__()
        self.units = units
        self.params["Wx"] = uniform_init(rng, (n_in, 4 * units), units)
        self.params["Wh"] = uniform_init(rng, (units, 4 * units), units)
        b = uniform_init(rng, (4 * units,), units)
        b[units : 2 * units] += 1.0  # forget gate starts open
        self.params["b"] = b

    def forward(self, x):
        n, t, _ = x.shape
        u = self.units
        h = np.zeros((n, u))
        c = np.zeros((n, u))
        self.x = x
        self.cache = []
        for step in range(t):
            z = x[:, step] @ self.params["Wx"] + h @ self.params["Wh"] + self.params["b"]
            i = sigmoid(z[:, :u])
            f = sigmoid(z[:, u : 2 * u])
            o = sigmoid(z[:, 2 * u : 3 * u])
            g = np.tanh(z[:, 3 * u :])
            c_next = f * c + i * g
            h_next = o * np.tanh(c_next)
            self.cache.append((h, c, i, f, o, g, c_next))
            h, c = h_next, c_next
        return h

    def backward(self, grad):
        dWx = np.zeros_like(self.params["Wx"])
        dWh = np.zeros_like(self.params["Wh"])
        db = np.zeros_like(self.params["b"])
        dx = np.zeros_like(self.x)
        dh, dc = grad, np.zeros_like(grad)
        for step in reversed(range(self.x.shape[1])):
            h_prev, c_prev, i, f, o, g, c = self.cache[step]
            tc = np.tanh(c)
            do = dh * tc
            dc = dc + dh * o * (1 - tc**2)
            dz = np.concatenate(
                [
                    dc * g * i * (1 - i),
                    dc * c_prev * f * (1 - f),
                    do * o * (1 - o),
                    dc * i * (1 - g**2),
                ],
                axis=1,
            )
            dWx += self.x[:, step].T @ dz
            dWh += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, step] = dz @ self.params["Wx"].T
            dh = dz @ self.params["Wh"].T
            dc = dc * f
        self.grads.update(Wx=dWx, Wh=dWh, b=db)
        return dx


class Sequential:
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad: np.ndarray) -> None:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        return [
            (f"{i}.{type(layer).__name__}.{name}", value)
            for i, layer in enumerate(self.layers)
            for name, value in layer.params.items()
        ]

    def param_grads(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [
            (layer.params[name], layer.grads[name])
            for layer in self.layers
            for name in layer.params
        ]


def bce_with_logits(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy of sigmoid(z) against y, and its gradient in z."""
    z = z.reshape(-1)
    loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    grad = (sigmoid(z) - y) / len(y)
    return float(loss.mean()), grad.reshape(-1, 1)


def hinge(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean hinge loss for labels y in {0, 1}, and its subgradient in z."""
    s = 2.0 * y - 1.0
    margin = s * z.reshape(-1)
    active = margin < 1
    loss = np.where(active, 1 - margin, 0.0)
    grad = np.where(active, -s, 0.0) / len(y)
    return float(loss.mean()), grad.reshape(-1, 1)
