"""Minimal 1-D convolutional network with explicit forward/backward passes.

Written directly in numpy (float64) so that gradients can be verified
against finite differences, training is bitwise reproducible from a seed,
and relevance-propagation explainers can walk layer internals (weights,
padding geometry, pool winners) without framework introspection.

Sequence tensors are (batch, length, channels); dense tensors (batch, units).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Conv1D",
    "LeakyReLU",
    "MaxPool1D",
    "Flatten",
    "Dense",
    "Dropout",
    "Network",
    "Adam",
    "softmax",
    "cross_entropy_with_grad",
    "uniform_fan_in",
]


def uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def scatter_patches(values: np.ndarray, stride: int, padded_len: int) -> np.ndarray:
    """Accumulate per-patch values (n, out_len, kernel, C) onto the padded input.

    Within one kernel tap the target positions are distinct, so each tap is a
    single vectorized add; overlap between taps is handled by the loop.
    """
    n, out_len, kernel, channels = values.shape
    starts = np.arange(out_len) * stride
    out = np.zeros((n, padded_len, channels))
    for tap in range(kernel):
        out[:, starts + tap, :] += values[:, :, tap, :]
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_with_grad(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    loss = -float(log_probs[np.arange(n), labels].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


class Layer:
    trainable = False

    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv1D(Layer):
    """1-D convolution with zero 'same' padding and configurable stride.

    Weights are stored as (kernel * in_channels, out_channels) so the layer
    acts as a plain linear map over extracted patches; relevance rules reuse
    exactly that view.
    """

    trainable = True

    def __init__(self, kernel: int, in_channels: int, out_channels: int, stride: int,
                 rng: np.random.Generator | None = None, name: str = "conv"):
        self.kernel = kernel
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride
        self.name = name
        fan_in = kernel * in_channels
        rng = rng or np.random.default_rng(0)
        self.W = uniform_fan_in(rng, (fan_in, out_channels), fan_in)
        self.b = np.zeros(out_channels)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)
        self._cache: tuple | None = None

    def geometry(self, length: int) -> tuple[int, int, int]:
        """(output length, left pad, padded length) for an input length."""
        out_len = -(-length // self.stride)
        pad_total = max((out_len - 1) * self.stride + self.kernel - length, 0)
        pad_left = pad_total // 2
        return out_len, pad_left, length + pad_total

    def patch_index(self, length: int) -> np.ndarray:
        """(out_len, kernel) gather indices into the padded sequence."""
        out_len, _, _ = self.geometry(length)
        starts = np.arange(out_len) * self.stride
        return starts[:, None] + np.arange(self.kernel)[None, :]

    def extract_patches(self, x: np.ndarray) -> np.ndarray:
        """(N, L, C) -> (N, out_len, kernel * C), zero-padding outside edges."""
        n, length, _ = x.shape
        out_len, pad_left, padded_len = self.geometry(length)
        xp = np.zeros((n, padded_len, self.in_channels))
        xp[:, pad_left : pad_left + length, :] = x
        idx = self.patch_index(length)
        return xp[:, idx, :].reshape(n, out_len, self.kernel * self.in_channels)

    def forward(self, x, train=False, rng=None):
        patches = self.extract_patches(x)
        self._cache = (x.shape, patches)
        return patches @ self.W + self.b

    def backward(self, grad_out):
        (n, length, _), patches = self._cache
        self.gW += np.tensordot(patches, grad_out, axes=([0, 1], [0, 1]))
        self.gb += grad_out.sum(axis=(0, 1))
        grad_patches = (grad_out @ self.W.T).reshape(n, -1, self.kernel, self.in_channels)
        _, pad_left, padded_len = self.geometry(length)
        grad_padded = scatter_patches(grad_patches, self.stride, padded_len)
        return grad_padded[:, pad_left : pad_left + length, :]


class LeakyReLU(Layer):
    def __init__(self, slope: float = 0.01):
        self.slope = slope
        self._mask: np.ndarray | None = None

    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, self.slope * x)

    def backward(self, grad_out):
        return np.where(self._mask, grad_out, self.slope * grad_out)


class MaxPool1D(Layer):
    """Window-2, stride-2 max pooling; odd tail elements are dropped."""

    def __init__(self, width: int = 2):
        self.width = width
        self._cache: tuple | None = None

    def forward(self, x, train=False, rng=None):
        n, length, channels = x.shape
        out_len = length // self.width
        windows = x[:, : out_len * self.width, :].reshape(n, out_len, self.width, channels)
        argmax = windows.argmax(axis=2)
        self._cache = (x.shape, argmax)
        return np.take_along_axis(windows, argmax[:, :, None, :], axis=2).squeeze(axis=2)

    def backward(self, grad_out):
        (n, length, channels), argmax = self._cache
        out_len = grad_out.shape[1]
        grad_windows = np.zeros((n, out_len, self.width, channels))
        np.put_along_axis(grad_windows, argmax[:, :, None, :], grad_out[:, :, None, :], axis=2)
        grad = np.zeros((n, length, channels))
        grad[:, : out_len * self.width, :] = grad_windows.reshape(n, out_len * self.width, channels)
        return grad

    @property
    def last_argmax(self) -> np.ndarray:
        return self._cache[1]

    @property
    def last_input_shape(self) -> tuple[int, ...]:
        return self._cache[0]


class Flatten(Layer):
    def __init__(self):
        self._shape: tuple[int, ...] | None = None

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._shape)


class Dense(Layer):
    trainable = True

    def __init__(self, in_units: int, out_units: int,
                 rng: np.random.Generator | None = None, name: str = "dense"):
        self.name = name
        rng = rng or np.random.default_rng(0)
        self.W = uniform_fan_in(rng, (in_units, out_units), in_units)
        self.b = np.zeros(out_units)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)
        self._x: np.ndarray | None = None

    def forward(self, x, train=False, rng=None):
        self._x = x
        return x @ self.W + self.b

    def backward(self, grad_out):
        self.gW += self._x.T @ grad_out
        self.gb += grad_out.sum(axis=0)
        return grad_out @ self.W.T


class Dropout(Layer):
    """Inverted dropout; identity outside training so inference is bitwise stable."""

    def __init__(self, rate: float):
        self.rate = rate
        self._mask: np.ndarray | None = None

    def forward(self, x, train=False, rng=None):
        if not train or self.rate <= 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("training dropout requires an rng")
        self._mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad_out):
        return grad_out if self._mask is None else grad_out * self._mask


class Network:
    """Ordered layer stack with an L2 weight penalty on all trainable layers."""

    def __init__(self, layers: list[Layer], l2_strength: float = 0.0):
        self.layers = layers
        self.l2_strength = l2_strength

    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def forward_trace(self, x: np.ndarray) -> tuple[np.ndarray, list[tuple[Layer, np.ndarray]]]:
        """Inference pass that records each layer's input (explainer support)."""
        trace: list[tuple[Layer, np.ndarray]] = []
        for layer in self.layers:
            trace.append((layer, x))
            x = layer.forward(x, train=False)
        return x, trace

    def trainable_layers(self) -> list[Conv1D | Dense]:
        return [l for l in self.layers if l.trainable]  # type: ignore[list-item]

    def zero_grads(self) -> None:
        for layer in self.trainable_layers():
            layer.gW[...] = 0.0
            layer.gb[...] = 0.0

    def l2_penalty(self) -> float:
        return self.l2_strength * sum(float((l.W ** 2).sum()) for l in self.trainable_layers())

    def loss_with_grads(self, x: np.ndarray, labels: np.ndarray,
                        train: bool = False, rng: np.random.Generator | None = None,
                        decay_scale: float = 1.0) -> float:
        """Loss (data + decay_scale * L2) with consistent parameter gradients.

        decay_scale < 1 lets a training loop spread the weight penalty over
        the mini-batches of one epoch; loss and gradients stay coherent at
        any scale, so finite-difference checks hold for every value.
        """
        self.zero_grads()
        logits = self.forward(x, train=train, rng=rng)
        loss, grad = cross_entropy_with_grad(logits, labels)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        for layer in self.trainable_layers():
            layer.gW += 2.0 * decay_scale * self.l2_strength * layer.W
        return loss + decay_scale * self.l2_penalty()

    def parameters(self) -> list[tuple[np.ndarray, np.ndarray]]:
        params = []
        for layer in self.trainable_layers():
            params.append((layer.W, layer.gW))
            params.append((layer.b, layer.gb))
        return params


class Adam:
    def __init__(self, network: Network, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.network = network
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p) for p, _ in network.parameters()]
        self._v = [np.zeros_like(p) for p, _ in network.parameters()]

    def step(self) -> None:
        self.t += 1
        for i, (param, grad) in enumerate(self.network.parameters()):
            self._m[i] = self.beta1 * self._m[i] + (1 - self.beta1) * grad
            self._v[i] = self.beta2 * self._v[i] + (1 - self.beta2) * grad * grad
            m_hat = self._m[i] / (1 - self.beta1 ** self.t)
            v_hat = self._v[i] / (1 - self.beta2 ** self.t)
            param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
