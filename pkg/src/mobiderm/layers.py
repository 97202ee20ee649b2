"""Layer objects over the functional primitives, with a recorded forward tape.

The network is a fixed chain, so no general graph autograd is needed: each
layer caches its forward input when asked to record, and ``backward`` walks
the chain in reverse, filling per-parameter gradients and returning the
gradient with respect to the chain input (used for saliency).
"""

from __future__ import annotations

import numpy as np

from . import ops


class Layer:
    """Base layer: named, optionally trainable, with a one-step tape."""

    def __init__(self, name: str, trainable: bool = False):
        self.name = name
        self.trainable = trainable
        self._cache: np.ndarray | None = None

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray, record: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _record(self, x: np.ndarray, record: bool):
        self._cache = x if record else None

    def _cached(self) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError(f"backward() on layer {self.name!r} without a recorded forward")
        return self._cache


class Conv2D(Layer):
    def __init__(self, name, kernel, stride=1, padding="same", bias=None, trainable=False):
        super().__init__(name, trainable)
        self.kernel = ops.as_tensor(kernel)
        self.stride = stride
        self.padding = padding
        self.bias = None if bias is None else ops.as_tensor(bias)
        self.dkernel = None
        self.dbias = None

    def _params(self):
        return ops.ConvParams(self.kernel, self.stride, self.padding, self.bias)

    def params(self):
        out = {f"{self.name}/kernel": self.kernel}
        if self.bias is not None:
            out[f"{self.name}/bias"] = self.bias
        return out

    def grads(self):
        out = {f"{self.name}/kernel": self.dkernel}
        if self.bias is not None:
            out[f"{self.name}/bias"] = self.dbias
        return out

    def forward(self, x, record=False):
        self._record(x, record)
        return ops.conv2d(x, self._params())

    def backward(self, dy):
        dx, self.dkernel, self.dbias = ops.conv2d_backward(dy, self._cached(), self._params())
        return dx


class DepthwiseConv2D(Conv2D):
    def forward(self, x, record=False):
        self._record(x, record)
        return ops.depthwise_conv2d(x, self._params())

    def backward(self, dy):
        dx, self.dkernel, self.dbias = ops.depthwise_conv2d_backward(
            dy, self._cached(), self._params()
        )
        return dx


class BatchNormInference(Layer):
    def __init__(self, name, gamma, beta, running_mean, running_var, epsilon=1e-3, trainable=False):
        super().__init__(name, trainable)
        self.gamma = ops.as_tensor(gamma)
        self.beta = ops.as_tensor(beta)
        self.running_mean = ops.as_tensor(running_mean)
        self.running_var = ops.as_tensor(running_var)
        self.epsilon = epsilon
        self.dgamma = None
        self.dbeta = None

    def _params(self):
        return ops.BatchNormParams(
            self.gamma, self.beta, self.running_mean, self.running_var, self.epsilon
        )

    def params(self):
        return {
            f"{self.name}/gamma": self.gamma,
            f"{self.name}/beta": self.beta,
            f"{self.name}/mean": self.running_mean,
            f"{self.name}/variance": self.running_var,
        }

    def grads(self):
        return {f"{self.name}/gamma": self.dgamma, f"{self.name}/beta": self.dbeta}

    def forward(self, x, record=False):
        self._record(x, record)
        return ops.batchnorm_infer(x, self._params())

    def backward(self, dy):
        dx, self.dgamma, self.dbeta = ops.batchnorm_infer_backward(dy, self._cached(), self._params())
        return dx


class ReLU6(Layer):
    def forward(self, x, record=False):
        self._record(x, record)
        return ops.relu6(x)

    def backward(self, dy):
        return ops.relu6_backward(dy, self._cached())


class GlobalAvgPool(Layer):
    def forward(self, x, record=False):
        self._record(x, record)
        return ops.global_avg_pool(x)

    def backward(self, dy):
        return ops.global_avg_pool_backward(dy, self._cached())


class Dense(Layer):
    def __init__(self, name, weights, bias, trainable=False):
        super().__init__(name, trainable)
        self.weights = ops.as_tensor(weights)
        self.bias = ops.as_tensor(bias)
        self.dweights = None
        self.dbias = None

    def params(self):
        return {f"{self.name}/weights": self.weights, f"{self.name}/bias": self.bias}

    def grads(self):
        return {f"{self.name}/weights": self.dweights, f"{self.name}/bias": self.dbias}

    def forward(self, x, record=False):
        self._record(x, record)
        return ops.dense(x, self.weights, self.bias)

    def backward(self, dy):
        dx, self.dweights, self.dbias = ops.dense_backward(dy, self._cached(), self.weights)
        return dx


class LayerChain:
    """A static sequence of layers run front to back, differentiated back to front."""

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x: np.ndarray, record: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, record=record)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        """Propagate dy back through the chain; returns d(chain input)."""
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self.layers:
            for key, value in layer.params().items():
                if key in out:
                    raise ValueError(f"duplicate parameter name {key!r}")
                out[key] = value
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for layer in self.layers:
            out.update(layer.grads())
        return out

    def sublayer(self, name: str) -> Layer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)
