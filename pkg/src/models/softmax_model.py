"""Softmax probability models with closed-form gradients."""

from typing import Optional, Sequence

import numpy as np

from src.enums.EArchitecture import EActivation, EArchitecture

DEFAULT_HIDDEN = (16, 16)


class SoftmaxModel:
    """
    Differentiable map from features to a probability simplex of size m.

    Two architectures share one flat parameter vector:
      - linear: logits = x W + b
      - mlp: input -> two hidden layers -> softmax output

    Parameters are laid out layer by layer as W (row-major, fan_in x fan_out)
    followed by b. Instances are immutable value objects; training produces
    new instances through with_parameters().
    """

    def __init__(
            self,
            input_dim: int,
            output_dim: int,
            architecture: EArchitecture = EArchitecture.LINEAR,
            hidden: Sequence[int] = DEFAULT_HIDDEN,
            activation: EActivation = EActivation.TANH,
            parameters: Optional[np.ndarray] = None,
    ):
        if input_dim < 1 or output_dim < 2:
            raise ValueError(f"Need input_dim >= 1 and output_dim >= 2, got {input_dim}, {output_dim}")
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        self.architecture = EArchitecture(architecture)
        self.activation = EActivation(activation)
        self.hidden = tuple(int(h) for h in hidden) if self.architecture is EArchitecture.MLP else ()
        if self.architecture is EArchitecture.MLP and len(self.hidden) != 2:
            raise ValueError(f"mlp expects two hidden layer sizes, got {self.hidden}")

        self.layer_sizes = [self.input_dim, *self.hidden, self.output_dim]
        self.shapes = list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))
        self.num_parameters = sum(fan_in * fan_out + fan_out for fan_in, fan_out in self.shapes)

        if parameters is None:
            parameters = np.zeros(self.num_parameters)
        parameters = np.asarray(parameters, dtype=float).reshape(-1)
        if parameters.shape[0] != self.num_parameters:
            raise ValueError(
                f"Parameter vector has length {parameters.shape[0]}, architecture needs {self.num_parameters}")
        self.parameters = parameters.copy()
        self.parameters.setflags(write=False)

    @classmethod
    def initialize(
            cls,
            input_dim: int,
            output_dim: int,
            rng: np.random.Generator,
            architecture: EArchitecture = EArchitecture.LINEAR,
            hidden: Sequence[int] = DEFAULT_HIDDEN,
            activation: EActivation = EActivation.TANH,
    ) -> 'SoftmaxModel':
        """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
        model = cls(input_dim, output_dim, architecture, hidden, activation)
        chunks = []
        for fan_in, fan_out in model.shapes:
            bound = 1.0 / np.sqrt(fan_in)
            chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
            chunks.append(np.zeros(fan_out))
        return model.with_parameters(np.concatenate(chunks))

    def with_parameters(self, parameters: np.ndarray) -> 'SoftmaxModel':
        return SoftmaxModel(
            self.input_dim, self.output_dim, self.architecture,
            self.hidden or DEFAULT_HIDDEN, self.activation, parameters,
        )

    def __repr__(self):
        return (f"<SoftmaxModel({self.architecture.value}, sizes={self.layer_sizes}, "
                f"activation={self.activation.value})>")

    def _unpack(self) -> list[tuple[np.ndarray, np.ndarray]]:
        layers = []
        offset = 0
        for fan_in, fan_out in self.shapes:
            w = self.parameters[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = self.parameters[offset:offset + fan_out]
            offset += fan_out
            layers.append((w, b))
        return layers

    def _activate(self, z: np.ndarray) -> np.ndarray:
        if self.activation is EActivation.TANH:
            return np.tanh(z)
        return np.maximum(z, 0.0)

    def _activation_grad(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        if self.activation is EActivation.TANH:
            return 1.0 - a * a
        return (z > 0.0).astype(float)

    def _check_features(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(1, -1)
        if features.shape[1] != self.input_dim:
            raise ValueError(f"Feature dimension {features.shape[1]} does not match model input {self.input_dim}")
        return features

    def _forward_cache(self, features: np.ndarray):
        layers = self._unpack()
        activations = [features]
        pre_activations = []
        h = features
        for w, b in layers[:-1]:
            z = h @ w + b
            h = self._activate(z)
            pre_activations.append(z)
            activations.append(h)
        w, b = layers[-1]
        logits = h @ w + b
        return logits, activations, pre_activations

    def logits(self, features: np.ndarray) -> np.ndarray:
        return self._forward_cache(self._check_features(features))[0]

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        """Row-wise softmax probabilities, N x m."""
        return _softmax(self.logits(features))

    def log_proba(self, features: np.ndarray) -> np.ndarray:
        return _log_softmax(self.logits(features))

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Probability vector of length m for a single feature vector."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("forward() expects a single feature vector")
        return self.predict_proba(x)[0]

    def backward(self, features: np.ndarray, grad_logits: np.ndarray) -> np.ndarray:
        """
        Backpropagate dF/dlogits (N x m) to the flat parameter gradient of F = sum over rows.

        Args:
            features: N x d inputs
            grad_logits: N x m derivative of the objective w.r.t. the logits

        Returns:
            Flat gradient with the same layout as `parameters`
        """
        features = self._check_features(features)
        _, activations, pre_activations = self._forward_cache(features)
        layers = self._unpack()
        grads = [None] * len(layers)
        delta = np.asarray(grad_logits, dtype=float)
        for layer in range(len(layers) - 1, -1, -1):
            h_in = activations[layer]
            grads[layer] = (h_in.T @ delta, delta.sum(axis=0))
            if layer > 0:
                w, _ = layers[layer]
                delta = (delta @ w.T) * self._activation_grad(pre_activations[layer - 1], activations[layer])
        return np.concatenate([np.concatenate([gw.reshape(-1), gb]) for gw, gb in grads])

    def expectation_grad(self, features: np.ndarray, coefficients: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Value and parameter gradient of F = sum_i sum_j c_ij p_ij(x_i).

        Uses dp_ij/dz_ik = p_ij (1[j=k] - p_ik).

        Returns:
            (per-row values sum_j c_ij p_ij, flat gradient of F)
        """
        features = self._check_features(features)
        probs = _softmax(self._forward_cache(features)[0])
        coefficients = np.asarray(coefficients, dtype=float)
        row_values = np.sum(coefficients * probs, axis=1)
        grad_logits = probs * (coefficients - row_values[:, None])
        return row_values, self.backward(features, grad_logits)

    def logprob_grad(self, x: np.ndarray, index: int) -> np.ndarray:
        """Gradient of log p_index(x) w.r.t. the parameters."""
        if not 0 <= index < self.output_dim:
            raise IndexError(f"Output index {index} outside 0..{self.output_dim - 1}")
        x = self._check_features(x)
        probs = _softmax(self._forward_cache(x)[0])
        grad_logits = -probs
        grad_logits[0, index] += 1.0
        return self.backward(x, grad_logits)

    def log_likelihood_grad(self, features: np.ndarray, targets: np.ndarray,
                            weights: Optional[np.ndarray] = None) -> tuple[float, np.ndarray]:
        """Weighted sum of log p_{y_i}(x_i) and its gradient (used for supervised fits)."""
        features = self._check_features(features)
        targets = np.asarray(targets, dtype=np.int64)
        weights = np.ones(targets.shape[0]) if weights is None else np.asarray(weights, dtype=float)
        logits = self._forward_cache(features)[0]
        log_probs = _log_softmax(logits)
        rows = np.arange(targets.shape[0])
        value = float(np.sum(weights * log_probs[rows, targets]))
        grad_logits = -np.exp(log_probs) * weights[:, None]
        grad_logits[rows, targets] += weights
        return value, self.backward(features, grad_logits)

    def to_dict(self) -> dict:
        return {
            'kind': 'softmax_model',
            'architecture': self.architecture.value,
            'input_dim': self.input_dim,
            'output_dim': self.output_dim,
            'hidden': list(self.hidden),
            'activation': self.activation.value,
            'parameters': self.parameters.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'SoftmaxModel':
        if data.get('kind') != 'softmax_model':
            raise ValueError(f"Not a serialized softmax model: kind={data.get('kind')}")
        return cls(
            input_dim=data['input_dim'],
            output_dim=data['output_dim'],
            architecture=EArchitecture(data['architecture']),
            hidden=data['hidden'] or DEFAULT_HIDDEN,
            activation=EActivation(data['activation']),
            parameters=np.asarray(data['parameters'], dtype=float),
        )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
