"""MLP feature extractor, classifier head and domain discriminators."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

FORMAT_VERSION = 1
TOY_HIDDEN = (32, 32, 32, 32)
BN_MOMENTUM = 0.1
BN_EPS = 1e-5


class Linear:
    kind = "linear"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, gain: float = 2.0):
        self.n_in, self.n_out = n_in, n_out
        self.weight = Tensor(rng.standard_normal((n_in, n_out)) * np.sqrt(gain / n_in), True)
        self.bias = Tensor(np.zeros(n_out), True)

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return ad.linear(x, self.weight, self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def spec(self) -> dict:
        return {"type": self.kind, "in": self.n_in, "out": self.n_out}

    def state(self) -> dict:
        return {"weight": self.weight.data.ravel().tolist(), "bias": self.bias.data.tolist()}

    def load_state(self, state: dict) -> None:
        self.weight.data = np.asarray(state["weight"], dtype=np.float64).reshape(self.n_in, self.n_out)
        self.bias.data = np.asarray(state["bias"], dtype=np.float64)


class BatchNorm:
    """Per-feature batch normalization with exponential running statistics."""

    kind = "batchnorm"

    def __init__(self, dim: int, momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
        self.dim = dim
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(dim), True)
        self.beta = Tensor(np.zeros(dim), True)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        if not train:
            return ad.affine_norm(x, self.running_mean, self.running_var, self.gamma, self.beta, self.eps)
        if x.shape[0] < 2:
            raise ShapeError(f"batchnorm: training mode needs at least 2 rows, got {x.shape[0]}")
        out, mu, var = ad.batch_norm(x, self.gamma, self.beta, self.eps)
        n = x.shape[0]
        m = self.momentum
        self.running_mean = (1 - m) * self.running_mean + m * mu
        self.running_var = (1 - m) * self.running_var + m * var * n / (n - 1)
        return out

    def parameters(self) -> list[Tensor]:
        return [self.gamma, self.beta]

    def spec(self) -> dict:
        return {"type": self.kind, "dim": self.dim, "momentum": self.momentum, "eps": self.eps}

    def state(self) -> dict:
        return {
            "gamma": self.gamma.data.tolist(),
            "beta": self.beta.data.tolist(),
            "running_mean": self.running_mean.tolist(),
            "running_var": self.running_var.tolist(),
        }

    def load_state(self, state: dict) -> None:
        self.gamma.data = np.asarray(state["gamma"], dtype=np.float64)
        self.beta.data = np.asarray(state["beta"], dtype=np.float64)
        self.running_mean = np.asarray(state["running_mean"], dtype=np.float64)
        self.running_var = np.asarray(state["running_var"], dtype=np.float64)


class ReLU:
    kind = "relu"

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return ad.relu(x)

    def parameters(self) -> list[Tensor]:
        return []

    def spec(self) -> dict:
        return {"type": self.kind}

    def state(self) -> dict:
        return {}

    def load_state(self, state: dict) -> None:
        pass


Layer = Linear | BatchNorm | ReLU


class Stack:
    """Ordered layers applied in sequence."""

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        for layer in self.layers:
            x = layer(x, train)
        return x

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def batchnorms(self) -> list[BatchNorm]:
        return [layer for layer in self.layers if isinstance(layer, BatchNorm)]

    @property
    def in_dim(self) -> int:
        return next(layer.n_in for layer in self.layers if isinstance(layer, Linear))

    @property
    def out_dim(self) -> int:
        return [layer.n_out for layer in self.layers if isinstance(layer, Linear)][-1]

    def to_dict(self) -> dict:
        return {
            "layers": [layer.spec() for layer in self.layers],
            "weights": [layer.state() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Stack:
        layers: list[Layer] = []
        dummy = np.random.default_rng(0)
        for spec, state in zip(doc["layers"], doc["weights"], strict=True):
            kind = spec["type"]
            if kind == "linear":
                layer: Layer = Linear(spec["in"], spec["out"], dummy)
            elif kind == "batchnorm":
                layer = BatchNorm(spec["dim"], spec.get("momentum", BN_MOMENTUM), spec.get("eps", BN_EPS))
            elif kind == "relu":
                layer = ReLU()
            else:
                raise ValueError(f"unknown layer type {kind!r}")
            layer.load_state(state)
            layers.append(layer)
        return cls(layers)


def mlp_blocks(widths: list[int], rng: np.random.Generator) -> list[Layer]:
    """Linear -> BatchNorm -> ReLU for each consecutive pair of widths."""
    layers: list[Layer] = []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        layers += [Linear(n_in, n_out, rng), BatchNorm(n_out), ReLU()]
    return layers


@dataclass
class Forward:
    features: Tensor
    logits: Tensor
    probs: Tensor


class Network:
    """Classifier G = C(F(x)): extractor F produces features z, head C produces logits."""

    def __init__(self, extractor: Stack, classifier: Stack):
        if extractor.out_dim != classifier.in_dim:
            raise ShapeError(
                f"extractor width {extractor.out_dim} != classifier input {classifier.in_dim}"
            )
        self.extractor = extractor
        self.classifier = classifier

    @property
    def input_dim(self) -> int:
        return self.extractor.in_dim

    @property
    def feature_dim(self) -> int:
        return self.extractor.out_dim

    @property
    def class_count(self) -> int:
        return self.classifier.out_dim

    def parameters(self) -> list[Tensor]:
        return self.extractor.parameters() + self.classifier.parameters()

    def batchnorms(self) -> list[BatchNorm]:
        return self.extractor.batchnorms() + self.classifier.batchnorms()

    def __call__(self, x, train: bool = False) -> Forward:
        return forward(self, x, "train" if train else "eval")

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "network",
            "feature_dim": self.feature_dim,
            "class_count": self.class_count,
            "extractor": self.extractor.to_dict(),
            "classifier": self.classifier.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Network:
        _check_version(doc, "network")
        return cls(Stack.from_dict(doc["extractor"]), Stack.from_dict(doc["classifier"]))

    def copy(self) -> Network:
        return Network.from_dict(self.to_dict())


class Discriminator:
    """Domain discriminator: one sigmoid unit, or an m-way softmax when ``output_classes >= 2``."""

    def __init__(self, stack: Stack, output_classes: int = 1):
        self.stack = stack
        self.output_classes = output_classes

    @property
    def input_dim(self) -> int:
        return self.stack.in_dim

    def parameters(self) -> list[Tensor]:
        return self.stack.parameters()

    def __call__(self, x: Tensor) -> Tensor:
        """Source probability (n,) for the binary head, domain probabilities (n, m) otherwise."""
        if x.shape[1] != self.input_dim:
            raise ShapeError(f"discriminator expects width {self.input_dim}, got {x.shape[1]}")
        out = self.stack(x, train=True)
        if self.output_classes == 1:
            return ad.sigmoid(ad.reshape(out, (out.shape[0],)))
        return ad.softmax(out, axis=1)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "discriminator",
            "output_classes": self.output_classes,
            "stack": self.stack.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Discriminator:
        _check_version(doc, "discriminator")
        return cls(Stack.from_dict(doc["stack"]), doc["output_classes"])


def _check_version(doc: dict, kind: str) -> None:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported weights format_version {version!r}, expected {FORMAT_VERSION}")
    if doc.get("kind") != kind:
        raise ValueError(f"weights document holds a {doc.get('kind')!r}, expected {kind!r}")


def build_toy_backbone(seed: int | np.random.Generator, input_dim: int = 2, class_count: int = 2) -> Network:
    """Four 32-wide Linear-BN-ReLU blocks followed by a linear k-way head."""
    rng = np.random.default_rng(seed)
    widths = [input_dim, *TOY_HIDDEN]
    extractor = Stack(mlp_blocks(widths, rng))
    classifier = Stack([Linear(TOY_HIDDEN[-1], class_count, rng, gain=1.0)])
    return Network(extractor, classifier)


def toy_backbone_parameter_count(input_dim: int = 2, class_count: int = 2) -> int:
    widths = [input_dim, *TOY_HIDDEN]
    blocks = sum(a * b + b + 2 * b for a, b in zip(widths[:-1], widths[1:]))
    return blocks + TOY_HIDDEN[-1] * class_count + class_count


def build_toy_discriminator(input_dim: int, seed: int | np.random.Generator, output_classes: int = 1) -> Discriminator:
    """input_dim -> 32 -> 1 (sigmoid) or -> m (softmax)."""
    if input_dim <= 0:
        raise ValueError(f"discriminator input_dim must be positive, got {input_dim}")
    rng = np.random.default_rng(seed)
    hidden = 32
    stack = Stack([Linear(input_dim, hidden, rng), ReLU(), Linear(hidden, output_classes, rng, gain=1.0)])
    return Discriminator(stack, output_classes)


def forward(net: Network, batch, mode: str = "eval") -> Forward:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = ad.as_tensor(batch)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeError(f"forward: batch shape {x.shape} does not match input width {net.input_dim}")
    train = mode == "train"
    z = net.extractor(x, train)
    logits = net.classifier(z, train)
    return Forward(z, logits, ad.softmax(logits, axis=1))


def grl_forward(z: Tensor, lambda_adv: float) -> Tensor:
    return ad.grad_reverse(z, lambda_adv)


def save_weights(obj: Network | Discriminator, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj.to_dict()) + "\n", encoding="utf-8")


def load_network(path: str | Path) -> Network:
    return Network.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_discriminator(path: str | Path) -> Discriminator:
    return Discriminator.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
