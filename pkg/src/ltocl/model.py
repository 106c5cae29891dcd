"""Two-headed MLP: shared encoder feeding a projection head and a classifier.

The projection head serves representation learning (stage one); the classifier
is trained separately on frozen embeddings (stage two). Freezing happens through
the trainable flag on each parameter, so the optimizer simply skips frozen ones
and their values stay bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .numeric import (
    ParamTensor,
    as_matrix,
    l2_normalize_rows,
    l2_normalize_rows_backward,
    matmul,
    relu,
    relu_backward,
)

STAGE_ONE = "one"
STAGE_TWO = "two"


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    num_classes: int
    hidden_dims: tuple[int, ...] = (64, 64)
    embed_dim: int = 64
    proj_dim: int = 128

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        for name in ("input_dim", "num_classes", "embed_dim", "proj_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"hidden dims must be >= 1, got {self.hidden_dims}")


class Linear:
    """Affine map with accumulated gradients: y = x W + b."""

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        self.weight = ParamTensor(rng.uniform(-limit, limit, (fan_in, fan_out)))
        self.bias = ParamTensor(np.zeros(fan_out))

    def forward(self, x: np.ndarray) -> np.ndarray:
        return matmul(x, self.weight.value) + self.bias.value

    def backward(self, grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
        self.weight.grad += matmul(x.T, grad_out)
        self.bias.grad += grad_out.sum(axis=0)
        return matmul(grad_out, self.weight.value.T)

    @property
    def params(self) -> list[ParamTensor]:
        return [self.weight, self.bias]


@dataclass
class EncoderCache:
    inputs: list[np.ndarray]      # input to each linear layer
    pre_activations: list[np.ndarray]  # pre-ReLU values of the hidden layers
    pre_norm: np.ndarray | None = None  # embedding-layer output before row normalization


class DualHeadNet:
    """Encoder -> {projection head (normalized), linear classifier}."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        dims = [cfg.input_dim, *cfg.hidden_dims, cfg.embed_dim]
        self.encoder = [Linear(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]
        self.projection = Linear(cfg.embed_dim, cfg.proj_dim, rng)
        self.classifier = Linear(cfg.embed_dim, cfg.num_classes, rng)
        self.stage = STAGE_ONE
        self.set_stage(STAGE_ONE)

    # -- forward ---------------------------------------------------------

    def encode(self, x: np.ndarray) -> tuple[np.ndarray, EncoderCache]:
        """Unit-norm embeddings: hidden ReLU layers, a linear embedding layer,
        then L2 row normalization."""
        x = as_matrix(x)
        if x.shape[1] != self.cfg.input_dim:
            raise DimensionError(f"expected input dim {self.cfg.input_dim}, got {x.shape[1]}")
        cache = EncoderCache(inputs=[], pre_activations=[])
        h = x
        for layer in self.encoder[:-1]:
            cache.inputs.append(h)
            pre = layer.forward(h)
            cache.pre_activations.append(pre)
            h = relu(pre)
        cache.inputs.append(h)
        cache.pre_norm = self.encoder[-1].forward(h)
        return l2_normalize_rows(cache.pre_norm), cache

    def project(self, e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Normalized projection z and its pre-normalization cache."""
        pre = self.projection.forward(e)
        return l2_normalize_rows(pre), pre

    def classify(self, e: np.ndarray) -> np.ndarray:
        return self.classifier.forward(e)

    # -- backward --------------------------------------------------------

    def backward_encoder(self, grad_e: np.ndarray, cache: EncoderCache) -> np.ndarray:
        grad_pre = l2_normalize_rows_backward(grad_e, cache.pre_norm)
        grad = self.encoder[-1].backward(grad_pre, cache.inputs[-1])
        for layer, x_in, pre in zip(
            reversed(self.encoder[:-1]),
            reversed(cache.inputs[:-1]),
            reversed(cache.pre_activations),
        ):
            grad = relu_backward(grad, pre)
            grad = layer.backward(grad, x_in)
        return grad

    def backward_projection(self, grad_z: np.ndarray, pre_norm: np.ndarray, e: np.ndarray) -> np.ndarray:
        grad_pre = l2_normalize_rows_backward(grad_z, pre_norm)
        return self.projection.backward(grad_pre, e)

    def backward_classifier(self, grad_logits: np.ndarray, e: np.ndarray) -> np.ndarray:
        return self.classifier.backward(grad_logits, e)

    # -- stage control and bookkeeping -------------------------------------

    def set_stage(self, stage: str) -> None:
        """Stage one trains encoder + projection; stage two trains only the classifier."""
        if stage not in (STAGE_ONE, STAGE_TWO):
            raise ConfigError(f"unknown stage {stage!r}")
        self.stage = stage
        representation = stage == STAGE_ONE
        for p in self.encoder_params() + self.projection.params:
            p.trainable = representation
        for p in self.classifier.params:
            p.trainable = not representation

    def encoder_params(self) -> list[ParamTensor]:
        return [p for layer in self.encoder for p in layer.params]

    def parameters(self) -> list[ParamTensor]:
        return self.encoder_params() + self.projection.params + self.classifier.params

    def snapshot(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.parameters()]

    def param_bytes(self) -> bytes:
        """Concatenated raw parameter bytes, for bit-exact identity checks."""
        return b"".join(np.ascontiguousarray(p.value).tobytes() for p in self.parameters())


def save_checkpoint(model: DualHeadNet, path: str) -> None:
    """Write the model as JSON: config, stage, and row-major parameter values.

    json serializes doubles via repr, so reloading restores them bit-exactly.
    """
    doc = {
        "kind": "dual-head-mlp",
        "config": {
            "input_dim": model.cfg.input_dim,
            "num_classes": model.cfg.num_classes,
            "hidden_dims": list(model.cfg.hidden_dims),
            "embed_dim": model.cfg.embed_dim,
            "proj_dim": model.cfg.proj_dim,
        },
        "stage": model.stage,
        "params": [
            {"shape": list(p.value.shape), "data": p.value.ravel().tolist()}
            for p in model.parameters()
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path: str) -> DualHeadNet:
    from .errors import FormatError

    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    if doc.get("kind") != "dual-head-mlp":
        raise FormatError(f"{path}: unknown checkpoint kind {doc.get('kind')!r}")
    cfg = ModelConfig(
        input_dim=doc["config"]["input_dim"],
        num_classes=doc["config"]["num_classes"],
        hidden_dims=tuple(doc["config"]["hidden_dims"]),
        embed_dim=doc["config"]["embed_dim"],
        proj_dim=doc["config"]["proj_dim"],
    )
    model = DualHeadNet(cfg, seed=0)
    stored = doc["params"]
    params = model.parameters()
    if len(stored) != len(params):
        raise FormatError(f"{path}: {len(stored)} parameter blocks, expected {len(params)}")
    for p, block in zip(params, stored):
        value = np.asarray(block["data"], dtype=np.float64).reshape(block["shape"])
        if value.shape != p.value.shape:
            raise FormatError(
                f"{path}: parameter shape {value.shape} does not match model shape {p.value.shape}"
            )
        p.value = value
        p.zero_grad()
    model.set_stage(doc.get("stage", STAGE_ONE))
    return model
