"""Model architectures: an MLP or a single-head attention backbone ending in
one sigmoid unit, with an optional score gate in front of a chosen layer.

Each model offers two equivalent forward routes: ``loss_graph`` builds the
autodiff graph used for training, and ``predict`` is a plain numpy fast path
used for inference and Shapley sampling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .scores import ScoresLayer, scores_to_weights

BACKBONES = ("mlp", "attention")


class DataLeaves:
    """Handles on a graph's input/target leaves so a training loop can feed
    successive equal-sized batches into one prebuilt graph."""

    def __init__(self, x_leaves: list, y_leaves: list):
        self.x_leaves = x_leaves
        self.y_leaves = y_leaves
        self.batch_rows = sum(leaf.value.shape[0] for leaf in x_leaves)

    def assign(self, X: np.ndarray, y: np.ndarray) -> None:
        y = y.reshape(-1, 1)
        if len(self.x_leaves) == 1:  # one batched leaf
            if X.shape != self.x_leaves[0].value.shape:
                raise ValueError(f"batch shape {X.shape} differs from graph "
                                 f"shape {self.x_leaves[0].value.shape}")
            self.x_leaves[0].value = np.ascontiguousarray(X, dtype=np.float64)
            self.y_leaves[0].value = np.ascontiguousarray(y, dtype=np.float64)
            return
        if X.shape[0] != len(self.x_leaves):  # one leaf per sample
            raise ValueError(f"batch of {X.shape[0]} rows does not fit "
                             f"{len(self.x_leaves)} per-sample leaves")
        for k, (xl, yl) in enumerate(zip(self.x_leaves, self.y_leaves)):
            xl.value = np.ascontiguousarray(X[k].reshape(1, -1), dtype=np.float64)
            yl.value = np.ascontiguousarray(y[k].reshape(1, 1), dtype=np.float64)


@dataclass
class ModelConfig:
    d_in: int
    backbone: str = "mlp"
    hidden: tuple[int, ...] = (32, 16)
    model_dim: int = 16
    ffn_dim: int = 32
    gated: bool = False
    gate_index: int = 0
    score_init: str = "zero"
    score_init_values: list[float] | None = None

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.d_in < 1:
            raise ValueError("d_in must be >= 1")
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be >= 1")
        if self.gated:
            if self.backbone == "mlp" and not 0 <= self.gate_index < len(self.hidden) + 1:
                raise ValueError("gate_index must address one of the model's layers")
            if self.backbone == "attention" and self.gate_index != 0:
                raise ValueError("the attention backbone only supports gating the input layer")

    def layer_dims(self) -> list[int]:
        return [self.d_in, *self.hidden, 1]

    def gate_width(self) -> int:
        return self.layer_dims()[self.gate_index]

    def to_dict(self) -> dict:
        return {
            "d_in": self.d_in, "backbone": self.backbone, "hidden": list(self.hidden),
            "model_dim": self.model_dim, "ffn_dim": self.ffn_dim, "gated": self.gated,
            "gate_index": self.gate_index, "score_init": self.score_init,
            "score_init_values": self.score_init_values,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(d_in=int(d["d_in"]), backbone=d["backbone"], hidden=tuple(d["hidden"]),
                   model_dim=int(d["model_dim"]), ffn_dim=int(d["ffn_dim"]), gated=bool(d["gated"]),
                   gate_index=int(d["gate_index"]), score_init=d["score_init"],
                   score_init_values=d["score_init_values"])


class Model:
    """A backbone described by ``config`` with parameters held as named
    float64 matrices; the score vector, when gated, lives in
    ``params["scores"]`` as a 1 x gate_width row."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params

    @property
    def scores(self) -> np.ndarray | None:
        s = self.params.get("scores")
        return None if s is None else s[0]

    def scores_layer(self) -> ScoresLayer:
        if self.scores is None:
            raise ValueError("model has no score gate")
        return ScoresLayer(d=self.scores.shape[0], s=self.scores,
                           init_strategy=self.config.score_init)

    def gate_weights(self) -> np.ndarray:
        return scores_to_weights(self.scores)

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- graph route ------------------------------------------------------

    def _mlp_graph(self, x_leaf: ad.Node) -> tuple[ad.Node, dict[str, ad.Node]]:
        cfg = self.config
        leaves = {name: ad.leaf(arr) for name, arr in self.params.items()}
        h = x_leaf
        n_layers = len(cfg.hidden) + 1
        for i in range(n_layers):
            if cfg.gated and cfg.gate_index == i:
                h = ad.hadamard(h, ad.softmax_rows(leaves["scores"]))
            z = ad.add(ad.matmul(h, leaves[f"W{i}"]), leaves[f"b{i}"])
            h = ad.relu(z) if i < n_layers - 1 else ad.sigmoid(z)
        return h, leaves

    def _attention_sample_graph(self, x_leaf: ad.Node, leaves: dict[str, ad.Node],
                                consts: dict[str, ad.Node]) -> ad.Node:
        cfg = self.config
        x = x_leaf
        if cfg.gated:
            x = ad.hadamard(x, ad.softmax_rows(leaves["scores"]))
        x_mat = ad.matmul(ad.transpose(x), consts["ones_row"])  # d x m, x_i per row
        tokens = ad.add(ad.hadamard(leaves["emb"], x_mat), leaves["pos"])
        block = attention_block(tokens, leaves, cfg.model_dim)
        pooled = ad.matmul(consts["pool"], block)  # 1 x m mean over tokens
        return ad.sigmoid(ad.add(ad.matmul(pooled, leaves["head_w"]), leaves["head_b"]))

    def _attention_graph(self, X: np.ndarray) \
            -> tuple[list[ad.Node], dict[str, ad.Node], list[ad.Node]]:
        cfg = self.config
        leaves = {name: ad.leaf(arr) for name, arr in self.params.items()}
        consts = {
            "ones_row": ad.leaf(np.ones((1, cfg.model_dim))),
            "pool": ad.leaf(np.full((1, cfg.d_in), 1.0 / cfg.d_in)),
        }
        x_leaves = [ad.leaf(X[k].reshape(1, -1)) for k in range(X.shape[0])]
        preds = [self._attention_sample_graph(x, leaves, consts) for x in x_leaves]
        return preds, leaves, x_leaves

    def loss_graph(self, X: np.ndarray, y: np.ndarray, loss_kind: str) \
            -> tuple[ad.Node, "ad.Node | list[ad.Node]", dict[str, ad.Node], "DataLeaves"]:
        """Build the loss node over a batch.

        Returns (loss, prediction node or per-sample nodes, parameter leaves,
        data leaves). Predictions stay live across ``recompute`` calls (read
        them with ``batch_predictions``), and the data leaves accept new
        same-shaped batches via ``DataLeaves.assign`` — that is how the
        training loop iterates mini-batches over one prebuilt graph.
        """
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
        if X.shape[1] != self.config.d_in:
            raise ad.ShapeError(f"model expects {self.config.d_in} features, got {X.shape[1]}")
        loss_fn = ad.bce_loss if loss_kind == "bce" else ad.mse_loss
        if self.config.backbone == "mlp":
            x_leaf = ad.leaf(X)
            pred, leaves = self._mlp_graph(x_leaf)
            y_leaf = ad.leaf(y)
            return loss_fn(pred, y_leaf), pred, leaves, DataLeaves([x_leaf], [y_leaf])
        preds, leaves, x_leaves = self._attention_graph(X)
        y_leaves = [ad.leaf(y[k:k + 1]) for k in range(len(preds))]
        total = loss_fn(preds[0], y_leaves[0])
        for k in range(1, len(preds)):
            total = ad.add(total, loss_fn(preds[k], y_leaves[k]))
        loss = ad.scale(total, 1.0 / len(preds))
        return loss, preds, leaves, DataLeaves(x_leaves, y_leaves)

    # -- numpy fast path ---------------------------------------------------

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Batch predictions in (0, 1); pure numpy, no graph construction."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.config.d_in:
            raise ad.ShapeError(f"model expects (n, {self.config.d_in}) inputs, got {X.shape}")
        if self.config.backbone == "mlp":
            return self._predict_mlp(X)
        return self._predict_attention(X)

    def _predict_mlp(self, X: np.ndarray) -> np.ndarray:
        cfg = self.config
        h = X
        n_layers = len(cfg.hidden) + 1
        for i in range(n_layers):
            if cfg.gated and cfg.gate_index == i:
                h = h * self.gate_weights()
            z = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            h = np.maximum(z, 0.0) if i < n_layers - 1 else _sigmoid(z)
        return h[:, 0]

    def _predict_attention(self, X: np.ndarray) -> np.ndarray:
        cfg, p = self.config, self.params
        if cfg.gated:
            X = X * self.gate_weights()
        m = cfg.model_dim
        tokens = X[:, :, None] * p["emb"][None] + p["pos"][None]  # (n, d, m)
        q = tokens @ p["wq"]
        k = tokens @ p["wk"]
        v = tokens @ p["wv"]
        att = _softmax_last(q @ k.transpose(0, 2, 1) / np.sqrt(m))
        res1 = tokens + att @ v
        ffn = np.maximum(res1 @ p["fw1"] + p["fb1"], 0.0) @ p["fw2"] + p["fb2"]
        pooled = (res1 + ffn).mean(axis=1)  # (n, m)
        return _sigmoid(pooled @ p["head_w"] + p["head_b"])[:, 0]

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        parameters = {
            name: {"rows": arr.shape[0], "cols": arr.shape[1], "data": [float(v) for v in arr.ravel()]}
            for name, arr in self.params.items() if name != "scores"
        }
        scores = None if self.scores is None else [float(v) for v in self.scores]
        return {"config": self.config.to_dict(), "parameters": parameters, "scores": scores}

    @classmethod
    def from_dict(cls, d: dict) -> "Model":
        config = ModelConfig.from_dict(d["config"])
        params = {
            name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["rows"], entry["cols"])
            for name, entry in d["parameters"].items()
        }
        if d["scores"] is not None:
            params["scores"] = np.asarray(d["scores"], dtype=np.float64).reshape(1, -1)
        return cls(config, params)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Model":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def batch_predictions(pred: "ad.Node | list[ad.Node]") -> np.ndarray:
    """Current prediction values from the node(s) returned by ``loss_graph``."""
    if isinstance(pred, list):
        return np.array([p.value[0, 0] for p in pred])
    return pred.value[:, 0].copy()


def attention_block(tokens: ad.Node, leaves: dict[str, ad.Node], model_dim: int) -> ad.Node:
    """Single-head scaled dot-product self-attention with residual, then a
    2-layer feed-forward with residual. ``tokens`` is d x model_dim."""
    q = ad.matmul(tokens, leaves["wq"])
    k = ad.matmul(tokens, leaves["wk"])
    v = ad.matmul(tokens, leaves["wv"])
    att = ad.softmax_rows(ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(model_dim)))
    res1 = ad.add(tokens, ad.matmul(att, v))
    ffn = ad.add(ad.matmul(ad.relu(ad.add(ad.matmul(res1, leaves["fw1"]), leaves["fb1"])),
                           leaves["fw2"]), leaves["fb2"])
    return ad.add(res1, ffn)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax_last(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _uniform_fan_in(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def build_model(config: ModelConfig, seed: int) -> Model:
    """Instantiate a model with fan-in-scaled uniform weights, zero biases,
    and scores initialized per ``config.score_init``."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    params: dict[str, np.ndarray] = {}
    if config.backbone == "mlp":
        dims = config.layer_dims()
        for i in range(len(dims) - 1):
            params[f"W{i}"] = _uniform_fan_in(rng, dims[i], (dims[i], dims[i + 1]))
            params[f"b{i}"] = np.zeros((1, dims[i + 1]))
    else:
        d, m, f = config.d_in, config.model_dim, config.ffn_dim
        params["emb"] = _uniform_fan_in(rng, m, (d, m))
        params["pos"] = _uniform_fan_in(rng, m, (d, m))
        for name in ("wq", "wk", "wv"):
            params[name] = _uniform_fan_in(rng, m, (m, m))
        params["fw1"] = _uniform_fan_in(rng, m, (m, f))
        params["fb1"] = np.zeros((1, f))
        params["fw2"] = _uniform_fan_in(rng, f, (f, m))
        params["fb2"] = np.zeros((1, m))
        params["head_w"] = _uniform_fan_in(rng, m, (m, 1))
        params["head_b"] = np.zeros((1, 1))
    if config.gated:
        from .scores import init_scores

        layer = init_scores(config.gate_width(), config.score_init, seed=seed,
                            values=config.score_init_values)
        params["scores"] = layer.s.reshape(1, -1)
    return Model(config, params)
