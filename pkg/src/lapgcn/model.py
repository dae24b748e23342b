"""Forward network: rectifying linear encoder (backbone stand-in) ->
adaptive sparse graph -> optional Laplacian high-pass pre-filter ->
stacked graph convolutions -> mean pooling -> FC head -> softmax.

The graph operators (A, L, P) are rebuilt from the encoder output on
every forward pass but are treated as constants with respect to
differentiation: thresholding is not differentiable, and the graph is
structure, not parameters. `forward` accepts a pinned `graph` so that
gradient checking can differentiate exactly the objective the backward
pass computes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .graph_embed import SparseAdjacency, build_graph
from .numkit import Rng, check_finite, relu, softmax_rows
from .simdata import SequenceSample
from .spectral import (
    NormalizedLaplacian,
    PropagationOperator,
    propagation_operator,
)

__all__ = [
    "ModelConfig",
    "ModelParams",
    "GraphOperators",
    "ForwardTrace",
    "encode",
    "forward",
    "predict",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and loss hyperparameters, at desk-scale defaults."""

    n_frames: int = 16
    h: int = 4
    w: int = 4
    c_raw: int = 8
    c: int = 16  # encoder output channels
    g_n: int = 4  # graph conv layers
    g_dim: int = 32  # graph conv embedding size
    n_out: int = 64  # FC head width
    n_cls: int = 2
    beta: float = 0.5  # graph threshold
    lam: float = 2e-4  # feature sparsity weight
    use_glsp: bool = True  # Laplacian high-pass pre-filter
    use_sc: bool = True  # L1 sparsity constraint on node features
    pool: str = "mean"
    keep_gram_diagonal: bool = False

    def __post_init__(self):
        if self.g_n < 1 or self.g_dim < 1:
            raise ConfigError(f"need g_n >= 1 and g_dim >= 1, got {self.g_n}, {self.g_dim}")
        if self.n_cls < 2:
            raise ConfigError(f"need n_cls >= 2, got {self.n_cls}")
        if not self.beta > 0.0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.lam < 0.0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if min(self.n_frames, self.h, self.w, self.c_raw, self.c, self.n_out) < 1:
            raise ConfigError("all dimensions must be >= 1")
        if self.pool not in ("mean", "sum"):
            raise ConfigError(f"pool must be 'mean' or 'sum', got {self.pool!r}")

    @property
    def d(self) -> int:
        return self.n_frames * self.h * self.w

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ModelConfig.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - set(ModelConfig.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def _glorot(rng: Rng, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


@dataclass
class ModelParams:
    w_enc: np.ndarray  # (c_raw, c)
    b_enc: np.ndarray  # (c,)
    w_gcn: list  # layer 0: (c, g_dim); layers 1..: (g_dim, g_dim)
    w_out: np.ndarray  # (g_dim, n_out)
    w_cls: np.ndarray  # (n_out, n_cls)

    @classmethod
    def init(cls, cfg: ModelConfig, rng: Rng) -> "ModelParams":
        w_gcn = []
        fan_in = cfg.c
        for _ in range(cfg.g_n):
            w_gcn.append(_glorot(rng, fan_in, cfg.g_dim))
            fan_in = cfg.g_dim
        return cls(
            w_enc=_glorot(rng, cfg.c_raw, cfg.c),
            b_enc=np.zeros(cfg.c),
            w_gcn=w_gcn,
            w_out=_glorot(rng, cfg.g_dim, cfg.n_out),
            w_cls=_glorot(rng, cfg.n_out, cfg.n_cls),
        )

    @classmethod
    def zeros(cls, cfg: ModelConfig) -> "ModelParams":
        return cls(
            w_enc=np.zeros((cfg.c_raw, cfg.c)),
            b_enc=np.zeros(cfg.c),
            w_gcn=[
                np.zeros((cfg.c if l == 0 else cfg.g_dim, cfg.g_dim))
                for l in range(cfg.g_n)
            ],
            w_out=np.zeros((cfg.g_dim, cfg.n_out)),
            w_cls=np.zeros((cfg.n_out, cfg.n_cls)),
        )

    def named(self) -> list[tuple[str, np.ndarray]]:
        pairs = [("w_enc", self.w_enc), ("b_enc", self.b_enc)]
        pairs += [(f"w_gcn_{l}", w) for l, w in enumerate(self.w_gcn)]
        pairs += [("w_out", self.w_out), ("w_cls", self.w_cls)]
        return pairs

    def flat(self) -> list[np.ndarray]:
        return [a for _, a in self.named()]

    def n_params(self) -> int:
        return sum(a.size for a in self.flat())

    def copy(self) -> "ModelParams":
        return ModelParams(
            w_enc=self.w_enc.copy(),
            b_enc=self.b_enc.copy(),
            w_gcn=[w.copy() for w in self.w_gcn],
            w_out=self.w_out.copy(),
            w_cls=self.w_cls.copy(),
        )

    def check_shapes(self, cfg: ModelConfig) -> None:
        expect = [
            ("w_enc", (cfg.c_raw, cfg.c)),
            ("b_enc", (cfg.c,)),
        ]
        if len(self.w_gcn) != cfg.g_n:
            raise ShapeError(f"expected {cfg.g_n} graph conv layers, got {len(self.w_gcn)}")
        for l in range(cfg.g_n):
            expect.append((f"w_gcn_{l}", (cfg.c if l == 0 else cfg.g_dim, cfg.g_dim)))
        expect += [("w_out", (cfg.g_dim, cfg.n_out)), ("w_cls", (cfg.n_out, cfg.n_cls))]
        actual = dict(self.named())
        for name, shape in expect:
            if actual[name].shape != shape:
                raise ShapeError(
                    f"parameter {name} has shape {actual[name].shape}, expected {shape}"
                )


@dataclass(frozen=True)
class GraphOperators:
    adjacency: SparseAdjacency
    prop: PropagationOperator
    lap: NormalizedLaplacian | None


@dataclass
class ForwardTrace:
    flat: np.ndarray  # (d, c_raw) flattened raw input
    enc_pre: np.ndarray  # encoder pre-activation
    x: np.ndarray  # (d, c) post-encoder node features
    graph: GraphOperators
    z: list  # z[0] = gcn input, z[l+1] = layer l output
    pre: list  # per-layer pre-activations
    msg: list  # per-layer propagated inputs P @ z[l]
    pooled: np.ndarray  # (g_dim,)
    head_pre: np.ndarray  # (n_out,)
    head: np.ndarray
    logits: np.ndarray  # (n_cls,)
    probs: np.ndarray


def encode(sample: SequenceSample, params: ModelParams, cfg: ModelConfig):
    """Flatten frames x cells into node rows and apply the rectifying
    linear encoder; the output is nonnegative by construction."""
    expected = (cfg.n_frames, cfg.h, cfg.w, cfg.c_raw)
    if sample.raw.shape != expected:
        raise ShapeError(f"raw sample shape {sample.raw.shape}, expected {expected}")
    flat = sample.raw.reshape(cfg.d, cfg.c_raw)
    enc_pre = flat @ params.w_enc + params.b_enc
    x = relu(enc_pre)
    check_finite(x, "encoder")
    return flat, enc_pre, x


def build_graph_operators(x: np.ndarray, cfg: ModelConfig) -> GraphOperators:
    adj = build_graph(x, cfg.beta, cfg.keep_gram_diagonal)
    prop = propagation_operator(adj)
    lap = None
    if cfg.use_glsp:
        lap = NormalizedLaplacian(l=np.eye(adj.d) - prop.p, deg=prop.deg)
    return GraphOperators(adjacency=adj, prop=prop, lap=lap)


def forward(
    sample: SequenceSample,
    params: ModelParams,
    cfg: ModelConfig,
    graph: GraphOperators | None = None,
) -> ForwardTrace:
    """Run the full pipeline, caching every intermediate for backward.

    If `graph` is given it is used instead of rebuilding the operators
    from the encoder output (the stop-gradient semantics made explicit).
    """
    params.check_shapes(cfg)
    flat, enc_pre, x = encode(sample, params, cfg)
    if graph is None:
        graph = build_graph_operators(x, cfg)

    if cfg.use_glsp:
        z0 = graph.lap.l @ x
        check_finite(z0, "laplacian prefilter")
    else:
        z0 = x

    z, pre, msg = [z0], [], []
    for l in range(cfg.g_n):
        m = graph.prop.p @ z[l]
        s = m @ params.w_gcn[l]
        check_finite(s, f"gcn layer {l}")
        msg.append(m)
        pre.append(s)
        z.append(relu(s))

    pooled = z[-1].mean(axis=0) if cfg.pool == "mean" else z[-1].sum(axis=0)
    head_pre = pooled @ params.w_out
    head = relu(head_pre)
    logits = head @ params.w_cls
    check_finite(logits, "head")
    probs = softmax_rows(logits)

    return ForwardTrace(
        flat=flat,
        enc_pre=enc_pre,
        x=x,
        graph=graph,
        z=z,
        pre=pre,
        msg=msg,
        pooled=pooled,
        head_pre=head_pre,
        head=head,
        logits=logits,
        probs=probs,
    )


def predict(
    sample: SequenceSample, params: ModelParams, cfg: ModelConfig
) -> tuple[int, np.ndarray]:
    """Class index (ties break toward the lower index) and probabilities."""
    probs = forward(sample, params, cfg).probs
    return int(np.argmax(probs)), probs


def _weights_to_json(params: ModelParams) -> dict:
    return {
        name: {"shape": list(a.shape), "data": a.ravel().tolist()}
        for name, a in params.named()
    }


def _weights_from_json(blob: dict) -> dict[str, np.ndarray]:
    out = {}
    for name, rec in blob.items():
        arr = np.array(rec["data"], dtype=np.float64).reshape(rec["shape"])
        out[name] = arr
    return out


def save_checkpoint(
    path,
    params: ModelParams,
    cfg: ModelConfig,
    dataset_config: dict | None = None,
    seed: int | None = None,
) -> None:
    """JSON checkpoint: model config, weights with shape headers, and
    optionally the dataset config + seed of the run that produced it.
    Float values round-trip bit-exactly through the JSON decimal form."""
    doc = {
        "format_version": 1,
        "model_config": cfg.to_dict(),
        "weights": _weights_to_json(params),
        "dataset_config": dataset_config,
        "seed": seed,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")


def load_checkpoint(path) -> tuple[ModelParams, ModelConfig, dict]:
    """Returns (params, model config, full checkpoint document)."""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format_version") != 1:
        raise ConfigError(f"unsupported checkpoint version in {path}")
    cfg = ModelConfig.from_dict(doc["model_config"])
    w = _weights_from_json(doc["weights"])
    params = ModelParams(
        w_enc=w["w_enc"],
        b_enc=w["b_enc"],
        w_gcn=[w[f"w_gcn_{l}"] for l in range(cfg.g_n)],
        w_out=w["w_out"],
        w_cls=w["w_cls"],
    )
    params.check_shapes(cfg)
    return params, cfg, doc
