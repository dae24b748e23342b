"""Loss, manual reverse-mode gradients, Adam, and the training loop.

The gradient of the total loss (cross-entropy + optional L1 feature
sparsity) is derived by hand through the whole pipeline. The graph
operators are constants under differentiation; the encoder receives
both the classification path through the network and the L1 subgradient
path (sign(x), with sign(0) = 0) through the rectifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError
from .model import ForwardTrace, ModelConfig, ModelParams, forward
from .numkit import Rng
from .simdata import SequenceSample

__all__ = [
    "LossBreakdown",
    "AdamState",
    "TrainSchedule",
    "HistoryRow",
    "loss",
    "backward",
    "adam_step",
    "adam_step_arrays",
    "train_loop",
    "grad_check",
    "history_csv",
]

LOG_FLOOR = 1e-300  # clamp before log; keeps the loss exact away from p = 0


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    sc: float

    @property
    def total(self) -> float:
        return self.ce + self.sc


def loss(trace: ForwardTrace, label: int, cfg: ModelConfig) -> LossBreakdown:
    """Cross-entropy against the one-hot label plus the weighted L1 norm
    of the post-encoder node features (when the sparsity constraint is on)."""
    if not 0 <= label < cfg.n_cls:
        raise ValueError(f"label {label} out of range for {cfg.n_cls} classes")
    ce = -np.log(max(trace.probs[label], LOG_FLOOR))
    sc = cfg.lam * np.abs(trace.x).sum() if cfg.use_sc else 0.0
    return LossBreakdown(ce=float(ce), sc=float(sc))


def backward(
    trace: ForwardTrace, label: int, params: ModelParams, cfg: ModelConfig
) -> ModelParams:
    """Analytic gradients of the total loss w.r.t. every parameter,
    returned in a container with the same shapes as the parameters."""
    if not 0 <= label < cfg.n_cls:
        raise ValueError(f"label {label} out of range for {cfg.n_cls} classes")
    d = trace.x.shape[0]

    dlogits = trace.probs.copy()
    dlogits[label] -= 1.0

    g_w_cls = np.outer(trace.head, dlogits)
    dhead = params.w_cls @ dlogits
    dhead_pre = dhead * (trace.head_pre > 0)

    g_w_out = np.outer(trace.pooled, dhead_pre)
    dpooled = params.w_out @ dhead_pre

    dz = np.tile(dpooled / d if cfg.pool == "mean" else dpooled, (d, 1))
    g_gcn = [None] * cfg.g_n
    for l in reversed(range(cfg.g_n)):
        ds = dz * (trace.pre[l] > 0)
        g_gcn[l] = trace.msg[l].T @ ds
        dz = trace.graph.prop.p.T @ (ds @ params.w_gcn[l].T)

    dx = trace.graph.lap.l.T @ dz if cfg.use_glsp else dz
    if cfg.use_sc and cfg.lam > 0.0:
        dx = dx + cfg.lam * np.sign(trace.x)

    denc = dx * (trace.enc_pre > 0)
    return ModelParams(
        w_enc=trace.flat.T @ denc,
        b_enc=denc.sum(axis=0),
        w_gcn=g_gcn,
        w_out=g_w_out,
        w_cls=g_w_cls,
    )


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the parameter shapes."""

    m: list
    v: list
    step: int = 0
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_arrays(cls, arrays, lr: float = 1e-2, **kw) -> "AdamState":
        return cls(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
            lr=lr,
            **kw,
        )


def adam_step_arrays(arrays, grads, state: AdamState) -> list:
    """One bias-corrected Adam update over a list of arrays. Mutates the
    moment accumulators; returns the updated arrays. A non-finite
    gradient aborts loudly rather than being clipped."""
    if len(arrays) != len(state.m) or len(arrays) != len(grads):
        raise ShapeError("optimizer state does not match parameter structure")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient passed to the optimizer")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    out = []
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        if a.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {a.shape}")
        m[:] = state.beta1 * m + (1.0 - state.beta1) * g
        v[:] = state.beta2 * v + (1.0 - state.beta2) * g * g
        out.append(a - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps))
    return out


def _params_from_flat(arrays: list, g_n: int) -> ModelParams:
    return ModelParams(
        w_enc=arrays[0],
        b_enc=arrays[1],
        w_gcn=arrays[2 : 2 + g_n],
        w_out=arrays[2 + g_n],
        w_cls=arrays[3 + g_n],
    )


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState) -> ModelParams:
    new = adam_step_arrays(params.flat(), grads.flat(), state)
    return _params_from_flat(new, len(params.w_gcn))


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int = 40
    batch_size: int = 8
    lr: float = 1e-2
    decay_factor: float = 0.1
    decay_every: int = 20


@dataclass(frozen=True)
class HistoryRow:
    epoch: int
    ce: float
    sc: float
    total: float
    train_acc: float
    lr: float


def train_loop(
    dataset: list[SequenceSample],
    cfg: ModelConfig,
    schedule: TrainSchedule,
    rng: Rng,
) -> tuple[ModelParams, list[HistoryRow]]:
    """Shuffled mini-batch training with Adam and stepwise lr decay.

    Per-epoch history records the running loss and accuracy over the
    samples as they were seen. Batch gradients are averaged in a fixed
    order, so the result is fully reproducible from (dataset, cfg,
    schedule, seed).
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    params = ModelParams.init(cfg, rng.derive("init"))
    state = AdamState.for_arrays(params.flat(), lr=schedule.lr)
    n = len(dataset)
    history = []
    for epoch in range(schedule.epochs):
        state.lr = schedule.lr * schedule.decay_factor ** (epoch // schedule.decay_every)
        order = rng.derive("shuffle", epoch).permutation(n)
        ce_sum = sc_sum = 0.0
        correct = 0
        for start in range(0, n, schedule.batch_size):
            batch = order[start : start + schedule.batch_size]
            acc_grads = None
            for i in batch:
                s = dataset[i]
                trace = forward(s, params, cfg)
                lb = loss(trace, s.label, cfg)
                ce_sum += lb.ce
                sc_sum += lb.sc
                correct += int(np.argmax(trace.probs)) == s.label
                g = backward(trace, s.label, params, cfg).flat()
                if acc_grads is None:
                    acc_grads = [a.copy() for a in g]
                else:
                    for a, b in zip(acc_grads, g):
                        a += b
            grads = [a / len(batch) for a in acc_grads]
            params = _params_from_flat(adam_step_arrays(params.flat(), grads, state), cfg.g_n)
        history.append(
            HistoryRow(
                epoch=epoch,
                ce=ce_sum / n,
                sc=sc_sum / n,
                total=(ce_sum + sc_sum) / n,
                train_acc=correct / n,
                lr=state.lr,
            )
        )
    return params, history


def history_csv(history: list[HistoryRow]) -> str:
    lines = ["epoch,ce,sc,total,train_acc,lr"]
    for r in history:
        lines.append(
            f"{r.epoch},{r.ce!r},{r.sc!r},{r.total!r},{r.train_acc!r},{r.lr!r}"
        )
    return "\n".join(lines) + "\n"


def _kink_signature(trace: ForwardTrace) -> bytes:
    """Activation-mask fingerprint of a forward pass. Two evaluations with
    the same fingerprint lie in the same smooth region of the loss."""
    parts = [(trace.enc_pre > 0).tobytes(), (trace.head_pre > 0).tobytes()]
    parts += [(p > 0).tobytes() for p in trace.pre]
    return b"".join(parts)


def grad_check(
    params: ModelParams,
    sample: SequenceSample,
    label: int,
    cfg: ModelConfig,
    eps: float = 1e-5,
    grads: ModelParams | None = None,
) -> float:
    """Worst relative error between analytic gradients and central finite
    differences, per coordinate.

    The graph operators are pinned to the unperturbed forward pass, so the
    objective differentiated here is exactly the one `backward` computes.
    Coordinates whose +/-eps evaluations land in different smooth regions
    (a rectifier mask flips, which also covers the L1 kink at zero) are
    skipped; tiny gradients are compared with an absolute floor of 1e-6.

    `grads` overrides the analytic gradients, for negative-control tests.
    """
    if params.n_params() > 2000:
        raise ValueError(
            f"grad_check is for tiny models (<= 2000 params), got {params.n_params()}"
        )
    base = forward(sample, params, cfg)
    if grads is None:
        grads = backward(base, label, params, cfg)
    work = params.copy()
    worst = 0.0
    for p_arr, g_arr in zip(work.flat(), grads.flat()):
        for idx in np.ndindex(p_arr.shape):
            orig = p_arr[idx]
            p_arr[idx] = orig + eps
            tp = forward(sample, work, cfg, graph=base.graph)
            p_arr[idx] = orig - eps
            tm = forward(sample, work, cfg, graph=base.graph)
            p_arr[idx] = orig
            if _kink_signature(tp) != _kink_signature(tm):
                continue
            fd = (loss(tp, label, cfg).total - loss(tm, label, cfg).total) / (2 * eps)
            ga = g_arr[idx]
            rel = abs(ga - fd) / max(abs(ga), abs(fd), 1e-6)
            worst = max(worst, rel)
    return worst
