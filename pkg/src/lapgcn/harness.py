"""Experiment orchestration: config files, run manifests, evaluation
under corruption, the ablation/sweep/spectral reports, and CSV output.

A run is fully determined by (config file, seed): datasets are
regenerated from the seed, training is deterministic, and the manifest
written next to each checkpoint hashes the reproducible artifacts.
Wall-clock timing goes to a sidecar file so manifests from identical
runs are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .metrics import MetricReport, compute_metrics
from .model import (
    ModelConfig,
    ModelParams,
    encode,
    forward,
    load_checkpoint,
    save_checkpoint,
)
from .numkit import Rng, relu, softmax_rows, sym_eigen
from .simdata import (
    GLOBAL_KINDS,
    PERTURBATION_KINDS,
    GeneratorConfig,
    PerturbationSpec,
    SequenceSample,
    gen_dataset,
    perturb,
)
from .spectral import cascade_response, laplacian_prefilter, normalized_laplacian
from .train import (
    AdamState,
    TrainSchedule,
    adam_step_arrays,
    history_csv,
    train_loop,
)
from .graph_embed import build_graph

__all__ = [
    "RunConfig",
    "TrainedModel",
    "BaselineParams",
    "ABLATION_VARIANTS",
    "load_config",
    "parse_config_text",
    "resolve_out_dir",
    "derive_seed",
    "eval_under",
    "train_variant",
    "run_train",
    "run_eval",
    "run_ablate",
    "run_sweep",
    "run_spectral",
]

OUT_DIR_ENV = "LAPGCN_OUT_DIR"

# every legal config key, with its parser
_KEY_TYPES = {
    "seed": int,
    # generator
    "n_frames": int,
    "h": int,
    "w": int,
    "c_raw": int,
    "jitter": float,
    "artifact_scale": float,
    "n_train": int,
    "n_val": int,
    "n_test": int,
    # model
    "c": int,
    "g_n": int,
    "g_dim": int,
    "n_out": int,
    "n_cls": int,
    "beta": float,
    "lambda": float,
    "use_glsp": bool,
    "use_sc": bool,
    "pool": str,
    "keep_gram_diagonal": bool,
    # schedule
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "decay_factor": float,
    "decay_every": int,
}

_GEN_KEYS = ("n_frames", "h", "w", "c_raw", "jitter", "artifact_scale",
             "n_train", "n_val", "n_test")
_MODEL_KEYS = ("n_frames", "h", "w", "c_raw", "c", "g_n", "g_dim", "n_out",
               "n_cls", "beta", "lambda", "use_glsp", "use_sc", "pool",
               "keep_gram_diagonal")
_SCHED_KEYS = ("epochs", "batch_size", "lr", "decay_factor", "decay_every")

SWEEPABLE_KEYS = ("beta", "lambda", "g_n", "g_dim", "n_out", "n_frames")

DEFAULT_STRENGTH = {"blur": 1.0, "noise": 1.0, "adversarial": 1.0, "sunglass": 1.0}

ABLATION_VARIANTS = ("baseline", "gcn", "gcn_glsp", "gcn_sc", "full")


def _parse_bool(raw: str, key: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"config key {key!r}: expected a boolean, got {raw!r}")


def parse_config_text(text: str) -> dict:
    """Parse flat key=value lines. '#' starts a comment; blank lines are
    skipped; unknown keys are rejected by name."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _KEY_TYPES:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
        if key in values:
            raise ConfigError(f"duplicate config key {key!r} (line {lineno})")
        kind = _KEY_TYPES[key]
        try:
            values[key] = _parse_bool(raw, key) if kind is bool else kind(raw)
        except ValueError:
            raise ConfigError(
                f"config key {key!r}: cannot parse {raw!r} as {kind.__name__}"
            ) from None
    return values


@dataclass(frozen=True)
class RunConfig:
    generator: GeneratorConfig
    model: ModelConfig
    schedule: TrainSchedule
    seed: int

    def to_flat(self) -> dict:
        flat = {"seed": self.seed}
        for k in _GEN_KEYS:
            flat[k] = getattr(self.generator, k)
        for k in _MODEL_KEYS:
            attr = "lam" if k == "lambda" else k
            flat[k] = getattr(self.model, attr)
        for k in _SCHED_KEYS:
            flat[k] = getattr(self.schedule, k)
        return flat


def run_config_from_values(values: dict) -> RunConfig:
    unknown = set(values) - set(_KEY_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    seed = int(values.get("seed", 0))
    gen = GeneratorConfig(
        **{k: values[k] for k in _GEN_KEYS if k in values}, seed=seed
    )
    model_kw = {}
    for k in _MODEL_KEYS:
        if k in values:
            model_kw["lam" if k == "lambda" else k] = values[k]
    for k in ("n_frames", "h", "w", "c_raw"):
        model_kw[k] = getattr(gen, k)
    model = ModelConfig(**model_kw)
    sched = TrainSchedule(**{k: values[k] for k in _SCHED_KEYS if k in values})
    return RunConfig(generator=gen, model=model, schedule=sched, seed=seed)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return run_config_from_values(parse_config_text(p.read_text(encoding="utf-8")))


def resolve_out_dir(cli_value=None) -> Path:
    """Output directory: CLI flag, else the environment override, else ./runs."""
    out = Path(cli_value or os.environ.get(OUT_DIR_ENV) or "runs")
    out.mkdir(parents=True, exist_ok=True)
    return out


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from a mixed tuple of ints/strings/floats."""
    text = "/".join(repr(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little") >> 1


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header: list, rows: list) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


# ---------------------------------------------------------------------------
# no-graph baseline: encoder -> mean pool -> two-layer MLP head
# ---------------------------------------------------------------------------


@dataclass
class BaselineParams:
    w_enc: np.ndarray
    b_enc: np.ndarray
    w_hid: np.ndarray
    w_out: np.ndarray

    def flat(self) -> list:
        return [self.w_enc, self.b_enc, self.w_hid, self.w_out]


def baseline_hidden_width(cfg: ModelConfig) -> int:
    """Hidden width that matches the graph model's parameter count."""
    graph_total = (
        cfg.c_raw * cfg.c
        + cfg.c
        + cfg.c * cfg.g_dim
        + (cfg.g_n - 1) * cfg.g_dim * cfg.g_dim
        + cfg.g_dim * cfg.n_out
        + cfg.n_out * cfg.n_cls
    )
    enc = cfg.c_raw * cfg.c + cfg.c
    return max(1, round((graph_total - enc) / (cfg.c + cfg.n_cls)))


def baseline_init(cfg: ModelConfig, rng: Rng) -> BaselineParams:
    hidden = baseline_hidden_width(cfg)

    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, (fan_in, fan_out))

    return BaselineParams(
        w_enc=glorot(cfg.c_raw, cfg.c),
        b_enc=np.zeros(cfg.c),
        w_hid=glorot(cfg.c, hidden),
        w_out=glorot(hidden, cfg.n_cls),
    )


def baseline_forward(sample: SequenceSample, bp: BaselineParams, cfg: ModelConfig):
    flat, enc_pre, x = encode(sample, bp, cfg)
    pooled = x.mean(axis=0)
    hid_pre = pooled @ bp.w_hid
    hid = relu(hid_pre)
    probs = softmax_rows(hid @ bp.w_out)
    return flat, enc_pre, x, pooled, hid_pre, hid, probs


def _baseline_grads(sample, bp, cfg, label):
    flat, enc_pre, x, pooled, hid_pre, hid, probs = baseline_forward(sample, bp, cfg)
    d = x.shape[0]
    dlogits = probs.copy()
    dlogits[label] -= 1.0
    g_w_out = np.outer(hid, dlogits)
    dhid = (bp.w_out @ dlogits) * (hid_pre > 0)
    g_w_hid = np.outer(pooled, dhid)
    denc = np.tile((bp.w_hid @ dhid) / d, (d, 1)) * (enc_pre > 0)
    ce = -np.log(max(probs[label], 1e-300))
    grads = [flat.T @ denc, denc.sum(axis=0), g_w_hid, g_w_out]
    return grads, ce, int(np.argmax(probs))


def train_baseline(
    dataset: list, cfg: ModelConfig, schedule: TrainSchedule, rng: Rng
) -> BaselineParams:
    bp = baseline_init(cfg, rng.derive("init"))
    state = AdamState.for_arrays(bp.flat(), lr=schedule.lr)
    n = len(dataset)
    for epoch in range(schedule.epochs):
        state.lr = schedule.lr * schedule.decay_factor ** (epoch // schedule.decay_every)
        order = rng.derive("shuffle", epoch).permutation(n)
        for start in range(0, n, schedule.batch_size):
            batch = order[start : start + schedule.batch_size]
            acc = None
            for i in batch:
                g, _, _ = _baseline_grads(dataset[i], bp, cfg, dataset[i].label)
                if acc is None:
                    acc = [a.copy() for a in g]
                else:
                    for a, b in zip(acc, g):
                        a += b
            grads = [a / len(batch) for a in acc]
            new = adam_step_arrays(bp.flat(), grads, state)
            bp = BaselineParams(*new)
    return bp


# ---------------------------------------------------------------------------
# trained-model handle shared by eval / ablate / sweep
# ---------------------------------------------------------------------------


@dataclass
class TrainedModel:
    kind: str  # "graph" or "baseline"
    cfg: ModelConfig
    params: ModelParams | None = None
    baseline: BaselineParams | None = None

    def score(self, sample: SequenceSample) -> float:
        """Positive-class probability (class 1)."""
        if self.cfg.n_cls != 2:
            raise ConfigError("binary scoring requires n_cls=2")
        if self.kind == "graph":
            return float(forward(sample, self.params, self.cfg).probs[1])
        _, _, _, _, _, _, probs = baseline_forward(sample, self.baseline, self.cfg)
        return float(probs[1])


def variant_model_config(cfg: ModelConfig, variant: str) -> ModelConfig:
    flags = {
        "gcn": (False, False),
        "gcn_glsp": (True, False),
        "gcn_sc": (False, True),
        "full": (True, True),
    }
    if variant not in flags:
        raise ConfigError(f"unknown ablation variant {variant!r}")
    use_glsp, use_sc = flags[variant]
    return ModelConfig(**{**cfg.to_dict(), "use_glsp": use_glsp, "use_sc": use_sc})


def train_variant(
    variant: str,
    train_set: list,
    cfg: ModelConfig,
    schedule: TrainSchedule,
    seed: int,
) -> TrainedModel:
    rng = Rng(seed).derive("train", variant)
    if variant == "baseline":
        bp = train_baseline(train_set, cfg, schedule, rng)
        return TrainedModel(kind="baseline", cfg=cfg, baseline=bp)
    vcfg = variant_model_config(cfg, variant)
    params, _ = train_loop(train_set, vcfg, schedule, rng)
    return TrainedModel(kind="graph", cfg=vcfg, params=params)


def eval_under(
    model: TrainedModel,
    samples: list,
    kind: str,
    m_r: float,
    eval_seed: int,
    strength: float | None = None,
) -> MetricReport:
    """Evaluate under one (perturbation kind, masking ratio) condition.

    Per-sample corruption streams are derived from (eval_seed, kind, m_r,
    index), so results do not depend on evaluation order. m_r = 0 leaves
    every sample untouched and reproduces clean metrics exactly.
    """
    if kind not in PERTURBATION_KINDS:
        raise ConfigError(
            f"unknown perturbation kind {kind!r}; expected one of "
            f"{', '.join(PERTURBATION_KINDS)}"
        )
    strength = DEFAULT_STRENGTH.get(kind, 1.0) if strength is None else strength
    scores, labels = [], []
    for i, s in enumerate(samples):
        spec = PerturbationSpec(
            kind=kind,
            m_r=m_r,
            strength=strength,
            rng_seed=derive_seed(eval_seed, "eval", kind, round(m_r * 10000), i),
        )
        scores.append(model.score(perturb(s, spec)))
        labels.append(s.label)
    return compute_metrics(scores, labels)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _manifest_doc(flat_config: dict, checkpoint_sha: str, metrics: dict) -> dict:
    doc = {
        "format_version": 1,
        "config": flat_config,
        "seed": flat_config["seed"],
        "checkpoint_sha256": checkpoint_sha,
        "metrics": metrics,
    }
    canonical = json.dumps(doc, sort_keys=True).encode("utf-8")
    doc["manifest_hash"] = hashlib.sha256(canonical).hexdigest()
    return doc


def _metric_dict(report: MetricReport) -> dict:
    return {
        "accuracy": report.accuracy,
        "macro_f1": report.macro_f1,
        "auc": report.auc,
        "n": report.n_samples,
    }


def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_train(config_path, out_dir=None, seed_override: int | None = None) -> dict:
    """Train on the generated train split; write checkpoint, manifest,
    history CSV, and a timing sidecar. Returns the artifact paths."""
    t0 = time.monotonic()
    run_cfg = load_config(config_path)
    if seed_override is not None:
        values = run_cfg.to_flat()
        values["seed"] = int(seed_override)
        run_cfg = run_config_from_values(values)
    out = resolve_out_dir(out_dir)

    train_set = gen_dataset(run_cfg.generator, "train")
    val_set = gen_dataset(run_cfg.generator, "val")
    params, history = train_loop(
        train_set, run_cfg.model, run_cfg.schedule, Rng(run_cfg.seed).derive("train")
    )

    ckpt_path = out / "checkpoint.json"
    save_checkpoint(
        ckpt_path,
        params,
        run_cfg.model,
        dataset_config={
            k: getattr(run_cfg.generator, k)
            for k in GeneratorConfig.__dataclass_fields__
        },
        seed=run_cfg.seed,
    )
    history_path = out / "history.csv"
    history_path.write_text(history_csv(history), encoding="utf-8", newline="\n")

    model = TrainedModel(kind="graph", cfg=run_cfg.model, params=params)
    val_metrics = eval_under(model, val_set, "black", 0.0, run_cfg.seed)
    manifest = _manifest_doc(
        run_cfg.to_flat(), _sha256_file(ckpt_path), {"val": _metric_dict(val_metrics)}
    )
    manifest_path = out / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )
    (out / "timing.txt").write_text(
        f"train_seconds={time.monotonic() - t0:.3f}\n", encoding="utf-8"
    )
    return {
        "checkpoint": ckpt_path,
        "manifest": manifest_path,
        "history": history_path,
        "train_accuracy": history[-1].train_acc,
    }


EVAL_CSV_HEADER = ["kind", "m_r", "accuracy", "macro_f1", "auc", "n"]


def run_eval(checkpoint_path, mr_list, kinds, out_dir=None) -> Path:
    """Evaluate a checkpoint on the regenerated test split under every
    (kind, masking ratio) pair; write eval.csv."""
    params, cfg, doc = load_checkpoint(checkpoint_path)
    if not doc.get("dataset_config"):
        raise ConfigError("checkpoint lacks the dataset config needed for eval")
    gen = GeneratorConfig(**doc["dataset_config"])
    seed = int(doc.get("seed") or 0)
    test_set = gen_dataset(gen, "test")
    model = TrainedModel(kind="graph", cfg=cfg, params=params)

    rows = []
    for kind in kinds:
        for m_r in mr_list:
            rep = eval_under(model, test_set, kind, m_r, seed)
            rows.append([kind, float(m_r), rep.accuracy, rep.macro_f1, rep.auc, rep.n_samples])
    out = resolve_out_dir(out_dir)
    path = out / "eval.csv"
    write_csv(path, EVAL_CSV_HEADER, rows)
    return path


ABLATE_CSV_HEADER = ["variant", "seed_index", "m_r", "accuracy", "macro_f1", "auc", "n"]


def run_ablation(
    run_cfg: RunConfig,
    n_seeds: int,
    mr_levels=(0.7, 0.8),
    kind: str = "background",
    variants=ABLATION_VARIANTS,
    keep_models: bool = False,
):
    """Train every variant on shared per-seed datasets, then evaluate at
    the stress masking levels. Returns (rows, models); models only if
    requested (seed_index -> variant -> TrainedModel)."""
    rows = []
    models: dict = {}
    for k in range(n_seeds):
        seed_k = derive_seed(run_cfg.seed, "ablate", k)
        gen = GeneratorConfig(
            **{
                **{f: getattr(run_cfg.generator, f)
                   for f in GeneratorConfig.__dataclass_fields__},
                "seed": seed_k,
            }
        )
        train_set = gen_dataset(gen, "train")
        test_set = gen_dataset(gen, "test")
        models[k] = {}
        for variant in variants:
            model = train_variant(variant, train_set, run_cfg.model, run_cfg.schedule, seed_k)
            if keep_models:
                models[k][variant] = (model, test_set, seed_k)
            for m_r in mr_levels:
                rep = eval_under(model, test_set, kind, m_r, seed_k)
                rows.append(
                    [variant, k, float(m_r), rep.accuracy, rep.macro_f1, rep.auc, rep.n_samples]
                )
    return rows, models


def run_ablate(config_path, n_seeds: int, out_dir=None) -> Path:
    run_cfg = load_config(config_path)
    rows, _ = run_ablation(run_cfg, n_seeds)
    out = resolve_out_dir(out_dir)
    path = out / "ablation.csv"
    write_csv(path, ABLATE_CSV_HEADER, rows)
    return path


SWEEP_CSV_HEADER = [
    "beta", "lambda", "g_n", "g_dim", "n_out", "n_frames",
    "m_r", "kind", "accuracy", "macro_f1", "auc", "n", "manifest",
]


def parse_grid_text(text: str) -> dict:
    """Grid file: `key=v1,v2,...` lines over the sweepable keys."""
    grid = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"grid line {lineno}: expected key=v1,v2,...")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in SWEEPABLE_KEYS:
            raise ConfigError(
                f"grid key {key!r} is not sweepable; allowed: {', '.join(SWEEPABLE_KEYS)}"
            )
        kind = _KEY_TYPES[key]
        values = [kind(v.strip()) for v in raw.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"grid key {key!r} has no values")
        grid[key] = values
    if not grid:
        raise ConfigError("grid file defines no sweepable keys")
    return grid


def _grid_cells(grid: dict) -> list:
    keys = sorted(grid)
    cells = [{}]
    for key in keys:
        cells = [{**cell, key: v} for cell in cells for v in grid[key]]
    return cells


def run_sweep(
    config_path, grid_path, out_dir=None, m_r: float = 0.8, kind: str = "background"
) -> Path:
    """One training run per grid cell, evaluated at the stress level.
    Each cell writes its own manifest; cells whose manifest already
    exists are skipped, so an interrupted sweep resumes cleanly."""
    base = load_config(config_path)
    grid_file = Path(grid_path)
    if not grid_file.is_file():
        raise ConfigError(f"grid file not found: {grid_path}")
    grid = parse_grid_text(grid_file.read_text(encoding="utf-8"))
    out = resolve_out_dir(out_dir)
    cell_dir = out / "sweep_cells"
    cell_dir.mkdir(exist_ok=True)

    rows = []
    for cell in _grid_cells(grid):
        values = {**base.to_flat(), **cell}
        run_cfg = run_config_from_values(values)
        cell_id = hashlib.sha256(
            json.dumps({**values, "m_r": m_r, "kind": kind}, sort_keys=True).encode()
        ).hexdigest()[:16]
        manifest_path = cell_dir / f"cell_{cell_id}.json"
        if manifest_path.is_file():
            doc = json.loads(manifest_path.read_text(encoding="utf-8"))
        else:
            train_set = gen_dataset(run_cfg.generator, "train")
            test_set = gen_dataset(run_cfg.generator, "test")
            params, _ = train_loop(
                train_set, run_cfg.model, run_cfg.schedule,
                Rng(run_cfg.seed).derive("train"),
            )
            model = TrainedModel(kind="graph", cfg=run_cfg.model, params=params)
            rep = eval_under(model, test_set, kind, m_r, run_cfg.seed)
            doc = _manifest_doc(
                values, "", {"stress": {**_metric_dict(rep), "m_r": m_r, "kind": kind}}
            )
            manifest_path.write_text(
                json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
            )
        stress = doc["metrics"]["stress"]
        rows.append(
            [
                doc["config"]["beta"], doc["config"]["lambda"], doc["config"]["g_n"],
                doc["config"]["g_dim"], doc["config"]["n_out"], doc["config"]["n_frames"],
                stress["m_r"], stress["kind"], stress["accuracy"], stress["macro_f1"],
                stress["auc"], stress["n"], manifest_path.name,
            ]
        )
    rows.sort(key=lambda r: (r[10] is None, -(r[10] if r[10] is not None else 0.0)))
    path = out / "sweep.csv"
    write_csv(path, SWEEP_CSV_HEADER, rows)
    return path


def run_spectral(
    config_path=None,
    checkpoint_path=None,
    out_dir=None,
    n_graphs: int = 8,
    noise_m_r: float = 0.5,
) -> tuple[Path, Path]:
    """Spectral report over sampled test graphs.

    spectrum.csv: one row per eigenvalue of the graph's normalized
    Laplacian, with the analytic cascade response at that frequency for
    k = 1..g_n propagation steps. smoothness.csv: per-graph mean of
    ||(L x)_i|| / ||x_i|| split into valid vs invalid nodes, for clean
    and noise-perturbed copies of each sample.
    """
    if checkpoint_path is not None:
        params, cfg, doc = load_checkpoint(checkpoint_path)
        if not doc.get("dataset_config"):
            raise ConfigError("checkpoint lacks the dataset config needed for spectral")
        gen = GeneratorConfig(**doc["dataset_config"])
        seed = int(doc.get("seed") or 0)
    elif config_path is not None:
        run_cfg = load_config(config_path)
        cfg, gen, seed = run_cfg.model, run_cfg.generator, run_cfg.seed
        params = ModelParams.init(cfg, Rng(seed).derive("init"))
    else:
        raise ConfigError("spectral needs a config or a checkpoint")

    test_set = gen_dataset(gen, "test")[:n_graphs]
    ks = list(range(1, cfg.g_n + 1))
    spectrum_rows = []
    smooth_rows = []
    for gid, clean in enumerate(test_set):
        noisy = perturb(
            clean,
            PerturbationSpec(
                kind="noise", m_r=noise_m_r, strength=1.0,
                rng_seed=derive_seed(seed, "spectral", gid),
            ),
        )
        for tag, sample in (("clean", clean), ("noise", noisy)):
            _, _, x = encode(sample, params, cfg)
            adj = build_graph(x, cfg.beta, cfg.keep_gram_diagonal)
            lap = normalized_laplacian(adj)
            eigvals, _ = sym_eigen(lap.l)
            if tag == "clean":
                for lam in eigvals:
                    lam_c = min(max(float(lam), 0.0), 2.0)
                    spectrum_rows.append(
                        [gid, lam_c] + [cascade_response(lam_c, k) for k in ks]
                    )
            filtered = laplacian_prefilter(lap, x)
            node_valid = np.repeat(sample.frame_valid, cfg.h * cfg.w)
            ratios = np.full(x.shape[0], np.nan)
            norms = np.linalg.norm(x, axis=1)
            nz = norms > 0
            ratios[nz] = np.linalg.norm(filtered[nz], axis=1) / norms[nz]
            groups = {}
            for name, mask in (("valid", node_valid), ("invalid", ~node_valid)):
                vals = ratios[mask & ~np.isnan(ratios)]
                groups[name] = (len(vals), float(vals.mean()) if len(vals) else None)
            smooth_rows.append(
                [gid, tag, groups["valid"][0], groups["invalid"][0],
                 groups["valid"][1], groups["invalid"][1]]
            )

    out = resolve_out_dir(out_dir)
    spectrum_path = out / "spectrum.csv"
    write_csv(
        spectrum_path,
        ["graph_id", "lambda"] + [f"response_k{k}" for k in ks],
        spectrum_rows,
    )
    smooth_path = out / "smoothness.csv"
    write_csv(
        smooth_path,
        ["graph_id", "perturbation", "n_valid", "n_invalid", "valid_ratio", "invalid_ratio"],
        smooth_rows,
    )
    return spectrum_path, smooth_path
