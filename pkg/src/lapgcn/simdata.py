"""Synthetic sequence generator and the corruption protocol.

A sample is an (N, h, w, c_raw) tensor: N frames of an h x w grid of
feature cells. Clean frames carry a class signature vector in every
cell plus i.i.d. jitter. Fake samples additionally inject an artifact
signature (on its own channels) into one contiguous cell block, held
fixed across the sample's frames: authentic content is smooth across
frames, manipulation adds a localized, structured inconsistency.

Corruptions mirror a degraded capture pipeline:
  black        - frame replaced by zeros (failed detection)
  background   - frame replaced by unit isotropic noise (misdetection)
  sunglass     - a fixed "eye" row band zeroed (occlusion)
  blur         - box smoothing blended into a random patch
  noise        - Gaussian noise added to a random patch
  adversarial  - bounded uniform noise over whole frames, which also
                 marks those frames invalid (detector defeated)

Global kinds (black/background/adversarial) flip frame_valid; local
kinds keep frames valid. All randomness flows from explicit seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numkit import Rng

__all__ = [
    "GLOBAL_KINDS",
    "LOCAL_KINDS",
    "PERTURBATION_KINDS",
    "PerturbationSpec",
    "SequenceSample",
    "GeneratorConfig",
    "frames_affected",
    "gen_dataset",
    "apply_masking",
    "apply_local_perturbation",
    "perturb",
    "shuffle_frames",
    "permute_frames",
    "save_split",
    "load_split",
]

GLOBAL_KINDS = ("black", "background")
LOCAL_KINDS = ("sunglass", "blur", "noise", "adversarial")
PERTURBATION_KINDS = GLOBAL_KINDS + LOCAL_KINDS


def frames_affected(m_r: float, n_frames: int) -> int:
    """round(m_r * N) with deterministic half-up tie breaking."""
    if not 0.0 <= m_r <= 1.0:
        raise ValueError(f"masking ratio must be in [0, 1], got {m_r}")
    return int(np.floor(m_r * n_frames + 0.5))


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str
    m_r: float
    strength: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ConfigError(
                f"unknown perturbation kind {self.kind!r}; "
                f"expected one of {', '.join(PERTURBATION_KINDS)}"
            )
        if not 0.0 <= self.m_r <= 1.0:
            raise ValueError(f"m_r must be in [0, 1], got {self.m_r}")
        if self.strength < 0.0:
            raise ValueError(f"strength must be >= 0, got {self.strength}")


@dataclass
class SequenceSample:
    raw: np.ndarray  # (N, h, w, c_raw) float64
    label: int  # 0 = real, 1 = fake
    frame_valid: np.ndarray  # (N,) bool
    perturbation: PerturbationSpec | None = None

    @property
    def n_frames(self) -> int:
        return self.raw.shape[0]

    def copy(self) -> "SequenceSample":
        return SequenceSample(
            raw=self.raw.copy(),
            label=self.label,
            frame_valid=self.frame_valid.copy(),
            perturbation=self.perturbation,
        )


@dataclass(frozen=True)
class GeneratorConfig:
    n_frames: int = 16
    h: int = 4
    w: int = 4
    c_raw: int = 8
    jitter: float = 0.1
    artifact_scale: float = 1.0
    n_train: int = 48
    n_val: int = 16
    n_test: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.n_frames < 1 or self.h < 1 or self.w < 1 or self.c_raw < 2:
            raise ConfigError(
                f"invalid generator dims N={self.n_frames} h={self.h} "
                f"w={self.w} c_raw={self.c_raw}"
            )
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ConfigError("every split size must be >= 1")
        real, artifact = self.signatures()
        fake = real + artifact
        cos = float(real @ fake / (np.linalg.norm(real) * np.linalg.norm(fake)))
        if cos >= 0.99:
            raise ConfigError(
                f"real/fake signatures too similar (cosine {cos:.4f}); "
                "increase artifact_scale"
            )

    def signatures(self) -> tuple[np.ndarray, np.ndarray]:
        """(real signature, fake artifact signature), on disjoint channels.

        The real signature occupies the first half of the channels, the
        artifact the second half, so class means differ only in the
        artifact channels.
        """
        rng = Rng(self.seed).derive("signatures")
        half = self.c_raw // 2
        real = np.zeros(self.c_raw)
        real[:half] = rng.uniform(0.5, 1.5, half)
        artifact = np.zeros(self.c_raw)
        artifact[half:] = rng.uniform(0.5, 1.5, self.c_raw - half) * self.artifact_scale
        return real, artifact

    def block_shape(self) -> tuple[int, int]:
        return max(1, round(self.h / 2)), max(1, round(self.w / 2))

    def split_size(self, split: str) -> int:
        try:
            return {"train": self.n_train, "val": self.n_val, "test": self.n_test}[split]
        except KeyError:
            raise ConfigError(f"unknown split {split!r}") from None


def gen_dataset(cfg: GeneratorConfig, split: str = "train") -> list[SequenceSample]:
    """Generate one clean split. Labels alternate, so they are balanced
    within one sample; everything is a pure function of (cfg, split)."""
    real_sig, artifact_sig = cfg.signatures()
    bh, bw = cfg.block_shape()
    samples = []
    for i in range(cfg.split_size(split)):
        rng = Rng(cfg.seed).derive("data", split, i)
        label = i % 2
        raw = np.empty((cfg.n_frames, cfg.h, cfg.w, cfg.c_raw))
        raw[:] = real_sig
        raw += rng.normal(0.0, cfg.jitter, raw.shape) if cfg.jitter > 0 else 0.0
        if label == 1:
            r0 = int(rng.integers(0, cfg.h - bh + 1))
            c0 = int(rng.integers(0, cfg.w - bw + 1))
            raw[:, r0 : r0 + bh, c0 : c0 + bw, :] += artifact_sig
        samples.append(
            SequenceSample(
                raw=raw,
                label=label,
                frame_valid=np.ones(cfg.n_frames, dtype=bool),
            )
        )
    return samples


def _selected_frames(rng: Rng, n_frames: int, m_r: float) -> np.ndarray:
    k = frames_affected(m_r, n_frames)
    return np.sort(rng.choice(n_frames, k)) if k else np.empty(0, dtype=int)


def apply_masking(
    s: SequenceSample, kind: str, m_r: float, rng: Rng
) -> SequenceSample:
    """Overwrite round(m_r * N) uniformly chosen frames and mark them invalid.

    black: zeros. background: unit-variance isotropic noise, uncorrelated
    with the class signatures.
    """
    if kind not in GLOBAL_KINDS:
        raise ConfigError(f"masking kind must be one of {GLOBAL_KINDS}, got {kind!r}")
    out = s.copy()
    idx = _selected_frames(rng, s.n_frames, m_r)
    for f in idx:
        if kind == "black":
            out.raw[f] = 0.0
        else:
            out.raw[f] = rng.normal(0.0, 1.0, s.raw.shape[1:])
        out.frame_valid[f] = False
    out.perturbation = PerturbationSpec(kind=kind, m_r=m_r, rng_seed=rng.seed)
    return out


def _eye_band(h: int) -> slice:
    """Fixed 'eye region' row band of the grid: start at h//4, height
    max(1, h//4)."""
    start = h // 4
    return slice(start, start + max(1, h // 4))


def _patch_box_mean(patch: np.ndarray) -> np.ndarray:
    """3x3 box mean over the patch, border-clipped, per channel. The
    smoothing never reads outside the patch, so a constant patch is a
    fixed point."""
    ph, pw = patch.shape[:2]
    out = np.empty_like(patch)
    for i in range(ph):
        for j in range(pw):
            region = patch[max(0, i - 1) : i + 2, max(0, j - 1) : j + 2]
            out[i, j] = region.mean(axis=(0, 1))
    return out


def apply_local_perturbation(s: SequenceSample, spec: PerturbationSpec) -> SequenceSample:
    """Apply one of the local/adversarial corruption kinds per its spec.

    sunglass zeroes the eye row band on the selected frames (strength-free).
    blur blends a patch-confined box smoothing into a random patch.
    noise adds Gaussian noise of the given strength to a random patch.
    adversarial adds bounded uniform noise to every cell of the selected
    frames and marks them invalid (the one local kind that destroys the
    frame outright). Strength 0 is the identity for blur/noise/adversarial.
    """
    if spec.kind not in LOCAL_KINDS:
        raise ConfigError(
            f"local perturbation kind must be one of {LOCAL_KINDS}, got {spec.kind!r}"
        )
    out = s.copy()
    out.perturbation = spec
    if spec.kind != "sunglass" and spec.strength == 0.0:
        return out

    n, h, w, _ = s.raw.shape
    rng = Rng(spec.rng_seed).derive("perturb", spec.kind)
    idx = _selected_frames(rng, n, spec.m_r)

    if spec.kind == "sunglass":
        band = _eye_band(h)
        for f in idx:
            out.raw[f, band, :, :] = 0.0
        return out

    if spec.kind == "adversarial":
        for f in idx:
            out.raw[f] += rng.uniform(-spec.strength, spec.strength, s.raw.shape[1:])
            out.frame_valid[f] = False
        return out

    # blur and noise share a random patch, fixed across the selected frames
    ph, pw = max(1, round(h / 2)), max(1, round(w / 2))
    r0 = int(rng.integers(0, h - ph + 1))
    c0 = int(rng.integers(0, w - pw + 1))
    rows, cols = slice(r0, r0 + ph), slice(c0, c0 + pw)
    if spec.kind == "blur":
        alpha = min(spec.strength, 1.0)
        for f in idx:
            patch = out.raw[f, rows, cols]
            out.raw[f, rows, cols] = (1.0 - alpha) * patch + alpha * _patch_box_mean(patch)
    else:
        for f in idx:
            out.raw[f, rows, cols] += rng.normal(
                0.0, spec.strength, out.raw[f, rows, cols].shape
            )
    return out


def perturb(s: SequenceSample, spec: PerturbationSpec) -> SequenceSample:
    """Single dispatch point over all corruption kinds."""
    if spec.kind in GLOBAL_KINDS:
        masked = apply_masking(s, spec.kind, spec.m_r, Rng(spec.rng_seed))
        masked.perturbation = spec
        return masked
    return apply_local_perturbation(s, spec)


def permute_frames(s: SequenceSample, perm: np.ndarray) -> SequenceSample:
    perm = np.asarray(perm)
    return SequenceSample(
        raw=s.raw[perm].copy(),
        label=s.label,
        frame_valid=s.frame_valid[perm].copy(),
        perturbation=s.perturbation,
    )


def shuffle_frames(s: SequenceSample, rng: Rng) -> SequenceSample:
    """Permute the frame slabs and the validity mask together."""
    return permute_frames(s, rng.permutation(s.n_frames))


_MAGIC = b"lapgcn-split-v1\n"


def save_split(path, cfg: GeneratorConfig, samples: list[SequenceSample]) -> None:
    """Binary split dump: magic line, JSON header line, then per-sample
    records (label byte, validity bytes, raw float64 little-endian).
    Round-trips bit-exactly."""
    header = {
        "config": {k: getattr(cfg, k) for k in GeneratorConfig.__dataclass_fields__},
        "n_samples": len(samples),
    }
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for s in samples:
            f.write(bytes([s.label]))
            f.write(s.frame_valid.astype(np.uint8).tobytes())
            f.write(s.raw.astype("<f8").tobytes())


def load_split(path) -> tuple[GeneratorConfig, list[SequenceSample]]:
    with open(path, "rb") as f:
        if f.readline() != _MAGIC:
            raise ConfigError(f"{path} is not a dataset split file")
        header = json.loads(f.readline().decode("utf-8"))
        cfg = GeneratorConfig(**header["config"])
        shape = (cfg.n_frames, cfg.h, cfg.w, cfg.c_raw)
        n_bytes = int(np.prod(shape)) * 8
        samples = []
        for _ in range(header["n_samples"]):
            label = f.read(1)[0]
            valid = np.frombuffer(f.read(cfg.n_frames), dtype=np.uint8).astype(bool)
            raw = np.frombuffer(f.read(n_bytes), dtype="<f8").reshape(shape).copy()
            samples.append(SequenceSample(raw=raw, label=int(label), frame_valid=valid))
    return cfg, samples
