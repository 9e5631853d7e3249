"""Segmentation, noise injection, splitting, synthetic signals, and the dataset container."""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Literal

import numpy as np

from .errors import ContractViolation, FormatError

NoiseKind = Literal["gaussian", "laplace", "none"]


@dataclass(frozen=True)
class SegmentationSpec:
    """One window covers ``q`` shaft rotations: ``L = q * fs * 60 / rpm`` samples."""

    rpm: float = 900.0
    fs: float = 64000.0
    q: int = 1
    crop_to: int = 4096

    @property
    def window_length(self) -> int:
        return int(Fraction(self.q) * Fraction(self.fs) * 60 / Fraction(self.rpm))

    def validate(self) -> None:
        if self.rpm <= 0 or self.fs <= 0:
            raise ContractViolation("rpm and fs must be positive")
        if int(self.q) != self.q or self.q < 1:
            raise ContractViolation(f"q must be a positive integer, got {self.q}")
        if self.crop_to <= 0 or self.crop_to % 512:
            raise ContractViolation(f"crop_to must be a positive multiple of 512, got {self.crop_to}")
        if self.crop_to > self.window_length:
            raise ContractViolation(f"crop_to {self.crop_to} exceeds window length {self.window_length}")


def segment_signal(signal, spec: SegmentationSpec) -> np.ndarray:
    """Non-overlapping windows of ``spec.window_length``, each centre-cropped.

    Returns a ``count x crop_to`` array; a signal shorter than one window
    gives zero rows.
    """
    spec.validate()
    x = np.asarray(signal, dtype=np.float64).reshape(-1)
    length = spec.window_length
    count = x.size // length
    start = (length - spec.crop_to) // 2
    windows = x[: count * length].reshape(count, length)
    return windows[:, start : start + spec.crop_to].copy()


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind = "none"
    snr_db: float = 0.0
    seed: int = 0
    # rescale each draw so its realised power equals the target exactly
    calibrate: bool = True

    def describe(self) -> str:
        if self.kind == "none":
            return "none"
        return f"{self.kind} snr={self.snr_db:g}dB seed={self.seed}"


def noise_power(signal_power: float, snr_db: float) -> float:
    """Noise power giving ``10 log10(P_signal / P_noise) = snr_db``."""
    return signal_power / 10.0 ** (snr_db / 10.0)


def draw_noise(kind: NoiseKind, power: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. zero-mean noise with variance ``power``."""
    if kind == "gaussian":
        return rng.normal(0.0, np.sqrt(power), size)
    if kind == "laplace":
        return rng.laplace(0.0, np.sqrt(power / 2.0), size)
    raise ContractViolation(f"unknown noise kind {kind!r}")


def inject_noise(segment, spec: NoiseSpec, index: int = 0) -> np.ndarray:
    """Add noise at ``spec.snr_db`` relative to the segment's mean-square power.

    The generator is seeded by ``(spec.seed, index)`` so each segment of a
    dataset gets an independent, reproducible draw.
    """
    x = np.asarray(segment, dtype=np.float64)
    if spec.kind == "none":
        return x.copy()
    p_signal = float(np.mean(x * x))
    if p_signal == 0.0:
        raise ContractViolation("cannot set an SNR on an all-zero segment")
    target = noise_power(p_signal, spec.snr_db)
    rng = np.random.default_rng([int(spec.seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    noise = draw_noise(spec.kind, target, x.size, rng).reshape(x.shape)
    if spec.calibrate:
        noise *= np.sqrt(target / np.mean(noise * noise))
    return x + noise


def achieved_snr_db(clean, noisy) -> float:
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noisy, dtype=np.float64) - clean
    return float(10.0 * np.log10(np.mean(clean * clean) / np.mean(noise * noise)))


@dataclass
class DatasetContainer:
    """Labelled fixed-length segments, stored as 32-bit floats."""

    samples: np.ndarray
    labels: np.ndarray
    class_count: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.samples.ndim != 2:
            if self.samples.size == 0:
                self.samples = self.samples.reshape(0, int(self.meta.get("segment_length", 0)))
            else:
                raise ContractViolation("samples must be a 2D array (segments x length)")
        if self.labels.shape != (self.samples.shape[0],):
            raise ContractViolation("one label per segment required")
        if not 0 < self.class_count < 256:
            raise ContractViolation(f"class_count must be in [1, 255], got {self.class_count}")
        if self.labels.size and int(self.labels.max()) >= self.class_count:
            raise ContractViolation("label outside [0, class_count)")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def segment_length(self) -> int:
        return self.samples.shape[1]

    def subset(self, index) -> DatasetContainer:
        index = np.asarray(index, dtype=np.int64)
        return DatasetContainer(self.samples[index], self.labels[index], self.class_count, dict(self.meta))


def add_noise(d: DatasetContainer, spec: NoiseSpec) -> DatasetContainer:
    """Noisy copy of every segment; segment ``i`` uses stream ``(seed, i)``."""
    noisy = np.stack([inject_noise(s, spec, i) for i, s in enumerate(d.samples)]) if len(d) else d.samples
    meta = dict(d.meta, noise=spec.describe())
    return DatasetContainer(noisy, d.labels.copy(), d.class_count, meta)


def split_counts(n: int) -> tuple[int, int, int]:
    n_train, n_val = (8 * n) // 10, n // 10
    return n_train, n_val, n - n_train - n_val


def _apportion(sizes: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder quotas proportional to ``sizes`` that sum to ``total``."""
    whole = int(sizes.sum())
    exact = [Fraction(total * int(s), whole) for s in sizes]
    quota = np.array([int(e) for e in exact])
    order = sorted(range(len(sizes)), key=lambda k: (-(exact[k] - quota[k]), k))
    for k in order[: total - int(quota.sum())]:
        quota[k] += 1
    return quota


def split_dataset(d: DatasetContainer, seed: int) -> tuple[DatasetContainer, DatasetContainer, DatasetContainer]:
    """8:1:1 train/val/test split with floor rounding for train and val.

    Stratified by class when every class has at least 10 segments.
    """
    n = len(d)
    if n == 0:
        raise ContractViolation("cannot split an empty dataset")
    n_train, n_val, _ = split_counts(n)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    counts = np.bincount(d.labels, minlength=d.class_count)
    present = counts[counts > 0]
    if present.min() >= 10:
        by_class = [perm[d.labels[perm] == c] for c in range(d.class_count)]
        sizes = np.array([len(b) for b in by_class])
        q_train = _apportion(sizes, n_train)
        q_val = _apportion(sizes - q_train, n_val)
        parts = ([], [], [])
        for members, a, v in zip(by_class, q_train, q_val):
            parts[0].extend(members[:a])
            parts[1].extend(members[a : a + v])
            parts[2].extend(members[a + v :])
        # restore the global permutation order inside each partition
        rank = np.empty(n, dtype=np.int64)
        rank[perm] = np.arange(n)
        train, val, test = (np.array(sorted(p, key=lambda i: rank[i]), dtype=np.int64) for p in parts)
    else:
        train, val, test = perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]
    return d.subset(train), d.subset(val), d.subset(test)


# -- synthetic bearing-like signals ---------------------------------------

BACKGROUND_STD = 0.1
RING_DECAY_S = 6e-4


def characteristic_hz(label: int) -> float:
    """Impulse repetition rate of fault class ``label`` (>= 1)."""
    return 120.0 * (1.0 + 1.6 * (label - 1))


def resonance_hz(label: int) -> float:
    return 4000.0 + 1500.0 * (label - 1)


def synth_segment(label: int, length: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(length) / fs
    x = rng.normal(0.0, BACKGROUND_STD, length)
    if label == 0:
        return x
    amplitude = rng.uniform(0.8, 1.2)
    period = 1.0 / characteristic_hz(label)
    ring = resonance_hz(label)
    start = rng.uniform(0.0, period)
    span = int(np.ceil(20 * RING_DECAY_S * fs))  # ringing below e^-20 is dropped
    for onset in np.arange(start, t[-1], period):
        first = int(np.ceil(onset * fs))
        dt = t[first : first + span] - onset
        a = amplitude * rng.uniform(0.8, 1.2)
        x[first : first + span] += a * np.exp(-dt / RING_DECAY_S) * np.sin(2.0 * np.pi * ring * dt)
    return x


def synth_generate(classes: int, per_class: int, length: int, fs: float, seed: int) -> DatasetContainer:
    """Balanced synthetic dataset: class 0 is background only, classes >= 1
    add a decaying impulse train at :func:`characteristic_hz`."""
    if classes < 1 or per_class < 1:
        raise ContractViolation("classes and per_class must be positive")
    if length <= 0 or length % 512:
        raise ContractViolation(f"length must be a positive multiple of 512, got {length}")
    if fs <= 0:
        raise ContractViolation("fs must be positive")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(classes), per_class)
    samples = np.stack([synth_segment(int(k), length, fs, rng) for k in labels])
    meta = {"fs": fs, "noise": "none", "source": f"synthetic seed={seed}"}
    return DatasetContainer(samples, labels, classes, meta)


# -- container format ---------------------------------------------------

MAGIC = b"LSRD"
VERSION = 1
DTYPE_F32 = 1
HEADER = struct.Struct("<4sBBHIII")


def write_container(d: DatasetContainer) -> bytes:
    """Serialize: 20-byte header, per segment a label byte and f32 samples, CRC-32."""
    n, length = d.samples.shape
    head = HEADER.pack(MAGIC, VERSION, DTYPE_F32, 0, n, length, d.class_count)
    rows = np.empty((n, 1 + 4 * length), dtype=np.uint8)
    rows[:, 0] = d.labels
    rows[:, 1:] = np.ascontiguousarray(d.samples, dtype="<f4").view(np.uint8).reshape(n, 4 * length)
    body = head + rows.tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def read_container(data: bytes) -> DatasetContainer:
    if len(data) < HEADER.size + 4:
        raise FormatError("stream shorter than header and checksum", len(data))
    magic, version, dtype, reserved, n, length, classes = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if dtype != DTYPE_F32:
        raise FormatError(f"unsupported dtype code {dtype}", 5)
    if reserved != 0:
        raise FormatError("reserved header bytes must be zero", 6)
    expected = HEADER.size + n * (1 + 4 * length) + 4
    if len(data) != expected:
        raise FormatError(f"expected {expected} bytes for {n} segments, got {len(data)}", min(len(data), expected))
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("checksum mismatch", len(data) - 4)
    if classes == 0 or classes > 255:
        raise FormatError(f"class count {classes} out of range", 16)
    rows = np.frombuffer(body, dtype=np.uint8, offset=HEADER.size).reshape(n, 1 + 4 * length)
    labels = rows[:, 0].copy()
    if n and int(labels.max()) >= classes:
        bad = int(np.argmax(labels >= classes))
        raise FormatError("label outside class range", HEADER.size + bad * (1 + 4 * length))
    samples = rows[:, 1:].copy().view("<f4").reshape(n, length).astype(np.float32)
    return DatasetContainer(samples, labels, classes, {"segment_length": length})
