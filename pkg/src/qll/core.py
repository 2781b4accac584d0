"""Core domain types shared by every other module.

Soft labels, labeled examples, dataset containers, class priors for the
positive-unlabeled decomposition, and the deterministic stream-splitting
RNG that every randomized operation draws from.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SoftLabel",
    "LabeledExample",
    "AmbiguousDataset",
    "GenMeta",
    "ClassPriors",
    "RngStream",
    "STREAM_DATAGEN",
    "STREAM_BATCHING",
    "STREAM_INIT",
    "STREAM_ALPHA",
    "entropy",
    "quantize_label",
    "zero_one_test_risk",
]

_MASK64 = (1 << 64) - 1

# Purpose tags for top-level substreams. Keeping dataset generation, batch
# shuffling, parameter init, and alpha sampling on separate streams means
# consuming draws from one never shifts another.
STREAM_DATAGEN = 1
STREAM_BATCHING = 2
STREAM_INIT = 3
STREAM_ALPHA = 4


def _mix64(x: int) -> int:
    """SplitMix64 finalizer; a bijection on 64-bit words."""
    x &= _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class RngStream:
    """Deterministic random stream keyed by (seed, stream_id).

    The generator is counter-based (Philox keyed by a hash mix of seed and
    stream_id), so a stream's draw sequence depends only on its own key,
    never on how many draws other streams consumed or on thread count.
    Equal keys replay the same sequence bit for bit; distinct keys give
    statistically independent streams.

    Draws advance internal state, so each stream value should have a single
    owner; concurrent users must hold distinct stream ids.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int = 0) -> None:
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        k0 = _mix64(self.seed)
        k1 = _mix64(k0 ^ self.stream_id)
        key = np.array([k0, k1], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def substream(self, key: int) -> "RngStream":
        """Derive an independent child stream; same (parent, key) -> same child."""
        child = _mix64(_mix64(self.stream_id) + (int(key) & _MASK64))
        return RngStream(self.seed, child)

    # Thin wrappers over the numpy generator so call sites stay explicit
    # about which stream they consume.
    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def multinomial(self, n: int, pvals):
        return self._gen.multinomial(n, pvals)

    def beta(self, a: float, b: float) -> float:
        return float(self._gen.beta(a, b))

    def permutation(self, n: int):
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = True):
        return self._gen.choice(n, size=size, replace=replace)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


@dataclass(frozen=True, eq=False)
class SoftLabel:
    """Ground-truth per-class probability vector of an ambiguous instance.

    The constructor normalizes nonnegative weights to unit mass, mirroring
    the quantization law P(y=k) = s_k / sum_j s_j. Negative, non-finite, or
    all-zero weights indicate caller bugs and are rejected outright.
    """

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 2:
            raise ValueError(f"soft label needs at least 2 classes, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("soft label weights must be finite")
        if np.any(w < 0.0):
            raise ValueError("soft label weights must be nonnegative")
        total = float(w.sum())
        if total <= 0.0:
            raise ValueError("soft label weights must have positive total mass")
        object.__setattr__(self, "weights", w / total)

    @property
    def num_classes(self) -> int:
        return int(self.weights.size)

    def is_onehot(self) -> bool:
        return int(np.count_nonzero(self.weights)) == 1


@dataclass(frozen=True, eq=False)
class LabeledExample:
    """One instance with its observed (quantized) hard label."""

    features: np.ndarray
    label: int

    def __post_init__(self) -> None:
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 1:
            raise ValueError(f"features must be a vector, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("features must be finite")
        if int(self.label) < 0:
            raise ValueError("label must be a nonnegative class index")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "label", int(self.label))


@dataclass
class GenMeta:
    """How a dataset was produced; written to the human-readable sidecar."""

    kind: str = "none"  # "none" | "mixup" | "patchmix"
    m: int = 0
    r: int = 0
    seed: int = 0
    extra: dict = field(default_factory=dict)


@dataclass(eq=False)
class AmbiguousDataset:
    """Feature matrix plus quantized hard labels.

    ``diagnostics`` optionally carries the ground-truth soft labels that the
    hard labels were sampled from. They exist for analysis and summaries
    only; the training path never reads them.
    """

    class_count: int
    feature_dim: int
    features: np.ndarray  # (N, d) float32
    labels: np.ndarray  # (N,) int
    diagnostics: np.ndarray | None = None  # (N, c) float32
    gen_meta: GenMeta = field(default_factory=GenMeta)

    def __post_init__(self) -> None:
        c = int(self.class_count)
        d = int(self.feature_dim)
        if c < 2:
            raise ValueError("class_count must be >= 2")
        if d < 1:
            raise ValueError("feature_dim must be >= 1")
        x = np.ascontiguousarray(np.asarray(self.features), dtype=np.float32)
        y = np.ascontiguousarray(np.asarray(self.labels), dtype=np.int64)
        if x.ndim != 2 or x.shape[1] != d:
            raise ValueError(f"features must be (N, {d}), got {x.shape}")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValueError("labels must align with features")
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        if y.size and (y.min() < 0 or y.max() >= c):
            raise ValueError(f"labels must lie in [0, {c})")
        self.class_count = c
        self.feature_dim = d
        self.features = x
        self.labels = y
        if self.diagnostics is not None:
            s = np.ascontiguousarray(np.asarray(self.diagnostics), dtype=np.float32)
            if s.shape != (x.shape[0], c):
                raise ValueError(f"diagnostics must be (N, {c}), got {s.shape}")
            if not np.all(np.isfinite(s)) or np.any(s < 0.0):
                raise ValueError("diagnostics must be finite and nonnegative")
            if np.any(s.sum(axis=1) <= 0.0):
                raise ValueError("each diagnostic row needs positive mass")
            self.diagnostics = s

    @property
    def n_examples(self) -> int:
        return int(self.labels.shape[0])

    @property
    def examples(self) -> list[LabeledExample]:
        return [
            LabeledExample(self.features[i], int(self.labels[i]))
            for i in range(self.n_examples)
        ]

    def diagnostic_soft_labels(self) -> list[SoftLabel] | None:
        if self.diagnostics is None:
            return None
        return [SoftLabel(row) for row in self.diagnostics]


@dataclass(frozen=True)
class ClassPriors:
    """The two practical positive-class priors of the class-wise PU risk.

    ``pi1`` weights the positive risk term, ``pi2`` weights the negative
    risk subtracted inside the clamp. Keeping them separate absorbs the
    positive/negative class imbalance of the one-vs-rest decomposition.
    """

    pi1: float
    pi2: float

    def __post_init__(self) -> None:
        for name, v in (("pi1", self.pi1), ("pi2", self.pi2)):
            if not (0.0 < float(v) <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1], got {v}")


def entropy(s: SoftLabel) -> float:
    """Shannon entropy of a soft label in nats.

    Measures instance ambiguity: 0 for a one-hot label (0*log 0 := 0), up
    to ln(num_classes) at the uniform label.
    """
    w = s.weights
    nz = w[w > 0.0]
    return float(-(nz * np.log(nz)).sum())


def quantize_label(s: SoftLabel, rng: RngStream) -> int:
    """Sample a hard label with P(y=k) = s_k; consumes exactly one draw."""
    u = float(rng.random())
    cdf = np.cumsum(s.weights)
    k = int(np.searchsorted(cdf, u, side="right"))
    return min(k, s.num_classes - 1)


def zero_one_test_risk(predictions, labels) -> float:
    """Fraction of mismatched predictions. Accuracy is 1 minus this value."""
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.ndim != 1 or p.shape != y.shape:
        raise ValueError(f"predictions {p.shape} and labels {y.shape} must be equal-length vectors")
    if p.size == 0:
        raise ValueError("cannot evaluate on an empty set")
    return float(np.mean(p != y))
