"""Synthetic benchmark generator with planted patterns and noise.

Plants class-specific and shared feature patterns into an empty binary
matrix, adds per-row additive flips and per-cell destructive flips, then
assigns labels that keep the generating class with a configurable
fidelity. Row randomness comes from per-row substreams of the master
seed, so the output does not depend on generation order or worker count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .data import BinaryDataset, LabeledDataset, Pattern


class SpecError(ValueError):
    """Infeasible generation parameters."""


@dataclass
class SyntheticSpec:
    n_per_class: int = 1000
    m: int = 1000
    K: int = 2
    patterns_per_class: int = 10
    shared_patterns: int = 20
    class_len_lo: int = 5
    class_len_hi: int = 15
    shared_len_frac_lo: float = 0.01
    shared_len_frac_hi: float = 0.025
    planted_class_per_row: int = 3
    planted_shared_per_row: int = 2
    additive_flips: int = 10
    destructive_prob: float = 0.025
    label_fidelity: float = 0.9
    seed: int = 0

    def shared_len_bounds(self) -> tuple[int, int]:
        return (math.ceil(self.shared_len_frac_lo * self.m),
                math.ceil(self.shared_len_frac_hi * self.m))

    def validate(self) -> None:
        if self.n_per_class < 1 or self.K < 2:
            raise SpecError("need at least one row per class and K >= 2")
        if not 1 <= self.class_len_lo <= self.class_len_hi:
            raise SpecError("class pattern length bounds out of order")
        if self.m < self.class_len_hi:
            raise SpecError(
                f"m={self.m} smaller than the maximum class pattern length "
                f"{self.class_len_hi}")
        if self.planted_class_per_row > self.patterns_per_class:
            raise SpecError("cannot plant more class patterns per row than exist")
        if self.planted_shared_per_row > self.shared_patterns:
            raise SpecError("cannot plant more shared patterns per row than exist")
        if not 0 <= self.destructive_prob <= 1 or not 0 <= self.label_fidelity <= 1:
            raise SpecError("probabilities must lie in [0, 1]")
        if self.additive_flips < 0:
            raise SpecError("additive_flips must be >= 0")
        if self.shared_patterns > 0:
            lo, hi = self.shared_len_bounds()
            if lo < 1 or hi > self.m or lo > hi:
                raise SpecError(f"shared pattern length range [{lo}, {hi}] infeasible")


@dataclass
class GroundTruth:
    class_patterns: list[list[Pattern]]
    shared_patterns: list[Pattern] = field(default_factory=list)

    def to_json(self, spec: SyntheticSpec | None = None) -> str:
        obj = {
            "class_patterns": [[list(p.features) for p in pats]
                               for pats in self.class_patterns],
            "shared_patterns": [list(p.features) for p in self.shared_patterns],
        }
        if spec is not None:
            obj["spec"] = asdict(spec)
        return json.dumps(obj, indent=2)

    @staticmethod
    def from_json(text: str) -> "GroundTruth":
        obj = json.loads(text)
        return GroundTruth(
            [[Pattern(p) for p in pats] for pats in obj["class_patterns"]],
            [Pattern(p) for p in obj["shared_patterns"]],
        )


def low_dim_variant(spec: SyntheticSpec) -> SyntheticSpec:
    """Low-dimensional regime: fewer class patterns, no shared ones."""
    if spec.m >= 1000:
        raise SpecError("low-dimensional variant requires m < 1000")
    out = SyntheticSpec(**asdict(spec))
    out.patterns_per_class = 5
    out.shared_patterns = 0
    out.planted_shared_per_row = 0
    return out


def _sample_patterns(rng: np.random.Generator, count: int, len_lo: int,
                     len_hi: int, m: int, taken: set) -> list[Pattern]:
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 1000 * max(count, 1):
            raise SpecError("cannot sample enough distinct patterns; "
                            "feature space too small for the requested counts")
        length = int(rng.integers(len_lo, len_hi + 1))
        feats = tuple(sorted(rng.choice(m, size=length, replace=False).tolist()))
        if feats in taken:
            continue
        taken.add(feats)
        out.append(Pattern(feats))
    return out


def _row_rng(seed: int, row: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(row,)))


def _make_row(spec: SyntheticSpec, class_patterns: list[list[Pattern]],
              shared: list[Pattern], row_id: int) -> tuple[list[int], int]:
    """One row from its own substream; depends only on (spec, row_id)."""
    k = row_id // spec.n_per_class
    rng = _row_rng(spec.seed, row_id)
    chosen = rng.choice(spec.patterns_per_class,
                        size=spec.planted_class_per_row, replace=False)
    planted: set[int] = set()
    for c in chosen:
        planted.update(class_patterns[k][int(c)].features)
    if spec.planted_shared_per_row > 0:
        for c in rng.choice(spec.shared_patterns,
                            size=spec.planted_shared_per_row, replace=False):
            planted.update(shared[int(c)].features)

    cells = planted
    if spec.additive_flips > 0:
        zeros = np.setdiff1d(np.arange(spec.m),
                             np.fromiter(planted, dtype=np.int64),
                             assume_unique=False)
        take = min(spec.additive_flips, zeros.size)
        additive = rng.choice(zeros, size=take, replace=False)
        cells = planted | set(int(j) for j in additive)

    if spec.destructive_prob > 0 and planted:
        # destructive noise hits planted cells only, once per cell
        plist = np.fromiter(sorted(planted), dtype=np.int64)
        keep = rng.random(plist.size) >= spec.destructive_prob
        dropped = set(plist[~keep].tolist())
        cells = cells - dropped

    if rng.random() < spec.label_fidelity or spec.K == 1:
        label = k
    else:
        other = int(rng.integers(spec.K - 1))
        label = other if other < k else other + 1
    return sorted(cells), label


def _make_chunk(args) -> list[tuple[list[int], int]]:
    spec, class_patterns, shared, start, stop = args
    return [_make_row(spec, class_patterns, shared, i) for i in range(start, stop)]


def generate(spec: SyntheticSpec,
             workers: int = 1) -> tuple[LabeledDataset, GroundTruth]:
    """Build the planted dataset and return it with its ground truth.

    Rows use per-row RNG substreams, so the output is byte-identical at
    any worker count.
    """
    spec.validate()
    if workers < 1:
        raise SpecError("workers must be >= 1")
    master = np.random.default_rng(spec.seed)
    taken: set = set()
    class_patterns = [
        _sample_patterns(master, spec.patterns_per_class, spec.class_len_lo,
                         spec.class_len_hi, spec.m, taken)
        for _ in range(spec.K)
    ]
    if spec.shared_patterns > 0:
        lo, hi = spec.shared_len_bounds()
        shared = _sample_patterns(master, spec.shared_patterns, lo, hi, spec.m, taken)
    else:
        shared = []

    n = spec.K * spec.n_per_class
    if workers == 1:
        made = [_make_row(spec, class_patterns, shared, i) for i in range(n)]
    else:
        bounds = np.linspace(0, n, workers + 1, dtype=int)
        chunks = [(spec, class_patterns, shared, int(a), int(b))
                  for a, b in zip(bounds, bounds[1:])]
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            made = [row for chunk in pool.map(_make_chunk, chunks) for row in chunk]

    rows = [cells for cells, _ in made]
    labels = np.array([label for _, label in made], dtype=np.int64)
    data = BinaryDataset(rows, spec.m)
    return LabeledDataset(data, labels, K=spec.K), GroundTruth(class_patterns, shared)
