"""Feature importance, coverage of real traffic and CNN filter export."""

import json
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .classifiers import Classifier, Weights, samples_to_arrays
from .dataset import AnnotatedSample, Element, Sample
from .errors import DataError, FeatureOutOfRange, NoFuzzedElements, WrongFamily
from .fuzz import FuzzPlan
from .metrics import f1_score
from .models import CoverageReport, FieldCoverage, ImportanceRow, ValueSubsetRow
from .packet import Packet
from .rng import child_rng
from .schemas import find_field

DEFAULT_REPEATS = 10


def _flat_inputs(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray, tuple[int, ...]]:
    if not samples:
        raise DataError("no test samples")
    x, y = samples_to_arrays(samples)
    return x.reshape(len(y), -1), y.astype(np.int64), x.shape[1:]


def permutation_importance(
    weights: Weights,
    samples: Sequence[Sample],
    feature: int,
    repeats: int = DEFAULT_REPEATS,
    seed: int = 0,
    fields: tuple[str, ...] = (),
) -> ImportanceRow:
    """Drop in F1 when one feature column is shuffled across the samples.

    Raises:
        FeatureOutOfRange: feature is not a valid column index
    """
    model = Classifier(weights)
    x, y, shape = _flat_inputs(samples)
    return _importance(model, x, y, shape, feature, repeats, seed, fields)


def _importance(model, x, y, shape, feature, repeats, seed, fields, baseline=None) -> ImportanceRow:
    if not 0 <= feature < x.shape[1]:
        raise FeatureOutOfRange(f"feature {feature} outside 0..{x.shape[1] - 1}")
    if repeats < 1:
        raise FeatureOutOfRange(f"repeats must be >= 1, got {repeats}")

    def f1_of(data: np.ndarray) -> float:
        return f1_score(y, model.labels(model.scores(data.reshape(len(y), *shape))))

    if baseline is None:
        baseline = f1_of(x)
    permuted = []
    for r in range(repeats):
        rng = child_rng(seed, "importance", feature, r)
        shuffled = x.copy()
        shuffled[:, feature] = x[rng.permutation(len(y)), feature]
        permuted.append(f1_of(shuffled))
    mean = float(np.mean(permuted))
    return ImportanceRow(feature, baseline, mean, baseline - mean, repeats, seed, fields)


def rank_features(
    weights: Weights,
    samples: Sequence[Sample],
    repeats: int = DEFAULT_REPEATS,
    seed: int = 0,
    feature_fields: Optional[Mapping[int, tuple[str, ...]]] = None,
    features: Optional[Iterable[int]] = None,
) -> list[ImportanceRow]:
    """Importance of every feature, most important first.

    Ties go to columns that vary on the samples, then by index.
    """
    model = Classifier(weights)
    x, y, shape = _flat_inputs(samples)
    baseline = f1_score(y, model.labels(model.scores(x.reshape(len(y), *shape))))
    feature_fields = feature_fields or {}
    rows = [
        _importance(model, x, y, shape, i, repeats, seed, feature_fields.get(i, ()), baseline)
        for i in (range(x.shape[1]) if features is None else features)
    ]
    constant = {r.feature for r in rows if np.ptp(x[:, r.feature]) == 0}
    return sorted(rows, key=lambda r: (-r.importance, r.feature in constant, r.feature))


def shuffle_all_features(weights: Weights, samples: Sequence[Sample], seed: int = 0) -> tuple[float, float]:
    """F1 with every column shuffled independently, and F1 against shuffled labels."""
    model = Classifier(weights)
    x, y, shape = _flat_inputs(samples)
    rng = child_rng(seed, "shuffle-all")
    shuffled = x.copy()
    for col in range(x.shape[1]):
        shuffled[:, col] = x[rng.permutation(len(y)), col]
    all_f1 = f1_score(y, model.labels(model.scores(shuffled.reshape(len(y), *shape))))
    predicted = model.labels(model.scores(x.reshape(len(y), *shape)))
    label_f1 = f1_score(y[rng.permutation(len(y))], predicted)
    return all_f1, label_f1


# coverage


def coverage_key(element: Element, plan: FuzzPlan) -> Optional[tuple]:
    """(position, byte, fuzzed field contents) or None outside the predicate's domain."""
    for path, _ in element.fields:
        find_field(path)
    fuzzed = tuple((p, v) for p, v in element.fields if p in plan)
    if not fuzzed:
        return None
    return element.position, element.value, fuzzed


class CoverageIndex:
    """Fuzzed-field elements of a training set, keyed for exact lookup."""

    def __init__(self, plan: FuzzPlan, samples: Iterable[AnnotatedSample] = ()):
        self.plan = plan
        self.keys: set[tuple] = set()
        self.add(samples)

    def add(self, samples: Iterable[AnnotatedSample]) -> None:
        for a in samples:
            for e in a.elements:
                key = coverage_key(e, self.plan)
                if key is not None:
                    self.keys.add(key)

    def __contains__(self, element: Element) -> bool:
        key = coverage_key(element, self.plan)
        return key is not None and key in self.keys


def covered_by(element: Element, training, plan: FuzzPlan) -> bool:
    """Whether an element of a real sample appears, with identical fuzzed-field
    content, at the same position of some training sample.

    Elements not read from a fuzzed field are never covered; coverage_rate
    leaves them out of both counts.
    """
    index = training if isinstance(training, CoverageIndex) else CoverageIndex(plan, training)
    return element in index


def coverage_rate(
    real: Sequence[AnnotatedSample], training: Sequence[AnnotatedSample], plan: FuzzPlan
) -> CoverageReport:
    """Share of fuzzed-field elements of the real samples covered by training.

    Raises:
        NoFuzzedElements: no real element is read from a fuzzed field
    """
    index = CoverageIndex(plan, training)
    per_field: dict[str, list[int]] = {p: [0, 0] for p in plan.blist}
    x = y = 0
    for a in real:
        for e in a.elements:
            key = coverage_key(e, plan)
            if key is None:
                continue
            hit = key in index.keys
            x += hit
            y += not hit
            for path, _ in key[2]:
                per_field[path][0 if hit else 1] += 1
    if x + y == 0:
        raise NoFuzzedElements("no sample element is derived from a fuzzed field")
    return CoverageReport(
        x,
        y,
        x / (x + y),
        [FieldCoverage(p, c, u) for p, (c, u) in per_field.items() if c + u],
    )


def value_subset_report(
    real: Iterable[Packet], fuzzed: Iterable[Packet], fields: Sequence[str]
) -> list[ValueSubsetRow]:
    """Per field, whether every value seen in real traffic also occurs in fuzzed traffic."""
    real_values: dict[str, set] = {p: set() for p in fields}
    fuzzed_values: dict[str, set] = {p: set() for p in fields}
    for packets, sink in ((real, real_values), (fuzzed, fuzzed_values)):
        for packet in packets:
            for path in fields:
                if packet.has(path):
                    sink[path].add(packet.get(path))
    rows = []
    for path in fields:
        missing = real_values[path] - fuzzed_values[path]
        rows.append(
            ValueSubsetRow(path, len(real_values[path]), len(fuzzed_values[path]), len(missing), not missing)
        )
    return rows


# CNN filters


def filter_matrices(weights: Weights) -> list[np.ndarray]:
    """First-layer filters scaled to 0..255 per filter; constant filters are 128.

    Raises:
        WrongFamily: not a cnn
    """
    if weights.config.family != "cnn":
        raise WrongFamily(f"filters exist only for cnn models, got {weights.config.family}")
    kernels = weights.arrays[0]  # (filters, 1, k, k)
    out = []
    for kernel in kernels[:, 0]:
        lo, hi = float(kernel.min()), float(kernel.max())
        if hi == lo:
            out.append(np.full(kernel.shape, 128, dtype=np.int64))
        else:
            out.append(np.rint((kernel - lo) / (hi - lo) * 255).astype(np.int64))
    return out


def to_pgm(matrix: np.ndarray) -> str:
    """Plain (P2) PGM text of a 0..255 matrix."""
    h, w = matrix.shape
    rows = "\n".join(" ".join(str(int(v)) for v in row) for row in matrix)
    return f"P2\n{w} {h}\n255\n{rows}\n"


def export_first_layer_filters(weights: Weights, out_dir: Path) -> list[Path]:
    """Write filters.json plus one PGM per first-layer filter.

    Returns:
        Written paths, JSON first
    """
    matrices = filter_matrices(weights)
    raw = weights.arrays[0][:, 0]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "filters": [
            {"index": i, "raw": raw[i].tolist(), "normalized": m.tolist()}
            for i, m in enumerate(matrices)
        ]
    }
    paths = [out_dir / "filters.json"]
    paths[0].write_text(json.dumps(doc, indent=2))
    for i, m in enumerate(matrices):
        path = out_dir / f"filter_{i:02d}.pgm"
        path.write_text(to_pgm(m))
        paths.append(path)
    return paths


def read_filters(path: Path) -> list[np.ndarray]:
    doc = json.loads(Path(path).read_text())
    return [np.array(f["normalized"], dtype=np.int64) for f in doc["filters"]]
