"""Reference windowed nearest-centroid classifier and an F-score evaluator.

This closes the classification loop without any ML framework: window features
are per-band amplitude statistics, the model is one centroid per class, and
the confidence is a softmin over centroid distances. Real models (CNNs etc.)
replace this executable behind the identical stdin/stdout line protocol.

Shipped as the ``csiscope-centroid`` executable:

    csiscope-centroid --train --out model.json --window 9 \
        --bands 36:44,46:54,8:16 idle=idle.csv pattern-a=a.csv ...
    csiscope-centroid --model model.json   (stdin: F-lines, stdout: R-lines)
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyWindow,
    LengthMismatch,
    MissingClass,
    NMismatch,
)
from .model import ClassificationResult, ProcessedFrame

DEFAULT_WINDOW_LEN = 9  # about one second at beacon cadence


def parse_bands(text: str) -> tuple[tuple[int, int], ...]:
    """'36:44,46:54' -> ((36, 44), (46, 54)), half-open ranges."""
    bands = []
    for part in text.split(","):
        lo, _, hi = part.partition(":")
        bands.append((int(lo), int(hi)))
    return tuple(bands)


def window_features_from_matrix(amps: np.ndarray,
                                bands: Sequence[tuple[int, int]]) -> np.ndarray:
    """Feature vector of a (frames x subcarriers) amplitude window: for each
    band, the mean amplitude over the whole band-window block and the
    population standard deviation over time of the per-frame band mean."""
    if amps.ndim != 2 or amps.shape[0] == 0:
        raise EmptyWindow("need a non-empty frames x subcarriers matrix")
    feats = np.empty(2 * len(bands))
    for j, (lo, hi) in enumerate(bands):
        band_means = amps[:, lo:hi].mean(axis=1)
        feats[2 * j] = band_means.mean()
        feats[2 * j + 1] = band_means.std(ddof=0)
    return feats


def compute_window_features(frames: Sequence[ProcessedFrame],
                            bands: Sequence[tuple[int, int]]) -> np.ndarray:
    if len(frames) == 0:
        raise EmptyWindow("window contains no frames")
    n = frames[0].meta.n
    for f in frames:
        if f.meta.n != n:
            raise NMismatch(f"window mixes N={n} and N={f.meta.n}")
    amps = np.stack([f.amplitudes for f in frames])
    return window_features_from_matrix(amps, bands)


@dataclass(frozen=True)
class CentroidModel:
    """Per-class mean feature vectors over a fixed window/band layout."""

    centroids: np.ndarray  # shape (n_classes, dim)
    bands: tuple[tuple[int, int], ...]
    window_len: int = DEFAULT_WINDOW_LEN
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.centroids.shape[1] != 2 * len(self.bands):
            raise DimensionMismatch(
                f"centroid dim {self.centroids.shape[1]} does not match"
                f" {len(self.bands)} bands")

    @property
    def n_classes(self) -> int:
        return len(self.centroids)

    def to_json(self) -> dict:
        return {"version": 1, "window_len": self.window_len,
                "bands": [list(b) for b in self.bands],
                "labels": list(self.labels) if self.labels else None,
                "centroids": self.centroids.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "CentroidModel":
        return cls(centroids=np.asarray(doc["centroids"], dtype=np.float64),
                   bands=tuple((int(lo), int(hi)) for lo, hi in doc["bands"]),
                   window_len=int(doc.get("window_len", DEFAULT_WINDOW_LEN)),
                   labels=tuple(doc["labels"]) if doc.get("labels") else None)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "CentroidModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def train_centroids(labeled_windows: Iterable[tuple[int, np.ndarray]], *,
                    bands: Sequence[tuple[int, int]],
                    window_len: int = DEFAULT_WINDOW_LEN,
                    labels: Sequence[str] | None = None) -> CentroidModel:
    """Centroid = per-class mean feature vector. Every class id in
    0..max(class) must have at least one window."""
    per_class: dict[int, list[np.ndarray]] = {}
    for class_id, feats in labeled_windows:
        per_class.setdefault(int(class_id), []).append(np.asarray(feats, float))
    if not per_class:
        raise MissingClass("no training windows at all")
    n_classes = max(per_class) + 1
    rows = []
    for c in range(n_classes):
        if c not in per_class:
            raise MissingClass(f"class {c} has no training windows")
        rows.append(np.mean(per_class[c], axis=0))
    return CentroidModel(centroids=np.vstack(rows),
                         bands=tuple((int(lo), int(hi)) for lo, hi in bands),
                         window_len=window_len,
                         labels=tuple(labels) if labels else None)


def classify_window(model: CentroidModel, features: np.ndarray,
                    window_end_us: int = 0) -> ClassificationResult:
    """Nearest centroid by Euclidean distance; ties go to the lowest class
    id. Confidence is the softmin weight of the winning class, so it lies in
    (0, 1] and the weights sum to 1 across classes."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.shape != (model.centroids.shape[1],):
        raise DimensionMismatch(f"features {feats.shape} vs"
                                f" centroid dim {model.centroids.shape[1]}")
    dists = np.sqrt(((model.centroids - feats) ** 2).sum(axis=1))
    best = int(np.argmin(dists))
    # softmin, shifted by the best distance for numerical stability
    weights = np.exp(-(dists - dists[best]))
    confidence = float(1.0 / weights.sum())
    return ClassificationResult(best, confidence, window_end_us)


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class FscoreReport:
    per_class: dict[int, ClassScores]
    macro_f: float

    def recalls(self) -> dict[int, float]:
        return {c: s.recall for c, s in self.per_class.items()}


def evaluate_fscore(predictions: Sequence[int],
                    labels: Sequence[int]) -> FscoreReport:
    """Per-class precision/recall/F1 plus the macro F-score (mean of the
    per-class F1 values). Classes are taken from the labels, each of which
    must occur at least once."""
    if len(predictions) != len(labels):
        raise LengthMismatch(f"{len(predictions)} predictions,"
                             f" {len(labels)} labels")
    classes = sorted(set(int(v) for v in labels))
    if not classes:
        raise LengthMismatch("no labels")
    per_class: dict[int, ClassScores] = {}
    f1s = []
    preds = [int(v) for v in predictions]
    labs = [int(v) for v in labels]
    for c in classes:
        tp = sum(1 for p, t in zip(preds, labs) if p == c and t == c)
        fp = sum(1 for p, t in zip(preds, labs) if p == c and t != c)
        fn = sum(1 for p, t in zip(preds, labs) if p != c and t == c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        per_class[c] = ClassScores(precision, recall, f1, tp + fn)
        f1s.append(f1)
    return FscoreReport(per_class, float(np.mean(f1s)))


# --- the csiscope-centroid executable ---

def _train_main(args) -> int:
    from .recording import read_recording

    bands = parse_bands(args.bands)
    labels = []
    windows: list[tuple[int, np.ndarray]] = []
    for class_id, spec in enumerate(args.recordings):
        label, _, path = spec.partition("=")
        if not path:
            label, path = str(class_id), label
        labels.append(label)
        _, frames = read_recording(path)
        amps = [f.amplitudes for f in frames]
        for k in range(0, len(amps) - args.window + 1, args.window):
            block = np.stack(amps[k:k + args.window])
            windows.append((class_id, window_features_from_matrix(block, bands)))
    model = train_centroids(windows, bands=bands, window_len=args.window,
                            labels=labels)
    model.save(args.out)
    print(f"trained {model.n_classes} classes from {len(windows)} windows"
          f" -> {args.out}", file=sys.stderr)
    return 0


def _classify_main(args) -> int:
    model = CentroidModel.load(args.model)
    window: list[np.ndarray] = []
    last_ts = 0
    stdin = sys.stdin.buffer
    stdout = sys.stdout
    for raw in stdin:
        line = raw.decode("ascii", errors="replace").strip()
        if not line:
            continue
        parts = line.split(",")
        if parts[0] != "F" or len(parts) < 5:
            continue
        try:
            ts = int(parts[1])
            amps = np.asarray([float(v) for v in parts[4:]], dtype=np.float64)
        except ValueError:
            continue
        window.append(amps)
        last_ts = ts
        if len(window) >= model.window_len:
            feats = window_features_from_matrix(np.stack(window), model.bands)
            result = classify_window(model, feats, last_ts)
            stdout.write(f"R,{result.class_id},{result.confidence!r},"
                         f"{result.window_end_us}\n")
            stdout.flush()
            window.clear()
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="csiscope-centroid",
        description="Windowed nearest-centroid CSI classifier speaking the"
                    " stdin/stdout bridge protocol.")
    parser.add_argument("--model", help="model JSON; classify stdin F-lines")
    parser.add_argument("--train", action="store_true",
                        help="train a model from csv recordings")
    parser.add_argument("--out", help="output model path (train mode)")
    parser.add_argument("--window", type=int, default=DEFAULT_WINDOW_LEN)
    parser.add_argument("--bands", default="",
                        help="comma-separated lo:hi subcarrier bands")
    parser.add_argument("recordings", nargs="*",
                        help="label=path.csv per class, in class-id order")
    args = parser.parse_args(argv)
    if args.train:
        if not args.out or not args.bands or not args.recordings:
            parser.error("--train needs --out, --bands and label=path args")
        return _train_main(args)
    if not args.model:
        parser.error("either --model or --train is required")
    return _classify_main(args)


if __name__ == "__main__":
    raise SystemExit(main())
