"""Hold-out evaluation: per-segment train/test splits, scan classification,
noise injection, motion masking and parameter sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ValidationError
from .localizer import LocalizationResult, localize_batch
from .map_builder import TensorMap, assemble_map, memory_report, segment_bounds
from .range_image import GridSpec, ScanMatrix, matricize_scan
from .scan_io import PointCloud, Pose6DOF
from .tucker import relative_error, slice_coherence

DEFAULT_MOTION_THRESHOLD = 1e-3


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    strategy: str = "stride"  # or "random"
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.train_fraction <= 1):
            raise ValidationError(f"train_fraction must lie in (0, 1], got {self.train_fraction}")
        if self.strategy not in ("stride", "random"):
            raise ValidationError(f"unknown split strategy {self.strategy!r}")

    @property
    def test_fraction(self) -> Fraction:
        return 1 - Fraction(self.train_fraction).limit_denominator(10**6)


@dataclass(frozen=True)
class NoiseSpec:
    kind: str  # "gaussian" or "translation"
    magnitude: float = 0.0  # sigma or lateral offset, meters
    seed: int = 0
    stream: int = 0  # sweep row; keeps rows independent of execution order

    def __post_init__(self):
        if self.kind not in ("gaussian", "translation"):
            raise ValidationError(f"unknown noise kind {self.kind!r}")
        if not math.isfinite(self.magnitude):
            raise ValidationError("noise magnitude must be finite")
        if self.kind == "gaussian" and self.magnitude < 0:
            raise ValidationError(f"sigma must be non-negative, got {self.magnitude}")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> NoiseSpec:
        """``"gaussian:<sigma>"`` or ``"translate:<meters>"``."""
        kind, _, value = text.partition(":")
        kind = {"translate": "translation"}.get(kind, kind)
        try:
            return cls(kind, float(value), seed)
        except ValueError:
            raise ValidationError(f"cannot parse noise spec {text!r}") from None

    def apply(self, cloud: PointCloud) -> PointCloud:
        if self.kind == "gaussian":
            return add_gaussian_noise(cloud, self.magnitude, (self.seed, self.stream, cloud.scan_id))
        return add_translation(cloud, self.magnitude)


def split(K: int, bounds, spec: SplitSpec = SplitSpec()) -> tuple[np.ndarray, np.ndarray]:
    """Train and test scan positions, chosen independently inside each segment.

    Stride: local index ``i`` is held out when ``floor((i+1)t) > floor(i t)`` for
    test fraction ``t``; at 80:20 that is every ``i = 4 mod 5``.
    """
    t = spec.test_fraction
    train, test = [], []
    for seg, (a, b) in enumerate(bounds):
        if not (0 <= a < b <= K):
            raise ValidationError(f"segment bounds {(a, b)} outside [0, {K})")
        n = b - a
        if spec.strategy == "stride":
            local = np.arange(n)
            held = ((local + 1) * t.numerator // t.denominator) > (local * t.numerator // t.denominator)
        else:
            rng = np.random.default_rng([spec.seed, seg])
            held = np.zeros(n, dtype=bool)
            held[rng.choice(n, size=round(n * t), replace=False)] = True
        train.append(a + np.flatnonzero(~held))
        test.append(a + np.flatnonzero(held))
    return np.concatenate(train).astype(np.int64), np.concatenate(test).astype(np.int64)


def add_gaussian_noise(cloud: PointCloud, sigma: float, seed) -> PointCloud:
    if sigma < 0:
        raise ValidationError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return cloud
    rng = np.random.default_rng(seed)
    return cloud.with_points(cloud.points + rng.normal(0.0, sigma, size=cloud.points.shape))


def add_translation(cloud: PointCloud, offset_m: float) -> PointCloud:
    """Shift every return by ``offset_m`` along y (the sensor moves the opposite way)."""
    if not math.isfinite(offset_m):
        raise ValidationError("translation offset must be finite")
    if offset_m == 0:
        return cloud
    pts = cloud.points.copy()
    pts[:, 1] += offset_m
    return cloud.with_points(pts)


def motion_surrogate(poses) -> np.ndarray:
    """Norm of the 6-DOF change from the previous pose; 0 for the first."""
    if not poses:
        return np.zeros(0)
    vecs = np.array([p.as_vector() for p in poses])
    out = np.zeros(len(poses))
    out[1:] = np.linalg.norm(np.diff(vecs, axis=0), axis=1)
    return out


def moving_mask(poses, scan_ids, threshold: float = DEFAULT_MOTION_THRESHOLD) -> np.ndarray:
    surrogate = dict(zip((p.scan_id for p in poses), motion_surrogate(poses)))
    missing = [s for s in scan_ids if s not in surrogate]
    if missing:
        raise ValidationError(f"no pose for scan ids {missing[:5]}")
    return np.array([surrogate[s] > threshold for s in scan_ids], dtype=bool)


@dataclass
class EvalReport:
    truth: np.ndarray
    results: list[LocalizationResult]
    confusion: np.ndarray
    query_ids: np.ndarray
    nearest_train_ids: np.ndarray
    moving: np.ndarray | None = None
    relative_errors: list[float] | None = None
    coherence: list[float] | None = None
    params: dict = field(default_factory=dict)

    @property
    def predicted(self) -> np.ndarray:
        return np.array([r.segment_index for r in self.results], dtype=np.int64)

    @property
    def correct(self) -> np.ndarray:
        return self.predicted == self.truth

    @property
    def segment_accuracy(self) -> float:
        total = int(self.confusion.sum())
        return int(np.trace(self.confusion)) / total

    @property
    def moving_only_accuracy(self) -> float | None:
        if self.moving is None or not self.moving.any():
            return None
        return float(self.correct[self.moving].mean())

    def summary(self) -> dict:
        return {
            "queries": len(self.results),
            "segment_accuracy": self.segment_accuracy,
            "moving_only_accuracy": self.moving_only_accuracy,
            "moving_queries": None if self.moving is None else int(self.moving.sum()),
            "errors": int((~self.correct).sum()),
            "relative_errors": self.relative_errors,
            "slice_coherence": self.coherence,
            "params": self.params,
        }

    def queries_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scan_id", "true_segment", "segment", "scan_index", "global_scan_index",
                    "nearest_train_scan_id", "distance", "runner_up_distance", "margin", "moving"])
        for i, r in enumerate(self.results):
            moving = "" if self.moving is None else int(self.moving[i])
            w.writerow([int(self.query_ids[i]), int(self.truth[i]), r.segment_index,
                        r.scan_index_in_segment, r.global_scan_index, int(self.nearest_train_ids[i]),
                        repr(r.distance), repr(r.runner_up_distance), repr(r.margin), moving])
        return buf.getvalue()

    def confusion_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        L = self.confusion.shape[0]
        w.writerow(["true\\predicted"] + [str(j) for j in range(L)])
        for i in range(L):
            w.writerow([str(i)] + [str(int(c)) for c in self.confusion[i]])
        return buf.getvalue()


def evaluate(tmap: TensorMap, scans, truth, *, poses=None, motion_threshold=DEFAULT_MOTION_THRESHOLD,
             train_ids=None, train_segments=None, params=None) -> EvalReport:
    """Classify every query scan into a segment and tabulate the outcome.

    ``truth`` gives the true segment per query. ``train_ids`` maps the map's
    global scan index back to dataset scan ids (identity when omitted);
    ``train_segments`` enables per-segment reconstruction errors.
    """
    scans = list(scans)
    if truth is None:
        raise ValidationError("ground-truth segment ids are required")
    truth = np.asarray(truth, dtype=np.int64)
    if truth.shape != (len(scans),):
        raise ValidationError(f"{len(scans)} queries but {truth.size} ground-truth labels")
    if not scans:
        raise ValidationError("no test scans to evaluate")
    L = tmap.n_segments
    if truth.min() < 0 or truth.max() >= L:
        raise ValidationError(f"ground-truth segment ids must lie in [0, {L})")
    results = localize_batch(tmap, scans)
    confusion = np.zeros((L, L), dtype=np.int64)
    for t, r in zip(truth, results):
        confusion[t, r.segment_index] += 1
    query_ids = np.array([getattr(s, "scan_id", i) for i, s in enumerate(scans)], dtype=np.int64)
    glob = np.array([r.global_scan_index for r in results], dtype=np.int64)
    nearest = glob if train_ids is None else np.asarray(train_ids, dtype=np.int64)[glob]
    moving = None
    if poses is not None:
        moving = moving_mask(poses, query_ids.tolist(), motion_threshold)
    rel, coh = None, None
    if train_segments is not None:
        rel = [relative_error(x, m) for x, m in zip(train_segments, tmap.segments)]
    coh = [slice_coherence(m.core) for m in tmap.segments]
    return EvalReport(truth, results, confusion, query_ids, nearest, moving, rel, coh, dict(params or {}))


@dataclass
class Holdout:
    """Segment bounds over the full scan sequence and the per-segment split."""

    bounds: list[tuple[int, int]]
    train: np.ndarray
    test: np.ndarray

    @classmethod
    def make(cls, K: int, k: int, spec: SplitSpec = SplitSpec()) -> Holdout:
        bounds = segment_bounds(K, k)
        train, test = split(K, bounds, spec)
        return cls(bounds, train, test)

    def segment_of(self, positions) -> np.ndarray:
        starts = np.array([a for a, _ in self.bounds])
        return np.searchsorted(starts, np.asarray(positions), side="right") - 1

    def train_segments(self, x: np.ndarray) -> list[np.ndarray]:
        seg = self.segment_of(self.train)
        return [x[:, :, self.train[seg == l]] for l in range(len(self.bounds))]


def holdout_map(x, grid: GridSpec, k: int, r1: int, r2: int, holdout: Holdout) -> TensorMap:
    segments = holdout.train_segments(np.asarray(x, dtype=np.float64))
    if any(s.shape[2] == 0 for s in segments):
        raise ValidationError("a segment has no training scans; lower k or raise train_fraction")
    return assemble_map(segments, k, r1, r2, grid)


def run_holdout(x, grid: GridSpec, k: int, r1: int, r2: int, spec: SplitSpec = SplitSpec(), *,
                queries=None, scan_ids=None, poses=None, motion_threshold=DEFAULT_MOTION_THRESHOLD,
                params=None) -> tuple[TensorMap, EvalReport]:
    """Build a map from the training part of ``x`` and classify the held-out scans.

    ``queries`` optionally replaces the query tensor (e.g. noisy copies of ``x``).
    """
    x = np.asarray(x, dtype=np.float64)
    K = x.shape[2]
    holdout = Holdout.make(K, k, spec)
    if holdout.test.size == 0:
        raise ValidationError("split leaves no test scans; train_fraction must be below 1")
    tmap = holdout_map(x, grid, k, r1, r2, holdout)
    q = x if queries is None else np.asarray(queries, dtype=np.float64)
    ids = np.arange(K) if scan_ids is None else np.asarray(scan_ids)
    test_scans = [ScanMatrix(grid, q[:, :, p], int(ids[p])) for p in holdout.test]
    report = evaluate(tmap, test_scans, holdout.segment_of(holdout.test), poses=poses,
                      motion_threshold=motion_threshold, train_ids=ids[holdout.train],
                      train_segments=holdout.train_segments(x),
                      params={"k": k, "r1": r1, "r2": r2, "train_fraction": spec.train_fraction,
                              "split": spec.strategy, "split_seed": spec.seed, **(params or {})})
    return tmap, report


def noisy_tensor(clouds, grid: GridSpec, noise: NoiseSpec | None) -> np.ndarray:
    """Matricize every cloud after applying ``noise`` in Cartesian space."""
    mats = [matricize_scan(c if noise is None else noise.apply(c), grid).values for c in clouds]
    return np.stack(mats, axis=2)


def raw_nearest_neighbor(x, train: np.ndarray, queries: np.ndarray, q=None) -> np.ndarray:
    """Exhaustive nearest training scan (Frobenius) for every query position."""
    x = np.asarray(x, dtype=np.float64)
    q = x if q is None else np.asarray(q, dtype=np.float64)
    flat_train = x[:, :, train].reshape(-1, train.size, order="F")
    out = np.empty(queries.size, dtype=np.int64)
    for i, p in enumerate(queries):
        d = np.linalg.norm(flat_train - q[:, :, p].reshape(-1, 1, order="F"), axis=0)
        out[i] = train[int(np.argmin(d))]
    return out


@dataclass(frozen=True)
class SweepRow:
    r1: int
    r2: int
    k: int
    n_segments: int
    accuracy: float
    map_units: int
    mean_relative_error: float


SWEEP_FIELDS = ["r1", "r2", "k", "n_segments", "accuracy", "map_units", "mean_relative_error"]


def parameter_sweep(x, grid: GridSpec, params, spec: SplitSpec = SplitSpec()) -> list[SweepRow]:
    """One hold-out evaluation per ``(r1, r2, k)``, all sharing the same split rule."""
    params = [tuple(int(v) for v in p) for p in params]
    if not params:
        raise ValidationError("parameter list is empty")
    rows = []
    for r1, r2, k in params:
        tmap, report = run_holdout(x, grid, k, r1, r2, spec)
        rows.append(SweepRow(r1, r2, k, tmap.n_segments, report.segment_accuracy,
                             memory_report(tmap).map_units, float(np.mean(report.relative_errors))))
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_FIELDS)
    for row in rows:
        w.writerow([repr(getattr(row, f)) if isinstance(getattr(row, f), float) else getattr(row, f)
                    for f in SWEEP_FIELDS])
    return buf.getvalue()


def dumps_summary(obj) -> str:
    """Deterministic JSON (sorted keys, non-finite floats as null)."""
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(u) for k, u in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(u) for u in v]
        if isinstance(v, np.generic):
            return clean(v.item())
        return v
    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


def noise_sweep(clouds, grid: GridSpec, k: int, r1: int, r2: int, kind: str, magnitudes,
                spec: SplitSpec = SplitSpec(), seed: int = 0) -> list[tuple[float, float]]:
    """(magnitude, accuracy) with noise applied to query scans only."""
    x = noisy_tensor(clouds, grid, None)
    ids = [c.scan_id for c in clouds]
    out = []
    for row, mag in enumerate(magnitudes):
        noise = NoiseSpec(kind, float(mag), seed, stream=row)
        q = noisy_tensor(clouds, grid, noise)
        _, report = run_holdout(x, grid, k, r1, r2, spec, queries=q, scan_ids=ids)
        out.append((float(mag), report.segment_accuracy))
    return out
