"""Feature tables, blockwise cross-validation, training/evaluation workflow."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset, Recording, event_windows, window_labels
from .dsp import FirBank
from .features import extract
from .fixedpoint import FEATURE_Q
from .inference import InferenceLog, channel_importance, infer_single_path, logged_energy
from .neuraltree import (EnergyTable, NeuralTreeModel, TrainConfig, energy_score, greedy_predict, prune,
                         quantize, train)
from .signal import MAX_FEATURES, FeatureKind, FeatureSpec, SignalWindow

DEBOUNCE = 2


def default_specs(n_channels: int) -> list[FeatureSpec]:
    """Per channel: LL, Hjorth triple, LMP, gamma SE, gamma/hfo1 PAC; ripple PLV
    between neighbouring channels. Truncated to the 64-feature budget."""
    specs = []
    for c in range(n_channels):
        specs += [FeatureSpec(FeatureKind.LL, c), FeatureSpec(FeatureKind.ACT, c),
                  FeatureSpec(FeatureKind.MOB, c), FeatureSpec(FeatureKind.COM, c),
                  FeatureSpec(FeatureKind.LMP, c), FeatureSpec(FeatureKind.SE, c, "gamma"),
                  FeatureSpec(FeatureKind.PAC, c, ("gamma", "hfo1"))]
    specs += [FeatureSpec(FeatureKind.PLV, (c, c + 1), "ripple") for c in range(n_channels - 1)]
    return specs[:MAX_FEATURES]


@dataclass
class FeatureTable:
    """Features of consecutive windows: raw Q16.16 words plus labels."""

    raw: np.ndarray                 # (n, D) int64
    labels: np.ndarray              # (n,)
    specs: tuple[FeatureSpec, ...]
    recording: np.ndarray           # (n,) recording index
    index: np.ndarray               # (n,) window index inside its recording

    @property
    def X(self) -> np.ndarray:
        return self.raw * FEATURE_Q.lsb

    def __len__(self):
        return len(self.labels)


@dataclass
class WindowSet:
    windows: list[SignalWindow]
    labels: np.ndarray
    recording: np.ndarray
    index: np.ndarray
    events: list[tuple[int, int]]   # global half-open window ranges


def dataset_windows(ds: Dataset, window_len_s: float = 1.0) -> WindowSet:
    windows, labels, rec_idx, idx, events = [], [], [], [], []
    for r, rec in enumerate(ds.recordings):
        ws = rec.windows(window_len_s)
        lab = window_labels(rec, window_len_s, ds.classes)[: len(ws)]
        offset = len(windows)
        events += [(offset + a, offset + min(b, len(ws))) for a, b in event_windows(rec, window_len_s)
                   if a < len(ws)]
        windows += ws
        labels.append(lab)
        rec_idx.append(np.full(len(ws), r))
        idx.append(np.arange(len(ws)))
    return WindowSet(windows, np.concatenate(labels), np.concatenate(rec_idx),
                     np.concatenate(idx), events)


def feature_table(ws: WindowSet, specs: Sequence[FeatureSpec], bank: FirBank) -> FeatureTable:
    specs = tuple(specs)
    raw = np.array([[v.raw for v in extract(w, specs, bank).values] for w in ws.windows],
                   dtype=np.int64).reshape(len(ws.windows), len(specs))
    return FeatureTable(raw, ws.labels.copy(), specs, ws.recording.copy(), ws.index.copy())


# ---------------------------------------------------------------- folds

def blockwise_folds(n_windows: int, events: Sequence[tuple[int, int]], k: int) -> list[np.ndarray]:
    """Contiguous window blocks, one group of consecutive events per fold.

    With fewer events than ``k`` every event gets its own fold. Cuts fall on
    window edges midway between the last event of one group and the first of
    the next, so no window belongs to two folds.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    events = sorted(events)
    if not events:
        raise ValueError("blockwise folds need at least one labelled event")
    k = min(k, len(events))
    groups = np.array_split(np.arange(len(events)), k)
    cuts = [0]
    for g in range(1, k):
        prev_end = events[groups[g - 1][-1]][1]
        nxt = events[groups[g][0]][0]
        cuts.append(max(prev_end, (prev_end + nxt) // 2))
    cuts.append(n_windows)
    return [np.arange(cuts[f], cuts[f + 1]) for f in range(k)]


def dataset_folds(ws: WindowSet, k: int) -> list[np.ndarray]:
    return blockwise_folds(len(ws.windows), ws.events, k)


# ---------------------------------------------------------------- metrics

def debounce(pred: np.ndarray, n: int = DEBOUNCE) -> np.ndarray:
    """A window is a detection once ``n`` consecutive positive windows end on it."""
    pos = np.asarray(pred) != 0
    out = pos.copy()
    for lag in range(1, n):
        shifted = np.concatenate([np.zeros(lag, bool), pos[:-lag]])
        out &= shifted
    return out


@dataclass
class EventMetrics:
    n_events: int
    detected: int
    true_negative: int
    negatives: int
    latencies: list[int]

    @property
    def sensitivity(self) -> float:
        return self.detected / self.n_events if self.n_events else float("nan")

    @property
    def specificity(self) -> float:
        return self.true_negative / self.negatives if self.negatives else float("nan")


def event_metrics(pred: np.ndarray, labels: np.ndarray, events: Sequence[tuple[int, int]],
                  n: int = DEBOUNCE) -> EventMetrics:
    """Event sensitivity (one count per event) and window specificity."""
    det = debounce(pred, n)
    labels = np.asarray(labels)
    detected, lat = 0, []
    for a, b in events:
        hits = np.flatnonzero(det[a:b])
        if len(hits):
            detected += 1
            lat.append(int(hits[0]))
    neg = labels == 0
    tn = int(np.sum(~det[neg]))
    return EventMetrics(len(events), detected, tn, int(neg.sum()), lat)


@dataclass
class FoldResult:
    fold: int
    train_windows: np.ndarray
    test_windows: np.ndarray
    model: NeuralTreeModel
    metrics: EventMetrics
    accuracy: float
    energy: float
    logs: list[InferenceLog] = field(repr=False, default_factory=list)


@dataclass
class EvalReport:
    folds: list[FoldResult]
    confusion: np.ndarray
    classes: tuple[str, ...]

    @property
    def event_sensitivity(self) -> float:
        n = sum(f.metrics.n_events for f in self.folds)
        return sum(f.metrics.detected for f in self.folds) / n if n else float("nan")

    @property
    def window_specificity(self) -> float:
        neg = sum(f.metrics.negatives for f in self.folds)
        return sum(f.metrics.true_negative for f in self.folds) / neg if neg else float("nan")

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.confusion.sum())

    @property
    def window_tpr_tnr(self) -> tuple[float, float]:
        c = self.confusion
        pos = c[1:].sum()
        tpr = c[1:, 1:].sum() / pos if pos else float("nan")
        tnr = c[0, 0] / c[0].sum() if c[0].sum() else float("nan")
        return float(tpr), float(tnr)

    @property
    def latencies(self) -> list[int]:
        return [v for f in self.folds for v in f.metrics.latencies]

    @property
    def energy_score(self) -> float:
        return float(np.mean([f.energy for f in self.folds]))

    def logs(self) -> list[InferenceLog]:
        return [lg for f in self.folds for lg in f.logs]

    def summary_rows(self):
        for f in self.folds:
            m = f.metrics
            yield (f.fold, len(f.train_windows), len(f.test_windows), m.n_events, m.detected,
                   m.sensitivity, m.specificity, f.accuracy, f.energy,
                   float(np.mean(m.latencies)) if m.latencies else float("nan"))
        lat = self.latencies
        yield ("all", sum(len(f.train_windows) for f in self.folds),
               sum(len(f.test_windows) for f in self.folds),
               sum(f.metrics.n_events for f in self.folds),
               sum(f.metrics.detected for f in self.folds),
               self.event_sensitivity, self.window_specificity, self.accuracy,
               self.energy_score, float(np.mean(lat)) if lat else float("nan"))


SUMMARY_HEADER = ["fold", "n_train", "n_test", "events", "detected", "event_sensitivity",
                  "window_specificity", "accuracy", "energy_score", "mean_latency_windows"]


def fit_model(X: np.ndarray, y: np.ndarray, specs, config: TrainConfig, energy: EnergyTable,
              n_classes: int) -> tuple[NeuralTreeModel, NeuralTreeModel]:
    """Train, prune (with collapse), quantise. Returns (pruned float, quantised)."""
    res = train(X, y, specs, TrainConfig(**{**config.__dict__, "prune_threshold": 0.0}),
                energy, n_classes=n_classes)
    pruned = prune(res.model, config.prune_threshold, X)
    return pruned, quantize(pruned)


def run_training(ws: WindowSet, table: FeatureTable, folds: Sequence[np.ndarray],
                 config: TrainConfig, energy: EnergyTable, bank: FirBank,
                 n_classes: int = 2, shuffle_labels: bool = False,
                 classes: Sequence[str] = ("background", "seizure")) -> EvalReport:
    """Per fold: train on the other folds' windows, evaluate single-path on this one."""
    n = len(table)
    X = table.X
    y = table.labels.copy()
    if shuffle_labels:
        y = np.random.default_rng(config.seed + 7919).permutation(y)
    results = []
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    for f, test in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(n), test)
        if np.intersect1d(train_idx, test).size:
            raise AssertionError("train/test windows overlap")
        _, qmodel = fit_model(X[train_idx], y[train_idx], table.specs, config, energy, n_classes)
        logs = infer_single_path([ws.windows[i] for i in test], qmodel, bank)
        pred = np.array([lg.label for lg in logs])
        truth = table.labels[test]
        np.add.at(conf, (truth, pred), 1)
        ev = [(a - test[0], b - test[0]) for a, b in ws.events if test[0] <= a < test[-1] + 1]
        results.append(FoldResult(f, train_idx, test, qmodel, event_metrics(pred, truth, ev),
                                  float(np.mean(pred == truth)), logged_energy(logs, energy), logs))
    return EvalReport(results, conf, tuple(classes))


def report_importance(logs: Sequence[InferenceLog], channels: Sequence[int]) -> list[tuple[int, float, int]]:
    """(channel, score, rank) sorted by decreasing score, ties by channel id."""
    scores = channel_importance(logs, channels)
    order = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(ch, s, r + 1) for r, (ch, s) in enumerate(order)]


def energy_sweep(X_train, y_train, X_test, y_test, specs, Cs: Sequence[float],
                 config: TrainConfig, energy: EnergyTable, n_classes: int = 2):
    """Accuracy and greedy-path energy score of pruned float models across C."""
    rows = []
    for C in Cs:
        pruned, _ = fit_model(X_train, y_train, specs, TrainConfig(**{**config.__dict__, "C": C}),
                              energy, n_classes)
        acc = float(np.mean(greedy_predict(pruned, X_test) == y_test))
        rows.append((C, acc, energy_score(pruned, X_test, energy)))
    return rows
