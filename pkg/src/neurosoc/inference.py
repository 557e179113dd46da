"""Single-path inference on signal windows and the logs it leaves behind."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dsp import FirBank
from .features import extract
from .neuraltree import EnergyTable, NeuralTreeModel, mac_raw
from .signal import FeatureSpec, SignalWindow


@dataclass(frozen=True)
class InferenceLog:
    window_index: int
    label: int
    leaf: int
    visited: tuple[int, ...]
    extracted: tuple[tuple[int, FeatureSpec], ...]   # (node, spec) in extraction order

    def channels(self) -> list[int]:
        return [ch for _, spec in self.extracted for ch in spec.channels]


def infer_window(w: SignalWindow, model: NeuralTreeModel, bank: FirBank | None,
                 index: int = 0) -> InferenceLog:
    """Walk the tree, extracting only the visited nodes' features."""
    if model.quant is None:
        raise ValueError("single-path inference needs a quantised model")
    node, visited, extracted = 0, [], []
    while node < model.n_internal:
        visited.append(node)
        specs = model.node_specs(node)
        try:
            fv = extract(w, specs, bank)
        except KeyError as e:
            raise ValueError(f"model/window mismatch at node {node}: {e}") from None
        extracted += [(node, s) for s in specs]
        acc = mac_raw(model, node, [v.raw for v in fv.values])
        node = 2 * node + 1 + (acc >= 0)
    leaf = node - model.n_internal
    return InferenceLog(index, int(model.leaf_labels()[leaf]), leaf, tuple(visited), tuple(extracted))


def infer_single_path(windows: Iterable[SignalWindow], model: NeuralTreeModel,
                      bank: FirBank | None = None) -> list[InferenceLog]:
    return [infer_window(w, model, bank, i) for i, w in enumerate(windows)]


def logged_energy(logs: Sequence[InferenceLog], energy: EnergyTable) -> float:
    if not logs:
        raise ValueError("no inference logs")
    return float(np.mean([sum(energy.cost(s.kind) for _, s in lg.extracted) for lg in logs]))


def channel_importance(logs: Sequence[InferenceLog],
                       channels: Sequence[int] | None = None) -> dict[int, float]:
    """Extraction count per channel normalised by the busiest channel."""
    if not logs:
        raise ValueError("no inference logs")
    counts: dict[int, int] = {c: 0 for c in (channels or [])}
    for lg in logs:
        for ch in lg.channels():
            counts[ch] = counts.get(ch, 0) + 1
    top = max(counts.values(), default=0)
    return {c: (n / top if top else 0.0) for c, n in sorted(counts.items())}
