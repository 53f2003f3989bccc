"""Segmentation, window aggregation, thresholds and network construction.

Offsets and window starts are integer seconds relative to seizure onset. The
window starting at ``t`` covers the one-second segments ``t .. t + 24``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ValidationError
from .gibbs import PosteriorSummary
from .model import Recording, Segment, standardize_segment

WINDOW_SECONDS = 25
MIN_THRESHOLD_CANDIDATES = 100

__all__ = [
    "WINDOW_SECONDS",
    "WindowedProbabilities",
    "NetworkEstimate",
    "segment_recording",
    "aggregate_window",
    "aggregate_all",
    "nearest_rank",
    "baseline_thresholds",
    "top_percent_threshold",
    "build_network",
]


def segment_recording(rec: Recording, span_seconds: tuple[int, int]) -> list[Segment]:
    """Cut ``[start, stop)`` seconds around onset into standardized one-second segments."""
    start, stop = (int(s) for s in span_seconds)
    if stop <= start:
        raise ValidationError(f"empty span [{start}, {stop})")
    rate = rec.rate
    if abs(rate - round(rate)) > 1e-9:
        raise ValidationError(f"rate {rate} is not an integral number of samples per second")
    n = int(round(rate))
    first = rec.onset_index + start * n
    last = rec.onset_index + stop * n
    if first < 0 or last > rec.n_samples:
        raise ValidationError(
            f"span out of bounds: [{start}, {stop}) s needs samples [{first}, {last}) of {rec.n_samples}"
        )
    segs = []
    for off in range(start, stop):
        a = rec.onset_index + off * n
        segs.append(standardize_segment(Segment(rec.data[:, a : a + n], off, rec.seizure_id)))
    return segs


def _window_mean(summaries, t, seizures, attr, window):
    missing = [(sz, off) for sz in seizures for off in range(t, t + window) if (sz, off) not in summaries]
    if missing:
        raise ValidationError(f"window {t}: missing segment summaries {missing}")
    acc = None
    for sz in seizures:
        for off in range(t, t + window):
            m = getattr(summaries[(sz, off)], attr)
            acc = np.array(m, dtype=float) if acc is None else acc + m
    return acc / (len(seizures) * window)


def aggregate_window(
    summaries: Mapping[tuple[str, int], PosteriorSummary],
    t: int,
    seizures: Sequence[str] | None = None,
    window: int = WINDOW_SECONDS,
) -> tuple[np.ndarray, np.ndarray]:
    """Unweighted mean of edge and co-cluster probabilities over a window and seizures."""
    if seizures is None:
        seizures = sorted({k[0] for k in summaries})
    if not seizures:
        raise ValidationError("no seizures to aggregate")
    return (
        _window_mean(summaries, t, seizures, "edge_prob", window),
        _window_mean(summaries, t, seizures, "cocluster_prob", window),
    )


@dataclass
class WindowedProbabilities:
    window_starts: list[int]
    edge: dict[int, np.ndarray]
    cocluster: dict[int, np.ndarray]
    window_length_seconds: int = WINDOW_SECONDS
    seizures: list[str] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)

    @property
    def d(self) -> int:
        return next(iter(self.edge.values())).shape[0]

    def to_dict(self) -> dict:
        return {
            "window_length_seconds": self.window_length_seconds,
            "window_starts": list(self.window_starts),
            "seizures": list(self.seizures),
            "labels": list(self.labels),
            "edge": {str(t): self.edge[t].tolist() for t in self.window_starts},
            "cocluster": {str(t): self.cocluster[t].tolist() for t in self.window_starts},
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "WindowedProbabilities":
        starts = [int(t) for t in obj["window_starts"]]
        return cls(
            starts,
            {t: np.asarray(obj["edge"][str(t)], dtype=float) for t in starts},
            {t: np.asarray(obj["cocluster"][str(t)], dtype=float) for t in starts},
            int(obj["window_length_seconds"]),
            list(obj.get("seizures", [])),
            list(obj.get("labels", [])),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "WindowedProbabilities":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def aggregate_all(
    summaries: Mapping[tuple[str, int], PosteriorSummary] | Iterable[PosteriorSummary],
    window: int = WINDOW_SECONDS,
    seizures: Sequence[str] | None = None,
    labels: Sequence[str] = (),
) -> WindowedProbabilities:
    """Windows at every integer second whose segments all exist for every seizure.

    Window starts run from the earliest offset shared by all seizures to the
    latest offset minus ``window - 1``.
    """
    if not isinstance(summaries, Mapping):
        summaries = {s.key: s for s in summaries}
    if seizures is None:
        seizures = sorted({k[0] for k in summaries})
    offsets = [{off for (sz, off) in summaries if sz == s} for s in seizures]
    if not offsets or any(not o for o in offsets):
        raise ValidationError("every seizure needs at least one segment summary")
    lo = max(min(o) for o in offsets)
    hi = min(max(o) for o in offsets)
    starts = list(range(lo, hi - window + 2))
    if not starts:
        raise ValidationError(f"analyzed span [{lo}, {hi}] is shorter than one {window}-second window")
    edge, co = {}, {}
    for t in starts:
        edge[t], co[t] = aggregate_window(summaries, t, seizures, window)
    return WindowedProbabilities(starts, edge, co, window, list(seizures), list(labels))


def nearest_rank(values, q: float) -> float:
    """Nearest-rank percentile: the ceil(q/100 * n)-th smallest value (1-based)."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValidationError("percentile of an empty set")
    rank = max(1, math.ceil(q / 100.0 * v.size))
    return float(v[min(rank, v.size) - 1])


def top_percent_threshold(values, label: str = "edge") -> float:
    """Nearest-rank 99th percentile, or the maximum when there are too few candidates."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size < MIN_THRESHOLD_CANDIDATES:
        warnings.warn(
            f"only {values.size} candidate {label} entries (< {MIN_THRESHOLD_CANDIDATES}); "
            "threshold falls back to the maximum entry",
            RuntimeWarning,
            stacklevel=3,
        )
        return float(values.max())
    return nearest_rank(values, 99.0)


def baseline_thresholds(P_base_d: np.ndarray, P_base_c: np.ndarray) -> tuple[float, float]:
    """Top-1% (99th nearest-rank percentile) thresholds from the baseline window.

    Edge candidates are all off-diagonal entries; co-cluster candidates are the
    strict upper triangle.
    """
    P_d = np.asarray(P_base_d, dtype=float)
    P_c = np.asarray(P_base_c, dtype=float)
    d = P_d.shape[0]
    tau_d = top_percent_threshold(P_d[~np.eye(d, dtype=bool)], "edge")
    tau_c = top_percent_threshold(P_c[np.triu_indices(P_c.shape[0], 1)], "co-cluster")
    return tau_d, tau_c


@dataclass(frozen=True)
class NetworkEstimate:
    """Thresholded network for one window.

    ``edges`` holds (source j, target i) pairs. ``clusters`` lists the
    connected components of the co-cluster graph with at least two regions;
    all other regions are unclustered.
    """

    t: int
    edges: frozenset
    clusters: tuple
    d: int
    soz: int | None = None
    soz_cluster: int | None = None
    labels: tuple = ()

    def degree(self, region: int) -> int:
        return sum(1 for (j, i) in self.edges if region in (i, j))

    def cluster_size(self, region: int) -> int:
        """Size of the cluster holding ``region``; 1 if it is unclustered."""
        for c in self.clusters:
            if region in c:
                return len(c)
        return 1

    def label(self, k: int) -> str:
        return self.labels[k] if self.labels else str(k)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "d": self.d,
            "edges": [[self.label(j), self.label(i)] for (j, i) in sorted(self.edges)],
            "clusters": [[self.label(k) for k in sorted(c)] for c in self.clusters],
            "soz": None if self.soz is None else self.label(self.soz),
            "soz_cluster": self.soz_cluster,
        }

    def to_dot(self) -> str:
        lines = [f'digraph "window_{self.t}" {{']
        for ci, c in enumerate(self.clusters):
            style = ' color="red"; style="bold";' if ci == self.soz_cluster else ""
            lines.append(f'  subgraph "cluster_{ci}" {{ label="cluster {ci}";{style}')
            for k in sorted(c):
                lines.append(f'    "{self.label(k)}";')
            lines.append("  }")
        if self.soz is not None:
            lines.append(f'  "{self.label(self.soz)}" [shape=diamond];')
        for j, i in sorted(self.edges):
            lines.append(f'  "{self.label(j)}" -> "{self.label(i)}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_network(
    P_d: np.ndarray,
    P_c: np.ndarray,
    tau_d: float,
    tau_c: float,
    soz_label: int | None = None,
    t: int = 0,
    labels: Sequence[str] = (),
) -> NetworkEstimate:
    """Edges where ``P_d[i, j] > tau_d``; clusters from ``P_c > tau_c`` components."""
    P_d = np.asarray(P_d, dtype=float)
    P_c = np.asarray(P_c, dtype=float)
    d = P_d.shape[0]
    off = ~np.eye(d, dtype=bool)
    ii, jj = np.nonzero((P_d > tau_d) & off)
    edges = frozenset((int(j), int(i)) for i, j in zip(ii, jj))
    link = np.triu(P_c > tau_c, 1)
    n_comp, comp = connected_components(csr_matrix(link), directed=False)
    groups: dict[int, list[int]] = {}
    for k, lab in enumerate(comp):
        groups.setdefault(int(lab), []).append(k)
    clusters = tuple(
        sorted((frozenset(g) for g in groups.values() if len(g) > 1), key=lambda c: min(c))
    )
    soz_cluster = None
    if soz_label is not None:
        for ci, c in enumerate(clusters):
            if soz_label in c:
                soz_cluster = ci
    return NetworkEstimate(int(t), edges, clusters, d, soz_label, soz_cluster, tuple(labels))
