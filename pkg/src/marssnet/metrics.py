"""Extent of directional connectivity, its change, SOZ localization and onset tests."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .windows import WINDOW_SECONDS, WindowedProbabilities, baseline_thresholds, build_network, nearest_rank

__all__ = [
    "ConnectivitySeries",
    "SOZReport",
    "LocalizationScore",
    "directional_extent",
    "connectivity_series",
    "connectivity_change",
    "localize_soz",
    "score_localization",
    "postictal_increase_pvalue",
    "OnsetTest",
    "onset_tests",
]


def directional_extent(P_d: np.ndarray) -> np.ndarray:
    """``D_j = sum_{i != j} (P[i, j] + P[j, i]) / (2 d)``."""
    P = np.array(P_d, dtype=float)
    d = P.shape[0]
    np.fill_diagonal(P, 0.0)
    return (P.sum(axis=0) + P.sum(axis=1)) / (2.0 * d)


@dataclass
class ConnectivitySeries:
    """D on a one-second grid of window starts, DC where ``t - lag`` exists."""

    grid: list[int]
    D: np.ndarray  # (len(grid), d)
    lag: int = WINDOW_SECONDS
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.D = np.asarray(self.D, dtype=float)
        self._pos = {t: k for k, t in enumerate(self.grid)}

    @property
    def d(self) -> int:
        return self.D.shape[1]

    def D_at(self, t: int) -> np.ndarray:
        if t not in self._pos:
            raise ValidationError(f"no window starting at {t}")
        return self.D[self._pos[t]]

    @property
    def dc_grid(self) -> list[int]:
        return [t for t in self.grid if t - self.lag in self._pos]

    def DC_at(self, t: int) -> np.ndarray:
        if t not in self._pos:
            raise ValidationError(f"no window starting at {t}")
        if t - self.lag not in self._pos:
            raise ValidationError(f"insufficient history: DC at {t} needs a window at {t - self.lag}")
        return self.D_at(t) - self.D_at(t - self.lag)

    def DC(self) -> tuple[list[int], np.ndarray]:
        grid = self.dc_grid
        if not grid:
            return grid, np.empty((0, self.d))
        return grid, np.stack([self.DC_at(t) for t in grid])

    def csv_text(self, which: str = "D") -> str:
        """Long format: t, region, value."""
        if which == "D":
            grid, vals = self.grid, self.D
        else:
            grid, vals = self.DC()
        names = self.labels or [str(j) for j in range(self.d)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "region", "value"])
        for k, t in enumerate(grid):
            for j in range(self.d):
                w.writerow([t, names[j], repr(float(vals[k, j]))])
        return buf.getvalue()

    def write_csv(self, path, which: str = "D") -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text(which))


def connectivity_series(wp: WindowedProbabilities, lag: int | None = None) -> ConnectivitySeries:
    grid = list(wp.window_starts)
    D = np.stack([directional_extent(wp.edge[t]) for t in grid])
    return ConnectivitySeries(grid, D, wp.window_length_seconds if lag is None else lag, list(wp.labels))


def connectivity_change(series: ConnectivitySeries) -> dict[int, np.ndarray]:
    """DC at every grid point with enough history, keyed by window start."""
    grid, vals = series.DC()
    return {t: vals[k] for k, t in enumerate(grid)}


@dataclass(frozen=True)
class SOZReport:
    candidates: frozenset
    M: np.ndarray
    C0: float
    DC0: np.ndarray
    labels: tuple = ()

    def to_dict(self) -> dict:
        name = (lambda k: self.labels[k]) if self.labels else str
        return {
            "candidates": [name(k) for k in sorted(self.candidates)],
            "C0": self.C0,
            "M": {name(k): float(v) for k, v in enumerate(self.M)},
            "DC0": {name(k): float(v) for k, v in enumerate(self.DC0)},
        }


def localize_soz(series: ConnectivitySeries, onset: int = 0, decile: float = 0.10) -> SOZReport:
    """Select regions whose DC at onset beats 0.9 x their pre-onset maximum and the top-decile cutoff."""
    grid, vals = series.DC()
    if onset not in grid:
        raise ValidationError(f"DC is not defined at onset t={onset}")
    pre = np.array([t <= onset for t in grid])
    M = vals[pre].max(axis=0)
    DC0 = vals[grid.index(onset)]
    C0 = nearest_rank(DC0, 100.0 * (1.0 - decile))
    chosen = np.flatnonzero((DC0 > 0.9 * M) & (DC0 > C0))
    return SOZReport(frozenset(int(k) for k in chosen), M, C0, DC0, tuple(series.labels))


@dataclass(frozen=True)
class LocalizationScore:
    tpr: float
    fpr: float
    detected: dict
    false_positives: frozenset
    n_eligible: int

    def to_dict(self) -> dict:
        return {
            "tpr": self.tpr,
            "fpr": self.fpr,
            "detected": {str(k): v for k, v in self.detected.items()},
            "false_positives": sorted(str(x) for x in self.false_positives),
            "n_eligible": self.n_eligible,
        }


def _site_regions(site) -> frozenset:
    if isinstance(site, (set, frozenset, list, tuple)):
        return frozenset(site)
    return frozenset([site])


def score_localization(
    candidates: Iterable[Hashable],
    soz_sites: Sequence,
    adjacency: Mapping[Hashable, Iterable[Hashable]],
    analyzed: Iterable[Hashable] | None = None,
) -> LocalizationScore:
    """TPR over SOZ sites and FPR over regions more than one hop from every site.

    A site (a region, or a collection of regions deemed one site) is detected
    when some candidate is in it or adjacent to it. The FPR denominator is the
    number of analyzed regions that are not within one hop of any site.
    """
    adj = {k: set(v) for k, v in adjacency.items()}
    for k, nbrs in list(adj.items()):
        for n in nbrs:
            adj.setdefault(n, set()).add(k)
    regions = set(adj) if analyzed is None else set(analyzed)
    cands = set(candidates)
    for c in cands:
        if c not in adj:
            raise ValidationError(f"candidate {c!r} is absent from the adjacency graph")
    sites = [_site_regions(s) for s in soz_sites]
    if not sites:
        raise ValidationError("need at least one SOZ site")
    near_any: set = set()
    detected = {}
    for k, site in enumerate(sites):
        for r in site:
            if r not in adj:
                raise ValidationError(f"SOZ region {r!r} is absent from the adjacency graph")
        near = set(site)
        for r in site:
            near |= adj[r]
        near_any |= near
        detected[k] = bool(cands & near)
    fps = frozenset(c for c in cands if c not in near_any)
    eligible = len(regions - near_any)
    tpr = sum(detected.values()) / len(sites)
    fpr = len(fps) / eligible if eligible else 0.0
    return LocalizationScore(tpr, fpr, detected, fps, eligible)


def postictal_increase_pvalue(null_values: Sequence[float], observed: float) -> float:
    """Add-one empirical p-value: ``(1 + #{null >= observed}) / (N + 1)``."""
    null = np.asarray(null_values, dtype=float).ravel()
    if null.size == 0:
        raise ValidationError("empty null set")
    return float((1 + np.count_nonzero(null >= observed)) / (null.size + 1))


@dataclass(frozen=True)
class OnsetTest:
    soz: int
    null_counts: list
    observed_count: int
    p_count: float
    null_cluster_sizes: list
    observed_cluster_size: int
    p_cluster: float
    tau_d: float
    tau_c: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def onset_tests(wp: WindowedProbabilities, soz: int, onset: int = 0, thresholds=None) -> OnsetTest:
    """Compare the SOZ's connection count and cluster size just after onset with pre-onset windows.

    The null set is every window lying entirely before onset; thresholds come
    from the earliest window unless given.
    """
    L = wp.window_length_seconds
    starts = wp.window_starts
    if onset not in wp.edge:
        raise ValidationError(f"no window starting at onset t={onset}")
    null_starts = [t for t in starts if t + L <= onset]
    if not null_starts:
        raise ValidationError("no pre-onset windows for the null distribution")
    if thresholds is None:
        base = starts[0]
        thresholds = baseline_thresholds(wp.edge[base], wp.cocluster[base])
    tau_d, tau_c = thresholds

    def stats(t):
        net = build_network(wp.edge[t], wp.cocluster[t], tau_d, tau_c, soz, t)
        return net.degree(soz), net.cluster_size(soz)

    null = [stats(t) for t in null_starts]
    obs = stats(onset)
    nc = [n[0] for n in null]
    ns = [n[1] for n in null]
    return OnsetTest(
        soz, nc, obs[0], postictal_increase_pvalue(nc, obs[0]),
        ns, obs[1], postictal_increase_pvalue(ns, obs[1]), tau_d, tau_c,
    )
