"""Reference connectivity estimators and the ROC harness.

PDC follows Baccala & Sameshima: with ``Abar(f) = I - sum_r A_r exp(-2 pi i f r)``,
``pi_ij(f) = |Abar_ij(f)| / sqrt(sum_k |Abar_kj(f)|^2)`` measures influence of
channel j on channel i. Cross-coherence is Welch magnitude-squared coherence.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import NumericalError, ValidationError
from .model import Segment

log = logging.getLogger(__name__)

RIDGE_JITTER = 1e-8

__all__ = [
    "ScoreMatrix",
    "VarFit",
    "RocResult",
    "fit_var_ls",
    "pdc_spectrum",
    "pdc",
    "cross_coherence",
    "roc_curve",
    "baseline_connection_counts",
]


@dataclass(frozen=True)
class ScoreMatrix:
    scores: np.ndarray
    method: str
    band: tuple[float, float]


@dataclass(frozen=True)
class VarFit:
    coefs: np.ndarray  # (p, d, d); coefs[r-1][i, j] multiplies y_j(t - r) in equation i
    intercept: np.ndarray  # (d,)
    resid_cov: np.ndarray  # (d, d)
    stderr: np.ndarray  # (p, d, d)
    residuals: np.ndarray  # (d, L - p)
    design: np.ndarray  # (L - p, 1 + p d)

    @property
    def order(self) -> int:
        return self.coefs.shape[0]


def _data(seg) -> np.ndarray:
    return np.asarray(seg.data if isinstance(seg, Segment) else seg, dtype=float)


def fit_var_ls(seg, order: int = 5) -> VarFit:
    """Equation-by-equation least squares VAR(order) with intercept."""
    y = _data(seg)
    d, L = y.shape
    p = int(order)
    if p < 1:
        raise ValidationError("VAR order must be >= 1")
    if L <= p * d + 1:
        raise ValidationError(f"insufficient samples: L={L} <= p*d+1={p * d + 1}")
    n = L - p
    Z = np.empty((n, 1 + p * d))
    Z[:, 0] = 1.0
    for r in range(1, p + 1):
        Z[:, 1 + (r - 1) * d : 1 + r * d] = y[:, p - r : L - r].T
    Y = y[:, p:].T
    gram = Z.T @ Z
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        log.info("rank-deficient VAR design; ridge jitter %g applied", RIDGE_JITTER)
        gram = gram + RIDGE_JITTER * np.eye(gram.shape[0])
    beta = np.linalg.solve(gram, Z.T @ Y)  # (1 + p d, d)
    resid = Y - Z @ beta
    dof = max(n - Z.shape[1], 1)
    resid_cov = resid.T @ resid / dof
    ginv_diag = np.diag(np.linalg.inv(gram))
    se = np.sqrt(np.outer(ginv_diag, np.diag(resid_cov)))  # (1 + p d, d)
    coefs = np.stack([beta[1 + (r - 1) * d : 1 + r * d].T for r in range(1, p + 1)])
    stderr = np.stack([se[1 + (r - 1) * d : 1 + r * d].T for r in range(1, p + 1)])
    return VarFit(coefs, beta[0].copy(), resid_cov, stderr, resid.T.copy(), Z)


def pdc_spectrum(coefs: np.ndarray, freqs, rate: float = 1.0) -> np.ndarray:
    """PDC at each frequency, shape (n_freqs, d, d). ``freqs`` in the units of ``rate``."""
    coefs = np.asarray(coefs, dtype=float)
    if coefs.ndim == 2:
        coefs = coefs[None]
    p, d, _ = coefs.shape
    f = np.atleast_1d(np.asarray(freqs, dtype=float)) / rate
    lags = np.arange(1, p + 1)
    phase = np.exp(-2j * np.pi * f[:, None] * lags[None, :])  # (nf, p)
    Abar = np.eye(d)[None] - np.einsum("fr,rij->fij", phase, coefs)
    mag = np.abs(Abar)
    norm = np.sqrt(np.sum(mag**2, axis=1, keepdims=True))  # column norms, (nf, 1, d)
    if np.any(norm == 0):
        raise NumericalError("zero column norm in PDC denominator")
    return mag / norm


def pdc(coefs, freqs, rate: float = 1.0, aggregate: str = "max") -> ScoreMatrix:
    """Band-aggregated PDC scores; ``scores[i, j]`` rates the influence j -> i."""
    spec = pdc_spectrum(coefs, freqs, rate)
    agg = {"max": np.max, "mean": np.mean}[aggregate]
    f = np.atleast_1d(np.asarray(freqs, dtype=float))
    return ScoreMatrix(agg(spec, axis=0), "pdc", (float(f.min()), float(f.max())))


def cross_coherence(seg, band, rate: float = 1.0, nperseg: int | None = None, aggregate: str = "mean") -> ScoreMatrix:
    """Welch magnitude-squared coherence, averaged (default) over ``band``."""
    y = _data(seg)
    d, L = y.shape
    lo, hi = (float(b) for b in band)
    nyq = rate / 2.0
    if not (0.0 <= lo <= hi <= nyq):
        raise ValidationError(f"band ({lo}, {hi}) outside [0, Nyquist={nyq}]")
    if nperseg is None:
        nperseg = min(L, max(16, L // 8))
    freqs, coh = signal.coherence(y[:, None, :], y[None, :, :], fs=rate, nperseg=nperseg, axis=-1)
    sel = (freqs >= lo) & (freqs <= hi)
    if not sel.any():
        raise ValidationError(f"no frequency bins inside band ({lo}, {hi}) at this resolution")
    agg = {"max": np.max, "mean": np.mean}[aggregate]
    raw = agg(coh[..., sel], axis=-1)
    upper = np.triu(raw, 1)
    scores = upper + upper.T
    np.fill_diagonal(scores, 1.0)
    return ScoreMatrix(np.clip(scores, 0.0, 1.0), "cc", (lo, hi))


@dataclass(frozen=True)
class RocResult:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "fpr", "tpr"])
            for row in zip(self.thresholds.tolist(), self.fpr.tolist(), self.tpr.tolist()):
                w.writerow([repr(v) for v in row])


def roc_curve(scores, truth) -> RocResult:
    """ROC over off-diagonal entries, thresholding at every distinct score.

    A pair is called positive when its score is >= the threshold. The first
    point (threshold +inf) is (0, 0); the last is (1, 1).
    """
    S = np.asarray(scores.scores if isinstance(scores, ScoreMatrix) else scores, dtype=float)
    T = np.asarray(truth)
    if S.shape != T.shape or S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError("scores and truth must be square matrices of equal shape")
    if not np.isin(T, (0, 1)).all():
        raise ValidationError("truth must be binary")
    off = ~np.eye(S.shape[0], dtype=bool)
    s = S[off]
    t = T[off].astype(bool)
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("degenerate truth: need both present and absent edges")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    t_sorted = t[order]
    tp = np.cumsum(t_sorted)
    fp = np.cumsum(~t_sorted)
    # keep the last index of each run of tied scores
    last = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), s_sorted.size - 1]
    thresholds = np.r_[np.inf, s_sorted[last]]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocResult(thresholds, fpr, tpr, auc)


def baseline_connection_counts(score_windows, region: int) -> tuple[float, dict]:
    """Connections of ``region`` per window, thresholded like the MARSS edge matrices.

    ``score_windows`` maps window start to a score matrix. The threshold is the
    top-1% (nearest-rank 99th percentile) of the earliest window's off-diagonal
    scores, applied with strict ``>``. For symmetric scores each undirected link
    counts once per direction.
    """
    from .windows import top_percent_threshold

    if not score_windows:
        raise ValidationError("no score windows")
    mats = {t: np.asarray(getattr(s, "scores", s), dtype=float) for t, s in score_windows.items()}
    base = min(mats)
    d = mats[base].shape[0]
    tau = top_percent_threshold(mats[base][~np.eye(d, dtype=bool)], "edge")
    if not 0 <= region < d:
        raise ValidationError(f"region {region} out of range for d={d}")
    counts = {}
    for t in sorted(mats):
        S = mats[t]
        row = np.delete(S[region], region)
        col = np.delete(S[:, region], region)
        counts[t] = int(np.count_nonzero(row > tau) + np.count_nonzero(col > tau))
    return tau, counts
