"""Model parameterization, priors and the value types shared across the package.

Observation model ``y_i(t) = c_i x_i(t) + eps_i(t)`` and first-order state model
``x_i(t) = sum_j gamma_ij A_ij x_j(t-1) + eta_i(t)`` with a stochastic-blockmodel
prior on the indicators ``gamma``. The state innovation variance is fixed at 1 and
``c_i > 0``, which pins the scale of ``x``. Self-lags are always present
(``gamma_ii = 1``) and never counted as edges.

Cluster labels are 0-based integers ``0..K-1`` throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError

__all__ = [
    "Recording",
    "Segment",
    "ModelState",
    "Hyperparams",
    "validate_recording",
    "standardize_segment",
    "sbm_edge_prob",
    "draw_prior_state",
    "default_n_clusters",
]


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Recording:
    """Multichannel recording, channels x samples, with the seizure onset marker."""

    data: np.ndarray
    rate: float
    onset_index: int
    channel_labels: tuple[str, ...]
    seizure_id: str = "sz0"

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data))
        object.__setattr__(self, "channel_labels", tuple(str(s) for s in self.channel_labels))
        object.__setattr__(self, "seizure_id", str(self.seizure_id))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Segment:
    """A one-second slice of a recording, labeled by its offset from onset in seconds."""

    data: np.ndarray
    start_offset_seconds: int
    seizure_id: str = "sz0"

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2:
            raise ValidationError(f"segment data must be 2-D, got shape {data.shape}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "start_offset_seconds", int(self.start_offset_seconds))
        object.__setattr__(self, "seizure_id", str(self.seizure_id))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Hyperparams:
    """Sampler settings and prior constants.

    ``a_prior_var`` and ``c_prior_var`` are the variances of the weak Gaussian
    priors on ``A_ij`` (mean 0) and ``c_i`` (mean 1, truncated to ``c > 0``).
    Observation noise variances get an inverse-gamma(``sigma_shape``,
    ``sigma_scale``) prior.
    """

    K: int = 2
    l0: float = 0.9
    u0: float = 0.1
    n_iter: int = 1500
    n_burnin: int = 500
    seed: int = 0
    a_prior_var: float = 10.0
    c_prior_var: float = 10.0
    sigma_shape: float = 2.0
    sigma_scale: float = 1.0

    def __post_init__(self):
        if int(self.K) < 1:
            raise ValidationError(f"K must be >= 1, got {self.K}")
        if not (0.0 < self.u0 <= self.l0 < 1.0):
            raise ValidationError(f"need 0 < u0 <= l0 < 1, got u0={self.u0}, l0={self.l0}")
        if not (self.n_iter > self.n_burnin >= 0):
            raise ValidationError(f"need n_iter > n_burnin >= 0, got {self.n_iter}, {self.n_burnin}")
        for name in ("a_prior_var", "c_prior_var", "sigma_shape", "sigma_scale"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        object.__setattr__(self, "K", int(self.K))

    @property
    def n_retained(self) -> int:
        return self.n_iter - self.n_burnin


def default_n_clusters(d: int) -> int:
    return max(2, round(d / 10))


@dataclass
class ModelState:
    """Current values of every sampled quantity in one chain.

    Mutable on purpose: the sampler updates blocks in place. Use ``copy()``
    before handing a state to code that must not see later updates.
    """

    x: np.ndarray  # (d, L) latent states
    gamma: np.ndarray  # (d, d) int8 indicators, gamma[i, j] = edge j -> i
    A: np.ndarray  # (d, d) coefficients
    c: np.ndarray  # (d,) observation scales, > 0
    sigma_eps2: np.ndarray  # (d,) observation noise variances
    m: np.ndarray  # (d,) cluster labels in 0..K-1
    B: np.ndarray  # (K, K) block connection probabilities
    p: np.ndarray  # (K,) cluster weights
    hp: Hyperparams = field(default_factory=Hyperparams)

    @property
    def d(self) -> int:
        return self.gamma.shape[0]

    @property
    def K(self) -> int:
        return self.B.shape[0]

    def copy(self) -> "ModelState":
        return ModelState(
            x=self.x.copy(), gamma=self.gamma.copy(), A=self.A.copy(), c=self.c.copy(),
            sigma_eps2=self.sigma_eps2.copy(), m=self.m.copy(), B=self.B.copy(),
            p=self.p.copy(), hp=self.hp,
        )

    def transition(self) -> np.ndarray:
        return self.gamma * self.A

    def check(self) -> None:
        """Raise if any quantity left its support."""
        hp = self.hp
        if not np.isin(self.gamma, (0, 1)).all():
            raise ValidationError("gamma must be binary")
        if not (np.all(self.c > 0) and np.all(self.sigma_eps2 > 0)):
            raise ValidationError("c and sigma_eps2 must be positive")
        if self.m.min() < 0 or self.m.max() >= self.K:
            raise ValidationError("cluster label out of range")
        diag = np.diag(self.B)
        off = self.B[~np.eye(self.K, dtype=bool)]
        if not (np.all((diag > hp.l0) & (diag < 1)) and np.all((off > 0) & (off < hp.u0))):
            raise ValidationError("block probabilities outside their truncation bounds")
        if np.any(self.p < 0) or not math.isclose(float(self.p.sum()), 1.0, abs_tol=1e-10):
            raise ValidationError("p is not on the simplex")
        if not np.all(np.isfinite(self.A)) or not np.all(np.isfinite(self.x)):
            raise ValidationError("non-finite A or x")


def validate_recording(
    raw,
    rate: float,
    onset_index: int,
    labels: Sequence[str] | None = None,
    seizure_id: str = "sz0",
) -> Recording:
    """Check a raw channels x samples matrix and wrap it as a ``Recording``."""
    try:
        data = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"raw data is not a rectangular numeric matrix: {exc}") from exc
    if data.ndim != 2:
        raise ValidationError(f"raw data must be 2-D (channels x samples), got shape {data.shape}")
    d, T = data.shape
    if d < 2:
        raise ValidationError(f"need at least 2 channels, got {d}")
    if not rate > 0:
        raise ValidationError(f"rate must be positive, got {rate}")
    if not np.all(np.isfinite(data)):
        ch, t = np.argwhere(~np.isfinite(data))[0]
        raise ValidationError(f"non-finite sample at channel {ch}, index {t}")
    if labels is None:
        labels = [f"ch{i}" for i in range(d)]
    labels = [str(s) for s in labels]
    if len(labels) != d:
        raise ValidationError(f"label count mismatch: {len(labels)} labels for {d} channels")
    if len(set(labels)) != d:
        raise ValidationError("channel labels must be unique")
    if not (0 <= int(onset_index) < T):
        raise ValidationError(f"onset index {onset_index} outside [0, {T})")
    return Recording(data, float(rate), int(onset_index), tuple(labels), seizure_id)


def standardize_segment(seg: Segment) -> Segment:
    """Return the segment with every channel shifted and scaled to mean 0, variance 1.

    Uses the population variance (``ddof=0``). A channel that is already
    standardized is returned unchanged to within floating tolerance.
    """
    data = np.asarray(seg.data, dtype=float)
    mu = data.mean(axis=1, keepdims=True)
    centered = data - mu
    sd = np.sqrt(np.mean(centered**2, axis=1))
    scale_ref = np.maximum(np.abs(mu[:, 0]), 1.0)
    flat = np.flatnonzero(sd <= 1e-12 * scale_ref)
    if flat.size:
        raise ValidationError(f"zero-variance channel {int(flat[0])}")
    return Segment(centered / sd[:, None], seg.start_offset_seconds, seg.seizure_id)


def sbm_edge_prob(m_i: int, m_j: int, B: np.ndarray) -> float:
    """Prior probability of the edge j -> i given cluster labels (0-based)."""
    B = np.asarray(B)
    K = B.shape[0]
    for lab in (m_i, m_j):
        if not (0 <= int(lab) < K):
            raise ValidationError(f"cluster label {lab} outside 0..{K - 1}")
    return float(B[int(m_i), int(m_j)])


def draw_prior_state(d: int, L: int, hp: Hyperparams, rng: np.random.Generator) -> ModelState:
    """One joint draw of all parameters and latent states from the prior."""
    K = hp.K
    p = rng.dirichlet(np.ones(K))
    m = rng.choice(K, size=d, p=p)
    B = rng.uniform(0.0, hp.u0, size=(K, K))
    B[np.diag_indices(K)] = rng.uniform(hp.l0, 1.0, size=K)
    gamma = (rng.random((d, d)) < B[m][:, m]).astype(np.int8)
    np.fill_diagonal(gamma, 1)
    A = rng.normal(0.0, math.sqrt(hp.a_prior_var), size=(d, d))
    c = _positive_normal(1.0, math.sqrt(hp.c_prior_var), d, rng)
    sigma_eps2 = 1.0 / rng.gamma(hp.sigma_shape, 1.0 / hp.sigma_scale, size=d)
    F = gamma * A
    x = np.empty((d, L))
    x[:, 0] = rng.standard_normal(d)
    for t in range(1, L):
        x[:, t] = F @ x[:, t - 1] + rng.standard_normal(d)
    return ModelState(x, gamma, A, c, sigma_eps2, m, B, p, hp)


def _positive_normal(mean, sd, size, rng):
    # inverse-CDF draw of N(mean, sd^2) truncated to (0, inf), via the upper tail
    from scipy.special import ndtr, ndtri

    mean = np.broadcast_to(np.asarray(mean, dtype=float), (size,))
    sd = np.broadcast_to(np.asarray(sd, dtype=float), (size,))
    a = -mean / sd
    tail = ndtr(-a)
    u = rng.random(size)
    z = -ndtri(u * tail)
    # tail underflow: the truncation point is > 37 sd above the mean
    under = tail <= 0
    if np.any(under):
        z[under] = a[under] + rng.exponential(size=int(under.sum())) / a[under]
    return np.maximum(mean + sd * z, np.finfo(float).tiny)
