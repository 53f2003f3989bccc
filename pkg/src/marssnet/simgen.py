"""Synthetic clustered networks and recordings with correlated measurement noise.

A linear stand-in for a neural-mass generator: latent first-order VAR dynamics
on a clustered directed graph, observed through per-channel scales plus noise
that is correlated across channels (exchangeable) and in time (AR(1)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .model import Recording, validate_recording

__all__ = [
    "GroundTruth",
    "spectral_radius",
    "stability_rescale",
    "generate_clustered_network",
    "exchangeable_corr",
    "generate_recording",
    "add_ictal_edges",
    "plant_seizure",
    "grid_adjacency",
]

DEFAULT_RADIUS = 0.9


@dataclass(frozen=True)
class GroundTruth:
    gamma_true: np.ndarray  # (d, d) int, gamma[i, j] = edge j -> i, zero diagonal
    A_true: np.ndarray  # (d, d) transition matrix, includes self-lags
    memberships: np.ndarray  # (d,) labels in 0..K-1
    stability: float = field(default=float("nan"))

    def __post_init__(self):
        if np.isnan(self.stability):
            object.__setattr__(self, "stability", spectral_radius(self.A_true))

    @property
    def d(self) -> int:
        return self.gamma_true.shape[0]

    def to_dict(self) -> dict:
        return {
            "gamma_true": self.gamma_true.astype(int).tolist(),
            "A_true": self.A_true.tolist(),
            "memberships": self.memberships.astype(int).tolist(),
            "stability": self.stability,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GroundTruth":
        return cls(
            np.asarray(obj["gamma_true"], dtype=int),
            np.asarray(obj["A_true"], dtype=float),
            np.asarray(obj["memberships"], dtype=int),
            float(obj["stability"]),
        )


def spectral_radius(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def stability_rescale(A_masked: np.ndarray, target: float = DEFAULT_RADIUS) -> np.ndarray:
    """Scale a matrix so its spectral radius equals ``target``; zero stays zero."""
    A = np.asarray(A_masked, dtype=float)
    rho = spectral_radius(A)
    if rho == 0.0:
        return A.copy()
    return A * (target / rho)


def generate_clustered_network(
    d: int,
    K: int,
    p_within: float,
    p_between: float,
    rng: np.random.Generator,
    self_coef: float = 0.5,
    coef_sd: float = 0.5,
    radius: float = DEFAULT_RADIUS,
    max_retries: int = 100,
) -> GroundTruth:
    """Draw a clustered directed network and stable coefficients.

    Memberships are uniform over ``K`` labels (redrawn until no cluster is
    empty). Each ordered pair gets an edge with ``p_within`` or ``p_between``.
    Edge coefficients are N(0, coef_sd^2), self-lags ``self_coef``; the whole
    transition matrix is then rescaled to spectral radius ``radius``.
    """
    if d < 2 or K < 1 or K > d:
        raise ValidationError(f"need 2 <= d and 1 <= K <= d, got d={d}, K={K}")
    for name, pr in (("p_within", p_within), ("p_between", p_between)):
        if not 0.0 <= pr <= 1.0:
            raise ValidationError(f"{name} must be a probability, got {pr}")
    for _ in range(max_retries):
        m = rng.integers(0, K, size=d)
        if np.bincount(m, minlength=K).min() > 0:
            break
    else:
        raise ValidationError(f"could not draw {K} non-empty clusters for d={d}")
    same = m[:, None] == m[None, :]
    gamma = (rng.random((d, d)) < np.where(same, p_within, p_between)).astype(int)
    np.fill_diagonal(gamma, 0)
    A = gamma * rng.normal(0.0, coef_sd, size=(d, d))
    A[np.diag_indices(d)] = self_coef
    A = stability_rescale(A, radius)
    return GroundTruth(gamma, A, m)


def exchangeable_corr(d: int, rho: float) -> np.ndarray:
    """Compound-symmetry correlation matrix, positive definite for -1/(d-1) < rho < 1."""
    R = np.full((d, d), float(rho))
    np.fill_diagonal(R, 1.0)
    return R


def _simulate_states(F_list, switch, T, rng, x0=None):
    d = F_list[0].shape[0]
    x = np.empty((d, T))
    x[:, 0] = rng.standard_normal(d) if x0 is None else x0
    eta = rng.standard_normal((d, T))
    for t in range(1, T):
        F = F_list[1] if t >= switch else F_list[0]
        x[:, t] = F @ x[:, t - 1] + eta[:, t]
    return x


def _correlated_noise(d, T, spatial_rho, temporal_rho, noise_sd, rng):
    if noise_sd == 0.0:
        return np.zeros((d, T))
    if not (0.0 <= spatial_rho < 1.0 and 0.0 <= temporal_rho < 1.0):
        raise ValidationError("noise correlations must lie in [0, 1)")
    chol = np.linalg.cholesky(exchangeable_corr(d, spatial_rho))
    z = chol @ rng.standard_normal((d, T))
    eps = np.empty((d, T))
    # stationary AR(1): unit marginal variance, lag-1 autocorrelation temporal_rho
    eps[:, 0] = z[:, 0]
    innov_sd = np.sqrt(1.0 - temporal_rho**2)
    for t in range(1, T):
        eps[:, t] = temporal_rho * eps[:, t - 1] + innov_sd * z[:, t]
    return noise_sd * eps


def _burn_in_state(F, rng, n=200):
    d = F.shape[0]
    x = rng.standard_normal(d)
    for _ in range(n):
        x = F @ x + rng.standard_normal(d)
    return x


def generate_recording(
    gt: GroundTruth,
    T: int,
    c=None,
    noise_spatial_rho: float = 0.5,
    noise_temporal_rho: float = 0.5,
    rng: np.random.Generator | None = None,
    noise_sd: float = 0.5,
    rate: float = 64.0,
    onset_index: int = 0,
    labels=None,
    seizure_id: str = "sz0",
) -> Recording:
    """Simulate ``y = c * x + eps`` from the ground-truth dynamics.

    The state starts from a burned-in draw so the series is stationary from
    sample 0. ``eps`` has unit-variance marginals scaled by ``noise_sd``.
    """
    if rng is None:
        rng = np.random.default_rng()
    if gt.stability >= 1.0:
        raise ValidationError(f"unstable ground truth, spectral radius {gt.stability:.3f}")
    d = gt.d
    c = np.ones(d) if c is None else np.broadcast_to(np.asarray(c, dtype=float), (d,))
    x0 = _burn_in_state(gt.A_true, rng)
    x = _simulate_states([gt.A_true, gt.A_true], T, T, rng, x0=x0)
    eps = _correlated_noise(d, T, noise_spatial_rho, noise_temporal_rho, noise_sd, rng)
    y = c[:, None] * x + eps
    return validate_recording(y, rate, onset_index, labels, seizure_id)


def add_ictal_edges(
    gt: GroundTruth,
    regions,
    weight: float = 0.5,
    rng: np.random.Generator | None = None,
    radius: float = 0.95,
) -> GroundTruth:
    """Superset network in which ``regions`` form a fully connected directed group.

    Every ordered pair of distinct regions gets an edge of magnitude ``weight``,
    with a random sign when ``rng`` is given. The merged matrix is rescaled only
    if its spectral radius would exceed ``radius``.
    """
    regions = sorted({int(r) for r in regions})
    if len(regions) < 2:
        raise ValidationError("an ictal group needs at least two regions")
    if any(not 0 <= r < gt.d for r in regions):
        raise ValidationError(f"ictal regions {regions} out of range for d={gt.d}")
    gamma = gt.gamma_true.copy()
    A = gt.A_true.copy()
    for i in regions:
        for j in regions:
            if i == j:
                continue
            sign = 1.0 if rng is None else float(rng.choice((-1.0, 1.0)))
            gamma[i, j] = 1
            A[i, j] = sign * weight
    if spectral_radius(A) > radius:
        A = stability_rescale(A, radius)
    return GroundTruth(gamma, A, gt.memberships.copy())


def plant_seizure(
    gt_base: GroundTruth,
    gt_ictal: GroundTruth,
    onset_second: int,
    T: int,
    rate: int = 64,
    c=None,
    noise_spatial_rho: float = 0.5,
    noise_temporal_rho: float = 0.5,
    noise_sd: float = 0.5,
    rng: np.random.Generator | None = None,
    labels=None,
    seizure_id: str = "sz0",
) -> Recording:
    """Recording whose dynamics switch from ``gt_base`` to ``gt_ictal`` at onset.

    ``T`` is in seconds and ``onset_second`` counts seconds from the start of
    the recording; the latent state is carried continuously across the switch.
    """
    if rng is None:
        rng = np.random.default_rng()
    if not 0 <= onset_second < T:
        raise ValidationError(f"onset second {onset_second} outside [0, {T})")
    for g in (gt_base, gt_ictal):
        if g.stability >= 1.0:
            raise ValidationError(f"unstable ground truth, spectral radius {g.stability:.3f}")
    d = gt_base.d
    n = int(T * rate)
    onset = int(onset_second * rate)
    c = np.ones(d) if c is None else np.broadcast_to(np.asarray(c, dtype=float), (d,))
    x0 = _burn_in_state(gt_base.A_true, rng)
    x = _simulate_states([gt_base.A_true, gt_ictal.A_true], onset, n, rng, x0=x0)
    eps = _correlated_noise(d, n, noise_spatial_rho, noise_temporal_rho, noise_sd, rng)
    return validate_recording(c[:, None] * x + eps, rate, onset, labels, seizure_id)


def grid_adjacency(rows: int, cols: int) -> dict[int, set[int]]:
    """4-neighbour adjacency of a rows x cols electrode grid, row-major numbering."""
    adj: dict[int, set[int]] = {}
    for r in range(rows):
        for q in range(cols):
            k = r * cols + q
            nb = set()
            for dr, dq in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, qq = r + dr, q + dq
                if 0 <= rr < rows and 0 <= qq < cols:
                    nb.add(rr * cols + qq)
            adj[k] = nb
    return adj

