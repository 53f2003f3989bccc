"""Gibbs sampler for one standardized segment.

One sweep updates, in this fixed order: latent states (forward filtering,
backward sampling), edge indicators (row coefficients integrated out),
coefficients / observation scales / noise variances, cluster labels and
weights, block probabilities.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, betaincinv

from . import _kernels
from .errors import NumericalError, ValidationError
from .model import Hyperparams, ModelState, Segment, _positive_normal

log = logging.getLogger(__name__)

RIDGE_JITTER = 1e-8

__all__ = [
    "PosteriorSummary",
    "ffbs_sample_states",
    "sample_gamma",
    "sample_continuous_params",
    "sample_memberships",
    "sample_block_probs",
    "gibbs_sweep",
    "init_state",
    "run_gibbs",
    "segment_rng",
]


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior edge and co-cluster probabilities for one segment.

    ``edge_prob[i, j]`` is the fraction of retained draws with the edge
    j -> i present. Its diagonal is always 1 (self-lags are fixed) and is
    excluded from every downstream analysis.
    """

    edge_prob: np.ndarray
    cocluster_prob: np.ndarray
    n_retained: int
    n_iter: int
    seed: int
    seizure_id: str = "sz0"
    start_offset_seconds: int = 0

    def __post_init__(self):
        for name in ("edge_prob", "cocluster_prob"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def key(self) -> tuple[str, int]:
        return (self.seizure_id, self.start_offset_seconds)

    def to_dict(self) -> dict:
        return {
            "seizure_id": self.seizure_id,
            "start_offset_seconds": self.start_offset_seconds,
            "n_retained": self.n_retained,
            "n_iter": self.n_iter,
            "seed": self.seed,
            "diagonal_excluded": True,
            "edge_prob": self.edge_prob.tolist(),
            "cocluster_prob": self.cocluster_prob.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PosteriorSummary":
        return cls(
            edge_prob=np.asarray(obj["edge_prob"], dtype=float),
            cocluster_prob=np.asarray(obj["cocluster_prob"], dtype=float),
            n_retained=int(obj["n_retained"]),
            n_iter=int(obj["n_iter"]),
            seed=int(obj["seed"]),
            seizure_id=str(obj["seizure_id"]),
            start_offset_seconds=int(obj["start_offset_seconds"]),
        )


def segment_rng(seed: int, seizure_id: str, offset: int) -> np.random.Generator:
    """Independent stream for one segment, derived from (seed, seizure, offset)."""
    sz = int.from_bytes(hashlib.sha256(str(seizure_id).encode()).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, sz, int(offset) + 2**31]))


# --------------------------------------------------------------------------
# conditional samplers
# --------------------------------------------------------------------------

def ffbs_sample_states(state: ModelState, seg: Segment | np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw the whole latent trajectory from its conditional given data and parameters.

    The initial state has prior N(0, I). Returns a (d, L) array.
    """
    y = np.ascontiguousarray(seg.data if isinstance(seg, Segment) else seg, dtype=float)
    d, L = y.shape
    noise = rng.standard_normal((L, d))
    F = np.ascontiguousarray(state.transition(), dtype=float)
    x, bad_t = _kernels.ffbs(
        y, F, np.ascontiguousarray(state.c, dtype=float),
        np.ascontiguousarray(state.sigma_eps2, dtype=float), noise,
    )
    if bad_t >= 0:
        raise NumericalError(f"innovation covariance not positive definite at time index {bad_t}")
    if not np.all(np.isfinite(x)):
        raise NumericalError("state draw is not finite")
    return x


def _lag_moments(x: np.ndarray):
    past = x[:, :-1]
    now = x[:, 1:]
    G = past @ past.T
    bmat = now @ past.T  # bmat[i, j] = sum_t x_i(t) x_j(t-1)
    zz = np.einsum("it,it->i", now, now)
    return G, bmat, zz


def sample_gamma(state: ModelState, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Redraw all off-diagonal indicators; diagonal entries are left as they are."""
    G, bmat, zz = _lag_moments(x)
    prior = np.ascontiguousarray(state.B[state.m][:, state.m])
    u = rng.random(state.gamma.shape)
    gamma = np.ascontiguousarray(state.gamma, dtype=np.int8).copy()
    _kernels.gamma_sweep(G, bmat, zz, gamma, prior, u, float(state.hp.a_prior_var))
    return gamma


def sample_continuous_params(state: ModelState, x: np.ndarray, seg: Segment | np.ndarray, rng: np.random.Generator):
    """Draw coefficients, observation scales and noise variances from their conditionals.

    Returns ``(A, c, sigma_eps2)``. Coefficients of absent edges are prior draws.
    """
    y = np.asarray(seg.data if isinstance(seg, Segment) else seg, dtype=float)
    hp = state.hp
    G, bmat, _ = _lag_moments(x)
    d = x.shape[0]
    A, n_jit = _kernels.coef_rows(
        np.ascontiguousarray(state.gamma, dtype=np.int8), G, bmat, float(hp.a_prior_var),
        rng.standard_normal((d, d)), rng.standard_normal((d, d)), RIDGE_JITTER,
    )
    if n_jit:
        log.info("ridge jitter %g applied to %d coefficient Gram blocks", RIDGE_JITTER, n_jit)

    s2 = state.sigma_eps2
    xx = np.einsum("it,it->i", x, x)
    xy = np.einsum("it,it->i", x, y)
    prec = xx / s2 + 1.0 / hp.c_prior_var
    mean = (xy / s2 + 1.0 / hp.c_prior_var) / prec
    c = _positive_normal(mean, 1.0 / np.sqrt(prec), x.shape[0], rng)

    resid = y - c[:, None] * x
    shape = hp.sigma_shape + 0.5 * y.shape[1]
    scale = hp.sigma_scale + 0.5 * np.einsum("it,it->i", resid, resid)
    sigma_eps2 = scale / rng.gamma(shape, 1.0, size=x.shape[0])
    return A, c, sigma_eps2


def sample_memberships(state: ModelState, rng: np.random.Generator):
    """Redraw every cluster label, then the cluster weights. Returns ``(m, p)``."""
    K = state.K
    if K == 1:
        return np.zeros_like(state.m), np.ones(1)
    u = rng.random(state.m.size)
    m = _kernels.membership_sweep(
        np.ascontiguousarray(state.gamma, dtype=np.int8), state.m.astype(np.int64),
        np.log(state.B), np.log1p(-state.B), np.log(state.p), u,
    )
    counts = np.bincount(m, minlength=K)
    p = rng.dirichlet(1.0 + counts)
    return m, p


def block_counts(gamma: np.ndarray, m: np.ndarray, K: int):
    """Present/absent off-diagonal indicator counts for every ordered cluster pair."""
    d = gamma.shape[0]
    off = ~np.eye(d, dtype=bool)
    onehot = np.zeros((d, K))
    onehot[np.arange(d), m] = 1.0
    g = np.where(off, gamma, 0).astype(float)
    pairs = np.where(off, 1.0, 0.0)
    succ = onehot.T @ g @ onehot
    total = onehot.T @ pairs @ onehot
    return succ, total - succ


def _truncated_beta_from_zero(a, b, hi, u):
    # draw from Beta(a, b) restricted to (0, hi) by inverse CDF
    top = betainc(a, b, hi)
    out = betaincinv(a, b, u * top)
    out = np.where(top > 0, out, hi)
    return np.clip(out, np.nextafter(0.0, 1.0), np.nextafter(hi, 0.0))


def sample_block_probs(state: ModelState, rng: np.random.Generator) -> np.ndarray:
    """Truncated-Beta conditional draws of every block probability."""
    hp = state.hp
    K = state.K
    succ, fail = block_counts(state.gamma, state.m, K)
    u = rng.random((K, K))
    diag = np.eye(K, dtype=bool)
    B = np.empty((K, K))
    # within-cluster entries live on (l0, 1): sample 1 - B on (0, 1 - l0)
    B[diag] = 1.0 - _truncated_beta_from_zero(1.0 + fail[diag], 1.0 + succ[diag], 1.0 - hp.l0, u[diag])
    B[~diag] = _truncated_beta_from_zero(1.0 + succ[~diag], 1.0 + fail[~diag], hp.u0, u[~diag])
    B[diag] = np.clip(B[diag], np.nextafter(hp.l0, 1.0), np.nextafter(1.0, 0.0))
    return B


# --------------------------------------------------------------------------
# chain driver
# --------------------------------------------------------------------------

def init_state(y: np.ndarray, hp: Hyperparams, rng: np.random.Generator) -> ModelState:
    """Deterministic-given-rng starting point: no cross edges, labels from the prior."""
    d, L = y.shape
    K = hp.K
    p = np.full(K, 1.0 / K)
    m = rng.choice(K, size=d)
    B = np.full((K, K), 0.5 * hp.u0)
    B[np.diag_indices(K)] = 0.5 * (1.0 + hp.l0)
    gamma = np.eye(d, dtype=np.int8)
    A = np.zeros((d, d))
    return ModelState(
        x=np.array(y, dtype=float), gamma=gamma, A=A, c=np.ones(d), sigma_eps2=np.full(d, 0.5),
        m=m, B=B, p=p, hp=hp,
    )


def gibbs_sweep(state: ModelState, y: np.ndarray, rng: np.random.Generator, check: bool = False) -> ModelState:
    """One full sweep in the fixed update order. Modifies and returns ``state``."""
    state.x = ffbs_sample_states(state, y, rng)
    state.gamma = sample_gamma(state, state.x, rng)
    state.A, state.c, state.sigma_eps2 = sample_continuous_params(state, state.x, y, rng)
    state.m, state.p = sample_memberships(state, rng)
    state.B = sample_block_probs(state, rng)
    if check:
        state.check()
    return state


def run_gibbs(seg: Segment, hp: Hyperparams, check: bool = False) -> PosteriorSummary:
    """Run one chain on a standardized segment and average the retained indicators."""
    y = np.ascontiguousarray(seg.data, dtype=float)
    d, L = y.shape
    if d < 2 or L < 2:
        raise ValidationError(f"segment too small: {d} channels x {L} samples")
    mu = y.mean(axis=1)
    var = y.var(axis=1)
    if np.max(np.abs(mu)) > 1e-6 or np.max(np.abs(var - 1.0)) > 1e-6:
        raise ValidationError("segment must be standardized before inference")
    rng = segment_rng(hp.seed, seg.seizure_id, seg.start_offset_seconds)
    state = init_state(y, hp, rng)
    edge = np.zeros((d, d))
    co = np.zeros((d, d))
    for sweep in range(hp.n_iter):
        try:
            gibbs_sweep(state, y, rng, check=check)
        except NumericalError as exc:
            raise NumericalError(f"sweep {sweep}: {exc}") from exc
        if sweep >= hp.n_burnin:
            edge += state.gamma
            co += state.m[:, None] == state.m[None, :]
    S = hp.n_retained
    return PosteriorSummary(
        edge_prob=edge / S,
        cocluster_prob=co / S,
        n_retained=S,
        n_iter=hp.n_iter,
        seed=hp.seed,
        seizure_id=seg.seizure_id,
        start_offset_seconds=seg.start_offset_seconds,
    )


def save_summaries(path, summaries) -> None:
    """Write summaries as JSON keyed by (seizure_id, start_offset_seconds)."""
    items = sorted(summaries, key=lambda s: (s.seizure_id, s.start_offset_seconds))
    with open(path, "w") as fh:
        json.dump({"summaries": [s.to_dict() for s in items]}, fh)


def load_summaries(path) -> list[PosteriorSummary]:
    with open(path) as fh:
        obj = json.load(fh)
    return [PosteriorSummary.from_dict(s) for s in obj["summaries"]]
