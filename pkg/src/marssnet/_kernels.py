"""Compiled inner loops for the Gibbs sampler.

All randomness is drawn by the caller and passed in, so results depend only on
the numpy Generator stream and are reproducible bit for bit.
"""

import math

import numpy as np
from numba import njit

# pivots below this fraction of the largest diagonal entry are treated as zero
PIVOT_FLOOR = 1e-12
# relative change in the filtered covariance below which the Riccati recursion
# is considered converged
STEADY_TOL = 1e-13


@njit(cache=True)
def chol_floor(A):
    """Lower Cholesky factor of a symmetric PSD matrix, zeroing degenerate pivots."""
    n = A.shape[0]
    L = np.zeros((n, n))
    scale = 0.0
    for i in range(n):
        if A[i, i] > scale:
            scale = A[i, i]
    floor = PIVOT_FLOOR * scale
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= floor:
            continue
        piv = math.sqrt(s)
        L[j, j] = piv
        for i in range(j + 1, n):
            t = A[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / piv
    return L


@njit(cache=True)
def _chol_pd(A, L):
    # strict Cholesky into L; returns False if A is not numerically PD
    n = A.shape[0]
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return False
        piv = math.sqrt(s)
        L[j, j] = piv
        for i in range(j + 1, n):
            t = A[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / piv
    return True


@njit(cache=True)
def _chol_solve(L, B):
    # solve (L L^T) X = B for X, B is (n, m)
    n, m = B.shape
    X = B.copy()
    for c in range(m):
        for i in range(n):
            s = X[i, c]
            for k in range(i):
                s -= L[i, k] * X[k, c]
            X[i, c] = s / L[i, i]
        for i in range(n - 1, -1, -1):
            s = X[i, c]
            for k in range(i + 1, n):
                s -= L[k, i] * X[k, c]
            X[i, c] = s / L[i, i]
    return X


@njit(cache=True)
def _matvec(M, v, out, beta):
    # out = beta * out + M @ v
    n, k = M.shape
    for r in range(n):
        acc = 0.0
        for q in range(k):
            acc += M[r, q] * v[q]
        out[r] = beta * out[r] + acc


@njit(cache=True)
def _lower_matvec(Lc, v, out):
    # out += Lc @ v for lower-triangular Lc
    n = Lc.shape[0]
    for r in range(n):
        acc = 0.0
        for q in range(r + 1):
            acc += Lc[r, q] * v[q]
        out[r] += acc


@njit(cache=True)
def ffbs(y, F, c, s2, noise):
    """Forward filter, backward sample for the diagonal-observation model.

    Parameters
    ----------
    y : (d, L) observations
    F : (d, d) transition matrix (gamma * A)
    c, s2 : (d,) observation scales and noise variances
    noise : (L, d) standard normal draws

    Returns
    -------
    x : (d, L) state draw
    bad_t : time index of a non-positive innovation variance, or -1
    """
    d, L = y.shape
    m_filt = np.empty((L, d))
    P_filt = np.empty((L, d, d))
    P_pred = np.empty((L, d, d))
    gains = np.empty((d, d))
    x = np.empty((d, L))
    steady_from = L
    eye = np.eye(d)

    m = np.zeros(d)
    for t in range(L):
        if t > steady_from:
            # covariance and gains are frozen; only the mean moves
            _matvec(F, m_filt[t - 1], m, 0.0)
            for i in range(d):
                innov = y[i, t] - c[i] * m[i]
                for r in range(d):
                    m[r] += gains[i, r] * innov
            m_filt[t] = m
            continue
        if t == 0:
            m[:] = 0.0
            Pp = eye.copy()
        else:
            _matvec(F, m_filt[t - 1], m, 0.0)
            Pp = F @ P_filt[t - 1] @ F.T + eye
        P_pred[t] = Pp
        P = Pp.copy()
        for i in range(d):
            S = c[i] * c[i] * P[i, i] + s2[i]
            if not (S > 0.0 and np.isfinite(S)):
                return x, t
            col = P[:, i].copy()
            innov = y[i, t] - c[i] * m[i]
            for r in range(d):
                g = col[r] * c[i] / S
                gains[i, r] = g
                m[r] += g * innov
            for r in range(d):
                for q in range(d):
                    P[r, q] -= gains[i, r] * col[q] * c[i]
        P = 0.5 * (P + P.T)
        m_filt[t] = m
        P_filt[t] = P
        if t >= 1:
            diff = 0.0
            big = 1.0
            for r in range(d):
                for q in range(d):
                    dv = abs(P[r, q] - P_filt[t - 1, r, q])
                    if dv > diff:
                        diff = dv
                    if abs(P[r, q]) > big:
                        big = abs(P[r, q])
            if diff <= STEADY_TOL * big:
                steady_from = t

    # entries past steady_from are never written; they equal the steady_from ones
    last = min(L - 1, steady_from)
    Lc = chol_floor(P_filt[last])
    xt = m_filt[L - 1].copy()
    _lower_matvec(Lc, noise[L - 1], xt)
    x[:, L - 1] = xt
    resid = np.empty(d)

    J = np.empty((d, d))
    have_cache = False
    Lpp = np.zeros((d, d))
    for t in range(L - 2, -1, -1):
        if not (have_cache and t >= steady_from):
            Pf = P_filt[min(t, steady_from)]
            FP = F @ Pf
            Lpp[:, :] = 0.0
            if not _chol_pd(P_pred[min(t + 1, steady_from)], Lpp):
                return x, t + 1
            J = _chol_solve(Lpp, FP).T
            cov = Pf - J @ FP
            cov = 0.5 * (cov + cov.T)
            Lc = chol_floor(cov)
            have_cache = t >= steady_from
        for r in range(d):
            acc = x[r, t + 1]
            for q in range(d):
                acc -= F[r, q] * m_filt[t, q]
            resid[r] = acc
        xt = m_filt[t].copy()
        _matvec(J, resid, xt, 1.0)
        _lower_matvec(Lc, noise[t], xt)
        for r in range(d):
            x[r, t] = xt[r]
    return x, -1


@njit(cache=True)
def _row_log_marginal(G, b, zz, idx, k, v):
    # log N(z; 0, I + v X_S X_S^T) up to the -n/2 log(2 pi) constant,
    # written in terms of G = X^T X and b = X^T z restricted to S
    if k == 0:
        return -0.5 * zz
    M = np.empty((k, k))
    for a in range(k):
        for c in range(k):
            M[a, c] = G[idx[a], idx[c]]
        M[a, a] += 1.0 / v
    R = np.zeros((k, k))
    if not _chol_pd(M, R):
        return -np.inf
    logdet = 0.0
    quad = 0.0
    w = np.empty(k)
    for a in range(k):
        logdet += 2.0 * math.log(R[a, a])
        s = b[idx[a]]
        for c in range(a):
            s -= R[a, c] * w[c]
        w[a] = s / R[a, a]
        quad += w[a] * w[a]
    return -0.5 * (k * math.log(v) + logdet + zz - quad)


@njit(cache=True)
def _active(row, j_toggle, idx):
    k = 0
    for j in range(row.shape[0]):
        on = row[j] == 1
        if j == j_toggle:
            on = not on
        if on:
            idx[k] = j
            k += 1
    return k


@njit(cache=True)
def gamma_sweep(G, bmat, zz, gamma, prior_prob, u, v):
    """Redraw every off-diagonal indicator with its row's coefficients integrated out.

    ``gamma`` is updated in place. ``bmat[i]`` holds ``X^T z_i`` for row i.
    """
    d = gamma.shape[0]
    idx = np.empty(d, dtype=np.int64)
    for i in range(d):
        row = gamma[i]
        b = bmat[i]
        k = _active(row, -1, idx)
        cur = _row_log_marginal(G, b, zz[i], idx, k, v)
        for j in range(d):
            if j == i:
                continue
            pr = prior_prob[i, j]
            on = row[j] == 1
            if pr <= 0.0 or pr >= 1.0:
                want = 1 if pr >= 1.0 else 0
                if want != row[j]:
                    k = _active(row, j, idx)
                    cur = _row_log_marginal(G, b, zz[i], idx, k, v)
                    row[j] = want
                continue
            k = _active(row, j, idx)
            alt = _row_log_marginal(G, b, zz[i], idx, k, v)
            if on:
                lo = math.log(pr) - math.log1p(-pr) + cur - alt
            else:
                lo = math.log(pr) - math.log1p(-pr) + alt - cur
            if lo >= 0:
                p1 = 1.0 / (1.0 + math.exp(-lo))
            else:
                e = math.exp(lo)
                p1 = e / (1.0 + e)
            new_on = u[i, j] < p1
            if new_on != on:
                row[j] = 1 if new_on else 0
                cur = alt
    return gamma


@njit(cache=True)
def coef_rows(gamma, G, bmat, v, z_prior, z_post, jitter):
    """Coefficient draws given indicators: conjugate Gaussian rows, prior for absent edges.

    Returns ``(A, n_jittered)``; rows whose Gram block is numerically singular
    get ``jitter`` added to the diagonal and are counted.
    """
    d = gamma.shape[0]
    A = np.empty((d, d))
    sd = math.sqrt(v)
    idx = np.empty(d, dtype=np.int64)
    n_jit = 0
    for i in range(d):
        k = 0
        for j in range(d):
            if gamma[i, j] == 1:
                idx[k] = j
                k += 1
            else:
                A[i, j] = sd * z_prior[i, j]
        if k == 0:
            continue
        M = np.empty((k, k))
        for a in range(k):
            for c in range(k):
                M[a, c] = G[idx[a], idx[c]]
            M[a, a] += 1.0 / v
        R = np.zeros((k, k))
        if not _chol_pd(M, R):
            n_jit += 1
            for a in range(k):
                M[a, a] += jitter
            R[:, :] = 0.0
            _chol_pd(M, R)
        rhs = np.empty((k, 1))
        for a in range(k):
            rhs[a, 0] = bmat[i, idx[a]]
        mean = _chol_solve(R, rhs)
        # R^{-T} z has covariance M^{-1}
        w = np.empty(k)
        for a in range(k - 1, -1, -1):
            s = z_post[i, a]
            for c in range(a + 1, k):
                s -= R[c, a] * w[c]
            w[a] = s / R[a, a]
        for a in range(k):
            A[i, idx[a]] = mean[a, 0] + w[a]
    return A, n_jit


@njit(cache=True)
def membership_sweep(gamma, m, logB, log1mB, logp, u):
    """Sequentially redraw each cluster label from its categorical conditional."""
    d = gamma.shape[0]
    K = logp.shape[0]
    lw = np.empty(K)
    for i in range(d):
        for k in range(K):
            acc = logp[k]
            for j in range(d):
                if j == i:
                    continue
                mj = m[j]
                if gamma[i, j] == 1:
                    acc += logB[k, mj]
                else:
                    acc += log1mB[k, mj]
                if gamma[j, i] == 1:
                    acc += logB[mj, k]
                else:
                    acc += log1mB[mj, k]
            lw[k] = acc
        top = lw.max()
        total = 0.0
        for k in range(K):
            lw[k] = math.exp(lw[k] - top)
            total += lw[k]
        target = u[i] * total
        run = 0.0
        pick = K - 1
        for k in range(K):
            run += lw[k]
            if target < run:
                pick = k
                break
        m[i] = pick
    return m
