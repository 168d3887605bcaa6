"""Numerical kernels for the per-step filter loops.

Everything here is written in numba-compatible numpy and compiled (or not)
through :func:`dmae.accel.maybe_jit`. Inputs are contiguous float64 arrays;
callers in :mod:`dmae.kalman` take care of coercion and error translation.
"""

import numpy as np

from dmae.accel import maybe_jit

LOG_2PI = 1.8378770664093453


@maybe_jit
def kf_predict_kernel(mean, cov, Abar, Qbar, bu):
    mean1 = Abar @ mean + bu
    cov1 = Abar @ cov @ Abar.T + Qbar
    cov1 = 0.5 * (cov1 + cov1.T)
    return mean1, cov1


@maybe_jit
def gaussian_loglik_kernel(gamma, C):
    # log N(gamma; 0, C) via the Cholesky factor, no explicit inverse
    L = np.linalg.cholesky(C)
    m = gamma.shape[0]
    z = np.linalg.solve(L, gamma)
    sumlog = 0.0
    for i in range(m):
        sumlog += np.log(L[i, i])
    return -0.5 * m * LOG_2PI - sumlog - 0.5 * (z @ z)


@maybe_jit
def kf_update_kernel(mean, cov, y, Hbar, R):
    gamma = y - Hbar @ mean
    C = Hbar @ cov @ Hbar.T + R
    C = 0.5 * (C + C.T)
    L = np.linalg.cholesky(C)
    # K = cov Hbar^T C^-1 through two triangular-factor solves
    tmp = np.linalg.solve(L, Hbar @ cov)
    K = np.linalg.solve(L.T, tmp).T
    mean1 = mean + K @ gamma
    dim = mean.shape[0]
    IKH = np.eye(dim) - K @ Hbar
    cov1 = IKH @ cov @ IKH.T + K @ R @ K.T
    cov1 = 0.5 * (cov1 + cov1.T)
    m = y.shape[0]
    z = np.linalg.solve(L, gamma)
    sumlog = 0.0
    for i in range(m):
        sumlog += np.log(L[i, i])
    ll = -0.5 * m * LOG_2PI - sumlog - 0.5 * (z @ z)
    return mean1, cov1, gamma, C, K, ll


@maybe_jit
def kf_run_kernel(mean0, cov0, Abar, Qbar, Hbar, R, Bu, Y):
    """Fused predict/update loop for a time-invariant filter over a whole run."""
    n_steps = Y.shape[0]
    dim = mean0.shape[0]
    m = Y.shape[1]
    means = np.empty((n_steps, dim))
    covs = np.empty((n_steps, dim, dim))
    gammas = np.empty((n_steps, m))
    logliks = np.empty(n_steps)
    mean = mean0.copy()
    cov = cov0.copy()
    for k in range(n_steps):
        mean, cov = kf_predict_kernel(mean, cov, Abar, Qbar, Bu[k])
        mean, cov, gamma, C, K, ll = kf_update_kernel(mean, cov, Y[k], Hbar, R)
        means[k] = mean
        covs[k] = cov
        gammas[k] = gamma
        logliks[k] = ll
    return means, covs, gammas, logliks


@maybe_jit
def dryden_channel_kernel(V, Lg, sigma, W):
    """One gust channel: second-order colored-noise recursion driven by W.

    The continuous-time gust filter with rate matrix [[0, 1], [-a^2, -2a]],
    a = V/Lg, is stepped forward-Euler at unit step, which keeps the
    stationary output deviation at ~sigma and the lag-1 autocorrelation
    near 1 - a.
    """
    n_steps = W.shape[0]
    out = np.empty(n_steps)
    a10 = -(V / Lg) ** 2
    a11 = -2.0 * V / Lg
    g0 = sigma * np.sqrt(3.0 * V / Lg)
    g1 = (1.0 - 2.0 * np.sqrt(3.0)) * sigma * np.sqrt((V / Lg) ** 3)
    d0 = 0.0
    d1 = 0.0
    for k in range(n_steps):
        nd0 = d0 + d1 + g0 * W[k]
        nd1 = a10 * d0 + (1.0 + a11) * d1 + g1 * W[k]
        d0 = nd0
        d1 = nd1
        out[k] = d0
    return out
