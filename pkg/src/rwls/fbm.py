"""Fractional Brownian motion: covariances, synthesis and Hurst estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.linalg import cholesky

MAX_SYNTH_LEN = 8192


def sigma_h(H: float) -> float:
    """Variance of ``B_H[1]``: ``1 / (Gamma(2H+1) |sin(pi H)|)``."""
    _check_hurst(H)
    return 1.0 / (math.gamma(2.0 * H + 1.0) * abs(math.sin(math.pi * H)))


def _check_hurst(H: float) -> None:
    if not 0.0 < H < 1.0:
        raise ValueError(f"Hurst exponent must lie in (0, 1), got {H}")


@dataclass(frozen=True)
class FbmModel:
    """Second-order description of a discrete fBm path ``B_H[n]``.

    ``sigma2`` defaults to :func:`sigma_h` of ``H``.
    """

    H: float
    sigma2: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        _check_hurst(self.H)
        if self.sigma2 is None:
            object.__setattr__(self, "sigma2", sigma_h(self.H))
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    def with_sigma2(self, sigma2: float) -> "FbmModel":
        return FbmModel(self.H, sigma2)


def autocov(model: FbmModel, n1, n2):
    """Covariance ``E[B_H[n1] B_H[n2]]``; accepts scalars or arrays."""
    a = np.asarray(n1, dtype=float)
    b = np.asarray(n2, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("fBm indices must be non-negative")
    h2 = 2.0 * model.H
    # summing the two end terms first keeps the result exactly symmetric
    r = 0.5 * model.sigma2 * ((np.abs(a) ** h2 + np.abs(b) ** h2) - np.abs(a - b) ** h2)
    return float(r) if r.ndim == 0 else r


def increment_autocov(model: FbmModel, k):
    """Autocovariance of the increment process (fractional Gaussian noise) at lag ``k``."""
    k = np.abs(np.asarray(k, dtype=float))
    h2 = 2.0 * model.H
    r = 0.5 * model.sigma2 * (np.abs(k + 1) ** h2 - 2.0 * k**h2 + np.abs(k - 1) ** h2)
    return float(r) if r.ndim == 0 else r


def fbm_covariance(model: FbmModel, n: int) -> np.ndarray:
    idx = np.arange(n, dtype=float)
    return autocov(model, idx[:, None], idx[None, :])


@lru_cache(maxsize=16)
def _cholesky_factor(H: float, sigma2: float, n: int) -> np.ndarray:
    cov = fbm_covariance(FbmModel(H, sigma2), n)[1:, 1:]
    return cholesky(cov, lower=True)


def synth_fbm(model: FbmModel, n: int, seed: int) -> np.ndarray:
    """Exact Gaussian fBm path of length ``n`` (``out[0] == 0``) by Cholesky factorization."""
    if n < 2:
        raise ValueError("path length must be >= 2")
    if n > MAX_SYNTH_LEN:
        raise ValueError(f"path length {n} exceeds the Cholesky synthesis cap of {MAX_SYNTH_LEN}")
    L = _cholesky_factor(float(model.H), float(model.sigma2), int(n))
    z = np.random.default_rng(seed).standard_normal(n - 1)
    return np.concatenate([[0.0], L @ z])


# -- maximum likelihood ------------------------------------------------------

def _fgn_correlation(H: np.ndarray, n: int) -> np.ndarray:
    """Unit-variance fGn autocorrelations, shape ``(len(H), n)``."""
    k = np.arange(n, dtype=float)[None, :]
    h2 = 2.0 * np.asarray(H, dtype=float)[:, None]
    return 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k**h2 + np.abs(k - 1) ** h2)


def _durbin_levinson_numpy(gamma: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = np.ascontiguousarray(gamma.T)
    n, batch = g.shape
    phi = np.zeros((n, batch))
    v = g[0].copy()
    quad = y[0] ** 2 / v
    logdet = np.log(v)
    for k in range(1, n):
        kappa = (g[k] - np.einsum("jb,jb->b", phi[: k - 1], g[k - 1 : 0 : -1])) / v
        if k > 1:
            phi[: k - 1] = phi[: k - 1] - kappa * phi[k - 2 :: -1]
        phi[k - 1] = kappa
        v = v * (1.0 - kappa**2)
        err = y[k] - y[k - 1 :: -1] @ phi[:k]
        quad = quad + err**2 / v
        logdet = logdet + np.log(v)
    return quad, logdet


def _durbin_levinson_loops(gamma, y):
    batch, n = gamma.shape
    quad = np.empty(batch)
    logdet = np.empty(batch)
    phi = np.zeros(n)
    for b in range(batch):
        g = gamma[b]
        phi[:] = 0.0
        v = g[0]
        q = y[0] * y[0] / v
        ld = np.log(v)
        for k in range(1, n):
            num = g[k]
            for j in range(k - 1):
                num -= phi[j] * g[k - 1 - j]
            kap = num / v
            lo, hi = 0, k - 2
            while lo < hi:
                a, c = phi[lo], phi[hi]
                phi[lo] = a - kap * c
                phi[hi] = c - kap * a
                lo += 1
                hi -= 1
            if lo == hi:
                phi[lo] = phi[lo] * (1.0 - kap)
            phi[k - 1] = kap
            v *= 1.0 - kap * kap
            e = y[k]
            for j in range(k):
                e -= phi[j] * y[k - 1 - j]
            q += e * e / v
            ld += np.log(v)
        quad[b] = q
        logdet[b] = ld
    return quad, logdet


try:
    from numba import njit

    _durbin_levinson_jit = njit(cache=True)(_durbin_levinson_loops)
except ImportError:  # pragma: no cover
    _durbin_levinson_jit = None


def _durbin_levinson(gamma: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic form ``y' G^-1 y`` and ``log det G`` for a batch of Toeplitz covariances.

    ``gamma`` has shape ``(batch, n)``; each row is an autocovariance sequence.
    """
    gamma = np.ascontiguousarray(gamma, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if _durbin_levinson_jit is not None:
        return _durbin_levinson_jit(gamma, y)
    return _durbin_levinson_numpy(gamma, y)


def fgn_loglik(H, increments: np.ndarray) -> np.ndarray:
    """Gaussian log-likelihood of ``increments`` under fGn(H) with the scale profiled out."""
    y = np.asarray(increments, dtype=float)
    H = np.atleast_1d(np.asarray(H, dtype=float))
    n = y.size
    quad, logdet = _durbin_levinson(_fgn_correlation(H, n), y)
    return -0.5 * n * np.log(quad / n) - 0.5 * logdet - 0.5 * n * (1.0 + math.log(2 * math.pi))


def _golden_max(f, a: float, b: float, tol: float) -> float:
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _hurst_mle_increments(y: np.ndarray) -> tuple[float, float]:
    """Return ``(H, sigma2)`` for one block of increments."""
    rms = math.sqrt(float(np.mean(y**2)))
    if rms == 0.0 or not np.isfinite(rms):
        raise ValueError("zero-variance increments")
    yn = y / rms
    grid = np.round(np.arange(0.01, 0.99 + 1e-9, 0.01), 10)
    ll = fgn_loglik(grid, yn)
    i = int(np.argmax(ll))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    H = _golden_max(lambda h: float(fgn_loglik(h, yn)[0]), float(lo), float(hi), 1e-4)
    H = min(max(H, 0.01), 0.99)
    quad, _ = _durbin_levinson(_fgn_correlation(np.array([H]), yn.size), yn)
    # increments of B_H have variance sigma_H^2, so the profiled scale is sigma_H^2
    sigma2 = float(quad[0]) / yn.size * rms**2
    return H, sigma2


def estimate_hurst(
    x: Sequence[float] | Sequence[Sequence[float]],
    block: int = 2048,
    max_blocks: int | None = None,
) -> FbmModel:
    """Maximum likelihood Hurst exponent of an fBm-like signal.

    Parameters
    ----------
    x : sequence or list of sequences
        A single path, or several independent pieces (e.g. one vectorized
        image each).  Increments are never taken across piece boundaries.
    block : int
        Longest stretch of contiguous increments fed to one exact likelihood.
    max_blocks : int, optional
        Cap on the number of blocks; blocks are then taken evenly spaced.

    Returns
    -------
    FbmModel
        Mean of the per-block estimates of ``H`` and ``sigma2``.
    """
    pieces = _as_pieces(x)
    if sum(p.size for p in pieces) < 64:
        raise ValueError("need at least 64 samples to estimate the Hurst exponent")
    blocks = []
    for p in pieces:
        inc = np.diff(p)
        for start in range(0, inc.size, block):
            chunk = inc[start : start + block]
            if chunk.size >= 32:
                blocks.append(chunk)
    if not blocks:
        raise ValueError("no piece long enough to estimate the Hurst exponent")
    if max_blocks is not None and len(blocks) > max_blocks:
        pick = np.linspace(0, len(blocks) - 1, max_blocks).round().astype(int)
        blocks = [blocks[i] for i in pick]
    fits = [_hurst_mle_increments(b) for b in blocks]
    H = float(np.mean([f[0] for f in fits]))
    sigma2 = float(np.mean([f[1] for f in fits]))
    return FbmModel(H, sigma2)


def _as_pieces(x) -> list[np.ndarray]:
    if isinstance(x, np.ndarray) and x.ndim == 1:
        return [x.astype(float)]
    if isinstance(x, (list, tuple)) and x and np.ndim(x[0]) == 1:
        return [np.asarray(p, dtype=float).ravel() for p in x]
    return [np.asarray(x, dtype=float).ravel()]

