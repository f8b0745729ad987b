"""Gaussian-process surrogate and expected improvement for minimization."""

from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular
from scipy.spatial.distance import pdist
from scipy.stats import norm

NOISE = 1e-6
_VAR_TOL = 1e-10


def median_length_scale(Z, fallback=1.0):
    Z = np.atleast_2d(Z)
    if len(Z) < 2:
        return fallback
    d = pdist(Z)
    d = d[d > 0]
    return float(np.median(d)) if len(d) else fallback


class GaussianProcess:
    """Squared-exponential GP on standardized targets.

    ``noise`` is the observation-noise variance in the units of ``y``. If
    the kernel matrix is too ill-conditioned to factor, the noise is raised
    tenfold until it factors.
    """

    def __init__(self, Z, y, length_scale=None, noise=NOISE, fallback_length_scale=1.0):
        self.Z = np.atleast_2d(np.asarray(Z, dtype=float))
        y = np.asarray(y, dtype=float)
        self.y_mean = float(y.mean())
        sd = float(y.std())
        self.y_scale = sd if sd > 1e-12 else 1.0
        self.yn = (y - self.y_mean) / self.y_scale
        self.length_scale = length_scale or median_length_scale(self.Z, fallback_length_scale)
        K = self.kernel(self.Z, self.Z)
        nz = max(noise / self.y_scale ** 2, 1e-12)
        while True:
            try:
                self._chol = cho_factor(K + nz * np.eye(len(self.Z)), lower=True)
                break
            except LinAlgError:
                nz *= 10.0
        # standardized noise variance actually used
        self.noise = nz
        self._alpha = cho_solve(self._chol, self.yn)
        self._best = float(self.predict(self.Z)[0].min())

    def kernel(self, A, B):
        sq = (np.sum(A ** 2, 1)[:, None] + np.sum(B ** 2, 1)[None, :] - 2 * A @ B.T)
        return np.exp(-np.maximum(sq, 0.0) / (2 * self.length_scale ** 2))

    def _latent(self, Zs):
        Ks = self.kernel(np.atleast_2d(Zs), self.Z)
        mu = Ks @ self._alpha
        v = solve_triangular(self._chol[0], Ks.T, lower=True)
        var = np.maximum(1.0 - np.sum(v ** 2, 0), 0.0)
        return mu, var

    def predict(self, Zs):
        """Posterior mean and variance of the observed quantity."""
        mu, var = self._latent(Zs)
        return mu * self.y_scale + self.y_mean, var * self.y_scale ** 2

    @property
    def incumbent(self):
        """Lowest posterior mean over the observed points."""
        return self._best

    def expected_improvement(self, Zs):
        """EI below :attr:`incumbent`, using only variance above the noise floor.

        At an observed point the remaining variance is within the noise
        floor, so EI there reduces to max(incumbent - mean, 0).
        """
        mu, var = self._latent(Zs)
        mu = mu * self.y_scale + self.y_mean
        excess = np.maximum(var - self.noise - _VAR_TOL, 0.0)
        sigma = np.sqrt(excess) * self.y_scale
        gain = self._best - mu
        out = np.maximum(gain, 0.0)
        pos = sigma > 0
        z = gain[pos] / sigma[pos]
        out[pos] = gain[pos] * norm.cdf(z) + sigma[pos] * norm.pdf(z)
        return np.maximum(out, 0.0)
