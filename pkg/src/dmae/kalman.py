"""One-step Kalman machinery shared by both parallel filters and the baselines.

Beliefs are value objects carrying a partition map so callers can address the
state, disturbance and fault blocks by name instead of by index arithmetic.
Covariance updates use the Joseph form and all solves go through a triangular
factorization of the innovation covariance; no explicit matrix inverses.
"""

from dataclasses import dataclass, field

import numpy as np

from dmae.kernels import gaussian_loglik_kernel, kf_predict_kernel, kf_update_kernel


class NumericalError(RuntimeError):
    """Raised when a filter step is numerically unrecoverable."""


def _as_matrix(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class Partition:
    """Labeled index ranges for the (x, d, f) blocks of an augmented state."""

    n: int
    n_d: int
    n_f: int = 0

    @property
    def x(self) -> slice:
        return slice(0, self.n)

    @property
    def d(self) -> slice:
        return slice(self.n, self.n + self.n_d)

    @property
    def f(self) -> slice:
        return slice(self.n + self.n_d, self.n + self.n_d + self.n_f)

    @property
    def xd(self) -> slice:
        """The leading (x, d) block, shared between both filter variants."""
        return slice(0, self.n + self.n_d)

    @property
    def dim(self) -> int:
        return self.n + self.n_d + self.n_f

    def without_fault(self) -> "Partition":
        return Partition(self.n, self.n_d, 0)


@dataclass
class GaussianBelief:
    """Mean and covariance of a filter estimate, with block partition.

    Invariants: mean length equals covariance dimension equals the partition
    total; covariance symmetric with minimum eigenvalue >= -1e-10 (checked by
    :meth:`min_eig` where runs record hygiene, not on every construction).
    """

    mean: np.ndarray
    cov: np.ndarray
    partition: Partition

    def __post_init__(self):
        self.mean = np.ascontiguousarray(np.asarray(self.mean, dtype=np.float64)).reshape(-1)
        self.cov = _as_matrix(self.cov)
        dim = self.partition.dim
        if self.mean.shape != (dim,) or self.cov.shape != (dim, dim):
            raise ValueError(
                f"belief dimensions {self.mean.shape}/{self.cov.shape} do not match "
                f"partition total {dim}"
            )
        if not np.allclose(self.cov, self.cov.T, atol=1e-9, rtol=0.0):
            raise ValueError("belief covariance is not symmetric")

    def copy(self) -> "GaussianBelief":
        return GaussianBelief(self.mean.copy(), self.cov.copy(), self.partition)

    def block_mean(self, sl: slice) -> np.ndarray:
        return self.mean[sl]

    def block_cov(self, rows: slice, cols: slice) -> np.ndarray:
        return self.cov[rows, cols]

    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.cov).min()) if self.cov.size else 0.0


@dataclass
class KalmanStepOutput:
    """Posterior plus the innovation quantities of one measurement update.

    ``gain`` rows follow the posterior's partition, so ``gain[partition.f]``
    is the fault-block gain. ``loglik`` is the Gaussian innovation
    log-likelihood evaluated from the same factorization as the update.
    """

    posterior: GaussianBelief
    innovation: np.ndarray
    innovation_cov: np.ndarray
    gain: np.ndarray
    loglik: float = field(default=0.0)


def predict(belief: GaussianBelief, Abar, Qbar, bu=None) -> GaussianBelief:
    """Time update: mean' = Abar mean (+ bu), cov' = Abar cov Abar^T + Qbar.

    ``bu`` is an optional known-input increment already mapped into the
    augmented space (zero outside the x partition). The result covariance is
    re-symmetrized.
    """
    Abar = _as_matrix(Abar)
    Qbar = _as_matrix(Qbar)
    dim = belief.partition.dim
    if bu is None:
        bu = np.zeros(dim)
    bu = np.ascontiguousarray(np.asarray(bu, dtype=np.float64)).reshape(dim)
    if Abar.shape != (dim, dim) or Qbar.shape != (dim, dim):
        raise ValueError(f"transition/noise shapes {Abar.shape}/{Qbar.shape} do not match dim {dim}")
    mean1, cov1 = kf_predict_kernel(belief.mean, belief.cov, Abar, Qbar, bu)
    return GaussianBelief(mean1, cov1, belief.partition)


def update(belief: GaussianBelief, y, Hbar, R, step=None) -> KalmanStepOutput:
    """Measurement update with Joseph-form covariance.

    R must be symmetric positive semidefinite; the hard requirement is that
    the innovation covariance C = Hbar cov Hbar^T + R is positive definite,
    and a failed factorization raises :class:`NumericalError` naming the step.
    """
    y = np.ascontiguousarray(np.asarray(y, dtype=np.float64)).reshape(-1)
    Hbar = _as_matrix(Hbar)
    R = _as_matrix(R)
    dim = belief.partition.dim
    m = y.shape[0]
    if Hbar.shape != (m, dim) or R.shape != (m, m):
        raise ValueError(f"output map/noise shapes {Hbar.shape}/{R.shape} do not match ({m}, {dim})")
    try:
        mean1, cov1, gamma, C, K, ll = kf_update_kernel(belief.mean, belief.cov, y, Hbar, R)
    except np.linalg.LinAlgError as exc:
        where = "unknown step" if step is None else f"step {step}"
        raise NumericalError(f"innovation covariance not positive definite at {where}") from exc
    posterior = GaussianBelief(mean1, cov1, belief.partition)
    return KalmanStepOutput(posterior, gamma, C, K, float(ll))


def log_likelihood(gamma, C) -> float:
    """Gaussian innovation log-likelihood ln N(gamma; 0, C), computed in the
    log domain through a triangular factorization of C."""
    gamma = np.ascontiguousarray(np.asarray(gamma, dtype=np.float64)).reshape(-1)
    C = _as_matrix(C)
    try:
        return float(gaussian_loglik_kernel(gamma, C))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("innovation covariance not positive definite") from exc
