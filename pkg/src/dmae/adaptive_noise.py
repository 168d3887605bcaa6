"""Adaptive disturbance-noise estimation from filter innovations.

The disturbance random walk needs a covariance Qd that nobody knows a
priori. It is estimated online from the innovation sequence of the fault
filter: the sample innovation covariance over a sliding window is matched
against its model-predicted composition, and the surplus is mapped back
through H and E onto the disturbance block. Only the diagonal is kept and
negative entries are clamped to zero, so the estimate is always a valid
random-walk covariance.
"""

import numpy as np

from dmae.kalman import NumericalError


class InnovationWindow:
    """Fixed-capacity ring buffer of innovation vectors.

    Args:
        size: window length (number of most recent innovations kept).
        m: innovation dimension.
    """

    def __init__(self, size: int, m: int):
        if size < 1:
            raise ValueError(f"window size must be >= 1, got {size}")
        self.size = int(size)
        self.m = int(m)
        self._buf = np.zeros((self.size, self.m))
        self._count = 0
        self._head = 0

    def push(self, gamma: np.ndarray) -> None:
        gamma = np.asarray(gamma, dtype=np.float64).reshape(-1)
        if gamma.shape[0] != self.m:
            raise ValueError(f"innovation has dim {gamma.shape[0]}, expected {self.m}")
        self._buf[self._head] = gamma
        self._head = (self._head + 1) % self.size
        if self._count < self.size:
            self._count += 1

    @property
    def count(self) -> int:
        return self._count

    def values(self) -> np.ndarray:
        """The stored innovations, newest-last order not guaranteed."""
        return self._buf[: self._count].copy() if self._count < self.size else self._buf.copy()

    def clear(self) -> None:
        self._count = 0
        self._head = 0


def innovation_cov_estimate(window: InnovationWindow) -> np.ndarray:
    """Sample second moment (1/count) * sum gamma gamma^T over the window.

    During warm-up the divisor is the number of innovations actually stored,
    not the window capacity.
    """
    if window.count == 0:
        raise NumericalError("innovation window is empty")
    vals = window.values()
    C = vals.T @ vals / window.count
    return 0.5 * (C + C.T)


def qd_update(C_hat, H, E, Q, F, Qf, R, k=None) -> np.ndarray:
    """One adaptive update of the disturbance random-walk covariance.

    The windowed innovation covariance C_hat is decomposed as

        Qhat = C_hat - H Q H^T - F Qf F^T - R,

    clamped to a nonnegative diagonal Qtilde, and mapped onto the disturbance
    block by inverting the output and disturbance channels:

        Qd = diag( E^{-1} H^{-1} Qtilde H^{-T} E^{-T} ),

    clamped nonnegative again (the congruence of a diagonal keeps only the
    main diagonal, which can dip negative). Requires square invertible H
    and E.

    Args:
        C_hat: m x m windowed innovation covariance (symmetric).
        H: m x n output matrix.
        E: n x n_d disturbance map (square regime: n_d == n == m).
        Q: process-noise covariance used at the previous step.
        F: m x n_f fault map.
        Qf: fault random-walk covariance.
        R: measurement-noise covariance.
        k: current step, used only in error messages.

    Returns:
        n_d x n_d diagonal PSD covariance.

    Raises:
        NumericalError: non-square or singular H or E.
    """
    C_hat = np.asarray(C_hat, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    F = np.asarray(F, dtype=np.float64)
    at = "" if k is None else f" at step {k}"
    Qhat = C_hat - H @ np.asarray(Q, dtype=np.float64) @ H.T
    if F.size:
        Qhat = Qhat - F @ np.asarray(Qf, dtype=np.float64) @ F.T
    Qhat = Qhat - np.asarray(R, dtype=np.float64)
    Qtilde = np.diag(np.maximum(np.diag(Qhat), 0.0))

    if H.shape[0] != H.shape[1]:
        raise NumericalError(f"adaptive update needs square H, got {H.shape}{at}")
    if E.shape[0] != E.shape[1]:
        raise NumericalError(f"adaptive update needs square E, got {E.shape}{at}")
    try:
        Hin = np.linalg.solve(H, Qtilde)          # H^{-1} Qtilde
        Hboth = np.linalg.solve(H, Hin.T).T       # H^{-1} Qtilde H^{-T}
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"adaptive update failed{at}: H is singular") from exc
    try:
        Ein = np.linalg.solve(E, Hboth)
        Eboth = np.linalg.solve(E, Ein.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"adaptive update failed{at}: E is singular") from exc
    return np.diag(np.maximum(np.diag(Eboth), 0.0))
