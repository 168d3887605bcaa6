"""Plant definition and augmented filter-model construction.

The plant is the linear time-varying system

    x_{k+1} = A_k x_k + B_k u_k + E_k d_k + w_k,      w_k ~ N(0, Q_k)
    y_k     = H_k x_k + F_k f_k + v_k,                v_k ~ N(0, R_k)

with unknown disturbance d and unknown output fault f. Both unknown inputs
are modeled as random walks when augmented into a filter state. This module
builds the two augmented filter models (without and with the fault block) and
implements the rank tests that decide whether classical unknown-input
decoupling exists and whether the augmented filter converges.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from dmae.kalman import Partition


class ModelError(ValueError):
    """Raised for inconsistent model definitions."""


RANK_TOL_FACTOR = 1e-8  # singular values below 1e-8 * max(s_max, 1) count as zero


def matrix_rank(M: np.ndarray) -> int:
    """Numerical rank via singular-value thresholding.

    The threshold is scale-aware: ``RANK_TOL_FACTOR * max(largest singular
    value, 1)``, so all-zero and tiny matrices rank as 0 instead of picking up
    round-off noise.
    """
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    tol = RANK_TOL_FACTOR * max(float(s[0]) if s.size else 0.0, 1.0)
    return int(np.count_nonzero(s > tol))


class _TimeMatrix:
    """A matrix trajectory: either a constant or a tabulated [K, r, c] stack.

    Interpolation is deliberately unsupported; tabulated entries are looked up
    by integer step.
    """

    def __init__(self, value, name: str):
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim == 2:
            self.constant = np.ascontiguousarray(arr)
            self.table = None
        elif arr.ndim == 3:
            self.constant = None
            self.table = np.ascontiguousarray(arr)
        else:
            raise ModelError(f"matrix {name} must be 2-D (constant) or 3-D (tabulated), got ndim={arr.ndim}")
        self.name = name

    @property
    def shape(self):
        return self.constant.shape if self.table is None else self.table.shape[1:]

    @property
    def time_varying(self) -> bool:
        return self.table is not None

    def at(self, k: int) -> np.ndarray:
        if self.table is None:
            return self.constant
        if not 0 <= k < self.table.shape[0]:
            raise ModelError(f"matrix {self.name} tabulated for {self.table.shape[0]} steps, asked for k={k}")
        return self.table[k]

    def scaled(self, factor: float) -> "_TimeMatrix":
        src = self.constant if self.table is None else self.table
        return _TimeMatrix(src * factor, self.name)

    def raw(self):
        return self.constant if self.table is None else self.table


class LtvModel:
    """Time-indexed system matrices and noise covariances of the plant.

    Args:
        A: n x n transition matrix, constant or tabulated over steps.
        B: n x p known-input matrix.
        E: n x n_d disturbance input matrix.
        H: m x n output matrix.
        F: m x n_f fault input matrix.
        Q: n x n process-noise covariance (symmetric PSD).
        R: m x m measurement-noise covariance (symmetric PD).

    Dimensions are validated on construction; covariance definiteness and the
    square-regime rank expectations are surfaced by :meth:`validate` so that
    deliberately degenerate setups (a zero E or F channel) remain usable.
    """

    def __init__(self, A, B, E, H, F, Q, R):
        self._A = _TimeMatrix(A, "A")
        self._B = _TimeMatrix(B, "B")
        self._E = _TimeMatrix(E, "E")
        self._H = _TimeMatrix(H, "H")
        self._F = _TimeMatrix(F, "F")
        self._Q = _TimeMatrix(Q, "Q")
        self._R = _TimeMatrix(R, "R")

        n, n2 = self._A.shape
        if n != n2:
            raise ModelError(f"A must be square, got {self._A.shape}")
        self.n = n
        self.p = self._B.shape[1]
        self.n_d = self._E.shape[1]
        self.m = self._H.shape[0]
        self.n_f = self._F.shape[1]

        expect = {
            "B": (n, self.p),
            "E": (n, self.n_d),
            "H": (self.m, n),
            "F": (self.m, self.n_f),
            "Q": (n, n),
            "R": (self.m, self.m),
        }
        for name, shape in expect.items():
            got = getattr(self, f"_{name}").shape
            if got != shape:
                raise ModelError(f"matrix {name} has shape {got}, expected {shape}")

    def A(self, k: int) -> np.ndarray:
        return self._A.at(k)

    def B(self, k: int) -> np.ndarray:
        return self._B.at(k)

    def E(self, k: int) -> np.ndarray:
        return self._E.at(k)

    def H(self, k: int) -> np.ndarray:
        return self._H.at(k)

    def F(self, k: int) -> np.ndarray:
        return self._F.at(k)

    def Q(self, k: int) -> np.ndarray:
        return self._Q.at(k)

    def R(self, k: int) -> np.ndarray:
        return self._R.at(k)

    @property
    def time_varying(self) -> bool:
        return any(
            tm.time_varying for tm in (self._A, self._B, self._E, self._H, self._F, self._Q, self._R)
        )

    def tabulated_steps(self) -> int | None:
        lengths = [
            tm.table.shape[0]
            for tm in (self._A, self._B, self._E, self._H, self._F, self._Q, self._R)
            if tm.time_varying
        ]
        return min(lengths) if lengths else None

    def scaled(self, q_scale: float = 1.0, r_scale: float = 1.0) -> "LtvModel":
        """A copy with Q and R multiplied by the given factors.

        This is the filter-side mismatch knob used by sensitivity sweeps; the
        plant simulation has its own independent truth-noise coefficients.
        """
        if q_scale <= 0 or r_scale <= 0:
            raise ModelError("noise scale factors must be positive")
        return LtvModel(
            self._A.raw(),
            self._B.raw(),
            self._E.raw(),
            self._H.raw(),
            self._F.raw(),
            self._Q.scaled(q_scale).raw(),
            self._R.scaled(r_scale).raw(),
        )

    def validate(self) -> tuple[list[str], list[str]]:
        """Check covariance and rank invariants.

        Returns:
            (errors, warnings). Errors: Q not symmetric PSD or R not
            symmetric PD at some step. Warnings: in the square regime
            (n = m = n_d = n_f) a rank-deficient H, E or F, which is legal
            (it encodes an inactive channel) but worth surfacing.
        """
        errors: list[str] = []
        warnings: list[str] = []
        steps = [0]
        tab = self.tabulated_steps()
        if tab is not None:
            steps = list(range(tab))
        for k in steps:
            Qk, Rk = self.Q(k), self.R(k)
            if not np.allclose(Qk, Qk.T, atol=1e-10, rtol=0.0):
                errors.append(f"Q not symmetric at step {k}")
            elif np.linalg.eigvalsh(Qk).min() < -1e-10:
                errors.append(f"Q not positive semidefinite at step {k}")
            if not np.allclose(Rk, Rk.T, atol=1e-10, rtol=0.0):
                errors.append(f"R not symmetric at step {k}")
            elif np.linalg.eigvalsh(Rk).min() <= 0.0:
                errors.append(f"R not positive definite at step {k}")
        if self.n == self.m == self.n_d == self.n_f:
            for name in ("H", "E", "F"):
                r = matrix_rank(getattr(self, f"_{name}").at(0))
                if r < self.m:
                    warnings.append(
                        f"square regime with rank {name} = {r} < {self.m}; channel is inactive or degenerate"
                    )
        return errors, warnings


@dataclass
class AugmentedModel:
    """Augmented transition/output/noise matrices for one filter variant."""

    Abar: np.ndarray
    Hbar: np.ndarray
    Qbar: np.ndarray
    partition: Partition


def assemble_process_noise(Q, Qd, E) -> np.ndarray:
    """Process-noise covariance of the augmented (x, d) state.

    The augmented noise is w_bar = [w + E w_d; w_d], which absorbs the
    compensation of driving the state with the random-walk disturbance, so

        Qbar = [[Q + E Qd E^T, E Qd], [Qd E^T, Qd]].

    Args:
        Q: n x n process-noise covariance (symmetric PSD).
        Qd: n_d x n_d disturbance random-walk covariance (symmetric PSD).
        E: n x n_d disturbance input matrix.

    Returns:
        (n + n_d) x (n + n_d) symmetric PSD covariance.
    """
    Q = np.asarray(Q, dtype=np.float64)
    Qd = np.asarray(Qd, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    n = Q.shape[0]
    n_d = Qd.shape[0]
    if Q.shape != (n, n) or Qd.shape != (n_d, n_d) or E.shape != (n, n_d):
        raise ModelError(f"inconsistent shapes Q{Q.shape} Qd{Qd.shape} E{E.shape}")
    _require_psd(Q, "Q")
    _require_psd(Qd, "Qd")
    EQd = E @ Qd
    out = np.empty((n + n_d, n + n_d))
    out[:n, :n] = Q + EQd @ E.T
    out[:n, n:] = EQd
    out[n:, :n] = EQd.T
    out[n:, n:] = Qd
    return 0.5 * (out + out.T)


def _require_psd(M: np.ndarray, name: str) -> None:
    if not np.allclose(M, M.T, atol=1e-10, rtol=0.0):
        raise ModelError(f"{name} must be symmetric")
    # fast path for the diagonal matrices the filters use at every step
    if np.count_nonzero(M - np.diag(np.diag(M))) == 0:
        if M.size and np.min(np.diag(M)) < -1e-10:
            raise ModelError(f"{name} must be positive semidefinite")
        return
    if M.size and np.linalg.eigvalsh(M).min() < -1e-10:
        raise ModelError(f"{name} must be positive semidefinite")


def build_no_fault_model(model: LtvModel, Qd, k: int) -> AugmentedModel:
    """Augmented model over [x; d] with a random-walk disturbance.

    Abar = [[A, E], [0, I]], Hbar = [H, 0], Qbar from
    :func:`assemble_process_noise`. With n_d = 0 the augmentation degenerates
    to the plain plant model.
    """
    A, E, H, Q = model.A(k), model.E(k), model.H(k), model.Q(k)
    n, n_d, m = model.n, model.n_d, model.m
    Qd = np.asarray(Qd, dtype=np.float64)
    if Qd.shape != (n_d, n_d):
        raise ModelError(f"Qd has shape {Qd.shape}, expected ({n_d}, {n_d})")
    dim = n + n_d
    Abar = np.zeros((dim, dim))
    Abar[:n, :n] = A
    Abar[:n, n:] = E
    Abar[n:, n:] = np.eye(n_d)
    Hbar = np.zeros((m, dim))
    Hbar[:, :n] = H
    Qbar = assemble_process_noise(Q, Qd, E)
    return AugmentedModel(Abar, Hbar, Qbar, Partition(n, n_d, 0))


def build_fault_model(model: LtvModel, Qd, Qf, k: int) -> AugmentedModel:
    """Augmented model over [x; d; f] with random-walk disturbance and fault.

    The leading (x, d) blocks equal the no-fault model; the fault block is a
    random walk observed through F:

        Abar = blockdiag(Abar_nf, I), Hbar = [Hbar_nf, F],
        Qbar = blockdiag(Qbar_nf, Qf).

    With n_f = 0 this is element-wise identical to the no-fault model.
    """
    nf = build_no_fault_model(model, Qd, k)
    n, n_d, n_f, m = model.n, model.n_d, model.n_f, model.m
    Qf = np.asarray(Qf, dtype=np.float64)
    if Qf.shape != (n_f, n_f):
        raise ModelError(f"Qf has shape {Qf.shape}, expected ({n_f}, {n_f})")
    _require_psd(Qf, "Qf")
    base = n + n_d
    dim = base + n_f
    Abar = np.zeros((dim, dim))
    Abar[:base, :base] = nf.Abar
    Abar[base:, base:] = np.eye(n_f)
    Hbar = np.zeros((m, dim))
    Hbar[:, :base] = nf.Hbar
    Hbar[:, base:] = model.F(k)
    Qbar = np.zeros((dim, dim))
    Qbar[:base, :base] = nf.Qbar
    Qbar[base:, base:] = Qf
    return AugmentedModel(Abar, Hbar, Qbar, Partition(n, n_d, n_f))


@dataclass(frozen=True)
class ExistenceResult:
    satisfied: bool
    lhs_rank: int
    rhs_rank: int


def check_existence_condition(Eprime, Fprime, H) -> ExistenceResult:
    """Rank test for the existence of an unknown-input-decoupled filter.

    With combined unknown-input maps E' (into the dynamics) and F' (into the
    output), decoupling exists iff

        rank [[F', H E'], [0, F']] == rank F' + rank [E'; F'].

    Args:
        Eprime: n x q combined dynamics map.
        Fprime: m x q combined output map.
        H: m x n output matrix.

    Returns:
        ExistenceResult with the verdict and both ranks.
    """
    Eprime = np.atleast_2d(np.asarray(Eprime, dtype=np.float64))
    Fprime = np.atleast_2d(np.asarray(Fprime, dtype=np.float64))
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    n = Eprime.shape[0]
    m, q = Fprime.shape
    if Eprime.shape[1] != q or H.shape != (m, n):
        raise ModelError(
            f"inconsistent shapes E'{Eprime.shape} F'{Fprime.shape} H{H.shape}"
        )
    HE = H @ Eprime
    lhs = np.block([[Fprime, HE], [np.zeros((m, q)), Fprime]])
    lhs_rank = matrix_rank(lhs)
    rhs_rank = matrix_rank(Fprime) + matrix_rank(np.vstack([Eprime, Fprime]))
    return ExistenceResult(lhs_rank == rhs_rank, lhs_rank, rhs_rank)


def combined_unknown_input_maps(model: LtvModel, k: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """E' = [E, 0] and F' = [0, F] for the stacked unknown input [d; f]."""
    E, F = model.E(k), model.F(k)
    Eprime = np.hstack([E, np.zeros((model.n, model.n_f))])
    Fprime = np.hstack([np.zeros((model.m, model.n_d)), F])
    return Eprime, Fprime


@dataclass(frozen=True)
class ConvergenceResult:
    satisfied: bool
    violating_zeros: tuple
    degenerate: bool
    normal_rank: int
    frozen_time: bool = False

    def describe(self) -> str:
        if self.degenerate:
            return "degenerate pencil (normal rank below full for all z)"
        if self.satisfied:
            base = "satisfied (no invariant zeros on or outside the unit circle)"
        else:
            zeros = ", ".join(f"{z:.6g}" for z in self.violating_zeros)
            base = f"NOT satisfied (invariant zeros at {zeros})"
        if self.frozen_time:
            base += " [frozen-time check]"
        return base


# Finite generalized eigenvalues with |z| above this are treated as the
# numerical image of infinite eigenvalues of the singular pencil.
_FINITE_ZERO_CAP = 1e8


def check_convergence_condition(A, E, H, frozen_time: bool = False) -> ConvergenceResult:
    """Rank condition guaranteeing convergence of the augmented filter.

    The filter over [x; d] converges (time-invariant case) iff

        rank [[zI - A, -E], [H, 0]] == n + n_d   for all |z| >= 1.

    Implemented through the finite invariant zeros of the matrix pencil
    z [[I, 0], [0, 0]] + [[-A, -E], [H, 0]]: the condition holds iff the
    pencil has full normal rank and no finite zero with |z| >= 1.

    Args:
        A: n x n (time-invariant) transition matrix.
        E: n x n_d disturbance map.
        H: m x n output map; the pencil is square only when m == n_d.
        frozen_time: set by callers that froze a time-varying model at one
            step; carried into the verdict label.

    Returns:
        ConvergenceResult; ``degenerate`` is set when the pencil's normal
        rank is below n + n_d for every z.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    n = A.shape[0]
    n_d = E.shape[1]
    m = H.shape[0]
    if A.shape != (n, n) or E.shape[0] != n or H.shape[1] != n:
        raise ModelError(f"inconsistent shapes A{A.shape} E{E.shape} H{H.shape}")
    if m != n_d:
        raise ModelError(
            f"convergence pencil is square only for m == n_d, got m={m}, n_d={n_d}"
        )
    size = n + n_d
    Bmat = np.zeros((size, size))
    Bmat[:n, :n] = np.eye(n)
    C0 = np.zeros((size, size))
    C0[:n, :n] = -A
    C0[:n, n:] = -E
    C0[n:, :n] = H

    def pencil(z: complex) -> np.ndarray:
        return z * Bmat + C0

    # normal rank from a couple of deterministic off-spectrum sample points
    sample_points = [1.7183 + 0.31831j, -2.6180 + 1.1416j, 3.9102 - 0.5772j]
    normal_rank = max(matrix_rank_complex(pencil(z)) for z in sample_points)
    if normal_rank < size:
        return ConvergenceResult(False, (), True, normal_rank, frozen_time)

    with np.errstate(all="ignore"):
        alphabeta = scipy.linalg.eigvals(C0, -Bmat, homogeneous_eigvals=True)
    alpha, beta = np.asarray(alphabeta[0]), np.asarray(alphabeta[1])
    finite = np.abs(beta) > 0.0
    zeros = alpha[finite] / beta[finite]
    zeros = zeros[np.isfinite(zeros)]
    zeros = zeros[np.abs(zeros) < _FINITE_ZERO_CAP]
    violating = tuple(complex(z) for z in zeros if abs(z) >= 1.0 - 1e-9)
    return ConvergenceResult(len(violating) == 0, violating, False, normal_rank, frozen_time)


def matrix_rank_complex(M: np.ndarray) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    tol = RANK_TOL_FACTOR * max(float(s[0]) if s.size else 0.0, 1.0)
    return int(np.count_nonzero(s > tol))
