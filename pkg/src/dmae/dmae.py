"""Two parallel augmented filters fused by Bayesian model probabilities.

One filter assumes no output fault (state [x; d]), the other carries an
additional random-walk fault block (state [x; d; f]). Each step both filters
process the same measurement, their innovation likelihoods drive a Bayes
probability recursion, and a selective reinitialization pass copies the
dominant filter's shared blocks into the other one. Outputs are
probability-weighted combinations, so the fused estimate degrades gracefully
while the fault hypothesis is uncertain.
"""

import copy
from dataclasses import dataclass, field

import numpy as np

from dmae.adaptive_noise import InnovationWindow, innovation_cov_estimate, qd_update
from dmae.kalman import GaussianBelief, NumericalError, Partition, predict, update
from dmae.model import LtvModel, build_fault_model, build_no_fault_model


@dataclass
class DmaeParams:
    """Tuning parameters of the two-filter estimator.

    Args:
        x0_f: fault mean installed into the fault filter on reinitialization.
        P0_f: fault covariance installed on reinitialization (symmetric PD).
        Qf: fault random-walk covariance (symmetric PSD).
        prob_floor: lower clamp for model probabilities, in [0, 0.5). The
            Bayes recursion has absorbing states at 0 and 1; the floor keeps
            both hypotheses alive.
        window_N: innovation window length for the adaptive update.
        freeze_fault_when_dominant: optional literal mode that zeroes the
            fault rows of the fault filter's gain while that filter dominates,
            by restoring the pre-update fault mean/cov.
        initial_probs: starting (p_nf, p_af).
        adapt_qd: run the adaptive disturbance-covariance update each step.
            Requires square invertible H and E; disable for plants without a
            disturbance channel.
        qd_init: initial disturbance random-walk covariance; scalar means
            that value times the identity.
    """

    x0_f: np.ndarray
    P0_f: np.ndarray
    Qf: np.ndarray
    prob_floor: float = 1e-3
    window_N: int = 10
    freeze_fault_when_dominant: bool = False
    initial_probs: tuple = (0.95, 0.05)
    adapt_qd: bool = True
    qd_init: float | np.ndarray = 0.0

    def __post_init__(self):
        self.x0_f = np.asarray(self.x0_f, dtype=np.float64).reshape(-1)
        n_f = self.x0_f.shape[0]
        self.P0_f = np.atleast_2d(np.asarray(self.P0_f, dtype=np.float64))
        self.Qf = np.atleast_2d(np.asarray(self.Qf, dtype=np.float64))
        if n_f == 0:
            self.P0_f = self.P0_f.reshape(0, 0)
            self.Qf = self.Qf.reshape(0, 0)
        if self.P0_f.shape != (n_f, n_f) or self.Qf.shape != (n_f, n_f):
            raise ValueError(
                f"P0_f {self.P0_f.shape} / Qf {self.Qf.shape} do not match fault dim {n_f}"
            )
        if n_f:
            if not np.allclose(self.P0_f, self.P0_f.T, atol=1e-10, rtol=0.0):
                raise ValueError("P0_f must be symmetric")
            if np.linalg.eigvalsh(self.P0_f).min() <= 0.0:
                raise ValueError("P0_f must be positive definite")
            if not np.allclose(self.Qf, self.Qf.T, atol=1e-10, rtol=0.0):
                raise ValueError("Qf must be symmetric")
            if np.linalg.eigvalsh(self.Qf).min() < -1e-12:
                raise ValueError("Qf must be positive semidefinite")
        if not 0.0 <= self.prob_floor < 0.5:
            raise ValueError(f"prob_floor must be in [0, 0.5), got {self.prob_floor}")
        if int(self.window_N) < 1:
            raise ValueError(f"window_N must be >= 1, got {self.window_N}")
        self.window_N = int(self.window_N)
        probs = np.asarray(self.initial_probs, dtype=np.float64)
        if probs.shape != (2,) or probs.min() < 0.0 or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"initial_probs must be two nonnegative values summing to 1, got {self.initial_probs}")
        self.initial_probs = (float(probs[0]), float(probs[1]))

    @property
    def n_f(self) -> int:
        return self.x0_f.shape[0]


@dataclass
class DmaeState:
    """Mutable per-run state: both beliefs, probabilities, window, current Qd."""

    nf: GaussianBelief
    af: GaussianBelief
    probs: np.ndarray
    window: InnovationWindow
    Qd_current: np.ndarray
    i_max: int = 1

    def copy(self) -> "DmaeState":
        return copy.deepcopy(self)


@dataclass
class StepRecord:
    """Everything one step emits: fused estimates plus filter internals."""

    k: int
    x_hat: np.ndarray
    d_hat: np.ndarray
    f_bar: np.ndarray
    p_nf: float
    p_af: float
    i_max: int
    qd_diag: np.ndarray
    innovation_nf: np.ndarray
    innovation_af: np.ndarray
    loglik_nf: float
    loglik_af: float
    fault_gain: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    min_eig_nf: float = 0.0
    min_eig_af: float = 0.0


def update_probabilities(p_prev, loglik_nf: float, loglik_af: float, floor: float) -> np.ndarray:
    """Bayes recursion over the two model probabilities, in the log domain.

    p_i' is proportional to p_i * exp(loglik_i); the max log term is
    subtracted before exponentiation. If the raw result puts either model
    below ``floor``, the pair is projected to (floor, 1 - floor), which keeps
    the clamped entry at exactly the floor after renormalization.

    Raises:
        NumericalError: both weighted likelihoods vanished (or are NaN).
    """
    p_prev = np.asarray(p_prev, dtype=np.float64).reshape(2)
    with np.errstate(divide="ignore"):
        lp = np.log(p_prev) + np.array([loglik_nf, loglik_af], dtype=np.float64)
    top = np.max(lp)
    if not np.isfinite(top):
        raise NumericalError("model probability update degenerate: both weighted likelihoods vanished")
    w = np.exp(lp - top)
    p = w / w.sum()
    if floor > 0.0 and p.min() < floor:
        p = np.where(p < floor, floor, 1.0 - floor)
    return p


def selective_reinit(state: DmaeState, params: DmaeParams) -> DmaeState:
    """Copy the dominant filter's shared blocks into the other filter.

    Sets ``state.i_max`` to the most probable model (1 no-fault, 2 fault;
    ties pick no-fault). When the no-fault model dominates, the fault
    filter's (x, d) blocks are overwritten by the no-fault posterior and its
    fault block is reset to (x0_f, P0_f) with exactly zero cross-covariance.
    When the fault model dominates, the no-fault filter is overwritten by the
    fault filter's (x, d) blocks. Probabilities are never reset.
    """
    i_max = 1 if state.probs[0] >= state.probs[1] else 2
    part = state.af.partition
    xd, fs = part.xd, part.f
    if i_max == 1:
        state.af.mean[xd] = state.nf.mean
        state.af.cov[xd, xd] = state.nf.cov
        state.af.mean[fs] = params.x0_f
        state.af.cov[fs, fs] = params.P0_f
        state.af.cov[xd, fs] = 0.0
        state.af.cov[fs, xd] = 0.0
    else:
        state.nf.mean[:] = state.af.mean[xd]
        state.nf.cov[:, :] = state.af.cov[xd, xd]
    state.i_max = i_max
    return state


def weighted_estimates(state: DmaeState) -> dict:
    """Probability-weighted fused outputs {x_hat, d_hat, f_bar}."""
    p_nf, p_af = float(state.probs[0]), float(state.probs[1])
    nfp, afp = state.nf.partition, state.af.partition
    x_hat = p_nf * state.nf.mean[nfp.x] + p_af * state.af.mean[afp.x]
    d_hat = p_nf * state.nf.mean[nfp.d] + p_af * state.af.mean[afp.d]
    f_bar = p_af * state.af.mean[afp.f]
    return {"x_hat": x_hat, "d_hat": d_hat, "f_bar": f_bar}


def init_dmae_state(
    model: LtvModel,
    params: DmaeParams,
    x_mean=None,
    x_cov=None,
    d_mean=None,
    d_cov=None,
    f_mean=None,
    f_cov=None,
) -> DmaeState:
    """Fresh state with block-diagonal initial beliefs.

    Unconfigured blocks default to zero mean and identity covariance. The
    fault filter starts from the same (x, d) belief as the no-fault filter.
    """
    n, n_d, n_f = model.n, model.n_d, model.n_f
    if n_f != params.n_f:
        raise ValueError(f"params fault dim {params.n_f} does not match model n_f={n_f}")

    def _vec(v, size):
        return np.zeros(size) if v is None else np.asarray(v, dtype=np.float64).reshape(size)

    def _cov(c, size):
        if c is None:
            return np.eye(size)
        c = np.asarray(c, dtype=np.float64)
        if c.ndim == 0:
            return float(c) * np.eye(size)
        return c.reshape(size, size)

    blocks_mean = [_vec(x_mean, n), _vec(d_mean, n_d), _vec(f_mean, n_f)]
    blocks_cov = [_cov(x_cov, n), _cov(d_cov, n_d), _cov(f_cov, n_f)]

    nf_mean = np.concatenate(blocks_mean[:2]) if n_d else blocks_mean[0]
    nf_cov = _blockdiag(blocks_cov[:2])
    af_mean = np.concatenate(blocks_mean)
    af_cov = _blockdiag(blocks_cov)
    nf = GaussianBelief(nf_mean, nf_cov, Partition(n, n_d, 0))
    af = GaussianBelief(af_mean, af_cov, Partition(n, n_d, n_f))

    qd = np.asarray(params.qd_init, dtype=np.float64)
    if qd.ndim == 0:
        qd = float(qd) * np.eye(n_d)
    if qd.shape != (n_d, n_d):
        raise ValueError(f"qd_init has shape {qd.shape}, expected ({n_d}, {n_d})")

    return DmaeState(
        nf=nf,
        af=af,
        probs=np.array(params.initial_probs, dtype=np.float64),
        window=InnovationWindow(params.window_N, model.m),
        Qd_current=qd.copy(),
        i_max=1,
    )


def _blockdiag(blocks) -> np.ndarray:
    blocks = [b for b in blocks if b.size or b.shape[0]]
    dim = sum(b.shape[0] for b in blocks)
    out = np.zeros((dim, dim))
    at = 0
    for b in blocks:
        s = b.shape[0]
        out[at : at + s, at : at + s] = b
        at += s
    return out


def dmae_step(state: DmaeState, model: LtvModel, params: DmaeParams, u, y, k: int):
    """One full cycle of the two-filter estimator.

    Order: rebuild both augmented models with the current Qd, predict both
    filters (known input B u mapped into the x partition), update both
    against y, run the Bayes probability update, push the fault filter's
    innovation into the window and (optionally) refresh Qd for the next
    step, reinitialize the non-dominant filter, then emit the fused
    estimates. The window push and Qd refresh only happen while the
    no-fault model is dominant at both this step and the previous one;
    fault transients would otherwise masquerade as disturbance noise. For
    tabulated plants every matrix is indexed at the update step k; the
    adaptive residual removes the previous step's process noise Q(k-1),
    clamped at the first step.

    Args:
        u: known input applied during the transition into step k.
        y: measurement at step k.

    Returns:
        (state, StepRecord). The state object is mutated and returned.
    """
    mdl_nf = build_no_fault_model(model, state.Qd_current, k)
    mdl_af = build_fault_model(model, state.Qd_current, params.Qf, k)
    R = model.R(k)

    u = np.asarray(u, dtype=np.float64).reshape(-1)
    bu_x = model.B(k) @ u
    bu_nf = np.zeros(mdl_nf.partition.dim)
    bu_nf[: model.n] = bu_x
    bu_af = np.zeros(mdl_af.partition.dim)
    bu_af[: model.n] = bu_x

    nf_pred = predict(state.nf, mdl_nf.Abar, mdl_nf.Qbar, bu_nf)
    af_pred = predict(state.af, mdl_af.Abar, mdl_af.Qbar, bu_af)
    fs = af_pred.partition.f
    stash_mean = af_pred.mean[fs].copy()
    stash_cov = af_pred.cov[fs, fs].copy()

    nf_out = update(nf_pred, y, mdl_nf.Hbar, R, step=k)
    af_out = update(af_pred, y, mdl_af.Hbar, R, step=k)

    state.probs = update_probabilities(state.probs, nf_out.loglik, af_out.loglik, params.prob_floor)
    state.nf = nf_out.posterior
    state.af = af_out.posterior

    # Adaptation is gated on the no-fault hypothesis holding across two
    # consecutive steps (state.i_max is still last step's winner here).
    # Fault edges otherwise land in the window as fake disturbance noise,
    # inflate Qd, and let the loosened no-fault filter swallow the fault
    # into d_hat at the next edge.
    if state.i_max == 1 and state.probs[0] >= state.probs[1]:
        state.window.push(af_out.innovation)
        if params.adapt_qd:
            C_hat = innovation_cov_estimate(state.window)
            state.Qd_current = qd_update(
                C_hat, model.H(k), model.E(k), model.Q(max(k - 1, 0)), model.F(k), params.Qf, R, k
            )

    selective_reinit(state, params)
    if params.freeze_fault_when_dominant and state.i_max == 2 and params.n_f:
        state.af.mean[fs] = stash_mean
        state.af.cov[fs, fs] = 0.5 * (stash_cov + stash_cov.T)

    est = weighted_estimates(state)
    record = StepRecord(
        k=k,
        x_hat=est["x_hat"],
        d_hat=est["d_hat"],
        f_bar=est["f_bar"],
        p_nf=float(state.probs[0]),
        p_af=float(state.probs[1]),
        i_max=state.i_max,
        qd_diag=np.diag(state.Qd_current).copy(),
        innovation_nf=nf_out.innovation.copy(),
        innovation_af=af_out.innovation.copy(),
        loglik_nf=nf_out.loglik,
        loglik_af=af_out.loglik,
        fault_gain=af_out.gain[fs].copy(),
        min_eig_nf=state.nf.min_eig(),
        min_eig_af=state.af.min_eig(),
    )
    return state, record


def initial_record(state: DmaeState, model: LtvModel) -> StepRecord:
    """Row-zero record taken straight from the initial beliefs.

    The recursion treats the configured means as the posterior at step 0,
    so the first predict/update cycle lands on step 1 and the step-0 row
    carries the priors with zero innovations.
    """
    est = weighted_estimates(state)
    m = model.m
    return StepRecord(
        k=0,
        x_hat=est["x_hat"],
        d_hat=est["d_hat"],
        f_bar=est["f_bar"],
        p_nf=float(state.probs[0]),
        p_af=float(state.probs[1]),
        i_max=state.i_max,
        qd_diag=np.diag(state.Qd_current).copy(),
        innovation_nf=np.zeros(m),
        innovation_af=np.zeros(m),
        loglik_nf=0.0,
        loglik_af=0.0,
        fault_gain=np.zeros((state.af.partition.n_f, m)),
        min_eig_nf=state.nf.min_eig(),
        min_eig_af=state.af.min_eig(),
    )


def run_dmae(config, seed=None, filter_scale_q: float = 1.0, filter_scale_r: float = 1.0):
    """Simulate the configured scenario and run the estimator over it.

    Args:
        config: ScenarioConfig.
        seed: overrides the config seed when given.
        filter_scale_q: filter-side process-noise mismatch factor (the
            simulated truth keeps the config noise).
        filter_scale_r: filter-side measurement-noise mismatch factor.

    Returns:
        RunLog with truth, measurements, fused estimates and diagnostics.
    """
    from dmae import scenario as _scenario

    used_seed = config.seed if seed is None else int(seed)
    truth = _scenario.simulate_truth(config, seed=used_seed)
    model = config.build_model()
    if filter_scale_q != 1.0 or filter_scale_r != 1.0:
        model = model.scaled(filter_scale_q, filter_scale_r)
    params = config.build_dmae_params()
    state = init_dmae_state(model, params, **config.init_kwargs())

    records = [initial_record(state, model)]
    for k in range(1, config.horizon):
        state, rec = dmae_step(state, model, params, truth.u[k - 1], truth.y[k], k)
        records.append(rec)
    return _scenario.build_runlog(
        config,
        truth,
        records,
        estimator="dmae",
        seed=used_seed,
        filter_scale_q=filter_scale_q,
        filter_scale_r=filter_scale_r,
    )
