"""Comparison estimators: a plain augmented-state KF and a bootstrap PF.

Both treat the unknown inputs as random-walk states, exactly like the
two-filter estimator's fault filter, but without model probabilities,
selective reinitialization, or covariance adaptation. They share the model
assembly and Kalman step code so any difference in results comes from the
algorithm, not from a reimplementation.
"""

import logging
from dataclasses import dataclass

import numpy as np

from dmae.dmae import StepRecord, init_dmae_state
from dmae.kalman import GaussianBelief, KalmanStepOutput, NumericalError, predict, update
from dmae.kernels import LOG_2PI
from dmae.model import LtvModel, build_fault_model, build_no_fault_model
from dmae.rng import make_generator, standard_normal

logger = logging.getLogger(__name__)


def augmented_kf_step(belief: GaussianBelief, model: LtvModel, Qd, Qf, u, y, k: int) -> KalmanStepOutput:
    """One predict+update of a single KF over [x; d; f] (or [x; d] if the
    belief carries no fault block). Qd and Qf stay fixed; no adaptation."""
    if belief.partition.n_f:
        mdl = build_fault_model(model, Qd, Qf, k)
    else:
        mdl = build_no_fault_model(model, Qd, k)
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    bu = np.zeros(mdl.partition.dim)
    bu[: model.n] = model.B(k) @ u
    pred = predict(belief, mdl.Abar, mdl.Qbar, bu)
    return update(pred, y, mdl.Hbar, model.R(k), step=k)


def run_akf(
    config,
    include_fault: bool = True,
    seed=None,
    filter_scale_q: float = 1.0,
    filter_scale_r: float = 1.0,
):
    """Run the augmented KF over a simulated scenario.

    The disturbance random-walk covariance is the config's qd_init, held
    fixed. With include_fault=False the filter state is [x; d] only and the
    fault channel of the log stays zero. Diagnostics land in the no-fault
    slots of the RunLog; probability channels stay zero.
    """
    from dmae import scenario as _scenario

    used_seed = config.seed if seed is None else int(seed)
    truth = _scenario.simulate_truth(config, seed=used_seed)
    model = config.build_model()
    if filter_scale_q != 1.0 or filter_scale_r != 1.0:
        model = model.scaled(filter_scale_q, filter_scale_r)
    params = config.build_dmae_params()

    state = init_dmae_state(model, params, **config.init_kwargs())
    belief = state.af if include_fault else state.nf
    Qd = state.Qd_current
    n_f = model.n_f

    def make_record(k, out):
        part = belief.partition
        return StepRecord(
            k=k,
            x_hat=belief.mean[part.x].copy(),
            d_hat=belief.mean[part.d].copy(),
            f_bar=belief.mean[part.f].copy() if include_fault else np.zeros(n_f),
            p_nf=0.0,
            p_af=0.0,
            i_max=0,
            qd_diag=np.diag(Qd).copy(),
            innovation_nf=out.innovation.copy() if out else np.zeros(model.m),
            innovation_af=np.zeros(model.m),
            loglik_nf=out.loglik if out else 0.0,
            loglik_af=0.0,
            fault_gain=out.gain[part.f].copy() if out else np.zeros((part.n_f, model.m)),
            min_eig_nf=belief.min_eig(),
            min_eig_af=0.0,
        )

    records = [make_record(0, None)]
    for k in range(1, config.horizon):
        out = augmented_kf_step(belief, model, Qd, params.Qf, truth.u[k - 1], truth.y[k], k)
        belief = out.posterior
        records.append(make_record(k, out))
    return _scenario.build_runlog(
        config, truth, records, estimator="akf", seed=used_seed,
        filter_scale_q=filter_scale_q, filter_scale_r=filter_scale_r,
    )


@dataclass
class ParticleSet:
    """Weighted particles over the augmented state [x; d; f]."""

    particles: np.ndarray  # (count, dim)
    weights: np.ndarray    # (count,)

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=np.float64))
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if self.count < 1:
            raise ValueError("particle set must hold at least one particle")
        if self.weights.shape[0] != self.count:
            raise ValueError(f"{self.weights.shape[0]} weights for {self.count} particles")
        total = self.weights.sum()
        if not np.isfinite(total) or total <= 0:
            raise ValueError("particle weights must be finite with positive sum")
        if abs(total - 1.0) > 1e-12:
            self.weights = self.weights / total

    @property
    def count(self) -> int:
        return self.particles.shape[0]

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles

    def ess(self) -> float:
        return 1.0 / float(self.weights @ self.weights)


def _systematic_resample(ps: ParticleSet, offset: float) -> ParticleSet:
    N = ps.count
    positions = (np.arange(N) + offset) / N
    cum = np.cumsum(ps.weights)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, positions, side="left")
    return ParticleSet(ps.particles[idx].copy(), np.full(N, 1.0 / N))


def bootstrap_pf_step(ps: ParticleSet, model: LtvModel, Qd, Qf, u, y, k: int, gen, fault_noise: float = 1e-6) -> ParticleSet:
    """One bootstrap step: propagate, reweight by measurement likelihood,
    resample when the effective sample size drops below half the count.

    The disturbance noise draw is shared between the d block and the state
    propagation (d' = d + wd, x' = A x + B u + E d' + w), matching the
    compensated augmented dynamics. The fault proposal variance is the
    diagonal of Qf clipped below at ``fault_noise`` so particles keep moving
    when Qf = 0. One uniform is consumed for the resampling offset every
    step, used or not, to keep the stream position independent of the data.
    """
    n, n_d, n_f, m = model.n, model.n_d, model.n_f, model.m
    N = ps.count
    u = np.asarray(u, dtype=np.float64).reshape(-1)

    from dmae.scenario import _psd_sqrt

    w = standard_normal(gen, (N, n)) @ _psd_sqrt(model.Q(k)).T
    wd = standard_normal(gen, (N, n_d)) @ _psd_sqrt(np.asarray(Qd, dtype=np.float64)).T if n_d else np.zeros((N, 0))
    var_f = np.maximum(np.diag(np.atleast_2d(np.asarray(Qf, dtype=np.float64))), fault_noise) if n_f else np.zeros(0)
    wf = standard_normal(gen, (N, n_f)) * np.sqrt(var_f) if n_f else np.zeros((N, 0))

    X = ps.particles[:, :n]
    D = ps.particles[:, n : n + n_d]
    F_blk = ps.particles[:, n + n_d :]
    D1 = D + wd
    X1 = X @ model.A(k).T + model.B(k) @ u + D1 @ model.E(k).T + w
    F1 = F_blk + wf
    particles = np.hstack([X1, D1, F1])

    R = model.R(k)
    pred_y = X1 @ model.H(k).T + (F1 @ model.F(k).T if n_f else 0.0)
    G = y - pred_y
    try:
        L = np.linalg.cholesky(0.5 * (R + R.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"measurement noise not positive definite at step {k}") from exc
    Z = np.linalg.solve(L, G.T)
    # overflow in the quadratic form lands in the degenerate-weights branch
    with np.errstate(over="ignore"):
        loglik = -0.5 * m * LOG_2PI - np.log(np.diag(L)).sum() - 0.5 * (Z * Z).sum(axis=0)

    with np.errstate(divide="ignore"):
        lw = np.log(ps.weights) + loglik
    top = lw.max()
    if not np.isfinite(top):
        logger.warning("particle weights degenerate at step %d; reset to uniform", k)
        weights = np.full(N, 1.0 / N)
    else:
        weights = np.exp(lw - top)
        weights /= weights.sum()

    out = ParticleSet(particles, weights)
    offset = float(gen.random())
    if out.ess() < N / 2.0:
        out = _systematic_resample(out, offset)
    return out


def run_pf(config, seed=None, filter_scale_q: float = 1.0, filter_scale_r: float = 1.0):
    """Run the bootstrap PF over a simulated scenario.

    The particle stream is a child of the run seed (key 1), so the PF's
    own randomness never perturbs the simulated truth for the same seed.
    """
    from dmae import scenario as _scenario

    used_seed = config.seed if seed is None else int(seed)
    truth = _scenario.simulate_truth(config, seed=used_seed)
    model = config.build_model()
    if filter_scale_q != 1.0 or filter_scale_r != 1.0:
        model = model.scaled(filter_scale_q, filter_scale_r)
    params = config.build_dmae_params()
    state = init_dmae_state(model, params, **config.init_kwargs())
    mean0 = state.af.mean
    sq0 = _scenario._psd_sqrt(state.af.cov)
    Qd = state.Qd_current

    gen = make_generator(used_seed, key=1)
    N = config.pf.particles
    particles = mean0 + standard_normal(gen, (N, mean0.shape[0])) @ sq0.T
    ps = ParticleSet(particles, np.full(N, 1.0 / N))

    n, n_d, n_f = model.n, model.n_d, model.n_f

    def make_record(k):
        est = ps.mean()
        return StepRecord(
            k=k,
            x_hat=est[:n].copy(),
            d_hat=est[n : n + n_d].copy(),
            f_bar=est[n + n_d :].copy(),
            p_nf=0.0,
            p_af=0.0,
            i_max=0,
            qd_diag=np.diag(Qd).copy(),
            innovation_nf=np.zeros(model.m),
            innovation_af=np.zeros(model.m),
            loglik_nf=0.0,
            loglik_af=0.0,
            fault_gain=np.zeros((n_f, model.m)),
            min_eig_nf=0.0,
            min_eig_af=0.0,
        )

    records = [make_record(0)]
    for k in range(1, config.horizon):
        ps = bootstrap_pf_step(
            ps, model, Qd, params.Qf, truth.u[k - 1], truth.y[k], k, gen,
            fault_noise=config.pf.fault_noise,
        )
        records.append(make_record(k))
    return _scenario.build_runlog(
        config, truth, records, estimator="pf", seed=used_seed,
        filter_scale_q=filter_scale_q, filter_scale_r=filter_scale_r,
    )
