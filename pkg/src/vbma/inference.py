"""Variational Bayes EM for one (m+1)-state model.

The E-step runs a log-space forward-backward pass under expected natural
parameters; the M-step applies conjugate Dirichlet / Normal-Gamma updates
that exploit the factorized structure of the expanded transition matrix
(all alternative rows coincide, so only four transition aggregates and the
per-component columns are needed).

The model's initial law is the stationary distribution of the binary chain,
which breaks conjugacy.  We plug in the stationary law of the current
posterior-mean transition matrix at E-step time and keep it fixed for the
rest of the run, so every recorded bound refers to one coherent objective
and the trace is monotone by the standard VBEM argument.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import digamma, logsumexp

from .distributions import (
    LOG_TWO_PI,
    dirichlet_expected_log,
    dirichlet_kl,
    gamma_kl,
)
from .model import (
    MixtureAlternative,
    NullDensity,
    TransitionBinary,
    clamped_log,
    stationary,
    _freeze,
)


@dataclass(frozen=True)
class PriorSpec:
    """Conjugate prior hyperparameters for one m-component model."""

    dir_row0: np.ndarray
    dir_row1: np.ndarray
    dir_props: np.ndarray
    gamma_shape: float
    gamma_rate: float
    ng_mean: float
    ng_scale: float

    def __post_init__(self):
        object.__setattr__(self, "dir_row0", _freeze(self.dir_row0))
        object.__setattr__(self, "dir_row1", _freeze(self.dir_row1))
        object.__setattr__(self, "dir_props", _freeze(self.dir_props))
        if self.dir_row0.shape != (2,) or self.dir_row1.shape != (2,):
            raise ValueError("transition rows need two Dirichlet parameters each")
        for arr in (self.dir_row0, self.dir_row1, self.dir_props):
            if np.any(arr <= 0.0):
                raise ValueError("Dirichlet concentrations must be positive")
        if min(self.gamma_shape, self.gamma_rate, self.ng_scale) <= 0.0:
            raise ValueError("gamma/scale hyperparameters must be positive")

    @property
    def m(self) -> int:
        return self.dir_props.size

    @classmethod
    def default(cls, m: int) -> "PriorSpec":
        """Flat rows/proportions, Gamma(0.01, 0.01) precision, vague means."""
        return cls(
            dir_row0=np.ones(2),
            dir_row1=np.ones(2),
            dir_props=np.ones(m),
            gamma_shape=0.01,
            gamma_rate=0.01,
            ng_mean=0.0,
            ng_scale=0.01,
        )


@dataclass(frozen=True)
class VariationalPosterior:
    """Same families as the prior, with per-component Normal-Gamma blocks."""

    dir_row0: np.ndarray
    dir_row1: np.ndarray
    dir_props: np.ndarray
    gamma_shape: float
    gamma_rate: float
    ng_means: np.ndarray
    ng_scales: np.ndarray

    def __post_init__(self):
        for name in ("dir_row0", "dir_row1", "dir_props", "ng_means", "ng_scales"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        if np.any(self.dir_row0 <= 0) or np.any(self.dir_row1 <= 0) or np.any(self.dir_props <= 0):
            raise ValueError("Dirichlet concentrations must be positive")
        if min(self.gamma_shape, self.gamma_rate) <= 0 or np.any(self.ng_scales <= 0):
            raise ValueError("gamma/scale hyperparameters must be positive")
        if self.ng_means.shape != self.dir_props.shape or self.ng_scales.shape != self.dir_props.shape:
            raise ValueError("per-component arrays must have length m")

    @property
    def m(self) -> int:
        return self.dir_props.size

    def mean_precision(self) -> float:
        return self.gamma_shape / self.gamma_rate


@dataclass(frozen=True)
class ExpectedCounts:
    """E-step output: smoothed marginals plus expected transition aggregates."""

    resp: np.ndarray
    pairwise: np.ndarray
    n00: float
    n0plus: float
    nplus0: float
    nplusplus: float
    col: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "resp", _freeze(self.resp))
        object.__setattr__(self, "pairwise", _freeze(self.pairwise))
        object.__setattr__(self, "col", _freeze(self.col))
        n = self.resp.shape[0]
        if np.any(np.abs(self.resp.sum(axis=1) - 1.0) > 1e-10):
            raise ValueError("responsibility rows must sum to 1")
        total = self.n00 + self.n0plus + self.nplus0 + self.nplusplus
        if abs(total - (n - 1)) > 1e-8:
            raise ValueError("expected transition counts must sum to n-1")

    @classmethod
    def from_moments(cls, resp, pairwise) -> "ExpectedCounts":
        resp = np.asarray(resp, dtype=float)
        pairwise = np.asarray(pairwise, dtype=float)
        return cls(
            resp=resp,
            pairwise=pairwise,
            n00=float(pairwise[0, 0]),
            n0plus=float(pairwise[0, 1:].sum()),
            nplus0=float(pairwise[1:, 0].sum()),
            nplusplus=float(pairwise[1:, 1:].sum()),
            col=pairwise[:, 1:].sum(axis=0) + resp[0, 1:],
        )

    @property
    def n(self) -> int:
        return self.resp.shape[0]


@dataclass(frozen=True)
class FitResult:
    """One converged VBEM run (best restart), canonically ordered."""

    m: int
    posterior: VariationalPosterior
    counts: ExpectedCounts
    elbo_trace: np.ndarray
    log_evidence_bound: float
    point_alt: MixtureAlternative
    point_pi: TransitionBinary
    s_marginals: np.ndarray
    init_q: tuple[float, float]
    converged: bool = True

    def __post_init__(self):
        object.__setattr__(self, "elbo_trace", _freeze(self.elbo_trace))
        object.__setattr__(self, "s_marginals", _freeze(self.s_marginals))
        if np.any(np.diff(self.elbo_trace) < -1e-8):
            raise ValueError("ELBO trace must be nondecreasing (tolerance 1e-8)")
        expected = self.counts.resp[:, 1:].sum(axis=1)
        if np.any(np.abs(self.s_marginals - expected) > 1e-12):
            raise ValueError("s_marginals must equal the alternative-state mass")

    @property
    def n(self) -> int:
        return self.s_marginals.size


@dataclass(frozen=True)
class VBEMConfig:
    tol: float = 1e-6
    max_iter: int = 500
    restarts: int = 5
    seed: int = 0


@dataclass(frozen=True)
class LogParamTable:
    """Expected log-parameters feeding the E-step."""

    elog_row0: np.ndarray  # (E[log pi00], E[log pi01])
    elog_row1: np.ndarray
    elog_props: np.ndarray
    log_emit: np.ndarray  # (n, m+1); column 0 is the exact null log-density


def expected_log_params(q: VariationalPosterior, data, null: NullDensity) -> LogParamTable:
    """Digamma expectations of log-transitions/proportions and the expected
    Gaussian log-density table E[log N(x; mu_k, 1/lambda)] per state."""
    x = np.asarray(data, dtype=float)
    e_lambda = q.gamma_shape / q.gamma_rate
    e_log_lambda = digamma(q.gamma_shape) - np.log(q.gamma_rate)
    log_emit = np.empty((x.size, q.m + 1))
    log_emit[:, 0] = null.logpdf(x)
    # E[lambda (x - mu_k)^2] = E[lambda] (x - m_k)^2 + 1/beta_k
    quad = e_lambda * (x[:, None] - q.ng_means) ** 2 + 1.0 / q.ng_scales
    log_emit[:, 1:] = 0.5 * (e_log_lambda - LOG_TWO_PI) - 0.5 * quad
    return LogParamTable(
        elog_row0=dirichlet_expected_log(q.dir_row0),
        elog_row1=dirichlet_expected_log(q.dir_row1),
        elog_props=dirichlet_expected_log(q.dir_props),
        log_emit=log_emit,
    )


def assemble_log_transitions(table: LogParamTable) -> np.ndarray:
    """Expanded (m+1)x(m+1) log-transition weights from the binary rows and
    proportions; mirrors the factorized structure of the expansion."""
    m = table.elog_props.size
    log_trans = np.empty((m + 1, m + 1))
    log_trans[0, 0] = table.elog_row0[0]
    log_trans[0, 1:] = table.elog_row0[1] + table.elog_props
    log_trans[1:, 0] = table.elog_row1[0]
    log_trans[1:, 1:] = table.elog_row1[1] + table.elog_props
    return log_trans


def assemble_log_init(table: LogParamTable, init_q: tuple[float, float]) -> np.ndarray:
    """Initial log-law: fixed (q0, q1) split combined with E[log p_k]."""
    q0, q1 = init_q
    m = table.elog_props.size
    log_init = np.empty(m + 1)
    log_init[0] = clamped_log(q0)
    log_init[1:] = clamped_log(q1) + table.elog_props
    return log_init


def _check_fb_inputs(log_table, log_trans, log_init):
    log_table = np.asarray(log_table, dtype=float)
    log_trans = np.asarray(log_trans, dtype=float)
    log_init = np.asarray(log_init, dtype=float)
    if not (
        np.all(np.isfinite(log_table))
        and np.all(np.isfinite(log_trans))
        and np.all(np.isfinite(log_init))
    ):
        raise ValueError("forward_backward requires finite log-weights")
    n, k = log_table.shape
    if log_trans.shape != (k, k) or log_init.shape != (k,):
        raise ValueError("inconsistent table dimensions")
    return log_table, log_trans, log_init


def forward_backward(log_table, log_trans, log_init):
    """Exact smoothed marginals, expected pairwise transition counts and the
    log-normalizer of the chain with the given log-weights.

    Per-step scaled recursions (each emission column is shifted by its max
    before exponentiating), so the result matches path enumeration to
    roundoff while staying safe for series of thousands of points.  Inputs
    must be finite; encode impossible states with a large negative floor.
    """
    log_table, log_trans, log_init = _check_fb_inputs(log_table, log_trans, log_init)
    n, k = log_table.shape

    shift = log_table.max(axis=1)
    w = np.exp(log_table - shift[:, None])  # scaled emission weights
    tmax = log_trans.max()
    a_mat = np.exp(log_trans - tmax)

    alpha = np.empty((n, k))
    log_norm = 0.0
    v = np.exp(log_init - log_init.max()) * w[0]
    s = v.sum()
    alpha[0] = v / s
    log_norm += np.log(s) + log_init.max() + shift[0]
    for t in range(1, n):
        v = w[t] * (alpha[t - 1] @ a_mat)
        s = v.sum()
        alpha[t] = v / s
        log_norm += np.log(s) + tmax + shift[t]

    beta = np.empty((n, k))
    beta[-1] = 1.0
    for t in range(n - 2, -1, -1):
        v = a_mat @ (w[t + 1] * beta[t + 1])
        beta[t] = v / v.sum()

    resp = alpha * beta
    resp /= resp.sum(axis=1, keepdims=True)
    if n > 1:
        pair = alpha[:-1, :, None] * a_mat[None, :, :] * (w[1:] * beta[1:])[:, None, :]
        pair /= pair.sum(axis=(1, 2), keepdims=True)
        pairwise = pair.sum(axis=0)
    else:
        pairwise = np.zeros((k, k))
    return ExpectedCounts.from_moments(resp, pairwise), float(log_norm)


def forward_filter(log_table, log_trans, log_init):
    """Filtered state marginals P(z_t | x_{1:t}) and the log-normalizer;
    the inputs that backward path sampling needs."""
    log_table, log_trans, log_init = _check_fb_inputs(log_table, log_trans, log_init)
    n, k = log_table.shape
    shift = log_table.max(axis=1)
    w = np.exp(log_table - shift[:, None])
    tmax = log_trans.max()
    a_mat = np.exp(log_trans - tmax)

    alpha = np.empty((n, k))
    v = np.exp(log_init - log_init.max()) * w[0]
    s = v.sum()
    alpha[0] = v / s
    log_norm = np.log(s) + log_init.max() + shift[0]
    for t in range(1, n):
        v = w[t] * (alpha[t - 1] @ a_mat)
        s = v.sum()
        alpha[t] = v / s
        log_norm += np.log(s) + tmax + shift[t]
    return alpha, float(log_norm)


def forward_loglik(log_table, log_trans, log_init) -> float:
    """Log-normalizer only (forward pass); used for point-parameter likelihoods."""
    log_table, log_trans, log_init = _check_fb_inputs(log_table, log_trans, log_init)
    n, _ = log_table.shape
    shift = log_table.max(axis=1)
    w = np.exp(log_table - shift[:, None])
    tmax = log_trans.max()
    a_mat = np.exp(log_trans - tmax)

    v = np.exp(log_init - log_init.max()) * w[0]
    s = v.sum()
    log_norm = np.log(s) + log_init.max() + shift[0]
    v /= s
    for t in range(1, n):
        v = w[t] * (v @ a_mat)
        s = v.sum()
        v /= s
        log_norm += np.log(s) + tmax + shift[t]
    return float(log_norm)


def vb_m_step(prior: PriorSpec, counts: ExpectedCounts, data) -> VariationalPosterior:
    """Conjugate hyperparameter updates from expected counts.

    State 0 contributes nothing to the emission block (the null is known);
    the precision is pooled across the alternative components.
    """
    x = np.asarray(data, dtype=float)
    if x.size == 0:
        raise ValueError("empty data")
    resp_alt = counts.resp[:, 1:]
    n_k = resp_alt.sum(axis=0)
    s_k = resp_alt.T @ x
    t_k = resp_alt.T @ (x**2)

    beta_k = prior.ng_scale + n_k
    m_k = (prior.ng_scale * prior.ng_mean + s_k) / beta_k
    residual = t_k + prior.ng_scale * prior.ng_mean**2 - beta_k * m_k**2
    # completed-square residuals are nonnegative up to roundoff
    residual = np.maximum(residual, 0.0)

    post = VariationalPosterior(
        dir_row0=prior.dir_row0 + np.array([counts.n00, counts.n0plus]),
        dir_row1=prior.dir_row1 + np.array([counts.nplus0, counts.nplusplus]),
        dir_props=prior.dir_props + counts.col,
        gamma_shape=prior.gamma_shape + 0.5 * n_k.sum(),
        gamma_rate=prior.gamma_rate + 0.5 * residual.sum(),
        ng_means=m_k,
        ng_scales=beta_k,
    )
    # updates add nonnegative expected counts, so concentrations cannot shrink
    assert np.all(post.dir_row0 >= prior.dir_row0 - 1e-9)
    assert np.all(post.dir_row1 >= prior.dir_row1 - 1e-9)
    assert np.all(post.dir_props >= prior.dir_props - 1e-9)
    assert post.gamma_rate >= prior.gamma_rate - 1e-9
    return post


def kl_to_prior(q: VariationalPosterior, prior: PriorSpec) -> float:
    """KL(Q_Theta || P_Theta): Dirichlet blocks plus the shared-precision
    Normal-Gamma block (Gamma KL plus expected conditional-Normal KLs)."""
    kl = (
        dirichlet_kl(q.dir_row0, prior.dir_row0)
        + dirichlet_kl(q.dir_row1, prior.dir_row1)
        + dirichlet_kl(q.dir_props, prior.dir_props)
        + gamma_kl(q.gamma_shape, q.gamma_rate, prior.gamma_shape, prior.gamma_rate)
    )
    e_lambda = q.gamma_shape / q.gamma_rate
    kl += 0.5 * np.sum(
        np.log(q.ng_scales / prior.ng_scale)
        + prior.ng_scale / q.ng_scales
        - 1.0
        + prior.ng_scale * (q.ng_means - prior.ng_mean) ** 2 * e_lambda
    )
    return float(kl)


def elbo(prior: PriorSpec, q: VariationalPosterior, counts: ExpectedCounts, log_normalizer: float) -> float:
    """Variational lower bound right after an E-step: the chain normalizer
    under expected log-parameters minus KL(Q_Theta || P_Theta)."""
    del counts  # the normalizer already absorbs the hidden-chain terms
    return float(log_normalizer) - kl_to_prior(q, prior)


def posterior_mean_pi(q: VariationalPosterior) -> TransitionBinary:
    r0 = q.dir_row0 / q.dir_row0.sum()
    r1 = q.dir_row1 / q.dir_row1.sum()
    return TransitionBinary(float(r0[0]), float(r0[1]), float(r1[0]), float(r1[1]))


def posterior_mean_alt(q: VariationalPosterior) -> MixtureAlternative:
    return MixtureAlternative.canonical(
        q.ng_means, q.mean_precision(), q.dir_props / q.dir_props.sum()
    )


def initial_responsibilities(data, null: NullDensity, m: int, frac: float) -> np.ndarray:
    """Quantile-split initialization: the fraction of points least likely
    under the null is spread over the m components by value bins."""
    x = np.asarray(data, dtype=float)
    n = x.size
    n_alt = min(max(m, int(round(frac * n))), n)
    order = np.argsort(null.logpdf(x), kind="stable")
    alt_idx = order[:n_alt]
    alt_idx = alt_idx[np.argsort(x[alt_idx], kind="stable")]
    resp = np.zeros((n, m + 1))
    resp[:, 0] = 1.0
    for k, idx in enumerate(np.array_split(alt_idx, m), start=1):
        resp[idx, 0] = 0.05
        resp[idx, k] = 0.95
    return resp


def _independent_pairwise(resp: np.ndarray) -> np.ndarray:
    """Initial pairwise counts from the product of consecutive marginals."""
    if resp.shape[0] < 2:
        return np.zeros((resp.shape[1], resp.shape[1]))
    return resp[:-1].T @ resp[1:]


def _vbem_loop(x, null, prior, resp0, cfg: VBEMConfig):
    """Alternate E and M steps from the given initial responsibilities.

    Returns the posterior that generated the final counts (no trailing
    M-step), so downstream weight code can reproduce the chain posterior.
    """
    counts0 = ExpectedCounts.from_moments(resp0, _independent_pairwise(resp0))
    q = vb_m_step(prior, counts0, x)
    trace: list[float] = []
    init_q = None
    counts = counts0
    log_norm = -np.inf
    converged = False
    for _ in range(cfg.max_iter):
        table = expected_log_params(q, x, null)
        if init_q is None:
            # pin the initial law once; see the module docstring
            init_q = stationary(posterior_mean_pi(q))
        log_trans = assemble_log_transitions(table)
        log_init = assemble_log_init(table, init_q)
        counts, log_norm = forward_backward(table.log_emit, log_trans, log_init)
        trace.append(elbo(prior, q, counts, log_norm))
        if len(trace) >= 2:
            delta = abs(trace[-1] - trace[-2])
            if delta <= cfg.tol * max(1.0, abs(trace[-1])):
                converged = True
                break
        q = vb_m_step(prior, counts, x)
    return {
        "posterior": q,
        "counts": counts,
        "trace": np.array(trace),
        "log_norm": log_norm,
        "init_q": init_q,
        "converged": converged,
    }


def _canonical_order(run: dict) -> dict:
    """Reorder components by posterior-mean location; label switching only."""
    q = run["posterior"]
    order = np.argsort(q.ng_means, kind="stable")
    if np.all(order == np.arange(q.m)):
        return run
    counts = run["counts"]
    perm = np.concatenate(([0], order + 1))
    resp = counts.resp[:, perm]
    pairwise = counts.pairwise[np.ix_(perm, perm)]
    run = dict(run)
    run["posterior"] = replace(
        q,
        dir_props=q.dir_props[order],
        ng_means=q.ng_means[order],
        ng_scales=q.ng_scales[order],
    )
    run["counts"] = ExpectedCounts.from_moments(resp, pairwise)
    return run


def fit(data, null: NullDensity, m: int, prior: PriorSpec | None = None, cfg: VBEMConfig | None = None) -> FitResult:
    """Fit the m-component model by VBEM, best of cfg.restarts initializations."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("need a one-dimensional series with n >= 2")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite data")
    if m < 1:
        raise ValueError("m must be at least 1")
    prior = PriorSpec.default(m) if prior is None else prior
    if prior.m != m:
        raise ValueError("prior dimension does not match m")
    cfg = VBEMConfig() if cfg is None else cfg

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, m]))
    best = None
    for r in range(max(1, cfg.restarts)):
        frac = 0.3 if r == 0 else float(rng.uniform(0.15, 0.45))
        resp0 = initial_responsibilities(x, null, m, frac)
        run = _vbem_loop(x, null, prior, resp0, cfg)
        if best is None or run["trace"][-1] > best["trace"][-1]:
            best = run

    best = _canonical_order(best)
    q = best["posterior"]
    counts = best["counts"]
    return FitResult(
        m=m,
        posterior=q,
        counts=counts,
        elbo_trace=best["trace"],
        log_evidence_bound=float(best["trace"][-1]),
        point_alt=posterior_mean_alt(q),
        point_pi=posterior_mean_pi(q),
        s_marginals=counts.resp[:, 1:].sum(axis=1),
        init_q=best["init_q"],
        converged=best["converged"],
    )
