"""Exact brute-force references used to validate the fast implementations.

Everything here scales exponentially (path enumeration) or uses adaptive
quadrature; it exists so the production code can be checked against an
independent route on small instances, never for real workloads.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.integrate import dblquad
from scipy.special import gammaln, logsumexp

from .distributions import LOG_TWO_PI
from .model import NullDensity

MAX_ENUM_PATHS = 2_000_000


def enumerate_chain_posterior(log_table, log_trans, log_init):
    """Smoothed marginals, pairwise transition counts and log-normalizer by
    exhaustive enumeration of all K^n hidden paths.

    Accepts -inf entries (impossible states); the normalizer must stay finite.
    """
    log_table = np.asarray(log_table, dtype=float)
    log_trans = np.asarray(log_trans, dtype=float)
    log_init = np.asarray(log_init, dtype=float)
    n, k = log_table.shape
    if k**n > MAX_ENUM_PATHS:
        raise ValueError("instance too large for path enumeration")

    paths = np.array(list(itertools.product(range(k), repeat=n)), dtype=int)
    scores = log_init[paths[:, 0]] + log_table[np.arange(n), paths].sum(axis=1)
    if n > 1:
        scores = scores + log_trans[paths[:, :-1], paths[:, 1:]].sum(axis=1)
    log_norm = logsumexp(scores)
    if not np.isfinite(log_norm):
        raise ValueError("all paths have zero probability")

    w = np.exp(scores - log_norm)
    resp = np.zeros((n, k))
    for t in range(n):
        np.add.at(resp[t], paths[:, t], w)
    pairwise = np.zeros((k, k))
    for t in range(1, n):
        np.add.at(pairwise, (paths[:, t - 1], paths[:, t]), w)
    return resp, pairwise, float(log_norm)


def normal_gamma_log_evidence(groups, gamma_shape, gamma_rate, ng_mean, ng_scale):
    """Closed-form marginal likelihood of observations split across mixture
    components sharing one precision, under the conjugate Normal-Gamma prior.

    ``groups`` is a sequence of arrays, one per component (empty allowed).
    """
    nu = 0.0
    residual = 0.0
    log_scale_term = 0.0
    for x in groups:
        x = np.asarray(x, dtype=float)
        n_k = x.size
        nu += n_k
        beta_k = ng_scale + n_k
        m_k = (ng_scale * ng_mean + x.sum()) / beta_k
        residual += (x**2).sum() + ng_scale * ng_mean**2 - beta_k * m_k**2
        log_scale_term += 0.5 * (np.log(ng_scale) - np.log(beta_k))
    shape_n = gamma_shape + 0.5 * nu
    rate_n = gamma_rate + 0.5 * residual
    return (
        -0.5 * nu * LOG_TWO_PI
        + log_scale_term
        + gammaln(shape_n)
        - gammaln(gamma_shape)
        + gamma_shape * np.log(gamma_rate)
        - shape_n * np.log(rate_n)
    )


def _dirichlet_multinomial_log(counts, alpha):
    counts = np.asarray(counts, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    return (
        gammaln(alpha.sum())
        - gammaln(alpha).sum()
        + gammaln(alpha + counts).sum()
        - gammaln(alpha.sum() + counts.sum())
    )


def _transition_counts(path):
    n00 = n01 = n10 = n11 = 0
    for a, b in zip(path[:-1], path[1:]):
        if a == 0 and b == 0:
            n00 += 1
        elif a == 0:
            n01 += 1
        elif b == 0:
            n10 += 1
        else:
            n11 += 1
    return n00, n01, n10, n11


def _stationary_chain_log_integral(counts, first_is_null, prior, cache):
    """log of E over the two Dirichlet rows of q_{s_1}(Pi) * prod pi^counts,
    where q is the stationary law of Pi.  Adaptive 2D quadrature over
    (pi01, pi10); smooth except at the origin corner, which has measure zero.
    """
    key = (counts, first_is_null)
    if key in cache:
        return cache[key]
    n00, n01, n10, n11 = counts
    a00, a01 = prior.dir_row0
    a10, a11 = prior.dir_row1
    log_norm = (
        gammaln(a00 + a01)
        - gammaln(a00)
        - gammaln(a01)
        + gammaln(a10 + a11)
        - gammaln(a10)
        - gammaln(a11)
    )

    def integrand(v, u):  # u = pi01, v = pi10
        q1 = u / (u + v)
        q = (1.0 - q1) if first_is_null else q1
        return (
            q
            * u ** (n01 + a01 - 1.0)
            * (1.0 - u) ** (n00 + a00 - 1.0)
            * v ** (n10 + a10 - 1.0)
            * (1.0 - v) ** (n11 + a11 - 1.0)
        )

    val, _ = dblquad(integrand, 0.0, 1.0, 0.0, 1.0, epsabs=1e-13, epsrel=1e-11)
    out = log_norm + np.log(val)
    cache[key] = out
    return out


def exact_log_evidence(data, null: NullDensity, m, prior, init="stationary", init_law=None):
    """Exact marginal likelihood log P(X | m) of the full Bayesian model by
    enumeration over hidden paths with conjugate integrals in closed form.

    init="stationary" uses the model's own initial law q(Pi) (2D quadrature
    per transition-count signature); init="fixed" takes a fixed state-0/1
    initial law ``init_law=(nu0, nu1)`` and is fully closed form, matching
    the model the VBEM fit actually bounds.
    """
    x = np.asarray(data, dtype=float)
    n = x.size
    k = m + 1
    if k**n > MAX_ENUM_PATHS:
        raise ValueError("instance too large for path enumeration")
    if init == "fixed":
        if init_law is None:
            raise ValueError("init_law required for fixed-init evidence")
        log_nu = np.log(np.asarray(init_law, dtype=float))
    elif init != "stationary":
        raise ValueError("init must be 'stationary' or 'fixed'")

    null_lp = null.logpdf(x)
    cache: dict = {}
    terms = []
    for path in itertools.product(range(k), repeat=n):
        z = np.array(path, dtype=int)
        counts = _transition_counts(path)
        comp_counts = np.zeros(m)
        for a, b in zip(path[:-1], path[1:]):
            if b >= 1:
                comp_counts[b - 1] += 1
        if path[0] >= 1:
            comp_counts[path[0] - 1] += 1

        log_term = null_lp[z == 0].sum()
        log_term += normal_gamma_log_evidence(
            [x[z == kk] for kk in range(1, k)],
            prior.gamma_shape,
            prior.gamma_rate,
            prior.ng_mean,
            prior.ng_scale,
        )
        log_term += _dirichlet_multinomial_log(comp_counts, prior.dir_props)
        if init == "fixed":
            log_term += log_nu[0] if path[0] == 0 else log_nu[1]
            log_term += _dirichlet_multinomial_log(
                [counts[0], counts[1]], prior.dir_row0
            )
            log_term += _dirichlet_multinomial_log(
                [counts[2], counts[3]], prior.dir_row1
            )
        else:
            log_term += _stationary_chain_log_integral(
                counts, path[0] == 0, prior, cache
            )
        terms.append(log_term)
    return float(logsumexp(terms))
