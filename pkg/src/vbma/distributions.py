"""Conjugate-family log-densities, expectations and KL divergences.

Everything here is elementary Dirichlet / Gamma / Normal bookkeeping shared
by the inference and weight modules.  Densities accept vectorized inputs on
the leading axis where noted.
"""

import numpy as np
from scipy.special import digamma, gammaln

LOG_TWO_PI = np.log(2.0 * np.pi)


def dirichlet_expected_log(alpha):
    """E[log x_i] under Dirichlet(alpha), via digamma differences."""
    alpha = np.asarray(alpha, dtype=float)
    return digamma(alpha) - digamma(alpha.sum())


def dirichlet_logpdf(x, alpha):
    """Dirichlet log-density.  ``x`` may be (..., K); returns (...)."""
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size == 1:
        # degenerate one-category simplex: a single point of mass one
        return np.zeros(x.shape[:-1])
    norm = gammaln(alpha.sum()) - gammaln(alpha).sum()
    return norm + np.sum((alpha - 1.0) * np.log(x), axis=-1)


def dirichlet_kl(alpha_q, alpha_p):
    """KL(Dir(alpha_q) || Dir(alpha_p)) for matching dimension."""
    aq = np.asarray(alpha_q, dtype=float)
    ap = np.asarray(alpha_p, dtype=float)
    a0q, a0p = aq.sum(), ap.sum()
    return (
        gammaln(a0q)
        - gammaln(aq).sum()
        - gammaln(a0p)
        + gammaln(ap).sum()
        + np.sum((aq - ap) * (digamma(aq) - digamma(a0q)))
    )


def gamma_logpdf(x, shape, rate):
    """Gamma log-density in the shape/rate parameterization."""
    x = np.asarray(x, dtype=float)
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def gamma_kl(shape_q, rate_q, shape_p, rate_p):
    """KL(Gamma(shape_q, rate_q) || Gamma(shape_p, rate_p))."""
    return (
        (shape_q - shape_p) * digamma(shape_q)
        - gammaln(shape_q)
        + gammaln(shape_p)
        + shape_p * (np.log(rate_q) - np.log(rate_p))
        + shape_q * (rate_p - rate_q) / rate_q
    )


def normal_logpdf(x, mean, var):
    """Gaussian log-density with variance parameterization."""
    x = np.asarray(x, dtype=float)
    return -0.5 * (LOG_TWO_PI + np.log(var) + (x - mean) ** 2 / var)
