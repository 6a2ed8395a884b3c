"""Probabilistic model structure for the binary chain and its expansion.

A two-state chain (state 0 "normal", state 1 "abnormal") with a known
Gaussian null density and an m-component Gaussian mixture alternative is
re-expressed as an (m+1)-state chain whose transition matrix factorizes as
the binary matrix times the mixture proportions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.special import logsumexp

from .distributions import normal_logpdf

if TYPE_CHECKING:  # pragma: no cover
    from .weights import WeightVector

ATOL = 1e-12
# probabilities are clamped to [PROB_EPS, 1 - PROB_EPS] before logs so that
# degenerate chains never inject -inf into the recursions
PROB_EPS = 1e-12


def clamped_log(p):
    return np.log(np.clip(p, PROB_EPS, 1.0 - PROB_EPS))


@dataclass(frozen=True)
class TransitionBinary:
    """Row-stochastic 2x2 transition matrix of the binary chain."""

    pi00: float
    pi01: float
    pi10: float
    pi11: float

    def __post_init__(self):
        for name in ("pi00", "pi01", "pi10", "pi11"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        if abs(self.pi00 + self.pi01 - 1.0) > ATOL:
            raise ValueError("first row must sum to 1")
        if abs(self.pi10 + self.pi11 - 1.0) > ATOL:
            raise ValueError("second row must sum to 1")

    def matrix(self) -> np.ndarray:
        return np.array([[self.pi00, self.pi01], [self.pi10, self.pi11]])


def stationary(pi: TransitionBinary) -> tuple[float, float]:
    """Stationary law (q0, q1) of the binary chain; q1 = pi01/(pi01+pi10)."""
    denom = pi.pi01 + pi.pi10
    if denom <= 0.0:
        raise ValueError("degenerate chain: stationary distribution not unique")
    q1 = pi.pi01 / denom
    return 1.0 - q1, q1


@dataclass(frozen=True)
class GaussianDensity:
    """Single Gaussian emission density."""

    mean: float
    sd: float

    def __post_init__(self):
        if self.sd <= 0.0:
            raise ValueError("sd must be positive")

    def logpdf(self, x):
        return normal_logpdf(x, self.mean, self.sd**2)


# the null density is fixed to a Gaussian; the alias keeps the role explicit
NullDensity = GaussianDensity


@dataclass(frozen=True)
class MixtureAlternative:
    """Gaussian mixture with shared precision; components in mean order."""

    m: int
    means: np.ndarray
    precision: float
    props: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", _freeze(self.means))
        object.__setattr__(self, "props", _freeze(self.props))
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.means.shape != (self.m,) or self.props.shape != (self.m,):
            raise ValueError("means and props must have length m")
        if self.precision <= 0.0:
            raise ValueError("precision must be positive")
        if np.any(self.props < 0.0):
            raise ValueError("props must be nonnegative")
        if abs(self.props.sum() - 1.0) > ATOL:
            raise ValueError("props must sum to 1")
        if np.any(np.diff(self.means) < 0.0):
            raise ValueError("means must be sorted ascending (canonical order)")

    @classmethod
    def canonical(cls, means, precision, props) -> "MixtureAlternative":
        """Build with components sorted by mean (neutralizes label switching)."""
        means = np.asarray(means, dtype=float)
        props = np.asarray(props, dtype=float)
        order = np.argsort(means, kind="stable")
        return cls(len(means), means[order], float(precision), props[order])

    @property
    def sd(self) -> float:
        return 1.0 / np.sqrt(self.precision)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        comp = normal_logpdf(x[..., None], self.means, 1.0 / self.precision)
        return logsumexp(comp + clamped_log(self.props), axis=-1)


@dataclass(frozen=True)
class ExpandedHMM:
    """(m+1)-state chain; state 0 emits the null, states k >= 1 component k."""

    m: int
    omega: np.ndarray
    emissions: tuple[GaussianDensity, ...]

    def __post_init__(self):
        object.__setattr__(self, "omega", _freeze(self.omega))
        k = self.m + 1
        if self.omega.shape != (k, k):
            raise ValueError("omega must be (m+1) x (m+1)")
        if len(self.emissions) != k:
            raise ValueError("one emission density per state required")
        if np.any(self.omega < 0.0):
            raise ValueError("omega entries must be nonnegative")
        if np.any(np.abs(self.omega.sum(axis=1) - 1.0) > ATOL):
            raise ValueError("omega rows must sum to 1")
        if self.m >= 2 and np.any(np.abs(self.omega[1:] - self.omega[1]) > ATOL):
            raise ValueError("rows 1..m of omega must coincide")


def expand(pi: TransitionBinary, alt: MixtureAlternative, null: NullDensity) -> ExpandedHMM:
    """Expanded transition matrix: row 0 = (pi00, pi01*p), rows k>=1 = (pi10, pi11*p)."""
    k = alt.m + 1
    omega = np.empty((k, k))
    omega[0, 0] = pi.pi00
    omega[0, 1:] = pi.pi01 * alt.props
    omega[1:, 0] = pi.pi10
    omega[1:, 1:] = pi.pi11 * alt.props
    emissions = (null,) + tuple(GaussianDensity(float(mu), alt.sd) for mu in alt.means)
    return ExpandedHMM(alt.m, omega, emissions)


def collapse(hmm: ExpandedHMM) -> tuple[TransitionBinary, np.ndarray]:
    """Recover (Pi, props) from a structured expansion; inverse of `expand`."""
    pi00 = float(hmm.omega[0, 0])
    pi10 = float(hmm.omega[1, 0]) if hmm.m >= 1 else 0.0
    pi01 = 1.0 - pi00
    pi11 = 1.0 - pi10
    if pi01 > PROB_EPS:
        props = hmm.omega[0, 1:] / pi01
    elif pi11 > PROB_EPS:
        props = hmm.omega[1, 1:] / pi11
    else:
        raise ValueError("proportions unidentifiable: no mass enters states 1..m")
    return TransitionBinary(pi00, pi01, pi10, pi11), props


def log_emission(x: float, hmm: ExpandedHMM, state: int):
    """Exact Gaussian log-density of the given state's emission."""
    if not 0 <= state <= hmm.m:
        raise ValueError(f"state must be in 0..{hmm.m}")
    return hmm.emissions[state].logpdf(x)


@dataclass(frozen=True)
class LabelSequence:
    """Hidden-state labels, either binary S or expanded Z."""

    values: np.ndarray
    n_states: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=int)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if values.size and (values.min() < 0 or values.max() >= self.n_states):
            raise ValueError(f"labels must lie in 0..{self.n_states - 1}")

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class AveragedMixture:
    """Flat component list of a weight-averaged collection of mixtures."""

    weights: np.ndarray
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _freeze(self.weights))
        object.__setattr__(self, "means", _freeze(self.means))
        object.__setattr__(self, "sds", _freeze(self.sds))

    @property
    def n_components(self) -> int:
        return self.weights.size

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        comp = normal_logpdf(x[..., None], self.means, self.sds**2)
        return logsumexp(comp + clamped_log(self.weights), axis=-1)


def averaged_density_components(
    alts: Sequence[MixtureAlternative], weights: "WeightVector"
) -> AveragedMixture:
    """Flatten sum_m alpha_m f_m into one component list (weights alpha_m * p_k)."""
    if len(alts) != weights.values.size:
        raise ValueError("one mixture per model required")
    w, mu, sd = [], [], []
    for alt, alpha in zip(alts, weights.values):
        w.append(alpha * alt.props)
        mu.append(alt.means)
        sd.append(np.full(alt.m, alt.sd))
    return AveragedMixture(np.concatenate(w), np.concatenate(mu), np.concatenate(sd))


def _freeze(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.flags.writeable = False
    return out
