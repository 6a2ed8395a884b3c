import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vbma.model import (
    GaussianDensity,
    LabelSequence,
    MixtureAlternative,
    NullDensity,
    TransitionBinary,
    averaged_density_components,
    collapse,
    expand,
    log_emission,
    stationary,
)
from vbma.weights import WeightVector


def test_transition_row_sums_enforced():
    with pytest.raises(ValueError):
        TransitionBinary(0.9, 0.2, 0.5, 0.5)
    with pytest.raises(ValueError):
        TransitionBinary(-0.1, 1.1, 0.5, 0.5)


def test_stationary_closed_form():
    # Pi_u with l=0.6, u=0.2
    assert stationary(TransitionBinary(0.88, 0.12, 0.48, 0.52)) == pytest.approx((0.8, 0.2))
    assert stationary(TransitionBinary(0.5, 0.5, 0.5, 0.5)) == pytest.approx((0.5, 0.5))
    # symmetric high-persistence matrix forces the uniform law
    assert stationary(TransitionBinary(0.96, 0.04, 0.04, 0.96)) == pytest.approx((0.5, 0.5))


def test_stationary_rejects_degenerate_chain():
    with pytest.raises(ValueError):
        stationary(TransitionBinary(1.0, 0.0, 0.0, 1.0))


def test_stationary_is_fixed_point():
    pi = TransitionBinary(0.7, 0.3, 0.2, 0.8)
    q = np.array(stationary(pi))
    np.testing.assert_allclose(q @ pi.matrix(), q, atol=1e-14)


def test_expand_matches_displayed_structure():
    pi = TransitionBinary(0.88, 0.12, 0.48, 0.52)
    alt = MixtureAlternative(2, np.array([-1.0, 1.0]), 1.0, np.array([0.5, 0.5]))
    hmm = expand(pi, alt, NullDensity(0.0, 1.0))
    np.testing.assert_allclose(hmm.omega[0], [0.88, 0.06, 0.06])
    np.testing.assert_allclose(hmm.omega[1], [0.48, 0.26, 0.26])
    np.testing.assert_allclose(hmm.omega[2], [0.48, 0.26, 0.26])


def test_expand_single_component_collapses_to_pi():
    pi = TransitionBinary(0.7, 0.3, 0.4, 0.6)
    alt = MixtureAlternative(1, np.array([2.0]), 1.0, np.array([1.0]))
    hmm = expand(pi, alt, NullDensity(0.0, 1.0))
    np.testing.assert_allclose(hmm.omega, pi.matrix())


@settings(max_examples=100, deadline=None)
@given(
    pi01=st.floats(0.01, 0.99),
    pi10=st.floats(0.01, 0.99),
    raw=st.lists(st.floats(0.05, 1.0), min_size=1, max_size=5),
)
def test_expand_rows_stochastic_and_recoverable(pi01, pi10, raw):
    props = np.array(raw) / np.sum(raw)
    pi = TransitionBinary(1.0 - pi01, pi01, pi10, 1.0 - pi10)
    alt = MixtureAlternative(
        len(props), np.linspace(-1.0, 1.0, len(props)), 2.0, props
    )
    hmm = expand(pi, alt, NullDensity(0.0, 1.0))
    np.testing.assert_allclose(hmm.omega.sum(axis=1), 1.0, atol=1e-12)
    if alt.m >= 2:
        np.testing.assert_allclose(hmm.omega[1:], hmm.omega[1], atol=1e-12)
    pi_back, props_back = collapse(hmm)
    np.testing.assert_allclose(pi_back.matrix(), pi.matrix(), atol=1e-12)
    np.testing.assert_allclose(props_back, props, atol=1e-12)


def test_log_emission_null_at_mean():
    null = NullDensity(2.37, 0.76)
    pi = TransitionBinary(0.9, 0.1, 0.1, 0.9)
    alt = MixtureAlternative(1, np.array([5.0]), 4.0, np.array([1.0]))
    hmm = expand(pi, alt, null)
    expected = np.log(1.0 / (0.76 * np.sqrt(2 * np.pi)))
    assert log_emission(2.37, hmm, 0) == pytest.approx(expected, abs=1e-12)
    # state 1 is the component density: mean 5, variance 1/4
    assert log_emission(4.0, hmm, 1) == pytest.approx(
        GaussianDensity(5.0, 0.5).logpdf(4.0), abs=1e-12
    )
    # unimodal decay away from the mean
    vals = [log_emission(5.0 + d, hmm, 1) for d in (0.0, 0.5, 1.0, 2.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        log_emission(0.0, hmm, 3)


def test_mixture_requires_canonical_order():
    with pytest.raises(ValueError):
        MixtureAlternative(2, np.array([1.0, -1.0]), 1.0, np.array([0.5, 0.5]))
    alt = MixtureAlternative.canonical([1.0, -1.0], 1.0, [0.3, 0.7])
    np.testing.assert_allclose(alt.means, [-1.0, 1.0])
    np.testing.assert_allclose(alt.props, [0.7, 0.3])


def test_label_sequence_alphabet_checked():
    LabelSequence(np.array([0, 1, 2]), 3)
    with pytest.raises(ValueError):
        LabelSequence(np.array([0, 3]), 3)


def _collection(max_m):
    alts = []
    for m in range(1, max_m + 1):
        props = np.full(m, 1.0 / m)
        alts.append(MixtureAlternative(m, np.linspace(-2, 2, m), 1.0, props))
    return alts


def test_averaged_density_component_count():
    # collection {1..6} flattens to 6*7/2 = 21 components
    alts = _collection(6)
    w = WeightVector(np.full(6, 1 / 6), "VB", np.arange(1, 7))
    flat = averaged_density_components(alts, w)
    assert flat.n_components == 21
    assert flat.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_averaged_density_unit_mass_recovers_model():
    alts = _collection(2)
    w = WeightVector(np.array([1.0, 0.0]), "VB", np.array([1, 2]))
    flat = averaged_density_components(alts, w)
    x = np.linspace(-4, 4, 31)
    np.testing.assert_allclose(flat.logpdf(x), alts[0].logpdf(x), atol=1e-10)


def test_averaged_density_duplicate_models_match_single():
    alt = MixtureAlternative(1, np.array([1.5]), 2.0, np.array([1.0]))
    w = WeightVector(np.array([0.5, 0.5]), "VB", np.array([1, 1]))
    flat = averaged_density_components([alt, alt], w)
    x = np.linspace(-2, 4, 17)
    np.testing.assert_allclose(flat.logpdf(x), alt.logpdf(x), atol=1e-12)
    assert flat.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_averaged_density_rejects_mismatched_sizes():
    alts = _collection(2)
    w = WeightVector(np.array([1.0]), "VB", np.array([1]))
    with pytest.raises(ValueError):
        averaged_density_components(alts, w)
