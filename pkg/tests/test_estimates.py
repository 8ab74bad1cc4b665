import mpmath
import numpy as np
import pytest
from scalesde.core.configuration import Configuration
from scalesde.core.configuration import build_neighbors
from scalesde.core.dynamics import ProcessEnsemble
from scalesde.core.dynamics import TimeGrid
from scalesde.core.dynamics import euler_maruyama
from scalesde.core.dynamics import generate_noise
from scalesde.core.estimates import ContractionConstants
from scalesde.core.estimates import E_series
from scalesde.core.estimates import a_T
from scalesde.core.estimates import a_p
from scalesde.core.estimates import bound_table
from scalesde.core.estimates import cauchy_tail_bound
from scalesde.core.estimates import growth_bound
from scalesde.core.estimates import hat_L
from scalesde.core.estimates import kolmogorov_constant
from scalesde.core.estimates import kolmogorov_fit
from scalesde.core.estimates import picard_bound
from scalesde.core.estimates import series_table
from scalesde.core.interactions import InteractionFamily
from scalesde.core.scale import WeightedSpinVector
from scalesde.utils import HypothesisError
from scalesde.utils import SeriesDivergenceError

mpmath.mp.dps = 40


def mp_picard_bound(n, p, q, delta, L, T):
    n, p, q = mpmath.mpf(n), mpmath.mpf(p), mpmath.mpf(q)
    hat = (T ** (p - 1) + (p / 2 * (p - 1)) ** p * T ** (p / 2 - 1)) * 2 ** (p - 1) * L ** p
    inner = n ** (n * p / q) / mpmath.factorial(n) * (hat * T / mpmath.mpf(delta) ** (p / q)) ** n
    return inner ** (1 / p)


# closed-form constants at p = 2
def test_estimates_constants_p2():
    assert hat_L(2, 1, 1) == 4.0
    assert a_p(2) == 4.0
    assert a_T(2, 1, 1) == 4.0
    assert a_T(2, 1, 0.25) == 2.0


# a(T) dominates (hat_L T)^(1/p)
def test_estimates_a_T_dominates():
    for p in (2.0, 3.0, 4.5):
        for T in (0.01, 0.1, 0.5, 1.0, 2.0, 10.0):
            assert (hat_L(p, 1.3, T) * T) ** (1 / p) <= a_T(p, 1.3, T)


# constants reject moments below two
def test_estimates_constants_domain():
    with pytest.raises(ValueError):
        hat_L(1.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        a_T(2.0, 1.0, 0.0)


# derived constants of the dataclass
def test_estimates_contraction_constants():
    constants = ContractionConstants(p=2.0, q=4.0, L=1.0, T=1.0)

    assert constants.hat_L == 4.0
    assert constants.a_T == 4.0
    assert constants.theta == 0.25


# exponential special case
def test_estimates_E_series_exponential():
    for t in (0.1, 1.0, 5.0):
        value, _ = E_series(t, 1.0, 0.0, 1.0)

        assert abs(value - np.exp(t)) <= 1e-10 * np.exp(t)


# series agrees with a high precision sum
def test_estimates_E_series_mpmath():
    t, eps, theta, p = 1.5, 0.5, 0.25, 2.0
    expected = 1 + mpmath.fsum(
        mpmath.mpf(t) ** n * mpmath.mpf(eps) ** (-theta * n) * mpmath.mpf(n) ** (theta * n)
        / mpmath.sqrt(mpmath.factorial(n))
        for n in range(1, 2001)
    )
    value, terms = E_series(t, eps, theta, p, tail_tol=1e-14)

    assert value == pytest.approx(float(expected), rel=1e-11)
    assert terms > 0


# series refuses theta >= 1/p
def test_estimates_E_series_divergent():
    with pytest.raises(SeriesDivergenceError):
        E_series(1.0, 1.0, 0.5, 2.0)
    with pytest.raises(SeriesDivergenceError):
        E_series(1.0, 1.0, 0.75, 2.0)


# series at t = 0 is one
def test_estimates_E_series_zero():
    assert E_series(0.0, 0.3, 0.2, 2.0) == (1.0, 0)


# zeroth bound is one
def test_estimates_picard_bound_zero():
    assert picard_bound(0, 2.0, 4.0, 1.0, 1.0, 1.0) == 1.0
    assert picard_bound(0, 2.0, 4.0, 1.0, 0.0, 1.0) == 1.0


# first bound is the root of hat_L T / delta^(p/q)
def test_estimates_picard_bound_first():
    assert picard_bound(1, 2.0, 4.0, 1.0, 1.0, 1.0) == pytest.approx(2.0, rel=1e-14)


# bound agrees with a high precision evaluation
def test_estimates_picard_bound_mpmath():
    for n in (1, 5, 17, 60):
        for p, q in ((2.0, 4.0), (3.0, 5.0)):
            expected = mp_picard_bound(n, p, q, 0.7, 1.2, 0.8)

            assert picard_bound(n, p, q, 0.7, 1.2, 0.8) == pytest.approx(float(expected), rel=1e-10)


# bound decays to zero beyond its peak
def test_estimates_picard_bound_decays():
    values = picard_bound(np.arange(201), 2.0, 4.0, 1.5, 1.0, 1.0)
    peak = int(np.argmax(values))

    assert 0 < peak < 200
    assert np.all(np.diff(values[peak:]) < 0)
    assert values[-1] < 1e-15


# bound needs p < q
def test_estimates_picard_bound_hypothesis():
    with pytest.raises(HypothesisError):
        picard_bound(3, 4.0, 4.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        picard_bound(3, 2.0, 4.0, 0.0, 1.0, 1.0)


# single-term tail equals the picard bound
def test_estimates_cauchy_tail_single_term():
    assert cauchy_tail_bound(6, 6, 2.0, 4.0, 0.5, 1.0, 1.0) == pytest.approx(
        picard_bound(6, 2.0, 4.0, 0.5, 1.0, 1.0), rel=1e-12
    )
    assert cauchy_tail_bound(3, 9, 2.0, 4.0, 0.5, 1.0, 1.0) > cauchy_tail_bound(4, 9, 2.0, 4.0, 0.5, 1.0, 1.0)


# growth bound exceeds the initial norm term
def test_estimates_growth_bound():
    bound = growth_bound(2.0, 4.0, 1.0, 1.0, 1.0, 2.0)

    assert bound >= 9.0
    with pytest.raises(HypothesisError):
        growth_bound(4.0, 3.0, 1.0, 1.0, 1.0, 2.0)


# continuity constant at p = 2
def test_estimates_kolmogorov_constant():
    assert kolmogorov_constant(2.0, 1.0, 1.0, 1.0) == 4.0


# free Brownian site has increment exponent one
def test_estimates_kolmogorov_fit_brownian():
    config = Configuration([[0.0]], 1.0)
    ns = build_neighbors(config, 1.0)
    grid = TimeGrid(1.0, 32)
    noise = generate_noise(config, grid, 512, seed=21)
    ens = euler_maruyama(
        InteractionFamily(J=0.0, r=1.0), InteractionFamily(J=0.0, r=1.0, h=1.0),
        WeightedSpinVector(config, [0.0]), ns, grid, noise,
    )
    fit = kolmogorov_fit(ens, 0.0, 2.0, 256, seed=1)

    assert not fit["degenerate"]
    assert fit["slope"] == pytest.approx(1.0, abs=0.1)
    assert len(fit["table"]) == 256


# constant ensemble is reported as degenerate
def test_estimates_kolmogorov_fit_constant():
    config = Configuration([[0.0], [1.0]], 2.0)
    ens = ProcessEnsemble.constant(WeightedSpinVector(config, [1.0, 2.0]), TimeGrid(1.0, 8), 4)
    fit = kolmogorov_fit(ens, 0.5, 2.0, 100)

    assert fit["degenerate"]
    assert np.isnan(fit["slope"])


# fit needs eight grid times
def test_estimates_kolmogorov_fit_short_grid():
    config = Configuration([[0.0]], 1.0)
    ens = ProcessEnsemble.constant(WeightedSpinVector(config, [1.0]), TimeGrid(1.0, 4), 2)

    with pytest.raises(ValueError):
        kolmogorov_fit(ens, 0.5, 2.0, 100)


# tables keep their column order
def test_estimates_tables():
    bounds = bound_table(range(5), 2.0, 4.0, 1.0, 1.0, 1.0)
    series = series_table([0.1, 1.0], 1.0, 0.25, 2.0)

    assert list(bounds.columns) == ["n", "p", "q", "delta", "L", "T", "bound"]
    assert bounds["bound"].iloc[0] == 1.0
    assert list(series.columns) == ["t", "eps", "theta", "p", "E_value", "terms"]
    assert series["E_value"].is_monotonic_increasing
