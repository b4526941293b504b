import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

import ifbeam.quantization as qz
from ifbeam.quantization import (Codebook, ConvergenceError, RatePdfParams, cached_codebook,
                                 dequantize, exchange_bits_per_bs, quantize, rate_cdf, rate_pdf,
                                 rate_ppf, train_lloyd_max)


def quad(f, a, b):
    return integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=400)[0]


def mse_by_quadrature(cb):
    p = cb.params
    total = 0.0
    for k, (a, b) in enumerate(zip(cb.edges[:-1], cb.edges[1:])):
        total += quad(lambda t: (t - cb.levels[k]) ** 2 * rate_pdf(t, p), a, b)
    return total


def centroid_errors(cb):
    p = cb.params
    out = []
    for k, (a, b) in enumerate(zip(cb.edges[:-1], cb.edges[1:])):
        m0 = quad(lambda t: rate_pdf(t, p), a, b)
        m1 = quad(lambda t: t * rate_pdf(t, p), a, b)
        out.append(abs(m1 / m0 - cb.levels[k]) / max(1.0, abs(cb.levels[k])))
    return out


@pytest.mark.parametrize("n_t,alpha,n0", [(4, 4, 1.0), (4, 3, 1.0), (4, 2, 0.1)])
def test_pdf_normalizes(n_t, alpha, n0):
    p = RatePdfParams(n_t, alpha, n0)
    assert quad(lambda t: rate_pdf(t, p), 0, p.t_max) == pytest.approx(1.0, abs=1e-6)


def test_pdf_vanishes_at_zero_when_dof_exceeds_two():
    assert rate_pdf(0.0, RatePdfParams(4, 3, 1.0)) == 0.0
    assert rate_pdf(0.0, RatePdfParams(4, 4, 1.0)) > 0.0


def test_pdf_matches_displayed_closed_form():
    # f(t) = 2^t n0^(d) ln2 (2^t - 1)^(d-1) exp(-n0 (2^t - 1) / 2) / (2^d Gamma(d)), d = n_t - alpha + 1
    from math import gamma, log
    n_t, alpha, n0 = 4, 2, 0.7
    d = n_t - alpha + 1
    for t in (0.3, 1.0, 2.5):
        x = 2 ** t - 1
        ref = 2 ** t * n0 ** d * log(2) * x ** (d - 1) * np.exp(-n0 * x / 2) / (2 ** d * gamma(d))
        assert rate_pdf(t, RatePdfParams(n_t, alpha, n0)) == pytest.approx(ref, rel=1e-12)


def test_cdf_and_ppf_are_consistent():
    p = RatePdfParams(4, 2, 0.5)
    for t in (0.2, 1.0, 3.0):
        assert rate_cdf(t, p) == pytest.approx(quad(lambda s: rate_pdf(s, p), 0, t), abs=1e-10)
        assert rate_ppf(rate_cdf(t, p), p) == pytest.approx(t, rel=1e-9)


def test_pdf_rejects_negative_and_params_validate():
    with pytest.raises(ValueError):
        rate_pdf(-0.1, RatePdfParams(4, 2, 1.0))
    with pytest.raises(ValueError):
        RatePdfParams(4, 5, 1.0)
    with pytest.raises(ValueError):
        RatePdfParams(4, 2, 0.0)


def test_one_bit_codebook_conditions():
    p = RatePdfParams(4, 3, 1.0)
    cb = train_lloyd_max(p, 1)
    (b,) = cb.boundaries
    lo = quad(lambda t: t * rate_pdf(t, p), 0, b) / quad(lambda t: rate_pdf(t, p), 0, b)
    hi = quad(lambda t: t * rate_pdf(t, p), b, p.t_max) / quad(lambda t: rate_pdf(t, p), b, p.t_max)
    assert cb.levels == pytest.approx([lo, hi], rel=1e-9)
    assert b == pytest.approx(0.5 * (lo + hi), rel=1e-12)


@pytest.mark.parametrize("params", [RatePdfParams(4, 4, 1.0), RatePdfParams(4, 2, 0.1),
                                    RatePdfParams(4, 1, 10.0), RatePdfParams(8, 6, 0.01)])
@pytest.mark.parametrize("n_f", [2, 3, 5])
def test_lloyd_max_fixed_point(params, n_f):
    cb = train_lloyd_max(params, n_f)
    assert max(centroid_errors(cb)) <= 1e-6
    mids = 0.5 * (cb.levels[:-1] + cb.levels[1:])
    assert np.allclose(cb.boundaries, mids, rtol=1e-12, atol=0)
    assert cb.iterations < qz.MAX_ITERATIONS


def test_large_codebooks_converge():
    for n_f in (8, 12):
        cb = train_lloyd_max(RatePdfParams(4, 3, 1.0), n_f)
        assert len(cb.levels) == 2 ** n_f


def test_mse_strictly_decreasing_in_bits():
    p = RatePdfParams(4, 3, 1.0)
    mse = [mse_by_quadrature(train_lloyd_max(p, n)) for n in (2, 3, 4, 5)]
    assert all(b < a for a, b in zip(mse, mse[1:]))


@pytest.mark.parametrize("n_f", [2, 3, 4])
def test_beats_uniform_quantizer(n_f):
    p = RatePdfParams(4, 3, 1.0)
    cb = train_lloyd_max(p, n_f)
    lo, hi = rate_ppf(0.0005, p), rate_ppf(0.9995, p)
    n = 2 ** n_f
    step = (hi - lo) / n
    levels = lo + step * (np.arange(n) + 0.5)
    bounds = 0.5 * (levels[:-1] + levels[1:])
    uniform = Codebook(levels, bounds, n_f, p)
    assert mse_by_quadrature(cb) <= mse_by_quadrature(uniform)


def test_quantize_round_trip_and_tails():
    cb = train_lloyd_max(RatePdfParams(4, 2, 1.0), 3)
    for k, level in enumerate(cb.levels):
        assert quantize(level, cb) == k
        assert dequantize(k, cb) == level
    assert quantize(0.0, cb) == 0
    assert quantize(cb.boundaries[0] * 0.5, cb) == 0
    assert quantize(1e3, cb) == 7
    with pytest.raises(ValueError):
        quantize(-1.0, cb)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 50), st.floats(0, 50))
def test_quantize_is_monotone(a, b):
    cb = cached_codebook(4, 3, 1.0, 4)
    lo, hi = min(a, b), max(a, b)
    assert quantize(lo, cb) <= quantize(hi, cb)
    # nearest level
    k = quantize(hi, cb)
    assert abs(cb.levels[k] - hi) <= np.min(np.abs(cb.levels - hi)) + 1e-12


def test_empirical_mse_matches_quadrature():
    p = RatePdfParams(4, 3, 1.0)
    cb = train_lloyd_max(p, 3)
    rng = np.random.default_rng(0)
    g = rng.chisquare(p.dof, 100_000)
    r = np.log2(1 + g / p.n0)
    err = np.mean((dequantize(quantize(r, cb), cb) - r) ** 2)
    assert err == pytest.approx(mse_by_quadrature(cb), rel=0.05)


def test_exchange_bits():
    assert exchange_bits_per_bs(21, 2) == 42
    assert exchange_bits_per_bs(1, 1) == 1
    assert exchange_bits_per_bs(7, 5) == 35
    with pytest.raises(ValueError):
        exchange_bits_per_bs(0, 3)


def test_codebook_json_round_trip_and_validation():
    cb = train_lloyd_max(RatePdfParams(4, 2, 0.5), 2)
    back = Codebook.from_json(cb.to_json())
    assert np.array_equal(back.levels, cb.levels) and np.array_equal(back.boundaries, cb.boundaries)
    assert back.params == cb.params
    bad = json.loads(cb.to_json())
    bad["schema"] = "x"
    with pytest.raises(ValueError):
        Codebook.from_json(json.dumps(bad))
    p = cb.params
    with pytest.raises(ValueError):
        Codebook([1.0, 2.0], [3.0], 1, p)  # boundary outside the levels
    with pytest.raises(ValueError):
        Codebook([2.0, 1.0], [1.5], 1, p)
    with pytest.raises(ValueError):
        Codebook([1.0, 2.0, 3.0], [1.5], 1, p)


def test_training_reports_non_convergence(monkeypatch):
    monkeypatch.setattr(qz, "MAX_ITERATIONS", 2)
    with pytest.raises(ConvergenceError):
        train_lloyd_max(RatePdfParams(4, 2, 1.0), 4)
    with pytest.raises(ValueError):
        train_lloyd_max(RatePdfParams(4, 2, 1.0), 13)


def test_codebook_cache_returns_same_object():
    assert cached_codebook(4, 2, 1.0, 3) is cached_codebook(4, 2, 1.0, 3)
