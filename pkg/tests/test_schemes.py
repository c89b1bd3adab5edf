from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from qtarrow.qmath import PureQubitState
from qtarrow.schemes import (
    DRAWS_PER_STEP,
    GaussianPolyDensity,
    SchemeKind,
    _sample_from_uniforms,
    dispersive,
    heterodyne,
    homodyne,
    kraus_backward,
    kraus_det_log,
    kraus_forward,
    rabi_unitary,
    readout_log_pdf,
    readout_pdf,
    sample_readout,
    two_outcome,
)

TAU = 1.0
DT = 0.01


def _schemes():
    return [
        two_outcome(k=0.3),
        dispersive(tau=TAU, dt=DT),
        homodyne(gamma=1.0, dt=DT),
        heterodyne(gamma=1.0, dt=DT),
    ]


def _random_states(rng, n):
    out = []
    for _ in range(n):
        a = rng.standard_normal(4)
        out.append(PureQubitState.normalized(complex(a[0], a[1]), complex(a[2], a[3])))
    return out


def _random_readout(scheme, rng):
    if scheme.kind is SchemeKind.TWO_OUTCOME:
        return int(rng.choice([-1, 1]))
    if scheme.kind is SchemeKind.HETERODYNE:
        return complex(rng.normal(), rng.normal())
    return float(rng.normal(scale=2.0))


# --------------------------------------------------------------------------
# explicit-matrix oracles: the Kraus families written out directly


def _explicit_kraus(scheme, r):
    if scheme.kind is SchemeKind.TWO_OUTCOME:
        k = scheme.k
        d = (math.sqrt(1 - k), math.sqrt(k)) if r > 0 else (math.sqrt(k), math.sqrt(1 - k))
        return np.diag(d).astype(complex)
    if scheme.kind is SchemeKind.DISPERSIVE:
        pref = (scheme.dt / (2 * math.pi * scheme.tau)) ** 0.25
        q = scheme.dt / (4 * scheme.tau)
        return pref * np.diag(
            [math.exp(-q * (r - 1) ** 2), math.exp(-q * (r + 1) ** 2)]
        ).astype(complex)
    if scheme.kind is SchemeKind.HOMODYNE:
        eps = scheme.eps
        pref = math.exp(-r * r / 2) / math.pi**0.25
        return pref * np.array(
            [[math.sqrt(1 - eps / 2), 0.0], [math.sqrt(eps) * r, 1.0]], dtype=complex
        )
    eps = scheme.eps
    pref = math.exp(-abs(r) ** 2 / 2) / math.sqrt(math.pi)
    return pref * np.array(
        [[math.sqrt(1 - eps), 0.0], [math.sqrt(eps) * np.conj(r), 1.0]], dtype=complex
    )


def test_kraus_forward_matches_explicit_matrices():
    rng = np.random.default_rng(42)
    for scheme in _schemes():
        for _ in range(25):
            r = _random_readout(scheme, rng)
            got = kraus_forward(scheme, r).to_matrix()
            assert np.allclose(got, _explicit_kraus(scheme, r), rtol=1e-13, atol=1e-300)


def test_two_outcome_kraus_values():
    m = kraus_forward(two_outcome(k=0.25), 1).to_matrix()
    assert np.allclose(m, np.diag([math.sqrt(0.75), 0.5]))
    m = kraus_forward(two_outcome(k=0.25), -1).to_matrix()
    assert np.allclose(m, np.diag([0.5, math.sqrt(0.75)]))


def test_dispersive_zero_readout_is_proportional_to_identity():
    m = kraus_forward(dispersive(tau=TAU, dt=DT), 0.0).to_matrix()
    assert m[0, 0] == pytest.approx(m[1, 1], rel=1e-14)
    assert m[0, 1] == 0 and m[1, 0] == 0


def test_kraus_prefactor_lives_in_log_scale():
    # far-tail readout: the represented matrix underflows, the parts do not
    op = kraus_forward(dispersive(tau=TAU, dt=1.0), 60.0)
    assert np.max(np.abs(op.mat)) == pytest.approx(1.0, abs=1e-12)
    assert op.log_scale < -700
    op = kraus_forward(homodyne(gamma=1.0, dt=DT), -42.0)
    assert op.log_scale < -800
    assert np.all(np.isfinite(op.mat))


# --------------------------------------------------------------------------
# backward operators


def test_backward_forward_product_is_det_times_identity():
    rng = np.random.default_rng(19)
    for scheme in _schemes():
        for _ in range(25):
            r = _random_readout(scheme, rng)
            fwd = kraus_forward(scheme, r)
            bwd = kraus_backward(scheme, r)
            prod = bwd.mat @ fwd.mat
            off = max(abs(prod[0, 1]), abs(prod[1, 0]))
            assert off < 1e-13
            assert prod[0, 0] == pytest.approx(prod[1, 1], rel=1e-12)
            # and the diagonal is the determinant of the matrix part
            det = fwd.mat[0, 0] * fwd.mat[1, 1] - fwd.mat[0, 1] * fwd.mat[1, 0]
            assert prod[0, 0] == pytest.approx(det, rel=1e-12)


def test_backward_equals_forward_at_flipped_readout_for_diagonal_families():
    for scheme in (two_outcome(k=0.2), dispersive(tau=TAU, dt=DT)):
        for r in (1, -1) if scheme.kind is SchemeKind.TWO_OUTCOME else (0.7, -2.3):
            bwd = kraus_backward(scheme, r).to_matrix()
            fwd_flip = kraus_forward(scheme, -r).to_matrix()
            assert np.allclose(bwd, fwd_flip, rtol=1e-13)


def test_heterodyne_backward_matrix():
    scheme = heterodyne(gamma=1.0, dt=0.25)
    eps = scheme.eps
    r = 0.4 - 0.9j
    got = kraus_backward(scheme, r).to_matrix()
    pref = math.exp(-abs(r) ** 2 / 2) / math.sqrt(math.pi)
    want = pref * np.array(
        [[1.0, 0.0], [-math.sqrt(eps) * np.conj(r), math.sqrt(1 - eps)]], dtype=complex
    )
    assert np.allclose(got, want, rtol=1e-13)


def test_kraus_det_log_matches_matrix_determinant():
    rng = np.random.default_rng(4)
    for scheme in _schemes():
        for _ in range(10):
            r = _random_readout(scheme, rng)
            m = _explicit_kraus(scheme, r)
            want = math.log(abs(np.linalg.det(m)))
            assert float(kraus_det_log(scheme, r)) == pytest.approx(want, rel=1e-12)


# --------------------------------------------------------------------------
# drive unitary


def test_rabi_unitary_special_angles():
    assert np.allclose(rabi_unitary(0.0, DT).to_matrix(), np.eye(2))
    u = rabi_unitary(math.pi / DT, DT).to_matrix()  # omega*dt = pi
    assert np.allclose(u, np.array([[0.0, -1.0], [1.0, 0.0]]), atol=1e-15)


def test_rabi_unitary_is_unitary():
    for wdt in (0.01, 0.5, 1.0, math.pi / 2, 2.9):
        u = rabi_unitary(wdt / DT, DT).to_matrix()
        assert np.max(np.abs(u.conj().T @ u - np.eye(2))) < 1e-14


def test_rabi_rotates_bloch_vector_about_y():
    u = rabi_unitary(0.3 / DT, DT).to_matrix()
    s = PureQubitState.excited().spinor()
    rotated = PureQubitState.normalized(*(u @ s))
    x, y, z = rotated.bloch()
    assert z == pytest.approx(math.cos(0.3), abs=1e-12)
    assert x == pytest.approx(math.sin(0.3), abs=1e-12)
    assert y == pytest.approx(0.0, abs=1e-14)


# --------------------------------------------------------------------------
# readout densities


def test_readout_pdf_matches_trace_oracle():
    rng = np.random.default_rng(8)
    for scheme in _schemes():
        for state in _random_states(rng, 5):
            psi = state.spinor()
            for _ in range(5):
                r = _random_readout(scheme, rng)
                m = _explicit_kraus(scheme, r)
                want = float(np.linalg.norm(m @ psi) ** 2)
                assert float(readout_pdf(scheme, state, r)) == pytest.approx(want, rel=1e-12)


def test_two_outcome_mass_examples():
    scheme = two_outcome(k=0.2)
    assert float(readout_pdf(scheme, PureQubitState.excited(), 1)) == pytest.approx(0.8)
    assert float(readout_pdf(scheme, PureQubitState.excited(), -1)) == pytest.approx(0.2)
    # non-informative point: both outcomes equally likely from any state
    rng = np.random.default_rng(1)
    for state in _random_states(rng, 5):
        assert float(readout_pdf(two_outcome(k=0.5), state, 1)) == pytest.approx(0.5)


def test_homodyne_pdf_plus_x_frozen_value():
    # (e^{-r^2}/sqrt(pi)) * (1 - eps/4 + sqrt(eps) r + eps r^2/2) at eps=.3, r=.7
    scheme = homodyne(gamma=30.0, dt=0.01)
    got = float(readout_pdf(scheme, PureQubitState.plus_x(), 0.7))
    assert got == pytest.approx(0.47763836612904187, rel=1e-14)


def test_dispersive_pdf_is_two_gaussian_mixture():
    scheme = dispersive(tau=TAU, dt=DT)
    state = PureQubitState.from_bloch(0.6, 0.0, 0.8)
    pe = 0.5 * (1 + 0.8)
    sig2 = TAU / DT
    rs = np.linspace(-40, 40, 9)
    want = (
        pe * np.exp(-((rs - 1) ** 2) / (2 * sig2))
        + (1 - pe) * np.exp(-((rs + 1) ** 2) / (2 * sig2))
    ) / math.sqrt(2 * math.pi * sig2)
    assert np.allclose(readout_pdf(scheme, state, rs), want, rtol=1e-12)


def _gh_grid(n, scale=1.0):
    x, w = np.polynomial.hermite.hermgauss(n)
    # returns nodes r and weights for integrating f(r) dr when f carries
    # an exp(-(scale*r)^2) factor
    return x / scale, w * np.exp(x * x) / scale


def test_pdf_normalization_by_quadrature():
    rng = np.random.default_rng(77)
    for scheme in _schemes():
        states = _random_states(rng, 100)
        if scheme.kind is SchemeKind.TWO_OUTCOME:
            for st in states:
                tot = float(readout_pdf(scheme, st, 1) + readout_pdf(scheme, st, -1))
                assert tot == pytest.approx(1.0, abs=1e-12)
            continue
        if scheme.kind is SchemeKind.DISPERSIVE:
            r, w = _gh_grid(96, scale=math.sqrt(scheme.dt / (2 * scheme.tau)))
        else:
            r, w = _gh_grid(96)
        if scheme.kind is SchemeKind.HETERODYNE:
            ii, qq = np.meshgrid(r, r)
            grid = (ii - 1j * qq).ravel()
            ww = np.outer(w, w).ravel()
        else:
            grid, ww = r, w
        for st in states:
            total = float(np.sum(readout_pdf(scheme, st, grid) * ww))
            assert total == pytest.approx(1.0, abs=1e-8)


def test_povm_completeness_by_quadrature():
    for scheme in _schemes():
        if scheme.kind is SchemeKind.TWO_OUTCOME:
            total = sum(
                kraus_forward(scheme, r).to_matrix().conj().T
                @ kraus_forward(scheme, r).to_matrix()
                for r in (1, -1)
            )
            assert np.max(np.abs(total - np.eye(2))) < 1e-15
            continue
        if scheme.kind is SchemeKind.DISPERSIVE:
            r, w = _gh_grid(96, scale=math.sqrt(scheme.dt / (2 * scheme.tau)))
        else:
            r, w = _gh_grid(96)
        if scheme.kind is SchemeKind.HETERODYNE:
            ii, qq = np.meshgrid(r, r)
            readouts = (ii - 1j * qq).ravel()
            ww = np.outer(w, w).ravel()
        else:
            readouts, ww = r, w
        total = np.zeros((2, 2), dtype=complex)
        for rr, weight in zip(readouts, ww):
            m = kraus_forward(scheme, rr).to_matrix()
            total += weight * (m.conj().T @ m)
        assert np.max(np.abs(total - np.eye(2))) < 1e-8


def test_readout_log_pdf_handles_far_tails():
    scheme = dispersive(tau=TAU, dt=1.0)
    st = PureQubitState.plus_x()
    lp = float(readout_log_pdf(scheme, st, 80.0))
    assert math.isfinite(lp) and lp < -3000
    assert float(readout_pdf(scheme, st, 80.0)) == 0.0  # underflows as a density


# --------------------------------------------------------------------------
# quadratic-Gaussian density family


def test_gaussian_poly_cdf_matches_numeric_integral():
    from scipy.integrate import quad

    rng = np.random.default_rng(5)
    for _ in range(20):
        a = rng.uniform(0.0, 2.0)
        g = rng.uniform(0.0, 2.0)
        bmax = 2 * math.sqrt(a * g)
        b = rng.uniform(-bmax, bmax)
        if a + g / 2 <= 0:
            continue
        dens = GaussianPolyDensity(a, b, g)
        for t in (-2.5, -0.3, 0.0, 0.9, 3.1):
            want, _ = quad(lambda x: float(dens.pdf(x)), -12.0, t)
            assert float(dens.cdf(t)) == pytest.approx(want, abs=1e-10)


def test_gaussian_poly_ppf_inverts_cdf():
    dens = GaussianPolyDensity(0.4, -0.5, 0.9)
    u = np.linspace(1e-9, 1 - 1e-9, 1001)
    t = dens.ppf(u)
    assert np.max(np.abs(dens.cdf(t) - u)) < 1e-12
    assert np.all(np.diff(t) > 0)


def test_gaussian_poly_rejects_negative_polynomial():
    with pytest.raises(ValueError):
        GaussianPolyDensity(0.1, 5.0, 0.1)


# --------------------------------------------------------------------------
# exact sampling


def _bin_masses(pdf, edges, order=64):
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1][:, None], edges[1:][:, None]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return np.sum(pdf(mid + half * x[None, :]) * half * w[None, :], axis=1)


def _chi2_pvalue(samples, pdf, bins=50):
    qlo, qhi = np.quantile(samples, [0.001, 0.999])
    edges = np.linspace(qlo, qhi, bins - 1)
    counts, _ = np.histogram(samples, bins=edges)
    inner = _bin_masses(pdf, edges)
    lo_tail = _bin_masses(pdf, np.array([qlo - 30.0, qlo]))[0]
    hi_tail = _bin_masses(pdf, np.array([qhi, qhi + 30.0]))[0]
    obs = np.concatenate([[np.sum(samples < qlo)], counts, [np.sum(samples > qhi)]])
    exp = np.concatenate([[lo_tail], inner, [hi_tail]]) * samples.size
    keep = exp > 5.0
    stat = float(np.sum((obs[keep] - exp[keep]) ** 2 / exp[keep]))
    return stats.chi2.sf(stat, np.count_nonzero(keep) - 1)


def _bulk_samples(scheme, state, n, rng):
    bx, by, bz = state.bloch()
    pe, pg = 0.5 * (1 + bz), 0.5 * (1 - bz)
    u = rng.random((n, DRAWS_PER_STEP[scheme.kind]))
    return _sample_from_uniforms(scheme, pe, pg, bx, by, u)


def test_sampler_chi_square_against_pdf():
    rng = np.random.default_rng(2024)
    n = 100_000
    for scheme in _schemes():
        for state in _random_states(rng, 10):
            samples = _bulk_samples(scheme, state, n, rng)
            if scheme.kind is SchemeKind.TWO_OUTCOME:
                p_plus = float(readout_pdf(scheme, state, 1))
                n_plus = int(np.sum(samples > 0))
                p = stats.binomtest(n_plus, n, p_plus).pvalue
                assert p > 0.001
                continue
            if scheme.kind is SchemeKind.HETERODYNE:
                # both quadrature marginals, coefficients derived independently
                eps = scheme.eps
                bx, by, bz = state.bloch()
                pe, pg = 0.5 * (1 + bz), 0.5 * (1 - bz)
                base = (1 - eps) * pe + pg + 0.5 * eps * pe
                for comp, beta in ((samples.real, math.sqrt(eps) * bx), (-samples.imag, math.sqrt(eps) * by)):
                    marg = GaussianPolyDensity(base, beta, eps * pe)
                    p = _chi2_pvalue(comp, lambda t, d=marg: np.asarray(d.pdf(t), float))
                    assert p > 0.001
                continue
            p = _chi2_pvalue(np.asarray(samples, float), lambda t: np.asarray(readout_pdf(scheme, state, t), float))
            assert p > 0.001


def test_heterodyne_marginal_matches_2d_pdf():
    # integrate the full two-quadrature pdf over Q and compare with the
    # closed marginal used by the sampler tests
    scheme = heterodyne(gamma=1.0, dt=0.3)
    state = PureQubitState.from_bloch(0.48, -0.6, 0.64)
    eps = scheme.eps
    bx, by, bz = state.bloch()
    pe, pg = 0.5 * (1 + bz), 0.5 * (1 - bz)
    qs, wq = _gh_grid(96)
    for ii in (-1.3, 0.0, 0.8):
        dens2d = readout_pdf(scheme, state, ii - 1j * qs)
        got = float(np.sum(dens2d * wq))
        base = (1 - eps) * pe + pg + 0.5 * eps * pe
        marg = GaussianPolyDensity(base, math.sqrt(eps) * bx, eps * pe)
        assert got == pytest.approx(float(marg.pdf(ii)), rel=1e-10)


def test_dispersive_sample_moments():
    scheme = dispersive(tau=TAU, dt=DT)
    state = PureQubitState.from_bloch(math.sqrt(1 - 0.3**2), 0.0, 0.3)
    rng = np.random.default_rng(9)
    samples = np.asarray(_bulk_samples(scheme, state, 200_000, rng), float)
    want_mean = 0.3
    want_var = TAU / DT + (1 - 0.3**2)
    assert samples.mean() == pytest.approx(want_mean, abs=3 * math.sqrt(want_var / samples.size) + 1e-12)
    assert samples.var() == pytest.approx(want_var, rel=0.01)


def test_homodyne_kolmogorov_smirnov():
    scheme = homodyne(gamma=1.0, dt=0.5)  # strong step so the tilt is visible
    state = PureQubitState.from_bloch(0.8, 0.0, 0.6)
    bx, by, bz = state.bloch()
    pe, pg = 0.5 * (1 + bz), 0.5 * (1 - bz)
    eps = scheme.eps
    dens = GaussianPolyDensity((1 - eps / 2) * pe + pg, math.sqrt(eps) * bx, eps * pe)
    rng = np.random.default_rng(31)
    samples = np.asarray(_bulk_samples(scheme, state, 1_000_000, rng), float)
    ks = stats.kstest(samples, lambda t: np.asarray(dens.cdf(t), float)).statistic
    assert ks < 0.002


def test_two_outcome_k0_is_projective():
    scheme = two_outcome(k=0.0)
    rng = np.random.default_rng(6)
    for _ in range(100):
        assert sample_readout(scheme, PureQubitState.excited(), rng) == 1


def test_sample_readout_consumes_fixed_draws():
    # scalar sampling advances the stream by exactly DRAWS_PER_STEP values
    state = PureQubitState.from_bloch(0.6, 0.48, 0.64)
    for scheme in _schemes():
        k = DRAWS_PER_STEP[scheme.kind]
        g1 = np.random.default_rng(123)
        g2 = np.random.default_rng(123)
        sample_readout(scheme, state, g1)
        g2.random(k)
        assert g1.random() == g2.random()


# --------------------------------------------------------------------------
# construction errors


def test_scheme_validation():
    with pytest.raises(ValueError):
        two_outcome(k=0.6)
    with pytest.raises(ValueError):
        two_outcome(k=-0.1)
    with pytest.raises(ValueError):
        dispersive(tau=-1.0)
    with pytest.raises(ValueError):
        dispersive(tau=1.0, dt=0.0)
    with pytest.raises(ValueError):
        homodyne(gamma=1.0, dt=1.0)  # eps = 1 not allowed
    with pytest.raises(ValueError):
        heterodyne(gamma=-2.0, dt=0.1)


def test_readout_tag_validation():
    with pytest.raises(ValueError):
        kraus_forward(two_outcome(k=0.2), 0.5)
    with pytest.raises(ValueError):
        kraus_forward(dispersive(tau=1.0, dt=0.01), 1.0 + 2.0j)
    with pytest.raises(ValueError):
        readout_pdf(two_outcome(k=0.2), PureQubitState.excited(), 2.0)
    # heterodyne accepts anything coercible to complex
    kraus_forward(heterodyne(gamma=1.0, dt=0.01), 1.5)
