import numpy as np
import pytest
from scipy.special import ndtr

from mixadc.likelihood import TargetEstimate, fit_amplitudes, nll, nll_grad
from mixadc.likelihood import _masked_atoms
from mixadc.quantize import AdcConfig, avg_received_power, gen_thresholds, quantize_mixed
from mixadc.signal_model import RadarSystem, Scene, gen_code, simulate


def make_setup(seed=0, m_tx=2, m_rx=4, n_pri=6, delta=(1, 0, 0, 1)):
    rng = np.random.default_rng(seed)
    code = gen_code(m_tx, n_pri, rng)
    sys = RadarSystem(m_tx=m_tx, m_rx=m_rx, d_tx=2.0, d_rx=0.5, n_pri=n_pri, code=code)
    scene = Scene(
        thetas=[0.3, -0.6],
        omegas=[1.2, -0.4],
        amps=[1.0 + 0.2j, 0.5 - 0.5j],
        noise_var=0.3,
    )
    thr = gen_thresholds(m_rx, n_pri, avg_received_power(sys, scene), rng)
    adc = AdcConfig(delta=np.asarray(delta, int), thresholds=thr)
    meas = quantize_mixed(simulate(sys, scene, rng), adc)
    ests = [
        TargetEstimate(0.35, 1.15, 0.9 + 0.3j),
        TargetEstimate(-0.55, -0.45, 0.4 - 0.6j),
    ]
    return sys, scene, adc, meas, ests


def pack(ests, eta):
    k = len(ests)
    return np.array(
        [e.theta for e in ests]
        + [e.omega for e in ests]
        + [e.beta.real for e in ests]
        + [e.beta.imag for e in ests]
        + [eta]
    )


def unpack(v, k):
    return [TargetEstimate(v[j], v[k + j], v[2 * k + j] + 1j * v[3 * k + j]) for j in range(k)], v[-1]


class TestNll:
    def test_no_targets_zero_threshold_all_onebit(self):
        sys, scene, _, _, _ = make_setup()
        adc = AdcConfig(delta=np.zeros(sys.m_rx, int), thresholds=np.zeros((sys.m_rx, sys.n_pri)))
        meas = quantize_mixed(simulate(sys, scene, np.random.default_rng(1)), adc)
        val = nll([], 1.0, meas, sys, adc)
        assert val == pytest.approx(2 * sys.n_pri * sys.m_rx * np.log(2), rel=1e-12)

    def test_all_hp_reduces_to_least_squares_form(self):
        sys, scene, adc0, _, ests = make_setup()
        adc = AdcConfig(delta=np.ones(sys.m_rx, int), thresholds=adc0.thresholds)
        meas = quantize_mixed(simulate(sys, scene, np.random.default_rng(2)), adc)
        eta = 1.7
        a0, _ = _masked_atoms(ests, sys, adc)
        betas = np.array([e.beta for e in ests])
        r = eta * meas.y0 - a0 @ betas
        nl = meas.y0.size
        want = float(np.real(np.vdot(r, r))) - nl * np.log(eta**2) + nl * np.log(np.pi)
        assert nll(ests, eta, meas, sys, adc) == pytest.approx(want, rel=1e-12)

    def test_matches_naive_evaluation(self):
        sys, scene, adc, meas, ests = make_setup()
        eta = 1.4
        a0, a1 = _masked_atoms(ests, sys, adc)
        betas = np.array([e.beta for e in ests])
        s0, s1 = a0 @ betas, a1 @ betas
        h1 = adc.h1()
        g_r = meas.y1.real * np.sqrt(2) * (s1.real - eta * h1.real)
        g_i = meas.y1.imag * np.sqrt(2) * (s1.imag - eta * h1.imag)
        naive = -np.sum(np.log(ndtr(g_r))) - np.sum(np.log(ndtr(g_i)))
        r = eta * meas.y0 - s0
        nl = meas.y0.size
        naive += np.real(np.vdot(r, r)) - nl * np.log(eta**2) + nl * np.log(np.pi)
        assert nll(ests, eta, meas, sys, adc) == pytest.approx(naive, rel=1e-12)

    def test_permutation_invariant(self):
        sys, _, adc, meas, ests = make_setup()
        assert nll(ests, 1.3, meas, sys, adc) == pytest.approx(
            nll(ests[::-1], 1.3, meas, sys, adc), rel=1e-14
        )

    def test_rejects_nonpositive_eta(self):
        sys, _, adc, meas, ests = make_setup()
        with pytest.raises(ValueError):
            nll(ests, 0.0, meas, sys, adc)

    def test_convex_in_amplitudes_and_eta(self):
        # random midpoint convexity checks at fixed geometry
        sys, _, adc, meas, ests = make_setup()
        rng = np.random.default_rng(5)
        k = len(ests)

        def value(b_flat, eta):
            es = [
                TargetEstimate(ests[j].theta, ests[j].omega, b_flat[j] + 1j * b_flat[k + j])
                for j in range(k)
            ]
            return nll(es, eta, meas, sys, adc)

        for _ in range(20):
            b1, b2 = rng.normal(size=2 * k), rng.normal(size=2 * k)
            e1, e2 = rng.uniform(0.2, 3.0, 2)
            mid = value(0.5 * (b1 + b2), 0.5 * (e1 + e2))
            assert mid <= 0.5 * value(b1, e1) + 0.5 * value(b2, e2) + 1e-9


class TestGradient:
    def test_matches_finite_differences(self):
        for seed in range(3):
            sys, _, adc, meas, ests = make_setup(seed=seed)
            eta = 1.7
            k = len(ests)
            g = nll_grad(ests, eta, meas, sys, adc)
            assert g.shape == (4 * k + 1,)
            v0 = pack(ests, eta)
            h = 1e-6
            fd = np.zeros_like(v0)
            for i in range(v0.size):
                up, dn = v0.copy(), v0.copy()
                up[i] += h
                dn[i] -= h
                es_u, eta_u = unpack(up, k)
                es_d, eta_d = unpack(dn, k)
                fd[i] = (nll(es_u, eta_u, meas, sys, adc) - nll(es_d, eta_d, meas, sys, adc)) / (2 * h)
            rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8)
            assert rel.max() < 1e-6

    def test_zero_amplitude_gradient_at_ls_optimum(self):
        # all-hp, single on-grid target, noise-free: the LS amplitude fit
        # zeroes the amplitude gradient entries
        rng = np.random.default_rng(9)
        code = gen_code(1, 8, rng)
        sys = RadarSystem(m_tx=1, m_rx=4, d_tx=0.5, d_rx=0.5, n_pri=8, code=code)
        scene = Scene(thetas=[0.4], omegas=[0.9], amps=[1.1 - 0.7j], noise_var=1e-30)
        adc = AdcConfig(delta=np.ones(4, int), thresholds=np.zeros((4, 8)))
        meas = quantize_mixed(simulate(sys, scene, rng), adc)
        eta = 2.0
        est = [TargetEstimate(0.4, 0.9, eta * scene.amps[0])]
        g = nll_grad(est, eta, meas, sys, adc)
        assert abs(g[2]) < 1e-8
        assert abs(g[3]) < 1e-8


class TestFitAmplitudes:
    def test_recovers_amplitudes_all_hp(self):
        rng = np.random.default_rng(3)
        code = gen_code(2, 12, rng)
        sys = RadarSystem(m_tx=2, m_rx=4, d_tx=2.0, d_rx=0.5, n_pri=12, code=code)
        scene = Scene(thetas=[0.5, -0.7], omegas=[1.0, -2.2], amps=[1.0 + 1.0j, -0.5 + 0.2j], noise_var=1e-6)
        adc = AdcConfig(delta=np.ones(4, int), thresholds=np.zeros((4, 12)))
        meas = quantize_mixed(simulate(sys, scene, rng), adc)
        betas, eta, val = fit_amplitudes(
            scene.thetas, scene.omegas, np.zeros(2, complex), 1.0, meas, sys, adc
        )
        b_hat = betas / eta
        assert np.abs(b_hat - scene.amps).max() < 1e-2

    def test_zero_targets_fits_eta_only(self):
        sys, scene, adc, meas, _ = make_setup()
        betas, eta, val = fit_amplitudes([], [], [], 1.0, meas, sys, adc)
        assert betas.size == 0
        assert eta > 0
        assert np.isfinite(val)
