"""Fisher information and bound computations against independent oracles.

The brute-force oracle builds per-measurement information from finite
differences of the standardized margins / clean signal, which exercises
none of the closed-form assembly code.
"""

import numpy as np
import pytest

from mixadc.crb import (
    crb_mixed_bounds,
    crb_report,
    derivative_bundle,
    fim_hp_blocks,
    fim_hp_khatri_rao,
    fim_mixed,
    fim_onebit,
    fim_onebit_lower,
    fim_unknown_sigma,
    mu_vector,
    psd_inverse,
    signal_jacobian,
)
from mixadc.quantize import AdcConfig, avg_received_power, gen_thresholds
from mixadc.signal_model import RadarSystem, Scene, atom, clean_snapshot, gen_code, vec
from mixadc.special import g_func


def make_case(seed, k=2, m_tx=3, m_rx=5, n_pri=8, sep=0.3):
    rng = np.random.default_rng(seed)
    code = gen_code(m_tx, n_pri, rng)
    sys = RadarSystem(
        m_tx=m_tx, m_rx=m_rx, d_tx=m_rx * 0.5, d_rx=0.5, n_pri=n_pri, code=code
    )
    thetas = rng.uniform(-1.2, 1.2, k)
    while k > 1 and np.min(np.diff(np.sort(thetas))) < sep:
        thetas = rng.uniform(-1.2, 1.2, k)
    scene = Scene(
        thetas=thetas,
        omegas=rng.uniform(-np.pi, np.pi * 0.99, k),
        amps=rng.normal(size=k) + 1j * rng.normal(size=k),
        noise_var=10 ** rng.uniform(-1, 0.5),
    )
    thresholds = gen_thresholds(m_rx, n_pri, avg_received_power(sys, scene), rng)
    n_hp = int(rng.integers(1, m_rx))
    delta = np.zeros(m_rx, dtype=int)
    delta[rng.choice(m_rx, n_hp, replace=False)] = 1
    return sys, scene, AdcConfig(delta=delta, thresholds=thresholds)


def min_eig(m):
    return np.linalg.eigvalsh(0.5 * (m + m.T)).min()


def psd_slack(ref):
    return 1e-9 * np.trace(ref) / ref.shape[0]


class TestHighPrecision:
    def test_route_equivalence(self):
        for seed in range(3):
            sys, scene, _ = make_case(seed, k=int(seed % 3) + 1)
            f_blocks = fim_hp_blocks(sys, scene)
            f_gram = fim_hp_khatri_rao(sys, scene)
            rel = np.abs(f_blocks - f_gram).max() / np.abs(f_blocks).max()
            assert rel < 1e-10

    def test_shape_and_symmetry(self):
        sys, scene, _ = make_case(4, k=3)
        f = fim_hp_blocks(sys, scene)
        assert f.shape == (12, 12)
        assert np.abs(f - f.T).max() <= 1e-12 * np.abs(f).max()

    def test_gram_form_psd(self):
        sys, scene, _ = make_case(5, k=2)
        f = fim_hp_khatri_rao(sys, scene)
        assert min_eig(f) >= -psd_slack(f)

    def test_amplitude_block_single_target(self):
        # single transmitter, unimodular code: F(b_re,b_re) = (2/s2) m_rx n_pri
        sys, _, _ = make_case(0, m_tx=1)
        scene = Scene(thetas=[0.4], omegas=[1.1], amps=[0.8 + 0.0j], noise_var=0.3)
        f = fim_hp_blocks(sys, scene)
        want = 2.0 / scene.noise_var * sys.m_rx * sys.n_pri
        assert f[2, 2] == pytest.approx(want, rel=1e-12)

    def test_single_target_real_amp_crb(self):
        # real amplitude decouples its real part: CRB(b_re) = s2/(2 m_rx n)
        sys, _, _ = make_case(1, m_tx=1)
        scene = Scene(thetas=[0.4], omegas=[1.1], amps=[0.8 + 0.0j], noise_var=0.3)
        rep = crb_report(fim_hp_blocks(sys, scene))
        want = scene.noise_var / (2 * sys.m_rx * sys.n_pri)
        assert rep.crb[2, 2] == pytest.approx(want, rel=1e-9)

    def test_against_numerical_jacobian(self):
        # FIM = (2/s2) Re{D^H D} with D from finite differences of the signal
        sys, scene, _ = make_case(7, k=2)
        k = scene.n_targets
        phi0 = np.concatenate(
            [scene.thetas, scene.omegas, scene.amps.real, scene.amps.imag]
        )

        def signal(phi):
            sc = Scene(
                thetas=phi[:k],
                omegas=phi[k : 2 * k],
                amps=phi[2 * k : 3 * k] + 1j * phi[3 * k :],
                noise_var=scene.noise_var,
            )
            return vec(clean_snapshot(sys, sc))

        h = 1e-6
        cols = []
        for i in range(4 * k):
            up, dn = phi0.copy(), phi0.copy()
            up[i] += h
            dn[i] -= h
            cols.append((signal(up) - signal(dn)) / (2 * h))
        d = np.stack(cols, axis=1)
        f_num = (2 / scene.noise_var) * np.real(d.conj().T @ d)
        f = fim_hp_blocks(sys, scene)
        assert np.abs(f - f_num).max() / np.abs(f).max() < 1e-6


class TestDerivativeBundle:
    def test_matches_atom_finite_differences(self):
        sys, scene, _ = make_case(2, k=3)
        bun = derivative_bundle(sys, scene)
        h = 1e-6
        for j in range(scene.n_targets):
            th, om = scene.thetas[j], scene.omegas[j]
            da = np.kron(bun.d_v_theta[:, j], bun.a_r[:, j]) + np.kron(
                bun.v[:, j], bun.d_a_r[:, j]
            )
            fd = (atom(sys, th + h, om) - atom(sys, th - h, om)) / (2 * h)
            assert np.abs(da - fd).max() / np.abs(da).max() < 1e-6
            dw = np.kron(bun.d_v_omega[:, j], bun.a_r[:, j])
            fdw = (atom(sys, th, om + h) - atom(sys, th, om - h)) / (2 * h)
            assert np.abs(dw - fdw).max() / np.abs(dw).max() < 1e-6


class TestOneBit:
    def test_upper_ordering(self):
        for seed in range(3):
            sys, scene, adc = make_case(10 + seed)
            f0 = fim_hp_blocks(sys, scene)
            f1 = fim_onebit(sys, scene, adc.thresholds)
            assert min_eig(2 / np.pi * f0 - f1) >= -psd_slack(f0)

    def test_lower_ordering(self):
        for seed in range(3):
            sys, scene, adc = make_case(20 + seed)
            f1 = fim_onebit(sys, scene, adc.thresholds)
            f1l = fim_onebit_lower(sys, scene, adc.thresholds)
            assert min_eig(f1 - 2 / np.pi * f1l) >= -psd_slack(f1)

    def test_zero_margin_equals_two_over_pi(self):
        # zero amplitudes and zero thresholds: every weight is g(0) = 4
        sys, _, _ = make_case(3)
        scene = Scene(thetas=[0.5], omegas=[1.0], amps=[0.0j], noise_var=0.4)
        zero_thr = np.zeros((sys.m_rx, sys.n_pri))
        f0 = fim_hp_blocks(sys, scene)
        f1 = fim_onebit(sys, scene, zero_thr)
        assert np.abs(f1 - 2 / np.pi * f0).max() <= 1e-12 * max(np.abs(f0).max(), 1)

    def test_crb_ordering(self):
        sys, scene, adc = make_case(30)
        crb0, _, _ = psd_inverse(fim_hp_blocks(sys, scene))
        crb1, _, _ = psd_inverse(fim_onebit(sys, scene, adc.thresholds))
        assert min_eig(crb1 - np.pi / 2 * crb0) >= -psd_slack(crb1)


class TestMixed:
    def test_reduces_to_hp(self):
        sys, scene, adc = make_case(40)
        full = AdcConfig(delta=np.ones(sys.m_rx, int), thresholds=adc.thresholds)
        f = fim_mixed(sys, scene, full)
        assert np.abs(f - fim_hp_blocks(sys, scene)).max() <= 1e-10 * np.abs(f).max()

    def test_reduces_to_onebit(self):
        sys, scene, adc = make_case(41)
        none = AdcConfig(delta=np.zeros(sys.m_rx, int), thresholds=adc.thresholds)
        f = fim_mixed(sys, scene, none)
        f1 = fim_onebit(sys, scene, adc.thresholds)
        assert np.abs(f - f1).max() <= 1e-10 * np.abs(f1).max()

    def test_dominated_by_hp(self):
        for seed in range(3):
            sys, scene, adc = make_case(50 + seed)
            f0 = fim_hp_blocks(sys, scene)
            fm = fim_mixed(sys, scene, adc)
            assert min_eig(f0 - fm) >= -psd_slack(f0)

    def test_additivity_against_per_measurement_oracle(self):
        # 2x2 toy: sum per-measurement outer products built from finite
        # differences of the margins and of the clean signal
        rng = np.random.default_rng(60)
        code = gen_code(2, 2, rng)
        sys = RadarSystem(m_tx=2, m_rx=2, d_tx=1.0, d_rx=0.5, n_pri=2, code=code)
        scene = Scene(thetas=[0.3], omegas=[0.7], amps=[0.9 - 0.4j], noise_var=0.5)
        thr = gen_thresholds(2, 2, avg_received_power(sys, scene), rng)
        adc = AdcConfig(delta=np.array([1, 0]), thresholds=thr)
        k = 1
        phi0 = np.concatenate([scene.thetas, scene.omegas, scene.amps.real, scene.amps.imag])

        def mu_of(phi):
            sc = Scene(
                thetas=phi[:k], omegas=phi[k : 2 * k],
                amps=phi[2 * k : 3 * k] + 1j * phi[3 * k :], noise_var=scene.noise_var,
            )
            return mu_vector(sys, sc, thr)

        def x_of(phi):
            sc = Scene(
                thetas=phi[:k], omegas=phi[k : 2 * k],
                amps=phi[2 * k : 3 * k] + 1j * phi[3 * k :], noise_var=scene.noise_var,
            )
            return vec(clean_snapshot(sys, sc))

        h = 1e-6
        n_meas = sys.n_meas
        j_mu = np.zeros((4 * k, n_meas), dtype=complex)
        j_x = np.zeros((4 * k, n_meas), dtype=complex)
        for i in range(4 * k):
            up, dn = phi0.copy(), phi0.copy()
            up[i] += h
            dn[i] -= h
            j_mu[i] = (mu_of(up) - mu_of(dn)) / (2 * h)
            j_x[i] = (x_of(up) - x_of(dn)) / (2 * h)
        mu0 = mu_of(phi0)
        hp = adc.hp_mask()
        f_oracle = np.zeros((4 * k, 4 * k))
        for m in range(n_meas):
            if hp[m]:
                d = j_x[:, m]
                f_oracle += (2 / scene.noise_var) * (
                    np.outer(d.real, d.real) + np.outer(d.imag, d.imag)
                )
            else:
                d = j_mu[:, m]
                f_oracle += (
                    g_func(mu0.real[m]) * np.outer(d.real, d.real)
                    + g_func(mu0.imag[m]) * np.outer(d.imag, d.imag)
                ) / (2 * np.pi)
        f = fim_mixed(sys, scene, adc)
        assert np.abs(f - f_oracle).max() / np.abs(f).max() < 1e-10

    def test_monotone_in_hp_count(self):
        sys, scene, adc = make_case(70)
        prev = None
        for n_hp in range(sys.m_rx + 1):
            delta = np.zeros(sys.m_rx, int)
            delta[:n_hp] = 1
            f = fim_mixed(sys, scene, AdcConfig(delta=delta, thresholds=adc.thresholds))
            crb, _, _ = psd_inverse(f)
            d = np.diag(crb)
            if prev is not None:
                assert np.all(d <= prev * (1 + 1e-8))
            prev = d


class TestMixedBounds:
    def test_sandwich(self):
        for seed in range(4):
            sys, scene, adc = make_case(80 + seed)
            bounds = crb_mixed_bounds(sys, scene, adc)
            crb_m, _, _ = psd_inverse(fim_mixed(sys, scene, adc))
            lo, up = np.diag(bounds.lower), np.diag(bounds.upper)
            mid = np.diag(crb_m)
            assert np.all(lo <= mid + 1e-8 * np.abs(mid))
            assert np.all(mid <= up + 1e-8 * np.abs(up))

    def test_gamma_lower_nonnegative_eigenvalues(self):
        sys, scene, adc = make_case(90)
        bounds = crb_mixed_bounds(sys, scene, adc)
        ev = np.linalg.eigvals(bounds.gamma_lower)
        assert np.abs(ev.imag).max() < 1e-8
        assert ev.real.min() >= -1e-8

    def test_degenerate_when_all_hp(self):
        sys, scene, adc = make_case(91)
        full = AdcConfig(delta=np.ones(sys.m_rx, int), thresholds=adc.thresholds)
        bounds = crb_mixed_bounds(sys, scene, full)
        assert bounds.degenerate
        assert np.allclose(bounds.lower, bounds.crb_hp)
        assert np.allclose(bounds.upper, bounds.crb_hp)

    def test_onebit_lower_consistent_with_half_pi(self):
        # L = 0: the lower bound is the pi/2-scaled high-precision bound
        sys, scene, adc = make_case(92)
        none = AdcConfig(delta=np.zeros(sys.m_rx, int), thresholds=adc.thresholds)
        bounds = crb_mixed_bounds(sys, scene, none)
        want = np.pi / 2 * bounds.crb_hp
        assert np.abs(bounds.lower - want).max() <= 1e-8 * np.abs(want).max()


class TestUnknownNoise:
    def test_hp_decouples(self):
        sys, scene, _ = make_case(100)
        rep = fim_unknown_sigma("hp", sys, scene)
        crb0, _, _ = psd_inverse(fim_hp_blocks(sys, scene))
        assert np.abs(rep.crb - crb0).max() <= 1e-10 * np.abs(crb0).max()
        k4 = 4 * scene.n_targets
        assert rep.fim[k4, k4] == pytest.approx(
            4 * sys.n_pri * sys.m_rx / scene.noise_var
        )

    def test_onebit_still_dominates_half_pi(self):
        sys, scene, adc = make_case(101)
        rep = fim_unknown_sigma("onebit", sys, scene, adc)
        crb0, _, _ = psd_inverse(fim_hp_blocks(sys, scene))
        assert min_eig(rep.crb - np.pi / 2 * crb0) >= -psd_slack(rep.crb)

    def test_mixed_all_hp_reduces_to_block_structure(self):
        sys, scene, adc = make_case(102)
        full = AdcConfig(delta=np.ones(sys.m_rx, int), thresholds=adc.thresholds)
        rep = fim_unknown_sigma("mixed", sys, scene, full)
        rep_hp = fim_unknown_sigma("hp", sys, scene)
        assert np.abs(rep.fim - rep_hp.fim).max() <= 1e-10 * np.abs(rep_hp.fim).max()

    def test_rejects_unknown_kind(self):
        sys, scene, adc = make_case(103)
        with pytest.raises(ValueError):
            fim_unknown_sigma("bogus", sys, scene, adc)


class TestPsdInverse:
    def test_identity_times_scale(self):
        x, cond, notes = psd_inverse(3.0 * np.eye(4))
        assert np.allclose(x, np.eye(4) / 3.0)
        assert cond == pytest.approx(1.0)

    def test_near_singular_flagged(self):
        # nearly perfectly correlated parameters, not just badly scaled
        f = np.array([[1.0, 1.0 - 1e-14], [1.0 - 1e-14, 1.0]])
        _, cond, notes = psd_inverse(f)
        assert cond > 1e12
        assert any("near-singular" in note for note in notes)

    def test_refinement_accuracy(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(8, 8))
        f = a @ a.T + 0.1 * np.eye(8)
        x, _, _ = psd_inverse(f)
        assert np.abs(f @ x - np.eye(8)).max() < 1e-12


def test_signal_jacobian_shape():
    sys, scene, _ = make_case(110, k=3)
    u = signal_jacobian(sys, scene)
    assert u.shape == (12, sys.n_meas)
