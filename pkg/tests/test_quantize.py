import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixadc.quantize import (
    AdcConfig,
    MeasurementSet,
    avg_received_power,
    gen_thresholds,
    quantize_mixed,
    signc,
)
from mixadc.signal_model import RadarSystem, Scene, gen_code, simulate, vec


def make_system(m_tx=1, m_rx=4, n_pri=8, seed=0, d_tx=0.5):
    code = gen_code(m_tx, n_pri, np.random.default_rng(seed))
    return RadarSystem(m_tx=m_tx, m_rx=m_rx, d_tx=d_tx, d_rx=0.5, n_pri=n_pri, code=code)


class TestSignc:
    def test_quadrant(self):
        assert signc(0.3 - 0.2j) == 1 - 1j

    def test_zero_maps_to_plus(self):
        assert signc(0.0 + 0.0j) == 1 + 1j
        assert signc(0.0 - 0.0j) == 1 + 1j

    def test_outputs_in_alphabet(self):
        rng = np.random.default_rng(0)
        z = signc(rng.normal(size=50) + 1j * rng.normal(size=50))
        assert np.isin(z.real, (-1.0, 1.0)).all()
        assert np.isin(z.imag, (-1.0, 1.0)).all()

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5))
    def test_idempotent_at_zero_threshold(self, re, im):
        z = signc(complex(re, im))
        assert signc(z) == z


class TestThresholds:
    def test_zero_power_gives_zero(self):
        h = gen_thresholds(3, 5, 0.0, np.random.default_rng(0))
        assert np.all(h == 0)

    def test_values_in_level_set(self):
        p_out = 2.5
        h = gen_thresholds(6, 40, p_out, np.random.default_rng(1))
        levels = np.linspace(-np.sqrt(p_out), np.sqrt(p_out), 8)
        for part in (h.real, h.imag):
            dist = np.abs(part[..., None] - levels[None, None, :]).min(axis=-1)
            assert dist.max() < 1e-12

    def test_levels_equally_likely(self):
        # 1e5 complex draws = 2e5 level draws; 3-sigma band per level
        p_out = 1.0
        h = gen_thresholds(250, 400, p_out, np.random.default_rng(7))
        levels = np.linspace(-1, 1, 8)
        draws = np.concatenate([h.real.ravel(), h.imag.ravel()])
        n = draws.size
        want = n / 8
        sd = np.sqrt(n * (1 / 8) * (7 / 8))
        for lv in levels:
            count = np.sum(np.abs(draws - lv) < 1e-12)
            assert abs(count - want) < 3 * sd


class TestQuantizeMixed:
    def setup_method(self):
        self.rng = np.random.default_rng(3)
        self.m_rx, self.n = 4, 8
        self.x = self.rng.normal(size=(4, 8)) + 1j * self.rng.normal(size=(4, 8))
        self.h = gen_thresholds(4, 8, 1.5, self.rng)

    def test_all_hp_is_lossless(self):
        adc = AdcConfig(delta=np.ones(4, int), thresholds=self.h)
        meas = quantize_mixed(self.x, adc)
        assert meas.y1.size == 0
        assert np.allclose(meas.y0, vec(self.x))
        assert np.allclose(meas.reassemble(), self.x)

    def test_all_onebit(self):
        adc = AdcConfig(delta=np.zeros(4, int), thresholds=self.h)
        meas = quantize_mixed(self.x, adc)
        assert meas.y0.size == 0
        assert np.allclose(meas.y1, vec(signc(self.x - self.h)))

    def test_single_entry_example(self):
        adc = AdcConfig(delta=np.array([0]), thresholds=np.array([[0.5 + 3.0j]]))
        meas = quantize_mixed(np.array([[1.0 + 2.0j]]), adc)
        assert meas.y1[0] == 1 - 1j

    def test_reassembly_recovers_partition(self):
        adc = AdcConfig(delta=np.array([1, 0, 1, 0]), thresholds=self.h)
        meas = quantize_mixed(self.x, adc)
        want = self.x.copy()
        ob = adc.delta == 0
        want[ob, :] = signc(self.x[ob, :] - self.h[ob, :])
        assert np.allclose(meas.reassemble(), want)

    def test_shape_mismatch_raises(self):
        adc = AdcConfig(delta=np.array([1, 0, 1, 0]), thresholds=self.h)
        with pytest.raises(ValueError):
            quantize_mixed(self.x[:, :4], adc)

    def test_measurement_alphabet_validated(self):
        adc = AdcConfig(delta=np.array([0, 0]), thresholds=np.zeros((2, 1)))
        with pytest.raises(ValueError):
            MeasurementSet(y0=np.zeros(0), y1=np.array([0.5 + 1j, 1 + 1j]), adc=adc)


class TestMasks:
    def test_hp_mask_ordering(self):
        adc = AdcConfig(delta=np.array([1, 0, 0]), thresholds=np.zeros((3, 2)))
        # measurement index n * m_rx + m
        assert np.array_equal(
            adc.hp_mask(), np.array([True, False, False, True, False, False])
        )

    def test_h1_matches_onebit_rows(self):
        h = np.arange(6).reshape(3, 2) + 1j
        adc = AdcConfig(delta=np.array([0, 1, 0]), thresholds=h)
        want = vec(h[[0, 2], :])
        assert np.allclose(adc.h1(), want)


class TestAvgReceivedPower:
    def test_noise_only(self):
        sys = make_system()
        scene = Scene(thetas=[], omegas=[], amps=[], noise_var=0.31)
        assert avg_received_power(sys, scene) == pytest.approx(0.31)

    def test_single_unit_target_single_tx(self):
        sys = make_system(m_tx=1)
        scene = Scene(thetas=[0.4], omegas=[1.0], amps=[1.0], noise_var=1e-12)
        assert avg_received_power(sys, scene) == pytest.approx(1.0, rel=1e-6)

    def test_matches_empirical_power(self):
        sys = make_system(m_tx=3, m_rx=5, n_pri=16, seed=5, d_tx=2.5)
        rng = np.random.default_rng(8)
        scene = Scene(
            thetas=[0.2, -0.9],
            omegas=[0.5, -2.0],
            amps=[1.0 + 0.3j, 0.4 - 0.2j],
            noise_var=0.2,
        )
        want = avg_received_power(sys, scene)
        acc = 0.0
        for _ in range(1000):
            code = gen_code(3, 16, rng)
            s = RadarSystem(m_tx=3, m_rx=5, d_tx=2.5, d_rx=0.5, n_pri=16, code=code)
            acc += np.mean(np.abs(simulate(s, scene, rng)) ** 2)
        emp = acc / 1000
        assert abs(emp - want) / want < 0.05
