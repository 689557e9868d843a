"""One-bit complex sign quantization, mixed-ADC assembly, and partitioning.

A receiver with m_rx antennas carries L high-precision ADC pairs (marked by
the indicator vector delta) and m_rx - L one-bit pairs that compare the raw
signal against a known threshold matrix H. The quantized output keeps
high-precision rows verbatim and reduces the remaining rows to complex
signs of (X - H).
"""

from dataclasses import dataclass

import numpy as np

from .signal_model import RadarSystem, Scene, vec


@dataclass(frozen=True, eq=False)
class AdcConfig:
    """Per-antenna ADC assignment and one-bit thresholds.

    delta : ndarray of {0,1}, length m_rx; 1 marks a high-precision pair.
    thresholds : complex ndarray (m_rx, n_pri); only rows with delta == 0
        are ever compared against.
    """

    delta: np.ndarray
    thresholds: np.ndarray

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=int)
        thr = np.asarray(self.thresholds, dtype=complex)
        if delta.ndim != 1 or not np.isin(delta, (0, 1)).all():
            raise ValueError("delta must be a flat vector of 0/1 entries")
        if thr.ndim != 2 or thr.shape[0] != delta.size:
            raise ValueError("thresholds must be (m_rx, n_pri)")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "thresholds", thr)

    @property
    def m_rx(self) -> int:
        return self.delta.size

    @property
    def n_pri(self) -> int:
        return self.thresholds.shape[1]

    @property
    def n_hp(self) -> int:
        """Number of high-precision antenna outputs (L)."""
        return int(self.delta.sum())

    def hp_mask(self) -> np.ndarray:
        """Boolean mask over the n_pri*m_rx measurement vector: True = hp."""
        return np.tile(self.delta.astype(bool), self.n_pri)

    def h1(self) -> np.ndarray:
        """Thresholds of the one-bit rows, vectorized column-major."""
        return vec(self.thresholds[self.delta == 0, :])


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Mixed-ADC measurements: y0 unquantized, y1 in {+-1 +- j}."""

    y0: np.ndarray
    y1: np.ndarray
    adc: AdcConfig

    def __post_init__(self):
        y0 = np.asarray(self.y0, dtype=complex).ravel()
        y1 = np.asarray(self.y1, dtype=complex).ravel()
        n, l = self.adc.n_pri, self.adc.n_hp
        if y0.size != n * l:
            raise ValueError(f"y0 length {y0.size} != n_pri*L = {n * l}")
        if y1.size != n * (self.adc.m_rx - l):
            raise ValueError("y1 length inconsistent with delta")
        if y1.size and not (
            np.isin(y1.real, (-1.0, 1.0)).all() and np.isin(y1.imag, (-1.0, 1.0)).all()
        ):
            raise ValueError("y1 entries must be +-1 +- j")
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "y1", y1)

    @property
    def n_hp(self) -> int:
        return self.adc.n_hp

    def reassemble(self) -> np.ndarray:
        """Rebuild the m_rx x n_pri quantized matrix diag(d)X + diag(1-d)Z."""
        adc = self.adc
        out = np.zeros((adc.m_rx, adc.n_pri), dtype=complex)
        hp = adc.delta == 1
        out[hp, :] = self.y0.reshape(adc.n_pri, adc.n_hp).T
        out[~hp, :] = self.y1.reshape(adc.n_pri, adc.m_rx - adc.n_hp).T
        return out


def signc(x) -> np.ndarray:
    """Complex sign: sign(Re) + j sign(Im), with sign(0) = +1."""
    x = np.asarray(x, dtype=complex)
    return np.where(x.real >= 0, 1.0, -1.0) + 1j * np.where(x.imag >= 0, 1.0, -1.0)


def gen_thresholds(m_rx: int, n_pri: int, p_out: float, rng, n_levels: int = 8) -> np.ndarray:
    """Draw a threshold matrix with quantized uniform levels.

    Real and imaginary parts are drawn i.i.d. and equally likely from
    n_levels equispaced values spanning [-h_max, h_max], h_max = sqrt(p_out).
    p_out = 0 gives the all-zero (sign-of-signal) threshold.
    """
    if p_out < 0:
        raise ValueError("p_out must be >= 0")
    rng = np.random.default_rng(rng)
    levels = np.linspace(-np.sqrt(p_out), np.sqrt(p_out), n_levels)
    re = rng.choice(levels, size=(m_rx, n_pri))
    im = rng.choice(levels, size=(m_rx, n_pri))
    return re + 1j * im


def quantize_mixed(x: np.ndarray, adc: AdcConfig) -> MeasurementSet:
    """Apply the mixed-ADC front end to a raw snapshot (signal + noise)."""
    x = np.asarray(x, dtype=complex)
    if x.shape != (adc.m_rx, adc.n_pri):
        raise ValueError(f"snapshot shape {x.shape} != ({adc.m_rx}, {adc.n_pri})")
    hp = adc.delta == 1
    y0 = vec(x[hp, :])
    y1 = vec(signc(x[~hp, :] - adc.thresholds[~hp, :]))
    return MeasurementSet(y0=y0, y1=y1, adc=adc)


def avg_received_power(sys: RadarSystem, scene: Scene) -> float:
    """Expected per-entry power of the raw snapshot, signal plus noise.

    For unimodular codes the code-averaged per-entry signal power of a
    unit-amplitude target is m_tx (the m_tx transmit contributions add
    incoherently over random codes), and cross-target terms average out,
    giving m_tx * sum_k |b_k|^2 + noise_var.
    """
    return float(sys.m_tx * np.sum(np.abs(scene.amps) ** 2) + scene.noise_var)
