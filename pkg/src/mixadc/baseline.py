"""Matched-filter angle-Doppler imaging on full-precision data."""

import numpy as np

from .quantize import MeasurementSet
from .signal_model import Grid, RadarSystem, dictionary, vec


def matched_filter(x, sys: RadarSystem, grid: Grid) -> np.ndarray:
    """Power-normalized correlation image |a^H x|^2 / ||a||^4.

    Accepts a raw snapshot (m_rx x n_pri matrix or its vectorization) or
    an all-high-precision MeasurementSet. A unit-amplitude on-grid target
    reads 1 (0 dB) at its own cell. Sign-quantized inputs are refused.
    """
    if isinstance(x, MeasurementSet):
        if x.adc.n_hp != x.adc.m_rx:
            raise ValueError("matched filter requires high-precision data")
        x = vec(x.reassemble())
    else:
        x = np.asarray(x, dtype=complex)
        if x.ndim == 2:
            x = vec(x)
    if x.size != sys.n_meas:
        raise ValueError(f"data length {x.size} != n_pri*m_rx = {sys.n_meas}")
    a = dictionary(sys, grid)
    num = np.abs(a.conj().T @ x) ** 2
    energy = np.sum(np.abs(a) ** 2, axis=0)
    return grid.image_from_flat(num / energy**2)
