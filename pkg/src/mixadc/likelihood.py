"""Exact mixed-ADC negative log-likelihood and its analytic gradient.

The working parameterization is per-target (theta, omega, beta) plus a
global inverse noise deviation eta, with beta = eta * amplitude. In these
coordinates the likelihood is convex in (beta, eta) for fixed geometry,
which is what the amplitude fits and the model-order scoring rely on.
"""

from dataclasses import dataclass

import numpy as np
import scipy.optimize as sopt

from .quantize import AdcConfig, MeasurementSet
from .signal_model import RadarSystem, atom, d_atom
from .special import f_prime, neg_log_phi

_SQRT2 = np.sqrt(2.0)


@dataclass
class TargetEstimate:
    """One target in scaled-amplitude coordinates."""

    theta: float
    omega: float
    beta: complex

    def __post_init__(self):
        if not (np.isfinite(self.theta) and np.isfinite(self.omega)):
            raise ValueError("non-finite target parameters")
        if not abs(self.theta) < np.pi / 2:
            raise ValueError("theta outside (-pi/2, pi/2)")


def _masked_atoms(estimates, sys: RadarSystem, adc: AdcConfig):
    """Per-target atoms split into high-precision and one-bit rows."""
    hp = adc.hp_mask()
    a0, a1 = [], []
    for est in estimates:
        a = atom(sys, est.theta, est.omega)
        a0.append(a[hp])
        a1.append(a[~hp])
    k = len(estimates)
    a0 = np.stack(a0, axis=1) if k else np.zeros((int(hp.sum()), 0), dtype=complex)
    a1 = np.stack(a1, axis=1) if k else np.zeros((int((~hp).sum()), 0), dtype=complex)
    return a0, a1


def _onebit_margins(s1, eta, y1, h1):
    g_r = y1.real * _SQRT2 * (s1.real - eta * h1.real)
    g_i = y1.imag * _SQRT2 * (s1.imag - eta * h1.imag)
    return g_r, g_i


def nll(estimates, eta: float, meas: MeasurementSet, sys: RadarSystem, adc: AdcConfig = None) -> float:
    """Negative log-likelihood of the mixed measurements.

    Sign channels contribute stabilized -ln Phi terms; high-precision
    channels contribute the scaled least-squares misfit plus the noise
    normalization (constants included so model orders are comparable).
    """
    if adc is None:
        adc = meas.adc
    if not eta > 0:
        raise ValueError("eta must be positive")
    a0, a1 = _masked_atoms(estimates, sys, adc)
    betas = np.array([est.beta for est in estimates], dtype=complex)
    s0 = a0 @ betas if betas.size else np.zeros(a0.shape[0], dtype=complex)
    s1 = a1 @ betas if betas.size else np.zeros(a1.shape[0], dtype=complex)
    h1 = adc.h1()
    g_r, g_i = _onebit_margins(s1, eta, meas.y1, h1)
    val = float(np.sum(neg_log_phi(g_r)) + np.sum(neg_log_phi(g_i)))
    nl = meas.y0.size
    r = eta * meas.y0 - s0
    val += float(np.real(np.vdot(r, r)))
    val += -nl * np.log(eta**2) + nl * np.log(np.pi)
    return val


def nll_grad(estimates, eta: float, meas: MeasurementSet, sys: RadarSystem, adc: AdcConfig = None) -> np.ndarray:
    """Gradient of nll over [thetas, omegas, beta_re, beta_im, eta]."""
    if adc is None:
        adc = meas.adc
    if not eta > 0:
        raise ValueError("eta must be positive")
    k = len(estimates)
    hp = adc.hp_mask()
    h1 = adc.h1()
    y0, y1 = meas.y0, meas.y1
    nl = y0.size

    a0, a1 = _masked_atoms(estimates, sys, adc)
    da0_t, da1_t = [], []
    da0_w, da1_w = [], []
    for est in estimates:
        dth, dom = d_atom(sys, est.theta, est.omega)
        da0_t.append(dth[hp])
        da1_t.append(dth[~hp])
        da0_w.append(dom[hp])
        da1_w.append(dom[~hp])
    betas = np.array([est.beta for est in estimates], dtype=complex)
    s0 = a0 @ betas if k else np.zeros(a0.shape[0], dtype=complex)
    s1 = a1 @ betas if k else np.zeros(a1.shape[0], dtype=complex)

    g_r, g_i = _onebit_margins(s1, eta, y1, h1)
    c_r = f_prime(g_r) * y1.real * _SQRT2 if y1.size else np.zeros(0)
    c_i = f_prime(g_i) * y1.imag * _SQRT2 if y1.size else np.zeros(0)
    r = eta * y0 - s0

    grad = np.zeros(4 * k + 1)
    for j in range(k):
        db_t = betas[j] * da1_t[j]
        db_w = betas[j] * da1_w[j]
        grad[j] = np.dot(c_r, db_t.real) + np.dot(c_i, db_t.imag)
        grad[k + j] = np.dot(c_r, db_w.real) + np.dot(c_i, db_w.imag)
        grad[2 * k + j] = np.dot(c_r, a1[:, j].real) + np.dot(c_i, a1[:, j].imag)
        grad[3 * k + j] = -np.dot(c_r, a1[:, j].imag) + np.dot(c_i, a1[:, j].real)
        # high-precision least-squares part
        grad[j] += -2.0 * np.real(np.vdot(r, betas[j] * da0_t[j]))
        grad[k + j] += -2.0 * np.real(np.vdot(r, betas[j] * da0_w[j]))
        grad[2 * k + j] += -2.0 * np.real(np.vdot(r, a0[:, j]))
        grad[3 * k + j] += 2.0 * np.imag(np.vdot(r, a0[:, j]))
    grad[-1] = -np.dot(c_r, h1.real) - np.dot(c_i, h1.imag)
    grad[-1] += 2.0 * np.real(np.vdot(r, y0)) - 2.0 * nl / eta
    return grad


def fit_amplitudes(
    thetas,
    omegas,
    beta_init,
    eta_init: float,
    meas: MeasurementSet,
    sys: RadarSystem,
    adc: AdcConfig = None,
    eta_min: float = 1e-8,
    gtol: float = 1e-8,
):
    """Jointly fit scaled amplitudes and eta with geometry held fixed.

    Solves the convex (beta, eta) subproblem with a bounded quasi-Newton
    iteration and analytic gradients. Returns (betas, eta, nll_value).
    """
    if adc is None:
        adc = meas.adc
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    k = thetas.size
    ests = [
        TargetEstimate(t, w, b)
        for t, w, b in zip(thetas, omegas, np.atleast_1d(np.asarray(beta_init, complex)))
    ] if k else []
    a0, a1 = _masked_atoms(ests, sys, adc)
    h1 = adc.h1()
    y0, y1 = meas.y0, meas.y1
    nl = y0.size

    def value_grad(x):
        betas = x[:k] + 1j * x[k : 2 * k]
        eta = x[-1]
        s0 = a0 @ betas if k else np.zeros(a0.shape[0], dtype=complex)
        s1 = a1 @ betas if k else np.zeros(a1.shape[0], dtype=complex)
        g_r, g_i = _onebit_margins(s1, eta, y1, h1)
        val = np.sum(neg_log_phi(g_r)) + np.sum(neg_log_phi(g_i))
        r = eta * y0 - s0
        val += np.real(np.vdot(r, r)) - nl * np.log(eta**2) + nl * np.log(np.pi)
        c_r = f_prime(g_r) * y1.real * _SQRT2 if y1.size else np.zeros(0)
        c_i = f_prime(g_i) * y1.imag * _SQRT2 if y1.size else np.zeros(0)
        grad = np.zeros(2 * k + 1)
        for j in range(k):
            grad[j] = (
                np.dot(c_r, a1[:, j].real)
                + np.dot(c_i, a1[:, j].imag)
                - 2.0 * np.real(np.vdot(r, a0[:, j]))
            )
            grad[k + j] = (
                -np.dot(c_r, a1[:, j].imag)
                + np.dot(c_i, a1[:, j].real)
                + 2.0 * np.imag(np.vdot(r, a0[:, j]))
            )
        grad[-1] = (
            -np.dot(c_r, h1.real)
            - np.dot(c_i, h1.imag)
            + 2.0 * np.real(np.vdot(r, y0))
            - 2.0 * nl / eta
        )
        return float(val), grad

    x0 = np.concatenate(
        [
            np.atleast_1d(np.asarray(beta_init, complex)).real if k else np.zeros(0),
            np.atleast_1d(np.asarray(beta_init, complex)).imag if k else np.zeros(0),
            [max(float(eta_init), eta_min)],
        ]
    )
    bounds = [(None, None)] * (2 * k) + [(eta_min, None)]
    res = sopt.minimize(
        value_grad,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": 500, "ftol": 1e-14, "gtol": gtol},
    )
    betas = res.x[:k] + 1j * res.x[k : 2 * k]
    return betas, float(res.x[-1]), float(res.fun)
