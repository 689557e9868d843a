"""Fisher information and estimation bounds for the three receiver types.

Parameter layout everywhere is [thetas, omegas, amp_real, amp_imag] of
length 4K, optionally extended by the noise deviation sigma to 4K+1.
Measurement ordering matches signal_model.vec: index n * m_rx + m.

The one-bit information uses the standardized threshold margin
mu = (clean_signal - thresholds) / (sigma / sqrt(2)); its real and
imaginary parts are weighted per measurement by the quantizer weight
g_func(mu).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .quantize import AdcConfig
from .signal_model import (
    RadarSystem,
    Scene,
    clean_snapshot,
    d_doppler_vec,
    d_steering_rx,
    d_steering_tx,
    doppler_vec,
    steering_rx,
    steering_tx,
    vec,
)
from .special import g_func


@dataclass(frozen=True, eq=False)
class DerivativeBundle:
    """Steering matrices and their analytic angle/Doppler derivatives.

    a_r, d_a_r are m_rx x K; v, d_v_theta, d_v_omega are n_pri x K. Column
    k belongs to target k.
    """

    a_r: np.ndarray
    d_a_r: np.ndarray
    v: np.ndarray
    d_v_theta: np.ndarray
    d_v_omega: np.ndarray


@dataclass(frozen=True, eq=False)
class CrbReport:
    """Inversion result with conditioning diagnostics."""

    fim: np.ndarray
    crb: np.ndarray
    root_crb: np.ndarray
    cond: float
    notes: tuple = field(default_factory=tuple)


def derivative_bundle(sys: RadarSystem, scene: Scene) -> DerivativeBundle:
    """Assemble per-target steering vectors and derivatives."""
    cols_ar, cols_dar, cols_v, cols_dvt, cols_dvw = [], [], [], [], []
    ct = sys.code.T
    for theta, omega in zip(scene.thetas, scene.omegas):
        d = doppler_vec(sys, omega)
        ct_at = ct @ steering_tx(sys, theta)
        cols_ar.append(steering_rx(sys, theta))
        cols_dar.append(d_steering_rx(sys, theta))
        cols_v.append(ct_at * d)
        cols_dvt.append((ct @ d_steering_tx(sys, theta)) * d)
        cols_dvw.append(ct_at * d_doppler_vec(sys, omega))
    return DerivativeBundle(
        a_r=np.stack(cols_ar, axis=1),
        d_a_r=np.stack(cols_dar, axis=1),
        v=np.stack(cols_v, axis=1),
        d_v_theta=np.stack(cols_dvt, axis=1),
        d_v_omega=np.stack(cols_dvw, axis=1),
    )


def _khatri_rao(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product, p slow / q fast (matches vec order)."""
    n, k = p.shape
    m = q.shape[0]
    return (p[:, None, :] * q[None, :, :]).reshape(n * m, k)


def signal_jacobian(sys: RadarSystem, scene: Scene, bundle: DerivativeBundle = None) -> np.ndarray:
    """Rows of the 4K x (n_pri*m_rx) matrix are d(clean signal)/d(param).

    Row blocks follow the parameter layout; no conjugation is applied, so
    real and imaginary parts can be mixed with further real-valued rows.
    """
    if bundle is None:
        bundle = derivative_bundle(sys, scene)
    b = scene.amps
    d_theta = _khatri_rao(bundle.d_v_theta * b, bundle.a_r) + _khatri_rao(
        bundle.v * b, bundle.d_a_r
    )
    d_omega = _khatri_rao(bundle.d_v_omega * b, bundle.a_r)
    d_amp = _khatri_rao(bundle.v, bundle.a_r)
    return np.vstack([d_theta.T, d_omega.T, d_amp.T, 1j * d_amp.T])


def mu_vector(sys: RadarSystem, scene: Scene, thresholds: np.ndarray) -> np.ndarray:
    """Standardized clean-signal-to-threshold margin (complex, length NM_r)."""
    x = vec(clean_snapshot(sys, scene))
    h = vec(np.asarray(thresholds, dtype=complex))
    return (x - h) / (np.sqrt(scene.noise_var) / np.sqrt(2.0))


def _gram_real(u: np.ndarray) -> np.ndarray:
    """Re{U U^H} through real products (exactly symmetric)."""
    ur, ui = u.real, u.imag
    return ur @ ur.T + ui @ ui.T


def _weighted_gram(u: np.ndarray, lam_r: np.ndarray, lam_i: np.ndarray) -> np.ndarray:
    ur, ui = u.real, u.imag
    return (ur * lam_r) @ ur.T + (ui * lam_i) @ ui.T


def fim_hp_blocks(sys: RadarSystem, scene: Scene) -> np.ndarray:
    """High-precision FIM from the closed-form block expressions."""
    if scene.n_targets < 1:
        raise ValueError("FIM requires at least one target")
    bun = derivative_bundle(sys, scene)
    b = scene.amps
    ar, dar = bun.a_r, bun.d_a_r
    v, dvt, dvw = bun.v, bun.d_v_theta, bun.d_v_omega

    def bconj_m_b(m):
        return np.conj(b)[:, None] * m * b[None, :]

    def bconj_m(m):
        return np.conj(b)[:, None] * m

    gram = lambda p, q: p.conj().T @ q

    f11 = (
        gram(dar, dar) * bconj_m_b(gram(v, v))
        + gram(dar, ar) * bconj_m_b(gram(v, dvt))
        + gram(ar, dar) * bconj_m_b(gram(dvt, v))
        + gram(ar, ar) * bconj_m_b(gram(dvt, dvt))
    )
    f12 = gram(dar, ar) * bconj_m_b(gram(v, dvw)) + gram(ar, ar) * bconj_m_b(
        gram(dvt, dvw)
    )
    f13 = gram(dar, ar) * bconj_m(gram(v, v)) + gram(ar, ar) * bconj_m(gram(dvt, v))
    f22 = gram(ar, ar) * bconj_m_b(gram(dvw, dvw))
    f23 = gram(ar, ar) * bconj_m(gram(dvw, v))
    f33 = gram(ar, ar) * gram(v, v)

    blocks = np.block(
        [
            [f11, f12, f13, 1j * f13],
            [f12.T, f22, f23, 1j * f23],
            [f13.T, f23.T, f33, 1j * f33],
            [(1j * f13).T, (1j * f23).T, (1j * f33).T, f33],
        ]
    )
    return (2.0 / scene.noise_var) * np.real(blocks)


def fim_hp_khatri_rao(sys: RadarSystem, scene: Scene) -> np.ndarray:
    """High-precision FIM as a Gram matrix of the signal Jacobian."""
    u = signal_jacobian(sys, scene)
    return (2.0 / scene.noise_var) * _gram_real(u)


def fim_onebit(sys: RadarSystem, scene: Scene, thresholds: np.ndarray) -> np.ndarray:
    """FIM when every receive channel is sign-quantized against thresholds."""
    u = signal_jacobian(sys, scene)
    mu = mu_vector(sys, scene, thresholds)
    lam_r, lam_i = g_func(mu.real), g_func(mu.imag)
    return _weighted_gram(u, lam_r, lam_i) / (np.pi * scene.noise_var)


def fim_onebit_lower(sys: RadarSystem, scene: Scene, thresholds: np.ndarray) -> np.ndarray:
    """Matrix whose 2/pi multiple lower-bounds the one-bit FIM.

    Uses the pointwise bound g_func(x) >= 4 exp(-x^2) inside the same
    weighted Gram structure, at high-precision scaling 2/sigma^2.
    """
    u = signal_jacobian(sys, scene)
    mu = mu_vector(sys, scene, thresholds)
    lam_r = np.exp(-np.clip(mu.real**2, None, 745.0))
    lam_i = np.exp(-np.clip(mu.imag**2, None, 745.0))
    return (2.0 / scene.noise_var) * _weighted_gram(u, lam_r, lam_i)


def fim_mixed(sys: RadarSystem, scene: Scene, adc: AdcConfig) -> np.ndarray:
    """Mixed-ADC FIM: high-precision + one-bit information adds."""
    u = signal_jacobian(sys, scene)
    mu = mu_vector(sys, scene, adc.thresholds)
    hp = adc.hp_mask()
    u0, u1 = u[:, hp], u[:, ~hp]
    mu1 = mu[~hp]
    f_hp = (2.0 / scene.noise_var) * _gram_real(u0)
    f_ob = _weighted_gram(u1, g_func(mu1.real), g_func(mu1.imag)) / (
        np.pi * scene.noise_var
    )
    return f_hp + f_ob


def psd_inverse(f: np.ndarray, refine_steps: int = 2):
    """Invert a symmetric PSD matrix with equilibration and refinement.

    Jacobi pre-scaling removes parameter-scale disparities, a Cholesky
    solve inverts, and extended-precision Newton refinement drives the
    residual toward the rounding floor. Falls back to an eigenvalue
    pseudo-inverse when the factorization fails. Returns (inverse, cond,
    notes).
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    notes = []
    d = np.sqrt(np.abs(np.diag(f)))
    d[d == 0] = 1.0
    fe = f / d[:, None] / d[None, :]
    try:
        cho = sla.cho_factor(fe, check_finite=False)
        xe = sla.cho_solve(cho, np.eye(n), check_finite=False)
    except sla.LinAlgError:
        notes.append("cholesky failed; eigenvalue pseudo-inverse used")
        evals, evecs = np.linalg.eigh(fe)
        tol = max(evals.max(), 0) * n * np.finfo(float).eps
        inv_evals = np.where(evals > tol, 1.0 / np.where(evals > tol, evals, 1.0), 0.0)
        xe = (evecs * inv_evals) @ evecs.T
    x = xe / d[:, None] / d[None, :]
    fl = f.astype(np.longdouble)
    xl = x.astype(np.longdouble)
    eye = np.eye(n, dtype=np.longdouble)
    for _ in range(refine_steps):
        xl = xl + xl @ (eye - fl @ xl)
    x = np.asarray(0.5 * (xl + xl.T), dtype=float)
    evals = np.linalg.eigvalsh(fe)
    lo = evals.min()
    cond = float(evals.max() / lo) if lo > 0 else np.inf
    if cond > 1e12:
        notes.append(f"near-singular information matrix (cond ~ {cond:.2e})")
    return x, cond, notes


def crb_report(fim: np.ndarray, notes=()) -> CrbReport:
    """Invert an information matrix into a bound report."""
    crb, cond, inv_notes = psd_inverse(fim)
    diag = np.diag(crb).copy()
    root = np.sqrt(np.maximum(diag, 0.0))
    return CrbReport(
        fim=fim, crb=crb, root_crb=root, cond=cond, notes=tuple(notes) + tuple(inv_notes)
    )


@dataclass(frozen=True, eq=False)
class MixedCrbBounds:
    """Sandwich bounds on the mixed-ADC CRB relative to high precision."""

    lower: np.ndarray
    upper: np.ndarray
    crb_hp: np.ndarray
    gamma_lower: np.ndarray
    gamma_upper: np.ndarray
    degenerate: bool
    notes: tuple = field(default_factory=tuple)


def crb_mixed_bounds(sys: RadarSystem, scene: Scene, adc: AdcConfig) -> MixedCrbBounds:
    """Closed-form lower/upper bound matrices on the mixed-ADC CRB.

    lower = (F0 - (1 - 2/pi) Fbar0)^-1 and upper = (F0 - Fbar0 +
    (2/pi) Fbar_1l)^-1, where Fbar0 is the high-precision information of
    the sign-quantized channels alone and Fbar_1l its quantizer-weighted
    lower bound. With no one-bit channels both collapse to the
    high-precision CRB (degenerate case, reported as such).
    """
    f0 = fim_hp_blocks(sys, scene)
    crb0, _, notes0 = psd_inverse(f0)
    notes = list(notes0)
    u = signal_jacobian(sys, scene)
    hp = adc.hp_mask()
    u1 = u[:, ~hp]
    degenerate = u1.shape[1] == 0
    if degenerate:
        eye = np.eye(f0.shape[0])
        notes.append("no one-bit channels; bounds equal the high-precision CRB")
        return MixedCrbBounds(
            lower=crb0,
            upper=crb0,
            crb_hp=crb0,
            gamma_lower=np.zeros_like(f0),
            gamma_upper=np.zeros_like(f0),
            degenerate=True,
            notes=tuple(notes),
        )
    mu1 = mu_vector(sys, scene, adc.thresholds)[~hp]
    fbar0 = (2.0 / scene.noise_var) * _gram_real(u1)
    lam_r = np.exp(-np.clip(mu1.real**2, None, 745.0))
    lam_i = np.exp(-np.clip(mu1.imag**2, None, 745.0))
    fbar_1l = (2.0 / scene.noise_var) * _weighted_gram(u1, lam_r, lam_i)
    b_lower = (1.0 - 2.0 / np.pi) * fbar0
    b_upper = fbar0 - (2.0 / np.pi) * fbar_1l
    lower, _, nl = psd_inverse(f0 - b_lower)
    upper, _, nu = psd_inverse(f0 - b_upper)
    notes += nl + nu
    eye = np.eye(f0.shape[0])
    return MixedCrbBounds(
        lower=lower,
        upper=upper,
        crb_hp=crb0,
        gamma_lower=lower @ f0 - eye,
        gamma_upper=upper @ f0 - eye,
        degenerate=False,
        notes=tuple(notes),
    )


def _schur_crb(fim_full: np.ndarray, n_phi: int):
    """CRB over the first n_phi parameters after eliminating the rest."""
    a = fim_full[:n_phi, :n_phi]
    b = fim_full[:n_phi, n_phi:]
    c = fim_full[n_phi:, n_phi:]
    if c.size == 0:
        return psd_inverse(a)
    c_inv, _, _ = psd_inverse(c)
    return psd_inverse(a - b @ c_inv @ b.T)


def fim_unknown_sigma(kind: str, sys: RadarSystem, scene: Scene, adc: AdcConfig = None) -> CrbReport:
    """FIM over [params, sigma] and the resulting CRB for the parameters.

    kind = 'hp' ignores quantization (sigma decouples, so the parameter
    CRB matches the known-noise case); 'onebit' sign-quantizes every
    channel against adc.thresholds; 'mixed' follows adc.delta. The
    parameter block of the report's crb is the Schur-complement inverse.
    """
    k4 = 4 * scene.n_targets
    sigma = np.sqrt(scene.noise_var)
    if kind == "hp":
        f_phi = fim_hp_blocks(sys, scene)
        fim = np.zeros((k4 + 1, k4 + 1))
        fim[:k4, :k4] = f_phi
        fim[k4, k4] = 4.0 * sys.n_pri * sys.m_rx / scene.noise_var
        crb_phi, cond, notes = _schur_crb(fim, k4)
    elif kind in ("onebit", "mixed"):
        if adc is None:
            raise ValueError(f"kind={kind!r} requires an AdcConfig")
        u = signal_jacobian(sys, scene)
        x = vec(clean_snapshot(sys, scene))
        h = vec(np.asarray(adc.thresholds, dtype=complex))
        ubar = np.vstack([u, -(x - h)[None, :] / sigma])
        mu = mu_vector(sys, scene, adc.thresholds)
        if kind == "onebit":
            fim = _weighted_gram(ubar, g_func(mu.real), g_func(mu.imag)) / (
                np.pi * scene.noise_var
            )
        else:
            hp = adc.hp_mask()
            n_hp = adc.n_hp
            u0 = u[:, hp]
            ubar1 = ubar[:, ~hp]
            mu1 = mu[~hp]
            fim = np.zeros((k4 + 1, k4 + 1))
            fim[:k4, :k4] = (2.0 / scene.noise_var) * _gram_real(u0)
            fim[k4, k4] = 4.0 * sys.n_pri * n_hp / scene.noise_var
            fim += _weighted_gram(ubar1, g_func(mu1.real), g_func(mu1.imag)) / (
                np.pi * scene.noise_var
            )
        crb_phi, cond, notes = _schur_crb(fim, k4)
    else:
        raise ValueError("kind must be 'hp', 'onebit', or 'mixed'")
    root = np.sqrt(np.maximum(np.diag(crb_phi), 0.0))
    return CrbReport(fim=fim, crb=crb_phi, root_crb=root, cond=cond, notes=tuple(notes))
