"""Sparse angle-Doppler spectrum estimation for mixed-ADC measurements.

Outer iterations linearize the log-determinant sparsity term of the
covariance-fitting criterion; inner iterations additionally replace the
one-bit log-likelihood by its Lipschitz quadratic majorizer, after which
every block update (spectrum, powers, noise levels) is closed form or a
1-D convex search. Momentum extrapolation of the surrogate targets is
optional and guarded by a restart rule that preserves descent of the
inner surrogate.

With no one-bit channels the iteration reduces to the classical
covariance-based sparse estimator on the unquantized data; with no
high-precision channels it runs on signs alone.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .quantize import AdcConfig, MeasurementSet
from .signal_model import Grid, RadarSystem, dictionary
from .special import f_prime, neg_log_phi

_SQRT2 = np.sqrt(2.0)


@dataclass
class MlikesOptions:
    outer_max: int = 50
    outer_tol: float = 1e-4
    inner_max: int = 10
    inner_tol: float = 1e-4
    accel: str = "fista"  # "fista" | "alg1" | "off"
    eta_bounds: tuple = (1e-6, 1e6)
    sigma0_floor_rel: float = 1e-8
    track_objective: bool = False
    # Initialization sweeps that treat crudely de-quantized sign channels
    # as fixed Gaussian data. Starting the MM iterations from the raw
    # correlation image instead puts them in a basin where the spectrum
    # is rich enough to separate every observed sign, and they converge
    # to ghost peaks (the sign-channel targets just confirm the model's
    # own prediction). 0 disables.
    warm_outer: int = 50
    warm_inner: int = 3
    # The quadratic-surrogate noise update moves the one-bit scale only
    # O(1/eta^3) per pass, so a badly scaled start never recovers within
    # the iteration budget. This extra per-outer block step minimizes the
    # exact criterion over eta1 alone (1-D, accepted only on descent).
    exact_eta_refit: bool = True

    def __post_init__(self):
        if self.accel not in ("fista", "alg1", "off"):
            raise ValueError("accel must be 'fista', 'alg1', or 'off'")


@dataclass
class SparseEstimate:
    """Solver output: grid spectrum, powers, and the two noise levels."""

    alpha: np.ndarray
    p: np.ndarray
    sigma0: float
    eta1: float
    n_outer: int = 0
    objective_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True, eq=False)
class MlikesProblem:
    """Measurements and dictionary rows grouped by ADC type.

    a0/a1 are the dictionary rows of the high-precision / one-bit
    channels; atil stacks them (high-precision first), which fixes the
    row order of the model covariance.
    """

    y0: np.ndarray
    y1: np.ndarray
    h1: np.ndarray
    a0: np.ndarray
    a1: np.ndarray
    atil: np.ndarray
    atil_h: np.ndarray
    col_energy: np.ndarray

    @property
    def n_hp_rows(self) -> int:
        return self.y0.size


def build_problem(meas: MeasurementSet, sys: RadarSystem, grid: Grid, adc: AdcConfig = None) -> MlikesProblem:
    if adc is None:
        adc = meas.adc
    a = dictionary(sys, grid)
    hp = adc.hp_mask()
    a0, a1 = a[hp, :], a[~hp, :]
    atil = np.vstack([a0, a1])
    return MlikesProblem(
        y0=meas.y0,
        y1=meas.y1,
        h1=adc.h1(),
        a0=a0,
        a1=a1,
        atil=atil,
        atil_h=atil.conj().T.copy(),
        col_energy=np.sum(np.abs(a) ** 2, axis=0),
    )


# Powers this far (relatively) below the dominant one are snapped to zero:
# they are estimation-irrelevant and subnormal values poison BLAS speed.
P_RELATIVE_FLOOR = 1e-16


def prune_powers(p) -> np.ndarray:
    top = p.max(initial=0.0)
    if top > 0:
        p = np.where(p < top * P_RELATIVE_FLOOR, 0.0, p)
    return p


def _build_r(prob: MlikesProblem, p, sigma0, eta1):
    """Model covariance over the stacked rows, plus its Cholesky factor."""
    r = (prob.atil * p[None, :]) @ prob.atil_h
    nl = prob.n_hp_rows
    idx = np.arange(r.shape[0])
    r[idx[:nl], idx[:nl]] += sigma0**2
    r[idx[nl:], idx[nl:]] += 1.0 / eta1**2
    r = 0.5 * (r + r.conj().T)
    cho = sla.cho_factor(r, check_finite=False)
    return r, cho


def majorize_logdet(cho, prob: MlikesProblem):
    """Tangent weights of the log-determinant term at the current covariance.

    Returns per-column weights w_k = a_k^H R^-1 a_k and the diagonal-sum
    weights (w0bar, w1bar) of the high-precision / one-bit noise blocks.
    """
    rinv_a = sla.cho_solve(cho, prob.atil, check_finite=False)
    w = np.real(np.sum(np.conj(prob.atil) * rinv_a, axis=0))
    rinv = sla.cho_solve(cho, np.eye(prob.atil.shape[0]), check_finite=False)
    diag = np.real(np.diag(rinv))
    nl = prob.n_hp_rows
    return w, float(diag[:nl].sum()), float(diag[nl:].sum())


def inner_surrogate_targets(alpha, eta1, prob: MlikesProblem):
    """Pseudo-observation vector g for the one-bit channels.

    Linearizes the sign-channel misfit at the current margins gamma and
    returns g(n) = y_R u_R + j y_I u_I with u = gamma - f'(gamma).
    """
    if prob.y1.size == 0:
        return np.zeros(0, dtype=complex)
    s1 = prob.a1 @ alpha
    d = s1 - prob.h1
    gam_r = prob.y1.real * _SQRT2 * eta1 * d.real
    gam_i = prob.y1.imag * _SQRT2 * eta1 * d.imag
    u_r = gam_r - f_prime(gam_r)
    u_i = gam_i - f_prime(gam_i)
    return prob.y1.real * u_r + 1j * prob.y1.imag * u_i


def update_alpha(p, cho, prob: MlikesProblem, ytilde):
    """Closed-form spectrum update: alpha = P A^H R^-1 ytilde."""
    return p * (prob.atil_h @ sla.cho_solve(cho, ytilde, check_finite=False))


def update_p(alpha, w):
    """Power update p_k = |alpha_k| / sqrt(w_k)."""
    return prune_powers(np.abs(alpha) / np.sqrt(w))


def update_sigma0(alpha, prob: MlikesProblem, w0bar):
    """High-precision noise update sigma0^2 = ||A0 alpha - y0|| / sqrt(w0bar)."""
    res = np.linalg.norm(prob.a0 @ alpha - prob.y0)
    return float(np.sqrt(res) / w0bar**0.25)


def _golden_min(fun, lo, hi, xatol):
    """Golden-section minimization of a unimodal scalar function."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > xatol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def update_eta1(alpha, g, prob: MlikesProblem, w1bar, bounds, xatol=1e-8, s1=None):
    """Bounded 1-D convex search for the one-bit inverse noise level.

    Minimizes eta^2 ||A1 alpha - h1 - g/(sqrt(2) eta)||^2 + w1bar/eta^2;
    the search runs in log(eta) so the tolerance is relative across the
    wide admissible range.
    """
    c = (prob.a1 @ alpha if s1 is None else s1) - prob.h1
    cc = float(np.real(np.vdot(c, c)))
    cg = float(np.real(np.vdot(c, g)))
    gg = 0.5 * float(np.real(np.vdot(g, g)))

    def objective(log_eta):
        eta = np.exp(log_eta)
        return eta * eta * cc - _SQRT2 * eta * cg + gg + w1bar / (eta * eta)

    lo, hi = np.log(bounds[0]), np.log(bounds[1])
    log_eta = _golden_min(objective, lo, hi, xatol)
    return float(np.exp(log_eta))


def nesterov_combine(g_curr, g_prev, t):
    """Momentum extrapolation of surrogate targets; returns (g_tilde, t_next).

    g_tilde = g_curr + ((t - 1)/t_next)(g_curr - g_prev) with the scalar
    recurrence t_next = (1 + sqrt(1 + 4 t^2))/2 started from t = 1.
    Chaining the returned t_next through successive calls reproduces the
    momentum schedule; passing g_prev = g_curr gives plain targets.
    """
    t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
    g_tilde = g_curr + ((t - 1.0) / t_next) * (g_curr - g_prev)
    return g_tilde, t_next


def _combine(accel, g_curr, g_prev, t):
    """Dispatch the extrapolation variant; t is chained as in nesterov_combine."""
    if accel == "off":
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        return g_curr, t_next
    if accel == "alg1":
        # alternate listing variant: previous targets plus a scaled copy
        # of the new ones (selectable for comparison, not the default)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        return g_prev + ((t - 1.0) / t_next) * g_curr, t_next
    return nesterov_combine(g_curr, g_prev, t)


def onebit_misfit(alpha, eta1, prob: MlikesProblem) -> float:
    """Exact sign-channel negative log-likelihood at (alpha, eta1)."""
    if prob.y1.size == 0:
        return 0.0
    d = prob.a1 @ alpha - prob.h1
    gam_r = prob.y1.real * _SQRT2 * eta1 * d.real
    gam_i = prob.y1.imag * _SQRT2 * eta1 * d.imag
    return float(np.sum(neg_log_phi(gam_r)) + np.sum(neg_log_phi(gam_i)))


def _prior_term(alpha, p):
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.abs(alpha) ** 2 / p
    return float(np.sum(np.where(p > 0, ratio, 0.0)))


def sparse_objective(alpha, p, sigma0, eta1, prob: MlikesProblem, cho=None) -> float:
    """Full covariance-fitting criterion (misfit + prior + logdet)."""
    if cho is None:
        _, cho = _build_r(prob, p, sigma0, eta1)
    logdet = 2.0 * float(np.sum(np.log(np.real(np.diag(cho[0])))))
    val = onebit_misfit(alpha, eta1, prob) + _prior_term(alpha, p) + logdet
    if prob.n_hp_rows:
        res = prob.a0 @ alpha - prob.y0
        val += float(np.real(np.vdot(res, res))) / sigma0**2
    return val


def _surrogate_q(alpha, p, sigma0, eta1, w, w0bar, w1bar, prob: MlikesProblem) -> float:
    """Outer majorizer: exact sign misfit + linearized logdet + prior."""
    val = onebit_misfit(alpha, eta1, prob) + _prior_term(alpha, p)
    val += float(np.dot(w, p)) + w0bar * sigma0**2
    if prob.y1.size:
        val += w1bar / eta1**2
    if prob.n_hp_rows:
        res = prob.a0 @ alpha - prob.y0
        val += float(np.real(np.vdot(res, res))) / sigma0**2
    return val


def data_scale(prob: MlikesProblem) -> float:
    """Per-entry power proxy used for floors and de-quantization."""
    if prob.n_hp_rows:
        return float(np.mean(np.abs(prob.y0) ** 2))
    if prob.h1.size and np.any(prob.h1 != 0):
        # invert the second moment of the 8-level threshold draw
        return float(np.mean(np.abs(prob.h1) ** 2) * 7.0 / 6.0)
    return 1.0


def _gaussian_warm_start(prob, opts, alpha0, p0, sigma00, scale2):
    """Covariance-fitting sweeps on de-quantized data.

    Sign channels are replaced by the fixed pseudo-observations
    h1 + sqrt(scale/2) * signs at a frozen imputation noise of that same
    scale; only the spectrum, powers, and the high-precision noise are
    iterated. The output support is sparse and correctly placed, which is
    what the exact-likelihood iterations need as a starting basin.
    """
    xfull = np.concatenate([prob.y0, prob.h1 + np.sqrt(scale2 / 2.0) * prob.y1])
    eta_pseudo = 1.0 / np.sqrt(scale2 / 2.0)
    floor = opts.sigma0_floor_rel * np.sqrt(scale2)
    k_grid = p0.size
    alpha_full, p_full, sigma0 = alpha0, p0, sigma00
    act = _ActiveSet(prob, p_full)
    for m_w in range(opts.warm_outer):
        act.refresh(p_full)
        alpha = alpha_full[act.idx]
        p = p_full[act.idx]
        _, cho = act.build_r(p_full, sigma0, eta_pseudo)
        w, w0bar, _ = act.weights(cho)
        p_prev = p_full.copy()
        for _ in range(opts.warm_inner):
            alpha = p * (act.atil_h @ sla.cho_solve(cho, xfull, check_finite=False))
            p = prune_powers(np.abs(alpha) / np.sqrt(w))
            alpha = np.where(p > 0, alpha, 0.0)
            if prob.n_hp_rows:
                res = np.linalg.norm(act.a0 @ alpha - prob.y0)
                sigma0 = max(float(np.sqrt(res) / w0bar**0.25), floor)
            p_full = np.zeros(k_grid)
            p_full[act.idx] = p
            _, cho = act.build_r(p_full, sigma0, eta_pseudo)
        alpha_full = np.zeros(k_grid, dtype=complex)
        alpha_full[act.idx] = alpha
        revived = False
        if m_w < 12 or m_w % 4 == 0:
            p_full, revived = act.revive_dead(p_full, cho, xfull)
        if not revived and _rel_change(p_full, p_prev) < opts.outer_tol:
            break
    return alpha_full, p_full, sigma0


def initialize_state(prob: MlikesProblem, opts: MlikesOptions):
    """Scale-aware start: correlation image, powers, noise levels.

    The one-bit channels enter through the crude de-quantization
    h1 + sqrt(power/2) * signs so the image has sane units at L = 0 too.
    When sign channels are present, warm-start sweeps sparsify the image
    on the de-quantized data and the one-bit noise level is then fit by
    an exact 1-D likelihood search over that support.
    """
    nl = prob.n_hp_rows
    scale2 = data_scale(prob)
    x1 = prob.h1 + np.sqrt(scale2 / 2.0) * prob.y1
    xhat = np.concatenate([prob.y0, x1])
    alpha0 = (prob.atil_h @ xhat) / prob.col_energy
    p0 = prune_powers(np.abs(alpha0) ** 2)
    if nl:
        k_top = int(np.argmax(p0))
        res = prob.y0 - alpha0[k_top] * prob.a0[:, k_top]
        sigma00 = float(np.sqrt(max(np.mean(np.abs(res) ** 2), 1e-12 * scale2)))
    else:
        sigma00 = float(np.sqrt(scale2 / 2.0))
    floor = opts.sigma0_floor_rel * np.sqrt(scale2)
    sigma00 = max(sigma00, floor)
    eta10 = 1.0 / sigma00
    if prob.y1.size and opts.warm_outer > 0:
        alpha0, p0, sigma00 = _gaussian_warm_start(prob, opts, alpha0, p0, sigma00, scale2)
        act = _ActiveSet(prob, p0)
        eta10 = act.refit_eta_exact(
            p0, alpha0[act.idx], sigma00, eta10, opts.eta_bounds, max_log_step=50.0
        )
    return alpha0, p0, sigma00, float(np.clip(eta10, *opts.eta_bounds)), floor


def _rel_change(new, old):
    denom = np.linalg.norm(old)
    return np.linalg.norm(new - old) / max(denom, 1e-30)


class _ActiveSet:
    """Columns with nonzero power. Zero powers can never revive (the
    spectrum update multiplies by p), so the heavy linear algebra shrinks
    with the support."""

    def __init__(self, prob: MlikesProblem, p_full):
        self.prob = prob
        self.idx = None
        self.refresh(p_full)

    def refresh(self, p_full):
        idx = np.flatnonzero(p_full)
        if self.idx is not None and idx.size == self.idx.size:
            return
        self.idx = idx
        self.atil = np.ascontiguousarray(self.prob.atil[:, idx])
        self.atil_h = np.ascontiguousarray(self.prob.atil_h[idx, :])
        self.a0 = self.atil[: self.prob.n_hp_rows, :]
        self.a1 = self.atil[self.prob.n_hp_rows :, :]

    def build_r(self, p_full, sigma0, eta1):
        p = p_full[self.idx]
        r = (self.atil * p[None, :]) @ self.atil_h
        nl = self.prob.n_hp_rows
        d = np.arange(r.shape[0])
        r[d[:nl], d[:nl]] += sigma0**2
        r[d[nl:], d[nl:]] += 1.0 / eta1**2
        r = 0.5 * (r + r.conj().T)
        try:
            cho = sla.cho_factor(r, check_finite=False)
        except sla.LinAlgError:
            jitter = 1e-14 * np.real(np.trace(r)) / r.shape[0]
            r[d, d] += jitter
            cho = sla.cho_factor(r, check_finite=False)
        return r, cho

    def weights(self, cho):
        rinv_a = sla.cho_solve(cho, self.atil, check_finite=False)
        w = np.real(np.sum(np.conj(self.atil) * rinv_a, axis=0))
        rinv = sla.cho_solve(cho, np.eye(self.atil.shape[0]), check_finite=False)
        diag = np.real(np.diag(rinv))
        nl = self.prob.n_hp_rows
        return w, float(diag[:nl].sum()), float(diag[nl:].sum())

    def logdet(self, cho):
        return 2.0 * float(np.sum(np.log(np.real(np.diag(cho[0])))))

    def revive_dead(self, p_full, cho, ytilde, ratio_min=1.05, seed_rel=1e-10):
        """Re-seed zeroed powers whose whitened statistic says they regrow.

        For a column with tiny power, one multiplicative sweep scales it by
        |a^H R^-1 y| / sqrt(a^H R^-1 a); columns with that ratio above 1
        would grow back in exact arithmetic, so pruning must not be allowed
        to kill them permanently. Seeded powers are small enough that the
        criterion value moves well below the monotonicity tolerance.
        """
        prob = self.prob
        dead = p_full == 0
        if not dead.any():
            return p_full, False
        rinv_y = sla.cho_solve(cho, ytilde, check_finite=False)
        z = np.abs(prob.atil_h[dead, :] @ rinv_y)
        a_dead = prob.atil[:, dead]
        rinv_a = sla.cho_solve(cho, a_dead, check_finite=False)
        w = np.real(np.sum(np.conj(a_dead) * rinv_a, axis=0))
        ratio = z / np.sqrt(np.maximum(w, 1e-300))
        grow = ratio > ratio_min
        if not grow.any():
            return p_full, False
        p_new = p_full.copy()
        idx_dead = np.flatnonzero(dead)
        p_new[idx_dead[grow]] = seed_rel * p_full.max()
        return p_new, True

    def refit_eta_exact(self, p_full, alpha, sigma0, eta1, bounds, max_log_step=np.log(10.0)):
        """1-D descent on the exact criterion's eta1 terms.

        Minimizes -lnL1(alpha, eta) + ln|R(eta)| over eta with everything
        else frozen; returns the old value unless the new one descends.
        The search is trust-regioned to one decade around the current
        value per call: an over-complete spectrum can separate every
        observed sign, in which case the unconstrained minimizer runs
        away to infinite confidence before the support has sparsified.
        """
        prob = self.prob
        p = p_full[self.idx]
        base = (self.atil * p[None, :]) @ self.atil_h
        nl = prob.n_hp_rows
        d = np.arange(base.shape[0])
        base[d[:nl], d[:nl]] += sigma0**2
        base = 0.5 * (base + base.conj().T)
        s1 = self.a1 @ alpha
        dlt = s1 - prob.h1

        def val(log_eta):
            eta = np.exp(log_eta)
            r = base.copy()
            r[d[nl:], d[nl:]] += 1.0 / eta**2
            try:
                cho = sla.cho_factor(r, check_finite=False)
            except sla.LinAlgError:
                return np.inf
            logdet = 2.0 * float(np.sum(np.log(np.real(np.diag(cho[0])))))
            gam_r = prob.y1.real * _SQRT2 * eta * dlt.real
            gam_i = prob.y1.imag * _SQRT2 * eta * dlt.imag
            return logdet + float(np.sum(neg_log_phi(gam_r)) + np.sum(neg_log_phi(gam_i)))

        lo = max(np.log(bounds[0]), np.log(eta1) - max_log_step)
        hi = min(np.log(bounds[1]), np.log(eta1) + max_log_step)
        log_best = _golden_min(val, lo, hi, 1e-3)
        if val(log_best) <= val(np.log(eta1)):
            return float(np.exp(log_best))
        return eta1


def mlikes_run(
    meas: MeasurementSet,
    sys: RadarSystem,
    grid: Grid,
    adc: AdcConfig = None,
    opts: MlikesOptions = None,
    problem: MlikesProblem = None,
) -> SparseEstimate:
    """Run the full outer/inner MM iteration on a measurement set.

    Pass a prebuilt `problem` to reuse the dictionary across runs that
    share (sys, grid, adc). The returned spectrum is unnormalized; scale
    by eta1 when handing off to peak refinement.
    """
    opts = opts or MlikesOptions()
    prob = problem if problem is not None else build_problem(meas, sys, grid, adc)
    alpha_full, p_full, sigma0, eta1, sigma_floor = initialize_state(prob, opts)
    k_grid = p_full.size
    has_ob = prob.y1.size > 0
    has_hp = prob.n_hp_rows > 0
    act = _ActiveSet(prob, p_full)
    trace = []
    n_outer = 0

    def _targets(alpha_a, e1):
        """Surrogate targets g and the one-bit model signal A1 alpha."""
        if not has_ob:
            return np.zeros(0, dtype=complex), np.zeros(0, dtype=complex)
        s1 = act.a1 @ alpha_a
        d = s1 - prob.h1
        gam_r = prob.y1.real * _SQRT2 * e1 * d.real
        gam_i = prob.y1.imag * _SQRT2 * e1 * d.imag
        u_r = gam_r - f_prime(gam_r)
        u_i = gam_i - f_prime(gam_i)
        return prob.y1.real * u_r + 1j * prob.y1.imag * u_i, s1

    def _misfit_terms(alpha_a, s0, e1, s1):
        """Exact data terms: one-bit nll plus scaled high-precision misfit."""
        val = 0.0
        if has_ob:
            gam_r = prob.y1.real * _SQRT2 * e1 * (s1.real - prob.h1.real)
            gam_i = prob.y1.imag * _SQRT2 * e1 * (s1.imag - prob.h1.imag)
            val += float(np.sum(neg_log_phi(gam_r)) + np.sum(neg_log_phi(gam_i)))
        if has_hp:
            res = act.a0 @ alpha_a - prob.y0
            val += float(np.real(np.vdot(res, res))) / s0**2
        return val

    def _q(alpha_a, p_a, s0, e1, w, w0b, w1b, s1):
        """Outer majorizer (exact misfits + linearized logdet + prior)."""
        val = _misfit_terms(alpha_a, s0, e1, s1) + _prior_term(alpha_a, p_a)
        val += float(np.dot(w, p_a)) + w0b * s0**2
        if has_ob:
            val += w1b / e1**2
        return val

    for m in range(opts.outer_max):
        n_outer = m + 1
        act.refresh(p_full)
        alpha = alpha_full[act.idx]
        p = p_full[act.idx]
        if has_ob and opts.exact_eta_refit:
            eta1 = act.refit_eta_exact(p_full, alpha, sigma0, eta1, opts.eta_bounds)
        r, cho = act.build_r(p_full, sigma0, eta1)
        w, w0bar, w1bar = act.weights(cho)
        g_plain, s1_cur = _targets(alpha, eta1)
        if opts.track_objective:
            trace.append(
                _misfit_terms(alpha, sigma0, eta1, s1_cur)
                + _prior_term(alpha, p)
                + act.logdet(cho)
            )
        p_outer = p_full.copy()

        g_tilde, t = nesterov_combine(g_plain, g_plain, 1.0)
        q_prev = _q(alpha, p, sigma0, eta1, w, w0bar, w1bar, s1_cur)

        for _ in range(opts.inner_max):
            p_before = p.copy()

            def _step(g_eff, cho_in):
                ybar1 = (
                    prob.h1 + g_eff / (_SQRT2 * eta1) if has_ob else np.zeros(0, complex)
                )
                ytil = np.concatenate([prob.y0, ybar1])
                a_new = p * (act.atil_h @ sla.cho_solve(cho_in, ytil, check_finite=False))
                p_new = prune_powers(np.abs(a_new) / np.sqrt(w))
                a_new = np.where(p_new > 0, a_new, 0.0)
                if has_hp:
                    res = np.linalg.norm(act.a0 @ a_new - prob.y0)
                    s_new = max(float(np.sqrt(res) / w0bar**0.25), sigma_floor)
                else:
                    s_new = sigma0
                if has_ob:
                    s1_new = act.a1 @ a_new
                    e_new = update_eta1(
                        a_new, g_eff, prob, w1bar, opts.eta_bounds, s1=s1_new
                    )
                else:
                    s1_new = np.zeros(0, dtype=complex)
                    e_new = eta1
                return a_new, p_new, s_new, e_new, s1_new

            cand = _step(g_tilde, cho)
            q_new = _q(cand[0], cand[1], cand[2], cand[3], w, w0bar, w1bar, cand[4])
            if opts.accel != "off" and q_new > q_prev * (1 + 1e-12) + 1e-12:
                # extrapolation overshot: redo the plain MM step, flush momentum
                cand = _step(g_plain, cho)
                q_new = _q(cand[0], cand[1], cand[2], cand[3], w, w0bar, w1bar, cand[4])
                t = 1.0
            alpha, p, sigma0, eta1, s1_cur = cand
            if not np.isfinite(q_new):
                raise RuntimeError(
                    f"non-finite surrogate objective at outer {m}: "
                    f"sigma0={sigma0:.3e} eta1={eta1:.3e} |alpha|max="
                    f"{np.abs(alpha).max(initial=0):.3e}"
                )
            q_prev = q_new
            p_full = np.zeros(k_grid)
            p_full[act.idx] = p
            r, cho = act.build_r(p_full, sigma0, eta1)
            if has_ob:
                g_new, s1_cur = _targets(alpha, eta1)
                g_tilde, t = _combine(opts.accel, g_new, g_plain, t)
                g_plain = g_new
            if _rel_change(p, p_before) < opts.inner_tol:
                break

        alpha_full = np.zeros(k_grid, dtype=complex)
        alpha_full[act.idx] = alpha
        revived = False
        if m < 12 or m % 4 == 0:
            ybar1 = (
                prob.h1 + g_plain / (_SQRT2 * eta1) if has_ob else np.zeros(0, complex)
            )
            p_full, revived = act.revive_dead(
                p_full, cho, np.concatenate([prob.y0, ybar1])
            )
        if not revived and _rel_change(p_full, p_outer) < opts.outer_tol:
            break

    if opts.track_objective:
        act.refresh(p_full)
        alpha = alpha_full[act.idx]
        p = p_full[act.idx]
        _, cho = act.build_r(p_full, sigma0, eta1)
        _, s1_last = _targets(alpha, eta1)
        trace.append(
            _misfit_terms(alpha, sigma0, eta1, s1_last)
            + _prior_term(alpha, p)
            + act.logdet(cho)
        )

    return SparseEstimate(
        alpha=alpha_full,
        p=p_full,
        sigma0=sigma0,
        eta1=eta1,
        n_outer=n_outer,
        objective_trace=np.asarray(trace),
    )
