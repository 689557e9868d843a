"""Peak extraction, model-order scoring, and cyclic likelihood refinement.

The sparse spectrum from the MM solver lands on the grid; this module
turns it into a discrete target list (8-neighborhood peaks), scores
candidate model orders with an information criterion evaluated on the
exact mixed likelihood, and polishes the retained targets off-grid by
cyclic box-bounded likelihood minimization (strongest target first, the
noise level riding along with it).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize as sopt

from .likelihood import TargetEstimate, fit_amplitudes, nll
from .quantize import AdcConfig, MeasurementSet
from .signal_model import Grid, RadarSystem, atom, d_atom
from .special import f_prime, neg_log_phi

_SQRT2 = np.sqrt(2.0)
_THETA_EDGE = np.pi / 2 - 1e-9


@dataclass(frozen=True)
class Peak:
    theta: float
    omega: float
    amplitude: complex
    power: float
    i_theta: int
    i_omega: int


def pick_peaks(alpha_normalized, grid: Grid, max_k: int):
    """Top local maxima of the gridded power image.

    A cell is a peak when its power is >= all existing 8-neighbors (image
    edges are not wrapped). Peaks are ordered by descending power with
    ties broken by lower angle index, then lower Doppler index.
    """
    alpha_normalized = np.asarray(alpha_normalized)
    img = grid.image_from_flat(np.abs(alpha_normalized) ** 2)
    padded = np.full((grid.k_theta + 2, grid.k_omega + 2), -np.inf)
    padded[1:-1, 1:-1] = img
    neigh = np.full_like(img, -np.inf)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            neigh = np.maximum(
                neigh, padded[1 + di : grid.k_theta + 1 + di, 1 + dj : grid.k_omega + 1 + dj]
            )
    it, iw = np.nonzero(img >= neigh)
    order = sorted(zip(it, iw), key=lambda ij: (-img[ij[0], ij[1]], ij[0], ij[1]))
    peaks = []
    for i_theta, i_omega in order[:max_k]:
        flat = grid.flat_index(i_theta, i_omega)
        peaks.append(
            Peak(
                theta=float(grid.theta_points[i_theta]),
                omega=float(grid.omega_points[i_omega]),
                amplitude=complex(alpha_normalized[flat]),
                power=float(img[i_theta, i_omega]),
                i_theta=int(i_theta),
                i_omega=int(i_omega),
            )
        )
    return peaks


def mbic_select(
    peaks,
    meas: MeasurementSet,
    sys: RadarSystem,
    adc: AdcConfig = None,
    k_max: int = 8,
    eta_init: float = 1.0,
    return_details: bool = False,
):
    """Model order minimizing 2*nll + (6K+1) ln(m_rx m_tx n_pri).

    For each candidate order the top-K peak geometries are held fixed and
    only amplitudes and the noise level are refit (coarse pass). Ties
    resolve to the smaller order.
    """
    if adc is None:
        adc = meas.adc
    k_max = min(k_max, len(peaks))
    penalty_base = np.log(sys.m_rx * sys.m_tx * sys.n_pri)
    scores = []
    best_k, best_score = 0, np.inf
    betas_prev = np.zeros(0, dtype=complex)
    eta_prev = eta_init
    for kk in range(k_max + 1):
        thetas = np.array([p.theta for p in peaks[:kk]])
        omegas = np.array([p.omega for p in peaks[:kk]])
        beta0 = np.concatenate([betas_prev, [peaks[kk - 1].amplitude]]) if kk else np.zeros(0, complex)
        betas, eta, val = fit_amplitudes(
            thetas, omegas, beta0, eta_prev, meas, sys, adc
        )
        betas_prev, eta_prev = betas, eta
        score = 2.0 * val + (6 * kk + 1) * penalty_base
        scores.append(score)
        if score < best_score:
            best_k, best_score = kk, score
    if return_details:
        return best_k, np.asarray(scores)
    return best_k


def greedy_candidates(
    peaks,
    meas: MeasurementSet,
    sys: RadarSystem,
    adc: AdcConfig,
    grid: Grid,
    a0: np.ndarray,
    a1: np.ndarray,
    k_want: int,
    eta_init: float = 1.0,
    n_seed: int = 1,
    n_trial: int = 8,
):
    """Augment an image peak list by likelihood matching pursuit.

    Starting from the n_seed strongest image peaks, repeatedly refit
    amplitudes and the noise level of the current candidates (exact
    likelihood, convex), scan the amplitude-gradient image over all grid
    cells, and add the one of the n_trial best-scoring cells whose joint
    refit actually lowers the likelihood most. A sparse-spectrum image
    can rank a weak target below sidelobe ghosts of a strong one, and
    reduced-array ambiguities can put the raw gradient argmax on a wrong
    cell; trial refits are fooled by neither. a0/a1 are the dictionary
    rows of the high-precision / one-bit channels (angle-fastest
    columns). Returned candidates are sorted by fitted power.
    """
    if adc is None:
        adc = meas.adc
    h1 = adc.h1()
    y0, y1 = meas.y0, meas.y1
    energy = np.sum(np.abs(a0) ** 2, axis=0) + np.sum(np.abs(a1) ** 2, axis=0)
    cells = []
    for pk in peaks:
        if len(cells) >= max(n_seed, 1):
            break
        if (pk.i_theta, pk.i_omega) not in cells:
            cells.append((pk.i_theta, pk.i_omega))
    if not cells and k_want:
        cells.append((grid.k_theta // 2, grid.k_omega // 2))

    def _fit(cell_list, beta0, eta0):
        thetas = grid.theta_points[[c[0] for c in cell_list]]
        omegas = grid.omega_points[[c[1] for c in cell_list]]
        return fit_amplitudes(thetas, omegas, beta0, eta0, meas, sys, adc)

    eta = max(float(eta_init), 1e-8)
    betas, eta, val = _fit(cells, np.zeros(len(cells), complex), eta)
    while len(cells) < k_want:
        flat = [grid.flat_index(*c) for c in cells]
        s0 = a0[:, flat] @ betas
        s1 = a1[:, flat] @ betas
        g_r = y1.real * _SQRT2 * (s1.real - eta * h1.real)
        g_i = y1.imag * _SQRT2 * (s1.imag - eta * h1.imag)
        c_r = f_prime(g_r) * y1.real * _SQRT2 if y1.size else np.zeros(0)
        c_i = f_prime(g_i) * y1.imag * _SQRT2 if y1.size else np.zeros(0)
        r = eta * y0 - s0
        grad_img = a1.conj().T @ (c_r + 1j * c_i) - 2.0 * (a0.conj().T @ r)
        score = np.abs(grad_img) ** 2 / energy
        order = np.argsort(-score)
        trials = []
        for k_flat in order:
            if len(trials) >= n_trial:
                break
            cell = (int(k_flat % grid.k_theta), int(k_flat // grid.k_theta))
            if cell not in cells:
                trials.append(cell)
        if not trials:
            break
        best = None
        beta0 = np.concatenate([betas, [0.0]])
        for cell in trials:
            cand = _fit(cells + [cell], beta0, eta)
            if best is None or cand[2] < best[0][2]:
                best = (cand, cell)
        (betas, eta, val), chosen = best
        cells.append(chosen)
    out = [
        Peak(
            theta=float(grid.theta_points[c[0]]),
            omega=float(grid.omega_points[c[1]]),
            amplitude=complex(b),
            power=float(abs(b) ** 2),
            i_theta=c[0],
            i_omega=c[1],
        )
        for c, b in zip(cells, betas)
    ]
    out.sort(key=lambda pk: -pk.power)
    return out


@dataclass
class RefineResult:
    estimates: list
    eta: float
    n_cycles: int
    nll_trace: np.ndarray
    flags: tuple = field(default_factory=tuple)


def _block_objective(x, k, include_eta, ctx):
    """Value and gradient of the likelihood over one target's block."""
    theta, omega = x[0], x[1]
    beta = x[2] + 1j * x[3]
    eta = x[4] if include_eta else ctx["eta"]
    sys, adc = ctx["sys"], ctx["adc"]
    hp = ctx["hp_mask"]
    a = atom(sys, theta, omega)
    da_t, da_w = d_atom(sys, theta, omega)
    a0, a1 = a[hp], a[~hp]
    s0 = ctx["s0_other"] + beta * a0
    s1 = ctx["s1_other"] + beta * a1
    y0, y1, h1 = ctx["y0"], ctx["y1"], ctx["h1"]
    nl = y0.size

    g_r = y1.real * _SQRT2 * (s1.real - eta * h1.real)
    g_i = y1.imag * _SQRT2 * (s1.imag - eta * h1.imag)
    val = np.sum(neg_log_phi(g_r)) + np.sum(neg_log_phi(g_i))
    r = eta * y0 - s0
    val += np.real(np.vdot(r, r)) - nl * np.log(eta**2) + nl * np.log(np.pi) + ctx["nll_rest"]

    c_r = f_prime(g_r) * y1.real * _SQRT2 if y1.size else np.zeros(0)
    c_i = f_prime(g_i) * y1.imag * _SQRT2 if y1.size else np.zeros(0)
    da1_t, da1_w = da_t[~hp], da_w[~hp]
    da0_t, da0_w = da_t[hp], da_w[hp]
    grad = np.zeros(5 if include_eta else 4)
    db_t, db_w = beta * da1_t, beta * da1_w
    grad[0] = np.dot(c_r, db_t.real) + np.dot(c_i, db_t.imag)
    grad[1] = np.dot(c_r, db_w.real) + np.dot(c_i, db_w.imag)
    grad[2] = np.dot(c_r, a1.real) + np.dot(c_i, a1.imag)
    grad[3] = -np.dot(c_r, a1.imag) + np.dot(c_i, a1.real)
    grad[0] += -2.0 * np.real(np.vdot(r, beta * da0_t))
    grad[1] += -2.0 * np.real(np.vdot(r, beta * da0_w))
    grad[2] += -2.0 * np.real(np.vdot(r, a0))
    grad[3] += 2.0 * np.imag(np.vdot(r, a0))
    if include_eta:
        grad[4] = (
            -np.dot(c_r, h1.real)
            - np.dot(c_i, h1.imag)
            + 2.0 * np.real(np.vdot(r, y0))
            - 2.0 * nl / eta
        )
    return float(val), grad


def cyclic_refine(
    initial,
    eta_init: float,
    meas: MeasurementSet,
    sys: RadarSystem,
    adc: AdcConfig,
    grid: Grid,
    max_cycles: int = 50,
    tol: float = 1e-6,
    eta_min: float = 1e-8,
) -> RefineResult:
    """Cyclically minimize the likelihood one target at a time.

    Targets are visited in order of descending initial power; the noise
    level is refit together with the strongest target only. Each block is
    a box-bounded quasi-Newton search confined to half a grid cell in
    angle and Doppler around the block's current estimate. A block whose
    search fails to improve keeps its previous value (flagged).
    """
    if adc is None:
        adc = meas.adc
    if not initial:
        raise ValueError("cyclic_refine requires at least one target")
    order = np.argsort([-abs(e.beta) ** 2 for e in initial])
    ests = [TargetEstimate(initial[i].theta, initial[i].omega, initial[i].beta) for i in order]
    eta = max(float(eta_init), eta_min)
    k_hat = len(ests)
    hp = adc.hp_mask()
    h1 = adc.h1()
    half_theta = (np.pi / 2) / grid.k_theta
    half_omega = np.pi / grid.k_omega

    atoms0, atoms1 = [], []
    for e in ests:
        a = atom(sys, e.theta, e.omega)
        atoms0.append(a[hp])
        atoms1.append(a[~hp])

    flags = []
    trace = [nll(ests, eta, meas, sys, adc)]
    n_cycles = 0
    for cycle in range(max_cycles):
        n_cycles = cycle + 1
        for k in range(k_hat):
            include_eta = k == 0
            betas = np.array([e.beta for e in ests])
            s0_all = sum(b * a for b, a in zip(betas, atoms0)) if k_hat else 0
            s1_all = sum(b * a for b, a in zip(betas, atoms1)) if k_hat else 0
            ctx = {
                "sys": sys,
                "adc": adc,
                "hp_mask": hp,
                "y0": meas.y0,
                "y1": meas.y1,
                "h1": h1,
                "s0_other": s0_all - betas[k] * atoms0[k],
                "s1_other": s1_all - betas[k] * atoms1[k],
                "eta": eta,
                "nll_rest": 0.0,
            }
            e_k = ests[k]
            x0 = [e_k.theta, e_k.omega, e_k.beta.real, e_k.beta.imag]
            bounds = [
                (
                    max(e_k.theta - half_theta, -_THETA_EDGE),
                    min(e_k.theta + half_theta, _THETA_EDGE),
                ),
                (e_k.omega - half_omega, e_k.omega + half_omega),
                (None, None),
                (None, None),
            ]
            if include_eta:
                x0.append(eta)
                bounds.append((eta_min, None))
            before, _ = _block_objective(np.asarray(x0), k, include_eta, ctx)
            res = sopt.minimize(
                _block_objective,
                np.asarray(x0),
                args=(k, include_eta, ctx),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": 200, "ftol": 1e-12, "gtol": 1e-6},
            )
            if np.isfinite(res.fun) and res.fun <= before:
                ests[k] = TargetEstimate(
                    float(res.x[0]), float(res.x[1]), complex(res.x[2], res.x[3])
                )
                if include_eta:
                    eta = float(res.x[4])
                a = atom(sys, ests[k].theta, ests[k].omega)
                atoms0[k] = a[hp]
                atoms1[k] = a[~hp]
            else:
                flags.append(f"block {k} kept previous value at cycle {cycle}")
        trace.append(nll(ests, eta, meas, sys, adc))
        if abs(trace[-2] - trace[-1]) < tol * max(1.0, abs(trace[-2])):
            break

    return RefineResult(
        estimates=ests,
        eta=eta,
        n_cycles=n_cycles,
        nll_trace=np.asarray(trace),
        flags=tuple(flags),
    )


def amplitudes_from_estimates(estimates, eta: float) -> np.ndarray:
    """Convert scaled amplitudes back to physical ones: b = beta / eta."""
    return np.array([e.beta / eta for e in estimates])
