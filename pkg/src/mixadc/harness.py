"""Experiment runner: bound sweeps, Monte-Carlo error studies, imaging.

Experiments are driven by a JSON config (schema below) with paper-scale
defaults and per-experiment reduced "desk" profiles. Randomness flows
through one seed tree: experiment -> trial -> {noise, code, thresholds},
so every output is reproducible from the master seed.
"""

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .baseline import matched_filter
from .crb import crb_report, fim_hp_blocks, fim_mixed, fim_onebit, fim_unknown_sigma
from .likelihood import TargetEstimate
from .mlikes import MlikesOptions, build_problem, mlikes_run
from .quantize import AdcConfig, avg_received_power, gen_thresholds, quantize_mixed
from .refine import cyclic_refine, greedy_candidates, mbic_select, pick_peaks
from .signal_model import Grid, RadarSystem, Scene, gen_code, simulate, vec

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None


def limit_blas_threads(n: int = 1) -> None:
    """Pin BLAS thread pools; parallelism lives at the trial level instead.

    The iterative solvers issue thousands of small factorizations; on
    shared or few-core machines multi-threaded BLAS turns each one into a
    fork/join stall that is orders of magnitude slower than the math.
    """
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=n, user_api="blas")
    except Exception:  # pragma: no cover - optional dependency path
        pass

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "system": {
            "type": "object",
            "properties": {
                "m_tx": {"type": "integer", "minimum": 1},
                "m_rx": {"type": "integer", "minimum": 1},
                "d_tx": {"type": "number", "exclusiveMinimum": 0},
                "d_rx": {"type": "number", "exclusiveMinimum": 0},
                "n_pri": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "grid": {
            "type": "object",
            "properties": {
                "k_theta": {"type": "integer", "minimum": 1},
                "k_omega": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "adc": {
            "type": "object",
            "properties": {
                "pattern": {
                    "enum": ["hp", "onebit", "mixed1", "mixed2", "mixed3"]
                },
                "delta": {"type": "array", "items": {"enum": [0, 1]}},
                "n_levels": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
        "scene": {
            "type": "object",
            "properties": {
                "theta_deg": {"type": "array", "items": {"type": "number"}},
                "omega": {"type": "array", "items": {"type": "number"}},
                "amp1_mag": {"type": "number"},
                "amp_phase_deg": {"type": "number"},
                "r_sweep": {"type": "array", "items": {"type": "number"}},
                "snr2_db": {"type": "number"},
                "n_targets": {"type": "integer", "minimum": 0},
                "amp_range": {"type": "array", "items": {"type": "number"}},
                "min_snr_db": {"type": "number"},
                "n_offgrid": {"type": "integer", "minimum": 0},
                "min_sep_cells": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "run": {
            "type": "object",
            "properties": {
                "trials": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "out_dir": {"type": "string"},
                "workers": {"type": "integer", "minimum": 1},
                "accel": {"enum": ["fista", "alg1", "off"]},
                "k_max": {"type": "integer", "minimum": 0},
                "imaging_seeds": {"type": "integer", "minimum": 1},
                "methods": {
                    "type": "array",
                    "items": {"enum": ["mf", "likes", "onebit_likes", "mlikes"]},
                },
                "write_pgm": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

# Section V defaults: full arrays, 64 PRIs, dense grid.
PAPER_PROFILE = {
    "system": {"m_tx": 10, "m_rx": 10, "d_tx": 5.0, "d_rx": 0.5, "n_pri": 64},
    "grid": {"k_theta": 128, "k_omega": 256},
    "adc": {"pattern": "mixed1", "n_levels": 8},
    "scene": {
        "theta_deg": [22.5, 25.3125],
        "omega": [1.3, 1.4],
        "amp1_mag": 1.0,
        "amp_phase_deg": 45.0,
        "r_sweep": [1.0, 10.0, 100.0, 1000.0],
        "snr2_db": 10.0,
    },
    "run": {
        "trials": 500,
        "seed": 20240901,
        "out_dir": "out",
        "workers": 2,
        "accel": "fista",
        "k_max": 6,
        "imaging_seeds": 5,
        "methods": ["mf", "likes", "onebit_likes", "mlikes"],
        "write_pgm": False,
    },
}

# Reduced profiles sized so each experiment completes on a laptop. The
# two-target scenes keep the same structure as the full profile, with
# separations re-proportioned to the smaller apertures and placed on the
# default grid.
DESK_PROFILES = {
    "crb-sweep": {
        "system": {"m_tx": 4, "m_rx": 6, "d_tx": 3.0, "d_rx": 0.5, "n_pri": 16},
    },
    "rmse": {
        "system": {"m_tx": 2, "m_rx": 4, "d_tx": 2.0, "d_rx": 0.5, "n_pri": 16},
        "grid": {"k_theta": 16, "k_omega": 64},
        "scene": {
            "theta_deg": [16.875, -28.125],
            "omega": [np.pi / 2, -np.pi / 2],
            "r_sweep": [1.0, 10.0],
            "snr2_db": 15.0,
        },
        "run": {"trials": 100, "k_max": 4},
    },
    "imaging": {
        "system": {"m_tx": 10, "m_rx": 10, "d_tx": 5.0, "d_rx": 0.5, "n_pri": 32},
        "grid": {"k_theta": 64, "k_omega": 128},
        "scene": {
            "n_targets": 30,
            "amp_range": [0.01, 1.0],
            "min_snr_db": 10.0,
            "n_offgrid": 2,
            "min_sep_cells": 3,
        },
        "run": {"imaging_seeds": 5},
    },
    "mbic": {
        "system": {"m_tx": 2, "m_rx": 4, "d_tx": 2.0, "d_rx": 0.5, "n_pri": 16},
        "grid": {"k_theta": 16, "k_omega": 32},
        "run": {"trials": 100, "k_max": 4},
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = val
    return out


@dataclass
class ExperimentConfig:
    system: dict
    grid: dict
    adc: dict
    scene: dict
    run: dict

    @classmethod
    def load(cls, path=None, scale: str = "paper", experiment: str = None, overrides: dict = None):
        """Merge defaults, desk profile, config file, and CLI overrides."""
        cfg = dict(PAPER_PROFILE)
        if scale == "desk" and experiment in DESK_PROFILES:
            cfg = _deep_merge(cfg, DESK_PROFILES[experiment])
        if path is not None:
            with open(path) as fh:
                user = json.load(fh)
            validate_config(user)
            cfg = _deep_merge(cfg, user)
        if overrides:
            cfg = _deep_merge(cfg, overrides)
        validate_config(cfg)
        return cls(
            system=cfg["system"],
            grid=cfg["grid"],
            adc=cfg["adc"],
            scene=cfg["scene"],
            run=cfg["run"],
        )


def validate_config(cfg: dict) -> None:
    if jsonschema is not None:
        jsonschema.validate(cfg, CONFIG_SCHEMA)


def seed_tree(master: int, *path: int) -> np.random.SeedSequence:
    """Deterministic child seed for a position in the experiment tree."""
    return np.random.SeedSequence(entropy=master, spawn_key=tuple(path))


def delta_pattern(name_or_list, m_rx: int) -> np.ndarray:
    """Resolve an ADC indicator: named patterns place hp pairs first."""
    if isinstance(name_or_list, (list, tuple, np.ndarray)):
        delta = np.asarray(name_or_list, dtype=int)
        if delta.size != m_rx:
            raise ValueError(f"delta length {delta.size} != m_rx {m_rx}")
        return delta
    n_hp = {"hp": m_rx, "onebit": 0, "mixed1": 1, "mixed2": 2, "mixed3": m_rx // 2}[
        name_or_list
    ]
    delta = np.zeros(m_rx, dtype=int)
    delta[:n_hp] = 1
    return delta


def build_system(cfg: ExperimentConfig, code_seed) -> RadarSystem:
    s = cfg.system
    code = gen_code(s["m_tx"], s["n_pri"], np.random.default_rng(code_seed))
    return RadarSystem(
        m_tx=s["m_tx"],
        m_rx=s["m_rx"],
        d_tx=s["d_tx"],
        d_rx=s["d_rx"],
        n_pri=s["n_pri"],
        code=code,
    )


def two_target_scene(cfg: ExperimentConfig, r: float) -> Scene:
    sc = cfg.scene
    phase = np.exp(1j * np.deg2rad(sc["amp_phase_deg"]))
    amp1 = sc["amp1_mag"] * phase
    noise_var = 10.0 ** (-sc["snr2_db"] / 10.0) / r**2
    return Scene(
        thetas=np.deg2rad(sc["theta_deg"]),
        omegas=np.asarray(sc["omega"], dtype=float),
        amps=np.array([amp1, amp1 / r]),
        noise_var=noise_var,
    )


def random_imaging_scene(cfg: ExperimentConfig, grid: Grid, rng) -> tuple:
    """Scatter targets on distinct grid cells; a few are pushed off-grid.

    Returns (scene, truth) where truth rows are (theta, omega, amp,
    offgrid_flag). Amplitude magnitudes are uniform in amp_range except
    the off-grid ones, drawn from the upper half so refinement has
    signal to work with. Noise is set by the weakest target's SNR.
    """
    sc = cfg.scene
    n_targets = sc["n_targets"]
    min_sep = sc.get("min_sep_cells", 3)
    cells = []
    guard = 0
    while len(cells) < n_targets:
        guard += 1
        if guard > 100000:
            raise RuntimeError("cannot place targets with requested separation")
        cand = (
            int(rng.integers(1, grid.k_theta - 1)),
            int(rng.integers(1, grid.k_omega - 1)),
        )
        if all(
            max(abs(cand[0] - c[0]), abs(cand[1] - c[1])) >= min_sep for c in cells
        ):
            cells.append(cand)
    lo, hi = sc["amp_range"]
    mags = rng.uniform(lo, hi, size=n_targets)
    n_off = min(sc.get("n_offgrid", 0), n_targets)
    off_idx = rng.choice(n_targets, size=n_off, replace=False)
    mags[off_idx] = rng.uniform(0.5 * (lo + hi), hi, size=n_off)
    phases = rng.uniform(0, 2 * np.pi, size=n_targets)
    thetas = grid.theta_points[[c[0] for c in cells]].copy()
    omegas = grid.omega_points[[c[1] for c in cells]].copy()
    offgrid = np.zeros(n_targets, dtype=bool)
    for j, k in enumerate(off_idx):
        offgrid[k] = True
        sign = 1 if j % 2 == 0 else -1
        thetas[k] += sign * 0.40 * grid.cell_theta
        omegas[k] -= sign * 0.35 * grid.cell_omega
    amps = mags * np.exp(1j * phases)
    noise_var = float(mags.min() ** 2 / 10.0 ** (sc["min_snr_db"] / 10.0))
    scene = Scene(thetas=thetas, omegas=omegas, amps=amps, noise_var=noise_var)
    return scene, offgrid


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_matrix(path, matrix) -> None:
    """Plain-text dump, one row per angle index."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.asarray(matrix), fmt="%.8e")


def write_pgm(path, image, floor_db: float = -60.0) -> None:
    """8-bit grayscale dump of a power image in dB."""
    img = np.asarray(image, dtype=float)
    peak = img.max()
    if peak <= 0:
        db = np.full_like(img, floor_db)
    else:
        with np.errstate(divide="ignore"):
            db = 10.0 * np.log10(np.where(img > 0, img / peak, 10 ** (floor_db / 10)))
    db = np.clip(db, floor_db, 0.0)
    gray = np.round((db - floor_db) / (-floor_db) * 255).astype(int)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"P2\n{gray.shape[1]} {gray.shape[0]}\n255\n")
        for row in gray:
            fh.write(" ".join(str(v) for v in row) + "\n")


PARAM_UNITS = {
    "theta1": "rad",
    "theta2": "rad",
    "omega1": "rad/PRI",
    "omega2": "rad/PRI",
    "b_re1": "1",
    "b_re2": "1",
    "b_im1": "1",
    "b_im2": "1",
}


def _param_names(k: int):
    names = []
    for block, unit in (("theta", "rad"), ("omega", "rad/PRI"), ("b_re", "1"), ("b_im", "1")):
        names += [(f"{block}{i + 1}", unit) for i in range(k)]
    return names


def run_crb_sweep(cfg: ExperimentConfig, out_dir=None) -> list:
    """Root CRBs of every receiver over the amplitude-ratio sweep.

    The noise power tracks the sweep to hold the weak target's SNR fixed;
    thresholds are redrawn per ratio from the matching received power.
    Writes crb_sweep.csv and returns the rows.
    """
    limit_blas_threads()
    master = cfg.run["seed"]
    sys = build_system(cfg, seed_tree(master, 0))
    receivers = ["hp", "onebit", "mixed1", "mixed2", "mixed3"]
    rows = []
    for i_r, r in enumerate(cfg.scene["r_sweep"]):
        scene = two_target_scene(cfg, r)
        p_out = avg_received_power(sys, scene)
        thr_rng = np.random.default_rng(seed_tree(master, 1, i_r))
        thresholds = gen_thresholds(
            sys.m_rx, sys.n_pri, p_out, thr_rng, cfg.adc.get("n_levels", 8)
        )
        names = _param_names(scene.n_targets)
        for rx in receivers:
            delta = delta_pattern(rx, sys.m_rx)
            adc = AdcConfig(delta=delta, thresholds=thresholds)
            if rx == "hp":
                rep = crb_report(fim_hp_blocks(sys, scene))
            elif rx == "onebit":
                rep = crb_report(fim_onebit(sys, scene, thresholds))
            else:
                rep = crb_report(fim_mixed(sys, scene, adc))
            for (name, unit), val in zip(names, rep.root_crb):
                rows.append([r, rx, name, unit, val])
    if out_dir is not None:
        write_csv(
            Path(out_dir) / "crb_sweep.csv",
            ["r_amplitude_ratio", "receiver", "parameter", "units", "root_crb"],
            rows,
        )
    return rows


def _assign_to_truth(scene: Scene, estimates, eta: float, grid: Grid):
    """Nearest-pair assignment of refined targets to the truth.

    Distances are grid-cell-normalized with circular Doppler difference;
    returns {truth_index: (theta, omega, b)} for the assigned pairs.
    """
    if not estimates:
        return {}
    k_true, k_est = scene.n_targets, len(estimates)
    cost = np.zeros((k_true, k_est))
    for i in range(k_true):
        for j in range(k_est):
            dth = (scene.thetas[i] - estimates[j].theta) / grid.cell_theta
            dom = scene.omegas[i] - estimates[j].omega
            dom = (dom + np.pi) % (2 * np.pi) - np.pi
            cost[i, j] = dth**2 + (dom / grid.cell_omega) ** 2
    rows, cols = linear_sum_assignment(cost)
    out = {}
    for i, j in zip(rows, cols):
        est = estimates[j]
        out[i] = (est.theta, est.omega, est.beta / eta)
    return out


def _rmse_trial(args):
    """One Monte-Carlo trial: simulate, quantize, estimate, refine."""
    (cfg, r, trial) = args
    limit_blas_threads()
    master = cfg.run["seed"]
    grid = Grid(k_theta=cfg.grid["k_theta"], k_omega=cfg.grid["k_omega"])
    scene = two_target_scene(cfg, r)
    i_r = list(cfg.scene["r_sweep"]).index(r)
    sys = build_system(cfg, seed_tree(master, 2, i_r, trial, 0))
    noise_rng = np.random.default_rng(seed_tree(master, 2, i_r, trial, 1))
    thr_rng = np.random.default_rng(seed_tree(master, 2, i_r, trial, 2))
    p_out = avg_received_power(sys, scene)
    thresholds = gen_thresholds(
        sys.m_rx, sys.n_pri, p_out, thr_rng, cfg.adc.get("n_levels", 8)
    )
    delta = delta_pattern(cfg.adc.get("delta", cfg.adc.get("pattern", "mixed1")), sys.m_rx)
    adc = AdcConfig(delta=delta, thresholds=thresholds)
    meas = quantize_mixed(simulate(sys, scene, noise_rng), adc)

    opts = MlikesOptions(accel=cfg.run.get("accel", "fista"))
    prob = build_problem(meas, sys, grid, adc)
    est = mlikes_run(meas, sys, grid, adc, opts, problem=prob)
    eta_hand = float(np.clip(est.eta1, 1e-3, 1e4))
    k_max = cfg.run.get("k_max", 4)
    image_peaks = pick_peaks(est.alpha * est.eta1, grid, max_k=k_max + 2)
    peaks = greedy_candidates(
        image_peaks, meas, sys, adc, grid, prob.a0, prob.a1, k_max + 2, eta_hand
    )
    k_hat = mbic_select(peaks, meas, sys, adc, k_max=k_max, eta_init=eta_hand)
    errors = {}
    if k_hat >= 1:
        init = [
            TargetEstimate(p.theta, p.omega, p.amplitude) for p in peaks[:k_hat]
        ]
        result = cyclic_refine(init, eta_hand, meas, sys, adc, grid)
        assigned = _assign_to_truth(scene, result.estimates, result.eta, grid)
        for i, (th, om, b) in assigned.items():
            dom = scene.omegas[i] - om
            dom = (dom + np.pi) % (2 * np.pi) - np.pi
            errors[i] = (
                scene.thetas[i] - th,
                dom,
                scene.amps[i].real - b.real,
                scene.amps[i].imag - b.imag,
            )
    rep = fim_unknown_sigma("mixed", sys, scene, adc)
    return {"trial": trial, "k_hat": k_hat, "errors": errors, "crb_diag": np.diag(rep.crb)}


def run_rmse_mc(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Monte-Carlo root-mean-square errors paired with the bound.

    Per ratio r: seeded trials run the full estimation pipeline, errors
    are accumulated per truth target after nearest-pair matching, and
    the matching root-CRB (unknown noise, mixed FIM averaged over the
    per-trial code/threshold draws) is reported alongside. Also emits
    the model-order histogram.
    """
    limit_blas_threads()
    trials = cfg.run["trials"]
    workers = cfg.run.get("workers", 1)
    rows, hist_rows = [], []
    summary = {}
    for r in cfg.scene["r_sweep"]:
        args = [(cfg, r, t) for t in range(trials)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_rmse_trial, args, chunksize=4))
        else:
            results = [_rmse_trial(a) for a in args]
        results.sort(key=lambda d: d["trial"])
        k_hats = [res["k_hat"] for res in results]
        for k_val in sorted(set(k_hats)):
            hist_rows.append([r, k_val, k_hats.count(k_val)])
        crb_mean = np.mean([res["crb_diag"] for res in results], axis=0)
        scene = two_target_scene(cfg, r)
        k = scene.n_targets
        names = _param_names(k)
        blocks = {}
        for i_target in range(k):
            errs = np.array(
                [res["errors"][i_target] for res in results if i_target in res["errors"]]
            )
            n_match = errs.shape[0]
            for i_block in range(4):
                name, unit = names[i_block * k + i_target]
                rmse = (
                    float(np.sqrt(np.mean(errs[:, i_block] ** 2))) if n_match else np.nan
                )
                rcrb = float(np.sqrt(crb_mean[i_block * k + i_target]))
                rows.append([r, name, unit, rmse, rcrb, n_match, trials])
                blocks[name] = (rmse, rcrb)
        summary[r] = {"blocks": blocks, "k_hats": k_hats}
    if out_dir is not None:
        write_csv(
            Path(out_dir) / "rmse.csv",
            ["r_amplitude_ratio", "parameter", "units", "rmse", "root_crb", "n_matched", "trials"],
            rows,
        )
        write_csv(
            Path(out_dir) / "khat_histogram.csv",
            ["r_amplitude_ratio", "k_hat", "count"],
            hist_rows,
        )
    return summary


def count_recovered(image: np.ndarray, scene: Scene, grid: Grid, n_peaks: int, cell_tol: int = 1) -> int:
    """Targets with an image peak within cell_tol grid cells (one use per peak)."""
    flat = np.asarray(image).T.reshape(-1)  # back to angle-fastest flat order
    peaks = pick_peaks(np.sqrt(np.maximum(flat, 0)), grid, n_peaks)
    taken = np.zeros(len(peaks), dtype=bool)
    hits = 0
    order = np.argsort(-np.abs(scene.amps))
    for i in order:
        i_t = np.argmin(np.abs(grid.theta_points - scene.thetas[i]))
        i_w = np.argmin(
            np.abs(
                (grid.omega_points - scene.omegas[i] + np.pi) % (2 * np.pi) - np.pi
            )
        )
        for j, pk in enumerate(peaks):
            if taken[j]:
                continue
            if max(abs(pk.i_theta - i_t), abs(pk.i_omega - i_w)) <= cell_tol:
                taken[j] = True
                hits += 1
                break
    return hits


def _imaging_one_seed(cfg: ExperimentConfig, seed_idx: int, out_dir=None) -> dict:
    master = cfg.run["seed"]
    grid = Grid(k_theta=cfg.grid["k_theta"], k_omega=cfg.grid["k_omega"])
    scene_rng = np.random.default_rng(seed_tree(master, 3, seed_idx, 0))
    sys = build_system(cfg, seed_tree(master, 3, seed_idx, 1))
    noise_rng = np.random.default_rng(seed_tree(master, 3, seed_idx, 2))
    thr_rng = np.random.default_rng(seed_tree(master, 3, seed_idx, 3))
    scene, offgrid = random_imaging_scene(cfg, grid, scene_rng)
    p_out = avg_received_power(sys, scene)
    thresholds = gen_thresholds(
        sys.m_rx, sys.n_pri, p_out, thr_rng, cfg.adc.get("n_levels", 8)
    )
    x = simulate(sys, scene, noise_rng)
    n_targets = scene.n_targets
    methods = cfg.run.get("methods", ["mf", "likes", "onebit_likes", "mlikes"])
    opts = MlikesOptions(accel=cfg.run.get("accel", "fista"))
    out = {"hits": {}, "offgrid_err": [], "scene": scene, "images": {}}

    def _img_of(est):
        return grid.image_from_flat(np.abs(est.alpha) ** 2)

    est_mixed = None
    adc_mixed = None
    for method in methods:
        if method == "mf":
            image = matched_filter(x, sys, grid)
        else:
            pattern = {"likes": "hp", "onebit_likes": "onebit", "mlikes": "mixed1"}[method]
            delta = delta_pattern(pattern, sys.m_rx)
            adc = AdcConfig(delta=delta, thresholds=thresholds)
            meas = quantize_mixed(x, adc)
            prob = build_problem(meas, sys, grid, adc)
            est = mlikes_run(meas, sys, grid, adc, opts, problem=prob)
            image = _img_of(est)
            if method == "mlikes":
                est_mixed, adc_mixed, meas_mixed, prob_mixed = est, adc, meas, prob
        out["images"][method] = image
        out["hits"][method] = count_recovered(image, scene, grid, n_peaks=n_targets)
        if out_dir is not None:
            write_matrix(Path(out_dir) / f"seed{seed_idx}_{method}_image.txt", image)
            if cfg.run.get("write_pgm", False):
                write_pgm(Path(out_dir) / f"seed{seed_idx}_{method}_image.pgm", image)

    if est_mixed is not None:
        eta_hand = float(np.clip(est_mixed.eta1, 1e-3, 1e4))
        image_peaks = pick_peaks(
            est_mixed.alpha * est_mixed.eta1, grid, max_k=n_targets + 6
        )
        peaks = greedy_candidates(
            image_peaks,
            meas_mixed,
            sys,
            adc_mixed,
            grid,
            prob_mixed.a0,
            prob_mixed.a1,
            n_targets + 6,
            eta_hand,
            n_seed=min(n_targets, len(image_peaks)),
        )
        k_hat = mbic_select(
            peaks, meas_mixed, sys, adc_mixed, k_max=n_targets + 4, eta_init=eta_hand
        )
        refined = []
        if k_hat >= 1:
            init = [TargetEstimate(p.theta, p.omega, p.amplitude) for p in peaks[:k_hat]]
            result = cyclic_refine(init, eta_hand, meas_mixed, sys, adc_mixed, grid)
            assigned = _assign_to_truth(scene, result.estimates, result.eta, grid)
            for i, (th, om, b) in assigned.items():
                refined.append([i, th, om, b.real, b.imag])
                if offgrid[i]:
                    dth = abs(scene.thetas[i] - th) / grid.cell_theta
                    dom = abs(
                        (scene.omegas[i] - om + np.pi) % (2 * np.pi) - np.pi
                    ) / grid.cell_omega
                    out["offgrid_err"].append(max(dth, dom))
        out["k_hat"] = k_hat
        if out_dir is not None:
            write_csv(
                Path(out_dir) / f"seed{seed_idx}_targets_refined.csv",
                ["truth_index", "theta_rad", "omega_rad_per_pri", "b_re", "b_im"],
                refined,
            )
    if out_dir is not None:
        write_csv(
            Path(out_dir) / f"seed{seed_idx}_targets_true.csv",
            ["theta_rad", "omega_rad_per_pri", "b_re", "b_im", "offgrid"],
            [
                [scene.thetas[i], scene.omegas[i], scene.amps[i].real, scene.amps[i].imag, int(offgrid[i])]
                for i in range(n_targets)
            ],
        )
    return out


def run_imaging(cfg: ExperimentConfig, out_dir=None) -> list:
    """Multi-target imaging comparison across receiver front ends.

    For each seed: one raw snapshot feeds the matched filter and the
    sparse solver under full-precision, one-bit, and mixed front ends
    (same thresholds), then the mixed result is refined into a target
    list. Emits image dumps and target CSVs per seed; returns summaries.
    """
    limit_blas_threads()
    return [
        _imaging_one_seed(cfg, s, out_dir=out_dir)
        for s in range(cfg.run.get("imaging_seeds", 5))
    ]


def selftest() -> int:
    """Quick end-to-end sanity checks; returns a process exit code."""
    limit_blas_threads()
    t0 = time.time()
    checks = []

    from .special import g_func, log_phi

    x = np.linspace(-30, 30, 2001)
    g = g_func(x)
    checks.append(("quantizer weight in (0, 4]", bool(np.all(g > 0) and np.all(g <= 4.0 + 1e-12))))
    checks.append(("log-cdf complement", bool(
        np.allclose(np.exp(log_phi(x / 4)) + np.exp(log_phi(-x / 4)), 1.0, atol=1e-12)
    )))

    rng = np.random.default_rng(7)
    code = gen_code(3, 8, rng)
    sys = RadarSystem(m_tx=3, m_rx=4, d_tx=2.0, d_rx=0.5, n_pri=8, code=code)
    scene = Scene(thetas=[0.3, -0.5], omegas=[1.0, -2.0], amps=[1 + 0.5j, 0.2 - 0.1j], noise_var=0.05)
    from .crb import fim_hp_blocks, fim_hp_khatri_rao

    f_a, f_b = fim_hp_blocks(sys, scene), fim_hp_khatri_rao(sys, scene)
    rel = np.abs(f_a - f_b).max() / np.abs(f_a).max()
    checks.append(("information-matrix route agreement", bool(rel < 1e-10)))

    grid = Grid(k_theta=8, k_omega=16)
    sc1 = Scene(thetas=[grid.theta_points[3]], omegas=[grid.omega_points[5]], amps=[1.0], noise_var=1e-2)
    thr = gen_thresholds(4, 8, avg_received_power(sys, sc1), rng)
    adc = AdcConfig(delta=np.array([1, 0, 0, 0]), thresholds=thr)
    meas = quantize_mixed(simulate(sys, sc1, rng), adc)
    est = mlikes_run(meas, sys, grid, adc, MlikesOptions(accel="off", track_objective=True))
    tr = est.objective_trace
    checks.append(("solver objective non-increasing", bool(np.all(np.diff(tr) <= 1e-8 * np.abs(tr[:-1]))))),
    checks.append(("solver finds the on-grid target", bool(
        int(np.argmax(np.abs(est.alpha))) == grid.flat_index(3, 5)
    )))

    ok = True
    for name, passed in checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}")
        ok &= passed
    print(f"selftest finished in {time.time() - t0:.1f} s")
    return 0 if ok else 1
