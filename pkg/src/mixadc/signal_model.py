"""Array geometry, slow-time codes, dictionary atoms, and raw snapshot synthesis.

Conventions used throughout the package:

* Angles are radians in (-pi/2, pi/2); Doppler shifts are radians per PRI
  in [-pi, pi).
* The unquantized snapshot is an m_rx x n_pri complex matrix X whose
  column n is the array output at PRI n. Vectorization is column-major,
  so measurement index n * m_rx + m refers to antenna m at PRI n.
* Complex Gaussian noise of per-entry variance s2 has independent real
  and imaginary parts of variance s2 / 2 each (circular convention).
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class RadarSystem:
    """Transmit/receive array geometry plus the slow-time code matrix.

    Parameters
    ----------
    m_tx, m_rx : int
        Number of transmit / receive antennas.
    d_tx, d_rx : float
        Element spacings in wavelengths.
    n_pri : int
        Slow-time samples per coherent processing interval.
    code : ndarray, shape (m_tx, n_pri)
        Unimodular slow-time code matrix; entry (m, n) modulates
        transmitter m at PRI n.
    """

    m_tx: int
    m_rx: int
    d_tx: float
    d_rx: float
    n_pri: int
    code: np.ndarray

    def __post_init__(self):
        if self.m_tx < 1 or self.m_rx < 1 or self.n_pri < 1:
            raise ValueError("array and PRI counts must be >= 1")
        code = np.asarray(self.code, dtype=complex)
        if code.shape != (self.m_tx, self.n_pri):
            raise ValueError(
                f"code shape {code.shape} != ({self.m_tx}, {self.n_pri})"
            )
        if not np.allclose(np.abs(code), 1.0, atol=1e-12):
            raise ValueError("code entries must be unimodular")
        object.__setattr__(self, "code", code)

    @property
    def n_meas(self) -> int:
        return self.n_pri * self.m_rx


@dataclass(frozen=True, eq=False)
class Scene:
    """Ground truth target parameters and the noise power.

    thetas/omegas/amps must have equal length K (K = 0 allowed).
    """

    thetas: np.ndarray
    omegas: np.ndarray
    amps: np.ndarray
    noise_var: float

    def __post_init__(self):
        thetas = np.atleast_1d(np.asarray(self.thetas, dtype=float))
        omegas = np.atleast_1d(np.asarray(self.omegas, dtype=float))
        amps = np.atleast_1d(np.asarray(self.amps, dtype=complex))
        if not (len(thetas) == len(omegas) == len(amps)):
            raise ValueError("thetas, omegas, amps must have equal length")
        if np.any(np.abs(thetas) >= np.pi / 2):
            raise ValueError("angles must lie in (-pi/2, pi/2)")
        if np.any(omegas < -np.pi) or np.any(omegas >= np.pi):
            raise ValueError("Doppler shifts must lie in [-pi, pi)")
        if not self.noise_var > 0:
            raise ValueError("noise_var must be positive")
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "amps", amps)

    @property
    def n_targets(self) -> int:
        return len(self.thetas)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform angle-Doppler evaluation grid.

    Angle points are cell midpoints of (-pi/2, pi/2) (endpoints excluded);
    Doppler points cover [-pi, pi) left-inclusive. Flat grid index is
    angle-fastest: k = k_omega * k_theta_count + k_theta.
    """

    k_theta: int
    k_omega: int
    theta_points: np.ndarray = field(init=False)
    omega_points: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.k_theta < 1 or self.k_omega < 1:
            raise ValueError("grid sizes must be >= 1")
        thetas = -np.pi / 2 + (np.arange(self.k_theta) + 0.5) * np.pi / self.k_theta
        omegas = -np.pi + np.arange(self.k_omega) * 2 * np.pi / self.k_omega
        object.__setattr__(self, "theta_points", thetas)
        object.__setattr__(self, "omega_points", omegas)

    @property
    def size(self) -> int:
        return self.k_theta * self.k_omega

    @property
    def cell_theta(self) -> float:
        return np.pi / self.k_theta

    @property
    def cell_omega(self) -> float:
        return 2 * np.pi / self.k_omega

    def flat_index(self, i_theta: int, i_omega: int) -> int:
        return i_omega * self.k_theta + i_theta

    def image_from_flat(self, values: np.ndarray) -> np.ndarray:
        """Reshape a flat grid vector to a (k_theta, k_omega) image."""
        return np.asarray(values).reshape(self.k_omega, self.k_theta).T


def _check_angle(theta: float) -> float:
    theta = float(theta)
    if not abs(theta) < np.pi / 2:
        raise ValueError(f"angle {theta} outside (-pi/2, pi/2)")
    return theta


def steering_tx(sys: RadarSystem, theta: float) -> np.ndarray:
    """Transmit steering vector: entry m = exp(-j 2 pi d_tx m sin(theta))."""
    theta = _check_angle(theta)
    m = np.arange(sys.m_tx)
    return np.exp(-2j * np.pi * sys.d_tx * m * np.sin(theta))


def steering_rx(sys: RadarSystem, theta: float) -> np.ndarray:
    """Receive steering vector: entry m = exp(-j 2 pi d_rx m sin(theta))."""
    theta = _check_angle(theta)
    m = np.arange(sys.m_rx)
    return np.exp(-2j * np.pi * sys.d_rx * m * np.sin(theta))


def doppler_vec(sys: RadarSystem, omega: float) -> np.ndarray:
    """Slow-time temporal steering vector: entry n = exp(j n omega)."""
    n = np.arange(sys.n_pri)
    return np.exp(1j * n * float(omega))


def d_steering_tx(sys: RadarSystem, theta: float) -> np.ndarray:
    """Analytic d/dtheta of steering_tx."""
    theta = _check_angle(theta)
    m = np.arange(sys.m_tx)
    phase = -2j * np.pi * sys.d_tx * m
    return phase * np.cos(theta) * np.exp(phase * np.sin(theta))


def d_steering_rx(sys: RadarSystem, theta: float) -> np.ndarray:
    """Analytic d/dtheta of steering_rx."""
    theta = _check_angle(theta)
    m = np.arange(sys.m_rx)
    phase = -2j * np.pi * sys.d_rx * m
    return phase * np.cos(theta) * np.exp(phase * np.sin(theta))


def d_doppler_vec(sys: RadarSystem, omega: float) -> np.ndarray:
    """Analytic d/domega of doppler_vec."""
    n = np.arange(sys.n_pri)
    return 1j * n * np.exp(1j * n * float(omega))


def gen_code(m_tx: int, n_pri: int, rng) -> np.ndarray:
    """Random binary +/-1 slow-time code matrix, reproducible from rng/seed."""
    rng = np.random.default_rng(rng)
    return (2.0 * rng.integers(0, 2, size=(m_tx, n_pri)) - 1.0).astype(complex)


def slow_time_vec(sys: RadarSystem, theta: float, omega: float) -> np.ndarray:
    """Code-mixed temporal response v = (C^T a_t(theta)) * d(omega)."""
    return (sys.code.T @ steering_tx(sys, theta)) * doppler_vec(sys, omega)


def atom(sys: RadarSystem, theta: float, omega: float) -> np.ndarray:
    """Vectorized noise-free response of a unit target at (theta, omega).

    Equals kron(v, a_r) with v = (C^T a_t) * d, i.e. the column-major
    vectorization of the rank-one snapshot a_r v^T.
    """
    return np.kron(slow_time_vec(sys, theta, omega), steering_rx(sys, theta))


def d_atom(sys: RadarSystem, theta: float, omega: float):
    """Analytic partials of atom() with respect to theta and omega."""
    a_r = steering_rx(sys, theta)
    d_a_r = d_steering_rx(sys, theta)
    d = doppler_vec(sys, omega)
    ct_at = sys.code.T @ steering_tx(sys, theta)
    v = ct_at * d
    dv_theta = (sys.code.T @ d_steering_tx(sys, theta)) * d
    dv_omega = ct_at * d_doppler_vec(sys, omega)
    da_theta = np.kron(dv_theta, a_r) + np.kron(v, d_a_r)
    da_omega = np.kron(dv_omega, a_r)
    return da_theta, da_omega


def dictionary(sys: RadarSystem, grid: Grid) -> np.ndarray:
    """Atom matrix over the grid, shape (n_pri*m_rx, k_theta*k_omega).

    Column k_omega * k_theta + k_theta holds
    atom(theta_points[k_theta], omega_points[k_omega]).
    """
    a_r = np.stack([steering_rx(sys, t) for t in grid.theta_points], axis=1)
    ct_at = np.stack(
        [sys.code.T @ steering_tx(sys, t) for t in grid.theta_points], axis=1
    )
    d = np.stack([doppler_vec(sys, w) for w in grid.omega_points], axis=1)
    # T[n, m, kw, kt] = ct_at[n, kt] * d[n, kw] * a_r[m, kt]
    t = (
        ct_at[:, None, None, :]
        * d[:, None, :, None]
        * a_r[None, :, None, :]
    )
    return t.reshape(sys.n_meas, grid.size)


def clean_snapshot(sys: RadarSystem, scene: Scene) -> np.ndarray:
    """Noise-free m_rx x n_pri snapshot for the scene."""
    x = np.zeros((sys.m_rx, sys.n_pri), dtype=complex)
    for theta, omega, b in zip(scene.thetas, scene.omegas, scene.amps):
        x += b * np.outer(steering_rx(sys, theta), slow_time_vec(sys, theta, omega))
    return x


def simulate(sys: RadarSystem, scene: Scene, rng) -> np.ndarray:
    """Noisy snapshot X = sum_k a_r(theta_k) b_k v_k^T + E.

    E is circularly symmetric white Gaussian with per-entry variance
    scene.noise_var.
    """
    rng = np.random.default_rng(rng)
    shape = (sys.m_rx, sys.n_pri)
    scale = np.sqrt(scene.noise_var / 2.0)
    noise = rng.normal(scale=scale, size=shape) + 1j * rng.normal(
        scale=scale, size=shape
    )
    return clean_snapshot(sys, scene) + noise


def vec(x: np.ndarray) -> np.ndarray:
    """Column-major vectorization (measurement index n * m_rx + m)."""
    return np.asarray(x).reshape(-1, order="F")
