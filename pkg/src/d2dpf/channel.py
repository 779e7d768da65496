"""Link-level channel modelling: path loss, correlated shadowing, fading,
rates and the SINR -> spectral-efficiency lookup."""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

FADING_MODES = ("flat", "rayleigh", "none")


@dataclass(frozen=True)
class PathlossModel:
    """PL(dB) = intercept + slope * log10(d / 1 km)."""

    intercept_db: float
    slope_db: float

    def __call__(self, distance_m):
        d_km = np.maximum(np.asarray(distance_m, dtype=float), 1.0) / 1000.0
        return self.intercept_db + self.slope_db * np.log10(d_km)


@dataclass(frozen=True)
class ChannelParams:
    carrier_freq: float = 2.0e9
    bandwidth: float = 180e3
    # UE -> eNB links (CUE uplink, D2D tx interference at the eNB)
    cellular_pathloss: PathlossModel = PathlossModel(128.1, 37.6)
    # UE -> UE links (D2D link, CUE interference at a D2D receiver)
    d2d_pathloss: PathlossModel = PathlossModel(148.0, 40.0)
    cellular_shadow_std_db: float = 8.0
    d2d_shadow_std_db: float = 6.0
    decorrelation_length: float = 50.0
    fading: str = "rayleigh"
    bs_antenna_gain_db: float = 15.0
    ue_antenna_gain_db: float = 4.0
    noise_figure_db: float = 5.0
    noise_density_dbm_hz: float = -174.0

    def __post_init__(self):
        if self.decorrelation_length <= 0:
            raise ValueError("decorrelation_length must be > 0")
        if self.cellular_shadow_std_db < 0 or self.d2d_shadow_std_db < 0:
            raise ValueError("shadowing std must be >= 0")
        if self.fading not in FADING_MODES:
            raise ValueError(f"fading must be one of {FADING_MODES}")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be > 0")

    @property
    def noise_density(self) -> float:
        """N_0 in W/Hz with the receiver noise figure folded in."""
        return float(dbm_to_watt(self.noise_density_dbm_hz + self.noise_figure_db))


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


class ShadowField:
    """Zero-mean Gaussian field (in dB) with autocorrelation exp(-r / L).

    Built as a sum of random plane waves whose wave vectors are drawn from
    the 2-D spectral density of the exponential kernel, so any point in the
    plane can be queried and the same seed always gives the same field.
    """

    def __init__(self, seed, std_db: float, decorrelation_length: float, n_waves: int = 256):
        rng = np.random.default_rng(seed)
        u = rng.random(n_waves)
        # radial CDF of the kernel's spectrum: F(rho) = 1 - (1 + (L rho)^2)^(-1/2)
        rho = np.sqrt((1.0 - u) ** -2 - 1.0) / decorrelation_length
        theta = rng.uniform(0.0, 2 * np.pi, n_waves)
        self._omega = np.stack([rho * np.cos(theta), rho * np.sin(theta)], axis=1)
        self._phase = rng.uniform(0.0, 2 * np.pi, n_waves)
        self._amp = std_db * math.sqrt(2.0 / n_waves)
        self.std_db = std_db
        self.decorrelation_length = decorrelation_length

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.std_db == 0:
            return np.zeros(pts.shape[0])
        return self._amp * np.cos(pts @ self._omega.T + self._phase).sum(axis=1)


def shadowing_field(seed, params: ChannelParams, link: str = "cellular") -> ShadowField:
    std = params.cellular_shadow_std_db if link == "cellular" else params.d2d_shadow_std_db
    return ShadowField(seed, std, params.decorrelation_length)


def draw_fading(rng: np.random.Generator, n_links: int, k: int, mode: str) -> np.ndarray:
    """Unit-mean power fading, shape (n_links, k)."""
    if mode == "none":
        return np.ones((n_links, k))
    if mode == "flat":
        return np.repeat(rng.exponential(1.0, size=(n_links, 1)), k, axis=1)
    if mode == "rayleigh":
        return rng.exponential(1.0, size=(n_links, k))
    raise ValueError(f"unknown fading mode {mode!r}")


def link_gain(
    tx,
    rx,
    k: int,
    params: ChannelParams,
    shadow_db: float = 0.0,
    fading=1.0,
    link: str = "cellular",
) -> float:
    """Linear gain of one link on subchannel ``k``.

    ``link="cellular"`` means the receiver is an eNB; ``"d2d"`` a UE.
    ``fading`` is either a scalar or a per-subchannel array of linear power
    fading coefficients.
    """
    dist = math.dist(tx, rx)
    if link == "cellular":
        pl, g_rx = params.cellular_pathloss(dist), params.bs_antenna_gain_db
    elif link == "d2d":
        pl, g_rx = params.d2d_pathloss(dist), params.ue_antenna_gain_db
    else:
        raise ValueError(f"unknown link type {link!r}")
    fade = fading if np.ndim(fading) == 0 else fading[k]
    return float(db_to_linear(-pl - shadow_db + g_rx) * fade)


def link_gain_matrix(distance, params: ChannelParams, link: str, shadow_db, fading) -> np.ndarray:
    """Vectorised ``link_gain``: ``distance``/``shadow_db`` shaped (...,), fading (..., K)."""
    if link == "cellular":
        pl, g_rx = params.cellular_pathloss(distance), params.bs_antenna_gain_db
    else:
        pl, g_rx = params.d2d_pathloss(distance), params.ue_antenna_gain_db
    return db_to_linear(-pl - shadow_db + g_rx)[..., None] * fading


def instantaneous_rate(power, gain, interference, bandwidth: float, noise_density: float):
    """Shannon rate B * log2(1 + p g / (N_0 B + I))."""
    power = np.asarray(power, dtype=float)
    interference = np.asarray(interference, dtype=float)
    if np.any(power < 0) or np.any(interference < 0) or np.any(np.asarray(gain) < 0):
        raise ValueError("power, gain and interference must be >= 0")
    sinr = power * gain / (noise_density * bandwidth + interference)
    out = bandwidth * np.log2(1.0 + sinr)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class McsTable:
    thresholds_db: tuple[float, ...]
    efficiencies: tuple[float, ...]

    def __post_init__(self):
        if not self.thresholds_db:
            raise ValueError("MCS table is empty")
        if len(self.thresholds_db) != len(self.efficiencies):
            raise ValueError("thresholds and efficiencies differ in length")
        if any(b <= a for a, b in zip(self.thresholds_db, self.thresholds_db[1:])):
            raise ValueError("MCS thresholds must be strictly increasing")
        if any(b < a for a, b in zip(self.efficiencies, self.efficiencies[1:])):
            raise ValueError("MCS efficiencies must be non-decreasing")
        if self.efficiencies[0] < 0:
            raise ValueError("MCS efficiencies must be >= 0")

    @classmethod
    def parse(cls, text: str) -> "McsTable":
        thr, eff = [], []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'threshold_dB efficiency'")
            thr.append(float(parts[0]))
            eff.append(float(parts[1]))
        return cls(tuple(thr), tuple(eff))

    @classmethod
    def load(cls, path: str | Path) -> "McsTable":
        return cls.parse(Path(path).read_text())

    @classmethod
    def default(cls) -> "McsTable":
        return cls.parse(resources.files("d2dpf").joinpath("data/cqi_mcs.txt").read_text())


def sinr_to_efficiency(sinr_db, table: McsTable):
    """Efficiency of the highest entry whose threshold <= SINR; 0 below all."""
    thr = np.asarray(table.thresholds_db)
    eff = np.concatenate([[0.0], table.efficiencies])
    idx = np.searchsorted(thr, np.asarray(sinr_db, dtype=float), side="right")
    out = eff[idx]
    return float(out) if np.ndim(out) == 0 else out


def pair_shadow(field: ShadowField, a, b) -> np.ndarray:
    """Shadowing of UE-UE links: symmetric in the endpoints, variance kept."""
    return (field(a) + field(b)) / math.sqrt(2.0)
