"""Air-to-ground channel: path loss, Nakagami fading, SINR.

Mean received power in dBm for a link of 3D length d in state Q is

    zeta_dbm + eta_Q_db - 10 * alpha_Q * log10(d)

with the excess-loss eta added in the dB domain (it is negative).  Fading
is a unit-mean power gain: Nakagami-m envelope, i.e. Gamma(m, 1/m) on
power, so m=1 is Rayleigh/exponential.  SINR accumulates interference in
linear milliwatts.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class LinkState(Enum):
    LOS = "los"
    NLOS = "nlos"


@dataclass(frozen=True)
class ChannelParams:
    """Transmit power, per-state excess loss / exponent / fading shape, noise."""

    zeta_dbm: float = 30.0
    eta_los_db: float = -35.0
    eta_nlos_db: float = -48.0
    alpha_los: float = 2.0
    alpha_nlos: float = 2.3
    m_los: float = 1.0
    m_nlos: float = 2.0
    sigma2_dbm: float = -90.0

    def __post_init__(self):
        if self.alpha_los < 1 or self.alpha_nlos < 1:
            raise ValueError("path loss exponents must be >= 1")
        if self.m_los < 0.5 or self.m_nlos < 0.5:
            raise ValueError("Nakagami shape must be >= 0.5")

    def eta_db(self, q: LinkState) -> float:
        return self.eta_los_db if q is LinkState.LOS else self.eta_nlos_db

    def alpha(self, q: LinkState) -> float:
        return self.alpha_los if q is LinkState.LOS else self.alpha_nlos

    def m(self, q: LinkState) -> float:
        return self.m_los if q is LinkState.LOS else self.m_nlos

    @property
    def sigma2_mw(self) -> float:
        return dbm_to_mw(self.sigma2_dbm)

    def to_dict(self) -> dict:
        return {
            "zeta_dbm": self.zeta_dbm,
            "eta_los_db": self.eta_los_db, "eta_nlos_db": self.eta_nlos_db,
            "alpha_los": self.alpha_los, "alpha_nlos": self.alpha_nlos,
            "m_los": self.m_los, "m_nlos": self.m_nlos,
            "sigma2_dbm": self.sigma2_dbm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelParams":
        return cls(**{k: float(v) for k, v in d.items()})


def dbm_to_mw(p_dbm):
    return 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


def mw_to_dbm(p_mw):
    return 10.0 * np.log10(p_mw)


def mean_received_power(d, q: LinkState, cp: ChannelParams):
    """Fading-averaged receive power in dBm for 3D distance ``d`` (metres)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("link distance must be > 0")
    out = cp.zeta_dbm + cp.eta_db(q) - 10.0 * cp.alpha(q) * np.log10(d)
    return float(out) if out.ndim == 0 else out


def mean_power_for_states(d: np.ndarray, blocked: np.ndarray,
                          cp: ChannelParams) -> np.ndarray:
    """Batch mean power in dBm with a per-link blocked flag."""
    d = np.asarray(d, dtype=float)
    eta = np.where(blocked, cp.eta_nlos_db, cp.eta_los_db)
    alpha = np.where(blocked, cp.alpha_nlos, cp.alpha_los)
    return cp.zeta_dbm + eta - 10.0 * alpha * np.log10(d)


def sample_fading(q: LinkState, cp: ChannelParams, rng: np.random.Generator,
                  size=None):
    """Unit-mean Nakagami power gain(s) for state ``q``."""
    m = cp.m(q)
    return rng.gamma(shape=m, scale=1.0 / m, size=size)


def fading_for_states(blocked: np.ndarray, cp: ChannelParams,
                      rng: np.random.Generator) -> np.ndarray:
    """Batch unit-mean power gains with per-link Nakagami shape."""
    m = np.where(blocked, cp.m_nlos, cp.m_los)
    return rng.gamma(shape=m, scale=1.0 / m)


def sinr_db(signal_mw, interferers_mw, cp: ChannelParams):
    """SINR in dB from linear received powers (mW).

    ``interferers_mw`` is a sequence/array summed in the linear domain; an
    empty list means noise-limited SNR.
    """
    signal_mw = np.asarray(signal_mw, dtype=float)
    if np.any(signal_mw <= 0):
        raise ValueError("signal power must be > 0 mW")
    interference = np.sum(np.asarray(interferers_mw, dtype=float)) \
        if np.size(interferers_mw) else 0.0
    denom = interference + cp.sigma2_mw
    if denom <= 0:
        raise ValueError("interference plus noise must be > 0")
    out = 10.0 * np.log10(signal_mw / denom)
    return float(out) if out.ndim == 0 else out
