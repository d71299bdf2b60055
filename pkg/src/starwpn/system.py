"""System model: geometry, protocol policies, harvested energy, uplink SNRs, SIC.

Two energy-constrained users (tagged "t" for the transmitted-side user and
"r" for the reflected-side user) harvest downlink power through a surface
with N elements and then send uplink data to an access point.  Three
protocols are modeled:

    tep   time-switching downlink charge, energy-splitting uplink (NOMA)
    eep   energy-splitting in both directions (NOMA)
    tdma  time-switching downlink, orthogonal uplink slots (baseline)

All block times are normalized to 1.  The combined channel of user x is the
co-phased magnitude sum G_x = sum_i h_i g_{x,i}; harvested energy scales with
G_x**2 and the uplink SNR with G_x**4.
"""

from dataclasses import dataclass

import numpy as np

from .channel import NakagamiParams

SCHEMES = ("tep", "eep", "tdma")
_SUM_TOL = 1e-9


def _check_fraction(name: str, value: float) -> None:
    if not (0.0 < value < 1.0):
        raise ValueError(f"{name} must lie strictly inside (0,1), got {value}")


@dataclass(frozen=True)
class SystemConfig:
    """Physical and protocol-independent parameters.

    p_ap        access point transmit power (W)
    n0          noise power (W)
    d0          AP to surface distance (m)
    d_t, d_r    surface to user distances (m)
    exp0        path-loss exponent of the AP-surface segment
    exp_t/exp_r path-loss exponents of the surface-user segments
    n_elements  surface element count N
    fading_ris  Nakagami parameters of the AP-surface fades h_i
    fading_t/r  Nakagami parameters of the surface-user fades g_{x,i}
    rate        target rate R (bits/s/Hz)
    """

    p_ap: float
    n0: float
    d0: float
    d_t: float
    d_r: float
    exp0: float
    exp_t: float
    exp_r: float
    n_elements: int
    fading_ris: NakagamiParams
    fading_t: NakagamiParams
    fading_r: NakagamiParams
    rate: float

    def __post_init__(self):
        for name in ("p_ap", "n0", "d0", "d_t", "d_r"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("exp0", "exp_t", "exp_r"):
            if not (getattr(self, name) >= 1):
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_elements < 1:
            raise ValueError(f"n_elements must be >= 1, got {self.n_elements}")
        if not (self.rate > 0):
            raise ValueError(f"rate must be > 0, got {self.rate}")

    @property
    def snr_threshold(self) -> float:
        """Decoding threshold 2^R - 1, kept consistent with `rate` by construction."""
        return 2.0 ** self.rate - 1.0

    def user_fading(self, user: str) -> NakagamiParams:
        if user == "t":
            return self.fading_t
        if user == "r":
            return self.fading_r
        raise ValueError(f"user must be 't' or 'r', got {user!r}")


@dataclass(frozen=True)
class TepPolicy:
    """Time split (alpha_t, alpha_r, alpha_ap) and uplink energy split (beta_t, beta_r).

    alpha_t/alpha_r are the per-user downlink charging fractions, alpha_ap the
    shared uplink fraction; beta_x is user x's share of the uplink surface.
    """

    alpha_t: float
    alpha_r: float
    alpha_ap: float
    beta_t: float
    beta_r: float

    def __post_init__(self):
        for name in ("alpha_t", "alpha_r", "alpha_ap", "beta_t", "beta_r"):
            _check_fraction(name, getattr(self, name))
        if abs(self.alpha_t + self.alpha_r + self.alpha_ap - 1.0) > _SUM_TOL:
            raise ValueError("alpha_t + alpha_r + alpha_ap must equal 1")
        if abs(self.beta_t + self.beta_r - 1.0) > _SUM_TOL:
            raise ValueError("beta_t + beta_r must equal 1")


@dataclass(frozen=True)
class EepPolicy:
    """Energy-splitting both ways: time split (alpha_et, alpha_it), surface split beta."""

    alpha_et: float
    alpha_it: float
    beta_t: float
    beta_r: float

    def __post_init__(self):
        for name in ("alpha_et", "alpha_it", "beta_t", "beta_r"):
            _check_fraction(name, getattr(self, name))
        if abs(self.alpha_et + self.alpha_it - 1.0) > _SUM_TOL:
            raise ValueError("alpha_et + alpha_it must equal 1")
        if abs(self.beta_t + self.beta_r - 1.0) > _SUM_TOL:
            raise ValueError("beta_t + beta_r must equal 1")


@dataclass(frozen=True)
class TdmaPolicy:
    """Orthogonal baseline: per-user charge fractions and per-user uplink slots."""

    alpha_t: float
    alpha_r: float
    alpha_ap_t: float
    alpha_ap_r: float

    def __post_init__(self):
        for name in ("alpha_t", "alpha_r", "alpha_ap_t", "alpha_ap_r"):
            _check_fraction(name, getattr(self, name))
        if abs(self.alpha_ap_t + self.alpha_ap_r - (1.0 - self.alpha_t - self.alpha_r)) > _SUM_TOL:
            raise ValueError("alpha_ap_t + alpha_ap_r must equal 1 - alpha_t - alpha_r")


@dataclass(frozen=True)
class DecodeOrder:
    """SIC decode order: which user is decoded first, and whether the rule's
    catch-all branch fired (neither or both cross-SINR conditions held)."""

    first: str  # "t" or "r"
    ambiguous: bool


def pathloss(config: SystemConfig, user: str) -> float:
    """Cascaded path loss l_x = 1 / (d0^exp0 * d_x^exp_x)."""
    if user == "t":
        return 1.0 / (config.d0 ** config.exp0 * config.d_t ** config.exp_t)
    if user == "r":
        return 1.0 / (config.d0 ** config.exp0 * config.d_r ** config.exp_r)
    raise ValueError(f"user must be 't' or 'r', got {user!r}")


def _check_scheme(scheme: str, allowed=SCHEMES) -> str:
    s = scheme.lower()
    if s not in allowed:
        raise ValueError(f"scheme must be one of {allowed}, got {scheme!r}")
    return s


def harvested_energy(scheme: str, policy, config: SystemConfig, g_t, g_r):
    """Per-user harvested energy (X_t, X_r) for realized gains, block time 1.

    tep: the full surface charges user x for a fraction alpha_x,
         X_x = P * l_x * G_x^2 * alpha_x.
    eep: both users charge together for alpha_et, each through its share
         beta_x of the surface, X_x = P * l_x * beta_x * G_x^2 * alpha_et.
    """
    s = _check_scheme(scheme, ("tep", "eep"))
    g_t = np.asarray(g_t, dtype=float)
    g_r = np.asarray(g_r, dtype=float)
    l_t, l_r = pathloss(config, "t"), pathloss(config, "r")
    if s == "tep":
        x_t = config.p_ap * l_t * g_t**2 * policy.alpha_t
        x_r = config.p_ap * l_r * g_r**2 * policy.alpha_r
    else:
        x_t = config.p_ap * l_t * policy.beta_t * g_t**2 * policy.alpha_et
        x_r = config.p_ap * l_r * policy.beta_r * g_r**2 * policy.alpha_et
    return x_t, x_r


def snr_coefficients(scheme: str, policy, config: SystemConfig):
    """Per-user factors (c_t, c_r) such that the uplink SNR is c_x * G_x^4.

    Single source of truth for the SNR scaling of every scheme; the closed
    forms, the Monte Carlo engine, and the optimizer all consume these.

    tep:  c_x = P * l_x^2 * beta_x * alpha_x / (alpha_ap * N0)
    eep:  c_x = P * l_x^2 * beta_x^2 * alpha_et / (alpha_it * N0)
    tdma: c_x = P * l_x^2 * alpha_x / (alpha_ap_x * N0)
    """
    s = _check_scheme(scheme)
    l_t, l_r = pathloss(config, "t"), pathloss(config, "r")
    p, n0 = config.p_ap, config.n0
    if s == "tep":
        c_t = p * l_t**2 * policy.beta_t * policy.alpha_t / (policy.alpha_ap * n0)
        c_r = p * l_r**2 * policy.beta_r * policy.alpha_r / (policy.alpha_ap * n0)
    elif s == "eep":
        c_t = p * l_t**2 * policy.beta_t**2 * policy.alpha_et / (policy.alpha_it * n0)
        c_r = p * l_r**2 * policy.beta_r**2 * policy.alpha_et / (policy.alpha_it * n0)
    else:
        c_t = p * l_t**2 * policy.alpha_t / (policy.alpha_ap_t * n0)
        c_r = p * l_r**2 * policy.alpha_r / (policy.alpha_ap_r * n0)
    return c_t, c_r


def uplink_snrs(scheme: str, policy, config: SystemConfig, g_t, g_r):
    """Per-user uplink SNRs (gamma_t, gamma_r) for realized gains."""
    c_t, c_r = snr_coefficients(scheme, policy, config)
    g_t = np.asarray(g_t, dtype=float)
    g_r = np.asarray(g_r, dtype=float)
    return c_t * g_t**4, c_r * g_r**4


def decode_order(gamma_t: float, gamma_r: float, gamma_th: float) -> DecodeOrder:
    """SIC ordering rule on the cross SINRs.

    Decode t first when gamma_t/(gamma_r+1) clears the threshold and the
    mirrored condition does not; r first in the mirrored case.  When neither
    or both clear, either order gives the same per-user outcomes, so the
    catch-all deterministically picks t-first and sets the ambiguity flag.
    """
    if gamma_th <= 0:
        raise ValueError(f"gamma_th must be > 0, got {gamma_th}")
    t_cross = gamma_t / (gamma_r + 1.0) >= gamma_th
    r_cross = gamma_r / (gamma_t + 1.0) >= gamma_th
    if t_cross and not r_cross:
        return DecodeOrder(first="t", ambiguous=False)
    if r_cross and not t_cross:
        return DecodeOrder(first="r", ambiguous=False)
    return DecodeOrder(first="t", ambiguous=True)


def sic_outcome(gamma_t, gamma_r, gamma_th: float):
    """Vectorized SIC decode outcome (t_decoded, r_decoded).

    User x is decoded iff its cross SINR clears the threshold (decoded first,
    treating the other user as noise) or the other user is decoded first and
    the interference-free SNR gamma_x still clears the threshold.
    """
    gamma_t = np.asarray(gamma_t, dtype=float)
    gamma_r = np.asarray(gamma_r, dtype=float)
    t_cross = gamma_t / (gamma_r + 1.0) >= gamma_th
    r_cross = gamma_r / (gamma_t + 1.0) >= gamma_th
    t_ok = t_cross | (r_cross & (gamma_t >= gamma_th))
    r_ok = r_cross | (t_cross & (gamma_r >= gamma_th))
    return t_ok, r_ok
