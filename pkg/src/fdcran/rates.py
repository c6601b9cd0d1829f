"""Achievable rates, pessimistic leakages, secrecy rates and fronthaul loads.

All quantities are spectral efficiencies in bits/s/Hz, computed as
differences of base-2 log-determinants of received-signal covariances.
Adversaries (untrusted RUs and eavesdroppers) are credited with successive
interference cancellation, so only quantization noise, residual
self-interference and thermal noise condition their observations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig
from .channels import ChannelRealization
from .linalg import JITTER, hermitize, logdet2

__all__ = [
    "DesignVariables", "RateReport", "logdet2", "residual_si_covariance",
    "uplink_rate", "downlink_rate", "leakage_to_ru", "leakage_to_eve",
    "secrecy_rates", "wssr", "fronthaul_dl", "fronthaul_ul", "rate_report",
]


@dataclass
class DesignVariables:
    """One optimization point: transmit and quantization covariances.

    ``w_tilde[m]`` and ``q_dl`` live on the stacked RU transmit array,
    ``f_tilde[k]`` on UL user k's antennas, ``q_ul`` on the stacked RU
    receive array and is block-diagonal per RU (UL quantizers are local).
    """

    w_tilde: list
    f_tilde: list
    q_dl: np.ndarray
    q_ul: np.ndarray

    @classmethod
    def zeros(cls, config: NetworkConfig) -> "DesignVariables":
        n, m = config.total_tx_ru, config.total_rx_ru
        return cls(
            w_tilde=[np.zeros((n, n), dtype=complex) for _ in range(config.n_dl_users)],
            f_tilde=[np.zeros((int(a), int(a)), dtype=complex) for a in config.tx_antennas_ul],
            q_dl=np.zeros((n, n), dtype=complex),
            q_ul=np.zeros((m, m), dtype=complex),
        )

    def copy(self) -> "DesignVariables":
        return DesignVariables(
            w_tilde=[w.copy() for w in self.w_tilde],
            f_tilde=[f.copy() for f in self.f_tilde],
            q_dl=self.q_dl.copy(), q_ul=self.q_ul.copy(),
        )

    def validate(self, config: NetworkConfig, herm_tol: float = 1e-10,
                 eig_tol: float = 1e-8) -> None:
        blocks = list(self.w_tilde) + list(self.f_tilde) + [self.q_dl, self.q_ul]
        for b in blocks:
            if np.abs(b - b.conj().T).max() > herm_tol * (1.0 + np.abs(b).max()):
                raise ValueError("design variable block is not Hermitian")
            if b.shape[0] and np.linalg.eigvalsh(hermitize(b)).min() < -eig_tol:
                raise ValueError("design variable block is not (numerically) PSD")
        off = config.rx_offsets
        mask = np.ones_like(self.q_ul, dtype=bool)
        for r in range(config.n_ru):
            mask[off[r]:off[r + 1], off[r]:off[r + 1]] = False
        if np.any(self.q_ul[mask] != 0):
            raise ValueError("q_ul must be block-diagonal per RU")

    def w_sum(self) -> np.ndarray:
        n = self.q_dl.shape[0]
        out = np.zeros((n, n), dtype=complex)
        for w in self.w_tilde:
            out = out + w
        return out

    def save(self, path) -> None:
        arrays = {"q_dl": self.q_dl, "q_ul": self.q_ul}
        for m, w in enumerate(self.w_tilde):
            arrays[f"w_tilde_{m}"] = w
        for k, f in enumerate(self.f_tilde):
            arrays[f"f_tilde_{k}"] = f
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path, config: NetworkConfig) -> "DesignVariables":
        data = np.load(path)
        return cls(
            w_tilde=[data[f"w_tilde_{m}"] for m in range(config.n_dl_users)],
            f_tilde=[data[f"f_tilde_{k}"] for k in range(config.n_ul_users)],
            q_dl=data["q_dl"], q_ul=data["q_ul"],
        )


@dataclass
class RateReport:
    """Per-link rates, per-adversary leakages, secrecy rates and loads."""

    r_ul: np.ndarray            # (n_ul,)
    r_dl: np.ndarray            # (n_dl,)
    leak_ul_ru: np.ndarray      # (n_ul, n_untrusted)
    leak_dl_ru: np.ndarray      # (n_dl, n_untrusted)
    leak_ul_eve: np.ndarray     # (n_ul, n_eves)
    leak_dl_eve: np.ndarray     # (n_dl, n_eves)
    sec_ul: np.ndarray
    sec_dl: np.ndarray
    f_dl: np.ndarray            # (n_ru,)
    f_ul: np.ndarray
    wssr: float


# -- covariance building blocks ----------------------------------------------

def _congr(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    return a @ x @ a.conj().T


def residual_si_covariance(variables: DesignVariables, real: ChannelRealization,
                           config: NetworkConfig) -> np.ndarray:
    """Residual self-interference covariance.

    kappa * Hrr_full diag(Q_dl + sum W) Hrr_full^H
    + beta * diag(Hrr_full (Q_dl + sum W) Hrr_full^H),
    where diag(.) zeroes off-diagonal entries.
    """
    x = variables.q_dl + variables.w_sum()
    h = real.h_rr_full
    if h.shape[1] != x.shape[0]:
        raise ValueError("dimension mismatch between h_rr_full and covariances")
    tx_term = _congr(h, np.diag(np.diag(x)))
    rx_term = np.diag(np.diag(_congr(h, x)))
    return hermitize(config.kappa * tx_term + config.beta * rx_term)


def _noise_ul_stack(config: NetworkConfig, rows=None) -> np.ndarray:
    diag = np.concatenate([
        np.full(int(mr), config.noise_ul[r])
        for r, mr in enumerate(config.rx_antennas_ru)])
    if rows is not None:
        diag = diag[rows]
    return np.diag(diag.astype(complex))


def _ul_signal_cov(variables: DesignVariables, real: ChannelRealization,
                   users) -> np.ndarray:
    n = real.h_rr.shape[0]
    out = np.zeros((n, n), dtype=complex)
    for i in users:
        out += _congr(real.h_ul[i], variables.f_tilde[i])
    return out


def uplink_rate(k: int, variables: DesignVariables, real: ChannelRealization,
                config: NetworkConfig, users=None, obs_rows=None,
                si_cov=None) -> float:
    """Achievable UL rate of user k at the cloud unit.

    The CU knows (and cancels) the DL waveforms it generated, so only other
    UL users, thermal noise, residual self-interference and UL quantization
    condition the observation.  ``obs_rows`` restricts the receive stack to a
    subset of antennas (used by baselines); ``users`` is the active UL set.
    """
    users = list(range(config.n_ul_users)) if users is None else list(users)
    lam = residual_si_covariance(variables, real, config) if si_cov is None else si_cov
    base = _noise_ul_stack(config) + lam + variables.q_ul
    num = base + _ul_signal_cov(variables, real, users)
    den = base + _ul_signal_cov(variables, real, [i for i in users if i != k])
    if obs_rows is not None:
        num = num[np.ix_(obs_rows, obs_rows)]
        den = den[np.ix_(obs_rows, obs_rows)]
    return logdet2(num) - logdet2(den)


def downlink_rate(m: int, variables: DesignVariables, real: ChannelRealization,
                  config: NetworkConfig, dl_users=None, ul_users=None) -> float:
    """Achievable DL rate of user m, with DL quantization noise, co-channel
    DL interference and UL user interference in the conditioning term."""
    dl_users = list(range(config.n_dl_users)) if dl_users is None else list(dl_users)
    ul_users = list(range(config.n_ul_users)) if ul_users is None else list(ul_users)
    h = real.h_dl[m]
    base = _congr(h, variables.q_dl) + config.noise_dl[m] * np.eye(h.shape[0])
    for i in ul_users:
        base = base + _congr(real.h_ud[i][m], variables.f_tilde[i])
    num = base.copy()
    for i in dl_users:
        num += _congr(h, variables.w_tilde[i])
    den = base.copy()
    for i in dl_users:
        if i != m:
            den += _congr(h, variables.w_tilde[i])
    return logdet2(num) - logdet2(den)


def leakage_to_ru(direction: str, link: int, r: int, variables: DesignVariables,
                  real: ChannelRealization, config: NetworkConfig,
                  si_cov=None, dl_observation: str = "combined") -> float:
    """Pessimistic leakage of one UL/DL link toward untrusted RU r.

    UL: RU r overhears user ``link`` on its own antennas, jammed by the DL
    quantization noise arriving over the inter-RU channel.  DL: RU r combines
    its fronthaul waveform with its wireless observation (``h_eq``); the
    fronthaul rows carry no thermal noise.  ``dl_observation`` selects the
    'combined', 'wireless' (no fronthaul link to r) or 'fronthaul'
    (half-duplex, receiver off) observation model.
    """
    if r in config.trusted:
        raise ValueError(f"RU {r} is trusted; leakage is defined for untrusted RUs")
    if direction == "ul":
        lam = residual_si_covariance(variables, real, config) if si_cov is None else si_cov
        s = real.s_ul[r]
        h_kr = s @ real.h_ul[link]
        jam = (s @ lam @ s.T
               + _congr(real.h_rr_row(r, config), variables.q_dl)
               + config.noise_ul[r] * np.eye(s.shape[0]))
        return logdet2(jam + _congr(h_kr, variables.f_tilde[link])) - logdet2(jam)
    if direction != "dl":
        raise ValueError("direction must be 'ul' or 'dl'")
    if dl_observation == "combined":
        h = real.h_eq(r, config)
        n_r = real.s_dl[r].shape[0]
        noise = np.zeros((h.shape[0], h.shape[0]), dtype=complex)
        noise[n_r:, n_r:] = config.noise_ul[r] * np.eye(h.shape[0] - n_r)
    elif dl_observation == "wireless":
        h = real.h_rr_row(r, config)
        noise = config.noise_ul[r] * np.eye(h.shape[0]).astype(complex)
    elif dl_observation == "fronthaul":
        h = real.s_dl[r].astype(complex)
        noise = np.zeros((h.shape[0], h.shape[0]), dtype=complex)
    else:
        raise ValueError(f"unknown dl_observation {dl_observation!r}")
    cond = _congr(h, variables.q_dl) + noise
    return logdet2(cond + _congr(h, variables.w_tilde[link])) - logdet2(cond)


def leakage_to_eve(direction: str, link: int, l: int, variables: DesignVariables,
                   real: ChannelRealization, config: NetworkConfig,
                   jam_from_ru: bool = True) -> float:
    """Pessimistic leakage of one UL/DL link toward eavesdropper l, jammed by
    the DL quantization noise broadcast from the RUs."""
    h_re = real.h_re[l]
    n_e = config.noise_eve[l] * np.eye(h_re.shape[0])
    jam = n_e + (_congr(h_re, variables.q_dl) if jam_from_ru else 0.0)
    if direction == "ul":
        sig = _congr(real.h_ue[link][l], variables.f_tilde[link])
    elif direction == "dl":
        sig = _congr(h_re, variables.w_tilde[link])
    else:
        raise ValueError("direction must be 'ul' or 'dl'")
    return logdet2(jam + sig) - logdet2(jam)


def secrecy_rates(variables: DesignVariables, real: ChannelRealization,
                  config: NetworkConfig):
    """Per-user secrecy rates: rate minus the worst leakage, clamped at 0."""
    report = rate_report(variables, real, config)
    return report.sec_ul, report.sec_dl


def wssr(sec_ul: np.ndarray, sec_dl: np.ndarray, config: NetworkConfig) -> float:
    """Weighted sum secrecy rate."""
    return float(np.dot(config.w_dl, sec_dl) + np.dot(config.w_ul, sec_ul))


def fronthaul_dl(r: int, variables: DesignVariables, config: NetworkConfig,
                 convention: str = None) -> float:
    """DL fronthaul load of RU r.

    'paper' subtracts the signal-only log-det, 'testchannel' the
    quantization-only log-det (Gaussian test channel I(x; x+q)).
    """
    convention = convention or config.fronthaul_convention
    off = config.tx_offsets
    s = np.eye(config.total_tx_ru)[off[r]:off[r + 1]]
    total = _congr(s, variables.w_sum() + variables.q_dl)
    if convention == "paper":
        ref = _congr(s, variables.w_sum())
    elif convention == "testchannel":
        ref = _congr(s, variables.q_dl)
    else:
        raise ValueError(f"unknown fronthaul convention {convention!r}")
    return logdet2(total) - logdet2(ref)


def _ul_received_cov(variables: DesignVariables, real: ChannelRealization,
                     config: NetworkConfig, users, si_cov=None) -> np.ndarray:
    """Raw received covariance at the RU antennas (before UL quantization),
    including the DL waveforms arriving over the inter-RU channel."""
    lam = residual_si_covariance(variables, real, config) if si_cov is None else si_cov
    cov = (_noise_ul_stack(config) + lam
           + _congr(real.h_rr, variables.w_sum() + variables.q_dl)
           + _ul_signal_cov(variables, real, users))
    return cov


def fronthaul_ul(r: int, variables: DesignVariables, real: ChannelRealization,
                 config: NetworkConfig, users=None, si_cov=None,
                 convention: str = None) -> float:
    """UL fronthaul load of RU r (conventions as in :func:`fronthaul_dl`)."""
    convention = convention or config.fronthaul_convention
    users = list(range(config.n_ul_users)) if users is None else list(users)
    s = real.s_ul[r]
    psi = _congr(s, _ul_received_cov(variables, real, config, users, si_cov))
    q_r = s @ variables.q_ul @ s.T
    if convention == "paper":
        return logdet2(psi + q_r) - logdet2(psi)
    if convention == "testchannel":
        return logdet2(psi + q_r) - logdet2(q_r)
    raise ValueError(f"unknown fronthaul convention {convention!r}")


def rate_report(variables: DesignVariables, real: ChannelRealization,
                config: NetworkConfig) -> RateReport:
    """Evaluate every rate, leakage, secrecy rate and fronthaul load."""
    lam = residual_si_covariance(variables, real, config)
    untrusted = config.untrusted
    n_ul, n_dl = config.n_ul_users, config.n_dl_users

    r_ul = np.array([uplink_rate(k, variables, real, config, si_cov=lam)
                     for k in range(n_ul)])
    r_dl = np.array([downlink_rate(m, variables, real, config)
                     for m in range(n_dl)])

    leak_ul_ru = np.array([[leakage_to_ru("ul", k, r, variables, real, config, si_cov=lam)
                            for r in untrusted] for k in range(n_ul)]).reshape(n_ul, len(untrusted))
    leak_dl_ru = np.array([[leakage_to_ru("dl", m, r, variables, real, config)
                            for r in untrusted] for m in range(n_dl)]).reshape(n_dl, len(untrusted))
    leak_ul_eve = np.array([[leakage_to_eve("ul", k, l, variables, real, config)
                             for l in range(config.n_eves)] for k in range(n_ul)]).reshape(n_ul, config.n_eves)
    leak_dl_eve = np.array([[leakage_to_eve("dl", m, l, variables, real, config)
                             for l in range(config.n_eves)] for m in range(n_dl)]).reshape(n_dl, config.n_eves)

    def _sec(rate, leaks):
        worst = max((float(v) for v in leaks), default=0.0)
        return max(0.0, float(rate) - worst)

    sec_ul = np.array([_sec(r_ul[k], np.concatenate([leak_ul_ru[k], leak_ul_eve[k]]))
                       for k in range(n_ul)])
    sec_dl = np.array([_sec(r_dl[m], np.concatenate([leak_dl_ru[m], leak_dl_eve[m]]))
                       for m in range(n_dl)])

    f_dl = np.array([fronthaul_dl(r, variables, config) for r in range(config.n_ru)])
    f_ul = np.array([fronthaul_ul(r, variables, real, config, si_cov=lam)
                     for r in range(config.n_ru)])
    return RateReport(
        r_ul=r_ul, r_dl=r_dl,
        leak_ul_ru=leak_ul_ru, leak_dl_ru=leak_dl_ru,
        leak_ul_eve=leak_ul_eve, leak_dl_eve=leak_dl_eve,
        sec_ul=sec_ul, sec_dl=sec_dl, f_dl=f_dl, f_ul=f_ul,
        wssr=wssr(sec_ul, sec_dl, config),
    )
