"""Problem variants: which links, observations and variables are active.

A scene pins down one optimization problem on a fixed channel realization:
the joint full-duplex design, its restricted benchmarks (block-diagonal or
frozen DL quantization, untrusted RUs excluded from service) and the two
half-duplex phases.  Both the exact rate evaluation and the convex
subproblem builder consume the same scene, so benchmark definitions live in
exactly one place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import ChannelRealization
from .config import NetworkConfig
from . import rates
from .rates import DesignVariables


@dataclass(frozen=True)
class Scene:
    config: NetworkConfig
    real: ChannelRealization
    mode: str
    dl_users: tuple
    ul_users: tuple
    obs_rus: tuple                 # RUs whose UL observations reach the CU
    ru_adversaries: tuple          # untrusted RUs acting as internal eavesdroppers
    dl_ru_observation: str         # combined | wireless | fronthaul
    w_mask: tuple = None           # tx-antenna support of every DL covariance
    qdl_structure: str = "full"    # full | blockdiag | fixed
    qdl_mask: tuple = None         # tx-antenna support of Q_dl
    qdl_fixed: np.ndarray = None
    fronthaul_dl_rus: tuple = ()
    fronthaul_ul_rus: tuple = ()
    power_rus: tuple = ()
    time_share: float = 1.0

    @property
    def obs_rows(self) -> np.ndarray:
        off = self.config.rx_offsets
        rows = [i for r in self.obs_rus for i in range(off[r], off[r + 1])]
        return np.array(rows, dtype=int)

    @property
    def has_dl(self) -> bool:
        return len(self.dl_users) > 0

    @property
    def has_ul(self) -> bool:
        return len(self.ul_users) > 0

    def eve_list(self) -> tuple:
        return tuple(range(self.config.n_eves))

    def adversaries(self) -> list:
        return [("ru", r) for r in self.ru_adversaries] + \
               [("eve", l) for l in self.eve_list()]


def _antenna_mask(config: NetworkConfig, rus) -> tuple:
    off = config.tx_offsets
    return tuple(i for r in rus for i in range(off[r], off[r + 1]))


def scene_fd_joint(config: NetworkConfig, real: ChannelRealization) -> Scene:
    all_rus = tuple(range(config.n_ru))
    return Scene(
        config=config, real=real, mode="fd_joint",
        dl_users=tuple(range(config.n_dl_users)),
        ul_users=tuple(range(config.n_ul_users)),
        obs_rus=all_rus, ru_adversaries=config.untrusted,
        dl_ru_observation="combined",
        fronthaul_dl_rus=all_rus, fronthaul_ul_rus=all_rus, power_rus=all_rus,
    )


def scene_fd_blockdiag(config: NetworkConfig, real: ChannelRealization) -> Scene:
    base = scene_fd_joint(config, real)
    return Scene(**{**base.__dict__, "mode": "fd_blockdiag_qdl",
                    "qdl_structure": "blockdiag"})


def scene_fd_nonopt(config: NetworkConfig, real: ChannelRealization,
                    qdl_fixed: np.ndarray) -> Scene:
    base = scene_fd_joint(config, real)
    return Scene(**{**base.__dict__, "mode": "fd_nonopt_qdl",
                    "qdl_structure": "fixed", "qdl_fixed": qdl_fixed})


def scene_fd_zero_untrusted(config: NetworkConfig, real: ChannelRealization) -> Scene:
    """Untrusted RUs carry no waveforms and serve nobody, but still listen."""
    trusted = config.trusted
    mask = _antenna_mask(config, trusted)
    return Scene(
        config=config, real=real, mode="fd_zero_untrusted",
        dl_users=tuple(range(config.n_dl_users)),
        ul_users=tuple(range(config.n_ul_users)),
        obs_rus=trusted, ru_adversaries=config.untrusted,
        dl_ru_observation="wireless",
        w_mask=mask, qdl_mask=mask,
        fronthaul_dl_rus=trusted, fronthaul_ul_rus=trusted, power_rus=trusted,
    )


def scene_hd_ul(config: NetworkConfig, real: ChannelRealization) -> Scene:
    """TDD uplink phase: RUs only receive, so no self-interference and no DL
    quantization jamming exists."""
    cfg = config.replace(kappa=0.0, beta=0.0)
    all_rus = tuple(range(cfg.n_ru))
    zero_q = np.zeros((cfg.total_tx_ru, cfg.total_tx_ru), dtype=complex)
    return Scene(
        config=cfg, real=real, mode="hd_ul",
        dl_users=(), ul_users=tuple(range(cfg.n_ul_users)),
        obs_rus=all_rus, ru_adversaries=cfg.untrusted,
        dl_ru_observation="combined",
        qdl_structure="fixed", qdl_fixed=zero_q,
        fronthaul_dl_rus=(), fronthaul_ul_rus=all_rus, power_rus=(),
        time_share=0.5,
    )


def scene_hd_dl(config: NetworkConfig, real: ChannelRealization) -> Scene:
    """TDD downlink phase: RU receivers are off, so an untrusted RU only sees
    its own (noiseless) fronthaul waveform."""
    cfg = config.replace(kappa=0.0, beta=0.0)
    all_rus = tuple(range(cfg.n_ru))
    return Scene(
        config=cfg, real=real, mode="hd_dl",
        dl_users=tuple(range(cfg.n_dl_users)), ul_users=(),
        obs_rus=(), ru_adversaries=cfg.untrusted,
        dl_ru_observation="fronthaul",
        fronthaul_dl_rus=all_rus, fronthaul_ul_rus=(), power_rus=all_rus,
        time_share=0.5,
    )


SCENE_FACTORIES = {
    "fd_joint": scene_fd_joint,
    "fd_blockdiag_qdl": scene_fd_blockdiag,
    "fd_zero_untrusted": scene_fd_zero_untrusted,
}


# -- exact evaluation ---------------------------------------------------------

@dataclass
class SceneReport:
    """Exact rates, worst-case leakages and loads for one scene."""

    r_ul: dict
    r_dl: dict
    leak_ul: dict      # k -> {adversary: value}
    leak_dl: dict
    sec_ul: dict
    sec_dl: dict
    f_dl: dict
    f_ul: dict
    power_dl: dict
    power_ul: dict
    wssr: float


def scene_report(scene: Scene, v: DesignVariables) -> SceneReport:
    cfg, real = scene.config, scene.real
    lam = rates.residual_si_covariance(v, real, cfg)
    obs = scene.obs_rows if len(scene.obs_rus) < cfg.n_ru else None

    r_ul = {k: rates.uplink_rate(k, v, real, cfg, users=scene.ul_users,
                                 obs_rows=obs, si_cov=lam)
            for k in scene.ul_users}
    r_dl = {m: rates.downlink_rate(m, v, real, cfg, dl_users=scene.dl_users,
                                   ul_users=scene.ul_users)
            for m in scene.dl_users}

    leak_ul, leak_dl = {}, {}
    for k in scene.ul_users:
        leak_ul[k] = {}
        for kind, idx in scene.adversaries():
            if kind == "ru":
                leak_ul[k][(kind, idx)] = rates.leakage_to_ru(
                    "ul", k, idx, v, real, cfg, si_cov=lam)
            else:
                leak_ul[k][(kind, idx)] = rates.leakage_to_eve(
                    "ul", k, idx, v, real, cfg)
    for m in scene.dl_users:
        leak_dl[m] = {}
        for kind, idx in scene.adversaries():
            if kind == "ru":
                leak_dl[m][(kind, idx)] = rates.leakage_to_ru(
                    "dl", m, idx, v, real, cfg,
                    dl_observation=scene.dl_ru_observation)
            else:
                leak_dl[m][(kind, idx)] = rates.leakage_to_eve(
                    "dl", m, idx, v, real, cfg)

    def _sec(rate, leaks):
        worst = max(leaks.values(), default=0.0)
        return max(0.0, rate - worst)

    sec_ul = {k: _sec(r_ul[k], leak_ul[k]) for k in scene.ul_users}
    sec_dl = {m: _sec(r_dl[m], leak_dl[m]) for m in scene.dl_users}

    f_dl = {r: rates.fronthaul_dl(r, v, cfg) for r in scene.fronthaul_dl_rus}
    f_ul = {r: rates.fronthaul_ul(r, v, real, cfg, users=scene.ul_users, si_cov=lam)
            for r in scene.fronthaul_ul_rus}

    off = cfg.tx_offsets
    total_dl = v.w_sum() + v.q_dl
    power_dl = {r: float(np.real(np.trace(total_dl[off[r]:off[r + 1],
                                          off[r]:off[r + 1]])))
                for r in scene.power_rus}
    power_ul = {k: float(np.real(np.trace(v.f_tilde[k]))) for k in scene.ul_users}

    wssr = float(sum(cfg.w_dl[m] * sec_dl[m] for m in scene.dl_users)
                 + sum(cfg.w_ul[k] * sec_ul[k] for k in scene.ul_users))
    return SceneReport(r_ul=r_ul, r_dl=r_dl, leak_ul=leak_ul, leak_dl=leak_dl,
                       sec_ul=sec_ul, sec_dl=sec_dl, f_dl=f_dl, f_ul=f_ul,
                       power_dl=power_dl, power_ul=power_ul, wssr=wssr)


def scene_violation(scene: Scene, v: DesignVariables,
                    report: SceneReport = None) -> float:
    """Largest violation of the scene's power, fronthaul and PSD constraints
    (<= 0 means feasible)."""
    cfg = scene.config
    rep = report or scene_report(scene, v)
    worst = 0.0
    for r, load in rep.f_dl.items():
        worst = max(worst, load - cfg.c_dl[r])
    for r, load in rep.f_ul.items():
        worst = max(worst, load - cfg.c_ul[r])
    for r, p in rep.power_dl.items():
        worst = max(worst, p - cfg.p_dl_max[r])
    for k, p in rep.power_ul.items():
        worst = max(worst, p - cfg.p_ul_max[k])
    blocks = [v.w_tilde[m] for m in scene.dl_users] + \
             [v.f_tilde[k] for k in scene.ul_users] + [v.q_dl, v.q_ul]
    for b in blocks:
        if b.shape[0]:
            worst = max(worst, float(-np.linalg.eigvalsh(
                0.5 * (b + b.conj().T)).min()))
    return worst
