"""Topology generation and random channel realizations.

Every node pair gets a flat block-fading draw ``H = sqrt(rho) * Htilde`` with
``rho = 1 / (1 + (d/50)^3)`` and i.i.d. unit-variance circular complex
Gaussian entries.  The RU self-interference blocks are Rician with an
all-ones dominant path.  Stacked matrices follow the tx/rx block layout of
:class:`~fdcran.config.NetworkConfig`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import NetworkConfig
from .rng import complex_normal, stream


def path_loss(d: float) -> float:
    """Distance-based power gain 1 / (1 + (d/50)^3); 1 at d=0, 0.5 at d=50 m."""
    if d < 0:
        raise ValueError("distance must be nonnegative")
    return 1.0 / (1.0 + (d / 50.0) ** 3)


def sample_channel(rows: int, cols: int, rho: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw one block-fading channel: i.i.d. CN(0, rho) entries."""
    return complex_normal(rng, rows, cols, variance=rho)


def sample_self_interference(rows: int, cols: int, config: NetworkConfig,
                             rng: np.random.Generator) -> np.ndarray:
    """Rician self-interference block: fixed all-ones mean plus scattering.

    Mean sqrt(rho_si*K/(1+K)) * ones, scatter variance rho_si/(1+K) per entry.
    """
    k_r = config.rician_k
    rho = config.rho_si
    mean = np.sqrt(rho * k_r / (1.0 + k_r)) * np.ones((rows, cols), dtype=complex)
    scatter = complex_normal(rng, rows, cols, variance=rho / (1.0 + k_r))
    return mean + scatter


def selection_matrix(kind: str, r: int, config: NetworkConfig) -> np.ndarray:
    """0/1 matrix extracting RU r's block from the stacked rx ('ul') or tx
    ('dl') array: [0 ... I ... 0]."""
    if kind == "ul":
        counts, offsets = config.rx_antennas_ru, config.rx_offsets
    elif kind == "dl":
        counts, offsets = config.tx_antennas_ru, config.tx_offsets
    else:
        raise ValueError(f"kind must be 'ul' or 'dl', got {kind!r}")
    if not 0 <= r < config.n_ru:
        raise IndexError(f"RU index {r} out of range [0, {config.n_ru})")
    n = int(counts[r])
    sel = np.zeros((n, offsets[-1]))
    sel[:, offsets[r]:offsets[r] + n] = np.eye(n)
    return sel


@dataclass(frozen=True)
class Topology:
    """2-D node positions (meters) inside the square cell."""

    ru_xy: np.ndarray    # (n_ru, 2)
    ul_xy: np.ndarray    # (n_ul_users, 2)
    dl_xy: np.ndarray    # (n_dl_users, 2)
    eve_xy: np.ndarray   # (n_eves, 2)


def _grid_centers(cell_side: float, n_ru: int) -> np.ndarray:
    g = int(np.ceil(np.sqrt(n_ru)))
    step = cell_side / g
    pts = [((c + 0.5) * step, (row + 0.5) * step)
           for row in range(g) for c in range(g)]
    return np.array(pts[:n_ru])


def generate_topology(config: NetworkConfig, rng: np.random.Generator) -> Topology:
    """Place RUs at sub-square centers; users and eavesdroppers uniformly.

    For the 4-RU layout the trusted pair sits on one cell diagonal and the
    untrusted pair on the other, so the first ``n_trusted`` entries are the
    trusted RUs.
    """
    side = config.cell_side
    if config.n_ru == 4:
        q = side / 4.0
        # trusted diagonal first, then the opposite one
        ru = np.array([(q, q), (3 * q, 3 * q), (3 * q, q), (q, 3 * q)])
    else:
        ru = _grid_centers(side, config.n_ru)
    ul = rng.uniform(0.0, side, size=(config.n_ul_users, 2))
    dl = rng.uniform(0.0, side, size=(config.n_dl_users, 2))
    eve = rng.uniform(0.0, side, size=(config.n_eves, 2))
    return Topology(ru_xy=ru, ul_xy=ul, dl_xy=dl, eve_xy=eve)


@dataclass
class ChannelRealization:
    """One draw of every channel plus the stacked/derived matrices.

    ``h_rr`` is the inter-RU channel with the self blocks zeroed while
    ``h_rr_full`` keeps them; ``h_eq[r]`` stacks the DL selection matrix on
    top of RU r's row slice of ``h_rr`` (the combined fronthaul + wireless
    observation of an untrusted RU).
    """

    h_ul: list        # k -> (sum M_r, N_ul_k)
    h_dl: list        # m -> (M_dl_m, sum N_r)
    h_ud: list        # [k][m] -> (M_dl_m, N_ul_k)
    h_ue: list        # [k][l] -> (M_eve_l, N_ul_k)
    h_re: list        # l -> (M_eve_l, sum N_r)
    h_rr: np.ndarray        # (sum M_r, sum N_r), diagonal blocks zero
    h_rr_full: np.ndarray   # (sum M_r, sum N_r), all blocks
    s_ul: list        # r -> (M_r, sum M_r)
    s_dl: list        # r -> (N_r, sum N_r)
    topology: Topology = None

    def h_rr_row(self, r: int, config: NetworkConfig) -> np.ndarray:
        off = config.rx_offsets
        return self.h_rr[off[r]:off[r + 1], :]

    def h_eq(self, r: int, config: NetworkConfig) -> np.ndarray:
        return np.vstack([self.s_dl[r].astype(complex), self.h_rr_row(r, config)])

    def save(self, path) -> None:
        """Flat binary dump (npz) for reproducibility debugging."""
        arrays = {"h_rr": self.h_rr, "h_rr_full": self.h_rr_full}
        for k, h in enumerate(self.h_ul):
            arrays[f"h_ul_{k}"] = h
        for m, h in enumerate(self.h_dl):
            arrays[f"h_dl_{m}"] = h
        for k, row in enumerate(self.h_ud):
            for m, h in enumerate(row):
                arrays[f"h_ud_{k}_{m}"] = h
        for k, row in enumerate(self.h_ue):
            for l, h in enumerate(row):
                arrays[f"h_ue_{k}_{l}"] = h
        for l, h in enumerate(self.h_re):
            arrays[f"h_re_{l}"] = h
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path, config: NetworkConfig) -> "ChannelRealization":
        data = np.load(path)
        h_ul = [data[f"h_ul_{k}"] for k in range(config.n_ul_users)]
        h_dl = [data[f"h_dl_{m}"] for m in range(config.n_dl_users)]
        h_ud = [[data[f"h_ud_{k}_{m}"] for m in range(config.n_dl_users)]
                for k in range(config.n_ul_users)]
        h_ue = [[data[f"h_ue_{k}_{l}"] for l in range(config.n_eves)]
                for k in range(config.n_ul_users)]
        h_re = [data[f"h_re_{l}"] for l in range(config.n_eves)]
        s_ul = [selection_matrix("ul", r, config) for r in range(config.n_ru)]
        s_dl = [selection_matrix("dl", r, config) for r in range(config.n_ru)]
        return cls(h_ul=h_ul, h_dl=h_dl, h_ud=h_ud, h_ue=h_ue, h_re=h_re,
                   h_rr=data["h_rr"], h_rr_full=data["h_rr_full"],
                   s_ul=s_ul, s_dl=s_dl)


def _pair_gain(a: np.ndarray, b: np.ndarray) -> float:
    return path_loss(float(np.linalg.norm(a - b)))


def build_realization(config: NetworkConfig, topology: Topology,
                      rng: np.random.Generator) -> ChannelRealization:
    """Draw every channel matrix for one block-fading realization.

    Draw order is fixed (UL, DL, user-user, user-eve, RU-eve, inter-RU) so a
    given stream always yields the same realization.
    """
    n_ru = config.n_ru
    m_rx = [int(v) for v in config.rx_antennas_ru]
    n_tx = [int(v) for v in config.tx_antennas_ru]
    rx_off, tx_off = config.rx_offsets, config.tx_offsets

    h_ul = []
    for k in range(config.n_ul_users):
        blocks = [sample_channel(m_rx[r], config.tx_antennas_ul[k],
                                 _pair_gain(topology.ul_xy[k], topology.ru_xy[r]), rng)
                  for r in range(n_ru)]
        h_ul.append(np.vstack(blocks))

    h_dl = []
    for m in range(config.n_dl_users):
        blocks = [sample_channel(config.rx_antennas_dl[m], n_tx[r],
                                 _pair_gain(topology.dl_xy[m], topology.ru_xy[r]), rng)
                  for r in range(n_ru)]
        h_dl.append(np.hstack(blocks))

    h_ud = [[sample_channel(config.rx_antennas_dl[m], config.tx_antennas_ul[k],
                            _pair_gain(topology.ul_xy[k], topology.dl_xy[m]), rng)
             for m in range(config.n_dl_users)]
            for k in range(config.n_ul_users)]

    h_ue = [[sample_channel(config.rx_antennas_eve[l], config.tx_antennas_ul[k],
                            _pair_gain(topology.ul_xy[k], topology.eve_xy[l]), rng)
             for l in range(config.n_eves)]
            for k in range(config.n_ul_users)]

    h_re = []
    for l in range(config.n_eves):
        blocks = [sample_channel(config.rx_antennas_eve[l], n_tx[r],
                                 _pair_gain(topology.eve_xy[l], topology.ru_xy[r]), rng)
                  for r in range(n_ru)]
        h_re.append(np.hstack(blocks))

    # inter-RU channel: block (r, r') receives at RU r from RU r' transmit
    h_rr_full = np.zeros((config.total_rx_ru, config.total_tx_ru), dtype=complex)
    for r in range(n_ru):
        for rp in range(n_ru):
            if r == rp:
                block = sample_self_interference(m_rx[r], n_tx[r], config, rng)
            else:
                block = sample_channel(m_rx[r], n_tx[rp],
                                       _pair_gain(topology.ru_xy[r], topology.ru_xy[rp]), rng)
            h_rr_full[rx_off[r]:rx_off[r + 1], tx_off[rp]:tx_off[rp + 1]] = block

    h_rr = h_rr_full.copy()
    for r in range(n_ru):
        h_rr[rx_off[r]:rx_off[r + 1], tx_off[r]:tx_off[r + 1]] = 0.0

    s_ul = [selection_matrix("ul", r, config) for r in range(n_ru)]
    s_dl = [selection_matrix("dl", r, config) for r in range(n_ru)]
    return ChannelRealization(h_ul=h_ul, h_dl=h_dl, h_ud=h_ud, h_ue=h_ue,
                              h_re=h_re, h_rr=h_rr, h_rr_full=h_rr_full,
                              s_ul=s_ul, s_dl=s_dl, topology=topology)


def draw_realization(config: NetworkConfig, master_seed: int,
                     index: int = 0) -> ChannelRealization:
    """Topology + channels for realization ``index`` of a seeded sweep.

    With ``redraw_positions`` unset, user/eavesdropper positions come from the
    master seed alone and only fading is re-drawn per index.
    """
    if config.redraw_positions:
        topo = generate_topology(config, stream(master_seed, index, 0))
    else:
        topo = generate_topology(config, stream(master_seed, 0))
    return build_realization(config, topo, stream(master_seed, index, 1))
