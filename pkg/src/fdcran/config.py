"""Network configuration: node counts, antennas, powers, fronthaul budgets.

All values are stored in linear units (powers and noise in mW, fronthaul
capacities in bits/s/Hz, distances in meters, distortion coefficients
dimensionless).  Config files carry powers in dBm and distortion in dB and
are converted once at load time; see :data:`CONFIG_SCHEMA`.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import yaml


def dbm_to_mw(x: float) -> float:
    """30 dBm -> 1000 mW, -40 dBm -> 1e-4 mW."""
    return 10.0 ** (x / 10.0)


def db_to_linear(x: float) -> float:
    """-40 dB -> 1e-4."""
    return 10.0 ** (x / 10.0)


def _per_node(value, n: int, name: str) -> tuple:
    """Normalize a scalar or a length-n sequence to an n-tuple."""
    if isinstance(value, (list, tuple)):
        if len(value) != n:
            raise ValueError(f"{name}: expected {n} entries, got {len(value)}")
        return tuple(value)
    return (value,) * n


# File schema: key -> (description, unit).  Keys ending in _dbm / _db are
# converted to linear mW / dimensionless on load.
CONFIG_SCHEMA = {
    "n_ru": ("number of radio units", "count"),
    "n_trusted": ("trusted RUs (the first n_trusted RU indices)", "count"),
    "n_ul_users": ("uplink users", "count"),
    "n_dl_users": ("downlink users", "count"),
    "n_eves": ("external eavesdroppers", "count"),
    "tx_antennas_ru": ("transmit antennas per RU", "count or per-RU list"),
    "rx_antennas_ru": ("receive antennas per RU", "count or per-RU list"),
    "tx_antennas_ul": ("antennas per UL user", "count or per-user list"),
    "rx_antennas_dl": ("antennas per DL user", "count or per-user list"),
    "rx_antennas_eve": ("antennas per eavesdropper", "count or per-eve list"),
    "p_dl_max_dbm": ("RU transmit power budget", "dBm"),
    "p_ul_max_dbm": ("UL user transmit power budget", "dBm"),
    "c_dl": ("downlink fronthaul capacity per RU", "bits/s/Hz"),
    "c_ul": ("uplink fronthaul capacity per RU", "bits/s/Hz"),
    "noise_ul_dbm": ("thermal noise at each RU", "dBm"),
    "noise_dl_dbm": ("thermal noise at each DL user", "dBm"),
    "noise_eve_dbm": ("thermal noise at each eavesdropper", "dBm"),
    "kappa_db": ("transmit-chain distortion coefficient", "dB"),
    "beta_db": ("receive-chain distortion coefficient", "dB"),
    "rho_si": ("self-interference channel strength", "linear gain"),
    "rician_k": ("Rician factor of the self-interference channel", "linear"),
    "w_dl": ("DL secrecy-rate weights", "scalar or per-user list"),
    "w_ul": ("UL secrecy-rate weights", "scalar or per-user list"),
    "d_dl": ("DL stream dimension per user", "count"),
    "d_ul": ("UL stream dimension per user", "count"),
    "cell_side": ("side length of the square cell", "meters"),
    "fronthaul_convention": ("fronthaul-load formula variant", "paper|testchannel"),
    "redraw_positions": ("re-draw node positions per realization", "bool"),
}

_DB_KEYS = {
    "p_dl_max_dbm": "p_dl_max",
    "p_ul_max_dbm": "p_ul_max",
    "noise_ul_dbm": "noise_ul",
    "noise_dl_dbm": "noise_dl",
    "noise_eve_dbm": "noise_eve",
    "kappa_db": "kappa",
    "beta_db": "beta",
}


@dataclass(frozen=True)
class NetworkConfig:
    """All scalar system parameters, stored in linear units.

    Per-node quantities accept a scalar (shared by every node) or one value
    per node; they are normalized to tuples.
    """

    n_ru: int = 4
    n_trusted: int = 2          # first n_trusted RU indices are trusted
    n_ul_users: int = 2
    n_dl_users: int = 2
    n_eves: int = 2
    tx_antennas_ru: tuple = 2   # N_r
    rx_antennas_ru: tuple = 2   # M_r
    tx_antennas_ul: tuple = 2
    rx_antennas_dl: tuple = 2
    rx_antennas_eve: tuple = 2
    p_dl_max: tuple = 1000.0    # mW per RU (30 dBm)
    p_ul_max: tuple = 1000.0    # mW per UL user
    c_dl: tuple = 10.0          # bits/s/Hz per RU (100 Mbit/s over 10 MHz)
    c_ul: tuple = 10.0
    noise_ul: tuple = 1e-4      # mW per RU (-40 dBm)
    noise_dl: tuple = 1e-4
    noise_eve: tuple = 1e-4
    kappa: float = 1e-4         # -40 dB
    beta: float = 1e-4
    rho_si: float = 1.0
    rician_k: float = 10.0
    w_dl: tuple = 1.0
    w_ul: tuple = 1.0
    d_dl: tuple = 1             # enforced rank of each DL transmit covariance
    d_ul: tuple = 2
    cell_side: float = 100.0    # meters
    fronthaul_convention: str = "paper"
    redraw_positions: bool = True

    def __post_init__(self):
        set_ = object.__setattr__
        for name, n in [
            ("tx_antennas_ru", self.n_ru), ("rx_antennas_ru", self.n_ru),
            ("tx_antennas_ul", self.n_ul_users), ("rx_antennas_dl", self.n_dl_users),
            ("rx_antennas_eve", self.n_eves),
            ("p_dl_max", self.n_ru), ("p_ul_max", self.n_ul_users),
            ("c_dl", self.n_ru), ("c_ul", self.n_ru),
            ("noise_ul", self.n_ru), ("noise_dl", self.n_dl_users),
            ("noise_eve", self.n_eves),
            ("w_dl", self.n_dl_users), ("w_ul", self.n_ul_users),
            ("d_dl", self.n_dl_users), ("d_ul", self.n_ul_users),
        ]:
            set_(self, name, _per_node(getattr(self, name), n, name))
        self._validate()

    def _validate(self):
        if self.n_ru < 1 or self.n_ul_users < 1 or self.n_dl_users < 1:
            raise ValueError("node counts must be >= 1 (n_eves may be 0)")
        if self.n_eves < 0:
            raise ValueError("n_eves must be >= 0")
        if not 0 <= self.n_trusted <= self.n_ru:
            raise ValueError("n_trusted must lie in [0, n_ru]")
        for name in ("tx_antennas_ru", "rx_antennas_ru", "tx_antennas_ul",
                     "rx_antennas_dl", "rx_antennas_eve"):
            if any(int(v) < 1 for v in getattr(self, name)):
                raise ValueError(f"{name}: antenna counts must be >= 1")
        for name in ("p_dl_max", "p_ul_max", "c_dl", "c_ul",
                     "noise_ul", "noise_dl", "noise_eve"):
            if any(v < 0 for v in getattr(self, name)):
                raise ValueError(f"{name}: must be nonnegative")
        if not (0 <= self.kappa < 1 and 0 <= self.beta < 1):
            raise ValueError("kappa and beta must lie in [0, 1)")
        if self.rho_si < 0 or self.rician_k < 0:
            raise ValueError("rho_si and rician_k must be nonnegative")
        if self.cell_side <= 0:
            raise ValueError("cell_side must be positive")
        n_tx_total = self.total_tx_ru
        for m, d in enumerate(self.d_dl):
            if not 1 <= d <= min(n_tx_total, self.rx_antennas_dl[m]):
                raise ValueError(f"d_dl[{m}] must lie in [1, min(sum N_r, M_m)]")
        for k, d in enumerate(self.d_ul):
            if not 1 <= d <= self.tx_antennas_ul[k]:
                raise ValueError(f"d_ul[{k}] must lie in [1, N_ul_k]")
        if self.fronthaul_convention not in ("paper", "testchannel"):
            raise ValueError("fronthaul_convention must be 'paper' or 'testchannel'")

    # -- derived dimensions -------------------------------------------------
    @property
    def total_tx_ru(self) -> int:
        return int(sum(self.tx_antennas_ru))

    @property
    def total_rx_ru(self) -> int:
        return int(sum(self.rx_antennas_ru))

    @property
    def tx_offsets(self) -> tuple:
        """Column offset of each RU block in the stacked transmit array."""
        out, acc = [], 0
        for n in self.tx_antennas_ru:
            out.append(acc)
            acc += int(n)
        return tuple(out + [acc])

    @property
    def rx_offsets(self) -> tuple:
        out, acc = [], 0
        for n in self.rx_antennas_ru:
            out.append(acc)
            acc += int(n)
        return tuple(out + [acc])

    @property
    def untrusted(self) -> tuple:
        return tuple(range(self.n_trusted, self.n_ru))

    @property
    def trusted(self) -> tuple:
        return tuple(range(self.n_trusted))

    def replace(self, **kwargs) -> "NetworkConfig":
        base = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        base.update(kwargs)
        # collapse homogeneous per-node tuples so count changes re-broadcast
        for name, value in base.items():
            if name not in kwargs and isinstance(value, tuple) and len(set(value)) == 1:
                base[name] = value[0]
        return NetworkConfig(**base)

    # -- file I/O ------------------------------------------------------------
    @classmethod
    def from_mapping(cls, data: dict) -> "NetworkConfig":
        data = dict(data)
        unknown = set(data) - set(CONFIG_SCHEMA)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            if key in _DB_KEYS:
                conv = dbm_to_mw if key.endswith("_dbm") else db_to_linear
                if isinstance(value, (list, tuple)):
                    value = [conv(v) for v in value]
                else:
                    value = conv(value)
                kwargs[_DB_KEYS[key]] = value
            else:
                kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "NetworkConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: expected a key-value mapping")
        return cls.from_mapping(data)

    @classmethod
    def defaults(cls) -> "NetworkConfig":
        """The default evaluation setup (4 RUs, 2 trusted, 2+2 users)."""
        return cls()
