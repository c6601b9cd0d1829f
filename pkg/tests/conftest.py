import numpy as np
import pytest

from fdcran.config import NetworkConfig
from fdcran.channels import ChannelRealization, selection_matrix


def manual_realization(config: NetworkConfig, **overrides) -> ChannelRealization:
    """All-zero realization with hand-set channel entries, for closed-form tests."""
    n_tx, n_rx = config.total_tx_ru, config.total_rx_ru
    real = ChannelRealization(
        h_ul=[np.zeros((n_rx, int(a)), dtype=complex) for a in config.tx_antennas_ul],
        h_dl=[np.zeros((int(a), n_tx), dtype=complex) for a in config.rx_antennas_dl],
        h_ud=[[np.zeros((int(config.rx_antennas_dl[m]), int(config.tx_antennas_ul[k])), dtype=complex)
               for m in range(config.n_dl_users)] for k in range(config.n_ul_users)],
        h_ue=[[np.zeros((int(config.rx_antennas_eve[l]), int(config.tx_antennas_ul[k])), dtype=complex)
               for l in range(config.n_eves)] for k in range(config.n_ul_users)],
        h_re=[np.zeros((int(a), n_tx), dtype=complex) for a in config.rx_antennas_eve],
        h_rr=np.zeros((n_rx, n_tx), dtype=complex),
        h_rr_full=np.zeros((n_rx, n_tx), dtype=complex),
        s_ul=[selection_matrix("ul", r, config) for r in range(config.n_ru)],
        s_dl=[selection_matrix("dl", r, config) for r in range(config.n_ru)],
    )
    for name, value in overrides.items():
        setattr(real, name, value)
    return real


@pytest.fixture
def scalar_config():
    """One single-antenna RU, one UL and one DL user, no adversaries,
    unit noise everywhere, distortion off."""
    return NetworkConfig(
        n_ru=1, n_trusted=1, n_ul_users=1, n_dl_users=1, n_eves=0,
        tx_antennas_ru=1, rx_antennas_ru=1, tx_antennas_ul=1,
        rx_antennas_dl=1, rx_antennas_eve=1,
        noise_ul=1.0, noise_dl=1.0, noise_eve=1.0,
        kappa=0.0, beta=0.0, d_dl=1, d_ul=1,
    )


@pytest.fixture
def eve_config():
    """Scalar network plus one single-antenna eavesdropper."""
    return NetworkConfig(
        n_ru=1, n_trusted=1, n_ul_users=1, n_dl_users=1, n_eves=1,
        tx_antennas_ru=1, rx_antennas_ru=1, tx_antennas_ul=1,
        rx_antennas_dl=1, rx_antennas_eve=1,
        noise_ul=1.0, noise_dl=1.0, noise_eve=1.0,
        kappa=0.0, beta=0.0, d_dl=1, d_ul=1,
    )


@pytest.fixture
def two_ru_config():
    """Two single-antenna RUs (one trusted, one untrusted), unit noise."""
    return NetworkConfig(
        n_ru=2, n_trusted=1, n_ul_users=1, n_dl_users=1, n_eves=0,
        tx_antennas_ru=1, rx_antennas_ru=1, tx_antennas_ul=1,
        rx_antennas_dl=1, rx_antennas_eve=1,
        noise_ul=1.0, noise_dl=1.0, noise_eve=1.0,
        kappa=0.0, beta=0.0, d_dl=1, d_ul=1,
    )
