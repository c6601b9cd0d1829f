import numpy as np
import pytest

from fdcran.channels import draw_realization
from fdcran.config import NetworkConfig
from fdcran.linalg import logdet2, project_psd, real_embedding
from fdcran.rates import (DesignVariables, downlink_rate, fronthaul_dl,
                          fronthaul_ul, leakage_to_eve, leakage_to_ru,
                          rate_report, residual_si_covariance, secrecy_rates,
                          uplink_rate, wssr)
from fdcran.rng import stream

from conftest import manual_realization

LOG23_MINUS_1 = 0.5849625007211562  # log2(3) - log2(2), hand-evaluated


def _vars(config, w=0.0, f=0.0, q_dl=0.0, q_ul=0.0):
    v = DesignVariables.zeros(config)
    for m in range(config.n_dl_users):
        v.w_tilde[m] = np.eye(config.total_tx_ru, dtype=complex) * 0.0
    v.w_tilde[0][...] = np.eye(config.total_tx_ru) * w
    v.f_tilde[0][...] = np.eye(int(config.tx_antennas_ul[0])) * f
    v.q_dl[...] = np.eye(config.total_tx_ru) * q_dl
    v.q_ul[...] = np.eye(config.total_rx_ru) * q_ul
    return v


# -- log-det ------------------------------------------------------------------

def test_logdet_basics():
    assert logdet2(np.eye(2)) == pytest.approx(0.0, abs=1e-8)
    assert logdet2(np.diag([2.0, 2.0])) == pytest.approx(2.0, abs=1e-8)
    with pytest.raises(ValueError):
        logdet2(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_logdet_eigenvalue_oracle():
    rng = stream(100)
    for _ in range(20):
        a = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        m = a @ a.conj().T + np.eye(5)
        expect = float(np.sum(np.log2(np.linalg.eigvalsh(m + 1e-10 * np.eye(5)))))
        assert logdet2(m) == pytest.approx(expect, abs=1e-9)


def test_logdet_real_embedding_cross_check():
    rng = stream(101)
    for _ in range(20):
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        m = a @ a.conj().T + 0.5 * np.eye(4)
        assert logdet2(real_embedding(m)) == pytest.approx(2.0 * logdet2(m), abs=1e-9)


def test_project_psd():
    assert np.allclose(project_psd(np.diag([1.0, -1.0])), np.diag([1.0, 0.0]), atol=1e-12)
    m = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert np.allclose(project_psd(m), m, atol=1e-12)
    rng = stream(102)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    out = project_psd(a + a.conj().T)
    assert np.linalg.eigvalsh(out).min() >= -1e-12


# -- residual self-interference ------------------------------------------------

def test_si_covariance_zero_when_distortion_off(scalar_config):
    real = manual_realization(scalar_config, h_rr_full=np.array([[1.0 + 0j]]))
    v = _vars(scalar_config, w=3.0, q_dl=2.0)
    assert np.all(residual_si_covariance(v, real, scalar_config) == 0)


def test_si_covariance_scalar_value(scalar_config):
    cfg = scalar_config.replace(kappa=1e-2, beta=1e-2)
    real = manual_realization(cfg, h_rr_full=np.array([[1.0 + 0j]]))
    v = _vars(cfg, w=3.0, q_dl=2.0)  # Q + sum W = 5
    lam = residual_si_covariance(v, real, cfg)
    assert lam[0, 0].real == pytest.approx(0.02 * 5.0, abs=1e-12)


def test_si_covariance_psd_random():
    cfg = NetworkConfig.defaults().replace(kappa=0.03, beta=0.07)
    real = draw_realization(cfg, 55, 0)
    rng = stream(56)
    v = DesignVariables.zeros(cfg)
    for m in range(cfg.n_dl_users):
        a = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        v.w_tilde[m] = a @ a.conj().T
    a = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    v.q_dl = a @ a.conj().T
    lam = residual_si_covariance(v, real, cfg)
    assert np.abs(lam - lam.conj().T).max() < 1e-10
    assert np.linalg.eigvalsh(lam).min() >= -1e-8


# -- rates ----------------------------------------------------------------------

def test_uplink_rate_scalar_cases(scalar_config):
    real = manual_realization(scalar_config, h_ul=[np.array([[1.0 + 0j]])])
    assert uplink_rate(0, _vars(scalar_config, f=1.0), real, scalar_config) == \
        pytest.approx(1.0, abs=1e-9)
    assert uplink_rate(0, _vars(scalar_config, f=1.0, q_ul=1.0), real, scalar_config) == \
        pytest.approx(LOG23_MINUS_1, abs=1e-9)
    assert uplink_rate(0, _vars(scalar_config, f=0.0), real, scalar_config) == \
        pytest.approx(0.0, abs=1e-9)


def test_downlink_rate_scalar_cases(scalar_config):
    real = manual_realization(scalar_config, h_dl=[np.array([[1.0 + 0j]])])
    assert downlink_rate(0, _vars(scalar_config, w=1.0), real, scalar_config) == \
        pytest.approx(1.0, abs=1e-9)
    assert downlink_rate(0, _vars(scalar_config, w=1.0, q_dl=1.0), real, scalar_config) == \
        pytest.approx(LOG23_MINUS_1, abs=1e-9)
    assert downlink_rate(0, _vars(scalar_config, w=0.0), real, scalar_config) == \
        pytest.approx(0.0, abs=1e-9)


def test_rate_monotone_in_quantization_noise(scalar_config):
    real_ul = manual_realization(scalar_config, h_ul=[np.array([[1.0 + 0j]])])
    real_dl = manual_realization(scalar_config, h_dl=[np.array([[1.0 + 0j]])])
    r_ul = [uplink_rate(0, _vars(scalar_config, f=1.0, q_ul=q), real_ul, scalar_config)
            for q in np.linspace(0, 5, 11)]
    r_dl = [downlink_rate(0, _vars(scalar_config, w=1.0, q_dl=q), real_dl, scalar_config)
            for q in np.linspace(0, 5, 11)]
    assert np.all(np.diff(r_ul) < 0)
    assert np.all(np.diff(r_dl) < 0)


# -- leakages -------------------------------------------------------------------

def test_ul_leakage_to_ru_scalar(two_ru_config):
    cfg = two_ru_config
    h_ul = [np.array([[0.0], [1.0 + 0j]])]          # heard by untrusted RU 1
    h_rr = np.array([[0, 0], [1.0 + 0j, 0]])        # RU1 hears RU0's transmit antenna
    real = manual_realization(cfg, h_ul=h_ul, h_rr=h_rr)
    v = _vars(cfg, f=1.0)
    v.q_dl[...] = np.diag([1.0, 0.0])               # jamming power 1 through h_rr
    assert leakage_to_ru("ul", 0, 1, v, real, cfg) == pytest.approx(LOG23_MINUS_1, abs=1e-9)
    v0 = _vars(cfg, f=0.0)
    v0.q_dl[...] = np.diag([1.0, 0.0])
    assert leakage_to_ru("ul", 0, 1, v0, real, cfg) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        leakage_to_ru("ul", 0, 0, v, real, cfg)     # RU 0 is trusted


def test_ul_leakage_monotone_in_jamming(two_ru_config):
    cfg = two_ru_config
    real = manual_realization(cfg, h_ul=[np.array([[0.0], [1.0 + 0j]])],
                              h_rr=np.array([[0, 0], [1.0 + 0j, 0]]))
    leaks = []
    for scale in np.linspace(0, 5, 11):
        v = _vars(cfg, f=1.0)
        v.q_dl[...] = np.diag([scale, 0.0])
        leaks.append(leakage_to_ru("ul", 0, 1, v, real, cfg))
    assert np.all(np.diff(leaks) <= 1e-12)


def test_eve_leakage_scalar(eve_config):
    cfg = eve_config
    real = manual_realization(cfg, h_ue=[[np.array([[1.0 + 0j]])]],
                              h_re=[np.array([[1.0 + 0j]])])
    v = _vars(cfg, f=1.0)                           # no jamming: q_dl = 0
    assert leakage_to_eve("ul", 0, 0, v, real, cfg) == pytest.approx(1.0, abs=1e-9)
    v = _vars(cfg, w=1.0, q_dl=1.0)
    assert leakage_to_eve("dl", 0, 0, v, real, cfg) == pytest.approx(LOG23_MINUS_1, abs=1e-9)
    v = _vars(cfg)
    assert leakage_to_eve("dl", 0, 0, v, real, cfg) == pytest.approx(0.0, abs=1e-9)
    assert leakage_to_eve("ul", 0, 0, v, real, cfg) == pytest.approx(0.0, abs=1e-9)


def test_dl_leakage_to_ru_observation_models(two_ru_config):
    cfg = two_ru_config
    h_rr = np.array([[0, 0], [0.5 + 0j, 0]])
    real = manual_realization(cfg, h_rr=h_rr)
    v = _vars(cfg, w=1.0, q_dl=1.0)
    combined = leakage_to_ru("dl", 0, 1, v, real, cfg)
    wireless = leakage_to_ru("dl", 0, 1, v, real, cfg, dl_observation="wireless")
    fronthaul = leakage_to_ru("dl", 0, 1, v, real, cfg, dl_observation="fronthaul")
    # more observations leak at least as much
    assert combined >= wireless - 1e-9
    assert combined >= fronthaul - 1e-9
    # fronthaul-only observation of W=I, Q=I on RU 1's antenna: log2(2/1)
    assert fronthaul == pytest.approx(1.0, abs=1e-7)


# -- secrecy and WSSR ------------------------------------------------------------

def test_secrecy_clamp_and_empty_adversaries(scalar_config):
    real = manual_realization(scalar_config,
                              h_ul=[np.array([[1.0 + 0j]])],
                              h_dl=[np.array([[1.0 + 0j]])])
    sec_ul, sec_dl = secrecy_rates(_vars(scalar_config, w=1.0, f=1.0), real, scalar_config)
    # no adversaries at all: secrecy equals rate
    assert sec_ul[0] == pytest.approx(1.0, abs=1e-9)
    assert sec_dl[0] == pytest.approx(1.0, abs=1e-9)


def test_secrecy_clamps_at_zero(eve_config):
    cfg = eve_config
    real = manual_realization(cfg, h_ue=[[np.array([[5.0 + 0j]])]],
                              h_ul=[np.array([[0.1 + 0j]])])
    sec_ul, _ = secrecy_rates(_vars(cfg, f=1.0), real, cfg)
    assert sec_ul[0] == 0.0


def test_wssr_arithmetic():
    cfg = NetworkConfig(n_ru=1, n_trusted=1, n_ul_users=2, n_dl_users=1, n_eves=0,
                        tx_antennas_ru=1, rx_antennas_ru=1, tx_antennas_ul=1,
                        rx_antennas_dl=1, noise_ul=1.0, noise_dl=1.0,
                        kappa=0.0, beta=0.0, d_dl=1, d_ul=1)
    assert wssr(np.array([0.5, 0.5]), np.array([1.0]), cfg) == pytest.approx(2.0)
    assert wssr(np.zeros(2), np.zeros(1), cfg) == 0.0
    cfg2 = cfg.replace(w_dl=2.0, w_ul=2.0)
    assert wssr(np.array([0.5, 0.5]), np.array([1.0]), cfg2) == pytest.approx(4.0)


# -- fronthaul loads -------------------------------------------------------------

def test_fronthaul_dl_scalar(scalar_config):
    cfg = scalar_config
    assert fronthaul_dl(0, _vars(cfg, w=1.0, q_dl=1.0), cfg) == pytest.approx(1.0, abs=1e-7)
    assert fronthaul_dl(0, _vars(cfg, w=1.0, q_dl=0.0), cfg) == pytest.approx(0.0, abs=1e-7)
    assert fronthaul_dl(0, _vars(cfg, w=1.0, q_dl=3.0), cfg) == pytest.approx(2.0, abs=1e-7)


def test_fronthaul_dl_testchannel(scalar_config):
    cfg = scalar_config
    v = _vars(cfg, w=1.0, q_dl=1.0)
    # I(x; x+q) = log2|W+Q| - log2|Q| = 1 for W = Q = 1
    assert fronthaul_dl(0, v, cfg, convention="testchannel") == pytest.approx(1.0, abs=1e-7)
    v = _vars(cfg, w=3.0, q_dl=1.0)
    assert fronthaul_dl(0, v, cfg, convention="testchannel") == pytest.approx(2.0, abs=1e-7)


def test_fronthaul_ul_scalar(scalar_config):
    cfg = scalar_config
    real = manual_realization(cfg)  # no signals: received covariance = noise = 1
    assert fronthaul_ul(0, _vars(cfg, q_ul=1.0), real, cfg) == pytest.approx(1.0, abs=1e-9)
    assert fronthaul_ul(0, _vars(cfg, q_ul=0.0), real, cfg) == pytest.approx(0.0, abs=1e-9)
    loads = [fronthaul_ul(0, _vars(cfg, q_ul=q), real, cfg) for q in [1, 10, 100, 1000]]
    assert np.all(np.diff(loads) > 0)


# -- full report ------------------------------------------------------------------

def test_zero_design_point_all_zero():
    cfg = NetworkConfig.defaults()
    real = draw_realization(cfg, 2024, 0)
    rep = rate_report(DesignVariables.zeros(cfg), real, cfg)
    for arr in [rep.r_ul, rep.r_dl, rep.leak_ul_ru, rep.leak_dl_ru,
                rep.leak_ul_eve, rep.leak_dl_eve, rep.sec_ul, rep.sec_dl,
                rep.f_dl, rep.f_ul]:
        assert np.allclose(arr, 0.0, atol=1e-8)
    assert rep.wssr == 0.0


def test_report_nonnegative_and_finite_random_point():
    cfg = NetworkConfig.defaults()
    real = draw_realization(cfg, 31, 0)
    rng = stream(32)
    v = DesignVariables.zeros(cfg)
    for m in range(cfg.n_dl_users):
        a = rng.standard_normal((8, 4)) + 1j * rng.standard_normal((8, 4))
        v.w_tilde[m] = 10.0 * (a @ a.conj().T)
    for k in range(cfg.n_ul_users):
        a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        v.f_tilde[k] = 10.0 * (a @ a.conj().T)
    a = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    v.q_dl = a @ a.conj().T
    q = np.zeros((8, 8), dtype=complex)
    for r in range(4):
        a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        q[2 * r:2 * r + 2, 2 * r:2 * r + 2] = a @ a.conj().T
    v.q_ul = q
    v.validate(cfg)
    rep = rate_report(v, real, cfg)
    for arr in [rep.r_ul, rep.r_dl, rep.leak_ul_ru, rep.leak_dl_ru,
                rep.leak_ul_eve, rep.leak_dl_eve, rep.f_dl, rep.f_ul]:
        assert np.all(np.isfinite(arr))
        assert np.all(np.asarray(arr) >= -1e-8)
    assert rep.wssr >= 0.0
    # secrecy = clamp(rate - worst leakage)
    worst = max(rep.leak_ul_ru[0].max(), rep.leak_ul_eve[0].max())
    assert rep.sec_ul[0] == pytest.approx(max(0.0, rep.r_ul[0] - worst), abs=1e-12)


def test_design_variable_validation():
    cfg = NetworkConfig.defaults()
    v = DesignVariables.zeros(cfg)
    v.q_ul[0, 3] = 1.0  # off the per-RU diagonal blocks
    with pytest.raises(ValueError):
        v.validate(cfg)
    v = DesignVariables.zeros(cfg)
    v.w_tilde[0][0, 1] = 1.0  # not Hermitian
    with pytest.raises(ValueError):
        v.validate(cfg)


def test_design_variable_roundtrip(tmp_path):
    cfg = NetworkConfig.defaults()
    v = DesignVariables.zeros(cfg)
    v.w_tilde[0][...] = np.eye(8) * 2.0
    v.save(tmp_path / "v.npz")
    back = DesignVariables.load(tmp_path / "v.npz", cfg)
    assert np.array_equal(back.w_tilde[0], v.w_tilde[0])
