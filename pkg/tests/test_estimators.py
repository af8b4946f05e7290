from __future__ import annotations

import numpy as np
import pytest
from sklearn.base import clone

from qrdm_nevpt2.estimators import QRDMNevpt2, RDMEstimator
from qrdm_nevpt2.validation import ConfigError

from conftest import DATA, GOLDEN, load_system


def test_params_round_trip():
    est = QRDMNevpt2(measurement="shots", seed=4, shots=500)
    params = est.get_params()
    assert params["seed"] == 4 and params["shots"] == 500
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(gamma4="cu4")
    assert est.gamma4 == "cu4"


def test_fit_paths_and_integrals(h2):
    est = QRDMNevpt2(gamma4="none")
    est.fit([DATA / "h2_631g_r0.74.FCIDUMP", h2.ints], y=[0.74, 0.75])
    assert [p.label for p in est.results_] == [0.74, 0.75]
    ref = h2.casci.total_energy + GOLDEN["h2_631g_r0.74"]["e_nevpt2_pyscf"]
    np.testing.assert_allclose(est.e_total_, [ref, ref], atol=1e-8)


def test_predict_single_path():
    e = QRDMNevpt2(n_active=4, n_active_electrons=4).predict(str(DATA / "beh2_sto3g_r1.33.FCIDUMP"))
    g = GOLDEN["beh2_sto3g_r1.33"]
    assert e[0] == pytest.approx(g["e_casci"] + g["e_nevpt2_pyscf"], abs=1e-8)


def test_failed_system_gives_nan(tmp_path):
    bad = tmp_path / "bad.FCIDUMP"
    bad.write_text("&FCI NORB=1, NELEC=2\n&END\n 1.0 1 1 1 1\n")
    est = QRDMNevpt2(n_active=2, gamma4="none").fit([bad])
    assert np.isnan(est.e_total_[0])
    assert est.results_[0].status == "failed"


@pytest.mark.parametrize("kwargs", [
    {"measurement": "shots"},
    {"state_prep": "dft"},
    {"n_active": 0},
    {"n_active_electrons": 4, "gamma4": "none"},
])
def test_invalid_parameters(kwargs, h2):
    with pytest.raises(ConfigError):
        QRDMNevpt2(**kwargs).fit([h2.ints])


def test_rejects_unknown_inputs():
    with pytest.raises(ConfigError):
        QRDMNevpt2().fit([42])
    with pytest.raises(ConfigError):
        QRDMNevpt2().fit([])


def test_rdm_estimator_exact():
    sys = load_system("h3_631g_r1.00")
    est = RDMEstimator(ranks=(1, 2, 3)).fit(sys.casci.statevector(), 3)
    for k in (1, 2, 3):
        np.testing.assert_allclose(est.rdms_.rank(k), sys.rdms.rank(k), atol=1e-10)
    assert est.plan_.n_sets > 0


def test_rdm_estimator_shots(h2):
    est = RDMEstimator(ranks=(1,), mode="shots", shots=20000, seed=9).fit(h2.casci.statevector(), 2)
    np.testing.assert_allclose(est.rdms_.gamma1, h2.rdms.gamma1, atol=0.05)
    with pytest.raises(ConfigError):
        RDMEstimator(mode="shots").fit(h2.casci.statevector(), 2)
