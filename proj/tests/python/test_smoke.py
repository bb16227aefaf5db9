import math

import numpy as np
import pytest

import cqedmap


def werner(p):
    ghz = np.zeros(8)
    ghz[0] = ghz[7] = 1 / math.sqrt(2)
    return (1 - p) * np.outer(ghz, ghz) + p / 8 * np.eye(8)


def test_config_round_trip():
    cfg = cqedmap.Config("werner_p = 0.2\n", {"kappa_c": 0.1})
    echo = cfg.echo()
    assert echo["initial"] == "werner"
    assert float(echo["werner_p"]) == 0.2
    assert float(echo["kappa_c"]) == 0.1
    assert set(cfg.given) == {"werner_p", "kappa_c"}
    assert "tau_off" in cqedmap.config_keys()


def test_config_errors_name_the_key():
    with pytest.raises(cqedmap.ConfigError, match="werner_p"):
        cqedmap.Config("werner_p = 1.5\n")
    with pytest.raises(cqedmap.ConfigError, match="bogus"):
        cqedmap.Config("bogus = 1\n")


@pytest.mark.parametrize(
    "p, label",
    [(0.1, "GHZclass"), (0.4, "Wclass"), (0.7, "INS"), (0.9, "FullySeparable")],
)
def test_classify_werner_family(p, label):
    out = cqedmap.classify(werner(p))
    assert out["label"] == label
    assert out["negativity"] == pytest.approx(max(0.0, 1 - 5 * p / 4), abs=1e-12)


def test_negativity_of_ghz():
    rho = werner(0.0)
    assert cqedmap.tripartite_negativity(rho) == pytest.approx(1.0, abs=1e-12)
    for cut in ("A|BC", "B|AC", "C|AB"):
        assert cqedmap.bipartite_negativity(rho, cut) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        cqedmap.tripartite_negativity(np.eye(4))


def test_fig1_maps_ghz_onto_atoms():
    out = cqedmap.run_fig1(cqedmap.Config("sample_every = 20\n"))
    series = out["series"]
    i = int(np.argmin(np.abs(series["tau"] - out["tau_off"])))
    assert series["E_a"][i] == pytest.approx(1.0, abs=1e-4)
    assert series["N_f"][i] < 1e-4
    assert out["peaks"]["kind"][0] == "switch_off"


def test_mcwf_is_reproducible():
    cfg = cqedmap.Config("kappa_c = 0.3\nmethod = mcwf\ntrajectories = 40\nseed = 5\ndt = 0.002\n")
    a = cqedmap.evolve(cfg, 2.0)
    b = cqedmap.evolve(cfg, 2.0)
    assert np.array_equal(a["p_e"], b["p_e"])
    assert np.all(a["se_p_e"] >= 0)
    cfg.set("seed", 6)
    c = cqedmap.evolve(cfg, 2.0)
    assert not np.array_equal(a["p_e"], c["p_e"])


def test_master_trace_of_populations():
    cfg = cqedmap.Config("kappa_c = 0.2\nsample_every = 50\n")
    r = cqedmap.evolve(cfg, 3.0)
    assert np.all(np.diff(3 * (r["N_f"] + r["N_c"] + r["p_e"])) <= 1e-12)
    assert r["warnings"] == []
