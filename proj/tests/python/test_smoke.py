"""End-to-end smoke tests for the python bindings."""

import math

import pytest

import cheyette

FLAT_TIMES = [0.0, 60.0]
FORECAST_DFS = [1.0, math.exp(-0.025 * 60.0)]
DISCOUNT_DFS = [1.0, math.exp(-0.02 * 60.0)]

LINBRLV_PARAMS = """{
  "setting": "LinBRLV",
  "lambda": 0.03,
  "delta": 0.25,
  "localvol": { "a": 0.008, "b": 0.0 },
  "sv": { "type": "NoSV" }
}"""


def test_version():
    assert cheyette.__version__ == "0.1.0"


def test_g_and_h():
    lam = 0.03
    assert cheyette.g(lam, 0.25) == pytest.approx((1 - math.exp(-lam * 0.25)) / lam, rel=1e-15)
    assert cheyette.h(lam, 0.25) == pytest.approx(math.exp(-lam * 0.25), rel=1e-15)
    # small mean reversion degenerates to the identity
    assert cheyette.g(1e-14, 2.0) == pytest.approx(2.0, rel=1e-12)


def test_black_put_call_parity():
    call = cheyette.black(100.0, 95.0, 0.25, 1.0)
    put = cheyette.black(100.0, 95.0, 0.25, -1.0)
    assert call == pytest.approx(12.40127169436203, rel=1e-13)
    assert call - put == pytest.approx(5.0, rel=1e-12)
    with pytest.raises(ValueError):
        cheyette.black(100.0, 95.0, -0.1, 1.0)


def test_settings_catalog():
    names = cheyette.settings_catalog()
    assert len(names) == 8
    assert "LinBRLV+CIRSV" in names
    assert "LinXLV+QDLNSV" in names


def test_tables_config_is_json():
    import json

    config = json.loads(cheyette.tables_config())
    assert len(config["settings"]) == 8


def test_check_script_classification():
    text = cheyette.builtin_script("LinBRLV+CIRSV", "t-forward")
    info = cheyette.check_script(
        text, {"strikes": [0.02, 0.03], "maturity": 1.0}
    )
    assert info["brownians"] == ["W", "Z"]
    assert "ratex" in info["stepped"]
    assert info["payoffs"] == [
        "calloption_strike_0.020000",
        "calloption_strike_0.030000",
    ]
    assert info["observation_times"] == [1.0]
    with pytest.raises(ValueError):
        cheyette.check_script("x = x +\n")


def test_simulate_script_is_deterministic():
    text = cheyette.builtin_script("LinBRLV+CIRSV", "t-forward")
    kwargs = dict(
        parse_values={"strikes": [0.02, 0.03], "maturity": 1.0},
        bindings={
            "mr": 0.03,
            "measT": 1.25,
            "theta": 0.2,
            "volofvar": 0.5,
            "delta": 0.25,
            "a": 0.005,
            "b": -0.1,
            "poa": 1.0,
        },
        external_curves={"initfwd": (FLAT_TIMES, FORECAST_DFS)},
        batch=128,
        seed=11,
    )
    first = cheyette.simulate_script(text, **kwargs)
    second = cheyette.simulate_script(text, **kwargs)
    assert sorted(first) == [
        "calloption_strike_0.020000",
        "calloption_strike_0.030000",
    ]
    for name in first:
        assert first[name] == second[name]
        assert len(first[name]) == 128

    with pytest.raises(RuntimeError):
        bad = dict(kwargs)
        bad["bindings"] = {k: v for k, v in kwargs["bindings"].items() if k != "theta"}
        cheyette.simulate_script(text, **bad)


def test_hw_caplet_matches_frozen_value():
    atm = 0.025078288015047967
    price = cheyette.hw_caplet(
        0.008, 0.03, FLAT_TIMES, FORECAST_DFS, FLAT_TIMES, DISCOUNT_DFS,
        1.0, 1.0, 1.0, 1.25, atm,
    )
    assert price == pytest.approx(0.0007685772721796, rel=1e-12)


def test_price_caplets_agrees_with_closed_form():
    atm = cheyette.atm_strike(FLAT_TIMES, FORECAST_DFS, 1.0, 1.25)
    results = cheyette.price_caplets(
        LINBRLV_PARAMS, 1.0, 1.25, [atm],
        f_times=FLAT_TIMES, f_dfs=FORECAST_DFS,
        d_times=FLAT_TIMES, d_dfs=DISCOUNT_DFS,
        paths=1 << 15, seed=11,
    )
    (price, se) = results[0]
    exact = cheyette.hw_caplet(
        0.008, 0.03, FLAT_TIMES, FORECAST_DFS, FLAT_TIMES, DISCOUNT_DFS,
        1.0, 1.0, 1.0, 1.25, atm,
    )
    assert se > 0.0
    assert abs(price - exact) < 4.0 * se


def test_generate_code_emits_c_interface():
    text = cheyette.builtin_script("LinBRLV+CIRSV", "t-forward")
    source = cheyette.generate_code(text, {"strikes": [0.02], "maturity": 1.0})
    assert 'extern "C"' in source
    assert "chey_simulate" in source
