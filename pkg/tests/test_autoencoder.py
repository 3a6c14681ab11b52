import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plcml import autoencoder as ae
from plcml import medium as md


def test_channel_layer_identity_and_scaling():
    x = np.random.default_rng(0).normal(size=(5, 4))
    y, _ = ae.channel_layer(x, [1.0])
    assert np.array_equal(y, x)
    y, _ = ae.channel_layer([[2.0, 3.0]], [0.5])
    assert y[0, 0] == 1.0


def test_channel_layer_is_truncated_convolution():
    rng = np.random.default_rng(1)
    x, taps = rng.normal(size=(3, 6)), rng.normal(size=3)
    y, _ = ae.channel_layer(x, taps)
    for row, out in zip(x, y):
        assert np.allclose(out, np.convolve(row, taps)[:6])


def test_channel_layer_gradient_finite_difference():
    rng = np.random.default_rng(2)
    x, taps, w = rng.normal(size=(2, 5)), rng.normal(size=3), rng.normal(size=(2, 5))
    _, vjp = ae.channel_layer(x, taps)
    analytic = vjp(w)
    eps = 1e-6
    num = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += eps
        down[idx] -= eps
        num[idx] = (np.sum(w * ae.channel_layer(up, taps)[0]) -
                    np.sum(w * ae.channel_layer(down, taps)[0])) / (2 * eps)
    assert np.max(np.abs(analytic - num) / np.maximum(np.abs(num), 1e-12)) <= 1e-4


def test_channel_layer_validation():
    with pytest.raises(ValueError):
        ae.channel_layer([[1.0]], [])
    with pytest.raises(ValueError):
        ae.channel_layer([[1.0]], [1.0], noise_std=-1.0)


@pytest.mark.parametrize("rule", ae.NORMALIZATIONS)
def test_normalize_properties(rule):
    x = np.random.default_rng(3).normal(size=(8, 3))
    y, _ = ae.normalize(x, rule)
    assert np.allclose(ae.normalize(y, rule)[0], y, atol=1e-12)
    assert np.allclose(ae.normalize(10 * x, rule)[0], y, atol=1e-12)
    if rule == "avg_power":
        assert np.mean(y ** 2) == pytest.approx(1.0, abs=1e-12)
    else:
        assert np.allclose(np.sum(y ** 2, axis=1), 3.0)


@pytest.mark.parametrize("rule", ae.NORMALIZATIONS)
def test_normalize_gradient(rule):
    rng = np.random.default_rng(4)
    x, w = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    _, vjp = ae.normalize(x, rule)
    eps = 1e-6
    num = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += eps
        down[idx] -= eps
        num[idx] = (np.sum(w * ae.normalize(up, rule)[0]) - np.sum(w * ae.normalize(down, rule)[0])) / (2 * eps)
    assert np.allclose(vjp(w), num, atol=1e-8)


def test_normalize_zero_row():
    with pytest.raises(ValueError):
        ae.normalize([[0.0, 0.0], [1.0, 1.0]], "per_symbol")


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_normalize_scale_invariance(c):
    x = np.random.default_rng(5).normal(size=(6, 2))
    for rule in ae.NORMALIZATIONS:
        assert np.allclose(ae.normalize(c * x, rule)[0], ae.normalize(x, rule)[0], atol=1e-12)


@pytest.mark.parametrize("channel", [None, [0.9, 0.3, -0.1]])
def test_end_to_end_gradient_check(channel):
    system = ae.build_system(ae.AeConfig(m=4, n=3, encoder_hidden=(6,), decoder_hidden=(6,),
                                         channel=channel, seed=1))
    assert ae.ae_grad_check(system, np.array([0, 1, 2, 3, 1])) <= 1e-4


def test_decoder_rows_sum_to_one():
    system = ae.build_system(ae.AeConfig(m=8, n=2))
    out = ae.nn.predict(system.decoder, np.random.default_rng(6).normal(size=(10, 2)))
    assert np.allclose(out.sum(axis=1), 1.0)


def test_noiseless_training_reaches_zero_ser():
    system = ae.ae_train(ae.AeConfig(m=4, n=4, train_ebn0_db=30.0, epochs=10, seed=2))
    assert ae.evaluate_ser(system, [np.inf], 10_000, seed=0).ser[0] == 0.0


def test_binary_autoencoder_is_antipodal():
    system = ae.ae_train(ae.AeConfig(m=2, n=1, train_ebn0_db=4.0, epochs=10, seed=3))
    c = system.constellation().ravel()
    assert c[0] * c[1] < 0
    assert abs(c[0] + c[1]) <= 0.1


def test_training_is_deterministic():
    cfg = ae.AeConfig(m=4, n=2, epochs=2, seed=4)
    a = ae.evaluate_ser(ae.ae_train(cfg), [6.0], 10_000, seed=1).ser
    b = ae.evaluate_ser(ae.ae_train(cfg), [6.0], 10_000, seed=1).ser
    assert np.array_equal(a, b)


def test_untrained_decoder_near_chance():
    m = 8
    system = ae.build_system(ae.AeConfig(m=m, n=2, seed=5))
    # a constant decoder is the chance-level reference
    system.decoder.layers[-1].weights[:] = 0.0
    ser = ae.evaluate_ser(system, [5.0], 20_000, seed=2).ser[0]
    expected = (m - 1) / m
    assert abs(ser - expected) <= 4 * math.sqrt(expected * (1 - expected) / 20_000)


def test_ser_curve_non_increasing():
    system = ae.ae_train(ae.AeConfig(m=4, n=1, epochs=10, seed=6))
    curve = ae.evaluate_ser(system, np.arange(0, 12, 2.0), 20_000, seed=3)
    slack = 2 * np.sqrt(curve.ser * (1 - curve.ser) / curve.trials)
    assert np.all(np.diff(curve.ser) <= slack[:-1] + slack[1:])


def test_pam_analytic_values():
    assert ae.pam_ser_analytic(2, 0.0) == pytest.approx(0.5 * math.erfc(1.0), rel=1e-12)
    assert ae.pam_ser_analytic(2, 0.0) == pytest.approx(0.0786, abs=1e-4)
    assert ae.pam_ser_analytic(4, 200.0) == 0.0
    db = np.linspace(-5, 20, 50)
    for m in (2, 4, 8, 16):
        assert np.all(np.diff(ae.pam_ser_analytic(m, db)) < 0)
    assert np.all(ae.pam_ser_analytic(4, db) < ae.pam_ser_analytic(16, db))
    with pytest.raises(ValueError):
        ae.pam_ser_analytic(6, 1.0)


def test_pam_simulation_matches_analytic():
    n = 200_000
    p = float(ae.pam_ser_analytic(4, 6.0))
    sim = ae.pam_simulate(4, 6.0, n, seed=7)
    assert abs(sim - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_required_ebn0_interpolation():
    curve = ae.SerCurve([0.0, 1.0], [1e-1, 1e-3], 1)
    assert ae.required_ebn0(curve, 1e-2) == pytest.approx(0.5)
    assert ae.pam_ser_analytic(4, ae.pam_required_ebn0(4, 1e-2)) == pytest.approx(1e-2, rel=1e-9)


def test_fir_taps_from_response():
    g = md.FrequencyGrid(2e6, 86e6, 64)
    h = md.topdown_channel(md.MultipathParams([1.0, 0.4], [50.0, 90.0]), g)
    taps = ae.fir_taps(h, 4)
    assert taps.shape == (4,) and np.sum(taps ** 2) == pytest.approx(1.0)


def test_csv_exports(tmp_path):
    system = ae.build_system(ae.AeConfig(m=4, n=2))
    curve = ae.SerCurve([0.0, 3.0], [0.5, 0.2], 100)
    ae.write_ser_csv(tmp_path / "ser.csv", curve, 4)
    ae.write_constellation_csv(tmp_path / "c.csv", system)
    header, rows = ae.textio.read_csv(tmp_path / "ser.csv")
    assert header == ["ebn0_db", "ser_autoencoder", "ser_pam_analytic", "trials"] and len(rows) == 2
    header, rows = ae.textio.read_csv(tmp_path / "c.csv")
    assert len(rows) == 4 and len(header) == 3
