import math

import numpy as np
import pytest

from cvqkd import simulator
from cvqkd.errors import ConfigError
from cvqkd.simulator import (BASIS_P, BASIS_X, CovarianceModel, QuadratureRecord,
                             calibrate_shot_noise, default_model, draw_samples,
                             draw_vacuum, effective_model, loss_db_to_eta,
                             model_from_dict, model_to_dict, read_dump, sift,
                             two_mode_squeezed_model, write_dump)


def test_two_mode_squeezed_variances():
    # 10 dB squeezing: quiet variance 0.1, loud variance 10, so
    # v = (10 + 0.1) / 2 and c = (10 - 0.1) / 2 exactly.
    m = two_mode_squeezed_model(10.0)
    assert m.v_a == pytest.approx(5.05)
    assert m.v_b == pytest.approx(5.05)
    assert m.c == pytest.approx(4.95)
    # same numbers through cosh/sinh of the squeezing parameter
    r = 0.5 * math.acosh(m.v_a)
    assert m.c == pytest.approx(math.sinh(2 * r))


def test_two_mode_squeezed_difference_variance_is_quiet_quadrature():
    # var(x_a - x_b) = 2(v - c) = 2 * 10^(-dB/10) for the ideal source
    for db in (3.0, 6.0, 10.0, 13.0):
        m = two_mode_squeezed_model(db)
        eff = effective_model(m)
        assert eff.difference_var == pytest.approx(2 * 10 ** (-db / 10))


def test_effective_model_arithmetic():
    m = CovarianceModel(v_a=5.05, v_b=5.05, c=4.95, eta=0.9, excess=0.02,
                        det_eff_a=0.98, det_eff_b=0.97)
    eff = effective_model(m)
    tb = 0.9 * 0.97
    assert eff.v_a == pytest.approx(0.98 * 5.05 + 0.02)
    assert eff.v_b == pytest.approx(tb * (5.05 + 0.02) + (1 - tb))
    assert eff.c == pytest.approx(math.sqrt(tb * 0.98) * 4.95)


def test_effective_model_identity_when_lossless():
    m = CovarianceModel(v_a=3.0, v_b=2.5, c=2.0)
    eff = effective_model(m)
    assert (eff.v_a, eff.v_b, eff.c) == (3.0, 2.5, 2.0)


def test_model_validation():
    with pytest.raises(ConfigError):
        CovarianceModel(v_a=0.5, v_b=2.0, c=0.0)
    with pytest.raises(ConfigError):
        CovarianceModel(v_a=2.0, v_b=2.0, c=2.5)
    with pytest.raises(ConfigError):
        CovarianceModel(v_a=2.0, v_b=2.0, c=1.0, eta=1.5)
    with pytest.raises(ConfigError):
        CovarianceModel(v_a=2.0, v_b=2.0, c=1.0, excess=-0.1)
    with pytest.raises(ConfigError):
        two_mode_squeezed_model(0.0)


def test_loss_db_to_eta():
    assert loss_db_to_eta(0.0) == pytest.approx(1.0)
    assert loss_db_to_eta(3.0) == pytest.approx(0.501187, abs=1e-6)
    assert loss_db_to_eta(10.0) == pytest.approx(0.1)


def test_default_model_point():
    m = default_model()
    assert m.det_eff_a == 0.98 and m.det_eff_b == 0.98
    assert m.excess == 0.01 and m.eta == 1.0
    eff = effective_model(m)
    # conditional variance of Alice given Bob stays well below shot noise,
    # which is what makes key extraction possible at all
    assert eff.conditional_var_a_given_b < 0.5


def test_draw_samples_covariance_matches_model():
    # Monte-Carlo oracle: empirical second moments of the sifted pairs
    # must reproduce the effective covariance, X with +c and P with -c.
    model = default_model()
    slots = 200_000
    rec_a, rec_b = draw_samples(model, slots, b"cov-a", b"cov-b")
    eff = effective_model(model)
    kept = sift(rec_a, rec_b)
    tol = 0.05
    for basis, sign in ((BASIS_X, 1.0), (BASIS_P, -1.0)):
        sel = kept.bases == basis
        a = kept.values_a[sel]
        b = kept.values_b[sel]
        assert a.size > slots // 5
        assert np.mean(a * a) == pytest.approx(eff.v_a, rel=tol)
        assert np.mean(b * b) == pytest.approx(eff.v_b, rel=tol)
        assert np.mean(a * b) == pytest.approx(sign * eff.c, rel=tol)
    # mismatched-basis slots carry no correlation
    mism = rec_a.bases != rec_b.bases
    a = rec_a.values[mism]
    b = rec_b.values[mism]
    assert abs(np.mean(a * b)) < 3 * eff.v_a / math.sqrt(a.size)


def test_draw_samples_marginals_are_centred():
    rec_a, rec_b = draw_samples(default_model(), 100_000, 1, 2)
    n = rec_a.count
    assert abs(np.mean(rec_a.values)) < 4 * math.sqrt(5.0 / n)
    assert abs(np.mean(rec_b.values)) < 4 * math.sqrt(5.0 / n)


def test_basis_choices_are_balanced_and_independent():
    rec_a, rec_b = draw_samples(default_model(), 50_000, b"x", b"y")
    n = rec_a.count
    for rec in (rec_a, rec_b):
        assert set(np.unique(rec.bases)) <= {BASIS_X, BASIS_P}
        assert abs(np.mean(rec.bases) - 0.5) < 4 * 0.5 / math.sqrt(n)
    agree = np.mean(rec_a.bases == rec_b.bases)
    assert abs(agree - 0.5) < 4 * 0.5 / math.sqrt(n)


def test_draw_samples_deterministic_and_seed_sensitive():
    a1, b1 = draw_samples(default_model(), 500, 7, 8)
    a2, b2 = draw_samples(default_model(), 500, 7, 8)
    assert np.array_equal(a1.values, a2.values)
    assert np.array_equal(b1.bases, b2.bases)
    a3, _ = draw_samples(default_model(), 500, 9, 8)
    assert not np.array_equal(a1.values, a3.values)


def test_sift_matches_reference_loop():
    rec_a, rec_b = draw_samples(default_model(), 400, 3, 4)
    kept = sift(rec_a, rec_b)
    expect = [i for i in range(400) if rec_a.bases[i] == rec_b.bases[i]]
    assert kept.indices.tolist() == expect
    assert kept.total_slots == 400
    assert kept.kept == len(expect)
    for j, i in enumerate(expect):
        assert kept.values_a[j] == rec_a.values[i]
        assert kept.values_b[j] == rec_b.values[i]
        assert kept.bases[j] == rec_a.bases[i]
    with pytest.raises(ValueError):
        sift(rec_a, QuadratureRecord(rec_b.bases[:10], rec_b.values[:10]))


def test_calibration_recovers_scale():
    vac = draw_vacuum(100_000, b"cal")
    scaled = 1.37 * vac
    factor = calibrate_shot_noise(scaled)
    assert factor == pytest.approx(1.37, rel=0.02)
    assert np.var(scaled / factor) == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(ConfigError):
        calibrate_shot_noise([1.0])
    with pytest.raises(ConfigError):
        calibrate_shot_noise([2.0, 2.0, 2.0])


def test_dump_round_trip(tmp_path):
    rec_a, _ = draw_samples(default_model(), 64, b"d1", b"d2")
    path = tmp_path / "alice.rec"
    write_dump(path, rec_a, meta={"role": "alice", "model": model_to_dict(default_model())})
    back, meta = read_dump(path)
    assert np.array_equal(back.bases, rec_a.bases)
    assert np.array_equal(back.values, rec_a.values)
    assert meta["count"] == 64
    assert model_from_dict(meta["model"]) == default_model()
    # truncated payload is rejected
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(ConfigError):
        read_dump(path)


def test_shared_source_single_draw():
    src = simulator.SimulatorSource(default_model(), b"s1", b"s2")
    rec_a = src.record_for("alice", 256)
    rec_b = src.record_for("bob", 256)
    direct_a, direct_b = draw_samples(default_model(), 256, b"s1", b"s2")
    assert np.array_equal(rec_a.values, direct_a.values)
    assert np.array_equal(rec_b.values, direct_b.values)
    with pytest.raises(ConfigError):
        src.record_for("bob", 128)


def test_precomputed_source_checks_counts():
    rec_a, rec_b = draw_samples(default_model(), 32, 1, 2)
    src = simulator.PrecomputedSource(rec_a, rec_b)
    assert np.array_equal(src.record_for("alice", 32).values, rec_a.values)
    with pytest.raises(ConfigError):
        src.record_for("alice", 16)
