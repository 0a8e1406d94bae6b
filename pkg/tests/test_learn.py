import numpy as np
import pytest

from rwls.fbm import FbmModel, sigma_h, synth_fbm
from rwls.filterbank import (
    analyze_1d,
    analyze_streams,
    lazy_mband,
    mband_to_rational,
    split_streams,
    synthesize_1d,
    synthesize_streams,
)
from rwls.learn import (
    PredictFilter,
    TrainingSource,
    UpdateFilter,
    apply_predict,
    apply_update,
    learn_predict,
    learn_rwls_1d,
    learn_rwls_2d,
    learn_rwls_signal,
    learn_update,
    min_norm_solve,
    mse_predict,
    update_design,
    update_objective,
    vectorize,
)
from rwls.poly import freq_response, upsample

from _images import fbm_surface


def expected_mse_oracle(H, t, n_train=1024):
    """Mean over n of E[(x[3n+2] - t0 x[3n+1] - t1 x[3n+3])^2] from the fBm covariance."""
    n = np.arange(n_train, dtype=float)
    a, b, c = 3 * n + 1, 3 * n + 2, 3 * n + 3
    r = lambda i, j: 0.5 * (i ** (2 * H) + j ** (2 * H) - np.abs(i - j) ** (2 * H))
    t0, t1 = t
    e = r(b, b) + t0**2 * r(a, a) + t1**2 * r(c, c) - 2 * t0 * r(a, b) - 2 * t1 * r(c, b) + 2 * t0 * t1 * r(a, c)
    return float(np.mean(e))


# -- predict ---------------------------------------------------------------------

def test_ramp_and_constant_predict_midpoint():
    for sig in (np.arange(300.0), np.full(300, 4.0)):
        t = learn_predict(TrainingSource.empirical(sig))
        assert t.t0 == pytest.approx(0.5, abs=1e-9)
        assert t.t1 == pytest.approx(0.5, abs=1e-9)


def test_brownian_predict_is_midpoint():
    t = learn_predict(TrainingSource.fbm(FbmModel(0.5)))
    assert (t.t0, t.t1) == (pytest.approx(0.5, abs=1e-9), pytest.approx(0.5, abs=1e-9))


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_mse_matches_direct_expectation(H):
    src = TrainingSource.fbm(FbmModel(H, 1.0))
    for t in [(0.5, 0.5), (0.2, -0.3), (1.1, 0.4)]:
        assert mse_predict(src, t) == pytest.approx(expected_mse_oracle(H, t), rel=1e-10)


def test_predict_filter_layout():
    assert PredictFilter(0.4, 0.6).poly.coeff(1) == 0.4
    assert PredictFilter(0.4, 0.6).poly.coeff(2) == 0.6
    assert UpdateFilter(0.1, 0.2).poly.coeff(0) == 0.1
    assert UpdateFilter(0.1, 0.2).poly.coeff(-2) == 0.2


def test_predicted_bank_kills_midpoints():
    b = apply_predict(lazy_mband(3), PredictFilter(0.5, 0.5))
    v = analyze_streams(b, np.arange(30.0))
    np.testing.assert_allclose(v[2][:-1], 0.0, atol=1e-12)


def test_zero_filters_leave_bank():
    b = lazy_mband(3)
    assert apply_predict(b, PredictFilter(0.0, 0.0)) is b
    assert apply_update(b, UpdateFilter(0.0, 0.0)) is b


def test_training_source_validation():
    with pytest.raises(ValueError):
        TrainingSource("fbm")
    with pytest.raises(ValueError):
        TrainingSource.empirical(np.zeros(4))
    with pytest.raises(ValueError):
        TrainingSource("other", model=FbmModel(0.5))


def test_min_norm_solve_singular():
    G = np.array([[1.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(min_norm_solve(G, np.array([2.0, 2.0])), [1.0, 1.0])
    np.testing.assert_array_equal(min_norm_solve(np.zeros((2, 2)), np.ones(2)), [0.0, 0.0])


@pytest.mark.parametrize("scale", [1e-6, 1e-2, 1.0, 37.0, 1e5])
def test_fbm_predict_sigma2_invariant(scale):
    ref = learn_predict(TrainingSource.fbm(FbmModel(0.7)))
    t = learn_predict(TrainingSource.fbm(FbmModel(0.7, scale)))
    assert abs(t.t0 - ref.t0) <= 1e-12 and abs(t.t1 - ref.t1) <= 1e-12


@pytest.mark.parametrize("scale", [1e-3, 2.0, 1e4])
def test_empirical_predict_scale_invariant(scale):
    x = synth_fbm(FbmModel(0.7), 3000, seed=4)
    ref = learn_predict(TrainingSource.empirical(x))
    t = learn_predict(TrainingSource.empirical(scale * x))
    assert abs(t.t0 - ref.t0) <= 1e-12 and abs(t.t1 - ref.t1) <= 1e-12


def test_empirical_approaches_model_on_long_path():
    x = synth_fbm(FbmModel(0.7), 8192, seed=2)
    emp = learn_predict(TrainingSource.empirical(x)).as_array()
    mod = learn_predict(TrainingSource.fbm(FbmModel(0.7))).as_array()
    assert np.abs(emp - mod).max() < 0.1


# -- update -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def predicted():
    return apply_predict(lazy_mband(3), learn_predict(TrainingSource.fbm(FbmModel(0.7))))


@pytest.fixture(scope="module")
def path():
    x = synth_fbm(FbmModel(0.7), 3000, seed=21)
    return x[: x.size - x.size % 3]


def test_update_design_matches_synthesis(predicted, path):
    # independent route: update the bank, drop the detail branch, synthesize
    rng = np.random.default_rng(0)
    A, r = update_design(predicted, path)
    for _ in range(3):
        s = UpdateFilter(*rng.normal(scale=0.3, size=2))
        b = apply_update(predicted, s)
        v = analyze_streams(b, path)
        xu = synthesize_streams(b, [v[0], v[1], np.zeros_like(v[2])])
        err = split_streams(path - xu, 3)
        e = np.split(r - A @ s.as_array(), 3)
        # the design keeps a contiguous interior window of each stream
        k = e[0].size
        assert err[0].size - k <= 6
        hits = [o for o in range(err[0].size - k + 1)
                if all(np.allclose(err[j][o : o + k], e[j], atol=1e-9) for j in range(3))]
        assert hits


def test_update_beats_neighbours(predicted, path):
    s = learn_update(predicted, path).as_array()
    best = update_objective(predicted, path, s)
    for d in [(1e-3, 0), (-1e-3, 0), (0, 1e-3), (0, -1e-3)]:
        assert best <= update_objective(predicted, path, s + np.array(d))


def test_update_errors():
    b = lazy_mband(3)
    with pytest.raises(ValueError):
        update_design(b, np.ones(10))
    with pytest.raises(ValueError):
        update_design(b, np.zeros(30))


def test_update_on_constant_detail_free_signal(predicted):
    s = learn_update(apply_predict(lazy_mband(3), PredictFilter(0.5, 0.5)), np.full(300, 2.0))
    assert (s.s0, s.s1) == (0.0, 0.0)


# -- whole-bank learning ----------------------------------------------------------------

@pytest.fixture(scope="module")
def fbm_images():
    return [fbm_surface(0.7, (96, 96), seed=s) for s in range(3)]


def test_learned_bank_metadata(fbm_images):
    b = learn_rwls_1d(fbm_images, "col")
    learning = b.metadata["learning"]
    assert 0.6 <= learning["H"] <= 0.8
    assert learning["axis"] == "col"
    assert len(learning["image_manifest_hash"]) == 64
    assert set(learning) >= {"t", "s", "sigma2", "n_train", "mode"}


def test_learning_is_deterministic(fbm_images):
    assert learn_rwls_1d(fbm_images, "row") == learn_rwls_1d(fbm_images, "row")


def test_transpose_swaps_banks(fbm_images):
    row, col = learn_rwls_2d(fbm_images)
    row_t, col_t = learn_rwls_2d([im.T for im in fbm_images])
    assert row_t == col and col_t == row


def test_learn_rejects_empty():
    with pytest.raises(ValueError):
        learn_rwls_1d([], "row")
    with pytest.raises(ValueError):
        vectorize([np.zeros((3, 3))], "diag")


def test_vectorize_orders():
    im = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(vectorize([im], "row")[0], [0, 1, 2, 3, 4, 5])
    np.testing.assert_array_equal(vectorize([im], "col")[0], [0, 3, 1, 4, 2, 5])


@pytest.mark.parametrize("H", [0.3, 0.5, 0.7, 0.9])
def test_learned_bank_round_trip(H):
    m = FbmModel(H)
    b = learn_rwls_signal([synth_fbm(m, 3072, seed=1)], model=m)
    x = np.random.default_rng(2).normal(size=96)
    a, d = analyze_1d(b, x)
    assert np.linalg.norm(synthesize_1d(b, a, d) - x) < 1e-9 * np.linalg.norm(x)


def test_learned_frequency_character():
    m = FbmModel(0.7)
    b = learn_rwls_signal([synth_fbm(m, 3072, seed=1)], model=m)
    _, gl = freq_response(b.g_l, 64)
    _, gh = freq_response(b.g_h, 64)
    assert abs(gl[0]) > abs(gl[-1])
    assert abs(gh[-1]) > abs(gh[0])


def test_empirical_mode_records_length():
    x = synth_fbm(FbmModel(0.7), 3000, seed=3)
    b = learn_rwls_signal([x], mode="empirical", model=FbmModel(0.7))
    assert b.metadata["learning"]["n_train"] == 3000
    assert b.metadata["learning"]["mode"] == "empirical"


def test_sigma_h_used_by_default_model():
    assert FbmModel(0.3).sigma2 == sigma_h(0.3)


def test_predict_filter_on_lazy_matches_time_domain():
    t = PredictFilter(0.3, 0.6)
    b = apply_predict(lazy_mband(3), t)
    g2 = b.analysis[2]
    assert (g2.coeff(1), g2.coeff(2), g2.coeff(3)) == (-0.3, 1.0, -0.6)
    x = np.random.default_rng(12).normal(size=60)
    d = analyze_streams(b, x)[2]
    n = np.arange(19)
    np.testing.assert_allclose(d[:19], x[3 * n + 2] - 0.3 * x[3 * n + 1] - 0.6 * x[3 * n + 3], atol=1e-12)


def test_apply_update_two_channel_identity(predicted):
    s = UpdateFilter(0.15, -0.35)
    before = mband_to_rational(predicted)
    after = mband_to_rational(apply_update(predicted, s))
    expect = before.g_l + upsample(before.g_h, 2) * upsample(s.poly, 3)
    assert (after.g_l - expect).max_abs() < 1e-12
    assert (after.g_h - before.g_h).max_abs() < 1e-12
