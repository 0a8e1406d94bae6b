import numpy as np
import pytest

from rwls.filterbank import cdf53, cdf97, lazy_rational, low_length, mband_to_rational
from rwls.fbm import FbmModel, synth_fbm
from rwls.learn import learn_rwls_signal
from _images import fbm_surface
from rwls.transform2d import (
    PyramidCoeffs,
    PyramidLayout,
    PyramidSpec,
    analyze_axis,
    approximation_tag,
    decompose,
    detail_mask,
    flatten,
    inverse_axis,
    parse_tag,
    plan_layout,
    reconstruct,
    reconstruct_adjoint,
    tiling_violations,
    unflatten,
)

L_TAGS_3 = [
    "L3L3", "H3H3", "H3L3", "L3H3", "H3H2", "L3H2", "H2H3",
    "H2L3", "H2H2", "H2H1", "L2H1", "H1H2", "H1L2", "H1H1",
]
R_TAGS_3 = ["L3L3", "H3H3", "H3L3", "L3H3", "H2H2", "H2L2", "L2H2", "H1H1", "H1L1", "L1H1"]


@pytest.fixture(scope="module")
def rwls_bank():
    m = FbmModel(0.7)
    return learn_rwls_signal([synth_fbm(m, 3072, seed=0)], model=m)


def spec(bank, levels=3, style="L", pad="periodic"):
    return PyramidSpec(levels, style, bank, bank, pad)


def contains(outer, inner):
    r0, c0, h, w = outer
    a0, b0, ah, aw = inner
    return r0 <= a0 and a0 + ah <= r0 + h and c0 <= b0 and b0 + aw <= c0 + w


def test_single_axis_lengths_and_padding():
    x = np.random.default_rng(0).normal(size=(96, 96))
    low, high, rec = analyze_axis(x, lazy_rational(), "col")
    assert low.shape == (64, 96) and high.shape == (32, 96)
    np.testing.assert_allclose(inverse_axis(low, high, lazy_rational(), "col", rec), x, atol=1e-12)
    y = np.random.default_rng(1).normal(size=(100, 7))
    low, high, rec = analyze_axis(y, lazy_rational(), "col")
    assert low.shape[0] + high.shape[0] == 102
    np.testing.assert_allclose(inverse_axis(low, high, lazy_rational(), "col", rec), y, atol=1e-12)


def test_single_level_has_four_bands(rwls_bank):
    lay = plan_layout((96, 96), spec(rwls_bank, levels=1, style="R"))
    assert sorted(lay.tags()) == sorted(["L1L1", "L1H1", "H1L1", "H1H1"])
    assert dict((b.tag, b.rect[2:]) for b in lay.bands)["L1L1"] == (64, 64)


def test_dyadic_r_pyramid_band_count():
    lay = plan_layout((512, 512), spec(cdf53(), levels=3, style="R"))
    assert len(lay.bands) == 10
    assert lay.tags() == R_TAGS_3
    assert dict((b.tag, b.rect[2:]) for b in lay.bands)["L3L3"] == (64, 64)


def test_l_pyramid_tags(rwls_bank):
    lay = plan_layout((108, 108), spec(rwls_bank))
    assert lay.tags() == L_TAGS_3
    assert len(plan_layout((96, 96), spec(rwls_bank, levels=3, style="R")).bands) == 10


@pytest.mark.parametrize("style", ["R", "L"])
@pytest.mark.parametrize("shape", [(27, 27), (96, 96), (100, 90)])
def test_bands_tile_packed_matrix(rwls_bank, style, shape):
    lay = plan_layout(shape, spec(rwls_bank, style=style))
    assert tiling_violations(lay) == 0
    assert sum(b.size for b in lay.bands) == lay.size


@pytest.mark.parametrize("style", ["R", "L"])
@pytest.mark.parametrize("bank", [cdf97(), lazy_rational()], ids=["dyadic", "rational"])
def test_tags_describe_applied_operations(style, bank):
    # each tag must equal the count and low/high side of the analyses whose block covers it
    s = spec(bank, style=style)
    lay = plan_layout((108, 108), s)
    for band in lay.bands:
        seen = {"col": [], "row": []}
        for _, kind, rect in lay.ops:
            if not contains(rect, band.rect):
                continue
            r0, c0, h, w = rect
            if kind in ("both", "col"):
                seen["col"].append("L" if band.rect[0] < r0 + low_length(bank, h) else "H")
            if kind in ("both", "row"):
                seen["row"].append("L" if band.rect[1] < c0 + low_length(bank, w) else "H")
        cb, cn, rb, rn = parse_tag(band.tag)
        assert (len(seen["col"]), seen["col"][-1]) == (cn, cb), band.tag
        assert (len(seen["row"]), seen["row"][-1]) == (rn, rb), band.tag
        # every analysis before the last one on an axis kept the lowpass side
        assert set(seen["col"][:-1]) <= {"L"} and set(seen["row"][:-1]) <= {"L"}


def test_pad_once_to_full_multiple(rwls_bank):
    lay = plan_layout((100, 100), spec(rwls_bank))
    assert lay.padded == (108, 108)
    assert plan_layout((100, 100), spec(rwls_bank, levels=1)).padded == (102, 102)
    assert plan_layout((100, 100), spec(cdf53())).padded == (104, 104)


@pytest.mark.parametrize("style", ["R", "L"])
@pytest.mark.parametrize("pad", ["periodic", "symmetric"])
@pytest.mark.parametrize("shape", [(27, 27), (96, 96), (100, 100)])
def test_round_trip(rwls_bank, style, pad, shape):
    x = np.random.default_rng(3).uniform(0, 255, size=shape)
    for bank in (rwls_bank, cdf53(), cdf97()):
        s = spec(bank, style=style, pad=pad)
        y = reconstruct(decompose(x, s), s)
        assert np.linalg.norm(y - x) < 1e-9 * np.linalg.norm(x)


def test_mixed_banks_round_trip(rwls_bank):
    s = PyramidSpec(2, "L", rwls_bank, cdf97())
    x = np.random.default_rng(4).normal(size=(40, 50))
    np.testing.assert_allclose(reconstruct(decompose(x, s), s), x, atol=1e-9)


def test_zero_coefficients_give_zero_image(rwls_bank):
    s = spec(rwls_bank)
    c = decompose(np.ones((96, 96)), s)
    c.packed[:] = 0.0
    np.testing.assert_array_equal(reconstruct(c, s), 0.0)


def test_dropping_details_keeps_most_energy(rwls_bank):
    x = fbm_surface(0.7, (96, 96), seed=1)
    s = spec(rwls_bank)
    c = decompose(x, s)
    c.packed[detail_mask(c.layout)] = 0.0
    y = reconstruct(c, s)
    assert np.linalg.norm(y - x) < 0.5 * np.linalg.norm(x - x.mean())


def test_constant_image_has_only_approximation(rwls_bank):
    # exact for the baselines; the learned predict only sums to about one
    for bank, tol in ((cdf53(), 1e-9), (cdf97(), 1e-9), (rwls_bank, 1e-3)):
        s = spec(bank, levels=2, style="R")
        c = decompose(np.full((54, 54), 7.0), s)
        for tag, _, values in c.bands:
            if tag != approximation_tag(c.layout):
                np.testing.assert_allclose(values, 0.0, atol=tol * 7.0)


def test_flatten_round_trip(rwls_bank):
    s = spec(rwls_bank)
    c = decompose(np.random.default_rng(5).normal(size=(54, 60)), s)
    v = flatten(c)
    assert v.size == c.layout.size
    np.testing.assert_array_equal(unflatten(v, c.layout).packed, c.packed)
    with pytest.raises(ValueError):
        unflatten(v[:-1], c.layout)


def test_layout_json_round_trip(rwls_bank):
    lay = plan_layout((100, 90), spec(rwls_bank))
    assert PyramidLayout.from_json(lay.to_json()) == lay


def test_too_small_raises(rwls_bank):
    with pytest.raises(ValueError, match="too small"):
        plan_layout((8, 8), spec(cdf53(), levels=3))
    with pytest.raises(ValueError, match="too small"):
        plan_layout((2, 2), spec(rwls_bank, levels=1))


def test_bad_spec_raises(rwls_bank):
    with pytest.raises(ValueError):
        PyramidSpec(0, "L", rwls_bank, rwls_bank)
    with pytest.raises(ValueError):
        PyramidSpec(2, "Q", rwls_bank, rwls_bank)
    with pytest.raises(ValueError):
        PyramidSpec(2, "L", rwls_bank, rwls_bank, "zero")


def test_mismatched_layout_rejected(rwls_bank):
    c = decompose(np.zeros((54, 54)), spec(rwls_bank, levels=2, style="L"))
    with pytest.raises(ValueError):
        reconstruct(c, spec(rwls_bank, levels=2, style="R"))


@pytest.mark.parametrize("style", ["R", "L"])
@pytest.mark.parametrize("shape", [(96, 96), (100, 90)])
def test_synthesis_adjoint(rwls_bank, style, shape):
    rng = np.random.default_rng(6)
    for bank in (rwls_bank, cdf97()):
        s = spec(bank, style=style)
        lay = plan_layout(shape, s)
        c = PyramidCoeffs(lay, rng.normal(size=lay.padded))
        x = rng.normal(size=shape)
        lhs = np.sum(reconstruct(c, s) * x)
        rhs = np.sum(c.packed * reconstruct_adjoint(x, s, lay).packed)
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_adjoint_requires_periodic(rwls_bank):
    with pytest.raises(ValueError):
        reconstruct_adjoint(np.zeros((27, 27)), spec(rwls_bank, pad="symmetric"))


def test_lazy_rational_name_kept():
    assert mband_to_rational(lazy_rational().to_mband()).g_l == lazy_rational().g_l
