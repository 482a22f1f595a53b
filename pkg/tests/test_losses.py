import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from articugeo.errors import FormatError
from articugeo.losses import (LossWeights, TermValue, aggregate, loss_mvrc, loss_sdc, loss_smoothness,
                              loss_spatial, loss_temporal, masked_mean, min_over_sources, pe,
                              read_report, ssim)

seeds = st.integers(0, 2**32 - 1)


def noise_image(seed, shape=(24, 32, 1)):
    return np.random.default_rng(seed).uniform(0, 1, size=shape)


@settings(max_examples=30)
@given(seeds, seeds)
def test_pe_nonnegative_and_zero_on_identical(a, b):
    x, y = noise_image(a), noise_image(b)
    assert np.all(pe(x, y) >= -1e-12)
    assert np.max(np.abs(pe(x, x))) < 1e-12


@settings(max_examples=30)
@given(seeds, seeds)
def test_ssim_is_symmetric(a, b):
    x, y = noise_image(a, (16, 20, 3)), noise_image(b, (16, 20, 3))
    assert np.allclose(ssim(x, y), ssim(y, x), atol=1e-12)


def test_ssim_channel_and_size_checks():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8, 1)), np.zeros((8, 8, 3)))
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((9, 8)))


@settings(max_examples=30)
@given(seeds)
def test_temporal_min_never_exceeds_any_single_source(seed):
    rng = np.random.default_rng(seed)
    target = noise_image(seed)
    sources = [(noise_image(seed + 1 + k), np.ones((24, 32), bool)) for k in range(3)]
    pooled = float(loss_temporal(target, sources))
    singles = [float(loss_temporal(target, [s])) for s in sources]
    assert pooled <= min(singles) + 1e-12
    # the pooled map is pixelwise below every candidate
    maps = [pe(target, img, m) for img, m in sources]
    best, _ = min_over_sources([(m, np.ones((24, 32), bool)) for m in maps])
    assert np.all(best <= np.minimum.reduce(maps) + 1e-15)
    # permuting sources changes nothing
    perm = rng.permutation(3)
    assert float(loss_temporal(target, [sources[i] for i in perm])) == pooled


def test_min_over_sources_ignores_invalid_candidates():
    a = np.array([[0.1, 0.5]])
    b = np.array([[0.0, 0.2]])
    best, valid = min_over_sources([(a, np.array([[True, True]])), (b, np.array([[False, True]]))])
    assert best.tolist() == [[0.1, 0.2]]
    assert valid.all()
    best, valid = min_over_sources([(a, np.array([[False, False]]))])
    assert not valid.any() and np.all(best == 0.0)


def test_empty_mask_gives_absent_term():
    x = noise_image(0)
    t = loss_spatial(x, x, np.zeros((24, 32), bool))
    assert not t.present and float(t) == 0.0
    with pytest.raises(ValueError):
        loss_temporal(x, [])
    with pytest.raises(ValueError):
        loss_mvrc(x, np.ones((24, 32), bool), [])


def test_term_values_pool_by_count():
    t = masked_mean(np.array([1.0, 2.0, 3.0]), [True, True, False]) + TermValue(6.0, 1)
    assert t.count == 3 and float(t) == 3.0


def test_sdc_is_mean_absolute_depth_difference():
    d = np.full((4, 4), 5.0)
    r = d + 0.25
    r[0, 0] = 0.0  # invalid reprojection is excluded
    t = loss_sdc(d, r, np.ones((4, 4), bool))
    assert t.count == 15 and np.isclose(float(t), 0.25)


def test_smoothness_zero_for_constant_depth():
    img = noise_image(3)
    assert float(loss_smoothness(np.full((24, 32), 4.0), img)) == 0.0
    assert not loss_smoothness(np.zeros((24, 32)), img).present
    ramp = np.tile(np.linspace(2, 8, 32), (24, 1))
    assert float(loss_smoothness(ramp, img)) > 0


def test_weights_validation_and_from_dict():
    w = LossWeights.from_dict({"lambda_T": 2, "lambda_CH": 0.5})
    assert w.lambda_T == 2.0 and w.lambda_S == 0.1
    with pytest.raises(ValueError, match="unknown"):
        LossWeights.from_dict({"lambda_X": 1})
    with pytest.raises(ValueError):
        LossWeights(lambda_T=-1)
    with pytest.raises(ValueError):
        LossWeights(alpha=1.5)
    assert w.weight_for("photo_ST") == 0.1 and w.weight_for("pnc_MVRC") == 1.0


def test_aggregate_weights_present_terms_and_flags_absent(tmp_path):
    terms = {"photo_T": TermValue(0.4, 2), "sdc": TermValue(3.0, 3), "ch": TermValue(0.0, 0)}
    rep = aggregate(terms, LossWeights())
    assert np.isclose(rep.total, 1.0 * 0.2 + 0.1 * 1.0)
    assert rep.absent == ["ch"]
    path = tmp_path / "report.txt"
    rep.write(path)
    back = read_report(path)
    assert back["photo_T"] == (0.2, 2) and back["ch"] == (0.0, 0)
    assert np.isclose(back["total"][0], rep.total)


def test_read_report_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("photo_T 0.1\n")
    with pytest.raises(FormatError, match="bad.txt:1"):
        read_report(path)
