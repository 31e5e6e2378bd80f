import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgi.corruption import (CorruptionSpec, central_block_mask, corrupt, fit_mask, irregular_mask,
                            load_irregular_masks, masked_mean_fill, random_missing_mask, sample_clean,
                            synthesize_defect)
from rgi.fileio import FormatError, write_pnm
from rgi.generator import ManifoldSpec, generate, make_affine_generator, make_mlp_generator

MODEL = make_mlp_generator(ManifoldSpec(4, (16, 16), 0), hidden=(8,))


def test_sample_clean_is_seeded():
    a, b = sample_clean(MODEL, 3), sample_clean(MODEL, 3)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert not np.array_equal(sample_clean(MODEL, 4)[0], a[0])


def test_affine_clean_is_exact():
    aff = make_affine_generator(ManifoldSpec(2, (16, 16), 1))
    z, clean = sample_clean(aff, 0)
    assert np.array_equal(clean, (z @ aff.theta[0] + aff.theta[1]).reshape(16, 16))


def test_zero_block_leaves_image_clean():
    z, clean = sample_clean(MODEL, 1)
    s = corrupt(clean, z, CorruptionSpec(block=0))
    assert s.n0 == 0 and np.array_equal(s.image, clean)


def test_central_block_counts_64():
    z, clean = sample_clean(MODEL, 1)
    s = corrupt(clean, z, CorruptionSpec(block=8))
    assert s.n0 == 64
    assert s.true_mask[4:12, 4:12].all() and s.true_mask.sum() == 64


def test_random_missing_exact_count():
    for seed in range(5):
        m = random_missing_mask((16, 16), 0.25, np.random.default_rng(seed))
        assert m.sum() == round(0.25 * 256)


def test_irregular_mask_is_connected_blob_of_target_area():
    m = irregular_mask((16, 16), 0.12, np.random.default_rng(0))
    assert m.sum() >= round(0.12 * 256)
    assert set(np.unique(m)) <= {0.0, 1.0}


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["central_block", "random_missing", "irregular", "defect_fill"]),
       st.sampled_from(["normal", "normal_neg1", "uniform", "mean_fill"]),
       st.integers(0, 2 ** 16), st.floats(-1, 1))
def test_changes_confined_to_mask(mechanism, fill, seed, level):
    z, clean = sample_clean(MODEL, seed)
    s = corrupt(clean, z, CorruptionSpec(mechanism, fill=fill, level=level, seed=seed))
    outside = s.true_mask == 0
    assert np.array_equal(s.image[outside], clean[outside])
    assert s.n0 == int(s.true_mask.sum())
    again = corrupt(clean, z, CorruptionSpec(mechanism, fill=fill, level=level, seed=seed))
    assert np.array_equal(again.image, s.image)


def test_fill_levels_shift_the_block():
    z, clean = sample_clean(MODEL, 2)
    m = central_block_mask((16, 16), 8) > 0
    hi = corrupt(clean, z, CorruptionSpec(level=1.0, seed=0)).image[m]
    lo = corrupt(clean, z, CorruptionSpec(level=-1.0, seed=0)).image[m]
    assert np.allclose(hi - lo, 2.0)
    neg = corrupt(clean, z, CorruptionSpec(fill="normal_neg1", level=1.0, seed=0)).image[m]
    assert np.allclose(neg, lo)


def test_invalid_specs():
    with pytest.raises(ValueError):
        CorruptionSpec("smudge")
    with pytest.raises(ValueError):
        CorruptionSpec(fill="zeros")
    with pytest.raises(ValueError):
        CorruptionSpec("random_missing", fraction=1.0)
    with pytest.raises(ValueError):
        central_block_mask((4, 4), 8)


def test_defect_constant_image_unchanged():
    clean = np.full((4, 4), 0.3)
    mask = np.zeros((4, 4))
    mask[1:3, 1:3] = 1
    assert np.array_equal(synthesize_defect(clean, mask).image, clean)


def test_defect_fill_is_masked_mean():
    clean = np.tile(np.linspace(0, 1, 6), (2, 1))
    mask = np.zeros((2, 6))
    mask[0, 1] = mask[0, 2] = 1  # values 0.2 and 0.4
    out = synthesize_defect(clean, mask).image
    assert np.allclose(out[0, 1:3], 0.3, atol=1e-15)


def test_disjoint_defects_commute():
    _, clean = sample_clean(MODEL, 5)
    a, b = np.zeros((16, 16)), np.zeros((16, 16))
    a[:4, :4], b[10:, 10:] = 1, 1
    ab = synthesize_defect(synthesize_defect(clean, a).image, b).image
    ba = synthesize_defect(synthesize_defect(clean, b).image, a).image
    assert np.array_equal(ab, ba)


def test_defect_needs_nonempty_mask():
    with pytest.raises(ValueError):
        synthesize_defect(np.zeros((4, 4)), np.zeros((4, 4)))


def test_mean_fill_per_channel():
    clean = np.zeros((2, 2, 3))
    clean[..., 1] = 1.0
    mask = np.zeros((2, 2, 3))
    mask[0, 0] = 1
    filled = masked_mean_fill(clean, mask)
    assert np.allclose(filled[0, 0], [0.0, 1.0, 0.0])


def _write_mask(path, raw):
    write_pnm(path, raw, raw=True)


def test_loaded_masks(tmp_path):
    _write_mask(tmp_path / "white.pgm", np.full((16, 16), 255))
    _write_mask(tmp_path / "black.pgm", np.zeros((16, 16)))
    checker = (np.indices((16, 16)).sum(axis=0) % 2) * 255
    _write_mask(tmp_path / "checker.pgm", checker)
    masks = dict(zip(["black", "checker", "white"], load_irregular_masks(tmp_path, (16, 16))))
    assert masks["white"].all() and not masks["black"].any()
    assert masks["checker"].sum() == 128


def test_threshold_at_128(tmp_path):
    _write_mask(tmp_path / "m.pgm", np.array([[127, 128], [0, 255]]))
    (m,) = load_irregular_masks(tmp_path / "m.pgm", (2, 2))
    assert m.tolist() == [[0.0, 1.0], [0.0, 1.0]]


def test_malformed_mask_file(tmp_path):
    (tmp_path / "bad.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
    with pytest.raises(FormatError):
        load_irregular_masks(tmp_path / "bad.pgm")


def test_fit_mask_center_crops_larger_masks():
    big = np.zeros((20, 20))
    big[2:18, 2:18] = 1
    assert fit_mask(big, (16, 16)).all()


def test_custom_mask_spec_used():
    z, clean = sample_clean(MODEL, 0)
    mask = np.zeros((16, 16))
    mask[0, :] = 1
    s = corrupt(clean, z, CorruptionSpec("irregular", mask=mask, seed=1))
    assert np.array_equal(s.true_mask, mask)
    assert generate(MODEL, z).shape == s.image.shape
