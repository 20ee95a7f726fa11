import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import dilate_oracle, erode_oracle
from sbde.errors import BackendMalformedResponseError, EmptyMaskError
from sbde.fixtures import make_bolt_fixture
from sbde.morphmod import StructElement
from sbde.segpipe import (
    OracleSegmenter,
    PartSpec,
    PointPrompt,
    ThresholdSegmenter,
    evaluate_segmentation,
    fuse_parts,
    otsu_threshold,
    sample_prompts,
    segment_part,
)
from sbde.types import BinaryMask, RasterImage

mask_bits = arrays(np.uint8, (8, 8), elements=st.integers(0, 1))


def bm(bits):
    return BinaryMask(np.asarray(bits, dtype=np.uint8))


class TestSamplePrompts:
    def test_single_pixel_mask(self):
        bits = np.zeros((5, 5), dtype=np.uint8)
        bits[3, 1] = 1
        prompts = sample_prompts(bm(bits), n=1, seed=0)
        assert prompts == [PointPrompt(1, 3, True)]

    def test_deterministic_across_runs(self):
        rng = np.random.default_rng(1)
        mask = bm((rng.random((20, 20)) < 0.3).astype(np.uint8))
        assert sample_prompts(mask, 3, seed=42) == sample_prompts(mask, 3, seed=42)
        assert sample_prompts(mask, 3, seed=42) != sample_prompts(mask, 3, seed=43)

    def test_three_distinct_members(self):
        bits = np.zeros((5, 5), dtype=np.uint8)
        bits[1, :5] = 1
        bits[3, :5] = 1
        prompts = sample_prompts(bm(bits), 3, seed=7)
        assert len({(p.x, p.y) for p in prompts}) == 3
        for p in prompts:
            assert bits[p.y, p.x] == 1

    def test_fewer_pixels_than_requested_returns_all(self):
        bits = np.zeros((4, 4), dtype=np.uint8)
        bits[0, 0] = bits[2, 3] = 1
        prompts = sample_prompts(bm(bits), 5, seed=0)
        assert {(p.x, p.y) for p in prompts} == {(0, 0), (3, 2)}

    def test_empty_mask_rejected(self):
        with pytest.raises(EmptyMaskError):
            sample_prompts(bm(np.zeros((4, 4))), 1, 0)


class TestBackends:
    def test_oracle_returns_registered_mask_exactly(self):
        fixture = make_bolt_fixture(5)
        backend = OracleSegmenter()
        backend.register_fixture(fixture)
        for part, gt in fixture.part_masks.items():
            prompts = sample_prompts(gt, 3, seed=1)
            pred = segment_part(backend, fixture.image, PartSpec(part, tuple(prompts)))
            assert pred == gt
            scores = evaluate_segmentation(pred, gt)
            assert (scores.miou, scores.dice, scores.pa) == (1.0, 1.0, 1.0)

    def test_oracle_unregistered_image_is_contract_error(self, rgb_image):
        backend = OracleSegmenter()
        with pytest.raises(BackendMalformedResponseError):
            segment_part(backend, rgb_image, PartSpec("nut", (PointPrompt(1, 1),)))

    def test_threshold_finds_component_containing_prompt(self):
        img = np.full((20, 20), 220, dtype=np.uint8)
        img[4:9, 4:9] = 40       # the prompted dark blob
        img[14:18, 12:17] = 45   # another dark blob, no prompt
        pred = segment_part(
            ThresholdSegmenter(), RasterImage(img),
            PartSpec("pin0", (PointPrompt(6, 6),)),
        )
        expected = np.zeros((20, 20), dtype=np.uint8)
        expected[4:9, 4:9] = 1
        assert np.array_equal(pred.bits, expected)

    def test_threshold_negative_prompt_drops_component(self):
        img = np.full((20, 20), 220, dtype=np.uint8)
        img[4:9, 4:9] = 40
        pred = ThresholdSegmenter().segment(
            RasterImage(img), "pin0",
            [PointPrompt(6, 6, True), PointPrompt(5, 5, False)], 0,
        )
        assert pred.is_empty()

    def test_otsu_separates_bimodal(self):
        img = np.full((10, 10), 200, dtype=np.uint8)
        img[:5] = 30
        t = otsu_threshold(img)
        assert 30 <= t < 200

    def test_dimension_contract_enforced(self, rgb_image):
        class TooSmall:
            def segment(self, img, part, prompts, seed):
                return bm(np.zeros((2, 2)))

            def descriptor(self):
                return {"name": "toosmall", "remote": False}

        with pytest.raises(BackendMalformedResponseError):
            segment_part(TooSmall(), rgb_image, PartSpec("nut", (PointPrompt(0, 0),)))

    def test_prompt_outside_image_rejected(self, rgb_image):
        with pytest.raises(ValueError):
            segment_part(
                OracleSegmenter(), rgb_image,
                PartSpec("nut", (PointPrompt(rgb_image.width, 0),)),
            )


class TestPartSpec:
    def test_requires_positive_prompt(self):
        with pytest.raises(ValueError):
            PartSpec("pin0", (PointPrompt(1, 1, False),))

    def test_unknown_part(self):
        with pytest.raises(ValueError):
            PartSpec("bolt", (PointPrompt(1, 1),))


class TestFuseParts:
    def test_disjoint_blocks_fuse_and_bridge(self):
        a = np.zeros((9, 9), dtype=np.uint8)
        a[2:7, 1:4] = 1
        b = np.zeros((9, 9), dtype=np.uint8)
        b[2:7, 5:8] = 1  # one-pixel seam at column 4
        fused = fuse_parts([bm(a), bm(b)])
        assert np.all(fused.bits[3:6, 4] == 1)
        union = a | b
        assert np.all(fused.bits[1:-1, 1:-1] >= union[1:-1, 1:-1])

    def test_single_solid_rectangle_is_identity(self):
        bits = np.zeros((10, 10), dtype=np.uint8)
        bits[3:7, 2:8] = 1
        assert fuse_parts([bm(bits)]) == bm(bits)

    def test_all_empty_parts(self):
        fused = fuse_parts([bm(np.zeros((5, 5))), bm(np.zeros((5, 5)))])
        assert fused.is_empty()

    def test_dimension_mismatch(self):
        with pytest.raises(Exception):
            fuse_parts([bm(np.zeros((4, 4))), bm(np.zeros((5, 5)))])

    @given(mask_bits, mask_bits, mask_bits)
    @settings(max_examples=40)
    def test_commutative_and_duplication_invariant(self, a, b, c):
        parts = [bm(a), bm(b), bm(c)]
        base = fuse_parts(parts)
        assert fuse_parts([bm(c), bm(a), bm(b)]) == base
        assert fuse_parts(parts + parts) == base

    @given(mask_bits, mask_bits)
    @settings(max_examples=40)
    def test_union_contained_on_interior(self, a, b):
        fused = fuse_parts([bm(a), bm(b)])
        union = a | b
        assert np.all(fused.bits[1:-1, 1:-1] >= union[1:-1, 1:-1])

    @given(mask_bits)
    @settings(max_examples=30)
    def test_matches_closing_oracle(self, a):
        se = StructElement.rect(3, 3)
        expected = erode_oracle(dilate_oracle(a, se), se)
        assert np.array_equal(fuse_parts([bm(a)]).bits, expected)
