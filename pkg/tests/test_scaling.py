"""Support rescaling: centroid-anchored resampling and ring inpainting."""
import numpy as np
import pytest

from opsam.grids import ImageRGB, MaskGrid
from opsam.scaling import SIZE_TAGS, build_support_bundle, inpaint_ring, scale_lesion


def box_mask(shape, r0, r1, c0, c1):
    m = np.zeros(shape, np.uint8)
    m[r0:r1, c0:c1] = 1
    return MaskGrid(m)


def flat_image(shape, value=50):
    return ImageRGB(np.full((*shape, 3), value, np.uint8))


def interval_oracle_box(lo, hi, centroid, factor, size):
    """Independent derivation: index g stays masked iff its inverse-mapped
    source index round(centroid + (g - centroid)/factor) is in [lo, hi]."""
    keep = []
    for g in range(size):
        src = int(np.floor(centroid + (g - centroid) / factor + 0.5))
        if lo <= src <= hi:
            keep.append(g)
    return keep


class TestScaleLesion:
    def test_identity_factor(self):
        rng = np.random.default_rng(0)
        img = ImageRGB(rng.integers(0, 256, (16, 16, 3)).astype(np.uint8))
        mask = box_mask((16, 16), 5, 9, 6, 10)
        out_img, out_mask = scale_lesion(img, mask, 1.0)
        assert (out_img.data == img.data).all()
        assert (out_mask.data == mask.data).all()

    def test_double_centered_square(self):
        img = flat_image((32, 32))
        mask = box_mask((32, 32), 14, 18, 14, 18)
        _, out = scale_lesion(img, mask, 2.0)
        keep = interval_oracle_box(14, 17, 15.5, 2.0, 32)
        assert keep == list(range(12, 20))
        expect = np.zeros((32, 32), np.uint8)
        expect[np.ix_(keep, keep)] = 1
        assert (out.data == expect).all()

    def test_halve_centered_square(self):
        img = flat_image((32, 32))
        mask = box_mask((32, 32), 14, 18, 14, 18)
        _, out = scale_lesion(img, mask, 0.5)
        keep = interval_oracle_box(14, 17, 15.5, 0.5, 32)
        assert keep == [15, 16]
        expect = np.zeros((32, 32), np.uint8)
        expect[np.ix_(keep, keep)] = 1
        assert (out.data == expect).all()
        # the vacated ring is no longer masked
        assert (out.data & ~mask.data).sum() == 0
        assert out.area < mask.area

    def test_centroid_stays_put(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            r0, c0 = rng.integers(8, 16, size=2)
            hgt, wid = rng.integers(3, 8, size=2)
            mask = box_mask((40, 40), r0, r0 + hgt, c0, c0 + wid)
            for factor in (0.5, 0.75, 1.3, 1.6):
                _, out = scale_lesion(flat_image((40, 40)), mask, factor)
                ys, xs = np.nonzero(mask.data)
                ny, nx = np.nonzero(out.data)
                assert abs(ys.mean() - ny.mean()) <= 1.0
                assert abs(xs.mean() - nx.mean()) <= 1.0

    def test_area_ratio_near_factor_squared(self):
        for hgt, wid in ((6, 6), (4, 10), (8, 5)):
            mask = box_mask((48, 48), 20, 20 + hgt, 20, 20 + wid)
            perimeter = 2 * (hgt + wid)
            for factor in (0.5, 1.5, 2.0):
                _, out = scale_lesion(flat_image((48, 48)), mask, factor)
                expect = factor * factor * mask.area
                assert abs(out.area - expect) <= perimeter * factor

    def test_object_pixels_carry_source_colors(self):
        rng = np.random.default_rng(2)
        img = ImageRGB(rng.integers(0, 256, (32, 32, 3)).astype(np.uint8))
        mask = box_mask((32, 32), 14, 18, 14, 18)
        out_img, out_mask = scale_lesion(img, mask, 2.0)
        outside = ~out_mask.bool()
        assert (out_img.data[outside] == img.data[outside]).all()
        # every new object pixel copies some original object pixel's color
        inside_colors = {tuple(px) for px in img.data[mask.bool()]}
        for px in out_img.data[out_mask.bool()]:
            assert tuple(px) in inside_colors

    def test_edge_touching_mask_clips_in_frame(self):
        mask = box_mask((24, 24), 0, 6, 0, 6)
        _, out = scale_lesion(flat_image((24, 24)), mask, 1.5)
        assert out.area > 0
        assert out.data.shape == (24, 24)

    def test_errors(self):
        img = flat_image((8, 8))
        with pytest.raises(ValueError):
            scale_lesion(img, MaskGrid(np.zeros((8, 8), np.uint8)), 1.5)
        with pytest.raises(ValueError):
            scale_lesion(img, box_mask((8, 8), 2, 4, 2, 4), 0.0)
        # two pixels one cell apart collapse to nothing at factor 0.3
        tiny = np.zeros((4, 5), np.uint8)
        tiny[0, 1] = 1
        tiny[0, 2] = 1
        with pytest.raises(ValueError, match="below one pixel"):
            scale_lesion(flat_image((4, 5)), MaskGrid(tiny), 0.3)


class TestInpaintRing:
    def test_empty_hole_is_noop(self):
        rng = np.random.default_rng(3)
        img = ImageRGB(rng.integers(0, 256, (6, 6, 3)).astype(np.uint8))
        out = inpaint_ring(img, MaskGrid(np.zeros((6, 6), np.uint8)))
        assert out is img

    def test_single_pixel_uniform_neighborhood(self):
        img = flat_image((5, 5), value=120)
        hole = np.zeros((5, 5), np.uint8)
        hole[2, 2] = 1
        out = inpaint_ring(img, MaskGrid(hole))
        assert (out.data[2, 2] == 120).all()

    def test_gradient_two_pixel_hole(self):
        # columns carry value 10*x; hand-computed neighbor means:
        # (2,3): (30+30+20)/3 = 26.67 -> 27;  (2,4): (40+40+50)/3 = 43.33 -> 43
        grad = np.zeros((5, 8, 3), np.uint8)
        grad[:, :, :] = (np.arange(8, dtype=np.uint8) * 10)[None, :, None]
        hole = np.zeros((5, 8), np.uint8)
        hole[2, 3] = 1
        hole[2, 4] = 1
        out = inpaint_ring(ImageRGB(grad), MaskGrid(hole))
        assert (out.data[2, 3] == 27).all()
        assert (out.data[2, 4] == 43).all()

    def test_matches_scalar_reference_sweep(self):
        rng = np.random.default_rng(4)
        img = rng.integers(0, 256, (9, 9, 3)).astype(np.uint8)
        hole = np.zeros((9, 9), bool)
        hole[3:6, 3:6] = True

        vals = img.astype(np.float64).copy()
        unknown = hole.copy()
        while unknown.any():
            filled_now = []
            snapshot = vals.copy()
            known = ~unknown
            for y, x in np.argwhere(unknown):
                acc, cnt = np.zeros(3), 0
                for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < 9 and 0 <= nx < 9 and known[ny, nx]:
                        acc += snapshot[ny, nx]
                        cnt += 1
                if cnt:
                    vals[y, x] = acc / cnt
                    filled_now.append((y, x))
            for y, x in filled_now:
                unknown[y, x] = False
        expect = np.floor(vals + 0.5).clip(0, 255).astype(np.uint8)

        out = inpaint_ring(ImageRGB(img), MaskGrid(hole.astype(np.uint8)))
        assert (out.data == expect).all()

    def test_pixels_outside_hole_untouched(self):
        rng = np.random.default_rng(5)
        img = ImageRGB(rng.integers(0, 256, (8, 8, 3)).astype(np.uint8))
        hole = np.zeros((8, 8), np.uint8)
        hole[2:5, 3:6] = 1
        out = inpaint_ring(img, MaskGrid(hole))
        untouched = hole == 0
        assert (out.data[untouched] == img.data[untouched]).all()

    def test_full_frame_hole_rejected(self):
        with pytest.raises(ValueError):
            inpaint_ring(flat_image((4, 4)), MaskGrid(np.ones((4, 4), np.uint8)))


class TestBuildSupportBundle:
    def test_default_areas_ordered(self):
        mask = box_mask((48, 48), 18, 28, 20, 30)
        bundle = build_support_bundle(flat_image((48, 48)), mask)
        assert bundle.xl[1].area >= bundle.ori[1].area >= bundle.xs[1].area
        assert bundle.ori[1] is mask

    def test_all_variants_share_frame(self):
        mask = box_mask((40, 40), 10, 20, 10, 20)
        bundle = build_support_bundle(flat_image((40, 40)), mask)
        for tag in SIZE_TAGS:
            img, m = bundle.pair(tag)
            assert img.data.shape == (40, 40, 3)
            assert m.data.shape == (40, 40)
        with pytest.raises(ValueError):
            bundle.pair("xxl")

    def test_vacated_ring_is_inpainted(self):
        # a flat-color object on a flat background: after shrinking, the
        # vacated ring must read background-ish, not stale object color
        img = np.full((32, 32, 3), 40, np.uint8)
        img[12:20, 12:20] = 200
        mask = box_mask((32, 32), 12, 20, 12, 20)
        bundle = build_support_bundle(ImageRGB(img), mask)
        xs_img, xs_mask = bundle.xs
        ring = mask.bool() & ~xs_mask.bool()
        assert ring.any()
        # ring pixels were overwritten by the fill (no longer all 200)
        assert not (xs_img.data[ring] == 200).all()

    def test_degenerate_scales_rejected(self):
        mask = box_mask((16, 16), 4, 8, 4, 8)
        with pytest.raises(ValueError):
            build_support_bundle(flat_image((16, 16)), mask, scale_xl=1.0, scale_xs=1.0)
        with pytest.raises(ValueError):
            build_support_bundle(flat_image((16, 16)), mask, scale_xl=0.9, scale_xs=0.5)
