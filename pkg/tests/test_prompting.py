"""Prompt placement, coverage scoring, and the evolution loop."""
import json

import numpy as np
import pytest

from conftest import ScriptedSegmenter, brute_force_deepest
from opsam.backends.oracle import OracleSegmenter, _disk_pixels
from opsam.backends.synthetic import make_scene
from opsam.grids import ImageRGB, MaskGrid, Prior
from opsam.prompting import (
    NEGATIVE,
    POSITIVE,
    EvolutionConfig,
    PromptPoint,
    bbox_center,
    coverage,
    edt_center,
    evolve_prompts,
)


def mask_of(arr):
    return MaskGrid(np.asarray(arr, dtype=np.uint8))


def gray_image(h, w, value=60):
    return ImageRGB(np.full((h, w, 3), value, np.uint8))


class TestEdtCenter:
    def test_single_pixel(self):
        m = np.zeros((7, 7), np.uint8)
        m[3, 5] = 1
        assert edt_center(mask_of(m)) == (3, 5)

    def test_full_square_centers(self):
        # border counts as background, so a full 5x5 peaks dead center
        assert edt_center(mask_of(np.ones((5, 5)))) == (2, 2)

    def test_blob_beats_thin_line(self):
        # a 9-pixel line is everywhere depth 1; the 5x5 blob is depth 3
        m = np.zeros((12, 12), np.uint8)
        m[0, 0:9] = 1
        m[4:9, 2:7] = 1
        assert edt_center(mask_of(m)) == (6, 4)

    def test_matches_brute_force_on_random_grids(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            h, w = rng.integers(2, 33, size=2)
            m = (rng.uniform(size=(h, w)) < rng.uniform(0.15, 0.8)).astype(np.uint8)
            if m.sum() == 0:
                m[rng.integers(h), rng.integers(w)] = 1
            assert edt_center(mask_of(m)) == brute_force_deepest(m)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty mask"):
            edt_center(mask_of(np.zeros((3, 3))))


class TestBboxCenter:
    def test_two_endpoints(self):
        m = np.zeros((4, 9), np.uint8)
        m[0, 0] = 1
        m[0, 8] = 1
        assert bbox_center(mask_of(m)) == (0, 4)

    def test_l_shape_lands_off_region(self):
        # column 0 plus row 8: the box center (4, 4) is background,
        # which is exactly why this rule is only the baseline
        m = np.zeros((9, 9), np.uint8)
        m[:, 0] = 1
        m[8, :] = 1
        center = bbox_center(mask_of(m))
        assert center == (4, 4)
        assert m[center] == 0
        deep = edt_center(mask_of(m))
        assert m[deep] == 1

    def test_single_pixel(self):
        m = np.zeros((5, 5), np.uint8)
        m[1, 3] = 1
        assert bbox_center(mask_of(m)) == (1, 3)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty mask"):
            bbox_center(mask_of(np.zeros((2, 2))))


class TestCoverage:
    def test_values(self):
        t = mask_of([[1, 1, 0, 0]])
        assert coverage(mask_of([[1, 1, 0, 0]]), t) == 1.0
        assert coverage(mask_of([[0, 0, 1, 1]]), t) == 0.0
        assert coverage(mask_of([[1, 0, 0, 0]]), t) == 0.5
        assert coverage(mask_of([[0, 0, 0, 0]]), mask_of([[0, 0, 0, 0]])) == 1.0

    def test_shape_error(self):
        with pytest.raises(ValueError, match="grids differ"):
            coverage(mask_of(np.zeros((2, 2))), mask_of(np.zeros((2, 3))))


def block_prior(h, w, tight_box, value=0.95, loose_box=None, loose_value=0.6):
    data = np.zeros((h, w))
    if loose_box is not None:
        r0, r1, c0, c1 = loose_box
        data[r0:r1, c0:c1] = loose_value
    r0, r1, c0, c1 = tight_box
    data[r0:r1, c0:c1] = value
    return Prior(data)


class TestEvolveLoop:
    def test_prompts_are_cumulative(self):
        # masks never clear the score bar, so the loop keeps refining;
        # call k must carry k+1 prompts, all previous points included
        h = w = 16
        quarter = np.zeros((h, w), np.uint8)
        quarter[4:8, 4:8] = 1
        seg = ScriptedSegmenter([(quarter, 0.2)])
        prior = block_prior(h, w, (4, 12, 4, 12))
        trace = evolve_prompts(gray_image(h, w), prior, seg)
        calls = seg.sessions[0].calls
        assert len(calls) >= 2
        for k, prompts in enumerate(calls):
            assert len(prompts) == k + 1
            assert prompts[: k] == calls[k - 1] if k else True
        assert trace.n_prompts() == len(calls)

    def test_stops_when_both_scores_clear(self):
        h = w = 16
        tight = np.zeros((h, w), np.uint8)
        tight[4:12, 4:12] = 1
        seg = ScriptedSegmenter([(tight, 0.97)])
        trace = evolve_prompts(gray_image(h, w), block_prior(h, w, (4, 12, 4, 12)), seg)
        assert len(trace.rounds) == 1
        assert trace.rounds[0].action == "init"
        assert trace.rounds[0].retained
        assert trace.rounds[0].cov == 1.0
        assert (trace.final_mask.data == tight).all()

    def test_remediation_drops_spilling_mask(self):
        h = w = 24
        tight_box = (8, 16, 8, 16)
        spilled = np.zeros((h, w), np.uint8)
        spilled[8:16, 8:16] = 1
        spilled[0:5, 0:5] = 1  # 25 px beyond the loose region
        good = np.zeros((h, w), np.uint8)
        good[8:16, 8:16] = 1
        seg = ScriptedSegmenter([(spilled, 0.9), (good, 0.95)])
        cfg = EvolutionConfig(neg_area_thresh=20)
        trace = evolve_prompts(gray_image(h, w), block_prior(h, w, tight_box), seg, cfg)

        assert trace.rounds[0].action == "init"
        assert trace.rounds[0].retained is False
        assert trace.rounds[1].action == "negative_remediation"
        assert trace.rounds[1].prompt.label == NEGATIVE
        # the negative lands inside the spill itself
        assert spilled[trace.rounds[1].prompt.y, trace.rounds[1].prompt.x] == 1
        assert trace.rounds[1].prompt.y < 5 and trace.rounds[1].prompt.x < 5
        # dropped pixels never reach the final union
        final = trace.final_mask.data.astype(bool)
        assert not final[0:5, 0:5].any()
        assert final[8:16, 8:16].all()

    def test_small_spill_below_threshold_is_kept(self):
        h = w = 24
        mask = np.zeros((h, w), np.uint8)
        mask[8:16, 8:16] = 1
        mask[0, 0] = 1  # single stray pixel, below any threshold
        seg = ScriptedSegmenter([(mask, 0.95)])
        cfg = EvolutionConfig(neg_area_thresh=16)
        trace = evolve_prompts(gray_image(h, w), block_prior(h, w, (8, 16, 8, 16)), seg, cfg)
        assert len(trace.rounds) == 1
        assert trace.rounds[0].retained
        assert trace.final_mask.data[0, 0] == 1

    def test_call_budget_hits_exact_worst_case(self):
        # every answer spills far from the tight region and never covers
        # it, so every round both prompts and remediates: the initial
        # call, then max_rounds refinement rounds with one remediation
        # each, except the last whose remediation budget is spent
        h = w = 32
        stray = np.zeros((h, w), np.uint8)
        stray[0:6, 0:6] = 1
        seg = ScriptedSegmenter([(stray, 0.1)])
        cfg = EvolutionConfig(max_rounds=5, neg_area_thresh=16)
        trace = evolve_prompts(gray_image(h, w), block_prior(h, w, (12, 20, 12, 20)), seg, cfg)
        n_calls = len(seg.sessions[0].calls)
        assert n_calls == 2 * cfg.max_rounds + 1 == 11
        assert trace.n_prompts() == n_calls
        assert not trace.rounds[0].retained
        assert sum(r.action == "negative_remediation" for r in trace.rounds) == cfg.max_rounds

    def test_retained_union_coverage_is_monotone(self):
        h = w = 16
        parts = []
        grow = np.zeros((h, w), np.uint8)
        for r in range(4, 12):
            grow = grow.copy()
            grow[r, 4:12] = 1
            parts.append((grow, 0.3))
        seg = ScriptedSegmenter(parts)
        trace = evolve_prompts(gray_image(h, w), block_prior(h, w, (4, 12, 4, 12)), seg)
        tight = np.zeros((h, w), bool)
        tight[4:12, 4:12] = True
        union = np.zeros((h, w), bool)
        covs = []
        for r in trace.rounds:
            if r.retained:
                union |= r.mask.bool()
                covs.append((union & tight).sum() / tight.sum())
        assert covs == sorted(covs)
        assert (trace.final_mask.bool() == union).all()

    def test_empty_tight_region_short_circuits(self):
        seg = ScriptedSegmenter([(np.ones((8, 8), np.uint8), 1.0)])
        prior = Prior(np.full((8, 8), 0.6))  # loose only, nothing tight
        trace = evolve_prompts(gray_image(8, 8), prior, seg)
        assert trace.rounds == ()
        assert trace.final_mask.area == 0
        assert seg.sessions == []

    def test_expands_into_loose_ring_after_tight_covered(self):
        h = w = 20
        tight = np.zeros((h, w), np.uint8)
        tight[6:14, 6:14] = 1
        loose = np.zeros((h, w), np.uint8)
        loose[4:16, 4:16] = 1
        seg = ScriptedSegmenter([(tight, 0.5), (loose, 0.9)])
        prior = block_prior(h, w, (6, 14, 6, 14), loose_box=(4, 16, 4, 16))
        trace = evolve_prompts(gray_image(h, w), prior, seg)
        assert [r.action for r in trace.rounds] == ["init", "expand_loose"]
        # the second prompt targets the uncovered ring, not the seen block
        p2 = trace.rounds[1].prompt
        assert loose[p2.y, p2.x] == 1 and tight[p2.y, p2.x] == 0
        assert (trace.final_mask.data == (tight | loose)).all()

    def test_cover_gap_targets_unseen_tight_pixels(self):
        h = w = 20
        left = np.zeros((h, w), np.uint8)
        left[6:14, 4:9] = 1
        both = np.zeros((h, w), np.uint8)
        both[6:14, 4:16] = 1
        seg = ScriptedSegmenter([(left, 0.9), (both, 0.95)])
        trace = evolve_prompts(gray_image(h, w), block_prior(h, w, (6, 14, 4, 16)), seg)
        assert [r.action for r in trace.rounds] == ["init", "cover_gap"]
        p2 = trace.rounds[1].prompt
        assert left[p2.y, p2.x] == 0 and both[p2.y, p2.x] == 1

    def test_oracle_closes_the_loop_in_one_round(self):
        scene = make_scene(seed=321)
        oracle = OracleSegmenter()
        oracle.register(scene.image, scene.gt_mask)
        prior = Prior(scene.gt_mask.data.astype(float))
        trace = evolve_prompts(scene.image, prior, oracle)
        assert len(trace.rounds) == 1
        assert trace.rounds[0].retained
        assert trace.rounds[0].iou == 1.0
        assert (trace.final_mask.data == scene.gt_mask.data).all()

    def test_negative_disk_suppression_end_to_end(self):
        # a prior with a fake second blob: the oracle answers the fake
        # prompt with a small disk, the loop flags it and places a
        # negative, and the final mask ends clean
        hh = ww = 64
        ribbon = np.zeros((hh, ww), bool)
        ribbon[40:42, 10:26] = True
        fake = np.zeros((hh, ww), bool)
        fake[11:14, 43:46] = True
        prior = np.zeros((hh, ww))
        prior[ribbon] = 0.95
        prior[fake] = 0.95
        img = np.zeros((hh, ww, 3), np.uint8)
        img[:, :, 1] = np.random.default_rng(77).integers(0, 255, (hh, ww))
        image = ImageRGB(img)
        gt = MaskGrid(ribbon.astype(np.uint8))
        oracle = OracleSegmenter()
        oracle.register(image, gt)
        trace = evolve_prompts(image, prior=Prior(prior), segmenter=oracle)
        assert any(r.action == "negative_remediation" for r in trace.rounds)
        assert trace.final_mask.data.astype(bool).sum() == ribbon.sum()
        assert (trace.final_mask.bool() == ribbon).all()


class TestTraceSerialization:
    def test_jsonl_round_keys(self):
        h = w = 16
        tight = np.zeros((h, w), np.uint8)
        tight[4:12, 4:12] = 1
        seg = ScriptedSegmenter([(tight, 0.9)])
        trace = evolve_prompts(gray_image(h, w), block_prior(h, w, (4, 12, 4, 12)), seg)
        lines = trace.to_jsonl().splitlines()
        assert len(lines) == len(trace.rounds)
        rec = json.loads(lines[0])
        assert set(rec) == {"round", "action", "prompt", "cov", "iou", "retained"}
        assert set(rec["prompt"]) == {"x", "y", "label"}
        assert rec["round"] == 0
        assert rec["action"] == "init"
        assert rec["retained"] is True

    def test_empty_trace_serializes_to_empty_string(self):
        seg = ScriptedSegmenter([(np.ones((8, 8), np.uint8), 1.0)])
        trace = evolve_prompts(gray_image(8, 8), Prior(np.zeros((8, 8))), seg)
        assert trace.to_jsonl() == ""


class TestConfigValidation:
    def test_prompt_point(self):
        PromptPoint(x=0, y=0, label=POSITIVE)
        with pytest.raises(ValueError, match=">= 0"):
            PromptPoint(x=-1, y=0, label=POSITIVE)
        with pytest.raises(ValueError, match="label"):
            PromptPoint(x=0, y=0, label=2)

    def test_evolution_config(self):
        EvolutionConfig()
        with pytest.raises(ValueError, match="theta_loose < theta_tight"):
            EvolutionConfig(theta_tight=0.5, theta_loose=0.7)
        with pytest.raises(ValueError, match="score_thresh"):
            EvolutionConfig(score_thresh=0.0)
        with pytest.raises(ValueError, match="neg_area_thresh"):
            EvolutionConfig(neg_area_thresh=0)
        with pytest.raises(ValueError, match="max_rounds"):
            EvolutionConfig(max_rounds=0)
        with pytest.raises(ValueError, match="prompt_center"):
            EvolutionConfig(prompt_center="centroid")

    def test_center_fn_dispatch(self):
        assert EvolutionConfig().center_fn() is edt_center
        assert EvolutionConfig(prompt_center="bbox").center_fn() is bbox_center

    def test_disk_helper_matches_radius(self):
        disk = _disk_pixels(10, 10, (32, 32))
        assert disk.shape == (32, 32)
        assert int(disk.sum()) == 29  # interior disk of radius 3
        for y, x in np.argwhere(disk):
            assert (y - 10) ** 2 + (x - 10) ** 2 <= 9
