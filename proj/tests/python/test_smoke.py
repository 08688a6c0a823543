"""Smoke tests for the ffdpy native module."""

import itertools
import json

import numpy as np
import pytest

import ffdpy


def brute_force_assignment(cost):
    rows, cols = cost.shape
    m = min(rows, cols)
    best = float("inf")
    for chosen in itertools.combinations(range(rows), m):
        for perm in itertools.permutations(range(cols), m):
            total = sum(cost[r, c] for r, c in zip(chosen, perm))
            best = min(best, total)
    return best


def test_hungarian_matches_brute_force():
    rng = np.random.default_rng(42)
    for _ in range(20):
        cost = rng.uniform(0, 10, size=(rng.integers(1, 5), rng.integers(1, 6)))
        pairs, total, unmatched = ffdpy.hungarian(cost)
        assert total == pytest.approx(brute_force_assignment(cost), abs=1e-9)
        assert len(pairs) == min(cost.shape)
        cols = [c for _, c in pairs]
        assert len(set(cols)) == len(cols)


def test_box_round_trip():
    box = (48.0, 80.0, 32.0, 25.6)
    nb = ffdpy.normalize_box(*box, tile_row=2, tile_col=1, image_w=320, image_h=256)
    back = ffdpy.denormalize_box(*nb, tile_row=2, tile_col=1, image_w=320, image_h=256)
    assert back == pytest.approx(box, abs=1e-5)


def test_assign_tile_floor_semantics():
    assert ffdpy.assign_tile(33.0, 10.0, 320, 256) == (0, 1)
    assert ffdpy.assign_tile(32.0, 32.0, 320, 256) == (1, 1)


def test_iou():
    assert ffdpy.iou((5, 5, 2, 2), (5, 5, 2, 2)) == pytest.approx(1.0)
    assert ffdpy.iou((0.5, 0.5, 1, 1), (1.0, 0.5, 1, 1)) == pytest.approx(1 / 3)


def test_synthesize_scene_invariants():
    base = np.full((64, 64, 3), 30, dtype=np.uint8)
    src = np.full((32, 32, 3), 10, dtype=np.uint8)
    mask = np.zeros((32, 32), dtype=np.uint16)
    src[4:10, 5:12] = (200, 40, 40)
    mask[4:10, 5:12] = 1
    src[20:26, 18:24] = (40, 200, 40)
    mask[20:26, 18:24] = 2

    image, out_mask, boxes = ffdpy.synthesize_scene(base, [(src, mask)], seed=3, n_max=20)
    assert image.shape == (64, 64, 3)
    assert out_mask.shape == (64, 64)

    # untouched pixels equal the base image
    untouched = out_mask == 0
    assert np.array_equal(image[untouched], base[untouched])

    # boxes are pairwise disjoint
    def disjoint(a, b):
        ax0, ax1 = a[0] - a[2] / 2, a[0] + a[2] / 2
        ay0, ay1 = a[1] - a[3] / 2, a[1] + a[3] / 2
        bx0, bx1 = b[0] - b[2] / 2, b[0] + b[2] / 2
        by0, by1 = b[1] - b[3] / 2, b[1] + b[3] / 2
        return min(ax1, bx1) <= max(ax0, bx0) or min(ay1, by1) <= max(ay0, by0)

    for i, a in enumerate(boxes):
        for b in boxes[i + 1:]:
            assert disjoint(a, b)


def test_evaluate_perfect_detections():
    gts = [(10.0, 10.0, 4.0, 4.0), (30.0, 30.0, 4.0, 4.0)]
    dets = [(10.0, 10.0, 4.0, 4.0, 0.9), (30.0, 30.0, 4.0, 4.0, 0.8)]
    report = ffdpy.evaluate(dets, gts)
    assert report["AP"] == pytest.approx(1.0)
    assert report["AP_S"] == pytest.approx(1.0)
    assert report["AP_M"] is None
    assert report["AP_L"] is None


def test_model_build_infer_save_load(tmp_path):
    config = {
        "backbone": {"channels_per_stage": [2, 2, 4, 4, 4], "input_h": 64, "input_w": 64},
        "lor": {"d": 4, "n_g": 2, "repetitions": 1},
    }
    model = ffdpy.Model(json.dumps(config), seed=5)
    assert model.param_count > 0

    image = np.random.default_rng(0).integers(0, 255, size=(64, 64, 3), dtype=np.uint8)
    detections = model.infer(image, threshold=0.0)
    # postprocessing-free bound: at most N_g * H_o * W_o detections
    assert len(detections) <= 2 * 2 * 2

    path = str(tmp_path / "model.ckpt")
    model.save(path)
    restored = ffdpy.Model.load(path)
    assert restored.param_count == model.param_count
    assert restored.infer(image, threshold=0.0) == detections


def test_model_rejects_indivisible_image():
    config = {
        "backbone": {"channels_per_stage": [2, 2, 4, 4, 4], "input_h": 64, "input_w": 64},
        "lor": {"d": 4, "n_g": 2, "repetitions": 1},
    }
    model = ffdpy.Model(json.dumps(config), seed=1)
    bad = np.zeros((50, 50, 3), dtype=np.uint8)
    with pytest.raises(Exception):
        model.infer(bad)
