import numpy as np
import numpy.testing as npt
import pytest

import detector
import imaging
import nnet
import synthgen
from conftest import constant_net
from detector import DetectorConfig, PlateDetection
from imaging import BBox

WINDOW = (32, 96)


def det(x, y, w, h, score):
    return PlateDetection(BBox(x, y, w, h), score)


# === ピラミッド ===

@pytest.mark.parametrize("shape, n_levels", [((256, 256), 2), ((128, 128), 1), ((20, 60), 0), ((32, 96), 1)])
def test_pyramid_levels(shape, n_levels):
    levels = detector.build_pyramid(np.zeros(shape, dtype=np.uint8), 0.5, WINDOW)
    assert len(levels) == n_levels
    for level, factor in levels:
        assert level.shape[0] >= WINDOW[0] and level.shape[1] >= WINDOW[1]
        assert level.shape == (int(np.floor(shape[0] * factor)), int(np.floor(shape[1] * factor)))


def test_pyramid_sizes_non_increasing():
    levels = detector.build_pyramid(np.zeros((256, 384), dtype=np.uint8), 0.9, WINDOW)
    assert levels[0][1] == 1.0
    for (a, _), (b, _) in zip(levels, levels[1:]):
        assert b.shape[0] <= a.shape[0] and b.shape[1] <= a.shape[1]


def test_pyramid_rejects_bad_step():
    with pytest.raises(ValueError):
        detector.build_pyramid(np.zeros((64, 192), dtype=np.uint8), 1.0, WINDOW)


def test_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(stride=0)
    with pytest.raises(ValueError):
        DetectorConfig(score_thresh=1.5)


def test_detection_score_range():
    with pytest.raises(ValueError):
        det(0, 0, 10, 10, 1.2)


# === 走査 ===

def test_scan_scores_every_window():
    img = np.random.default_rng(0).integers(0, 256, size=(64, 192), dtype=np.uint8)
    net = constant_net("detector", 1)
    candidates = detector.scan(net, img, stride=8, score_thresh=0.0, scale_step=0.75)
    expected = 0
    for level, _ in detector.build_pyramid(img, 0.75, WINDOW):
        ny = len(range(0, level.shape[0] - WINDOW[0] + 1, 8))
        nx = len(range(0, level.shape[1] - WINDOW[1] + 1, 8))
        expected += ny * nx
    assert len(candidates) == expected
    for c in candidates:
        assert c.bbox.x >= 0 and c.bbox.y >= 0
        assert c.bbox.x2 <= 192 and c.bbox.y2 <= 64


def test_scan_full_image_window_maps_back():
    net = constant_net("detector", 1)
    candidates = detector.scan(net, np.zeros((32, 96), dtype=np.uint8), stride=8, score_thresh=0.0)
    assert [c.bbox for c in candidates] == [BBox(0, 0, 96, 32)]


def test_scan_scores_match_forward_on_each_window():
    img = np.random.default_rng(4).integers(0, 256, size=(60, 170), dtype=np.uint8)
    net = nnet.build_network("detector", seed=2)
    candidates = detector.scan(net, img, stride=8, score_thresh=0.0, scale_step=0.75)

    expected = []
    for level, factor in detector.build_pyramid(img, 0.75, WINDOW):
        for y in range(0, level.shape[0] - WINDOW[0] + 1, 8):
            for x in range(0, level.shape[1] - WINDOW[1] + 1, 8):
                patch = level[y:y + WINDOW[0], x:x + WINDOW[1]].astype(np.float64) / 255.0
                box = BBox(int(imaging.round_half_up(x / factor)), int(imaging.round_half_up(y / factor)),
                           int(imaging.round_half_up((x + WINDOW[1]) / factor)) - int(imaging.round_half_up(x / factor)),
                           int(imaging.round_half_up((y + WINDOW[0]) / factor)) - int(imaging.round_half_up(y / factor)))
                expected.append((imaging.clamp_bbox(box, 170, 60), nnet.predict_proba(net, patch[None])[0, 1]))
    assert [c.bbox for c in candidates] == [b for b, _ in expected]
    npt.assert_allclose([c.score for c in candidates], [s for _, s in expected], atol=1e-12)


def test_never_detect_returns_nothing():
    net = constant_net("detector", 0)
    assert detector.detect_plates(net, np.full((128, 256), 120, dtype=np.uint8)) == []


def test_scan_rejects_wrong_network():
    with pytest.raises(nnet.ShapeMismatchError):
        detector.scan(nnet.build_network("recognizer"), np.zeros((64, 192), dtype=np.uint8))


def test_detect_plates_is_deterministic_and_in_bounds():
    img = np.random.default_rng(1).integers(0, 256, size=(80, 200), dtype=np.uint8)
    net = constant_net("detector", 1)
    a = detector.detect_plates(net, img)
    b = detector.detect_plates(net, img)
    assert a == b
    assert a
    for d in a:
        assert d.bbox.x2 <= 200 and d.bbox.y2 <= 80
    scores = [d.score for d in a]
    assert scores == sorted(scores, reverse=True)


# === NMS ===

def test_nms_single_and_identical():
    a = det(0, 0, 10, 10, 0.9)
    assert detector.nms([a]) == [a]
    assert detector.nms([]) == []
    b = det(0, 0, 10, 10, 0.8)
    assert detector.nms([b, a]) == [a]


def test_nms_suppresses_overlap_and_keeps_distant():
    a = det(0, 0, 10, 10, 0.9)
    b = det(1, 1, 10, 10, 0.8)
    c = det(20, 20, 10, 10, 0.7)
    assert detector.nms([c, b, a], 0.3) == [a, c]


def test_nms_ties_prefer_top_left():
    a = det(5, 0, 10, 10, 0.5)
    b = det(0, 0, 10, 10, 0.5)
    assert detector.nms([a, b], 0.3) == [b]


def test_nms_output_properties():
    rng = np.random.default_rng(3)
    cands = [
        det(int(rng.integers(0, 80)), int(rng.integers(0, 40)), int(rng.integers(5, 30)),
            int(rng.integers(5, 20)), float(rng.random()))
        for _ in range(60)
    ]
    kept = detector.nms(cands, 0.3)
    assert all(k in cands for k in kept)
    for i, a in enumerate(kept):
        for b in kept[i + 1:]:
            assert imaging.iou(a.bbox, b.bbox) < 0.3
    # 落とされた候補は、より上位の残った候補と重なっている
    for c in cands:
        if c not in kept:
            assert any(imaging.iou(c.bbox, k.bbox) >= 0.3 for k in kept)


# === 矩形の補正 ===

PLATE = BBox(40, 30, 150, 50)


def plate_scene():
    img = np.full((120, 260), 100, dtype=np.uint8)
    img[PLATE.y:PLATE.y2, PLATE.x:PLATE.x2] = 210
    for x in range(60, 180, 24):
        img[42:68, x:x + 10] = 40
    return img


@pytest.mark.parametrize("box", [BBox(45, 35, 100, 36), BBox(85, 40, 100, 36), BBox(60, 38, 120, 40)])
def test_refine_box_snaps_nested_window_to_plate(box):
    assert detector.refine_box(plate_scene(), box) == PLATE


def test_refine_box_snaps_oversized_window_to_plate():
    assert detector.refine_box(plate_scene(), BBox(30, 25, 180, 60)) == PLATE


def test_refine_box_keeps_window_on_open_background():
    img = plate_scene()
    assert detector.refine_box(img, BBox(200, 90, 50, 20)) == BBox(200, 90, 50, 20)
    uniform = np.full((120, 260), 200, dtype=np.uint8)
    assert detector.refine_box(uniform, BBox(100, 40, 50, 20)) == BBox(100, 40, 50, 20)


def test_refine_detections_merges_windows_on_one_plate():
    dets = [
        det(45, 35, 100, 36, 0.9),
        det(85, 40, 100, 36, 0.8),
        det(60, 38, 120, 40, 0.7),
        det(200, 90, 50, 20, 0.6),
    ]
    out = detector.refine_detections(plate_scene(), dets, 0.3)
    assert out == [PlateDetection(PLATE, 0.9), det(200, 90, 50, 20, 0.6)]


def test_detect_plates_without_refinement_is_nms_of_scan():
    img = plate_scene()
    net = constant_net("detector", 1)
    cfg = DetectorConfig(refine=False)
    assert detector.detect_plates(net, img, cfg) == detector.nms(detector.scan(net, img), 0.3)


# === 学習済みモデル ===

@pytest.mark.slow
def test_trained_detector_finds_plate(trained_bundle):
    hits = 0
    for seed in range(10):
        plate = synthgen.render_plate(synthgen.PlateSpec(), seed)
        sample = synthgen.compose_scene(plate, (256, 384), seed, scale=1.0)
        dets = detector.detect_plates(trained_bundle.detector, sample.scene)
        if dets and imaging.iou(dets[0].bbox, sample.gt_box) >= 0.5:
            hits += 1
    assert hits >= 9
