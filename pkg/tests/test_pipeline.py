import numpy as np
import pytest

import imaging
import nnet
import pipeline
import recognizer
import synthgen
from conftest import constant_net
from imaging import BBox


def pred(char, x, y, w=12, h=20):
    return recognizer.CharPrediction(
        label=recognizer.char_to_label(char), char=char, confidence=1.0, charness=1.0, segment=BBox(x, y, w, h)
    )


def text_of(preds):
    return "".join(p.char for p in preds)


# === 並べ替え ===

def test_assemble_single_row_sorts_by_x():
    preds = [pred("C", 40, 10), pred("A", 0, 12), pred("2", 80, 9), pred("B", 20, 11), pred("1", 60, 10)]
    assert text_of(pipeline.assemble_string(preds)) == "ABC12"


def test_assemble_two_rows_top_first():
    preds = [
        pred("4", 0, 40), pred("B", 20, 10), pred("6", 40, 40),
        pred("A", 0, 10), pred("5", 20, 40), pred("C", 40, 10),
    ]
    assert text_of(pipeline.assemble_string(preds)) == "ABC456"


def test_assemble_empty():
    assert pipeline.assemble_string([]) == []


def test_assemble_is_a_permutation():
    rng = np.random.default_rng(0)
    for _ in range(20):
        preds = [pred("A", int(rng.integers(0, 150)), int(rng.integers(0, 40))) for _ in range(rng.integers(1, 9))]
        out = pipeline.assemble_string(preds)
        assert sorted(map(id, out)) == sorted(map(id, preds))


def test_reading_length_must_match_chars():
    with pytest.raises(ValueError):
        pipeline.PlateReading(detection=None, text="AB", chars=[pred("A", 0, 0)])


# === プレート単位 ===

def test_read_plate_blank(always_detect_bundle):
    reading = pipeline.read_plate(always_detect_bundle, np.full((64, 192), 200, dtype=np.uint8))
    assert reading.text == ""
    assert reading.chars == []


def test_read_plate_uses_every_accepted_segment(always_detect_bundle):
    plate = synthgen.render_plate(synthgen.PlateSpec(), 0, text="ABC123").image
    reading = pipeline.read_plate(always_detect_bundle, plate)
    assert reading.text == "AAAAAA"
    xs = [c.segment.bbox.x for c in reading.chars]
    assert xs == sorted(xs)


def test_read_plate_with_rejecting_filter(always_detect_bundle):
    models = pipeline.ModelBundle(
        detector=always_detect_bundle.detector,
        filter=constant_net("filter", 0),
        recognizer=always_detect_bundle.recognizer,
    )
    plate = synthgen.render_plate(synthgen.PlateSpec(), 0, text="ABC123").image
    assert pipeline.read_plate(models, plate).text == ""


# === シーン単位 ===

def scene(seed):
    plate = synthgen.render_plate(synthgen.PlateSpec(), seed)
    return synthgen.compose_scene(plate, (128, 256), seed, scale=0.75).scene


def test_process_image_never_detect(never_detect_bundle):
    assert pipeline.process_image(never_detect_bundle, scene(0)) == []


def test_process_image_reads_every_detection(always_detect_bundle):
    img = scene(1)
    readings = pipeline.process_image(always_detect_bundle, img)
    dets = pipeline.detector.detect_plates(always_detect_bundle.detector, img, always_detect_bundle.detector_config)
    assert [r.detection for r in readings] == dets
    for r in readings:
        assert len(r.text) == len(r.chars)
        assert set(r.text) <= {"A"}


def test_process_image_is_deterministic(always_detect_bundle):
    img = scene(2)
    a = pipeline.process_image(always_detect_bundle, img)
    b = pipeline.process_image(always_detect_bundle, img)
    assert [(r.detection, r.text) for r in a] == [(r.detection, r.text) for r in b]


def test_process_images_keeps_input_order(always_detect_bundle):
    scenes = [scene(s) for s in range(3)] + [np.full((128, 256), 90, dtype=np.uint8)]
    serial = pipeline.process_images(always_detect_bundle, scenes, jobs=1)
    parallel = pipeline.process_images(always_detect_bundle, scenes, jobs=2)
    assert len(parallel) == 4
    assert [[(r.detection, r.text) for r in rs] for rs in serial] == \
        [[(r.detection, r.text) for r in rs] for rs in parallel]


# === モデル ===

def test_bundle_rejects_wrong_role():
    with pytest.raises(nnet.ShapeMismatchError):
        pipeline.ModelBundle(
            detector=constant_net("filter", 1),
            filter=constant_net("filter", 1),
            recognizer=constant_net("recognizer", 10),
        )


def test_load_bundle(model_dir):
    models = pipeline.load_bundle(model_dir)
    assert models.detector.n_classes == 2
    assert models.recognizer.n_classes == 35


def test_load_bundle_missing_file(tmp_path, model_dir):
    with pytest.raises(OSError):
        pipeline.load_bundle({**model_dir, "filter": tmp_path / "missing.alprnet"})


# === 学習済みモデル ===

@pytest.mark.slow
def test_end_to_end_reads_clean_scenes(trained_bundle):
    exact = 0
    for seed in range(10):
        plate = synthgen.render_plate(synthgen.PlateSpec(), seed)
        sample = synthgen.compose_scene(plate, (256, 384), seed, scale=1.0)
        readings = pipeline.process_image(trained_bundle, sample.scene)
        if readings and imaging.iou(readings[0].detection.bbox, sample.gt_box) >= 0.5:
            exact += readings[0].text == sample.gt_text
    assert exact >= 8


@pytest.mark.slow
def test_end_to_end_single_plate_scene(trained_bundle):
    plate = synthgen.render_plate(synthgen.PlateSpec(template="LLDDDD"), 0, text="XY5742")
    sample = synthgen.compose_scene(plate, (256, 384), 0, scale=1.0)
    readings = pipeline.process_image(trained_bundle, sample.scene)
    assert [r.text for r in readings] == ["XY5742"]
    assert imaging.iou(readings[0].detection.bbox, sample.gt_box) >= 0.5


@pytest.mark.slow
@pytest.mark.parametrize("symbol", ["wheelchair", "flag"])
def test_injected_symbol_is_filtered_out(trained_bundle, symbol):
    texts = []
    for seed in range(5):
        plate = synthgen.render_plate(synthgen.PlateSpec(), seed, text="AB12", symbol_at=2, symbol=symbol)
        texts.append(pipeline.read_plate(trained_bundle, plate.image).text)
    assert all(len(t) <= 4 for t in texts)
    assert texts.count("AB12") >= 4
