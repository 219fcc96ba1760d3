import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from papilledema.io import load_image, parse_manifest, save_image, to_bytes, write_manifest
from papilledema.types import (BoundingBox, Circle, DatasetManifest, ImageError, Label,
                               ManifestRecord, check_fundus)


def test_load_maps_bytes_by_division(tmp_path):
    arr = np.array([[[255, 0, 0], [0, 128, 0]]], dtype=np.uint8)
    Image.fromarray(arr, "RGB").save(tmp_path / "a.png")
    img = load_image(tmp_path / "a.png")
    assert img.shape == (1, 2, 3)
    assert img[0, :, 0].tolist() == [1.0, 0.0]
    assert img[0, :, 1].tolist() == [0.0, 128 / 255]


def test_load_rejects_non_rgb(tmp_path):
    Image.fromarray(np.zeros((4, 4), np.uint8), "L").save(tmp_path / "g.png")
    with pytest.raises(ImageError, match="RGB"):
        load_image(tmp_path / "g.png")


def test_load_rejects_unreadable(tmp_path):
    (tmp_path / "x.png").write_bytes(b"not a png")
    with pytest.raises(ImageError):
        load_image(tmp_path / "x.png")
    with pytest.raises(ImageError):
        load_image(tmp_path / "missing.png")


def test_save_quantization(tmp_path):
    for value, byte in ((0.0, 0), (1.0, 255), (0.5, 128)):
        save_image(np.full((2, 3, 3), value), tmp_path / "q.png")
        assert (np.asarray(Image.open(tmp_path / "q.png")) == byte).all()


def test_save_rejects_out_of_range(tmp_path):
    with pytest.raises(ImageError):
        save_image(np.full((2, 2, 3), 1.5), tmp_path / "bad.png")


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (5, 7, 3), elements=st.floats(0.0, 1.0)))
def test_round_trip_error_at_most_one_level(tmp_path_factory, img):
    path = tmp_path_factory.mktemp("rt") / "x.png"
    save_image(img, path)
    back = load_image(path)
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12
    save_image(back, path)
    assert np.array_equal(load_image(path), back)


def test_to_bytes_round_half_up():
    assert to_bytes(np.array([127.5 / 255, 0.5 / 255, 1.0])).tolist() == [128, 1, 255]


def test_generator_output_round_trip(tmp_path, default_images):
    img, _ = default_images[0]
    save_image(img, tmp_path / "s.png")
    assert np.abs(load_image(tmp_path / "s.png") - img).max() <= 1 / 255


def test_check_fundus_contract():
    check_fundus(np.zeros((2, 2, 3)))
    for bad in (np.zeros((2, 2)), np.zeros((0, 2, 3)), np.full((2, 2, 3), -0.1)):
        with pytest.raises(ImageError):
            check_fundus(bad)


def test_circle_and_box_invariants():
    with pytest.raises(ValueError):
        Circle(0, 0, 0)
    with pytest.raises(ValueError):
        BoundingBox(3, 0, 3, 5)
    b = BoundingBox(2, 4, 6, 10)
    assert (b.width, b.height) == (4, 6)
    assert b.center == (3.5, 6.5)
    assert b.within(6, 10) and not b.within(5, 10)


def _write(tmp_path, records):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"records": records}))
    return p


def test_parse_manifest_labels(tmp_path):
    p = _write(tmp_path, [{"image": "a.png", "subject": "s1", "label": "papilledema"},
                          {"image": "b.png", "subject": "s2", "label": "pseudopapilledema"}])
    m = parse_manifest(p)
    assert m.labels.tolist() == [1, 0]
    assert m.records[0].image_path == tmp_path / "a.png"


@pytest.mark.parametrize("text,match", [
    ('{"records": [{"image": "a", "subject": "s", "label": "healthy"}]}', "unknown label"),
    ('{"records": []}', "no records"),
    ('{"records": [', "malformed"),
    ('{"records": [{"image": "a", "label": "papilledema"}]}', "missing field"),
])
def test_parse_manifest_errors(tmp_path, text, match):
    p = tmp_path / "m.json"
    p.write_text(text)
    with pytest.raises(ValueError, match=match):
        parse_manifest(p)


def test_manifest_round_trip(tmp_path):
    recs = [ManifestRecord(tmp_path / "img" / f"{i}.png", f"S{i // 2}", Label(int(i < 2)))
            for i in range(4)]
    m = DatasetManifest(recs)
    write_manifest(m, tmp_path / "m.json")
    back = parse_manifest(tmp_path / "m.json")
    assert [(r.image_path, r.subject_id, r.label) for r in back] == \
        [(r.image_path, r.subject_id, r.label) for r in m]


def test_manifest_subject_helpers():
    m = DatasetManifest([ManifestRecord("a", "x", Label(1)), ManifestRecord("b", "y", Label(0)),
                         ManifestRecord("c", "x", Label(1))])
    assert m.subjects == ["x", "y"]
    assert m.subject_labels() == {"x": Label(1), "y": Label(0)}
    assert len(m.select_subjects(["x"])) == 2
    mixed = DatasetManifest([ManifestRecord("a", "x", Label(1)), ManifestRecord("b", "x", Label(0))])
    with pytest.raises(ValueError, match="both labels"):
        mixed.subject_labels()
    with pytest.raises(ValueError):
        ManifestRecord("a", "", Label(0))
