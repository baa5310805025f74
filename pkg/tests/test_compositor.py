import threading

import numpy as np
import pytest

from detdistill.boxes import BBox
from detdistill.compositor import (ImageCache, bilinear_resize, crop,
                                   decode_png, encode_png, extract_patch,
                                   load_image, paste, prepare_background,
                                   render_canvas, save_png)
from detdistill.errors import DataError
from detdistill.placement import Placement, ObjectCandidate


def gray(values) -> np.ndarray:
    plane = np.asarray(values, dtype=np.uint8)
    return np.repeat(plane[:, :, None], 3, axis=2)


def test_resize_identity_is_exact():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(13, 9, 3), dtype=np.uint8)
    assert np.array_equal(bilinear_resize(img, 9, 13), img)


def test_resize_2x2_to_4x4_oracle():
    # Hand-derived from half-pixel-center sampling of [[0,100],[200,60]].
    src = gray([[0, 100], [200, 60]])
    expected = gray([
        [0, 25, 75, 100],
        [50, 60, 80, 90],
        [150, 130, 90, 70],
        [200, 165, 95, 60],
    ])
    assert np.array_equal(bilinear_resize(src, 4, 4), expected)


def test_resize_2x2_to_1x1_is_mean():
    src = gray([[0, 100], [200, 60]])
    assert np.array_equal(bilinear_resize(src, 1, 1), gray([[90]]))


def test_resize_rejects_empty_target():
    with pytest.raises(ValueError):
        bilinear_resize(gray([[1]]), 0, 4)


def test_resize_constant_image_stays_constant():
    img = np.full((7, 5, 3), 77, dtype=np.uint8)
    out = bilinear_resize(img, 31, 17)
    assert out.shape == (17, 31, 3)
    assert np.all(out == 77)


def test_prepare_background_dimensions():
    img = np.full((25, 25, 3), 10, dtype=np.uint8)
    bg = prepare_background(img, 50, 40)
    assert bg.shape == (40, 50, 3)
    assert np.all(bg == 10)


def test_crop_values_and_bounds():
    img = gray(np.arange(100).reshape(10, 10))
    region = crop(img, BBox(2, 3, 4, 5))
    assert region.shape == (5, 4, 3)
    assert region[0, 0, 0] == 32
    with pytest.raises(ValueError):
        crop(img, BBox(8, 8, 5, 5))


def test_paste_in_place_and_bounds():
    canvas = np.zeros((10, 10, 3), dtype=np.uint8)
    patch = np.full((3, 4, 3), 9, dtype=np.uint8)
    paste(canvas, patch, 2, 5)
    assert np.all(canvas[5:8, 2:6] == 9)
    assert canvas[4, 2, 0] == 0 and canvas[5, 1, 0] == 0
    with pytest.raises(ValueError):
        paste(canvas, patch, 8, 0)
    with pytest.raises(ValueError):
        paste(canvas, patch, -1, 0)


def test_extract_patch_scale_one_is_crop():
    img = gray(np.arange(64).reshape(8, 8))
    patch = extract_patch(img, BBox(1, 2, 4, 3), 1.0)
    assert np.array_equal(patch, img[2:5, 1:5])


def test_extract_patch_downscales_to_agreed_dims():
    img = gray(np.arange(0, 240, 10).reshape(4, 6))
    patch = extract_patch(img, BBox(0, 0, 6, 4), 0.5)
    assert patch.shape == (2, 3, 3)


def test_png_round_trip_exact():
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, size=(20, 30, 3), dtype=np.uint8)
    assert np.array_equal(decode_png(encode_png(img)), img)


def test_png_encoding_deterministic():
    rng = np.random.default_rng(2)
    img = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    assert encode_png(img) == encode_png(img.copy())


def test_save_and_load(tmp_path):
    img = np.full((5, 6, 3), 42, dtype=np.uint8)
    path = tmp_path / "deep" / "dir" / "img.png"
    save_png(img, path)
    assert np.array_equal(load_image(path), img)


def test_load_errors(tmp_path):
    with pytest.raises(DataError):
        load_image(tmp_path / "missing.png")
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not a png at all")
    with pytest.raises(DataError):
        load_image(bad)


def test_decode_garbage_raises():
    with pytest.raises(DataError):
        decode_png(b"\x89PNG but trailing garbage")


def test_render_canvas_pastes_in_order():
    sources = {
        1: np.full((25, 25, 3), 10, dtype=np.uint8),  # background
        2: gray(np.arange(100).reshape(10, 10)),
    }
    candidate = ObjectCandidate(1, 2, 1, tight=BBox(3, 4, 4, 3),
                                extended=BBox(2, 3, 8, 6))
    placement = Placement(candidate=candidate, scale=1.0, x=7, y=9,
                          extended=BBox(7, 9, 8, 6), tight=BBox(8, 10, 4, 3))
    canvas = render_canvas(50, 50, sources[1], [placement], sources.__getitem__)
    assert canvas.shape == (50, 50, 3)
    assert np.array_equal(canvas[9:15, 7:15], sources[2][3:9, 2:10])
    assert canvas[8, 7, 0] == 10  # background above the patch untouched


def test_render_later_placements_overdraw():
    bg = np.zeros((20, 20, 3), dtype=np.uint8)
    a = np.full((20, 20, 3), 100, dtype=np.uint8)
    b = np.full((20, 20, 3), 200, dtype=np.uint8)
    sources = {0: bg, 1: a, 2: b}

    def mk(img_id, x):
        cand = ObjectCandidate(img_id, img_id, 1, tight=BBox(0, 0, 6, 6),
                               extended=BBox(0, 0, 6, 6))
        return Placement(cand, 1.0, x, 0, BBox(x, 0, 6, 6), BBox(x, 0, 6, 6))

    canvas = render_canvas(20, 20, bg, [mk(1, 0), mk(2, 3)], sources.__getitem__)
    assert canvas[0, 2, 0] == 100
    assert canvas[0, 3, 0] == 200  # second paste wins in the overlap


def test_cache_loads_once_and_evicts():
    calls = []

    def loader(key):
        def inner():
            calls.append(key)
            return np.full((10, 10, 3), key, dtype=np.uint8)
        return inner

    cache = ImageCache(max_bytes=2 * 10 * 10 * 3)
    cache.get(1, loader(1))
    cache.get(1, loader(1))
    assert calls == [1]
    cache.get(2, loader(2))
    cache.get(3, loader(3))  # evicts key 1 (LRU, over budget)
    assert len(cache) == 2
    cache.get(1, loader(1))
    assert calls == [1, 2, 3, 1]


def test_cache_thread_safe():
    cache = ImageCache()
    results = []

    def worker():
        value = cache.get("k", lambda: np.ones((50, 50, 3), dtype=np.uint8))
        results.append(value)

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(v is results[0] for v in results)
