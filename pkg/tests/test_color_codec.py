import json
from pathlib import Path

import numpy as np
import pytest

from quadstream.color_codec import decode_color, encode_color
from quadstream.core import ColorImage
from quadstream.errors import TruncatedStream, UnknownCodecId

FIXTURES = Path(__file__).parent / "fixtures"


def test_single_pixel_is_id_plus_raw_origins():
    img = ColorImage(np.array([[[7, 0, 255]]], dtype=np.uint8))
    data = encode_color(img)
    assert data == bytes([0, 7, 0, 255])
    assert np.array_equal(decode_color(data, 1, 1).data, img.data)


def test_uniform_image_compresses_to_runs():
    img = ColorImage(np.full((360, 720, 3), 137, dtype=np.uint8))
    data = encode_color(img)
    # id byte + 3 x (origin byte + one maximal zero-run record)
    assert len(data) < 32
    assert np.array_equal(decode_color(data, 720, 360).data, img.data)


def test_random_images_roundtrip():
    rng = np.random.default_rng(31)
    shapes = [(1, 1), (1, 7), (7, 1), (16, 16), (3, 24), (24, 3), (1, 24), (24, 1)]
    shapes += [(int(rng.integers(1, 25)), int(rng.integers(1, 25))) for _ in range(992)]
    for h, w in shapes:
        img = ColorImage(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))
        data = encode_color(img)
        assert np.array_equal(decode_color(data, w, h).data, img.data)


def test_gradient_roundtrip():
    gx, gy = np.meshgrid(np.arange(64, dtype=np.uint8), np.arange(32, dtype=np.uint8))
    img = ColorImage(np.stack([gx, gy, np.full((32, 64), 9, dtype=np.uint8)], axis=2))
    data = encode_color(img)
    assert np.array_equal(decode_color(data, 64, 32).data, img.data)


def test_reserved_codec_id_rejected():
    with pytest.raises(UnknownCodecId):
        decode_color(bytes([1, 0, 0, 0]), 1, 1)


def test_truncated_stream_rejected():
    rng = np.random.default_rng(32)
    img = ColorImage(rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8))
    data = encode_color(img)
    with pytest.raises(TruncatedStream):
        decode_color(data[: len(data) // 2], 8, 8)
    with pytest.raises(TruncatedStream):
        decode_color(b"", 8, 8)


def test_golden_fixture_file():
    meta = json.loads((FIXTURES / "color_golden.json").read_text())
    blob = (FIXTURES / "color_golden.bin").read_bytes()
    img = ColorImage.from_flat(meta["width"], meta["height"], meta["pixels"])
    assert encode_color(img) == blob
    assert np.array_equal(decode_color(blob, meta["width"], meta["height"]).data, img.data)
