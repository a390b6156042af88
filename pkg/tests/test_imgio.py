import json

import numpy as np
import pytest

from voidd.errors import FormatError, ValidationError
from voidd.imgio import GrayImage, read_manifest, read_pgm, write_pgm


def test_minimal_pgm(tmp_path):
    p = tmp_path / "one.pgm"
    p.write_bytes(b"P5\n1 1\n255\n\x00")
    img = read_pgm(p)
    assert (img.width, img.height, img.bit_depth) == (1, 1, 8)
    assert img.pixels[0, 0] == 0


def test_roundtrip_8bit(tmp_path):
    rng = np.random.default_rng(0)
    img = GrayImage(pixels=rng.integers(0, 256, (13, 7)).astype(np.uint8))
    path = tmp_path / "a.pgm"
    write_pgm(img, path)
    back = read_pgm(path)
    np.testing.assert_array_equal(back.pixels, img.pixels)
    assert back.bit_depth == 8


def test_roundtrip_16bit(tmp_path):
    rng = np.random.default_rng(1)
    img = GrayImage(pixels=rng.integers(0, 65536, (5, 9)).astype(np.uint16))
    path = tmp_path / "b.pgm"
    write_pgm(img, path)
    back = read_pgm(path)
    np.testing.assert_array_equal(back.pixels, img.pixels)
    assert back.bit_depth == 16


def test_16bit_payload_is_big_endian(tmp_path):
    img = GrayImage(pixels=np.array([[0x0102]], dtype=np.uint16))
    path = tmp_path / "be.pgm"
    write_pgm(img, path)
    assert path.read_bytes().endswith(b"\x01\x02")


def test_comments_in_header(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# a comment\n2 1\n255\n\x05\x06")
    img = read_pgm(p)
    np.testing.assert_array_equal(img.pixels, [[5, 6]])


def test_ascii_variant_rejected(tmp_path):
    p = tmp_path / "p2.pgm"
    p.write_bytes(b"P2\n1 1\n255\n0\n")
    with pytest.raises(FormatError):
        read_pgm(p)


def test_truncated_payload_reports_offset(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n4 4\n255\n\x00\x00")
    with pytest.raises(FormatError) as e:
        read_pgm(p)
    assert e.value.offset is not None


def test_unsupported_maxval(tmp_path):
    p = tmp_path / "m.pgm"
    p.write_bytes(b"P5\n1 1\n100\n\x00")
    with pytest.raises(FormatError):
        read_pgm(p)


def _write_frames(tmp_path, names, shape=(4, 4)):
    for n in names:
        write_pgm(GrayImage(pixels=np.zeros(shape, dtype=np.uint8)), tmp_path / n)


def _manifest_doc(cycle=3, nav=2):
    return {
        "pixel_spacing_mm": 0.2,
        "frame_interval_s": 0.1,
        "cycle_length": cycle,
        "reference_frames": [{"path": f"ref_{i}.pgm", "phase": i} for i in range(cycle)],
        "navigation_frames": [{"path": f"nav_{i}.pgm"} for i in range(nav)],
    }


class TestManifest:
    def test_valid_roundtrip(self, tmp_path):
        doc = _manifest_doc()
        _write_frames(tmp_path, [f["path"] for f in doc["reference_frames"]])
        _write_frames(tmp_path, [f["path"] for f in doc["navigation_frames"]])
        mp = tmp_path / "manifest.json"
        mp.write_text(json.dumps(doc))
        m = read_manifest(mp)
        assert m.cycle_length == 3
        assert [f.phase for f in m.reference_frames] == [0, 1, 2]
        # navigation phases default to index mod cycle_length
        assert [f.phase for f in m.navigation_frames] == [0, 1]

    def test_twelve_phase_cycle(self, tmp_path):
        doc = _manifest_doc(cycle=12, nav=0)
        _write_frames(tmp_path, [f["path"] for f in doc["reference_frames"]])
        mp = tmp_path / "manifest.json"
        mp.write_text(json.dumps(doc))
        assert read_manifest(mp).cycle_length == 12

    def test_duplicate_phase_rejected(self, tmp_path):
        doc = _manifest_doc()
        doc["reference_frames"][2]["phase"] = 1
        _write_frames(tmp_path, [f["path"] for f in doc["reference_frames"]])
        mp = tmp_path / "m.json"
        mp.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="phase"):
            read_manifest(mp)

    def test_missing_phase_rejected(self, tmp_path):
        doc = _manifest_doc()
        doc["reference_frames"] = doc["reference_frames"][:2]
        _write_frames(tmp_path, [f["path"] for f in doc["reference_frames"]])
        mp = tmp_path / "m.json"
        mp.write_text(json.dumps(doc))
        with pytest.raises(ValidationError):
            read_manifest(mp)

    def test_zero_spacing_rejected(self, tmp_path):
        doc = _manifest_doc()
        doc["pixel_spacing_mm"] = 0
        mp = tmp_path / "m.json"
        mp.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="pixel_spacing_mm"):
            read_manifest(mp)

    def test_size_mismatch_rejected(self, tmp_path):
        doc = _manifest_doc(nav=1)
        _write_frames(tmp_path, [f["path"] for f in doc["reference_frames"]])
        _write_frames(tmp_path, ["nav_0.pgm"], shape=(5, 5))
        mp = tmp_path / "m.json"
        mp.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="size"):
            read_manifest(mp)

    def test_missing_file_rejected(self, tmp_path):
        doc = _manifest_doc(nav=0)
        mp = tmp_path / "m.json"
        mp.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="not found"):
            read_manifest(mp)

    def test_randomized_corruptions(self, tmp_path):
        # valid manifests always accepted; single-field corruptions rejected
        rng = np.random.default_rng(7)
        for trial in range(20):
            d = tmp_path / f"t{trial}"
            d.mkdir()
            cycle = int(rng.integers(2, 6))
            doc = _manifest_doc(cycle=cycle, nav=int(rng.integers(0, 3)))
            _write_frames(d, [f["path"] for f in doc["reference_frames"]])
            _write_frames(d, [f["path"] for f in doc["navigation_frames"]])
            mp = d / "m.json"
            mp.write_text(json.dumps(doc))
            read_manifest(mp)  # must not raise

            corrupt = rng.choice(["spacing", "cycle", "dup", "extra"])
            if corrupt == "spacing":
                doc["pixel_spacing_mm"] = -1.0
            elif corrupt == "cycle":
                doc["cycle_length"] = 1
            elif corrupt == "dup":
                doc["reference_frames"][0]["phase"] = doc["reference_frames"][-1]["phase"]
            else:
                doc["unexpected_key"] = 1
            mp.write_text(json.dumps(doc))
            with pytest.raises(ValidationError):
                read_manifest(mp)
