import json
import struct

import numpy as np
import pytest

from cascade_lowrank import lrmx


def test_header_layout():
    data = lrmx.dumps(np.array([[1.0, 2.0, 3.0]]))
    assert data[:4] == b"LRMX"
    assert struct.unpack("<HII", data[4:14]) == (1, 1, 3)
    assert len(data) == 14 + 3 * 8
    assert struct.unpack("<3d", data[14:]) == (1.0, 2.0, 3.0)


def test_roundtrip_bit_exact(tmp_path):
    M = np.random.default_rng(0).standard_normal((5, 7))
    M[0, 0] = -0.0
    M[1, 1] = np.inf
    lrmx.save(tmp_path / "m.lrmx", M)
    back = lrmx.load(tmp_path / "m.lrmx")
    assert back.tobytes() == M.tobytes()
    assert back.flags.writeable


def test_b64_roundtrip():
    M = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(lrmx.from_b64(lrmx.to_b64(M)), M)


def test_empty_matrix():
    assert lrmx.loads(lrmx.dumps(np.zeros((0, 3)))).shape == (0, 3)


@pytest.mark.parametrize(
    "blob",
    [
        b"LRM",
        b"XXXX" + struct.pack("<HII", 1, 1, 1) + b"\0" * 8,
        b"LRMX" + struct.pack("<HII", 2, 1, 1) + b"\0" * 8,
        b"LRMX" + struct.pack("<HII", 1, 2, 2) + b"\0" * 8,
    ],
)
def test_malformed(blob):
    with pytest.raises(lrmx.FormatError):
        lrmx.loads(blob)


def test_rejects_non_matrix():
    with pytest.raises(lrmx.FormatError):
        lrmx.dumps(np.zeros((2, 2, 2)))


def test_model_manifest_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    W = rng.standard_normal((4, 4))
    ad = [(rng.standard_normal((4, 2)), rng.standard_normal((2, 4)))]
    lrmx.write_model_manifest(tmp_path / "model.json", W, ad, "relu")
    W2, ad2, act = lrmx.load_model_manifest(tmp_path / "model.json")
    assert act == "relu"
    np.testing.assert_array_equal(W2, W)
    np.testing.assert_array_equal(ad2[0][1], ad[0][1])
    doc = json.loads((tmp_path / "model.json").read_text())
    assert doc["adapters"][0] == {"A": "model_A1.lrmx", "B": "model_B1.lrmx"}


def test_model_manifest_missing_field(tmp_path):
    (tmp_path / "m.json").write_text('{"adapters": []}')
    with pytest.raises(lrmx.FormatError):
        lrmx.load_model_manifest(tmp_path / "m.json")


def test_bad_json(tmp_path):
    (tmp_path / "m.json").write_text("{nope")
    with pytest.raises(lrmx.FormatError):
        lrmx.read_manifest(tmp_path / "m.json")


@pytest.mark.parametrize("names", [("A", "B"), ("A", "B", "C")])
def test_factor_bundle_roundtrip(tmp_path, names):
    rng = np.random.default_rng(2)
    factors = [tuple(rng.standard_normal((3, 2)) for _ in names) for _ in range(3)]
    lrmx.write_factor_bundle(tmp_path / "b.json", factors, names)
    back = lrmx.load_factor_bundle(tmp_path / "b.json", names)
    assert len(back) == 3
    for f, g in zip(factors, back):
        for x, y in zip(f, g):
            np.testing.assert_array_equal(x, y)


def test_factor_bundle_missing_c(tmp_path):
    rng = np.random.default_rng(3)
    lrmx.write_factor_bundle(tmp_path / "b.json", [(rng.standard_normal((2, 1)),) * 2], ("A", "B"))
    with pytest.raises(lrmx.FormatError):
        lrmx.load_factor_bundle(tmp_path / "b.json", ("A", "B", "C"))
