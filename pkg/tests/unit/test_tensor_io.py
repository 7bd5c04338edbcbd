"""Unit tests for the named-tensor binary container."""

from __future__ import annotations

import struct
import zlib

import numpy as np
import pytest

from nioperator.errors import (
    ChecksumMismatchError,
    MagicMismatchError,
    NonFiniteTensorError,
    TensorFileError,
    TruncatedFileError,
    UsageError,
    VersionMismatchError,
)
from nioperator.tensor import Tensor
from nioperator.tensor_io import decode_tensors, encode_tensors, load_tensors, save_tensors, tensor_io


pytestmark = pytest.mark.unit


def _random_map(rng: np.random.Generator) -> dict[str, np.ndarray]:
    tensors = {}
    for i in range(int(rng.integers(0, 6))):
        rank = int(rng.integers(0, 4))
        shape = tuple(int(n) for n in rng.integers(0, 5, size=rank))
        scale = 10.0 ** int(rng.integers(-5, 6))
        tensors[f"t{i}.{'é' * (i % 2)}w"] = np.asarray(rng.normal(scale=scale, size=shape), dtype=np.float64)
    return tensors


@pytest.fixture
def sample_bytes() -> bytes:
    return encode_tensors({"a": np.arange(6.0).reshape(2, 3), "b": np.array(3.5)})


class TestRoundtrip:
    def test_hundred_random_maps(self, tmp_path):
        rng = np.random.default_rng(2024)
        for trial in range(100):
            tensors = _random_map(rng)
            path = tmp_path / f"map{trial}.niot"
            tensor_io(path, "save", tensors)
            loaded = tensor_io(path, "load")
            assert list(loaded) == list(tensors)
            for name, array in tensors.items():
                assert loaded[name].shape == array.shape
                assert loaded[name].tobytes() == array.tobytes()

    def test_empty_map(self, tmp_path):
        path = save_tensors(tmp_path / "empty.niot", {})
        assert path.stat().st_size == 4 + 4 + 4 + 4
        assert load_tensors(path) == {}

    def test_accepts_tensors(self, tmp_path):
        path = save_tensors(tmp_path / "t.niot", {"w": Tensor([[1.0, 2.0]])})
        np.testing.assert_array_equal(load_tensors(path)["w"], [[1.0, 2.0]])

    def test_layout_is_little_endian(self):
        data = encode_tensors({"x": np.array([1.0])})
        assert data[:4] == b"NIOT"
        assert struct.unpack_from("<II", data, 4) == (1, 1)
        assert struct.unpack_from("<H", data, 12) == (1,)
        assert data[14:15] == b"x"
        assert struct.unpack_from("<BQ", data, 15) == (1, 1)
        assert struct.unpack_from("<d", data, 24) == (1.0,)
        assert struct.unpack_from("<I", data, 32) == (zlib.crc32(data[:32]),)


class TestCorruption:
    """Each failure mode raises its own TensorFileError subclass."""

    def test_bad_magic(self, sample_bytes):
        with pytest.raises(MagicMismatchError):
            decode_tensors(b"NIOX" + sample_bytes[4:])

    def test_bad_version(self, sample_bytes):
        data = sample_bytes[:4] + struct.pack("<I", 2) + sample_bytes[8:]
        with pytest.raises(VersionMismatchError):
            decode_tensors(data)

    @pytest.mark.parametrize("keep", [2, 10, 20, -9])
    def test_truncated(self, sample_bytes, keep):
        with pytest.raises(TruncatedFileError):
            decode_tensors(sample_bytes[:keep])

    def test_flipped_payload_bit(self, sample_bytes):
        data = bytearray(sample_bytes)
        data[-12] ^= 0x01
        with pytest.raises(ChecksumMismatchError):
            decode_tensors(bytes(data))

    def test_flipped_extent_high_byte(self, sample_bytes):
        # first extent of "a" occupies bytes 16..24
        data = bytearray(sample_bytes)
        data[23] ^= 0x01
        with pytest.raises(ChecksumMismatchError):
            decode_tensors(bytes(data))

    def test_flipped_rank_bit(self, sample_bytes):
        data = bytearray(sample_bytes)
        assert data[15] == 2
        data[15] ^= 0x80
        with pytest.raises(ChecksumMismatchError):
            decode_tensors(bytes(data))

    def test_overflowing_extents(self):
        body = struct.pack("<4sII", b"NIOT", 1, 1) + struct.pack("<H", 1) + b"w" + struct.pack("<B2Q", 2, 2**62, 4)
        data = body + struct.pack("<I", zlib.crc32(body))
        with pytest.raises(ChecksumMismatchError):
            decode_tensors(data)

    def test_flipped_name_byte_with_valid_layout(self, sample_bytes):
        data = bytearray(sample_bytes)
        data[14] = 0xFF
        with pytest.raises(ChecksumMismatchError):
            decode_tensors(bytes(data))

    def test_all_errors_share_a_base(self):
        for error in (MagicMismatchError, VersionMismatchError, TruncatedFileError, ChecksumMismatchError):
            assert issubclass(error, TensorFileError)


class TestSaveErrors:
    def test_non_finite_refused(self, tmp_path):
        with pytest.raises(NonFiniteTensorError):
            save_tensors(tmp_path / "bad.niot", {"x": np.array([np.nan])})
        assert not (tmp_path / "bad.niot").exists()

    def test_save_mode_needs_tensors(self, tmp_path):
        with pytest.raises(UsageError):
            tensor_io(tmp_path / "x.niot", "save")

    def test_unknown_mode(self, tmp_path):
        with pytest.raises(UsageError):
            tensor_io(tmp_path / "x.niot", "append")
