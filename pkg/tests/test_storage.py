"""
Testes do contêiner binário (.spcr) e da persistência de datasets
"""

import struct

import numpy as np
import pytest

from spicer.exceptions import ChecksumError, FileFormatError, VersionError
from spicer.services.acquisition import build_dataset
from spicer.services.storage import (
    DATASET_MAGIC,
    load_dataset,
    load_images,
    read_container,
    save_dataset,
    save_images,
    write_container,
)


@pytest.fixture(scope="module")
def pairs():
    return build_dataset(2, 16, 16, 2, 2, 4, seed=4)


class TestContainer:
    """Testes do formato magic + versão + cabeçalho JSON + payload + CRC64."""

    def test_round_trip_all_dtypes(self, tmp_path):
        arrays = [
            ("c", np.arange(6, dtype=np.complex128).reshape(2, 3) * (1 + 2j)),
            ("c32", np.ones((2,), dtype=np.complex64)),
            ("f", np.linspace(0, 1, 5)),
            ("f32", np.zeros((1, 2), dtype=np.float32)),
        ]
        path = tmp_path / "x.spcr"
        write_container(path, DATASET_MAGIC, {"content": "teste", "n": 1}, arrays)
        header, loaded = read_container(path, DATASET_MAGIC)
        assert header["n"] == 1
        for name, array in arrays:
            assert loaded[name].dtype == array.dtype
            np.testing.assert_array_equal(loaded[name], array)

    def test_bool_stored_as_bytes(self, tmp_path):
        path = tmp_path / "x.spcr"
        write_container(path, DATASET_MAGIC, {}, [("mask", np.array([True, False, True]))])
        _, loaded = read_container(path, DATASET_MAGIC)
        assert loaded["mask"].dtype == np.uint8
        np.testing.assert_array_equal(loaded["mask"].astype(bool), [True, False, True])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.spcr"
        write_container(path, DATASET_MAGIC, {}, [])
        with pytest.raises(FileFormatError):
            read_container(path, b"SPCK")

    def test_unknown_version(self, tmp_path):
        path = tmp_path / "x.spcr"
        write_container(path, DATASET_MAGIC, {}, [("a", np.ones(3))])
        blob = bytearray(path.read_bytes())
        blob[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionError):
            read_container(path, DATASET_MAGIC)

    def test_truncated(self, tmp_path):
        path = tmp_path / "x.spcr"
        write_container(path, DATASET_MAGIC, {}, [("a", np.ones(30))])
        path.write_bytes(path.read_bytes()[:40])
        with pytest.raises(ChecksumError):
            read_container(path, DATASET_MAGIC)

    def test_flipped_header_byte(self, tmp_path):
        path = tmp_path / "x.spcr"
        write_container(path, DATASET_MAGIC, {"content": "abc"}, [("a", np.ones(3))])
        blob = bytearray(path.read_bytes())
        blob[20] ^= 0x01
        path.write_bytes(bytes(blob))
        with pytest.raises(ChecksumError):
            read_container(path, DATASET_MAGIC)

    def test_no_temp_files_left(self, tmp_path):
        write_container(tmp_path / "x.spcr", DATASET_MAGIC, {}, [("a", np.ones(3))])
        assert [p.name for p in tmp_path.iterdir()] == ["x.spcr"]


class TestDatasets:
    """Testes de gravação e leitura de datasets."""

    def test_lossless_round_trip(self, pairs, tmp_path):
        path = tmp_path / "train.spcr"
        save_dataset(pairs, path, seed=4)
        loaded = load_dataset(path)
        assert len(loaded) == len(pairs)
        for a, b in zip(loaded, pairs):
            np.testing.assert_array_equal(a.y.data, b.y.data)
            np.testing.assert_array_equal(a.y_prime.data, b.y_prime.data)
            np.testing.assert_array_equal(a.ground_truth, b.ground_truth)
            np.testing.assert_array_equal(a.true_csm.maps, b.true_csm.maps)
            assert a.y.mask == b.y.mask and a.y_prime.mask == b.y_prime.mask
            assert a.y.noise_sigma == b.y.noise_sigma

    def test_byte_identical_rewrites(self, pairs, tmp_path):
        save_dataset(pairs, tmp_path / "a.spcr", seed=4)
        save_dataset(pairs, tmp_path / "b.spcr", seed=4)
        assert (tmp_path / "a.spcr").read_bytes() == (tmp_path / "b.spcr").read_bytes()

    def test_images_are_not_datasets(self, tmp_path):
        path = tmp_path / "img.spcr"
        save_images({"x": np.ones((4, 4), dtype=complex)}, path, meta={"index": 0})
        arrays, meta = load_images(path)
        assert meta == {"index": 0}
        with pytest.raises(FileFormatError):
            load_dataset(path)
