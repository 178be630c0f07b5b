import os
import struct
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frametok.errors import CorruptionError, FormatError, ValidationError
from frametok.storage import (
    config_from_dict,
    load_config,
    read_tensor,
    write_tensor,
)


class TestTensorFormat:
    def test_one_element_file_size(self, tmp_path):
        path = tmp_path / "one.dft"
        write_tensor(path, np.array([0.0], dtype=np.float32))
        assert path.stat().st_size == 4 + 4 + 1 + 1 + 8 + 4

    def test_round_trip_bit_exact(self, tmp_path):
        t = np.random.default_rng(0).standard_normal((3, 4, 5))
        path = tmp_path / "t.dft"
        write_tensor(path, t)
        back = read_tensor(path)
        assert back.dtype == t.dtype
        assert back.shape == t.shape
        assert back.tobytes() == t.tobytes()

    @settings(max_examples=60, deadline=None)
    @given(
        seed=st.integers(0, 2**32 - 1),
        dims=st.lists(st.integers(1, 5), min_size=1, max_size=4),
        dtype=st.sampled_from([np.float32, np.float64]),
    )
    def test_round_trip_property(self, seed, dims, dtype):
        t = np.random.default_rng(seed).standard_normal(dims).astype(dtype)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "p.dft")
            write_tensor(path, t)
            back = read_tensor(path)
        assert back.dtype == t.dtype and back.shape == t.shape
        assert back.tobytes() == t.tobytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.dft"
        write_tensor(path, np.zeros(2, dtype=np.float32))
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            read_tensor(path)

    def test_bad_version_and_dtype(self, tmp_path):
        path = tmp_path / "bad.dft"
        write_tensor(path, np.zeros(2, dtype=np.float32))
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 9)
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            read_tensor(path)
        raw[4:8] = struct.pack("<I", 1)
        raw[8] = 7
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            read_tensor(path)

    def test_corrupted_dims(self, tmp_path):
        path = tmp_path / "bad.dft"
        write_tensor(path, np.zeros(4, dtype=np.float32))
        raw = bytearray(path.read_bytes())
        raw[10:18] = struct.pack("<Q", 99)  # claim 99 elements
        path.write_bytes(bytes(raw))
        with pytest.raises(CorruptionError):
            read_tensor(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "bad.dft"
        write_tensor(path, np.zeros(4, dtype=np.float32))
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(CorruptionError):
            read_tensor(path)

    def test_rejects_bad_dtype_and_ndim(self, tmp_path):
        with pytest.raises(ValidationError):
            write_tensor(tmp_path / "x.dft", np.zeros(3, dtype=np.int32))
        with pytest.raises(ValidationError):
            write_tensor(tmp_path / "x.dft", np.zeros((1, 1, 1, 1, 1)))


class TestRunConfig:
    def test_empty_gives_documented_defaults(self):
        cfg = config_from_dict({})
        assert cfg.d == 1408
        assert cfg.d_prime == 1408
        assert cfg.P == 16
        assert cfg.L == 25
        assert cfg.K == 20
        assert cfg.J == 2
        assert cfg.layer_sizes == [16, 6]
        assert cfg.spatial_total == 22
        assert cfg.sigma == 0.05
        assert cfg.n_samples == 500
        assert cfg.r_d_threshold == 0.6
        assert cfg.r_a_threshold == 0.4

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"layer_sizes": [16, 6]}')
        cfg = load_config(path)
        assert cfg.spatial_total == 22

    def test_k_exceeding_l_rejected(self):
        with pytest.raises(ValidationError, match="K"):
            config_from_dict({"K": 30, "L": 25})

    def test_bad_layer_sizes(self):
        with pytest.raises(ValidationError, match="layer_sizes"):
            config_from_dict({"layer_sizes": [4, 8]})
        with pytest.raises(ValidationError, match="layer_sizes"):
            config_from_dict({"layer_sizes": [4, 0]})

    def test_j_layer_mismatch(self):
        with pytest.raises(ValidationError, match="J"):
            config_from_dict({"J": 3})

    def test_nonpositive_values_listed(self):
        with pytest.raises(ValidationError, match="sigma"):
            config_from_dict({"sigma": 0.0})
        with pytest.raises(ValidationError, match="n_samples"):
            config_from_dict({"n_samples": 0})
        with pytest.raises(ValidationError, match="r_d_threshold"):
            config_from_dict({"r_d_threshold": 1.5})

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValidationError, match="typo"):
            config_from_dict({"typo": 1})

    def test_layer_sizes_fix_j(self):
        cfg = config_from_dict({"layer_sizes": [8, 4, 2]})
        assert cfg.J == 3
