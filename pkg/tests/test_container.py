import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from bipde import container

MAGIC = container.DATASET_MAGIC


def test_round_trip_exact(rng):
    arrays = {"a": rng.normal(size=(3, 4)), "b": np.arange(5.0), "empty": np.zeros((0, 2))}
    blob = container.dumps(MAGIC, arrays, {"k": [1, 2]})
    back, meta = container.loads(blob, MAGIC)
    assert meta == {"k": [1, 2]}
    for name, arr in arrays.items():
        np.testing.assert_array_equal(back[name], arr)
        assert back[name].shape == arr.shape


def test_wrong_magic():
    blob = container.dumps(MAGIC, {}, {})
    with pytest.raises(container.ContainerError, match="magic"):
        container.loads(blob, container.CHECKPOINT_MAGIC)


def test_version_mismatch():
    blob = bytearray(container.dumps(MAGIC, {}, {}))
    blob[8:12] = struct.pack("<I", container.FORMAT_VERSION + 1)
    with pytest.raises(container.ContainerError, match="version"):
        container.loads(bytes(blob), MAGIC)


def test_truncated_and_trailing():
    blob = container.dumps(MAGIC, {"x": np.ones(4)}, {})
    with pytest.raises(container.ContainerError, match="truncated"):
        container.loads(blob[:-3], MAGIC)
    with pytest.raises(container.ContainerError, match="trailing"):
        container.loads(blob + b"\0", MAGIC)


def test_corrupt_header():
    blob = bytearray(container.dumps(MAGIC, {}, {"a": 1}))
    blob[16] = 0xFF
    with pytest.raises(container.ContainerError, match="header"):
        container.loads(bytes(blob), MAGIC)


def test_file_round_trip(tmp_path):
    path = container.write(tmp_path / "sub" / "d.bin", MAGIC, {"x": np.eye(2)}, {})
    arrays, _ = container.read(path, MAGIC)
    np.testing.assert_array_equal(arrays["x"], np.eye(2))


@given(arrays(np.float64, array_shapes(max_dims=3, max_side=4),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_property_round_trip_bit_exact(a):
    back, _ = container.loads(container.dumps(MAGIC, {"a": a}, {}), MAGIC)
    assert back["a"].tobytes() == np.ascontiguousarray(a).tobytes()
