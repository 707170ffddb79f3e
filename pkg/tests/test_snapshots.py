"""Snapshot container and text formats: exact round trips and strict
header validation."""

import struct

import numpy as np
import pytest

from apndoa import (
    SNAPSHOT_MAGIC,
    SNAPSHOT_VERSION,
    read_snapshots,
    read_snapshots_csv,
    write_snapshots,
    write_snapshots_csv,
)


def batch(m=5, n=17, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))


def test_binary_round_trip_is_bit_exact_in_single_precision(tmp_path):
    z = batch()
    path = tmp_path / "z.apnd"
    write_snapshots(z, path)
    back = read_snapshots(path)
    assert back.dtype == np.complex128
    assert np.array_equal(back, z.astype(np.complex64).astype(np.complex128))


def test_header_fields(tmp_path):
    path = tmp_path / "z.apnd"
    write_snapshots(batch(3, 4), path)
    raw = path.read_bytes()
    magic, version, m, n = struct.unpack_from("<4sIII", raw)
    assert magic == SNAPSHOT_MAGIC
    assert version == SNAPSHOT_VERSION
    assert (m, n) == (3, 4)
    assert len(raw) == 16 + 3 * 4 * 8  # header + complex64 payload


def test_reader_rejects_corruption(tmp_path):
    path = tmp_path / "z.apnd"
    write_snapshots(batch(3, 4), path)
    raw = bytearray(path.read_bytes())

    bad = tmp_path / "bad.apnd"
    bad.write_bytes(b"NOPE" + bytes(raw[4:]))
    with pytest.raises(ValueError, match="magic"):
        read_snapshots(bad)

    wrong_version = bytearray(raw)
    wrong_version[4:8] = struct.pack("<I", 99)
    bad.write_bytes(bytes(wrong_version))
    with pytest.raises(ValueError, match="version"):
        read_snapshots(bad)

    bad.write_bytes(bytes(raw[:-8]))  # truncated payload
    with pytest.raises(ValueError):
        read_snapshots(bad)

    bad.write_bytes(bytes(raw) + b"\x00" * 8)  # trailing bytes
    with pytest.raises(ValueError):
        read_snapshots(bad)

    bad.write_bytes(raw[:10])  # shorter than the header
    with pytest.raises(ValueError):
        read_snapshots(bad)


def test_writer_validates_shape(tmp_path):
    with pytest.raises(ValueError):
        write_snapshots(np.zeros(5, dtype=complex), tmp_path / "x.apnd")


def test_csv_round_trip_is_exact_in_double_precision(tmp_path):
    z = batch(4, 9, seed=1)
    path = tmp_path / "z.csv"
    write_snapshots_csv(z, path)
    back = read_snapshots_csv(path)
    assert np.array_equal(back, z)  # %.17g keeps doubles exactly


def test_csv_layout_is_interleaved(tmp_path):
    z = np.array([[1.5 + 2.5j, -3.0 + 0.25j]])
    path = tmp_path / "z.csv"
    write_snapshots_csv(z, path)
    line = path.read_text().strip()
    assert [float(c) for c in line.split(",")] == [1.5, 2.5, -3.0, 0.25]


def test_csv_reader_rejects_odd_cell_counts(tmp_path):
    path = tmp_path / "z.csv"
    path.write_text("1.0,2.0,3.0\n")
    with pytest.raises(ValueError):
        read_snapshots_csv(path)
