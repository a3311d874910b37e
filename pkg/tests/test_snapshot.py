import math
import struct

import numpy as np
import pytest

from nl4s.snapshot import (
    FORMAT_VERSION,
    MAGIC,
    SnapshotError,
    read_csv,
    sha256_file,
    snapshot_load,
    snapshot_save,
    write_series_csv,
)
from nl4s.spectral import GridSpec, PhysicalField

from conftest import random_field


@pytest.fixture
def saved(tmp_path, grid2d, rng):
    f = random_field(grid2d, rng)
    path = snapshot_save(f, tmp_path / "f.nl4s", time=0.25, gamma=1.5, N=8.0)
    return f, path


class TestRoundtrip:
    def test_bit_identical(self, saved):
        f, path = saved
        g, meta = snapshot_load(path, with_meta=True)
        assert g.grid == f.grid
        assert g.values.tobytes() == np.asarray(f.values, dtype=complex).tobytes()
        assert (meta.time, meta.gamma, meta.N) == (0.25, 1.5, 8.0)

    def test_header_layout(self, saved):
        """Header fields sit at fixed little-endian offsets."""
        f, path = saved
        raw = path.read_bytes()
        assert raw[:4] == MAGIC
        assert struct.unpack_from("<III", raw, 4) == (FORMAT_VERSION, 2, 32)
        assert struct.unpack_from("<d", raw, 16)[0] == 6.0
        assert len(raw) == 48 + 16 * 32 * 32
        re0, im0 = struct.unpack_from("<dd", raw, 48)
        assert complex(re0, im0) == f.values.flat[0]

    def test_unset_metadata_is_nan(self, tmp_path, grid1d):
        p = snapshot_save(PhysicalField(grid1d, np.ones(grid1d.n)), tmp_path / "a.nl4s")
        _, meta = snapshot_load(p, with_meta=True)
        assert math.isnan(meta.gamma) and math.isnan(meta.N)

    def test_save_is_deterministic(self, tmp_path, saved):
        f, path = saved
        other = snapshot_save(f, tmp_path / "g.nl4s", time=0.25, gamma=1.5, N=8.0)
        assert sha256_file(other) == sha256_file(path)


class TestCorruption:
    def test_bad_magic(self, saved):
        _, path = saved
        raw = bytearray(path.read_bytes())
        raw[2] = ord("X")
        path.write_bytes(bytes(raw))
        with pytest.raises(SnapshotError, match="offset 2"):
            snapshot_load(path)

    def test_bad_version(self, saved):
        _, path = saved
        raw = bytearray(path.read_bytes())
        struct.pack_into("<I", raw, 4, 99)
        path.write_bytes(bytes(raw))
        with pytest.raises(SnapshotError, match="version 99 at byte offset 4"):
            snapshot_load(path)

    @pytest.mark.parametrize("delta", [-16, -1, 8])
    def test_length_mismatch(self, saved, delta):
        _, path = saved
        raw = path.read_bytes()
        raw = raw[:delta] if delta < 0 else raw + b"\0" * delta
        path.write_bytes(raw)
        with pytest.raises(SnapshotError, match="expected 16432 bytes"):
            snapshot_load(path)

    def test_truncated_header(self, saved):
        _, path = saved
        path.write_bytes(path.read_bytes()[:20])
        with pytest.raises(SnapshotError, match="truncated header"):
            snapshot_load(path)

    def test_non_finite_sample(self, saved):
        _, path = saved
        raw = bytearray(path.read_bytes())
        struct.pack_into("<d", raw, 48 + 16 * 5 + 8, float("nan"))
        path.write_bytes(bytes(raw))
        with pytest.raises(SnapshotError, match="flat index 5 .byte offset 128"):
            snapshot_load(path)


class TestCSV:
    def test_rfc_style(self, tmp_path):
        p = write_series_csv(tmp_path / "s.csv", ["t", "note"], [(0.1, "a,b"), (1 / 3, True)])
        raw = p.read_bytes()
        assert raw.startswith(b"t,note\r\n0.1,\"a,b\"\r\n")
        rows = read_csv(p)
        assert float(rows[1]["t"]) == 1 / 3 and rows[1]["note"] == "True"

    def test_nan_written(self, tmp_path):
        p = write_series_csv(tmp_path / "s.csv", ["x"], [(float("nan"),)])
        assert math.isnan(float(read_csv(p)[0]["x"]))
