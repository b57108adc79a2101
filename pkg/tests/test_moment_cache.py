"""Tests for the binary moment cache and its text export."""

import numpy as np
import pytest

from qgain.errors import CacheFormatError, CacheVersionError
from qgain.tools.moment_cache import MAGIC, MomentCache, MomentKey, cache_roundtrip, resolve_cache_dir
from qgain.tools.order_stats import MomentMethod, build_moment_table


def assert_same_table(a, b):
    assert a.lam == b.lam
    assert a.method == b.method
    assert a.mc_samples == b.mc_samples
    assert a.mc_std_err == b.mc_std_err
    assert a.seed == b.seed
    np.testing.assert_array_equal(a.e1, b.e1)
    if a.e2 is None:
        assert b.e2 is None
    else:
        np.testing.assert_array_equal(a.e2, b.e2)


class TestBinary:
    def test_quadrature_round_trip(self, cache):
        table = build_moment_table(7)
        assert_same_table(cache_roundtrip(table, cache), table)

    def test_monte_carlo_round_trip(self, cache, moments4):
        assert_same_table(cache_roundtrip(moments4, cache), moments4)

    def test_blom_round_trip(self, cache):
        table = build_moment_table(2000, MomentMethod.BLOM)
        assert_same_table(cache_roundtrip(table, cache), table)

    def test_foreign_version(self, cache):
        data = bytearray(MomentCache.encode(build_moment_table(3)))
        assert bytes(data[:4]) == MAGIC
        data[4:6] = (2).to_bytes(2, "little")
        with pytest.raises(CacheVersionError):
            MomentCache.decode(bytes(data))

    def test_bad_magic(self):
        data = bytearray(MomentCache.encode(build_moment_table(3)))
        data[:4] = b"XXXX"
        with pytest.raises(CacheFormatError, match="magic"):
            MomentCache.decode(bytes(data))

    def test_truncated_payload(self):
        data = MomentCache.encode(build_moment_table(3))
        with pytest.raises(CacheFormatError):
            MomentCache.decode(data[:-8])
        with pytest.raises(CacheFormatError):
            MomentCache.decode(data[:10])


class TestTextExport:
    def test_round_trip_is_exact(self, cache, moments4):
        assert_same_table(cache_roundtrip(moments4, cache, text=True), moments4)

    def test_first_moments_only(self, cache):
        table = build_moment_table(5)
        assert_same_table(cache_roundtrip(table, cache, text=True), table)

    def test_header_lines(self, tmp_path, moments4):
        path = MomentCache.write_text(moments4, tmp_path / "m.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "# magic: QGMT"
        assert "# lambda: 4" in lines
        assert len([line for line in lines if not line.startswith("#")]) == 5


class TestKeyedAccess:
    def test_filename(self):
        key = MomentKey(10, MomentMethod.MONTE_CARLO, 2_000_000, 1)
        assert key.filename() == "lambda10_monte_carlo_n2000000_s1.qgmt"
        assert MomentKey(5, MomentMethod.QUADRATURE).filename(".csv") == "lambda5_quadrature_n0_s-1.csv"

    def test_missing_lookup(self, cache):
        assert cache.lookup(MomentKey(3, MomentMethod.QUADRATURE)) is None

    def test_get_or_compute_computes_once(self, cache):
        calls = []

        def compute():
            calls.append(1)
            return build_moment_table(6)

        key = MomentKey(6, MomentMethod.QUADRATURE)
        first = cache.get_or_compute(key, compute)
        second = cache.get_or_compute(key, compute)
        assert len(calls) == 1
        assert_same_table(first, second)
        assert cache.path_for(key).exists()
        assert not cache.path_for(key).with_suffix(".lock").exists()

    def test_key_for_table(self, moments4):
        key = MomentKey.for_table(moments4)
        assert key == MomentKey(4, MomentMethod.MONTE_CARLO, moments4.mc_samples, 1)

    def test_resolve_cache_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("QGAIN_CACHE_DIR", str(tmp_path / "env"))
        assert resolve_cache_dir() == tmp_path / "env"
        assert resolve_cache_dir(tmp_path / "flag") == tmp_path / "flag"
        monkeypatch.delenv("QGAIN_CACHE_DIR")
        assert str(resolve_cache_dir()) == ".qgain_cache"
