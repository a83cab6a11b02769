import os
import stat
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from thermal_cylinder.correlators import CorrelatorGrid
from thermal_cylinder.errors import DimensionError, ManifestError, ParameterError
from thermal_cylinder.io import (HEADER, MAGIC, RunManifest, atomic_write, csv_text, decode_configs,
                                 encode_config, encode_configs, json_text, parse_manifest, read_configs,
                                 read_correlator_csv, read_csv, read_manifest, write_config_csv, write_configs,
                                 write_correlator_csv, write_manifest)
from thermal_cylinder.lattice import LatticeSpec
from thermal_cylinder.montecarlo import MCConfig
from thermal_cylinder.spectral import ModelParams, Polynomial


def manifest(**mc):
    lat = LatticeSpec(8, 4, 0.25, 0.5)
    model = ModelParams(1.0, lat.beta, Polynomial.phi4(0.5), lat.length)
    return RunManifest(model, lat, MCConfig(**{"seed": 11, "n_sweeps": 500, **mc}))


class TestBinary:
    def test_header_layout(self):
        cfg = np.arange(6.0).reshape(2, 3)
        blob = encode_config(cfg)
        assert HEADER.size == 16 and len(blob) == 16 + 6 * 8
        n_t, n_x, magic, version = struct.unpack("<ii4sI", blob[:16])
        assert (n_t, n_x, magic, version) == (2, 3, MAGIC, 1)
        np.testing.assert_array_equal(np.frombuffer(blob[16:], "<f8"), cfg.ravel())

    @given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_round_trip(self, n_t, n_x, n, seed):
        cfgs = np.random.default_rng(seed).normal(size=(n, n_t, n_x))
        back = decode_configs(encode_configs(cfgs))
        assert back.dtype == np.float64 and np.array_equal(back, cfgs)

    def test_file_round_trip(self, tmp_path):
        cfgs = np.random.default_rng(0).normal(size=(3, 4, 5))
        p = write_configs(tmp_path / "s.bin", cfgs)
        assert np.array_equal(read_configs(p), cfgs)

    def test_bad_magic(self):
        blob = bytearray(encode_config(np.zeros((2, 2))))
        blob[8:12] = b"XXXX"
        with pytest.raises(ValueError, match="magic"):
            decode_configs(bytes(blob))

    def test_truncated(self):
        blob = encode_config(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            decode_configs(blob[:-3])
        with pytest.raises(ValueError):
            decode_configs(blob[:10])

    def test_not_2d(self):
        with pytest.raises(DimensionError):
            encode_config(np.zeros(4))


class TestCSV:
    def test_full_precision(self, tmp_path):
        v = 0.1 + 0.2
        text = csv_text(("a",), [(v,)])
        assert text.splitlines()[1] == "0.30000000000000004"
        _, data = read_csv(Path(atomic_write(tmp_path / "a.csv", text)))
        assert data[0, 0] == v

    def test_config_csv(self, tmp_path):
        cfg = np.random.default_rng(1).normal(size=(2, 3))
        header, data = read_csv(write_config_csv(tmp_path / "c.csv", cfg))
        assert header == ["t", "x", "phi"]
        assert data.shape == (6, 3) and np.array_equal(data[:, 2], cfg.ravel())

    def test_correlator_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        g = CorrelatorGrid(rng.normal(size=(4, 3)), rng.random((4, 3)))
        p = write_correlator_csv(tmp_path / "g.csv", g)
        assert p.read_text().splitlines()[0] == "dtau,dx,S,err"
        s, e = read_correlator_csv(p)
        assert np.array_equal(s, g.s) and np.array_equal(e, g.err)

    def test_json_sorted(self):
        assert json_text({"b": 1, "a": 2}).index('"a"') < json_text({"b": 1, "a": 2}).index('"b"')


class TestAtomicWrite:
    def test_no_temporaries_and_permissions(self, tmp_path):
        p = atomic_write(tmp_path / "sub" / "f.txt", "hello")
        assert p.read_text() == "hello"
        assert os.listdir(p.parent) == ["f.txt"]
        assert stat.S_IMODE(p.stat().st_mode) == 0o644

    def test_replaces(self, tmp_path):
        atomic_write(tmp_path / "f", b"one")
        atomic_write(tmp_path / "f", b"two")
        assert (tmp_path / "f").read_bytes() == b"two"

    def test_failed_write_leaves_old_file(self, tmp_path):
        atomic_write(tmp_path / "f", "old")
        with pytest.raises(TypeError):
            atomic_write(tmp_path / "f", 12345)
        assert (tmp_path / "f").read_text() == "old"
        assert os.listdir(tmp_path) == ["f"]


class TestManifest:
    def test_round_trip(self, tmp_path):
        m = manifest(order="checkerboard", n_chains=3)
        back = read_manifest(write_manifest(tmp_path / "m.toml", m))
        assert back.mc == m.mc and back.lattice == m.lattice and back.model == m.model
        assert back.manifest_hash == m.compute_hash()

    def test_hash_changes_with_content(self):
        assert manifest().compute_hash() != manifest(seed=12).compute_hash()
        assert manifest().with_seed(12).manifest_hash == manifest(seed=12).compute_hash()

    def test_hash_mismatch(self):
        text = manifest().to_text().replace("n_sweeps = 500", "n_sweeps = 501")
        with pytest.raises(ManifestError, match="hash"):
            parse_manifest(text)
        assert parse_manifest(text, verify=False).mc.n_sweeps == 501

    def test_unhashed_is_accepted(self):
        text = "[model]\nmass = 1.0\nbeta = 2.0\n[lattice]\nn_t = 8\nn_x = 8\n[mc]\nseed = 3\n"
        m = parse_manifest(text)
        assert m.lattice.a_t == 0.25 and m.lattice.a_x == 0.25 and m.mc.seed == 3

    @pytest.mark.parametrize("text", ["[model]\nmass = 1\n", "garbage", "[model]\nmass = x\nbeta = 1\n"
                                      "[lattice]\nn_t = 2\nn_x = 2\n[mc]\n"])
    def test_malformed(self, text):
        with pytest.raises(ManifestError):
            parse_manifest(text)

    def test_inconsistent_lattice(self):
        text = "[model]\nmass = 1.0\nbeta = 2.0\n[lattice]\nn_t = 8\nn_x = 8\na_t = 0.5\n[mc]\n"
        with pytest.raises(ParameterError):
            parse_manifest(text)

    def test_unknown_check(self):
        text = manifest().canonical_text().replace("'clustering'", "'bogus'")
        with pytest.raises(ManifestError):
            parse_manifest(text)
