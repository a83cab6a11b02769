"""File formats: binary field configurations, CSV tables and run manifests.

Every write goes to a temporary file in the target directory which is then
renamed over the destination, so readers never see a partial file.
"""
from __future__ import annotations

import ast
import configparser
import csv
import hashlib
import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .errors import DimensionError, ManifestError
from .lattice import LatticeSpec
from .montecarlo import MCConfig
from .spectral import ModelParams, Polynomial

MAGIC = b"TCFG"
FORMAT_VERSION = 1
HEADER = struct.Struct("<ii4sI")  # n_t, n_x, magic, version: 16 bytes


def atomic_write(path, data: bytes | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# --- field configurations ------------------------------------------------

def encode_config(cfg: np.ndarray) -> bytes:
    cfg = np.asarray(cfg, dtype="<f8")
    if cfg.ndim != 2:
        raise DimensionError("a field configuration is 2-D")
    n_t, n_x = cfg.shape
    return HEADER.pack(n_t, n_x, MAGIC, FORMAT_VERSION) + np.ascontiguousarray(cfg).tobytes()


def encode_configs(cfgs: Iterable[np.ndarray]) -> bytes:
    """Concatenated single-configuration records."""
    return b"".join(encode_config(c) for c in cfgs)


def decode_configs(blob: bytes) -> np.ndarray:
    out = []
    pos = 0
    shape = None
    while pos < len(blob):
        if len(blob) - pos < HEADER.size:
            raise ValueError("truncated record header")
        n_t, n_x, magic, version = HEADER.unpack_from(blob, pos)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r} at byte {pos}")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported format version {version}")
        if n_t < 1 or n_x < 1:
            raise ValueError("non-positive lattice extent in header")
        if shape is not None and (n_t, n_x) != shape:
            raise DimensionError("records of different shapes in one file")
        shape = (n_t, n_x)
        pos += HEADER.size
        nbytes = 8 * n_t * n_x
        if len(blob) - pos < nbytes:
            raise ValueError("truncated record payload")
        out.append(np.frombuffer(blob, dtype="<f8", count=n_t * n_x, offset=pos).reshape(n_t, n_x))
        pos += nbytes
    if not out:
        return np.empty((0, 0, 0))
    return np.stack(out).astype(float)


def write_configs(path, cfgs) -> Path:
    cfgs = np.asarray(cfgs, dtype=float)
    if cfgs.ndim == 2:
        cfgs = cfgs[None]
    return atomic_write(path, encode_configs(cfgs))


def read_configs(path) -> np.ndarray:
    return decode_configs(Path(path).read_bytes())


# --- CSV -----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    return atomic_write(path, csv_text(header, rows))


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = [[float(v) for v in row] for row in r]
    return header, np.asarray(data, dtype=float).reshape(-1, len(header))


def config_csv_rows(cfg: np.ndarray):
    for (t, x), v in np.ndenumerate(cfg):
        yield t, x, float(v)


def write_config_csv(path, cfg: np.ndarray) -> Path:
    return write_csv(path, ("t", "x", "phi"), config_csv_rows(np.asarray(cfg, dtype=float)))


def estimates_rows(estimates):
    for name, e in estimates.items():
        yield name, e.mean, e.std_error, e.tau_int, e.n_eff


def write_estimates_csv(path, estimates) -> Path:
    return write_csv(path, ("observable", "mean", "std_error", "tau_int", "n_eff"), estimates_rows(estimates))


def write_correlator_csv(path, grid) -> Path:
    return write_csv(path, ("dtau", "dx", "S", "err"), grid.to_rows())


def read_correlator_csv(path) -> tuple[np.ndarray, np.ndarray]:
    header, data = read_csv(path)
    if header != ["dtau", "dx", "S", "err"]:
        raise ValueError(f"unexpected correlator header {header}")
    n_t = int(data[:, 0].max()) + 1
    n_x = int(data[:, 1].max()) + 1
    s = np.zeros((n_t, n_x))
    e = np.zeros((n_t, n_x))
    idx = (data[:, 0].astype(int), data[:, 1].astype(int))
    s[idx] = data[:, 2]
    e[idx] = data[:, 3]
    return s, e


def json_text(obj) -> str:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# --- run manifest --------------------------------------------------------

DEFAULT_CHECKS = ("kms", "os", "clustering")


@dataclass(frozen=True)
class RunManifest:
    """Everything that determines a simulation run.

    ``manifest_hash`` is a SHA-256 over the canonical text of all other
    fields.  The output directory is an invocation argument, not part of the
    manifest, so the same run can be reproduced into a different directory.
    """

    model: ModelParams
    lattice: LatticeSpec
    mc: MCConfig
    checks: tuple[str, ...] = DEFAULT_CHECKS
    sample_stride: int = 1
    code_version: str = __version__
    manifest_hash: str = ""

    def sections(self) -> dict[str, dict[str, str]]:
        m, lat, mc = self.model, self.lattice, self.mc
        return {
            "model": {"mass": repr(m.mass), "beta": repr(m.beta), "P": repr([float(c) for c in m.poly.coeffs])},
            "lattice": {"n_t": str(lat.n_t), "n_x": str(lat.n_x), "a_t": repr(lat.a_t), "a_x": repr(lat.a_x)},
            "mc": {"seed": str(mc.seed), "n_therm": str(mc.n_therm), "n_sweeps": str(mc.n_sweeps),
                   "meas_interval": str(mc.meas_interval), "step_width": repr(mc.step_width),
                   "n_chains": str(mc.n_chains), "order": repr(mc.order), "tune": repr(mc.tune)},
            "checks": {"enabled": repr(list(self.checks)), "sample_stride": str(self.sample_stride)},
            "meta": {"code_version": repr(self.code_version)},
        }

    def canonical_text(self) -> str:
        lines = []
        for name, kv in self.sections().items():
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {v}" for k, v in kv.items())
        return "\n".join(lines) + "\n"

    def compute_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

    def sealed(self) -> "RunManifest":
        return replace(self, manifest_hash=self.compute_hash())

    def with_seed(self, seed: int) -> "RunManifest":
        return replace(self, mc=replace(self.mc, seed=seed), manifest_hash="").sealed()

    def to_text(self) -> str:
        sealed = self if self.manifest_hash else self.sealed()
        return sealed.canonical_text() + f"manifest_hash = {sealed.manifest_hash!r}\n"


def _value(section, key, default=None):
    if key not in section:
        if default is None:
            raise ManifestError(f"missing key {key!r} in [{section.name}]")
        return default
    try:
        return ast.literal_eval(section[key])
    except (ValueError, SyntaxError) as exc:
        raise ManifestError(f"cannot parse {section.name}.{key} = {section[key]!r}") from exc


def parse_manifest(text: str, verify: bool = True) -> RunManifest:
    """Parse manifest text; if a ``manifest_hash`` is present it must match the content."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ManifestError(f"malformed manifest: {exc}") from exc
    for sec in ("model", "lattice", "mc"):
        if sec not in cp:
            raise ManifestError(f"missing section [{sec}]")
    md, lt, mc = cp["model"], cp["lattice"], cp["mc"]
    beta = float(_value(md, "beta"))
    n_t, n_x = int(_value(lt, "n_t")), int(_value(lt, "n_x"))
    a_t = float(_value(lt, "a_t", beta / n_t))
    a_x = float(_value(lt, "a_x", a_t))
    lattice = LatticeSpec(n_t, n_x, a_t, a_x)
    model = ModelParams(float(_value(md, "mass")), beta,
                        Polynomial(tuple(float(c) for c in _value(md, "P", [0.0]))), lattice.length)
    lattice.validate(model)
    d = MCConfig()
    mcfg = MCConfig(seed=int(_value(mc, "seed", d.seed)), n_therm=int(_value(mc, "n_therm", d.n_therm)),
                    n_sweeps=int(_value(mc, "n_sweeps", d.n_sweeps)),
                    meas_interval=int(_value(mc, "meas_interval", d.meas_interval)),
                    step_width=float(_value(mc, "step_width", d.step_width)),
                    n_chains=int(_value(mc, "n_chains", d.n_chains)),
                    order=str(_value(mc, "order", d.order)), tune=bool(_value(mc, "tune", d.tune)))
    checks_sec = cp["checks"] if "checks" in cp else {}
    checks = tuple(_value(checks_sec, "enabled", list(DEFAULT_CHECKS))) if checks_sec else DEFAULT_CHECKS
    unknown = set(checks) - set(DEFAULT_CHECKS)
    if unknown:
        raise ManifestError(f"unknown checks {sorted(unknown)}")
    stride = int(_value(checks_sec, "sample_stride", 1)) if checks_sec else 1
    meta = cp["meta"] if "meta" in cp else {}
    version = str(_value(meta, "code_version", __version__)) if meta else __version__
    stated = str(_value(meta, "manifest_hash", "")) if meta and "manifest_hash" in meta else ""
    man = RunManifest(model, lattice, mcfg, checks, stride, version)
    actual = man.compute_hash()
    if verify and stated and stated != actual:
        raise ManifestError(f"manifest hash mismatch: stated {stated[:12]}..., content {actual[:12]}...")
    return replace(man, manifest_hash=actual)


def read_manifest(path, verify: bool = True) -> RunManifest:
    return parse_manifest(Path(path).read_text(), verify)


def write_manifest(path, manifest: RunManifest) -> Path:
    return atomic_write(path, manifest.to_text())


def load_ini(path) -> configparser.ConfigParser:
    """Generic ``[section] key = value`` reader with literal values (used by the oracle command)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(Path(path).read_text())
    except configparser.Error as exc:
        raise ManifestError(f"malformed config: {exc}") from exc
    return cp


def ini_value(cp: configparser.ConfigParser, section: str, key: str, default=None):
    if section not in cp or key not in cp[section]:
        if default is None:
            raise ManifestError(f"missing {section}.{key}")
        return default
    return _value(cp[section], key)

