"""Run configuration, matrix files and the reduced-model archive.

Matrix file layout (little-endian)::

    bytes 0-7    magic  b"SEMRBMAT"
    bytes 8-15   element kind, ASCII, NUL padded (b"float64")
    bytes 16-23  rows, uint64
    bytes 24-31  cols, uint64
    then rows * cols float64 values, row-major
"""
from __future__ import annotations

import configparser
import os
import tempfile
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .geometry import GeometryConfig
from .rom import PodBasis, ReducedModel

MAGIC = b"SEMRBMAT"
KIND = b"float64\x00"
HEADER = 32


class ArchiveError(RuntimeError):
    pass


def _atomic_write(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_matrix(path, array):
    a = np.asarray(array, dtype="<f8")
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"matrix files hold 2-D arrays, got shape {a.shape}")
    header = MAGIC + KIND + np.array(a.shape, dtype="<u8").tobytes()
    _atomic_write(path, header + np.ascontiguousarray(a).tobytes())


def read_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER or raw[:8] != MAGIC:
        raise ArchiveError(f"{path}: not a matrix file")
    if raw[8:16] != KIND:
        raise ArchiveError(f"{path}: unsupported element kind {raw[8:16]!r}")
    rows, cols = np.frombuffer(raw[16:32], dtype="<u8")
    body = np.frombuffer(raw[HEADER:], dtype="<f8")
    if body.size != rows * cols:
        raise ArchiveError(f"{path}: expected {rows}x{cols} values, found {body.size}")
    return body.reshape(int(rows), int(cols)).copy()


def write_manifest(path, entries: dict):
    lines = [f"{k} = {_format(v)}" for k, v in entries.items()]
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def _format(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse_flat(text: str) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    parser.read_string("[run]\n" + text)
    return dict(parser["run"])


def read_manifest(path) -> dict:
    return _parse_flat(Path(path).read_text())


@dataclass
class RunConfig:
    channel_length: float = 8.0          # length
    channel_height: float = 3.0          # length
    narrowing_x0: float = 3.0            # length
    narrowing_x1: float = 5.0            # length
    reference_gap: float = 1.0           # length
    mu_min: float = 0.1                  # length
    mu_max: float = 2.9                  # length
    p: int = 8
    element_width: float = 0.5           # length
    rows_per_band: int = 1
    nu: float = 1.0                      # kinematic viscosity
    n_snapshots: int = 40
    n_verification: int = 40
    energy_threshold: float = 0.9999
    oseen_tol: float = 1e-8
    oseen_max_iter: int = 100
    seed: int = 20180517
    n_max: int = 30                      # largest reduced dimension stored
    timing_dimension: int = 20
    timing_repeats: int = 11
    output_dir: str = "semrb_out"

    def geometry(self) -> GeometryConfig:
        return GeometryConfig(
            channel_length=self.channel_length, channel_height=self.channel_height,
            narrowing_x_span=(self.narrowing_x0, self.narrowing_x1),
            gap_center_y=self.channel_height / 2, reference_gap=self.reference_gap,
            mu_range=(self.mu_min, self.mu_max), inflow_strip_width=self.element_width)

    def snapshot_params(self) -> np.ndarray:
        return np.linspace(self.mu_min, self.mu_max, self.n_snapshots)

    def verification_params(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return rng.uniform(self.mu_min, self.mu_max, self.n_verification)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def load_config(path) -> RunConfig:
    raw = _parse_flat(Path(path).read_text())
    types = {f.name: f.type for f in fields(RunConfig)}
    unknown = set(raw) - set(types)
    if unknown:
        raise ValueError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    cast = {"float": float, "int": int, "str": str}
    return RunConfig(**{k: cast[types[k]](v) for k, v in raw.items()})


def write_config(path, config: RunConfig):
    write_manifest(path, config.as_dict())


# -- archive -------------------------------------------------------------------

REDUCED_ARRAYS = ("stokes", "stokes_rhs", "adv", "adv_rhs", "adv_lift", "adv_lift_rhs")


def save_archive(directory, model: ReducedModel, pod: PodBasis, snapshots, config: RunConfig,
                 extra: dict | None = None):
    """Write the reduced model (``reduced/``), the N_delta-sized data
    (``full/``) and ``manifest.txt``."""
    d = Path(directory)
    shapes = {}
    for name in REDUCED_ARRAYS:
        a = getattr(model, name)
        shapes[name] = a.shape
        write_matrix(d / "reduced" / f"{name}.mat", a.reshape(a.shape[0], -1))
    write_matrix(d / "reduced" / "singular_values.mat", pod.singular_values)
    write_matrix(d / "full" / "modes.mat", pod.all_modes[:, :model.N])
    write_matrix(d / "full" / "snapshots.mat", snapshots.states)
    manifest = {
        "N_delta": model.metadata["N_delta"],
        "N": pod.N,
        "N_stored": model.N,
        "Q": model.Q,
        "rank": pod.rank,
        "energy_threshold": pod.energy_threshold,
        "p": model.metadata["p"],
        "nu": model.metadata["nu"],
        "mesh_hash": snapshots.metadata["mesh_hash"],
        "stokes_index": list(model.stokes_index),
        "advection_index": list(model.advection_index),
        "snapshot_params": list(snapshots.params),
        "snapshot_iterations": list(snapshots.iterations),
        "snapshot_reynolds": list(snapshots.reynolds),
    }
    for name, shape in shapes.items():
        manifest[f"shape_{name}"] = list(shape)
    manifest.update({f"config_{k}": v for k, v in config.as_dict().items()})
    manifest.update(extra or {})
    write_manifest(d / "manifest.txt", manifest)
    return manifest


def _ints(s):
    return [int(x) for x in s.split(",")]


def _floats(s):
    return np.array([float(x) for x in s.split(",")])


def archive_config(manifest: dict) -> RunConfig:
    sub = {k[len("config_"):]: v for k, v in manifest.items() if k.startswith("config_")}
    types = {f.name: f.type for f in fields(RunConfig)}
    cast = {"float": float, "int": int, "str": str}
    return RunConfig(**{k: cast[types[k]](v) for k, v in sub.items() if k in types})


def load_reduced_model(directory) -> tuple[ReducedModel, dict]:
    """Load only the reduced arrays and the manifest; nothing N_delta-sized."""
    d = Path(directory)
    if not (d / "manifest.txt").exists():
        raise ArchiveError(f"no archive at {d}")
    manifest = read_manifest(d / "manifest.txt")
    arrays = {}
    for name in REDUCED_ARRAYS:
        shape = _ints(manifest[f"shape_{name}"])
        arrays[name] = read_matrix(d / "reduced" / f"{name}.mat").reshape(shape)
    config = archive_config(manifest)
    meta = {"N_delta": int(manifest["N_delta"]), "p": int(manifest["p"]),
            "nu": float(manifest["nu"]), "energy_threshold": float(manifest["energy_threshold"]),
            "N_threshold": int(manifest["N"])}
    model = ReducedModel(config.geometry(), np.array(_ints(manifest["stokes_index"])),
                         np.array(_ints(manifest["advection_index"])), metadata=meta, **arrays)
    return model, manifest


def load_pod(directory) -> PodBasis:
    d = Path(directory)
    manifest = read_manifest(d / "manifest.txt")
    modes = read_matrix(d / "full" / "modes.mat")
    s = read_matrix(d / "reduced" / "singular_values.mat").ravel()
    return PodBasis(modes, s, float(manifest["energy_threshold"]), int(manifest["N"]))


def load_snapshots(directory):
    d = Path(directory)
    manifest = read_manifest(d / "manifest.txt")
    return _floats(manifest["snapshot_params"]), read_matrix(d / "full" / "snapshots.mat")
