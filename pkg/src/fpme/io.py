"""Reading and writing density snapshots, kernel matrices and run manifests.

Binary layout (little-endian): ``b"FPME"``, ``u32`` version (1), ``u32 d``,
``u32 n``, then ``f64`` payload.  Density files carry ``n**d`` values in
row-major order; kernel files carry the ``N (N - 1) / 2`` strict upper-triangle
entries.  The CSV form has the header ``d,n``, a line with the two values, and
one density value per line.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .grid import Grid
from .kernel import KernelConfig, KernelMatrix

__all__ = [
    "MAGIC",
    "VERSION",
    "FormatError",
    "store_density",
    "load_density",
    "store_kernel",
    "load_kernel",
    "RunManifest",
]

MAGIC = b"FPME"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    """Malformed field file; the message names the byte or line offset."""


def _pack(grid: Grid, payload: np.ndarray) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, grid.d, grid.n) + np.ascontiguousarray(payload, dtype="<f8").tobytes()


def _unpack(raw: bytes, path, count):
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} of {_HEADER.size} bytes)")
    magic, version, d, n = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 4")
    try:
        grid = Grid(d, n)
    except ValueError as exc:
        raise FormatError(f"{path}: invalid grid header at offset 8: {exc}") from None
    want = count(grid)
    body = raw[_HEADER.size:]
    if len(body) != 8 * want:
        raise FormatError(
            f"{path}: payload of {len(body)} bytes at offset {_HEADER.size}, expected {8 * want} "
            f"({want} values for d={d}, n={n})"
        )
    values = np.frombuffer(body, dtype="<f8").astype(float)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise FormatError(f"{path}: non-finite value at offset {_HEADER.size + 8 * int(bad[0])}")
    return grid, values


def store_density(rho, path, grid: Grid | None = None) -> Path:
    """Write a density; ``.csv`` suffix selects the text form, anything else binary."""
    rho = np.asarray(rho, dtype=float)
    grid = grid or Grid.from_shape(rho.shape)
    if rho.size != grid.size:
        raise ValueError("field size does not match the grid")
    path = Path(path)
    if path.suffix.lower() == ".csv":
        lines = ["d,n", f"{grid.d},{grid.n}"] + [repr(float(v)) for v in rho.ravel()]
        path.write_text("\n".join(lines) + "\n")
    else:
        path.write_bytes(_pack(grid, rho.ravel()))
    return path


def _load_csv(path: Path):
    lines = [ln.strip() for ln in path.read_text().splitlines()]
    while lines and not lines[-1]:
        lines.pop()
    if len(lines) < 2 or lines[0].replace(" ", "") != "d,n":
        raise FormatError(f"{path}: line 1 must be the header 'd,n'")
    try:
        d, n = (int(v) for v in lines[1].split(","))
        grid = Grid(d, n)
    except ValueError as exc:
        raise FormatError(f"{path}: line 2 is not a valid 'd,n' pair: {exc}") from None
    rows = lines[2:]
    if len(rows) != grid.size:
        raise FormatError(f"{path}: header promises {grid.size} values, found {len(rows)} rows")
    values = np.empty(grid.size)
    for k, row in enumerate(rows):
        try:
            values[k] = float(row)
        except ValueError:
            raise FormatError(f"{path}: line {k + 3} is not a number: {row!r}") from None
        if not np.isfinite(values[k]):
            raise FormatError(f"{path}: line {k + 3} is not finite")
    return values.reshape(grid.shape), grid


def load_density(path, return_grid: bool = False):
    """Read a density written by :func:`store_density` (binary round trip is exact)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        rho, grid = _load_csv(path)
    else:
        grid, values = _unpack(path.read_bytes(), path, lambda g: g.size)
        rho = values.reshape(grid.shape)
    return (rho, grid) if return_grid else rho


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def store_kernel(K: KernelMatrix, path) -> tuple[Path, Path]:
    """Binary upper triangle plus a JSON sidecar ``<file>.json`` with the kernel metadata."""
    path = Path(path)
    path.write_bytes(_pack(K.grid, K.upper()))
    meta = {
        "sigma": K.sigma,
        "radius": K.config.radius,
        "tail_correction": K.config.tail_correction,
        "C_comp_estimate": K.comp_constant,
    }
    side = _sidecar(path)
    side.write_text(json.dumps(meta, indent=2) + "\n")
    return path, side


def load_kernel(path) -> KernelMatrix:
    path = Path(path)
    grid, values = _unpack(path.read_bytes(), path, lambda g: g.size * (g.size - 1) // 2)
    meta = json.loads(_sidecar(path).read_text())
    cfg = KernelConfig(radius=int(meta["radius"]), tail_correction=bool(meta["tail_correction"]))
    return KernelMatrix.from_upper(grid, float(meta["sigma"]), cfg, values)


@dataclass
class RunManifest:
    """Record of one command: resolved configuration, kernel metadata and outcome."""

    command: str
    config: dict
    kernel: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    exit_status: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls.from_json(Path(path).read_text())
