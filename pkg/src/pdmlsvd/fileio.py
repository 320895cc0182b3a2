"""Tensor, factor and model files.

Two tensor formats, auto-detected on read:

text
    First line ``tns <D> <N1> ... <ND>``, then the entries in column-major
    order as whitespace-separated decimals (written with 17 significant
    digits, so doubles round-trip exactly).
binary
    Magic ``TNS1``, then ``D`` and ``N1 ... ND`` as unsigned 64-bit
    little-endian integers, then the entries as little-endian IEEE-754
    doubles in column-major order.

A factor directory holds ``U1.tns`` ... ``UD.tns``, the core ``S.tns`` and a
``meta.txt`` manifest of ``key=value`` lines (order, shape, ranks and any
recorded residuals). Model directories add ``kind=primal|dual`` and store
``W<d>``/``U<d>`` plus ``E<d>``.
"""
from __future__ import annotations

import io
import os
import struct
from pathlib import Path
from typing import BinaryIO, Mapping

import numpy as np

from .decomposition import MlsvdFactors
from .errors import LengthMismatchError, ManifestError, NonFiniteError, TensorFormatError
from .primal_dual import DualModel, PrimalModel

BINARY_MAGIC = b"TNS1"
TEXT_MAGIC = "tns"
MANIFEST = "meta.txt"


def _read_bytes(source) -> bytes:
    if isinstance(source, (str, os.PathLike)):
        return Path(source).read_bytes()
    data = source.read()
    return data.encode("ascii") if isinstance(data, str) else data


def _finish(values: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if not np.isfinite(values).all():
        raise NonFiniteError("tensor file contains non-finite values")
    return np.reshape(values.astype(np.float64), shape, order="F")


def _check_shape(shape: tuple[int, ...]) -> None:
    if len(shape) == 0:
        raise TensorFormatError("tensor order must be >= 1")
    if any(n < 1 for n in shape):
        raise TensorFormatError(f"invalid dimensions {shape}")


def _parse_binary(data: bytes) -> np.ndarray:
    pos = len(BINARY_MAGIC)
    if len(data) < pos + 8:
        raise TensorFormatError("binary header truncated before the order")
    (order,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) < pos + 8 * order:
        raise TensorFormatError("binary header truncated inside the dimensions")
    shape = struct.unpack_from(f"<{order}Q", data, pos)
    pos += 8 * order
    _check_shape(shape)
    expected = int(np.prod(shape))
    payload = len(data) - pos
    if payload % 8 or payload // 8 != expected:
        raise LengthMismatchError(f"expected {expected} values, found {payload / 8:g}")
    return _finish(np.frombuffer(data, dtype="<f8", offset=pos), shape)


def _parse_text(data: bytes) -> np.ndarray:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        raise TensorFormatError("not a tensor file: bad magic") from None
    header, _, body = text.partition("\n")
    fields = header.split()
    if not fields or fields[0] != TEXT_MAGIC:
        raise TensorFormatError("not a tensor file: bad magic")
    try:
        order = int(fields[1])
        shape = tuple(int(n) for n in fields[2:])
    except (IndexError, ValueError):
        raise TensorFormatError(f"malformed header {header!r}") from None
    if len(shape) != order:
        raise TensorFormatError(f"header declares order {order} but lists {len(shape)} dimensions")
    _check_shape(shape)
    tokens = body.split()
    expected = int(np.prod(shape))
    if len(tokens) != expected:
        raise LengthMismatchError(f"expected {expected} values, found {len(tokens)}")
    try:
        values = np.array([float(tok) for tok in tokens], dtype=np.float64)
    except ValueError as exc:
        raise TensorFormatError(f"malformed value: {exc}") from None
    return _finish(values, shape)


def read_tensor(source) -> np.ndarray:
    """Read a tensor from a path or a binary stream; the format is detected from the magic."""
    data = _read_bytes(source)
    if data.startswith(BINARY_MAGIC):
        return _parse_binary(data)
    return _parse_text(data)


def tensor_bytes(t, fmt: str = "binary") -> bytes:
    t = np.asarray(t, dtype=np.float64)
    _check_shape(t.shape)
    if not np.isfinite(t).all():
        raise NonFiniteError("refusing to write non-finite values")
    flat = np.reshape(t, -1, order="F")
    if fmt == "binary":
        header = BINARY_MAGIC + struct.pack(f"<{t.ndim + 1}Q", t.ndim, *t.shape)
        return header + flat.astype("<f8").tobytes()
    if fmt == "text":
        lines = [f"{TEXT_MAGIC} {t.ndim} " + " ".join(str(n) for n in t.shape)]
        lines.extend(f"{v:.17g}" for v in flat)
        return ("\n".join(lines) + "\n").encode("ascii")
    raise ValueError(f"unknown tensor format {fmt!r}")


def write_tensor(t, dest: str | os.PathLike | BinaryIO, fmt: str = "binary") -> None:
    data = tensor_bytes(t, fmt)
    if isinstance(dest, (str, os.PathLike)):
        Path(dest).write_bytes(data)
    else:
        dest.write(data)


def _join(values) -> str:
    return ",".join(str(int(v)) for v in values)


def write_manifest(directory: Path, entries: Mapping[str, object]) -> None:
    lines = [f"{key}={value}" for key, value in entries.items()]
    (directory / MANIFEST).write_text("\n".join(lines) + "\n")


def read_manifest(directory) -> dict[str, str]:
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise ManifestError(f"missing manifest {path}")
    out = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ManifestError(f"malformed manifest line {line!r}")
        out[key.strip()] = value.strip()
    return out


def _ints(manifest: Mapping[str, str], key: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in manifest[key].split(","))
    except KeyError:
        raise ManifestError(f"manifest lacks {key!r}") from None
    except ValueError:
        raise ManifestError(f"manifest entry {key!r} is not a list of integers") from None


def _load(directory: Path, name: str) -> np.ndarray:
    path = directory / name
    if not path.exists():
        raise ManifestError(f"missing file {path}")
    return read_tensor(path)


def write_factors(
    f: MlsvdFactors,
    directory,
    residuals: Mapping[str, float] | None = None,
    fmt: str = "binary",
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for d, u in enumerate(f.factors, start=1):
        write_tensor(u, directory / f"U{d}.tns", fmt)
    write_tensor(f.core, directory / "S.tns", fmt)
    entries: dict[str, object] = {"order": f.order, "shape": _join(f.shape), "ranks": _join(f.ranks)}
    for key, value in (residuals or {}).items():
        entries[f"residual.{key}"] = repr(float(value))
    write_manifest(directory, entries)


def read_factors(directory) -> MlsvdFactors:
    directory = Path(directory)
    manifest = read_manifest(directory)
    order = _ints(manifest, "order")[0]
    shape, ranks = _ints(manifest, "shape"), _ints(manifest, "ranks")
    if len(shape) != order or len(ranks) != order:
        raise ManifestError(f"manifest order {order} disagrees with shape {shape} / ranks {ranks}")
    factors = tuple(_load(directory, f"U{d}.tns") for d in range(1, order + 1))
    core = _load(directory, "S.tns")
    if core.shape != ranks:
        raise ManifestError(f"core has shape {core.shape}, manifest ranks are {ranks}")
    for d, u in enumerate(factors):
        if u.shape != (shape[d], ranks[d]):
            raise ManifestError(f"U{d + 1} has shape {u.shape}, manifest expects {(shape[d], ranks[d])}")
    return MlsvdFactors(factors, core)


def write_model(model: PrimalModel | DualModel, directory, fmt: str = "binary") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if isinstance(model, PrimalModel):
        kind, prefix, mats = "primal", "W", model.weights
    else:
        kind, prefix, mats = "dual", "U", model.multipliers
    for d, (m, e) in enumerate(zip(mats, model.errors), start=1):
        write_tensor(m, directory / f"{prefix}{d}.tns", fmt)
        write_tensor(e, directory / f"E{d}.tns", fmt)
    entries: dict[str, object] = {"kind": kind, "order": len(mats)}
    if model.core is not None:
        write_tensor(model.core, directory / "S.tns", fmt)
        entries["ranks"] = _join(np.shape(model.core))
    write_manifest(directory, entries)


def read_model(directory) -> PrimalModel | DualModel:
    directory = Path(directory)
    manifest = read_manifest(directory)
    kind = manifest.get("kind")
    if kind not in ("primal", "dual"):
        raise ManifestError(f"unknown model kind {kind!r}")
    order = _ints(manifest, "order")[0]
    prefix = "W" if kind == "primal" else "U"
    mats = tuple(_load(directory, f"{prefix}{d}.tns") for d in range(1, order + 1))
    errors = tuple(_load(directory, f"E{d}.tns") for d in range(1, order + 1))
    core = _load(directory, "S.tns") if (directory / "S.tns").exists() else None
    if core is not None and "ranks" in manifest and core.shape != _ints(manifest, "ranks"):
        raise ManifestError(f"core has shape {core.shape}, manifest ranks are {manifest['ranks']}")
    if kind == "primal":
        return PrimalModel(mats, errors, core=core)
    return DualModel(mats, errors, core=core)


def loads_tensor(data: bytes | str) -> np.ndarray:
    return read_tensor(io.BytesIO(data.encode("ascii") if isinstance(data, str) else data))
