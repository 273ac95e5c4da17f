"""Binary checkpoints for the student model.

Layout (little-endian throughout)::

    magic  b"SHZC"
    u16    format version (currently 1)
    u32    manifest byte length, then UTF-8 ``key=value`` lines
    u32    section count
    per section:
        u16 name length + UTF-8 name   (state-dict key)
        u8  ndim, then ndim * u32 dims
        float32 data, C order

The manifest carries everything needed to rebuild the module graph, so a
checkpoint is self-describing: :func:`load_checkpoint` reconstructs the
model and then fills in the weights, validating every section's name and
shape.  Sections are written in sorted key order, making saves of equal
models byte-identical.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np
import torch

from .errors import (
    CorruptContainerError,
    InconsistentContainerError,
    InvalidArgumentError,
    UnsupportedFormatError,
)
from .features import SCALE_ORDER, ScaleLevel, TeacherSpec
from .fusion import FusionConfig
from .model import StudentModel
from .tasks import HeadConfig, TaskKind

__all__ = ["save_checkpoint", "load_checkpoint", "checkpoint_manifest"]

_MAGIC = b"SHZC"
_VERSION = 1


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CorruptContainerError(f"truncated checkpoint while reading {what}")
    return data


def checkpoint_manifest(model: StudentModel) -> str:
    """The ``key=value`` description block stored inside a checkpoint."""
    cfg = model.fusion_config
    head = model.head_config
    lines = [
        "format=shazam-checkpoint",
        f"seed={cfg.seed}",
        f"embed_dim={cfg.embed_dim}",
        f"num_heads={cfg.num_heads}",
        f"num_layers={cfg.num_layers}",
        f"gate_hidden_factor={cfg.gate_hidden_factor}",
        f"use_gate={str(cfg.use_gate).lower()}",
        "scales=" + ",".join(s.name for s in cfg.scales),
        f"task={head.task.value}",
        f"head_in_dim={head.in_dim}",
        f"head_out_dim={head.out_dim}",
        "head_hidden=" + ",".join(str(h) for h in head.hidden),
        f"head_dropout={head.dropout!r}",
        f"with_mil={str(model.with_mil).lower()}",
        f"mil_hidden={model.mil_hidden}",
        f"n_teachers={len(model.teachers)}",
    ]
    for i, t in enumerate(model.teachers):
        lines.append(f"teacher.{i}.name={t.name}")
        lines.append(f"teacher.{i}.native_dim={t.native_dim}")
        lines.append(f"teacher.{i}.depth={t.depth}")
        if t.standalone_score is not None:
            lines.append(f"teacher.{i}.standalone_score={t.standalone_score!r}")
    return "\n".join(lines) + "\n"


def save_checkpoint(model: StudentModel, path: str | Path) -> None:
    path = Path(path)
    manifest = checkpoint_manifest(model).encode("utf-8")
    state = model.state_dict()
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<H", _VERSION))
    buf.write(struct.pack("<I", len(manifest)))
    buf.write(manifest)
    buf.write(struct.pack("<I", len(state)))
    for name in sorted(state):
        tensor = state[name].detach().cpu()
        if tensor.dtype != torch.float32:
            raise InvalidArgumentError(f"checkpoint section {name!r} is not float32")
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", tensor.ndim))
        for d in tensor.shape:
            buf.write(struct.pack("<I", d))
        buf.write(tensor.numpy().astype("<f4", copy=False).tobytes(order="C"))
    path.write_bytes(buf.getvalue())


def _parse_manifest(text: str) -> dict[str, str]:
    fields: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CorruptContainerError(f"malformed checkpoint manifest line: {line!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    return fields


def _require(fields: dict[str, str], key: str) -> str:
    if key not in fields:
        raise InconsistentContainerError(f"checkpoint manifest missing {key!r}")
    return fields[key]


def _model_from_manifest(fields: dict[str, str]) -> StudentModel:
    if _require(fields, "format") != "shazam-checkpoint":
        raise UnsupportedFormatError(f"unexpected manifest format {fields['format']!r}")
    scales = tuple(ScaleLevel[name] for name in _require(fields, "scales").split(","))
    if scales == tuple(SCALE_ORDER):
        scales = SCALE_ORDER
    fusion_cfg = FusionConfig(
        embed_dim=int(_require(fields, "embed_dim")),
        num_heads=int(_require(fields, "num_heads")),
        num_layers=int(_require(fields, "num_layers")),
        gate_hidden_factor=int(_require(fields, "gate_hidden_factor")),
        scales=scales,
        use_gate=_require(fields, "use_gate") == "true",
        seed=int(_require(fields, "seed")),
    )
    head_cfg = HeadConfig(
        task=TaskKind(_require(fields, "task")),
        in_dim=int(_require(fields, "head_in_dim")),
        out_dim=int(_require(fields, "head_out_dim")),
        hidden=tuple(int(h) for h in _require(fields, "head_hidden").split(",") if h),
        dropout=float(_require(fields, "head_dropout")),
    )
    n_teachers = int(_require(fields, "n_teachers"))
    teachers = []
    for i in range(n_teachers):
        score_raw = fields.get(f"teacher.{i}.standalone_score")
        teachers.append(
            TeacherSpec(
                name=_require(fields, f"teacher.{i}.name"),
                native_dim=int(_require(fields, f"teacher.{i}.native_dim")),
                depth=int(_require(fields, f"teacher.{i}.depth")),
                standalone_score=None if score_raw is None else float(score_raw),
            )
        )
    return StudentModel(
        teachers=tuple(teachers),
        fusion_config=fusion_cfg,
        head_config=head_cfg,
        with_mil=_require(fields, "with_mil") == "true",
        mil_hidden=int(_require(fields, "mil_hidden")),
    )


def load_checkpoint(path: str | Path) -> StudentModel:
    path = Path(path)
    raw = path.read_bytes()
    fh = io.BytesIO(raw)
    if _read_exact(fh, 4, "magic") != _MAGIC:
        raise CorruptContainerError(f"{path}: bad magic (not a checkpoint)")
    (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
    if version != _VERSION:
        raise UnsupportedFormatError(f"{path}: checkpoint version {version} unsupported")
    (mlen,) = struct.unpack("<I", _read_exact(fh, 4, "manifest length"))
    manifest = _read_exact(fh, mlen, "manifest").decode("utf-8")
    model = _model_from_manifest(_parse_manifest(manifest))
    expected = model.state_dict()
    (n_sections,) = struct.unpack("<I", _read_exact(fh, 4, "section count"))
    if n_sections != len(expected):
        raise InconsistentContainerError(
            f"{path}: {n_sections} sections but model has {len(expected)} parameters/buffers"
        )
    loaded: dict[str, torch.Tensor] = {}
    for _ in range(n_sections):
        (nlen,) = struct.unpack("<H", _read_exact(fh, 2, "section name length"))
        name = _read_exact(fh, nlen, "section name").decode("utf-8")
        if name not in expected:
            raise InconsistentContainerError(f"{path}: unknown section {name!r}")
        if name in loaded:
            raise CorruptContainerError(f"{path}: duplicate section {name!r}")
        (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "section ndim"))
        shape = tuple(
            struct.unpack("<I", _read_exact(fh, 4, "section dim"))[0] for _ in range(ndim)
        )
        if shape != tuple(expected[name].shape):
            raise InconsistentContainerError(
                f"{path}: section {name!r} has shape {shape}, model expects "
                f"{tuple(expected[name].shape)}"
            )
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = _read_exact(fh, 4 * count, f"section {name!r} data")
        arr = np.frombuffer(data, dtype="<f4").reshape(shape)
        if not np.isfinite(arr).all():
            raise CorruptContainerError(f"{path}: non-finite values in section {name!r}")
        loaded[name] = torch.from_numpy(arr.copy())
    if fh.read(1):
        raise CorruptContainerError(f"{path}: trailing bytes after last section")
    model.load_state_dict(loaded, strict=True)
    return model
