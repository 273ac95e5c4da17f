"""Frozen-teacher feature store: data model, synthetic generator, container I/O, splits.

Teachers are frozen encoders observed only through their features, captured
at three depths of each encoder (shallow / middle / final block).  This
module never touches real encoders: features arrive either from
:func:`synth_teacher_set` or from a feature container written by an external
extraction tool (see :func:`read_feature_set` for the integration contract).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from statistics import NormalDist
from typing import BinaryIO, Sequence

import numpy as np

from .errors import (
    CorruptContainerError,
    InconsistentContainerError,
    InvalidArgumentError,
    UnsupportedFormatError,
)
from .tasks import ClassLabel, ExpressionLabel, SurvivalLabel, TaskKind, TaskLabel

__all__ = [
    "ScaleLevel",
    "SCALE_ORDER",
    "TeacherSpec",
    "MultiScaleFeature",
    "SampleRecord",
    "Manifest",
    "FeatureSet",
    "SlideBag",
    "extraction_depths",
    "SynthConfig",
    "synth_teacher_set",
    "write_feature_set",
    "read_feature_set",
    "patient_split",
    "slide_bags",
    "stacked_features",
]


class ScaleLevel(IntEnum):
    """Depth tier a feature was extracted from; ordered shallow to deep."""

    LOW = 0
    MID = 1
    HIGH = 2


SCALE_ORDER: tuple[ScaleLevel, ...] = (ScaleLevel.LOW, ScaleLevel.MID, ScaleLevel.HIGH)


def extraction_depths(depth: int) -> dict[ScaleLevel, int]:
    """Block indices to tap for a teacher with ``depth`` transformer blocks.

    LOW/MID sit at floor(0.33*depth) and floor(0.66*depth) (computed in
    integer arithmetic so the floors are exact), HIGH is the final block;
    every index is clamped to at least 1.
    """
    if depth < 1:
        raise InvalidArgumentError(f"encoder depth must be >= 1, got {depth}")
    return {
        ScaleLevel.LOW: max(1, (33 * depth) // 100),
        ScaleLevel.MID: max(1, (66 * depth) // 100),
        ScaleLevel.HIGH: depth,
    }


@dataclass(frozen=True)
class TeacherSpec:
    """Identity and geometry of one frozen teacher encoder.

    ``standalone_score`` (optional) is the teacher's solo benchmark score,
    used only to order teacher-removal ablations.
    """

    name: str
    native_dim: int
    depth: int
    standalone_score: float | None = None

    def __post_init__(self):
        if not self.name:
            raise InvalidArgumentError("teacher name must be non-empty")
        if self.native_dim < 1:
            raise InvalidArgumentError(f"native_dim must be >= 1, got {self.native_dim}")
        if self.depth < 1:
            raise InvalidArgumentError(f"depth must be >= 1, got {self.depth}")


@dataclass(frozen=True)
class MultiScaleFeature:
    """One sample's feature vectors from one teacher at the three scales."""

    teacher: TeacherSpec
    vectors: tuple[np.ndarray, np.ndarray, np.ndarray]  # LOW, MID, HIGH

    def __post_init__(self):
        if len(self.vectors) != len(SCALE_ORDER):
            raise InvalidArgumentError("expected one vector per scale (LOW, MID, HIGH)")
        frozen = []
        for scale, vec in zip(SCALE_ORDER, self.vectors):
            arr = np.asarray(vec, dtype=np.float32)
            if arr.shape != (self.teacher.native_dim,):
                raise InvalidArgumentError(
                    f"{self.teacher.name}/{scale.name}: vector shape {arr.shape} != "
                    f"({self.teacher.native_dim},)"
                )
            if not np.all(np.isfinite(arr)):
                raise InvalidArgumentError(f"{self.teacher.name}/{scale.name}: non-finite values")
            arr.flags.writeable = False
            frozen.append(arr)
        object.__setattr__(self, "vectors", tuple(frozen))

    def vector(self, scale: ScaleLevel) -> np.ndarray:
        return self.vectors[int(scale)]


@dataclass(frozen=True)
class SampleRecord:
    """One sample (tile / spot) with its label and per-teacher features."""

    sample_id: str
    label: TaskLabel
    features: tuple[MultiScaleFeature, ...]

    def __post_init__(self):
        if not self.sample_id:
            raise InvalidArgumentError("sample_id must be non-empty")
        if not self.features:
            raise InvalidArgumentError("a sample needs at least one teacher feature group")


@dataclass
class Manifest:
    """Human-readable metadata that travels with a feature container.

    ``patient_map`` maps sample_id -> patient_id (None = unassigned; such
    samples are used for training only, never for testing).  ``slide_map``
    groups samples into slides for bag-level tasks.  ``feature_source`` is a
    caller-defined note on how vectors were produced (e.g. class token vs
    pooled patch tokens); it is recorded verbatim, never interpreted.
    """

    task_kind: TaskKind
    seed: int
    n_samples: int
    patient_map: dict[str, str | None] = field(default_factory=dict)
    slide_map: dict[str, str] | None = None
    planted_mode: str | None = None
    planted_strengths: tuple[float, ...] | None = None
    num_classes: int | None = None
    gene_names: tuple[str, ...] | None = None
    feature_source: str = "unspecified"
    teacher_scores: dict[str, float] | None = None


@dataclass
class FeatureSet:
    """A cohort of samples with features from a fixed roster of teachers."""

    teachers: tuple[TeacherSpec, ...]
    samples: list[SampleRecord]
    manifest: Manifest

    def __post_init__(self):
        names = [t.name for t in self.teachers]
        if len(set(names)) != len(names):
            raise InvalidArgumentError(f"duplicate teacher names: {names}")
        for rec in self.samples:
            if len(rec.features) != len(self.teachers):
                raise InvalidArgumentError(
                    f"sample {rec.sample_id!r} has {len(rec.features)} feature groups, "
                    f"expected {len(self.teachers)}"
                )
            for spec, feat in zip(self.teachers, rec.features):
                if feat.teacher != spec:
                    raise InvalidArgumentError(
                        f"sample {rec.sample_id!r}: feature teacher order mismatch "
                        f"({feat.teacher.name} where {spec.name} expected)"
                    )
        if self.manifest.n_samples != len(self.samples):
            raise InconsistentContainerError(
                f"manifest declares {self.manifest.n_samples} samples, payload has {len(self.samples)}"
            )

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    def sample_ids(self) -> tuple[str, ...]:
        return tuple(rec.sample_id for rec in self.samples)

    def subset(self, sample_ids: Sequence[str]) -> "FeatureSet":
        wanted = set(sample_ids)
        samples = [rec for rec in self.samples if rec.sample_id in wanted]
        manifest = replace(
            self.manifest,
            n_samples=len(samples),
            patient_map={r.sample_id: self.manifest.patient_map.get(r.sample_id) for r in samples},
            slide_map=(
                {r.sample_id: self.manifest.slide_map[r.sample_id] for r in samples}
                if self.manifest.slide_map is not None
                else None
            ),
        )
        return FeatureSet(self.teachers, samples, manifest)


@dataclass
class SlideBag:
    """All tiles of one slide, for bag-level (WSI) tasks."""

    slide_id: str
    patient_id: str | None
    label: TaskLabel
    tiles: list[SampleRecord]

    def __post_init__(self):
        if not self.tiles:
            raise InvalidArgumentError(f"slide {self.slide_id!r} has no tiles")


def slide_bags(fs: FeatureSet) -> list[SlideBag]:
    """Group a feature set's samples into slide bags via the manifest slide map."""
    if fs.manifest.slide_map is None:
        raise InvalidArgumentError("feature set has no slide map; not a bag-level cohort")
    order: dict[str, SlideBag] = {}
    for rec in fs.samples:
        try:
            slide_id = fs.manifest.slide_map[rec.sample_id]
        except KeyError:
            raise InconsistentContainerError(f"sample {rec.sample_id!r} missing from slide map") from None
        bag = order.get(slide_id)
        if bag is None:
            order[slide_id] = SlideBag(
                slide_id=slide_id,
                patient_id=fs.manifest.patient_map.get(rec.sample_id),
                label=rec.label,
                tiles=[rec],
            )
        else:
            bag.tiles.append(rec)
    return list(order.values())


def stacked_features(
    fs_or_samples: FeatureSet | Sequence[SampleRecord],
    teachers: Sequence[TeacherSpec] | None = None,
) -> dict[tuple[int, ScaleLevel], np.ndarray]:
    """Stack per-sample vectors into (n, native_dim) float32 matrices keyed by (teacher_idx, scale)."""
    if isinstance(fs_or_samples, FeatureSet):
        samples = fs_or_samples.samples
        teachers = fs_or_samples.teachers
    else:
        samples = list(fs_or_samples)
        if teachers is None:
            if not samples:
                raise InvalidArgumentError("cannot infer teachers from an empty sample list")
            teachers = [f.teacher for f in samples[0].features]
    if not samples:
        raise InvalidArgumentError("cannot stack features for an empty cohort")
    out: dict[tuple[int, ScaleLevel], np.ndarray] = {}
    for i, _spec in enumerate(teachers):
        for scale in SCALE_ORDER:
            out[(i, scale)] = np.stack([rec.features[i].vector(scale) for rec in samples])
    return out


# --------------------------------------------------------------------------
# Synthetic teacher cohorts

_DEFAULT_DIMS = (48, 64, 32, 40, 56)
_DEFAULT_DEPTHS = (24, 32, 12, 16, 40)
_NUISANCE_DIM = 4
_LATENT_DIM = 3  # one label-latent component per scale


@dataclass(frozen=True)
class SynthConfig:
    """Recipe for a planted-structure synthetic cohort.

    Labels depend on a 3-component latent ``u``; the feature of teacher ``i``
    at scale ``s`` mixes ``strengths[i] * (emphasis_s * u)`` with a
    teacher-specific nuisance latent plus Gaussian noise, where
    ``emphasis_s`` keeps scale ``s``'s own component at 1.0 and bleeds the
    other two at ``scale_bleed``.  A teacher with strength 0 carries no
    label signal at any scale.
    """

    task: TaskKind
    n_teachers: int = 5
    n_samples: int = 200  # slides for survival, spots/tiles otherwise
    native_dims: tuple[int, ...] | None = None
    depths: tuple[int, ...] | None = None
    num_classes: int = 4
    num_genes: int = 8
    tiles_per_slide: tuple[int, int] = (8, 16)
    spots_per_slide: int = 25
    strengths: tuple[float, ...] | None = None  # default: 1.0 everywhere
    noise: float = 0.5
    scale_bleed: float = 0.3
    censor_rate: float = 0.3
    n_patients: int | None = None
    unassigned_frac: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_teachers < 1:
            raise InvalidArgumentError("n_teachers must be >= 1")
        if self.n_samples < 2:
            raise InvalidArgumentError("n_samples must be >= 2")
        if self.strengths is not None and len(self.strengths) != self.n_teachers:
            raise InvalidArgumentError("strengths must list one value per teacher")
        if self.native_dims is not None and len(self.native_dims) != self.n_teachers:
            raise InvalidArgumentError("native_dims must list one value per teacher")
        if self.depths is not None and len(self.depths) != self.n_teachers:
            raise InvalidArgumentError("depths must list one value per teacher")
        if not 0.0 <= self.censor_rate < 1.0:
            raise InvalidArgumentError("censor_rate must be in [0, 1)")
        if not 0.0 <= self.unassigned_frac < 1.0:
            raise InvalidArgumentError("unassigned_frac must be in [0, 1)")
        if self.noise < 0 or self.scale_bleed < 0:
            raise InvalidArgumentError("noise and scale_bleed must be >= 0")
        if self.tiles_per_slide[0] < 1 or self.tiles_per_slide[1] < self.tiles_per_slide[0]:
            raise InvalidArgumentError("tiles_per_slide must be a (min, max) pair with 1 <= min <= max")

    def teacher_specs(self) -> tuple[TeacherSpec, ...]:
        dims = self.native_dims or tuple(_DEFAULT_DIMS[i % len(_DEFAULT_DIMS)] for i in range(self.n_teachers))
        depths = self.depths or tuple(_DEFAULT_DEPTHS[i % len(_DEFAULT_DEPTHS)] for i in range(self.n_teachers))
        strengths = self.strengths or tuple(1.0 for _ in range(self.n_teachers))
        return tuple(
            TeacherSpec(name=f"teacher{i}", native_dim=dims[i], depth=depths[i], standalone_score=strengths[i])
            for i in range(self.n_teachers)
        )


def _scale_emphasis(bleed: float) -> dict[ScaleLevel, np.ndarray]:
    out = {}
    for scale in SCALE_ORDER:
        m = np.full(_LATENT_DIM, bleed)
        m[int(scale)] = 1.0
        out[scale] = m
    return out


def _class_edges(num_classes: int, sigma: float) -> np.ndarray:
    nd = NormalDist(0.0, sigma)
    return np.asarray([nd.inv_cdf((k + 1) / num_classes) for k in range(num_classes - 1)])


def synth_teacher_set(cfg: SynthConfig) -> FeatureSet:
    """Generate a deterministic planted-structure cohort.

    The same seed always produces a bit-identical feature set.  Planted
    per-teacher strengths are recorded in the manifest and as each
    teacher's ``standalone_score``, so downstream directional checks
    (e.g. teacher-removal ablations) know the ground truth.
    """
    rng = np.random.default_rng(cfg.seed)
    teachers = cfg.teacher_specs()
    strengths = tuple(t.standalone_score or 0.0 for t in teachers)
    emphasis = _scale_emphasis(cfg.scale_bleed)

    # Fixed mixing maps per (teacher, scale): (native_dim, latent + nuisance).
    mix = {
        (i, scale): rng.normal(size=(t.native_dim, _LATENT_DIM + _NUISANCE_DIM)) / np.sqrt(_LATENT_DIM + _NUISANCE_DIM)
        for i, t in enumerate(teachers)
        for scale in SCALE_ORDER
    }

    if cfg.task is TaskKind.SURVIVAL:
        group_sizes = rng.integers(cfg.tiles_per_slide[0], cfg.tiles_per_slide[1] + 1, size=cfg.n_samples)
        n_groups = cfg.n_samples
    elif cfg.task is TaskKind.EXPRESSION:
        n_groups = max(2, cfg.n_samples // cfg.spots_per_slide)
        base = cfg.n_samples // n_groups
        group_sizes = np.full(n_groups, base)
        group_sizes[: cfg.n_samples - base * n_groups] += 1
    else:
        n_groups = cfg.n_samples
        group_sizes = np.ones(cfg.n_samples, dtype=np.int64)

    n_patients = cfg.n_patients or max(2, n_groups // 3)
    gene_mix = rng.normal(size=(cfg.num_genes, _LATENT_DIM)) if cfg.task is TaskKind.EXPRESSION else None
    survival_w = np.array([0.8, 0.6, 1.0]) / np.linalg.norm([0.8, 0.6, 1.0])
    class_w = np.ones(_LATENT_DIM) / np.sqrt(_LATENT_DIM)
    class_edges = _class_edges(cfg.num_classes, sigma=1.0)

    samples: list[SampleRecord] = []
    patient_map: dict[str, str | None] = {}
    slide_map: dict[str, str] = {}
    sample_no = 0

    for g in range(n_groups):
        u = rng.normal(size=_LATENT_DIM)

        if cfg.task is TaskKind.CLASSIFICATION:
            score = float(u @ class_w)
            label: TaskLabel = ClassLabel(int(np.searchsorted(class_edges, score)), cfg.num_classes)
        elif cfg.task is TaskKind.EXPRESSION:
            raw = gene_mix @ u + 0.3 + 0.1 * rng.normal(size=cfg.num_genes)
            label = ExpressionLabel(np.maximum(raw, 0.0).astype(np.float32))
        else:
            risk = float(u @ survival_w)
            t_event = float(np.exp(-0.7 * risk + 0.25 * rng.normal()))
            censored = bool(rng.random() < cfg.censor_rate)
            if censored:
                time = t_event * float(rng.uniform(0.3, 0.9))
                label = SurvivalLabel(time=time, event=False)
            else:
                label = SurvivalLabel(time=t_event, event=True)

        # Unassignment is decided per group so a slide never straddles the
        # assigned/unassigned boundary.
        unassigned = g < int(round(cfg.unassigned_frac * n_groups))
        patient = None if unassigned else f"patient{g % n_patients:03d}"
        slide_id = f"slide{g:04d}"

        for _tile in range(int(group_sizes[g])):
            u_tile = u if group_sizes[g] == 1 else u + 0.15 * rng.normal(size=_LATENT_DIM)
            feats = []
            for i, spec in enumerate(teachers):
                nuisance = rng.normal(size=_NUISANCE_DIM)
                vecs = []
                for scale in SCALE_ORDER:
                    latent = np.concatenate([strengths[i] * emphasis[scale] * u_tile, nuisance])
                    vec = mix[(i, scale)] @ latent + cfg.noise * rng.normal(size=spec.native_dim)
                    vecs.append(vec.astype(np.float32))
                feats.append(MultiScaleFeature(teacher=spec, vectors=tuple(vecs)))
            sample_id = f"s{sample_no:05d}"
            sample_no += 1
            samples.append(SampleRecord(sample_id=sample_id, label=label, features=tuple(feats)))
            patient_map[sample_id] = patient
            slide_map[sample_id] = slide_id

    manifest = Manifest(
        task_kind=cfg.task,
        seed=cfg.seed,
        n_samples=len(samples),
        patient_map=patient_map,
        slide_map=slide_map if cfg.task in (TaskKind.SURVIVAL, TaskKind.EXPRESSION) else None,
        planted_mode=(
            f"latent{_LATENT_DIM};bleed={cfg.scale_bleed};noise={cfg.noise};"
            f"signal_teachers={','.join(str(i) for i, s in enumerate(strengths) if s > 0)}"
        ),
        planted_strengths=strengths,
        num_classes=cfg.num_classes if cfg.task is TaskKind.CLASSIFICATION else None,
        gene_names=(
            tuple(f"gene{j:03d}" for j in range(cfg.num_genes)) if cfg.task is TaskKind.EXPRESSION else None
        ),
        feature_source="synthetic",
        teacher_scores={t.name: float(t.standalone_score) for t in teachers if t.standalone_score is not None},
    )
    return FeatureSet(teachers=teachers, samples=samples, manifest=manifest)


# --------------------------------------------------------------------------
# Container I/O

_MAGIC = b"SHZF"
_VERSION = 1
_LABEL_TAGS = {TaskKind.CLASSIFICATION: 0, TaskKind.EXPRESSION: 1, TaskKind.SURVIVAL: 2}


def _write_str(buf: BinaryIO, text: str) -> None:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise InvalidArgumentError(f"string too long for container: {len(raw)} bytes")
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)


def _read_exact(buf: BinaryIO, n: int) -> bytes:
    raw = buf.read(n)
    if len(raw) != n:
        raise CorruptContainerError(f"truncated container: wanted {n} bytes, got {len(raw)}")
    return raw


def _read_str(buf: BinaryIO) -> str:
    (n,) = struct.unpack("<H", _read_exact(buf, 2))
    return _read_exact(buf, n).decode("utf-8")


def write_feature_set(fs: FeatureSet, path: str | Path) -> None:
    """Write ``fs`` to ``path`` (binary payload) and ``path + '.manifest'`` (text).

    Layout (little-endian): magic ``SHZF``, u16 version, u32 n_teachers,
    u32 n_samples; per teacher a length-prefixed UTF-8 name, u32 native_dim,
    u32 depth; then per sample its id, a tagged label payload
    (u8 tag: 0=class u32; 1=expression u32 length + float32 values;
    2=survival float64 time + u8 event) and the N x 3 float32 vectors in
    (teacher, LOW, MID, HIGH) order.  Float payloads round-trip bit-exactly.
    """
    path = Path(path)
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<HII", _VERSION, len(fs.teachers), len(fs.samples)))
    for t in fs.teachers:
        _write_str(buf, t.name)
        buf.write(struct.pack("<II", t.native_dim, t.depth))
    for rec in fs.samples:
        _write_str(buf, rec.sample_id)
        label = rec.label
        if isinstance(label, ClassLabel):
            buf.write(struct.pack("<BI", 0, label.class_index))
        elif isinstance(label, ExpressionLabel):
            buf.write(struct.pack("<BI", 1, label.values.size))
            buf.write(label.values.astype("<f4").tobytes())
        elif isinstance(label, SurvivalLabel):
            buf.write(struct.pack("<BdB", 2, label.time, int(label.event)))
        else:  # pragma: no cover - guarded by the type system
            raise InvalidArgumentError(f"unknown label type {type(label).__name__}")
        for feat in rec.features:
            for scale in SCALE_ORDER:
                buf.write(feat.vector(scale).astype("<f4").tobytes())
    path.write_bytes(buf.getvalue())
    _manifest_path(path).write_text(_manifest_to_text(fs.manifest), encoding="utf-8")


def _manifest_path(path: Path) -> Path:
    return path.with_name(path.name + ".manifest")


def _manifest_to_text(m: Manifest) -> str:
    lines = [
        f"task_kind={m.task_kind.value}",
        f"seed={m.seed}",
        f"n_samples={m.n_samples}",
        f"feature_source={m.feature_source}",
    ]
    if m.planted_mode is not None:
        lines.append(f"planted_mode={m.planted_mode}")
    if m.planted_strengths is not None:
        lines.append("planted_strengths=" + ",".join(repr(s) for s in m.planted_strengths))
    if m.num_classes is not None:
        lines.append(f"num_classes={m.num_classes}")
    if m.gene_names is not None:
        lines.append("gene_names=" + ",".join(m.gene_names))
    if m.teacher_scores:
        for name, score in m.teacher_scores.items():
            lines.append(f"teacher_score.{name}={score!r}")
    for sid, patient in m.patient_map.items():
        lines.append(f"patient.{sid}={'' if patient is None else patient}")
    if m.slide_map is not None:
        for sid, slide in m.slide_map.items():
            lines.append(f"slide.{sid}={slide}")
    return "\n".join(lines) + "\n"


def _manifest_from_text(text: str) -> Manifest:
    pairs: list[tuple[str, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise CorruptContainerError(f"manifest line {lineno} is not key=value: {line!r}")
        key, _, value = line.partition("=")
        pairs.append((key, value))
    kv = dict(pairs)
    try:
        task_kind = TaskKind(kv["task_kind"])
        seed = int(kv["seed"])
        n_samples = int(kv["n_samples"])
    except KeyError as exc:
        raise CorruptContainerError(f"manifest missing required key: {exc.args[0]}") from None
    except ValueError as exc:
        raise CorruptContainerError(f"manifest has malformed value: {exc}") from None
    patient_map: dict[str, str | None] = {}
    slide_map: dict[str, str] = {}
    teacher_scores: dict[str, float] = {}
    for key, value in pairs:
        if key.startswith("patient."):
            patient_map[key[len("patient."):]] = value or None
        elif key.startswith("slide."):
            slide_map[key[len("slide."):]] = value
        elif key.startswith("teacher_score."):
            teacher_scores[key[len("teacher_score."):]] = float(value)
    return Manifest(
        task_kind=task_kind,
        seed=seed,
        n_samples=n_samples,
        patient_map=patient_map,
        slide_map=slide_map or None,
        planted_mode=kv.get("planted_mode"),
        planted_strengths=(
            tuple(float(x) for x in kv["planted_strengths"].split(",")) if "planted_strengths" in kv else None
        ),
        num_classes=int(kv["num_classes"]) if "num_classes" in kv else None,
        gene_names=tuple(kv["gene_names"].split(",")) if "gene_names" in kv else None,
        feature_source=kv.get("feature_source", "unspecified"),
        teacher_scores=teacher_scores or None,
    )


def read_feature_set(path: str | Path) -> FeatureSet:
    """Read a feature container written by :func:`write_feature_set`.

    This is also the import path for features extracted from real encoders:
    any tool that emits this layout (and a manifest) plugs in here.  Whether
    vectors are class tokens or pooled patch tokens is the extractor's
    choice, recorded in the manifest's ``feature_source`` field.
    """
    path = Path(path)
    if not path.exists():
        raise InvalidArgumentError(f"no such container: {path}")
    manifest_path = _manifest_path(path)
    if not manifest_path.exists():
        raise CorruptContainerError(f"missing manifest: {manifest_path}")
    manifest = _manifest_from_text(manifest_path.read_text(encoding="utf-8"))

    buf = io.BytesIO(path.read_bytes())
    magic = buf.read(4)
    if magic != _MAGIC:
        raise CorruptContainerError(f"bad magic {magic!r}; not a feature container")
    version, n_teachers, n_samples = struct.unpack("<HII", _read_exact(buf, 10))
    if version != _VERSION:
        raise UnsupportedFormatError(f"container version {version} not supported (expected {_VERSION})")
    if n_samples != manifest.n_samples:
        raise InconsistentContainerError(
            f"payload has {n_samples} samples but manifest declares {manifest.n_samples}"
        )

    teachers = []
    for i in range(n_teachers):
        name = _read_str(buf)
        native_dim, depth = struct.unpack("<II", _read_exact(buf, 8))
        score = manifest.teacher_scores.get(name) if manifest.teacher_scores else None
        teachers.append(TeacherSpec(name=name, native_dim=native_dim, depth=depth, standalone_score=score))
    teachers = tuple(teachers)

    samples: list[SampleRecord] = []
    for _ in range(n_samples):
        sample_id = _read_str(buf)
        (tag,) = struct.unpack("<B", _read_exact(buf, 1))
        label: TaskLabel
        if tag == 0:
            (class_index,) = struct.unpack("<I", _read_exact(buf, 4))
            if manifest.num_classes is None:
                raise InconsistentContainerError("class labels present but manifest lacks num_classes")
            label = ClassLabel(class_index, manifest.num_classes)
        elif tag == 1:
            (length,) = struct.unpack("<I", _read_exact(buf, 4))
            values = np.frombuffer(_read_exact(buf, 4 * length), dtype="<f4").copy()
            label = ExpressionLabel(values)
        elif tag == 2:
            time, event = struct.unpack("<dB", _read_exact(buf, 9))
            label = SurvivalLabel(time=float(time), event=bool(event))
        else:
            raise CorruptContainerError(f"unknown label tag {tag} for sample {sample_id!r}")
        feats = []
        for spec in teachers:
            vecs = []
            for _scale in SCALE_ORDER:
                raw = _read_exact(buf, 4 * spec.native_dim)
                arr = np.frombuffer(raw, dtype="<f4").copy()
                if not np.all(np.isfinite(arr)):
                    raise CorruptContainerError(
                        f"non-finite feature values for sample {sample_id!r}, teacher {spec.name!r}"
                    )
                vecs.append(arr)
            feats.append(MultiScaleFeature(teacher=spec, vectors=tuple(vecs)))
        samples.append(SampleRecord(sample_id=sample_id, label=label, features=tuple(feats)))
    trailing = buf.read(1)
    if trailing:
        raise CorruptContainerError("container has trailing bytes after the declared samples")
    return FeatureSet(teachers=teachers, samples=samples, manifest=manifest)


# --------------------------------------------------------------------------
# Patient-level splits


@dataclass(frozen=True)
class Fold:
    """One cross-validation fold: sample ids, not indices."""

    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


def patient_split(fs: FeatureSet, k: int, seed: int = 0) -> list[Fold]:
    """Patient-stratified k-fold split.

    ``k`` is clamped to the number of identified patients.  All samples of a
    patient land in the same test fold exactly once; samples without a
    patient id appear in every training split and never in a test split.
    """
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    patients = sorted({p for p in fs.manifest.patient_map.values() if p is not None})
    if not patients:
        raise InvalidArgumentError("no identified patients; cannot build patient-level folds")
    k_eff = min(k, len(patients))
    order = np.random.default_rng(seed).permutation(len(patients))
    groups = np.array_split([patients[i] for i in order], k_eff)

    folds = []
    for group in groups:
        test_patients = set(group.tolist())
        test_ids = []
        train_ids = []
        for rec in fs.samples:
            patient = fs.manifest.patient_map.get(rec.sample_id)
            if patient is not None and patient in test_patients:
                test_ids.append(rec.sample_id)
            else:
                train_ids.append(rec.sample_id)
        folds.append(Fold(train_ids=tuple(train_ids), test_ids=tuple(test_ids)))
    return folds
