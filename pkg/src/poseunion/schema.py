"""Set algebra over skeleton definitions.

A :class:`SkeletonSchema` is the ordered keypoint list of one dataset. The
union of several schemas is the superset skeleton the student predicts; a
:class:`SchemaMapping` sends each source keypoint index to its union slot.
Keypoint identity is plain string equality after alias resolution.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

_NAME_RE = re.compile(r"^[a-z][a-z0-9_]*$")

# aliases applied to every schema
GLOBAL_ALIASES: dict[str, str] = {"neck": "upper_neck"}


class SchemaError(ValueError):
    """Invalid schema definition (bad name, duplicate keypoint, ...)."""


class MappingError(SchemaError):
    """A source keypoint has no slot in the target union."""


def _check_name(name: str) -> str:
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise SchemaError(f"invalid keypoint name {name!r}")
    return name


def resolve_alias(name: str, aliases: Mapping[str, str] | None = None) -> str:
    if aliases and name in aliases:
        return aliases[name]
    return GLOBAL_ALIASES.get(name, name)


@dataclass(frozen=True)
class SkeletonSchema:
    """Keypoints of one dataset in native annotation order."""

    id: str
    keypoints: tuple[str, ...]

    def __post_init__(self):
        kps = tuple(_check_name(k) for k in self.keypoints)
        seen: set[str] = set()
        for k in kps:
            if k in seen:
                raise SchemaError(f"schema {self.id!r}: duplicate keypoint {k!r}")
            seen.add(k)
        object.__setattr__(self, "keypoints", kps)

    @classmethod
    def from_names(cls, id: str, names: Iterable[str], aliases: Mapping[str, str] | None = None):
        return cls(id, tuple(resolve_alias(n, aliases) for n in names))

    def __len__(self) -> int:
        return len(self.keypoints)

    def index(self, name: str) -> int:
        return self.keypoints.index(name)

    def to_dict(self) -> dict:
        return {"id": self.id, "keypoints": list(self.keypoints), "aliases": {}}


@dataclass(frozen=True)
class UnionSchema:
    """Superset skeleton with per-keypoint provenance."""

    keypoints: tuple[str, ...]
    provenance: tuple[frozenset[str], ...]
    sources: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.keypoints)

    def index(self, name: str) -> int:
        return self.keypoints.index(name)

    def slots(self, names: Iterable[str]) -> list[int]:
        return [self.keypoints.index(n) for n in names]

    def as_schema(self, id: str = "union") -> SkeletonSchema:
        return SkeletonSchema(id, self.keypoints)


@dataclass(frozen=True)
class SchemaMapping:
    """``index_map[k]`` is the union slot of source keypoint ``k``.

    Entries are ``-1`` only for keypoints listed in ``dropped`` (partial
    mappings, e.g. Halpe foot points that have no union slot).
    """

    source_id: str
    index_map: tuple[int, ...]
    dropped: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.index_map)

    @property
    def targets(self) -> list[int]:
        return [i for i in self.index_map if i >= 0]


def build_union(schemas: Sequence[SkeletonSchema]) -> UnionSchema:
    """First schema in native order, then each later schema's unseen names."""
    if not schemas:
        raise SchemaError("build_union needs at least one schema")
    order: list[str] = []
    prov: dict[str, set[str]] = {}
    for s in schemas:
        if len(set(s.keypoints)) != len(s.keypoints):
            raise SchemaError(f"schema {s.id!r} has duplicate keypoints")
        for k in s.keypoints:
            if k not in prov:
                prov[k] = set()
                order.append(k)
            prov[k].add(s.id)
    return UnionSchema(
        keypoints=tuple(order),
        provenance=tuple(frozenset(prov[k]) for k in order),
        sources=tuple(s.id for s in schemas),
    )


def overlap(a: SkeletonSchema, b: SkeletonSchema) -> list[str]:
    other = set(b.keypoints)
    return [k for k in a.keypoints if k in other]


def unique_to(a: SkeletonSchema, b: SkeletonSchema) -> list[str]:
    other = set(b.keypoints)
    return [k for k in a.keypoints if k not in other]


def mapping_into(
    source: SkeletonSchema | UnionSchema,
    union: UnionSchema,
    *,
    drop_missing: bool = False,
) -> SchemaMapping:
    lookup = {k: i for i, k in enumerate(union.keypoints)}
    index_map: list[int] = []
    dropped: list[str] = []
    for k in source.keypoints:
        if k in lookup:
            index_map.append(lookup[k])
        elif drop_missing:
            index_map.append(-1)
            dropped.append(k)
        else:
            raise MappingError(f"keypoint {k!r} of {getattr(source, 'id', 'union')!r} is absent from the union")
    return SchemaMapping(getattr(source, "id", "union"), tuple(index_map), tuple(dropped))


COCO17 = SkeletonSchema(
    "coco17",
    (
        "nose", "left_eye", "right_eye", "left_ear", "right_ear",
        "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
        "left_wrist", "right_wrist", "left_hip", "right_hip",
        "left_knee", "right_knee", "left_ankle", "right_ankle",
    ),
)

# native MPII order
MPII16 = SkeletonSchema(
    "mpii16",
    (
        "right_ankle", "right_knee", "right_hip", "left_hip", "left_knee", "left_ankle",
        "pelvis", "thorax", "upper_neck", "head_top",
        "right_wrist", "right_elbow", "right_shoulder",
        "left_shoulder", "left_elbow", "left_wrist",
    ),
)

HALPE26_ALIASES = {"head": "head_top", "hip": "pelvis"}

HALPE26 = SkeletonSchema.from_names(
    "halpe26",
    (
        "nose", "left_eye", "right_eye", "left_ear", "right_ear",
        "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
        "left_wrist", "right_wrist", "left_hip", "right_hip",
        "left_knee", "right_knee", "left_ankle", "right_ankle",
        "head", "neck", "hip",
        "left_big_toe", "right_big_toe", "left_small_toe", "right_small_toe",
        "left_heel", "right_heel",
    ),
    HALPE26_ALIASES,
)

_REGISTRY: dict[str, SkeletonSchema] = {s.id: s for s in (COCO17, MPII16, HALPE26)}


def register_schema(schema: SkeletonSchema) -> None:
    _REGISTRY[schema.id] = schema


def registered() -> list[str]:
    return sorted(_REGISTRY)


def load_schema_file(path: str | Path) -> SkeletonSchema:
    """Read ``{"id": str, "keypoints": [...], "aliases": {...}}``."""
    with open(path, "rb") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: malformed JSON at byte {exc.pos}") from exc
    if not isinstance(doc, dict) or "id" not in doc or "keypoints" not in doc:
        raise SchemaError(f"{path}: schema file needs 'id' and 'keypoints'")
    aliases = doc.get("aliases") or {}
    return SkeletonSchema.from_names(str(doc["id"]), doc["keypoints"], aliases)


def get_schema(ref: str) -> SkeletonSchema:
    """Look up a registered schema id, or load a schema file path."""
    if ref in _REGISTRY:
        return _REGISTRY[ref]
    p = Path(ref)
    if p.suffix == ".json" or p.exists():
        return load_schema_file(p)
    raise SchemaError(f"unknown schema {ref!r}; registered: {', '.join(registered())}")


def coco_mpii_union() -> UnionSchema:
    return build_union([COCO17, MPII16])
