"""COCO-dialect keypoint annotation parsing and the unified 21-slot format.

MPII and Halpe are read in their COCO-dialect JSON conversions, so one parser
covers all three datasets. Unlabeled union slots hold the (0, 0) sentinel with
``mask == False``; consumers branch on the mask, never on the coordinates.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from poseunion.schema import HALPE26_ALIASES, SchemaMapping, SkeletonSchema, UnionSchema, resolve_alias

log = logging.getLogger(__name__)


class AnnotationFormatError(ValueError):
    """Input annotations do not follow the expected structure."""


@dataclass
class RawInstance:
    image_id: int
    bbox: tuple[float, float, float, float]
    area: float
    triplets: np.ndarray  # (K, 3): x, y, v in source order
    source_id: str
    id: int = 0

    def __post_init__(self):
        self.triplets = np.asarray(self.triplets, dtype=np.float64).reshape(-1, 3)
        v = self.triplets[:, 2]
        if not np.all(np.isin(v, (0, 1, 2))):
            raise AnnotationFormatError(f"annotation {self.id}: visibility flags must be 0, 1 or 2")
        if self.bbox is not None and (self.bbox[2] <= 0 or self.bbox[3] <= 0):
            raise AnnotationFormatError(f"annotation {self.id}: bbox width/height must be positive")

    @property
    def num_keypoints(self) -> int:
        return int(np.count_nonzero(self.triplets[:, 2] > 0))

    def __eq__(self, other):
        if not isinstance(other, RawInstance):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and tuple(self.bbox) == tuple(other.bbox)
            and self.area == other.area
            and self.source_id == other.source_id
            and self.id == other.id
            and np.array_equal(self.triplets, other.triplets)
        )


@dataclass
class UnifiedInstance:
    image_id: int
    bbox: tuple[float, float, float, float]
    area: float
    coords: np.ndarray  # (K, 2)
    mask: np.ndarray  # (K,) bool
    vis: np.ndarray  # (K,) int
    score: float | None = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 2)
        self.mask = np.asarray(self.mask, dtype=bool).reshape(-1)
        self.vis = np.asarray(self.vis, dtype=np.int64).reshape(-1)
        if not (len(self.coords) == len(self.mask) == len(self.vis)):
            raise AnnotationFormatError("coords, mask and vis must have the same length")

    def __len__(self) -> int:
        return len(self.mask)

    def __eq__(self, other):
        if not isinstance(other, UnifiedInstance):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and tuple(self.bbox) == tuple(other.bbox)
            and self.area == other.area
            and self.score == other.score
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.vis, other.vis)
        )

    def copy(self) -> "UnifiedInstance":
        return UnifiedInstance(
            self.image_id, tuple(self.bbox), self.area,
            self.coords.copy(), self.mask.copy(), self.vis.copy(), self.score,
        )

    def normalized_coords(self) -> np.ndarray:
        """Coordinates in bbox units; unlabeled slots stay at 0."""
        x, y, w, h = self.bbox
        out = (self.coords - np.array([x, y])) / np.array([w, h])
        out[~self.mask] = 0.0
        return out


@dataclass
class DatasetDescriptor:
    id: str
    schema: SkeletonSchema
    instance_count: int
    file_digest: str
    skipped_empty: int = 0
    skipped_crowd: int = 0
    extra: dict = field(default_factory=dict)


def _require(ann: dict, key: str):
    if key not in ann:
        raise AnnotationFormatError(f"annotation {ann.get('id', '?')}: missing {key!r}")
    return ann[key]


def parse_keypoint_json(
    data: bytes | BinaryIO, schema: SkeletonSchema
) -> tuple[DatasetDescriptor, list[RawInstance]]:
    """Parse a COCO-dialect keypoint file against ``schema``.

    Annotations with ``num_keypoints == 0`` and crowd regions are counted in
    the descriptor but not returned.
    """
    raw = data if isinstance(data, (bytes, bytearray)) else data.read()
    digest = hashlib.sha256(raw).hexdigest()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise AnnotationFormatError(f"malformed JSON at byte offset {exc.pos}: {exc.msg}") from exc
    except UnicodeDecodeError as exc:
        raise AnnotationFormatError(f"undecodable input at byte offset {exc.start}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("annotations"), list):
        raise AnnotationFormatError("expected a top-level object with an 'annotations' list")

    for cat in doc.get("categories") or []:
        names = cat.get("keypoints") if isinstance(cat, dict) else None
        if names and len(names) == len(schema):
            resolved = [resolve_alias(n, HALPE26_ALIASES) for n in names]
            if resolved != list(schema.keypoints):
                raise AnnotationFormatError(
                    f"category {cat.get('id')} keypoint names disagree with schema {schema.id!r}"
                )

    n_kp = len(schema)
    out: list[RawInstance] = []
    empty = crowd = 0
    for ann in doc["annotations"]:
        if not isinstance(ann, dict):
            raise AnnotationFormatError("annotation entries must be objects")
        kps = _require(ann, "keypoints")
        if len(kps) != 3 * n_kp:
            raise AnnotationFormatError(
                f"annotation {ann.get('id', '?')}: {len(kps)} keypoint values, expected {3 * n_kp} "
                f"for schema {schema.id!r}"
            )
        bbox = ann.get("bbox")
        if bbox is None or len(bbox) != 4:
            raise AnnotationFormatError(f"annotation {ann.get('id', '?')}: missing bbox")
        if ann.get("iscrowd", 0):
            crowd += 1
            continue
        trip = np.asarray(kps, dtype=np.float64).reshape(n_kp, 3)
        nk = ann.get("num_keypoints")
        if nk is None:
            nk = int(np.count_nonzero(trip[:, 2] > 0))
        if nk < 1:
            empty += 1
            continue
        area = ann.get("area")
        if area is None:
            area = float(bbox[2]) * float(bbox[3])
        out.append(
            RawInstance(
                image_id=int(_require(ann, "image_id")),
                bbox=tuple(float(b) for b in bbox),
                area=float(area),
                triplets=trip,
                source_id=schema.id,
                id=int(ann.get("id", len(out))),
            )
        )
    desc = DatasetDescriptor(schema.id, schema, len(out), digest, empty, crowd)
    return desc, out


def write_keypoint_json(instances: Sequence[RawInstance], schema: SkeletonSchema, sink: BinaryIO) -> None:
    """Emit ``instances`` as a COCO-dialect keypoint file."""
    images = sorted({r.image_id for r in instances})
    doc = {
        "images": [{"id": i} for i in images],
        "annotations": [
            {
                "id": r.id,
                "image_id": r.image_id,
                "category_id": 1,
                "iscrowd": 0,
                "bbox": list(r.bbox),
                "area": r.area,
                "num_keypoints": r.num_keypoints,
                "keypoints": [float(v) if i % 3 < 2 else int(v) for i, v in enumerate(r.triplets.ravel())],
            }
            for r in instances
        ],
        "categories": [{"id": 1, "name": "person", "keypoints": list(schema.keypoints)}],
    }
    sink.write(json.dumps(doc).encode())


def remap_to_union(raw: RawInstance, mapping: SchemaMapping, union_size: int) -> UnifiedInstance:
    if mapping.source_id != raw.source_id:
        raise ValueError(f"mapping for {mapping.source_id!r} applied to {raw.source_id!r} instance")
    if len(mapping) != len(raw.triplets):
        raise ValueError("mapping length does not match instance keypoints")
    coords = np.zeros((union_size, 2))
    mask = np.zeros(union_size, dtype=bool)
    vis = np.zeros(union_size, dtype=np.int64)
    for k, slot in enumerate(mapping.index_map):
        if slot < 0:
            continue
        if slot >= union_size:
            raise AssertionError(f"union slot {slot} out of range for size {union_size}")
        x, y, v = raw.triplets[k]
        if v > 0:
            coords[slot] = (x, y)
            mask[slot] = True
            vis[slot] = int(v)
    return UnifiedInstance(raw.image_id, tuple(raw.bbox), raw.area, coords, mask, vis)


def synthesize_thorax(inst: UnifiedInstance, union: UnionSchema) -> tuple[UnifiedInstance, bool]:
    """Fill an unlabeled thorax slot with the shoulder midpoint.

    Returns the (possibly new) instance and whether a thorax was synthesized.
    """
    th = union.index("thorax")
    ls, rs = union.index("left_shoulder"), union.index("right_shoulder")
    if inst.mask[th] or not (inst.mask[ls] and inst.mask[rs]):
        return inst, False
    out = inst.copy()
    out.coords[th] = (inst.coords[ls] + inst.coords[rs]) / 2
    out.mask[th] = True
    out.vis[th] = min(inst.vis[ls], inst.vis[rs])
    return out, True


def convert_instances(
    raws: Iterable[RawInstance],
    mapping: SchemaMapping,
    union: UnionSchema,
    *,
    thorax: bool = False,
) -> tuple[list[UnifiedInstance], dict]:
    stats = {"converted": 0, "thorax_synthesized": 0, "dropped_keypoints": list(mapping.dropped)}
    if mapping.dropped:
        log.warning("dropping %d keypoints without a union slot: %s", len(mapping.dropped), ", ".join(mapping.dropped))
    out = []
    for r in raws:
        u = remap_to_union(r, mapping, len(union))
        if thorax:
            u, made = synthesize_thorax(u, union)
            stats["thorax_synthesized"] += int(made)
        out.append(u)
        stats["converted"] += 1
    return out, stats


def _instance_to_dict(u: UnifiedInstance) -> dict:
    d = {
        "image_id": int(u.image_id),
        "bbox": [float(b) for b in u.bbox],
        "area": float(u.area),
        "coords": u.coords.tolist(),
        "mask": [bool(m) for m in u.mask],
        "vis": [int(v) for v in u.vis],
    }
    if u.score is not None:
        d["score"] = float(u.score)
    return d


def write_unified(instances: Sequence[UnifiedInstance], union: UnionSchema, sink: BinaryIO) -> None:
    n = len(union)
    for u in instances:
        if len(u) != n:
            raise ValueError(f"instance sized {len(u)} does not match union of {n}")
    doc = {"schema": list(union.keypoints), "instances": [_instance_to_dict(u) for u in instances]}
    sink.write(json.dumps(doc).encode())


def read_unified(data: bytes | BinaryIO) -> tuple[list[str], list[UnifiedInstance]]:
    raw = data if isinstance(data, (bytes, bytearray)) else data.read()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise AnnotationFormatError(f"malformed JSON at byte offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(doc, dict) or "schema" not in doc or "instances" not in doc:
        raise AnnotationFormatError("unified file needs 'schema' and 'instances'")
    names = list(doc["schema"])
    out = []
    for i, d in enumerate(doc["instances"]):
        try:
            u = UnifiedInstance(
                int(d["image_id"]), tuple(float(b) for b in d["bbox"]), float(d["area"]),
                np.asarray(d["coords"], dtype=np.float64), d["mask"], d["vis"], d.get("score"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise AnnotationFormatError(f"instance {i}: {exc}") from exc
        if len(u) != len(names):
            raise AnnotationFormatError(f"instance {i}: {len(u)} slots, schema has {len(names)}")
        out.append(u)
    return names, out
