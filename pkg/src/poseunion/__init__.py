"""Unified-skeleton pose learning: schema algebra, annotation conversion,
conditional keypoint / multi-teacher distillation losses, pose metrics and a
desk-scale synthetic training harness."""

from poseunion.schema import (
    COCO17,
    HALPE26,
    MPII16,
    SchemaError,
    SchemaMapping,
    SkeletonSchema,
    UnionSchema,
    build_union,
    get_schema,
    mapping_into,
    overlap,
    unique_to,
)

__version__ = "0.1.0"

__all__ = [
    "COCO17",
    "HALPE26",
    "MPII16",
    "SchemaError",
    "SchemaMapping",
    "SkeletonSchema",
    "UnionSchema",
    "build_union",
    "get_schema",
    "mapping_into",
    "overlap",
    "unique_to",
]
