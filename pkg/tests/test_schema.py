import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from poseunion.schema import (
    COCO17,
    HALPE26,
    MPII16,
    MappingError,
    SchemaError,
    SkeletonSchema,
    build_union,
    get_schema,
    load_schema_file,
    mapping_into,
    overlap,
    resolve_alias,
    unique_to,
)

names = st.lists(st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True), unique=True, max_size=12)


def test_coco_mpii_counts(union):
    assert len(union) == 21
    assert len(overlap(COCO17, MPII16)) == 12
    assert unique_to(COCO17, MPII16) == ["nose", "left_eye", "right_eye", "left_ear", "right_ear"]
    assert sorted(unique_to(MPII16, COCO17)) == ["head_top", "pelvis", "thorax", "upper_neck"]


def test_union_order_and_provenance(union):
    assert union.keypoints[:17] == COCO17.keypoints
    assert union.keypoints[17:] == ("pelvis", "thorax", "upper_neck", "head_top")
    prov = dict(zip(union.keypoints, union.provenance))
    assert prov["nose"] == {"coco17"}
    assert prov["left_hip"] == {"coco17", "mpii16"}
    assert prov["head_top"] == {"mpii16"}


def test_mapping_is_injective(union):
    for s in (COCO17, MPII16):
        m = mapping_into(s, union)
        assert len(set(m.index_map)) == len(s)
        assert [union.keypoints[i] for i in m.index_map] == list(s.keypoints)


def test_halpe_aliases_and_dropped_feet(union):
    assert "head_top" in HALPE26.keypoints and "upper_neck" in HALPE26.keypoints and "pelvis" in HALPE26.keypoints
    with pytest.raises(MappingError):
        mapping_into(HALPE26, union)
    m = mapping_into(HALPE26, union, drop_missing=True)
    assert len(m.dropped) == 6 and all("toe" in d or "heel" in d for d in m.dropped)
    assert sum(i < 0 for i in m.index_map) == 6
    assert resolve_alias("neck") == "upper_neck"


@pytest.mark.parametrize("bad", [("a", "a"), ("Nose",), ("1x",), ("left-eye",)])
def test_bad_names(bad):
    with pytest.raises(SchemaError):
        SkeletonSchema("x", bad)


def test_schema_file_roundtrip(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"id": "mine", "keypoints": ["a", "neck"], "aliases": {}}))
    s = load_schema_file(p)
    assert s.keypoints == ("a", "upper_neck")
    assert get_schema(str(p)) == s
    (tmp_path / "bad.json").write_text("{oops")
    with pytest.raises(SchemaError, match="byte"):
        load_schema_file(tmp_path / "bad.json")
    with pytest.raises(SchemaError):
        get_schema("nope17")


@given(names, names)
def test_union_size_identity(a, b):
    sa, sb = SkeletonSchema("a", tuple(a)), SkeletonSchema("b", tuple(b))
    u = build_union([sa, sb])
    assert len(u) == len(a) + len(b) - len(overlap(sa, sb))
    assert len(u) == len(overlap(sa, sb)) + len(unique_to(sa, sb)) + len(unique_to(sb, sa))
    assert set(build_union([sb, sa]).keypoints) == set(u.keypoints)
    assert build_union([sa, sa]).keypoints == sa.keypoints
