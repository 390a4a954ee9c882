"""Structure validation, tree distances, and structure (de)serialization."""

import numpy as np
import pytest

from hierfusion.exceptions import (
    DuplicateSubclass,
    EmptySuperclass,
    IdOutOfRange,
    OrphanSubclass,
    StructureError,
    SubclassSpaceMismatch,
    UnknownSubclass,
    UnknownSuperclass,
)
from hierfusion.taxonomy import (
    ROOT,
    StructureSet,
    augmented_set,
    lca_height,
    lca_heights,
    load_structure,
    load_structure_set,
    save_structure,
    structure_from_dict,
    structure_to_dict,
    superclass_of,
    tie_distance,
    validate_structure,
)
from oracles import random_structure


def small_structure(name="t"):
    return validate_structure(
        name=name,
        superclasses=["animal", "vehicle"],
        subclass_names=["cat", "dog", "car"],
        parent_of={"cat": "animal", "dog": "animal", "car": "vehicle"},
    )


def test_validate_happy_path():
    s = small_structure()
    assert s.subclass_count == 3
    assert s.superclass_count == 2
    assert list(s.parent_index) == [0, 0, 1]
    assert s.subclass_names == ("cat", "dog", "car")
    assert s.superclasses == ("animal", "vehicle")


def test_superclass_ids_are_namespaced():
    s = small_structure(name="wordnet")
    assert s.superclass_id(0) == "wordnet/animal"
    assert s.parent_of(2) == "wordnet/vehicle"
    assert superclass_of(s, 0) == 0
    assert superclass_of(s, 2) == 1


def test_validate_unknown_superclass():
    with pytest.raises(UnknownSuperclass):
        validate_structure(
            name="t",
            superclasses=["animal"],
            subclass_names=["cat", "car"],
            parent_of={"cat": "animal", "car": "vehicle"},
        )


def test_validate_empty_superclass():
    with pytest.raises(EmptySuperclass):
        validate_structure(
            name="t",
            superclasses=["animal", "vehicle"],
            subclass_names=["cat", "dog"],
            parent_of={"cat": "animal", "dog": "animal"},
        )


def test_validate_orphan_subclass():
    with pytest.raises(OrphanSubclass):
        validate_structure(
            name="t",
            superclasses=["animal"],
            subclass_names=["cat", "dog"],
            parent_of={"cat": "animal"},
        )


def test_validate_unknown_subclass_in_parent_map():
    with pytest.raises(UnknownSubclass):
        validate_structure(
            name="t",
            superclasses=["animal"],
            subclass_names=["cat"],
            parent_of={"cat": "animal", "ghost": "animal"},
        )


def test_validate_duplicate_names():
    with pytest.raises(DuplicateSubclass):
        validate_structure(
            name="t",
            superclasses=["animal"],
            subclass_names=["cat", "cat"],
            parent_of={"cat": "animal"},
        )
    with pytest.raises(StructureError):
        validate_structure(
            name="t",
            superclasses=["animal", "animal"],
            subclass_names=["cat", "dog"],
            parent_of={"cat": "animal", "dog": "animal"},
        )


def test_tie_distance_three_cases():
    s = small_structure()
    assert tie_distance(s, 0, 0) == 0
    assert tie_distance(s, 0, 1) == 2
    assert tie_distance(s, 0, 2) == 4
    assert tie_distance(s, 2, 0) == 4


def test_lca_height_three_cases():
    s = small_structure()
    assert lca_height(s, 1, 1) == 0
    assert lca_height(s, 0, 1) == 1
    assert lca_height(s, 1, 2) == 2


def test_distance_id_range_checks():
    s = small_structure()
    with pytest.raises(IdOutOfRange):
        tie_distance(s, 0, 3)
    with pytest.raises(IdOutOfRange):
        lca_height(s, -1, 0)
    with pytest.raises(IdOutOfRange):
        lca_heights(s, np.array([0, 3]), np.array([0, 0]))
    with pytest.raises(IdOutOfRange):
        augmented_set(s, 5)


def test_lca_heights_matches_scalar():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(2, 12))
        s = random_structure(rng, n)
        c = rng.integers(0, n, size=30)
        c_hat = rng.integers(0, n, size=30)
        vec = lca_heights(s, c, c_hat)
        ref = [lca_height(s, int(a), int(b)) for a, b in zip(c, c_hat)]
        assert vec.tolist() == ref


def test_augmented_set_contents():
    s = small_structure(name="t")
    assert augmented_set(s, 0) == frozenset({ROOT, "t/animal", 0})
    assert augmented_set(s, 2) == frozenset({ROOT, "t/vehicle", 2})
    # Every augmented set has exactly three nodes: leaf, parent, root.
    for c in range(3):
        assert len(augmented_set(s, c)) == 3


def test_augmented_overlap_tracks_lca_height():
    s = small_structure()
    # identical leaves share all 3 nodes, siblings 2, cross-super 1
    assert len(augmented_set(s, 0) & augmented_set(s, 0)) == 3
    assert len(augmented_set(s, 0) & augmented_set(s, 1)) == 2
    assert len(augmented_set(s, 0) & augmented_set(s, 2)) == 1


def test_distance_identities_random_structures():
    rng = np.random.default_rng(123)
    for _ in range(50):
        n = int(rng.integers(2, 15))
        s = random_structure(rng, n)
        a = int(rng.integers(0, n))
        b = int(rng.integers(0, n))
        tie = tie_distance(s, a, b)
        lca = lca_height(s, a, b)
        assert tie == 2 * lca
        assert tie == tie_distance(s, b, a)
        assert (tie == 0) == (a == b)
        overlap = len(augmented_set(s, a) & augmented_set(s, b))
        assert overlap == 3 - lca


def test_structure_set_rejects_mismatched_name_tables():
    a = small_structure(name="a")
    b = validate_structure(
        name="b",
        superclasses=["x"],
        subclass_names=["cat", "dog", "truck"],
        parent_of={"cat": "x", "dog": "x", "truck": "x"},
    )
    with pytest.raises(SubclassSpaceMismatch):
        StructureSet((a, b))


def test_structure_set_basic_access():
    a = small_structure(name="a")
    b = validate_structure(
        name="b",
        superclasses=["all"],
        subclass_names=["cat", "dog", "car"],
        parent_of={"cat": "all", "dog": "all", "car": "all"},
    )
    pair = StructureSet((a, b))
    assert len(pair) == 2
    assert pair[1] is b
    assert [s.name for s in pair] == ["a", "b"]
    assert pair.subclass_count == 3
    assert pair.subclass_names == ("cat", "dog", "car")


def test_empty_structure_set_has_no_id_space():
    empty = StructureSet(())
    assert len(empty) == 0
    with pytest.raises(SubclassSpaceMismatch):
        empty.subclass_count
    with pytest.raises(SubclassSpaceMismatch):
        empty.subclass_names


def test_dict_round_trip():
    s = small_structure(name="rt")
    raw = structure_to_dict(s)
    assert raw["name"] == "rt"
    assert raw["superclasses"] == ["animal", "vehicle"]
    assert raw["subclasses"] == ["cat", "dog", "car"]
    assert raw["parent_of"] == {"cat": "animal", "dog": "animal", "car": "vehicle"}
    assert structure_from_dict(raw) == s


def test_file_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    for i in range(5):
        s = random_structure(rng, int(rng.integers(2, 10)), name=f"h{i}")
        path = tmp_path / f"h{i}.json"
        save_structure(s, path)
        assert load_structure(path) == s


def test_load_structure_set_checks_shared_space(tmp_path):
    a = small_structure(name="a")
    b = validate_structure(
        name="b",
        superclasses=["x"],
        subclass_names=["cat", "dog"],
        parent_of={"cat": "x", "dog": "x"},
    )
    pa, pb = tmp_path / "a.json", tmp_path / "b.json"
    save_structure(a, pa)
    save_structure(b, pb)
    with pytest.raises(SubclassSpaceMismatch):
        load_structure_set([pa, pb])


def test_equality_and_hash():
    s1 = small_structure()
    s2 = small_structure()
    assert s1 == s2
    assert hash(s1) == hash(s2)
    s3 = small_structure(name="other")
    assert s1 != s3
