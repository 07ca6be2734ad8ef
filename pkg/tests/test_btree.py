import math
import random

import pytest

from hexakg.btree import MAX_KEY, BPlusTree, tree_key
from hexakg.errors import StorageError


def test_put_get_small(tmp_path):
    path = str(tmp_path / "t.btree")
    with BPlusTree(path, writable=True) as tree:
        tree.put(b"b", b"2")
        tree.put(b"a", b"1")
        tree.put(b"c", b"3")
        assert tree.get(b"a") == b"1"
        assert tree.get(b"missing") is None
        assert [k for k, _ in tree.items()] == [b"a", b"b", b"c"]


def test_overwrite(tmp_path):
    path = str(tmp_path / "t.btree")
    with BPlusTree(path, writable=True) as tree:
        tree.put(b"k", b"1")
        tree.put(b"k", b"2")
        assert tree.get(b"k") == b"2"
        assert tree.count == 1


def test_randomized_against_dict(tmp_path):
    rng = random.Random(3)
    path = str(tmp_path / "t.btree")
    reference = {}
    with BPlusTree(path, writable=True) as tree:
        for _ in range(20_000):
            key = f"key-{rng.randint(0, 7000)}".encode()
            value = rng.randbytes(rng.randint(0, 12))
            reference[key] = value
            tree.put(key, value)
        for key, value in reference.items():
            assert tree.get(key) == value
        assert list(tree.items()) == sorted(reference.items())
    # reopen read-only: everything still there
    tree = BPlusTree(path)
    for key, value in reference.items():
        assert tree.get(key) == value
    assert tree.count == len(reference)
    tree.close()


def test_height_within_logarithmic_bound(tmp_path):
    path = str(tmp_path / "t.btree")
    n = 30_000
    with BPlusTree(path, writable=True) as tree:
        for i in range(n):
            tree.put(f"label:{i:07d}".encode(), i.to_bytes(5, "little"))
        stats = tree.stats()
    fanout = max(2, stats["min_fanout"])
    assert stats["height"] <= math.ceil(math.log(n, fanout)) + 1


def test_sequential_inserts_stay_sorted(tmp_path):
    path = str(tmp_path / "t.btree")
    with BPlusTree(path, writable=True) as tree:
        for i in range(5000):
            tree.put(i.to_bytes(5, "big"), b"v")
        keys = [k for k, _ in tree.items()]
    assert keys == sorted(keys)
    assert len(keys) == 5000


def test_long_keys_are_digested():
    long = b"x" * (MAX_KEY + 500)
    assert len(tree_key(long)) <= MAX_KEY
    assert tree_key(long) != tree_key(b"x" * (MAX_KEY + 501))
    short = b"y" * 10
    assert tree_key(short) == short


def test_long_key_lookup(tmp_path):
    path = str(tmp_path / "t.btree")
    k1 = b"a" * 5000
    k2 = b"a" * 5001
    with BPlusTree(path, writable=True) as tree:
        tree.put(k1, b"1")
        tree.put(k2, b"2")
        assert tree.get(k1) == b"1"
        assert tree.get(k2) == b"2"


def test_missing_file_read_only(tmp_path):
    with pytest.raises(StorageError):
        BPlusTree(str(tmp_path / "nope.btree"))
