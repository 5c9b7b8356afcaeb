import numpy as np
import pytest

from cache import TableCache
from config import settings


@pytest.fixture
def table_cache(tmp_path):
    return TableCache(tmp_path / "tables")


def test_store_and_load(table_cache):
    key = TableCache.key("coeffs", 100, 4096)
    nodes = np.linspace(0.0, 1.0, 8).reshape(2, 4)
    table_cache.store(key, nodes=nodes, cdf=nodes ** 2)
    arrays = table_cache.load(key)
    np.testing.assert_array_equal(arrays["nodes"], nodes)
    np.testing.assert_array_equal(arrays["cdf"], nodes ** 2)


def test_key_is_stable():
    assert TableCache.key("a", 1) == TableCache.key("a", 1)
    assert TableCache.key("a", 1) != TableCache.key("a", 2)


def test_miss(table_cache):
    assert table_cache.load(TableCache.key("absent")) is None


def test_corrupt_entry_is_dropped(table_cache):
    key = TableCache.key("broken")
    path = table_cache.path_for(key)
    path.parent.mkdir(parents=True)
    path.write_bytes(b"not an archive")
    assert table_cache.load(key) is None
    assert not path.exists()


def test_disabled(table_cache, monkeypatch):
    monkeypatch.setattr(settings, "CACHE_ENABLED", False)
    key = TableCache.key("off")
    table_cache.store(key, x=np.ones(3))
    assert not table_cache.path_for(key).exists()
    assert table_cache.load(key) is None


def test_atomic_path_commits(tmp_path):
    target = tmp_path / "out" / "result.csv"
    with TableCache.atomic_path(target) as tmp:
        tmp.write_text("a,b\n1,2\n")
        assert not target.exists()
    assert target.read_text() == "a,b\n1,2\n"
    assert list(target.parent.iterdir()) == [target]


def test_atomic_path_rolls_back(tmp_path):
    target = tmp_path / "result.csv"
    with pytest.raises(RuntimeError):
        with TableCache.atomic_path(target) as tmp:
            tmp.write_text("partial")
            raise RuntimeError("interrupted")
    assert not target.exists()
    assert list(tmp_path.iterdir()) == []
