import os
import time

import pytest

from app.helpers.cache_helper import COMPLETE_MARKER, CacheHelper


@pytest.fixture
def artifacts(tmp_path):
    """A small directory of artifacts to cache."""
    source = tmp_path / "run"
    source.mkdir()
    (source / "ids.csv").write_text("# header\nE,N\n0,0.5\n")
    (source / "run_record.json").write_text("{}\n")
    return source


def test_cache_get_miss(tmp_cache):
    """Test cache get with non-existent key."""
    assert tmp_cache.get("abc") is None
    assert tmp_cache.exists("abc") is False


def test_cache_set_and_get(tmp_cache, artifacts):
    """Test cache set followed by a hit."""
    assert tmp_cache.set("abc", artifacts) is True

    entry = tmp_cache.get("abc")
    assert entry is not None
    assert (entry / "ids.csv").read_text() == (artifacts / "ids.csv").read_text()
    assert (entry / COMPLETE_MARKER).is_file()


def test_cache_set_replaces_entry(tmp_cache, artifacts):
    """Test a second set overwrites the first entry."""
    tmp_cache.set("abc", artifacts)
    (artifacts / "ids.csv").write_text("changed\n")
    tmp_cache.set("abc", artifacts)

    assert (tmp_cache.get("abc") / "ids.csv").read_text() == "changed\n"


def test_cache_incomplete_entry_is_a_miss(tmp_cache):
    """A directory without the completion marker is never served."""
    (tmp_cache.root / "abc").mkdir(parents=True)
    assert tmp_cache.get("abc") is None


def test_cache_set_leaves_no_staging_on_error(tmp_cache, tmp_path):
    """Test a failed copy cleans up after itself."""
    assert tmp_cache.set("abc", tmp_path / "missing") is False
    assert list(tmp_cache.root.iterdir()) == []


def test_cache_delete(tmp_cache, artifacts):
    """Test cache delete."""
    tmp_cache.set("abc", artifacts)

    assert tmp_cache.delete("abc") is True
    assert tmp_cache.get("abc") is None
    assert tmp_cache.delete("abc") is False


def test_cache_disabled(tmp_path, artifacts, mocker):
    """Test cache operations when disabled."""
    mocker.patch("app.helpers.cache_helper.settings.CACHE_ENABLED", False)
    helper = CacheHelper(str(tmp_path / "cache"))

    assert helper.set("abc", artifacts) is False
    assert helper.get("abc") is None
    assert helper.set_with_lock("abc", artifacts) is False
    assert helper.delete("abc") is False


def test_set_with_lock_success(tmp_cache, artifacts):
    """Test set with lock stores the entry and releases the lock."""
    assert tmp_cache.set_with_lock("abc", artifacts) is True
    assert tmp_cache.exists("abc")
    assert not (tmp_cache.root / "abc.lock").exists()


def test_set_with_lock_held(tmp_cache, artifacts):
    """Test set with lock when another writer holds the lock."""
    tmp_cache.root.mkdir(parents=True)
    (tmp_cache.root / "abc.lock").write_text("999")

    assert tmp_cache.set_with_lock("abc", artifacts, lock_timeout=60) is False
    assert tmp_cache.get("abc") is None


def test_set_with_lock_breaks_stale_lock(tmp_cache, artifacts):
    """Test a lock older than the timeout is broken."""
    tmp_cache.root.mkdir(parents=True)
    lock = tmp_cache.root / "abc.lock"
    lock.write_text("999")
    old = time.time() - 3600
    os.utime(lock, (old, old))

    assert tmp_cache.set_with_lock("abc", artifacts, lock_timeout=60) is True
    assert tmp_cache.exists("abc")


def test_cache_key_generation(tmp_cache):
    """Test cache key generation is canonical in dict order."""
    key1 = tmp_cache.cache_key({"task": "ids", "params": {"n": 200, "m": 8}})
    key2 = tmp_cache.cache_key({"params": {"m": 8, "n": 200}, "task": "ids"})
    key3 = tmp_cache.cache_key({"task": "ids", "params": {"n": 400, "m": 8}})

    assert key1 == key2
    assert key1 != key3
    assert len(key1) == 64
