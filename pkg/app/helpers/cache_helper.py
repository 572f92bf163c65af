import hashlib
import json
import logging
import os
import shutil
import tempfile
import time
from pathlib import Path
from typing import Any, Optional

from app.config.settings import settings

logger = logging.getLogger(__name__)

COMPLETE_MARKER = ".complete"


class CacheHelper:
    """Directory-backed result cache keyed by config hash."""

    def __init__(self, root: Optional[str] = None):
        """Initialize cache helper."""
        self.root = Path(root or settings.CACHE_DIR)
        self.enabled = settings.CACHE_ENABLED
        self.lock_timeout = settings.CACHE_LOCK_TIMEOUT

    def path(self, key: str) -> Path:
        return self.root / key

    def get(self, key: str) -> Optional[Path]:
        """
        Get a cached entry.

        Args:
            key: Cache key

        Returns:
            Directory holding the cached artifacts, or None
        """
        if not self.enabled:
            return None

        entry = self.path(key)
        if (entry / COMPLETE_MARKER).is_file():
            logger.debug(f"Cache hit: {key}")
            return entry
        logger.debug(f"Cache miss: {key}")
        return None

    def exists(self, key: str) -> bool:
        return self.get(key) is not None

    def set(self, key: str, source: Path) -> bool:
        """
        Store a directory of artifacts under ``key``.

        The copy is staged in a temporary sibling and renamed into place, so
        readers see either nothing or a complete entry.

        Args:
            key: Cache key
            source: Directory to copy

        Returns:
            True if successful, False otherwise
        """
        if not self.enabled:
            return False

        staging = None
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            staging = Path(tempfile.mkdtemp(prefix=f".{key}.", dir=self.root))
            shutil.copytree(source, staging, dirs_exist_ok=True)
            (staging / COMPLETE_MARKER).write_text(key)
            target = self.path(key)
            if target.exists():
                shutil.rmtree(target)
            os.replace(staging, target)
            logger.debug(f"Cache set: {key}")
            return True
        except Exception as e:
            logger.error(f"Cache set error for key {key}: {e}")
            if staging is not None:
                shutil.rmtree(staging, ignore_errors=True)
            return False

    def delete(self, key: str) -> bool:
        """
        Delete a cached entry.

        Args:
            key: Cache key

        Returns:
            True if successful, False otherwise
        """
        if not self.enabled:
            return False

        try:
            shutil.rmtree(self.path(key))
            logger.debug(f"Cache delete: {key}")
            return True
        except FileNotFoundError:
            return False
        except Exception as e:
            logger.error(f"Cache delete error for key {key}: {e}")
            return False

    def _acquire(self, lock: Path, lock_timeout: int) -> bool:
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            age = time.time() - lock.stat().st_mtime
            if age <= lock_timeout:
                return False
            logger.warning(f"Breaking stale cache lock {lock.name} ({age:.0f}s old)")
            lock.unlink(missing_ok=True)
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        with os.fdopen(fd, "w") as handle:
            handle.write(str(os.getpid()))
        return True

    def set_with_lock(self, key: str, source: Path, lock_timeout: Optional[int] = None) -> bool:
        """
        Store an entry while holding the per-key lock file.

        Args:
            key: Cache key
            source: Directory to copy
            lock_timeout: Age in seconds after which a lock counts as stale

        Returns:
            True if successful, False otherwise
        """
        if not self.enabled:
            return False

        lock = self.root / f"{key}.lock"
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            if not self._acquire(lock, lock_timeout or self.lock_timeout):
                logger.warning(f"Could not acquire lock for key {key}")
                return False
        except Exception as e:
            logger.error(f"Cache lock error for key {key}: {e}")
            return False

        try:
            return self.set(key, source)
        finally:
            lock.unlink(missing_ok=True)

    def cache_key(self, payload: Any) -> str:
        """
        Generate a cache key from a JSON-serializable payload.

        Args:
            payload: Canonicalizable data (dicts are key-sorted)

        Returns:
            sha256 hex digest
        """
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
        return hashlib.sha256(canonical.encode()).hexdigest()


# Global cache helper instance
cache_helper = CacheHelper()
