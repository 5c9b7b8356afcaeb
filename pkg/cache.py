"""
On-disk table cache.
Stores sampling tables as .npz archives under settings.CACHE, keyed by a
content hash of the potential and the particle number.
"""
import hashlib
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Generator, Optional

import numpy as np

from config import settings
from errors import CacheError

logger = logging.getLogger(__name__)


class TableCache:
    """Reads and writes cached arrays; unreadable entries are dropped and rebuilt"""

    def __init__(self, root: Optional[Path] = None):
        self._root = Path(root) if root is not None else None

    @property
    def root(self) -> Path:
        return self._root if self._root is not None else Path(settings.CACHE).expanduser()

    @property
    def enabled(self) -> bool:
        return settings.CACHE_ENABLED

    @staticmethod
    def key(*parts) -> str:
        text = "|".join(str(p) for p in parts)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def path_for(self, key: str) -> Path:
        return self.root / f"{key}.npz"

    @staticmethod
    @contextmanager
    def atomic_path(target: Path) -> Generator[Path, None, None]:
        """
        Yields a temporary path next to target; renames it over target when
        the block finishes without error.
        """
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.stem}.", suffix=target.suffix)
        os.close(fd)
        tmp_path = Path(tmp)
        try:
            yield tmp_path
            os.replace(tmp_path, target)
        finally:
            if tmp_path.exists():
                tmp_path.unlink()

    def _read(self, path: Path) -> Dict[str, np.ndarray]:
        try:
            with np.load(path, allow_pickle=False) as archive:
                return {name: archive[name] for name in archive.files}
        except (OSError, ValueError, KeyError) as e:
            raise CacheError(f"unreadable cache entry {path}: {e}")

    def load(self, key: str) -> Optional[Dict[str, np.ndarray]]:
        if not self.enabled:
            return None
        path = self.path_for(key)
        if not path.exists():
            logger.debug("Cache miss %s", key[:12])
            return None
        try:
            arrays = self._read(path)
        except CacheError as e:
            logger.warning("%s; rebuilding", e)
            path.unlink(missing_ok=True)
            return None
        logger.debug("Cache hit %s", key[:12])
        return arrays

    def store(self, key: str, **arrays: np.ndarray) -> None:
        if not self.enabled:
            return
        target = self.path_for(key)
        try:
            with self.atomic_path(target) as tmp:
                with open(tmp, "wb") as handle:
                    np.savez(handle, **arrays)
        except OSError as e:
            logger.warning("Could not write cache entry %s: %s", target, e)


# Global cache instance
cache = TableCache()
