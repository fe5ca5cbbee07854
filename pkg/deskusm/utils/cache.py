import logging
import os
from datetime import datetime
from threading import Lock
from typing import Any, Callable, Dict, Optional

from core.config import FEATURE_CACHE_ITEMS

log = logging.getLogger(__name__)

FEATURE_CACHE: Dict[str, Dict[str, Any]] = {}
CACHE_LOCK = Lock()


def _key(path: str) -> str:
    p = os.path.abspath(path)
    try:
        st = os.stat(p)
        return f"{p}:{st.st_mtime_ns}:{st.st_size}"
    except OSError:
        return p


def cleanup_cache(max_items: Optional[int] = None):
    limit = FEATURE_CACHE_ITEMS if max_items is None else max_items
    with CACHE_LOCK:
        while len(FEATURE_CACHE) > limit:
            oldest = min(FEATURE_CACHE.keys(), key=lambda k: FEATURE_CACHE[k]["created_at"])
            FEATURE_CACHE.pop(oldest, None)


def clear_cache():
    with CACHE_LOCK:
        FEATURE_CACHE.clear()


def cached_features(path: str, compute: Callable[[str], Any]) -> Any:
    """Features for `path`, computed once per file version; entries evicted oldest-first."""
    key = _key(path)
    with CACHE_LOCK:
        hit = FEATURE_CACHE.get(key)
        if hit is not None:
            hit["created_at"] = datetime.now()
            return hit["features"]

    features = compute(path)
    with CACHE_LOCK:
        FEATURE_CACHE[key] = {"features": features, "created_at": datetime.now()}
    cleanup_cache()
    return features
