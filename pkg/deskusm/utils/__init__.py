from .arrays import CheckpointError, read_array_dir, read_manifest, write_array_dir
from .cache import cached_features, cleanup_cache, clear_cache
from .files import atomic_directory, atomic_write_text, cleanup_paths

__all__ = [
    "CheckpointError",
    "read_array_dir",
    "read_manifest",
    "write_array_dir",
    "cached_features",
    "cleanup_cache",
    "clear_cache",
    "atomic_directory",
    "atomic_write_text",
    "cleanup_paths",
]
