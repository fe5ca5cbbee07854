import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# Absolute path relative to this file so it works regardless of cwd
_APP_DIR = Path(__file__).resolve().parent.parent

RUNS_DIR = Path(os.getenv("DESKUSM_RUNS_DIR", str(_APP_DIR / "runs")))

LOG_LEVEL = os.getenv("DESKUSM_LOG_LEVEL", "INFO").upper()
METRICS_STDOUT = os.getenv("DESKUSM_METRICS_STDOUT", "true").lower() in ("1", "true", "yes")

WORKERS = int(os.getenv("DESKUSM_WORKERS", "4"))
FEATURE_CACHE_ITEMS = int(os.getenv("DESKUSM_FEATURE_CACHE_ITEMS", "256"))

# Re-verify the frozen quantizer checksum on every loss step.
CHECK_FROZEN = os.getenv("DESKUSM_CHECK_FROZEN", "true").lower() in ("1", "true", "yes")
