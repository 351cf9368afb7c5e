"""
Run report persistence.

Writes the consolidated JSON report with stable key ordering next to the CSV
artifacts of a run, and hashes the scenario echo.

:copyright: (c) 2026 Time-change lab contributors
:license: Mozilla Public License Version 2.0, see LICENSE for more details.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any

from config import dumps

_LOG = logging.getLogger(__name__)

REPORT_FILENAME = "run_report.json"
MANIFEST = Path(__file__).resolve().parent.parent / "lab.json"

# Report keys that vary between otherwise identical runs.
TIMING_KEYS = ("seconds", "wall_clock_seconds")


def content_hash(data: Any) -> str:
    """Git blob hash (sha1 over "blob <len>\\0" + content) of the canonical JSON."""
    body = dumps(data, indent=None).encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def lab_version(manifest: Path = MANIFEST) -> str:
    """Version from the lab manifest."""
    try:
        with open(manifest, "r", encoding="utf-8") as f:
            return str(json.load(f)["version"])
    except (OSError, KeyError, ValueError):
        _LOG.warning("Cannot read version from %s", manifest)
        return "unknown"


def ensure_output_dir(output_dir: str | Path) -> Path:
    """Create the output directory if needed."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_report(report: Any, output_dir: str | Path) -> Path:
    """
    Store the report as UTF-8 JSON with sorted keys.

    :return: the written file.
    """
    target = ensure_output_dir(output_dir) / REPORT_FILENAME
    with open(target, "w", encoding="utf-8") as f:
        f.write(dumps(report))
        f.write("\n")
    _LOG.info("Report written to %s", target)
    return target


def strip_timings(data: Any) -> Any:
    """Copy of a decoded report without timing fields."""
    if isinstance(data, dict):
        return {k: strip_timings(v) for k, v in data.items() if k not in TIMING_KEYS}
    if isinstance(data, list):
        return [strip_timings(v) for v in data]
    return data
