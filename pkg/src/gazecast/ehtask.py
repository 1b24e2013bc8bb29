"""Convert EHTask per-recording text logs into session CSVs.

Expected layout: a directory tree containing one text file per recording,
named like ``User_01_Video_03_Task_2.txt`` (any nesting, ``.txt`` or
``.csv``). Each data line holds numeric fields separated by commas, tabs or
spaces. Which field carries which angle is given by a column map
(0-based field positions); :data:`DEFAULT_COLUMNS` is only a starting point
and should be checked against the release you downloaded.

Azimuths are wrapped into [-180, 180]. Rows that fail to parse, have
non-finite values or elevations outside [-90, 90] are skipped and listed in
the import log.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Session, write_session
from .errors import DataError
from .geometry import wrap_angle

log = logging.getLogger(__name__)

NAME_RE = re.compile(r"user[_-]?(\d+).*?video[_-]?(\d+).*?task[_-]?(\d+)", re.IGNORECASE)
DEFAULT_COLUMNS = {"hmd_az": 1, "hmd_el": 2, "gaze_az": 3, "gaze_el": 4}
LAYOUT_HINT = ("expected files named like User_01_Video_01_Task_1.txt, one per recording, "
               "with numeric fields per line")


@dataclass
class ImportResult:
    sessions: list = field(default_factory=list)
    rows_read: int = 0
    skipped: list = field(default_factory=list)  # (file, line, reason)


def _split(line):
    if "," in line:
        return [f.strip() for f in line.split(",")]
    return line.split()


def parse_log(path, columns=DEFAULT_COLUMNS, stride=1, result=None):
    """Parse one recording; returns ``(hmd, gaze)`` arrays and records skipped rows."""
    result = result if result is not None else ImportResult()
    hmd, gaze = [], []
    need = max(columns.values())
    kept = 0
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = _split(line)
            try:
                vals = {k: float(fields[i]) for k, i in columns.items()}
            except (ValueError, IndexError):
                if lineno == 1:
                    continue  # header line
                reason = f"expected >= {need + 1} numeric fields"
                result.skipped.append((str(path), lineno, reason))
                continue
            result.rows_read += 1
            if not all(math.isfinite(v) for v in vals.values()):
                result.skipped.append((str(path), lineno, "non-finite value"))
                continue
            if abs(vals["hmd_el"]) > 90 or abs(vals["gaze_el"]) > 90:
                result.skipped.append((str(path), lineno, "elevation outside [-90, 90]"))
                continue
            if kept % stride == 0:
                hmd.append((wrap_angle(vals["hmd_az"]), vals["hmd_el"]))
                gaze.append((wrap_angle(vals["gaze_az"]), vals["gaze_el"]))
            kept += 1
    return np.array(hmd).reshape(-1, 2), np.array(gaze).reshape(-1, 2)


def import_ehtask(src_dir, out_dir, columns=None, stride=1, fps=30.0) -> ImportResult:
    """Write one ``<session_id>.csv`` per recording plus ``import.log`` into ``out_dir``."""
    src_dir, out_dir = Path(src_dir), Path(out_dir)
    columns = dict(DEFAULT_COLUMNS if columns is None else columns)
    missing = set(DEFAULT_COLUMNS) - set(columns)
    if missing:
        raise DataError(f"column map lacks {sorted(missing)}")
    if not src_dir.is_dir():
        raise DataError(f"{src_dir} is not a directory; {LAYOUT_HINT}")
    files = sorted(p for p in src_dir.rglob("*") if p.is_file() and p.suffix.lower() in (".txt", ".csv"))
    matched = [(p, NAME_RE.search(p.stem)) for p in files]
    matched = [(p, m) for p, m in matched if m]
    if not matched:
        raise DataError(f"no EHTask recordings found under {src_dir}; {LAYOUT_HINT}")
    result = ImportResult()
    for path, m in matched:
        user, video, task = (int(g) for g in m.groups())
        sid = f"u{user:02d}_v{video:02d}_t{task}"
        hmd, gaze = parse_log(path, columns, stride, result)
        if len(hmd) == 0:
            result.skipped.append((str(path), 0, "no usable rows; session dropped"))
            continue
        session = Session(sid, hmd, gaze, fps=fps)
        write_session(session, out_dir / f"{sid}.csv")
        result.sessions.append(sid)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "import.log", "w", encoding="utf-8") as fh:
        fh.write(f"source\t{src_dir}\n")
        fh.write(f"columns\t{columns}\n")
        fh.write(f"stride\t{stride}\n")
        fh.write(f"sessions_written\t{len(result.sessions)}\n")
        fh.write(f"rows_read\t{result.rows_read}\n")
        fh.write(f"rows_skipped\t{len(result.skipped)}\n")
        for f, line, reason in result.skipped:
            fh.write(f"skipped\t{f}:{line}\t{reason}\n")
    return result
