"""CSV emission with a fixed wire format.

All outputs share one contract so runs are byte-reproducible: comma
separator, ``.`` decimal point, floats at 17 significant digits (lossless
round-trip for doubles), one header row, LF line endings.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

__all__ = ["format_float", "write_csv"]


def format_float(value) -> str:
    return f"{float(value):.17g}"


def write_csv(path, header: Sequence[str], rows: Iterable) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_float(v) for v in row) + "\n")
    return path
