"""Deterministic file output helpers.

Every artifact is UTF-8 with LF line endings, and every real number is
rendered with 17 significant digits so that files round-trip bit-exactly and
re-runs are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence


class ArtifactSchemaError(ValueError):
    """An input artifact does not match the schema a stage expects."""

    def __init__(self, path, line: int | None, expected: str, detail: str = ""):
        self.path = str(path)
        self.line = line
        self.expected = expected
        where = f"{self.path}:{line}" if line is not None else self.path
        msg = f"{where}: expected {expected}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


def fmt_real(x: float) -> str:
    if isinstance(x, bool):
        raise TypeError("bool is not a real")
    x = float(x)
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if x == 0.0:
        return "0"
    return f"{x:.17g}"


def fmt_cell(value: Any) -> str:
    kind = type(value)
    if kind is float:
        if value == 0.0:
            return "0"
        if value - value == 0.0:
            return f"{value:.17g}"
        return fmt_real(value)
    if kind is str:
        return value
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return fmt_real(value)
    return str(value)


def dumps_json(obj: Any, indent: int | None = 2) -> str:
    """Serialize ``obj`` to JSON with reals rendered at 17 significant digits."""
    out = io.StringIO()
    _write_json(obj, out, indent, 0)
    return out.getvalue()


def _write_json(obj, out, indent, level):
    if obj is None or isinstance(obj, bool):
        out.write(json.dumps(obj))
    elif isinstance(obj, int):
        out.write(str(obj))
    elif isinstance(obj, float):
        if not math.isfinite(obj):
            out.write("null")
        else:
            out.write(fmt_real(obj))
    elif isinstance(obj, str):
        out.write(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{")
        pad = _newline(indent, level + 1)
        for n, (k, v) in enumerate(obj.items()):
            if n:
                out.write(",")
            out.write(pad)
            out.write(json.dumps(str(k), ensure_ascii=False))
            out.write(": " if indent is not None else ":")
            _write_json(v, out, indent, level + 1)
        out.write(_newline(indent, level))
        out.write("}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.write("[]")
            return
        out.write("[")
        pad = _newline(indent, level + 1)
        for n, v in enumerate(obj):
            if n:
                out.write(",")
            out.write(pad)
            _write_json(v, out, indent, level + 1)
        out.write(_newline(indent, level))
        out.write("]")
    elif hasattr(obj, "item"):
        # numpy scalar
        _write_json(obj.item(), out, indent, level)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def _newline(indent, level):
    if indent is None:
        return ""
    return "\n" + " " * (indent * level)


def write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_json(path: Path, obj: Any) -> None:
    write_text(path, dumps_json(obj) + "\n")


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]], delimiter: str = ",") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]],
              delimiter: str = ",") -> None:
    write_text(path, csv_text(header, rows, delimiter))


def read_csv(path: Path, expected_header: Sequence[str] | None = None,
             prefix: bool = False, delimiter: str = ","):
    """Read a CSV artifact, returning ``(header, rows)`` with 1-based line numbers.

    ``prefix=True`` only requires the header to start with ``expected_header``.
    """
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ArtifactSchemaError(path, 1, _schema(expected_header, delimiter),
                                      "file is empty") from None
        if expected_header is not None:
            got = header[: len(expected_header)] if prefix else header
            if list(got) != list(expected_header):
                raise ArtifactSchemaError(path, 1, _schema(expected_header, delimiter),
                                          f"found header {delimiter.join(header)!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ArtifactSchemaError(path, lineno, _schema(header, delimiter),
                                          f"{len(row)} fields instead of {len(header)}")
            rows.append((lineno, row))
    return header, rows


def _schema(header, delimiter):
    if header is None:
        return "a header row"
    return "header " + delimiter.join(header)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
