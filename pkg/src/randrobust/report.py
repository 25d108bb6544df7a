"""Report writers: JSON-lines and CSV with 17 significant digits.

A report is a stream of flat rows. Every row carries the tool version,
command and seed; the JSON-lines stream additionally starts with a ``run``
record holding the resolved configuration and formula citations, while the
CSV form repeats them as the last two columns so each file stands alone.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence

from . import __version__

SIG_DIGITS = 17


def format_number(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, f".{SIG_DIGITS}g")


def dumps(obj) -> str:
    """Compact JSON with floats written to 17 significant digits; NaN/inf become null."""
    if obj is None:
        return "null"
    if isinstance(obj, (bool, int, float)):
        return format_number(obj)
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return dumps(obj.item())
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (list, tuple, dict)):
        return dumps(value)
    if hasattr(value, "item"):
        value = value.item()
    return format_number(value)


class ReportWriter:
    """Streams rows to a file or stdout, flushing after each one.

    ``columns`` fixes the CSV header; rows are written in that order and
    missing fields are left empty.
    """

    def __init__(
        self,
        command: str,
        config: dict,
        seed: Optional[int],
        citations: Sequence[str],
        columns: Sequence[str],
        fmt: str = "jsonl",
        path: Optional[Path] = None,
        stream: Optional[IO[str]] = None,
    ):
        if fmt not in ("jsonl", "csv"):
            raise ValueError(f"unknown report format {fmt!r}")
        self.command = command
        self.config = config
        self.seed = seed
        self.citations = list(citations)
        self.columns = list(columns)
        self.fmt = fmt
        self.path = path
        self._own = False
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            # newline="" keeps line endings identical across platforms.
            self._fh = open(path, "w", encoding="utf-8", newline="")
            self._own = True
        else:
            self._fh = stream or sys.stdout
        self._csv = None
        self._start()

    def _meta(self) -> dict:
        return {"tool_version": __version__, "command": self.command, "seed": self.seed}

    def _start(self):
        if self.fmt == "jsonl":
            head = {"record": "run", **self._meta(), "config": self.config, "citations": self.citations}
            self._fh.write(dumps(head) + "\n")
        else:
            self._csv = csv.writer(self._fh, lineterminator="\n")
            self._csv.writerow(["tool_version", "command", "seed", *self.columns, "config", "citations"])
        self._fh.flush()

    def write(self, row: dict):
        unknown = set(row) - set(self.columns)
        if unknown:
            raise KeyError(f"row has fields outside the fixed header: {sorted(unknown)}")
        if self.fmt == "jsonl":
            out = {"record": "row", **self._meta()}
            out.update({c: row.get(c) for c in self.columns})
            self._fh.write(dumps(out) + "\n")
        else:
            meta = self._meta()
            self._csv.writerow(
                [_csv_cell(meta[k]) for k in ("tool_version", "command", "seed")]
                + [_csv_cell(row.get(c)) for c in self.columns]
                + [dumps(self.config), dumps(self.citations)]
            )
        self._fh.flush()

    def write_all(self, rows: Iterable[dict]):
        for row in rows:
            self.write(row)

    def close(self):
        if self._own:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_jsonl(text: str) -> list[dict]:
    return [json.loads(line) for line in io.StringIO(text) if line.strip()]


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
