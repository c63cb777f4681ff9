"""CSV run logs: one row per real evaluation.

Layout::

    # vawtevo run log
    # key=value            (resolved run configuration, sorted by key)
    eval,generation,species,genotype,fitness_rpm,best_rpm
    1,0,0,"xy=...;z=...",412.5,412.5

Rows are flushed as they are written so an interrupted run keeps its
progress.  Floats are written with ``repr`` so they read back exactly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, TextIO

from .genome import Genotype, format_genotype, parse_genotype

COLUMNS = ["eval", "generation", "species", "genotype", "fitness_rpm", "best_rpm"]
MAGIC = "# vawtevo run log"


class LogFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LogRow:
    eval: int
    generation: int
    species: int
    genotype: Genotype
    fitness: float
    best: float

    def cells(self) -> list[str]:
        return [
            str(self.eval),
            str(self.generation),
            str(self.species),
            format_genotype(self.genotype),
            repr(float(self.fitness)),
            repr(float(self.best)),
        ]


class RunLog:
    def __init__(self, path: str | Path | None = None, config: Optional[Mapping[str, str]] = None):
        self.path = Path(path) if path is not None else None
        self.config = dict(config or {})
        self.rows: list[LogRow] = []
        self._fh: Optional[TextIO] = None
        self._writer = None
        if self.path is not None:
            self._fh = self.path.open("w", newline="")
            self._writer = csv.writer(self._fh, lineterminator="\n")
            write_header(self._fh, self.config)
            self._writer.writerow(COLUMNS)
            self._fh.flush()

    def append(self, row: LogRow) -> None:
        if self.rows:
            if row.eval != self.rows[-1].eval + 1:
                raise ValueError("log rows must be consecutive in eval")
            if row.best < self.rows[-1].best:
                raise ValueError("best-so-far must not decrease")
        self.rows.append(row)
        if self._writer is not None:
            self._writer.writerow(row.cells())
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
            self._writer = None

    @property
    def best(self) -> float:
        return self.rows[-1].best if self.rows else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        write_header(buf, self.config)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow(r.cells())
        return buf.getvalue()


def write_header(fh: TextIO, config: Mapping[str, str]) -> None:
    fh.write(MAGIC + "\n")
    for key in sorted(config):
        fh.write(f"# {key}={config[key]}\n")


def parse_log(text: str) -> tuple[dict[str, str], list[LogRow]]:
    config: dict[str, str] = {}
    body = []
    for line in text.splitlines(keepends=True):
        if line.startswith("#"):
            item = line[1:].strip()
            if "=" in item:
                k, v = item.split("=", 1)
                config[k.strip()] = v.strip()
        else:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader, None)
    if header != COLUMNS:
        raise LogFormatError(f"unexpected log columns {header}, expected {COLUMNS}")
    rows = []
    for lineno, cells in enumerate(reader, start=2):
        if not cells:
            continue
        if len(cells) != len(COLUMNS):
            raise LogFormatError(f"row {lineno}: expected {len(COLUMNS)} cells, got {len(cells)}")
        try:
            rows.append(
                LogRow(int(cells[0]), int(cells[1]), int(cells[2]), parse_genotype(cells[3]), float(cells[4]), float(cells[5]))
            )
        except ValueError as exc:
            raise LogFormatError(f"row {lineno}: {exc}") from None
    return config, rows


def read_log(path: str | Path) -> tuple[dict[str, str], list[LogRow]]:
    return parse_log(Path(path).read_text())


def final_best(rows: Iterable[LogRow]) -> float:
    rows = list(rows)
    if not rows:
        raise LogFormatError("log has no rows")
    return rows[-1].best
