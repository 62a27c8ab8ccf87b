"""Text checkpoints of a training run.

Layout::

    STAM-CKPT 1
    begin config
    <canonical config lines>
    end config
    cursor <items consumed from the schedule>
    begin units <n>
    unit <level> <field> <dim> <step> <n_centroids>
    centroid <count> <last_used> <v_1> ... <v_dim>
    ...
    end units
    end checkpoint

Reals are written with ``repr`` (shortest round-trip form) so a reload is
bit-identical. Only centroid records are stored; there is no record type for
raw exemplars.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .config import emit_config, parse_config
from .errors import CorruptCheckpoint, StamError, VersionMismatch
from .unit import CentroidRecord, StamUnit

MAGIC = "STAM-CKPT"
VERSION = 1
_RECORD_TAGS = {MAGIC, "begin", "end", "cursor", "unit", "centroid"}


@dataclass
class TrainingState:
    config: object
    hierarchy: object
    cursor: int = 0

    @classmethod
    def fresh(cls, config):
        return cls(config, config.build_hierarchy(), 0)


def dumps_units(h):
    units = list(h.units())
    lines = [f"begin units {len(units)}"]
    for level, f, unit in units:
        lines.append(f"unit {level} {f} {unit.dim} {unit.step} {len(unit)}")
        for center, count, last in zip(unit.centers.tolist(), unit.counts.tolist(), unit.last_used.tolist()):
            lines.append(f"centroid {count} {last} " + " ".join(map(repr, center)))
    lines.append("end units")
    return "\n".join(lines) + "\n"


def dumps(state):
    return (
        f"{MAGIC} {VERSION}\n"
        "begin config\n"
        f"{emit_config(state.config)}"
        "end config\n"
        f"cursor {state.cursor}\n"
        f"{dumps_units(state.hierarchy)}"
        "end checkpoint\n"
    )


def loads(text, base_dir="."):
    """Rebuild a :class:`TrainingState` from checkpoint text.

    Raises:
        VersionMismatch: the header names another format version.
        CorruptCheckpoint: anything else is malformed; the message names the block.
    """
    lines = text.split("\n")
    if not lines or not lines[0].startswith(MAGIC):
        raise CorruptCheckpoint("missing STAM-CKPT header")
    head = lines[0].split()
    if len(head) != 2 or not head[1].isdigit():
        raise CorruptCheckpoint(f"bad header line {lines[0]!r}")
    if int(head[1]) != VERSION:
        raise VersionMismatch(f"checkpoint format version {head[1]}, this build reads version {VERSION}")
    pos = 1

    def expect(prefix, where):
        nonlocal pos
        if pos >= len(lines) or not lines[pos].startswith(prefix):
            got = lines[pos] if pos < len(lines) else "end of file"
            raise CorruptCheckpoint(f"{where}: expected {prefix!r}, got {got!r}")
        line = lines[pos]
        pos += 1
        return line

    expect("begin config", "header")
    start = pos
    while pos < len(lines) and lines[pos] != "end config":
        pos += 1
    if pos >= len(lines):
        raise CorruptCheckpoint("config block: missing 'end config'")
    try:
        config = parse_config("\n".join(lines[start:pos]), base_dir=base_dir)
    except StamError as exc:
        raise CorruptCheckpoint(f"config block: {exc}") from None
    pos += 1

    cursor_line = expect("cursor ", "cursor")
    try:
        cursor = int(cursor_line.split()[1])
    except (IndexError, ValueError):
        raise CorruptCheckpoint(f"cursor: bad line {cursor_line!r}") from None

    h = config.build_hierarchy()
    expected_units = list(h.units())
    header = expect("begin units ", "units")
    if header != f"begin units {len(expected_units)}":
        raise CorruptCheckpoint(f"units: expected {len(expected_units)} units, got {header!r}")
    for level, f, unit in expected_units:
        where = f"unit {level}/{f}"
        fields = expect("unit ", where).split()
        try:
            lv, fi, dim, step, n = (int(v) for v in fields[1:])
        except ValueError:
            raise CorruptCheckpoint(f"{where}: bad unit line") from None
        if (lv, fi, dim) != (level, f, unit.dim) or len(fields) != 6:
            raise CorruptCheckpoint(f"{where}: unit line does not match the configured hierarchy")
        records = []
        for k in range(n):
            parts = expect("centroid ", f"{where} centroid {k}").split()
            if len(parts) != 3 + dim:
                raise CorruptCheckpoint(f"{where} centroid {k}: expected {dim} values, got {len(parts) - 3}")
            try:
                records.append(CentroidRecord([float(v) for v in parts[3:]], int(parts[1]), int(parts[2])))
            except ValueError:
                raise CorruptCheckpoint(f"{where} centroid {k}: unparsable number") from None
        try:
            loaded = StamUnit.from_records(dim, unit.config, records, step)
        except StamError as exc:
            raise CorruptCheckpoint(f"{where}: {exc}") from None
        h.layers[level].units[f] = loaded
    expect("end units", "units")
    expect("end checkpoint", "trailer")
    if any(line.strip() for line in lines[pos:]):
        raise CorruptCheckpoint("trailer: data after 'end checkpoint'")
    return TrainingState(config, h, cursor)


def save_checkpoint(state, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(state))


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return loads(text, base_dir=os.path.dirname(os.path.abspath(path)))


def count_exemplar_records(text):
    """Number of lines that are not config, unit or centroid records."""
    n = 0
    in_config = False
    for line in text.split("\n"):
        if not line.strip():
            continue
        if line == "begin config":
            in_config = True
            continue
        if line == "end config":
            in_config = False
            continue
        if in_config:
            continue
        if line.split()[0] not in _RECORD_TAGS:
            n += 1
    return n
