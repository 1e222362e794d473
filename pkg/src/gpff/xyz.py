"""Multi-frame XYZ reading and writing.

The comment line of each frame may carry a JSON object (e.g. {"name": ...});
readers that do not understand it treat it as plain text, and this parser
ignores any payload that is not a JSON object.
"""

from __future__ import annotations

import json

from .geometry import Structure

__all__ = ["XyzParseError", "read_xyz", "write_xyz", "load_xyz", "save_xyz"]


class XyzParseError(ValueError):
    """Malformed XYZ input; ``line`` is the 1-based offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def read_xyz(stream) -> list[Structure]:
    """Parse every frame from a text stream.

    Returns a list of structures. Blank lines between frames are skipped.
    Raises :class:`XyzParseError` (with the offending line number) on a bad
    atom count, truncated frame, or unparseable coordinate row.
    """
    structures = []
    lines = stream.read().splitlines()
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        try:
            count = int(lines[i].strip())
        except ValueError:
            raise XyzParseError(
                f"expected atom count, got {lines[i].strip()!r}", i + 1
            ) from None
        if count < 1:
            raise XyzParseError(f"atom count must be positive, got {count}", i + 1)
        if i + 1 >= len(lines):
            raise XyzParseError("missing comment line", i + 2)
        comment = lines[i + 1]
        name = None
        if comment.strip().startswith("{"):
            try:
                payload = json.loads(comment)
                if isinstance(payload, dict):
                    name = payload.get("name")
            except json.JSONDecodeError:
                pass
        elements = []
        rows = []
        for k in range(count):
            lineno = i + 2 + k
            if lineno >= len(lines) or not lines[lineno].strip():
                raise XyzParseError(
                    f"atom count mismatch: frame declares {count} atoms "
                    f"but ends after {k}",
                    lineno + 1,
                )
            parts = lines[lineno].split()
            if len(parts) < 4:
                raise XyzParseError(
                    f"expected 'element x y z', got {lines[lineno]!r}", lineno + 1
                )
            try:
                xyz = [float(p) for p in parts[1:4]]
            except ValueError:
                raise XyzParseError(
                    f"bad coordinate in {lines[lineno]!r}", lineno + 1
                ) from None
            elements.append(parts[0])
            rows.append(xyz)
        structures.append(Structure(elements, rows, name=name))
        i += 2 + count
    return structures


def write_xyz(structures, stream) -> None:
    """Write structures as consecutive XYZ frames (6-decimal coordinates)."""
    if isinstance(structures, Structure):
        structures = [structures]
    for s in structures:
        stream.write(f"{s.n}\n")
        comment = json.dumps({"name": s.name}) if s.name is not None else ""
        stream.write(comment + "\n")
        for el, (x, y, z) in zip(s.elements, s.positions):
            stream.write(f"{el:<2s} {x:14.6f} {y:14.6f} {z:14.6f}\n")


def load_xyz(path) -> list[Structure]:
    with open(path, "r", encoding="utf-8") as fh:
        return read_xyz(fh)


def save_xyz(path, structures) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_xyz(structures, fh)
