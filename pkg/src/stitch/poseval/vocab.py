"""Benchmark vocabulary: object classes, colors, relations.

Defaults ship as plain text files (one entry per line) with the 80
detector classes, the standard color list, and the four spatial
relations; any of the three can be overridden from user files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .. import relations
from ..errors import InsufficientVocab

_DATA_DIR = Path(__file__).parent / "data"


@dataclass(frozen=True)
class Vocabulary:
    objects: tuple[str, ...]
    colors: tuple[str, ...]
    relations: tuple[str, ...]

    def __post_init__(self):
        for rel in self.relations:
            if rel not in relations.RELATIONS:
                raise ValueError(f"relation {rel!r} has no geometric predicate")

    def require(self, n_objects: int, n_colors: int = 0, n_relations: int = 0) -> None:
        if len(self.objects) < n_objects:
            raise InsufficientVocab(
                f"need {n_objects} object classes, vocab has {len(self.objects)}"
            )
        if len(self.colors) < n_colors:
            raise InsufficientVocab(f"need {n_colors} colors, vocab has {len(self.colors)}")
        if len(self.relations) < n_relations:
            raise InsufficientVocab(
                f"need {n_relations} relations, vocab has {len(self.relations)}"
            )


def _read_lines(path) -> tuple[str, ...]:
    lines = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            lines.append(line)
    return tuple(lines)


def load_vocab(objects_path=None, colors_path=None, relations_path=None) -> Vocabulary:
    return Vocabulary(
        objects=_read_lines(objects_path or _DATA_DIR / "objects.txt"),
        colors=_read_lines(colors_path or _DATA_DIR / "colors.txt"),
        relations=_read_lines(relations_path or _DATA_DIR / "relations.txt"),
    )


def default_vocab() -> Vocabulary:
    return load_vocab()
