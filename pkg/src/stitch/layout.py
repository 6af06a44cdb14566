"""Prompt decomposition into sub-prompts with bounding boxes.

A full prompt P is split into K (sub-prompt, box) pairs plus a one-word
background prompt, either by an external chat-completion service or by the
deterministic fallback planner, which places objects on a 2x2 cell grid and
converts occupied cells into equal-sized boxes.

Canvas coordinates are integer cells in [0, W-1] on a W x W canvas,
x right, y down.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import relations
from .errors import EmptyLayout, MalformedLLMResponse, UnsatisfiableScene

# Chat prompts sent to the layout service.  The JSON template braces mean
# str.format cannot be used; substitute {W} with str.replace instead.
LAYOUT_SYSTEM_PROMPT = """You have a canvas of size {W}x{W}. Decompose the given description
into single objects. Do not merge multiple objects into one box.
Fully cover the canvas with the object boxes. Avoid overlaps.
Do not leave space for background. Write 3 sentence justification
and then output just valid JSON in the format:
[
    {"prompt": "<object with properties only mentioned in the
    description>", "x_min": , "y_min": , "x_max": , "y_max": },
    ...
]"""

BACKGROUND_SYSTEM_PROMPT = """Provide a simple fitting background description for this scene.
The background must not mention any of the specific objects or
elements from the prompt. The background must not mention any
other specific objects or people. Return only ONE word of the
background text, nothing else."""


def layout_system_prompt(canvas: int) -> str:
    return LAYOUT_SYSTEM_PROMPT.replace("{W}", str(canvas))


def user_prompt(description: str) -> str:
    return f"Description: {description}"


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive cell rectangle on the planning canvas."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if min(self.x_min, self.y_min, self.x_max, self.y_max) < 0:
            raise ValueError(f"negative box coordinate: {self}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted box edges: {self}")

    def validate_canvas(self, canvas: int) -> None:
        if self.x_max >= canvas or self.y_max >= canvas:
            raise ValueError(f"box {self} exceeds canvas {canvas}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    def center(self) -> tuple[float, float]:
        return (self.x_min + self.width / 2.0, self.y_min + self.height / 2.0)

    def intersects(self, other: "BoundingBox") -> bool:
        return not (
            self.x_max < other.x_min
            or other.x_max < self.x_min
            or self.y_max < other.y_min
            or other.y_max < self.y_min
        )

    def is_full_canvas(self, canvas: int) -> bool:
        return (
            self.x_min == 0
            and self.y_min == 0
            and self.x_max == canvas - 1
            and self.y_max == canvas - 1
        )


def clamped_box(x_min, y_min, x_max, y_max, canvas: int) -> BoundingBox:
    """Normalize raw provider coordinates: sort reversed edges, clamp to canvas."""

    def norm(lo, hi):
        lo, hi = int(round(float(lo))), int(round(float(hi)))
        if lo > hi:
            lo, hi = hi, lo
        return max(0, min(lo, canvas - 1)), max(0, min(hi, canvas - 1))

    x_lo, x_hi = norm(x_min, x_max)
    y_lo, y_hi = norm(y_min, y_max)
    return BoundingBox(x_lo, y_lo, x_hi, y_hi)


@dataclass(frozen=True)
class PlacedObject:
    sub_prompt: str
    box: BoundingBox


@dataclass(frozen=True)
class LayoutPlan:
    """Full prompt plus per-object sub-prompts/boxes and a background prompt.

    The background box is implicit and always spans the whole canvas.
    Planner entry points reject empty object lists; a zero-object plan can
    still be constructed directly for background-only pipeline runs.
    """

    full_prompt: str
    background_prompt: str
    objects: tuple[PlacedObject, ...]
    canvas_size: int

    def __post_init__(self):
        if self.canvas_size < 2:
            raise ValueError("canvas must have at least 2 cells per side")
        if not self.background_prompt.strip():
            raise ValueError("background prompt must be non-empty")
        for obj in self.objects:
            if not obj.sub_prompt.strip():
                raise ValueError("sub-prompts must be non-empty")
            obj.box.validate_canvas(self.canvas_size)

    @property
    def num_objects(self) -> int:
        return len(self.objects)


@dataclass(frozen=True)
class SceneObject:
    name: str
    attribute: str | None = None

    @property
    def label(self) -> str:
        return f"{self.attribute} {self.name}" if self.attribute else self.name


@dataclass(frozen=True)
class SceneSpec:
    """Structured scene: named objects plus (subject, relation, object) triples."""

    objects: tuple[SceneObject, ...]
    relations: tuple[tuple[int, str, int], ...] = ()

    def __post_init__(self):
        for s, rel, o in self.relations:
            if rel not in relations.RELATIONS:
                raise ValueError(f"unknown relation {rel!r}")
            if not (0 <= s < len(self.objects) and 0 <= o < len(self.objects)):
                raise ValueError(f"relation index out of range: {(s, rel, o)}")
            if s == o:
                raise ValueError("relation subject and object must differ")


@dataclass(frozen=True)
class Finding:
    kind: str  # "overlap" | "coverage"
    message: str


# --------------------------------------------------------------------------
# LLM-backed planning


def _extract_json_array(text: str):
    start = text.find("[")
    if start < 0:
        raise ValueError("no JSON array in response")
    decoded, _ = json.JSONDecoder().raw_decode(text[start:])
    if not isinstance(decoded, list):
        raise ValueError("top-level JSON is not an array")
    return decoded

_BOX_KEYS = ("x_min", "y_min", "x_max", "y_max")


def _parse_layout_response(text: str, canvas: int) -> list[PlacedObject]:
    entries = _extract_json_array(text)
    placed = []
    for entry in entries:
        if not isinstance(entry, dict):
            raise ValueError(f"layout entry is not an object: {entry!r}")
        try:
            prompt = entry["prompt"]
            coords = [entry[k] for k in _BOX_KEYS]
        except KeyError as exc:
            raise ValueError(f"layout entry missing key {exc}") from None
        if not isinstance(prompt, str) or not prompt.strip():
            raise ValueError("layout entry has an empty prompt")
        for c in coords:
            if not isinstance(c, (int, float)) or isinstance(c, bool):
                raise ValueError(f"non-numeric coordinate {c!r}")
        box = clamped_box(coords[0], coords[1], coords[2], coords[3], canvas)
        placed.append(PlacedObject(sub_prompt=prompt.strip(), box=box))
    return placed


def plan_layout(prompt: str, canvas: int, llm) -> LayoutPlan:
    """Decompose ``prompt`` into a LayoutPlan using a chat provider.

    The provider is asked twice: once for the object boxes (JSON array with
    keys prompt/x_min/y_min/x_max/y_max, out-of-range values clamped) and
    once for the one-word background.  Each request is retried once on a
    malformed response before MalformedLLMResponse is raised.  A valid but
    empty object array raises EmptyLayout.
    """
    if canvas < 2:
        raise ValueError("canvas must be >= 2")
    user = user_prompt(prompt)

    system = layout_system_prompt(canvas)
    objects = None
    last_err = None
    for _ in range(2):
        text = llm.complete(system, user)
        try:
            objects = _parse_layout_response(text, canvas)
            break
        except (ValueError, TypeError) as exc:
            last_err = exc
    if objects is None:
        raise MalformedLLMResponse(f"layout response unusable after retry: {last_err}")
    if not objects:
        raise EmptyLayout(f"provider returned no objects for prompt: {prompt!r}")

    background = None
    for _ in range(2):
        reply = llm.complete(BACKGROUND_SYSTEM_PROMPT, user).strip()
        if reply:
            background = reply.split()[0].strip(".,;:!?\"'")
            if background:
                break
    if not background:
        raise MalformedLLMResponse("background response empty after retry")

    return LayoutPlan(
        full_prompt=prompt,
        background_prompt=background,
        objects=tuple(objects),
        canvas_size=canvas,
    )


# --------------------------------------------------------------------------
# Deterministic fallback planner

_GRID_CELLS = ((0, 0), (0, 1), (1, 0), (1, 1))  # row-major (row, col)


def _cell_relation_ok(cell_a, cell_b, rel: str, strict: bool) -> bool:
    ax, ay = cell_a[1] + 0.5, cell_a[0] + 0.5
    bx, by = cell_b[1] + 0.5, cell_b[0] + 0.5
    return relations.relation_between(ax, ay, rel, bx, by, strict=strict)


def solve_grid_layout(scene: SceneSpec) -> dict[int, tuple[int, int]]:
    """Assign each object a distinct 2x2 cell satisfying all relations.

    Assignments are scanned in lexicographic order over row-major cell
    indices, objects in order, and the first satisfying one wins.  Strictly
    axis-dominant placements are preferred; only when none exists are
    diagonal ties (which the center predicate accepts) considered.
    """
    k = len(scene.objects)
    if k == 0:
        return {}
    if k > 4:
        raise UnsatisfiableScene(f"{k} objects cannot share a 2x2 grid")
    for strict in (True, False):
        for cells in itertools.permutations(range(4), k):
            ok = True
            for s, rel, o in scene.relations:
                if not _cell_relation_ok(_GRID_CELLS[cells[s]], _GRID_CELLS[cells[o]], rel, strict):
                    ok = False
                    break
            if ok:
                return {i: _GRID_CELLS[c] for i, c in enumerate(cells)}
    raise UnsatisfiableScene(f"no 2x2 assignment satisfies {scene.relations}")


def _axis_spans(canvas: int, parts: int) -> list[tuple[int, int]]:
    return [
        ((i * canvas) // parts, ((i + 1) * canvas) // parts - 1) for i in range(parts)
    ]


def _cells_to_boxes(assignment: dict[int, tuple[int, int]], canvas: int) -> dict[int, BoundingBox]:
    # Collapse unused rows/columns so K=1 covers the canvas and K=2
    # horizontal scenes get full-height halves.
    rows = sorted({cell[0] for cell in assignment.values()})
    cols = sorted({cell[1] for cell in assignment.values()})
    row_rank = {r: i for i, r in enumerate(rows)}
    col_rank = {c: i for i, c in enumerate(cols)}
    y_spans = _axis_spans(canvas, len(rows))
    x_spans = _axis_spans(canvas, len(cols))
    boxes = {}
    for idx, (r, c) in assignment.items():
        x_lo, x_hi = x_spans[col_rank[c]]
        y_lo, y_hi = y_spans[row_rank[r]]
        boxes[idx] = BoundingBox(x_lo, y_lo, x_hi, y_hi)
    return boxes


def fallback_plan(scene: SceneSpec, canvas: int, full_prompt: str | None = None) -> LayoutPlan:
    """Deterministic planner: grid assignment, then cells become boxes."""
    if canvas < 2:
        raise ValueError("canvas must be >= 2")
    if not scene.objects:
        raise EmptyLayout("scene has no objects")
    assignment = solve_grid_layout(scene)
    boxes = _cells_to_boxes(assignment, canvas)
    placed = tuple(
        PlacedObject(sub_prompt=obj.label, box=boxes[i])
        for i, obj in enumerate(scene.objects)
    )
    if full_prompt is None:
        full_prompt = " and ".join(obj.label for obj in scene.objects)
    return LayoutPlan(
        full_prompt=full_prompt,
        background_prompt="background",
        objects=placed,
        canvas_size=canvas,
    )


_RELATION_RE = re.compile(r"\b(left of|right of|above|below)\b")
_ARTICLE_RE = re.compile(r"^(?:a|an|the)\s+")


def _clean_chunk(chunk: str) -> str:
    chunk = chunk.strip().strip(".,;:").strip()
    chunk = re.sub(r"^(?:a photo of|an image of|a picture of)\s+", "", chunk)
    chunk = re.sub(r"^(?:and|with)\s+", "", chunk)
    chunk = _ARTICLE_RE.sub("", chunk)
    return chunk.strip()


def parse_scene(description: str) -> SceneSpec:
    """Light textual parse: objects are the chunks between relation phrases."""
    text = description.strip().lower()
    matches = list(_RELATION_RE.finditer(text))
    if not matches:
        name = _clean_chunk(text)
        if not name:
            raise EmptyLayout(f"nothing to plan in {description!r}")
        return SceneSpec(objects=(SceneObject(name),))
    chunks = []
    prev = 0
    for m in matches:
        chunks.append(text[prev : m.start()])
        prev = m.end()
    chunks.append(text[prev:])
    names = [_clean_chunk(c) for c in chunks]
    if any(not n for n in names):
        raise EmptyLayout(f"could not extract objects from {description!r}")
    objects = tuple(SceneObject(n) for n in names)
    rels = tuple((i, m.group(1), i + 1) for i, m in enumerate(matches))
    return SceneSpec(objects=objects, relations=rels)


# --------------------------------------------------------------------------
# Validation and serialization


def validate_layout(plan: LayoutPlan) -> list[Finding]:
    """Advisory findings only; the plan is never mutated."""
    findings = []
    objs = plan.objects
    for i in range(len(objs)):
        for j in range(i + 1, len(objs)):
            if objs[i].box.intersects(objs[j].box):
                findings.append(
                    Finding(
                        "overlap",
                        f"boxes of object {i} ({objs[i].sub_prompt!r}) and "
                        f"object {j} ({objs[j].sub_prompt!r}) intersect",
                    )
                )
    import numpy as np

    covered = np.zeros((plan.canvas_size, plan.canvas_size), dtype=bool)
    for obj in objs:
        b = obj.box
        covered[b.y_min : b.y_max + 1, b.x_min : b.x_max + 1] = True
    uncovered = int((~covered).sum())
    if uncovered > 0:
        findings.append(
            Finding("coverage", f"{uncovered} canvas cells not covered by any box")
        )
    return findings


def plan_to_dict(plan: LayoutPlan) -> dict:
    return {
        "background": plan.background_prompt,
        "canvas": plan.canvas_size,
        "objects": [
            {
                "prompt": o.sub_prompt,
                "x_min": o.box.x_min,
                "y_min": o.box.y_min,
                "x_max": o.box.x_max,
                "y_max": o.box.y_max,
            }
            for o in plan.objects
        ],
    }


def plan_from_dict(data: dict, full_prompt: str) -> LayoutPlan:
    objects = tuple(
        PlacedObject(
            sub_prompt=o["prompt"],
            box=BoundingBox(o["x_min"], o["y_min"], o["x_max"], o["y_max"]),
        )
        for o in data["objects"]
    )
    return LayoutPlan(
        full_prompt=full_prompt,
        background_prompt=data["background"],
        objects=objects,
        canvas_size=int(data["canvas"]),
    )


def write_layout(plan: LayoutPlan, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(plan_to_dict(plan), indent=2) + "\n")


def read_layout(path, full_prompt: str) -> LayoutPlan:
    return plan_from_dict(json.loads(Path(path).read_text()), full_prompt)
