"""Verdicts: check detections against a prompt record's ground truth.

The relation predicate is the dominant-axis center rule: with centers a, b
and displacement (dx, dy) = b - a (y down), "a left of b" holds iff dx > 0
and |dx| >= |dy|; the other three mirror it.  Ties in sign (identical
centers) satisfy nothing, so at most one horizontal and one vertical
relation hold per ordered pair and a relation and its inverse never hold
together.  A GenEval-parity predicate port is reserved behind
RelationParams(mode="geneval") but not implemented.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import relations as rel_mod
from ..errors import Misaligned, MissingClassMetadata
from ..layout import LayoutPlan, SceneObject, SceneSpec
from .generate import (
    TASK_FOUR,
    TASK_NEG,
    TASK_PAB,
    TASK_REL,
    TASK_THREE,
    TASK_TWO,
    TASKS,
    PromptRecord,
)


@dataclass(frozen=True)
class Detection:
    class_name: str
    box: tuple[float, float, float, float]  # x0, y0, x1, y1 (y down)
    confidence: float
    attribute: str | None = None

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate detection box {self.box}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.confidence}")

    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.box
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)

    def to_dict(self) -> dict:
        return {
            "class": self.class_name,
            "box": list(self.box),
            "confidence": self.confidence,
            "attribute": self.attribute,
        }


def detection_from_dict(data: dict) -> Detection:
    return Detection(
        class_name=data["class"],
        box=tuple(float(v) for v in data["box"]),
        confidence=float(data["confidence"]),
        attribute=data.get("attribute"),
    )


@dataclass(frozen=True)
class RelationParams:
    mode: str = "center-dominant"


@dataclass
class Verdict:
    passed: bool
    reasons: list[str] = field(default_factory=list)


def relation_holds(a: Detection, relation: str, b: Detection, params: RelationParams | None = None) -> bool:
    """True if ``a <relation> b`` under the configured predicate."""
    params = params or RelationParams()
    if params.mode == "center-dominant":
        ax, ay = a.center()
        bx, by = b.center()
        return rel_mod.relation_between(ax, ay, relation, bx, by)
    if params.mode == "geneval":
        raise NotImplementedError("GenEval-parity predicate is not ported yet")
    raise ValueError(f"unknown relation predicate mode {params.mode!r}")


def _by_class(detections) -> dict[str, list[Detection]]:
    grouped: dict[str, list[Detection]] = {}
    for det in detections:
        if not det.class_name:
            raise MissingClassMetadata("detection without a class name")
        grouped.setdefault(det.class_name.lower(), []).append(det)
    return grouped


def _top(dets: list[Detection]) -> Detection:
    # Highest confidence; first occurrence wins ties.
    best = dets[0]
    for det in dets[1:]:
        if det.confidence > best.confidence:
            best = det
    return best


def evaluate_image(detections, record: PromptRecord, params: RelationParams | None = None) -> Verdict:
    """Task-specific pass/fail for one image.

    Chain tasks bind each class to its highest-confidence instance and
    require every stated relation; PAB passes if any correctly-attributed
    pair satisfies the relation; Neg requires both classes present and no
    instance pair in the stated relation; Rel checks the first relation
    and the (already resolved) relative relation on top instances.
    """
    if record.task not in TASKS:
        raise ValueError(f"unknown task {record.task!r}")
    grouped = _by_class(detections)
    reasons: list[str] = []

    def present(name: str) -> bool:
        if name.lower() not in grouped:
            reasons.append(f"missing class: {name}")
            return False
        return True

    names = [name for name, _ in record.objects]

    if record.task in (TASK_TWO, TASK_THREE, TASK_FOUR):
        if not all([present(n) for n in names]):
            return Verdict(False, reasons)
        top = {n: _top(grouped[n.lower()]) for n in names}
        ok = True
        for s, rel, o in record.stated_relations:
            if not relation_holds(top[names[s]], rel, top[names[o]], params):
                reasons.append(f"relation failed: {names[s]} {rel} {names[o]}")
                ok = False
        return Verdict(ok, reasons)

    if record.task == TASK_PAB:
        (n1, a1), (n2, a2) = record.objects
        if a1 is None or a2 is None:
            raise MissingClassMetadata("PAB record objects must carry attributes")
        if not all([present(n1), present(n2)]):
            return Verdict(False, reasons)
        (_, rel, _) = record.stated_relations[0]

        def attributed(name, attr):
            return [
                d
                for d in grouped[name.lower()]
                if d.attribute is not None and d.attribute.lower() == attr.lower()
            ]

        cands1, cands2 = attributed(n1, a1), attributed(n2, a2)
        if not cands1:
            reasons.append(f"no {a1} {n1} detected")
        if not cands2:
            reasons.append(f"no {a2} {n2} detected")
        for d1 in cands1:
            for d2 in cands2:
                if d1 is d2:
                    continue
                if relation_holds(d1, rel, d2, params):
                    return Verdict(True, [])
        if cands1 and cands2:
            reasons.append(f"no attributed pair satisfies: {n1} {rel} {n2}")
        return Verdict(False, reasons)

    if record.task == TASK_NEG:
        (n1, _), (n2, _) = record.objects
        if not all([present(n1), present(n2)]):
            return Verdict(False, reasons)
        (_, rel, _) = record.stated_relations[0]
        for d1 in grouped[n1.lower()]:
            for d2 in grouped[n2.lower()]:
                if relation_holds(d1, rel, d2, params):
                    reasons.append(f"forbidden relation holds: {n1} {rel} {n2}")
                    return Verdict(False, reasons)
        return Verdict(True, [])

    # TASK_REL: resolve the target relation for obj3 vs obj2 from the variant.
    if record.rel_variant not in ("same", "opposite"):
        raise ValueError(f"Rel record needs rel_variant, got {record.rel_variant!r}")
    if not all([present(n) for n in names]):
        return Verdict(False, reasons)
    top = {n: _top(grouped[n.lower()]) for n in names}
    (s, rel12, o) = record.stated_relations[0]
    resolved = rel12 if record.rel_variant == "same" else rel_mod.inverse(rel12)
    ok = True
    if not relation_holds(top[names[s]], rel12, top[names[o]], params):
        reasons.append(f"relation failed: {names[s]} {rel12} {names[o]}")
        ok = False
    if not relation_holds(top[names[2]], resolved, top[names[1]], params):
        reasons.append(f"relative relation failed: {names[2]} {resolved} {names[1]}")
        ok = False
    return Verdict(ok, reasons)


# --------------------------------------------------------------------------
# Aggregation


def aggregate(verdicts) -> tuple[dict, list[str]]:
    """Per-task accuracy with mean and population std across seeds.

    verdicts: iterable of dicts with at least task, seed, passed.  Returns
    ({task: {"mean", "std", "seeds"}}, warnings); tasks with no verdicts
    are omitted with a warning.
    """
    by_task_seed: dict[str, dict[int, list[bool]]] = {}
    for v in verdicts:
        by_task_seed.setdefault(v["task"], {}).setdefault(int(v["seed"]), []).append(
            bool(v["passed"])
        )
    report: dict[str, dict] = {}
    warnings = []
    for task in TASKS:
        seeds = by_task_seed.get(task)
        if not seeds:
            warnings.append(f"no verdicts for task {task}; row omitted")
            continue
        accs = [sum(flags) / len(flags) for _, flags in sorted(seeds.items())]
        mean = sum(accs) / len(accs)
        std = (sum((a - mean) ** 2 for a in accs) / len(accs)) ** 0.5
        report[task] = {"mean": mean, "std": std, "seeds": len(accs)}
    return report, warnings


def format_report(report: dict) -> str:
    """Tab-separated task table with the overall average as the last row."""
    lines = ["Task\tAccuracy"]
    for task in TASKS:
        if task in report:
            row = report[task]
            lines.append(f"{task}\t{row['mean']:.2f}±{row['std']:.2f}")
    if report:
        avg = sum(r["mean"] for r in report.values()) / len(report)
        lines.append(f"Avg\t{avg:.2f}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Closed-loop plumbing (no vision model involved)


def scene_for_record(record: PromptRecord) -> SceneSpec:
    """SceneSpec a correct image of this record would exhibit.

    For Neg the stored relation is forbidden, so the scene carries its
    inverse (the source image's relation); all other tasks use the stated
    relations directly.
    """
    objects = tuple(SceneObject(name=n, attribute=a) for n, a in record.objects)
    if record.task == TASK_NEG:
        rels = tuple((s, rel_mod.inverse(r), o) for s, r, o in record.stated_relations)
    else:
        rels = record.stated_relations
    return SceneSpec(objects=objects, relations=rels)


def oracle_detector(record: PromptRecord, layout: LayoutPlan) -> list[Detection]:
    """Perfect detector: one detection per object at its box, confidence 1.

    Layout objects must align with record objects by index; sub-prompts are
    required to mention the class name.
    """
    if layout.num_objects != len(record.objects):
        raise Misaligned(
            f"layout has {layout.num_objects} objects, record has {len(record.objects)}"
        )
    detections = []
    for (name, attr), placed in zip(record.objects, layout.objects):
        if name.lower() not in placed.sub_prompt.lower():
            raise Misaligned(f"layout object {placed.sub_prompt!r} does not mention {name!r}")
        b = placed.box
        detections.append(
            Detection(
                class_name=name,
                box=(b.x_min, b.y_min, b.x_max + 1, b.y_max + 1),
                confidence=1.0,
                attribute=attr,
            )
        )
    return detections
