"""Benchmark prompt generation for the six positional tasks.

Tasks and ground truth:

* TwoObj   -- "a photo of a <obj1> <relation> a <obj2>".
* ThreeObj -- three objects chained by two relations, the chain laid on a
  2x2 grid so one relation is horizontal and one vertical.
* FourObj  -- four objects in the cycle (1,2),(2,3),(3,4),(4,1) walked
  around the grid.
* PAB      -- "a <attr1> <obj1> <relation> a <attr2> <obj2>" with colors.
* Neg      -- derived from a TwoObj prompt by negating the opposite
  relation, keeping the same target image: the stored relation is the one
  that must NOT hold.
* Rel      -- a relation defined relative to another; half the records are
  "same side", half "opposite side", and the stored second relation is
  already resolved against the first.

Chain-task prompts list all objects up front (listing order shuffled) and
then one sentence per relation (sentence order shuffled); each relation
sentence flips direction with equal probability.  Every record is drawn
from its own xoshiro256** substream keyed by (seed, task, index), so sets
are reproducible across machines and prefix-stable in n.
"""

from __future__ import annotations

from dataclasses import dataclass

from .. import relations as rel_mod
from ..errors import UnknownTask
from ..rng import Xoshiro256StarStar, derive_seed
from .vocab import Vocabulary

TASK_TWO = "TwoObj"
TASK_THREE = "ThreeObj"
TASK_FOUR = "FourObj"
TASK_PAB = "PAB"
TASK_NEG = "Neg"
TASK_REL = "Rel"

TASKS = (TASK_TWO, TASK_THREE, TASK_FOUR, TASK_PAB, TASK_NEG, TASK_REL)

_ALIASES = {
    "twoobj": TASK_TWO,
    "2obj": TASK_TWO,
    "threeobj": TASK_THREE,
    "3obj": TASK_THREE,
    "fourobj": TASK_FOUR,
    "4obj": TASK_FOUR,
    "pab": TASK_PAB,
    "neg": TASK_NEG,
    "rel": TASK_REL,
}

OPPOSITE_PHRASES = (
    "on the other side of",
    "on the opposite side of",
    "on the contrary side of",
)
SAME_PHRASE = "on the same side of"


def canonical_task(name: str) -> str:
    task = _ALIASES.get(name.strip().lower())
    if task is None:
        raise UnknownTask(f"unknown task {name!r} (known: {', '.join(TASKS)})")
    return task


@dataclass(frozen=True)
class PromptRecord:
    task: str
    prompt_text: str
    objects: tuple[tuple[str, str | None], ...]  # (class name, color or None)
    stated_relations: tuple[tuple[int, str, int], ...]
    rel_variant: str | None
    seed: int
    index: int

    def __post_init__(self):
        if self.task not in TASKS:
            raise UnknownTask(f"unknown task {self.task!r}")
        for s, rel, o in self.stated_relations:
            if rel not in rel_mod.RELATIONS:
                raise ValueError(f"unknown relation {rel!r}")
            if not (0 <= s < len(self.objects) and 0 <= o < len(self.objects)):
                raise ValueError("relation index out of range")

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "prompt_text": self.prompt_text,
            "objects": [{"name": n, "attribute": a} for n, a in self.objects],
            "stated_relations": [[s, r, o] for s, r, o in self.stated_relations],
            "rel_variant": self.rel_variant,
            "seed": self.seed,
            "index": self.index,
        }


def record_from_dict(data: dict) -> PromptRecord:
    return PromptRecord(
        task=data["task"],
        prompt_text=data["prompt_text"],
        objects=tuple((o["name"], o.get("attribute")) for o in data["objects"]),
        stated_relations=tuple((s, r, o) for s, r, o in data["stated_relations"]),
        rel_variant=data.get("rel_variant"),
        seed=int(data["seed"]),
        index=int(data["index"]),
    )


# --------------------------------------------------------------------------
# 2x2 grid geometry for the chain tasks

_CELLS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _adjacent(a, b) -> bool:
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1


def _chain_paths(length: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    import itertools

    paths = []
    for cells in itertools.permutations(_CELLS, length):
        if all(_adjacent(cells[i], cells[i + 1]) for i in range(length - 1)):
            paths.append(cells)
    return tuple(sorted(paths))


def _cycle_paths() -> tuple[tuple[tuple[int, int], ...], ...]:
    import itertools

    paths = []
    for cells in itertools.permutations(_CELLS, 4):
        if all(_adjacent(cells[i], cells[(i + 1) % 4]) for i in range(4)):
            paths.append(cells)
    return tuple(sorted(paths))


_PATHS_3 = _chain_paths(3)
_CYCLES_4 = _cycle_paths()


def _cell_relation(c1, c2) -> str:
    """Relation of the object at c1 to the object at c2 (orthogonal cells)."""
    dr, dc = c2[0] - c1[0], c2[1] - c1[1]
    if (dr, dc) == (0, 1):
        return rel_mod.LEFT_OF
    if (dr, dc) == (0, -1):
        return rel_mod.RIGHT_OF
    if (dr, dc) == (1, 0):
        return rel_mod.ABOVE
    if (dr, dc) == (-1, 0):
        return rel_mod.BELOW
    raise ValueError(f"cells {c1}, {c2} are not orthogonal neighbors")


# Prompt templates, shared between the generators and their tests.


def two_object_prompt(obj1: str, relation: str, obj2: str) -> str:
    return f"a photo of a {obj1} {relation} a {obj2}"


def pab_prompt(attr1: str, obj1: str, relation: str, attr2: str, obj2: str) -> str:
    return f"a {attr1} {obj1} {relation} a {attr2} {obj2}"


def neg_prompt(obj1: str, obj2: str, negated_relation: str) -> str:
    return f"a photo of a {obj1} and a {obj2}, a {obj1} is not {negated_relation} a {obj2}"


def derive_neg_prompt(obj1: str, obj2: str, source_relation: str) -> str:
    """Negate the opposite of the source relation; the target image stays."""
    return neg_prompt(obj1, obj2, rel_mod.inverse(source_relation))


def rel_prompt(obj1: str, relation12: str, obj2: str, obj3: str, phrase: str, prep: str) -> str:
    return (
        f"a photo of a {obj1} {relation12} a {obj2}, "
        f"and a {obj3} {phrase} the {obj2} {prep} the {obj1}"
    )


def _relation_sentence(rng: Xoshiro256StarStar, obj_i: str, rel: str, obj_j: str) -> str:
    # Equal-probability direction flip.
    if rng.coin():
        return f"The {obj_j} is {rel_mod.inverse(rel)} the {obj_i}"
    return f"The {obj_i} is {rel} the {obj_j}"


def _chain_prompt(rng, names: list[str], rels: list[tuple[int, str, int]]) -> str:
    listing = list(names)
    rng.shuffle(listing)
    if len(listing) == 3:
        first = f"A photo of a {listing[0]}, a {listing[1]}, and a {listing[2]}."
    else:
        first = (
            f"A photo of a {listing[0]}, a {listing[1]}, a {listing[2]}, "
            f"and a {listing[3]}."
        )
    sentences = [_relation_sentence(rng, names[s], rel, names[o]) for s, rel, o in rels]
    rng.shuffle(sentences)
    return first + " " + ". ".join(sentences) + "."


def _record_rng(task: str, seed: int, index: int) -> Xoshiro256StarStar:
    return Xoshiro256StarStar(derive_seed(seed, f"poseval/{task}/{index}"))


def _gen_two(rng, vocab: Vocabulary, seed: int, index: int) -> PromptRecord:
    o1, o2 = rng.sample_distinct(vocab.objects, 2)
    rel = rng.choice(vocab.relations)
    return PromptRecord(
        task=TASK_TWO,
        prompt_text=two_object_prompt(o1, rel, o2),
        objects=((o1, None), (o2, None)),
        stated_relations=((0, rel, 1),),
        rel_variant=None,
        seed=seed,
        index=index,
    )


def _gen_chain(task, rng, vocab, seed, index) -> PromptRecord:
    if task == TASK_THREE:
        names = rng.sample_distinct(vocab.objects, 3)
        cells = rng.choice(_PATHS_3)
        pairs = [(0, 1), (1, 2)]
    else:
        names = rng.sample_distinct(vocab.objects, 4)
        cells = rng.choice(_CYCLES_4)
        pairs = [(0, 1), (1, 2), (2, 3), (3, 0)]
    rels = tuple((i, _cell_relation(cells[i], cells[j]), j) for i, j in pairs)
    prompt = _chain_prompt(rng, names, list(rels))
    return PromptRecord(
        task=task,
        prompt_text=prompt,
        objects=tuple((n, None) for n in names),
        stated_relations=rels,
        rel_variant=None,
        seed=seed,
        index=index,
    )


def _gen_pab(rng, vocab, seed, index) -> PromptRecord:
    o1, o2 = rng.sample_distinct(vocab.objects, 2)
    a1 = rng.choice(vocab.colors)
    a2 = rng.choice(vocab.colors)
    rel = rng.choice(vocab.relations)
    return PromptRecord(
        task=TASK_PAB,
        prompt_text=pab_prompt(a1, o1, rel, a2, o2),
        objects=((o1, a1), (o2, a2)),
        stated_relations=((0, rel, 1),),
        rel_variant=None,
        seed=seed,
        index=index,
    )


def _gen_neg(rng, vocab, seed, index) -> PromptRecord:
    # Derived from the two-object prompt "a photo of a <o1> <src> a <o2>" by
    # negating the opposite relation; the target image stays the same.
    o1, o2 = rng.sample_distinct(vocab.objects, 2)
    source = rng.choice(vocab.relations)
    return PromptRecord(
        task=TASK_NEG,
        prompt_text=derive_neg_prompt(o1, o2, source),
        objects=((o1, None), (o2, None)),
        stated_relations=((0, rel_mod.inverse(source), 1),),
        rel_variant=None,
        seed=seed,
        index=index,
    )


def _gen_rel(rng, vocab, seed, index) -> PromptRecord:
    o1, o2, o3 = rng.sample_distinct(vocab.objects, 3)
    rel12 = rng.choice(vocab.relations)
    variant = "same" if index % 2 == 0 else "opposite"
    if variant == "same":
        phrase, prep, resolved = SAME_PHRASE, "as", rel12
    else:
        phrase = rng.choice(OPPOSITE_PHRASES)
        prep, resolved = "for", rel_mod.inverse(rel12)
    prompt = rel_prompt(o1, rel12, o2, o3, phrase, prep)
    return PromptRecord(
        task=TASK_REL,
        prompt_text=prompt,
        objects=((o1, None), (o2, None), (o3, None)),
        stated_relations=((0, rel12, 1), (2, resolved, 1)),
        rel_variant=variant,
        seed=seed,
        index=index,
    )


def gen_prompts(task: str, n: int, seed: int, vocab: Vocabulary) -> list[PromptRecord]:
    """Deterministic prompt set for one task; pure in (task, n, seed, vocab)."""
    task = canonical_task(task)
    if n < 0:
        raise ValueError("n must be >= 0")
    needs = {TASK_TWO: 2, TASK_THREE: 3, TASK_FOUR: 4, TASK_PAB: 2, TASK_NEG: 2, TASK_REL: 3}
    vocab.require(
        needs[task],
        n_colors=1 if task == TASK_PAB else 0,
        n_relations=0 if task in (TASK_THREE, TASK_FOUR) else 1,
    )
    records = []
    for index in range(n):
        rng = _record_rng(task, seed, index)
        if task == TASK_TWO:
            records.append(_gen_two(rng, vocab, seed, index))
        elif task in (TASK_THREE, TASK_FOUR):
            records.append(_gen_chain(task, rng, vocab, seed, index))
        elif task == TASK_PAB:
            records.append(_gen_pab(rng, vocab, seed, index))
        elif task == TASK_NEG:
            records.append(_gen_neg(rng, vocab, seed, index))
        else:
            records.append(_gen_rel(rng, vocab, seed, index))
    return records
