"""Spatial relation vocabulary and the center-displacement predicate.

The predicate works on center points in image coordinates (x right,
y down).  A relation holds when the displacement along its axis has the
right sign and is at least as large in magnitude as the cross-axis
displacement; with ``strict=True`` the dominance must be strict, which
on a 2x2 cell grid reduces to axis-aligned placements.
"""

from __future__ import annotations

LEFT_OF = "left of"
RIGHT_OF = "right of"
ABOVE = "above"
BELOW = "below"

RELATIONS = (LEFT_OF, RIGHT_OF, ABOVE, BELOW)
HORIZONTAL = (LEFT_OF, RIGHT_OF)
VERTICAL = (ABOVE, BELOW)

_INVERSE = {LEFT_OF: RIGHT_OF, RIGHT_OF: LEFT_OF, ABOVE: BELOW, BELOW: ABOVE}


def inverse(relation: str) -> str:
    try:
        return _INVERSE[relation]
    except KeyError:
        raise ValueError(f"unknown relation: {relation!r}") from None


def is_horizontal(relation: str) -> bool:
    if relation not in RELATIONS:
        raise ValueError(f"unknown relation: {relation!r}")
    return relation in HORIZONTAL


def relation_between(
    ax: float, ay: float, relation: str, bx: float, by: float, strict: bool = False
) -> bool:
    """True if ``a <relation> b`` holds for centers a=(ax, ay), b=(bx, by)."""
    dx = bx - ax
    dy = by - ay
    adx = abs(dx)
    ady = abs(dy)
    if relation == LEFT_OF:
        dominant = adx > ady if strict else adx >= ady
        return dx > 0 and dominant
    if relation == RIGHT_OF:
        dominant = adx > ady if strict else adx >= ady
        return dx < 0 and dominant
    if relation == ABOVE:
        dominant = ady > adx if strict else ady >= adx
        return dy > 0 and dominant
    if relation == BELOW:
        dominant = ady > adx if strict else ady >= adx
        return dy < 0 and dominant
    raise ValueError(f"unknown relation: {relation!r}")
