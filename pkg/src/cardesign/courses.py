"""Built-in driving courses and the course file format.

Terrain is a polyline strictly monotone in x. Every course carries a long
flat apron on both sides so cars that roll backwards or fly far forward stay
on defined ground.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import UnknownCourseError, ValidationError

COURSE_FILE_FORMAT = "car-course/1"
COURSE_IDS = ("HillClimb", "Bumps", "HillBumps", "SkiJump")

DEFAULT_DROP_HEIGHT = 3.0
_APRON_BACK = -1500.0
_APRON_FRONT = 3000.0


@dataclass(frozen=True)
class Course:
    id: str
    terrain: tuple[tuple[float, float], ...]
    spawn_x: float = 0.0
    drop_height: float = DEFAULT_DROP_HEIGHT

    def __post_init__(self):
        if len(self.terrain) < 2:
            raise ValidationError("terrain needs at least two points")
        xs = [p[0] for p in self.terrain]
        for a, b in zip(xs, xs[1:]):
            if not a < b:
                raise ValidationError("terrain x-coordinates must be strictly increasing")
        if not xs[0] <= self.spawn_x <= xs[-1]:
            raise ValidationError("spawn_x outside terrain x-range")
        if self.drop_height <= 0:
            raise ValidationError("drop_height must be positive")

    def height_at(self, x: float) -> float:
        """Terrain height, clamped flat beyond the endpoints."""
        pts = self.terrain
        if x <= pts[0][0]:
            return pts[0][1]
        if x >= pts[-1][0]:
            return pts[-1][1]
        lo, hi = 0, len(pts) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if pts[mid][0] <= x:
                lo = mid
            else:
                hi = mid
        (x0, y0), (x1, y1) = pts[lo], pts[hi]
        return y0 + (y1 - y0) * (x - x0) / (x1 - x0)


def _hill_climb() -> list[tuple[float, float]]:
    pts = [(_APRON_BACK, 0.0), (10.0, 0.0)]
    x, y = 10.0, 0.0
    for grade in (0.05, 0.10, 0.15, 0.22, 0.30, 0.40):
        x += 150.0
        y += 150.0 * grade
        pts.append((x, y))
    # final wall steeper than friction can climb, then level off
    x += 400.0
    y += 400.0 * 0.9
    pts.append((x, y))
    pts.append((_APRON_FRONT, y))
    return pts


def _bumps(base=None, start=10.0, end=1500.0, height=0.35, pitch=4.0):
    if base is None:
        base = lambda x: 0.0
    pts = [(_APRON_BACK, base(_APRON_BACK)), (start, base(start))]
    x = start
    while x + pitch <= end:
        x += pitch / 2.0
        pts.append((x, base(x) + height))   # tooth tip
        x += pitch / 2.0
        pts.append((x, base(x)))            # back to the base line
    pts.append((_APRON_FRONT, base(_APRON_FRONT)))
    return pts


def _hill_bumps() -> list[tuple[float, float]]:
    grades = (0.04, 0.08, 0.12, 0.16, 0.20)
    length = 250.0

    def base(x: float) -> float:
        if x <= 10.0:
            return 0.0
        y, x0 = 0.0, 10.0
        for g in grades:
            seg = min(x - x0, length)
            y += g * seg
            x0 += length
            if x <= x0:
                return y
        return y

    return _bumps(base=base, start=10.0, end=10.0 + len(grades) * length,
                  height=0.3, pitch=5.0)


def _ski_jump() -> list[tuple[float, float]]:
    return [
        (_APRON_BACK, 0.0),
        (20.0, 0.0),
        (100.0, 24.0),      # take-off ramp, 30% grade
        (104.0, -10.0),     # the gap: a steep face down to the landing floor
        (_APRON_FRONT, -10.0),
    ]


_BUILDERS = {
    "HillClimb": _hill_climb,
    "Bumps": _bumps,
    "HillBumps": _hill_bumps,
    "SkiJump": _ski_jump,
}


def build_course(course_id: str) -> Course:
    """Construct one of the built-in courses by id."""
    builder = _BUILDERS.get(course_id)
    if builder is None:
        raise UnknownCourseError(
            f"unknown course {course_id!r}; known: {', '.join(COURSE_IDS)}")
    return Course(id=course_id, terrain=tuple(builder()))


def flat_course(y: float = 0.0, course_id: str = "Flat") -> Course:
    """A featureless flat course, mainly for tests and calibration."""
    return Course(id=course_id, terrain=((_APRON_BACK, y), (_APRON_FRONT, y)))


def course_to_text(course: Course) -> str:
    doc = {"format": COURSE_FILE_FORMAT, "id": course.id,
           "spawn_x": course.spawn_x, "drop_height": course.drop_height,
           "terrain": [list(p) for p in course.terrain]}
    return json.dumps(doc, indent=2) + "\n"


def course_from_text(text: str) -> Course:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"course file is not valid JSON: {e}") from e
    if doc.get("format") != COURSE_FILE_FORMAT:
        raise ValidationError(f"unsupported course format {doc.get('format')!r}")
    return Course(id=doc["id"],
                  terrain=tuple((float(x), float(y)) for x, y in doc["terrain"]),
                  spawn_x=float(doc["spawn_x"]),
                  drop_height=float(doc["drop_height"]))
