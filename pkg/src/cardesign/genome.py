"""Car genomes: the decision vector, its bounds, decoding and variation.

A car is a closed polygon body plus motor-driven wheels. The genome is a
flat real vector of ``1 + nv + 5*nw`` genes in fixed order:

    [body_mass, r_1..r_nv, then per wheel
     (vertex, radius, mass, motor_speed, suspension_hz)]

Wheel attachment is encoded as a continuous gene in ``[1, nv+1)`` and floored
when decoding, so every gene shares the same mutation mechanism.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace

from .errors import ValidationError

NV_MIN, NV_MAX = 3, 24
NW_MIN, NW_MAX = 1, 12

DESIGN_FILE_FORMAT = "car-design/1"


@dataclass(frozen=True)
class Interval:
    """Closed gene bound [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValidationError("gene bound must be finite")
        if not self.lo < self.hi:
            raise ValidationError(f"gene bound needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def clamp(self, x: float) -> float:
        return min(max(x, self.lo), self.hi)


@dataclass(frozen=True)
class GeneBounds:
    """Per-gene-class bounds. All positive except motor speed, which may span
    negative values (wheels can be driven either way)."""

    body_mass: Interval = Interval(10.0, 200.0)
    vertex_radius: Interval = Interval(0.1, 2.0)
    wheel_radius: Interval = Interval(0.05, 1.0)
    wheel_mass: Interval = Interval(1.0, 50.0)
    motor_speed: Interval = Interval(-30.0, 30.0)
    suspension_hz: Interval = Interval(0.5, 10.0)

    def __post_init__(self):
        for name in ("body_mass", "vertex_radius", "wheel_radius", "wheel_mass",
                     "suspension_hz"):
            iv = getattr(self, name)
            if iv.lo <= 0:
                raise ValidationError(f"{name} bound must be strictly positive")

    def to_dict(self) -> dict:
        return {name: [iv.lo, iv.hi] for name, iv in self.__dict__.items()}

    @staticmethod
    def from_dict(d: dict) -> "GeneBounds":
        return GeneBounds(**{k: Interval(*v) for k, v in d.items()})


@dataclass(frozen=True)
class DesignConfig:
    """Shape of the design task: vertex/wheel counts, bounds, course."""

    nv: int = 7
    nw: int = 4
    bounds: GeneBounds = field(default_factory=GeneBounds)
    course_id: str = "HillClimb"

    def __post_init__(self):
        if not (NV_MIN <= self.nv <= NV_MAX):
            raise ValidationError(f"nv must be in [{NV_MIN}, {NV_MAX}], got {self.nv}")
        if not (NW_MIN <= self.nw <= NW_MAX):
            raise ValidationError(f"nw must be in [{NW_MIN}, {NW_MAX}], got {self.nw}")

    @property
    def dimension(self) -> int:
        return genome_dimension(self.nv, self.nw)

    def to_dict(self) -> dict:
        return {"nv": self.nv, "nw": self.nw, "bounds": self.bounds.to_dict(),
                "course_id": self.course_id}

    @staticmethod
    def from_dict(d: dict) -> "DesignConfig":
        return DesignConfig(nv=d["nv"], nw=d["nw"],
                            bounds=GeneBounds.from_dict(d["bounds"]),
                            course_id=d["course_id"])


def genome_dimension(nv: int, nw: int) -> int:
    """Total gene count for a design task with nv vertices and nw wheels."""
    if not (NV_MIN <= nv <= NV_MAX):
        raise ValidationError(f"nv must be in [{NV_MIN}, {NV_MAX}], got {nv}")
    if not (NW_MIN <= nw <= NW_MAX):
        raise ValidationError(f"nw must be in [{NW_MIN}, {NW_MAX}], got {nw}")
    return 1 + nv + 5 * nw


def vertex_angle(i: int, nv: int) -> float:
    """Polar angle of vertex i (1-based) in degrees."""
    if not (1 <= i <= nv):
        raise ValidationError(f"vertex index {i} out of [1, {nv}]")
    return 360.0 * (1 - i) / nv


@dataclass(frozen=True)
class WheelGene:
    """One wheel's five degrees of freedom.

    ``vertex`` is the continuous attachment gene; ``vertex_index(nv)`` gives
    the 1-based polygon vertex it resolves to. Several wheels may share a
    vertex. Positive motor speed drives the car toward +x.
    """

    vertex: float
    radius: float
    mass: float
    motor_speed: float
    suspension_hz: float

    def vertex_index(self, nv: int) -> int:
        return min(int(math.floor(self.vertex)), nv)


@dataclass(frozen=True)
class CarGenome:
    body_mass: float
    vertex_radii: tuple[float, ...]
    wheels: tuple[WheelGene, ...]

    def to_vector(self) -> list[float]:
        """Flat gene list in the fixed file order."""
        vec = [self.body_mass, *self.vertex_radii]
        for w in self.wheels:
            vec += [w.vertex, w.radius, w.mass, w.motor_speed, w.suspension_hz]
        return vec

    @staticmethod
    def from_vector(vec: list[float], config: DesignConfig) -> "CarGenome":
        if len(vec) != config.dimension:
            raise ValidationError(
                f"expected {config.dimension} genes, got {len(vec)}")
        nv = config.nv
        wheels = []
        for k in range(config.nw):
            base = 1 + nv + 5 * k
            wheels.append(WheelGene(*vec[base:base + 5]))
        return CarGenome(body_mass=vec[0],
                         vertex_radii=tuple(vec[1:1 + nv]),
                         wheels=tuple(wheels))


def gene_intervals(config: DesignConfig) -> list[Interval]:
    """Bound interval for every gene, in vector order."""
    b = config.bounds
    ivs = [b.body_mass] + [b.vertex_radius] * config.nv
    vertex_iv = Interval(1.0, float(config.nv + 1))
    for _ in range(config.nw):
        ivs += [vertex_iv, b.wheel_radius, b.wheel_mass, b.motor_speed,
                b.suspension_hz]
    return ivs


def validate_genome(genome: CarGenome, config: DesignConfig) -> None:
    """Raise ValidationError unless every gene is inside its bound."""
    if len(genome.vertex_radii) != config.nv:
        raise ValidationError(
            f"expected {config.nv} vertex radii, got {len(genome.vertex_radii)}")
    if len(genome.wheels) != config.nw:
        raise ValidationError(
            f"expected {config.nw} wheels, got {len(genome.wheels)}")
    vec = genome.to_vector()
    for g, iv in zip(vec, gene_intervals(config)):
        if not math.isfinite(g) or not iv.contains(g):
            raise ValidationError(f"gene {g} outside bound [{iv.lo}, {iv.hi}]")


@dataclass(frozen=True)
class CarBlueprint:
    """Decoded Cartesian geometry of a genome.

    ``polygon`` lists the nv body vertices; the closed collision mesh may be
    convex or non-convex. ``center_of_mass`` combines the uniform-density
    polygon body with the wheels as point masses at their mount vertices.
    """

    polygon: tuple[tuple[float, float], ...]
    center_of_mass: tuple[float, float]
    body_mass: float
    body_centroid: tuple[float, float]
    body_inertia: float
    wheel_mounts: tuple[tuple[tuple[float, float], WheelGene], ...]


def _polygon_properties(pts: list[tuple[float, float]], mass: float):
    """Signed area, centroid and inertia (about the centroid) of a simple
    polygon of the given total mass. Sign-consistent for either winding."""
    a2 = 0.0   # 2x signed area
    cx = cy = 0.0
    j = 0.0    # second moment about the origin, up to density/12
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        cross = x0 * y1 - x1 * y0
        a2 += cross
        cx += (x0 + x1) * cross
        cy += (y0 + y1) * cross
        j += cross * (x0 * x0 + x0 * x1 + x1 * x1 + y0 * y0 + y0 * y1 + y1 * y1)
    area = 0.5 * a2
    if area == 0.0:
        raise ValidationError("degenerate polygon with zero area")
    cx /= 3.0 * a2
    cy /= 3.0 * a2
    density = mass / area                     # signed; cancels the signed sums
    inertia_origin = density * j / 12.0
    inertia = inertia_origin - mass * (cx * cx + cy * cy)
    return area, (cx, cy), inertia


def decode(genome: CarGenome, config: DesignConfig) -> CarBlueprint:
    """Resolve the polar genome to Cartesian geometry and mass properties."""
    validate_genome(genome, config)
    nv = config.nv
    polygon = []
    for i in range(1, nv + 1):
        phi = math.radians(vertex_angle(i, nv))
        r = genome.vertex_radii[i - 1]
        polygon.append((r * math.cos(phi), r * math.sin(phi)))

    _, centroid, inertia = _polygon_properties(polygon, genome.body_mass)

    mounts = []
    total_mass = genome.body_mass
    mx = genome.body_mass * centroid[0]
    my = genome.body_mass * centroid[1]
    for w in genome.wheels:
        pos = polygon[w.vertex_index(nv) - 1]
        mounts.append((pos, w))
        total_mass += w.mass
        mx += w.mass * pos[0]
        my += w.mass * pos[1]

    return CarBlueprint(polygon=tuple(polygon),
                        center_of_mass=(mx / total_mass, my / total_mass),
                        body_mass=genome.body_mass,
                        body_centroid=centroid,
                        body_inertia=inertia,
                        wheel_mounts=tuple(mounts))


def random_genome(rng: random.Random, config: DesignConfig) -> CarGenome:
    """Uniform sample of every gene inside its bound."""
    vec = [rng.uniform(iv.lo, iv.hi) for iv in gene_intervals(config)]
    return CarGenome.from_vector(vec, config)


@dataclass(frozen=True)
class VariationParams:
    """Mutation/crossover knobs. ``p_mut`` defaults to 1/D when None."""

    p_mut: float | None = None
    mutation_scale: float = 0.1

    def mutation_rate(self, dimension: int) -> float:
        return 1.0 / dimension if self.p_mut is None else self.p_mut


def mutate(genome: CarGenome, rng: random.Random, config: DesignConfig,
           params: VariationParams = VariationParams()) -> CarGenome:
    """Perturb each gene with probability p_mut by Gaussian noise scaled to
    the gene's bound width, clamped back into bounds."""
    ivs = gene_intervals(config)
    rate = params.mutation_rate(len(ivs))
    vec = genome.to_vector()
    out = []
    for g, iv in zip(vec, ivs):
        if rng.random() < rate:
            g = iv.clamp(g + rng.gauss(0.0, params.mutation_scale * iv.width))
        out.append(g)
    return CarGenome.from_vector(out, config)


def crossover(parent_a: CarGenome, parent_b: CarGenome, rng: random.Random,
              config: DesignConfig) -> CarGenome:
    """Uniform per-gene crossover."""
    va, vb = parent_a.to_vector(), parent_b.to_vector()
    if len(va) != len(vb) or len(va) != config.dimension:
        raise ValidationError("parents do not match the design config")
    child = [a if rng.random() < 0.5 else b for a, b in zip(va, vb)]
    return CarGenome.from_vector(child, config)


def design_to_text(genome: CarGenome, config: DesignConfig) -> str:
    """Serialize a design to the self-describing export format."""
    doc = {"format": DESIGN_FILE_FORMAT,
           "config": config.to_dict(),
           "genes": genome.to_vector()}
    return json.dumps(doc, indent=2) + "\n"


def design_from_text(text: str) -> tuple[CarGenome, DesignConfig]:
    """Parse a design file; validates genes against the embedded config."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"design file is not valid JSON: {e}") from e
    if doc.get("format") != DESIGN_FILE_FORMAT:
        raise ValidationError(f"unsupported design format {doc.get('format')!r}")
    config = DesignConfig.from_dict(doc["config"])
    genome = CarGenome.from_vector(list(map(float, doc["genes"])), config)
    validate_genome(genome, config)
    return genome, config


def with_course(config: DesignConfig, course_id: str) -> DesignConfig:
    return replace(config, course_id=course_id)
