"""Behavior descriptors, per-descriptor elite archives and the random-historic
control recommender.

Each archive is a 1-D binned map over one descriptor; a cell keeps the best
design seen for that bin and is only ever replaced by a strictly fitter one.
The control recommender ignores descriptors entirely and samples uniformly
from everything ever tested.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum

from .errors import ValidationError
from .genome import CarBlueprint, CarGenome

N_BINS = 12

DESCRIPTOR_KINDS = ("speed", "wheel", "geometry")


def descriptor_speed(genome: CarGenome) -> float:
    """Mean motor target speed over the car's wheels (rad/s)."""
    return sum(w.motor_speed for w in genome.wheels) / len(genome.wheels)


def descriptor_wheel(genome: CarGenome) -> float:
    """Mean wheel radius (m)."""
    return sum(w.radius for w in genome.wheels) / len(genome.wheels)


def descriptor_geometry(blueprint: CarBlueprint) -> float:
    """Mean distance from each body vertex to the car's center of mass,
    wheels included (m)."""
    cx, cy = blueprint.center_of_mass
    total = 0.0
    for x, y in blueprint.polygon:
        total += math.hypot(x - cx, y - cy)
    return total / len(blueprint.polygon)


def design_descriptors(blueprint: CarBlueprint) -> tuple[float, float, float]:
    """(speed, wheel, geometry) triple for a decoded design."""
    wheels = [w for _, w in blueprint.wheel_mounts]
    speed = sum(w.motor_speed for w in wheels) / len(wheels)
    radius = sum(w.radius for w in wheels) / len(wheels)
    return speed, radius, descriptor_geometry(blueprint)


def bin_index(value: float, lo: float, hi: float, n_bins: int = N_BINS) -> int:
    """Bin of a descriptor value; out-of-range values clamp to the end bins."""
    if not lo < hi:
        raise ValidationError(f"descriptor range needs lo < hi, got [{lo}, {hi}]")
    idx = math.floor(n_bins * (value - lo) / (hi - lo))
    return min(max(idx, 0), n_bins - 1)


class InsertOutcome(Enum):
    INSERTED_EMPTY = "insertedEmpty"
    REPLACED = "replaced"
    REJECTED = "rejected"


@dataclass
class Cell:
    design_ref: int
    fitness: float
    descriptor_value: float


@dataclass
class EliteArchive:
    kind: str
    lo: float
    hi: float
    n_bins: int = N_BINS
    cells: list[Cell | None] = field(default_factory=list)

    def __post_init__(self):
        if not self.cells:
            self.cells = [None] * self.n_bins

    def insert(self, design_ref: int, fitness: float,
               descriptor_value: float) -> InsertOutcome:
        """Keep the strictly fitter design per bin; ties keep the incumbent."""
        if not (math.isfinite(fitness) and math.isfinite(descriptor_value)):
            raise ValidationError("archive insert needs finite fitness and descriptor")
        i = bin_index(descriptor_value, self.lo, self.hi, self.n_bins)
        incumbent = self.cells[i]
        if incumbent is None:
            self.cells[i] = Cell(design_ref, fitness, descriptor_value)
            return InsertOutcome.INSERTED_EMPTY
        if fitness > incumbent.fitness:
            self.cells[i] = Cell(design_ref, fitness, descriptor_value)
            return InsertOutcome.REPLACED
        return InsertOutcome.REJECTED

    def coverage(self) -> int:
        return sum(1 for c in self.cells if c is not None)

    def candidates(self) -> list[Cell]:
        """Filled cells in bin order; at most n_bins entries."""
        return [c for c in self.cells if c is not None]

    def snapshot(self) -> list[dict]:
        """Per-cell export rows: (bin, designRef, fitness, descriptorValue)."""
        return [{"bin": i, "ref": c.design_ref, "fitness": c.fitness,
                 "descriptor": c.descriptor_value}
                for i, c in enumerate(self.cells) if c is not None]


archive_insert = EliteArchive.insert


@dataclass
class HistoryEntry:
    genome: CarGenome
    fitness: float | None          # None for diverged runs
    descriptors: tuple[float, float, float]


class HistoryStore:
    """Append-only record of every design ever tested; indices are stable
    design refs used throughout the session log."""

    def __init__(self):
        self._entries: list[HistoryEntry] = []

    def append(self, genome: CarGenome, fitness: float | None,
               descriptors: tuple[float, float, float]) -> int:
        self._entries.append(HistoryEntry(genome, fitness, descriptors))
        return len(self._entries) - 1

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, ref: int) -> HistoryEntry:
        return self._entries[ref]

    def contains(self, ref: int) -> bool:
        return 0 <= ref < len(self._entries)


def control_sample(history: HistoryStore, rng: random.Random,
                   k: int = N_BINS) -> list[int]:
    """Uniform sample without replacement of design refs from the history."""
    n = len(history)
    return sorted(rng.sample(range(n), min(k, n)))
