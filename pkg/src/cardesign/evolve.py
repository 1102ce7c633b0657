"""Generational evolutionary loop: 12 candidates per generation, k-tournament
selection over the user-controlled breeding pool, crossover then mutation.
User-marked designs enter the next generation verbatim.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .courses import Course
from .engine import SimConfig, SimulationResult, simulate
from .errors import ValidationError
from .genome import (CarGenome, DesignConfig, VariationParams, crossover,
                     decode, mutate, random_genome)

GENERATION_SIZE = 12

ORIGIN_EVOLVED = "evolved"
ORIGIN_USER = "userInjected"
ORIGIN_ELITE = "elitePick"


@dataclass
class EvolveParams:
    tournament_k: int = 3
    variation: VariationParams = field(default_factory=VariationParams)


@dataclass
class DesignEntry:
    genome: CarGenome
    origin: str = ORIGIN_EVOLVED


@dataclass
class SelectionFlags:
    """Per-slot Test/Use marks for one generation. Current-generation designs
    default to use=True; archive picks opt in explicitly."""

    test: list[bool]
    use: list[bool]

    @staticmethod
    def defaults(n: int = GENERATION_SIZE) -> "SelectionFlags":
        return SelectionFlags(test=[False] * n, use=[True] * n)


@dataclass
class Generation:
    index: int
    designs: list[DesignEntry]
    flags: SelectionFlags
    results: list[SimulationResult] | None = None
    refs: list[int] | None = None            # history indices, set on evaluation

    def __post_init__(self):
        if self.index < 1:
            raise ValidationError("generation index starts at 1")
        if len(self.designs) != GENERATION_SIZE:
            raise ValidationError(
                f"a generation holds exactly {GENERATION_SIZE} designs")

    def selection_fitness(self, slot: int) -> float:
        """Fitness used by tournament selection; diverged designs lose."""
        r = self.results[slot]
        return float("-inf") if r.diverged or r.fitness is None else r.fitness


def init_generation(config: DesignConfig, rng: random.Random) -> Generation:
    designs = [DesignEntry(random_genome(rng, config)) for _ in range(GENERATION_SIZE)]
    return Generation(index=1, designs=designs,
                      flags=SelectionFlags.defaults())


def evaluate_generation(gen: Generation, config: DesignConfig, course: Course,
                        sim_config: SimConfig = SimConfig(),
                        map_fn=map) -> list[SimulationResult]:
    """Simulate all designs; results are merged back in design order so a
    parallel map_fn cannot change the outcome."""
    blueprints = [decode(e.genome, config) for e in gen.designs]
    results = list(map_fn(lambda bp: simulate(bp, course, sim_config), blueprints))
    gen.results = results
    return results


def _tournament(pool: list[tuple[CarGenome, float]], k: int,
                rng: random.Random) -> CarGenome:
    best = None
    best_fit = float("-inf")
    for _ in range(min(k, len(pool))):
        genome, fit = pool[rng.randrange(len(pool))]
        if best is None or fit > best_fit:
            best, best_fit = genome, fit
    return best


def next_generation(current: Generation, flags: SelectionFlags,
                    injected: list[tuple[CarGenome, str]],
                    rng: random.Random, config: DesignConfig,
                    params: EvolveParams = EvolveParams(),
                    extra_pool: list[tuple[CarGenome, float]] = ()) -> Generation:
    """Build the successor generation.

    ``injected`` are user Test marks and editor submissions in mark order;
    the last 12 survive if over-injected. Remaining slots are filled by
    tournament offspring over the breeding pool: current designs with
    use=True plus ``extra_pool`` (archive designs the user marked).
    """
    if current.results is None:
        raise ValidationError("current generation has no results yet")

    keep = list(injected[-GENERATION_SIZE:])
    entries = [DesignEntry(genome, origin) for genome, origin in keep]

    pool = [(current.designs[i].genome, current.selection_fitness(i))
            for i in range(GENERATION_SIZE) if flags.use[i]]
    pool.extend(extra_pool)
    if not pool:
        pool = [(current.designs[i].genome, current.selection_fitness(i))
                for i in range(GENERATION_SIZE)]

    while len(entries) < GENERATION_SIZE:
        a = _tournament(pool, params.tournament_k, rng)
        b = _tournament(pool, params.tournament_k, rng)
        child = crossover(a, b, rng, config)
        child = mutate(child, rng, config, params.variation)
        entries.append(DesignEntry(child, ORIGIN_EVOLVED))

    return Generation(index=current.index + 1, designs=entries,
                      flags=SelectionFlags.defaults())


def best_ever(generations) -> tuple[CarGenome, float] | None:
    """Fittest non-diverged design over all evaluated generations, user
    injections included."""
    best = None
    best_fit = float("-inf")
    for gen in generations:
        if gen.results is None:
            continue
        for entry, result in zip(gen.designs, gen.results):
            if result.diverged or result.fitness is None:
                continue
            if result.fitness > best_fit:
                best, best_fit = entry.genome, result.fitness
    return None if best is None else (best, best_fit)
