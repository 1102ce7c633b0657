"""Mixed-initiative 2D car design workbench.

A human and an evolutionary algorithm co-design motor-driven cars on a
deterministic 2D physics simulation. Elite archives over behavior
descriptors and a random-historic control recommend candidate designs;
every session is logged, replayable, and analyzable with the bundled
statistics toolkit.
"""

from .archive import (EliteArchive, HistoryStore, InsertOutcome, bin_index,
                      control_sample, descriptor_geometry, descriptor_speed,
                      descriptor_wheel)
from .courses import Course, build_course, flat_course
from .engine import SimConfig, SimulationResult, World, simulate
from .errors import (CarDesignError, LogFormatError, ReplayError,
                     UnknownCourseError, ValidationError)
from .evolve import (GENERATION_SIZE, EvolveParams, Generation,
                     SelectionFlags, best_ever, init_generation,
                     next_generation)
from .genome import (CarBlueprint, CarGenome, DesignConfig, GeneBounds,
                     WheelGene, crossover, decode, design_from_text,
                     design_to_text, genome_dimension, mutate, random_genome,
                     vertex_angle)
from .session import (Session, SessionConfig, SessionMetrics, apply_action,
                      compute_metrics, field_config, improvement_pct,
                      lab_config, read_log, replay, replay_file, run_headless)
from .stats import (AnalysisPlan, SampleSet, TestResult, analyze_corpus,
                    bonferroni, fisher_z_compare, kde, mann_whitney_u,
                    spearman_rho)

__version__ = "1.0.0"
