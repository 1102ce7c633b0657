"""One design session: view state, user actions, per-generation telemetry,
metrics, and deterministic replay.

Everything observable about a session is an append-only event log (JSON
lines: a header line then one event per line). A session with a fixed seed
and no user actions is bit-reproducible; with user actions, replaying the
log re-executes the same evolution and reproduces every event exactly.

Timestamps are logical seconds: each generation accounts for one simulated
run (30 s by default) and interactive callers may stamp actions with their
own monotone times.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .archive import EliteArchive, HistoryStore, control_sample
from .courses import Course, build_course
from .engine import SimConfig
from .errors import LogFormatError, ReplayError, ValidationError
from .evolve import (GENERATION_SIZE, ORIGIN_ELITE, ORIGIN_USER, EvolveParams,
                     Generation, best_ever, evaluate_generation,
                     init_generation, next_generation)
from .genome import CarGenome, DesignConfig, validate_genome

LOG_FORMAT = "car-session-log/1"
APP_VERSION = "1.0.0"

VIEW_LIVE = "live"
VIEW_EDITOR = "editor"
VIEW_SPEED = "speed"
VIEW_WHEEL = "wheel"
VIEW_GEOMETRY = "geometry"
VIEW_CONTROL = "control"

INSIGHT_VIEWS = (VIEW_SPEED, VIEW_WHEEL, VIEW_GEOMETRY, VIEW_CONTROL)
FIELD_VIEWS = (VIEW_LIVE, VIEW_EDITOR, VIEW_SPEED, VIEW_WHEEL, VIEW_GEOMETRY,
               VIEW_CONTROL)
LAB_VIEWS = (VIEW_LIVE, VIEW_EDITOR, VIEW_CONTROL, VIEW_GEOMETRY)
LAB_GENERATION_CAP = 40

GROUP_NO_INTERACTION = "noInteraction"
GROUP_EDITOR_ONLY = "editorOnly"
GROUP_EDITOR_AND_INSIGHTS = "editorAndInsights"
VIEWGROUP_NONE = "viewedNoInsights"
VIEWGROUP_SOME = "viewedSomeInsight"


@dataclass(frozen=True)
class SessionConfig:
    mode: str = "field"                      # "field" | "lab"
    design: DesignConfig = field(default_factory=DesignConfig)
    seed: int = 0
    generation_cap: int | None = None
    anonymize_views: bool = False
    sim: SimConfig = field(default_factory=SimConfig)
    evolve: EvolveParams = field(default_factory=EvolveParams)

    def __post_init__(self):
        if self.mode not in ("field", "lab"):
            raise ValidationError(f"unknown session mode {self.mode!r}")
        if self.mode == "lab":
            if self.generation_cap != LAB_GENERATION_CAP:
                raise ValidationError("lab mode runs exactly 40 generations")
            if not self.anonymize_views:
                raise ValidationError("lab mode requires anonymized views")

    @property
    def views(self) -> tuple[str, ...]:
        return LAB_VIEWS if self.mode == "lab" else FIELD_VIEWS

    def to_dict(self) -> dict:
        return {"mode": self.mode, "design": self.design.to_dict(),
                "seed": self.seed, "generation_cap": self.generation_cap,
                "anonymize_views": self.anonymize_views,
                "sim": asdict(self.sim),
                "evolve": {"tournament_k": self.evolve.tournament_k,
                           "p_mut": self.evolve.variation.p_mut,
                           "mutation_scale": self.evolve.variation.mutation_scale}}

    @staticmethod
    def from_dict(d: dict) -> "SessionConfig":
        from .genome import VariationParams
        ev = d["evolve"]
        return SessionConfig(
            mode=d["mode"], design=DesignConfig.from_dict(d["design"]),
            seed=d["seed"], generation_cap=d["generation_cap"],
            anonymize_views=d["anonymize_views"], sim=SimConfig(**d["sim"]),
            evolve=EvolveParams(tournament_k=ev["tournament_k"],
                                variation=VariationParams(
                                    p_mut=ev["p_mut"],
                                    mutation_scale=ev["mutation_scale"])))


def field_config(seed: int, design: DesignConfig | None = None,
                 generation_cap: int | None = None, **kwargs) -> SessionConfig:
    return SessionConfig(mode="field", design=design or DesignConfig(),
                         seed=seed, generation_cap=generation_cap, **kwargs)


def lab_config(seed: int, **kwargs) -> SessionConfig:
    """The controlled study setup: 7 vertices, 4 wheels, fixed course,
    40 generations, anonymized insight views."""
    return SessionConfig(mode="lab",
                         design=DesignConfig(nv=7, nw=4, course_id="HillClimb"),
                         seed=seed, generation_cap=LAB_GENERATION_CAP,
                         anonymize_views=True, **kwargs)


def improvement_pct(best_first_gen: float, best_overall: float) -> float:
    """Percentage improvement from the first generation's best design to the
    best design of the session."""
    if best_first_gen <= 0:
        raise ValidationError(
            "improvement is undefined for non-positive first-generation best")
    return 100.0 * (best_overall - best_first_gen) / best_first_gen


class Session:
    """Owns one design session. Not thread-safe; one logical owner."""

    def __init__(self, config: SessionConfig, log_path: str | Path | None = None,
                 created_at: str | None = None):
        self.config = config
        self.rng = random.Random(config.seed)
        self.clock = 0.0
        self.created_at = created_at

        # lab A/B assignment: a seeded coin flip decides which anonymous tab
        # hides the control; the mapping is sealed in the log header only
        canonical = list(config.views)
        self._label_of = {v: v for v in canonical}
        if config.anonymize_views:
            insights = [v for v in canonical if v in INSIGHT_VIEWS]
            if self.rng.random() < 0.5:
                insights.reverse()
            for n, v in enumerate(insights, start=1):
                self._label_of[v] = f"insights{n}"
        self._canonical_of = {lbl: v for v, lbl in self._label_of.items()}
        order = list(canonical)
        self.rng.shuffle(order)
        self.view_order = [self._label_of[v] for v in order]

        b = config.design.bounds
        self.archives = {
            VIEW_SPEED: EliteArchive(VIEW_SPEED, b.motor_speed.lo, b.motor_speed.hi),
            VIEW_WHEEL: EliteArchive(VIEW_WHEEL, b.wheel_radius.lo, b.wheel_radius.hi),
            VIEW_GEOMETRY: EliteArchive(VIEW_GEOMETRY, 0.0, b.vertex_radius.hi),
        }
        self.history = HistoryStore()
        self.control_refs: list[int] = []
        self.course: Course = build_course(config.design.course_id)

        self.generations: list[Generation] = []
        self._pending: list[dict] = []       # queued Test marks / injections
        self._archive_use: set[int] = set()
        self.current_view = self._label_of[VIEW_LIVE]
        self.events: list[dict] = []
        self.ended = False
        self._started = False

        self._log_file = None
        if log_path is not None:
            self._log_file = open(log_path, "w", encoding="utf-8")

    # ------------------------------------------------------------------ util

    @property
    def current(self) -> Generation:
        return self.generations[-1]

    @property
    def finished(self) -> bool:
        cap = self.config.generation_cap
        return cap is not None and len(self.generations) >= cap

    @property
    def insight_labels(self) -> list[str]:
        return [self._label_of[v] for v in self.config.views
                if v in INSIGHT_VIEWS]

    def _now(self, t: float | None) -> float:
        if t is not None and math.isfinite(t):
            self.clock = max(self.clock, float(t))
        return self.clock

    def _log(self, name: str, t: float, **fields) -> dict:
        event = {"t": t, "e": name, **fields}
        self.events.append(event)
        if self._log_file is not None:
            self._log_file.write(dump_event(event) + "\n")
            self._log_file.flush()
        return event

    def _header(self) -> dict:
        header = {"format": LOG_FORMAT, "app_version": APP_VERSION,
                  "config": self.config.to_dict(),
                  "view_order": self.view_order,
                  "view_assignment": {lbl: v for lbl, v in
                                      self._canonical_of.items()}}
        if self.created_at is not None:
            header["created_at"] = self.created_at
        return header

    # ------------------------------------------------------------- lifecycle

    def start(self) -> None:
        if self._started:
            raise ValidationError("session already started")
        self._started = True
        self.header = self._header()
        if self._log_file is not None:
            self._log_file.write(dump_event(self.header) + "\n")
            self._log_file.flush()
        self._log("ViewOpened", 0.0, view=self.current_view)
        gen = init_generation(self.config.design, self.rng)
        self.generations.append(gen)
        self._evaluate(gen)

    def _evaluate(self, gen: Generation) -> None:
        t = self._now(max(self.clock, (gen.index - 1) * self.config.sim.duration))
        evaluate_generation(gen, self.config.design, self.course, self.config.sim)
        refs = []
        for entry, result in zip(gen.designs, gen.results):
            fitness = None if result.diverged else result.fitness
            ref = self.history.append(entry.genome, fitness, result.descriptors)
            refs.append(ref)
            if fitness is not None:
                self.archives[VIEW_SPEED].insert(ref, fitness, result.descriptors[0])
                self.archives[VIEW_WHEEL].insert(ref, fitness, result.descriptors[1])
                self.archives[VIEW_GEOMETRY].insert(ref, fitness, result.descriptors[2])
        gen.refs = refs
        self.control_refs = control_sample(self.history, self.rng)
        fitnesses = [None if r.diverged else r.fitness for r in gen.results]
        valid = [f for f in fitnesses if f is not None]
        self._log("GenerationEvaluated", t, index=gen.index, refs=refs,
                  fitness=fitnesses, best=max(valid) if valid else None)

    def advance_generation(self) -> Generation | None:
        """Build and evaluate the next generation from the user's marks."""
        if not self._started or self.ended or self.finished:
            return None
        injected = [(p["genome"], p["origin"]) for p in self._pending]
        if len(injected) > GENERATION_SIZE:
            self._log("InjectionsTruncated", self.clock,
                      dropped=len(injected) - GENERATION_SIZE)
        extra = [(self.history[r].genome, self.history[r].fitness)
                 for r in sorted(self._archive_use)
                 if self.history[r].fitness is not None]
        gen = next_generation(self.current, self.current.flags, injected,
                              self.rng, self.config.design,
                              self.config.evolve, extra)
        self._pending.clear()
        self._archive_use.clear()
        t = self._now(max(self.clock, (gen.index - 1) * self.config.sim.duration))
        self._log("SimulationAdvanced", t, index=gen.index,
                  injected=len(injected))
        self.generations.append(gen)
        self._evaluate(gen)
        return gen

    def end(self, t: float | None = None) -> None:
        if self.ended:
            return
        self.ended = True
        stamp = self._now(t if t is not None else
                          max(self.clock,
                              len(self.generations) * self.config.sim.duration))
        self._log("ViewClosed", stamp, view=self.current_view)
        self._log("SessionEnded", stamp)
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = None

    # ---------------------------------------------------------- user actions

    def _reject(self, action: dict, reason: str, t: float) -> dict:
        return self._log("ActionRejected", t, action=action, reason=reason)

    def open_view(self, label: str, t: float | None = None) -> bool:
        stamp = self._now(t)
        if label not in self._canonical_of:
            raise ValidationError(f"unknown view {label!r}")
        if label == self.current_view:
            return True
        self._log("ViewClosed", stamp, view=self.current_view)
        self.current_view = label
        self._log("ViewOpened", stamp, view=label)
        return True

    def view_candidates(self, label: str) -> list[int]:
        """Design refs currently presented by a view."""
        view = self._canonical_of.get(label)
        if view is None:
            raise ValidationError(f"unknown view {label!r}")
        if view == VIEW_LIVE:
            return list(self.current.refs or [])
        if view == VIEW_CONTROL:
            return list(self.control_refs)
        if view in self.archives:
            return [c.design_ref for c in self.archives[view].candidates()]
        return []                                # editor offers no list

    def select(self, label: str, ref: int, kind: str,
               t: float | None = None) -> bool:
        """Toggle a Test or Use mark on a design shown in a view."""
        stamp = self._now(t)
        action = {"kind": "select", "view": label, "ref": ref, "select": kind}
        if kind not in ("test", "use"):
            raise ValidationError(f"unknown selection kind {kind!r}")
        view = self._canonical_of.get(label)
        if view is None:
            raise ValidationError(f"unknown view {label!r}")
        if ref not in self.view_candidates(label):
            self._reject(action, "stale-ref", stamp)
            return False

        if kind == "test":
            existing = [p for p in self._pending
                        if p.get("ref") == ref and p["kind"] == "test"]
            if existing:
                self._pending.remove(existing[0])
                marked = False
            else:
                origin = ORIGIN_ELITE if view in INSIGHT_VIEWS else ORIGIN_USER
                self._pending.append({"kind": "test", "ref": ref,
                                      "genome": self.history[ref].genome,
                                      "origin": origin})
                marked = True
        else:
            if view == VIEW_LIVE:
                slot = self.current.refs.index(ref)
                self.current.flags.use[slot] = not self.current.flags.use[slot]
                marked = self.current.flags.use[slot]
            else:
                if ref in self._archive_use:
                    self._archive_use.discard(ref)
                    marked = False
                else:
                    self._archive_use.add(ref)
                    marked = True
        self._log("SelectionMade", stamp, view=label, ref=ref, kind=kind,
                  marked=marked)
        return True

    def edit_design(self, ref: int, genes: list[float],
                    t: float | None = None) -> bool:
        """Record an editor change of an existing design's genes."""
        stamp = self._now(t)
        if not self.history.contains(ref):
            self._reject({"kind": "edit", "ref": ref}, "stale-ref", stamp)
            return False
        genome = CarGenome.from_vector(list(genes), self.config.design)
        validate_genome(genome, self.config.design)
        source = self.history[ref].genome.to_vector()
        deltas = [[i, old, new] for i, (old, new)
                  in enumerate(zip(source, genes)) if old != new]
        self._log("DesignEdited", stamp, ref=ref, deltas=deltas)
        return True

    def inject_design(self, genes: list[float], t: float | None = None,
                      source_ref: int | None = None,
                      origin: str = ORIGIN_USER) -> bool:
        """Queue a design (typically from the editor) for the next generation."""
        stamp = self._now(t)
        genome = CarGenome.from_vector(list(genes), self.config.design)
        validate_genome(genome, self.config.design)
        self._pending.append({"kind": "inject", "genome": genome,
                              "origin": origin, "ref": source_ref})
        self._log("DesignInjected", stamp, genes=list(genes), origin=origin,
                  source_ref=source_ref)
        return True

    @property
    def pending_test_refs(self) -> list[int]:
        return [p["ref"] for p in self._pending if p["kind"] == "test"]

    def best(self) -> tuple[CarGenome, float] | None:
        return best_ever(self.generations)

    # -------------------------------------------------------------- snapshot

    def _card(self, ref: int, flags: dict | None = None) -> dict:
        from .genome import decode
        entry = self.history[ref]
        bp = decode(entry.genome, self.config.design)
        b = self.config.design.bounds
        card = {
            "ref": ref,
            "fitness": entry.fitness,
            "polygon": [[x, y] for x, y in bp.polygon],
            "body_mass": entry.genome.body_mass,
            "color_value": (entry.genome.body_mass - b.body_mass.lo)
                            / b.body_mass.width,
            "wheels": [{"x": pos[0], "y": pos[1], "radius": w.radius,
                        "mass": w.mass,
                        "color_value": (w.mass - b.wheel_mass.lo)
                                        / b.wheel_mass.width}
                       for pos, w in bp.wheel_mounts],
            "genes": entry.genome.to_vector(),
            "test_marked": ref in self.pending_test_refs,
        }
        if flags:
            card.update(flags)
        return card

    def public_state(self) -> dict:
        """Projection served to clients. In lab mode it carries only the
        anonymized view labels; nothing distinguishes control from elites."""
        gen = self.current
        live = []
        for slot, ref in enumerate(gen.refs or []):
            live.append(self._card(ref, {"use_marked": gen.flags.use[slot],
                                         "slot": slot}))
        views = {}
        for label in self.view_order:
            view = self._canonical_of[label]
            if view == VIEW_LIVE or view == VIEW_EDITOR:
                continue
            views[label] = [self._card(r, {"use_marked": r in self._archive_use})
                            for r in self.view_candidates(label)]
        best = self.best()
        return {
            "mode": self.config.mode,
            "generation": gen.index,
            "generation_cap": self.config.generation_cap,
            "finished": self.finished,
            "ended": self.ended,
            "view_order": list(self.view_order),
            "current_view": self.current_view,
            "design_config": self.config.design.to_dict(),
            "dimension": self.config.design.dimension,
            "sim_duration": self.config.sim.duration,
            "live": live,
            "views": views,
            "best_fitness": None if best is None else best[1],
        }

    def current_trajectories(self) -> list[dict]:
        """Streamable per-design trajectories of the current generation."""
        gen = self.current
        out = []
        for slot, (ref, result) in enumerate(zip(gen.refs, gen.results)):
            out.append({"ref": ref, "slot": slot,
                        "diverged": result.diverged,
                        "first_contact_x": result.first_contact_x,
                        "samples": [list(s) for s in result.trajectory]})
        return out


def apply_action(session: Session, action: dict,
                 t: float | None = None) -> bool:
    """Dispatch a client action dict onto the session."""
    kind = action.get("kind")
    if kind == "open_view":
        return session.open_view(action["view"], t)
    if kind == "select":
        return session.select(action["view"], action["ref"],
                              action["select"], t)
    if kind == "edit":
        return session.edit_design(action["ref"], action["genes"], t)
    if kind == "inject":
        return session.inject_design(action["genes"], t,
                                     source_ref=action.get("source_ref"),
                                     origin=action.get("origin", ORIGIN_USER))
    if kind == "advance":
        session.advance_generation()
        return True
    raise ValidationError(f"unknown action kind {kind!r}")


def run_headless(config: SessionConfig, generations: int,
                 log_path: str | Path | None = None) -> Session:
    """An interaction-free session: the evolutionary algorithm alone."""
    session = Session(config, log_path=log_path)
    session.start()
    while len(session.generations) < generations and not session.finished:
        session.advance_generation()
    session.end()
    return session


# ------------------------------------------------------------------- log I/O

def dump_event(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_log(path: str | Path, header: dict, events: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dump_event(header) + "\n")
        for e in events:
            f.write(dump_event(e) + "\n")


def read_log(path: str | Path) -> tuple[dict, list[dict]]:
    header = None
    events = []
    with open(path, "r", encoding="utf-8") as f:
        for i, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise LogFormatError(f"invalid JSON: {e}", line=i) from e
            if i == 0:
                if obj.get("format") != LOG_FORMAT:
                    raise LogFormatError(
                        f"unsupported log format {obj.get('format')!r}", line=0)
                header = obj
            else:
                if "e" not in obj or "t" not in obj:
                    raise LogFormatError("event missing 'e' or 't'", line=i)
                events.append(obj)
    if header is None:
        raise LogFormatError("empty log", line=0)
    return header, events


# ------------------------------------------------------------------- metrics

@dataclass
class SessionMetrics:
    improvement_pct: float | None
    improvement_defined: bool
    best_first_gen: float | None
    best_overall: float | None
    session_length_s: float
    selections_per_view: dict
    time_per_view: dict
    first_open_time: dict
    selections_total: int
    edits_total: int
    injections_total: int
    interaction_group: str
    view_group: str
    generations: int
    dimensions: int
    mode: str
    seed: int

    def to_record(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_record(d: dict) -> "SessionMetrics":
        return SessionMetrics(**d)


def _is_insight_label(label: str) -> bool:
    return label not in (VIEW_LIVE, VIEW_EDITOR)


def compute_metrics(header: dict, events: list[dict]) -> SessionMetrics:
    """Derive the per-session analysis record from a complete log."""
    if not events or events[-1].get("e") != "SessionEnded":
        raise LogFormatError("log has no SessionEnded event (truncated?)",
                             line=len(events))
    last = -math.inf
    for i, e in enumerate(events):
        if e["t"] < last:
            raise LogFormatError("events are not monotone in time", line=i + 1)
        last = e["t"]

    end_t = events[-1]["t"]
    gen_events = [e for e in events if e["e"] == "GenerationEvaluated"]
    if not gen_events:
        raise LogFormatError("log contains no evaluated generation")

    def gen_best(e):
        return e.get("best")

    best_first = gen_best(gen_events[0])
    best_overall = None
    for e in gen_events:
        b = gen_best(e)
        if b is not None and (best_overall is None or b > best_overall):
            best_overall = b

    improvement = None
    defined = False
    if best_first is not None and best_overall is not None:
        try:
            improvement = improvement_pct(best_first, best_overall)
            defined = True
        except ValidationError:
            pass

    selections: dict[str, int] = {}
    first_open: dict[str, float] = {}
    time_per_view: dict[str, float] = {}
    opened: tuple[str, float] | None = None
    edits = 0
    injections = 0
    for e in events:
        name = e["e"]
        if name == "SelectionMade":
            selections[e["view"]] = selections.get(e["view"], 0) + 1
        elif name == "DesignEdited":
            edits += 1
        elif name == "DesignInjected":
            injections += 1
        elif name == "ViewOpened":
            if e["view"] not in first_open:
                first_open[e["view"]] = e["t"]
            if opened is not None:
                view, since = opened
                time_per_view[view] = time_per_view.get(view, 0.0) + (e["t"] - since)
            opened = (e["view"], e["t"])
    if opened is not None:
        view, since = opened
        time_per_view[view] = time_per_view.get(view, 0.0) + (end_t - since)

    insight_selected = any(_is_insight_label(v) for v in selections)
    interacted = bool(selections) or edits > 0 or injections > 0
    if not interacted:
        group = GROUP_NO_INTERACTION
    elif insight_selected:
        group = GROUP_EDITOR_AND_INSIGHTS
    else:
        group = GROUP_EDITOR_ONLY
    viewed_insight = any(_is_insight_label(v) for v in first_open)
    view_group = VIEWGROUP_SOME if viewed_insight else VIEWGROUP_NONE

    cfg = header["config"]
    return SessionMetrics(
        improvement_pct=improvement, improvement_defined=defined,
        best_first_gen=best_first, best_overall=best_overall,
        session_length_s=end_t,
        selections_per_view=selections, time_per_view=time_per_view,
        first_open_time=first_open,
        selections_total=sum(selections.values()),
        edits_total=edits, injections_total=injections,
        interaction_group=group, view_group=view_group,
        generations=len(gen_events),
        dimensions=1 + cfg["design"]["nv"] + 5 * cfg["design"]["nw"],
        mode=cfg["mode"], seed=cfg["seed"])


# -------------------------------------------------------------------- replay

def replay(header: dict, events: list[dict]) -> tuple[SessionMetrics, tuple, Session]:
    """Re-execute a recorded session and verify it reproduces bit-exactly.

    Returns (metrics, (best_genome, best_fitness), session). Raises
    ReplayError on version skew, truncation, or any mismatch.
    """
    if header.get("format") != LOG_FORMAT:
        raise ReplayError(f"log format {header.get('format')!r} is not {LOG_FORMAT}")
    if header.get("app_version") != APP_VERSION:
        raise ReplayError(
            f"log recorded by version {header.get('app_version')!r}, "
            f"this is {APP_VERSION}")
    if not events or events[-1].get("e") != "SessionEnded":
        raise ReplayError(f"log truncated at event {len(events)}: "
                          "no SessionEnded")

    config = SessionConfig.from_dict(header["config"])
    session = Session(config, created_at=header.get("created_at"))
    try:
        session.start()
        for i, e in enumerate(events):
            name = e["e"]
            if name in ("GenerationEvaluated", "ViewClosed",
                        "InjectionsTruncated"):
                continue                      # regenerated automatically
            if name == "ViewOpened":
                if i == 0:
                    continue                  # the automatic initial open
                session.open_view(e["view"], e["t"])
            elif name == "SelectionMade":
                session.select(e["view"], e["ref"], e["kind"], e["t"])
            elif name == "DesignEdited":
                entry = session.history[e["ref"]]
                genes = entry.genome.to_vector()
                for idx, _, new in e["deltas"]:
                    genes[idx] = new
                session.edit_design(e["ref"], genes, e["t"])
            elif name == "DesignInjected":
                session.inject_design(e["genes"], e["t"],
                                      source_ref=e.get("source_ref"),
                                      origin=e["origin"])
            elif name == "ActionRejected":
                apply_action(session, e["action"], e["t"])
            elif name == "SimulationAdvanced":
                session.advance_generation()
            elif name == "SessionEnded":
                session.end(e["t"])
            else:
                raise ReplayError(f"unknown event {name!r} at index {i}")
    except (ValidationError, IndexError, KeyError) as exc:
        raise ReplayError(f"replay diverged while applying events: {exc}") from exc

    if len(session.events) != len(events):
        raise ReplayError(f"replay produced {len(session.events)} events, "
                          f"log has {len(events)}")
    for i, (a, b) in enumerate(zip(events, session.events)):
        if a != b:
            raise ReplayError(f"replay mismatch at event {i}: {a} != {b}")

    metrics = compute_metrics(header, session.events)
    best = session.best()
    return metrics, best, session


def replay_file(path: str | Path):
    header, events = read_log(path)
    return replay(header, events)
