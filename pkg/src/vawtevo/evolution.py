"""Steady-state GA, surrogate-assisted GA and their two-species coevolutionary forms.

All engines count real evaluations against ``RunConfig.budget`` and append one
``RunLog`` row per real evaluation.  A generation is ``pop_size`` offspring.

Coevolution pairs species 0 (left turbine) with species 1 (right turbine).
Each real evaluation scores an individual together with a collaborator from
the other species; the aggregate rpm is the individual's fitness, and the
collaborator keeps the larger of its own fitness and that aggregate.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .genome import (
    MAX_STEP,
    MUTATION_RATE,
    TOURNAMENT_SIZE,
    Genotype,
    Mode,
    crossover,
    make_rng,
    mutate,
    random_genotype,
    tournament_select,
    tournament_winner,
)
from .oracle import Evaluator
from .runlog import LogRow, RunLog
from .surrogate import EPOCHS, HIDDEN, EvaluatedRecord, SurrogateModel, input_width

log = logging.getLogger(__name__)

POP_SIZE = 20
SEED_INDIVIDUALS = 10
MAX_FRESH_TRIES = 1000

Trace = Callable[..., None]


def _no_trace(event: str, **info) -> None:
    pass


@dataclass
class RunConfig:
    mode: str = "ga"  # ga | sga | cga | scga
    z_varying: bool = False
    budget: int = 100
    seed: int = 0
    pop_size: int = POP_SIZE
    tournament: int = TOURNAMENT_SIZE
    mutation_rate: float = MUTATION_RATE
    max_step: int = MAX_STEP
    crossover_rate: float = 0.0
    epochs: int = EPOCHS
    hidden: int = HIDDEN
    warm_start_generations: int = 0

    @property
    def n_species(self) -> int:
        return 2 if self.mode in ("cga", "scga") else 1

    @property
    def genome_mode(self) -> Mode:
        if self.n_species == 2:
            return Mode.ARRAY
        return Mode.Z_VARYING if self.z_varying else Mode.FLAT

    def validate(self) -> None:
        if self.mode not in ("ga", "sga", "cga", "scga"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.pop_size < 2:
            raise ValueError("population size must be at least 2")
        if self.budget < self.pop_size * self.n_species:
            raise ValueError(
                f"budget {self.budget} is below the initial evaluation cost {self.pop_size * self.n_species}"
            )
        if self.warm_start_generations < 0:
            raise ValueError("warm start generations must be >= 0")

    def as_dict(self) -> dict[str, str]:
        return {k: str(v) for k, v in dataclasses.asdict(self).items()}


@dataclass
class Member:
    genotype: Genotype
    fitness: float = 0.0
    evaluated: bool = False


@dataclass
class Species:
    members: list[Member]
    archive: dict[Genotype, float] = field(default_factory=dict)
    records: list[EvaluatedRecord] = field(default_factory=list)
    model: Optional[SurrogateModel] = None

    @property
    def fitnesses(self) -> list[float]:
        return [m.fitness for m in self.members]

    @property
    def elite(self) -> int:
        """Index of the best really-evaluated member (lowest index on ties)."""
        best = None
        for i, m in enumerate(self.members):
            if m.evaluated and (best is None or m.fitness > self.members[best].fitness):
                best = i
        if best is None:
            raise RuntimeError("species has no evaluated member")
        return best

    def unevaluated(self) -> list[int]:
        return [i for i, m in enumerate(self.members) if not m.evaluated]

    def archive_add(self, g: Genotype, fitness: float) -> None:
        self.archive[g] = fitness
        self.records.append(EvaluatedRecord(g, fitness))


@dataclass
class RunResult:
    config: RunConfig
    log: RunLog
    species: list[Species]
    champion: Genotype
    champion_fitness: float
    champion_partner: Optional[Genotype] = None

    @property
    def evaluations(self) -> int:
        return len(self.log.rows)


class _Run:
    """Shared bookkeeping: rng, budget, log rows and operators."""

    def __init__(self, cfg: RunConfig, evaluator: Evaluator, runlog: Optional[RunLog], trace: Optional[Trace]):
        cfg.validate()
        self.cfg = cfg
        self.evaluator = evaluator
        self.rng = make_rng(cfg.seed)
        self.log = runlog if runlog is not None else RunLog()
        self.trace = trace or _no_trace
        self.generation = 0
        self.best = None  # (fitness, genotype, partner)

    @property
    def evals(self) -> int:
        return len(self.log.rows)

    @property
    def remaining(self) -> int:
        return self.cfg.budget - self.evals

    def record(self, species: int, g: Genotype, fitness: float, partner: Optional[Genotype] = None) -> None:
        if self.remaining <= 0:
            raise RuntimeError("evaluation budget exceeded")
        if self.best is None or fitness > self.best[0]:
            self.best = (fitness, g, partner)
        self.log.append(LogRow(self.evals + 1, self.generation, species, g, fitness, self.best[0]))

    def initial_population(self, mode: Mode) -> list[Genotype]:
        pop: list[Genotype] = []
        while len(pop) < self.cfg.pop_size:
            g = random_genotype(self.rng, mode)
            if g not in pop:
                pop.append(g)
        return pop

    def offspring(self, sp: Species) -> Genotype:
        cfg = self.cfg
        parent = sp.members[tournament_select(sp.fitnesses, self.rng, cfg.tournament, "best")].genotype
        if cfg.crossover_rate > 0:
            mate = sp.members[tournament_select(sp.fitnesses, self.rng, cfg.tournament, "best")].genotype
            parent = crossover(parent, mate, self.rng, cfg.crossover_rate)
        return mutate(parent, self.rng, cfg.mutation_rate, cfg.max_step)

    def replace(self, sp: Species, member: Member) -> int:
        victim = tournament_select(sp.fitnesses, self.rng, self.cfg.tournament, "worst")
        sp.members[victim] = member
        return victim

    def result(self, species: list[Species]) -> RunResult:
        fitness, g, partner = self.best
        self.log.close()
        return RunResult(self.cfg, self.log, species, g, fitness, partner)


# --- single turbine -------------------------------------------------------


def _evaluate_single(run: _Run, sp: Species, genotypes: Sequence[Genotype], archive: bool) -> list[float]:
    fits = run.evaluator.evaluate(list(genotypes))
    for g, f in zip(genotypes, fits):
        f = float(f)
        run.record(0, g, f)
        if archive:
            sp.archive_add(g, f)
    return [float(f) for f in fits]


def _init_single(run: _Run, archive: bool) -> Species:
    pop = run.initial_population(run.cfg.genome_mode)
    sp = Species([Member(g) for g in pop])
    fits = _evaluate_single(run, sp, pop, archive)
    for m, f in zip(sp.members, fits):
        m.fitness, m.evaluated = f, True
    return sp


def _ga_step(run: _Run, sp: Species, archive: bool) -> None:
    child = run.offspring(sp)
    (f,) = _evaluate_single(run, sp, [child], archive)
    run.replace(sp, Member(child, f, True))


def _ga_generations(run: _Run, sp: Species, generations: Optional[int], archive: bool) -> None:
    done = 0
    while run.remaining > 0 and (generations is None or done < generations * run.cfg.pop_size):
        run.generation = 1 + done // run.cfg.pop_size
        _ga_step(run, sp, archive)
        done += 1


def run_ga(cfg: RunConfig, evaluator: Evaluator, runlog: Optional[RunLog] = None, trace: Optional[Trace] = None) -> RunResult:
    """Steady-state GA: tournament parent, mutation, tournament replacement."""
    run = _Run(cfg, evaluator, runlog, trace)
    sp = _init_single(run, archive=False)
    _ga_generations(run, sp, None, archive=False)
    return run.result([sp])


def _fresh_mutant(run: _Run, sp: Species, exclude: set[Genotype]) -> Genotype:
    elite = sp.members[sp.elite].genotype
    for _ in range(MAX_FRESH_TRIES):
        g = mutate(elite, run.rng, run.cfg.mutation_rate, run.cfg.max_step)
        if g not in sp.archive and g not in exclude:
            return g
    raise RuntimeError("could not generate an unevaluated mutant of the elite")


def _surrogate_generation(run: _Run, sp: Species, reinit: bool, s: int) -> None:
    """Train, assign approximate fitness and breed ``pop_size`` offspring."""
    cfg = run.cfg
    if reinit:
        sp.model.reinitialize(run.rng)
        run.trace("reinit", species=s, generation=run.generation, weights=sp.model.w1.copy())
    scale = sp.model.train(sp.records, run.rng, cfg.epochs)
    todo = sp.unevaluated()
    if todo:
        approx = sp.model.predict([sp.members[i].genotype for i in todo], scale)
        for i, f in zip(todo, approx):
            sp.members[i].fitness = float(f)
    for _ in range(cfg.pop_size):
        child = run.offspring(sp)
        if child in sp.archive:
            member = Member(child, sp.archive[child], True)
        else:
            member = Member(child, float(sp.model.predict(child, scale)), False)
        run.replace(sp, member)


def _choose_candidates(run: _Run, sp: Species, count: int) -> list[tuple[Optional[int], Genotype]]:
    """Best-approximated unevaluated member, then a random other unevaluated one.

    Slots are ``(member index or None, genotype)``; None marks a fresh mutant
    of the elite, used when the population has run out of unevaluated members.
    """
    todo = sp.unevaluated()
    picks: list[tuple[Optional[int], Genotype]] = []
    if todo:
        best = tournament_winner(sp.fitnesses, todo, "best")
        picks.append((best, sp.members[best].genotype))
        todo.remove(best)
    if len(picks) < count and todo:
        # one unevaluated individual can sit in several slots; pick among distinct ones
        distinct = [i for i in todo if sp.members[i].genotype != picks[0][1]]
        if distinct:
            i = distinct[int(run.rng.integers(len(distinct)))]
            picks.append((i, sp.members[i].genotype))
    while len(picks) < count:
        g = _fresh_mutant(run, sp, {p[1] for p in picks})
        picks.append((None, g))
    return picks[:count]


def _settle(run: _Run, sp: Species, picks, fits) -> None:
    """Store real fitness on members (or insert fresh mutants)."""
    for (idx, g), f in zip(picks, fits):
        for m in sp.members:
            if m.genotype == g:
                m.fitness, m.evaluated = f, True
        if idx is None:
            run.replace(sp, Member(g, f, True))


def run_sga(cfg: RunConfig, evaluator: Evaluator, runlog: Optional[RunLog] = None, trace: Optional[Trace] = None) -> RunResult:
    """Surrogate-assisted GA: two real evaluations per generation after the start."""
    run = _Run(cfg, evaluator, runlog, trace)
    sp = _init_single(run, archive=True)
    _ga_generations(run, sp, cfg.warm_start_generations, archive=True)
    sp.model = SurrogateModel(input_width(sp.members[0].genotype), cfg.hidden).reinitialize(run.rng)
    while run.remaining > 0:
        run.generation += 1
        _surrogate_generation(run, sp, reinit=False, s=0)
        picks = _choose_candidates(run, sp, min(2, run.remaining))
        fits = _evaluate_single(run, sp, [g for _, g in picks], archive=True)
        _settle(run, sp, picks, fits)
    return run.result([sp])


# --- two-species coevolution ---------------------------------------------


def _pair(s: int, g: Genotype, partner: Genotype) -> tuple[Genotype, Genotype]:
    return (g, partner) if s == 0 else (partner, g)


def _evaluate_with(run: _Run, species: list[Species], s: int, genotypes: Sequence[Genotype], partner_idx: int, archive: bool) -> list[float]:
    other = species[1 - s]
    partner = other.members[partner_idx].genotype
    results = run.evaluator.evaluate_pairs([_pair(s, g, partner) for g in genotypes])
    fits = []
    for g, res in zip(genotypes, results):
        f = float(res.rpm)
        run.trace("pair", species=s, genotype=g, partner=partner, partner_index=partner_idx, fitness=f)
        run.record(s, g, f, partner)
        if archive:
            species[s].archive_add(g, f)
        pm = other.members[partner_idx]
        if pm.evaluated and pm.genotype == partner and f > pm.fitness:
            pm.fitness = f
        fits.append(f)
    return fits


def _init_pair(run: _Run, species: list[Species], archive: bool) -> None:
    for s, sp in enumerate(species):
        rep = int(run.rng.integers(len(species[1 - s].members)))
        genotypes = [m.genotype for m in sp.members]
        fits = _evaluate_with(run, species, s, genotypes, rep, archive)
        for m, f in zip(sp.members, fits):
            m.fitness, m.evaluated = f, True


def _cga_rounds(run: _Run, species: list[Species], rounds: Optional[int], archive: bool) -> None:
    cfg = run.cfg
    done = 0
    while run.remaining > 0 and (rounds is None or done < rounds * cfg.pop_size):
        run.generation = 1 + done // cfg.pop_size
        for s, sp in enumerate(species):
            if run.remaining <= 0:
                break
            child = run.offspring(sp)
            partner = species[1 - s].elite
            run.trace("elite", species=s, partner_index=partner, partner_fitnesses=species[1 - s].fitnesses)
            (f,) = _evaluate_with(run, species, s, [child], partner, archive)
            run.replace(sp, Member(child, f, True))
        done += 1


def _array_species(run: _Run, seeds: Optional[Sequence[Sequence[Genotype]]]) -> list[Species]:
    if seeds is None:
        return [Species([Member(g) for g in run.initial_population(Mode.ARRAY)]) for _ in range(2)]
    if len(seeds) != 2:
        raise ValueError("need one seed population per species")
    return [Species([Member(g) for g in pop]) for pop in seeds]


def run_cga(
    cfg: RunConfig,
    evaluator: Evaluator,
    runlog: Optional[RunLog] = None,
    seeds: Optional[Sequence[Sequence[Genotype]]] = None,
    trace: Optional[Trace] = None,
) -> RunResult:
    """Cooperative coevolution with elite collaboration, alternating species."""
    run = _Run(cfg, evaluator, runlog, trace)
    species = _array_species(run, seeds)
    _init_pair(run, species, archive=False)
    _cga_rounds(run, species, None, archive=False)
    return run.result(species)


def run_scga(
    cfg: RunConfig,
    evaluator: Evaluator,
    runlog: Optional[RunLog] = None,
    seeds: Optional[Sequence[Sequence[Genotype]]] = None,
    trace: Optional[Trace] = None,
) -> RunResult:
    """Surrogate-assisted coevolution: per species, two real evaluations per generation."""
    run = _Run(cfg, evaluator, runlog, trace)
    species = _array_species(run, seeds)
    _init_pair(run, species, archive=True)
    _cga_rounds(run, species, cfg.warm_start_generations, archive=True)
    for sp in species:
        sp.model = SurrogateModel(input_width(sp.members[0].genotype), cfg.hidden)
    while run.remaining > 0:
        run.generation += 1
        for s, sp in enumerate(species):
            if run.remaining <= 0:
                break
            # pairing context shifts with the partner elite, so start from fresh weights
            _surrogate_generation(run, sp, reinit=True, s=s)
            partner = species[1 - s].elite
            run.trace("elite", species=s, partner_index=partner, partner_fitnesses=species[1 - s].fitnesses)
            picks = _choose_candidates(run, sp, min(2, run.remaining))
            fits = _evaluate_with(run, species, s, [g for _, g in picks], partner, archive=True)
            _settle(run, sp, picks, fits)
    return run.result(species)


ENGINES = {"ga": run_ga, "sga": run_sga, "cga": run_cga, "scga": run_scga}


def seed_array_populations(rows: Sequence[LogRow], count: int = SEED_INDIVIDUALS) -> list[list[Genotype]]:
    """Seed both species from the first ``count`` positive-fitness individuals of a run.

    Each species gets those genotypes twice, once per spin direction.  Flat
    genotypes are promoted with all-zero z transforms (same phenotype).
    """
    chosen: list[Genotype] = []
    seen = set()
    for row in sorted(rows, key=lambda r: r.eval):
        g = row.genotype.with_rotation(False)
        if row.fitness > 0 and g not in seen:
            seen.add(g)
            chosen.append(g)
        if len(chosen) == count:
            break
    if len(chosen) < count:
        raise ValueError(f"need {count} individuals with positive fitness, found {len(chosen)}")
    pop = chosen + [g.with_rotation(True) for g in chosen]
    return [list(pop), list(pop)]
