"""Shape modeling by evolving outer-totalistic CA rules.

A :class:`RuleGene` is an 18-bit table ``next = table[9 * cell + live]``
where ``live`` counts the eight Moore neighbors. Bits 0-8 are therefore
the birth conditions and bits 9-17 the survival conditions, and the gene's
string form lists them in that order.

A genetic algorithm searches the 2**18 tables for one that carries a
seed configuration to a target shape in a fixed number of steps. Evolved
rules are kept in a JSON-lines :class:`PatternDB` together with a short
binary shape signature that a MACA can classify.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve

from caextract.coreset import grid_coreset, mask_points
from caextract.maca import AttractorSet, MacaMachine, classify

logger = logging.getLogger(__name__)

GENE_BITS = 18
SUCCESS_FITNESS = 0.999
DB_MUTATION_WEIGHT = 0.25
_MOORE = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=np.int64)


@dataclass(frozen=True)
class RuleGene:
    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if len(bits) != GENE_BITS or any(b not in (0, 1) for b in bits):
            raise ValueError(f"a rule gene is exactly {GENE_BITS} binary values")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_string(cls, text: str) -> "RuleGene":
        if len(text) != GENE_BITS or set(text) - {"0", "1"}:
            raise ValueError(f"expected an {GENE_BITS}-character 0/1 string, got {text!r}")
        return cls(tuple(int(c) for c in text))

    @classmethod
    def from_array(cls, arr) -> "RuleGene":
        return cls(tuple(np.asarray(arr).astype(int).tolist()))

    @classmethod
    def identity(cls) -> "RuleGene":
        return cls((0,) * 9 + (1,) * 9)

    @classmethod
    def from_birth_survival(cls, birth, survive) -> "RuleGene":
        """Build from B/S neighbor counts, e.g. Life is ``({3}, {2, 3})``."""
        bits = [0] * GENE_BITS
        for s in birth:
            bits[s] = 1
        for s in survive:
            bits[9 + s] = 1
        return cls(tuple(bits))

    @property
    def table(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.uint8)

    def __str__(self) -> str:
        return "".join(map(str, self.bits))


def apply_rule(rule: RuleGene | np.ndarray, config: np.ndarray, steps: int) -> np.ndarray:
    """Synchronously apply an outer-totalistic rule; cells beyond the edge are dead."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    table = rule.table if isinstance(rule, RuleGene) else np.asarray(rule, dtype=np.uint8)
    g = np.asarray(config).astype(np.int64) & 1
    for _ in range(steps):
        live = convolve(g, _MOORE, mode="constant", cval=0)
        g = table[9 * g + live].astype(np.int64)
    return g.astype(bool)


def fitness(candidate: np.ndarray, target: np.ndarray) -> float:
    """Jaccard similarity of two binary masks; two empty masks score 1."""
    a = np.asarray(candidate, dtype=bool)
    b = np.asarray(target, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


@dataclass
class GaParams:
    population: int = 64
    generations: int = 200
    crossover_rate: float = 0.9
    mutation_rate: float = 1.0 / GENE_BITS
    tournament: int = 3
    steps: int = 3
    seed: int = 0
    db_seed_fraction: float = 0.25
    db_guidance: bool = True
    simplify: bool = True

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        for name in ("crossover_rate", "mutation_rate", "db_seed_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.tournament < 1:
            raise ValueError("tournament size must be positive")


@dataclass
class EvolveResult:
    rule: RuleGene
    fitness: float
    generations: int
    trace: list[float]


def evolve_rule(seed_config: np.ndarray, target: np.ndarray, params: GaParams,
                db: "PatternDB | None" = None,
                initial_population: np.ndarray | None = None) -> EvolveResult:
    """Search for a rule mapping ``seed_config`` to ``target`` in ``params.steps`` steps.

    Generational GA with elitism of one, tournament selection, single-point
    crossover and per-bit mutation. A ``db_seed_fraction`` share of the
    first population is copied from stored rules; when guidance is on, a
    mutated bit takes a stored rule's value with probability 0.25 and is
    flipped otherwise.

    With ``params.simplify`` the winner is then pulled toward the identity
    rule one bit at a time, keeping each change that does not lower its
    fitness. Table entries the training pair never exercises thus default
    to "stay as you are" instead of whatever the search happened to leave.

    Returns:
        Best rule, its fitness, generations run, and the best fitness after
        every generation (index 0 is the initial population).
    """
    seed_config = np.asarray(seed_config, dtype=bool)
    target = np.asarray(target, dtype=bool)
    if seed_config.shape != target.shape:
        raise ValueError(f"shape mismatch: {seed_config.shape} vs {target.shape}")
    if not seed_config.any() and not target.any():
        return EvolveResult(RuleGene.identity(), 1.0, 0, [1.0])

    rng = np.random.default_rng(params.seed)
    pop_n = params.population
    db_rules = np.array([r.rule.bits for r in db], dtype=np.uint8) if db else np.empty((0, GENE_BITS), np.uint8)

    if initial_population is not None:
        pop = np.asarray(initial_population, dtype=np.uint8).copy()
        if pop.shape != (pop_n, GENE_BITS):
            raise ValueError(f"initial population must be ({pop_n}, {GENE_BITS})")
    else:
        pop = rng.integers(0, 2, size=(pop_n, GENE_BITS), dtype=np.uint8)
        n_db = min(int(round(params.db_seed_fraction * pop_n)), pop_n) if len(db_rules) else 0
        for i in range(n_db):
            pop[i] = db_rules[i % len(db_rules)]

    cache: dict[bytes, float] = {}

    def score(gene: np.ndarray) -> float:
        key = gene.tobytes()
        if key not in cache:
            cache[key] = fitness(apply_rule(gene, seed_config, params.steps), target)
        return cache[key]

    guided = params.db_guidance and len(db_rules) > 0
    fit = np.array([score(g) for g in pop])
    trace = [float(fit.max())]
    gen = 0
    while gen < params.generations and trace[-1] < SUCCESS_FITNESS:
        gen += 1
        elite = pop[int(fit.argmax())].copy()
        children = [elite]

        def select() -> np.ndarray:
            idx = rng.integers(0, pop_n, size=params.tournament)
            return pop[idx[int(fit[idx].argmax())]].copy()

        while len(children) < pop_n:
            a, b = select(), select()
            if rng.random() < params.crossover_rate:
                cut = int(rng.integers(1, GENE_BITS))
                a[cut:], b[cut:] = b[cut:].copy(), a[cut:].copy()
            for child in (a, b):
                flip = rng.random(GENE_BITS) < params.mutation_rate
                if guided and flip.any():
                    guide = db_rules[int(rng.integers(len(db_rules)))]
                    toward = flip & (rng.random(GENE_BITS) < DB_MUTATION_WEIGHT)
                    child[toward] = guide[toward]
                    flip &= ~toward
                child[flip] ^= 1
                children.append(child)
        pop = np.array(children[:pop_n])
        fit = np.array([score(g) for g in pop])
        trace.append(float(fit.max()))
    best = pop[int(fit.argmax())].copy()
    best_fit = score(best)
    if params.simplify:
        identity = RuleGene.identity().table
        for i in range(GENE_BITS):
            if best[i] != identity[i]:
                trial = best.copy()
                trial[i] = identity[i]
                trial_fit = score(trial)
                if trial_fit >= best_fit:
                    best, best_fit = trial, trial_fit
    logger.debug("GA finished after %d generations, fitness %.4f", gen, best_fit)
    return EvolveResult(RuleGene.from_array(best), float(best_fit), gen, trace)


# ---------------------------------------------------------------------------
# Entropy / dimension
# ---------------------------------------------------------------------------

def block_entropy(config: np.ndarray, X: int, k: int = 2) -> float:
    """``log_k(N) / X`` where N counts distinct length-X windows along the rows."""
    g = np.atleast_2d(np.asarray(config)).astype(np.int64)
    if X < 1 or k < 2:
        raise ValueError("need X >= 1 and k >= 2")
    if X > g.shape[1]:
        raise ValueError(f"block length {X} exceeds row length {g.shape[1]}")
    windows = np.lib.stride_tricks.sliding_window_view(g, X, axis=1).reshape(-1, X)
    n_distinct = len(np.unique(windows, axis=0))
    return math.log(n_distinct, k) / X


def entropy_profile(config: np.ndarray, block_lengths=(2, 4, 8), k: int = 2) -> dict:
    """Block entropies at several lengths plus their least-squares slope in X."""
    width = np.atleast_2d(config).shape[1]
    xs = [x for x in block_lengths if x <= width]
    values = [block_entropy(config, x, k) for x in xs]
    slope = float(np.polyfit(xs, values, 1)[0]) if len(xs) >= 2 else 0.0
    return {"block_lengths": xs, "entropy": values, "slope": slope}


# ---------------------------------------------------------------------------
# Signatures and the pattern store
# ---------------------------------------------------------------------------

def shape_signature(mask: np.ndarray, n: int = 16, eps: float = 0.1) -> str:
    """Fixed-length bit string describing a mask's shape.

    The pixel set is coreset-reduced, scaled uniformly into an ``s x s``
    grid (``s*s == n``, shorter axis centered) and read in raster order.
    """
    side = math.isqrt(n)
    if side * side != n:
        raise ValueError(f"signature length must be a perfect square, got {n}")
    pts = mask_points(np.asarray(mask, dtype=bool))
    if len(pts) == 0:
        return "0" * n
    if len(pts) > 1:
        pts = grid_coreset(pts, eps)
    lo = pts.min(0)
    span = np.ptp(pts, axis=0) + 1.0
    big = span.max()
    pad = (big - span) / 2.0
    cells = np.floor((pts - lo + 0.5 + pad) / big * side).astype(int)
    cells = np.clip(cells, 0, side - 1)
    grid = np.zeros((side, side), dtype=np.uint8)
    grid[cells[:, 1], cells[:, 0]] = 1
    return "".join(map(str, grid.ravel()))


def similarity(a: str, b: str) -> float:
    if len(a) != len(b):
        raise ValueError("signature lengths differ")
    return 1.0 - sum(x != y for x, y in zip(a, b)) / len(a)


def _grid_to_rows(g: np.ndarray) -> list[str]:
    return ["".join("1" if v else "0" for v in row) for row in np.asarray(g, dtype=bool)]


def _rows_to_grid(rows: list[str]) -> np.ndarray:
    return np.array([[c == "1" for c in row] for row in rows], dtype=bool).reshape(len(rows), -1)


@dataclass
class PatternRecord:
    name: str
    rule: RuleGene
    seed_config: np.ndarray
    steps: int
    signature: str
    fitness_achieved: float

    def __post_init__(self):
        if not 0.0 <= self.fitness_achieved <= 1.0:
            raise ValueError("fitness_achieved must lie in [0, 1]")

    def to_json(self) -> str:
        return json.dumps({
            "name": self.name,
            "rule": str(self.rule),
            "seed_config": _grid_to_rows(self.seed_config),
            "steps": self.steps,
            "signature": self.signature,
            "fitness_achieved": self.fitness_achieved,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "PatternRecord":
        d = json.loads(line)
        return cls(
            name=d["name"],
            rule=RuleGene.from_string(d["rule"]),
            seed_config=_rows_to_grid(d["seed_config"]),
            steps=int(d["steps"]),
            signature=d["signature"],
            fitness_achieved=float(d["fitness_achieved"]),
        )


@dataclass
class Match:
    record: PatternRecord
    similarity: float
    index: int


class PatternDB:
    """Append-only rule/pattern store, optionally mirrored to a JSON-lines file."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = path
        self.records: list[PatternRecord] = []
        if path is not None and os.path.exists(path):
            with open(path) as fh:
                self.records = [PatternRecord.from_json(line) for line in fh if line.strip()]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __bool__(self) -> bool:
        return bool(self.records)

    def store(self, record: PatternRecord) -> None:
        if self.records and len(record.signature) != len(self.records[0].signature):
            raise ValueError("signature length differs from stored records")
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(record.to_json() + "\n")

    def match(self, signature: str, candidates: list[int] | None = None) -> Match | None:
        """Most similar record (earliest on ties), or ``None`` when nothing is stored."""
        indices = range(len(self.records)) if candidates is None else candidates
        best: Match | None = None
        for i in indices:
            sim = similarity(signature, self.records[i].signature)
            if best is None or sim > best.similarity:
                best = Match(self.records[i], sim, i)
        return best


def store_pattern(db: PatternDB, record: PatternRecord) -> None:
    db.store(record)


def match_pattern(db: PatternDB, signature: str) -> Match | None:
    return db.match(signature)


# ---------------------------------------------------------------------------
# Interpolation
# ---------------------------------------------------------------------------

@dataclass
class Interpolation:
    mask: np.ndarray
    match: Match | None = None
    pattern_class: int | None = None
    steps: int = 0
    added: int = 0
    candidates: list[int] = field(default_factory=list)


def interpolate_feature(partial_mask: np.ndarray, db: PatternDB, machine: MacaMachine,
                        analysis: AttractorSet, max_steps: int = 10,
                        eps: float = 0.1, return_info: bool = False):
    """Complete a partial feature with the best-matching stored rule.

    The mask's signature is MACA-classified; the closest record of the same
    class (any class if none shares it) supplies the rule, which is applied
    until one step changes the mask by less than 0.1% (Jaccard >= 0.999)
    or ``max_steps`` is reached. Observed pixels are always kept.
    """
    partial = np.asarray(partial_mask, dtype=bool)
    info = Interpolation(mask=partial.copy())
    if partial.any() and db:
        sig = shape_signature(partial, machine.n, eps)
        cls = classify(machine, analysis, sig)
        same = [i for i, r in enumerate(db.records)
                if classify(machine, analysis, r.signature) == cls]
        info.pattern_class = cls
        info.candidates = same or list(range(len(db)))
        info.match = db.match(sig, info.candidates)
        config = partial
        for t in range(1, max_steps + 1):
            nxt = apply_rule(info.match.record.rule, config, 1)
            info.steps = t
            settled = fitness(nxt, config) >= SUCCESS_FITNESS
            config = nxt
            if settled:
                break
        info.mask = config | partial
        info.added = int(np.count_nonzero(info.mask & ~partial))
    return info if return_info else info.mask
