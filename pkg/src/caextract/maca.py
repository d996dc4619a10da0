"""Multiple-attractor cellular automata over GF(2).

A machine is a hybrid null-boundary CA where each cell applies rule 90
(left XOR right) or rule 150 (left XOR self XOR right). States are
encoded as integers with cell 0 in the most significant bit, so the
bit string ``"010"`` is the integer 2 and lexicographic order on strings
equals numeric order.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

MAX_ANALYZE_CELLS = 20


@dataclass(frozen=True)
class MacaMachine:
    rules: tuple[int, ...]

    def __post_init__(self):
        rules = tuple(int(r) for r in self.rules)
        if not rules:
            raise ValueError("a machine needs at least one cell")
        bad = [r for r in rules if r not in (90, 150)]
        if bad:
            raise ValueError(f"only rules 90 and 150 are supported, got {bad}")
        object.__setattr__(self, "rules", rules)

    @property
    def n(self) -> int:
        return len(self.rules)

    @property
    def self_mask(self) -> int:
        mask = 0
        for i, r in enumerate(self.rules):
            if r == 150:
                mask |= 1 << (self.n - 1 - i)
        return mask

    def spec(self) -> str:
        return f"n={self.n}; rules={','.join(map(str, self.rules))}"

    @classmethod
    def parse(cls, text: str) -> "MacaMachine":
        """Parse ``"n=<n>; rules=90,150,..."``."""
        fields = {}
        for part in text.strip().split(";"):
            if part.strip():
                key, _, value = part.partition("=")
                fields[key.strip()] = value.strip()
        try:
            rules = tuple(int(r) for r in fields["rules"].split(","))
        except (KeyError, ValueError):
            raise ValueError(f"bad machine description {text!r}") from None
        if "n" in fields and int(fields["n"]) != len(rules):
            raise ValueError(f"n={fields['n']} but {len(rules)} rules given")
        return cls(rules)


def load_machine(path: str | os.PathLike) -> MacaMachine:
    with open(path) as fh:
        return MacaMachine.parse(fh.read())


def to_state(pattern, n: int) -> int:
    """Accept an int, a ``"0101"`` string or a 0/1 sequence."""
    if isinstance(pattern, (int, np.integer)):
        value = int(pattern)
    elif isinstance(pattern, str):
        if len(pattern) != n:
            raise ValueError(f"pattern length {len(pattern)} != {n}")
        value = int(pattern, 2)
    else:
        bits = [int(b) for b in np.asarray(pattern).ravel()]
        if len(bits) != n:
            raise ValueError(f"pattern length {len(bits)} != {n}")
        value = 0
        for b in bits:
            value = (value << 1) | (b & 1)
    if not 0 <= value < (1 << n):
        raise ValueError(f"state {value} does not fit in {n} cells")
    return value


def to_bits(state: int, n: int) -> str:
    return format(state, f"0{n}b")


def step(machine: MacaMachine, state):
    """Advance one or many (numpy array) states by one generation."""
    full = (1 << machine.n) - 1
    if isinstance(state, np.ndarray):
        s = state.astype(np.int64)
    else:
        s = to_state(state, machine.n)
    return (s >> 1) ^ ((s << 1) & full) ^ (s & machine.self_mask)


@dataclass
class AttractorSet:
    n: int
    attractors: list[list[int]]
    depth: int
    pef_positions: list[int]
    class_of: dict[int, int]
    basin_sizes: list[int]
    exhaustive: bool
    cycle_of: dict[int, int] = field(repr=False, default_factory=dict)

    @property
    def max_cycle(self) -> int:
        return max(len(c) for c in self.attractors)

    def pef_value(self, state: int) -> int:
        value = 0
        for pos in self.pef_positions:
            value = (value << 1) | ((state >> (self.n - 1 - pos)) & 1)
        return value

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "attractors": [[to_bits(s, self.n) for s in cyc] for cyc in self.attractors],
            "depth": self.depth,
            "pef_positions": self.pef_positions,
            "basin_sizes": self.basin_sizes,
            "exhaustive": self.exhaustive,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _pef_search(canon: np.ndarray, n: int) -> list[int]:
    """Lexicographically first smallest bit set separating the canonical states."""
    count = len(canon)
    if count <= 1:
        return []
    bits = ((canon[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1).astype(np.int64)
    for size in range(max(1, math.ceil(math.log2(count))), n + 1):
        weights = 1 << np.arange(size)[::-1]
        for combo in itertools.combinations(range(n), size):
            codes = bits[:, combo] @ weights
            if len(np.unique(codes)) == count:
                return list(combo)
    raise AssertionError("distinct states always separate on the full bit set")


def analyze(machine: MacaMachine) -> AttractorSet:
    """Enumerate the full state-transition graph.

    Attractors are sorted by their lexicographically smallest (canonical)
    state, and a pattern's class is its attractor's index.
    """
    n = machine.n
    if n > MAX_ANALYZE_CELLS:
        raise ValueError(f"exhaustive analysis is limited to {MAX_ANALYZE_CELLS} cells")
    size = 1 << n
    states = np.arange(size, dtype=np.int64)
    nxt = step(machine, states)

    # peel off transient states (in-degree zero) layer by layer
    indeg = np.bincount(nxt, minlength=size)
    alive = np.ones(size, dtype=bool)
    frontier = np.flatnonzero(indeg == 0)
    while len(frontier):
        alive[frontier] = False
        targets = nxt[frontier]
        np.subtract.at(indeg, targets, 1)
        cand = np.unique(targets)
        frontier = cand[(indeg[cand] == 0) & alive[cand]]
    cyclic = alive

    # distance to the cycle set
    dist = np.where(cyclic, 0, -1)
    while np.any(dist < 0):
        todo = dist < 0
        ready = todo & (dist[nxt] >= 0)
        dist[ready] = dist[nxt[ready]] + 1
    depth = int(dist.max())

    # canonical (minimum) state of each cycle by pointer doubling
    canon = np.where(cyclic, states, size)
    jump = nxt.copy()
    for _ in range(n + 1):
        canon = np.minimum(canon, np.where(cyclic, canon[jump], size))
        jump = jump[jump]
    # every state lands on its cycle after `depth` steps
    land = states.copy()
    for _ in range(depth):
        land = nxt[land]
    basin_canon = canon[land]

    roots = np.unique(canon[cyclic])
    index = {int(c): i for i, c in enumerate(roots)}
    attractors = []
    for c in roots.tolist():
        cyc = [c]
        s = int(nxt[c])
        while s != c:
            cyc.append(s)
            s = int(nxt[s])
        attractors.append(cyc)
    basin_sizes = np.bincount(np.searchsorted(roots, basin_canon), minlength=len(roots))

    pef = _pef_search(roots, n)
    result = AttractorSet(
        n=n,
        attractors=attractors,
        depth=depth,
        pef_positions=pef,
        class_of={},
        basin_sizes=basin_sizes.tolist(),
        exhaustive=False,
    )
    result.class_of = {result.pef_value(c): index[c] for c in roots.tolist()}
    result.exhaustive = (len(roots) == 1 << len(pef))
    result.cycle_of = {s: index[int(canon[s])] for s in np.flatnonzero(cyclic).tolist()}
    return result


def classify(machine: MacaMachine, analysis: AttractorSet, pattern,
             return_steps: bool = False):
    """Run the machine from ``pattern`` until it enters an attractor.

    The class is read from the PEF bits of that attractor's canonical
    state. At most ``depth + max cycle length`` steps are taken.
    """
    s = to_state(pattern, machine.n)
    steps = 0
    limit = analysis.depth + analysis.max_cycle
    while s not in analysis.cycle_of:
        if steps >= limit:
            raise RuntimeError("pattern did not reach an attractor; analysis is stale")
        s = int(step(machine, s))
        steps += 1
    canonical = analysis.attractors[analysis.cycle_of[s]][0]
    cls = analysis.class_of[analysis.pef_value(canonical)]
    return (cls, steps) if return_steps else cls


# Singular 16-cell rule vector: 4 attractors, depth 8, PEF bits {4, 7}.
# Found by search; a null-boundary 90/150 machine is non-derogatory, so it
# cannot have more than two fixed-point-only attractors.
DEFAULT_RULES = (90, 90, 90, 150, 150, 150, 150, 150, 150, 90, 90, 150, 90, 150, 150, 150)


def default_machine() -> MacaMachine:
    return MacaMachine(DEFAULT_RULES)
