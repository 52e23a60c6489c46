"""Posets of constraint-module sets."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Sequence, Tuple

from .ast import HydlaError


@dataclass(frozen=True)
class ModuleSetPoset:
    """Elements are module-name sets; ``order`` holds index pairs (i, j) for i < j in the poset."""

    elements: Tuple[FrozenSet[str], ...]
    order: FrozenSet[Tuple[int, int]]

    def index(self, s) -> int:
        return self.elements.index(frozenset(s))

    def precedes(self, a, b) -> bool:
        return (self.index(a), self.index(b)) in self.order

    def superiors(self, s) -> List[FrozenSet[str]]:
        i = self.index(s)
        return [self.elements[j] for (a, j) in sorted(self.order) if a == i]

    def modules(self) -> FrozenSet[str]:
        return frozenset().union(*self.elements) if self.elements else frozenset()

    def top_down(self) -> List[FrozenSet[str]]:
        """Elements ordered so every element comes after all of its superiors."""
        above = {i: {j for (a, j) in self.order if a == i} for i in range(len(self.elements))}
        done: List[int] = []
        remaining = set(range(len(self.elements)))
        while remaining:
            ready = sorted((i for i in remaining if above[i] <= set(done)),
                           key=lambda i: (-len(self.elements[i]), sorted(self.elements[i])))
            if not ready:
                raise HydlaError("poset order contains a cycle")
            done.append(ready[0])
            remaining.discard(ready[0])
        return [self.elements[i] for i in done]

    def hasse_edges(self) -> List[Tuple[FrozenSet[str], FrozenSet[str]]]:
        edges = []
        for (i, j) in self.order:
            if not any((i, k) in self.order and (k, j) in self.order
                       for k in range(len(self.elements))):
                edges.append((self.elements[i], self.elements[j]))
        return sorted(edges, key=lambda e: (sorted(e[0]), sorted(e[1])))


def transitive_closure(pairs: Iterable[Tuple]) -> set:
    closure = set(pairs)
    while True:
        extra = {(a, d) for (a, b) in closure for (c, d) in closure if b == c} - closure
        if not extra:
            return closure
        closure |= extra


def make_poset(elements: Sequence[Iterable[str]], order: Iterable[Tuple[int, int]]) -> ModuleSetPoset:
    """Validate an explicit poset: irreflexive after transitive closure."""
    elems = tuple(frozenset(e) for e in elements)
    if len(set(elems)) != len(elems):
        raise HydlaError("duplicate element in explicit poset")
    pairs = set()
    for i, j in order:
        if not (0 <= i < len(elems) and 0 <= j < len(elems)):
            raise HydlaError(f"order pair ({i}, {j}) refers to a missing element")
        pairs.add((i, j))
    closed = transitive_closure(pairs)
    if any(a == b for a, b in closed):
        raise HydlaError("explicit poset order is not irreflexive (cycle or (S, S) pair)")
    return ModuleSetPoset(elems, frozenset(closed))


def subset_poset(elements: Sequence[Iterable[str]]) -> ModuleSetPoset:
    elems = [frozenset(e) for e in elements]
    order = {(i, j) for i, a in enumerate(elems) for j, b in enumerate(elems) if a < b}
    return ModuleSetPoset(tuple(elems), frozenset(order))


def derive_from_priorities(modules: Sequence[str], weaker: Iterable[Tuple[str, str]]) -> ModuleSetPoset:
    """All admissible subsets: every omitted module is weaker than some retained one.

    ``weaker`` holds (weak, strong) pairs; their transitive closure is used.
    """
    modules = list(modules)
    rel = transitive_closure(weaker)
    stronger: Dict[str, set] = {m: {b for (a, b) in rel if a == m} for m in modules}
    admissible = []
    for r in range(len(modules), -1, -1):
        for combo in itertools.combinations(modules, r):
            s = set(combo)
            if all(stronger[m] & s for m in modules if m not in s):
                admissible.append(frozenset(s))
    admissible.sort(key=lambda s: (-len(s), sorted(s)))
    return subset_poset(admissible)


def load_explicit_poset(source, defined: Iterable[str] = None) -> ModuleSetPoset:
    """Build a poset from ``{"elements": [[names]], "order": [[i, j]]}`` (dict or JSON text)."""
    if isinstance(source, str):
        source = json.loads(source)
    try:
        elements = [list(e) for e in source["elements"]]
        order = [tuple(p) for p in source.get("order", [])]
    except (KeyError, TypeError) as exc:
        raise HydlaError(f"malformed explicit poset: {exc}") from None
    if defined is not None:
        unknown = {m for e in elements for m in e} - set(defined)
        if unknown:
            raise HydlaError(f"explicit poset references undefined modules: {sorted(unknown)}")
    return make_poset(elements, order)


def poset_to_json(ms: ModuleSetPoset) -> dict:
    return {"elements": [sorted(e) for e in ms.elements],
            "order": sorted([list(p) for p in ms.order])}
