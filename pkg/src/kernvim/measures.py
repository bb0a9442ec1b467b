"""Weight vectors over covariate subsets for LOCO, KOI, LOO and Shapley measures.

Subsets are sorted tuples of 0-based indices; ``()`` is the empty set.
Weights are kept as exact fractions so the contrast and efficiency
identities hold exactly; ``as_float`` gives the float view used downstream.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import InputError

EXACT_SHAPLEY_LIMIT = 12
Subset = Tuple[int, ...]


def _key(subset: Iterable[int]) -> Subset:
    return tuple(sorted(set(int(i) for i in subset)))


@dataclass
class WeightVector:
    weights: Dict[Subset, Fraction] = field(default_factory=dict)
    descriptor: str = ""

    def __post_init__(self):
        self.weights = {k: Fraction(v) for k, v in self.weights.items() if v != 0}

    def __add__(self, other: "WeightVector") -> "WeightVector":
        out = dict(self.weights)
        for k, v in other.weights.items():
            out[k] = out.get(k, Fraction(0)) + v
        return WeightVector(out, f"{self.descriptor}+{other.descriptor}")

    def scaled(self, factor) -> "WeightVector":
        f = Fraction(factor)
        return WeightVector({k: f * v for k, v in self.weights.items()}, self.descriptor)

    def total(self) -> Fraction:
        return sum(self.weights.values(), Fraction(0))

    def as_float(self) -> Dict[Subset, float]:
        return {k: float(v) for k, v in self.weights.items()}

    @property
    def subsets(self):
        return sorted(self.weights, key=lambda s: (len(s), s))

    def expand(self, groups: Sequence[Sequence[int]]) -> "WeightVector":
        """Map subsets of players (covariate groups) to subsets of columns."""
        out: Dict[Subset, Fraction] = {}
        for k, v in self.weights.items():
            cols = _key(c for p in k for c in groups[p])
            out[cols] = out.get(cols, Fraction(0)) + v
        return WeightVector(out, self.descriptor)


def loco_weights(v1, v2, descriptor: str = "") -> WeightVector:
    """``+1`` on the larger subset ``v1`` and ``-1`` on the nested subset ``v2``."""
    k1, k2 = _key(v1), _key(v2)
    if not set(k2) <= set(k1) or k1 == k2:
        raise InputError(f"LOCO needs a strictly nested pair, got {k1} and {k2}")
    return WeightVector({k1: Fraction(1), k2: Fraction(-1)}, descriptor or f"loco{k1}|{k2}")


def koi_weights(i: int) -> WeightVector:
    return loco_weights((i,), (), descriptor=f"koi[{i}]")


def loo_weights(i: int, d: int) -> WeightVector:
    full = tuple(range(d))
    return loco_weights(full, tuple(j for j in full if j != i), descriptor=f"loo[{i}]")


def shapley_exact_weights(i: int, d: int, limit: int = EXACT_SHAPLEY_LIMIT) -> WeightVector:
    if not 0 <= i < d:
        raise InputError(f"variable index {i} out of range for d={d}")
    if d > limit:
        raise InputError(
            f"exact Shapley weights enumerate 2^{d - 1} subsets; d={d} exceeds the limit "
            f"{limit}. Use permutation sampling (shapley-mc) instead."
        )
    others = [j for j in range(d) if j != i]
    w: Dict[Subset, Fraction] = {}
    for size in range(d):
        beta = Fraction(1, d * comb(d - 1, size))
        for V in itertools.combinations(others, size):
            with_i = _key(V + (i,))
            w[with_i] = w.get(with_i, Fraction(0)) + beta
            w[V] = w.get(V, Fraction(0)) - beta
    return WeightVector(w, f"shapley[{i}]")


def _permutation_contrasts(i: int, perms: Iterable[Sequence[int]]) -> Tuple[Dict[Subset, int], int]:
    counts: Dict[Subset, int] = {}
    m = 0
    for perm in perms:
        perm = list(perm)
        before = _key(perm[: perm.index(i)])
        with_i = _key(before + (i,))
        counts[with_i] = counts.get(with_i, 0) + 1
        counts[before] = counts.get(before, 0) - 1
        m += 1
    return counts, m


def shapley_permutation_weights(i: int, d: int) -> WeightVector:
    """Shapley weights from full enumeration of the ``d!`` orderings."""
    counts, m = _permutation_contrasts(i, itertools.permutations(range(d)))
    return WeightVector({k: Fraction(c, m) for k, c in counts.items()}, f"shapley-perm[{i}]")


def shapley_mc_weights(i: int, d: int, m: int = 40, seed=None,
                       permutations: Optional[Iterable[Sequence[int]]] = None) -> WeightVector:
    """Monte Carlo Shapley weights from ``m`` uniformly drawn orderings.

    ``permutations`` overrides the random draws (used to inject a fixed
    enumeration). Error in the weights is O(m^{-1/2}).
    """
    if not 0 <= i < d:
        raise InputError(f"variable index {i} out of range for d={d}")
    if permutations is None:
        if m < 1:
            raise InputError("need at least one permutation")
        rng = np.random.default_rng(seed)
        permutations = (rng.permutation(d) for _ in range(m))
    counts, m_used = _permutation_contrasts(i, permutations)
    if m_used == 0:
        raise InputError("need at least one permutation")
    return WeightVector({k: Fraction(c, m_used) for k, c in counts.items()}, f"shapley-mc[{i}]")


