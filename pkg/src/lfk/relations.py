"""Decision procedures for the two auxiliary relations on trail types.

``id_cont_type`` characterizes the type triples at which the identity
continuation is well-typed; ``compatible`` characterizes type-safe
composition of two trails into a third.  Both are decided by clause
agreement: every applicable clause is evaluated and the results are
checked to coincide (they always do; the property suite verifies it).

The relations are functional in none of their argument positions in
general, so the non-ground modes are handled by exact solution-set
solvers, exposed with a structural-depth budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Iterator

from .syntax import (
    BASE_TYPES,
    EMPTY,
    EmptyTrail,
    SourceType,
    TrailStep,
    TrailType,
)


@dataclass(frozen=True)
class TrailSolverBudget:
    """Structural depth bound for synthesized trail types."""

    max_depth: int = 4

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")


def trail_depth(mu: TrailType) -> int:
    """Spine node count: depth(*) = 1, depth({t => mu => t'}) = 1 + depth(mu)."""
    match mu:
        case EmptyTrail():
            return 1
        case TrailStep(_, n, _):
            return 1 + trail_depth(n)
    raise ValueError(f"not a ground trail type: {mu!r}")


def id_cont_type(t: SourceType, mu: TrailType, t2: SourceType) -> bool:
    """True iff the identity continuation can be typed t -> mu -> t2."""
    match mu:
        case EmptyTrail():
            return t == t2
        case TrailStep(t1, inner, t1p):
            return t == t1 and t2 == t1p and inner == EMPTY
    raise ValueError(f"not a ground trail type: {mu!r}")


def compatible(mu1: TrailType, mu2: TrailType, mu3: TrailType) -> bool:
    """True iff composing a trail of type mu1 with one of type mu2 can
    yield a trail of type mu3."""
    verdicts = []
    if isinstance(mu1, EmptyTrail):
        verdicts.append(mu2 == mu3)
    if isinstance(mu2, EmptyTrail):
        verdicts.append(mu1 == mu3)
    if isinstance(mu1, TrailStep):
        if isinstance(mu3, EmptyTrail):
            verdicts.append(False)
        elif isinstance(mu3, TrailStep):
            verdicts.append(
                mu1.in_ty == mu3.in_ty
                and mu1.out_ty == mu3.out_ty
                and compatible(mu2, mu3.next, mu1.next)
            )
    if not verdicts:
        raise ValueError(f"not ground trail types: {(mu1, mu2, mu3)!r}")
    assert all(v == verdicts[0] for v in verdicts), "overlapping clauses disagree"
    return verdicts[0]


# ---------------------------------------------------------------------------
# Exact solution sets for the three non-ground modes of compatible.
#
# Each mode recurses into another by the shape of the fourth clause:
#   solve third (mu1, mu2, ?)  ->  solve second (mu2, ?, mu1.next)
#   solve second (mu1, ?, mu3) ->  solve first  (?, mu3.next, mu1.next)
#   solve first  (?, mu2, mu3) ->  solve third  (mu2, mu3.next, ?)
# The recursion descends structurally on the ground arguments, so every
# solution set is finite.


def _solve_third(mu1: TrailType, mu2: TrailType) -> frozenset[TrailType]:
    out: set[TrailType] = set()
    if isinstance(mu1, EmptyTrail):
        out.add(mu2)
    if isinstance(mu2, EmptyTrail):
        out.add(mu1)
    if isinstance(mu1, TrailStep):
        for inner in _solve_second(mu2, mu1.next):
            out.add(TrailStep(mu1.in_ty, inner, mu1.out_ty))
    return frozenset(out)


def _solve_second(mu1: TrailType, mu3: TrailType) -> frozenset[TrailType]:
    out: set[TrailType] = set()
    if isinstance(mu1, EmptyTrail):
        out.add(mu3)
    if mu1 == mu3:
        out.add(EMPTY)
    if (
        isinstance(mu1, TrailStep)
        and isinstance(mu3, TrailStep)
        and mu1.in_ty == mu3.in_ty
        and mu1.out_ty == mu3.out_ty
    ):
        out |= _solve_first(mu3.next, mu1.next)
    return frozenset(out)


def _solve_first(mu2: TrailType, mu3: TrailType) -> frozenset[TrailType]:
    out: set[TrailType] = set()
    if mu2 == mu3:
        out.add(EMPTY)
    if isinstance(mu2, EmptyTrail):
        out.add(mu3)
    if isinstance(mu3, TrailStep):
        for inner in _solve_third(mu2, mu3.next):
            out.add(TrailStep(mu3.in_ty, inner, mu3.out_ty))
    return frozenset(out)


def solve_compatible_third(
    mu1: TrailType, mu2: TrailType, budget: TrailSolverBudget = TrailSolverBudget()
) -> frozenset[TrailType]:
    """All mu3 with compatible(mu1, mu2, mu3) and depth <= budget.max_depth."""
    return frozenset(m for m in _solve_third(mu1, mu2) if trail_depth(m) <= budget.max_depth)


def solve_compatible_second(
    mu1: TrailType, mu3: TrailType, budget: TrailSolverBudget = TrailSolverBudget()
) -> frozenset[TrailType]:
    """All mu2 with compatible(mu1, mu2, mu3) and depth <= budget.max_depth."""
    return frozenset(m for m in _solve_second(mu1, mu3) if trail_depth(m) <= budget.max_depth)


def solve_compatible_first(
    mu2: TrailType, mu3: TrailType, budget: TrailSolverBudget = TrailSolverBudget()
) -> frozenset[TrailType]:
    """All mu1 with compatible(mu1, mu2, mu3) and depth <= budget.max_depth."""
    return frozenset(m for m in _solve_first(mu2, mu3) if trail_depth(m) <= budget.max_depth)


def enumerate_trails(
    max_depth: int, bases: Iterable[SourceType] = BASE_TYPES
) -> Iterator[TrailType]:
    """All trail types of depth <= max_depth whose element types are
    drawn from ``bases``, in depth order."""
    bases = tuple(bases)
    layer: list[TrailType] = [EMPTY]
    if max_depth >= 1:
        yield EMPTY
    depth = 1
    while depth < max_depth:
        nxt = [
            TrailStep(i, m, o) for i, o in product(bases, bases) for m in layer
        ]
        yield from nxt
        layer = nxt
        depth += 1
