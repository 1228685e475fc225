"""Lossless rounding of a feasible single-type LP column into routings.

Setting: one query type with random demand ``D`` (``p̄[ℓ] = Pr[D >= ℓ]``) and
unit-capacity resources.  Given a column ``x`` that is feasible for the
subset-tightened relaxation (sorted prefix sums bounded by ``E[min(D, s)]``),
the scheme builds a distribution over *routings* -- partial permutations
sending arrival ranks to resources -- such that resource ``i`` is routed a
query with probability exactly ``x[i]``:

    sum over routings pi of  P(pi) * sum_ℓ p̄[ℓ] * 1{pi(ℓ) = i}  =  x[i].

Resources are processed one at a time.  The state keeps a partition of the
ranks into contiguous *segments*; within each segment every branch of the
randomization has exactly one still-idle rank, and those idle events are
mutually exclusive across ranks, so a segment behaves like a single combined
arrival whose survival probability is the idle-weighted sum of its ranks'
survivals.  Each stage picks the latest segment whose combined arrival is
frequent enough, splits a Bernoulli coin between that segment and the next,
routes the branch's idle rank there, and merges the two segments.

When the chosen segment is already the last one, a fresh rank that arrives
with probability zero is appended first and plays the role of "the next
segment": the branch that routes there parks the resource on a query that
never arrives.  This keeps the one-idle-per-segment structure exact on every
branch, which both the stage invariants and the final marginals rely on.

All arithmetic stays in `fractions.Fraction` when the inputs are rational,
so the worked-example distributions reproduce exactly.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .demand import DemandDistribution, Prob, as_generator, is_exact_number

FLOAT_TOL = 1e-12


class InfeasibleColumnError(ValueError):
    """The column cannot be rounded: its marginal demand ran out mid-scheme."""


@dataclass(frozen=True)
class Routing:
    """A partial permutation: arrival rank ℓ -> resource, or None for idle.

    ``assignment[ℓ-1]`` is the resource (0-based) routed the ℓ-th arrival.
    No resource may appear at two ranks.
    """

    assignment: tuple[Optional[int], ...]

    def __post_init__(self) -> None:
        used = [r for r in self.assignment if r is not None]
        if len(used) != len(set(used)):
            raise ValueError(f"routing assigns some resource twice: {self.assignment}")

    @property
    def length(self) -> int:
        return len(self.assignment)

    def resource_at(self, rank: int) -> Optional[int]:
        """Resource receiving the arrival of 1-based rank ``rank``."""
        if 1 <= rank <= len(self.assignment):
            return self.assignment[rank - 1]
        return None

    def rank_of(self, resource: int) -> Optional[int]:
        for idx, r in enumerate(self.assignment):
            if r == resource:
                return idx + 1
        return None


@dataclass(frozen=True)
class SegmentPartition:
    """Ordered, disjoint, contiguous rank spans covering [1..L]."""

    spans: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        expected = 1
        for lo, hi in self.spans:
            if lo != expected or hi < lo:
                raise ValueError(f"spans {self.spans} do not tile the rank range")
            expected = hi + 1

    @property
    def length(self) -> int:
        return self.spans[-1][1] if self.spans else 0

    def segment_of(self, rank: int) -> int:
        for idx, (lo, hi) in enumerate(self.spans):
            if lo <= rank <= hi:
                return idx
        raise ValueError(f"rank {rank} not covered")


@dataclass(frozen=True)
class StageDecision:
    """Record of one processed resource, sufficient to replay the branch."""

    resource: int
    x: Prob
    skip: bool
    segment: int = -1  # chosen segment index at decision time (after any spawn)
    lam: Prob = 0  # probability of routing into the chosen segment
    spawned: bool = False  # a zero-probability rank was appended first


@dataclass(frozen=True)
class MarginalReport:
    """Achieved routing marginals versus the requested column."""

    achieved: tuple[Prob, ...]
    target: tuple[Prob, ...]
    max_abs_error: float

    @property
    def exact(self) -> bool:
        return self.max_abs_error == 0


class RoundingState:
    """Mutable stage-by-stage state of the rounding scheme.

    Branch tracking is optional: the compact state (idle probabilities per
    rank plus the segment partition) is enough to run all stages, while the
    explicit weighted branch set is what the invariant checks inspect.
    """

    def __init__(
        self,
        dist: DemandDistribution,
        num_resources: int,
        order: Optional[Sequence[int]] = None,
        track_branches: bool = True,
        exact: Optional[bool] = None,
        tol: Optional[float] = None,
    ):
        if num_resources < 1:
            raise ValueError("need at least one resource")
        self.order = tuple(order) if order is not None else tuple(range(num_resources))
        if sorted(self.order) != list(range(num_resources)):
            raise ValueError(f"order {self.order} is not a permutation of the resources")
        self.exact = dist.is_exact if exact is None else exact
        self.tol = (0 if self.exact else FLOAT_TOL) if tol is None else tol
        one: Prob = Fraction(1) if self.exact else 1.0
        self.real_length = max(num_resources, dist.max_support)
        surv = [dist.survival(ell) for ell in range(1, self.real_length + 1)]
        if self.exact:
            self.rank_survival: list[Prob] = [Fraction(s) for s in surv]
        else:
            self.rank_survival = [float(s) for s in surv]
        self.idle_prob: list[Prob] = [one] * self.real_length
        self.segments: list[tuple[int, int]] = [(k, k) for k in range(1, self.real_length + 1)]
        self.stage = 0
        self.decisions: list[StageDecision] = []
        self.targets: dict[int, Prob] = {}
        # per-resource list of (rank, probability that this rank was routed there)
        self.assign_pairs: dict[int, list[tuple[int, Prob]]] = {}
        self.branches: Optional[list[tuple[list[Optional[int]], Prob]]] = (
            [([None] * self.real_length, one)] if track_branches else None
        )

    # -- queries ---------------------------------------------------------

    @property
    def universe(self) -> int:
        """Current rank count, including appended zero-probability ranks."""
        return len(self.rank_survival)

    @property
    def partition(self) -> SegmentPartition:
        return SegmentPartition(tuple(self.segments))

    def segment_survival(self, seg_index: int) -> Prob:
        """Idle-weighted survival mass of one segment: the probability that
        its combined arrival occurs."""
        lo, hi = self.segments[seg_index]
        total: Prob = Fraction(0) if self.exact else 0.0
        for rank in range(lo, hi + 1):
            total = total + self.idle_prob[rank - 1] * self.rank_survival[rank - 1]
        return total

    def residual_survivals(self) -> tuple[Prob, ...]:
        """Survival curve of the residual demand, one entry per segment."""
        return tuple(self.segment_survival(s) for s in range(len(self.segments)))

    def survival_of_rank(self, rank: int) -> Prob:
        return self.rank_survival[rank - 1]

    # -- the stage step --------------------------------------------------

    def _coerce(self, x: Prob) -> Prob:
        if self.exact:
            if not is_exact_number(x):
                raise TypeError(
                    f"exact-mode rounding got a float marginal {x!r}; "
                    "pass Fractions or build the state with exact=False"
                )
            return Fraction(x)
        return float(x)

    def advance(self, x_next: Prob) -> None:
        """Process the next resource in the order with marginal ``x_next``."""
        if self.stage >= len(self.order):
            raise ValueError("all resources already processed")
        resource = self.order[self.stage]
        x = self._coerce(x_next)
        tol = self.tol
        if x < -tol:
            raise InfeasibleColumnError(f"negative marginal {x} for resource {resource}")
        if x <= tol:
            self.decisions.append(StageDecision(resource=resource, x=x, skip=True))
            self.targets[resource] = x
            self.assign_pairs[resource] = []
            self.stage += 1
            return

        survivals = self.residual_survivals()
        chosen = -1
        for idx, s in enumerate(survivals):
            if s >= x - tol:
                chosen = idx
        if chosen == -1:
            raise InfeasibleColumnError(
                f"resource {resource} needs marginal {x} but the residual demand "
                f"arrives with probability only {survivals[0]}"
            )

        spawned = chosen == len(self.segments) - 1
        if spawned:
            self._spawn_virtual_rank()

        s_here = survivals[chosen]
        s_next = (
            self.segment_survival(chosen + 1)
            if not spawned
            else (Fraction(0) if self.exact else 0.0)
        )
        lam = (x - s_next) / (s_here - s_next)
        if not self.exact:
            lam = min(1.0, max(0.0, lam))

        lo_a, hi_a = self.segments[chosen]
        lo_b, hi_b = self.segments[chosen + 1]
        one: Prob = Fraction(1) if self.exact else 1.0

        pairs: list[tuple[int, Prob]] = []
        for rank in range(lo_a, hi_a + 1):
            prob = lam * self.idle_prob[rank - 1]
            if prob != 0:
                pairs.append((rank, prob))
            self.idle_prob[rank - 1] = (one - lam) * self.idle_prob[rank - 1]
        for rank in range(lo_b, hi_b + 1):
            prob = (one - lam) * self.idle_prob[rank - 1]
            if prob != 0:
                pairs.append((rank, prob))
            self.idle_prob[rank - 1] = lam * self.idle_prob[rank - 1]
        self.assign_pairs[resource] = pairs

        if self.branches is not None:
            self._split_branches(resource, chosen, lam)

        self.segments[chosen] = (lo_a, hi_b)
        del self.segments[chosen + 1]
        self.decisions.append(
            StageDecision(resource=resource, x=x, skip=False, segment=chosen, lam=lam, spawned=spawned)
        )
        self.targets[resource] = x
        self.stage += 1

    def _spawn_virtual_rank(self) -> None:
        zero: Prob = Fraction(0) if self.exact else 0.0
        one: Prob = Fraction(1) if self.exact else 1.0
        self.rank_survival.append(zero)
        self.idle_prob.append(one)
        new_rank = len(self.rank_survival)
        self.segments.append((new_rank, new_rank))
        if self.branches is not None:
            for assignment, _ in self.branches:
                assignment.append(None)

    def _split_branches(self, resource: int, seg: int, lam: Prob) -> None:
        assert self.branches is not None
        one: Prob = Fraction(1) if self.exact else 1.0
        updated: list[tuple[list[Optional[int]], Prob]] = []
        for assignment, prob in self.branches:
            if lam != 0:
                routed = list(assignment)
                routed[self._idle_rank_in(assignment, seg) - 1] = resource
                updated.append((routed, prob * lam))
            if lam != one:
                parked = list(assignment)
                parked[self._idle_rank_in(assignment, seg + 1) - 1] = resource
                updated.append((parked, prob * (one - lam)))
        self.branches = updated

    def _idle_rank_in(self, assignment: list[Optional[int]], seg: int) -> int:
        lo, hi = self.segments[seg]
        idle = [rank for rank in range(lo, hi + 1) if assignment[rank - 1] is None]
        assert len(idle) == 1, f"segment {self.segments[seg]} holds {len(idle)} idle ranks"
        return idle[0]

    # -- invariants -------------------------------------------------------

    def check_invariants(self) -> list[str]:
        """All stage invariants against the explicit branch set.

        Returns human-readable violation strings (empty means all hold):

        * matched marginals: processed resources achieve their target mass,
          unprocessed resources none;
        * combined arrivals (a): per branch exactly one idle rank per
          segment, and the idle-rank probabilities of a segment sum to one;
        * combined arrivals (b): the stored residual survival of segment ℓ
          equals the arrival probability of the ℓ-th idle rank across
          branches;
        * separated routing: a routed resource sits in one fixed segment on
          every branch.
        """
        if self.branches is None:
            raise ValueError("invariant checking needs track_branches=True")
        tol = 0 if self.exact else 1e-9
        problems: list[str] = []
        one: Prob = Fraction(1) if self.exact else 1.0

        total_prob: Prob = sum(p for _, p in self.branches)
        if abs(float(total_prob - one)) > (0 if self.exact else FLOAT_TOL):
            problems.append(f"branch probabilities sum to {float(total_prob)!r}")

        processed = set(self.targets)
        achieved: dict[int, Prob] = {r: Fraction(0) if self.exact else 0.0 for r in range(len(self.order))}
        for assignment, prob in self.branches:
            for rank, res in enumerate(assignment, start=1):
                if res is not None:
                    achieved[res] = achieved[res] + prob * self.rank_survival[rank - 1]
        for res in range(len(self.order)):
            want = self.targets.get(res, Fraction(0) if self.exact else 0.0)
            if res not in processed and achieved[res] != 0:
                problems.append(f"unprocessed resource {res} already has mass {achieved[res]}")
            elif abs(float(achieved[res] - want)) > tol:
                problems.append(
                    f"resource {res} achieves {float(achieved[res])!r}, wants {float(want)!r}"
                )

        for seg_idx, (lo, hi) in enumerate(self.segments):
            union: Prob = Fraction(0) if self.exact else 0.0
            for assignment, prob in self.branches:
                idle = [k for k in range(lo, hi + 1) if assignment[k - 1] is None]
                if len(idle) != 1:
                    problems.append(
                        f"segment {seg_idx} span {(lo, hi)} has {len(idle)} idle ranks in a branch"
                    )
                    break
            for k in range(lo, hi + 1):
                union = union + self.idle_prob[k - 1]
            if abs(float(union - one)) > (0 if self.exact else 1e-9):
                problems.append(f"segment {seg_idx} idle mass sums to {float(union)!r}")

        # residual survival: ℓ-th idle arrival across branches
        for seg_idx in range(len(self.segments)):
            direct: Prob = Fraction(0) if self.exact else 0.0
            ok = True
            for assignment, prob in self.branches:
                idles = [k for k in range(1, self.universe + 1) if assignment[k - 1] is None]
                if seg_idx >= len(idles):
                    ok = False
                    break
                direct = direct + prob * self.rank_survival[idles[seg_idx] - 1]
            if ok and abs(float(direct - self.segment_survival(seg_idx))) > tol:
                problems.append(
                    f"segment {seg_idx} survival {float(self.segment_survival(seg_idx))!r} "
                    f"!= branch-side value {float(direct)!r}"
                )

        for res in processed:
            if self.targets[res] == 0:
                continue  # never routed anywhere; no segment to pin down
            homes = set()
            for assignment, _ in self.branches:
                ranks = [k for k, r in enumerate(assignment, start=1) if r == res]
                if len(ranks) != 1:
                    problems.append(f"resource {res} appears {len(ranks)} times in a branch")
                    break
                homes.add(self.partition.segment_of(ranks[0]))
            if len(homes) > 1:
                problems.append(f"resource {res} spreads across segments {sorted(homes)}")
        return problems

    def copy(self) -> "RoundingState":
        return copy.deepcopy(self)


def stage_advance(state: RoundingState, x_next: Prob) -> RoundingState:
    """Functional wrapper over one stage: returns the advanced copy."""
    advanced = state.copy()
    advanced.advance(x_next)
    return advanced


@dataclass(frozen=True)
class RoutingDistribution:
    """Compact encoding of the rounded distribution over routings.

    The state is the per-stage coin decisions; a routing is materialized by
    replaying them, so sampling costs O(n * L) and the full support (at most
    one doubling per stage) is expanded only on demand.
    """

    num_resources: int
    length: int  # real rank count; appended zero-probability ranks are hidden
    survivals: tuple[Prob, ...]
    decisions: tuple[StageDecision, ...]
    assign_pairs: tuple[tuple[tuple[int, Prob], ...], ...]  # per resource
    exact: bool
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def marginals(self) -> tuple[Prob, ...]:
        """Routed-arrival probability per resource, from the compact state."""
        out: list[Prob] = []
        for res in range(self.num_resources):
            total: Prob = Fraction(0) if self.exact else 0.0
            for rank, prob in self.assign_pairs[res]:
                if rank <= self.length:
                    total = total + prob * self.survivals[rank - 1]
            out.append(total)
        return tuple(out)

    def rank_probs(self) -> tuple[tuple[Prob, ...], ...]:
        """Matrix q[i][ℓ-1] = Pr[rank ℓ is routed to resource i]."""
        zero: Prob = Fraction(0) if self.exact else 0.0
        q = [[zero] * self.length for _ in range(self.num_resources)]
        for res in range(self.num_resources):
            for rank, prob in self.assign_pairs[res]:
                if rank <= self.length:
                    q[res][rank - 1] = q[res][rank - 1] + prob
        return tuple(tuple(row) for row in q)

    def support_bound(self) -> int:
        splits = sum(
            1
            for d in self.decisions
            if not d.skip and d.lam != 0 and float(d.lam) != 1.0
        )
        return 1 << splits

    def _replay_universe(self) -> int:
        return self.length + sum(1 for d in self.decisions if d.spawned)

    def branches(self, max_support: int = 1 << 16) -> tuple[tuple[Routing, Prob], ...]:
        """Expand the full weighted support (projected to real ranks).

        Branches that differ only in where a resource was parked on a
        never-arriving rank collapse together.
        """
        if "branches" in self._cache:
            return self._cache["branches"]
        if self.support_bound() > max_support:
            raise ValueError(
                f"support may reach {self.support_bound()} routings; raise max_support to expand"
            )
        one: Prob = Fraction(1) if self.exact else 1.0
        segments = [(k, k) for k in range(1, self.length + 1)]
        universe = self.length
        work: list[tuple[list[Optional[int]], Prob]] = [([None] * self.length, one)]
        for dec in self.decisions:
            if dec.skip:
                continue
            if dec.spawned:
                universe += 1
                segments.append((universe, universe))
                for assignment, _ in work:
                    assignment.append(None)
            seg = dec.segment
            updated: list[tuple[list[Optional[int]], Prob]] = []
            for assignment, prob in work:
                if dec.lam != 0:
                    routed = list(assignment)
                    routed[_unique_idle(assignment, segments[seg]) - 1] = dec.resource
                    updated.append((routed, prob * dec.lam))
                if dec.lam != one:
                    parked = list(assignment)
                    parked[_unique_idle(assignment, segments[seg + 1]) - 1] = dec.resource
                    updated.append((parked, prob * (one - dec.lam)))
            work = updated
            segments[seg] = (segments[seg][0], segments[seg + 1][1])
            del segments[seg + 1]
        merged: dict[tuple[Optional[int], ...], Prob] = {}
        for assignment, prob in work:
            key = tuple(assignment[: self.length])
            merged[key] = merged.get(key, Fraction(0) if self.exact else 0.0) + prob
        result = tuple(
            (Routing(key), prob)
            for key, prob in sorted(
                merged.items(), key=lambda kv: tuple(-1 if r is None else r for r in kv[0])
            )
        )
        self._cache["branches"] = result
        return result

    def sample(self, rng_seed: Union[int, np.random.Generator]) -> Routing:
        """Draw one routing by replaying the stage coins."""
        rng = as_generator(rng_seed)
        segments = [(k, k) for k in range(1, self.length + 1)]
        universe = self.length
        assignment: list[Optional[int]] = [None] * self.length
        for dec in self.decisions:
            if dec.skip:
                continue
            if dec.spawned:
                universe += 1
                segments.append((universe, universe))
                assignment.append(None)
            seg = dec.segment
            into_chosen = float(dec.lam) == 1.0 or (
                float(dec.lam) > 0.0 and rng.random() < float(dec.lam)
            )
            target = segments[seg] if into_chosen else segments[seg + 1]
            assignment[_unique_idle(assignment, target) - 1] = dec.resource
            segments[seg] = (segments[seg][0], segments[seg + 1][1])
            del segments[seg + 1]
        return Routing(tuple(assignment[: self.length]))


def _unique_idle(assignment: list[Optional[int]], span: tuple[int, int]) -> int:
    lo, hi = span
    idle = [rank for rank in range(lo, hi + 1) if assignment[rank - 1] is None]
    assert len(idle) == 1, f"span {span} holds {len(idle)} idle ranks"
    return idle[0]


def typeround(
    x_col: Sequence[Prob],
    dist: DemandDistribution,
    order: Optional[Sequence[int]] = None,
    exact: Optional[bool] = None,
    tol: Optional[float] = None,
) -> RoutingDistribution:
    """Round a feasible column into a routing distribution with exact marginals.

    ``order`` fixes the processing order of resources (default ascending);
    different orders are valid and may give different distributions.  An
    infeasible column is rejected as soon as the residual demand cannot cover
    the next requested marginal, rather than rounded approximately.  ``tol``
    loosens that rejection for float columns coming out of an LP solver.
    """
    n = len(x_col)
    if exact is None:
        exact = dist.is_exact and all(is_exact_number(x) for x in x_col)
    state = RoundingState(dist, n, order=order, track_branches=False, exact=exact, tol=tol)
    for _ in range(n):
        state.advance(x_col[state.order[state.stage]])
    return RoutingDistribution(
        num_resources=n,
        length=state.real_length,
        survivals=tuple(state.rank_survival[: state.real_length]),
        decisions=tuple(state.decisions),
        assign_pairs=tuple(tuple(state.assign_pairs.get(res, ())) for res in range(n)),
        exact=exact,
    )


def verify_marginals(
    rd: RoutingDistribution, x_col: Sequence[Prob], dist: DemandDistribution
) -> MarginalReport:
    """Recompute achieved marginals from the expanded support.

    This path sums over explicit routings, independently of the compact
    bookkeeping used while rounding, and reports the worst absolute error
    (zero in exact mode).
    """
    achieved: list[Prob] = [Fraction(0) if rd.exact else 0.0 for _ in range(rd.num_resources)]
    for routing, prob in rd.branches():
        for rank, res in enumerate(routing.assignment, start=1):
            if res is not None:
                achieved[res] = achieved[res] + prob * dist.survival(rank)
    worst = 0.0
    for res in range(rd.num_resources):
        worst = max(worst, abs(float(achieved[res] - x_col[res])))
    return MarginalReport(achieved=tuple(achieved), target=tuple(x_col), max_abs_error=worst)
