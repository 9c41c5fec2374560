"""Core model: parameter regimes, size-class states, one-step transition law.

The process is a Markov chain on partitions of {1..n}.  Given the partition
after n arrivals, arrival n+1 either joins an existing part of size k with
probability (k - alpha)/(n + theta) per part, or opens a new part with
probability (alpha * V_n + theta)/(n + theta), V_n being the current number
of parts.

Everything this package computes (part counts, size-class counts, the
martingale decompositions built on top of them) is a function of the
*size-class process*: the map k -> N_n(k) counting parts of size exactly k.
Individual part labels never matter, because parts of equal size are
exchangeable: picking one of the N_n(k) parts of size k uniformly at random
is statistically indistinguishable from the labeled dynamics.  States are
therefore represented by sparse size->count maps, which cost
O(distinct sizes) instead of O(number of parts).

Admissible parameter regimes:

* ``Polynomial``    0 < alpha < 1 and theta > -alpha.  The number of parts
  grows like n^alpha.  All theorem checks in this package live here.
* ``Logarithmic``   alpha = 0 and theta > 0.  Parts grow like theta * log n.
* ``BoundedParts``  alpha < 0 and theta = -m * alpha for a positive integer
  m.  The number of parts converges to m almost surely.

Any other (alpha, theta) makes some transition weight negative and is
rejected at construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import IllegalMove, InvalidRegime

# Relative tolerance used to decide whether theta/(-alpha) is a positive
# integer in the BoundedParts test; inputs are floating point.
_BOUNDED_M_RTOL = 1e-12


class Regime(enum.Enum):
    BOUNDED_PARTS = "BoundedParts"
    LOGARITHMIC = "Logarithmic"
    POLYNOMIAL = "Polynomial"


@dataclass(frozen=True)
class ModelParams:
    """Validated (alpha, theta) pair with its regime tag.

    ``m`` is the almost-sure limit of the number of parts in the
    BoundedParts regime (m = theta / (-alpha)); it is 0 otherwise.
    """

    alpha: float
    theta: float
    regime: Regime
    m: int = 0

    def __post_init__(self) -> None:
        if self.regime is Regime.BOUNDED_PARTS and self.m < 1:
            raise InvalidRegime("BoundedParts requires a positive integer m")


def validate_params(alpha: float, theta: float) -> ModelParams:
    """Classify (alpha, theta) into a regime or raise :class:`InvalidRegime`."""
    alpha = float(alpha)
    theta = float(theta)
    if not (math.isfinite(alpha) and math.isfinite(theta)):
        raise InvalidRegime(f"non-finite parameters: alpha={alpha}, theta={theta}")
    if 0.0 < alpha < 1.0:
        if theta > -alpha:
            return ModelParams(alpha, theta, Regime.POLYNOMIAL)
        raise InvalidRegime(
            f"alpha={alpha} in (0,1) requires theta > -alpha, got theta={theta}"
        )
    if alpha == 0.0:
        if theta > 0.0:
            return ModelParams(alpha, theta, Regime.LOGARITHMIC)
        raise InvalidRegime(f"alpha=0 requires theta > 0, got theta={theta}")
    if alpha < 0.0:
        m_real = theta / (-alpha)
        m = round(m_real)
        if m >= 1 and abs(m_real - m) <= _BOUNDED_M_RTOL * max(1.0, abs(m_real)):
            return ModelParams(alpha, theta, Regime.BOUNDED_PARTS, m=m)
        raise InvalidRegime(
            f"alpha={alpha} < 0 requires theta = -m*alpha for a positive "
            f"integer m; theta/(-alpha)={m_real!r} is not one"
        )
    raise InvalidRegime(f"alpha={alpha} is not admissible (alpha >= 1)")


@dataclass(frozen=True)
class JoinSize:
    """Arrival joins one of the parts of size ``k`` (it becomes size k+1)."""

    k: int


@dataclass(frozen=True)
class NewPart:
    """Arrival opens a new part of size 1."""


NEW_PART = NewPart()

Move = JoinSize | NewPart


@dataclass(frozen=True)
class SizeClassState:
    """Partition state after ``n`` arrivals, as sparse size-class counts.

    Invariants: sum_k k*counts[k] == n, sum_k counts[k] == num_parts,
    every stored count is > 0 and every size is in [1, n].
    """

    n: int
    counts: dict[int, int]
    num_parts: int

    def __post_init__(self) -> None:
        assert self.n >= 1 and self.num_parts >= 1
        assert sum(k * c for k, c in self.counts.items()) == self.n
        assert sum(self.counts.values()) == self.num_parts
        assert all(c > 0 and 1 <= k <= self.n for k, c in self.counts.items())

    def count(self, k: int) -> int:
        """N_n(k): number of parts of size exactly k."""
        return self.counts.get(k, 0)


@dataclass(frozen=True)
class TransitionLaw:
    """Exact conditional law of the next arrival's choice on size classes.

    ``join_weight[k]`` is the total probability of joining *some* part of
    size k, i.e. (k - alpha) * N_n(k) / (n + theta).
    """

    join_weight: dict[int, float]
    new_part_prob: float

    def total(self) -> float:
        return self.new_part_prob + math.fsum(self.join_weight.values())


def initial_state() -> SizeClassState:
    """State after the first arrival: a single part of size 1."""
    return SizeClassState(n=1, counts={1: 1}, num_parts=1)


def transition_law(state: SizeClassState, params: ModelParams) -> TransitionLaw:
    """One-step conditional law from ``state``.

    Regime validation guarantees nonnegative weights.  The weights sum to 1
    exactly in exact arithmetic because
    sum_k (k - alpha) N(k) = n - alpha * V.
    """
    denom = state.n + params.theta
    new_w = params.alpha * state.num_parts + params.theta
    if params.regime is Regime.BOUNDED_PARTS and state.num_parts >= params.m:
        # alpha*m + theta == 0 by definition of the regime; forcing the exact
        # zero avoids a sign flip from rounding of alpha*V.
        new_w = 0.0
    join = {
        k: (k - params.alpha) * c / denom for k, c in sorted(state.counts.items())
    }
    return TransitionLaw(join_weight=join, new_part_prob=new_w / denom)


def apply_move(state: SizeClassState, move: Move) -> SizeClassState:
    """Next state after one arrival; raises :class:`IllegalMove` if impossible."""
    counts = dict(state.counts)
    if isinstance(move, NewPart):
        counts[1] = counts.get(1, 0) + 1
        return SizeClassState(state.n + 1, counts, state.num_parts + 1)
    k = move.k
    if counts.get(k, 0) < 1:
        raise IllegalMove(f"no part of size {k} to join (n={state.n})")
    if counts[k] == 1:
        del counts[k]
    else:
        counts[k] -= 1
    counts[k + 1] = counts.get(k + 1, 0) + 1
    return SizeClassState(state.n + 1, counts, state.num_parts)
