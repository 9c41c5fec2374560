"""Sequential simulation engine: configs, trajectories, observers.

``simulate`` is a pure function of (params, config): the replica stream is
derived from (seed, replica_id), so identical inputs give bit-identical
trajectories.  Two execution paths produce the same move sequence:

* a compiled kernel (default) for throughput — about 1e7 steps/s;
* a pure-Python loop used whenever step observers are attached, which feeds
  every (state, law, move) triple to the observers in order.

A single trajectory is strictly sequential; replicas are independent and
merge by pure aggregation (see ``harness``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Protocol

import numpy as np

from . import _kernels
from .errors import DomainError
from .fenwick import FenwickSampler
from .model import (
    JoinSize,
    Move,
    ModelParams,
    NEW_PART,
    NewPart,
    Regime,
    SizeClassState,
    TransitionLaw,
    apply_move,
    initial_state,
    transition_law,
)
from .rng import Xoshiro256StarStar, derive_replica_seed


def default_checkpoints(horizon: int) -> tuple[int, ...]:
    """Geometric grid ceil(2^(j/2)) for j >= 0, plus the horizon."""
    pts = {horizon}
    j = 0
    while True:
        v = math.ceil(2.0 ** (j / 2.0))
        if v > horizon:
            break
        pts.add(v)
        j += 1
    return tuple(sorted(pts))


def default_k_max_tracked(params: ModelParams, horizon: int) -> int:
    """ceil(horizon^(alpha/(2 alpha+4))): the provable range of sizes."""
    if params.regime is Regime.POLYNOMIAL:
        a = params.alpha
        return max(1, math.ceil(horizon ** (a / (2.0 * a + 4.0))))
    return 1


@dataclass(frozen=True)
class SimConfig:
    horizon_n: int
    checkpoints: tuple[int, ...]
    k_max_tracked: int
    seed: int
    replica_id: int = 0

    def __post_init__(self) -> None:
        if self.horizon_n < 1:
            raise DomainError("horizon_n must be >= 1")
        if self.k_max_tracked < 1:
            raise DomainError("k_max_tracked must be >= 1")
        cps = self.checkpoints
        if not cps or list(cps) != sorted(set(cps)):
            raise DomainError("checkpoints must be nonempty, sorted, unique")
        if cps[0] < 1 or cps[-1] > self.horizon_n:
            raise DomainError("checkpoints must lie in [1, horizon_n]")
        if self.replica_id < 0:
            raise DomainError("replica_id must be nonnegative")

    @classmethod
    def make(
        cls,
        params: ModelParams,
        horizon: int,
        seed: int,
        replica_id: int = 0,
        checkpoints: Iterable[int] | None = None,
        k_max_tracked: int | None = None,
    ) -> "SimConfig":
        cps = (
            tuple(sorted(set(int(c) for c in checkpoints)))
            if checkpoints is not None
            else default_checkpoints(horizon)
        )
        kmax = (
            int(k_max_tracked)
            if k_max_tracked is not None
            else default_k_max_tracked(params, horizon)
        )
        return cls(horizon, cps, kmax, seed, replica_id)


@dataclass(frozen=True)
class TrajectoryPoint:
    n: int
    num_parts: int
    counts: dict[int, int]  # sizes 1..k_max_tracked with positive count
    tail_count: int  # parts of size > k_max_tracked


@dataclass(frozen=True)
class Trajectory:
    params: ModelParams
    config: SimConfig
    points: tuple[TrajectoryPoint, ...]

    @property
    def final(self) -> TrajectoryPoint:
        return self.points[-1]


class StepObserver(Protocol):
    """Receives every step: the pre-move state, its law, the chosen move."""

    def on_step(self, state: SizeClassState, law: TransitionLaw, move: Move) -> None:
        ...


def _sample_move(law_new_w: float, tree: FenwickSampler, counts: dict[int, int],
                 max_size: int, u: float, denom: float) -> Move:
    # One uniform per step; same convention as the compiled kernels.
    target = u * denom
    if target < law_new_w:
        return NEW_PART
    sz = tree.prefix_search(target - law_new_w)
    if counts.get(sz, 0) == 0:
        down = sz - 1
        while down >= 1 and counts.get(down, 0) == 0:
            down -= 1
        if down >= 1:
            sz = down
        else:
            up = sz + 1
            while up <= max_size and counts.get(up, 0) == 0:
                up += 1
            sz = min(up, max_size)
    return JoinSize(sz)


def _simulate_python(
    params: ModelParams, config: SimConfig, observers: tuple[StepObserver, ...]
) -> Trajectory:
    a, t = params.alpha, params.theta
    horizon = config.horizon_n
    rng = Xoshiro256StarStar(derive_replica_seed(config.seed, config.replica_id))
    tree = FenwickSampler(horizon)
    state = initial_state()
    tree.add(1, 1.0 - a)
    max_size = 1

    cps = config.checkpoints
    ci = 0
    points: list[TrajectoryPoint] = []

    def record(st: SizeClassState) -> None:
        kept = {k: c for k, c in st.counts.items() if k <= config.k_max_tracked}
        tail = st.num_parts - sum(kept.values())
        points.append(TrajectoryPoint(st.n, st.num_parts, kept, tail))

    if cps[ci] == 1:
        record(state)
        ci += 1

    for step in range(1, horizon):
        denom = step + t
        wnew = a * state.num_parts + t
        if params.regime is Regime.BOUNDED_PARTS and state.num_parts >= params.m:
            wnew = 0.0
        u = rng.uniform()
        move = _sample_move(wnew, tree, state.counts, max_size, u, denom)
        if observers:
            law = transition_law(state, params)
            for obs in observers:
                obs.on_step(state, law, move)
        state = apply_move(state, move)
        if isinstance(move, NewPart):
            tree.add(1, 1.0 - a)
        else:
            tree.add(move.k, -(move.k - a))
            tree.add(move.k + 1, move.k + 1 - a)
            max_size = max(max_size, move.k + 1)
        if ci < len(cps) and step + 1 == cps[ci]:
            record(state)
            ci += 1
    return Trajectory(params=params, config=config, points=tuple(points))


def _simulate_kernel(params: ModelParams, config: SimConfig) -> Trajectory:
    horizon = config.horizon_n
    cps = np.asarray(config.checkpoints, dtype=np.int64)
    kmax = config.k_max_tracked
    counts = np.zeros(horizon + 2, dtype=np.int64)
    tree = np.zeros(horizon + 2, dtype=np.float64)
    cp_v = np.zeros(len(cps), dtype=np.int64)
    cp_hist = np.zeros((len(cps), kmax), dtype=np.int64)
    cp_tail = np.zeros(len(cps), dtype=np.int64)
    m_bound = params.m if params.regime is Regime.BOUNDED_PARTS else 0
    seed = np.uint64(derive_replica_seed(config.seed, config.replica_id))
    _kernels.sim_kernel(
        params.alpha, params.theta, m_bound, horizon, seed,
        cps, kmax, counts, tree, cp_v, cp_hist, cp_tail,
    )
    points = []
    for i, n in enumerate(config.checkpoints):
        kept = {k: int(cp_hist[i, k - 1]) for k in range(1, kmax + 1) if cp_hist[i, k - 1] > 0}
        points.append(TrajectoryPoint(n, int(cp_v[i]), kept, int(cp_tail[i])))
    return Trajectory(params=params, config=config, points=tuple(points))


def simulate(
    params: ModelParams,
    config: SimConfig,
    observers: Iterable[StepObserver] = (),
) -> Trajectory:
    """Run one replica; observers force the (slower) pure-Python path."""
    obs = tuple(observers)
    if obs:
        return _simulate_python(params, config, obs)
    return _simulate_kernel(params, config)
