"""Mining-pool orchestration: vertex partitioning, contribution tracking,
free-rider detection, and proportional reward distribution.

Participation is tracked at round barriers: a miner that stays silent for
a round is marked as having missed it, and its vertices are re-spread over
the healthy miners so the solve still completes. Because the solver's
output does not depend on the partition, a pool degraded this way still
produces the exact same dominating set.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ParameterError
from .graphs import Graph
from .solver import DistributedResult, DominatingSet, greedy_distributed

logger = logging.getLogger(__name__)

__all__ = [
    "PoolConfig",
    "MinerStats",
    "ContributionLedger",
    "partition_vertices",
    "run_pool_solve",
    "PoolSolveResult",
    "detect_free_riders",
    "Payouts",
    "distribute_reward",
    "MiningPool",
]

STRATEGY_CONTIGUOUS = "contiguous"
STRATEGY_DEGREE_BALANCED = "degree-balanced"
DEFAULT_MISSED_ROUND_THRESHOLD = 0.1


@dataclass(frozen=True)
class PoolConfig:
    pool_id: str
    manager: str
    miners: tuple[str, ...]
    strategy: str = STRATEGY_CONTIGUOUS

    def __post_init__(self):
        if not self.miners:
            raise ParameterError("a pool needs at least one miner")
        if self.strategy not in (STRATEGY_CONTIGUOUS, STRATEGY_DEGREE_BALANCED):
            raise ParameterError(f"unknown partition strategy {self.strategy!r}")


def partition_vertices(g: Graph, miners: int, strategy: str = STRATEGY_CONTIGUOUS) -> np.ndarray:
    """Assignment array mapping every vertex to a miner index."""
    if miners < 1:
        raise ParameterError("need at least one miner")
    if strategy == STRATEGY_CONTIGUOUS:
        sizes = [len(chunk) for chunk in np.array_split(np.arange(g.n), miners)]
        return np.repeat(np.arange(miners, dtype=np.int64), sizes)
    if strategy != STRATEGY_DEGREE_BALANCED:
        raise ParameterError(f"unknown partition strategy {strategy!r}")
    # longest-processing-time: heaviest closed neighborhoods first, each to
    # the currently lightest miner
    deg = g.degrees
    order = np.lexsort((np.arange(g.n), -deg))
    assignment = np.empty(g.n, dtype=np.int64)
    heap = [(0, w) for w in range(miners)]
    heapq.heapify(heap)
    for v in order:
        load, w = heapq.heappop(heap)
        assignment[v] = w
        heapq.heappush(heap, (load + int(deg[v]) + 1, w))
    return assignment


@dataclass
class MinerStats:
    miner: str
    assigned: int
    rounds_reported: int = 0
    rounds_missed: int = 0
    admitted: int = 0

    @property
    def missed_fraction(self) -> float:
        total = self.rounds_reported + self.rounds_missed
        return self.rounds_missed / total if total else 0.0


@dataclass
class ContributionLedger:
    rounds: int
    stats: dict[str, MinerStats]

    def to_csv(self, payouts: Optional["Payouts"] = None) -> str:
        lines = ["miner,assigned,reported,missed,admitted,payout\n"]
        for miner in sorted(self.stats):
            s = self.stats[miner]
            pay = "" if payouts is None else str(payouts.per_miner.get(miner, 0))
            lines.append(
                f"{miner},{s.assigned},{s.rounds_reported},{s.rounds_missed},"
                f"{s.admitted},{pay}\n"
            )
        return "".join(lines)


@dataclass
class PoolSolveResult:
    solution: DominatingSet
    ledger: ContributionLedger
    solver: DistributedResult


def _reassign_silent(partition: np.ndarray, silent_idx: set[int], healthy: list[int]) -> np.ndarray:
    """Spread a silent miner's vertices round-robin over healthy miners."""
    out = partition.copy()
    orphaned = np.nonzero(np.isin(partition, list(silent_idx)))[0]
    for pos, v in enumerate(orphaned):
        out[v] = healthy[pos % len(healthy)]
    return out


def run_pool_solve(
    g: Graph,
    config: PoolConfig,
    deadline_ms: Optional[int] = None,
    clock=None,
    silent: Iterable[str] = (),
    *,
    use_processes: bool = False,
    max_rounds: Optional[int] = None,
) -> PoolSolveResult:
    """Distributed solve over the pool's miners with a contribution ledger.

    ``silent`` miners send nothing: every round counts against them as
    missed, and the manager reassigns their vertices so the result is the
    same dominating set a fully healthy pool computes.
    """
    miners = list(config.miners)
    silent_set = set(silent)
    unknown = silent_set - set(miners)
    if unknown:
        raise ParameterError(f"silent miners not in pool: {sorted(unknown)}")
    partition = partition_vertices(g, len(miners), config.strategy)
    assigned_counts = np.bincount(partition, minlength=len(miners))

    silent_idx = {miners.index(s) for s in silent_set}
    healthy = [i for i in range(len(miners)) if i not in silent_idx]
    if not healthy:
        raise ParameterError("every miner in the pool is silent")
    effective = (
        partition if not silent_idx else _reassign_silent(partition, silent_idx, healthy)
    )

    should_stop = None
    if deadline_ms is not None and clock is not None:
        should_stop = lambda: clock.now_ms() >= deadline_ms  # noqa: E731

    result = greedy_distributed(
        g,
        workers=len(miners),
        partition=effective,
        should_stop=should_stop,
        max_rounds=max_rounds,
        use_processes=use_processes,
    )
    if not result.completed:
        logger.warning(
            "pool %s stopped early after %d rounds; returning best-so-far",
            config.pool_id,
            result.rounds,
        )

    stats = {
        m: MinerStats(miner=m, assigned=int(assigned_counts[i]))
        for i, m in enumerate(miners)
    }
    admitted_by_worker = np.zeros(len(miners), dtype=np.int64)
    for report in result.contributions:
        admitted_by_worker[report.worker] += report.admitted
    for i, m in enumerate(miners):
        if i in silent_idx:
            stats[m].rounds_missed = result.rounds
        else:
            stats[m].rounds_reported = result.rounds
            stats[m].admitted = int(admitted_by_worker[i])
    ledger = ContributionLedger(rounds=result.rounds, stats=stats)
    return PoolSolveResult(solution=result.solution, ledger=ledger, solver=result)


def detect_free_riders(
    ledger: ContributionLedger,
    threshold: float = DEFAULT_MISSED_ROUND_THRESHOLD,
) -> list[str]:
    """Miners whose missed-round fraction exceeds the threshold."""
    return sorted(
        m for m, s in ledger.stats.items() if s.missed_fraction > threshold
    )


@dataclass
class Payouts:
    per_miner: dict[str, int]
    manager: str
    manager_amount: int
    escrowed: bool = False

    @property
    def total(self) -> int:
        return sum(self.per_miner.values()) + self.manager_amount


def distribute_reward(
    reward: int,
    ledger: ContributionLedger,
    flagged: Sequence[str],
    manager: str,
) -> Payouts:
    """Split the reward by assigned-vertex share weighted by reported-round
    fraction; flagged miners get nothing, integer remainders go to the
    manager, and the whole amount is escrowed when nobody qualifies."""
    if reward < 0:
        raise ParameterError("reward must be nonnegative")
    flagged_set = set(flagged)
    weights: dict[str, float] = {}
    for miner, s in ledger.stats.items():
        if miner in flagged_set:
            continue
        total_rounds = s.rounds_reported + s.rounds_missed
        reported_fraction = s.rounds_reported / total_rounds if total_rounds else 1.0
        weights[miner] = s.assigned * reported_fraction
    total_weight = sum(weights.values())
    if total_weight <= 0:
        logger.warning("no contributing miners; escrowing reward to manager")
        return Payouts(
            per_miner={m: 0 for m in ledger.stats},
            manager=manager,
            manager_amount=reward,
            escrowed=True,
        )
    per_miner = {
        m: int(reward * w / total_weight) for m, w in weights.items()
    }
    for m in ledger.stats:
        per_miner.setdefault(m, 0)
    remainder = reward - sum(per_miner.values())
    return Payouts(
        per_miner=per_miner,
        manager=manager,
        manager_amount=remainder,
    )


class MiningPool:
    """Facade used during block generation.

    ``cost_model`` maps a solve result to virtual milliseconds; when set
    and the clock supports ``advance``, solving moves the clock, which is
    how the simulator charges generation time deterministically.
    """

    def __init__(
        self,
        config: PoolConfig,
        *,
        use_processes: bool = False,
        cost_model=None,
        silent: Iterable[str] = (),
    ):
        self.config = config
        self.use_processes = use_processes
        self.cost_model = cost_model
        self.silent = tuple(silent)
        self.last_result: Optional[PoolSolveResult] = None

    @property
    def manager(self) -> str:
        return self.config.manager

    def solve(self, graph: Graph, deadline_ms=None, clock=None):
        result = run_pool_solve(
            graph,
            self.config,
            deadline_ms=deadline_ms,
            clock=clock if self.cost_model is None else None,
            silent=self.silent,
            use_processes=self.use_processes,
        )
        self.last_result = result
        if self.cost_model is not None and clock is not None and hasattr(clock, "advance"):
            clock.advance(int(self.cost_model(result)))
        return result.solution, result.ledger
