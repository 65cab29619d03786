"""Block tree, the work-done chain-selection rule, and confirmation depth.

Work done per block is ``m * n * (bound / |S|)`` with the graph figures
taken from the committee-signed descriptor. The adopted tip maximizes
cumulative work among structurally valid chains; exact ties keep the
first-seen chain. A chain is structurally valid when every block's
instance id strictly exceeds its parent's and its committee signature
checks out; chains violating either are discarded before any comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

from .errors import ParameterError, ValidationError
from .protocol import Block
from .solver import compute_bound

__all__ = ["work_done", "BlockRecord", "ReorgInfo", "AddResult", "ChainState"]

GENESIS_ID = 0
DEFAULT_CONFIRMATION_DEPTH = 6


def work_done(block: Block) -> float:
    """WD = m * n * (bound / |S|), descriptor figures, header solution."""
    header = block.header
    size = len(header.solution)
    if size == 0:
        raise ValidationError("work requires a nonempty solution")
    desc = header.descriptor
    k = compute_bound(desc.graph_properties()).k
    return desc.m * desc.n * (k / size)


@dataclass
class BlockRecord:
    block: Optional[Block]
    digest: bytes
    parent: Optional[bytes]
    height: int
    instance_id: int
    work: float
    cumulative_work: float
    seq: int
    miner: str = ""


@dataclass(frozen=True)
class ReorgInfo:
    depth: int
    reverted_committed: bool


@dataclass(frozen=True)
class AddResult:
    status: str  # "adopted" | "side" | "orphaned" | "rejected"
    reason: Optional[str] = None
    reorg: Optional[ReorgInfo] = None


class ChainState:
    """Single node's view of the block tree and its adopted chain."""

    def __init__(
        self,
        genesis_digest: bytes,
        f: int = DEFAULT_CONFIRMATION_DEPTH,
        sig_checker: Optional[Callable[[Block], bool]] = None,
    ):
        if f < 0:
            raise ParameterError("confirmation depth must be nonnegative")
        self.f = f
        self.sig_checker = sig_checker
        genesis = BlockRecord(
            block=None,
            digest=genesis_digest,
            parent=None,
            height=0,
            instance_id=GENESIS_ID,
            work=0.0,
            cumulative_work=0.0,
            seq=0,
        )
        self.records: dict[bytes, BlockRecord] = {genesis_digest: genesis}
        self.tip: bytes = genesis_digest
        self._seq = 0
        self._orphans: dict[bytes, tuple[Block, str, int]] = {}
        self._committed: dict[int, bytes] = {0: genesis_digest}
        self.reversions = 0

    # -- queries ---------------------------------------------------------

    @property
    def tip_record(self) -> BlockRecord:
        return self.records[self.tip]

    @property
    def height(self) -> int:
        return self.tip_record.height

    def committed_height(self) -> int:
        return max(self.height - self.f, 0)

    def record(self, digest: bytes) -> BlockRecord:
        return self.records[digest]

    def iter_adopted(self) -> Iterator[BlockRecord]:
        chain = []
        cursor: Optional[bytes] = self.tip
        while cursor is not None:
            rec = self.records[cursor]
            chain.append(rec)
            cursor = rec.parent
        return iter(reversed(chain))

    def adopted_digest_at(self, height: int) -> Optional[bytes]:
        for rec in self.iter_adopted():
            if rec.height == height:
                return rec.digest
        return None

    def export_log(self) -> str:
        lines = ["height,digest,instance_id,solution_size,work_done,cumulative_work\n"]
        for rec in self.iter_adopted():
            size = len(rec.block.header.solution) if rec.block else 0
            lines.append(
                f"{rec.height},{rec.digest.hex()},{rec.instance_id},{size},"
                f"{rec.work:.6f},{rec.cumulative_work:.6f}\n"
            )
        return "".join(lines)

    # -- updates ---------------------------------------------------------

    def add_block(self, block: Block, miner: str = "") -> AddResult:
        digest = block.digest()
        if digest in self.records:
            return AddResult("rejected", reason="duplicate")
        parent_digest = block.header.prev_hash
        if parent_digest not in self.records:
            self._orphans[digest] = (block, miner, self.height)
            self._prune_orphans()
            return AddResult("orphaned")

        result = self._attach(block, miner, parent_digest)
        if result.status == "rejected":
            return result
        result = self._retry_orphans(result)
        self._prune_orphans()
        return result

    def _attach(self, block: Block, miner: str, parent_digest: bytes) -> AddResult:
        parent = self.records[parent_digest]
        if block.header.instance_id <= parent.instance_id:
            return AddResult("rejected", reason="stale-id")
        if self.sig_checker is not None and not self.sig_checker(block):
            return AddResult("rejected", reason="bad-committee-sig")
        self._seq += 1
        wd = work_done(block)
        rec = BlockRecord(
            block=block,
            digest=block.digest(),
            parent=parent_digest,
            height=parent.height + 1,
            instance_id=block.header.instance_id,
            work=wd,
            cumulative_work=parent.cumulative_work + wd,
            seq=self._seq,
            miner=miner,
        )
        self.records[rec.digest] = rec
        return self._maybe_adopt(rec)

    def _maybe_adopt(self, rec: BlockRecord) -> AddResult:
        tip = self.tip_record
        # strict improvement required: equal cumulative work keeps first-seen
        if rec.cumulative_work <= tip.cumulative_work:
            return AddResult("side")
        if rec.parent == tip.digest:
            self.tip = rec.digest
            self._mark_committed()
            return AddResult("adopted", reorg=ReorgInfo(0, False))
        fork_height = self._fork_height(rec)
        depth = tip.height - fork_height
        reverted = False
        committed_before = self.committed_height()
        if fork_height < committed_before:
            reverted = True
            self.reversions += 1
        self.tip = rec.digest
        self._mark_committed()
        return AddResult("adopted", reorg=ReorgInfo(depth, reverted))

    def _fork_height(self, rec: BlockRecord) -> int:
        on_adopted = {r.digest for r in self.iter_adopted()}
        cursor: Optional[bytes] = rec.digest
        while cursor is not None:
            if cursor in on_adopted:
                return self.records[cursor].height
            cursor = self.records[cursor].parent
        return 0

    def _mark_committed(self):
        for rec in self.iter_adopted():
            if rec.height <= self.committed_height():
                self._committed[rec.height] = rec.digest

    def committed_digest(self, height: int) -> Optional[bytes]:
        return self._committed.get(height)

    def _retry_orphans(self, last: AddResult) -> AddResult:
        progressed = True
        while progressed:
            progressed = False
            for digest, (block, miner, _) in list(self._orphans.items()):
                if block.header.prev_hash in self.records:
                    del self._orphans[digest]
                    res = self._attach(block, miner, block.header.prev_hash)
                    if res.status == "adopted":
                        last = res
                    progressed = True
        return last

    def _prune_orphans(self):
        horizon = 2 * self.f
        self._orphans = {
            d: (b, m, h)
            for d, (b, m, h) in self._orphans.items()
            if self.height - h <= horizon
        }

    def adopt_candidate_chain(self, blocks: list[Block], miner: str = "") -> AddResult:
        """Offer a whole side chain (oldest first).

        The chain is structurally validated end to end before anything is
        inserted: one stale id or bad committee signature anywhere discards
        the entire offer, so no prefix of a tainted chain can win adoption.
        """
        if not blocks:
            return AddResult("side")
        expected_parent = blocks[0].header.prev_hash
        if expected_parent not in self.records:
            return AddResult("orphaned")
        prev_id = self.records[expected_parent].instance_id
        for block in blocks:
            if block.header.prev_hash != expected_parent:
                return AddResult("rejected", reason="broken-linkage")
            if block.header.instance_id <= prev_id:
                return AddResult("rejected", reason="stale-id")
            if self.sig_checker is not None and not self.sig_checker(block):
                return AddResult("rejected", reason="bad-committee-sig")
            expected_parent = block.digest()
            prev_id = block.header.instance_id
        last = AddResult("side")
        for block in blocks:
            if block.digest() in self.records:
                continue
            result = self.add_block(block, miner)
            if result.status == "adopted":
                last = result
        return last
