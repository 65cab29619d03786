"""Problem descriptors, transactions, blocks, and the mining round-trip.

Block generation mirrors the miner's procedure: validate the announced
descriptor, assemble a transaction set (mempool selection plus the one
puzzle-fee transaction that pays this pool's manager), derive the instance
index from ``hash(merkle_root || prev_hash) mod z``, fetch and check the
instance, then run the pool solver under the epoch deadline. Verification
is the mirror image and rejects with a machine-readable reason code; an
epoch verifier keeps the best block seen and commits it at deadline.

All serialized forms use the canonical length-prefixed framing from
``wire``; serialize-deserialize-serialize is byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from . import graphs
from .clocks import VirtualClock, WallClock
from .crypto import AggregateSignature, digest, merkle_root, sign, verify
from .errors import (
    DecodeError,
    GenerationAbort,
    ParameterError,
    StoreError,
    ValidationError,
)
from .graphs import Graph, GraphProperties, properties
from .solver import CardinalityBound, DominatingSet, compute_bound, is_dominating
from .wire import Reader, Writer

__all__ = [
    "Reject",
    "ProblemDescriptor",
    "Transaction",
    "RewardTransaction",
    "DescriptorAnnouncement",
    "BlockHeader",
    "Block",
    "InstanceStore",
    "MemoryInstanceStore",
    "DirectoryInstanceStore",
    "publish_instances",
    "select_instance_index",
    "select_transactions",
    "puzzle_fee_transaction",
    "generate_block",
    "VerifyResult",
    "EpochContext",
    "verify_block",
    "EpochVerifier",
]


class Reject:
    """Rejection reason codes shared by verification, the CLI, and tests."""

    MERKLE_MISMATCH = "merkle-mismatch"
    DEADLINE = "deadline"
    STALE_ID = "stale-id"
    NOT_IMPROVING = "not-improving"
    BAD_DESCRIPTOR_SIG = "bad-descriptor-sig"
    BAD_COMMITTEE_SIG = "bad-committee-sig"
    BAD_INSTANCE_SIG = "bad-instance-sig"
    MISSING_INSTANCE = "missing-instance"
    PROPERTY_MISMATCH = "property-mismatch"
    BOUND_MISMATCH = "bound-mismatch"
    OVER_BOUND = "over-bound"
    INVALID_SOLUTION = "invalid-solution"
    UNCOVERED = "uncovered"

    ALL = (
        MERKLE_MISMATCH,
        DEADLINE,
        STALE_ID,
        NOT_IMPROVING,
        BAD_DESCRIPTOR_SIG,
        BAD_COMMITTEE_SIG,
        BAD_INSTANCE_SIG,
        MISSING_INSTANCE,
        PROPERTY_MISMATCH,
        BOUND_MISMATCH,
        OVER_BOUND,
        INVALID_SOLUTION,
        UNCOVERED,
    )


@dataclass(frozen=True)
class ProblemDescriptor:
    """The committee-audited problem tuple published for one epoch."""

    reward: int
    utility_pk: bytes
    n: int
    m: int
    delta_min: int
    delta_max: int
    z: int
    instance_addr: str
    t_max_ms: int

    def __post_init__(self):
        if self.z < 1:
            raise ParameterError("descriptor needs z >= 1")
        if self.t_max_ms <= 0:
            raise ParameterError("descriptor needs a positive block interval")

    def to_bytes(self) -> bytes:
        return (
            Writer()
            .put_u64(self.reward)
            .put_block(self.utility_pk)
            .put_u64(self.n)
            .put_u64(self.m)
            .put_u64(self.delta_min)
            .put_u64(self.delta_max)
            .put_u64(self.z)
            .put_str(self.instance_addr)
            .put_u64(self.t_max_ms)
            .getvalue()
        )

    @classmethod
    def read_from(cls, r: Reader) -> "ProblemDescriptor":
        return cls(
            reward=r.read_u64(),
            utility_pk=r.read_block(),
            n=r.read_u64(),
            m=r.read_u64(),
            delta_min=r.read_u64(),
            delta_max=r.read_u64(),
            z=r.read_u64(),
            instance_addr=r.read_str(),
            t_max_ms=r.read_u64(),
        )

    def digest(self) -> bytes:
        return digest(self.to_bytes())

    def graph_properties(self) -> GraphProperties:
        return GraphProperties(
            n=self.n,
            m=self.m,
            delta_min=self.delta_min,
            delta_max=self.delta_max,
            avg_degree=2.0 * self.m / self.n if self.n else 0.0,
        )

    def bound(self) -> CardinalityBound:
        return compute_bound(self.graph_properties())

    def matches_instance(self, g: Graph) -> bool:
        p = properties(g)
        return (p.n, p.m, p.delta_min, p.delta_max) == (
            self.n,
            self.m,
            self.delta_min,
            self.delta_max,
        )


KIND_NORMAL = 0
KIND_PUZZLE_FEE = 1


@dataclass(frozen=True)
class Transaction:
    """Pre-validated payload transaction; fees drive mempool selection."""

    kind: int
    fee: int
    payload: bytes

    def to_bytes(self) -> bytes:
        return Writer().put_u32(self.kind).put_u64(self.fee).put_block(self.payload).getvalue()

    @classmethod
    def read_from(cls, r: Reader) -> "Transaction":
        return cls(kind=r.read_u32(), fee=r.read_u64(), payload=r.read_block())

    def digest(self) -> bytes:
        return digest(self.to_bytes())

    @property
    def size(self) -> int:
        return len(self.to_bytes())


def puzzle_fee_transaction(reward_tx_hash: bytes, manager: str, amount: int) -> Transaction:
    """Spend of the epoch reward to one pool manager; unique per pool."""
    payload = Writer().put_block(reward_tx_hash).put_str(manager).getvalue()
    return Transaction(kind=KIND_PUZZLE_FEE, fee=0, payload=payload)


@dataclass(frozen=True)
class RewardTransaction:
    """Time-locked reward offer: claimable by the pool that presents the
    smallest dominating set once the lock expires; needs every committee
    signature plus the utility's."""

    descriptor_hash: bytes
    timelock_ms: int
    committee_pks: tuple[bytes, ...]
    utility_pk: bytes
    reward: int

    def to_bytes(self) -> bytes:
        w = (
            Writer()
            .put_block(self.descriptor_hash)
            .put_u64(self.timelock_ms)
            .put_u32(len(self.committee_pks))
        )
        for pk in self.committee_pks:
            w.put_block(pk)
        w.put_block(self.utility_pk)
        w.put_u64(self.reward)
        return w.getvalue()

    def digest(self) -> bytes:
        return digest(self.to_bytes())


@dataclass(frozen=True)
class DescriptorAnnouncement:
    """Descriptor plus its approvals, as broadcast to the pools."""

    descriptor: ProblemDescriptor
    instance_id: int
    sig_descriptor: bytes
    sig_committee: AggregateSignature


def committee_message(instance_id: int, descriptor_hash: bytes) -> bytes:
    """Byte string the committee members co-sign: id || H(descriptor)."""
    return instance_id.to_bytes(8, "big") + descriptor_hash


@dataclass(frozen=True)
class BlockHeader:
    prev_hash: bytes
    merkle_root: bytes
    solution: DominatingSet
    bound: float
    descriptor: ProblemDescriptor
    instance_id: int
    sig_descriptor: bytes
    sig_committee: AggregateSignature
    timestamp_ms: int

    @property
    def instance_addr(self) -> str:
        return self.descriptor.instance_addr

    def to_bytes(self) -> bytes:
        w = (
            Writer()
            .put_block(self.prev_hash)
            .put_block(self.merkle_root)
            .put_u32(len(self.solution.vertices))
        )
        for v in self.solution.vertices:
            w.put_u32(v)
        w.put_u64(self.solution.graph_n)
        w.put_f64(self.bound)
        w.put_block(self.descriptor.to_bytes())
        w.put_u64(self.instance_id)
        w.put_block(self.sig_descriptor)
        w.put_block(self.sig_committee.to_bytes())
        w.put_u64(self.timestamp_ms)
        return w.getvalue()

    @classmethod
    def read_from(cls, r: Reader) -> "BlockHeader":
        prev_hash = r.read_block()
        root = r.read_block()
        count = r.read_u32()
        verts = tuple(r.read_u32() for _ in range(count))
        graph_n = r.read_u64()
        bound = r.read_f64()
        desc_raw = r.read_block()
        dr = Reader(desc_raw)
        descriptor = ProblemDescriptor.read_from(dr)
        dr.expect_end()
        instance_id = r.read_u64()
        sig_descriptor = r.read_block()
        sig_committee = AggregateSignature.from_bytes(r.read_block())
        timestamp_ms = r.read_u64()
        try:
            solution = DominatingSet(verts, graph_n)
        except ValidationError as exc:
            raise DecodeError(f"malformed solution: {exc}") from exc
        return cls(
            prev_hash=prev_hash,
            merkle_root=root,
            solution=solution,
            bound=bound,
            descriptor=descriptor,
            instance_id=instance_id,
            sig_descriptor=sig_descriptor,
            sig_committee=sig_committee,
            timestamp_ms=timestamp_ms,
        )

    def block_digest(self) -> bytes:
        return digest(self.to_bytes())


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[Transaction, ...]

    def to_bytes(self) -> bytes:
        w = Writer().put_block(self.header.to_bytes()).put_u32(len(self.transactions))
        for tx in self.transactions:
            w.put_block(tx.to_bytes())
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Block":
        r = Reader(data)
        header_raw = r.read_block()
        hr = Reader(header_raw)
        header = BlockHeader.read_from(hr)
        hr.expect_end()
        count = r.read_u32()
        txs = []
        for _ in range(count):
            tx_raw = r.read_block()
            tr = Reader(tx_raw)
            txs.append(Transaction.read_from(tr))
            tr.expect_end()
        r.expect_end()
        return cls(header=header, transactions=tuple(txs))

    def digest(self) -> bytes:
        return self.header.block_digest()

    def puzzle_fee_count(self) -> int:
        return sum(1 for tx in self.transactions if tx.kind == KIND_PUZZLE_FEE)

    def total_fees(self) -> int:
        return sum(tx.fee for tx in self.transactions)


def serialize_block(block: Block) -> bytes:
    return block.to_bytes()


def deserialize_block(data: bytes) -> Block:
    return Block.from_bytes(data)


class InstanceStore:
    """Maps (descriptor hash, index) to a signed graph instance."""

    def put(self, descriptor_hash: bytes, index: int, g: Graph, sig: bytes) -> None:
        raise NotImplementedError

    def fetch(self, descriptor_hash: bytes, index: int) -> tuple[Graph, bytes]:
        raise NotImplementedError


class MemoryInstanceStore(InstanceStore):
    def __init__(self):
        self._items: dict[tuple[bytes, int], tuple[Graph, bytes]] = {}

    def put(self, descriptor_hash, index, g, sig):
        self._items[(descriptor_hash, int(index))] = (g, sig)

    def fetch(self, descriptor_hash, index):
        try:
            return self._items[(descriptor_hash, int(index))]
        except KeyError:
            raise StoreError(
                f"no instance {index} under descriptor {descriptor_hash.hex()[:12]}"
            ) from None


class DirectoryInstanceStore(InstanceStore):
    """Layout: <root>/<descriptor hex>/<index>.graph plus <index>.sig."""

    def __init__(self, root):
        self.root = Path(root)

    def _dir(self, descriptor_hash: bytes) -> Path:
        return self.root / descriptor_hash.hex()

    def put(self, descriptor_hash, index, g, sig):
        d = self._dir(descriptor_hash)
        d.mkdir(parents=True, exist_ok=True)
        graphs.write_graph(g, d / f"{index}.graph")
        (d / f"{index}.sig").write_text(sig.hex() + "\n")

    def fetch(self, descriptor_hash, index):
        d = self._dir(descriptor_hash)
        gpath = d / f"{index}.graph"
        spath = d / f"{index}.sig"
        if not gpath.exists() or not spath.exists():
            raise StoreError(f"no instance {index} under {d}")
        g = graphs.read_graph(gpath)
        sig = bytes.fromhex(spath.read_text().strip())
        return g, sig


def instance_signature(g: Graph, utility_sk: bytes) -> bytes:
    return sign(digest(graphs.graph_to_bytes(g)), utility_sk)


def verify_instance_signature(g: Graph, sig: bytes, utility_pk: bytes) -> bool:
    return verify(digest(graphs.graph_to_bytes(g)), sig, utility_pk)


def publish_instances(
    store: InstanceStore,
    descriptor: ProblemDescriptor,
    g: Graph,
    utility_sk: bytes,
    seed,
) -> list:
    """Create, sign, and store the z isomorphs; the permutations stay with
    the caller so winning solutions can be mapped back."""
    pool = graphs.make_instance_pool(g, descriptor.z, seed)
    dh = descriptor.digest()
    for idx, (iso, _) in enumerate(pool):
        store.put(dh, idx, iso, instance_signature(iso, utility_sk))
    return [perm for _, perm in pool]


def select_instance_index(mr: bytes, prev_hash: bytes, z: int) -> int:
    """index = hash(merkle_root || prev_hash) mod z, digest read big-endian."""
    if z < 1:
        raise ParameterError("z must be at least 1")
    return int.from_bytes(digest(mr + prev_hash), "big") % z


def select_transactions(
    mempool: Sequence[Transaction], byte_budget: int
) -> list[Transaction]:
    """Fee-density-descending selection under a byte budget."""
    ranked = sorted(
        mempool,
        key=lambda tx: (-(tx.fee / max(tx.size, 1)), tx.digest()),
    )
    chosen, used = [], 0
    for tx in ranked:
        if used + tx.size <= byte_budget:
            chosen.append(tx)
            used += tx.size
    return chosen


DEFAULT_TX_BYTE_BUDGET = 4096


def generate_block(
    announce: DescriptorAnnouncement,
    reward_tx: RewardTransaction,
    mempool: Sequence[Transaction],
    prev_hash: bytes,
    prev_instance_id: int,
    pool,
    store: InstanceStore,
    clock=None,
    *,
    byte_budget: int = DEFAULT_TX_BYTE_BUDGET,
) -> Block:
    """Mine one block; raises GenerationAbort with a reason on failure.

    ``pool`` must expose ``manager`` and
    ``solve(graph, deadline_ms, clock) -> (DominatingSet, ledger)``.
    """
    clock = clock or WallClock()
    desc = announce.descriptor
    start = clock.now_ms()
    if not verify(desc.digest(), announce.sig_descriptor, desc.utility_pk):
        raise GenerationAbort("reject-descriptor", "descriptor signature invalid")
    msg = committee_message(announce.instance_id, desc.digest())
    from .crypto import aggregate_verify

    if not announce.sig_committee.signer_pks or not aggregate_verify(
        announce.sig_committee, msg, announce.sig_committee.signer_pks
    ):
        raise GenerationAbort("reject-descriptor", "committee approval invalid")
    if announce.instance_id <= prev_instance_id:
        raise GenerationAbort(
            "reject-descriptor",
            f"instance id {announce.instance_id} not above {prev_instance_id}",
        )

    txs = select_transactions(mempool, byte_budget)
    txs.append(puzzle_fee_transaction(reward_tx.digest(), pool.manager, reward_tx.reward))
    txs = tuple(txs)
    root = merkle_root([tx.to_bytes() for tx in txs])
    index = select_instance_index(root, prev_hash, desc.z)

    try:
        instance, inst_sig = store.fetch(desc.digest(), index)
    except StoreError as exc:
        raise GenerationAbort("reject-instance", str(exc)) from exc
    if not verify_instance_signature(instance, inst_sig, desc.utility_pk):
        raise GenerationAbort("reject-instance", "instance signature invalid")
    if not desc.matches_instance(instance):
        raise GenerationAbort("reject-instance", "instance properties differ from descriptor")

    k = desc.bound().k
    deadline = start + desc.t_max_ms
    solution, _ledger = pool.solve(instance, deadline_ms=deadline, clock=clock)
    now = clock.now_ms()
    if now - start >= desc.t_max_ms:
        raise GenerationAbort("timeout", "deadline passed before a solution was found")
    if solution is None or len(solution) > k:
        raise GenerationAbort("timeout", "no bound-satisfying solution before the deadline")
    ok, _ = is_dominating(instance, solution)
    if not ok:
        raise GenerationAbort("timeout", "pool returned a non-dominating set")

    header = BlockHeader(
        prev_hash=prev_hash,
        merkle_root=root,
        solution=solution,
        bound=k,
        descriptor=desc,
        instance_id=announce.instance_id,
        sig_descriptor=announce.sig_descriptor,
        sig_committee=announce.sig_committee,
        timestamp_ms=now,
    )
    return Block(header=header, transactions=txs)


@dataclass(frozen=True)
class VerifyResult:
    accepted: bool
    reason: Optional[str] = None
    new_past_size: Optional[int] = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.accepted


@dataclass
class EpochContext:
    """What a verifier knows about the current epoch."""

    epoch_start_ms: int
    committee_pks: tuple[bytes, ...]
    quorum: int
    prev_hash: bytes
    prev_instance_id: int
    store: InstanceStore


def verify_block(
    block: Block,
    past_size: float,
    ctx: EpochContext,
    clock=None,
) -> VerifyResult:
    """Single-block verification; ``past_size`` is the best (smallest)
    cardinality accepted so far this epoch, infinity at epoch start."""
    clock = clock or WallClock()
    header = block.header
    desc = header.descriptor

    root = merkle_root([tx.to_bytes() for tx in block.transactions])
    if root != header.merkle_root or block.puzzle_fee_count() != 1:
        return VerifyResult(False, Reject.MERKLE_MISMATCH)
    if clock.now_ms() - ctx.epoch_start_ms >= desc.t_max_ms:
        return VerifyResult(False, Reject.DEADLINE)
    if header.instance_id <= ctx.prev_instance_id:
        return VerifyResult(False, Reject.STALE_ID)
    if len(header.solution) >= past_size:
        return VerifyResult(False, Reject.NOT_IMPROVING)
    if not verify(desc.digest(), header.sig_descriptor, desc.utility_pk):
        return VerifyResult(False, Reject.BAD_DESCRIPTOR_SIG)
    if not _committee_sig_ok(header, ctx):
        return VerifyResult(False, Reject.BAD_COMMITTEE_SIG)

    index = select_instance_index(header.merkle_root, header.prev_hash, desc.z)
    try:
        instance, inst_sig = ctx.store.fetch(desc.digest(), index)
    except StoreError:
        return VerifyResult(False, Reject.MISSING_INSTANCE)
    if not verify_instance_signature(instance, inst_sig, desc.utility_pk):
        return VerifyResult(False, Reject.BAD_INSTANCE_SIG)
    if not desc.matches_instance(instance):
        return VerifyResult(False, Reject.PROPERTY_MISMATCH)

    expected_k = desc.bound().k
    if header.bound != expected_k:
        return VerifyResult(False, Reject.BOUND_MISMATCH)
    if len(header.solution) > expected_k:
        return VerifyResult(False, Reject.OVER_BOUND)

    try:
        ok, uncovered = is_dominating(instance, header.solution)
    except ValidationError as exc:
        return VerifyResult(False, Reject.INVALID_SOLUTION, detail=str(exc))
    if not ok:
        return VerifyResult(
            False, Reject.UNCOVERED, detail=f"uncovered: {uncovered[:5]}"
        )
    return VerifyResult(True, new_past_size=len(header.solution))


def _committee_sig_ok(header: BlockHeader, ctx: EpochContext) -> bool:
    from .crypto import aggregate_verify

    agg = header.sig_committee
    signers = agg.signer_pks
    if len(signers) < ctx.quorum:
        return False
    if len(set(signers)) != len(signers):
        return False
    if not set(signers) <= set(ctx.committee_pks):
        return False
    msg = committee_message(header.instance_id, header.descriptor.digest())
    return aggregate_verify(agg, msg, signers)


class EpochVerifier:
    """Caches the best block of the epoch; commit the winner at deadline."""

    def __init__(self, ctx: EpochContext, clock=None):
        self.ctx = ctx
        self.clock = clock or WallClock()
        self.past_size = math.inf
        self.best_block: Optional[Block] = None
        self.accepted_count = 0

    def verify(self, block: Block) -> VerifyResult:
        result = verify_block(block, self.past_size, self.ctx, self.clock)
        if result.accepted:
            self.past_size = result.new_past_size
            self.best_block = block
            self.accepted_count += 1
        return result

    def finalize(self) -> Optional[Block]:
        return self.best_block
