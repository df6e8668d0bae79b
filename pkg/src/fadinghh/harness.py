"""Parallel ingestion and reduction.

The dataset is split into contiguous blocks, each worker builds a local sketch
of its block, and the local counts and sketches are reduced along a binary
tree rooted at worker 0, which answers the query. Children always fold into
the lower-indexed parent, so floating-point results are deterministic for a
given worker count.
"""

from __future__ import annotations

import logging
import queue
import socket
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, TypeVar

import numpy as np

from .merge import IncompatibleSketch, merge_sketch
from .sketch import HeavyHitterReport, Sketch, SketchConfig
from .transport import (
    InProcessNetwork,
    TcpNetwork,
    TransportError,
    parse_address,
    read_exact,
    recv_frame,
    send_frame,
)
from .wire import deserialize, serialize

log = logging.getLogger(__name__)

T = TypeVar("T")
_F64 = struct.Struct("<d")

COORDINATOR = 0


class WorkerError(RuntimeError):
    def __init__(self, worker: int, cause: BaseException):
        super().__init__(f"worker {worker} failed: {cause!r}")
        self.worker = worker


@dataclass(frozen=True)
class Partition:
    worker: int
    start: int
    end: int

    def __len__(self):
        return self.end - self.start


def partition(n: int, p: int) -> list[Partition]:
    """Order-preserving 1D blocks; the first ``n % p`` blocks get one extra record."""
    if p < 1:
        raise ValueError(f"worker count must be positive, got {p}")
    if n < 0:
        raise ValueError(f"record count must be non-negative, got {n}")
    base, extra = divmod(n, p)
    parts, start = [], 0
    for i in range(p):
        end = start + base + (1 if i < extra else 0)
        parts.append(Partition(i, start, end))
        start = end
    return parts


@dataclass(frozen=True)
class ReductionPlan:
    """Binary reduction tree over ``size`` workers rooted at worker 0.

    Round ``r`` pairs parent ``i`` (a multiple of ``2**(r+1)``) with child
    ``i + 2**r``.
    """

    size: int
    root: int = COORDINATOR

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("a reduction needs at least one worker")
        if self.root != COORDINATOR:
            raise ValueError("only worker 0 can be the root")

    @property
    def rounds(self) -> list[list[tuple[int, int]]]:
        out = []
        step = 1
        while step < self.size:
            out.append([(i, i + step) for i in range(0, self.size, 2 * step) if i + step < self.size])
            step *= 2
        return out

    def parent(self, rank: int) -> int | None:
        for pairs in self.rounds:
            for parent, child in pairs:
                if child == rank:
                    return parent
        return None


def tree_reduce(values: Sequence[T], op: Callable[[T, T], T], plan: ReductionPlan | None = None) -> T:
    """Fold ``values`` in the order a message-passing reduction would."""
    plan = plan or ReductionPlan(len(values))
    if plan.size != len(values):
        raise ValueError(f"plan covers {plan.size} workers but {len(values)} values given")
    acc = list(values)
    for pairs in plan.rounds:
        for parent, child in pairs:
            acc[parent] = op(acc[parent], acc[child])
    return acc[plan.root]


def reduce_counts(local_counts: Sequence[float], epochs: Sequence[int] | None = None,
                  plan: ReductionPlan | None = None) -> float:
    if epochs is not None and len(set(epochs)) > 1:
        raise IncompatibleSketch(f"local counts come from different scale epochs {sorted(set(epochs))}")
    return tree_reduce([float(c) for c in local_counts], lambda a, b: a + b, plan)


def reduce_sketches(sketches: Sequence[Sketch], plan: ReductionPlan | None = None) -> Sketch:
    return tree_reduce(list(sketches), merge_sketch, plan)


def synchronize_epochs(sketches: Sequence[Sketch]) -> int:
    """Barrier rebase: bring every sketch to the latest scale epoch among them."""
    target = max(s.scale_epoch for s in sketches)
    for s in sketches:
        s.rebase_to(target)
    return target


def run_workers(items: np.ndarray, timestamps: np.ndarray, partitions: Sequence[Partition],
                config: SketchConfig, max_threads: int | None = None) -> list[Sketch]:
    """Build one sketch per partition concurrently (the compiled kernels release the GIL)."""
    items = np.ascontiguousarray(items, dtype=np.uint64)
    timestamps = np.ascontiguousarray(timestamps, dtype=np.float64)

    def work(part: Partition) -> Sketch:
        sketch = Sketch(config)
        sketch.process_many(items[part.start:part.end], timestamps[part.start:part.end])
        return sketch

    if len(partitions) == 1:
        try:
            return [work(partitions[0])]
        except Exception as exc:
            raise WorkerError(partitions[0].worker, exc) from exc
    with ThreadPoolExecutor(max_workers=max_threads or len(partitions)) as pool:
        futures = [pool.submit(work, part) for part in partitions]
        out = []
        for part, fut in zip(partitions, futures):
            try:
                out.append(fut.result())
            except Exception as exc:
                for f in futures:
                    f.cancel()
                raise WorkerError(part.worker, exc) from exc
    return out


def _make_network(kind: str, size: int):
    if kind == "inproc":
        return InProcessNetwork(size)
    if kind == "tcp":
        return TcpNetwork(size)
    raise ValueError(f"unknown transport {kind!r}")


def message_passing_reduce(sketches: Sequence[Sketch], transport: str = "inproc") -> tuple[Sketch, float]:
    """Reduce counts then sketches over a real transport, one thread per worker.

    Every message is a serialized payload, so worker sketches never share
    memory. Returns ``(global sketch, raw global count)`` from the root.
    """
    plan = ReductionPlan(len(sketches))
    if plan.size == 1:
        return sketches[0], float(sketches[0].local_count)
    network = _make_network(transport, plan.size)
    results: dict[int, tuple[Sketch, float]] = {}
    errors: list[BaseException] = []

    def worker(rank: int) -> None:
        ep = network.endpoint(rank)
        try:
            count = float(sketches[rank].local_count)
            sketch = sketches[rank]
            for pairs in plan.rounds:
                for parent, child in pairs:
                    if rank == parent:
                        count = count + _F64.unpack(ep.recv(child))[0]
                    elif rank == child:
                        ep.send(parent, _F64.pack(count))
            for pairs in plan.rounds:
                for parent, child in pairs:
                    if rank == parent:
                        sketch = merge_sketch(sketch, deserialize(ep.recv(child)))
                    elif rank == child:
                        ep.send(parent, serialize(sketch))
            if rank == plan.root:
                results[rank] = (sketch, count)
        except BaseException as exc:  # surfaced by the caller
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(r,), name=f"reduce-{r}") for r in range(plan.size)]
    try:
        for th in threads:
            th.start()
        for th in threads:
            th.join()
    finally:
        network.close()
    if errors:
        raise errors[0]
    return results[plan.root]


def coordinator_query(global_sketch: Sketch, gcount_raw: float, t: float | None = None,
                      phi: float | None = None) -> HeavyHitterReport:
    return global_sketch.query(t=t, gcount_raw=gcount_raw, phi=phi)


@dataclass
class ParallelResult:
    sketch: Sketch
    gcount_raw: float
    workers: int
    records: int
    ingest_seconds: float
    reduce_seconds: float
    local_counts: list[float] = field(default_factory=list)

    def query(self, t: float | None = None, phi: float | None = None) -> HeavyHitterReport:
        return coordinator_query(self.sketch, self.gcount_raw, t, phi)


def run_parallel(items: np.ndarray, timestamps: np.ndarray, config: SketchConfig, workers: int = 1,
                 transport: str | None = None) -> ParallelResult:
    """Partition, ingest concurrently, rebase-barrier, then reduce.

    ``transport=None`` reduces by direct tree folding in this process; the
    ``"inproc"`` and ``"tcp"`` back-ends pass serialized messages and give
    bit-identical results.
    """
    items = np.ascontiguousarray(items, dtype=np.uint64)
    parts = partition(items.shape[0], workers)
    t0 = time.perf_counter()
    local = run_workers(items, timestamps, parts, config)
    t1 = time.perf_counter()
    synchronize_epochs(local)
    counts = [s.local_count for s in local]
    if transport is None:
        plan = ReductionPlan(workers)
        gcount = reduce_counts(counts, [s.scale_epoch for s in local], plan)
        merged = reduce_sketches(local, plan)
    else:
        merged, gcount = message_passing_reduce(local, transport)
    t2 = time.perf_counter()
    log.debug("p=%d ingest %.3fs reduce %.3fs", workers, t1 - t0, t2 - t1)
    return ParallelResult(merged, gcount, workers, items.shape[0], t1 - t0, t2 - t1, counts)


# -- online mode ---------------------------------------------------------------


@dataclass
class OnlineSnapshot:
    sketch: Sketch
    gcount_raw: float
    processed: list[int]

    def query(self, t: float | None = None, phi: float | None = None) -> HeavyHitterReport:
        return coordinator_query(self.sketch, self.gcount_raw, t, phi)


class OnlineCluster:
    """Workers ingesting their own streams, queried by snapshot.

    Each worker thread owns its sketch and drains an inbox of record batches.
    A query message makes every worker copy its sketch between batches and
    carry on ingesting while the copies are reduced.
    """

    def __init__(self, config: SketchConfig, workers: int, transport: str = "inproc"):
        self.config = config
        self.workers = workers
        self.transport = transport
        self._inboxes = [queue.Queue() for _ in range(workers)]
        self._threads = [
            threading.Thread(target=self._ingest, args=(r,), name=f"ingest-{r}", daemon=True)
            for r in range(workers)
        ]
        self._failures: dict[int, BaseException] = {}
        for th in self._threads:
            th.start()

    def _ingest(self, rank: int) -> None:
        sketch = Sketch(self.config)
        processed = 0
        inbox = self._inboxes[rank]
        while True:
            kind, payload = inbox.get()
            if kind == "data":
                if rank in self._failures:
                    continue
                try:
                    sketch.process_many(*payload)
                    processed += len(payload[0])
                except Exception as exc:
                    self._failures[rank] = exc
            elif kind == "snapshot":
                payload.put((rank, sketch.copy(), processed))
            elif kind == "stop":
                return

    def feed(self, worker: int, items: np.ndarray, timestamps: np.ndarray) -> None:
        self._inboxes[worker].put(("data", (np.asarray(items, dtype=np.uint64),
                                            np.asarray(timestamps, dtype=np.float64))))

    def snapshot(self) -> OnlineSnapshot:
        replies: queue.Queue = queue.Queue()
        for inbox in self._inboxes:
            inbox.put(("snapshot", replies))
        got = sorted((replies.get() for _ in range(self.workers)), key=lambda r: r[0])
        if self._failures:
            rank = min(self._failures)
            raise WorkerError(rank, self._failures[rank])
        copies = [s for _, s, _ in got]
        synchronize_epochs(copies)
        merged, gcount = message_passing_reduce(copies, self.transport)
        return OnlineSnapshot(merged, gcount, [n for _, _, n in got])

    def close(self) -> None:
        for inbox in self._inboxes:
            inbox.put(("stop", None))
        for th in self._threads:
            th.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- multi-process TCP mode ----------------------------------------------------


def submit_to_coordinator(address: str, rank: int, sketch: Sketch, timeout: float = 60.0) -> None:
    """Ship a worker's local sketch to a coordinator started with :func:`serve_coordinator`."""
    with socket.create_connection(parse_address(address), timeout=timeout) as sock:
        send_frame(sock, rank, serialize(sketch))
        read_exact(sock, 1)


def serve_coordinator(address: str, workers: int, timeout: float = 300.0,
                      ready: threading.Event | None = None) -> tuple[Sketch, float]:
    """Collect ``workers`` sketches over TCP and reduce them in tree order."""
    received: dict[int, Sketch] = {}
    with socket.create_server(parse_address(address)) as server:
        server.settimeout(timeout)
        if ready is not None:
            ready.set()
        while len(received) < workers:
            try:
                conn, _ = server.accept()
            except socket.timeout:
                raise TransportError(f"coordinator got {len(received)} of {workers} sketches") from None
            with conn:
                conn.settimeout(timeout)
                rank, payload = recv_frame(conn)
                if not 0 <= rank < workers or rank in received:
                    raise TransportError(f"unexpected sketch from rank {rank}")
                received[rank] = deserialize(payload)
                conn.sendall(b"\x01")
    local = [received[r] for r in range(workers)]
    synchronize_epochs(local)
    plan = ReductionPlan(workers)
    gcount = reduce_counts([s.local_count for s in local], [s.scale_epoch for s in local], plan)
    return reduce_sketches(local, plan), gcount
