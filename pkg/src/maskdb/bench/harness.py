"""Storage and cost benchmarks.

Storage scenarios run against two targets holding the same payloads:
``blob`` (append-only segments behind a tiered cache) and ``inline``
(payloads stored as values of the ordered metadata store). Absolute
numbers depend on the machine; the report carries the environment it
was measured on.

Cold reads drop the in-process cache tiers before every read. The OS
page cache is not controlled. The report pairs every cold-read median
with its hot-read counterpart.

"""
from __future__ import annotations

import csv
import json
import logging
import os
import platform
import sys
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from functools import partial
from pathlib import Path
from typing import Any
from typing import Callable
from typing import Dict
from typing import Iterable
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np

from maskdb.auth.keyring import Keyring
from maskdb.auth.tokens import OwnerKeypair
from maskdb.bench.cost import CostEstimate
from maskdb.bench.cost import estimate_client_time
from maskdb.bench.cost import estimate_server_time
from maskdb.bench.cost import predict_pir
from maskdb.bench.cost import verify_cost_model
from maskdb.bench.workload import sample_keys
from maskdb.bench.workload import WorkloadSpec
from maskdb.client.session import ClientSession
from maskdb.client.transport import LocalTransport
from maskdb.crypto.base import Backend
from maskdb.crypto.latency import LatencyTable
from maskdb.engine.executor import QueryEngine
from maskdb.exceptions import ChecksumError
from maskdb.storage.blobs import BlobHash
from maskdb.storage.blobs import BlobStore
from maskdb.storage.cache import TieredCache
from maskdb.storage.hybrid import HybridStore
from maskdb.storage.inline import InlineStore
from maskdb.storage.metadata import Backend as MetadataBackend
from maskdb.types import ColumnDef
from maskdb.utils.logs import make_logger
from maskdb.utils.logs import release_logger

logger = logging.getLogger(__name__)

TARGETS = ("blob", "inline")
SCENARIOS = (
    "sequential_write",
    "batch_write",
    "cold_read",
    "hot_read",
    "batch_read",
    "concurrent_write",
    "concurrent_read",
    "concurrent_mixed",
)

# Medians measured on the reference machine, in microseconds, for the
# blob store and an LSM store keeping values inline. Recorded only.
REFERENCE_MEDIANS_US: Dict[str, Dict[str, float]] = {
    "sequential_write/small": {"blob": 46.323, "inline": 120.85},
    "sequential_write/medium": {"blob": 184.46, "inline": 472.17},
    "sequential_write/large": {"blob": 739.58, "inline": 1747.0},
    "batch_write/small": {"blob": 5249.8, "inline": 12260.0},
    "cold_read/small": {"blob": 11.664, "inline": 5.5070},
    "hot_read/small": {"blob": 1.1086, "inline": 2.4558},
    "cold_read/medium": {"blob": 45.579, "inline": 18.709},
    "hot_read/medium": {"blob": 4.4549, "inline": 7.3069},
    "cold_read/large": {"blob": 181.55, "inline": 73.686},
    "hot_read/large": {"blob": 15.796, "inline": 30.066},
    "batch_read/small": {"blob": 157.19, "inline": 321.14},
    "concurrent_write/small": {"blob": 131.33, "inline": 1687.2},
    "concurrent_read/small": {"blob": 39.372, "inline": 1787.1},
}

Store = Any


@dataclass(frozen=True)
class BenchRow:
    """Latency summary of one scenario on one target."""

    scenario: str
    target: str
    size_class: str
    size: int
    ops: int
    errors: int = 0
    median_us: Optional[float] = None
    p95_us: Optional[float] = None
    throughput_ops_s: Optional[float] = None
    note: str = ""

    @property
    def ok(self) -> bool:  # noqa: D102
        return self.errors == 0 and self.median_us is not None


@dataclass
class BenchReport:
    """Rows plus the context they were measured in."""

    rows: List[BenchRow] = field(default_factory=list)
    environment: Dict[str, Any] = field(default_factory=dict)
    cost_model: List[Dict[str, Any]] = field(default_factory=list)

    def row(
        self, scenario: str, target: str, size_class: str = "small"
    ) -> BenchRow:
        """Find a row.

        Args:
            scenario: scenario name.
            target: ``blob`` or ``inline``.
            size_class: size class name.

        Returns:
            The matching row.

        Raises:
            KeyError: no such row.

        """
        for row in self.rows:
            if (row.scenario, row.target, row.size_class) == (
                scenario,
                target,
                size_class,
            ):
                return row
        raise KeyError(f"No result for {scenario}/{target}/{size_class}")

    def hot_vs_cold(self) -> List[Dict[str, Any]]:
        """Compare each cold-read median with its hot-read counterpart.

        Returns:
            One record per target and size class where both reads
            succeeded, with both medians, the speedup and whether the hot
            read was faster.

        """
        records = []
        for cold in self.rows:
            if cold.scenario != "cold_read" or not cold.ok:
                continue
            try:
                hot = self.row("hot_read", cold.target, cold.size_class)
            except KeyError:
                continue
            if not hot.ok:
                continue
            records.append(
                {
                    "target": cold.target,
                    "size_class": cold.size_class,
                    "cold_median_us": cold.median_us,
                    "hot_median_us": hot.median_us,
                    "speedup": cold.median_us / hot.median_us
                    if hot.median_us
                    else None,
                    "hot_faster": hot.median_us < cold.median_us,
                }
            )
        return records

    def to_dict(self) -> Dict[str, Any]:  # noqa: D102
        return {
            "environment": self.environment,
            "results": [asdict(row) for row in self.rows],
            "hot_vs_cold": self.hot_vs_cold(),
            "cost_model": self.cost_model,
        }


def environment(backend_name: str = "sim") -> Dict[str, Any]:
    """Describe the machine and configuration of a run.

    Args:
        backend_name: homomorphic backend the cost figures refer to.

    Returns:
        JSON-friendly metadata.

    """
    return {
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "machine": platform.machine(),
        "cpu_count": os.cpu_count(),
        "backend": backend_name,
        "reference_medians_us": REFERENCE_MEDIANS_US,
    }


def _summarize(
    scenario: str,
    target: str,
    size_class: str,
    size: int,
    latencies_s: Sequence[float],
    elapsed_s: float,
    errors: int = 0,
    ops_per_sample: int = 1,
) -> BenchRow:
    if not len(latencies_s):
        return BenchRow(
            scenario, target, size_class, size, 0, errors, note="no samples"
        )
    micros = np.asarray(latencies_s, dtype=np.float64) * 1e6
    ops = len(micros) * ops_per_sample
    return BenchRow(
        scenario=scenario,
        target=target,
        size_class=size_class,
        size=size,
        ops=ops,
        errors=errors,
        median_us=float(np.median(micros)),
        p95_us=float(np.percentile(micros, 95)),
        throughput_ops_s=ops / elapsed_s if elapsed_s > 0 else None,
    )


def _timed(func: Callable[[], Any]) -> float:
    start = time.perf_counter()
    func()
    return time.perf_counter() - start


class _Payloads:
    """Distinct random payloads of one size."""

    def __init__(self, seed: Optional[int]) -> None:
        self._rng = np.random.default_rng(seed)
        self._lock = threading.Lock()

    def make(self, size: int, count: int = 1) -> List[bytes]:
        with self._lock:
            return [self._rng.bytes(size) for _ in range(count)]


def open_target(
    name: str, root: Path, hot: int = 16 << 20, warm: int = 128 << 20
) -> Store:
    """Open an empty storage target.

    Args:
        name: ``blob`` or ``inline``.
        root: directory for its files.
        hot: hot cache tier capacity in bytes (``blob`` only).
        warm: warm cache tier capacity in bytes (``blob`` only).

    Returns:
        A store with ``put_blob``, ``put_many``, ``get_blob``,
        ``clear_cache`` and ``close``.

    Raises:
        ValueError: unknown target.

    """
    root.mkdir(parents=True, exist_ok=True)
    if name == "blob":
        return BlobStore(root / "segments", cache=TieredCache(hot, warm))
    if name == "inline":
        return InlineStore(
            MetadataBackend.from_uri(f"sqlite://{root / 'inline.db'}")
        )
    raise ValueError(f"Unknown benchmark target '{name}'")


class StorageBench:
    """Run the storage scenarios on one target."""

    def __init__(
        self, target: str, store: Store, spec: WorkloadSpec
    ) -> None:  # noqa: D107
        self.target = target
        self.store = store
        self.spec = spec
        self.payloads = _Payloads(spec.seed)

    def _row(self, scenario: str, size_class: str, size: int, *args, **kw):
        return _summarize(
            scenario, self.target, size_class, size, *args, **kw
        )

    def sequential_write(self, size_class: str, size: int) -> BenchRow:
        """Time single puts of fresh payloads."""
        latencies = []
        start = time.perf_counter()
        for data in self.payloads.make(size, self.spec.samples):
            latencies.append(_timed(lambda: self.store.put_blob(data)))
        elapsed = time.perf_counter() - start
        return self._row(
            "sequential_write", size_class, size, latencies, elapsed
        )

    def batch_write(self, size_class: str, size: int) -> BenchRow:
        """Time ``put_many`` of a batch; latency is per batch."""
        latencies = []
        start = time.perf_counter()
        for _ in range(self.spec.batch_rounds):
            batch = self.payloads.make(size, self.spec.batch_size)
            latencies.append(_timed(lambda: self.store.put_many(batch)))
        elapsed = time.perf_counter() - start
        return self._row(
            "batch_write",
            size_class,
            size,
            latencies,
            elapsed,
            ops_per_sample=self.spec.batch_size,
        )

    def _populate(self, size: int, count: int) -> List[BlobHash]:
        return self.store.put_many(self.payloads.make(size, count))

    def cold_read(self, size_class: str, size: int) -> BenchRow:
        """Time reads with every cache tier dropped first."""
        digests = self._populate(size, self.spec.samples)
        latencies = []
        start = time.perf_counter()
        for digest in digests:
            self.store.clear_cache()
            latencies.append(_timed(lambda: self.store.get_blob(digest)))
        elapsed = time.perf_counter() - start
        return self._row("cold_read", size_class, size, latencies, elapsed)

    def hot_read(self, size_class: str, size: int) -> BenchRow:
        """Time repeated reads of a primed item."""
        digest = self._populate(size, 1)[0]
        for _ in range(2):
            self.store.get_blob(digest)
        latencies = []
        start = time.perf_counter()
        for _ in range(self.spec.samples):
            latencies.append(_timed(lambda: self.store.get_blob(digest)))
        elapsed = time.perf_counter() - start
        return self._row("hot_read", size_class, size, latencies, elapsed)

    def batch_read(self, size_class: str, size: int) -> BenchRow:
        """Time reading a batch of items back; latency is per batch."""
        digests = self._populate(size, self.spec.batch_size)

        def read_all() -> None:
            for digest in digests:
                self.store.get_blob(digest)

        latencies = []
        start = time.perf_counter()
        for _ in range(self.spec.batch_rounds):
            latencies.append(_timed(read_all))
        elapsed = time.perf_counter() - start
        return self._row(
            "batch_read",
            size_class,
            size,
            latencies,
            elapsed,
            ops_per_sample=self.spec.batch_size,
        )

    def _concurrent(
        self,
        scenario: str,
        size_class: str,
        size: int,
        threads: int,
        per_thread: int,
        work: Callable[[int], List[Callable[[], Any]]],
    ) -> BenchRow:
        """Run every worker's operations at once.

        Each failed operation is logged and counted as one error. A
        worker that fails before its first operation counts all of its
        operations as errors.

        """
        errors = 0
        latencies: List[float] = []
        start = time.perf_counter()
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(self._run_ops, scenario, work, worker)
                for worker in range(threads)
            ]
            for future in futures:
                try:
                    timings, failed = future.result()
                except Exception:  # noqa: B902
                    logger.exception("Worker failed in %s", scenario)
                    failed, timings = per_thread, []
                latencies.extend(timings)
                errors += failed
        elapsed = time.perf_counter() - start
        return self._row(
            scenario, size_class, size, latencies, elapsed, errors=errors
        )

    @staticmethod
    def _run_ops(
        scenario: str,
        work: Callable[[int], List[Callable[[], Any]]],
        worker: int,
    ) -> Tuple[List[float], int]:
        latencies = []
        failed = 0
        for op in work(worker):
            try:
                latencies.append(_timed(op))
            except Exception:  # noqa: B902
                logger.exception("Operation failed in %s", scenario)
                failed += 1
        return latencies, failed

    def concurrent_write(self, size_class: str, size: int) -> BenchRow:
        """Writers each putting their share of fresh payloads."""
        threads = self.spec.write_threads
        per_thread = max(1, self.spec.concurrent_ops // threads)

        def work(_: int) -> List[Callable[[], Any]]:
            return [
                partial(self.store.put_blob, data)
                for data in self.payloads.make(size, per_thread)
            ]

        return self._concurrent(
            "concurrent_write", size_class, size, threads, per_thread, work
        )

    def concurrent_read(self, size_class: str, size: int) -> BenchRow:
        """Readers following the skewed key popularity."""
        digests = self._populate(size, self.spec.prepopulate)
        threads = self.spec.read_threads
        per_thread = max(1, self.spec.concurrent_ops // threads)
        keys = sample_keys(
            self.spec, per_thread * threads, key_space=len(digests)
        )

        def work(worker: int) -> List[Callable[[], Any]]:
            offset = worker * per_thread
            return [
                partial(self.store.get_blob, digests[key])
                for key in keys[offset : offset + per_thread]
            ]

        return self._concurrent(
            "concurrent_read", size_class, size, threads, per_thread, work
        )

    def concurrent_mixed(self, size_class: str, size: int) -> BenchRow:
        """Writers and readers at once, then every write read back.

        Readers follow the skewed key popularity over prepopulated
        payloads and check the bytes they get. One in five writes puts
        a prepopulated payload again. Once all workers are done, every
        acknowledged write must read back byte-identical; each one that
        does not counts as an error.

        """
        stored = self.payloads.make(size, self.spec.prepopulate)
        digests = self.store.put_many(stored)
        writers, readers = self.spec.write_threads, self.spec.read_threads
        per_thread = max(1, self.spec.concurrent_ops // (writers + readers))
        keys = sample_keys(
            self.spec, per_thread * readers, key_space=len(digests)
        )
        acknowledged: List[Tuple[BlobHash, bytes]] = []

        def put(data: bytes) -> None:
            acknowledged.append((self.store.put_blob(data), data))

        def get(index: int) -> None:
            if self.store.get_blob(digests[index]) != stored[index]:
                raise ChecksumError(
                    f"Read of {digests[index].hex()} returned other bytes"
                )

        def work(worker: int) -> List[Callable[[], Any]]:
            if worker < writers:
                fresh = self.payloads.make(size, per_thread)
                for index in range(0, per_thread, 5):
                    position = (worker * per_thread + index) % len(stored)
                    fresh[index] = stored[position]
                return [partial(put, data) for data in fresh]
            offset = (worker - writers) * per_thread
            return [
                partial(get, int(key))
                for key in keys[offset : offset + per_thread]
            ]

        row = self._concurrent(
            "concurrent_mixed",
            size_class,
            size,
            writers + readers,
            per_thread,
            work,
        )
        lost = sum(
            not self._reads_back(digest, data)
            for digest, data in acknowledged
        )
        if lost:
            logger.error("%d acknowledged writes do not read back", lost)
        return replace(
            row,
            errors=row.errors + lost,
            note=f"{len(acknowledged) - lost}/{len(acknowledged)}"
            " writes read back",
        )

    def _reads_back(self, digest: BlobHash, data: bytes) -> bool:
        try:
            return self.store.get_blob(digest) == data
        except Exception:  # noqa: B902
            logger.exception("Unable to read back %s", digest.hex())
            return False

    def run(self, scenarios: Iterable[str]) -> List[BenchRow]:
        """Run scenarios; a failing one is reported, not raised.

        Args:
            scenarios: names from :data:`SCENARIOS`.

        Returns:
            One row per scenario and size class.

        """
        rows = []
        for scenario in scenarios:
            for size_class, size in self._sizes(scenario):
                logger.info(
                    "Running %s/%s on %s", scenario, size_class, self.target
                )
                try:
                    rows.append(getattr(self, scenario)(size_class, size))
                except Exception as exc:  # noqa: B902
                    logger.exception(
                        "Scenario %s/%s failed on %s",
                        scenario,
                        size_class,
                        self.target,
                    )
                    rows.append(
                        BenchRow(
                            scenario,
                            self.target,
                            size_class,
                            size,
                            ops=0,
                            errors=1,
                            note=f"{type(exc).__name__}: {exc}",
                        )
                    )
        return rows

    def _sizes(self, scenario: str):
        if scenario in ("sequential_write", "cold_read", "hot_read"):
            return self.spec.sizes
        small = min(self.spec.sizes, key=lambda item: item[1])
        return (small,)


def run_cost_suite(
    sizes: Sequence[int] = (1, 4, 16),
    backend_name: str = "sim",
    table: Optional[LatencyTable] = None,
    seed: Optional[int] = 0,
) -> List[Dict[str, Any]]:
    """Run real lookups and check their counts against the model.

    Args:
        sizes: table sizes to look up in.
        backend_name: homomorphic backend to run on.
        table: latency table, defaults to the packaged one.
        seed: backend seed.

    Returns:
        One record per size: formula times, predicted and simulated
        server time, wall time and whether the counts matched.

    """
    table = table or LatencyTable.default()
    records = []
    for n in sizes:
        server = Backend.from_name(
            backend_name, latency_table=table, seed=seed
        )
        client = Backend.from_name(
            backend_name, latency_table=table, seed=seed
        )
        key = client.keygen()
        keypair = OwnerKeypair.generate()
        record: Dict[str, Any] = {
            "n": n,
            "formula_client_ms": estimate_client_time(n, table),
            "formula_server_ms": estimate_server_time(n, table),
        }
        with tempfile.TemporaryDirectory() as tmp:
            engine = QueryEngine(HybridStore(Path(tmp)), server, Keyring())
            try:
                session = ClientSession.for_owner(
                    client, key, LocalTransport(engine), keypair
                )
                session.register()
                columns = [ColumnDef("key"), ColumnDef("value")]
                session.insert(
                    "kv", columns, [(i, 100 + i) for i in range(n)]
                )
                schema = session.schema("kv")
                server.reset_stats()
                client.reset_stats()
                start = time.perf_counter()
                session.lookup("kv", n // 2, schema=schema)
                wall_ms = (time.perf_counter() - start) * 1e3
                estimate: CostEstimate = predict_pir(
                    n, return_mask=engine.return_mask, table=table
                )
                report = verify_cost_model(
                    estimate, server=server.stats(), client=client.stats()
                )
                record.update(
                    predicted_server_ms=estimate.server_ms,
                    simulated_server_ms=report.measured_server_ms,
                    predicted_client_ms=estimate.client_ms,
                    wall_ms=wall_ms,
                    counts_match=True,
                )
            except Exception as exc:  # noqa: B902
                logger.exception("Cost suite failed for n=%d", n)
                record.update(counts_match=False, error=str(exc))
            finally:
                engine.close()
        records.append(record)
    return records


def run_benchmarks(
    spec: Optional[WorkloadSpec] = None,
    targets: Sequence[str] = TARGETS,
    scenarios: Sequence[str] = SCENARIOS,
    root: Optional[Path] = None,
    cost_sizes: Sequence[int] = (),
    backend_name: str = "sim",
) -> BenchReport:
    """Run the selected scenarios on every target.

    Args:
        spec: workload parameters.
        targets: storage targets to compare.
        scenarios: scenario names.
        root: scratch directory; a temporary one by default.
        cost_sizes: table sizes for :func:`run_cost_suite`; empty skips
            it.
        backend_name: homomorphic backend for the cost suite.

    Returns:
        The report.

    """
    spec = spec or WorkloadSpec()
    unknown = sorted(set(scenarios) - set(SCENARIOS))
    if unknown:
        raise ValueError(f"Unknown scenarios {unknown}")
    report = BenchReport(environment=environment(backend_name))
    report.environment["workload"] = asdict(spec)
    with tempfile.TemporaryDirectory(dir=root) as scratch:
        for target in targets:
            try:
                store = open_target(target, Path(scratch) / target)
            except Exception as exc:  # noqa: B902
                logger.exception("Unable to open target %s", target)
                report.rows.extend(
                    BenchRow(scenario, target, "-", 0, 0, 1, note=str(exc))
                    for scenario in scenarios
                )
                continue
            try:
                bench = StorageBench(target, store, spec)
                report.rows.extend(bench.run(scenarios))
            finally:
                store.close()
    if cost_sizes:
        report.cost_model = run_cost_suite(cost_sizes, backend_name)
    return report


COLUMNS = (
    "scenario",
    "target",
    "size_class",
    "size",
    "ops",
    "errors",
    "median_us",
    "p95_us",
    "throughput_ops_s",
    "note",
)


def write_csv(report: BenchReport, path: Path) -> Path:
    """Write result rows as CSV.

    Args:
        report: benchmark report.
        path: destination file.

    Returns:
        The written path.

    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as stream:
        writer = csv.DictWriter(stream, fieldnames=COLUMNS)
        writer.writeheader()
        for row in report.rows:
            writer.writerow(asdict(row))
    return path


def write_json(report: BenchReport, path: Path) -> Path:
    """Write the full report, environment included, as JSON.

    Args:
        report: benchmark report.
        path: destination file.

    Returns:
        The written path.

    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2, default=str))
    return path


def write_jsonl(report: BenchReport, path: Path) -> Path:
    """Dump the report as JSON lines through a :class:`DumpLogger`.

    The first line holds the environment, then one line per result row,
    per hot-vs-cold comparison and per cost model record, each tagged
    with a ``kind``.

    Args:
        report: benchmark report.
        path: destination file, replaced if it exists.

    Returns:
        The written path.

    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("")
    dump = make_logger(f"{__name__}.results.{path.resolve()}", path)
    try:
        dump.json({"kind": "environment", **report.environment})
        for row in report.rows:
            dump.json({"kind": "result", **asdict(row)})
        for record in report.hot_vs_cold():
            dump.json({"kind": "hot_vs_cold", **record})
        for record in report.cost_model:
            dump.json({"kind": "cost_model", **record})
    finally:
        release_logger(dump)
    return path
