"""Cost model and storage benchmarks."""
from maskdb.bench.cost import CostEstimate
from maskdb.bench.cost import estimate_client_time
from maskdb.bench.cost import estimate_server_time
from maskdb.bench.cost import predict_pir
from maskdb.bench.cost import predict_query
from maskdb.bench.cost import verify_cost_model
from maskdb.bench.harness import BenchReport
from maskdb.bench.harness import BenchRow
from maskdb.bench.harness import run_benchmarks
from maskdb.bench.harness import run_cost_suite
from maskdb.bench.harness import write_csv
from maskdb.bench.harness import write_json
from maskdb.bench.harness import write_jsonl
from maskdb.bench.workload import sample_keys
from maskdb.bench.workload import WorkloadSpec

__all__ = [
    "BenchReport",
    "BenchRow",
    "CostEstimate",
    "WorkloadSpec",
    "estimate_client_time",
    "estimate_server_time",
    "predict_pir",
    "predict_query",
    "run_benchmarks",
    "run_cost_suite",
    "sample_keys",
    "verify_cost_model",
    "write_csv",
    "write_json",
    "write_jsonl",
]
