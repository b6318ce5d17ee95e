"""Server-side query processing and leakage transcripts."""
from maskdb.engine.executor import EncryptedResult
from maskdb.engine.executor import QueryEngine
from maskdb.engine.transcript import LeakageTranscript
from maskdb.engine.transcript import make_transcript
from maskdb.engine.transcript import simulate_query

__all__ = [
    "EncryptedResult",
    "LeakageTranscript",
    "QueryEngine",
    "make_transcript",
    "simulate_query",
]
