"""Transcript streams: memory and log backends."""
from __future__ import annotations

import json
import uuid

import pytest

from maskdb.event_stream.base import Backend
from maskdb.exceptions import BackendUnavailableError
from maskdb.exceptions import UnknownTranscriptError

TRANSCRIPT = {"ast": {"type": "SelectStatement"}, "row_count": 3}


@pytest.fixture(name="stream_name")
def stream_name_() -> str:
    """Process-unique memory stream name.

    Returns:
        The name.

    """
    return f"transcripts-{uuid.uuid4().hex}"


def test_memory_post_get(stream_name) -> None:
    """Memory streams hand out sequential ids.

    Args:
        stream_name: pytest fixture - see :func:`stream_name_`.

    """
    stream = Backend.from_uri(f"memory://?stream={stream_name}")
    assert stream.stream == stream_name
    assert stream.uri == "memory://"
    assert [stream.post(TRANSCRIPT), stream.post({"n": 2})] == ["0", "1"]
    assert stream.get("0") == TRANSCRIPT
    with pytest.raises(UnknownTranscriptError):
        stream.get("2")


def test_memory_shared_per_name(stream_name) -> None:
    """Backends with the same stream name see the same transcripts.

    Args:
        stream_name: pytest fixture - see :func:`stream_name_`.

    """
    writer = Backend.from_uri(f"memory://?stream={stream_name}")
    reader = Backend.from_uri(f"memory://?stream={stream_name}")
    transcript_id = writer.post(TRANSCRIPT)
    assert reader.get(transcript_id) == TRANSCRIPT


def test_memory_maxlen(stream_name) -> None:
    """Old transcripts are evicted past ``maxlen``.

    Args:
        stream_name: pytest fixture - see :func:`stream_name_`.

    """
    stream = Backend.from_uri(f"memory://?stream={stream_name}&maxlen=2")
    ids = [stream.post({"n": n}) for n in range(3)]
    with pytest.raises(UnknownTranscriptError):
        stream.get(ids[0])
    assert stream.get(ids[2]) == {"n": 2}


def test_log_file_stream(tmp_path) -> None:
    """Log streams write JSON lines and read them back by id.

    Args:
        tmp_path: pytest fixture.

    """
    stream = Backend.from_uri(f"log://?stream={tmp_path}")
    first = stream.post(TRANSCRIPT)
    second = stream.post({"n": 2})
    assert stream.logfile == tmp_path / "transcripts.jsonl"
    lines = stream.logfile.read_text().splitlines()
    assert [json.loads(line)["id"] for line in lines] == [first, second]
    assert stream.get(first) == TRANSCRIPT
    with pytest.raises(UnknownTranscriptError):
        stream.get("nope")


def test_log_stdout_is_write_only(capsys) -> None:
    """Transcripts sent to stdout cannot be read back.

    Args:
        capsys: pytest fixture.

    """
    stream = Backend.from_uri("log://?stream=stdout")
    transcript_id = stream.post(TRANSCRIPT)
    assert stream.logfile is None
    with pytest.raises(UnknownTranscriptError):
        stream.get(transcript_id)


@pytest.mark.parametrize(
    "uri,error",
    [
        ("memory://", ValueError),
        ("carrier-pigeon://?stream=x", BackendUnavailableError),
    ],
)
def test_bad_uri(uri, error) -> None:
    """Uris need a known scheme and a stream name.

    Args:
        uri: pytest parametrized arg.
        error: expected exception class.

    """
    with pytest.raises(error):
        Backend.from_uri(uri)
