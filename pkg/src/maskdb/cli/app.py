"""Command-line typer application for maskdb.

Server daemon, owner key and token management, encrypted inserts and
queries against a running server, benchmarks and compaction.

"""
from __future__ import annotations

import base64
import contextlib
import enum
import logging
import os
import time
from pathlib import Path
from typing import Callable
from typing import Iterator
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import typer

from maskdb.auth.tokens import create_token
from maskdb.auth.tokens import DelegationToken
from maskdb.auth.tokens import OwnerKeypair
from maskdb.auth.tokens import Permission
from maskdb.bench.harness import run_benchmarks
from maskdb.bench.harness import SCENARIOS
from maskdb.bench.harness import TARGETS
from maskdb.bench.harness import write_csv
from maskdb.bench.harness import write_json
from maskdb.bench.harness import write_jsonl
from maskdb.bench.workload import WorkloadSpec
from maskdb.cli.server import MaskdbServer
from maskdb.client.session import ClientSession
from maskdb.client.session import PlainResultSet
from maskdb.client.transport import SocketTransport
from maskdb.config import Settings
from maskdb.crypto.base import Backend
from maskdb.crypto.latency import LatencyTable
from maskdb.crypto.types import KeyMaterial
from maskdb.exceptions import AuthorizationError
from maskdb.exceptions import BackendUnavailableError
from maskdb.exceptions import MaskdbError
from maskdb.exceptions import TokenFormatError
from maskdb.exceptions import TransportError
from maskdb.types import ColumnDef
from maskdb.version import __version__

logger = logging.getLogger(__name__)

KEY_MATERIAL_FILE = "fhe_key.json"


class Exit(enum.Enum):
    """maskdb cli exit wrapper."""

    INVALID_CONFIG = 2
    MISSING_KEYS = 3
    UNAUTHORIZED = 4
    REQUEST_FAILED = 5
    UNREACHABLE = 6
    INVALID_INPUT = 7

    def __call__(self, exc) -> typer.Exit:
        logger.debug("Command failed", exc_info=exc)
        typer.secho(str(exc), fg="red", err=True)
        return typer.Exit(self.value)


app = typer.Typer(
    add_completion=False,
    help="SQL over encrypted tables, with oblivious row selection.",
)
token_app = typer.Typer(help="Issue access tokens.")
app.add_typer(token_app, name="token")


def version_callback(value: bool) -> None:  # noqa: FBT001
    """Echo maskdb version and exit.

    Args:
        value: If set, echos maskdb version and exit.

    Raises:
        Exit: when value is passed, to exit the program.

    """
    if value:
        typer.echo(__version__)
        raise typer.Exit()


@contextlib.contextmanager
def failures() -> Iterator[None]:
    """Turn library errors into exit codes."""
    try:
        yield
    except typer.Exit:
        raise
    except FileNotFoundError as exc:
        raise Exit.MISSING_KEYS(
            f"Missing file {exc.filename}; run 'maskdb keygen' first"
        ) from exc
    except AuthorizationError as exc:
        raise Exit.UNAUTHORIZED(exc) from exc
    except TransportError as exc:
        raise Exit.UNREACHABLE(exc) from exc
    except BackendUnavailableError as exc:
        raise Exit.INVALID_CONFIG(exc) from exc
    except MaskdbError as exc:
        raise Exit.REQUEST_FAILED(exc) from exc
    except ValueError as exc:
        raise Exit.INVALID_INPUT(exc) from exc


@app.callback()
def main(  # noqa: C0116, R0913
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(  # noqa: B008
        None,
        "--config",
        "-c",
        help="JSON config file; flags and env vars take precedence.",
        envvar="MASKDB_CONFIG",
    ),
    listen: Optional[str] = typer.Option(  # noqa: B008
        None,
        help="Server address, as host:port.",
        envvar="MASKDB_LISTEN",
    ),
    data_dir: Optional[Path] = typer.Option(  # noqa: B008
        None,
        help="Directory for keys and storage.",
        envvar="MASKDB_DATA_DIR",
    ),
    backend: Optional[str] = typer.Option(  # noqa: B008
        None,
        help="Homomorphic backend: 'sim' or 'fhe'.",
        envvar="MASKDB_BACKEND",
    ),
    cache_hot: Optional[int] = typer.Option(  # noqa: B008
        None,
        help="Hot cache tier capacity, in bytes.",
        envvar="MASKDB_CACHE_HOT",
    ),
    cache_warm: Optional[int] = typer.Option(  # noqa: B008
        None,
        help="Warm cache tier capacity, in bytes.",
        envvar="MASKDB_CACHE_WARM",
    ),
    latency_table: Optional[Path] = typer.Option(  # noqa: B008
        None,
        help="JSON table of operation latencies overriding the defaults.",
        envvar="MASKDB_LATENCY_TABLE",
    ),
    return_mask: Optional[str] = typer.Option(  # noqa: B008
        None,
        help="Whether results carry the encrypted mask: 'on' or 'off'.",
        envvar="MASKDB_RETURN_MASK",
    ),
    log_level: str = typer.Option(  # noqa: B008
        "WARNING",
        help="Logging level.",
        envvar="MASKDB_LOG_LEVEL",
    ),
    _: Optional[bool] = typer.Option(  # noqa: B008
        None,
        "--version",
        callback=version_callback,
        is_eager=True,
        help="Show the version and exit.",
    ),
) -> None:
    logging.basicConfig(
        level=log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        ctx.obj = Settings.load(
            config,
            listen=listen,
            data_dir=data_dir,
            backend=backend,
            cache_hot=cache_hot,
            cache_warm=cache_warm,
            latency_table=latency_table,
            return_mask=return_mask,
        )
    except (OSError, ValueError) as exc:
        raise Exit.INVALID_CONFIG(exc) from exc


def _settings(ctx: typer.Context) -> Settings:
    return ctx.obj or Settings.load()


def _backend(settings: Settings) -> Backend:
    table = (
        LatencyTable.from_file(settings.latency_table)
        if settings.latency_table
        else None
    )
    return Backend.from_name(
        settings.backend, latency_table=table, seed=settings.seed
    )


def issued_tokens(tokens: Sequence[str]) -> Callable[[], DelegationToken]:
    """Hand out pre-issued tokens, one per request.

    Args:
        tokens: base64 tokens from ``maskdb token create``.

    Returns:
        Token source for a :class:`ClientSession`.

    """
    remaining = iter([DelegationToken.from_b64(t.strip()) for t in tokens])

    def next_token() -> DelegationToken:
        try:
            return next(remaining)
        except StopIteration:
            raise TokenFormatError(
                f"Ran out of tokens after {len(tokens)} requests;"
                " queries take one for the catalog and one to run"
            ) from None

    return next_token


def open_session(
    settings: Settings, tokens: Sequence[str] = ()
) -> ClientSession:
    """Connect to the configured server with the local keys.

    Without `tokens` the session acts as the owner, registering its keys
    first. Otherwise each request presents the next of `tokens`.

    Args:
        settings: resolved settings.
        tokens: base64 tokens issued by ``maskdb token create``.

    Returns:
        The session.

    """
    key = KeyMaterial.from_json(
        (settings.keys_dir / KEY_MATERIAL_FILE).read_text()
    )
    transport = SocketTransport(settings.address, max_frame=settings.max_frame)
    backend = _backend(settings)
    if tokens:
        return ClientSession(backend, key, transport, issued_tokens(tokens))
    keypair = OwnerKeypair.load(settings.keys_dir)
    session = ClientSession.for_owner(backend, key, transport, keypair)
    session.register()
    return session


def parse_columns(spec: str) -> List[ColumnDef]:
    """Parse ``name[:width],...`` column definitions.

    Args:
        spec: eg ``"age:8,salary"``; width defaults to 32.

    Returns:
        The columns.

    """
    columns = []
    for part in spec.split(","):
        name, _, width = part.strip().partition(":")
        columns.append(ColumnDef(name, int(width) if width else 32))
    if not columns:
        raise ValueError("At least one column is required")
    return columns


def parse_rows(
    rows: Sequence[str], csv_file: Optional[Path]
) -> List[Tuple[int, ...]]:
    """Collect rows of comma-separated integers from flags and a file.

    Args:
        rows: eg ``["25,900", "17,400"]``.
        csv_file: file with one row per line; ``-`` is not supported.

    Returns:
        Integer tuples.

    """
    lines = list(rows)
    if csv_file is not None:
        lines += [
            line
            for line in csv_file.read_text().splitlines()
            if line.strip() and not line.startswith("#")
        ]
    return [
        tuple(int(value) for value in line.split(",")) for line in lines
    ]


def _print_rows(result: PlainResultSet) -> None:
    typer.echo("\t".join(result.columns))
    for row in result:
        typer.echo("\t".join(str(value) for value in row))
    typer.secho(f"({len(result)} rows)", fg="green", err=True)


@app.command()
def keygen(
    ctx: typer.Context,
    overwrite: bool = typer.Option(  # noqa: B008,FBT001
        False, "--overwrite", help="Replace existing key files."
    ),
    security: int = typer.Option(  # noqa: B008
        128, help="Security level in bits."
    ),
) -> None:
    """Create the owner signing key and homomorphic keys."""
    settings = _settings(ctx)
    directory = settings.keys_dir
    material = directory / KEY_MATERIAL_FILE
    if material.exists() and not overwrite:
        raise Exit.INVALID_INPUT(
            f"Keys already exist in {directory}; pass --overwrite to replace"
        )
    with failures():
        key = _backend(settings).keygen(security)
        keypair = OwnerKeypair.generate()
        keypair.save(directory, overwrite=overwrite)
        material.write_text(key.to_json())
        os.chmod(material, 0o600)
    typer.secho(f"Keys written to {directory}", fg="green")
    typer.echo(f"owner id: {keypair.owner_id}")


@token_app.command("create")
def token_create(
    ctx: typer.Context,
    permission: List[str] = typer.Option(  # noqa: B008
        ["read"],
        "--permission",
        "-p",
        help="Granted right: read, write, delete or delegate. Repeatable.",
    ),
    ttl: int = typer.Option(  # noqa: B008
        3600, help="Seconds the token stays valid."
    ),
    user: str = typer.Option(  # noqa: B008
        "anonymous", help="Who the token is issued to."
    ),
    holder_key: Optional[str] = typer.Option(  # noqa: B008
        None,
        help="Base64 verification key of the holder, needed to delegate.",
    ),
    count: int = typer.Option(  # noqa: B008
        1, min=1, help="Number of tokens, printed one per line."
    ),
) -> None:
    """Issue single-use tokens signed by the owner key."""
    settings = _settings(ctx)
    with failures():
        keypair = OwnerKeypair.load(settings.keys_dir)
        granted = Permission.parse(permission)
        holder = base64.b64decode(holder_key) if holder_key else b""
        tokens = [
            create_token(
                keypair,
                user,
                granted,
                int(time.time()) + ttl,
                holder_key=holder,
            )
            for _ in range(count)
        ]
    for token in tokens:
        typer.echo(token.to_b64())


@app.command()
def insert(
    ctx: typer.Context,
    table: str = typer.Argument(..., help="Table name."),  # noqa: B008
    columns: str = typer.Option(  # noqa: B008
        ...,
        "--columns",
        help="Column definitions, eg 'age:8,salary:32'.",
    ),
    row: Optional[List[str]] = typer.Option(  # noqa: B008
        None, "--row", "-r", help="Comma-separated values. Repeatable."
    ),
    csv_file: Optional[Path] = typer.Option(  # noqa: B008
        None, "--csv", help="File with one comma-separated row per line."
    ),
) -> None:
    """Encrypt rows locally and store them on the server."""
    settings = _settings(ctx)
    with failures():
        definitions = parse_columns(columns)
        rows = parse_rows(row or [], csv_file)
        if not rows:
            raise ValueError("Nothing to insert: pass --row or --csv")
        with open_session(settings) as session:
            row_ids = session.insert(table, definitions, rows)
    typer.secho(f"Inserted {len(row_ids)} rows into {table}", fg="green")


@app.command()
def query(
    ctx: typer.Context,
    sql: str = typer.Argument(..., help="SELECT statement."),  # noqa: B008
    token: Optional[List[str]] = typer.Option(  # noqa: B008
        None,
        help="Token presented instead of the owner key. Repeatable.",
    ),
) -> None:
    """Run an encrypted SELECT and print the matching rows."""
    settings = _settings(ctx)
    with failures(), open_session(settings, token or ()) as session:
        result = session.execute(sql)
    _print_rows(result)


@app.command()
def lookup(
    ctx: typer.Context,
    table: str = typer.Argument(..., help="Key-value table."),  # noqa: B008
    key: int = typer.Argument(..., help="Key to look up."),  # noqa: B008
    aggregate: bool = typer.Option(  # noqa: B008,FBT001
        False, "--aggregate", help="Let the server fold matches into one."
    ),
    token: Optional[List[str]] = typer.Option(  # noqa: B008
        None,
        help="Token presented instead of the owner key. Repeatable.",
    ),
) -> None:
    """Private lookup of a key in a (key, value) table."""
    settings = _settings(ctx)
    with failures(), open_session(settings, token or ()) as session:
        schema = session.schema(table)
        rows = session.lookup(table, key, aggregate=aggregate, schema=schema)
    _print_rows(PlainResultSet(tuple(schema.column_names), tuple(rows)))


@app.command()
def compact(ctx: typer.Context) -> None:
    """Reclaim space held by deleted rows."""
    settings = _settings(ctx)
    with failures(), open_session(settings) as session:
        reclaimed = session.compact()
    typer.secho(f"Reclaimed {reclaimed} bytes", fg="green")


@app.command()
def serve(ctx: typer.Context) -> None:
    """Run the server until interrupted."""
    settings = _settings(ctx)
    try:
        server = MaskdbServer.from_settings(settings)
    except OSError as exc:
        raise Exit.INVALID_CONFIG(
            f"Unable to listen on {settings.listen}: {exc}"
        ) from exc
    except MaskdbError as exc:
        raise Exit.INVALID_CONFIG(exc) from exc
    host, port = server.server_address[:2]
    typer.secho(f"maskdb listening on {host}:{port}", fg="green")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        typer.echo("Shutting down")
    finally:
        server.server_close()


@app.command()
def bench(  # noqa: R0913
    ctx: typer.Context,
    output: Path = typer.Option(  # noqa: B008
        Path("bench-results"), help="Directory for the result files."
    ),
    target: List[str] = typer.Option(  # noqa: B008
        list(TARGETS), help="Storage target. Repeatable."
    ),
    scenario: List[str] = typer.Option(  # noqa: B008
        list(SCENARIOS), help="Scenario. Repeatable."
    ),
    prepopulate: int = typer.Option(  # noqa: B008
        10_000, help="Items written before concurrent reads."
    ),
    samples: int = typer.Option(  # noqa: B008
        200, help="Timed operations per sequential scenario."
    ),
    concurrent_ops: int = typer.Option(  # noqa: B008
        10_000, help="Operations per concurrent scenario."
    ),
    cost_n: List[int] = typer.Option(  # noqa: B008
        [1, 16, 64], help="Table size for the cost model check. Repeatable."
    ),
) -> None:
    """Benchmark storage targets and check the cost model."""
    settings = _settings(ctx)
    with failures():
        spec = WorkloadSpec(
            prepopulate=prepopulate,
            samples=samples,
            concurrent_ops=concurrent_ops,
            seed=settings.seed if settings.seed is not None else 0,
        )
        report = run_benchmarks(
            spec,
            targets=target,
            scenarios=scenario,
            cost_sizes=cost_n,
            backend_name=settings.backend,
        )
    write_csv(report, output / "results.csv")
    write_json(report, output / "results.json")
    write_jsonl(report, output / "results.jsonl")
    for result in report.rows:
        color = "green" if result.ok else "red"
        median = (
            "-" if result.median_us is None else f"{result.median_us:.2f}us"
        )
        typer.secho(
            f"{result.scenario:<17} {result.target:<7}"
            f" {result.size_class:<7} {median}",
            fg=color,
        )
    for record in report.hot_vs_cold():
        typer.secho(
            f"hot vs cold {record['target']:<7} {record['size_class']:<7}"
            f" {record['speedup']:.1f}x",
            fg="green" if record["hot_faster"] else "yellow",
        )
    for record in report.cost_model:
        color = "green" if record.get("counts_match") else "red"
        typer.secho(
            f"n={record['n']}: server {record['formula_server_ms']:.2f}ms"
            f" client {record['formula_client_ms']:.4f}ms",
            fg=color,
        )
    typer.echo(f"Results written to {output}")
    if any(not result.ok for result in report.rows) or any(
        not record.get("counts_match") for record in report.cost_model
    ):
        raise typer.Exit(1)


if __name__ == "__main__":
    app()
