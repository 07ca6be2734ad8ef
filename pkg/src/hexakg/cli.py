"""Command-line client for the storage service.

Every subcommand is a thin client: it builds a request model, sends it
to the service (in-process by default, or a remote ``--server`` URL),
and formats the response.  Exit codes: 0 ok, 2 usage, 3 parse error,
4 storage error, 5 database busy.
"""
from __future__ import annotations

import asyncio
import json
import sys

import click
import httpx

EXIT_CODES = {"usage": 2, "parse": 3, "storage": 4, "busy": 5}


class ServiceClient:
    def __init__(self, server: str | None):
        self.server = server

    def call(self, method: str, path: str, payload=None, params=None):
        if self.server:
            with httpx.Client(base_url=self.server, timeout=None) as client:
                r = client.request(method, path, json=payload, params=params)
                return r.status_code, r.json()

        from .service.app import create_app

        async def go():
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(
                transport=transport, base_url="http://engine", timeout=None
            ) as client:
                r = await client.request(method, path, json=payload, params=params)
                return r.status_code, r.json()

        return asyncio.run(go())


def _finish(status: int, body: dict, as_json: bool, render=None) -> dict:
    if status >= 400:
        category = body.get("category", "storage")
        message = body.get("message") or body.get("detail") or str(body)
        click.echo(f"error ({category}): {message}", err=True)
        sys.exit(EXIT_CODES.get(category, 4))
    if as_json:
        click.echo(json.dumps(body, indent=2, sort_keys=True))
    elif render is not None:
        render(body)
    return body


def _parse_size(text: str) -> int:
    text = text.strip().upper()
    factor = 1
    for suffix, mult in (("K", 1 << 10), ("M", 1 << 20), ("G", 1 << 30)):
        if text.endswith(suffix):
            factor = mult
            text = text[:-1]
            break
    try:
        return int(float(text) * factor)
    except ValueError:
        raise click.UsageError(f"bad size {text!r}") from None


@click.group()
@click.option("--server", default=None, help="Remote service URL (default: in-process).")
@click.pass_context
def main(ctx, server):
    """Adaptive six-permutation storage engine for labeled graphs."""
    ctx.obj = ServiceClient(server)


@main.command()
@click.argument("db")
@click.option("--input", "input_path", required=True)
@click.option("--format", "fmt", default="ntriples",
              type=click.Choice(["ntriples", "snap", "encoded"]))
@click.option("--id-mode", default="global", type=click.Choice(["global", "split"]))
@click.option("--nm", default="btree", type=click.Choice(["btree", "array"]))
@click.option("--ofr", is_flag=True, help="Prune small tables in primed streams.")
@click.option("--eta", default=20, help="Pruning row threshold.")
@click.option("--aggr", is_flag=True, help="Aggregate-reference eligible tables.")
@click.option("--tau", default=1_000_000, help="Exact layout costing row limit.")
@click.option("--upsilon", default=32, help="Cluster layout group limit.")
@click.option("--proc-workers", default=1)
@click.option("--io-workers", default=1)
@click.option("--sort-mem", default="256M", help="Sort memory budget (K/M/G).")
@click.option("--tmp-dir", default=None)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def load(client, db, input_path, fmt, id_mode, nm, ofr, eta, aggr, tau,
         upsilon, proc_workers, io_workers, sort_mem, tmp_dir, as_json):
    """Build a database from an input file."""
    status, body = client.call("POST", "/load", {
        "db": db,
        "input": input_path,
        "format": fmt,
        "id_mode": id_mode,
        "nm": nm,
        "ofr": ofr,
        "eta": eta,
        "aggr": aggr,
        "tau": tau,
        "upsilon": upsilon,
        "proc_workers": proc_workers,
        "io_workers": io_workers,
        "sort_mem_bytes": _parse_size(sort_mem),
        "tmp_dir": tmp_dir,
    })

    def render(b):
        click.echo(f"edges: {b['edges']}")
        click.echo(f"entity labels: {b['entity_labels']}")
        click.echo(f"relation labels: {b['relation_labels']}")
        click.echo(f"duplicates dropped: {b['skipped_duplicates']}")
        totals = ", ".join(f"{k}={v}" for k, v in sorted(b["layout_totals"].items()))
        click.echo(f"tables by layout: {totals or 'none'}")

    _finish(status, body, as_json, render)


@main.command()
@click.argument("db")
@click.option("--query", "query_text", default=None, help="Inline query text.")
@click.option("--query-file", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def query(client, db, query_text, query_file, as_json):
    """Answer a basic graph pattern; bindings go to stdout as TSV."""
    if query_text is None and query_file is None:
        raise click.UsageError("give --query or --query-file")
    if query_text is None:
        with open(query_file) as f:
            query_text = f.read()
    status, body = client.call("POST", "/query", {"db": db, "query": query_text})

    def render(b):
        click.echo("\t".join("?" + v for v in b["variables"]))
        for row in b["rows"]:
            click.echo("\t".join(row))
        click.echo(f"{b['count']} rows", err=True)

    _finish(status, body, as_json, render)


@main.command()
@click.argument("db")
@click.option("--primitive", required=True,
              type=click.Choice(["node-label", "relation-label", "node-id",
                                 "relation-id", "edges", "groups", "count",
                                 "edge-at"]))
@click.option("--pattern", default=None, help="Three terms: label or ?var.")
@click.option("--ordering", default=None)
@click.option("--grouping", default=None)
@click.option("--index", type=int, default=None)
@click.option("--id", "term_id", type=int, default=None)
@click.option("--label", default=None)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def probe(client, db, primitive, pattern, ordering, grouping, index, term_id,
          label, as_json):
    """Invoke one low-level primitive directly."""
    status, body = client.call("POST", "/probe", {
        "db": db,
        "primitive": primitive,
        "pattern": pattern,
        "ordering": ordering,
        "grouping": grouping,
        "index": index,
        "term_id": term_id,
        "label": label,
    })

    def render(b):
        if b.get("label") is not None:
            click.echo(b["label"])
        elif b.get("value") is not None:
            click.echo(b["value"])
        elif b.get("rows") is not None:
            for row in b["rows"]:
                click.echo("\t".join(row))
            click.echo(f"{b.get('count', 0)} rows", err=True)
        elif b.get("groups") is not None:
            for row in b["groups"]:
                click.echo("\t".join(str(v) for v in row))
            click.echo(f"{b.get('count', 0)} groups", err=True)
        else:
            click.echo(b.get("count", 0))

    _finish(status, body, as_json, render)


@main.command()
@click.argument("db")
@click.argument("action", type=click.Choice(["add", "remove"]))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def update(client, db, action, input_path, as_json):
    """Stage an addition or removal delta from an N-Triples file."""
    status, body = client.call("POST", "/update", {
        "db": db, "action": action, "input": input_path,
    })

    def render(b):
        click.echo(
            f"{b['action']}: applied {b['applied']} of {b['requested']}"
            f" (skipped {b['skipped']}), deltas: {b['delta_count']}"
        )
        if b["reload_recommended"]:
            click.echo("note: merged deltas are large; a full reload is advised")

    _finish(status, body, as_json, render)


@main.command()
@click.argument("db")
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def merge(client, db, as_json):
    """Fold deltas into at most one addition and one removal."""
    status, body = client.call("POST", "/merge", {"db": db})

    def render(b):
        click.echo(f"deltas: {b['delta_count']} ({b['delta_edges']} edges)")
        if b["reload_recommended"]:
            click.echo("note: merged deltas are large; a full reload is advised")

    _finish(status, body, as_json, render)


@main.command()
@click.argument("db")
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def stats(client, db, as_json):
    """Database statistics."""
    status, body = client.call("GET", "/stats", params={"db": db})

    def render(b):
        click.echo(f"edges: {b['edges']} (base {b['base_edges']})")
        click.echo(f"entity labels: {b['entity_labels']}")
        click.echo(f"relation labels: {b['relation_labels']}")
        click.echo(f"id mode: {b['id_mode']}, node index: {b['nm_backend']}")
        totals = ", ".join(f"{k}={v}" for k, v in sorted(b["layout_totals"].items()))
        click.echo(f"tables by layout: {totals or 'none'}")
        click.echo(f"deltas: {len(b['deltas'])}")
        for d in b["deltas"]:
            click.echo(f"  {d['name']}: {d['edges']} edges")
        total_bytes = sum(b["file_bytes"].values())
        click.echo(f"database bytes: {total_bytes}")

    _finish(status, body, as_json, render)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8275, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
