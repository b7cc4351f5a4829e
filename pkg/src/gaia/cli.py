"""Command line entry points: serve, sim, rules, upload."""

from __future__ import annotations

import json
import signal
import sys
import threading

import click
import httpx

from .config import ConfigError, load_config
from .model import build_resource_tree
from .sim import config_from_doc, simulate, write_csv
from .timeutil import format_ts, parse_ts


@click.group()
def main():
    """Building-energy telemetry and recommendation service."""


def _load_or_die(config_path: str):
    try:
        return load_config(config_path)
    except ConfigError as exc:
        for err in exc.errors:
            click.echo(f"config error: {err}", err=True)
        sys.exit(2)


@main.command()
@click.option("--config", "config_path", envvar="GAIA_CONFIG", required=True, type=click.Path())
def serve(config_path: str):
    """Run the service until interrupted."""
    from .service import BindError, run

    cfg = _load_or_die(config_path)
    try:
        handle = run(cfg)
    except BindError as exc:
        click.echo(f"bind error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"listening on {handle.base_url}")
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    try:
        stop.wait()
    finally:
        handle.stop()


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--from", "from_", required=True, help="simulation start (ISO-8601)")
@click.option("--to", required=True, help="simulation end (ISO-8601, exclusive)")
@click.option("--out", type=click.Path(), default=None, help="write readings CSV here")
@click.option("--post", "post_url", default=None, help="POST readings to this service base URL")
@click.option("--batch", default=500, show_default=True, help="readings per POST")
@click.option("--token", default=None, help="bearer token for --post")
def sim(config_path, from_, to, out, post_url, batch, token):
    """Generate a deterministic reading stream from a sim config."""
    with open(config_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    tree_file = doc.get("tree_file")
    if not tree_file:
        click.echo("sim config needs a tree_file", err=True)
        sys.exit(2)
    import os

    tree_path = os.path.join(os.path.dirname(os.path.abspath(config_path)), tree_file)
    with open(tree_path, encoding="utf-8") as fh:
        tree = build_resource_tree(json.load(fh).get("nodes", []))
    cfg = config_from_doc(doc, tree)
    t0, t1 = parse_ts(from_), parse_ts(to)
    readings = simulate(cfg, t0, t1)
    if out:
        with open(out, "w", encoding="ascii") as fh:
            n = write_csv(readings, fh)
        click.echo(f"wrote {n} readings to {out}")
    elif post_url:
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        n = 0
        with httpx.Client(base_url=post_url, headers=headers, timeout=30.0) as client:
            pending = []
            for r in readings:
                pending.append(
                    {
                        "resource": r.resource_path,
                        "kind": r.kind.value,
                        "timestamp": format_ts(r.ts),
                        "value": r.value,
                        "source": r.source.value,
                    }
                )
                if len(pending) >= batch:
                    client.post("/api/v1/readings", json=pending).raise_for_status()
                    n += len(pending)
                    pending = []
            if pending:
                client.post("/api/v1/readings", json=pending).raise_for_status()
                n += len(pending)
        click.echo(f"posted {n} readings to {post_url}")
    else:
        n = write_csv(readings, sys.stdout)
        click.echo(f"# {n} readings", err=True)


@main.group()
def rules():
    """Inspect and edit rules on a running service."""


def _client(url: str, token: str | None) -> httpx.Client:
    headers = {"Authorization": f"Bearer {token}"} if token else {}
    return httpx.Client(base_url=url, headers=headers, timeout=10.0)


@rules.command("list")
@click.option("--url", required=True)
@click.option("--target", required=True, help="resource path")
def rules_list(url, target):
    with _client(url, None) as client:
        resp = client.get(f"/api/v1/resources/{target}/rules")
        resp.raise_for_status()
        click.echo(json.dumps(resp.json(), indent=2))


@rules.command("put")
@click.option("--url", required=True)
@click.option("--token", required=True)
@click.option("--target", required=True)
@click.option("--id", "rule_id", required=True)
@click.option("--file", "rule_file", required=True, type=click.Path(exists=True))
def rules_put(url, token, target, rule_id, rule_file):
    with open(rule_file, encoding="utf-8") as fh:
        body = json.load(fh)
    with _client(url, token) as client:
        resp = client.put(f"/api/v1/resources/{target}/rules/{rule_id}", json=body)
        if resp.status_code >= 400:
            click.echo(json.dumps(resp.json(), indent=2), err=True)
            sys.exit(1)
        click.echo(json.dumps(resp.json(), indent=2))


@rules.command("delete")
@click.option("--url", required=True)
@click.option("--token", required=True)
@click.option("--target", required=True)
@click.option("--id", "rule_id", required=True)
def rules_delete(url, token, target, rule_id):
    with _client(url, token) as client:
        resp = client.delete(f"/api/v1/resources/{target}/rules/{rule_id}")
        if resp.status_code >= 400:
            click.echo(json.dumps(resp.json(), indent=2), err=True)
            sys.exit(1)
        click.echo(f"deleted {rule_id}")


@main.command()
@click.option("--url", required=True)
@click.option("--token", required=True)
@click.option("--series", required=True, help="target series id")
@click.option("--file", "csv_file", required=True, type=click.Path(exists=True))
@click.option("--interval", default=900, show_default=True, type=click.Choice(["900", "3600"], case_sensitive=False))
def upload(url, token, series, csv_file, interval):
    """Upload an interval-energy CSV (header: timestamp,value)."""
    with open(csv_file, "rb") as fh:
        content = fh.read()
    with _client(url, token) as client:
        resp = client.post(
            f"/api/v1/uploads/{series}",
            params={"interval": int(interval)},
            content=content,
            headers={"Content-Type": "text/csv"},
        )
        if resp.status_code >= 400:
            click.echo(resp.text, err=True)
            sys.exit(1)
        click.echo(json.dumps(resp.json(), indent=2))


if __name__ == "__main__":
    main()
