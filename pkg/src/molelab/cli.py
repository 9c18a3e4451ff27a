"""Command line: ``molelab run|validate|describe-methods``."""

from __future__ import annotations

import json
import logging
import sys

import click

from . import workflow


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more log output.")
def main(verbose):
    """Run reproducible model-exploration workflows."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
def run(config):
    """Execute the workflow in CONFIG and write its outputs."""
    try:
        cfg = workflow.parse_workflow(config)
    except workflow.WorkflowError as exc:
        click.echo(f"invalid workflow: {exc}", err=True)
        sys.exit(2)
    try:
        manifest = workflow.execute(cfg)
    except Exception as exc:
        click.echo(f"workflow failed: {type(exc).__name__}: {exc}", err=True)
        sys.exit(1)
    for f in manifest["files"]:
        click.echo(str(cfg.output_dir / f))


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
def validate(config):
    """Check CONFIG and print it with every default filled in."""
    try:
        cfg = workflow.parse_workflow(config)
    except workflow.WorkflowError as exc:
        click.echo(f"invalid workflow: {exc}", err=True)
        sys.exit(2)
    click.echo(json.dumps(cfg.echo(), indent=2, sort_keys=True))


@main.command("describe-methods")
def describe_methods():
    """List the exploration methods and their settings."""
    click.echo(workflow.describe_methods())


if __name__ == "__main__":
    main()
