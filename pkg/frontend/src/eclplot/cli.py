"""Batch figure renderer: a JSON spec file in, static images out."""

import dataclasses
import json
import sys
from pathlib import Path

import click

from .artifacts import SchemaError
from .figures import FigureSpec, render


def _load_specs(spec_path: Path) -> list[FigureSpec]:
    doc = json.loads(spec_path.read_text())
    if isinstance(doc, dict):
        doc = doc.get("figures")
    if not isinstance(doc, list):
        raise click.UsageError(
            f"{spec_path}: expected a JSON list or an object with a "
            f"'figures' list")
    try:
        return [FigureSpec.from_dict(d) for d in doc]
    except (TypeError, ValueError) as exc:
        raise click.UsageError(f"{spec_path}: {exc}")


@click.command()
@click.option("--spec", "spec_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON file listing the figures to render.")
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path),
              help="Directory for the rendered images.")
def main(spec_path: Path, out_dir: Path):
    """Render every figure in a spec file.

    Input artifact paths in the spec are resolved against the spec file's
    directory; output paths are resolved against --out.  All figures are
    attempted; the exit status is 1 if any failed.
    """
    specs = _load_specs(spec_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = spec_path.parent
    failed = 0
    for spec in specs:
        spec = dataclasses.replace(spec.resolved(base),
                                   out=str(out_dir / spec.out))
        try:
            result = render(spec)
        except (SchemaError, OSError) as exc:
            click.echo(f"error: {spec.kind} -> {spec.out}: {exc}", err=True)
            failed += 1
            continue
        notes = f"  [{'; '.join(result.notes)}]" if result.notes else ""
        click.echo(f"wrote {result.path} ({spec.kind}){notes}")
    if failed:
        sys.exit(1)
