"""
report.py

Markdown reports rendered from templates/ next to the CSV outputs:

    summary.md         one table row per method (run) or grid point (ablate)
    verify_report.md   every property check with its residual
"""

from pathlib import Path

from jinja2 import Environment, FileSystemLoader

BASE_DIR = Path(__file__).parent
TEMPLATES_DIR = BASE_DIR / "templates"


def format_number(value, digits: int = 4) -> str:
    if value is None or value == "":
        return "-"
    if isinstance(value, float):
        return f"{value:.{digits}g}"
    return str(value)


def _environment() -> Environment:
    env = Environment(loader=FileSystemLoader(TEMPLATES_DIR), keep_trailing_newline=True)
    env.filters["num"] = format_number
    return env


def render_summary(rows: list, manifest: dict, title: str = "Run summary") -> str:
    columns = []
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    return _environment().get_template("summary.md.j2").render(
        title=title, rows=rows, columns=columns, manifest=manifest,
    )


def render_verify_report(results: list, preset: str) -> str:
    return _environment().get_template("verify_report.md.j2").render(
        preset=preset,
        results=results,
        passed=sum(r.passed for r in results),
        total=len(results),
    )


def write_summary(rows: list, manifest: dict, out_dir, title: str = "Run summary") -> Path:
    path = Path(out_dir) / "summary.md"
    path.write_text(render_summary(rows, manifest, title))
    return path


def write_verify_report(results: list, preset: str, out_dir) -> Path:
    path = Path(out_dir) / "verify_report.md"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_verify_report(results, preset))
    return path
