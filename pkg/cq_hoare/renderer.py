"""Render case-study programs and summaries from Jinja2 templates."""

from __future__ import annotations

import logging
from importlib.resources import files as importlib_files
from pathlib import Path
from typing import TYPE_CHECKING, Any

from jinja2 import Environment, FileSystemLoader, StrictUndefined, select_autoescape

if TYPE_CHECKING:
    from cq_hoare.cases import CaseSpec

logger = logging.getLogger(__name__)

_TEMPLATES_REF = importlib_files("cq_hoare") / "templates"
_CORPUS_REF = importlib_files("cq_hoare") / "corpus"


def _get_jinja_env() -> Environment:
    return Environment(
        loader=FileSystemLoader(str(_TEMPLATES_REF)),
        autoescape=select_autoescape(default=False),
        undefined=StrictUndefined,
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
    )


def render_program(name: str, **params: Any) -> str:
    """Source text of the ``<name>.cq.j2`` program template."""
    template = _get_jinja_env().get_template(f"{name}.cq.j2")
    return template.render(**params)


def render_case_summary(case: CaseSpec) -> str:
    """Markdown table of a case study's parameters and reference quantities."""
    template = _get_jinja_env().get_template("case_summary.md.j2")
    return template.render(case=case)


def corpus_files() -> list[str]:
    """Names of the example files shipped with the package."""
    return sorted(p.name for p in _CORPUS_REF.iterdir() if not p.name.startswith("_"))


def corpus_text(name: str) -> str:
    path = _CORPUS_REF / name
    if not path.is_file():
        raise FileNotFoundError(f"no corpus file named {name!r}")
    return path.read_text(encoding="utf-8")


def write_case(case: CaseSpec, output_dir: Path) -> list[str]:
    """Write program, pre/postcondition and summary files; return the written paths."""
    output_dir.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    outputs = [
        (f"{case.name}.cq", case.source),
        (f"{case.name}.pre.cqa", case.pre),
        (f"{case.name}.post.cqa", case.post),
        (f"{case.name}.md", render_case_summary(case)),
    ]
    for filename, content in outputs:
        if content is None:
            continue
        path = output_dir / filename
        path.write_text(content, encoding="utf-8")
        written.append(str(path))
        logger.info("Wrote %s", path)
    return written


__all__ = ["corpus_files", "corpus_text", "render_case_summary", "render_program", "write_case"]
