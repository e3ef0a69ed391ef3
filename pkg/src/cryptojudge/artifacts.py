"""Artifact writing for pipeline outputs.

Every file goes through ``write_atomic`` (temp file then rename) so a crashed
run never leaves a half-written artifact. Nothing here stamps wall-clock time:
reruns with the same seed produce byte-identical files.
"""

import json
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import pandas as pd
from pydantic import BaseModel


def write_atomic(path: Path, text: str) -> Path:
    """Write text to ``path`` via a sibling ``.tmp`` file and rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)
    return path


def csv_text(frame: pd.DataFrame) -> str:
    """CSV rendering with repr floats so reloads are exact."""
    return frame.to_csv(index=False, lineterminator="\n", float_format=None)


def markdown_table(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """Render a GitHub-flavoured markdown table."""
    lines = [
        "| " + " | ".join(headers) + " |",
        "|" + "|".join("---" for _ in headers) + "|",
    ]
    for row in rows:
        lines.append("| " + " | ".join(_cell(v) for v in row) + " |")
    return "\n".join(lines)


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


class ArtifactWriter:
    """Write JSON, CSV and markdown artifacts into one output directory."""

    def __init__(self, output_dir: Path | None = None):
        self.output_dir = output_dir or Path("outputs")

    def path(self, filename: str) -> Path:
        return self.output_dir / filename

    def save_json(self, filename: str, data: BaseModel | dict[str, Any] | list[Any]) -> Path:
        """Save a model (``model_dump_json``) or plain JSON data."""
        if isinstance(data, BaseModel):
            text = data.model_dump_json(indent=2)
        else:
            text = json.dumps(data, indent=2)
        return write_atomic(self.path(filename), text + "\n")

    def save_jsonl(self, filename: str, records: Sequence[BaseModel]) -> Path:
        """Save one compact JSON object per line."""
        return write_atomic(self.path(filename), "".join(r.model_dump_json() + "\n" for r in records))

    def save_csv(self, filename: str, frame: pd.DataFrame) -> Path:
        return write_atomic(self.path(filename), csv_text(frame))

    def save_text(self, filename: str, text: str) -> Path:
        return write_atomic(self.path(filename), text)
