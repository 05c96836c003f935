"""Format-agnostic TOML/JSON/YAML loading with syntax error handling.

This module is the I/O layer of the run configuration. It can load text or files and convert
them to Python objects by trying the TOML, JSON and YAML parsers in sequence. Syntax errors are
collected so the CLI can display them in a user-friendly way.
"""

from __future__ import annotations

import errno
import json
import tomllib
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

from yaml import YAMLError, safe_load

Format = Literal["auto", "toml", "json", "yaml"]
Parser = Literal["toml", "json", "yaml"]

_SEARCH_PREFIXES: tuple[str, ...] = ("certsensor", "config")
_SEARCH_EXTENSIONS: tuple[str, ...] = (".toml", ".yaml", ".yml", ".json")
_SUFFIX_FORMATS: dict[str, Format] = {
    ".toml": "toml",
    ".json": "json",
    ".yml": "yaml",
    ".yaml": "yaml",
}


@dataclass(slots=True)
class SyntaxIssue:
    """Describe a syntax error detected by a parser."""

    parser: Parser
    message: str
    source: str | None = None
    line: int | None = None
    column: int | None = None
    hint: str | None = None

    def format_location(self) -> str:
        source = self.source or "<string>"
        if self.line is None:
            return source
        if self.column is None:
            return f"{source}:{self.line}"
        return f"{source}:{self.line}:{self.column}"

    def to_message(self) -> str:
        location = self.format_location()
        if self.hint:
            return f"[{self.parser}] {location}: {self.message} ({self.hint})"
        return f"[{self.parser}] {location}: {self.message}"


class ConfigSyntaxError(Exception):
    """Raised when the configuration has syntax errors."""

    def __init__(self, issues: Iterable[SyntaxIssue]):
        self.issues = list(issues)
        if not self.issues:
            raise ValueError("ConfigSyntaxError requires at least one error")
        super().__init__("\n".join(issue.to_message() for issue in self.issues))


def _iter_search_directories(start: Path) -> Iterator[Path]:
    current = start
    while True:
        yield current
        if (current / ".git").exists():
            break
        parent = current.parent
        if parent == current:
            break
        current = parent


def _format_not_found(message: str, *, filename: str | None = None) -> FileNotFoundError:
    return FileNotFoundError(errno.ENOENT, message, filename)


def locate_config_file(
    name: str | Path | None = None, *, start_dir: Path | None = None
) -> Path:
    """Locate a run configuration file.

    1. An explicit ``name`` is resolved against ``start_dir`` (or used as is when absolute).
    2. Otherwise candidates must end with ``.toml``, ``.yaml``, ``.yml`` or ``.json`` and start
       with ``certsensor`` (preferred) or ``config``.
    3. Lookup walks up from ``start_dir`` (default: current directory) until the filesystem root
       or the first directory containing a ``.git`` entry.
    """

    start_dir = (start_dir or Path.cwd()).resolve()

    if name is not None:
        candidate = Path(name)
        if not candidate.is_absolute():
            candidate = (start_dir / candidate).resolve()
        if candidate.is_file():
            return candidate
        message = f"Could not find configuration file '{name}'."
        raise _format_not_found(message, filename=str(name))

    for directory in _iter_search_directories(start_dir):
        for prefix in _SEARCH_PREFIXES:
            for extension in _SEARCH_EXTENSIONS:
                for path in sorted(directory.glob(f"{prefix}*{extension}")):
                    if path.is_file():
                        return path

    message = f"Could not locate a configuration file starting from '{start_dir}'."
    raise _format_not_found(message)


def _format_toml_issue(source: str | None, err: tomllib.TOMLDecodeError) -> SyntaxIssue:
    # Messages look like "Expected '=' after a key in a key/value pair (at line 2, column 5)"
    message = str(err)
    line: int | None = getattr(err, "lineno", None)
    column: int | None = getattr(err, "colno", None)
    head, sep, tail = message.rpartition(" (at line ")
    if sep:
        message = head
        if line is None:
            position = tail.rstrip(")").split(", column ")
            line = int(position[0])
            column = int(position[1]) if len(position) > 1 else None
    return SyntaxIssue(parser="toml", message=message, source=source, line=line, column=column)


def _format_json_issue(source: str | None, err: json.JSONDecodeError) -> SyntaxIssue:
    hint = None
    if "Expecting property name" in err.msg:
        hint = "JSON keys must be enclosed in double quotes"
    return SyntaxIssue(
        parser="json",
        message=err.msg,
        source=source,
        line=err.lineno,
        column=err.colno,
        hint=hint,
    )


def _format_yaml_issue(source: str | None, err: YAMLError) -> SyntaxIssue:
    mark = getattr(err, "problem_mark", None)
    problem = getattr(err, "problem", None)
    context = getattr(err, "context", None)
    return SyntaxIssue(
        parser="yaml",
        message=str(problem) if problem else (str(err).strip() or "Unknown YAML error"),
        source=source,
        line=None if mark is None else mark.line + 1,
        column=None if mark is None else mark.column + 1,
        hint=str(context) if problem and context else None,
    )


# Order tried by `format="auto"`.
_PARSERS: tuple[tuple[Parser, Callable[[str], Any], type[Exception], Callable[..., SyntaxIssue]], ...] = (
    ("toml", tomllib.loads, tomllib.TOMLDecodeError, _format_toml_issue),
    ("json", json.loads, json.JSONDecodeError, _format_json_issue),
    ("yaml", safe_load, YAMLError, _format_yaml_issue),
)


def load_text(text: str, *, source: str | None = None, format: Format = "auto") -> Any:
    """Load TOML, JSON or YAML text.

    Parameters
    ----------
    text:
        Configuration content.
    source:
        File name or stream identifier, only used for error messages.
    format:
        "toml", "json", "yaml" or "auto" to try all of them in that order.
    """

    if format not in ("auto", "toml", "json", "yaml"):
        raise ValueError(f"Unknown format: {format}")

    issues: list[SyntaxIssue] = []
    for parser, parse, error_type, describe in _PARSERS:
        if format not in (parser, "auto"):
            continue
        try:
            return parse(text)
        except error_type as exc:
            issues.append(describe(source, exc))
    raise ConfigSyntaxError(issues)


def load_file(
    path: str | Path | None = None,
    *,
    format: Format = "auto",
    encoding: str = "utf-8",
    start_dir: Path | None = None,
) -> Any:
    """Load a configuration from a file, picking the parser from the file suffix."""

    resolved_path = locate_config_file(path, start_dir=start_dir)

    if format == "auto":
        format = _SUFFIX_FORMATS.get(resolved_path.suffix.lower(), "auto")

    text = resolved_path.read_text(encoding=encoding)
    return load_text(text, source=str(resolved_path), format=format)


__all__ = ["ConfigSyntaxError", "SyntaxIssue", "load_file", "load_text", "locate_config_file"]
