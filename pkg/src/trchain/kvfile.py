"""Plain-text ``key = value`` files: one pair per line, ``#`` starts a comment."""
from __future__ import annotations

from pathlib import Path

from .errors import FormatError


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise FormatError(f"line {lineno}: empty key")
        if key in out:
            raise FormatError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv(path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    return parse_kv(text)


def dump_kv(pairs: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in pairs.items())


def parse_int(value: str, what: str) -> int:
    """Decimal or 0x-prefixed hex."""
    try:
        return int(value, 0)
    except ValueError:
        raise FormatError(f"{what}: not an integer: {value!r}") from None


def parse_bool(value: str, what: str) -> bool:
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise FormatError(f"{what}: not a boolean: {value!r}")
