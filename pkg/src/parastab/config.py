"""Flat key=value run configuration: parsing, canonical echo, hashing.

The format is one `key=value` per line with `#` comments, chosen so configs
stay language-neutral and diffable. The canonical echo sorts keys and
prints one pair per line; hashing the echo gives the run identity that the
manifest records. Parsing an echo reproduces the mapping exactly.
"""
from __future__ import annotations

import hashlib


def parse_config_text(text: str) -> dict:
    """Parse flat key=value lines; `#` starts a comment, blanks are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno} is not key=value: {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"config line {lineno} has an empty key: {raw!r}")
        out[key] = value.strip()
    return out


def parse_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def canonical_echo(cfg: dict) -> str:
    """Sorted key=value lines with a trailing newline; empty dict -> ''."""
    lines = [f"{k}={cfg[k]}" for k in sorted(cfg)]
    return "\n".join(lines) + ("\n" if lines else "")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_echo(cfg).encode("utf-8")).hexdigest()
