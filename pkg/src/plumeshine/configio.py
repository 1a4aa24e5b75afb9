"""Line-oriented ``key: value`` text used for config files and metadata sidecars."""

from __future__ import annotations

from pathlib import Path

__all__ = ["parse_kv_text", "format_kv_text", "read_kv_file", "write_kv_file", "sidecar_path"]


def parse_kv_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ValueError(f"line {lineno}: expected 'key: value', got {line!r}")
        key, value = line.split(":", 1)
        out[key.strip()] = value.strip()
    return out


def format_kv_text(pairs: dict[str, str]) -> str:
    return "".join(f"{k}: {v}\n" for k, v in pairs.items())


def read_kv_file(path: str | Path) -> dict[str, str]:
    return parse_kv_text(Path(path).read_text(encoding="utf-8"))


def write_kv_file(path: str | Path, pairs: dict[str, str]) -> None:
    Path(path).write_text(format_kv_text(pairs), encoding="utf-8")


def sidecar_path(data_path: str | Path) -> Path:
    p = Path(data_path)
    return p.with_name(p.stem + ".meta.json")
