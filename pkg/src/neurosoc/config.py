"""Line-oriented ``key = value`` configuration files."""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    pass


def read_kv(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {p}: {e.strerror}") from None
    out: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{p}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{p}:{n}: empty key")
        if key in out:
            raise ConfigError(f"{p}:{n}: duplicate key {key!r}")
        out[key] = value
    return out


def write_kv(path, values: dict) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in values.items()))


def get_typed(kv: dict[str, str], key: str, default, cast=None):
    if key not in kv:
        return default
    cast = cast or type(default)
    try:
        if cast is bool:
            v = kv[key].lower()
            if v not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(v)
            return v in ("true", "1", "yes")
        return cast(kv[key])
    except ValueError:
        raise ConfigError(f"bad value for {key}: {kv[key]!r}") from None
