"""Flat ``key = value`` run configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import DataError

# key -> (type, default)
KEYS = {
    "grid.height": (int, 64),
    "rig.n": (int, 20),
    "rig.fov": (float, 90.0),
    "eppa.sigma": (float, 1.0),
    "train.steps": (int, 2000),
    "train.lr": (float, 1e-3),
    "sample.ddim_steps": (int, 50),
    "seed": (int, 0),
}
PATH_PREFIX = "paths."


@dataclass(frozen=True)
class RunConfig:
    grid_height: int = 64
    rig_n: int = 20
    rig_fov: float = 90.0
    eppa_sigma: float = 1.0
    train_steps: int = 2000
    train_lr: float = 1e-3
    sample_ddim_steps: int = 50
    seed: int = 0
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rig_n != 20:
            raise DataError("rig.n is fixed at 20 (icosahedral rig)")
        if self.grid_height < 4 or self.grid_height % 2:
            raise DataError("grid.height must be an even integer >= 4")
        if not 0 < self.rig_fov < 180:
            raise DataError("rig.fov must lie in (0, 180)")
        if self.eppa_sigma <= 0:
            raise DataError("eppa.sigma must be positive")
        if self.train_steps < 1 or self.sample_ddim_steps < 1:
            raise DataError("step counts must be positive")

    def with_seed(self, seed: int | None) -> "RunConfig":
        return self if seed is None else replace(self, seed=seed)

    def path(self, name: str, default=None):
        value = self.paths.get(name, default)
        return None if value is None else Path(value)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values, paths = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep or not key:
            raise DataError(f"{source}:{lineno}: expected 'key = value'")
        if key.startswith(PATH_PREFIX) and len(key) > len(PATH_PREFIX):
            paths[key[len(PATH_PREFIX):]] = value
            continue
        if key not in KEYS:
            raise DataError(f"{source}:{lineno}: unknown key {key!r}")
        kind = KEYS[key][0]
        try:
            values[key.replace(".", "_")] = kind(value)
        except ValueError:
            raise DataError(f"{source}:{lineno}: {key} expects {kind.__name__}, got {value!r}") from None
    return RunConfig(**values, paths=paths)


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def dump_config(cfg: RunConfig) -> str:
    lines = [f"{k} = {getattr(cfg, k.replace('.', '_'))}" for k in KEYS]
    lines += [f"{PATH_PREFIX}{k} = {v}" for k, v in sorted(cfg.paths.items())]
    return "\n".join(lines) + "\n"
