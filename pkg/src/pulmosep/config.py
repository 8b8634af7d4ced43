"""Run configuration: defaults, validation, and flat key=value files."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

METHODS = ("pc-dae-c", "pc-dae-f", "dc-dae", "pc-nmf", "dc-nmf")
SEED_ENV_VAR = "PULMO_SEED"


@dataclass
class RunConfig:
    frame_len: int = 2048
    hop: int = 128
    band_hi: int = 300
    method: str = "pc-dae-c"
    mask_mode: str = "mask"
    mask_base: str = "mixture"
    high_band: str = "zero"
    epochs: int = 300
    lr: float = 1e-3
    batch: int = 128
    nmf_rank: int = 20
    nmf_iters: int = 200
    lambda_sparsity: float = 0.1
    seed: int = 17

    def validate(self) -> "RunConfig":
        if self.frame_len < 2 or self.frame_len % 2 != 0:
            raise ValueError("frame_len must be a positive even number")
        if not 0 < self.hop <= self.frame_len:
            raise ValueError("hop must be in (0, frame_len]")
        if not 0 < self.band_hi <= self.frame_len // 2:
            raise ValueError("band_hi must be in (0, frame_len/2]")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {', '.join(METHODS)}")
        if self.mask_mode not in ("mask", "direct"):
            raise ValueError("mask_mode must be 'mask' or 'direct'")
        if self.mask_base not in ("mixture", "reconstruction"):
            raise ValueError("mask_base must be 'mixture' or 'reconstruction'")
        if self.high_band not in ("zero", "mixture"):
            raise ValueError("high_band must be 'zero' or 'mixture'")
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.nmf_rank < 1 or self.nmf_iters < 1:
            raise ValueError("nmf_rank and nmf_iters must be positive")
        if self.lambda_sparsity < 0:
            raise ValueError("lambda_sparsity must be nonnegative")
        return self

    def lines(self) -> list:
        """key = value lines, suitable for manifests and config files."""
        return [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def parse_config_file(path) -> dict:
    """Read flat ``key = value`` lines; '#' starts a comment line."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            cast = _CASTS[_FIELD_TYPES[key]]
            try:
                values[key] = cast(value.strip())
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def build_config(config_path=None, overrides=None, env=None) -> RunConfig:
    """Defaults, then PULMO_SEED, then config file, then explicit flags."""
    env = os.environ if env is None else env
    cfg = RunConfig()
    if SEED_ENV_VAR in env:
        try:
            cfg.seed = int(env[SEED_ENV_VAR])
        except ValueError as exc:
            raise ValueError(f"{SEED_ENV_VAR} must be an integer") from exc
    if config_path is not None:
        for key, value in parse_config_file(config_path).items():
            setattr(cfg, key, value)
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()
