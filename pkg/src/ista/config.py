"""Pipeline configuration: one flat key-value file, fully validated up front.

The format is deliberately plain: one ``key = value`` per line, ``#`` starts
a comment, blank lines are ignored.  Unknown keys are rejected rather than
skipped so a typo cannot silently fall back to a default.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class PipelineConfig:
    """Every tunable of the pipeline, with working-scale defaults.

    `final_dim` defaults to a desk-scale value; large corpora typically want
    a much higher target.  `variance_target` has one active value per run;
    grids from a lighter backbone usually want it raised to 0.95.  The three
    path keys are optional defaults for the CLI stages and may stay empty
    when paths come from the command line.
    """

    codebook_size: int = 32
    radius: int = 1
    variance_target: float = 0.8
    min_pair_count: int = 100
    alpha: float = 0.5
    eps: float = 1e-12
    keep_ratio: float = 0.4
    final_dim: int = 512
    whiten: bool = True
    renorm: bool = True
    seed: int = 0
    max_iters: int = 100
    sample_cap: int = 500_000
    threads: int = 1
    train_dir: str = ""
    reduction_dir: str = ""
    ground_truth: str = ""

    def validate(self) -> "PipelineConfig":
        def require(ok: bool, message: str) -> None:
            if not ok:
                raise ConfigError(message)

        require(self.codebook_size >= 1, f"codebook_size must be >= 1, got {self.codebook_size}")
        require(self.radius >= 1, f"radius must be >= 1, got {self.radius}")
        require(0.0 < self.variance_target <= 1.0,
                f"variance_target must be in (0, 1], got {self.variance_target}")
        require(self.min_pair_count >= 1, f"min_pair_count must be >= 1, got {self.min_pair_count}")
        require(0.0 < self.alpha <= 1.0, f"alpha must be in (0, 1], got {self.alpha}")
        require(self.eps > 0.0, f"eps must be positive, got {self.eps}")
        require(0.0 < self.keep_ratio <= 1.0, f"keep_ratio must be in (0, 1], got {self.keep_ratio}")
        require(self.final_dim >= 1, f"final_dim must be >= 1, got {self.final_dim}")
        require(0 <= self.seed < 2**64, f"seed must fit in u64, got {self.seed}")
        require(self.max_iters >= 1, f"max_iters must be >= 1, got {self.max_iters}")
        require(self.sample_cap >= 1, f"sample_cap must be >= 1, got {self.sample_cap}")
        require(self.threads >= 1, f"threads must be >= 1, got {self.threads}")
        return self


def _coerce(key: str, text: str, target_type: type):
    try:
        if target_type is bool:
            lowered = text.lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        return target_type(text)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {text!r} as {target_type.__name__}") from None


def parse_config(path: str | Path) -> PipelineConfig:
    """Read and validate a config file; any problem raises ConfigError."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    types = {f.name: f.type for f in fields(PipelineConfig)}
    # dataclass field types arrive as strings under deferred annotations
    py_types = {"int": int, "float": float, "bool": bool, "str": str}
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw_line in enumerate(f, start=1):
            line = raw_line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw_line.strip()!r}")
            key = key.strip()
            if key not in types:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            target = types[key]
            if isinstance(target, str):
                target = py_types[target]
            values[key] = _coerce(key, value.strip(), target)
    return PipelineConfig(**values).validate()
