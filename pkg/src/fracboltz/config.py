"""Flat ``section.key = value`` experiment configurations.

Lines are ``key = value``; ``#`` starts a comment.  Values parse as JSON when
possible (numbers, ``true``/``false``, arrays, objects), comma-separated
scalars become lists, anything else stays a string.
"""

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .charfn import RadialGrid, family_from_dict
from .errors import ConfigError, DomainError, FracBoltzError
from .evolve import SolverConfig
from .kernel import from_config as kernel_from_config


def parse_value(text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    try:
        return json.loads(text)
    except ValueError:
        pass
    if "," in text:
        return [parse_value(part) for part in text.split(",") if part.strip()]
    return text


def parse_text(text):
    flat = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key or " " in key:
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        if key in flat:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        flat[key] = parse_value(value)
    return flat


_SOLVER_FIELDS = {f.name for f in fields(SolverConfig)}


@dataclass
class ExperimentConfig:
    flat: dict = field(default_factory=dict)
    source: str = ""

    @classmethod
    def load(cls, path):
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls(parse_text(text), str(p))

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d), "<dict>")

    def section(self, name):
        pre = name + "."
        return {k[len(pre):]: v for k, v in self.flat.items() if k.startswith(pre)}

    def get(self, key, default=None):
        return self.flat.get(key, default)

    def has_section(self, name):
        return bool(self.section(name))

    # -- builders --------------------------------------------------------------
    def kernel(self, default=None):
        sec = self.section("kernel")
        if not sec:
            if default is None:
                raise ConfigError("missing kernel.* section")
            sec = default
        try:
            return kernel_from_config(sec)
        except (FracBoltzError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"kernel: {exc}") from exc

    def solver(self):
        sec = self.section("solver")
        unknown = set(sec) - _SOLVER_FIELDS
        if unknown:
            raise ConfigError(f"unknown solver keys: {sorted(unknown)}")
        if "n_schedule" in sec and not isinstance(sec["n_schedule"], list):
            sec["n_schedule"] = [sec["n_schedule"]]
        try:
            return SolverConfig(**sec).validate()
        except (DomainError, TypeError, ValueError) as exc:
            raise ConfigError(f"solver: {exc}") from exc

    def grid(self):
        sec = self.section("grid")
        try:
            return RadialGrid(float(sec.get("r_min", 1e-4)), float(sec.get("r_max", 1e2)),
                              int(sec.get("n", 512)))
        except (FracBoltzError, TypeError, ValueError) as exc:
            raise ConfigError(f"grid: {exc}") from exc

    def datum(self, name="datum"):
        sec = self.section(name)
        if not sec:
            raise ConfigError(f"missing {name}.* section")
        try:
            fam = family_from_dict(sec)
            fam.validate()
            return fam
        except (FracBoltzError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: {exc}") from exc

    def number(self, key, default):
        val = self.flat.get(key, default)
        try:
            val = float(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key} must be a number, got {val!r}") from exc
        if not math.isfinite(val):
            raise ConfigError(f"{key} must be finite")
        return val

    def output_dir(self, override=None):
        return Path(override or self.flat.get("output.dir", "out"))

    def seed(self, override=None):
        if override is not None:
            return int(override)
        return int(self.flat.get("seed", 0))

    def validate_physics(self, cs, cfg):
        """0 < alpha0 <= alpha, alpha < p for standard runs, delta_p >= 0."""
        if not cs.alpha0 > 0:
            raise ConfigError(f"alpha0 must be positive, got {cs.alpha0}")
        if cs.alpha0 > cfg.alpha and not cfg.diagnostic:
            raise ConfigError(f"need alpha0 <= alpha (alpha0={cs.alpha0}, alpha={cfg.alpha})")
        if cfg.alpha >= cfg.p and not cfg.diagnostic:
            raise ConfigError(f"need alpha < p (alpha={cfg.alpha}, p={cfg.p})")
        if cfg.delta_p < 0:
            raise ConfigError("delta_p must be nonnegative")
        if cs.kind == "powerlaw" and not cs.alpha0 > 2 * cs.s:
            raise ConfigError(f"power law needs alpha0 > 2s (alpha0={cs.alpha0}, s={cs.s})")

    def echo(self):
        return dict(sorted(self.flat.items()))
