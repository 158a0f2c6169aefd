"""Experiment configuration: defaults, the quick profile, a JSON file and flag overrides.

Precedence, lowest first: built-in defaults, the quick profile, the config
file, command-line flags. The output directory additionally honours the
``QUASINORM_OUT`` environment variable, which sits between the file and the
``--out`` flag.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigurationError
from .variational import GNConstant, ProblemParams, critical_exponent, sobolev_exponent

OUT_ENV = "QUASINORM_OUT"
KINDS = ("verify-dual", "gn-estimate", "landscape", "minimize", "blowup", "mountain-pass", "subadditivity", "sweep")

QUICK_PROFILE = {
    "n": 512,
    "gn_grid_n": 512,
    "tol": 1e-5,
    "samples": 1 << 14,
    "verify_fields": 200,
    "mp_nodes": 16,
    "mp_thetas": [0.5, 0.75, 1.0],
    "mp_sweeps": 40,
    "mp_resolution": 1.0 / 12.0,
}


@dataclass
class ExperimentConfig:
    kind: str = "landscape"
    dimension: int = 3
    p: float = 2.5
    q: float = 5.8
    # absolute mass; when unset, a = a_fraction * (a* or a_bar* as appropriate)
    a: Optional[float] = None
    a_fraction: float = 0.5
    theta: float = 1.0
    radius: float = 20.0
    n: int = 2048
    tol: float = 1e-6
    safety_factor: float = 1.02
    seed: int = 0
    out_dir: Optional[str] = None
    quick: bool = False
    jobs: int = 1
    plots: bool = True
    experimental: bool = False
    gn_grid_radius: float = 12.0
    gn_grid_n: int = 2048
    gn_cache: Optional[str] = None
    # user-supplied E-kind constants (skip estimation when given)
    gn_p: Optional[float] = None
    gn_q: Optional[float] = None
    gn_critical: Optional[float] = None
    depth: float = 1e3
    samples: int = 100_000
    verify_fields: int = 1000
    landscape_points: int = 20
    pairs: list = field(default_factory=lambda: [[0.6, 0.3], [0.8, 0.4], [0.5, 0.2]])
    sweep_fractions: list = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    sweep_thetas: list = field(default_factory=lambda: [1.0])
    mp_nodes: int = 32
    mp_thetas: list = field(default_factory=lambda: [0.5, 0.625, 0.75, 0.875, 1.0])
    mp_sweeps: int = 150
    mp_resolution: float = 1.0 / 24.0

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def output_dir(self) -> Path:
        return Path(self.out_dir or "results")

    def problem(self, a: float, theta: Optional[float] = None, gn_p: Optional[GNConstant] = None,
                gn_q: Optional[GNConstant] = None) -> ProblemParams:
        return ProblemParams(self.dimension, self.p, self.q, a, self.theta if theta is None else theta,
                             gn_p=gn_p, gn_q=gn_q)

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.n < 16 or self.gn_grid_n < 16:
            raise ConfigurationError("requires n >= 16")
        if not self.radius > 0 or not self.gn_grid_radius > 0:
            raise ConfigurationError("requires radius > 0")
        if self.jobs < 1:
            raise ConfigurationError("requires jobs >= 1")
        if not self.tol > 0:
            raise ConfigurationError("requires tol > 0")
        if not self.safety_factor >= 1:
            raise ConfigurationError("requires safety_factor >= 1")
        if not self.a_fraction > 0:
            raise ConfigurationError("requires a_fraction > 0")
        if self.kind == "verify-dual":
            return self
        # exponent ordering and theta range, with messages naming the inequality
        ProblemParams(self.dimension, self.p, self.q, self.a if self.a is not None else 1.0, self.theta)
        crit = critical_exponent(self.dimension)
        if self.kind in ("minimize", "blowup", "subadditivity", "sweep") and self.q < crit - 1e-12:
            raise ConfigurationError(f"requires q >= 4 + 4/N = {crit:g} (got q={self.q:g})")
        if self.kind == "mountain-pass":
            if self.q <= crit + 1e-12:
                raise ConfigurationError(f"requires q > 4 + 4/N = {crit:g} (got q={self.q:g})")
            if self.q > sobolev_exponent(self.dimension) and not self.experimental:
                raise ConfigurationError(
                    f"requires q <= 2^* = {sobolev_exponent(self.dimension):g} (got q={self.q:g}); "
                    "use --experimental to run outside the proven range"
                )
        for a1, a2 in self.pairs:
            if not 0 < a2 < a1:
                raise ConfigurationError(f"requires 0 < a2 < a1 for each pair (got {a1}, {a2})")
        if any(not 0.5 <= t <= 1.0 for t in list(self.sweep_thetas) + list(self.mp_thetas)):
            raise ConfigurationError("requires theta in [1/2, 1]")
        return self


_FIELDS = {f.name for f in fields(ExperimentConfig)}


def load_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError("config file must hold a JSON object")
    unknown = set(data) - _FIELDS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def build(kind: str, file_values: Optional[dict] = None, flag_values: Optional[dict] = None,
          environ=None) -> ExperimentConfig:
    """Merge the layers; ``flag_values`` holds only flags the user actually passed."""
    environ = os.environ if environ is None else environ
    file_values = dict(file_values or {})
    flag_values = {k: v for k, v in (flag_values or {}).items() if v is not None}
    quick = flag_values.get("quick", file_values.get("quick", False))
    merged = {}
    if quick:
        merged.update(QUICK_PROFILE)
    merged.update(file_values)
    if environ.get(OUT_ENV):
        merged["out_dir"] = environ[OUT_ENV]
    merged.update(flag_values)
    merged["kind"] = kind
    merged["quick"] = bool(quick)
    try:
        cfg = ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None
    return cfg.validate()
