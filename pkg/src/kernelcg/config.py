"""Experiment configuration: strict JSON schema, defaults and validation.

Unknown keys are rejected. Validation errors carry the line of the
offending key in the source document.
"""

import json
import math
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .exceptions import ConfigError

__all__ = [
    "NoiseConfig",
    "ProblemConfig",
    "StoppingSpec",
    "CGMethod",
    "FilterMethod",
    "CGHoldoutMethod",
    "AuditConfig",
    "ExperimentConfig",
    "ConfigValidationError",
    "load_config",
    "validate_config",
    "hypothesis_warnings",
]

DEFAULT_N_GRID = [128, 256, 512, 1024, 2048, 4096]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class NoiseConfig(_Strict):
    kind: Literal["bounded_uniform", "gaussian_truncated", "gaussian"] = "gaussian"
    M: float = Field(0.1, ge=0)


class ProblemConfig(_Strict):
    s: float = Field(1.0, gt=0, le=1)
    r: float = Field(0.5, ge=0)
    rho: float = Field(1.0, gt=0)
    p: int = Field(2048, ge=1)
    noise: NoiseConfig = NoiseConfig()
    semi_supervised: bool = False
    gamma_unlabeled: float = Field(0.1, gt=0, lt=1)


class StoppingSpec(_Strict):
    """Stopping-rule settings; ``None`` for ``M``, ``D``, ``r``, ``s`` or ``rho``
    means "take it from the problem" (``M`` from the noise scale, ``D`` from
    the problem's certified constant floored at 1)."""

    rule: Literal["A_adaptive", "B_fixed", "fixed_iteration"] = "A_adaptive"
    tau: float = Field(2.0, gt=1)
    tau_prime: float = Field(2.0, gt=1.5)
    gamma: float = Field(0.1, gt=0, lt=1)
    M: Optional[float] = Field(None, ge=0)
    D: Optional[float] = Field(None, ge=1)
    r: Optional[float] = Field(None, ge=0)
    s: Optional[float] = Field(None, gt=0, le=1)
    rho: Optional[float] = Field(None, gt=0)
    eta_over_delta_mode: Literal["nemirovskii", "paper_literal"] = "nemirovskii"
    m: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _fixed_needs_m(self):
        if self.rule == "fixed_iteration" and self.m is None:
            raise ValueError("fixed_iteration needs the iteration index m")
        return self


class CGMethod(_Strict):
    kind: Literal["cg"] = "cg"
    id: Optional[str] = None
    l: int = Field(1, ge=0, le=4)
    max_iters: Optional[int] = Field(None, ge=1, le=200)
    stopping: StoppingSpec = StoppingSpec()

    @model_validator(mode="after")
    def _rule_needs_l1(self):
        if self.l != 1 and self.stopping.rule != "fixed_iteration":
            raise ValueError("discrepancy rules are defined for l = 1 only; use fixed_iteration or cg_holdout")
        return self


class FilterMethod(_Strict):
    kind: Literal["filter"] = "filter"
    id: Optional[str] = None
    family: Literal["tikhonov", "spectral_cutoff", "landweber"] = "tikhonov"
    grid: List[float] = Field(default_factory=lambda: [10.0 ** (-k / 2) for k in range(2, 15)])
    step: Optional[float] = Field(None, gt=0)
    holdout_fraction: float = Field(0.2, gt=0, lt=1)

    @field_validator("grid")
    @classmethod
    def _positive(cls, grid):
        if not grid or any(not v > 0 for v in grid):
            raise ValueError("grid must be a non-empty list of positive values")
        return grid


class CGHoldoutMethod(_Strict):
    kind: Literal["cg_holdout"] = "cg_holdout"
    id: Optional[str] = None
    l: int = Field(1, ge=0, le=4)
    max_iters: int = Field(50, ge=1, le=200)
    holdout_fraction: float = Field(0.2, gt=0, lt=1)


Method = Annotated[Union[CGMethod, FilterMethod, CGHoldoutMethod], Field(discriminator="kind")]


class AuditConfig(_Strict):
    n: int = Field(200, ge=1)
    gamma: float = Field(0.1, gt=0, lt=1)
    n_trials: int = Field(200, ge=1)
    lam: Optional[float] = Field(None, gt=0)


class ExperimentConfig(_Strict):
    mode: Literal["rates", "audit", "single_run"] = "rates"
    seed: int = Field(0, ge=0)
    replicates: int = Field(20, ge=1)
    n_grid: List[int] = Field(default_factory=lambda: list(DEFAULT_N_GRID))
    output_dir: str = "results"
    problem: ProblemConfig = ProblemConfig()
    methods: List[Method] = Field(default_factory=lambda: [CGMethod()])
    audit: AuditConfig = AuditConfig()
    timing_in_results: bool = False

    @field_validator("n_grid")
    @classmethod
    def _increasing(cls, grid):
        if not grid:
            raise ValueError("n_grid must not be empty")
        if any(n < 2 for n in grid):
            raise ValueError("sample sizes must be at least 2")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("n_grid must be strictly increasing")
        return grid

    @field_validator("methods")
    @classmethod
    def _nonempty(cls, methods):
        if not methods:
            raise ValueError("at least one method is required")
        return methods

    def method_ids(self):
        """Unique identifiers, generated as ``<kind>_<index>`` where not given."""
        ids = []
        for k, m in enumerate(self.methods):
            ids.append(m.id if m.id is not None else f"{m.kind}_{k}")
        return ids

    @model_validator(mode="after")
    def _unique_ids(self):
        ids = self.method_ids()
        if len(set(ids)) != len(ids):
            raise ValueError(f"method ids must be unique, got {ids}")
        return self


class ConfigValidationError(ConfigError):
    """Carries every problem found in a configuration document."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def hypothesis_warnings(cfg):
    """Warnings for guarantee hypotheses the configuration does not meet."""
    out = []
    pr = cfg.problem
    for mid, m in zip(cfg.method_ids(), cfg.methods):
        if m.kind != "cg":
            continue
        rule = m.stopping.rule
        if rule == "A_adaptive" and pr.r < 0.5:
            out.append(f"{mid}: rule A assumes r >= 1/2, problem has r = {pr.r}")
        if rule == "B_fixed" and pr.r < 0.5 and not pr.semi_supervised:
            out.append(f"{mid}: rule B assumes r >= 1/2 without unlabeled data, problem has r = {pr.r}")
    if pr.semi_supervised and pr.r + pr.s < 0.5:
        out.append(
            f"problem: semi-supervised guarantee needs r + s >= 1/2, got {pr.r} + {pr.s} = {pr.r + pr.s}"
        )
    return out


def _locate(text, path):
    """Character offset of the value at ``path`` in the JSON ``text`` (best effort)."""
    decoder = json.JSONDecoder()
    ws = " \t\r\n"

    def skip(i):
        while i < len(text) and text[i] in ws:
            i += 1
        return i

    pos = skip(0)
    key_pos = pos
    for part in path:
        pos = skip(pos)
        if pos >= len(text):
            return key_pos
        if text[pos] == "{" and isinstance(part, str):
            i = skip(pos + 1)
            found = False
            while i < len(text) and text[i] == '"':
                start = i
                key, i = json.decoder.scanstring(text, i + 1)
                i = skip(i)
                i = skip(i + 1)  # ':'
                if key == part:
                    pos, key_pos, found = i, start, True
                    break
                _, i = decoder.raw_decode(text, i)
                i = skip(i)
                if i < len(text) and text[i] == ",":
                    i = skip(i + 1)
            if not found:
                return key_pos
        elif text[pos] == "[" and isinstance(part, int):
            i = skip(pos + 1)
            for _ in range(part):
                _, i = decoder.raw_decode(text, i)
                i = skip(i)
                if i < len(text) and text[i] == ",":
                    i = skip(i + 1)
            pos = key_pos = i
        else:
            return key_pos
    return key_pos


def _line_of(text, offset):
    return text.count("\n", 0, offset) + 1


def _format_loc(loc):
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += ("." if out else "") + str(part)
    return out or "<root>"


def parse_config(text):
    """Parse and validate a configuration document.

    Raises
    ------
    ConfigValidationError
        With one ``"line N: field: message"`` entry per problem.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigValidationError([f"line {exc.lineno}: invalid JSON: {exc.msg}"]) from None
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        errors = []
        for err in exc.errors():
            # discriminated unions add the tag to the location
            loc = [p for p in err["loc"] if p not in ("cg", "filter", "cg_holdout")]
            line = _line_of(text, _locate(text, loc))
            msg = err["msg"]
            if err["type"] != "extra_forbidden" and "input" in err and not isinstance(err["input"], (dict, list)):
                msg += f" (got {err['input']!r})"
            if err["type"] == "extra_forbidden":
                msg = "unknown key"
            errors.append(f"line {line}: {_format_loc(loc)}: {msg}")
        raise ConfigValidationError(errors) from None


def load_config(path):
    return parse_config(Path(path).read_text())


def validate_config(path):
    """Load ``path`` and return ``(normalized_config_dict, warnings)``.

    The normalized dictionary echoes every resolved default.
    """
    cfg = load_config(path)
    normalized = cfg.model_dump(mode="json")
    for m, mid in zip(normalized["methods"], cfg.method_ids()):
        m["id"] = mid
    return normalized, hypothesis_warnings(cfg)


def finite_or_none(x):
    return x if x is not None and math.isfinite(x) else None
