"""Flat ``key = value`` experiment configuration.

Keys are dotted paths; ``#`` starts a comment. Lists are comma separated, and
``dyadic a..b`` expands to ``2**a, ..., 2**b``. Lengths and lags count time
steps; replicate, inner and path counts count independent draws.

Example::

    experiment = geometric-measures
    seed = 1
    checks = measures, bounds
    model.variant = linear              # linear | transform | irf | ldi
    model.innovations = standard-normal
    model.coefficients.kind = geometric
    model.coefficients.param = 0.5
    analysis.q = 2, 4
    analysis.n = dyadic 0..10
    mc.replicates = 10000
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass
from pathlib import Path

from .coefficients import CoefficientKind, CoefficientSequence
from .errors import ConfigError, UnsupportedMomentError
from .innovations import Family, InnovationSpec
from .models import (
    IteratedRandomFunction,
    Kernel,
    LinearDependentInnovations,
    LinearIID,
    LipschitzTransform,
    ProcessModel,
    Transform,
)

__all__ = ["ExperimentConfig", "CHECKS", "parse_config", "load_config", "model_to_config",
           "model_from_config", "format_config"]

CHECKS = ("measures", "bounds", "maximal", "lil", "rates", "clt", "conditions", "gmc")
VARIANTS = ("linear", "transform", "irf", "ldi")
_SECTION = "experiment"


def _ints(field_name, text):
    text = text.strip()
    m = re.fullmatch(r"dyadic\s+(\d+)\s*\.\.\s*(\d+)", text)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        if a > b:
            raise ConfigError(field_name, "empty dyadic range")
        return tuple(2**i for i in range(a, b + 1))
    try:
        vals = tuple(int(v) for v in _split(text))
    except ValueError:
        raise ConfigError(field_name, f"expected integers, got {text!r}") from None
    if not vals:
        raise ConfigError(field_name, "empty list")
    return vals


def _floats(field_name, text):
    try:
        vals = tuple(float(v) for v in _split(text))
    except ValueError:
        raise ConfigError(field_name, f"expected numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(field_name, "empty list")
    return vals


def _split(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _int(field_name, text, lo=None):
    try:
        v = int(text)
    except ValueError:
        raise ConfigError(field_name, f"expected an integer, got {text!r}") from None
    if lo is not None and v < lo:
        raise ConfigError(field_name, f"must be >= {lo}")
    return v


def _float(field_name, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(field_name, f"expected a number, got {text!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully specified experiment; every random draw derives from ``seed``."""

    experiment: str
    model: dict
    checks: tuple
    seed: int = 1
    output: str = "reports"
    q: tuple = (2.0,)
    horizon: int = 10
    n: tuple = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024)
    d: int = 4
    delta: tuple = (0.5, 1.0, 2.0)
    lil_n: int = 2**16
    rate_n: tuple = tuple(2**i for i in range(8, 15))
    clt_n: int = 4096
    replicates: int = 10000
    inner: int = 512
    paths: int = 1000
    nested_horizon: int = 20
    decomposition_paths: int = 0

    def build_model(self) -> ProcessModel:
        return model_from_config(self.model)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, seed=int(seed) & ((1 << 64) - 1))


# key -> (ExperimentConfig field, parser)
_ANALYSIS = {
    "analysis.q": ("q", lambda k, v: _floats(k, v)),
    "analysis.horizon": ("horizon", lambda k, v: _int(k, v, 1)),
    "analysis.n": ("n", lambda k, v: _ints(k, v)),
    "analysis.d": ("d", lambda k, v: _int(k, v, 0)),
    "analysis.delta": ("delta", lambda k, v: _floats(k, v)),
    "analysis.lil_n": ("lil_n", lambda k, v: _int(k, v, 2**16)),
    "analysis.rate_n": ("rate_n", lambda k, v: _ints(k, v)),
    "analysis.clt_n": ("clt_n", lambda k, v: _int(k, v, 1024)),
    "mc.replicates": ("replicates", lambda k, v: _int(k, v, 100)),
    "mc.inner": ("inner", lambda k, v: _int(k, v, 2)),
    "mc.paths": ("paths", lambda k, v: _int(k, v, 1)),
    "mc.nested_horizon": ("nested_horizon", lambda k, v: _int(k, v, 0)),
    "output.decomposition_paths": ("decomposition_paths", lambda k, v: _int(k, v, 0)),
    "output": ("output", lambda k, v: v),
    "seed": ("seed", lambda k, v: _int(k, v, 0)),
}
_MODEL_KEYS = {
    "model.variant", "model.innovations", "model.df", "model.coefficients.kind",
    "model.coefficients.param", "model.coefficients.values", "model.coefficients.lag",
    "model.transform", "model.threshold", "model.kernel", "model.rho", "model.burn_in",
    "model.x0",
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate configuration text; errors carry the offending key."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   comment_prefixes=("#",), delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(f"[{_SECTION}]\n" + text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(exc.option, f"duplicate key (line {exc.lineno - 1})") from None
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    raw = {k: v.strip() for k, v in cp[_SECTION].items()}
    for key in raw:
        if key not in _ANALYSIS and key not in _MODEL_KEYS and key not in ("experiment", "checks"):
            raise ConfigError(key, "unknown key")
    if "experiment" not in raw or not raw["experiment"]:
        raise ConfigError("experiment", "missing experiment id")
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", raw["experiment"]):
        raise ConfigError("experiment", "id may only use letters, digits, '.', '_' and '-'")
    checks = tuple(_split(raw.get("checks", "")))
    if not checks:
        raise ConfigError("checks", "at least one check is required")
    for c in checks:
        if c not in CHECKS:
            raise ConfigError("checks", f"unknown check {c!r}; choose from {', '.join(CHECKS)}")
    kwargs = {}
    for key, (name, parse) in _ANALYSIS.items():
        if key in raw and raw[key] != "":
            kwargs[name] = parse(key, raw[key])
    model = {k: v for k, v in raw.items() if k in _MODEL_KEYS and v != ""}
    cfg = ExperimentConfig(raw["experiment"], model, checks, **kwargs)
    m = cfg.build_model()
    for q in cfg.q:
        if q < 1:
            raise ConfigError("analysis.q", "moment orders must be >= 1")
        try:
            m.innovations.check_moment(q)
        except UnsupportedMomentError as exc:
            raise ConfigError("analysis.q", str(exc)) from None
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def _coefficients(model: dict) -> CoefficientSequence:
    kind = model.get("model.coefficients.kind")
    if kind is None:
        raise ConfigError("model.coefficients.kind", "required for this variant")
    try:
        kind = CoefficientKind(kind)
    except ValueError:
        raise ConfigError("model.coefficients.kind",
                          f"unknown kind {kind!r}; choose from "
                          + ", ".join(k.value for k in CoefficientKind)) from None
    try:
        if kind is CoefficientKind.EXPLICIT:
            vals = _floats("model.coefficients.values", model.get("model.coefficients.values", ""))
            return CoefficientSequence.explicit(vals)
        if "model.coefficients.param" not in model:
            raise ConfigError("model.coefficients.param", f"required for {kind.value} coefficients")
        p = _float("model.coefficients.param", model["model.coefficients.param"])
        lag = model.get("model.coefficients.lag")
        lag = _int("model.coefficients.lag", lag, 1) if lag is not None else None
        return CoefficientSequence(kind, (p,), lag)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("model.coefficients.param", str(exc)) from None


def _innovations(model: dict) -> InnovationSpec:
    fam = model.get("model.innovations", Family.NORMAL.value)
    try:
        fam = Family(fam)
    except ValueError:
        raise ConfigError("model.innovations", f"unknown family {fam!r}; choose from "
                          + ", ".join(f.value for f in Family)) from None
    df = model.get("model.df")
    try:
        return InnovationSpec(fam, _float("model.df", df) if df is not None else None)
    except ValueError as exc:
        raise ConfigError("model.df", str(exc)) from None


def _irf(model: dict, spec: InnovationSpec) -> IteratedRandomFunction:
    kernel = model.get("model.kernel", Kernel.AR1.value)
    try:
        kernel = Kernel(kernel)
    except ValueError:
        raise ConfigError("model.kernel", f"unknown kernel {kernel!r}") from None
    rho = _float("model.rho", model.get("model.rho", "0.5"))
    b = model.get("model.burn_in")
    x0 = _float("model.x0", model.get("model.x0", "0"))
    try:
        return IteratedRandomFunction(kernel, rho, _int("model.burn_in", b, 0) if b is not None else None,
                                      spec, x0)
    except ValueError as exc:
        raise ConfigError("model.rho", str(exc)) from None


def model_from_config(model: dict) -> ProcessModel:
    """Build a model from its ``model.*`` keys."""
    variant = model.get("model.variant")
    if variant not in VARIANTS:
        raise ConfigError("model.variant", f"expected one of {', '.join(VARIANTS)}, got {variant!r}")
    spec = _innovations(model)
    if variant == "linear":
        return LinearIID(_coefficients(model), spec)
    if variant == "transform":
        kind = model.get("model.transform", Transform.TANH.value)
        try:
            kind = Transform(kind)
        except ValueError:
            raise ConfigError("model.transform", f"unknown transform {kind!r}") from None
        thr = _float("model.threshold", model.get("model.threshold", "0.5"))
        return LipschitzTransform(LinearIID(_coefficients(model), spec), kind, thr)
    if variant == "irf":
        return _irf(model, spec)
    return LinearDependentInnovations(_coefficients(model), _irf(model, spec))


def _coef_keys(c: CoefficientSequence) -> dict:
    out = {"model.coefficients.kind": c.kind.value}
    if c.kind is CoefficientKind.EXPLICIT:
        out["model.coefficients.values"] = ", ".join(repr(v) for v in c.values)
    else:
        out["model.coefficients.param"] = repr(c.param)
        out["model.coefficients.lag"] = str(c.lag)
    return out


def model_to_config(model: ProcessModel) -> dict:
    """Inverse of ``model_from_config``; frozen constants are not serialized."""
    spec = model.innovations
    out = {"model.innovations": spec.family.value}
    if spec.df is not None:
        out["model.df"] = repr(spec.df)

    def irf_keys(m):
        return {"model.kernel": m.kernel.value, "model.rho": repr(m.rho),
                "model.burn_in": str(m.burn_in), "model.x0": repr(m.x0)}

    if isinstance(model, LinearIID):
        out.update({"model.variant": "linear", **_coef_keys(model.coefficients)})
    elif isinstance(model, LipschitzTransform):
        out.update({"model.variant": "transform", **_coef_keys(model.base.coefficients),
                    "model.transform": model.kind.value, "model.threshold": repr(model.threshold)})
    elif isinstance(model, IteratedRandomFunction):
        out.update({"model.variant": "irf", **irf_keys(model)})
    elif isinstance(model, LinearDependentInnovations):
        out.update({"model.variant": "ldi", **_coef_keys(model.coefficients), **irf_keys(model.inner)})
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return out


def format_config(cfg: ExperimentConfig) -> str:
    """Render a config back to text that ``parse_config`` accepts."""
    lines = [f"experiment = {cfg.experiment}", f"seed = {cfg.seed}",
             f"checks = {', '.join(cfg.checks)}", f"output = {cfg.output}"]
    lines += [f"{k} = {v}" for k, v in sorted(cfg.model.items())]
    for key, (name, _) in _ANALYSIS.items():
        if key in ("output", "seed"):
            continue
        v = getattr(cfg, name)
        lines.append(f"{key} = {', '.join(map(str, v)) if isinstance(v, tuple) else v}")
    return "\n".join(lines) + "\n"
