"""Run configuration: a single JSON document, unknown keys rejected."""

from __future__ import annotations

import json
import math
from typing import Literal

import numpy as np
import sympy
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import marks
from .model import DriftProcess, InitialLaw, JumpMeasure, ModelSpec, ModulusSpec, builtin_model, custom_model
from .yamada import ModulusFamily


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; the message names the offending location."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------------------------------------------------------------------
# tagged single-key sections


class _Exp(_Strict):
    mean: float = Field(gt=0)


class _Unif(_Strict):
    lo: float = Field(ge=0)
    hi: float


class _Const(_Strict):
    value: float = Field(ge=0)


class MarkLawDoc(_Strict):
    exponential: _Exp | None = None
    uniform: _Unif | None = None
    constant: _Const | None = None

    @model_validator(mode="after")
    def _one(self):
        if sum(v is not None for v in (self.exponential, self.uniform, self.constant)) != 1:
            raise ValueError("mark_law needs exactly one of exponential, uniform, constant")
        return self

    def build(self):
        if self.exponential:
            return marks.Exponential(self.exponential.mean)
        if self.uniform:
            return marks.Uniform(self.uniform.lo, self.uniform.hi)
        return marks.Constant(self.constant.value)


class _Cap(_Strict):
    cap: float = Field(gt=0)


class _Slope(_Strict):
    slope: float = Field(ge=0)


class KernelDoc(_Strict):
    capped_linear: _Cap | None = None
    linear_state: _Slope | None = None
    expr: str | None = None

    @model_validator(mode="after")
    def _one(self):
        if sum(v is not None for v in (self.capped_linear, self.linear_state, self.expr)) != 1:
            raise ValueError("kernel needs exactly one of capped_linear, linear_state, expr")
        return self


class JumpDoc(_Strict):
    rate: float = Field(ge=0)
    mark_law: MarkLawDoc | None = None
    truncation: float | None = Field(default=None, gt=0)
    kernel: KernelDoc | None = None
    compensator_expr: str | None = None


class _Table(_Strict):
    times: list[float]
    values: list[float]


class DriftDoc(_Strict):
    constant: _Const | None = None
    table: _Table | None = None

    @model_validator(mode="after")
    def _one(self):
        if (self.constant is None) == (self.table is None):
            raise ValueError("drift needs exactly one of constant, table")
        return self

    def build(self) -> DriftProcess:
        if self.constant:
            return DriftProcess.constant(self.constant.value)
        return DriftProcess.table(self.table.times, self.table.values)


class _LogNormal(_Strict):
    mu: float
    sigma: float = Field(ge=0)


class InitialDoc(_Strict):
    constant: _Const | None = None
    lognormal: _LogNormal | None = None

    @model_validator(mode="after")
    def _one(self):
        if (self.constant is None) == (self.lognormal is None):
            raise ValueError("x0 needs exactly one of constant, lognormal")
        return self

    def build(self) -> InitialLaw:
        if self.constant:
            return InitialLaw.constant(self.constant.value)
        return InitialLaw.lognormal(self.lognormal.mu, self.lognormal.sigma)


class ModelDoc(_Strict):
    family: Literal["cir", "cir_jump", "levy_onesided", "custom"]
    beta: float
    sigma0: float | None = Field(default=None, ge=0)
    sigma_expr: str | None = None
    jump: JumpDoc | None = None
    phi_slope: float | None = Field(default=None, ge=0)
    drift: DriftDoc
    x0: InitialDoc
    growth_K: float | None = Field(default=None, ge=0)

    @field_validator("beta")
    @classmethod
    def _beta_negative(cls, v):
        if not v < 0:
            raise ValueError(f"beta must be negative (beta<0 is a standing assumption), got {v}")
        return v

    @model_validator(mode="after")
    def _coherent(self):
        if self.family == "custom":
            if self.sigma_expr is None and self.sigma0 is None:
                raise ValueError("custom family needs sigma_expr (or sigma0)")
        elif self.sigma0 is None:
            raise ValueError(f"{self.family} needs sigma0")
        if self.sigma_expr is not None and self.family != "custom":
            raise ValueError("sigma_expr is only accepted for the custom family")
        if self.family in ("cir_jump", "levy_onesided") and (self.jump is None or self.jump.mark_law is None):
            raise ValueError(f"{self.family} needs jump.rate and jump.mark_law")
        if self.family == "levy_onesided" and self.phi_slope is None:
            raise ValueError("levy_onesided needs phi_slope")
        if self.jump is not None and self.jump.rate > 0 and self.jump.mark_law is None:
            raise ValueError("jump.mark_law is required when jump.rate > 0")
        return self


class RhoDoc(_Strict):
    family: Literal["sqrt", "power", "sqrt_log", "sqrt_log_log", "constant"] | None = None
    scale: float = Field(default=1.0, gt=0)
    exponent: float = Field(default=0.5, ge=0)
    expr: str | None = None
    concave_square: bool = False

    @model_validator(mode="after")
    def _one(self):
        if (self.family is None) == (self.expr is None):
            raise ValueError("rho needs exactly one of family, expr")
        return self


class ValidateDoc(_Strict):
    mode: Literal["2c", "2d", "3a", "3b"] = "3a"
    rho: RhoDoc | None = None
    f_expr: str | None = None
    m: float = Field(default=4.0, gt=0)
    pairs: list[tuple[float, float]] | None = None
    grid: list[float] | None = None
    strict_growth: bool = False
    levy_K: float | None = None
    divergence_threshold: float = Field(default=1e3, gt=0)
    divergence_floor: float = Field(default=1e-12, gt=0)


class RunConfig(_Strict):
    model: ModelDoc
    horizon: float | None = Field(default=None, gt=0)
    master_steps: int | None = Field(default=None, ge=1)
    meshes: list[float] | None = None
    reference: float | None = Field(default=None, gt=0)
    n_paths: int | None = Field(default=None, ge=1)
    seed: int | None = Field(default=None, ge=0, lt=2**64)
    threads: int | None = Field(default=None, ge=1)
    deterministic: bool = True
    batch_size: int = Field(default=256, ge=1)
    validate_: ValidateDoc | None = Field(default=None, alias="validate")

    @field_validator("meshes")
    @classmethod
    def _positive(cls, v):
        if v is not None and any(not h > 0 for h in v):
            raise ValueError("meshes must be positive")
        return v

    def master(self) -> int:
        return self.master_steps or max(1, int(round(4096 * self.horizon)))


# ---------------------------------------------------------------------------
# loading and building


def _format_errors(exc, source: str) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{source}: {loc}: {err['msg']}")
    return "\n".join(lines)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    from pydantic import ValidationError as PydanticError

    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    try:
        return RunConfig.model_validate(doc)
    except PydanticError as exc:
        raise ConfigError(_format_errors(exc, source)) from exc


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    return parse_config(text, str(path))


_X, _U, _Z = sympy.symbols("x u z")


def compile_expr(expr: str, args, where: str):
    """Vectorised numpy function from a sympy expression in the given symbols."""
    try:
        parsed = sympy.sympify(expr, locals={"x": _X, "u": _U, "z": _Z})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigError(f"{where}: cannot parse expression {expr!r}") from exc
    free = {s.name for s in parsed.free_symbols}
    allowed = {a.name for a in args}
    if not free <= allowed:
        raise ConfigError(f"{where}: expression {expr!r} uses {sorted(free - allowed)}; allowed: {sorted(allowed)}")
    fn = sympy.lambdify(args, parsed, modules="numpy")

    def vectorised(*vals):
        arrays = np.broadcast_arrays(*[np.asarray(v, dtype=float) for v in vals])
        out = np.asarray(fn(*arrays), dtype=float)
        return np.broadcast_to(out, arrays[0].shape).astype(float) if out.shape != arrays[0].shape else out

    return vectorised


def build_model(doc: ModelDoc) -> ModelSpec:
    drift = doc.drift.build()
    x0 = doc.x0.build()
    if doc.family != "custom":
        params = {"sigma0": doc.sigma0, "beta": doc.beta, "drift": drift, "x0": x0}
        if doc.growth_K is not None:
            params["growth_K"] = doc.growth_K
        if doc.jump is not None:
            params["rate"] = doc.jump.rate
            if doc.jump.mark_law is not None:
                params["mark_law"] = doc.jump.mark_law.build()
            params["truncation"] = doc.jump.truncation
            k = doc.jump.kernel
            if k is not None:
                if doc.family == "cir_jump" and k.capped_linear is not None:
                    params["cap"] = k.capped_linear.cap
                elif doc.family == "levy_onesided" and k.linear_state is not None:
                    params["phi_slope"] = k.linear_state.slope
                else:
                    raise ConfigError(f"model.jump.kernel: kernel form not available for family {doc.family}")
        if doc.phi_slope is not None:
            params["phi_slope"] = doc.phi_slope
        return builtin_model(doc.family, params)

    if doc.sigma_expr is not None:
        sigma = compile_expr(doc.sigma_expr, (_X,), "model.sigma_expr")
    else:
        s0 = doc.sigma0

        def sigma(x):
            return s0 * np.sqrt(np.maximum(np.asarray(x, dtype=float), 0.0))

    measure = JumpMeasure.none()
    kernel = compensator = None
    if doc.jump is not None and doc.jump.rate > 0:
        measure = JumpMeasure.from_law(doc.jump.rate, doc.jump.mark_law.build(), doc.jump.truncation)
        k = doc.jump.kernel
        if k is None:
            raise ConfigError("model.jump.kernel: custom family with jumps needs a kernel")
        if k.expr is not None:
            kernel = compile_expr(k.expr, (_X, _U), "model.jump.kernel.expr")
        elif k.capped_linear is not None:
            cap = k.capped_linear.cap
            kernel = lambda x, u: np.asarray(u, dtype=float) * np.minimum(x, cap)  # noqa: E731
        else:
            slope = k.linear_state.slope
            kernel = lambda x, u: slope * np.asarray(x, dtype=float) * np.asarray(u, dtype=float)  # noqa: E731
        if doc.jump.compensator_expr is not None:
            compensator = compile_expr(doc.jump.compensator_expr, (_X,), "model.jump.compensator_expr")
    return custom_model(
        beta=doc.beta,
        sigma=sigma,
        kernel=kernel,
        compensator=compensator,
        measure=measure,
        drift=drift,
        x0=x0,
        growth_K=doc.growth_K,
        kernel_name=doc.jump.kernel.expr if doc.jump and doc.jump.kernel and doc.jump.kernel.expr else "g",
    )


def build_modulus(doc: RhoDoc | None, spec: ModelSpec, f_expr: str | None = None) -> ModulusSpec:
    f = compile_expr(f_expr, (_U,), "validate.f_expr") if f_expr else None
    if doc is None:
        if spec.modulus is None:
            raise ConfigError("validate.rho: the model has no builtin modulus; supply one")
        return ModulusSpec(spec.modulus.rho, f, spec.modulus.concave_square)
    if doc.expr is not None:
        rho = compile_expr(doc.expr, (_Z,), "validate.rho.expr")
        return ModulusSpec(rho, f, doc.concave_square)
    return ModulusSpec(modulus_family(doc.family, doc.scale, doc.exponent), f, doc.concave_square)


def modulus_family(name: str, scale: float = 1.0, exponent: float = 0.5) -> ModulusFamily:
    if name == "sqrt":
        return ModulusFamily.sqrt(scale)
    if name == "power":
        return ModulusFamily.power(scale, exponent)
    if name == "constant":
        return ModulusFamily.constant(scale)
    if name == "sqrt_log":
        return ModulusFamily.sqrt_log(scale)
    if name == "sqrt_log_log":
        return ModulusFamily.sqrt_log_log(scale)
    raise ConfigError(f"unknown modulus family {name!r}")


def require(cfg: RunConfig, *names) -> None:
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise ConfigError(f"config: missing required field(s) {missing}")


def mesh_steps(T: float, mesh: float, where: str) -> int:
    n = T / mesh
    steps = int(round(n))
    if steps < 1 or not math.isclose(n, steps, rel_tol=1e-12):
        raise ConfigError(f"{where}: mesh {mesh} does not divide the horizon {T}")
    return steps
