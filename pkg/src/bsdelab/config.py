"""Dataclass configs for experiment runs, loaded from a single JSON file.

One config file describes one run: the stochastic model (horizon, steps,
backend, scheme, seed), the driver with its certificate, the terminal
payoff, and a list of checks with tolerances and expected outcomes.
Expressions appear verbatim in the file in the grammar of
:mod:`bsdelab.expressions`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .certificates import CertificateError, certificate_from_dict
from .expressions import ExpressionError, ParseError
from .generators import Generator, TerminalCondition

__all__ = ["ConfigError", "ModelConfig", "CheckConfig", "RunConfig", "load_config"]

BACKENDS = ("tree", "mc-regression")
SCHEMES = ("explicit", "implicit")


class ConfigError(ValueError):
    """Invalid configuration; the message carries the offending path."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


def _need(mapping, key, path, kind=None):
    if key not in mapping:
        raise ConfigError(f"{path}.{key}", "missing")
    value = mapping[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"{path}.{key}", f"expected {kind}, got {type(value).__name__}")
    return value


@dataclass(frozen=True)
class ModelConfig:
    horizon: float = 1.0
    steps: int = 200
    backend: str = "tree"
    scheme: str = "explicit"
    seed: int = 0
    paths: int = 20000
    basis_degree: int = 3
    threads: int = 1
    z_clamp: Optional[float] = None

    @classmethod
    def from_dict(cls, raw, path="model"):
        if not isinstance(raw, dict):
            raise ConfigError(path, "must be an object")
        cfg = cls(
            horizon=float(raw.get("T", 1.0)),
            steps=int(raw.get("N", 200)),
            backend=raw.get("backend", "tree"),
            scheme=raw.get("scheme", "explicit"),
            seed=int(raw.get("seed", 0)),
            paths=int(raw.get("paths", 20000)),
            basis_degree=int(raw.get("basis_degree", 3)),
            threads=int(raw.get("threads", 1)),
            z_clamp=(float(raw["z_clamp"]) if raw.get("z_clamp") is not None else None),
        )
        if cfg.horizon <= 0:
            raise ConfigError(f"{path}.T", "must be > 0")
        if cfg.steps < 1:
            raise ConfigError(f"{path}.N", "must be >= 1")
        if cfg.backend not in BACKENDS:
            raise ConfigError(f"{path}.backend", f"must be one of {BACKENDS}")
        if cfg.scheme not in SCHEMES:
            raise ConfigError(f"{path}.scheme", f"must be one of {SCHEMES}")
        if cfg.threads < 1:
            raise ConfigError(f"{path}.threads", "must be >= 1")
        return cfg


@dataclass(frozen=True)
class CheckConfig:
    kind: str
    tol: Optional[float]
    expect: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw, path):
        if not isinstance(raw, dict):
            raise ConfigError(path, "must be an object")
        kind = _need(raw, "check", path, str)
        expect = raw.get("expect", "pass")
        if expect not in ("pass", "fail"):
            raise ConfigError(f"{path}.expect", "must be 'pass' or 'fail'")
        tol = raw.get("tol")
        params = {
            k: v for k, v in raw.items() if k not in ("check", "tol", "expect", "name")
        }
        if "name" in raw:
            params["name"] = raw["name"]
        return cls(kind=kind, tol=(float(tol) if tol is not None else None), expect=expect, params=params)


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    generator: Optional[Generator]
    terminal: Optional[TerminalCondition]
    checks: tuple
    bounds: Optional[dict]
    envelope: Optional[dict]
    raw: dict

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        model = ModelConfig.from_dict(raw.get("model", {}))
        generator = None
        if "generator" in raw:
            gsec = raw["generator"]
            if not isinstance(gsec, dict):
                raise ConfigError("generator", "must be an object")
            try:
                generator = Generator.parse(_need(gsec, "expr", "generator", str))
                if "certificate" in gsec and gsec["certificate"] is not None:
                    generator = generator.with_certificate(
                        certificate_from_dict(gsec["certificate"])
                    )
            except (ParseError, ExpressionError) as exc:
                raise ConfigError("generator.expr", str(exc)) from exc
            except CertificateError as exc:
                raise ConfigError("generator.certificate", str(exc)) from exc
        terminal = None
        if "terminal" in raw:
            tsec = raw["terminal"]
            if not isinstance(tsec, dict):
                raise ConfigError("terminal", "must be an object")
            try:
                terminal = TerminalCondition.parse(
                    _need(tsec, "expr", "terminal", str),
                    bound=(float(tsec["bound"]) if tsec.get("bound") is not None else None),
                )
            except (ParseError, ExpressionError) as exc:
                raise ConfigError("terminal.expr", str(exc)) from exc
        checks = []
        raw_checks = raw.get("checks", [])
        if not isinstance(raw_checks, list):
            raise ConfigError("checks", "must be a list")
        for i, item in enumerate(raw_checks):
            checks.append(CheckConfig.from_dict(item, f"checks[{i}]"))
        bounds = raw.get("bounds")
        if bounds is not None and not isinstance(bounds, dict):
            raise ConfigError("bounds", "must be an object")
        envelope = raw.get("envelope")
        if envelope is not None and not isinstance(envelope, dict):
            raise ConfigError("envelope", "must be an object")
        return cls(
            model=model,
            generator=generator,
            terminal=terminal,
            checks=tuple(checks),
            bounds=bounds,
            envelope=envelope,
            raw=raw,
        )


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(str(path), "config file not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    return RunConfig.from_dict(raw)
