"""JSON model configuration with field-and-line error reporting."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError
from .measures import DiscreteMeasure
from .mixture import MixtureFunction
from .parisi_pde import BaseMeasure, PdeConfig
from .variational import OptimizerConfig

TOP_LEVEL_KEYS = {
    "mixture",
    "base_measure",
    "mu",
    "nu",
    "lambda",
    "t",
    "s",
    "h",
    "solver",
    "optimizer",
    "mc",
    "hj_grid",
    "seed",
}


@dataclass(frozen=True)
class McConfig:
    N: tuple[int, ...] = (4, 8, 12)
    replications: int = 200
    branches: int = 1000


@dataclass(frozen=True)
class HjGridConfig:
    s_range: tuple[float, float] = (0.2, 0.6)
    h_range: tuple[float, float] = (-0.2, 0.2)
    step: float = 0.05


@dataclass
class ModelConfig:
    mixture: MixtureFunction
    base: BaseMeasure
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    lam: float = 0.0
    t: float = 1.0
    s: float = 0.0
    h: float = 0.0
    pde: PdeConfig = field(default_factory=PdeConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    mc: McConfig = field(default_factory=McConfig)
    hj: HjGridConfig = field(default_factory=HjGridConfig)
    seed: int = 0
    raw: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        """Fully resolved configuration, suitable for echoing in outputs."""
        pde = {f.name: getattr(self.pde, f.name) for f in fields(self.pde)}
        opt = {
            f.name: getattr(self.optimizer, f.name)
            for f in fields(self.optimizer)
            if f.name not in ("search_pde", "final_pde")
        }
        return {
            "mixture": self.mixture.to_config(),
            "base_measure": self.base.to_config(),
            "mu": self.mu.to_config(),
            "nu": self.nu.to_config(),
            "lambda": self.lam,
            "t": self.t,
            "s": self.s,
            "h": self.h,
            "solver": pde,
            "optimizer": opt,
            "mc": {"N": list(self.mc.N), "replications": self.mc.replications, "branches": self.mc.branches},
            "hj_grid": {"s_range": list(self.hj.s_range), "h_range": list(self.hj.h_range), "step": self.hj.step},
            "seed": self.seed,
        }

    def sha256(self) -> str:
        return hashlib.sha256(canonical_json(self.canonical()).encode()).hexdigest()


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _key_line(text: str, path: tuple[str, ...]) -> Optional[int]:
    """1-based line of the innermost key of ``path``, searching in nesting order."""
    lines = text.splitlines()
    start = 0
    found = None
    for key in path:
        needle = f'"{key}"'
        for i in range(start, len(lines)):
            if needle in lines[i]:
                found = start = i
                break
        else:
            return found + 1 if found is not None else None
    return found + 1 if found is not None else None


class _Parser:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def fail(self, path: tuple[str, ...], msg: str):
        line = _key_line(self.text, path)
        where = f"{self.source}:{line}" if line else self.source
        raise ConfigError(f"{where}: field '{'.'.join(path)}': {msg}")

    def number(self, obj: dict, key: str, default, path=(), kind=float):
        if key not in obj:
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(path + (key,), f"expected a number, got {v!r}")
        if kind is int and int(v) != v:
            self.fail(path + (key,), f"expected an integer, got {v!r}")
        return kind(v)

    def build(self, ctor, value, path, what):
        try:
            return ctor(value)
        except (ValueError, TypeError, KeyError, IndexError) as exc:
            self.fail(path, f"invalid {what}: {exc}")


def _check_keys(p: _Parser, obj: dict, allowed, path):
    if not isinstance(obj, dict):
        p.fail(path, f"expected an object, got {type(obj).__name__}")
    for k in obj:
        if k not in allowed:
            p.fail(path + (k,), f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _measure(p: _Parser, obj, path) -> DiscreteMeasure:
    if not isinstance(obj, dict) or "atoms" not in obj:
        p.fail(path, 'expected {"atoms": [[q, w], ...]}')
    atoms = obj["atoms"]
    if not isinstance(atoms, list) or not atoms or not all(isinstance(a, list) and len(a) == 2 for a in atoms):
        p.fail(path + ("atoms",), "expected a non-empty list of [q, w] pairs")
    return p.build(DiscreteMeasure.from_config, obj, path + ("atoms",), "measure")


def parse_config(text: str, source: str = "<config>", overrides: Optional[dict] = None) -> ModelConfig:
    p = _Parser(text, source)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    _check_keys(p, raw, TOP_LEVEL_KEYS, ())
    if "mixture" not in raw:
        p.fail(("mixture",), "missing required field")
    mixture = p.build(MixtureFunction, raw["mixture"], ("mixture",), "mixture")
    base = p.build(BaseMeasure.from_config, raw.get("base_measure", {"preset": "ising"}), ("base_measure",), "base measure")
    mu = _measure(p, raw["mu"], ("mu",)) if "mu" in raw else DiscreteMeasure.dirac(0.0)
    nu = _measure(p, raw["nu"], ("nu",)) if "nu" in raw else mu
    t = p.number(raw, "t", 1.0)
    s = p.number(raw, "s", 0.0)
    if t < 0:
        p.fail(("t",), "must be >= 0")
    if s < 0:
        p.fail(("s",), "must be >= 0")

    solver = raw.get("solver", {})
    pde_keys = {"quad_order", "x_grid_step", "x_grid_halfwidth", "interpolation"}
    _check_keys(p, solver, pde_keys, ("solver",))
    pde_kw = {k: v for k, v in solver.items()}
    pde = p.build(lambda kw: PdeConfig(**kw), pde_kw, ("solver",), "solver settings")

    opt_raw = raw.get("optimizer", {})
    opt_keys = {f.name for f in fields(OptimizerConfig)} - {"search_pde", "final_pde"}
    _check_keys(p, opt_raw, opt_keys, ("optimizer",))
    optimizer = p.build(lambda kw: OptimizerConfig(final_pde=pde, **kw), dict(opt_raw), ("optimizer",), "optimizer settings")

    mc_raw = raw.get("mc", {})
    _check_keys(p, mc_raw, {"N", "replications", "branches"}, ("mc",))
    n_list = mc_raw.get("N", list(McConfig.N))
    if isinstance(n_list, int):
        n_list = [n_list]
    if not isinstance(n_list, list) or not all(isinstance(n, int) and n >= 1 for n in n_list):
        p.fail(("mc", "N"), "expected a positive integer or a list of them")
    mc = McConfig(
        tuple(n_list),
        p.number(mc_raw, "replications", McConfig.replications, ("mc",), int),
        p.number(mc_raw, "branches", McConfig.branches, ("mc",), int),
    )
    if mc.replications < 2:
        p.fail(("mc", "replications"), "need at least 2")

    hj_raw = raw.get("hj_grid", {})
    _check_keys(p, hj_raw, {"s_range", "h_range", "step"}, ("hj_grid",))
    ranges = {}
    for key in ("s_range", "h_range"):
        r = hj_raw.get(key, list(getattr(HjGridConfig, key)))
        ok = isinstance(r, list) and len(r) == 2 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in r)
        if not ok or r[0] >= r[1]:
            p.fail(("hj_grid", key), f"expected [lo, hi] with lo < hi, got {r!r}")
        ranges[key] = (float(r[0]), float(r[1]))
    if ranges["s_range"][0] < 0:
        p.fail(("hj_grid", "s_range"), "s must be >= 0")
    step = p.number(hj_raw, "step", HjGridConfig.step, ("hj_grid",))
    if not 0 < step <= 0.05:
        p.fail(("hj_grid", "step"), f"must lie in (0, 0.05], got {step}")
    hj = HjGridConfig(ranges["s_range"], ranges["h_range"], step)
    cfg = ModelConfig(
        mixture=mixture,
        base=base,
        mu=mu,
        nu=nu,
        lam=p.number(raw, "lambda", 0.0),
        t=t,
        s=s,
        h=p.number(raw, "h", 0.0),
        pde=pde,
        optimizer=optimizer,
        mc=mc,
        hj=hj,
        seed=p.number(raw, "seed", 0, (), int),
        raw=raw,
    )
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def load_config(path: str | Path, overrides: Optional[dict] = None) -> ModelConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, str(path), overrides)
