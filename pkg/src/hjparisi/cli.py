"""Batch command-line driver: read a JSON model config, run one computation, write JSON/CSV."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import cascades, free_energy_mc, parisi_pde, variational
from .config import ModelConfig, canonical_json, load_config
from .errors import ConfigError, NumericalFailure
from .measures import DiscreteMeasure

AGREEMENT_TOL = 2e-3

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


class _NotConverged(Exception):
    pass


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, DiscreteMeasure):
        return obj.to_config()
    return obj


class _Emitter:
    def __init__(self, cfg: ModelConfig, out_dir: Path, quiet: bool):
        self.cfg = cfg
        self.out_dir = out_dir
        self.quiet = quiet
        self.written: list[Path] = []

    def _write(self, name: str, text: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        path.write_text(text)
        self.written.append(path)
        if not self.quiet:
            print(f"wrote {path}")
        return path

    def json(self, name: str, result: dict) -> Path:
        doc = {
            "result": _jsonable(result),
            "config": self.cfg.canonical(),
            "config_sha256": self.cfg.sha256(),
            "seed": self.cfg.seed,
        }
        return self._write(name, json.dumps(doc, sort_keys=True, indent=2) + "\n")

    def csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else _fmt(v) for v in row])
        buf.write(f"# config_sha256: {self.cfg.sha256()}\n")
        buf.write(f"# seed: {self.cfg.seed}\n")
        buf.write(f"# config: {canonical_json(self.cfg.canonical())}\n")
        return self._write(name, buf.getvalue())

    def say(self, msg: str) -> None:
        if not self.quiet:
            print(msg)


def _fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _require(result: variational.VariationalResult, what: str) -> None:
    if not result.converged:
        raise _NotConverged(f"{what} did not converge")


def cmd_parisi_eval(cfg: ModelConfig, args, out: _Emitter) -> None:
    pv = parisi_pde.parisi_value(cfg.nu, cfg.lam, cfg.base, cfg.pde)
    out.say(f"P(nu, lambda) = {pv.value:.10g} (err ~ {pv.err_estimate:.2g})")
    out.json("parisi_eval.json", {"value": pv.value, "err_estimate": pv.err_estimate})


def cmd_cascade_check(cfg: ModelConfig, args, out: _Emitter) -> None:
    reps = cfg.mc.replications
    zetas, spec = cascades.cascade_for_measure(cfg.mu)
    result: dict[str, Any] = {"zetas": list(zetas), "levels": list(spec.levels)}
    if zetas:
        lp = cascades.cascade_log_partition(zetas, spec, reps, cfg.mc.branches, seed=cfg.seed)
        exact = cascades.exact_log_partition(zetas, spec)
        freq = cascades.overlap_frequencies(zetas, reps, cfg.mc.branches, seed=cfg.seed)
        expected = np.diff(np.concatenate([[0.0], zetas, [1.0]]))
        result["log_partition"] = {"estimate": lp.mean, "stderr": lp.stderr, "exact": exact}
        result["overlap_law"] = {"estimate": freq.mean, "stderr": freq.stderr, "expected": expected}
        out.say(f"log-partition {lp.mean:.5f} +- {lp.stderr:.5f} (exact {exact:.5f})")
    pc = cascades.psi_via_cascade(cfg.mu, cfg.base, cfg.mc.branches, reps, seed=cfg.seed)
    pde = parisi_pde.psi(cfg.mu, cfg.base, cfg.pde)
    result["psi"] = {"cascade": pc.mean, "stderr": pc.stderr, "pde": pde}
    out.say(f"psi: cascade {pc.mean:.5f} +- {pc.stderr:.5f}, pde {pde:.5f}")
    out.json("cascade_check.json", result)


def _n_ladder(cfg: ModelConfig, args) -> tuple[int, ...]:
    return tuple(args.N) if getattr(args, "N", None) else cfg.mc.N


def _fe_rows(cfg: ModelConfig, n_values, mu: DiscreteMeasure, t: float, s: float, h: float, say: Callable):
    rows = []
    for n in n_values:
        model = free_energy_mc.ModelInstance(n, cfg.mixture, cfg.base, mu, t=t, s=s, h=h)
        kw = dict(n_replications=cfg.mc.replications, branching=cfg.mc.branches, seed=cfg.seed)
        est = free_energy_mc.estimate_F_sth(model, **kw) if (s or h) else free_energy_mc.estimate_F(model, **kw)
        say(f"N={n}: {est.mean:.6f} +- {est.stderr:.6f}")
        rows.append(est)
    return rows


def cmd_fe_mc(cfg: ModelConfig, args, out: _Emitter) -> None:
    mu = cfg.mu
    if args.mu_file:
        try:
            text = Path(args.mu_file).read_text()
            mu = DiscreteMeasure.from_config(json.loads(text))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{args.mu_file}: field 'atoms': {exc}") from exc
    ests = _fe_rows(cfg, _n_ladder(cfg, args), mu, cfg.t, cfg.s, cfg.h, out.say)
    header = ["N", "t", "s", "h", "mean", "stderr", "plain_mean", "plain_stderr", "n_replications"]
    rows = [[e.N, cfg.t, cfg.s, cfg.h, e.mean, e.stderr, e.plain_mean, e.plain_stderr, e.n_replications] for e in ests]
    out.csv("fe_mc.csv", header, rows)


def cmd_hopf_lax(cfg: ModelConfig, args, out: _Emitter) -> None:
    r = variational.hopf_lax_value(cfg.mixture, cfg.mu, cfg.t, cfg.base, cfg.optimizer)
    out.say(f"Hopf-Lax value {r.value:.10g} at nu = {r.measure}")
    out.json("hopf_lax.json", r.to_dict())
    _require(r, "Hopf-Lax minimization")


def cmd_parisi_classical(cfg: ModelConfig, args, out: _Emitter) -> None:
    r = variational.classical_parisi_value(cfg.mixture, cfg.mu, cfg.base, cfg.optimizer, t=cfg.t)
    out.say(f"classical value {r.value:.10g} at u = {r.argmax}")
    out.json("parisi_classical.json", r.to_dict())
    _require(r, "classical sup-inf")


def cmd_theorem2(cfg: ModelConfig, args, out: _Emitter) -> None:
    r = variational.theorem2_value(cfg.mixture, cfg.mu, cfg.s, cfg.t, cfg.h, cfg.base, cfg.optimizer)
    out.say(f"f(s={cfg.s}, h={cfg.h}) = {r.value:.10g}, maximizing h' = {r.argmax}")
    out.json("theorem2.json", r.to_dict())
    _require(r, "enriched variational formula")


def cmd_hj_grid(cfg: ModelConfig, args, out: _Emitter) -> None:
    hj = cfg.hj
    g = variational.hj_check(cfg.mixture, cfg.mu, cfg.t, cfg.base, hj.s_range, hj.h_range, hj.step, cfg.optimizer)
    out.say(f"max |2 f_s - xi(f_h)| = {g.max_abs_residual:.3g}, flagged points: {int(g.flagged.sum())}")
    rows = []
    for i, s in enumerate(g.s):
        for j, h in enumerate(g.h):
            interior = 0 < i < len(g.s) - 1 and 0 < j < len(g.h) - 1
            res = g.residual[i - 1, j - 1] if interior else None
            flag = bool(g.flagged[i - 1, j - 1]) if interior else None
            rows.append([s, h, g.f[i, j], res, flag])
    out.csv("hj_grid.csv", ["s", "h", "f", "residual", "flagged"], rows)


def cmd_compare(cfg: ModelConfig, args, out: _Emitter) -> None:
    hl = variational.hopf_lax_value(cfg.mixture, cfg.mu, cfg.t, cfg.base, cfg.optimizer)
    cl = variational.classical_parisi_value(cfg.mixture, cfg.mu, cfg.base, cfg.optimizer, t=cfg.t)
    out.say(f"Hopf-Lax {hl.value:.10g}, classical {cl.value:.10g}")
    ests = _fe_rows(cfg, _n_ladder(cfg, args), cfg.mu, cfg.t, 0.0, 0.0, out.say)
    header = [
        "N",
        "fe_mean",
        "fe_stderr",
        "hopf_lax",
        "classical",
        "formula_gap",
        "formulas_agree",
        "fe_minus_limit",
        "fe_within_3se",
    ]
    rows = []
    for e in ests:
        gap = hl.value - cl.value
        dev = e.mean - hl.value
        rows.append([e.N, e.mean, e.stderr, hl.value, cl.value, gap, abs(gap) <= AGREEMENT_TOL, dev, abs(dev) <= 3 * e.stderr])
    out.csv("compare.csv", header, rows)
    _require(hl, "Hopf-Lax minimization")
    _require(cl, "classical sup-inf")


COMMANDS: dict[str, tuple[Callable, str]] = {
    "parisi-eval": (cmd_parisi_eval, "evaluate the Parisi functional P(nu, lambda)"),
    "cascade-check": (cmd_cascade_check, "Monte Carlo checks of the cascade identities for mu"),
    "fe-mc": (cmd_fe_mc, "Monte Carlo finite-N free energy across an N-ladder"),
    "hopf-lax": (cmd_hopf_lax, "minimize the Hopf-Lax formula"),
    "parisi-classical": (cmd_parisi_classical, "solve the classical sup-inf Parisi formula"),
    "theorem2": (cmd_theorem2, "evaluate the (s, h)-enriched limit f(s, h)"),
    "hj-grid": (cmd_hj_grid, "tabulate f(s, h) and its Hamilton-Jacobi residual"),
    "compare": (cmd_compare, "join both formulas and the Monte Carlo ladder in one CSV"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hjparisi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON model configuration")
        p.add_argument("--out-dir", default=".", help="directory for output files (default: current)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--reps", type=int, help="override the number of Monte Carlo replications")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
        if name == "fe-mc":
            p.add_argument("--N", type=int, nargs="+", help="system sizes (default: mc.N from config)")
            p.add_argument("--t", type=float)
            p.add_argument("--s", type=float)
            p.add_argument("--h", type=float)
            p.add_argument("--mu-file", help='JSON file {"atoms": [[q, w], ...]} replacing mu')
            p.add_argument("--branches", type=int, help="cascade branching number per level")
    return parser


def _apply_flags(cfg: ModelConfig, args) -> ModelConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.reps is not None:
        if args.reps < 2:
            raise ConfigError("--reps: need at least 2 replications")
        cfg.mc = replace(cfg.mc, replications=args.reps)
    if getattr(args, "branches", None) is not None:
        if args.branches < 1:
            raise ConfigError("--branches: must be positive")
        cfg.mc = replace(cfg.mc, branches=args.branches)
    for key in ("t", "s", "h"):
        value = getattr(args, key, None)
        if value is not None:
            if key != "h" and value < 0:
                raise ConfigError(f"--{key}: must be >= 0")
            setattr(cfg, key, value)
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler = COMMANDS[args.command][0]
    try:
        cfg = _apply_flags(load_config(args.config), args)
        handler(cfg, args, _Emitter(cfg, Path(args.out_dir), args.quiet))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, _NotConverged, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
