"""Command-line entry point.

Settings resolve in the order flags > ``SEMIIV_*`` environment variables >
JSON run config (``--config``) > built-in defaults. Relative paths inside a
config are taken relative to the config file.

Exit codes: 0 pass, 2 configuration errors, 3 data errors, 4 identification
failures, 5 numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .ate_linear import LinearAteInputs, estimate_linear_ate, inputs_from_dataset, inputs_from_dgp
from .density import BandwidthPolicy
from .dgp import Dataset, DgpSpec, draw_sample
from .exceptions import DataError, IdentificationError, SemiIVError, SpecificationError
from .exclusion import ExclusionSpec, build_exclusion_map, check_exclusion_necessary
from .inference import treatment_effects
from .pipeline import run_solve
from .relevance import relevance_profile
from .solver import SolverOptions

__all__ = ["RunConfig", "main", "resolve_config", "load_spec"]

log = logging.getLogger("semiiv")

COMMANDS = ("simulate", "check-exclusions", "diagnose", "solve", "effects", "ate-linear")
ENV_PREFIX = "SEMIIV_"


@dataclass
class RunConfig:
    """Resolved settings of one invocation."""

    mode: str
    spec: str = None
    data: str = None
    inputs: str = None
    output_dir: str = "."
    grid: int = 1001
    seed: int = 0
    n: int = 10000
    tol_rel: float = 1e-8
    tol_abs: float = 1e-10
    backward: bool = False
    bandwidth: str = "silverman"
    debug_eta: bool = False
    text: bool = False
    z_policy: str = "all-pairs"
    z0: int = None
    z1: int = None
    rows: list = None

    def validate(self) -> None:
        if self.mode not in COMMANDS:
            raise SpecificationError(f"unknown mode {self.mode!r}")
        if self.grid < 101:
            raise SpecificationError("grid size must be at least 101")
        if self.n < 1:
            raise SpecificationError("sample size must be at least 1")
        BandwidthPolicy.parse(self.bandwidth)
        for name in ("spec", "data", "inputs"):
            value = getattr(self, name)
            if value is not None and not Path(value).is_file():
                raise SpecificationError(f"{name} file not found: {value}")

    def solver_options(self) -> SolverOptions:
        rows = None if self.rows is None else tuple(int(r) for r in self.rows)
        return SolverOptions(
            rtol=self.tol_rel, atol=self.tol_abs, backward=self.backward, rows=rows, grid_size=self.grid
        )


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_PATH_KEYS = ("spec", "data", "inputs", "output_dir")


def _coerce(name, value):
    kind = _TYPES[name]
    try:
        if kind == "bool":
            if isinstance(value, str):
                low = value.strip().lower()
                if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                    raise ValueError(value)
                return low in ("1", "true", "yes", "on")
            return bool(value)
        if kind == "int":
            return None if value is None else int(value)
        if kind == "float":
            return float(value)
        if kind == "list":
            if isinstance(value, str):
                return [int(v) for v in value.split(",") if v.strip()]
            return None if value is None else [int(v) for v in value]
        return None if value is None else str(value)
    except (TypeError, ValueError):
        raise SpecificationError(f"invalid value for {name}: {value!r}") from None


def resolve_config(mode: str, flags: dict, env=None) -> RunConfig:
    """Merge defaults, the JSON config, environment variables and flags."""
    env = os.environ if env is None else env
    merged = {}
    config_path = flags.get("config") or env.get(ENV_PREFIX + "CONFIG")
    if config_path:
        try:
            doc = json.loads(Path(config_path).read_text())
        except FileNotFoundError:
            raise SpecificationError(f"config file not found: {config_path}") from None
        except json.JSONDecodeError as exc:
            raise SpecificationError(f"{config_path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise SpecificationError(f"{config_path}: top level must be an object")
        base = Path(config_path).parent
        for key, value in doc.items():
            key = key.replace("-", "_")
            if key == "mode":
                continue
            if key not in _TYPES:
                raise SpecificationError(f"{config_path}: unknown key {key!r}")
            if key in _PATH_KEYS and value is not None:
                value = str(base / value)
            merged[key] = _coerce(key, value)
    for key in _TYPES:
        if key == "mode":
            continue
        raw = env.get(ENV_PREFIX + key.upper())
        if raw is not None:
            merged[key] = _coerce(key, raw)
    for key, value in flags.items():
        if key in _TYPES and key != "mode" and value is not None:
            merged[key] = _coerce(key, value)
    cfg = RunConfig(mode=mode, **merged)
    cfg.validate()
    return cfg


def load_spec(path):
    """Read a DGP or exclusion document; returns ``(dgp or None, ExclusionSpec)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SpecificationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise SpecificationError(f"{path}: top level must be an object")
    if "selection" in doc:
        dgp = DgpSpec.from_dict(doc)
        return dgp, dgp.exclusion
    return None, ExclusionSpec.from_dict(doc.get("exclusion", doc))


def _need_spec(cfg):
    if cfg.spec is None:
        raise SpecificationError(f"{cfg.mode} needs --spec (DGP or exclusion document)")
    return load_spec(cfg.spec)


def _out(cfg, name) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _source(cfg):
    dgp, spec = _need_spec(cfg)
    if cfg.data is not None:
        return Dataset.from_csv(cfg.data), spec
    if dgp is None:
        raise SpecificationError("an exclusion-only spec needs --data (empirical mode)")
    return dgp, spec


def cmd_simulate(cfg) -> int:
    dgp, _ = _need_spec(cfg)
    if dgp is None:
        raise SpecificationError("simulate needs a full DGP document, not an exclusion spec")
    data = draw_sample(dgp, cfg.n, cfg.seed, debug_eta=cfg.debug_eta)
    target = _out(cfg, "data.csv")
    data.to_csv(target)
    print(f"wrote {len(data)} rows to {target}")
    return 0


def cmd_check_exclusions(cfg) -> int:
    _, spec = _need_spec(cfg)
    emap = build_exclusion_map(spec)
    report = check_exclusion_necessary(emap)
    print(report.render())
    _write_json(_out(cfg, "validity.json"), report.to_dict())
    emap.to_csv(_out(cfg, "chi.csv"))
    return 0 if report.valid else IdentificationError.exit_code


def cmd_diagnose(cfg) -> int:
    source, spec = _source(cfg)
    if isinstance(source, DgpSpec):
        emap = build_exclusion_map(spec)
        rows = None if cfg.rows is None else [r - 1 for r in cfg.rows]
        profile = relevance_profile(emap, source, grid=np.linspace(0.0, 1.0, cfg.grid), rows=rows)
    else:
        art = run_solve(source, spec, cfg.solver_options(), cfg.bandwidth, recover=False)
        if art.relevance is None:
            raise art.error
        profile = art.relevance
    profile.to_csv(_out(cfg, "relevance.csv"))
    profile.to_json(_out(cfg, "relevance.json"))
    summary = profile.summary()
    print(f"relevance: {summary['verdict']}")
    for s in summary["singularities"]:
        print(f"  singular at eta = {s['eta']:.6f} (deficiency {s['deficiency']})")
    for a, b in summary["degenerate_intervals"]:
        print(f"  determinant vanishes on [{a:.6f}, {b:.6f}]")
    if profile.verdict in ("identified", "isolated-singularities"):
        return 0
    return IdentificationError.exit_code


def _solve(cfg, recover):
    source, spec = _source(cfg)
    art = run_solve(source, spec, cfg.solver_options(), cfg.bandwidth, recover=recover)
    if art.path is not None:
        art.path.to_csv(_out(cfg, "path.csv"))
    art.report.write(_out(cfg, "report.json"))
    if cfg.text:
        text = art.report.render_text()
        _out(cfg, "report.txt").write_text(text)
        print(text, end="")
    else:
        print(f"verdict: {art.report.verdict}")
    if art.error is not None:
        print(f"error: {type(art.error).__name__}: {art.error}", file=sys.stderr)
    return art


def cmd_solve(cfg) -> int:
    return _solve(cfg, recover=True).report.exit_code


def cmd_effects(cfg) -> int:
    art = _solve(cfg, recover=True)
    if art.recovered is None:
        return art.report.exit_code
    table = treatment_effects(art.recovered, cfg.z_policy, cfg.z0, cfg.z1)
    table.to_csv(_out(cfg, "effects.csv"))
    table.to_json(_out(cfg, "effects.json"))
    for name, row in table.summary.items():
        print(f"ATE[{name}] = {row['ate']:.6f}")
    return art.report.exit_code


def cmd_ate_linear(cfg) -> int:
    if cfg.inputs is not None:
        inputs, source = LinearAteInputs.from_json(cfg.inputs), "inputs"
    elif cfg.data is not None:
        inputs, source = inputs_from_dataset(Dataset.from_csv(cfg.data)), "data"
    else:
        dgp, _ = _need_spec(cfg)
        if dgp is None:
            raise SpecificationError("ate-linear needs --inputs, --data or a DGP --spec")
        inputs, source = inputs_from_dgp(dgp), "dgp"
    result = estimate_linear_ate(inputs)
    doc = result.to_dict()
    doc["inputs"] = inputs.to_dict()
    doc["source"] = source
    _write_json(_out(cfg, "ate.json"), doc)
    print(f"delta = {result.delta:.12g} (det A = {result.det:.4g}, cond A = {result.cond:.4g})")
    if result.note:
        print(f"note: {result.note}", file=sys.stderr)
        return 5
    return 0


_HANDLERS = {
    "simulate": cmd_simulate,
    "check-exclusions": cmd_check_exclusions,
    "diagnose": cmd_diagnose,
    "solve": cmd_solve,
    "effects": cmd_effects,
    "ate-linear": cmd_ate_linear,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semiiv", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--spec", help="DGP or exclusion JSON document")
    common.add_argument("--data", help="dataset CSV with header d,y,z")
    common.add_argument("--inputs", help="JSON with cell means and treatment shares (ate-linear)")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--grid", type=int, help="rank grid size (>= 101)")
    common.add_argument("--seed", type=int)
    common.add_argument("--n", type=int, help="sample size (simulate)")
    common.add_argument("--tol-rel", dest="tol_rel", type=float)
    common.add_argument("--tol-abs", dest="tol_abs", type=float)
    common.add_argument("--backward", action="store_const", const=True, default=None)
    common.add_argument("--bandwidth", help="silverman or fixed:<h>")
    common.add_argument("--debug-eta", dest="debug_eta", action="store_const", const=True, default=None)
    common.add_argument("--text", action="store_const", const=True, default=None, help="print the text report")
    common.add_argument("--z-policy", dest="z_policy", choices=("all-pairs", "observed", "fixed"))
    common.add_argument("--z0", type=int)
    common.add_argument("--z1", type=int)
    common.add_argument("--rows", help="comma-separated 1-based semi-IV rows of the square system")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "verbose")}
    try:
        cfg = resolve_config(args.command, flags)
        return _HANDLERS[args.command](cfg)
    except SemiIVError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
