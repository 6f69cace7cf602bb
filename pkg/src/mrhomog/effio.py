"""
Configuration, output writers and the command-line driver.

The config file is INI-style with the sections ``[cell]``, ``[material]``,
``[flow]`` and ``[sweep]``. Every key is optional; unknown sections or
keys are rejected. Lists are comma separated and aspects are written
``WxH`` (``1x1, 2x0.5``).

Every CSV starts with one ``#``-prefixed JSON line holding the resolved
inputs, the config hash and mesh statistics. JSON outputs carry the same
record under ``"header"``. Outputs contain no timestamps, so identical
configs give byte-identical files.
"""
from __future__ import annotations

import argparse
import configparser
import contextlib
import csv
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .cellmesh import CellSpec, MeshError, build_cell
from .effective import (EffectiveCoefficients, coefficients_for, solve_cell)
from .femcore import SingularSystemError
from .macroflow import (FlowConfig, couette, lambda_param, poiseuille, shear_curve)
from .magnetostatics import MaterialParams
from .stokescell import PAIRS

log = logging.getLogger(__name__)

DEFAULT_ASPECTS = ((1.0, 1.0), (2.0, 0.5))


class ConfigError(ValueError):
    """Malformed or unknown configuration entry."""


class RunError(RuntimeError):
    """A failure tagged with the module that raised it."""


@dataclass(frozen=True)
class CellSection:
    aspects: tuple = DEFAULT_ASPECTS
    volume_fraction: float = 0.19
    circle_segments: int = 100
    grid_density: float | None = None
    gap_cells: float = 4.0

    def spec(self, aspect, f=None, refine: int = 0) -> CellSpec:
        s = CellSpec(aspect[0], aspect[1], self.volume_fraction if f is None else f,
                     self.circle_segments, self.grid_density, self.gap_cells)
        return s.refined(refine) if refine else s


@dataclass(frozen=True)
class FlowSection:
    C_p: float = -1.0
    gamma: float = 1.0
    K: tuple = (50.0, 100.0, 200.0, 500.0)
    K1: float = 1e-2
    n_samples: int = 201
    gamma_grid: tuple = tuple(round(0.1 * i, 10) for i in range(21))


@dataclass(frozen=True)
class SweepSection:
    volume_fractions: tuple = (0.05, 0.10, 0.15, 0.19)


@dataclass(frozen=True)
class RunConfig:
    """Resolved run configuration. ``refine`` comes from the command line."""

    cell: CellSection = field(default_factory=CellSection)
    material: MaterialParams = field(default_factory=MaterialParams)
    flow: FlowSection = field(default_factory=FlowSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    refine: int = 0

    def as_dict(self) -> dict:
        return {"cell": asdict(self.cell), "material": asdict(self.material),
                "flow": asdict(self.flow), "sweep": asdict(self.sweep),
                "refine": self.refine}

    def hash(self) -> str:
        text = json.dumps(self.as_dict(), sort_keys=True, default=list)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


# ----------------------------------------------------------------- parsing

def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"not an integer: {text!r}") from None


def _parse_list(text: str) -> tuple:
    return tuple(_parse_float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _parse_aspects(text: str) -> tuple:
    out = []
    for item in text.split(","):
        item = item.strip().lower()
        if not item:
            continue
        parts = item.split("x")
        if len(parts) != 2:
            raise ConfigError(f"aspect must look like WxH, got {item!r}")
        out.append((_parse_float(parts[0]), _parse_float(parts[1])))
    if not out:
        raise ConfigError("aspects list is empty")
    return tuple(out)


def _optional_float(text: str):
    return None if text.strip().lower() in ("", "none", "default") else _parse_float(text)


_SCHEMA = {
    "cell": (CellSection, {"aspects": _parse_aspects, "volume_fraction": _parse_float,
                           "circle_segments": _parse_int, "grid_density": _optional_float,
                           "gap_cells": _parse_float}),
    "material": (MaterialParams, {"mu_particle": _parse_float, "mu_fluid": _parse_float,
                                  "alfven": _parse_float, "magnetic_reynolds": _parse_float}),
    "flow": (FlowSection, {"C_p": _parse_float, "gamma": _parse_float, "K": _parse_list,
                           "K1": _parse_float, "n_samples": _parse_int,
                           "gamma_grid": _parse_list}),
    "sweep": (SweepSection, {"volume_fractions": _parse_list}),
}


def parse_config(text: str) -> RunConfig:
    """Parse config text; keys are case-sensitive and unknown ones are errors."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    sections = {}
    for name in parser.sections():
        if name not in _SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        cls, keys = _SCHEMA[name]
        values = {}
        for key, raw in parser.items(name):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            try:
                values[key] = keys[key](raw)
            except ConfigError as exc:
                raise ConfigError(f"[{name}] {key}: {exc}") from None
        try:
            sections[name] = cls(**values)
        except ValueError as exc:
            raise ConfigError(f"[{name}] {exc}") from None
    return RunConfig(**sections)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def default_config_text() -> str:
    """The documented defaults, written in config-file form."""
    cfg = RunConfig()
    c, m, f, s = cfg.cell, cfg.material, cfg.flow, cfg.sweep

    def join(xs):
        return ", ".join(f"{x:g}" for x in xs)
    return "\n".join([
        "[cell]",
        "aspects = " + ", ".join(f"{w:g}x{h:g}" for w, h in c.aspects),
        f"volume_fraction = {c.volume_fraction:g}",
        f"circle_segments = {c.circle_segments}",
        "grid_density = default",
        f"gap_cells = {c.gap_cells:g}",
        "",
        "[material]",
        f"mu_particle = {m.mu_particle:g}",
        f"mu_fluid = {m.mu_fluid:g}",
        f"alfven = {m.alfven:g}",
        f"magnetic_reynolds = {m.magnetic_reynolds:g}",
        "",
        "[flow]",
        f"C_p = {f.C_p:g}",
        f"gamma = {f.gamma:g}",
        f"K = {join(f.K)}",
        f"K1 = {f.K1:g}",
        f"n_samples = {f.n_samples}",
        f"gamma_grid = {join(f.gamma_grid)}",
        "",
        "[sweep]",
        f"volume_fractions = {join(s.volume_fractions)}",
        "",
    ])


# ----------------------------------------------------------------- writing

@contextlib.contextmanager
def stage(tag: str):
    """Re-raise library errors as :class:`RunError` prefixed with ``tag``."""
    try:
        yield
    except RunError:
        raise
    except (MeshError, SingularSystemError, ValueError, ArithmeticError) as exc:
        raise RunError(f"{tag}: {exc}") from exc


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: dict, columns: list[str], rows) -> None:
    buf = io.StringIO()
    buf.write("# " + json.dumps(_clean(header), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path) -> tuple[dict, list[dict]]:
    """Header record and rows (as strings) of a CSV written by this module."""
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0][2:])
    rows = list(csv.DictReader(lines[1:]))
    return header, rows


def _mesh_stats(coeffs: EffectiveCoefficients) -> dict:
    p = coeffs.provenance
    return {k: p[k] for k in ("aspect", "volume_fraction", "n_nodes", "n_triangles",
                              "min_angle_deg", "particle_area", "circle_segments",
                              "grid_density")}


def _header(cfg: RunConfig, **extra) -> dict:
    return {"config_hash": cfg.hash(), "version": __version__, "inputs": cfg.as_dict(), **extra}


COEFF_COLUMNS = ["kind", "aspect", "volume_fraction", "nu_s", "beta_s", "nu_s_normalized",
                 "beta_s_normalized", "nu_b", "beta_b", "mu_H11", "mu_H12", "mu_H21",
                 "mu_H22", "mu_HS11", "mu_HS12", "mu_HS21", "mu_HS22", "n_nodes",
                 "n_triangles", "min_angle_deg"]


def _coeff_row(kind: str, c: EffectiveCoefficients) -> list:
    p = c.provenance
    return [kind, p["aspect"], p["volume_fraction"], c.nu_s, c.beta_s, c.nu_s_normalized,
            c.beta_s_normalized, c.nu_b, c.beta_b, *c.mu_H.ravel(), *c.mu_HS.ravel(),
            p["n_nodes"], p["n_triangles"], p["min_angle_deg"]]


def _coeff_record(c: EffectiveCoefficients) -> dict:
    return {"nu_H": c.nu_H, "beta_H": c.beta_H, "mu_H": c.mu_H, "mu_HS": c.mu_HS,
            "nu_s": c.nu_s, "nu_b": c.nu_b, "beta_s": c.beta_s, "beta_b": c.beta_b,
            "nu_s_normalized": c.nu_s_normalized, "beta_s_normalized": c.beta_s_normalized,
            "provenance": c.provenance}


def _compute(cfg: RunConfig, specs: list[CellSpec], jobs: int) -> dict:
    """Coefficients keyed by spec, each spec solved once."""
    unique = list(dict.fromkeys(specs))
    with stage("effective"):
        return dict(zip(unique, coefficients_for(unique, cfg.material, jobs)))


def _specs(cfg: RunConfig, fractions=None) -> list[CellSpec]:
    out = []
    with stage("cellmesh"):
        for aspect in cfg.cell.aspects:
            for f in (fractions or [None]):
                out.append(cfg.cell.spec(aspect, f, cfg.refine))
    return out


# ------------------------------------------------------------------ verbs

def cmd_cell(cfg: RunConfig, out: Path, aspect=None) -> list[Path]:
    """Solve one cell and write six velocity-field CSVs and a tensor JSON."""
    aspect = tuple(aspect) if aspect else cfg.cell.aspects[0]
    with stage("cellmesh"):
        spec = cfg.cell.spec(aspect, None, cfg.refine)
        mesh = build_cell(spec)
    with stage("effective"):
        result = solve_cell(mesh, cfg.material)
    coeffs = result.coefficients
    header = _header(cfg, mesh=_mesh_stats(coeffs))
    written = []
    centroids = mesh.nodes[mesh.triangles].mean(axis=1)
    for family, sols in (("chi", result.chi), ("xi", result.xi)):
        for m, l in PAIRS:
            sol = sols[(m, l)]
            vel = sol.velocity.at_centroids()
            pres = sol.pressure.nodal[mesh.triangles].mean(axis=1)
            pres = np.where(mesh.regions == 0, pres, np.nan)
            rows = [(e, centroids[e, 0], centroids[e, 1], int(mesh.regions[e]),
                     vel[e, 0], vel[e, 1], pres[e]) for e in range(mesh.n_triangles)]
            path = out / f"field_{family}{m + 1}{l + 1}.csv"
            hdr = dict(header, problem=f"{family}{m + 1}{l + 1}",
                       translation=sol.translation, angular_rate=sol.angular_rate,
                       residual=sol.residual)
            write_csv(path, hdr, ["element", "x", "y", "region", "u1", "u2", "p"], rows)
            written.append(path)
    path = out / "tensors.json"
    write_json(path, {"header": header, "cell": spec.aspect_label,
                      "material": asdict(cfg.material), **_coeff_record(coeffs),
                      "mu_H_energy": result.mu.mu_H_energy,
                      "beta_parts": asdict(result.beta_parts)})
    written.append(path)
    return written


def cmd_sweep(cfg: RunConfig, out: Path, jobs: int = 1) -> list[Path]:
    specs = _specs(cfg, list(cfg.sweep.volume_fractions))
    table = _compute(cfg, specs, jobs)
    rows = [table[s] for s in specs]
    return _write_coefficients(cfg, out, "sweep", [("sweep", c) for c in rows])


def cmd_effective(cfg: RunConfig, out: Path, jobs: int = 1) -> list[Path]:
    """Table rows at the configured fraction followed by the sweep rows."""
    main = _specs(cfg)
    sweep = _specs(cfg, list(cfg.sweep.volume_fractions))
    table = _compute(cfg, main + sweep, jobs)
    rows = [("table", table[s]) for s in main] + [("sweep", table[s]) for s in sweep]
    return _write_coefficients(cfg, out, "effective", rows)


def _ratios(rows) -> dict:
    table = {r[1].provenance["aspect"]: r[1] for r in rows if r[0] == "table"}
    if "1x1" in table and "2x0.5" in table:
        u, c = table["1x1"], table["2x0.5"]
        return {"nu_s_chain_over_uniform": c.nu_s / u.nu_s,
                "beta_s_chain_over_uniform": c.beta_s / u.beta_s}
    return {}


def _write_coefficients(cfg, out: Path, stem: str, rows) -> list[Path]:
    header = _header(cfg, meshes=[_mesh_stats(c) for _, c in rows], ratios=_ratios(rows))
    csv_path = out / f"{stem}.csv"
    write_csv(csv_path, header, COEFF_COLUMNS, [_coeff_row(k, c) for k, c in rows])
    json_path = out / f"{stem}.json"
    write_json(json_path, {"header": header,
                           "rows": [dict(kind=k, **_coeff_record(c)) for k, c in rows]})
    return [csv_path, json_path]


def flow_config(cfg: RunConfig, coeffs: EffectiveCoefficients, K: float, **kw) -> FlowConfig:
    f = cfg.flow
    base = FlowConfig(C_p=f.C_p, gamma=f.gamma, K=K, K1=f.K1,
                      R_m=cfg.material.magnetic_reynolds, nu_s=coeffs.nu_s,
                      beta_s=coeffs.beta_s, mu_hs22=float(coeffs.mu_HS[1, 1]),
                      n_samples=f.n_samples)
    return replace(base, **kw)


def cmd_flow(cfg: RunConfig, out: Path, jobs: int = 1) -> list[Path]:
    """Poiseuille, Couette and shear-stress CSVs for every aspect and ``K``."""
    specs = _specs(cfg)
    table = _compute(cfg, specs, jobs)
    written = []
    for spec in specs:
        coeffs = table[spec]
        label = coeffs.provenance["aspect"]
        for K in cfg.flow.K:
            with stage("macroflow"):
                fc = flow_config(cfg, coeffs, K)
                lam = lambda_param(fc)
                profiles = {"poiseuille": poiseuille(fc),
                            "couette": couette(replace(fc, C_p=0.0))}
                curve = shear_curve(fc, cfg.flow.gamma_grid)
            flow_inputs = asdict(fc)
            for kind, prof in profiles.items():
                inputs = dict(flow_inputs, C_p=0.0) if kind == "couette" else flow_inputs
                hdr = _header(cfg, mesh=_mesh_stats(coeffs), flow=kind,
                              flow_inputs=inputs, lam=lam)
                path = out / f"{kind}_{label}_K{K:g}.csv"
                write_csv(path, hdr, ["x2", "v1", "H1"], zip(prof.x2, prof.v1, prof.H1))
                written.append(path)
            hdr = _header(cfg, mesh=_mesh_stats(coeffs), flow="shear",
                          flow_inputs=dict(flow_inputs, C_p=0.0), lam=lam)
            path = out / f"shear_{label}_K{K:g}.csv"
            write_csv(path, hdr, ["gamma", "tau"], curve)
            written.append(path)
    return written


def cmd_check(cfg: RunConfig, out: Path | None = None, jobs: int = 1) -> list:
    """Run the invariant suite on the configured cells; returns check results."""
    from .checks import run_checks
    results = []
    for spec in _specs(cfg):
        with stage("cellmesh"):
            mesh = build_cell(spec)
        with stage("effective"):
            results.extend(run_checks(mesh, cfg.material))
    if out is not None:
        write_json(out / "checks.json", {"header": _header(cfg),
                                         "checks": [asdict(r) for r in results]})
    return results


# -------------------------------------------------------------------- CLI

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mrhomog", description=(
        "Cell problems, effective coefficients and channel flows of a "
        "magnetorheological suspension."))
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, text in (("cell", "solve one cell and write fields and tensors"),
                       ("effective", "coefficient table and volume-fraction sweep"),
                       ("flow", "Poiseuille, Couette and shear-stress curves"),
                       ("sweep", "volume-fraction sweep only"),
                       ("check", "run the invariant suite"),
                       ("config", "print the default config file")):
        s = sub.add_parser(verb, help=text)
        if verb == "config":
            continue
        s.add_argument("--config", type=Path, help="INI config file (defaults if omitted)")
        s.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        s.add_argument("--refine", type=int, default=0, help="mesh refinement level")
        s.add_argument("--jobs", type=int, default=1, help="parallel cell solves")
        if verb == "cell":
            s.add_argument("--aspect", help="cell aspect WxH (default: first configured)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.verb == "config":
        sys.stdout.write(default_config_text())
        return 0
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.refine < 0 or args.jobs < 1:
            raise ConfigError("--refine must be >= 0 and --jobs >= 1")
        cfg = replace(cfg, refine=args.refine)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.verb == "cell":
            aspect = _parse_aspects(args.aspect)[0] if args.aspect else None
            written = cmd_cell(cfg, args.out, aspect)
        elif args.verb == "effective":
            written = cmd_effective(cfg, args.out, args.jobs)
        elif args.verb == "sweep":
            written = cmd_sweep(cfg, args.out, args.jobs)
        elif args.verb == "flow":
            written = cmd_flow(cfg, args.out, args.jobs)
        else:
            results = cmd_check(cfg, args.out, args.jobs)
            for r in results:
                print(f"{'PASS' if r.ok else 'FAIL'}  {r.cell:6s} {r.name}: {r.detail}")
            return 0 if all(r.ok for r in results) else 1
    except ConfigError as exc:
        print(f"error: effio: {exc}", file=sys.stderr)
        return 2
    except RunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
