"""Config-driven experiment runner.

    loewner-kufarev run CONFIG [--output DIR] [-v] [--jobs N]
    loewner-kufarev catalogue

Exit codes: 0 success, 2 invalid config, 3 runtime failure in an analysis,
4 a hypothesis listed under ``assert`` did not hold.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import apps, io
from .boundary import (DEFAULT_RADIUS, estimate_holder, inverse_modulus, jordan_check, rectifiability,
                       split_composition, trace_boundary, window_time)
from .diagnostics import HYPOTHESES, diagnose
from .driving import CATALOGUE, ParameterError, term_from_config
from .flow import FlowField, integrate_grid

log = logging.getLogger("loewner_kufarev")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_HYPOTHESIS = 0, 2, 3, 4
QC_BOUND = 5.0 / 3.0 + 0.05


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FlowSpec(_Strict):
    direction: Literal["forward", "backward"] = "forward"
    horizon: float = Field(1.0, gt=0)
    rtol: float = Field(1e-10, gt=0)
    atol: float = Field(1e-10, gt=0)
    boundary_tol: float = Field(1e-6, gt=0)
    max_steps: int = Field(200000, gt=0)
    seeds: list[tuple[float, float]] = []
    trace_radius: float = Field(DEFAULT_RADIUS, ge=0.9, lt=1.0)
    trace_points: int = Field(256, ge=16)

    @field_validator("seeds")
    @classmethod
    def _inside(cls, v):
        for x, y in v:
            if math.hypot(x, y) >= 1.0:
                raise ValueError(f"seed ({x}, {y}) is not inside the unit disc")
        return v


class DiagnosticsSpec(_Strict):
    t: float = 0.0


class BoundarySpec(_Strict):
    pass


class HolderSpec(_Strict):
    n_angles: int = Field(256, ge=16)


class QcSpec(_Strict):
    window_radius: float = Field(0.9, gt=0, lt=1)
    pairs: int = Field(1000, gt=0)
    curve_points: int = Field(256, ge=16)
    seed: int = 0


class RectifiabilitySpec(_Strict):
    radius: float = Field(0.99, ge=0.9, lt=1.0)
    counts: list[int] = [256, 512, 1024]


class JordanSpec(_Strict):
    pass


class InverseSpec(_Strict):
    deltas: list[float] = Field(default_factory=lambda: np.geomspace(1e-4, 1e-2, 9).tolist())
    n: int = Field(1024, ge=16)


class SplitSpec(_Strict):
    n: int = Field(4, ge=1)
    probes: int = Field(100, gt=0)


class HeleShawSpec(_Strict):
    steps: int = Field(10, ge=0)
    dt: float = Field(0.01, ge=0)
    n: int = Field(256, ge=16)
    radius: float = Field(0.5, gt=0, lt=1)
    snapshot_every: int = Field(1, ge=1)
    from_flow: bool = False


class DlaSpec(_Strict):
    delta: float = Field(..., gt=0)
    n: int = Field(128, ge=16)
    radius: float = Field(0.99, gt=0, lt=1)


class Analyses(_Strict):
    diagnostics: Optional[DiagnosticsSpec] = None
    boundary: Optional[BoundarySpec] = None
    holder: Optional[HolderSpec] = None
    qc: Optional[QcSpec] = None
    rectifiability: Optional[RectifiabilitySpec] = None
    jordan: Optional[JordanSpec] = None
    inverse: Optional[InverseSpec] = None
    split: Optional[SplitSpec] = None
    hele_shaw: Optional[HeleShawSpec] = None
    dla: Optional[DlaSpec] = None

    def requested(self) -> list[str]:
        return [name for name in type(self).model_fields if getattr(self, name) is not None]


class OutputSpec(_Strict):
    directory: str = "out"
    formats: list[Literal["text", "json"]] = ["text"]


# assertion names that are not diagnostics hypotheses, with the analysis they need
CHECKS = {"jordan": "jordan", "qc": "qc", "rectifiable": "rectifiability", "split": "split"}


class ExperimentConfig(_Strict):
    term: dict
    flow: FlowSpec = FlowSpec()
    analyses: Analyses = Analyses()
    output: OutputSpec = OutputSpec()
    assert_: list[str] = Field(default_factory=list, alias="assert")

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    @field_validator("term")
    @classmethod
    def _term(cls, v):
        term_from_config(v)
        return v

    @model_validator(mode="after")
    def _assertions(self):
        for name in self.assert_:
            if name in CHECKS:
                if getattr(self.analyses, CHECKS[name]) is None:
                    raise ValueError(f"assert {name!r} needs the {CHECKS[name]!r} analysis")
            elif name in HYPOTHESES:
                if self.analyses.diagnostics is None:
                    raise ValueError(f"assert {name!r} needs the 'diagnostics' analysis")
            else:
                raise ValueError(f"unknown assertion {name!r}")
        return self

    def field(self) -> FlowField:
        f = self.flow
        return FlowField(term_from_config(self.term), f.direction, f.horizon, f.rtol, f.atol,
                         f.boundary_tol, f.max_steps)


class ConfigError(ValueError):
    pass


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            msg = err["msg"]
            if err["type"] == "extra_forbidden":
                msg = f"unknown key {err['loc'][-1]!r}"
            lines.append(f"{loc}: {msg}")
        raise ConfigError("; ".join(lines)) from exc


# ---------------------------------------------------------------------------
# analyses: each returns (files written, {check name: passed})
# ---------------------------------------------------------------------------


def _run_diagnostics(cfg, fld, spec, out):
    rep = diagnose(fld.term, spec.t)
    io.write_kv(out / "diagnostics.txt", rep.to_kv())
    return {name: v.holds for name, v in rep.hypotheses.items()}, rep.to_kv()


def _run_boundary(cfg, fld, spec, out):
    c = trace_boundary(fld, cfg.flow.horizon, cfg.flow.trace_radius, cfg.flow.trace_points)
    io.write_columns(out / "boundary.txt", {"theta": c.theta, "w": c.points, "wz": c.derivatives},
                     header=f"time = {io.fmt(c.time)}\nradius = {io.fmt(c.radius)}")
    return {}, {"length": c.length(), "points": len(c)}


def _run_holder(cfg, fld, spec, out):
    est = estimate_holder(fld, cfg.flow.horizon, n_angles=spec.n_angles)
    kv = {k: getattr(est, k) for k in type(est).__dataclass_fields__}
    io.write_kv(out / "holder.txt", kv)
    return {}, kv


def _run_qc(cfg, fld, spec, out):
    t_w = window_time(fld, cfg.flow.horizon, radius=spec.window_radius)
    n = max(1, math.ceil(cfg.flow.horizon / t_w - 1e-12))
    res = split_composition(fld, cfg.flow.horizon, n, window_radius=spec.window_radius,
                            pairs=spec.pairs, curve_points=spec.curve_points, seed=spec.seed, strict=False)
    worst = max(res.three_point) if res.three_point else math.inf
    ok = res.window_ok and worst <= QC_BOUND
    kv = {"window_time": t_w, "pieces": n, "max_piece_deviation": max(res.piece_deviation),
          "window_pairs_ok": res.window_ok, "three_point_max": worst, "three_point_bound": QC_BOUND,
          "passes": ok}
    io.write_kv(out / "qc.txt", kv)
    return {"qc": ok}, kv


def _run_rectifiability(cfg, fld, spec, out):
    r = rectifiability(fld, cfg.flow.horizon, spec.radius, tuple(spec.counts))
    kv = {"length": r.length, "converged": r.converged, "counts": spec.counts, "lengths": list(r.lengths)}
    io.write_kv(out / "rectifiability.txt", kv)
    return {"rectifiable": r.converged}, kv


def _run_jordan(cfg, fld, spec, out):
    c = trace_boundary(fld, cfg.flow.horizon, cfg.flow.trace_radius, cfg.flow.trace_points)
    ok = jordan_check(c)
    io.write_kv(out / "jordan.txt", {"jordan": ok, "points": len(c), "radius": c.radius})
    return {"jordan": ok}, {"jordan": ok}


def _run_inverse(cfg, fld, spec, out):
    m = inverse_modulus(fld, cfg.flow.horizon, spec.deltas, cfg.flow.trace_radius, spec.n)
    C, exponent, res = m.fit_power()
    io.write_columns(out / "inverse.txt", {"delta": m.deltas, "modulus": m.modulus},
                     header=f"spacing = {io.fmt(m.spacing)}\nfit.C = {io.fmt(C)}\n"
                            f"fit.exponent = {io.fmt(exponent)}\nfit.residual = {io.fmt(res)}")
    return {}, {"fit.C": C, "fit.exponent": exponent, "fit.residual": res}


def _run_split(cfg, fld, spec, out):
    r = split_composition(fld, cfg.flow.horizon, spec.n, probes=spec.probes, strict=False)
    kv = {"pieces": spec.n, "max_error": r.max_error, "tolerance": r.tolerance, "ok": r.ok}
    io.write_kv(out / "split.txt", kv)
    return {"split": r.ok}, kv


def _run_hele_shaw(cfg, fld, spec, out):
    state = apps.initial_state(spec.n, spec.radius, fld if spec.from_flow else None)
    rows, halt = [], None
    for k in range(spec.steps + 1):
        if k:
            try:
                state = apps.hele_shaw_step(state, spec.dt)
            except apps.CoupledHalt as exc:
                halt = exc.report
                break
        rows.append((state.step, state.time, state.timescale_accumulated, apps.conformal_radius(state),
                     apps.enclosed_area(state.boundary.points), apps.circularity_deviation(state.boundary.points)))
        if state.step % spec.snapshot_every == 0:
            io.write_columns(out / "hele_shaw" / f"step_{state.step:05d}.txt",
                             {"theta": state.theta, "w": state.boundary.points,
                              "xi": apps.hele_shaw_density(state.derivative_samples),
                              "atom_angle": state.measure.angles, "atom_weight": state.measure.weights},
                             header=f"step = {state.step}\ntime = {io.fmt(state.time)}\n"
                                    f"raw_mass = {io.fmt(state.measure.raw_mass)}")
    cols = np.array(rows, dtype=float).reshape(-1, 6).T
    io.write_columns(out / "hele_shaw" / "summary.txt",
                     dict(zip(["step", "time", "timescale", "conformal_radius", "area", "circularity"], cols)))
    kv = {"steps_completed": len(rows) - 1, "halted": halt is not None}
    if halt is not None:
        kv.update({"halt.step": halt.step, "halt.reason": halt.reason, "halt.detail": halt.detail,
                   "halt.angle": halt.angle})
    io.write_kv(out / "hele_shaw" / "report.txt", kv)
    return {}, kv


def _run_dla(cfg, fld, spec, out):
    state = apps.initial_state(spec.n, spec.radius, fld)
    d = apps.carleson_makarov_density(state, spec.delta)
    io.write_columns(out / "dla.txt", {"theta": d.theta, "eps": d.eps, "flagged": d.flagged.astype(float)},
                     header=f"delta = {io.fmt(d.delta)}")
    return {}, {"flagged": int(np.count_nonzero(d.flagged)), "eps_min": float(d.eps.min()),
                "eps_max": float(d.eps.max())}


RUNNERS = {
    "diagnostics": _run_diagnostics, "boundary": _run_boundary, "holder": _run_holder, "qc": _run_qc,
    "rectifiability": _run_rectifiability, "jordan": _run_jordan, "inverse": _run_inverse,
    "split": _run_split, "hele_shaw": _run_hele_shaw, "dla": _run_dla,
}


def _trajectories(cfg, fld, out):
    seeds = [complex(x, y) for x, y in cfg.flow.seeds]
    for i, tr in enumerate(integrate_grid(fld, seeds)):
        io.write_columns(out / f"trajectory_{i:03d}.txt", {"t": tr.t, "w": tr.w, "wz": tr.wz},
                         header=f"seed = {io.fmt(tr.seed)}\nexit = {tr.exit.name}")


def run(cfg: ExperimentConfig, out_dir=None, jobs: int = 1) -> int:
    """Execute every requested analysis; returns the exit code."""
    out = Path(out_dir if out_dir is not None else cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    stale = out / io.MANIFEST
    if stale.exists():
        stale.unlink()
    io.atomic_write(out / "config.json",
                    json.dumps(cfg.model_dump(by_alias=True), sort_keys=True, indent=2) + "\n")
    fld = cfg.field()
    names = cfg.analyses.requested()

    def one(name):
        log.info("running %s", name)
        try:
            checks, summary = RUNNERS[name](cfg, fld, getattr(cfg.analyses, name), out)
            return name, checks, summary, None
        except Exception as exc:  # isolate failures per analysis
            log.error("%s failed: %s", name, exc)
            return name, {}, {}, f"{type(exc).__name__}: {exc}"

    errors = {}
    if cfg.flow.seeds:
        try:
            _trajectories(cfg, fld, out)
        except Exception as exc:
            errors["trajectories"] = f"{type(exc).__name__}: {exc}"
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, names))
    else:
        results = [one(n) for n in names]

    checks, summaries = {}, {}
    for name, c, s, err in results:
        checks.update(c)
        summaries[name] = s
        if err is not None:
            errors[name] = err
    failed = [a for a in cfg.assert_ if not checks.get(a, False)]
    code = EXIT_RUNTIME if errors else EXIT_HYPOTHESIS if failed else EXIT_OK

    status = {"term": term_from_config(cfg.term).describe(), "analyses": names, "exit_code": code}
    for name in sorted(errors):
        status[f"error.{name}"] = errors[name]
    for a in cfg.assert_:
        status[f"assert.{a}"] = checks.get(a, False)
    io.write_kv(out / "status.txt", status)
    if "json" in cfg.output.formats:
        io.atomic_write(out / "summary.json", json.dumps(_jsonable(summaries), sort_keys=True, indent=2) + "\n")
    io.write_manifest(out)
    return code


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return io.fmt(obj) if not math.isfinite(obj) else float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    return io.fmt(obj)


def list_catalogue() -> str:
    lines = []
    for name, key, params, covers in CATALOGUE:
        lines.append(f"{name} ({key}): {params}")
        lines.append(f"    theorems: {', '.join(covers)}")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="loewner-kufarev", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config (JSON or YAML)")
    p_run.add_argument("config")
    p_run.add_argument("--output", "-o", help="override the output directory")
    p_run.add_argument("--verbose", "-v", action="count", default=0)
    p_run.add_argument("--jobs", "-j", type=int, default=1,
                       help="run independent analyses in N threads (outputs are identical)")
    sub.add_parser("catalogue", help="list built-in driving-term families")
    args = parser.parse_args(argv)

    if args.command == "catalogue":
        sys.stdout.write(list_catalogue())
        return EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code = run(cfg, args.output, max(1, args.jobs))
    if code:
        print(f"finished with exit code {code}; see status.txt", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
