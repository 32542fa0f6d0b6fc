"""Pipeline orchestration: build, gauge, solve, verify, and study stages.

Every command materializes its prerequisites in-process, writes one
structured-text report per stage plus fixed-column CSV tables, and embeds the
configuration digest in each document so artifacts are self-describing.  With
the same configuration and seed, every byte written is identical across runs:
no timestamps, no machine identifiers.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import connection, fieldio, forms, gauge, maps, solver, synth, verify
from .config import RunConfig, config_hash
from .forms import Grid, MatrixForm

__all__ = ["PipelineError", "STAGES", "run"]

STAGES = ("generate", "omega", "gauge", "solve", "verify", "study")

# Residuals are judged against the sum of their defect sources (map tension,
# gauge harmonic part, potential representation error, solver tolerance) up
# to a fixed constant; exceeding it means a stage is wrong, not inaccurate.
BUDGET_FACTOR = 2.0


class PipelineError(RuntimeError):
    """A stage failed; the message carries the stage and the config digest."""


def _flow_plan(cfg: RunConfig, res: int) -> tuple:
    stability = (1.0 / res) ** 2 / 4.0
    steps = cfg.flow_steps or math.ceil(cfg.flow_time / stability)
    return cfg.flow_time / steps, steps


def _build_map(cfg: RunConfig, res: int):
    grid = Grid(cfg.n, res)
    if cfg.map_kind == "synthetic_omega":
        return None
    if cfg.map_kind == "geodesic":
        return maps.geodesic_map(grid, cfg.m, cfg.wave)
    base = (maps.constant_map(grid, cfg.m) if cfg.base == "constant"
            else maps.geodesic_map(grid, cfg.m, cfg.wave))
    u = maps.perturbed_map(base, cfg.delta, cfg.seed,
                           kmin=cfg.kmin, kmax=cfg.kmax)
    if cfg.map_kind == "perturbed":
        return u
    tau, steps = _flow_plan(cfg, res)
    return maps.heat_flow_relax(u, tau=tau, steps=steps)


def _build_omega(cfg: RunConfig, res: int, u) -> MatrixForm:
    if cfg.map_kind != "synthetic_omega":
        return connection.omega_sphere(u)
    grid = Grid(cfg.n, res)
    if cfg.epsilon == 0.0:
        return MatrixForm.zeros(grid, 1, cfg.m)
    rng = np.random.default_rng(cfg.seed)
    return synth.synthetic_connection(
        grid, cfg.m, rng, kmax=cfg.omega_kmax, exact_frac=cfg.exact_frac,
        target_norm=cfg.epsilon, support=cfg.support)


class _Context:
    """Lazily computed stage products for one configuration and resolution."""

    def __init__(self, cfg: RunConfig, res: int | None = None):
        self.cfg = cfg
        self.res = res or cfg.res
        self._cache = {}

    def _get(self, name, build):
        if name not in self._cache:
            self._cache[name] = build()
        return self._cache[name]

    @property
    def map(self):
        return self._get("map", lambda: _build_map(self.cfg, self.res))

    @property
    def omega(self) -> MatrixForm:
        return self._get("omega",
                         lambda: _build_omega(self.cfg, self.res, self.map))

    @property
    def pair(self) -> gauge.GaugePair:
        return self._get("pair", lambda: gauge.coulomb_gauge(
            self.omega, tol=self.cfg.gauge_tol,
            max_iter=self.cfg.gauge_max_iter))

    @property
    def solved(self) -> tuple:
        return self._get("solved", lambda: solver.solve_pair(
            self.omega, self.pair, tol=self.cfg.solver_tol,
            max_iter=self.cfg.solver_max_iter,
            regime_limit=self.cfg.regime_limit,
            probe_seed=self.cfg.probe_seed))

    def budget_components(self) -> tuple:
        _, _, report = self.solved
        parts = [("harmonic", report.harmonic_budget),
                 ("representation", self.pair.diagnostics.representation or 0.0),
                 ("tolerance", self.cfg.solver_tol)]
        if self.map is not None:
            parts.insert(0, ("tension", maps.tension_residual(self.map)))
        return tuple(parts)

    def residual_report(self) -> verify.ResidualReport:
        A, B, report = self.solved
        components = self.budget_components()
        if self.map is None:
            return verify.ResidualReport(
                l2=report.residual_l2, sup=report.residual_sup,
                budget=sum(v for _, v in components), components=components)
        return verify.conservation_residual(
            A, B, self.map, budget_components=components)


def _doc(cfg: RunConfig, stage: str, body: dict) -> dict:
    return {"stage": stage, "config_hash": config_hash(cfg),
            "couplings_version": solver.COUPLINGS_VERSION,
            "config": cfg.as_dict(), **body}


def _write_json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: tuple, rows):
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_plot(path: Path, columns: tuple, pairs):
    lines = [f"# {columns[0]} {columns[1]}"]
    lines += [f"{x:.17e} {y:.17e}" for x, y in pairs]
    path.write_text("\n".join(lines) + "\n")


def _stage_generate(ctx: _Context, out: Path):
    cfg = ctx.cfg
    if ctx.map is None:
        raise ValueError("synthetic_omega configurations have no map to generate")
    fieldio.write_field(out / "map.f64", ctx.map)
    body = {"map_kind": cfg.map_kind,
            "tension": maps.tension_residual(ctx.map),
            "dirichlet_energy": maps.dirichlet_energy(ctx.map)}
    if cfg.map_kind == "heatflow":
        tau, steps = _flow_plan(cfg, ctx.res)
        body["flow"] = {"tau": tau, "steps": steps, "time": cfg.flow_time}
    _write_json(out / "generate.json", _doc(cfg, "generate", body))


def _stage_omega(ctx: _Context, out: Path):
    omega = ctx.omega
    fieldio.write_field(out / "omega.f64", omega)
    body = {"l2": forms.l2_norm(omega), "sup": forms.sup_norm(omega),
            "lorentz_n2": synth.lorentz_norm_of_connection(omega),
            "antisymmetry_defect": omega.antisymmetry_defect()}
    _write_json(out / "omega.json", _doc(ctx.cfg, "omega", body))


def _stage_gauge(ctx: _Context, out: Path):
    pair = ctx.pair
    fieldio.write_field(out / "rotation.f64", pair.P)
    fieldio.write_field(out / "potential.f64", pair.xi)
    diag = dataclasses.asdict(pair.diagnostics)
    _write_json(out / "gauge.json", _doc(ctx.cfg, "gauge", diag))


def _stage_solve(ctx: _Context, out: Path):
    A, B, report = ctx.solved
    fieldio.write_field(out / "a_field.f64", A)
    fieldio.write_field(out / "b_field.f64", B)
    diffs = [d.total for d in report.diff_norms]
    body = dataclasses.asdict(report)
    body["diff_totals"] = diffs
    _write_json(out / "solve.json", _doc(ctx.cfg, "solve", body))
    rows = [(i + 1, diffs[i], report.ratios[i - 1] if i else "")
            for i in range(len(diffs))]
    _write_csv(out / "solve.csv", ("iteration", "difference", "ratio"), rows)
    _write_plot(out / "plot_iteration_vs_kappa.dat", ("iteration", "kappa"),
                [(float(i + 1), report.ratios[i - 1])
                 for i in range(1, len(diffs))])


def _verify_rows(ctx: _Context, residual, bounds) -> list:
    rows = [("residual_l2", residual.l2),
            ("residual_sup", residual.sup),
            ("budget", residual.budget),
            ("coordinate_gap", residual.coordinate_gap)]
    rows += [(f"budget_{name}", value) for name, value in residual.components]
    if ctx.map is not None:
        sphere = verify.sphere_divergence_residual(ctx.map)
        rows += [("sphere_divergence_l2", sphere.l2),
                 ("sphere_divergence_sup", sphere.sup)]
    rows += [("rotation_distance_sup", bounds.rotation_distance_sup),
             ("negdet_points", bounds.negdet_points),
             ("da_n1", bounds.da_n1), ("db_n2", bounds.db_n2),
             ("omega_n2", bounds.omega_n2), ("bound_ratio", bounds.ratio)]
    return rows


def _stage_verify(ctx: _Context, out: Path):
    A, B, _ = ctx.solved
    residual = ctx.residual_report()
    if residual.l2 > BUDGET_FACTOR * max(residual.budget, ctx.cfg.solver_tol):
        raise ValueError(
            f"conservation residual {residual.l2:.3e} exceeds the defect "
            f"budget {residual.budget:.3e} (factor {BUDGET_FACTOR})")
    bounds = verify.bound_ratios(A, B, ctx.omega)
    if bounds.negdet_points:
        raise ValueError(
            f"{bounds.negdet_points} points have a non-positive determinant")
    rows = _verify_rows(ctx, residual, bounds)
    body = {"residual": dataclasses.asdict(residual),
            "bounds": dataclasses.asdict(bounds)}
    _write_json(out / "verify.json", _doc(ctx.cfg, "verify", body))
    _write_csv(out / "verify.csv", ("metric", "value"), rows)


def _study_workers() -> int:
    raw = os.environ.get("GAUGEFLOW_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        workers = int(raw)
    except ValueError:
        raise ValueError(f"GAUGEFLOW_THREADS must be an integer, got {raw!r}")
    if workers < 1:
        raise ValueError(f"GAUGEFLOW_THREADS must be >= 1, got {workers}")
    return workers


def _stage_study(ctx: _Context, out: Path):
    cfg = ctx.cfg
    collected = {}

    def evaluate(res: int) -> verify.ResidualReport:
        report = _Context(cfg, res).residual_report()
        collected[res] = report
        return report

    workers = _study_workers()
    if workers == 1:
        report = verify.convergence_study(evaluate, cfg.resolutions)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            report = verify.convergence_study(
                evaluate, cfg.resolutions, mapper=pool.map)
    rows = [(res, 1.0 / res, collected[res].l2, collected[res].sup,
             collected[res].budget, report.order)
            for res in cfg.resolutions]
    _write_json(out / "study.json",
                _doc(cfg, "study", {"residual": dataclasses.asdict(report)}))
    _write_csv(out / "study.csv",
               ("resolution", "h", "residual_l2", "residual_sup",
                "budget", "order"), rows)
    _write_plot(out / "plot_h_vs_residual.dat", ("h", "residual_l2"),
                [(1.0 / res, collected[res].l2) for res in cfg.resolutions])


_RUNNERS = {
    "generate": _stage_generate,
    "omega": _stage_omega,
    "gauge": _stage_gauge,
    "solve": _stage_solve,
    "verify": _stage_verify,
    "study": _stage_study,
}

_ARTIFACTS = {
    "generate": ("map.f64", "map.f64.json", "generate.json"),
    "omega": ("omega.f64", "omega.f64.json", "omega.json"),
    "gauge": ("rotation.f64", "rotation.f64.json",
              "potential.f64", "potential.f64.json", "gauge.json"),
    "solve": ("a_field.f64", "a_field.f64.json",
              "b_field.f64", "b_field.f64.json",
              "solve.json", "solve.csv", "plot_iteration_vs_kappa.dat"),
    "verify": ("verify.json", "verify.csv"),
    "study": ("study.json", "study.csv", "plot_h_vs_residual.dat"),
}


def _chain(cfg: RunConfig, command: str) -> tuple:
    if command == "study":
        return ("study",)
    upstream = ("generate", "omega", "gauge", "solve", "verify")
    chain = upstream[:upstream.index(command) + 1]
    if cfg.map_kind == "synthetic_omega" and command != "generate":
        chain = chain[1:]
    return chain


def run(cfg: RunConfig, command: str) -> dict:
    """Run a command and its prerequisites; returns {stage: [artifact paths]}.

    Any failure is re-raised as PipelineError tagged with the stage name and
    the configuration digest.
    """
    if command not in STAGES:
        raise ValueError(f"unknown command {command!r}, expected one of {STAGES}")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = _Context(cfg)
    written = {}
    for stage in _chain(cfg, command):
        try:
            _RUNNERS[stage](ctx, out)
        except Exception as exc:
            raise PipelineError(
                f"stage {stage} failed (config {config_hash(cfg)}): {exc}"
            ) from exc
        written[stage] = [str(out / name) for name in _ARTIFACTS[stage]]
    return written
