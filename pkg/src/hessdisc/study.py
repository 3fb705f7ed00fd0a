"""Convergence studies: mesh sequence -> scheme -> PDAS -> error table."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .analysis import ConvergenceTable, compute_errors, emit_table
from .control import PdasNonConvergence, pdas_solve
from .mesh import (MeshError, fixture_family, gen_square_mesh, gen_triangular_mesh,
                   load_mesh, validate_delta_adapted)
from .manufactured import PROBLEMS
from .sparse import ORDERING, SingularMatrixError

log = logging.getLogger(__name__)

SCHEMES = ("fvm", "adini", "gr")
#: Coarsest subdivision count per unit length of the builtin families.
BASE_N = {"fvm": 4, "adini": 2, "gr": 4}
FINEST_N = 64
DOMAIN_AREA = {"unit-square": 1.0, "l-shape": 3.0}


class ConfigError(ValueError):
    """Invalid or incompatible study configuration."""


@dataclass
class RunConfig:
    scheme: str
    problem: str = "ex1"
    levels: int | None = None
    alpha: float | None = None
    lo: float | None = None
    hi: float | None = None
    mesh: str = "builtin"        # "builtin", "fixtures" or a glob of mesh files
    theta: float | None = None   # gradient recovery only
    fvm_criterion: str = "face"

    def validate(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {', '.join(PROBLEMS)}")
        if self.levels is not None and self.levels < 1:
            raise ConfigError("levels must be at least 1")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.theta is not None:
            if self.scheme != "gr":
                raise ConfigError("theta only applies to the gradient-recovery scheme")
            if not self.theta > 0:
                raise ConfigError("theta must be positive")
        if self.fvm_criterion not in ("face", "vertex"):
            raise ConfigError(f"unknown boundary criterion {self.fvm_criterion!r}")

    def manufactured(self):
        kw = {k: v for k, v in (("alpha", self.alpha), ("lo", self.lo), ("hi", self.hi))
              if v is not None}
        try:
            return PROBLEMS[self.problem](**kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class StudyResult:
    table: ConvergenceTable
    metadata: dict
    failure: Exception | None = None
    runtime: float = 0.0   # wall clock seconds; kept out of the metadata

    @property
    def complete(self):
        return self.table.complete

    def csv(self):
        return emit_table(self.table, "csv")


def _builtin_sizes(cfg):
    base = BASE_N[cfg.scheme]
    max_levels = int(round(math.log2(FINEST_N / base))) + 1
    levels = cfg.levels if cfg.levels is not None else max_levels
    return [base * 2 ** i for i in range(levels)]


def mesh_sources(cfg, domain):
    """List of ``(label, loader)`` pairs, checked for scheme compatibility.

    Everything that can be rejected without solving is rejected here.
    """
    if cfg.mesh == "builtin":
        gen = gen_triangular_mesh if cfg.scheme == "gr" else gen_square_mesh
        return [(f"n={n}", lambda n=n: gen(n, domain)) for n in _builtin_sizes(cfg)]

    paths = fixture_family() if cfg.mesh == "fixtures" else fixture_family(cfg.mesh)
    if not paths:
        raise ConfigError(f"no mesh files match {cfg.mesh!r}")
    if cfg.levels is not None:
        if cfg.levels > len(paths):
            raise ConfigError(f"{cfg.levels} levels requested but only {len(paths)} mesh files")
        paths = paths[:cfg.levels]
    out = []
    for p in paths:
        try:
            m = load_mesh(p)
        except (OSError, MeshError) as exc:
            raise ConfigError(f"cannot load mesh {p}: {exc}") from exc
        _check_mesh(cfg, m, domain, p)
        out.append((p, lambda m=m: m))
    return out


def _check_mesh(cfg, mesh, domain, label):
    area = float(mesh.area.sum())
    if abs(area - DOMAIN_AREA[domain]) > 1e-8 * DOMAIN_AREA[domain]:
        raise ConfigError(f"mesh {label} covers area {area:.6g}, problem domain {domain} "
                          f"has area {DOMAIN_AREA[domain]:g}")
    if cfg.scheme == "adini" and not mesh.is_rectangular():
        raise ConfigError(f"adini needs axis-aligned rectangles; {label} is not")
    if cfg.scheme == "gr" and not mesh.is_triangular():
        raise ConfigError(f"gr needs a triangulation; {label} is not")
    if cfg.scheme == "fvm":
        rep = validate_delta_adapted(mesh)
        if not rep.passed:
            raise ConfigError(f"{label}: {rep.summary()}")


def build_hd(cfg, mesh):
    if cfg.scheme == "fvm":
        from .fvm import build_fvm_hd
        return build_fvm_hd(mesh, criterion=cfg.fvm_criterion, check=False)
    if cfg.scheme == "adini":
        from .adini import build_adini_hd
        return build_adini_hd(mesh)
    from .gr import build_gr_hd
    return build_gr_hd(mesh) if cfg.theta is None else build_gr_hd(mesh, theta=cfg.theta)


def _scheme_metadata(hd):
    meta = {"quadrature": hd.quad.rule, "B_kind": hd.B_kind, "hessian_norm": hd.hessian_norm}
    for key in ("theta", "sigma_scaling", "recovery", "defect_mode", "criterion"):
        if key in hd.meta:
            meta[key] = hd.meta[key]
    if "sigma_direction" in hd.meta:
        meta["sigma_direction"] = [float(v) for v in hd.meta["sigma_direction"]]
    if hd.scheme == "gr":
        meta["recovered_gradient_jacobian"] = "symmetrised"
    return meta


def run_study(cfg):
    """Run every level coarse to fine; a failing level ends the study early
    with ``table.complete = False`` and the exception in ``failure``."""
    cfg.validate()
    ex = cfg.manufactured()
    sources = mesh_sources(cfg, ex.domain)
    pr = ex.problem
    table = ConvergenceTable(hessian_norm="laplacian" if cfg.scheme == "fvm" else "hessian")
    meta = {
        "scheme": cfg.scheme, "problem": cfg.problem, "domain": ex.domain,
        "alpha": pr.alpha, "bounds": [pr.lo, pr.hi], "mesh": cfg.mesh,
        "ordering": dict(ORDERING), "pdas_start": "p=0", "levels": [],
    }
    failure = None
    t0 = time.perf_counter()
    for label, load in sources:
        t = time.perf_counter()
        mesh = load()
        try:
            hd = build_hd(cfg, mesh)
            meta.setdefault("scheme_options", _scheme_metadata(hd))
            sol = pdas_solve(pr, hd, mesh)
        except (PdasNonConvergence, SingularMatrixError) as exc:
            log.error("level %s failed: %s", label, exc)
            failure = exc
            table.complete = False
            meta["levels"].append({"mesh": label, "h": mesh.h, "error": str(exc)})
            break
        rep = compute_errors(hd, sol, ex, mesh)
        table.add(rep)
        meta["levels"].append({
            "mesh": label, "h": mesh.h, "n_cells": mesh.n_cells, "n_dofs": hd.n_dofs,
            "pdas_iterations": sol.iterations,
            "active_sets": [list(s) for s in sol.history],
            "optimality_residual": sol.residual,
        })
        log.info("%s %s %s: h=%.6f dofs=%d pdas=%d (%.1fs)", cfg.scheme, cfg.problem, label,
                 mesh.h, hd.n_dofs, sol.iterations, time.perf_counter() - t)
        del hd, sol
    meta["complete"] = table.complete
    return StudyResult(table, meta, failure, time.perf_counter() - t0)


def level_residuals(result):
    return np.array([lv["optimality_residual"] for lv in result.metadata["levels"]
                     if "optimality_residual" in lv])
