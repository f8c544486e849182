"""
Experiment runners behind the command line.

Each ``run_*`` function takes an :class:`ExperimentConfig` and returns an
:class:`Outcome`: the files to write (name -> text), a list of named checks and
an overall pass flag.  Nothing is written here, so a run that raises leaves no
partial output; the caller writes every file at the end in sorted order.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import reports
from .assembly import assemble_stiffness_derivative, validate_spd
from .config import ExperimentConfig
from .fields import (ConformalMetric, EuclideanMetric, MetricError, PerturbationDirection,
                     PerturbedMetric, ScalarField, sample_random_conformal,
                     sample_random_general)
from .genericity import (fixture_trace, morse_scan, nodal_regularity_scan, normalized_traces,
                         simplicity_scan, splitting_experiment, wucp_check)
from .mesh import (Mesh, generate_annulus_mesh, generate_disk_mesh, read_mesh, read_triangle,
                   refine)
from .oracles import annulus_spectrum, disk_spectrum, disk_split_slopes
from .steklov import build_dtn, resolvent_apply, steklov_eigs
from .variation import dtn_variation, fd_convergence, density_identity_residual

log = logging.getLogger(__name__)

DEFAULT_FD_STEPS = (1e-3, 5e-4, 2.5e-4)
DEFAULT_SPLIT_STEPS = (1e-2, 5e-3, 2.5e-3)


@dataclass
class Check:
    name: str
    value: float
    limit: str
    passed: bool

    def to_record(self) -> dict:
        return {"name": self.name, "value": self.value, "limit": self.limit,
                "passed": bool(self.passed)}


@dataclass
class Outcome:
    files: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str, value: float, limit: str, passed: bool) -> None:
        self.checks.append(Check(name, float(value), limit, bool(passed)))
        if not passed:
            log.warning("check failed: %s = %.3e (limit %s)", name, value, limit)


# --------------------------------------------------------------------------
# shared setup
# --------------------------------------------------------------------------

def mesh_levels(cfg: ExperimentConfig) -> list[Mesh]:
    """Base mesh followed by ``cfg.refinements`` uniform refinements."""
    d = cfg.domain
    if d.kind == "disk":
        m = generate_disk_mesh(d.radius, d.target_h)
    elif d.kind == "annulus":
        m = generate_annulus_mesh(d.r_inner, d.r_outer, d.target_h)
    elif d.ele:
        m = read_triangle(d.path, d.ele)
    else:
        m = read_mesh(d.path)
    out = [m]
    for _ in range(cfg.refinements):
        out.append(refine(out[-1]))
    return out


def _finest(cfg: ExperimentConfig):
    mesh = mesh_levels(cfg)[-1]
    metric = cfg.build_metric()
    rep = validate_spd(metric, mesh)
    if rep.failed:
        raise MetricError(f"metric is not positive definite on the mesh: "
                          f"min eigenvalue {rep.min_eigenvalue:.3e} at {rep.where} {rep.index}")
    return mesh, metric


def oracle_for(cfg: ExperimentConfig, count: int) -> np.ndarray | None:
    """Closed-form spectrum when the metric is a constant multiple of Euclidean."""
    metric = cfg.build_metric()
    if not isinstance(metric, EuclideanMetric):
        return None
    # g = c I leaves the Dirichlet energy unchanged and stretches lengths by sqrt(c)
    factor = 1.0 / math.sqrt(metric.scale)
    if cfg.domain.kind == "disk":
        return factor * disk_spectrum(cfg.domain.radius, count)
    if cfg.domain.kind == "annulus":
        return factor * annulus_spectrum(cfg.domain.r_inner, cfg.domain.r_outer, count)
    return None


def _provenance(cfg: ExperimentConfig) -> dict:
    # the output directory is left out so that relocated re-runs stay byte-identical
    conf = cfg.to_dict()
    conf.pop("output_dir")
    return {"config": conf, "seed": cfg.seed,
            "tolerances": cfg.tolerances.__dict__.copy()}


def _order(e0: float, e1: float, h0: float, h1: float) -> float:
    if e0 <= 0 or e1 <= 0:
        return float("nan")
    return math.log(e0 / e1) / math.log(h0 / h1)


# --------------------------------------------------------------------------
# spectrum
# --------------------------------------------------------------------------

def run_spectrum(cfg: ExperimentConfig) -> Outcome:
    tol = cfg.tolerances
    out = Outcome()
    metric = cfg.build_metric()
    count = cfg.eigen_count
    oracle = oracle_for(cfg, count)
    levels, rows = [], []
    spec = mesh = None
    for lev, mesh in enumerate(mesh_levels(cfg)):
        rep = validate_spd(metric, mesh)
        if rep.failed:
            raise MetricError(f"metric is not positive definite on level {lev}: "
                              f"min eigenvalue {rep.min_eigenvalue:.3e}")
        dtn = build_dtn(mesh, metric, cfg.quad_order, cfg.mass)
        spec = steklov_eigs(dtn, count=min(count, dtn.S.shape[0]), gap_tol=tol.gap_tol)
        levels.append({"level": lev, "mesh_h": mesh.h_max, "vertices": len(mesh.vertices),
                       "eigenvalues": spec.eigenvalues})
        log.info("level %d: h=%.4f, %d vertices", lev, mesh.h_max, len(mesh.vertices))
        for i, lam in enumerate(spec.eigenvalues):
            row = {"level": lev, "mesh_h": mesh.h_max, "vertices": len(mesh.vertices),
                   "index": i, "eigenvalue": float(lam), "oracle": "", "rel_error": "",
                   "order": ""}
            if oracle is not None and i < len(oracle) and oracle[i] > 0:
                err = abs(lam - oracle[i]) / oracle[i]
                row.update(oracle=float(oracle[i]), rel_error=err)
                if lev > 0:
                    prev = rows[-len(spec.eigenvalues)]
                    row["order"] = _order(prev["rel_error"], err, prev["mesh_h"], mesh.h_max)
            rows.append(row)

    out.check("max_pencil_residual", float(np.max(spec.residuals)), f"<= {tol.residual_tol}",
              float(np.max(spec.residuals)) <= tol.residual_tol)
    summary = {"eigenvalues": spec.eigenvalues, "clusters": [list(c) for c in spec.clusters],
               "residuals": spec.residuals, "mesh_h": mesh.h_max,
               "vertices": len(mesh.vertices), "loops": len(mesh.boundary_loops),
               "metric_descriptor": metric.descriptor(), "levels": levels}
    if oracle is not None:
        errs = [r["rel_error"] for r in rows if r["level"] == len(levels) - 1 and r["rel_error"] != ""]
        worst = max(errs) if errs else 0.0
        out.check("max_rel_error_finest", worst, f"<= {tol.eig_rel_tol}", worst <= tol.eig_rel_tol)
        summary["oracle"] = oracle
        if len(levels) >= 3:
            orders = [r["order"] for r in rows if r["level"] == len(levels) - 1
                      and r["order"] != "" and not math.isnan(r["order"])]
            mean_order = float(np.mean(orders)) if orders else float("nan")
            ok = abs(mean_order - tol.order) <= tol.order_tol
            out.check("observed_order", mean_order,
                      f"{tol.order} +- {tol.order_tol}", ok)
            summary["observed_order"] = mean_order
    if cfg.export_matrices:
        out.files["stiffness.triplets"] = reports.triplet_text(dtn.K.matrix)
        out.files["boundary_mass.triplets"] = reports.triplet_text(dtn.mass.matrix)
    summary.update(_provenance(cfg))
    summary["checks"] = out.checks
    out.files["spectrum.json"] = reports.dumps(summary)
    out.files["convergence.csv"] = reports.csv_text(
        rows, ["level", "mesh_h", "vertices", "index", "eigenvalue", "oracle", "rel_error", "order"])
    series = []
    hs = [lv["mesh_h"] for lv in levels]
    for i in range(len(spec.eigenvalues)):
        series.append({"x": hs, "y": [lv["eigenvalues"][i] for lv in levels],
                       "label": f"lambda_{i}"})
    markers = []
    if oracle is not None:
        markers.append({"x": [0.0] * len(oracle), "y": list(oracle), "label": "closed form",
                        "shape": "square"})
    out.files["spectrum.svg"] = reports.svg_plot(series, "Steklov eigenvalues by mesh level",
                                                 "h_max", "eigenvalue", markers)
    return out


# --------------------------------------------------------------------------
# variation check
# --------------------------------------------------------------------------

def _variation_directions(cfg: ExperimentConfig):
    p = cfg.perturbation
    explicit = p.direction()
    if p.kind == "zero":
        zero = ScalarField.constant(0.0)
        return [zero], [explicit], [zero]
    if p.kind == "conformal":
        return [explicit.sigma], [explicit], [explicit.sigma]
    sig = [sample_random_conformal(p.seed + k, p.modes, p.amplitude).sigma
           for k in range(p.conformal_samples)]
    if p.kind == "general":
        gen = [explicit]
    else:
        gen = [sample_random_general(p.seed + k, p.modes, p.amplitude) for k in range(p.fd_samples)]
    dens = [sample_random_conformal(p.seed + 10_000 + k, p.modes, p.amplitude).sigma
            for k in range(p.density_pairs)]
    return sig, gen, dens


def _mnorm(M, x) -> float:
    return float(np.sqrt(max(x @ M @ x, 0.0)))


def run_variation_check(cfg: ExperimentConfig) -> Outcome:
    tol = cfg.tolerances
    out = Outcome()
    mesh, metric = _finest(cfg)
    dtn = build_dtn(mesh, metric, cfg.quad_order, cfg.mass)
    full = steklov_eigs(dtn, gap_tol=tol.gap_tol)
    M = dtn.M
    lam_all, psi_all = full.eigenvalues, full.eigenvectors
    nz = [i for i in range(min(cfg.eigen_count, len(lam_all))) if i not in set(full.zero_modes())]
    sigmas, generals, dens_sigmas = _variation_directions(cfg)
    rng = np.random.default_rng(cfg.seed)
    report = {"mesh_h": mesh.h_max, "metric_descriptor": metric.descriptor()}

    # conformal closed form: dLf = -(sigma/2) lam f on eigenpairs
    conf = []
    dk_max = 0.0
    for j, s in enumerate(sigmas):
        h = PerturbationDirection.conformal(s)
        DK = assemble_stiffness_derivative(mesh, metric, h, cfg.quad_order)
        dk_max = max(dk_max, float(abs(DK.matrix).max()) if DK.matrix.nnz else 0.0)
        sig_b = s.value(mesh.vertices[dtn.K.boundary])
        for i in nz:
            f = psi_all[:, i]
            lam = lam_all[i]
            r = dtn_variation(dtn, h, f).dLf + 0.5 * sig_b * lam * f
            conf.append({"sigma": j, "index": i, "eigenvalue": lam,
                         "relative_residual": _mnorm(M, r) / (lam * _mnorm(M, f))})
    worst = max((c["relative_residual"] for c in conf), default=0.0)
    out.check("conformal_identity", worst, f"<= {tol.identity_tol}", worst <= tol.identity_tol)
    out.check("conformal_DK_max_entry", dk_max, "<= 1e-14", dk_max <= 1e-14)
    report["conformal"] = {"records": conf, "max_relative_residual": worst, "DK_max_entry": dk_max}

    # finite differences in general directions
    steps = cfg.perturbation.steps or DEFAULT_FD_STEPS
    fd = []
    k = min(6, len(lam_all))
    for j, h in enumerate(generals):
        f = psi_all[:, 1:k] @ rng.uniform(-1.0, 1.0, size=k - 1)
        study = fd_convergence(dtn, h, f, steps)
        orders = [None if not np.isfinite(o) else o for o in study.orders]
        parts = dtn_variation(dtn, h, f).decomposition
        fd.append({"direction": j, "label": h.label, "descriptor": h.descriptor(),
                   "decomposition_norms": {k: _mnorm(M, v) for k, v in sorted(parts.items())},
                   "steps": study.steps, "mismatch": study.mismatch, "orders": orders})
        last = study.mismatch[-1]
        out.check(f"fd_mismatch[{j}]", last, f"<= {tol.fd_tol}", last <= tol.fd_tol)
        if last > 1e-13:
            # orders are only meaningful above round-off
            worst_o = max(abs(o - tol.order) for o in study.orders)
            out.check(f"fd_order[{j}]", worst_o, f"|order - {tol.order}| <= {tol.order_tol}",
                      worst_o <= tol.order_tol)
    report["finite_difference"] = fd

    # density identity at n = 2
    dens = []
    pairs = nz[:5]
    for j, s in enumerate(dens_sigmas):
        psi = rng.standard_normal(len(dtn.K.boundary))
        for i in pairs:
            d = density_identity_residual(dtn, lam_all[i], psi_all[:, i], psi, s, n=2)
            rel = d.residual / d.scale if d.scale > 0 else 0.0
            dens.append({"pair": j, "index": i, "lhs": d.lhs, "rhs": d.rhs,
                         "residual": d.residual, "relative": rel})
    worst = max((d["relative"] for d in dens), default=0.0)
    out.check("density_identity", worst, f"<= {tol.identity_tol}", worst <= tol.identity_tol)
    report["density"] = {"records": dens, "max_relative_residual": worst}

    # resolvent identity over the full pencil
    S = dtn.S
    res = []
    seen = []
    for i in nz:
        a, b = full.cluster_of(i)
        if (a, b) in seen:
            continue
        seen.append((a, b))
        if len(seen) > 3:
            break
        lam = float(np.mean(lam_all[a:b]))
        block = np.r_[full.zero_modes(), np.arange(a, b)]
        for _ in range(10):
            w = rng.standard_normal(S.shape[0])
            Q = psi_all[:, block]
            w = w - Q @ (Q.T @ (M @ w))
            Rw = resolvent_apply(full, lam, w)
            r = np.linalg.norm((S - lam * M) @ Rw - M @ w) / np.linalg.norm(M @ w)
            res.append({"eigenvalue": lam, "relative_residual": float(r)})
    worst = max((r["relative_residual"] for r in res), default=0.0)
    out.check("resolvent_identity", worst, f"<= {tol.identity_tol}", worst <= tol.identity_tol)
    report["resolvent"] = {"records": res, "max_relative_residual": worst}

    report.update(_provenance(cfg))
    report["checks"] = out.checks
    out.files["variation.json"] = reports.dumps(report)
    out.files["fd_convergence.csv"] = reports.csv_text(
        [{"direction": r["direction"], "step": t, "mismatch": m}
         for r in fd for t, m in zip(r["steps"], r["mismatch"])],
        ["direction", "step", "mismatch"])
    return out


# --------------------------------------------------------------------------
# splitting
# --------------------------------------------------------------------------

def _split_direction(cfg: ExperimentConfig) -> PerturbationDirection:
    p = cfg.perturbation
    return p.direction() or sample_random_conformal(p.seed, p.modes, p.amplitude)


def run_split(cfg: ExperimentConfig) -> Outcome:
    tol = cfg.tolerances
    out = Outcome()
    mesh, metric = _finest(cfg)
    h = _split_direction(cfg)
    steps = cfg.perturbation.steps or DEFAULT_SPLIT_STEPS
    rep = splitting_experiment(mesh, metric, cfg.perturbation.cluster, h, steps,
                               cfg.quad_order, cfg.mass, tol.gap_tol)
    summary = rep.to_record()
    summary["skipped_steps"] = list(rep.skipped)
    if rep.skipped:
        out.check("skipped_steps", len(rep.skipped), "== 0", False)

    oracle = None
    if (cfg.domain.kind == "disk" and isinstance(metric, EuclideanMetric) and metric.scale == 1.0
            and h.kind == "conformal" and cfg.perturbation.cluster >= 1
            and rep.cluster[1] - rep.cluster[0] == 2):
        oracle = disk_split_slopes(h.sigma, cfg.domain.radius, cfg.perturbation.cluster)
        summary["oracle_slopes"] = oracle
        gap_oracle = float(oracle[-1] - oracle[0])
        summary["oracle_gap_slope"] = gap_oracle
        if len(rep.steps) and gap_oracle > 0:
            g = float(rep.gap_over_t()[-1])
            rel = abs(g - gap_oracle) / gap_oracle
            out.check("gap_over_t_vs_oracle", rel, f"<= {tol.split_rel_tol}",
                      rel <= tol.split_rel_tol)
    for j, o in enumerate(rep.residual_orders()):
        if np.isfinite(o):
            out.check(f"residual_order[{j}]", abs(o - tol.order),
                      f"|order - {tol.order}| <= {tol.order_tol}", abs(o - tol.order) <= tol.order_tol)

    summary.update(_provenance(cfg))
    summary["checks"] = out.checks
    out.files["split.json"] = reports.dumps(summary)
    out.files["split.jsonl"] = _jsonl(
        {"t": t, "branches": rep.branches[k], "residuals": rep.residuals[k],
         "gap_over_t": rep.gap_over_t()[k]} for k, t in enumerate(rep.steps))
    rows = []
    small = rep.steps[-1] if rep.steps else None
    for j, sl in enumerate(rep.slopes):
        row = {"branch": j, "predicted_slope": float(sl), "oracle_slope": "",
               "measured_slope": "", "residual_order": ""}
        if oracle is not None:
            row["oracle_slope"] = float(oracle[j])
        if small is not None:
            row["measured_slope"] = float((rep.branches[-1, j] - rep.base_eigenvalue) / small)
        o = rep.residual_orders()[j]
        if np.isfinite(o):
            row["residual_order"] = float(o)
        rows.append(row)
    out.files["split.csv"] = reports.csv_text(
        rows, ["branch", "predicted_slope", "oracle_slope", "measured_slope", "residual_order"])
    ts = [0.0] + list(rep.steps)
    series = []
    for j in range(len(rep.slopes)):
        series.append({"x": ts, "y": [rep.base_eigenvalue] + list(rep.branches[:, j]),
                       "label": f"measured {j}", "style": "points"})
        series.append({"x": [0.0, max(ts)],
                       "y": [rep.base_eigenvalue, rep.base_eigenvalue + max(ts) * rep.slopes[j]],
                       "label": f"first order {j}"})
    out.files["split.svg"] = reports.svg_plot(series, "Eigenvalue branches under g + t h",
                                              "t", "eigenvalue")
    return out


# --------------------------------------------------------------------------
# batches: scan and wucp
# --------------------------------------------------------------------------

def _sampler(cfg: ExperimentConfig):
    p = cfg.perturbation
    explicit = p.direction()
    if p.kind == "random":
        return lambda s: sample_random_conformal(s, p.modes, p.amplitude)
    if p.kind == "zero":
        return lambda s: None
    return lambda s: explicit


def _batch(cfg: ExperimentConfig, threads: int):
    tol = cfg.tolerances
    mesh, metric = _finest(cfg)
    p = cfg.perturbation
    m = cfg.eigen_count - 1
    return mesh, simplicity_scan(
        mesh, metric, trials=p.trials, m=m, gap_tol=tol.gap_tol, base_seed=p.seed,
        sampler=_sampler(cfg), threads=threads, deriv_tol=tol.deriv_tol,
        second_deriv_tol=tol.second_deriv_tol, arc_fraction=tol.arc_fraction,
        vanish_tol=tol.vanish_tol, zero_tol=tol.zero_tol, quad_order=cfg.quad_order,
        mass_kind=cfg.mass)


def _fixtures(cfg: ExperimentConfig) -> list[dict]:
    tol = cfg.tolerances
    out = []
    for name in cfg.fixtures:
        tr = fixture_trace(name)
        nod = nodal_regularity_scan([tr], tol.zero_tol, tol.deriv_tol, [f"fixture:{name}"])
        mor = morse_scan([tr], tol.deriv_tol, tol.second_deriv_tol, [f"fixture:{name}"])
        w = wucp_check(tr, tol.arc_fraction, tol.vanish_tol)
        out.append({"fixture": name, "nodal_flags": nod.flag_count,
                    "morse_flags": mor.flag_count, "wucp_flags": len(w), "wucp": w})
    return out


def _aggregate_rows(stats) -> list[dict]:
    rows = []
    for trial in stats.trials:
        lam = trial.eigenvalues
        d1 = {e.label: e.min_abs_d1_at_zeros() for e in trial.nodal.entries}
        d2 = {e.label: e.min_abs_d2_at_criticals() for e in trial.morse.entries}
        fl = {}
        for e in trial.nodal.entries + trial.morse.entries:
            fl[e.label.split("/")[0]] = fl.get(e.label.split("/")[0], 0) + len(e.flags)
        for w in trial.wucp:
            key = w["trace"].split("/")[0]
            fl[key] = fl.get(key, 0) + 1
        for i in range(1, trial.m + 1):
            if i >= len(lam):
                break
            size = next(b - a for a, b in trial.clusters if a <= i < b)
            gaps = []
            if i > 1:
                gaps.append(lam[i] - lam[i - 1])
            if i + 1 < len(lam):
                gaps.append(lam[i + 1] - lam[i])
            key = f"eig{i}"
            m1 = min(v for k, v in d1.items() if k.split("/")[0] == key)
            m2 = min(v for k, v in d2.items() if k.split("/")[0] == key)
            rows.append({"trial": trial.seed, "index": i, "eigenvalue": float(lam[i]),
                         "cluster_size": size,
                         "min_gap": float(min(gaps) / max(1.0, lam[i])) if gaps else "",
                         "min_abs_d1_at_zeros": m1 if np.isfinite(m1) else "",
                         "min_abs_d2_at_criticals": m2 if np.isfinite(m2) else "",
                         "flags": fl.get(key, 0)})
    return rows


_AGG_COLUMNS = ["trial", "index", "eigenvalue", "cluster_size", "min_gap",
                "min_abs_d1_at_zeros", "min_abs_d2_at_criticals", "flags"]


def _trace_plot(mesh, cfg, stats, title):
    """First trial, first nonzero eigenfunction, first loop, with zeros and critical points."""
    trial = stats.trials[0]
    nod = trial.nodal.entries[0]
    mor = trial.morse.entries[0]
    metric = cfg.build_metric()
    d = _sampler(cfg)(trial.seed)
    if d is not None:
        metric = (ConformalMetric(d.sigma * 0.5, metric) if d.kind == "conformal"
                  else PerturbedMetric(metric, d, 1.0))
    spec = steklov_eigs(build_dtn(mesh, metric, cfg.quad_order, cfg.mass), count=2,
                        gap_tol=cfg.tolerances.gap_tol)
    tr = normalized_traces(spec, 1, mesh, metric)[0]
    s = list(tr.s) + [tr.length]
    y = list(tr.values) + [tr.values[0]]
    markers = [{"x": [z[0] for z in nod.zeros], "y": [0.0] * len(nod.zeros),
                "label": "zeros", "shape": "circle"},
               {"x": [c[0] for c in mor.criticals],
                "y": [float(np.interp(c[0], s, y)) for c in mor.criticals],
                "label": "critical points", "shape": "square"}]
    return reports.svg_plot([{"x": s, "y": y, "label": nod.label}], title,
                            "arclength", "trace (sup-normalized)", markers)


def run_scan(cfg: ExperimentConfig, threads: int = 1) -> Outcome:
    out = Outcome()
    mesh, stats = _batch(cfg, threads)
    failing = stats.failing()
    nodal = sum(t.nodal.flag_count for t in stats.trials)
    morse = sum(t.morse.flag_count for t in stats.trials)
    out.check("fraction_simple", stats.fraction_simple, "== 1", stats.fraction_simple == 1.0)
    out.check("nodal_flags", nodal, "== 0", nodal == 0)
    out.check("morse_flags", morse, "== 0", morse == 0)
    fixtures = _fixtures(cfg)
    summary = {"trials": len(stats.trials), "fraction_simple": stats.fraction_simple,
               "nodal_flags": nodal, "morse_flags": morse, "mesh_h": mesh.h_max,
               "failing_trials": [t.to_record() for t in failing], "fixtures": fixtures,
               "min_relative_gap": min(t.min_gap for t in stats.trials)}
    summary.update(_provenance(cfg))
    summary["checks"] = out.checks
    out.files["scan.json"] = reports.dumps(summary)
    out.files["scan.jsonl"] = _jsonl([t.to_record() for t in stats.trials])
    out.files["scan.csv"] = reports.csv_text(_aggregate_rows(stats), _AGG_COLUMNS)
    out.files["scan.svg"] = _trace_plot(mesh, cfg, stats, "Boundary trace, first trial")
    return out


def run_wucp(cfg: ExperimentConfig, threads: int = 1) -> Outcome:
    out = Outcome()
    mesh, stats = _batch(cfg, threads)
    flagged = [{"seed": t.seed, "wucp": t.wucp} for t in stats.trials if t.wucp]
    count = sum(len(t.wucp) for t in stats.trials)
    out.check("wucp_flags", count, "== 0", count == 0)
    fixtures = _fixtures(cfg)
    summary = {"trials": len(stats.trials), "wucp_flags": count, "flagged_trials": flagged,
               "fixtures": fixtures, "mesh_h": mesh.h_max}
    summary.update(_provenance(cfg))
    summary["checks"] = out.checks
    out.files["wucp.json"] = reports.dumps(summary)
    out.files["wucp.jsonl"] = _jsonl([{"seed": t.seed, "wucp": t.wucp,
                                       "traces": t.trace_labels} for t in stats.trials])
    rows = [{"trial": t.seed, "traces": len(t.trace_labels), "wucp_flags": len(t.wucp)}
            for t in stats.trials]
    rows += [{"trial": f"fixture:{f['fixture']}", "traces": 1, "wucp_flags": f["wucp_flags"]}
             for f in fixtures]
    out.files["wucp.csv"] = reports.csv_text(rows, ["trial", "traces", "wucp_flags"])
    out.files["wucp.svg"] = _trace_plot(mesh, cfg, stats, "Boundary trace, first trial")
    return out


def _jsonl(records) -> str:
    return "".join(json.dumps(reports.to_plain(r), sort_keys=True, allow_nan=False) + "\n"
                   for r in records)


RUNNERS = {
    "spectrum": run_spectrum,
    "variation-check": run_variation_check,
    "split": run_split,
    "scan": run_scan,
    "wucp": run_wucp,
}
