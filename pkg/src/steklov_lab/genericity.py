"""
Desk-scale experiments on generic properties of Steklov eigenfunctions.

* eigenvalue splitting under a metric perturbation, against the first-order
  prediction from the cluster-projected pencil derivative;
* seeded batches of conformally perturbed metrics, checking that eigenvalues
  are simple, that boundary traces cross zero transversally, that their
  critical points are nondegenerate, and that no trace vanishes on an arc.

Sampling stands in for membership in a residual set of metrics; the numbers
reported here are frequencies over a parametric family, nothing more.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from .fields import (ConformalMetric, EuclideanMetric, Metric, MetricError,
                     PerturbationDirection, PerturbedMetric, sample_random_conformal)
from .mesh import Mesh
from .steklov import (DEFAULT_GAP_TOL, BoundaryTrace, DtnOperator, SteklovSpectrum,
                      build_dtn, extract_trace, steklov_eigs)
from .variation import pencil_derivative

log = logging.getLogger(__name__)

DERIV_TOL = 1e-3
SECOND_DERIV_TOL = 1e-3


# --------------------------------------------------------------------------
# splitting
# --------------------------------------------------------------------------

def splitting_matrix(dtn: DtnOperator, spectrum: SteklovSpectrum, cluster,
                     h: PerturbationDirection) -> np.ndarray:
    """``P_ij = f_i^T (DS - lam DM_b) f_j`` over the M_b-orthonormal cluster basis.

    ``cluster`` is an index into ``spectrum.clusters`` or an explicit
    half-open range.  The eigenvalues of ``P`` are the first-order slopes.
    """
    a, b = spectrum.clusters[cluster] if isinstance(cluster, (int, np.integer)) else cluster
    if b - a < 1:
        raise ValueError("empty cluster")
    lam = float(np.mean(spectrum.eigenvalues[a:b]))
    F = spectrum.eigenvectors[:, a:b]
    if h.is_zero():
        return np.zeros((b - a, b - a))
    DS, DM = pencil_derivative(dtn, h)
    P = F.T @ (DS - lam * DM) @ F
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class SplitReport:
    cluster: tuple[int, int]
    base_eigenvalue: float
    direction: dict
    steps: tuple[float, ...]
    branches: np.ndarray          # (len(steps), m), sorted per step
    slopes: np.ndarray            # predicted, ascending
    residuals: np.ndarray         # |measured - (lam + t slope)|
    skipped: tuple[float, ...] = ()
    noise_floor: float = 0.0

    def gap_over_t(self) -> np.ndarray:
        return (self.branches[:, -1] - self.branches[:, 0]) / np.asarray(self.steps)

    def residual_orders(self) -> np.ndarray:
        """Least-squares slope of log residual vs log t, per branch (above the noise floor)."""
        t = np.asarray(self.steps)
        out = []
        for r in self.residuals.T:
            ok = r > self.noise_floor
            if ok.sum() < 2:
                out.append(np.nan)
                continue
            out.append(np.polyfit(np.log(t[ok]), np.log(r[ok]), 1)[0])
        return np.array(out)

    def to_record(self) -> dict:
        return {
            "cluster": list(self.cluster),
            "base_eigenvalue": float(self.base_eigenvalue),
            "direction": self.direction,
            "steps": [float(t) for t in self.steps],
            "branches": self.branches.tolist(),
            "predicted_slopes": self.slopes.tolist(),
            "residuals": self.residuals.tolist(),
            "gap_over_t": self.gap_over_t().tolist(),
            "residual_orders": [None if np.isnan(o) else float(o) for o in self.residual_orders()],
            "skipped_steps": [float(t) for t in self.skipped],
        }


def splitting_experiment(mesh: Mesh, metric: Metric, cluster: int, h: PerturbationDirection,
                         steps: Sequence[float] = (1e-2, 5e-3, 2.5e-3), quad_order: int = 2,
                         mass_kind: str = "lumped", gap_tol: float = DEFAULT_GAP_TOL) -> SplitReport:
    """Re-solve the pencil for ``g + t h`` at each step and compare with first order."""
    dtn = build_dtn(mesh, metric, quad_order, mass_kind)
    spec = steklov_eigs(dtn, gap_tol=gap_tol)
    a, b = spec.clusters[cluster]
    lam = float(np.mean(spec.eigenvalues[a:b]))
    slopes = np.linalg.eigvalsh(splitting_matrix(dtn, spec, (a, b), h))
    kept, branches, skipped = [], [], []
    for t in steps:
        try:
            d = build_dtn(mesh, PerturbedMetric(metric, h, t), quad_order, mass_kind)
        except MetricError:
            log.warning("step t=%g loses positive definiteness; skipped", t)
            skipped.append(t)
            continue
        ev = steklov_eigs(d, count=b, gap_tol=gap_tol).eigenvalues
        kept.append(t)
        branches.append(np.sort(ev[a:b]))
    branches = np.array(branches).reshape(len(kept), b - a)
    pred = lam + np.asarray(kept)[:, None] * slopes[None, :]
    res = np.abs(branches - pred)
    return SplitReport((a, b), lam, h.descriptor(), tuple(kept), branches, slopes, res,
                       tuple(skipped), noise_floor=1e-11 * max(1.0, lam))


# --------------------------------------------------------------------------
# trace scans
# --------------------------------------------------------------------------

@dataclass
class TraceScan:
    label: str
    zeros: list = field(default_factory=list)       # (s, |f|, |f'|)
    criticals: list = field(default_factory=list)   # (s, |f'|, |f''|)
    flags: list = field(default_factory=list)

    def min_abs_d1_at_zeros(self) -> float:
        return min((z[2] for z in self.zeros), default=float("inf"))

    def min_abs_d2_at_criticals(self) -> float:
        return min((c[2] for c in self.criticals), default=float("inf"))


@dataclass
class ScanReport:
    kind: str
    tolerances: dict
    entries: list

    @property
    def flag_count(self) -> int:
        return sum(len(e.flags) for e in self.entries)

    def to_record(self) -> dict:
        return {"kind": self.kind, "tolerances": self.tolerances,
                "entries": [{"label": e.label, "zeros": [list(map(float, z)) for z in e.zeros],
                             "criticals": [list(map(float, c)) for c in e.criticals],
                             "flags": e.flags} for e in self.entries]}


class _Interp:
    """Periodic cubic splines of f, f', f'' on one loop."""

    def __init__(self, tr: BoundaryTrace):
        s = np.append(tr.s, tr.length)
        self.L = tr.length
        self.s = tr.s
        self.f = CubicSpline(s, np.append(tr.values, tr.values[0]), bc_type="periodic")
        self.f1 = CubicSpline(s, np.append(tr.d1, tr.d1[0]), bc_type="periodic")
        self.f2 = CubicSpline(s, np.append(tr.d2, tr.d2[0]), bc_type="periodic")
        self.spacing = float(np.min(np.diff(s)))


def _sign_change_roots(spl, s, y, L) -> list[float]:
    n = len(y)
    roots = []
    for j in range(n):
        a, b = y[j], y[(j + 1) % n]
        lo, hi = s[j], (s[j + 1] if j + 1 < n else L)
        if a == 0.0:
            roots.append(float(lo))
        elif a * b < 0:
            roots.append(float(brentq(spl, lo, hi, xtol=1e-14 * L)))
    return roots


def _touch_points(spl, s, y, L, tol) -> list[float]:
    """Local minima of |y| below ``tol`` that are not sign changes, refined on the spline."""
    n = len(y)
    ay = np.abs(y)
    out = []
    for j in range(n):
        yp, ym = y[(j + 1) % n], y[j - 1]
        if ay[j] >= tol or y[j] == 0.0:
            continue
        if ay[j] <= ay[(j + 1) % n] and ay[j] <= ay[j - 1] and y[j] * yp > 0 and y[j] * ym > 0:
            lo = s[j - 1] if j > 0 else s[-1] - L
            hi = s[j + 1] if j + 1 < n else L
            r = minimize_scalar(lambda x: abs(float(spl(x % L))), bounds=(lo, hi),
                                method="bounded", options={"xatol": 1e-12 * L})
            out.append(float(r.x % L))
    return out


def _dedupe(points: list[float], L: float, eps: float) -> list[float]:
    out = []
    for p in sorted(points):
        if out and min(abs(p - out[-1]), L - abs(p - out[-1])) < eps:
            continue
        out.append(p)
    if len(out) > 1 and min(abs(out[0] - out[-1]), L - abs(out[0] - out[-1])) < eps:
        out.pop()
    return out


def _zeros_and_criticals(tr: BoundaryTrace, zero_tol: float, deriv_tol: float):
    ip = _Interp(tr)
    eps = 0.25 * ip.spacing
    crit = _sign_change_roots(ip.f1, tr.s, tr.d1, tr.length)
    crit += _touch_points(ip.f1, tr.s, tr.d1, tr.length, deriv_tol)
    crit = _dedupe(crit, tr.length, eps)
    zeros = _sign_change_roots(ip.f, tr.s, tr.values, tr.length)
    zeros += [c for c in crit if abs(float(ip.f(c))) <= zero_tol]
    zeros += _touch_points(ip.f, tr.s, tr.values, tr.length, zero_tol)
    zeros = _dedupe(zeros, tr.length, eps)
    z = [(p, abs(float(ip.f(p))), abs(float(ip.f1(p)))) for p in zeros]
    c = [(p, abs(float(ip.f1(p))), abs(float(ip.f2(p)))) for p in crit]
    return z, c


def _label(tr, i):
    return getattr(tr, "label", None) or f"trace{i}/loop{tr.loop}"


def nodal_regularity_scan(traces: Sequence[BoundaryTrace], zero_tol: float = 1e-8,
                          deriv_tol: float = DERIV_TOL, labels: Sequence[str] | None = None) -> ScanReport:
    """Locate boundary zeros and flag those with ``|f'| < deriv_tol``.

    Traces are expected to be sup-normalized.  Zeros are sign changes of the
    interpolated trace, plus tangential touches (``|f| <= zero_tol`` at a
    critical point).
    """
    entries = []
    for i, tr in enumerate(traces):
        z, _ = _zeros_and_criticals(tr, zero_tol, deriv_tol)
        e = TraceScan(labels[i] if labels else _label(tr, i), zeros=z)
        e.flags = [f"degenerate zero at s={p:.6g}: |f'|={d1:.3e}" for p, _, d1 in z if d1 < deriv_tol]
        entries.append(e)
    return ScanReport("nodal", {"zero_tol": zero_tol, "deriv_tol": deriv_tol}, entries)


def morse_scan(traces: Sequence[BoundaryTrace], deriv_tol: float = DERIV_TOL,
               second_deriv_tol: float = SECOND_DERIV_TOL,
               labels: Sequence[str] | None = None) -> ScanReport:
    """Locate critical points (sign changes of ``f'`` and near-touches) and flag
    those with ``|f''| < second_deriv_tol``."""
    entries = []
    for i, tr in enumerate(traces):
        _, c = _zeros_and_criticals(tr, 0.0, deriv_tol)
        e = TraceScan(labels[i] if labels else _label(tr, i), criticals=c)
        e.flags = [f"degenerate critical point at s={p:.6g}: |f''|={d2:.3e}"
                   for p, _, d2 in c if d2 < second_deriv_tol]
        entries.append(e)
    return ScanReport("morse", {"deriv_tol": deriv_tol, "second_deriv_tol": second_deriv_tol},
                      entries)


def wucp_check(trace: BoundaryTrace, arc_fraction: float = 0.05,
               vanish_tol: float = 1e-8) -> list[dict]:
    """Maximal arcs longer than ``arc_fraction * length`` on which ``|f| < vanish_tol``."""
    small = np.abs(trace.values) < vanish_tol
    n = len(small)
    if small.all():
        return [{"start": 0.0, "length": float(trace.length), "whole_loop": True}]
    flags = []
    start = int(np.flatnonzero(~small)[0])     # rotate so the scan starts outside a run
    j = 0
    while j < n:
        k = (start + j) % n
        if small[k]:
            first = k
            cnt = 0
            while small[(first + cnt) % n]:
                cnt += 1
            last = (first + cnt - 1) % n
            arc = (trace.s[last] - trace.s[first]) % trace.length
            if arc > arc_fraction * trace.length:
                flags.append({"start": float(trace.s[first]), "length": float(arc),
                              "whole_loop": False})
            j += cnt
        else:
            j += 1
    return flags


def fixture_trace(name: str, n: int = 256) -> BoundaryTrace:
    """Synthetic traces on a loop of length 2 pi.

    ``constant-zero`` vanishes identically, ``sin-squared`` touches zero
    tangentially, ``cubic-flat`` has degenerate critical points (``sin^3``).
    """
    fns = {
        "constant-zero": lambda s: np.zeros_like(s),
        "sin-squared": lambda s: np.sin(s) ** 2,
        "cubic-flat": lambda s: np.sin(s) ** 3,
        "cosine": np.cos,
    }
    if name not in fns:
        raise ValueError(f"unknown fixture {name!r}; choose from {sorted(fns)}")
    tr = BoundaryTrace.from_function(fns[name], n, scheme="fourier")
    object.__setattr__(tr, "label", f"fixture:{name}")
    return tr


def normalized_traces(spectrum: SteklovSpectrum, index: int, mesh: Mesh,
                      metric: Metric | None = None, scheme: str = "fd4") -> list[BoundaryTrace]:
    """Traces of one eigenvector on all loops, divided by its sup over the boundary."""
    trs = extract_trace(spectrum, index, mesh, metric, scheme)
    sup = max(float(np.max(np.abs(t.values))) for t in trs)
    return [t.normalized(sup) for t in trs]


# --------------------------------------------------------------------------
# seeded batches
# --------------------------------------------------------------------------

@dataclass
class TrialResult:
    seed: int | None
    direction: dict | None
    eigenvalues: np.ndarray
    clusters: tuple
    m: int
    simple: bool
    min_gap: float
    nodal: ScanReport
    morse: ScanReport
    wucp: list
    trace_labels: list

    def flags(self) -> list[str]:
        out = [f for e in self.nodal.entries for f in e.flags]
        out += [f for e in self.morse.entries for f in e.flags]
        out += [f"wucp {w}" for w in self.wucp]
        if not self.simple:
            out.append("multiple eigenvalue among the first m")
        return out

    def to_record(self) -> dict:
        return {
            "seed": self.seed,
            "direction": self.direction,
            "eigenvalues": self.eigenvalues.tolist(),
            "clusters": [list(c) for c in self.clusters],
            "m": self.m,
            "all_simple": self.simple,
            "min_relative_gap": float(self.min_gap),
            "nodal": self.nodal.to_record(),
            "morse": self.morse.to_record(),
            "wucp": self.wucp,
            "flags": self.flags(),
        }


def _multiplicities_within(clusters, m: int) -> list[int]:
    return [b - a for a, b in clusters if 1 <= a <= m]


def run_trial(mesh: Mesh, base_metric: Metric, direction: PerturbationDirection | None,
              m: int = 10, gap_tol: float = DEFAULT_GAP_TOL, seed: int | None = None,
              deriv_tol: float = DERIV_TOL, second_deriv_tol: float = SECOND_DERIV_TOL,
              arc_fraction: float = 0.05, vanish_tol: float = 1e-8, zero_tol: float = 1e-8,
              quad_order: int = 2, mass_kind: str = "lumped") -> TrialResult:
    """One member of a batch: metric ``exp(sigma) g`` for a conformal direction ``sigma g``.

    ``direction=None`` keeps the base metric.
    """
    if direction is None:
        metric = base_metric
    elif direction.kind == "conformal":
        metric = ConformalMetric(direction.sigma * 0.5, base_metric)
    else:
        metric = PerturbedMetric(base_metric, direction, 1.0)
    dtn = build_dtn(mesh, metric, quad_order, mass_kind)
    spec = steklov_eigs(dtn, count=min(m + 2, dtn.S.shape[0]), gap_tol=gap_tol)
    lam = spec.eigenvalues
    mult = _multiplicities_within(spec.clusters, m)
    simple = all(k == 1 for k in mult)
    gaps = [(lam[i + 1] - lam[i]) / max(1.0, lam[i]) for i in range(1, min(m + 1, len(lam) - 1))]
    traces, labels = [], []
    for i in range(1, m + 1):
        for tr in normalized_traces(spec, i, mesh, metric):
            traces.append(tr)
            labels.append(f"eig{i}/loop{tr.loop}")
    nodal = nodal_regularity_scan(traces, zero_tol, deriv_tol, labels)
    morse = morse_scan(traces, deriv_tol, second_deriv_tol, labels)
    wucp = []
    for tr, lab in zip(traces, labels):
        for fl in wucp_check(tr, arc_fraction, vanish_tol):
            wucp.append({"trace": lab, **fl})
    return TrialResult(seed, None if direction is None else direction.descriptor(), lam,
                       spec.clusters, m, simple, float(min(gaps)) if gaps else float("inf"),
                       nodal, morse, wucp, labels)


@dataclass
class ScanStatistics:
    trials: list
    fraction_simple: float

    def failing(self) -> list:
        return [t for t in self.trials if t.flags()]


def simplicity_scan(mesh: Mesh, base_metric: Metric | None = None, trials: int = 100,
                    m: int = 10, gap_tol: float = DEFAULT_GAP_TOL, modes: int = 3,
                    amplitude: float = 0.1, base_seed: int = 0,
                    sampler: Callable[[int], PerturbationDirection | None] | None = None,
                    threads: int = 1, **trial_kw) -> ScanStatistics:
    """Run ``trials`` seeded trials (seeds ``base_seed + k``) and report the
    fraction whose first ``m`` nonzero eigenvalues are all simple.

    ``sampler(seed)`` overrides the default random conformal direction; it may
    return ``None`` for the unperturbed metric.  Results are ordered by seed
    whatever the thread count.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    base_metric = base_metric or EuclideanMetric()
    sampler = sampler or (lambda s: sample_random_conformal(s, modes, amplitude))
    seeds = [base_seed + k for k in range(trials)]

    def one(seed):
        return run_trial(mesh, base_metric, sampler(seed), m, gap_tol, seed, **trial_kw)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, seeds))
    else:
        results = [one(s) for s in seeds]
    frac = sum(r.simple for r in results) / len(results)
    return ScanStatistics(results, frac)
