"""
Closed-form Steklov spectra of the Euclidean disk and annulus.

Both follow from separation of variables.  On the disk of radius ``R`` the
mode ``r^k e^{ik theta}`` gives ``lambda = k / R``.  On the annulus ``a < r < b``
each Fourier mode leaves a 2x2 radial matching system whose determinant is
searched for roots by bracketing, so the oracle does not rely on the
quadratic formula it is later checked against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq


class OracleError(RuntimeError):
    """Root search failed; the message carries the bracket diagnostics."""


@dataclass(frozen=True)
class OracleEigenvalue:
    value: float
    mode: int              # angular frequency k
    multiplicity: int      # 1 for k = 0, 2 otherwise

    def to_record(self) -> dict:
        return {"value": self.value, "mode": self.mode, "multiplicity": self.multiplicity}


def _expand(levels: list[OracleEigenvalue], count: int) -> np.ndarray:
    out = []
    for e in sorted(levels, key=lambda e: (e.value, e.mode)):
        out.extend([e.value] * e.multiplicity)
    return np.array(out[:count])


def disk_levels(radius: float, count: int) -> list[OracleEigenvalue]:
    if radius <= 0:
        raise ValueError("radius must be positive")
    kmax = count // 2 + 1
    return [OracleEigenvalue(k / radius, k, 1 if k == 0 else 2) for k in range(kmax + 1)]


def disk_spectrum(radius: float = 1.0, count: int = 11) -> np.ndarray:
    """First ``count`` eigenvalues with multiplicity: ``0, 1/R, 1/R, 2/R, ...``."""
    return _expand(disk_levels(radius, count), count)


def annulus_determinant(lam: float, k: int, a: float, b: float) -> float:
    """Determinant of the radial matching system for angular mode ``k``.

    For ``k >= 1`` the radial basis is ``(r/b)^k, (a/r)^k`` which keeps the
    entries O(1) for large ``k``.  For ``k = 0`` it is ``1, log r``.
    """
    if k == 0:
        # u = A + B log r;   u_r = lam u at r = b,   -u_r = lam u at r = a
        m = np.array([[-lam, 1.0 / b - lam * math.log(b)],
                      [-lam, -1.0 / a - lam * math.log(a)]])
    else:
        q = (a / b) ** k
        m = np.array([[k / b - lam, q * (-k / b - lam)],
                      [q * (-k / a - lam), k / a - lam]])
    return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])


def mode_roots(k: int, a: float, b: float, grid: int) -> list[float]:
    expected = 1 if k == 0 else 2
    hi = 2.0 * (max(k, 1) / a + 1.0 / b) + (1.0 / a + 1.0 / b) / math.log(b / a)
    lo = 1e-9 * hi
    lam = np.linspace(lo, hi, grid)
    d = np.array([annulus_determinant(x, k, a, b) for x in lam])
    idx = np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]
    roots = [brentq(annulus_determinant, lam[i], lam[i + 1], args=(k, a, b),
                    xtol=1e-15, rtol=4 * np.finfo(float).eps) for i in idx]
    if len(roots) != expected:
        brackets = [(float(lam[i]), float(lam[i + 1])) for i in idx]
        raise OracleError(
            f"annulus({a}, {b}) mode {k}: expected {expected} positive roots in "
            f"[{lo:.3e}, {hi:.3e}] on a {grid}-point grid, found {len(roots)}; "
            f"sign-change brackets {brackets}; det(lo)={d[0]:.3e}, det(hi)={d[-1]:.3e}")
    return roots


def annulus_levels(r_inner: float, r_outer: float, count: int,
                   grid: int = 4000) -> list[OracleEigenvalue]:
    a, b = float(r_inner), float(r_outer)
    if not 0 < a < b:
        raise ValueError("need 0 < r_inner < r_outer")
    levels = [OracleEigenvalue(0.0, 0, 1)]
    levels += [OracleEigenvalue(r, 0, 1) for r in mode_roots(0, a, b, grid)]
    k = 0
    while True:
        k += 1
        roots = mode_roots(k, a, b, grid)
        # the lowest root grows with k, so stop once it clears the count-th value
        if sum(e.multiplicity for e in levels) >= count:
            cut = _expand(levels, count)[-1]
            if min(roots) > cut:
                break
        levels += [OracleEigenvalue(r, k, 2) for r in roots]
    return levels


def annulus_spectrum(r_inner: float = 0.5, r_outer: float = 1.0, count: int = 8) -> np.ndarray:
    """First ``count`` eigenvalues with multiplicity, found by bracketed root search."""
    return _expand(annulus_levels(r_inner, r_outer, count), count)


def annulus_quadratic_roots(k: int, a: float, b: float) -> tuple[float, float]:
    """Closed-form roots for ``k >= 1``; used only to cross-check the root search."""
    q2 = (a / b) ** (2 * k)
    A = 1.0 - q2
    B = -(1.0 + q2) * (k / a + k / b)
    C = (1.0 - q2) * k * k / (a * b)
    disc = math.sqrt(B * B - 4 * A * C)
    return ((-B - disc) / (2 * A), (-B + disc) / (2 * A))


def oracle_table(domain: str, params: dict, count: int) -> list[dict]:
    """Rows ``{index, value, mode}`` with multiplicities expanded."""
    if domain == "disk":
        levels = disk_levels(float(params.get("radius", 1.0)), count)
    elif domain == "annulus":
        levels = annulus_levels(float(params.get("r_inner", 0.5)),
                                float(params.get("r_outer", 1.0)), count)
    else:
        raise ValueError(f"no closed-form oracle for domain {domain!r}")
    rows = []
    for e in sorted(levels, key=lambda e: (e.value, e.mode)):
        for _ in range(e.multiplicity):
            rows.append({"index": len(rows), "value": e.value, "mode": e.mode})
    return rows[:count]


def disk_split_slopes(sigma, radius: float, k: int, n: int = 4096) -> np.ndarray:
    """First-order slopes of the double eigenvalue ``k / R`` of the Euclidean disk
    under the conformal direction ``sigma * g``.

    In two dimensions the interior term drops out and the cluster matrix is
    ``-(lam / 2) int sigma phi_i phi_j ds`` over the L2-orthonormal pair
    ``cos(k theta), sin(k theta)``.  The integral uses the periodic trapezoid
    rule, exact for trigonometric polynomials of degree below ``n``.
    """
    if k < 1:
        raise ValueError("the disk has double eigenvalues only for k >= 1")
    th = 2 * np.pi * np.arange(n) / n
    pts = radius * np.column_stack([np.cos(th), np.sin(th)])
    s = sigma.value(pts)
    phi = np.vstack([np.cos(k * th), np.sin(k * th)]) / np.sqrt(np.pi * radius)
    ds = 2 * np.pi * radius / n
    lam = k / radius
    P = -0.5 * lam * (phi * s) @ phi.T * ds
    return np.linalg.eigvalsh(0.5 * (P + P.T))
