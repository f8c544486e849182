"""
Closed-form scalar fields, metric tensor fields and metric perturbation directions.

Every field here is built from a small coefficient table so that values, first
derivatives and second derivatives are available exactly.  The classes are
dimension agnostic: a field evaluated on points of shape ``(N, d)`` returns
arrays sized for ``d``.  Meshes in this package are planar, but the continuum
formula evaluator in :mod:`steklov_lab.variation` uses ``d = 3`` as well.

Index conventions
-----------------
``metric.eval(x)[p, i, j]``            is ``g_ij`` at point ``p``
``metric.derivatives(x)[p, k, i, j]``  is ``d_k g_ij`` at point ``p``
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


class MetricError(ValueError):
    """Raised when a metric is not symmetric positive definite where needed."""


# --------------------------------------------------------------------------
# scalar fields
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Term:
    """One term ``coef * prod_d x_d**powers[d] * cos(wave . x + phase)``."""

    coef: float
    powers: tuple[int, ...] = ()
    wave: tuple[float, ...] = ()
    phase: float = 0.0

    def to_dict(self) -> dict:
        return {"coef": float(self.coef), "powers": list(self.powers),
                "wave": [float(w) for w in self.wave], "phase": float(self.phase)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Term":
        unknown = set(d) - {"coef", "powers", "wave", "phase"}
        if unknown:
            raise ValueError(f"unknown term keys: {sorted(unknown)}")
        return cls(float(d["coef"]), tuple(int(p) for p in d.get("powers", ())),
                   tuple(float(w) for w in d.get("wave", ())), float(d.get("phase", 0.0)))


def _pad(t: tuple, dim: int, fill=0) -> np.ndarray:
    if len(t) > dim:
        raise ValueError(f"term has {len(t)} coordinates, points have {dim}")
    return np.array(tuple(t) + (fill,) * (dim - len(t)), dtype=float)


def _mono(x: np.ndarray, p: float, order: int) -> np.ndarray:
    # order-th derivative of x**p
    if p < order:
        return np.zeros_like(x)
    c = math.perm(int(p), order)
    return c * x ** (p - order)


@dataclass(frozen=True)
class ScalarField:
    """A finite sum of polynomial-times-sinusoid terms.

    Examples
    --------
    >>> s = ScalarField.polynomial({(2, 0): 1.0, (0, 2): -1.0})   # x^2 - y^2
    >>> float(s.value(np.array([[1.0, 0.0]]))[0])
    1.0
    """

    terms: tuple[Term, ...] = ()

    # constructors -------------------------------------------------------
    @classmethod
    def constant(cls, c: float) -> "ScalarField":
        return cls((Term(float(c)),))

    @classmethod
    def polynomial(cls, coeffs: Mapping[Sequence[int], float]) -> "ScalarField":
        return cls(tuple(Term(float(c), tuple(int(p) for p in k))
                         for k, c in sorted(coeffs.items())))

    @classmethod
    def plane_wave(cls, wave: Sequence[float], coef: float = 1.0,
                   phase: float = 0.0) -> "ScalarField":
        return cls((Term(float(coef), (), tuple(float(w) for w in wave), float(phase)),))

    @classmethod
    def from_dict(cls, d) -> "ScalarField":
        if isinstance(d, (int, float)):
            return cls.constant(float(d))
        if set(d) - {"terms"}:
            raise ValueError(f"unknown scalar field keys: {sorted(set(d) - {'terms'})}")
        return cls(tuple(Term.from_dict(t) for t in d["terms"]))

    def to_dict(self) -> dict:
        return {"terms": [t.to_dict() for t in self.terms]}

    # algebra ------------------------------------------------------------
    def __add__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.terms + other.terms)

    def __mul__(self, c: float) -> "ScalarField":
        return ScalarField(tuple(Term(t.coef * c, t.powers, t.wave, t.phase)
                                 for t in self.terms))

    __rmul__ = __mul__

    def __neg__(self) -> "ScalarField":
        return self * -1.0

    # evaluation ---------------------------------------------------------
    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for t in self.terms:
            out += t.coef * self._poly(t, x, ()) * np.cos(self._arg(t, x))
        return out

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n, d = x.shape
        out = np.zeros((n, d))
        for t in self.terms:
            k = _pad(t.wave, d, 0.0)
            th = self._arg(t, x)
            c, s = np.cos(th), np.sin(th)
            p0 = self._poly(t, x, ())
            for i in range(d):
                out[:, i] += t.coef * (self._poly(t, x, (i,)) * c - p0 * k[i] * s)
        return out

    def hessian(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n, d = x.shape
        out = np.zeros((n, d, d))
        for t in self.terms:
            k = _pad(t.wave, d, 0.0)
            th = self._arg(t, x)
            c, s = np.cos(th), np.sin(th)
            p0 = self._poly(t, x, ())
            for i in range(d):
                pi = self._poly(t, x, (i,))
                for j in range(i, d):
                    pj = self._poly(t, x, (j,))
                    pij = self._poly(t, x, (i, j))
                    v = pij * c - (pi * k[j] + pj * k[i]) * s - p0 * k[i] * k[j] * c
                    out[:, i, j] += t.coef * v
                    if j != i:
                        out[:, j, i] += t.coef * v
        return out

    def sup_bound(self) -> float:
        """Sum of |coef|; a bound on |value| wherever the monomials are bounded by 1."""
        return float(sum(abs(t.coef) for t in self.terms))

    @staticmethod
    def _arg(t: Term, x: np.ndarray) -> np.ndarray:
        k = _pad(t.wave, x.shape[1], 0.0)
        return x @ k + t.phase

    @staticmethod
    def _poly(t: Term, x: np.ndarray, diff: tuple[int, ...]) -> np.ndarray:
        p = _pad(t.powers, x.shape[1], 0)
        out = np.ones(x.shape[0])
        for dcoord in range(x.shape[1]):
            order = diff.count(dcoord)
            if p[dcoord] == 0 and order == 0:
                continue
            out = out * _mono(x[:, dcoord], p[dcoord], order)
        return out


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

class Metric:
    """Base class: a smooth symmetric 2-tensor field with exact derivatives."""

    def eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivatives(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class EuclideanMetric(Metric):
    """``g = scale * I``."""

    scale: float = 1.0

    def eval(self, x):
        x = np.atleast_2d(x)
        n, d = x.shape
        return np.broadcast_to(self.scale * np.eye(d), (n, d, d)).copy()

    def derivatives(self, x):
        x = np.atleast_2d(x)
        n, d = x.shape
        return np.zeros((n, d, d, d))

    def descriptor(self):
        return {"kind": "euclidean", "scale": float(self.scale)}


@dataclass(frozen=True)
class ConformalMetric(Metric):
    """``g = exp(2 phi) * base``."""

    phi: ScalarField
    base: Metric = field(default_factory=EuclideanMetric)

    def eval(self, x):
        x = np.atleast_2d(x)
        return np.exp(2.0 * self.phi.value(x))[:, None, None] * self.base.eval(x)

    def derivatives(self, x):
        x = np.atleast_2d(x)
        e = np.exp(2.0 * self.phi.value(x))
        dphi = self.phi.gradient(x)
        g0 = self.base.eval(x)
        dg0 = self.base.derivatives(x)
        return e[:, None, None, None] * (2.0 * dphi[:, :, None, None] * g0[:, None] + dg0)

    def descriptor(self):
        return {"kind": "conformal", "phi": self.phi.to_dict(),
                "base": self.base.descriptor()}


@dataclass(frozen=True)
class TensorMetric(Metric):
    """Component-wise metric from a table ``{(i, j): field}`` with ``i <= j``.

    Missing components are zero.  The dimension is ``dim``.
    """

    components: tuple[tuple[tuple[int, int], ScalarField], ...]
    dim: int = 2

    @classmethod
    def from_table(cls, table: Mapping[tuple[int, int], ScalarField], dim: int = 2):
        items = []
        for (i, j), f in sorted(table.items()):
            if i > j:
                i, j = j, i
            items.append(((i, j), f))
        return cls(tuple(items), dim)

    def eval(self, x):
        x = np.atleast_2d(x)
        out = np.zeros((x.shape[0], self.dim, self.dim))
        for (i, j), f in self.components:
            v = f.value(x)
            out[:, i, j] = v
            out[:, j, i] = v
        return out

    def derivatives(self, x):
        x = np.atleast_2d(x)
        out = np.zeros((x.shape[0], x.shape[1], self.dim, self.dim))
        for (i, j), f in self.components:
            gr = f.gradient(x)
            out[:, :, i, j] = gr
            out[:, :, j, i] = gr
        return out

    def descriptor(self):
        return {"kind": "tensor", "dim": self.dim,
                "components": [{"i": i, "j": j, "field": f.to_dict()}
                               for (i, j), f in self.components]}


@dataclass(frozen=True)
class PerturbedMetric(Metric):
    """``g + t h`` for a perturbation direction ``h`` materialized against ``g``."""

    base: Metric
    direction: "PerturbationDirection"
    t: float

    def eval(self, x):
        return self.base.eval(x) + self.t * self.direction.tensor(self.base, x)

    def derivatives(self, x):
        return self.base.derivatives(x) + self.t * self.direction.derivatives(self.base, x)

    def descriptor(self):
        return {"kind": "perturbed", "base": self.base.descriptor(),
                "direction": self.direction.descriptor(), "t": float(self.t)}


def metric_from_descriptor(d: Mapping | None) -> Metric:
    """Rebuild a metric from :meth:`Metric.descriptor` output."""
    if d is None:
        return EuclideanMetric()
    kind = d.get("kind")
    if kind == "euclidean":
        _check_keys(d, {"kind", "scale"})
        return EuclideanMetric(float(d.get("scale", 1.0)))
    if kind == "conformal":
        _check_keys(d, {"kind", "phi", "base"})
        return ConformalMetric(ScalarField.from_dict(d["phi"]),
                               metric_from_descriptor(d.get("base")))
    if kind == "tensor":
        _check_keys(d, {"kind", "dim", "components"})
        table = {(int(c["i"]), int(c["j"])): ScalarField.from_dict(c["field"])
                 for c in d["components"]}
        return TensorMetric.from_table(table, int(d.get("dim", 2)))
    if kind == "perturbed":
        _check_keys(d, {"kind", "base", "direction", "t"})
        return PerturbedMetric(metric_from_descriptor(d["base"]),
                               direction_from_descriptor(d["direction"]), float(d["t"]))
    raise ValueError(f"unknown metric kind {kind!r}")


def _check_keys(d: Mapping, allowed: set):
    extra = set(d) - allowed
    if extra:
        raise ValueError(f"unknown keys {sorted(extra)} for {d.get('kind')!r}")


def min_eigenvalues(g: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of each symmetric matrix in a stack ``(N, d, d)``."""
    if g.shape[-1] == 2:
        a, b, c = g[:, 0, 0], 0.5 * (g[:, 0, 1] + g[:, 1, 0]), g[:, 1, 1]
        return 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b * b)
    return np.linalg.eigvalsh(g)[:, 0]


def require_spd(g: np.ndarray, where: str = "quadrature point") -> None:
    lam = min_eigenvalues(g)
    if not np.all(lam > 0):
        bad = int(np.argmin(lam))
        raise MetricError(f"metric not positive definite at {where} {bad}: "
                          f"min eigenvalue {lam[bad]:.3e}")


# --------------------------------------------------------------------------
# perturbation directions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbationDirection:
    """A metric variation ``h = Dg``.

    ``kind == "conformal"`` means ``h = sigma * g`` against whatever metric it
    is materialized with; ``kind == "general"`` carries its own components.
    """

    kind: str
    sigma: ScalarField | None = None
    tensor_components: tuple[tuple[tuple[int, int], ScalarField], ...] = ()
    label: str = ""

    @classmethod
    def conformal(cls, sigma: ScalarField, label: str = "") -> "PerturbationDirection":
        return cls("conformal", sigma=sigma, label=label)

    @classmethod
    def general(cls, table: Mapping[tuple[int, int], ScalarField],
                label: str = "") -> "PerturbationDirection":
        items = []
        for (i, j), f in sorted(table.items()):
            if i > j:
                i, j = j, i
            items.append(((i, j), f))
        return cls("general", tensor_components=tuple(items), label=label)

    @classmethod
    def zero(cls) -> "PerturbationDirection":
        return cls("general", label="zero")

    def is_zero(self) -> bool:
        if self.kind == "conformal":
            return all(t.coef == 0 for t in self.sigma.terms)
        return all(t.coef == 0 for _, f in self.tensor_components for t in f.terms)

    def scaled(self, c: float) -> "PerturbationDirection":
        if self.kind == "conformal":
            return PerturbationDirection("conformal", sigma=self.sigma * c, label=self.label)
        return PerturbationDirection("general", tensor_components=tuple(
            (ij, f * c) for ij, f in self.tensor_components), label=self.label)

    def tensor(self, metric: Metric, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.kind == "conformal":
            return self.sigma.value(x)[:, None, None] * metric.eval(x)
        d = x.shape[1]
        out = np.zeros((x.shape[0], d, d))
        for (i, j), f in self.tensor_components:
            v = f.value(x)
            out[:, i, j] = v
            out[:, j, i] = v
        return out

    def derivatives(self, metric: Metric, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.kind == "conformal":
            s = self.sigma.value(x)
            ds = self.sigma.gradient(x)
            return (ds[:, :, None, None] * metric.eval(x)[:, None]
                    + s[:, None, None, None] * metric.derivatives(x))
        d = x.shape[1]
        out = np.zeros((x.shape[0], d, d, d))
        for (i, j), f in self.tensor_components:
            gr = f.gradient(x)
            out[:, :, i, j] = gr
            out[:, :, j, i] = gr
        return out

    def inverse_variation(self, metric: Metric, x: np.ndarray) -> np.ndarray:
        """Components ``h^{ij}`` of ``D(g^{-1}) = -g^{-1} h g^{-1}``."""
        ginv = np.linalg.inv(metric.eval(x))
        return -ginv @ self.tensor(metric, x) @ ginv

    def descriptor(self) -> dict:
        if self.kind == "conformal":
            return {"kind": "conformal", "sigma": self.sigma.to_dict(), "label": self.label}
        return {"kind": "general", "label": self.label,
                "components": [{"i": i, "j": j, "field": f.to_dict()}
                               for (i, j), f in self.tensor_components]}


def direction_from_descriptor(d: Mapping) -> PerturbationDirection:
    kind = d.get("kind")
    if kind == "conformal":
        _check_keys(d, {"kind", "sigma", "label"})
        return PerturbationDirection.conformal(ScalarField.from_dict(d["sigma"]),
                                               d.get("label", ""))
    if kind == "general":
        _check_keys(d, {"kind", "components", "label"})
        table = {(int(c["i"]), int(c["j"])): ScalarField.from_dict(c["field"])
                 for c in d.get("components", [])}
        return PerturbationDirection.general(table, d.get("label", ""))
    if kind == "zero":
        return PerturbationDirection.zero()
    raise ValueError(f"unknown perturbation kind {kind!r}")


# --------------------------------------------------------------------------
# random conformal directions
# --------------------------------------------------------------------------

def random_basis(modes: int) -> list[Term]:
    """Unit-coefficient basis used by :func:`sample_random_conformal`.

    The constant 1 plus ``cos`` and ``sin`` of the plane waves
    ``pi * (a x + b y)`` over lattice vectors with ``|a| + |b| <= modes``,
    one representative per ``+-`` pair.  Every basis function is bounded by 1.
    """
    terms = [Term(1.0)]
    for a in range(0, modes + 1):
        for b in range(-modes, modes + 1):
            if abs(a) + abs(b) > modes or (a, b) == (0, 0):
                continue
            if a == 0 and b < 0:
                continue
            k = (math.pi * a, math.pi * b)
            terms.append(Term(1.0, (), k, 0.0))
            terms.append(Term(1.0, (), k, -0.5 * math.pi))
    return terms


def sample_random_conformal(seed: int, modes: int, amplitude: float) -> PerturbationDirection:
    """Seeded conformal direction ``sigma = amplitude * sum_a c_a T_a``.

    Coefficients are i.i.d. uniform on [-1, 1] from ``numpy.random.default_rng(seed)``.
    """
    if modes < 1:
        raise ValueError("modes must be >= 1")
    if amplitude <= 0:
        raise ValueError("amplitude must be > 0")
    basis = random_basis(modes)
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1.0, 1.0, size=len(basis))
    terms = tuple(Term(float(amplitude * ci), b.powers, b.wave, b.phase)
                  for ci, b in zip(c, basis))
    return PerturbationDirection.conformal(
        ScalarField(terms), label=f"random(seed={seed},modes={modes},amplitude={amplitude!r})")


def as_points(x: Iterable) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


def sample_random_general(seed: int, modes: int, amplitude: float) -> PerturbationDirection:
    """Seeded symmetric tensor direction; each of ``h_00, h_01, h_11`` is drawn
    like the ``sigma`` of :func:`sample_random_conformal` from one generator."""
    if modes < 1:
        raise ValueError("modes must be >= 1")
    basis = random_basis(modes)
    rng = np.random.default_rng(seed)
    table = {}
    for ij in ((0, 0), (0, 1), (1, 1)):
        c = rng.uniform(-1.0, 1.0, size=len(basis))
        table[ij] = ScalarField(tuple(Term(float(amplitude * ci), b.powers, b.wave, b.phase)
                                      for ci, b in zip(c, basis)))
    return PerturbationDirection.general(
        table, label=f"random-general(seed={seed},modes={modes},amplitude={amplitude!r})")
