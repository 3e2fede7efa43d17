"""Convex linear-growth integrands: values, recession rates, conjugates, proxes.

Every energy the solver assembles is built from pointwise kernels of a convex
integrand f(x, xi) with linear growth |f| <= M(1+|xi|):

* ``value``                  f(x, xi)
* ``asymptotic``             f0(x, xi) = lim_{t->0+} t f(x, xi/t), positively
                             1-homogeneous (the rate paid by jumps and by
                             boundary mismatch)
* ``conjugate``              f*(x, zeta) = sup_xi [zeta.xi - f(x, xi)], finite
                             only on a bounded dual region (returns math.inf
                             outside it)
* ``prox_primal``            argmin_eta lam*f(x, eta) + |eta - xi|^2/2
* ``prox_conjugate``         argmin_p sigma*f*(x, p) + |p - zeta|^2/2
* ``fenchel_young_residual`` f + f* - <xi, zeta>, zero exactly on subgradient
                             pairs — the quantity the certificates integrate.

Spatial dependence is a positive scalar weight w(x) times a uniform base
integrand. Built-in bases:

    tv              |xi|
    anisotropic_tv  sum_k w_k |xi_k|         (per-axis positive weights)
    area            sqrt(1 + |xi|^2)         (nonparametric area integrand)
    plasticity      |xi|^2/2 if |xi| <= 1, |xi| - 1/2 otherwise
    radial_custom   phi(|xi|) for a user convex nondecreasing profile phi

All bases except anisotropic_tv are radial; anisotropic_tv is separable. In
both cases the restriction of f to a coordinate axis (which is what the
staggered-grid solver evaluates face by face) has the form W * phi(|d|) for a
scalar convex profile phi and a combined weight W, so the vectorized
``face_*`` kernels below cover every kind with one code path.

Prox radii that have no closed form (area, radial_custom) are computed by a
safeguarded Newton iteration on the monotone scalar optimality equation, with
bisection fallback, absolute tolerance 1e-12 and a 200-iteration cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

KINDS = ("tv", "anisotropic_tv", "area", "plasticity", "radial_custom")

#: Conjugates take the distinguished value math.inf outside their effective
#: domain; no finite sentinel is ever used.
ExtendedValue = float

# Relative slack when testing membership in dom f*: flux values produced by
# the dual prox sit exactly inside the dual ball, but externally supplied
# ones may overshoot by roundoff and must not certify as +inf.
_DOM_SLACK = 1e-12

_PROX_TOL = 1e-12
_PROX_CAP = 200


class ProxSolveError(RuntimeError):
    """Radial prox solve failed to converge within the iteration cap."""


def _solve_increasing(fn, dfn, lo, hi, tol=_PROX_TOL, cap=_PROX_CAP):
    """Vectorised root of an increasing function on the bracket [lo, hi].

    Newton steps when a derivative is supplied, falling back to bisection
    whenever the step leaves the current bracket; pure bisection otherwise.
    Jump discontinuities are fine: the bracket converges to the crossing.
    """
    lo = np.array(lo, dtype=np.float64, copy=True)
    hi = np.array(hi, dtype=np.float64, copy=True)
    x = 0.5 * (lo + hi)
    for _ in range(cap):
        fx = fn(x)
        lo = np.where(fx <= 0, x, lo)
        hi = np.where(fx > 0, x, hi)
        if dfn is not None:
            d = dfn(x)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                step = np.where(d > 0, fx / np.where(d > 0, d, 1.0), 0.0)
                cand = x - step
            inside = (cand > lo) & (cand < hi)
            x = np.where(inside, cand, 0.5 * (lo + hi))
        else:
            x = 0.5 * (lo + hi)
        width = hi - lo
        if np.all(width <= tol * (1.0 + np.abs(hi))):
            break
    else:
        if np.any(hi - lo > 1e-6 * (1.0 + np.abs(hi))):
            raise ProxSolveError(
                "radial prox solve did not converge within the iteration cap"
            )
    return np.clip(x, lo, hi)


@dataclass(frozen=True)
class LagrangianSpec:
    """Immutable description of one integrand; all operations are pure."""

    kind: str
    weights: Optional[tuple[float, ...]] = None
    radial_profile: Optional[Callable] = None
    radial_derivative: Optional[Callable] = None
    growth_bound: Optional[float] = None
    spatial_weight: object = None  # None | positive scalar | callable(*coords)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown integrand kind {self.kind!r}")
        if self.kind == "anisotropic_tv":
            if not self.weights:
                raise ValueError("anisotropic_tv requires per-axis weights")
            w = tuple(float(v) for v in self.weights)
            if any(not np.isfinite(v) or v <= 0 for v in w):
                raise ValueError("anisotropic weights must be strictly positive")
            object.__setattr__(self, "weights", w)
        elif self.weights is not None:
            raise ValueError("weights are only meaningful for anisotropic_tv")
        if self.spatial_weight is not None and np.isscalar(self.spatial_weight):
            if float(self.spatial_weight) <= 0:
                raise ValueError("spatial_weight must be strictly positive")
        if self.kind == "radial_custom":
            self._init_radial_custom()
        else:
            if self.radial_profile is not None or self.radial_derivative is not None:
                raise ValueError("radial_profile is only meaningful for radial_custom")
            object.__setattr__(self, "_recession_slope", 1.0)

    def _init_radial_custom(self):
        phi, dphi = self.radial_profile, self.radial_derivative
        if phi is None or dphi is None:
            raise ValueError("radial_custom needs the profile and its one-sided derivative")
        if self.growth_bound is None:
            raise ValueError("radial_custom must declare a linear-growth bound")
        M = float(self.growth_bound)
        r = np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 121)])
        vals = np.asarray(phi(r), dtype=np.float64)
        der = np.asarray(dphi(r), dtype=np.float64)
        if np.any(vals > M * (1.0 + r) + 1e-9 * (1.0 + np.abs(vals))):
            raise ValueError("profile violates the declared linear-growth bound")
        if np.any(np.diff(der) < -1e-10 * (1.0 + np.abs(der[:-1]))):
            raise ValueError("profile derivative must be nondecreasing (convexity)")
        # One-sided derivatives of a convex linear-growth profile increase to
        # the recession slope; the tail is saturated long before 1e12.
        slope = float(dphi(np.array(1e12)))
        object.__setattr__(self, "_recession_slope", slope)

    # -- spatial weight -----------------------------------------------------

    def weight_at(self, x: Sequence[float]) -> float:
        w = self.spatial_weight
        if w is None:
            return 1.0
        if callable(w):
            return float(w(*[float(c) for c in x]))
        return float(w)

    def weight_array(self, coords: tuple[np.ndarray, ...]) -> np.ndarray | float:
        w = self.spatial_weight
        if w is None:
            return 1.0
        if callable(w):
            out = np.asarray(w(*coords), dtype=np.float64)
            return np.broadcast_to(out, np.broadcast_shapes(*(c.shape for c in coords)))
        return float(w)

    def axis_factor(self, axis: int) -> float:
        """Extra per-axis multiplier of the scalar profile (1 except anisotropic)."""
        if self.kind == "anisotropic_tv":
            if axis >= len(self.weights):
                raise ValueError("axis exceeds declared anisotropic weights")
            return self.weights[axis]
        return 1.0

    # -- scalar profile kernels (vectorised over ndarrays) -------------------
    #
    # Each built-in axis section is W*phi(|d|); the kernels below work on the
    # radius r = |d| >= 0 and a combined multiplier W > 0 (spatial weight
    # times axis factor).

    def _phi(self, r):
        if self.kind in ("tv", "anisotropic_tv"):
            return r
        if self.kind == "area":
            return np.sqrt(1.0 + r * r)
        if self.kind == "plasticity":
            return np.where(r <= 1.0, 0.5 * r * r, r - 0.5)
        return np.asarray(self.radial_profile(r), dtype=np.float64)

    def _phi_conj(self, s, w):
        """(w*phi(|.|))* at radius s >= 0, i.e. w*phi*(s/w); inf outside."""
        s = np.asarray(s, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        radius = w * self._recession_slope
        feasible = s <= radius * (1.0 + _DOM_SLACK)
        sc = np.minimum(s, radius)  # project boundary-roundoff points
        if self.kind in ("tv", "anisotropic_tv"):
            val = np.zeros_like(sc)
        elif self.kind == "area":
            val = -np.sqrt(np.maximum(w * w - sc * sc, 0.0))
        elif self.kind == "plasticity":
            val = 0.5 * sc * sc / w
        else:
            val = self._phi_conj_custom(sc, w)
        return np.where(feasible, val, np.inf)

    def _phi_conj_custom(self, s, w):
        """sup_r s*r - w*phi(r) by monotone search on w*phi'(r) = s.

        Near the boundary of the domain the supremum may be genuinely
        infinite; it is declared +inf once the supremand grows past 1/tol
        along the sampled ray.
        """
        s, w = np.broadcast_arrays(np.asarray(s, float), np.asarray(w, float))
        phi, dphi = self.radial_profile, self.radial_derivative
        hi = np.ones_like(s)
        for _ in range(50):  # doubling cap keeps r below ~1e15
            need = w * np.asarray(dphi(hi)) < s
            if not np.any(need):
                break
            hi = np.where(need, 2.0 * hi, hi)
        r = _solve_increasing(lambda t: w * np.asarray(dphi(t)) - s, None,
                              np.zeros_like(s), hi)
        val = s * r - w * np.asarray(phi(r))
        return np.where(val > 1.0 / _PROX_TOL, np.inf, val)

    def _phi_prox(self, s, lam):
        """argmin_r lam*phi(r) + (r-s)^2/2 on r >= 0 (lam already includes W)."""
        s = np.asarray(s, dtype=np.float64)
        lam = np.asarray(lam, dtype=np.float64)
        if self.kind in ("tv", "anisotropic_tv"):
            return np.maximum(s - lam, 0.0)
        if self.kind == "plasticity":
            return np.where(s <= 1.0 + lam, s / (1.0 + lam), s - lam)
        if self.kind == "area":
            # F(r) = r + lam*r/sqrt(1+r^2) - s is increasing and concave on
            # r >= 0, so Newton from r = s (where F >= 0) descends
            # monotonically onto the root: a handful of steps to 1e-15.
            s_b, lam_b = np.broadcast_arrays(s, lam)
            r = np.array(s_b, dtype=np.float64, copy=True)
            for _ in range(60):
                q = 1.0 / np.sqrt(1.0 + r * r)
                f = r + lam_b * r * q - s_b
                d = 1.0 + lam_b * q * q * q
                step = f / d
                r = np.maximum(r - step, 0.0)  # clamp into the concave branch
                if np.max(np.abs(step)) <= 1e-15 * (1.0 + np.max(r, initial=0.0)):
                    break
            else:
                raise ProxSolveError("area prox Newton did not converge")
            return r
        # radial_custom: r + lam*phi'(r) = s, right derivative, bisection
        s_b, lam_b = np.broadcast_arrays(s, lam)
        dphi = self.radial_derivative
        return _solve_increasing(
            lambda r: r + lam_b * np.asarray(dphi(r)) - s_b,
            None,
            np.zeros_like(s_b),
            s_b,
        )

    def _phi_conj_prox(self, s, sigma, w):
        """argmin_p sigma*(w*phi(|.|))*(p) + (p-s)^2/2 on p >= 0."""
        s = np.asarray(s, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        if self.kind in ("tv", "anisotropic_tv"):
            return np.minimum(s, w)
        if self.kind == "plasticity":
            return np.minimum(s / (1.0 + sigma / w), w)
        if self.kind == "area":
            # G(p) = p + sigma*p/sqrt(w^2-p^2) - s is increasing and convex on
            # [0, w), so Newton from p = 0 (where G = -s <= 0) ascends
            # monotonically onto the root and never leaves the domain.
            s_b, w_b = np.broadcast_arrays(s, w)
            p = np.zeros(s_b.shape, dtype=np.float64)
            w2 = w_b * w_b
            cap = w_b * (1.0 - 1e-16)
            for _ in range(80):
                q = 1.0 / np.sqrt(np.maximum(w2 - p * p, 1e-300))
                f = p + sigma * p * q - s_b
                d = 1.0 + sigma * w2 * q * q * q
                step = f / d
                p = np.clip(p - step, 0.0, cap)  # stay inside the open ball
                if np.max(np.abs(step)) <= 1e-15 * (1.0 + np.max(p, initial=0.0)):
                    break
            else:
                raise ProxSolveError("area conjugate prox Newton did not converge")
            return p
        # radial_custom: via the Moreau identity against the primal prox
        return s - sigma * self._phi_prox(s / sigma, w / sigma)

    # -- vectorised face kernels used by the solver --------------------------

    def face_value(self, d, w):
        """Axis section W*phi(|d|) for face differences d and combined weight w."""
        return w * self._phi(np.abs(d))

    def face_conjugate(self, p, w):
        """Conjugate of the axis section at face flux values p (may be inf)."""
        return self._phi_conj(np.abs(p), w)

    def face_prox(self, d, lam, w):
        """Prox of the axis section: sign(d) * prox radius."""
        r = self._phi_prox(np.abs(d), lam * np.asarray(w, float))
        return np.sign(d) * r

    def face_prox_conjugate(self, q, sigma, w):
        """Prox of the section conjugate (the dual update kernel)."""
        r = self._phi_conj_prox(np.abs(q), sigma, w)
        return np.sign(q) * r

    def recession_rate(self, w):
        """f0 paid per unit jump across a face with combined weight w."""
        return np.asarray(w, dtype=np.float64) * self._recession_slope

    def conjugate_strong_convexity(self, w) -> float:
        """Strong-convexity modulus of the section conjugate at weight w.

        area: (w*phi(|.|))* = -sqrt(w^2 - p^2) has second derivative >= 1/w on
        its domain; plasticity: p^2/(2w). Zero for the 1-homogeneous kinds and
        for user profiles (indicator-type conjugates carry no modulus). The
        solver uses a positive modulus to pick linearly convergent step sizes.
        """
        if self.kind in ("area", "plasticity"):
            wmax = float(np.max(w))
            return 1.0 / wmax if wmax > 0 else 0.0
        return 0.0

    # -- pointwise vector operations -----------------------------------------

    def _check_dim(self, xi: np.ndarray):
        if self.kind == "anisotropic_tv" and xi.shape[-1] != len(self.weights):
            raise ValueError(
                f"dimension mismatch: {xi.shape[-1]} components vs "
                f"{len(self.weights)} anisotropic weights"
            )

    def value(self, x: Sequence[float], xi) -> float:
        """f(x, xi)."""
        xi = np.asarray(xi, dtype=np.float64)
        self._check_dim(xi)
        w = self.weight_at(x)
        if self.kind == "anisotropic_tv":
            return float(w * np.dot(self.weights, np.abs(xi)))
        return float(w * self._phi(np.linalg.norm(xi)))

    def asymptotic(self, x: Sequence[float], xi) -> float:
        """f0(x, xi): positively 1-homogeneous recession function."""
        xi = np.asarray(xi, dtype=np.float64)
        self._check_dim(xi)
        w = self.weight_at(x)
        if self.kind == "anisotropic_tv":
            return float(w * np.dot(self.weights, np.abs(xi)))
        return float(w * self._recession_slope * np.linalg.norm(xi))

    def conjugate(self, x: Sequence[float], zeta) -> ExtendedValue:
        """f*(x, zeta); math.inf outside the effective domain."""
        zeta = np.asarray(zeta, dtype=np.float64)
        self._check_dim(zeta)
        w = self.weight_at(x)
        if self.kind == "anisotropic_tv":
            box = w * np.asarray(self.weights)
            if np.any(np.abs(zeta) > box * (1.0 + _DOM_SLACK)):
                return math.inf
            return 0.0
        return float(self._phi_conj(np.linalg.norm(zeta), w))

    def prox_primal(self, x: Sequence[float], xi, lam: float) -> np.ndarray:
        """Unique minimiser of lam*f(x, .) + |. - xi|^2 / 2."""
        if lam <= 0:
            raise ValueError("lam must be positive")
        xi = np.asarray(xi, dtype=np.float64)
        self._check_dim(xi)
        w = self.weight_at(x)
        if self.kind == "anisotropic_tv":
            thresh = lam * w * np.asarray(self.weights)
            return np.sign(xi) * np.maximum(np.abs(xi) - thresh, 0.0)
        r = np.linalg.norm(xi)
        if r == 0.0:
            return np.zeros_like(xi)
        rho = float(self._phi_prox(r, lam * w))
        return (rho / r) * xi

    def prox_conjugate(self, x: Sequence[float], zeta, sigma: float) -> np.ndarray:
        """Unique minimiser of sigma*f*(x, .) + |. - zeta|^2 / 2."""
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        zeta = np.asarray(zeta, dtype=np.float64)
        self._check_dim(zeta)
        w = self.weight_at(x)
        if self.kind == "anisotropic_tv":
            box = w * np.asarray(self.weights)
            return np.clip(zeta, -box, box)
        r = np.linalg.norm(zeta)
        if r == 0.0:
            return np.zeros_like(zeta)
        rho = float(self._phi_conj_prox(r, sigma, w))
        return (rho / r) * zeta

    def fenchel_young_residual(self, x: Sequence[float], xi, zeta) -> ExtendedValue:
        """f(x, xi) + f*(x, zeta) - <xi, zeta>; >= 0, zero iff zeta in df(x, xi)."""
        xi = np.asarray(xi, dtype=np.float64)
        zeta = np.asarray(zeta, dtype=np.float64)
        fstar = self.conjugate(x, zeta)
        if not np.isfinite(fstar):
            return math.inf
        return self.value(x, xi) + fstar - float(np.dot(xi, zeta))

    def growth_constant(self) -> float:
        """A constant M with |f(x,xi)| <= M(1+|xi|) at unit spatial weight."""
        if self.kind == "tv":
            return 1.0
        if self.kind == "anisotropic_tv":
            return max(self.weights) * math.sqrt(len(self.weights))
        if self.kind == "area":
            return math.sqrt(2.0)
        if self.kind == "plasticity":
            return 1.0
        return float(self.growth_bound)

    # -- JSON interface -------------------------------------------------------

    def to_json(self) -> dict:
        if self.kind == "radial_custom":
            raise ValueError("radial_custom integrands are construct-only")
        sw = self.spatial_weight
        if sw is not None and callable(sw):
            sw = getattr(sw, "source", None)
            if sw is None:
                raise ValueError("callable spatial weights without source are construct-only")
        return {
            "kind": self.kind,
            "weights": list(self.weights) if self.weights else None,
            "spatial_weight": sw,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LagrangianSpec":
        kind = obj.get("kind")
        weights = obj.get("weights")
        sw = obj.get("spatial_weight")
        if isinstance(sw, str):
            from .expressions import compile_expression

            sw = compile_expression(sw)
        return cls(
            kind=kind,
            weights=tuple(weights) if weights else None,
            spatial_weight=sw,
        )
