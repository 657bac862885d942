"""One-dimensional needle toolkit.

A needle is a measure on an interval with density e^{-Psi}, either in
closed form (the affine families, with analytic derivatives) or sampled
(kernel estimates along extracted transport rays).  The central check is
the differential inequality Psi'' >= kappa + (Psi')^2/(N-1), with the
quadratic term read as zero for N = infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import erfcinv

from .errors import InvalidParams, NonpositiveDensity, TooFewSamples

INF = math.inf


@dataclass(frozen=True)
class ClosedForm:
    density: object          # callable t -> f(t)
    psi: object
    dpsi: object
    d2psi: object
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Needle:
    """Density e^{-Psi} on the open interval (a, b)."""

    a: float
    b: float
    grid: np.ndarray | None = None
    density: np.ndarray | None = None
    closed: ClosedForm | None = None
    kappa: float | None = None
    n_param: float | None = None
    bandwidth: float | None = None

    @staticmethod
    def from_samples(grid, density, kappa=None, n_param=None, bandwidth=None) -> "Needle":
        grid = np.asarray(grid, dtype=float)
        density = np.asarray(density, dtype=float)
        if len(grid) < 3 or np.any(np.diff(grid) <= 0):
            raise InvalidParams("sampled needle needs a strictly increasing grid")
        if np.any(density < 0):
            raise NonpositiveDensity("sampled density has negative values")
        return Needle(float(grid[0]), float(grid[-1]), grid, density, None,
                      kappa, n_param, bandwidth)

    @staticmethod
    def from_closed_form(a, b, closed: ClosedForm, kappa=None, n_param=None) -> "Needle":
        return Needle(float(a), float(b), None, None, closed, kappa, n_param)

    @property
    def is_closed_form(self) -> bool:
        return self.closed is not None

    def grid_density(self, m: int = 1025, trim: float = 0.0):
        """(grid, density) arrays on [a + trim, b - trim]."""
        if self.is_closed_form:
            a, b = self.a + trim, self.b - trim
            if not (np.isfinite(a) and np.isfinite(b)):
                raise InvalidParams("closed-form needle has an infinite interval; truncate first")
            g = np.linspace(a, b, m)
            return g, np.asarray(self.closed.density(g), dtype=float)
        keep = (self.grid >= self.a + trim) & (self.grid <= self.b - trim)
        return self.grid[keep], self.density[keep]

    def mass(self) -> float:
        g, f = self.grid_density()
        return float(np.trapz(f, g))

    def restrict(self, a: float, b: float) -> "Needle":
        """The same density on a subinterval."""
        if not (self.a - 1e-12 <= a < b <= self.b + 1e-12):
            raise InvalidParams("restriction interval not inside the needle interval")
        if self.is_closed_form:
            return Needle(a, b, None, None, self.closed, self.kappa, self.n_param)
        keep = (self.grid >= a - 1e-12) & (self.grid <= b + 1e-12)
        if keep.sum() < 3:
            raise InvalidParams("restriction leaves fewer than 3 grid points")
        return Needle(float(self.grid[keep][0]), float(self.grid[keep][-1]),
                      self.grid[keep], self.density[keep], None,
                      self.kappa, self.n_param, self.bandwidth)


# -- density estimation along rays ------------------------------------


def estimate_density(ray, measure, bandwidth: float | None = None) -> Needle:
    """Boundary-corrected kernel estimate of the ray's conditional density.

    Gaussian kernel with reflection at both interval ends, evaluated on a
    regular grid over (t_min, t_max) and normalized to the ray mass.
    Deterministic given the bandwidth (default 3 * sample spacing).
    """
    if len(ray.members) < 8:
        raise TooFewSamples(f"ray {ray.ray_id} has {len(ray.members)} members")
    if bandwidth is None:
        bandwidth = 3.0 * measure.spacing
    t = ray.member_t
    m_w = measure.weights[ray.members]
    a, b = float(t.min()), float(t.max())
    if b - a < 4 * np.finfo(float).eps * max(1.0, abs(a)):
        raise TooFewSamples("ray has no extent in the u parameter")
    m = int(min(513, max(33, round((b - a) / (bandwidth / 2)) + 1)))
    grid = np.linspace(a, b, m)

    def kern(x):
        return np.exp(-0.5 * (x / bandwidth) ** 2)

    G = kern(grid[:, None] - t[None, :])
    G += kern(grid[:, None] - (2 * a - t)[None, :])
    G += kern(grid[:, None] - (2 * b - t)[None, :])
    dens = G @ m_w
    total = np.trapz(dens, grid)
    if total <= 0:
        raise NonpositiveDensity("kernel estimate integrated to zero")
    dens *= ray.mass / total
    return Needle.from_samples(grid, dens, bandwidth=bandwidth)


# -- curvature-dimension verification ---------------------------------


@dataclass(frozen=True)
class CDReport:
    passed: bool
    min_residual: float
    worst_t: float
    tol: float

    def __bool__(self):
        return self.passed


def _quad_term(dpsi, n_param):
    if n_param == INF:
        return np.zeros_like(dpsi)
    return dpsi ** 2 / (n_param - 1.0)


def check_cd(needle: Needle, kappa: float, n_param: float,
             tol: float | None = None) -> CDReport:
    """Verify Psi'' >= kappa + (Psi')^2/(N-1) on the interior.

    Closed forms are differentiated analytically; sampled needles use
    centered second differences, with one bandwidth trimmed at each end
    to stay clear of the reflection correction.  Default tolerance is
    1e-8 for closed forms, 10 * grid step for sampled ones.
    """
    if n_param == 1:
        raise InvalidParams("N = 1 is outside the admissible class")
    if needle.is_closed_form:
        a, b = needle.a, needle.b
        if not (np.isfinite(a) and np.isfinite(b)):
            raise InvalidParams("truncate infinite closed-form needles before checking")
        pad = 1e-9 * (b - a)
        g = np.linspace(a + pad, b - pad, 513)
        f = np.asarray(needle.closed.density(g), dtype=float)
        if np.any(f <= 0):
            raise NonpositiveDensity("closed-form density not positive on the interior")
        dpsi = np.asarray(needle.closed.dpsi(g), dtype=float)
        d2psi = np.asarray(needle.closed.d2psi(g), dtype=float)
        resid = d2psi - kappa - _quad_term(dpsi, n_param)
        tol = 1e-8 if tol is None else tol
        worst = int(np.argmin(resid))
        return CDReport(bool(resid[worst] >= -tol), float(resid[worst]),
                        float(g[worst]), float(tol))
    grid, f = needle.grid, needle.density
    trim = needle.bandwidth if needle.bandwidth else 0.0
    inner = (grid >= needle.a + trim) & (grid <= needle.b - trim)
    if inner.sum() < 5:
        inner = np.ones_like(grid, dtype=bool)
    g = grid[inner]
    fv = f[inner]
    if np.any(fv <= 0):
        raise NonpositiveDensity("sampled density not positive on the interior")
    step = g[1] - g[0]
    psi = -np.log(fv)
    dpsi = (psi[2:] - psi[:-2]) / (2 * step)
    d2psi = (psi[2:] - 2 * psi[1:-1] + psi[:-2]) / step ** 2
    resid = d2psi - kappa - _quad_term(dpsi, n_param)
    tol = 10 * step if tol is None else tol
    worst = int(np.argmin(resid))
    return CDReport(bool(resid[worst] >= -tol), float(resid[worst]),
                    float(g[1:-1][worst]), float(tol))


def check_zero_integral(needle: Needle, ray, f_eval) -> float:
    """Normalized residual of the per-needle constraint integral.

    f_eval maps an (m, d) array of points to values; the residual is
    |integral of f(gamma(t)) density| / integral of |f| density on the
    needle grid (0 when the denominator vanishes).
    """
    g, dens = needle.grid_density()
    pts = ray.base[None, :] + g[:, None] * ray.direction[None, :]
    fv = np.asarray(f_eval(pts), dtype=float)
    num = abs(np.trapz(fv * dens, g))
    den = np.trapz(np.abs(fv) * dens, g)
    return float(num / den) if den > 0 else 0.0


# -- affine (equality-case) needle families ----------------------------


@dataclass(frozen=True)
class AffineNeedleSpec:
    """Equality case Psi'' = kappa + (Psi')^2/(N-1) on (a, b)."""

    kappa: float
    n_param: float
    alpha: float
    beta: float
    a: float
    b: float


def affine_needle_density(spec: AffineNeedleSpec) -> Needle:
    """Closed-form density for the affine family of class (kappa, N).

    N = inf: density alpha * exp(-kappa t^2/2 + beta t).  Finite N with
    n = N - 1: (alpha + beta t)^n for kappa = 0, (alpha sin(w t - beta))^n
    with w = sqrt(kappa/n) for kappa/n > 0 (argument confined to (0, pi)),
    and (alpha sinh(w t) + beta cosh(w t))^n for kappa/n < 0.  Raises
    InvalidParams when the density is not positive on (a, b).
    """
    k, N, al, be = spec.kappa, spec.n_param, spec.alpha, spec.beta
    a, b = spec.a, spec.b
    if not a < b:
        raise InvalidParams("empty interval")
    if N == 1:
        raise InvalidParams("N = 1 is outside the admissible class")
    if N == INF:
        if al <= 0:
            raise InvalidParams("alpha must be positive for the log-affine family")
        la = math.log(al)

        def density(t):
            return np.exp(-0.5 * k * np.asarray(t) ** 2 + be * np.asarray(t) + la)

        cf = ClosedForm(density=density,
                        psi=lambda t: 0.5 * k * np.asarray(t) ** 2 - be * np.asarray(t) - la,
                        dpsi=lambda t: k * np.asarray(t) - be,
                        d2psi=lambda t: k * np.ones_like(np.asarray(t, dtype=float)),
                        params={"family": "log-affine", **spec.__dict__})
        return Needle.from_closed_form(a, b, cf, k, N)
    n = N - 1.0
    if k == 0:
        lo = al + be * a
        hi = al + be * b
        if min(lo, hi) <= 0:
            raise InvalidParams("alpha + beta t must stay positive on (a, b)")

        def density(t):
            return (al + be * np.asarray(t)) ** n

        cf = ClosedForm(density=density,
                        psi=lambda t: -n * np.log(al + be * np.asarray(t)),
                        dpsi=lambda t: -n * be / (al + be * np.asarray(t)),
                        d2psi=lambda t: n * be ** 2 / (al + be * np.asarray(t)) ** 2,
                        params={"family": "power", **spec.__dict__})
        return Needle.from_closed_form(a, b, cf, k, N)
    ratio = k / n
    if ratio > 0:
        w = math.sqrt(ratio)
        if al <= 0:
            raise InvalidParams("alpha must be positive for the sin family")
        if w * a - be < -1e-12 or w * b - be > math.pi + 1e-12:
            raise InvalidParams("interval leaves the arc (0, pi) of the sin family")

        def density(t):
            return (al * np.sin(w * np.asarray(t) - be)) ** n

        cf = ClosedForm(density=density,
                        psi=lambda t: -n * np.log(al * np.sin(w * np.asarray(t) - be)),
                        dpsi=lambda t: -n * w / np.tan(w * np.asarray(t) - be),
                        d2psi=lambda t: n * w ** 2 / np.sin(w * np.asarray(t) - be) ** 2,
                        params={"family": "sin", **spec.__dict__})
        return Needle.from_closed_form(a, b, cf, k, N)
    w = math.sqrt(-ratio)

    def base(t):
        return al * np.sinh(w * np.asarray(t)) + be * np.cosh(w * np.asarray(t))

    def dbase(t):
        return w * (al * np.cosh(w * np.asarray(t)) + be * np.sinh(w * np.asarray(t)))

    probe = np.linspace(a, b, 257)
    if np.min(base(probe)) <= 0:
        raise InvalidParams("sinh/cosh base must stay positive on (a, b)")

    def density(t):
        return base(t) ** n

    cf = ClosedForm(density=density,
                    psi=lambda t: -n * np.log(base(t)),
                    dpsi=lambda t: -n * dbase(t) / base(t),
                    d2psi=lambda t: -n * (w ** 2 - (dbase(t) / base(t)) ** 2),
                    params={"family": "sinh-cosh", **spec.__dict__})
    return Needle.from_closed_form(a, b, cf, k, N)


# -- Legendre-type transform -------------------------------------------


def transform_kernel(kappa: float, n_exp: float):
    """g(t) = {sin(sqrt(kappa/n) t) 1_[0,pi](sqrt(kappa/n) t)}^n with the
    conventions 0^n = 0 for n > 0 and +inf for n < 0."""
    if n_exp == 0 or kappa / n_exp <= 0:
        raise InvalidParams("transform requires kappa/N > 0, N != 0")
    w = math.sqrt(kappa / n_exp)

    def g(t):
        t = np.asarray(t, dtype=float)
        x = w * t
        inside = (x >= 0) & (x <= math.pi)
        s = np.where(inside, np.sin(np.clip(x, 0, math.pi)), 0.0)
        with np.errstate(divide="ignore"):
            out = np.where(s > 0, s ** n_exp, 0.0 if n_exp > 0 else np.inf)
        return out

    return g


def needle_transform(values, grid, kappa: float, n_exp: float,
                     out_grid=None) -> np.ndarray:
    """f*(s) = inf over grid t with f(t) < inf of g(s + t) / f(t).

    Conventions: g(s+t)/0 = +inf; an empty infimum (f nowhere finite) is
    +inf.  values/grid may come from a sampled needle; out_grid defaults
    to the input grid so order-reversal comparisons share grids exactly.
    """
    g = transform_kernel(kappa, n_exp)
    f = np.asarray(values, dtype=float)
    t = np.asarray(grid, dtype=float)
    s = t if out_grid is None else np.asarray(out_grid, dtype=float)
    finite = np.isfinite(f)
    if not finite.any():
        return np.full(len(s), np.inf)
    f = f[finite]
    t = t[finite]
    G = g(s[:, None] + t[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.where(f[None, :] > 0, G / np.where(f[None, :] > 0, f[None, :], 1.0), np.inf)
        R = np.where((G == 0) & (f[None, :] == 0), np.inf, R)
    return R.min(axis=1)


def transform_needle(needle: Needle, kappa: float, n_exp: float):
    """Transform a needle's density; returns (grid, f_star)."""
    g, f = needle.grid_density()
    return g, needle_transform(f, g, kappa, n_exp)


# -- 1D spectral gap ---------------------------------------------------


def _neumann_eigenvalue(dens, a, b, m):
    x = np.linspace(a, b, m)
    dx = x[1] - x[0]
    fm = np.asarray(dens((x[:-1] + x[1:]) / 2), dtype=float)
    fc = np.asarray(dens(x), dtype=float)
    floor = 1e-300
    fm = np.maximum(fm, floor)
    mass = np.maximum(fc, floor) * dx
    mass[0] *= 0.5
    mass[-1] *= 0.5
    off = -fm / dx
    diag = np.zeros(m)
    diag[:-1] += fm / dx
    diag[1:] += fm / dx
    s = 1 / np.sqrt(mass)
    vals = eigh_tridiagonal(diag * s * s, off * s[:-1] * s[1:],
                            select="i", select_range=(0, 1))[0]
    return float(vals[1])


def spectral_gap_1d(needle: Needle, n_grid: int = 801) -> float:
    """Smallest nonzero Neumann eigenvalue of -(f u')' = lambda f u.

    Symmetric finite volumes with half cells at the ends, Richardson
    extrapolated from n_grid and 2*n_grid-1 nodes.
    """
    if not (np.isfinite(needle.a) and np.isfinite(needle.b)):
        raise InvalidParams("spectral gap needs a finite interval")
    if needle.is_closed_form:
        dens = needle.closed.density
    else:
        g0, f0 = needle.grid, needle.density
        if np.any(f0 <= 0):
            raise NonpositiveDensity("density must be positive for the spectral gap")

        def dens(x):
            return np.interp(x, g0, f0)

    lam1 = _neumann_eigenvalue(dens, needle.a, needle.b, n_grid)
    lam2 = _neumann_eigenvalue(dens, needle.a, needle.b, 2 * n_grid - 1)
    return (4 * lam2 - lam1) / 3


# -- model-class minimization ------------------------------------------


def _truncated_interval(kappa: float, beta: float, coverage_tail: float = 1e-10):
    """Finite window carrying all but coverage_tail of a log-affine density."""
    if kappa <= 0:
        raise InvalidParams("infinite support needs kappa > 0")
    center = beta / kappa
    z = math.sqrt(2.0) * float(erfcinv(coverage_tail))
    half = z / math.sqrt(kappa)
    return center - half, center + half


def affine_family_members(kappa: float, n_param: float, length: float,
                          n_beta: int = 9):
    """Deterministic parameter grid of admissible affine needles on (0, length)."""
    members = []
    if n_param == INF:
        for bl in np.linspace(-3.0, 3.0, n_beta):
            members.append(affine_needle_density(
                AffineNeedleSpec(kappa, INF, 1.0, bl / length, 0.0, length)))
        return members
    n = n_param - 1.0
    if kappa == 0:
        for bl in np.linspace(-0.9, 3.0, n_beta):
            members.append(affine_needle_density(
                AffineNeedleSpec(0.0, n_param, 1.0, bl / length, 0.0, length)))
        return members
    if kappa / n > 0:
        w = math.sqrt(kappa / n)
        # the sin family cannot span more than pi/w; shrink if needed
        length = min(length, (math.pi / w) * (1 - 1e-12))
        slack = math.pi - w * length
        for ph in np.linspace(0.0, slack, n_beta):
            members.append(affine_needle_density(
                AffineNeedleSpec(kappa, n_param, 1.0, -ph, 0.0, length)))
        return members
    for sl in np.linspace(-0.9, 3.0, n_beta):
        try:
            members.append(affine_needle_density(
                AffineNeedleSpec(kappa, n_param, sl, 1.0, 0.0, length)))
        except InvalidParams:
            continue
    return members


def lambda_knd(kappa: float, n_param: float, D: float, search: dict | None = None) -> dict:
    """Upper bound on the model spectral gap by minimizing over the
    affine-needle family on subintervals of (0, D)."""
    search = search or {}
    n_beta = int(search.get("n_beta", 9))
    fracs = search.get("lengths", [1.0])
    n_grid = int(search.get("n_grid", 801))
    best = math.inf
    best_params = None
    if not np.isfinite(D):
        raise InvalidParams("lambda search needs a finite D; use the profile for D = inf")
    for frac in fracs:
        length = frac * D
        for member in affine_family_members(kappa, n_param, length, n_beta):
            lam = spectral_gap_1d(member, n_grid=n_grid)
            if lam < best:
                best = lam
                best_params = member.closed.params
    return {"value": best, "upper_bound": True, "params": best_params}


def _cdf_on_grid(needle: Needle, m: int = 4097):
    g, f = needle.grid_density(m=m)
    inc = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(g))])
    total = inc[-1]
    if total <= 0:
        raise NonpositiveDensity("needle carries no mass")
    return g, inc / total, f / total


def iso_profile(kappa: float, n_param: float, D: float, t: float, eps: float,
                search: dict | None = None) -> dict:
    """Upper bound on the infimal eps-neighborhood mass at level t.

    Minimizes nu(S_eps) over the affine family and half-line sets
    S = (-inf, a) / (a, inf); an exploratory flag marks the kappa < 0,
    N < 0 regime where the extremizer class is not settled.
    """
    if not 0 < t < 1:
        raise InvalidParams("t must lie in (0, 1)")
    if eps <= 0:
        raise InvalidParams("eps must be positive")
    search = search or {}
    n_beta = int(search.get("n_beta", 9))
    fracs = search.get("lengths", [1.0])
    members = []
    if np.isfinite(D):
        for frac in fracs:
            members.extend(affine_family_members(kappa, n_param, frac * D, n_beta))
    else:
        if n_param != INF or kappa <= 0:
            raise InvalidParams("D = inf profile implemented for kappa > 0, N = inf")
        lo, hi = _truncated_interval(kappa, 0.0)
        members.append(affine_needle_density(
            AffineNeedleSpec(kappa, INF, 1.0, 0.0, lo, hi)))
    best = math.inf
    best_params = None
    for member in members:
        g, F, _ = _cdf_on_grid(member)
        a_left = np.interp(t, F, g)
        val_left = float(np.interp(a_left + eps, g, F, right=1.0))
        a_right = np.interp(1.0 - t, F, g)
        val_right = float(1.0 - np.interp(a_right - eps, g, F, left=0.0))
        val = min(val_left, val_right)
        if val < best:
            best = val
            best_params = member.closed.params if member.is_closed_form else None
    return {"value": best, "upper_bound": True,
            "exploratory": bool(kappa < 0 and n_param < 0),
            "params": best_params}


def bobkov_i_curve(needle: Needle, n_s: int = 199, check_tol: float | None = None) -> dict:
    """I(s) = density(F^{-1}(s)) for a log-concave needle, with a
    concavity report (second differences on the s grid)."""
    report = check_cd(needle, 0.0, INF, tol=check_tol)
    if not report.passed:
        raise InvalidParams("needle is not log-concave within tolerance")
    g, F, f = _cdf_on_grid(needle)
    s = np.linspace(0.005, 0.995, n_s)
    x = np.interp(s, F, g)
    dens = np.interp(x, g, f)
    d2 = dens[2:] - 2 * dens[1:-1] + dens[:-2]
    return {"s": s, "I": dens, "min_second_diff": float(d2.min()),
            "concave": bool(d2.min() >= -1e-6 * max(1.0, float(dens.max())))}


def fit_linear_density(needle: Needle, trim_bandwidths: float = 2.0) -> dict:
    """Degree-1 least-squares fit of a sampled density with an R^2 that
    treats near-constant data as a perfect fit; reports the fitted root."""
    trim = (needle.bandwidth or 0.0) * trim_bandwidths
    g, f = needle.grid_density(trim=trim)
    if len(g) < 5:
        g, f = needle.grid_density()
    coeffs = np.polyfit(g, f, 1)
    fit = np.polyval(coeffs, g)
    ss_res = float(np.sum((f - fit) ** 2))
    ss_tot = float(np.sum((f - f.mean()) ** 2))
    mean_sq = float(np.mean(f) ** 2)
    if ss_tot <= 1e-10 * len(g) * mean_sq or ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-6 * len(g) * mean_sq else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    root = -coeffs[1] / coeffs[0] if abs(coeffs[0]) > 1e-12 * max(1.0, abs(coeffs[1])) else None
    return {"r2": float(r2), "slope": float(coeffs[0]), "intercept": float(coeffs[1]),
            "root": None if root is None else float(root)}
