"""Convex polytope domains with parametric weights and their discretization.

A weighted domain is a bounded convex polytope in R^d (d <= 3) carrying a
log-density rho from the quadratic family rho(x) = x'Qx/2 + b'x + c and a
claimed curvature-dimension class (kappa, N).  The polytope is stored in
both vertex and half-space form; the two representations are
cross-validated on construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.stats import qmc

from .errors import EmptySample, InvalidDomain, InvalidN

CONTAINS_TOL = 1e-12


@dataclass(frozen=True)
class WeightSpec:
    """Log-density rho(x) = x'Qx/2 + b'x + c, kind in {constant, linear, quadratic}."""

    kind: str
    Q: np.ndarray
    b: np.ndarray
    c: float

    @staticmethod
    def constant(dim: int, c: float = 0.0) -> "WeightSpec":
        return WeightSpec("constant", np.zeros((dim, dim)), np.zeros(dim), float(c))

    @staticmethod
    def linear(b, c: float = 0.0) -> "WeightSpec":
        b = np.asarray(b, dtype=float)
        return WeightSpec("linear", np.zeros((len(b), len(b))), b, float(c))

    @staticmethod
    def quadratic(Q, b=None, c: float = 0.0) -> "WeightSpec":
        Q = np.asarray(Q, dtype=float)
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise InvalidDomain("Q must be symmetric")
        d = Q.shape[0]
        b = np.zeros(d) if b is None else np.asarray(b, dtype=float)
        return WeightSpec("quadratic", Q, b, float(c))

    def rho(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = 0.5 * np.einsum("ij,jk,ik->i", pts, self.Q, pts) + pts @ self.b + self.c
        return vals if np.asarray(points).ndim > 1 else float(vals[0])

    def grad_rho(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = pts @ self.Q + self.b
        return g if np.asarray(points).ndim > 1 else g[0]

    def is_constant(self) -> bool:
        return not (np.any(self.Q) or np.any(self.b))


def _check_n_param(n_param: float, dim: int, rho_constant: bool):
    if n_param != math.inf:
        if 1.0 <= n_param < dim:
            raise InvalidN(f"N={n_param} lies in the excluded band [1, {dim})")
        if n_param == dim and not rho_constant:
            raise InvalidN(f"N={dim} requires a constant weight")


@dataclass(frozen=True)
class WeightedDomain:
    """Bounded convex polytope with weight e^{-rho} and claimed class CD(kappa, N)."""

    dim: int
    vertices: np.ndarray          # (m, d)
    halfspaces_A: np.ndarray      # (k, d), unit rows, A x <= b
    halfspaces_b: np.ndarray      # (k,)
    rho: WeightSpec
    kappa: float = 0.0
    n_param: float = math.inf

    def __post_init__(self):
        self.validate()

    # -- construction -------------------------------------------------

    @staticmethod
    def from_vertices(vertices, rho: WeightSpec | None = None,
                      kappa: float = 0.0, n_param: float = math.inf) -> "WeightedDomain":
        """Build a domain from a vertex list, deriving the half-space form."""
        verts = np.atleast_2d(np.asarray(vertices, dtype=float))
        d = verts.shape[1]
        if d not in (1, 2, 3):
            raise InvalidDomain(f"dimension {d} not supported (d must be 1, 2 or 3)")
        if rho is None:
            rho = WeightSpec.constant(d)
        if d == 1:
            lo, hi = float(verts.min()), float(verts.max())
            if hi <= lo:
                raise InvalidDomain("interval has empty interior")
            verts = np.array([[lo], [hi]])
            A = np.array([[1.0], [-1.0]])
            b = np.array([hi, -lo])
        else:
            try:
                hull = ConvexHull(verts)
            except QhullError as exc:
                raise InvalidDomain(f"degenerate vertex set: {exc}") from exc
            verts = verts[hull.vertices]
            # Qhull equations: A x + b <= 0 with unit normals
            eq = np.unique(np.round(hull.equations, 12), axis=0)
            A = eq[:, :-1]
            b = -eq[:, -1]
        return WeightedDomain(d, verts, A, b, rho, float(kappa),
                              math.inf if n_param == math.inf else float(n_param))

    @staticmethod
    def from_json(spec) -> "WeightedDomain":
        """Read the JSON document format: dim, vertices, rho, kappa, N."""
        if isinstance(spec, (str, bytes)):
            spec = json.loads(spec)
        dim = int(spec["dim"])
        verts = np.asarray(spec["vertices"], dtype=float)
        if verts.ndim == 1:
            verts = verts[:, None]
        if verts.shape[1] != dim:
            raise InvalidDomain("vertex dimension does not match 'dim'")
        rspec = spec.get("rho", {"kind": "constant", "c": 0.0})
        kind = rspec.get("kind", "constant")
        if kind == "constant":
            rho = WeightSpec.constant(dim, rspec.get("c", 0.0))
        elif kind == "linear":
            rho = WeightSpec.linear(rspec["b"], rspec.get("c", 0.0))
        elif kind == "quadratic":
            rho = WeightSpec.quadratic(rspec["Q"], rspec.get("b"), rspec.get("c", 0.0))
        else:
            raise InvalidDomain(f"unknown weight kind {kind!r}")
        n_raw = spec.get("N", "inf")
        n_param = math.inf if n_raw in ("inf", None) else float(n_raw)
        return WeightedDomain.from_vertices(verts, rho, spec.get("kappa", 0.0), n_param)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "vertices": self.vertices.tolist(),
            "rho": {"kind": self.rho.kind, "Q": self.rho.Q.tolist(),
                    "b": self.rho.b.tolist(), "c": self.rho.c},
            "kappa": self.kappa,
            "N": "inf" if self.n_param == math.inf else self.n_param,
        }

    # -- invariants ---------------------------------------------------

    def validate(self, tol: float = 1e-9):
        A, b, V = self.halfspaces_A, self.halfspaces_b, self.vertices
        if V.shape[1] != self.dim or A.shape[1] != self.dim:
            raise InvalidDomain("dimension mismatch")
        slack = V @ A.T - b            # (m_verts, k)
        if slack.max() > tol:
            raise InvalidDomain("a vertex violates a half-space")
        # each vertex sits on >= d facets, each half-space is supporting
        on_facet = np.abs(slack) <= tol
        if (on_facet.sum(axis=1) < self.dim).any():
            raise InvalidDomain("a vertex lies on fewer than d facets")
        if (np.abs(slack).min(axis=0) > tol).any():
            raise InvalidDomain("a half-space is not supporting")
        if self.dim == 1:
            if V.max() - V.min() <= tol:
                raise InvalidDomain("interval has empty interior")
        else:
            try:
                if ConvexHull(V).volume <= tol ** self.dim:
                    raise InvalidDomain("polytope has empty interior")
            except QhullError as exc:
                raise InvalidDomain("polytope has empty interior") from exc
        _check_n_param(self.n_param, self.dim, self.rho.is_constant())

    # -- basic queries ------------------------------------------------

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


def contains_point(domain: WeightedDomain, x, tol: float = CONTAINS_TOL) -> bool:
    """True iff x satisfies every half-space of the domain within tol."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        return False
    return bool(np.all(domain.halfspaces_A @ x - domain.halfspaces_b <= tol))


def contains_points(domain: WeightedDomain, pts: np.ndarray, tol: float = CONTAINS_TOL) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return np.all(pts @ domain.halfspaces_A.T - domain.halfspaces_b <= tol, axis=1)


def diameter(domain: WeightedDomain) -> float:
    """Max pairwise vertex distance; exact for polytopes."""
    V = domain.vertices
    diff = V[:, None, :] - V[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=2)).max())


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud approximating mu = e^{-rho} * Lebesgue on the domain."""

    points: np.ndarray
    weights: np.ndarray
    spacing: float
    seed: int = 0

    def __post_init__(self):
        if len(self.points) != len(self.weights):
            raise InvalidDomain("points/weights length mismatch")
        if (self.weights <= 0).any():
            raise InvalidDomain("weights must be positive")

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.weights))

    def __len__(self):
        return len(self.weights)


# -- exact cell clipping ---------------------------------------------


def _clip_polygon(poly, a, beta, tol=1e-14):
    """Sutherland-Hodgman step: keep the part of poly with a.p <= beta."""
    out = []
    n = len(poly)
    if n == 0:
        return out
    s = poly[-1]
    s_in = np.dot(a, s) - beta <= tol
    for p in poly:
        p_in = np.dot(a, p) - beta <= tol
        if p_in:
            if not s_in:
                t = (beta - np.dot(a, s)) / np.dot(a, p - s)
                out.append(s + t * (p - s))
            out.append(p)
        elif s_in:
            t = (beta - np.dot(a, s)) / np.dot(a, p - s)
            out.append(s + t * (p - s))
        s, s_in = p, p_in
    return out


def _polygon_area_centroid(poly):
    """Signed-area shoelace; returns (area, centroid) for a ccw polygon."""
    if len(poly) < 3:
        return 0.0, None
    P = np.asarray(poly)
    x, y = P[:, 0], P[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-300:
        return 0.0, None
    cx = ((x + xn) * cross).sum() / (6 * area)
    cy = ((y + yn) * cross).sum() / (6 * area)
    return abs(area), np.array([cx, cy])


def _clip_cell_2d(domain, lo, hi):
    poly = [np.array([lo[0], lo[1]]), np.array([hi[0], lo[1]]),
            np.array([hi[0], hi[1]]), np.array([lo[0], hi[1]])]
    for a, beta in zip(domain.halfspaces_A, domain.halfspaces_b):
        poly = _clip_polygon(poly, a, beta)
        if not poly:
            return 0.0, None
    return _polygon_area_centroid(poly)


def _clip_cell_3d(domain, lo, hi):
    A = np.vstack([domain.halfspaces_A, np.eye(3), -np.eye(3)])
    b = np.concatenate([domain.halfspaces_b, hi, -lo])
    m = len(b)
    verts = []
    for i, j, k in combinations(range(m), 3):
        M = A[[i, j, k]]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        v = np.linalg.solve(M, b[[i, j, k]])
        if np.all(A @ v <= b + 1e-9):
            verts.append(v)
    if len(verts) < 4:
        return 0.0, None
    verts = np.unique(np.round(np.array(verts), 12), axis=0)
    if len(verts) < 4:
        return 0.0, None
    try:
        hull = ConvexHull(verts)
    except QhullError:
        return 0.0, None
    c0 = verts.mean(axis=0)
    vol = 0.0
    cen = np.zeros(3)
    for simplex in hull.simplices:
        p = verts[simplex]
        t = abs(np.dot(np.cross(p[1] - p[0], p[2] - p[0]), c0 - p[0])) / 6.0
        vol += t
        cen += t * (p[0] + p[1] + p[2] + c0) / 4.0
    if vol <= 0:
        return 0.0, None
    return vol, cen / vol


def _grid_cells(domain: WeightedDomain, h: float):
    """Yield (volume, centroid) for every grid cell meeting the domain."""
    lo, hi = domain.bbox()
    d = domain.dim
    counts = [max(1, int(math.ceil((hi[k] - lo[k]) / h - 1e-12))) for k in range(d)]
    axes = [lo[k] + h * np.arange(counts[k] + 1) for k in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    slack = nodes @ domain.halfspaces_A.T - domain.halfspaces_b
    node_shape = tuple(c + 1 for c in counts)
    inside = (slack <= CONTAINS_TOL).all(axis=1).reshape(node_shape)
    outside = (slack > CONTAINS_TOL).reshape(node_shape + (slack.shape[1],))
    corner_shifts = list(product((0, 1), repeat=d))

    def corner_view(arr, shift):
        sl = tuple(slice(s, s + c) for s, c in zip(shift, counts))
        return arr[sl]

    all_in = np.ones(counts, dtype=bool)
    for shift in corner_shifts:
        all_in &= corner_view(inside, shift)
    all_out_one = np.ones(tuple(counts) + (outside.shape[-1],), dtype=bool)
    for shift in corner_shifts:
        all_out_one &= corner_view(outside, shift)
    rejectable = all_out_one.any(axis=-1)

    for idx in product(*(range(c) for c in counts)):
        if rejectable[idx]:
            continue
        cell_lo = np.array([lo[k] + idx[k] * h for k in range(d)])
        cell_hi = cell_lo + h
        if all_in[idx]:
            yield h ** d, cell_lo + 0.5 * h
            continue
        if d == 1:
            a = max(cell_lo[0], float(domain.vertices.min()))
            bnd = min(cell_hi[0], float(domain.vertices.max()))
            if bnd - a > 1e-300:
                yield bnd - a, np.array([(a + bnd) / 2])
        elif d == 2:
            vol, cen = _clip_cell_2d(domain, cell_lo, cell_hi)
            if vol > 0 and cen is not None:
                yield vol, cen
        else:
            vol, cen = _clip_cell_3d(domain, cell_lo, cell_hi)
            if vol > 0 and cen is not None:
                yield vol, cen


def sample_measure(domain: WeightedDomain, strategy: str = "grid",
                   resolution: float = 0.1, seed: int = 0) -> DiscreteMeasure:
    """Discretize mu = e^{-rho} * Lebesgue.

    grid: cell centroids after exact clipping against the polytope,
    weight = e^{-rho(centroid)} * clipped volume.  quasirandom: scrambled
    Sobol points over the bounding box with uniform cell volume.  Both
    deterministic given (strategy, resolution, seed).
    """
    if resolution <= 0:
        raise InvalidDomain("resolution must be positive")
    if strategy == "grid":
        vols, cens = [], []
        for vol, cen in _grid_cells(domain, resolution):
            vols.append(vol)
            cens.append(cen)
        if not vols:
            raise EmptySample("no grid cell meets the domain")
        pts = np.array(cens)
        weights = np.exp(-np.asarray(domain.rho.rho(pts))) * np.array(vols)
        return DiscreteMeasure(pts, weights, resolution, seed)
    if strategy == "quasirandom":
        lo, hi = domain.bbox()
        box_vol = float(np.prod(hi - lo))
        n = max(16, int(round(box_vol / resolution ** domain.dim)))
        sob = qmc.Sobol(domain.dim, scramble=True, seed=seed)
        raw = sob.random(n)
        pts = lo + raw * (hi - lo)
        keep = contains_points(domain, pts, tol=-1e-12)
        pts = pts[keep]
        if len(pts) == 0:
            raise EmptySample("no quasirandom point landed inside the domain")
        weights = np.exp(-np.asarray(domain.rho.rho(pts))) * (box_vol / n)
        return DiscreteMeasure(pts, weights, resolution, seed)
    raise InvalidDomain(f"unknown sampling strategy {strategy!r}")


@dataclass(frozen=True)
class RicciCertificate:
    holds: bool
    margin: float
    detail: dict = field(default_factory=dict)


def certify_ricci_bound(domain: WeightedDomain) -> RicciCertificate:
    """Certify inf Ric_{mu,N}(v,v) >= kappa over the domain and unit v.

    Flat ambient space: Ric_{mu,N}(v,v) = <Qv,v> - <Qx+b,v>^2/(N-d).
    N = inf is exact (smallest eigenvalue of Q); finite N > d uses the
    vertex supremum of |Qx+b|^2, which is conservative; N < 1 drops the
    (then nonnegative) gradient term, also conservative.
    """
    d = domain.dim
    N = domain.n_param
    _check_n_param(N, d, domain.rho.is_constant())
    Q = domain.rho.Q
    lam_min = float(np.linalg.eigvalsh(Q)[0]) if Q.any() else 0.0
    if N == math.inf:
        inf_certified = lam_min
        mode = "exact-eigen"
    elif N == d:
        inf_certified = 0.0
        mode = "unweighted"
    elif N > d:
        g = domain.vertices @ Q + domain.rho.b
        sup_grad_sq = float((g ** 2).sum(axis=1).max())
        inf_certified = lam_min - sup_grad_sq / (N - d)
        mode = "vertex-sup"
    else:  # N < 1: gradient term is nonnegative, drop it
        inf_certified = lam_min
        mode = "dropped-nonnegative-term"
    margin = inf_certified - domain.kappa
    return RicciCertificate(holds=bool(margin >= -1e-12), margin=float(margin),
                            detail={"mode": mode, "certified_infimum": float(inf_certified)})
