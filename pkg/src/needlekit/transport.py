"""Kantorovich L1 dual solver on discrete measures.

The zero-mean constraint function f splits f*mu into source and sink
atoms; an exact transportation LP between them yields an optimal plan
together with dual potentials.  The 1-Lipschitz potential on all sample
points is the inf-convolution (McShane) extension of the sink duals,
which is 1-Lipschitz by construction and tight on every flow edge.

Small instances are solved as a dense LP; larger ones by column
generation with per-row/per-column pricing, which terminates only when
no pair violates dual feasibility, so optimality is always certified
against the complete bipartite problem.  A final complementary-slackness
audit is a hard error if it fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .errors import CertificateFailure, DegenerateInstance, NumericalFailure
from .geometry import DiscreteMeasure

DENSE_LIMIT = 60_000          # max ns*nk for the single dense LP
CACHE_LIMIT = 60_000_000      # max ns*nk for caching the distance matrix
LP_TOL = 1e-10
PRICE_TOL = 1e-10
FLOW_EPS = 1e-15


@dataclass(frozen=True)
class SignedData:
    """Discrete measure with an (already recentered) zero-mean function f."""

    measure: DiscreteMeasure
    f_values: np.ndarray
    balance: float

    @staticmethod
    def from_values(measure: DiscreteMeasure, raw_f) -> "SignedData":
        f = np.asarray(raw_f, dtype=float)
        if f.shape != (len(measure),):
            raise ValueError("f values must align with sample points")
        w = measure.weights
        mean = math.fsum(f * w) / math.fsum(w)
        f = f - mean
        balance = abs(math.fsum(f * w))
        data = SignedData(measure, f, balance)
        data.check_balance()
        return data

    def check_balance(self):
        scale = math.fsum(np.abs(self.f_values) * self.measure.weights)
        if scale > 0 and self.balance > 1e-9 * scale:
            raise CertificateFailure(f"balance {self.balance} exceeds 1e-9 of {scale}")


@dataclass(frozen=True)
class Atoms:
    """Point masses on a subset of the sample points."""

    indices: np.ndarray   # positions in the sample arrays
    points: np.ndarray
    masses: np.ndarray

    def __len__(self):
        return len(self.masses)

    @property
    def total(self) -> float:
        return float(math.fsum(self.masses))


def split_signed(data: SignedData):
    """Jordan split of f*mu into source atoms (f>0) and sink atoms (f<0)."""
    f, w = data.f_values, data.measure.weights
    scale = np.abs(f).max(initial=0.0)
    if scale <= 0 or not np.any(np.abs(f) > 1e-12 * scale):
        raise DegenerateInstance("f vanishes identically after recentering")
    live = np.abs(f) > 1e-14 * scale
    pos = live & (f > 0)
    neg = live & (f < 0)
    if not pos.any() or not neg.any():
        raise DegenerateInstance("f has no sign change after recentering")
    src = Atoms(np.where(pos)[0], data.measure.points[pos], f[pos] * w[pos])
    snk = Atoms(np.where(neg)[0], data.measure.points[neg], -f[neg] * w[neg])
    return src, snk


@dataclass(frozen=True)
class TransportPlan:
    """Optimal flows between source and sink atoms, with LP dual potentials."""

    sources: Atoms
    sinks: Atoms
    flow_src: np.ndarray    # local source positions
    flow_snk: np.ndarray    # local sink positions
    flow_mass: np.ndarray
    cost: float
    dual_source: np.ndarray
    dual_sink: np.ndarray

    def flow_sample_pairs(self):
        """Flow edges as (source sample index, sink sample index, mass)."""
        return (self.sources.indices[self.flow_src],
                self.sinks.indices[self.flow_snk], self.flow_mass)

    def marginal_errors(self):
        ns, nk = len(self.sources), len(self.sinks)
        row = np.zeros(ns)
        col = np.zeros(nk)
        np.add.at(row, self.flow_src, self.flow_mass)
        np.add.at(col, self.flow_snk, self.flow_mass)
        scale = max(self.sources.masses.max(), self.sinks.masses.max())
        return (np.abs(row - self.sources.masses).max() / scale,
                np.abs(col - self.sinks.masses).max() / scale)


def _pair_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)


def _lp(src_m, snk_m, ei, ej, cost_e):
    ns, nk = len(src_m), len(snk_m)
    m = len(ei)
    A = coo_matrix((np.ones(2 * m),
                    (np.concatenate([ei, ns + ej]),
                     np.concatenate([np.arange(m), np.arange(m)]))),
                   shape=(ns + nk, m)).tocsc()
    res = linprog(cost_e, A_eq=A, b_eq=np.concatenate([src_m, snk_m]),
                  bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": LP_TOL,
                           "dual_feasibility_tolerance": LP_TOL})
    if res.status != 0:
        raise NumericalFailure(f"transportation LP failed: {res.message}")
    return res


def _northwest_edges(src_m, snk_m):
    """Feasible spanning chain in index order; keeps restricted LPs feasible."""
    ns, nk = len(src_m), len(snk_m)
    a = src_m.copy()
    b = snk_m.copy()
    ei, ej = [], []
    i = j = 0
    while i < ns and j < nk:
        ei.append(i)
        ej.append(j)
        m = min(a[i], b[j])
        a[i] -= m
        b[j] -= m
        if a[i] <= b[j]:
            i += 1
        else:
            j += 1
    return np.array(ei, dtype=np.int64), np.array(ej, dtype=np.int64)


def _solve_colgen(src: Atoms, snk: Atoms, max_rounds: int = 80, k_init: int = 8):
    ns, nk = len(src), len(snk)
    chunk = max(1, int(4_000_000 // max(nk, 1)))
    cache = _pair_distances(src.points, snk.points) if ns * nk <= CACHE_LIMIT else None

    def dist_block(s, e):
        if cache is not None:
            return cache[s:e]
        return _pair_distances(src.points[s:e], snk.points)

    k = min(k_init, nk)
    ei_parts, ej_parts = [], []
    for s in range(0, ns, chunk):
        D = dist_block(s, min(s + chunk, ns))
        nn = np.argpartition(D, k - 1, axis=1)[:, :k] if k < nk else \
            np.tile(np.arange(nk), (D.shape[0], 1))
        ei_parts.append(np.repeat(np.arange(s, s + D.shape[0]), nn.shape[1]))
        ej_parts.append(nn.ravel())
    nw_i, nw_j = _northwest_edges(src.masses, snk.masses)
    ei = np.concatenate(ei_parts + [nw_i]).astype(np.int64)
    ej = np.concatenate(ej_parts + [nw_j]).astype(np.int64)
    eid = np.unique(ei * nk + ej)
    ei, ej = eid // nk, eid % nk

    res = None
    for _ in range(max_rounds):
        cost_e = np.linalg.norm(src.points[ei] - snk.points[ej], axis=1)
        res = _lp(src.masses, snk.masses, ei, ej, cost_e)
        phi = res.eqlin.marginals[:ns]
        psi = res.eqlin.marginals[ns:]
        worst = -np.inf
        nviol = 0
        row_j = np.zeros(ns, dtype=np.int64)
        row_v = np.full(ns, -np.inf)
        col_v = np.full(nk, -np.inf)
        col_i = np.zeros(nk, dtype=np.int64)
        extra = []
        for s in range(0, ns, chunk):
            V = (phi[s:s + chunk, None] + psi[None, :]) - dist_block(s, min(s + chunk, ns))
            rj = np.argmax(V, axis=1)
            rv = V[np.arange(V.shape[0]), rj]
            row_j[s:s + V.shape[0]] = rj
            row_v[s:s + V.shape[0]] = rv
            cb = np.argmax(V, axis=0)
            cv = V[cb, np.arange(nk)]
            upd = cv > col_v
            col_v[upd] = cv[upd]
            col_i[upd] = cb[upd] + s
            mask = V > PRICE_TOL
            cnt = int(mask.sum())
            nviol += cnt
            if 0 < cnt <= 60_000:
                vi, vj = np.nonzero(mask)
                extra.append((vi + s, vj))
            worst = max(worst, float(rv.max(initial=-np.inf)))
        if worst <= PRICE_TOL:
            return res, ei, ej, cost_e
        add_i = [np.nonzero(row_v > PRICE_TOL)[0]]
        add_j = [row_j[add_i[0]]]
        ci = np.nonzero(col_v > PRICE_TOL)[0]
        add_i.append(col_i[ci])
        add_j.append(ci)
        if nviol <= 300_000:
            add_i += [p[0] for p in extra]
            add_j += [p[1] for p in extra]
        ai = np.concatenate(add_i).astype(np.int64)
        aj = np.concatenate(add_j).astype(np.int64)
        # prune never-used slack columns to keep restricted LPs small
        if len(ei) > 6 * (ns + nk):
            red = cost_e - (phi[ei] + psi[ej])
            keep = (res.x > FLOW_EPS) | (red <= 1e-7 * max(1.0, cost_e.max()))
            ei, ej = ei[keep], ej[keep]
        eid = np.unique(np.concatenate([ei * nk + ej, ai * nk + aj]))
        ei, ej = eid // nk, eid % nk
    raise NumericalFailure("column generation did not certify optimality "
                           f"within {max_rounds} rounds")


def _audit(plan: TransportPlan, flows_x, ei, ej, cost_e):
    cscale = max(1.0, float(cost_e.max(initial=0.0)))
    tight = plan.dual_source[ei] + plan.dual_sink[ej] - cost_e
    active = flows_x > FLOW_EPS
    cs = float(np.abs(tight[active]).max(initial=0.0))
    if cs > 1e-10 * cscale:
        raise NumericalFailure(f"complementary slackness residual {cs} too large")
    rerr, cerr = plan.marginal_errors()
    if max(rerr, cerr) > 1e-10:
        raise NumericalFailure(f"marginal mismatch {max(rerr, cerr)}")
    dual_obj = float(plan.dual_source @ plan.sources.masses
                     + plan.dual_sink @ plan.sinks.masses)
    if abs(dual_obj - plan.cost) > 1e-9 * max(1.0, abs(plan.cost)):
        raise NumericalFailure(f"duality mismatch {dual_obj} vs {plan.cost}")


def _check_dual_feasible(src: Atoms, snk: Atoms, phi, psi):
    nk = len(snk)
    chunk = max(1, int(4_000_000 // max(nk, 1)))
    worst = -np.inf
    for s in range(0, len(src), chunk):
        D = _pair_distances(src.points[s:s + chunk], snk.points)
        V = (phi[s:s + chunk, None] + psi[None, :]) - D
        worst = max(worst, float(V.max(initial=-np.inf)))
    if worst > 1e-9:
        raise NumericalFailure(f"dual infeasibility {worst} on the full pair set")


def solve_transportation(sources: Atoms, sinks: Atoms,
                         pivot_seed: int | None = None) -> TransportPlan:
    """Exact optimal transportation plan between balanced atom sets.

    Optimality is certified by the dual potentials produced alongside;
    audit failure raises NumericalFailure rather than returning a
    suboptimal plan.  pivot_seed permutes the atom order fed to the LP,
    which changes the pivot path but not the optimum.
    """
    if len(sources) == 0 or len(sinks) == 0:
        raise DegenerateInstance("empty source or sink set")
    perm_s = perm_k = None
    if pivot_seed is not None:
        rng = np.random.default_rng(pivot_seed)
        perm_s = rng.permutation(len(sources))
        perm_k = rng.permutation(len(sinks))
        sources = Atoms(sources.indices[perm_s], sources.points[perm_s],
                        sources.masses[perm_s])
        sinks = Atoms(sinks.indices[perm_k], sinks.points[perm_k],
                      sinks.masses[perm_k])
    ns, nk = len(sources), len(sinks)
    if ns * nk <= DENSE_LIMIT:
        ei = np.repeat(np.arange(ns, dtype=np.int64), nk)
        ej = np.tile(np.arange(nk, dtype=np.int64), ns)
        cost_e = np.linalg.norm(sources.points[ei] - sinks.points[ej], axis=1)
        res = _lp(sources.masses, sinks.masses, ei, ej, cost_e)
    else:
        res, ei, ej, cost_e = _solve_colgen(sources, sinks)
    phi = res.eqlin.marginals[:ns]
    psi = res.eqlin.marginals[ns:]
    active = res.x > FLOW_EPS
    plan = TransportPlan(sources, sinks,
                         flow_src=ei[active], flow_snk=ej[active],
                         flow_mass=res.x[active],
                         cost=float(res.fun),
                         dual_source=np.array(phi), dual_sink=np.array(psi))
    _audit(plan, res.x, ei, ej, cost_e)
    if ns * nk <= DENSE_LIMIT:
        _check_dual_feasible(sources, sinks, phi, psi)
    # column generation already certified dual feasibility on all pairs
    return plan


@dataclass(frozen=True)
class LipschitzPotential:
    """1-Lipschitz potential on the sample points with its extension rule.

    values holds u at every sample; the extension beyond samples is
    u(x) = min_j (gen_values[j] + |x - gen_points[j]|), the minimal
    McShane extension from the sink-support generators.
    """

    values: np.ndarray
    generator_points: np.ndarray
    generator_values: np.ndarray
    gap: float
    cost: float
    pairing: float
    flow_edges: tuple = field(default=None, repr=False)  # (src idx, snk idx, mass)


def eval_potential(potential: LipschitzPotential, x) -> float | np.ndarray:
    """Minimal McShane extension u(x) = min_j (u_j + |x - x_j|)."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    vals = np.min(potential.generator_values[None, :]
                  + np.linalg.norm(pts[:, None, :] - potential.generator_points[None, :, :],
                                   axis=2), axis=1)
    return float(vals[0]) if np.asarray(x).ndim == 1 else vals


def _mcshane_on_points(points, gen_pts, gen_vals, chunk_pairs=4_000_000):
    n = len(points)
    out = np.empty(n)
    step = max(1, int(chunk_pairs // max(len(gen_pts), 1)))
    for s in range(0, n, step):
        D = _pair_distances(points[s:s + step], gen_pts)
        out[s:s + step] = np.min(gen_vals[None, :] + D, axis=1)
    return out


def recover_potential(plan: TransportPlan, data: SignedData) -> LipschitzPotential:
    """Lift the LP sink duals to a 1-Lipschitz potential on all samples.

    The McShane extension from the sink generators reproduces the source
    duals wherever flow is active, so strong duality transfers: the
    certified gap cost - sum(u f w) must stay within 1e-8 of cost, and u
    must be tight along every flow edge.  Violations raise
    CertificateFailure.
    """
    gen_pts = plan.sinks.points
    gen_raw = -plan.dual_sink
    values = _mcshane_on_points(data.measure.points, gen_pts, gen_raw)
    # re-anchor generator values on the extension itself (idempotent) so
    # evaluation at a generator reproduces the stored value exactly
    gen_vals = values[plan.sinks.indices]
    shift = float(gen_vals.min())
    gen_vals = gen_vals - shift
    values = values - shift

    pairing = float(math.fsum(values * data.f_values * data.measure.weights))
    gap = plan.cost - pairing
    cscale = max(abs(plan.cost), 1e-300)
    if not (-1e-9 * cscale <= gap <= 1e-8 * cscale):
        raise CertificateFailure(f"duality gap {gap} outside [0, 1e-8*cost]")

    si, ki, fm = plan.flow_sample_pairs()
    seg = np.linalg.norm(data.measure.points[si] - data.measure.points[ki], axis=1)
    tight = values[si] - values[ki] - seg
    tmax = float(np.abs(tight).max(initial=0.0))
    if tmax > 1e-9 * max(1.0, float(seg.max(initial=0.0))):
        raise CertificateFailure(f"flow edge tightness violated by {tmax}")

    return LipschitzPotential(values=values, generator_points=gen_pts,
                              generator_values=gen_vals, gap=gap,
                              cost=plan.cost, pairing=pairing,
                              flow_edges=(si, ki, fm))


def max_lipschitz_violation(potential: LipschitzPotential,
                            points: np.ndarray) -> float:
    """Max over all sample pairs of u_i - u_j - |x_i - x_j| (should be <= 0)."""
    u = potential.values
    n = len(points)
    worst = -np.inf
    step = max(1, int(4_000_000 // max(n, 1)))
    for s in range(0, n, step):
        D = _pair_distances(points[s:s + step], points)
        V = (u[s:s + step, None] - u[None, :]) - D
        worst = max(worst, float(V.max(initial=-np.inf)))
    return worst


def solve_instance(data: SignedData, pivot_seed: int | None = None):
    """Convenience wrapper: split, solve, recover. Returns (plan, potential)."""
    src, snk = split_signed(data)
    plan = solve_transportation(src, snk, pivot_seed=pivot_seed)
    potential = recover_potential(plan, data)
    return plan, potential
