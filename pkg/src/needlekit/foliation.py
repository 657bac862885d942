"""Transport-ray extraction from an optimal 1-Lipschitz potential.

Tight pairs (u_i - u_j close to |x_i - x_j|) define a directed graph;
strain samples are those with an incoming and an outgoing tight edge that
line up.  Rays are assembled from the flow skeleton of the optimal plan
when one is available (flow edges are tight and lie along the continuum
rays); otherwise anchor directions are recovered from the potential's
extension rule.  Mass bookkeeping is exact: every sample lands in exactly
one ray or in the residual.

A note on tolerances: naive transitive closure over tolerance-tight
collinear pairs percolates sideways (two parallel rays at distance p are
tolerance-collinear at length scale L once p^2 <~ tau*L), which is why
class merging here demands mutual perpendicular distance at the sample
spacing scale instead of raw additivity, and why point-like hubs (many
flow edges into one atom) are split into fixed-aperture direction
clusters.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import DiscreteMeasure, WeightedDomain, diameter
from .transport import LipschitzPotential, eval_potential

HUB_MIN_DEGREE = 32
NEG_INF = float("-inf")


@dataclass(frozen=True)
class TightGraph:
    """Directed tight pairs i -> j with u_i > u_j, u_i - u_j >= d_ij - tau."""

    n: int
    tau: float
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_len: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.edge_src)

    def out_degree(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edge_src, 1)
        return deg

    def in_degree(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edge_dst, 1)
        return deg


def build_tight_graph(potential: LipschitzPotential, measure: DiscreteMeasure,
                      tau: float | None = None,
                      neighbor_radius: float | None = None) -> TightGraph:
    """All ordered tight pairs; optionally restricted to |x_i-x_j| <= radius.

    Default tau = 0.5 * measure.spacing, coupling tightness detection to
    the grid resolution.
    """
    if tau is None:
        tau = 0.5 * measure.spacing
    pts = measure.points
    u = potential.values
    n = len(pts)
    srcs, dsts, lens = [], [], []
    step = max(1, int(4_000_000 // max(n, 1)))
    for s in range(0, n, step):
        D = np.linalg.norm(pts[s:s + step, None, :] - pts[None, :, :], axis=2)
        du = u[s:s + step, None] - u[None, :]
        mask = (du > 0) & (du >= D - tau)
        if neighbor_radius is not None:
            mask &= D <= neighbor_radius
        bi, bj = np.nonzero(mask)
        srcs.append(bi + s)
        dsts.append(bj)
        lens.append(D[bi, bj])
    return TightGraph(n, float(tau),
                      np.concatenate(srcs) if srcs else np.empty(0, dtype=np.int64),
                      np.concatenate(dsts) if dsts else np.empty(0, dtype=np.int64),
                      np.concatenate(lens) if lens else np.empty(0))


def strain_points(graph: TightGraph, points: np.ndarray,
                  max_partners: int = 64) -> np.ndarray:
    """Samples with an in-edge and an out-edge that are collinear within tau.

    Collinearity is the additivity test |x-y| + |y-z| - |x-z| <= tau,
    mirroring the three-point definition of a strain point.
    """
    n = graph.n
    by_dst = np.argsort(graph.edge_dst, kind="stable")
    in_src = graph.edge_src[by_dst]
    in_len = graph.edge_len[by_dst]
    in_grp = np.searchsorted(graph.edge_dst[by_dst], np.arange(n + 1))
    by_src = np.argsort(graph.edge_src, kind="stable")
    out_dst = graph.edge_dst[by_src]
    out_len = graph.edge_len[by_src]
    out_grp = np.searchsorted(graph.edge_src[by_src], np.arange(n + 1))

    strain = []
    for y in range(n):
        ins = in_src[in_grp[y]:in_grp[y + 1]]
        outs = out_dst[out_grp[y]:out_grp[y + 1]]
        if len(ins) == 0 or len(outs) == 0:
            continue
        if len(ins) > max_partners:
            keep = np.argsort(-in_len[in_grp[y]:in_grp[y + 1]], kind="stable")[:max_partners]
            ins = ins[keep]
        if len(outs) > max_partners:
            keep = np.argsort(-out_len[out_grp[y]:out_grp[y + 1]], kind="stable")[:max_partners]
            outs = outs[keep]
        xy = np.linalg.norm(points[ins] - points[y], axis=1)
        yz = np.linalg.norm(points[outs] - points[y], axis=1)
        xz = np.linalg.norm(points[ins][:, None, :] - points[outs][None, :, :], axis=2)
        excess = xy[:, None] + yz[None, :] - xz
        if (excess <= graph.tau).any():
            strain.append(y)
    return np.array(strain, dtype=np.int64)


@dataclass
class TransportRay:
    """Oriented segment {base + t*theta} with u(base + t*theta) = u(base) + t."""

    ray_id: int
    base: np.ndarray
    direction: np.ndarray
    t_min: float
    t_max: float
    members: np.ndarray
    member_t: np.ndarray
    rep_index: int
    t_rep: float
    mass: float
    alpha: float = 0.0
    beta: float = 0.0
    from_hub: bool = False

    @property
    def length(self) -> float:
        return self.t_max - self.t_min

    def point_at(self, t: float) -> np.ndarray:
        return self.base + t * self.direction

    def line_residual(self, points: np.ndarray) -> float:
        """Max perpendicular distance of member samples to the fitted line."""
        rel = points[self.members] - self.base
        par = rel @ self.direction
        perp = rel - par[:, None] * self.direction[None, :]
        return float(np.linalg.norm(perp, axis=1).max(initial=0.0))


@dataclass
class FoliationResult:
    rays: list
    strain: np.ndarray
    residual: np.ndarray
    assignment: np.ndarray        # sample -> ray id, -1 for residual
    ray_masses: np.ndarray
    residual_mass: float
    total_mass: float

    def ledger_error(self) -> float:
        return abs(math.fsum(self.ray_masses) + self.residual_mass - self.total_mass)

    def alpha_beta(self, sample_index: int):
        """(alpha_u, beta_u) for a sample; -inf sentinels off the rays."""
        rid = int(self.assignment[sample_index])
        if rid < 0:
            return NEG_INF, NEG_INF
        ray = self.rays[rid]
        pos = np.nonzero(ray.members == sample_index)[0][0]
        t = ray.member_t[pos]
        ext_down = ray.alpha - (ray.t_rep - ray.t_min)
        ext_up = ray.beta - (ray.t_max - ray.t_rep)
        return float((t - ray.t_min) + ext_down), float((ray.t_max - t) + ext_up)


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller root wins, keeps merge order deterministic
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def _fit_line(pts: np.ndarray):
    """Total-least-squares line: (center, unit direction)."""
    center = pts.mean(axis=0)
    rel = pts - center
    if pts.shape[1] == 1:
        return center, np.array([1.0])
    if len(pts) == 1:
        d = np.zeros(pts.shape[1])
        d[0] = 1.0
        return center, d
    _, _, vt = np.linalg.svd(rel, full_matrices=False)
    d = vt[0]
    nz = np.nonzero(np.abs(d) > 1e-14)[0]
    if len(nz) and d[nz[0]] < 0:
        d = -d
    return center, d


def _orient_by_u(center, direction, pts, u_vals):
    t = (pts - center) @ direction
    if len(t) > 1 and np.dot(t - t.mean(), u_vals - u_vals.mean()) < 0:
        return -direction, -t
    return direction, t


def _exit_length(domain: WeightedDomain, point: np.ndarray, direction: np.ndarray) -> float:
    """Distance from point to the domain boundary along direction."""
    A, b = domain.halfspaces_A, domain.halfspaces_b
    denom = A @ direction
    numer = b - A @ point
    with np.errstate(divide="ignore"):
        limits = np.where(denom > 1e-14, numer / np.maximum(denom, 1e-300), np.inf)
    return float(max(limits.min(initial=np.inf), 0.0))


def ray_bounds(potential: LipschitzPotential, ray: TransportRay,
               domain: WeightedDomain, rep_point=None,
               tau: float | None = None):
    """(alpha_u, beta_u) at the representative point.

    Starts from the member extremes and extends outward along the ray
    direction for as long as the evaluated potential stays tight, by
    bisection to 1e-6 * diam.
    """
    if tau is None:
        tau = 0.5 * max(ray.t_max - ray.t_min, 1e-12)
        tau = min(tau, 0.05 * diameter(domain)) if ray.t_max == ray.t_min else tau
    if rep_point is not None:
        t_rep = float((np.asarray(rep_point, dtype=float) - ray.base) @ ray.direction)
    else:
        t_rep = ray.t_rep
    u_rep = eval_potential(potential, ray.point_at(t_rep))
    tol_len = 1e-6 * diameter(domain)

    def tight_at(t):
        p = ray.point_at(t)
        return abs(eval_potential(potential, p) - (u_rep + (t - t_rep))) <= tau

    def extend(t_edge, sign):
        room = _exit_length(domain, ray.point_at(t_edge), sign * ray.direction)
        if room <= tol_len:
            return 0.0
        if tight_at(t_edge + sign * room):
            return room
        lo, hi = 0.0, room
        while hi - lo > tol_len:
            mid = 0.5 * (lo + hi)
            if tight_at(t_edge + sign * mid):
                lo = mid
            else:
                hi = mid
        return lo

    alpha = (t_rep - ray.t_min) + extend(ray.t_min, -1.0)
    beta = (ray.t_max - t_rep) + extend(ray.t_max, +1.0)
    return float(alpha), float(beta)


# -- ray extraction ---------------------------------------------------


def _direction_wedges(focus, spokes, points, h):
    """Cluster sample indices by direction seen from a focal point.

    Fixed aperture 1.5h at the farthest spoke; farthest-first order so the
    cluster representatives come from the most angularly reliable points.
    """
    dirs = points[spokes] - focus
    dist = np.linalg.norm(dirs, axis=1)
    keep = dist > 1e-12
    spokes, dirs, dist = spokes[keep], dirs[keep], dist[keep]
    if len(spokes) == 0:
        return []
    dirs = dirs / dist[:, None]
    r_max = float(dist.max())
    half_angle = min(0.75 * h / r_max, math.pi / 8)
    cos_thresh = math.cos(half_angle)
    order = np.lexsort((spokes, -dist))  # farthest first, index tie-break
    reps = np.empty((len(spokes), dirs.shape[1]))
    n_reps = 0
    clusters = []
    for k in order:
        if n_reps:
            dots = reps[:n_reps] @ dirs[k]
            hits = np.nonzero(dots >= cos_thresh)[0]
            if len(hits):
                clusters[hits[0]].append(spokes[k])
                continue
        reps[n_reps] = dirs[k]
        n_reps += 1
        clusters.append([spokes[k]])
    return [np.array(c, dtype=np.int64) for c in clusters]


def _focal_split(cls, points, u, h):
    """Split a convergent (cone-like) class into wedges around its u-minimum.

    Fat classes arise when flow bundles share atoms near a common focal
    region; the continuum picture there is a pencil of rays through the
    focus, so members are re-binned by direction around it.
    """
    order = np.lexsort((cls, u[cls]))
    focus_idx = cls[order[0]]
    focus = points[focus_idx]
    spokes = cls[cls != focus_idx]
    wedges = _direction_wedges(focus, spokes, points, h)
    return wedges


def _skeleton_classes(flow_edges, points, u, h, hub_min=HUB_MIN_DEGREE):
    """Group flow edges into collinear classes; returns (classes, hub_atoms).

    Edges sharing an endpoint merge only when the middle of the three
    involved points stays within 0.75*h of the chord through the outer
    two, which blocks sideways tolerance percolation.
    """
    si, ki, _ = flow_edges
    deg = {}
    for a in np.concatenate([si, ki]):
        deg[a] = deg.get(a, 0) + 1
    hubs = sorted([a for a, d in deg.items() if d >= hub_min],
                  key=lambda a: (-deg[a], a))
    hub_set = set(hubs)

    wedge_classes = []
    claimed = set()
    for hb in hubs:
        mask = ((si == hb) | (ki == hb))
        partners = np.where(si[mask] == hb, ki[mask], si[mask])
        partners = np.unique(partners)
        partners = np.array([p for p in partners
                             if p not in hub_set and p not in claimed], dtype=np.int64)
        for cluster in _direction_wedges(points[hb], partners, points, h):
            wedge_classes.append(cluster)
            claimed.update(cluster.tolist())

    keep = np.array([(a not in hub_set and b not in hub_set
                      and a not in claimed and b not in claimed)
                     for a, b in zip(si, ki)], dtype=bool)
    esi, eki = si[keep], ki[keep]
    m = len(esi)
    uf = _UnionFind(m)
    incident = {}
    for e in range(m):
        incident.setdefault(esi[e], []).append(e)
        incident.setdefault(eki[e], []).append(e)
    delta = 0.75 * h
    for node, edges in sorted(incident.items()):
        for ai in range(len(edges)):
            for bi in range(ai + 1, len(edges)):
                e1, e2 = edges[ai], edges[bi]
                trio = {esi[e1], eki[e1], esi[e2], eki[e2]}
                trio = sorted(trio, key=lambda q: -u[q])
                if len(trio) < 3:
                    uf.union(e1, e2)
                    continue
                p, q, r = points[trio[0]], points[trio[1]], points[trio[2]]
                chord = r - p
                L = np.linalg.norm(chord)
                if L < 1e-12:
                    continue
                chord = chord / L
                perp = (q - p) - ((q - p) @ chord) * chord
                if np.linalg.norm(perp) <= delta:
                    uf.union(e1, e2)
    groups = {}
    for e in range(m):
        groups.setdefault(uf.find(e), []).append(e)
    classes = []
    for root in sorted(groups):
        nodes = set()
        for e in groups[root]:
            nodes.add(esi[e])
            nodes.add(eki[e])
        classes.append(np.array(sorted(nodes), dtype=np.int64))
    return wedge_classes, classes, hub_set


def _anchor_direction(idx, potential, points, u, graph, reach_ts=(0.25, 0.5, 0.75, 1.0)):
    """Ray direction at a strain sample from the potential's extension rule.

    Candidate directions come from outgoing tight partners; the winner is
    the one staying tight (via eval_potential) farthest along the line.
    """
    outs = graph.edge_dst[graph.edge_src == idx]
    ins = graph.edge_src[graph.edge_dst == idx]
    cands = np.unique(np.concatenate([outs, ins]))
    if len(cands) == 0:
        return None
    vecs = points[cands] - points[idx]
    lens = np.linalg.norm(vecs, axis=1)
    ok = lens > 1e-12
    cands, vecs, lens = cands[ok], vecs[ok], lens[ok]
    if len(cands) == 0:
        return None
    if len(cands) > 64:
        keep = np.argsort(-lens, kind="stable")[:64]
        cands, vecs, lens = cands[keep], vecs[keep], lens[keep]
    dirs = vecs / lens[:, None]
    sign = np.where(np.isin(cands, outs), -1.0, 1.0)  # theta points uphill
    dirs = dirs * -sign[:, None]
    best = None
    best_reach = -1.0
    for dvec, L, c in sorted(zip(dirs, lens, cands), key=lambda z: (-z[1], z[2])):
        reach = 0.0
        for frac in reach_ts:
            for sgn in (+1.0, -1.0):
                t = sgn * frac * L
                p = points[idx] + t * dvec
                if abs(eval_potential(potential, p) - (u[idx] + t)) <= 1e-9 + 1e-9 * abs(t):
                    reach += frac
        if reach > best_reach + 1e-12:
            best_reach = reach
            best = dvec
    return best


def _peel_classes(pending, potential, points, u, graph, h, tau):
    """Greedy maximal-support line peeling for strain samples without flow."""
    pending = sorted(pending)
    if not pending:
        return []
    unassigned = set(pending)
    anchors = {}
    for i in pending:
        d = _anchor_direction(i, potential, points, u, graph)
        if d is not None:
            anchors[i] = d

    def support(i):
        d = anchors[i]
        others = np.array(sorted(unassigned), dtype=np.int64)
        rel = points[others] - points[i]
        t = rel @ d
        perp = np.linalg.norm(rel - t[:, None] * d[None, :], axis=1)
        cons = np.abs(u[others] - (u[i] + t))
        sel = (perp <= 0.5 * h) & (cons <= tau)
        return others[sel]

    heap = [(-len(pending), i) for i in sorted(anchors)]
    heapq.heapify(heap)
    classes = []
    stale = {}
    while heap:
        negs, i = heapq.heappop(heap)
        if i not in unassigned:
            continue
        sup = support(i)
        if heap and -heap[0][0] > len(sup):
            heapq.heappush(heap, (-len(sup), i))
            continue
        if len(sup) >= 2:
            classes.append(sup)
            unassigned.difference_update(sup.tolist())
    return classes


def extract_rays(graph: TightGraph, strain_set: np.ndarray,
                 potential: LipschitzPotential, measure: DiscreteMeasure,
                 hub_min: int = HUB_MIN_DEGREE) -> FoliationResult:
    """Partition sample mass into transport rays plus a residual.

    Classes come from the optimal plan's flow skeleton when the potential
    carries one (point-like hubs are split into fixed-aperture wedges);
    strain samples without flow support are grouped by greedy line
    peeling.  A final sweep attaches every remaining sample to the
    nearest consistent ray line; classes of size one land in the
    residual.  The mass ledger is exact by construction.
    """
    points = measure.points
    u = potential.values
    h = measure.spacing
    tau = graph.tau
    n = len(points)
    strain_mask = np.zeros(n, dtype=bool)
    strain_mask[strain_set] = True

    wedge_classes, flow_classes, _hubs = ([], [], set())
    if potential.flow_edges is not None:
        si, ki, fm = potential.flow_edges
        live = fm > 1e-12 * fm.max(initial=0.0)
        wedge_classes, flow_classes, _hubs = _skeleton_classes(
            (si[live], ki[live], fm[live]), points, u, h, hub_min)

    claimed = np.zeros(n, dtype=bool)
    proto = []
    for cls in wedge_classes:
        cls = cls[~claimed[cls]]
        if len(cls) >= 2:
            proto.append((cls, True))
            claimed[cls] = True
    for cls in flow_classes:
        cls = cls[~claimed[cls]]
        if len(cls) >= 2:
            proto.append((cls, False))
            claimed[cls] = True

    leftovers = [i for i in strain_set if not claimed[i]]
    for cls in _peel_classes(leftovers, potential, points, u, graph, h, tau):
        cls = cls[~claimed[cls]]
        if len(cls) >= 2:
            proto.append((cls, False))
            claimed[cls] = True

    # fit lines
    fitted = []
    for cls, from_hub in proto:
        center, direction = _fit_line(points[cls])
        direction, t = _orient_by_u(center, direction, points[cls], u[cls])
        fitted.append({"members": cls, "center": center, "dir": direction,
                       "from_hub": from_hub})

    # merge collinear fragments (never across hub wedges)
    if len(fitted) > 1:
        uf = _UnionFind(len(fitted))
        for a in range(len(fitted)):
            for b in range(a + 1, len(fitted)):
                fa, fb = fitted[a], fitted[b]
                if fa["from_hub"] or fb["from_hub"]:
                    continue
                if abs(float(fa["dir"] @ fb["dir"])) < math.cos(0.35):
                    continue
                rel = fb["center"] - fa["center"]
                perp_ab = np.linalg.norm(rel - (rel @ fa["dir"]) * fa["dir"])
                perp_ba = np.linalg.norm(rel - (rel @ fb["dir"]) * fb["dir"])
                if max(perp_ab, perp_ba) > 0.75 * h:
                    continue
                # u-offset consistency and t-interval adjacency on fa's line
                ta = (points[fa["members"]] - fa["center"]) @ fa["dir"]
                tb = (points[fb["members"]] - fa["center"]) @ fa["dir"]
                u0_a = float(np.median(u[fa["members"]] - ta))
                u0_b = float(np.median(u[fb["members"]] - tb))
                if abs(u0_b - u0_a) > max(tau, 2 * h):
                    continue
                gap = max(tb.min() - ta.max(), ta.min() - tb.max())
                if gap > 3 * h:
                    continue
                uf.union(a, b)
        merged = {}
        for k in range(len(fitted)):
            merged.setdefault(uf.find(k), []).append(k)
        out = []
        for root in sorted(merged):
            parts = merged[root]
            if len(parts) == 1:
                out.append(fitted[parts[0]])
            else:
                cls = np.unique(np.concatenate([fitted[p]["members"] for p in parts]))
                center, direction = _fit_line(points[cls])
                direction, _ = _orient_by_u(center, direction, points[cls], u[cls])
                out.append({"members": cls, "center": center, "dir": direction,
                            "from_hub": False})
        fitted = out

    # attach every unassigned sample to the best consistent line
    assigned = np.full(n, -1, dtype=np.int64)
    for rid, f in enumerate(fitted):
        assigned[f["members"]] = rid
    free = np.nonzero(assigned < 0)[0]
    if len(free) and fitted:
        best_perp = np.full(len(free), np.inf)
        best_rid = np.full(len(free), -1, dtype=np.int64)
        fp = points[free]
        fu = u[free]
        for rid, f in enumerate(fitted):
            mem = f["members"]
            t_mem = (points[mem] - f["center"]) @ f["dir"]
            u0 = float(np.median(u[mem] - t_mem))
            lo, hi = t_mem.min(), t_mem.max()
            rel = fp - f["center"]
            t = rel @ f["dir"]
            perp = np.linalg.norm(rel - t[:, None] * f["dir"][None, :], axis=1)
            cons = np.abs(fu - (u0 + t))
            ok = (perp <= 0.5 * h) & (cons <= tau) & \
                 (t >= lo - 1.5 * h) & (t <= hi + 1.5 * h) & (perp < best_perp)
            best_perp[ok] = perp[ok]
            best_rid[ok] = rid
        hit = best_rid >= 0
        assigned[free[hit]] = best_rid[hit]

    # build rays
    rays = []
    weights = measure.weights
    for rid, f in enumerate(fitted):
        members = np.nonzero(assigned == rid)[0]
        center, direction = f["center"], f["dir"]
        t = (points[members] - center) @ direction
        order = np.argsort(t, kind="stable")
        members, t = members[order], t[order]
        rep_pos = (len(members) - 1) // 2
        ray = TransportRay(
            ray_id=rid, base=center, direction=direction,
            t_min=float(t.min()), t_max=float(t.max()),
            members=members, member_t=t,
            rep_index=int(members[rep_pos]), t_rep=float(t[rep_pos]),
            mass=float(math.fsum(weights[members])),
            from_hub=f["from_hub"])
        ray.alpha = ray.t_rep - ray.t_min
        ray.beta = ray.t_max - ray.t_rep
        rays.append(ray)

    residual = np.nonzero(assigned < 0)[0]
    ray_masses = np.array([r.mass for r in rays]) if rays else np.empty(0)
    return FoliationResult(
        rays=rays, strain=np.asarray(strain_set, dtype=np.int64),
        residual=residual, assignment=assigned,
        ray_masses=ray_masses,
        residual_mass=float(math.fsum(weights[residual])),
        total_mass=measure.total_mass)


# -- six-point rigidity check ----------------------------------------


def feldman_mccann_check(x_pts, y_pts, sigma: float, tol: float = 1e-9) -> dict:
    """Admissibility and displacement ratio for the six-point configuration.

    Admissible iff d(x_i,x_j) = d(y_i,y_j) = sigma|i-j| <= d(x_i,y_j) for
    all i,j in {0,1,2}, within tol.  ratio = max(d(x0,y0), d(x2,y2)) /
    d(x1,y1), with 0/0 read as 1 and k/0 as +inf.
    """
    X = np.asarray(x_pts, dtype=float)
    Y = np.asarray(y_pts, dtype=float)
    admissible = True
    for i in range(3):
        for j in range(3):
            target = sigma * abs(i - j)
            if abs(np.linalg.norm(X[i] - X[j]) - target) > tol:
                admissible = False
            if abs(np.linalg.norm(Y[i] - Y[j]) - target) > tol:
                admissible = False
            if np.linalg.norm(X[i] - Y[j]) < target - tol:
                admissible = False
    num = max(np.linalg.norm(X[0] - Y[0]), np.linalg.norm(X[2] - Y[2]))
    den = np.linalg.norm(X[1] - Y[1])
    if den == 0.0:
        ratio = 1.0 if num <= tol else float("inf")
    else:
        ratio = float(num / den)
    return {"admissible": admissible, "ratio": ratio}


def feldman_mccann_sweep(n_trials: int, dim: int = 2, seed: int = 0) -> dict:
    """Rejection-sampled admissible configurations; reports the max ratio."""
    rng = np.random.default_rng(seed)
    n_adm = 0
    max_ratio = 0.0
    batch = 4096
    done = 0
    while done < n_trials:
        b = min(batch, n_trials - done)
        done += b
        sigma = rng.uniform(0.1, 1.0, size=b)
        e1 = rng.normal(size=(b, dim))
        e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
        e2 = rng.normal(size=(b, dim))
        e2 /= np.linalg.norm(e2, axis=1, keepdims=True)
        base = rng.normal(size=(b, dim))
        off = rng.normal(size=(b, dim)) * (sigma * rng.uniform(0.05, 3.0, size=b))[:, None]
        X = base[:, None, :] + np.arange(3)[None, :, None] * (sigma[:, None] * e1)[:, None, :]
        Yb = base + off
        Y = Yb[:, None, :] + np.arange(3)[None, :, None] * (sigma[:, None] * e2)[:, None, :]
        cross = np.linalg.norm(X[:, :, None, :] - Y[:, None, :, :], axis=3)
        target = sigma[:, None, None] * np.abs(np.arange(3)[None, :, None]
                                               - np.arange(3)[None, None, :])
        adm = (cross >= target - 1e-9).all(axis=(1, 2))
        if not adm.any():
            continue
        n_adm += int(adm.sum())
        num = np.maximum(cross[adm, 0, 0], cross[adm, 2, 2])
        den = cross[adm, 1, 1]
        ratios = np.where(den > 0, num / np.maximum(den, 1e-300),
                          np.where(num <= 1e-9, 1.0, np.inf))
        max_ratio = max(max_ratio, float(ratios.max(initial=0.0)))
    return {"trials": n_trials, "admissible": n_adm, "max_ratio": max_ratio}
