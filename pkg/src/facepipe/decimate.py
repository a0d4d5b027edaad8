"""Expression-averaged, symmetry-preserving quadric edge collapse.

Vertex quadrics are accumulated from triangle support planes and averaged
over randomly sampled expressions, so collapse costs reflect error across the
blendshape range rather than only the mean shape.  Collapses use subset
placement (the kept vertex keeps its position), which carries identity and
blendshape basis rows over unchanged, and every off-midline collapse executes
together with its mirror image through the symmetry map.  Midline vertices
(self-paired) collapse unmirrored.  Eyeball sub-meshes never participate.

Priority is total pair cost divided by the number of vertices removed, popped
greedily from a lazy heap.
"""

import heapq
from dataclasses import dataclass, field

import numpy as np

from .facemodel import FaceModel, FaceParams, closest_point_barycentric, evaluate_mesh
from .facemodel import BLENDSHAPE_COUNT, EyeballSpec

BOUNDARY_WEIGHT = 10.0


# ---------------------------------------------------------------------------
# Quadrics


def quadric_eval(q, p):
    """Error p_hom^T Q p_hom of a position against a 4x4 quadric."""
    hom = np.append(np.asarray(p, dtype=np.float64), 1.0)
    return float(hom @ q @ hom)


def mesh_quadrics(vertices, triangles, boundary_weight=BOUNDARY_WEIGHT):
    """Classical per-vertex plane quadrics, with boundary-preserving planes."""
    verts = np.asarray(vertices, dtype=np.float64)
    tris = np.asarray(triangles, dtype=np.int64)
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    normal = np.cross(b - a, c - a)
    norm = np.linalg.norm(normal, axis=1)
    ok = norm > 1e-12
    normal = np.where(ok[:, None], normal / np.maximum(norm, 1e-12)[:, None], 0.0)
    d = -np.sum(normal * a, axis=1)
    plane = np.concatenate([normal, d[:, None]], axis=1)      # (T, 4)
    k_tri = plane[:, :, None] * plane[:, None, :]
    k_tri[~ok] = 0.0

    quadrics = np.zeros((len(verts), 4, 4))
    for col in range(3):
        np.add.at(quadrics, tris[:, col], k_tri)

    if boundary_weight > 0:
        _add_boundary_quadrics(quadrics, verts, tris, normal, boundary_weight)
    return quadrics


def _add_boundary_quadrics(quadrics, verts, tris, tri_normals, weight):
    edges = {}
    for t, tri in enumerate(tris):
        for i in range(3):
            u, v = tri[i], tri[(i + 1) % 3]
            key = (min(u, v), max(u, v))
            edges.setdefault(key, []).append(t)
    for (u, v), owners in edges.items():
        if len(owners) != 1:
            continue
        edge = verts[v] - verts[u]
        n = np.cross(edge, tri_normals[owners[0]])
        ln = np.linalg.norm(n)
        if ln < 1e-12:
            continue
        n = n / ln
        plane = np.append(n, -np.dot(n, verts[u]))
        k = weight * np.dot(edge, edge) * np.outer(plane, plane)
        quadrics[u] += k
        quadrics[v] += k


def expression_quadrics(model, n_expr=50, seed=0, expressions=None,
                        boundary_weight=BOUNDARY_WEIGHT):
    """Per-vertex quadrics averaged over sampled expressions.

    Expressions are beta drawn uniformly from [0, 1] per blendshape (alpha
    zero, neutral pose); pass `expressions` (n, 55) to override sampling.
    """
    if expressions is None:
        if n_expr < 1:
            raise ValueError("need at least one expression")
        rng = np.random.default_rng(seed)
        expressions = rng.uniform(0.0, 1.0, size=(n_expr, BLENDSHAPE_COUNT))
    expressions = np.asarray(expressions, dtype=np.float64)

    total = np.zeros((model.vertex_count, 4, 4))
    for beta in expressions:
        params = FaceParams.neutral()
        verts = evaluate_mesh(model, _with_beta(params, beta))
        total += mesh_quadrics(verts, model.triangles, boundary_weight)
    return total / len(expressions)


def _with_beta(params, beta):
    from dataclasses import replace
    return replace(params, beta=np.asarray(beta, dtype=np.float64))


# ---------------------------------------------------------------------------
# Plan container


@dataclass
class DecimationPlan:
    collapses: list = field(default_factory=list)   # (kept, removed, cost/vertex)
    vertex_remap: np.ndarray = None                 # old -> new kept index
    achieved_vertices: int = 0
    achieved_triangles: int = 0
    target_vertices: int = 0
    reached_target: bool = False

    def to_dict(self):
        return {
            "collapses": [[int(k), int(r)] for k, r, _ in self.collapses],
            "costs_per_vertex": [float(c) for _, _, c in self.collapses],
            "vertex_remap": self.vertex_remap.tolist(),
            "achieved_vertices": int(self.achieved_vertices),
            "achieved_triangles": int(self.achieved_triangles),
            "target_vertices": int(self.target_vertices),
            "reached_target": bool(self.reached_target),
        }


# ---------------------------------------------------------------------------
# Symmetric collapse


class _Mesh:
    """Editable triangle soup with adjacency, undo log, and quadrics."""

    def __init__(self, positions, triangles, quadrics, protected):
        self.pos = np.asarray(positions, dtype=np.float64)
        self.tris = np.asarray(triangles, dtype=np.int64).copy()
        self.alive_t = np.ones(len(self.tris), dtype=bool)
        self.alive_v = np.ones(len(self.pos), dtype=bool)
        self.quadrics = np.asarray(quadrics, dtype=np.float64).copy()
        self.protected = protected
        self.vert_tris = [set() for _ in range(len(self.pos))]
        for t, tri in enumerate(self.tris):
            for v in tri:
                self.vert_tris[v].add(t)
        self.version = np.zeros(len(self.pos), dtype=np.int64)
        self.rep = np.arange(len(self.pos))

    def find(self, v):
        while self.rep[v] != v:
            self.rep[v] = self.rep[self.rep[v]]
            v = self.rep[v]
        return v

    def neighbors(self, v):
        out = set()
        for t in self.vert_tris[v]:
            out.update(self.tris[t])
        out.discard(v)
        return out

    def edge_exists(self, u, v):
        return any(v in self.tris[t] for t in self.vert_tris[u])

    def collapse_valid(self, keep, remove):
        if keep == remove:
            return False
        if not (self.alive_v[keep] and self.alive_v[remove]):
            return False
        if self.protected[keep] or self.protected[remove]:
            return False
        if not self.edge_exists(keep, remove):
            return False
        shared_tris = self.vert_tris[keep] & self.vert_tris[remove]
        opposite = set()
        for t in shared_tris:
            opposite.update(self.tris[t])
        opposite -= {keep, remove}
        common = self.neighbors(keep) & self.neighbors(remove)
        if common != opposite:
            return False                          # link condition
        # triangle quality: rewriting remove -> keep must not flip or squash
        kp = self.pos[keep]
        for t in self.vert_tris[remove] - shared_tris:
            tri = self.tris[t]
            old = self.pos[tri]
            new = np.where((tri == remove)[:, None], kp, old)
            n_old = np.cross(old[1] - old[0], old[2] - old[0])
            n_new = np.cross(new[1] - new[0], new[2] - new[0])
            area_old = np.linalg.norm(n_old)
            area_new = np.linalg.norm(n_new)
            if area_new < 1e-14 or area_old < 1e-14:
                return False
            if np.dot(n_old, n_new) <= 0:
                return False
        return True

    def collapse(self, keep, remove):
        """Execute (keep <- remove); returns an undo log."""
        log = {"keep": keep, "remove": remove, "dead_tris": [],
               "rewrites": [], "quadric": self.quadrics[keep].copy()}
        for t in list(self.vert_tris[remove]):
            tri = self.tris[t]
            if keep in tri:
                self.alive_t[t] = False
                for v in tri:
                    self.vert_tris[v].discard(t)
                log["dead_tris"].append((t, tri.copy()))
            else:
                log["rewrites"].append((t, tri.copy()))
                self.tris[t] = np.where(tri == remove, keep, tri)
                self.vert_tris[remove].discard(t)
                self.vert_tris[keep].add(t)
        self.quadrics[keep] = self.quadrics[keep] + self.quadrics[remove]
        self.alive_v[remove] = False
        self.rep[remove] = keep
        self.version[keep] += 1
        self.version[remove] += 1
        return log

    def undo(self, log):
        keep, remove = log["keep"], log["remove"]
        self.alive_v[remove] = True
        self.rep[remove] = remove
        self.quadrics[keep] = log["quadric"]
        for t, tri in log["rewrites"]:
            self.vert_tris[keep].discard(t)
            self.tris[t] = tri
            self.vert_tris[remove].add(t)
        for t, tri in log["dead_tris"]:
            self.alive_t[t] = True
            self.tris[t] = tri
            for v in tri:
                self.vert_tris[v].add(t)
        self.version[keep] += 1
        self.version[remove] += 1

    def collapse_cost(self, keep, remove):
        q = self.quadrics[keep] + self.quadrics[remove]
        return quadric_eval(q, self.pos[keep])


def _pair_plan(mesh, sym, keep, remove):
    """The mirror companion of a collapse, or None (midline single / invalid)."""
    mk, mr = sym[keep], sym[remove]
    if mr == remove:
        if mk != keep:
            return "reject"                 # midline vertex into a side vertex
        return None                         # pure midline collapse
    if mr == keep or mk == remove:
        return "reject"                     # edge crossing its own mirror
    return (mk, mr)


def _candidate_cost(mesh, sym, keep, remove):
    """(cost per removed vertex, removed count) or None when rejected."""
    mirror = _pair_plan(mesh, sym, keep, remove)
    if mirror == "reject":
        return None
    base = mesh.collapse_cost(keep, remove)
    if mirror is None:
        return base, 1
    return 0.5 * (base + mesh.collapse_cost(*mirror)), 2


def decimate_symmetric(model, quadrics, target_vertices, audit=False):
    """Collapse the face part of the model down to `target_vertices` total.

    Returns (decimated FaceModel, DecimationPlan).  The plan reports the
    achieved counts; `reached_target` is False when manifoldness (or pair
    parity) stops the loop early.  With audit=True every executed step is
    checked to be the cheapest valid candidate (slow; tests only).
    """
    nv = model.vertex_count
    if not (0 < target_vertices < nv):
        raise ValueError("target must be positive and below the current count")

    protected = np.zeros(nv, dtype=bool)
    for eye in (model.eyeball_right, model.eyeball_left):
        protected[eye.start:eye.stop] = True

    sym = model.symmetry_map.astype(np.int64)
    mesh = _Mesh(model.vertices_mean.astype(np.float64),
                 model.triangles.astype(np.int64), quadrics, protected)

    heap = []
    counter = 0

    def push_edge(u, v):
        nonlocal counter
        for keep, remove in ((u, v), (v, u)):
            if mesh.protected[keep] or mesh.protected[remove]:
                continue
            got = _candidate_cost(mesh, sym, keep, remove)
            if got is None:
                continue
            cost, removed = got
            counter += 1
            stamp = (int(mesh.version[keep]), int(mesh.version[remove]))
            heapq.heappush(heap, (cost, counter, keep, remove, removed, stamp))

    def push_all_edges():
        seen = set()
        for t in np.where(mesh.alive_t)[0]:
            tri = mesh.tris[t]
            for i in range(3):
                u, v = int(tri[i]), int(tri[(i + 1) % 3])
                key = (min(u, v), max(u, v))
                if key not in seen:
                    seen.add(key)
                    push_edge(u, v)

    push_all_edges()
    plan = DecimationPlan(target_vertices=int(target_vertices))
    remaining = int(mesh.alive_v.sum())
    rescanned = False

    while remaining > target_vertices:
        if not heap:
            # candidates dropped as invalid may have become valid again
            if rescanned:
                break
            push_all_edges()
            rescanned = True
            if not heap:
                break
            continue
        cost, _, keep, remove, removed, stamp = heapq.heappop(heap)
        if stamp != (int(mesh.version[keep]), int(mesh.version[remove])):
            got = _candidate_cost(mesh, sym, keep, remove) \
                if mesh.alive_v[keep] and mesh.alive_v[remove] else None
            if got is not None and mesh.edge_exists(keep, remove):
                ncost, nremoved = got
                counter += 1
                heapq.heappush(heap, (ncost, counter, keep, remove, nremoved,
                                      (int(mesh.version[keep]),
                                       int(mesh.version[remove]))))
            continue
        if removed > remaining - target_vertices:
            continue                     # parity: hold out for a midline edge
        if not mesh.collapse_valid(keep, remove):
            continue
        mirror = _pair_plan(mesh, sym, keep, remove)
        if mirror == "reject":
            continue

        if audit:
            _audit_minimality(mesh, sym, cost, remaining - target_vertices)

        log = mesh.collapse(keep, remove)
        if mirror is not None:
            if not mesh.collapse_valid(*mirror):
                mesh.undo(log)
                continue
            mesh.collapse(*mirror)
            plan.collapses.append((keep, remove, cost))
            plan.collapses.append((mirror[0], mirror[1], cost))
            remaining -= 2
        else:
            plan.collapses.append((keep, remove, cost))
            remaining -= 1
        rescanned = False
        for v in list(mesh.neighbors(keep)):
            push_edge(keep, v)
        if mirror is not None:
            for v in list(mesh.neighbors(mirror[0])):
                push_edge(mirror[0], v)

    plan.reached_target = remaining == target_vertices
    new_model = _rebuild(model, mesh)
    plan.achieved_vertices = new_model.vertex_count
    plan.achieved_triangles = new_model.triangle_count
    plan.vertex_remap = _final_remap(mesh)
    return new_model, plan


def _audit_minimality(mesh, sym, popped_cost, budget):
    best = np.inf
    seen = set()
    for u in np.where(mesh.alive_v)[0]:
        for v in mesh.neighbors(int(u)):
            for keep, remove in ((int(u), int(v)), (int(v), int(u))):
                if (keep, remove) in seen:
                    continue
                seen.add((keep, remove))
                if not mesh.collapse_valid(keep, remove):
                    continue
                got = _candidate_cost(mesh, sym, keep, remove)
                if got is None or got[1] > budget:
                    continue
                best = min(best, got[0])
    if popped_cost > best + 1e-9 * max(1.0, abs(best)):
        raise AssertionError("executed collapse cost %.3e exceeds best valid %.3e"
                             % (popped_cost, best))


def _final_remap(mesh):
    kept = np.where(mesh.alive_v)[0]
    new_index = np.full(len(mesh.alive_v), -1, dtype=np.int64)
    new_index[kept] = np.arange(len(kept))
    remap = np.array([new_index[mesh.find(v)] for v in range(len(mesh.alive_v))])
    return remap


def _rebuild(model, mesh):
    kept = np.where(mesh.alive_v)[0]
    new_index = np.full(model.vertex_count, -1, dtype=np.int64)
    new_index[kept] = np.arange(len(kept))

    tris = new_index[mesh.tris[mesh.alive_t]]
    sym_new = new_index[model.symmetry_map[kept]]

    def shift_eye(eye):
        return EyeballSpec(int(new_index[eye.start]),
                           int(new_index[eye.stop - 1]) + 1,
                           pivot=eye.pivot.copy())

    new_mean = model.vertices_mean[kept]
    new_tris = tris.astype(np.uint32)

    # re-embed landmarks at their original mean-shape positions
    old_corners = model.triangles[model.landmark_triangles].astype(np.int64)
    old_pos = np.einsum("kc,kcd->kd", model.landmark_bary.astype(np.float64),
                        model.vertices_mean.astype(np.float64)[old_corners])
    eye_old = np.zeros(len(old_corners), dtype=bool)
    for eye in (model.eyeball_right, model.eyeball_left):
        inside = (old_corners >= eye.start) & (old_corners < eye.stop)
        eye_old |= inside.all(axis=1)

    eye_tri_mask = np.zeros(len(tris), dtype=bool)
    for eye in (shift_eye(model.eyeball_right), shift_eye(model.eyeball_left)):
        inside = (tris >= eye.start) & (tris < eye.stop)
        eye_tri_mask |= inside.all(axis=1)

    lm_tri = np.zeros(len(old_corners), dtype=np.int64)
    lm_bary = np.zeros((len(old_corners), 3))
    for mask, tri_pool in ((~eye_old, np.where(~eye_tri_mask)[0]),
                           (eye_old, np.where(eye_tri_mask)[0])):
        if not mask.any():
            continue
        sub_tri, sub_bary = closest_point_barycentric(
            old_pos[mask], new_mean.astype(np.float64), tris[tri_pool])
        lm_tri[mask] = tri_pool[sub_tri]
        lm_bary[mask] = sub_bary

    return FaceModel(
        vertices_mean=new_mean.astype(np.float32),
        triangles=new_tris,
        identity_basis=model.identity_basis[:, kept].astype(np.float32),
        blendshape_basis=model.blendshape_basis[:, kept].astype(np.float32),
        blendshape_names=model.blendshape_names,
        eyeball_right=shift_eye(model.eyeball_right),
        eyeball_left=shift_eye(model.eyeball_left),
        iris_ring_right=new_index[model.iris_ring_right],
        iris_ring_left=new_index[model.iris_ring_left],
        symmetry_map=sym_new,
        landmark_triangles=lm_tri,
        landmark_bary=lm_bary.astype(np.float32),
    ).validate()


# ---------------------------------------------------------------------------
# Plan-quality re-evaluation


def reevaluate_plan_error(model, plan, n_expr=50, seed=1234, expressions=None):
    """Mean (over fresh expressions) total quadric error of a decimation plan.

    For each expression, each removed vertex is charged the quadric error of
    its final representative's position under that expression, using quadrics
    recomputed on the original mesh.
    """
    if expressions is None:
        rng = np.random.default_rng(seed)
        expressions = rng.uniform(0.0, 1.0, size=(n_expr, BLENDSHAPE_COUNT))
    expressions = np.asarray(expressions, dtype=np.float64)

    removed = [r for _, r, _ in plan.collapses]
    finals = {}
    rep = np.arange(model.vertex_count)
    for k, r, _ in plan.collapses:
        rep[r] = k
    for r in removed:
        v = r
        while rep[v] != v:
            v = rep[v]
        finals[r] = v

    total = 0.0
    for beta in expressions:
        verts = evaluate_mesh(model, _with_beta(FaceParams.neutral(), beta))
        quadrics = mesh_quadrics(verts, model.triangles)
        for r in removed:
            total += quadric_eval(quadrics[r], verts[finals[r]])
    return total / len(expressions)
