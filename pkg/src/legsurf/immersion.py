"""Per-face and per-vertex geometry of discrete Legendrian immersions.

Tangent data is handled in frame components: for the frame-pair target these
are plain R^8 coordinates; for the flat model they are components in the
left-invariant orthonormal frame, so Euclidean formulas apply to both.  The
Gauss map of a face is the unit 2-vector of its frame partial derivatives;
comparing it across faces uses the global trivialisation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import heisenberg as hs
from . import stiefel as st
from .errors import DegenerateFaceError, GeometryDomainError
from .mesh import DiscreteImmersion

_PAIR_CACHE = {}


def wedge_pairs(k):
    if k not in _PAIR_CACHE:
        _PAIR_CACHE[k] = [(i, j) for i in range(k) for j in range(i + 1, k)]
    return _PAIR_CACHE[k]


def wedge_nd(x, y):
    """Coordinates of x ^ y, both (..., k), in the i<j pair basis."""
    pairs = wedge_pairs(x.shape[-1])
    return np.stack([x[..., i] * y[..., j] - x[..., j] * y[..., i] for i, j in pairs], axis=-1)


def frame_deltas(imm: DiscreteImmersion, base_pos, delta):
    """Frame components of coordinate differences based at base_pos."""
    if imm.target == "stiefel":
        return np.asarray(delta, float)
    c0 = delta[..., 0] - hs.omega0(base_pos[..., 1:], delta[..., 1:])
    return np.concatenate([c0[..., None], delta[..., 1:]], axis=-1)


def vertical_unit(imm: DiscreteImmersion, pos):
    """Unit vertical (Reeb-direction) frame vector at stacked positions."""
    if imm.target == "stiefel":
        rv, rw = st.reeb_raw(pos[..., :4], pos[..., 4:])
        return np.concatenate([rv, rw], axis=-1) / np.sqrt(2.0)
    out = np.zeros(pos.shape[:-1] + (5,))
    out[..., 0] = 1.0
    return out


def j_frame(imm: DiscreteImmersion, x):
    """Transverse complex structure on horizontal frame components."""
    if imm.target == "stiefel":
        v, w = st.jh_raw(x[..., :4], x[..., 4:])
        return np.concatenate([v, w], axis=-1)
    out = np.zeros_like(x)
    out[..., 1:] = hs.jc2(x[..., 1:])
    return out


def horizontal_part(imm: DiscreteImmersion, pos, x):
    """Project frame components onto the horizontal distribution at pos."""
    if imm.target == "stiefel":
        a, b = pos[..., :4], pos[..., 4:]
        v, w = st.project_tangent_raw(a, b, x[..., :4], x[..., 4:])
        v, w = st.horizontal_project_raw(a, b, v, w)
        return np.concatenate([v, w], axis=-1)
    out = x.copy()
    out[..., 0] = 0.0
    return out


def _local_uv(imm: DiscreteImmersion):
    """(F, 3, 2) unwrapped per-face parameter corners (intrinsic if uv missing)."""
    m = imm.mesh
    if m.uv is not None:
        uv, _ = m.corner_uv_local()
        return uv
    # Intrinsic per-face coordinates from current edge lengths.
    corners = imm.corner_positions()
    base = corners[:, 0]
    e1 = frame_deltas(imm, base, corners[:, 1] - base)
    e2 = frame_deltas(imm, base, corners[:, 2] - base)
    l1 = np.linalg.norm(e1, axis=-1)
    dot = np.sum(e1 * e2, axis=-1)
    x2 = np.where(l1 > 0, dot / np.maximum(l1, 1e-300), 0.0)
    y2sq = np.sum(e2 * e2, axis=-1) - x2**2
    y2 = np.sqrt(np.maximum(y2sq, 0.0))
    uv = np.zeros((len(corners), 3, 2))
    uv[:, 1, 0] = l1
    uv[:, 2, 0] = x2
    uv[:, 2, 1] = y2
    return uv


class FaceData:
    """Struct-of-arrays face geometry for a whole immersion."""

    def __init__(self, imm: DiscreteImmersion, check_degenerate=True):
        self.imm = imm
        corners = imm.corner_positions()
        self.base_pos = corners[:, 0]
        self.e1 = frame_deltas(imm, self.base_pos, corners[:, 1] - self.base_pos)
        self.e2 = frame_deltas(imm, self.base_pos, corners[:, 2] - self.base_pos)
        uv = _local_uv(imm)
        d1 = uv[:, 1] - uv[:, 0]
        d2 = uv[:, 2] - uv[:, 0]
        det_uv = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(det_uv <= 0):
            bad = int(np.argmin(det_uv))
            raise GeometryDomainError(
                f"face {bad} has non-positive parameter orientation"
            )
        self.uv_area = 0.5 * det_uv
        # [du dv] = [e1 e2] Minv with M columns the parameter edge vectors.
        inv = np.empty((len(d1), 2, 2))
        inv[:, 0, 0] = d2[:, 1]
        inv[:, 0, 1] = -d2[:, 0]
        inv[:, 1, 0] = -d1[:, 1]
        inv[:, 1, 1] = d1[:, 0]
        inv /= det_uv[:, None, None]
        self.minv = inv
        self.du = inv[:, 0, 0, None] * self.e1 + inv[:, 1, 0, None] * self.e2
        self.dv = inv[:, 0, 1, None] * self.e1 + inv[:, 1, 1, None] * self.e2
        g11 = np.sum(self.du * self.du, axis=-1)
        g12 = np.sum(self.du * self.dv, axis=-1)
        g22 = np.sum(self.dv * self.dv, axis=-1)
        self.g = np.stack(
            [np.stack([g11, g12], axis=-1), np.stack([g12, g22], axis=-1)], axis=-2
        )
        self.det_g = g11 * g22 - g12**2
        if check_degenerate:
            scale = np.maximum(g11 + g22, 1e-300)
            bad = np.where(self.det_g <= 1e-24 * scale**2)[0]
            if bad.size:
                raise DegenerateFaceError(int(bad[0]))
        self.sqrt_det = np.sqrt(np.maximum(self.det_g, 0.0))
        self.area = self.sqrt_det * self.uv_area
        ginv = np.empty_like(self.g)
        ginv[:, 0, 0] = g22
        ginv[:, 1, 1] = g11
        ginv[:, 0, 1] = -g12
        ginv[:, 1, 0] = -g12
        self.ginv = ginv / self.det_g[:, None, None]
        self.wedge = wedge_nd(self.du, self.dv)
        self.gauss = self.wedge / self.sqrt_det[:, None]

    def grad_scalar(self, values):
        """Per-face (d_u s, d_v s) of per-vertex values (seam-free scalars)."""
        tri = self.imm.mesh.triangles
        s0 = values[tri[:, 0]]
        ds = np.stack([values[tri[:, 1]] - s0, values[tri[:, 2]] - s0], axis=-1)
        return np.einsum("fij,fi->fj", self.minv, ds)

    def grad_norm_sq(self, values):
        d = self.grad_scalar(values)
        return np.einsum("fa,fab,fb->f", d, self.ginv, d)

    def grad_vector(self, values):
        """Surface gradient of a vertex scalar as a frame vector per face."""
        d = self.grad_scalar(values)
        coef = np.einsum("fab,fb->fa", self.ginv, d)
        return coef[:, 0, None] * self.du + coef[:, 1, None] * self.dv

    def pairing(self, d_first, d_second):
        """<d s1, d s2>_g from per-face parameter gradients."""
        return np.einsum("fa,fab,fb->f", d_first, self.ginv, d_second)


@dataclass
class FaceFrame:
    """Single-face view: partials, metric, induced data, normal-space basis."""

    partial_u: np.ndarray
    partial_v: np.ndarray
    metric: np.ndarray
    conformal_factor: float
    area: float
    gauss: np.ndarray
    normal_vertical: np.ndarray
    normal_ju: np.ndarray
    normal_jv: np.ndarray

    def __post_init__(self):
        if abs(np.linalg.norm(self.gauss) - 1.0) > 1e-12:
            raise GeometryDomainError("gauss 2-vector is not unit")


def face_frames(imm: DiscreteImmersion):
    """Per-face frames; raises DegenerateFaceError naming a collapsed face."""
    fd = FaceData(imm)
    vert = vertical_unit(imm, fd.base_pos)
    ju = j_frame(imm, horizontal_part(imm, fd.base_pos, fd.du))
    jv = j_frame(imm, horizontal_part(imm, fd.base_pos, fd.dv))
    ju = ju / np.linalg.norm(ju, axis=-1, keepdims=True)
    jv = jv / np.linalg.norm(jv, axis=-1, keepdims=True)
    frames = []
    for f in range(len(fd.area)):
        frames.append(
            FaceFrame(
                partial_u=fd.du[f],
                partial_v=fd.dv[f],
                metric=fd.g[f],
                conformal_factor=0.5 * (fd.g[f, 0, 0] + fd.g[f, 1, 1]),
                area=float(fd.area[f]),
                gauss=fd.gauss[f],
                normal_vertical=vert[f],
                normal_ju=ju[f],
                normal_jv=jv[f],
            )
        )
    return frames


# ---------------------------------------------------------------------------
# Legendrian residual


@dataclass
class EdgeResiduals:
    values: np.ndarray  # per canonical edge, tail -> head
    max: float
    l2: float


def legendrian_residual(imm: DiscreteImmersion) -> EdgeResiduals:
    """Contact-form residual of every edge, evaluated at the midpoint retraction."""
    m = imm.mesh
    tails = m.edges[:, 0]
    delta = imm.edge_vectors()
    p_tail = imm.positions[tails]
    p_head = imm.positions[m.edges[:, 1]]
    if imm.target == "stiefel":
        am, bm = st.retract_raw(
            0.5 * (p_tail[:, :4] + p_head[:, :4]),
            0.5 * (p_tail[:, 4:] + p_head[:, 4:]),
        )
        vals = st.alpha_raw(am, bm, delta[:, :4], delta[:, 4:])
    else:
        y_mid = 0.5 * (p_tail[:, 1:] + p_head[:, 1:])
        vals = -delta[:, 0] + hs.omega0(y_mid, delta[:, 1:])
    return EdgeResiduals(vals, float(np.max(np.abs(vals))) if vals.size else 0.0, float(np.sqrt(np.sum(vals**2))))


def validate_immersion(imm: DiscreteImmersion):
    """Point invariants, face non-degeneracy, and the Legendrian gate."""
    defect = imm.vertex_invariant_defect()
    if defect > 1e-11:
        raise GeometryDomainError(f"vertex frames violate target invariants: {defect:.2e}")
    FaceData(imm)  # raises on degenerate faces
    res = legendrian_residual(imm)
    if res.max > imm.legendrian_tol:
        raise GeometryDomainError(
            f"edge Legendrian residual {res.max:.3e} exceeds tolerance {imm.legendrian_tol:.3e}"
        )
    return res


# ---------------------------------------------------------------------------
# second fundamental form


@dataclass
class CurvatureData:
    abs_ii_sq: np.ndarray  # (V,) nan where not computed
    mean_curvature: np.ndarray  # (V, K) frame components, nan rows where skipped
    reeb_component: np.ndarray  # (V,) diagnostic: second derivatives against the vertical
    valid: np.ndarray  # (V,) bool
    warnings: list


def _vertex_chords(imm, v):
    """Seam-corrected frame chords from v to its neighbours."""
    m = imm.mesh
    nbrs = sorted(m.vertex_neighbors[v])
    delta = imm.positions[nbrs] - imm.positions[v]
    if imm.target == "heisenberg" and m.uv_periods is not None and m.uv is not None:
        w = m.wraps(np.broadcast_to(m.uv[v], (len(nbrs), 2)), m.uv[nbrs])
        delta[:, 0] -= w[:, 0] * imm.phi_monodromy[0] + w[:, 1] * imm.phi_monodromy[1]
    return nbrs, frame_deltas(imm, imm.positions[v], delta)


def second_fundamental_form(imm: DiscreteImmersion, min_valence=5) -> CurvatureData:
    """Per-vertex |II|^2 and mean curvature from local quadratic fits.

    Interior vertices with valence below ``min_valence`` fall back to the
    2-ring and are recorded in the warnings list; vertices whose fit stays
    rank-deficient are marked invalid.
    """
    m = imm.mesh
    k = imm.positions.shape[1]
    n = m.n_vertices
    out = CurvatureData(
        abs_ii_sq=np.full(n, np.nan),
        mean_curvature=np.full((n, k), np.nan),
        reeb_component=np.full(n, np.nan),
        valid=np.zeros(n, bool),
        warnings=[],
    )
    vert_all = vertical_unit(imm, imm.positions)
    for v in range(n):
        if v in m.boundary_vertices:
            continue
        nbrs, chords = _vertex_chords(imm, v)
        if len(nbrs) < min_valence:
            out.warnings.append((v, f"valence {len(nbrs)} < {min_valence}; using 2-ring"))
            two_ring = set()
            for u in nbrs:
                two_ring.update(m.vertex_neighbors[u])
            two_ring.discard(v)
            ring = sorted(two_ring)
            delta = imm.positions[ring] - imm.positions[v]
            if imm.target == "heisenberg" and m.uv_periods is not None and m.uv is not None:
                w = m.wraps(np.broadcast_to(m.uv[v], (len(ring), 2)), m.uv[ring])
                delta[:, 0] -= w[:, 0] * imm.phi_monodromy[0] + w[:, 1] * imm.phi_monodromy[1]
            chords = frame_deltas(imm, imm.positions[v], delta)
            nbrs = ring
        if len(nbrs) < 5:
            out.warnings.append((v, "fit rank deficient even on the 2-ring"))
            continue
        # Tangent plane estimate: dominant directions of the horizontal chords.
        hz = horizontal_part(imm, imm.positions[v][None], chords.copy())
        _, _, vt = np.linalg.svd(hz, full_matrices=False)
        t1, t2 = vt[0], vt[1]
        t1 = horizontal_part(imm, imm.positions[v], t1)
        t1 /= np.linalg.norm(t1)
        t2 = horizontal_part(imm, imm.positions[v], t2)
        t2 -= (t2 @ t1) * t1
        t2 /= np.linalg.norm(t2)
        xi = np.stack([chords @ t1, chords @ t2], axis=-1)
        a_mat = np.stack(
            [xi[:, 0], xi[:, 1], 0.5 * xi[:, 0] ** 2, xi[:, 0] * xi[:, 1], 0.5 * xi[:, 1] ** 2],
            axis=-1,
        )
        sol, _, rank, _ = np.linalg.lstsq(a_mat, chords, rcond=None)
        if rank < 5:
            out.warnings.append((v, "fit rank deficient even on the 2-ring"))
            continue
        q11, q12, q22 = sol[2], sol[3], sol[4]
        u_r = vert_all[v]
        n1 = j_frame(imm, t1)
        n2 = j_frame(imm, t2)
        basis = [u_r, n1, n2]

        def proj(vec):
            return sum((vec @ e) * e for e in basis)

        ii11, ii12, ii22 = proj(q11), proj(q12), proj(q22)
        out.abs_ii_sq[v] = ii11 @ ii11 + 2.0 * (ii12 @ ii12) + ii22 @ ii22
        out.mean_curvature[v] = 0.5 * (ii11 + ii22)
        out.reeb_component[v] = max(abs(q11 @ u_r), abs(q12 @ u_r), abs(q22 @ u_r))
        out.valid[v] = True
    return out


# ---------------------------------------------------------------------------
# Hopf differential


def hopf_differential(imm: DiscreteImmersion):
    """Per-face (|d_u|^2 - |d_v|^2)/4 - i (d_u . d_v)/2 in parameter coordinates."""
    if imm.mesh.uv is None:
        raise GeometryDomainError("hopf differential requires uv parameters")
    fd = FaceData(imm)
    return (fd.g[:, 0, 0] - fd.g[:, 1, 1]) / 4.0 - 1j * fd.g[:, 0, 1] / 2.0


# ---------------------------------------------------------------------------
# mean-curvature one-form, Lagrangian angle


def cotangent_weights(imm: DiscreteImmersion, fd: FaceData | None = None):
    """Per-edge cotangent weights and barycentric vertex areas."""
    m = imm.mesh
    corners = imm.corner_positions()
    base = corners[:, 0]
    c01 = frame_deltas(imm, base, corners[:, 1] - base)
    c02 = frame_deltas(imm, base, corners[:, 2] - base)
    base1 = corners[:, 1]
    c12 = frame_deltas(imm, base1, corners[:, 2] - corners[:, 1])
    c10 = frame_deltas(imm, base1, corners[:, 0] - corners[:, 1])
    base2 = corners[:, 2]
    c20 = frame_deltas(imm, base2, corners[:, 0] - corners[:, 2])
    c21 = frame_deltas(imm, base2, corners[:, 1] - corners[:, 2])

    def cot(a, b):
        dot = np.sum(a * b, axis=-1)
        cross_sq = np.sum(a * a, axis=-1) * np.sum(b * b, axis=-1) - dot**2
        return dot / np.sqrt(np.maximum(cross_sq, 1e-300))

    # Corner k's angle sits between its chords to the two other corners and
    # weights the opposite edge (local edge k).
    cots = np.stack([cot(c01, c02), cot(c12, c10), cot(c20, c21)], axis=-1)
    n_e = len(m.edges)
    w = np.zeros(n_e)
    for k in range(3):
        # local edge k is opposite corner k
        np.add.at(w, m.face_edges[:, k], 0.5 * cots[:, k])
    if fd is None:
        fd = FaceData(imm)
    areas = np.zeros(m.n_vertices)
    for k in range(3):
        np.add.at(areas, m.triangles[:, k], fd.area / 3.0)
    return w, areas


def laplacian_positions(imm: DiscreteImmersion, weights, areas):
    """Cot-Laplacian of the immersion per vertex, in frame components at the vertex."""
    m = imm.mesh
    delta = imm.edge_vectors()
    tails, heads = m.edges[:, 0], m.edges[:, 1]
    chords_t = frame_deltas(imm, imm.positions[tails], delta)
    chords_h = frame_deltas(imm, imm.positions[heads], -delta)
    k = imm.positions.shape[1]
    acc = np.zeros((m.n_vertices, k))
    np.add.at(acc, tails, weights[:, None] * chords_t)
    np.add.at(acc, heads, weights[:, None] * chords_h)
    return acc / areas[:, None]


@dataclass
class MeanCurvatureForm:
    gamma: np.ndarray  # per canonical edge, oriented tail -> head
    curl: np.ndarray  # per face
    beta: np.ndarray  # per vertex, spanning-tree branch
    periods: list  # loop integrals of d beta over generator loops
    laplace_beta_residual: np.ndarray  # per vertex
    component_roots: list
    vertex_areas: np.ndarray


def mean_curvature_one_form(imm: DiscreteImmersion) -> MeanCurvatureForm:
    """Edge samples of the mean-curvature one-form and the integrated angle.

    The angle beta satisfies d beta = gamma / 2; its Laplacian (assembled from
    the edge one-form, so branch jumps never enter) is the minimality defect.
    """
    m = imm.mesh
    fd = FaceData(imm)
    weights, areas = cotangent_weights(imm, fd)
    lap = laplacian_positions(imm, weights, areas)
    g_vec = j_frame(imm, horizontal_part(imm, imm.positions, lap))

    tails, heads = m.edges[:, 0], m.edges[:, 1]
    delta = imm.edge_vectors()
    chords_t = frame_deltas(imm, imm.positions[tails], delta)
    chords_h = frame_deltas(imm, imm.positions[heads], -delta)
    gamma = -0.5 * (
        np.sum(g_vec[tails] * chords_t, axis=-1) - np.sum(g_vec[heads] * chords_h, axis=-1)
    )

    # discrete curl: oriented boundary sum per face
    curl = np.zeros(len(m.triangles))
    for k in range(3):
        a = m.triangles[:, (k + 1) % 3]
        b = m.triangles[:, (k + 2) % 3]
        e = m.face_edges[:, k]
        sign = np.where(m.edges[e, 0] == a, 1.0, -1.0)
        curl += sign * gamma[e]

    # spanning-tree integration of d beta = gamma / 2 per component
    beta = np.zeros(m.n_vertices)
    roots = []
    visited = np.zeros(m.n_vertices, bool)
    adj = [[] for _ in range(m.n_vertices)]
    for e, (a, b) in enumerate(m.edges):
        adj[a].append((int(b), e, 1.0))
        adj[b].append((int(a), e, -1.0))
    for comp in m.components():
        root = min(comp)
        roots.append(root)
        visited[root] = True
        stack = [root]
        while stack:
            v = stack.pop()
            for u, e, sign in adj[v]:
                if not visited[u]:
                    visited[u] = True
                    beta[u] = beta[v] + sign * 0.5 * gamma[e]
                    stack.append(u)

    edge_index = {(int(a), int(b)): e for e, (a, b) in enumerate(m.edges)}
    periods = []
    for loop in m.generator_loops:
        total = 0.0
        for i in range(len(loop)):
            a, b = loop[i], loop[(i + 1) % len(loop)]
            if (a, b) in edge_index:
                total += 0.5 * gamma[edge_index[(a, b)]]
            elif (b, a) in edge_index:
                total -= 0.5 * gamma[edge_index[(b, a)]]
            else:
                raise GeometryDomainError(f"generator loop uses missing edge ({a}, {b})")
        periods.append(float(total))

    lap_beta = np.zeros(m.n_vertices)
    np.add.at(lap_beta, tails, weights * 0.5 * gamma)
    np.add.at(lap_beta, heads, -weights * 0.5 * gamma)
    lap_beta /= areas

    return MeanCurvatureForm(
        gamma=gamma,
        curl=curl,
        beta=beta,
        periods=periods,
        laplace_beta_residual=lap_beta,
        component_roots=roots,
        vertex_areas=areas,
    )
