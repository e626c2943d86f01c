"""Gauge fields, the arctan Hamiltonian, monotonicity balances, densities.

Everything is computed on a discrete Legendrian immersion relative to a base
point: the Euclidean distance rho, the Legendrian coordinate phi, the
anisotropic gauge r = (rho^4 + 4 phi^2)^(1/4), the slope sigma = 2 phi / rho^2,
surface and horizontal gradients of all of them, the cut-off Hamiltonian
h = [chi(r/r0) - chi(r/eta)] arctan(sigma), the fourteen-term truncated
balance, sublevel-set density curves, and the kernel-weighted density limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import heisenberg as hs
from . import stiefel as st
from .energy import HamiltonianSpec
from .errors import GeometryDomainError, ResolutionError
from .immersion import FaceData, horizontal_part, j_frame, mean_curvature_one_form
from .mesh import DiscreteImmersion

# ---------------------------------------------------------------------------
# cut-off bump: quintic smoothstep, C^2, chi' <= 0, -chi' > 1/2 on [5/4, 7/4]

CHI_DESCRIPTION = "quintic smoothstep: chi(t) = 1 - S(t-1) on [1,2], S = 6x^5 - 15x^4 + 10x^3"


def chi(t):
    t = np.asarray(t, float)
    x = np.clip(t - 1.0, 0.0, 1.0)
    s = ((6.0 * x - 15.0) * x + 10.0) * x**3
    return 1.0 - s


def chi_prime(t):
    t = np.asarray(t, float)
    x = t - 1.0
    inside = (x > 0.0) & (x < 1.0)
    x = np.clip(x, 0.0, 1.0)
    return np.where(inside, -30.0 * x**2 * (1.0 - x) ** 2, 0.0)


def chi_double_prime(t):
    t = np.asarray(t, float)
    x = t - 1.0
    inside = (x > 0.0) & (x < 1.0)
    x = np.clip(x, 0.0, 1.0)
    return np.where(inside, -(60.0 * x - 180.0 * x**2 + 120.0 * x**3), 0.0)


# ---------------------------------------------------------------------------
# pointwise gauge data


def base_point_coords(target, p0):
    if isinstance(p0, st.StiefelPoint):
        return p0.as_vector()
    if isinstance(p0, hs.HeisenbergPoint):
        return p0.as_vector()
    p0 = np.asarray(p0, float)
    expected = 8 if target == "stiefel" else 5
    if p0.size != expected:
        raise GeometryDomainError(f"base point has {p0.size} coordinates, expected {expected}")
    return p0


def gauge_scalars_at(target, p0, points):
    """(rho, phi, r) of stacked points relative to p0."""
    points = np.asarray(points, float)
    if target == "stiefel":
        return st.gauge_scalars(p0[:4], p0[4:], points[..., :4], points[..., 4:])
    rho = np.linalg.norm(points[..., 1:] - p0[1:], axis=-1)
    phi = points[..., 0] - p0[0] - hs.omega0(p0[1:], points[..., 1:])
    return rho, phi, (rho**4 + 4.0 * phi**2) ** 0.25


def gauge_ambient_gradients(target, p0, points):
    """Ambient-coordinate gradients of rho^2 and phi at stacked points."""
    points = np.asarray(points, float)
    if target == "stiefel":
        grad_rho2 = 2.0 * (points - p0)
        grad_phi = np.broadcast_to(
            np.concatenate([p0[4:], -p0[:4]]), points.shape
        ).copy()
        return grad_rho2, grad_phi
    grad_rho2 = np.zeros_like(points)
    grad_rho2[..., 1:] = 2.0 * (points[..., 1:] - p0[1:])
    grad_phi = np.zeros_like(points)
    grad_phi[..., 0] = 1.0
    grad_phi[..., 1:] = -hs.jc2(np.broadcast_to(p0[1:], points[..., 1:].shape))
    return grad_rho2, grad_phi


def horizontal_gradient(target, points, ambient_grad):
    """Horizontal metric gradient in frame components from ambient partials."""
    points = np.asarray(points, float)
    g = np.asarray(ambient_grad, float)
    if target == "stiefel":
        a, b = points[..., :4], points[..., 4:]
        v, w = st.project_tangent_raw(a, b, g[..., :4], g[..., 4:])
        v, w = st.horizontal_project_raw(a, b, v, w)
        return np.concatenate([v, w], axis=-1)
    y = points[..., 1:]
    omega_cols = np.stack([-y[..., 1], y[..., 0], -y[..., 3], y[..., 2]], axis=-1)
    eh = g[..., 1:] + omega_cols * g[..., 0:1]
    out = np.zeros(points.shape)
    out[..., 1:] = eh
    return out


def sigma_weight(sigma):
    """(1 + s arctan s) / sqrt(1 + s^2); the pointwise density weight in [1, pi/2]."""
    s = np.asarray(sigma, float)
    out = np.empty(s.shape)
    big = np.abs(s) > 1e8
    out[~big] = (1.0 + s[~big] * np.arctan(s[~big])) / np.sqrt(1.0 + s[~big] ** 2)
    out[big] = np.pi / 2
    return out


@dataclass
class GaugeFields:
    """Per-vertex gauge quantities and per-face tangential gradients."""

    rho: np.ndarray
    phi: np.ndarray
    r: np.ndarray
    sigma: np.ndarray  # nan where rho = 0
    arctan_sigma: np.ndarray  # limit values +-pi/2 at rho = 0
    singular: np.ndarray  # r == 0 vertices, excluded from gradient faces
    grad_h_r: np.ndarray  # per-vertex horizontal gradient of r (frame comps)
    grad_h_arctan: np.ndarray
    face_grad_r: np.ndarray  # per-face parameter gradients (F, 2)
    face_grad_rho: np.ndarray
    face_grad_phi: np.ndarray
    face_grad_arctan: np.ndarray
    face_ok: np.ndarray  # faces free of singular vertices, branch-consistent
    face_r: np.ndarray  # face averages
    face_sigma_weight: np.ndarray
    face_arctan: np.ndarray
    face_data: FaceData
    base_p0: np.ndarray = None


def _deck_shifts(imm):
    m1, m2 = imm.phi_monodromy
    if imm.target != "heisenberg" or (m1 == 0.0 and m2 == 0.0):
        return None
    shifts = sorted({k1 * m1 + k2 * m2 for k1 in (-1, 0, 1) for k2 in (-1, 0, 1)})
    return np.asarray(shifts)


def gauge_fields(imm: DiscreteImmersion, p0) -> GaugeFields:
    p0 = base_point_coords(imm.target, p0)
    pos = imm.positions.copy()
    rho, phi, r = gauge_scalars_at(imm.target, p0, pos)
    shifts = _deck_shifts(imm)
    branch = np.zeros(len(pos))
    if shifts is not None:
        # A lifted torus has deck copies at Legendrian offsets k . monodromy;
        # measure each vertex on its nearest branch.
        branch = shifts[np.argmin(np.abs(phi[:, None] - shifts[None, :]), axis=1)]
        pos[:, 0] -= branch
        rho, phi, r = gauge_scalars_at(imm.target, p0, pos)
    singular = r < 1e-14
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = np.where(rho > 0, 2.0 * phi / np.maximum(rho, 1e-300) ** 2, np.nan)
        arctan = np.where(
            rho > 0,
            np.arctan(np.where(np.isnan(sigma), 0.0, sigma)),
            np.where(phi > 0, np.pi / 2, np.where(phi < 0, -np.pi / 2, 0.0)),
        )

    grad_rho2, grad_phi = gauge_ambient_gradients(imm.target, p0, pos)
    r_safe = np.maximum(r, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        # d r = (rho^2 d rho^2 + 4 phi d phi) / (2 r^3)
        grad_r_amb = (rho[:, None] ** 2 * grad_rho2 + 4.0 * phi[:, None] * grad_phi) / (
            2.0 * r_safe[:, None] ** 3
        )
        # d arctan sigma = 2 (rho^2 / r^4) d phi - (2 / r^4) phi d rho^2
        grad_at_amb = (
            2.0 * rho[:, None] ** 2 * grad_phi - 2.0 * phi[:, None] * grad_rho2
        ) / r_safe[:, None] ** 4
    grad_r_amb = np.nan_to_num(grad_r_amb)
    grad_at_amb = np.nan_to_num(grad_at_amb)
    grad_h_r = horizontal_gradient(imm.target, pos, grad_r_amb)
    grad_h_arctan = horizontal_gradient(imm.target, pos, grad_at_amb)
    grad_h_r[singular] = np.nan
    grad_h_arctan[singular] = np.nan

    fd = FaceData(imm)
    tri = imm.mesh.triangles
    face_ok = ~np.any(singular[tri], axis=1)
    # Faces mixing deck branches carry meaningless interpolated gradients.
    face_ok &= np.all(branch[tri] == branch[tri][:, [0]], axis=1)
    face_grad_r = fd.grad_scalar(np.where(singular, 0.0, r))
    face_grad_rho = fd.grad_scalar(np.where(singular, 0.0, rho))
    face_grad_phi = fd.grad_scalar(np.where(singular, 0.0, phi))
    face_grad_arctan = fd.grad_scalar(np.where(singular, 0.0, arctan))
    face_r = r[tri].mean(axis=1)
    sigma_for_weight = np.where(np.isnan(sigma), np.inf * np.sign(phi + 1e-300), sigma)
    face_sigma_weight = sigma_weight(sigma_for_weight)[tri].mean(axis=1)
    face_arctan = arctan[tri].mean(axis=1)
    return GaugeFields(
        rho=rho, phi=phi, r=r, sigma=sigma, arctan_sigma=arctan, singular=singular,
        grad_h_r=grad_h_r, grad_h_arctan=grad_h_arctan,
        face_grad_r=face_grad_r, face_grad_rho=face_grad_rho,
        face_grad_phi=face_grad_phi, face_grad_arctan=face_grad_arctan,
        face_ok=face_ok, face_r=face_r, face_sigma_weight=face_sigma_weight,
        face_arctan=face_arctan, face_data=fd, base_p0=p0,
    )


def gradient_cap_defects(gf: GaugeFields):
    """|grad^S arctan sigma| - 2 / r per face (should stay below an h-slack)."""
    fd = gf.face_data
    norms = np.sqrt(np.einsum("fa,fab,fb->f", gf.face_grad_arctan, fd.ginv, gf.face_grad_arctan))
    return norms - 2.0 / np.maximum(gf.face_r, 1e-300)


def structure_defects(gf: GaugeFields):
    """|d rho|^2_g + rho^-2 |d phi|^2_g - 1 per face (order r^2 target)."""
    fd = gf.face_data
    tri = fd.imm.mesh.triangles
    rho_face = np.maximum(gf.rho[tri].mean(axis=1), 1e-300)
    t1 = np.einsum("fa,fab,fb->f", gf.face_grad_rho, fd.ginv, gf.face_grad_rho)
    t2 = np.einsum("fa,fab,fb->f", gf.face_grad_phi, fd.ginv, gf.face_grad_phi)
    return t1 + t2 / rho_face**2 - 1.0


def vertex_tangent_frames(imm: DiscreteImmersion, fd: FaceData | None = None):
    """Orthonormal tangent pairs per vertex from area-weighted face partials."""
    fd = fd or FaceData(imm)
    m = imm.mesh
    n_v = m.n_vertices
    k = imm.positions.shape[1]
    acc_u = np.zeros((n_v, k))
    acc_v = np.zeros((n_v, k))
    for c in range(3):
        np.add.at(acc_u, m.triangles[:, c], fd.area[:, None] * fd.du)
        np.add.at(acc_v, m.triangles[:, c], fd.area[:, None] * fd.dv)
    t1 = horizontal_part(imm, imm.positions, acc_u)
    n1 = np.linalg.norm(t1, axis=-1, keepdims=True)
    t1 = t1 / np.maximum(n1, 1e-300)
    t2 = horizontal_part(imm, imm.positions, acc_v)
    t2 = t2 - np.sum(t2 * t1, axis=-1, keepdims=True) * t1
    n2 = np.linalg.norm(t2, axis=-1, keepdims=True)
    t2 = t2 / np.maximum(n2, 1e-300)
    return t1, t2


def structure_defects_vertex(imm: DiscreteImmersion, gf: GaugeFields):
    """Vertex version of the structural identity, using analytic gradients.

    The ambient gauge gradients are exact; only the discrete tangent plane is
    approximate, so the defect is not polluted by interpolation noise near
    the base point.
    """
    t1, t2 = vertex_tangent_frames(imm, gf.face_data)
    rho = np.maximum(gf.rho, 1e-300)
    gr2, gp = _stored_ambient_gradients(imm, gf)
    g_rho = horizontal_gradient(imm.target, imm.positions, gr2) / (2.0 * rho[:, None])
    g_phi = horizontal_gradient(imm.target, imm.positions, gp)
    p_rho = np.sum(g_rho * t1, axis=-1) ** 2 + np.sum(g_rho * t2, axis=-1) ** 2
    p_phi = np.sum(g_phi * t1, axis=-1) ** 2 + np.sum(g_phi * t2, axis=-1) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = p_rho + p_phi / rho**2 - 1.0
    out[gf.singular] = np.nan
    return out


def perp_gradient_identity_defects_vertex(imm: DiscreteImmersion, gf: GaugeFields):
    """Vertex version of the perpendicular-gradient identity defect."""
    t1, t2 = vertex_tangent_frames(imm, gf.face_data)
    gh = gf.grad_h_r
    tang = (
        np.sum(gh * t1, axis=-1, keepdims=True) * t1
        + np.sum(gh * t2, axis=-1, keepdims=True) * t2
    )
    perp = gh - tang
    gat = gf.grad_h_arctan
    tang_at = (
        np.sum(gat * t1, axis=-1, keepdims=True) * t1
        + np.sum(gat * t2, axis=-1, keepdims=True) * t2
    )
    j_at = j_frame(imm, tang_at)
    diff = perp / np.maximum(gf.r, 1e-300)[:, None] - 0.5 * j_at
    out = np.linalg.norm(diff, axis=-1)
    out[gf.singular] = np.nan
    return out


def _stored_ambient_gradients(imm, gf):
    """Ambient gradients of rho^2 and phi (independent of the branch shift)."""
    return gauge_ambient_gradients(imm.target, gf.base_p0, imm.positions)


def horizontal_gradient_defects(gf: GaugeFields):
    """|grad_H r|^2 - 1/sqrt(1+sigma^2) per vertex (order r^2 target)."""
    n = np.sum(gf.grad_h_r**2, axis=-1)
    s = gf.sigma
    inv = np.where(np.isnan(s), 0.0, 1.0 / np.sqrt(1.0 + np.nan_to_num(s) ** 2))
    out = n - inv
    out[gf.singular] = np.nan
    return out


def perp_gradient_identity_defects(imm: DiscreteImmersion, gf: GaugeFields):
    """|(grad^P r)^perp / r - J(grad^P arctan sigma)/2| per face (order 1 target)."""
    fd = gf.face_data
    tri = imm.mesh.triangles
    grad_h_face = np.nanmean(gf.grad_h_r[tri], axis=1)
    coef = np.einsum("fab,fb->fa", fd.ginv, gf.face_grad_r)
    grad_s_face = coef[:, 0, None] * fd.du + coef[:, 1, None] * fd.dv
    perp = grad_h_face - grad_s_face
    coef_a = np.einsum("fab,fb->fa", fd.ginv, gf.face_grad_arctan)
    grad_at_face = coef_a[:, 0, None] * fd.du + coef_a[:, 1, None] * fd.dv
    j_at = j_frame(imm, horizontal_part(imm, fd.base_pos, grad_at_face))
    diff = perp / np.maximum(gf.face_r, 1e-300)[:, None] - 0.5 * j_at
    out = np.linalg.norm(diff, axis=-1)
    out[~gf.face_ok] = np.nan
    return out


# ---------------------------------------------------------------------------
# the cut-off Hamiltonian


def hamiltonian_arctan(imm_or_target, p0, r0: float, eta: float) -> HamiltonianSpec:
    """h = [chi(r/r0) - chi(r/eta)] arctan(sigma), with analytic first derivatives.

    Supported inside the gauge shell {eta <= r <= 2 r0}.
    """
    if not 0 < eta < r0 < 1:
        raise GeometryDomainError("need 0 < eta < r0 < 1")
    target = imm_or_target if isinstance(imm_or_target, str) else imm_or_target.target
    p0 = base_point_coords(target, p0)

    def value(points):
        points = np.atleast_2d(np.asarray(points, float))
        rho, phi, r = gauge_scalars_at(target, p0, points)
        with np.errstate(divide="ignore", invalid="ignore"):
            atan = np.where(
                rho > 0,
                np.arctan(2.0 * phi / np.maximum(rho, 1e-300) ** 2),
                np.where(phi > 0, np.pi / 2, np.where(phi < 0, -np.pi / 2, 0.0)),
            )
        return (chi(r / r0) - chi(r / eta)) * atan

    def grad(points):
        points = np.atleast_2d(np.asarray(points, float))
        rho, phi, r = gauge_scalars_at(target, p0, points)
        grad_rho2, grad_phi = gauge_ambient_gradients(target, p0, points)
        r_safe = np.maximum(r, 1e-300)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            grad_r = (rho[:, None] ** 2 * grad_rho2 + 4.0 * phi[:, None] * grad_phi) / (
                2.0 * r_safe[:, None] ** 3
            )
            grad_at = (
                2.0 * rho[:, None] ** 2 * grad_phi - 2.0 * phi[:, None] * grad_rho2
            ) / r_safe[:, None] ** 4
        grad_r = np.nan_to_num(grad_r)
        grad_at = np.nan_to_num(grad_at)
        with np.errstate(divide="ignore", invalid="ignore"):
            atan = np.where(
                rho > 0,
                np.arctan(2.0 * phi / np.maximum(rho, 1e-300) ** 2),
                np.where(phi > 0, np.pi / 2, np.where(phi < 0, -np.pi / 2, 0.0)),
            )
        bump = chi(r / r0) - chi(r / eta)
        dbump = chi_prime(r / r0) / r0 - chi_prime(r / eta) / eta
        out = dbump[:, None] * atan[:, None] * grad_r + bump[:, None] * grad_at
        out[r < 1e-14] = 0.0
        return out

    return HamiltonianSpec(h=value, grad=grad, support=("gauge_ball", p0, 2.0 * r0 + 1e-12))


# ---------------------------------------------------------------------------
# truncated balance


@dataclass
class MonotonicityReport:
    r0: float
    eta: float
    lhs_terms: dict
    rhs_terms: dict
    bookkeeping: dict
    residual: float
    annulus_faces: int

    def lhs_total(self):
        return sum(self.lhs_terms.values())

    def rhs_total(self):
        return sum(self.rhs_terms.values())


def monotonicity_balance(imm: DiscreteImmersion, p0, r0: float, eta: float, min_faces=100) -> MonotonicityReport:
    """Evaluate every displayed term of the truncated balance at scales (r0, eta).

    The order-one and order-r bookkeeping bounds are reported separately with
    explicit constant one; the residual compares only the exact terms.
    """
    if not 0 < eta < r0:
        raise GeometryDomainError("need 0 < eta < r0")
    gf = gauge_fields(imm, p0)
    fd = gf.face_data
    ok = gf.face_ok
    area = np.where(ok, fd.area, 0.0)
    rr = np.maximum(gf.face_r, 1e-300)

    in_annulus = (rr > eta) & (rr < 2 * r0) & ok
    n_annulus = int(np.count_nonzero(in_annulus))
    if n_annulus < min_faces:
        raise ResolutionError(
            f"annulus eta < r < 2 r0 holds only {n_annulus} faces (< {min_faces})"
        )

    mcf = mean_curvature_one_form(imm)
    dbeta = _face_one_form(imm, fd, 0.5 * mcf.gamma)
    spec = hamiltonian_arctan(imm.target, p0, r0, eta)
    h_vals = spec.h(imm.positions)
    dh = fd.grad_scalar(np.where(gf.singular, 0.0, h_vals))
    pair_dh_dbeta = fd.pairing(dh, dbeta)

    ginv = fd.ginv
    grad_r_sq = np.einsum("fa,fab,fb->f", gf.face_grad_r, ginv, gf.face_grad_r)
    grad_at_sq = np.einsum("fa,fab,fb->f", gf.face_grad_arctan, ginv, gf.face_grad_arctan)
    cross = fd.pairing(gf.face_grad_r, gf.face_grad_arctan)
    tri = imm.mesh.triangles
    # sigma arctan sigma / sqrt(1+sigma^2) = weight - 1/sqrt(1+sigma^2)
    sig_face = gf.sigma[tri]
    with np.errstate(invalid="ignore"):
        inv_sqrt_face = np.where(np.isnan(sig_face), 0.0, 1.0 / np.sqrt(1.0 + sig_face**2)).mean(axis=1)
    s_atan_w = gf.face_sigma_weight - inv_sqrt_face

    grad_h_face = np.nanmean(gf.grad_h_r[tri], axis=1)
    coef = np.einsum("fab,fb->fa", ginv, gf.face_grad_r)
    grad_s_vec = coef[:, 0, None] * fd.du + coef[:, 1, None] * fd.dv
    perp_sq = np.maximum(
        np.sum(grad_h_face**2, axis=-1) - np.sum(grad_s_vec * grad_s_vec, axis=-1), 0.0
    )
    perp_sq = np.where(ok, np.nan_to_num(perp_sq), 0.0)

    at = gf.face_arctan
    xr, xe = rr / r0, rr / eta
    cr, ce = chi_prime(xr), chi_prime(xe)
    c2r, c2e = chi_double_prime(xr), chi_double_prime(xe)
    band = chi(xr) - chi(xe)

    def integ(values):
        return float(np.sum(np.where(ok, values, 0.0) * area))

    lhs = {
        "dh_dbeta": integ(pair_dh_dbeta),
        "ring_r_grad": integ(-xr * cr * grad_r_sq / rr**2),
        "ring_r_weight": integ(-xr * cr * s_atan_w / rr**2),
        "chi2_cross_r": integ(0.25 * xr**2 * c2r * at * cross / rr),
        "chi1_cross_r": integ(-0.75 * xr * cr * at * cross / rr),
        "chi1_sigma_r": integ(0.25 * xr * cr * grad_at_sq),
    }
    rhs = {
        "perp_annulus": integ(4.0 * band * perp_sq / rr**2),
        "ring_eta_grad": integ(-xe * ce * grad_r_sq / rr**2),
        "ring_eta_weight": integ(-xe * ce * s_atan_w / rr**2),
        "chi1_sigma_eta": integ(4.0 * xe * ce * grad_at_sq),
        "chi1_cross_eta": integ(-0.75 * xe * ce * at * cross / rr),
        "chi2_cross_eta": integ(0.25 * xe**2 * c2e * at * cross / rr),
    }
    bookkeeping = {
        "order1_band": integ(np.abs(band)),
        "order_r_ring_r": integ(xr * np.abs(cr)),
        "order_r_ring_eta": integ(xe * np.abs(ce)),
    }
    lhs_total = sum(lhs.values())
    rhs_total = sum(rhs.values())
    residual = abs(lhs_total - rhs_total) / max(abs(lhs_total), abs(rhs_total), 1e-30)
    return MonotonicityReport(
        r0=r0, eta=eta, lhs_terms=lhs, rhs_terms=rhs, bookkeeping=bookkeeping,
        residual=residual, annulus_faces=n_annulus,
    )


def _face_one_form(imm, fd: FaceData, edge_values):
    """Per-face parameter coefficients of a one-form given by edge integrals."""
    m = imm.mesh
    tri = m.triangles
    edge_index = {}
    for e, (a, b) in enumerate(m.edges):
        edge_index[(int(a), int(b))] = (e, 1.0)
        edge_index[(int(b), int(a))] = (e, -1.0)
    d1 = np.zeros(len(tri))
    d2 = np.zeros(len(tri))
    for f in range(len(tri)):
        i, j, k = (int(x) for x in tri[f])
        e1, s1 = edge_index[(i, j)]
        e2, s2 = edge_index[(i, k)]
        d1[f] = s1 * edge_values[e1]
        d2[f] = s2 * edge_values[e2]
    return np.einsum("fij,fi->fj", fd.minv, np.stack([d1, d2], axis=-1))


# ---------------------------------------------------------------------------
# density curves


@dataclass
class DensityCurve:
    base_point: np.ndarray
    radii: np.ndarray
    ratios: np.ndarray
    counts: np.ndarray
    excluded: list  # radii below the resolvable scale, with a warning


def tri_sublevel_fraction(r_vals, s):
    """Area fraction of a triangle where the linear interpolant of r is < s."""
    r_sorted = np.sort(r_vals, axis=-1)
    r0, r1, r2 = r_sorted[..., 0], r_sorted[..., 1], r_sorted[..., 2]
    frac = np.zeros(r0.shape)
    all_in = s >= r2
    frac[all_in] = 1.0
    two_in = (s >= r1) & (s < r2)
    with np.errstate(divide="ignore", invalid="ignore"):
        f2 = 1.0 - (r2 - s) ** 2 / np.maximum((r2 - r0) * (r2 - r1), 1e-300)
        f1 = (s - r0) ** 2 / np.maximum((r1 - r0) * (r2 - r0), 1e-300)
    frac[two_in] = f2[two_in]
    one_in = (s > r0) & (s < r1)
    frac[one_in] = f1[one_in]
    return frac


def resolvable_radius(imm: DiscreteImmersion):
    """Three median frame edge lengths: the smallest radius worth measuring."""
    from .immersion import frame_deltas

    delta = imm.edge_vectors()
    tails = imm.mesh.edges[:, 0]
    chords = frame_deltas(imm, imm.positions[tails], delta)
    return 3.0 * float(np.median(np.linalg.norm(chords, axis=-1)))


def density_curve(imm: DiscreteImmersion, p0, radii, min_radius=None) -> DensityCurve:
    """s -> Area({r_gauge < s}) / s^2 by exact clipping of linear interpolants.

    Radii under three median edge lengths are excluded with a warning entry;
    pass ``min_radius`` to override the cut (coarse-resolution studies).
    """
    p0c = base_point_coords(imm.target, p0)
    gf = gauge_fields(imm, p0c)
    fd = gf.face_data
    tri = imm.mesh.triangles
    r_corners = gf.r[tri]
    radii = np.asarray(sorted(radii, reverse=True), float)
    min_s = resolvable_radius(imm) if min_radius is None else float(min_radius)
    ratios, counts, kept, excluded = [], [], [], []
    for s in radii:
        if s < min_s:
            excluded.append(float(s))
            continue
        frac = tri_sublevel_fraction(r_corners, s)
        area = float(np.sum(frac * fd.area))
        ratios.append(area / s**2)
        counts.append(_component_count(imm, gf.r, s))
        kept.append(float(s))
    return DensityCurve(
        base_point=p0c,
        radii=np.asarray(kept),
        ratios=np.asarray(ratios),
        counts=np.asarray(counts, int),
        excluded=excluded,
    )


def _component_count(imm, r_vals, s):
    inside = r_vals < s
    idx = np.where(inside)[0]
    if len(idx) == 0:
        return 0
    remap = -np.ones(imm.mesh.n_vertices, int)
    remap[idx] = np.arange(len(idx))
    parent = np.arange(len(idx))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in imm.mesh.edges:
        if inside[a] and inside[b]:
            ra, rb = find(remap[a]), find(remap[b])
            if ra != rb:
                parent[ra] = rb
    return len({find(i) for i in range(len(idx))})


# ---------------------------------------------------------------------------
# kernel-weighted density


def polynomial_kernel(a: float, b: float):
    """A C^2 bump supported on [a, b] with unit integral: x^3 (1-x)^3 scaled."""
    if not 0 < a < b:
        raise GeometryDomainError("kernel support must sit inside (0, inf)")
    norm = 140.0 / (b - a)  # 1 / integral of x^3 (1-x)^3

    def kernel(t):
        x = (np.asarray(t, float) - a) / (b - a)
        inside = (x > 0) & (x < 1)
        x = np.clip(x, 0.0, 1.0)
        return np.where(inside, norm * x**3 * (1.0 - x) ** 3, 0.0)

    return kernel


DEFAULT_KERNELS = {
    "half_to_three_half": (0.5, 1.5),
    "quarter_to_one": (0.25, 1.0),
}


def theta0_estimate(imm: DiscreteImmersion, p0, kernel=None, eta=None):
    """Kernel-weighted gauge density at the smallest resolvable scale.

    Returns (theta0, multiplicity_estimate, distance_to_integer, eta_used).
    """
    p0c = base_point_coords(imm.target, p0)
    if kernel is None:
        kernel = polynomial_kernel(*DEFAULT_KERNELS["half_to_three_half"])
    gf = gauge_fields(imm, p0c)
    fd = gf.face_data
    if eta is None:
        eta = resolvable_radius(imm)
    rr = np.maximum(gf.face_r, 1e-300)
    vals = (eta / rr) * kernel(rr / eta) * gf.face_sigma_weight
    theta0 = float(np.sum(np.where(gf.face_ok, vals, 0.0) * fd.area) / eta**2)
    mult = theta0 / (2.0 * np.pi)
    return theta0, mult, abs(mult - round(mult)), float(eta)


def smooth_gauge_bump(target, p0, radius, tilt=0.0):
    """A C^2 Hamiltonian supported in the gauge ball of the given radius.

    Built on the fourth power of the gauge, which is polynomial in the
    ambient coordinates, so the bump is smooth across the base point;
    ``tilt`` mixes in a linear factor to break radial symmetry.
    """
    p0 = base_point_coords(target, p0)
    r4cap = float(radius) ** 4

    def parts(points):
        points = np.atleast_2d(np.asarray(points, float))
        rho, phi, _ = gauge_scalars_at(target, p0, points)
        r4 = rho**4 + 4.0 * phi**2
        core = np.maximum(0.0, 1.0 - r4 / r4cap)
        lin = 1.0 + tilt * (points[..., 1] - p0[1])
        return points, rho, phi, r4, core, lin

    def value(points):
        _, _, _, _, core, lin = parts(points)
        return core**3 * lin

    def grad(points):
        points, rho, phi, r4, core, lin = parts(points)
        grad_rho2, grad_phi = gauge_ambient_gradients(target, p0, points)
        grad_r4 = 2.0 * rho[:, None] ** 2 * grad_rho2 + 8.0 * phi[:, None] * grad_phi
        out = (-3.0 * core**2 / r4cap * lin)[:, None] * grad_r4
        out[:, 1] += core**3 * tilt
        out[core <= 0.0] = 0.0
        return out

    return HamiltonianSpec(h=value, grad=grad, support=("gauge_ball", p0, float(radius)))
