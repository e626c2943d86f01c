"""The flat five-dimensional contact model (R^5, alpha).

Points are (phi, y) with y in R^4 identified with C^2.  The contact form is
``alpha = -dphi + y1 dy2 - y2 dy1 + y3 dy4 - y4 dy3`` and the metric is the
left-invariant one for which the projection of the horizontal distribution to
R^4 is an isometry and d/dphi has unit length.  Tangent 5-vectors are ordered
(phi-component, y-components).

The module provides the contact form, Legendrian lifts of Lagrangian sample
grids, the anisotropic dilations, Hamiltonian vector fields, and the model
gauge relative to a base point (through the group left translation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintViolationError, GeometryDomainError

#: Reeb-coefficient conventions for Hamiltonian fields. Each pairs the Reeb
#: (vertical) coefficient of the displayed formula with the horizontal scale
#: that makes the field an infinitesimal contactomorphism.
CONVENTIONS = ("thm1", "sec231")


def omega0(y, v):
    """y1 v2 - y2 v1 + y3 v4 - y4 v3 (the symplectic pairing against y)."""
    return (
        y[..., 0] * v[..., 1]
        - y[..., 1] * v[..., 0]
        + y[..., 2] * v[..., 3]
        - y[..., 3] * v[..., 2]
    )


def jc2(v):
    """Multiplication by i on R^4 = C^2: (v1, v2, v3, v4) -> (-v2, v1, -v4, v3)."""
    return np.stack([-v[..., 1], v[..., 0], -v[..., 3], v[..., 2]], axis=-1)


@dataclass(frozen=True)
class HeisenbergPoint:
    phi: float
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, float).reshape(4)
        object.__setattr__(self, "y", y)
        if not (np.isfinite(self.phi) and np.all(np.isfinite(y))):
            raise GeometryDomainError("point has non-finite coordinates")

    def as_vector(self):
        return np.concatenate([[self.phi], self.y])

    @staticmethod
    def from_vector(v):
        v = np.asarray(v, float).reshape(5)
        return HeisenbergPoint(float(v[0]), v[1:])


def contact_form_h(q, x):
    """alpha(X) = -X_phi + y1 X_y2 - y2 X_y1 + y3 X_y4 - y4 X_y3.

    ``q`` may be a HeisenbergPoint or a stacked (..., 5) coordinate array;
    ``x`` is a matching (..., 5) tangent array.
    """
    qv = q.as_vector() if isinstance(q, HeisenbergPoint) else np.asarray(q, float)
    x = np.asarray(x, float)
    return -x[..., 0] + omega0(qv[..., 1:], x[..., 1:])


def frame_components(q, x):
    """Components of a tangent vector in the left-invariant orthonormal frame.

    The first component is along the vertical unit direction d/dphi, the rest
    are the R^4 projection; the squared metric norm is the plain sum of
    squares of the result.
    """
    qv = q.as_vector() if isinstance(q, HeisenbergPoint) else np.asarray(q, float)
    x = np.asarray(x, float)
    c0 = x[..., 0] - omega0(qv[..., 1:], x[..., 1:])
    return np.concatenate([c0[..., None], x[..., 1:]], axis=-1)


def from_frame_components(q, c):
    """Inverse of :func:`frame_components`."""
    qv = q.as_vector() if isinstance(q, HeisenbergPoint) else np.asarray(q, float)
    c = np.asarray(c, float)
    x0 = c[..., 0] + omega0(qv[..., 1:], c[..., 1:])
    return np.concatenate([x0[..., None], c[..., 1:]], axis=-1)


def metric_norm(q, x):
    c = frame_components(q, x)
    return np.sqrt(np.sum(c * c, axis=-1))


def dilate(q: HeisenbergPoint, r: float) -> HeisenbergPoint:
    """Anisotropic dilation (phi, y) -> (phi / r^2, y / r)."""
    if not r > 0:
        raise GeometryDomainError("dilation parameter must be positive")
    return HeisenbergPoint(q.phi / r**2, q.y / r)


def gauge_h(p0: HeisenbergPoint, q: HeisenbergPoint):
    """(rho, phi, r_gauge) of q relative to p0, via the group left translation.

    rho = |y - y0|, the gauge Legendrian coordinate is
    phi - phi0 - omega0(y0, y), and r^4 = rho^4 + 4 phi_gauge^2.
    """
    rho = float(np.linalg.norm(q.y - p0.y))
    phi_g = float(q.phi - p0.phi - omega0(p0.y, q.y))
    r = (rho**4 + 4.0 * phi_g**2) ** 0.25
    return rho, phi_g, r


def hamiltonian_field_h(h_value, h_grad, q, convention="thm1"):
    """Hamiltonian vector field of a scalar h at q, in ambient coordinates.

    ``h_value`` and ``h_grad`` are the scalar and its ambient gradient
    (d/dphi h, d/dy h) at q; ``q`` may be a point or stacked coordinates.
    Under the default convention the field is J grad_H h - 2 h d/dphi; the
    alternative keeps the vertical coefficient +h/2 and rescales the
    horizontal part so the flow still preserves ker alpha.
    """
    qv = q.as_vector() if isinstance(q, HeisenbergPoint) else np.asarray(q, float)
    g = np.asarray(h_grad, float)
    h = np.asarray(h_value, float)
    y = qv[..., 1:]
    dphi_h = g[..., 0]
    dy_h = g[..., 1:]
    # Frame derivatives E_i h = d/dy_i h + omega0(y, e_i) d/dphi h.
    omega_cols = np.stack([-y[..., 1], y[..., 0], -y[..., 3], y[..., 2]], axis=-1)
    eh = dy_h + omega_cols * dphi_h[..., None]
    if convention == "thm1":
        vert = -2.0 * h
        horiz_y = jc2(eh)
    elif convention == "sec231":
        vert = 0.5 * h
        horiz_y = -0.25 * jc2(eh)
    else:
        raise GeometryDomainError(f"unknown Reeb-coefficient convention {convention!r}")
    x_y = horiz_y
    x_phi = vert + omega0(y, x_y)
    return np.concatenate([np.asarray(x_phi)[..., None], x_y], axis=-1)


def volume_form_value_h(q, vectors):
    """alpha ^ dalpha ^ dalpha on five tangent 5-vectors (non-integrability witness)."""
    from itertools import permutations

    qv = q.as_vector() if isinstance(q, HeisenbergPoint) else np.asarray(q, float)
    vs = [np.asarray(v, float) for v in vectors]

    def al(i):
        return contact_form_h(qv, vs[i])

    def da(i, j):
        return 2.0 * omega0(vs[i][1:], vs[j][1:])

    total = 0.0
    for perm in permutations(range(5)):
        sign = 1
        seen = [False] * 5
        for k in range(5):
            if seen[k]:
                continue
            j, length = k, 0
            while not seen[j]:
                seen[j] = True
                j = perm[j]
                length += 1
            if length % 2 == 0:
                sign = -sign
        total += sign * al(perm[0]) * da(perm[1], perm[2]) * da(perm[3], perm[4])
    return total / 4.0


# ---------------------------------------------------------------------------
# Legendrian lifts of Lagrangian sample grids


@dataclass
class LagrangianSampleGrid:
    """Samples of a map into R^4 on a rectangular parameter grid.

    ``u`` has shape (n1, n2, 4); spacings are h1, h2.  A periodic direction
    means the last sample connects back to the first with the same spacing.
    """

    n1: int
    n2: int
    h1: float
    h2: float
    u: np.ndarray
    periodic: tuple = (False, False)

    def __post_init__(self):
        self.u = np.asarray(self.u, float).reshape(self.n1, self.n2, 4)
        self.periodic = (bool(self.periodic[0]), bool(self.periodic[1]))

    def to_json(self):
        return {
            "n1": self.n1,
            "n2": self.n2,
            "h1": self.h1,
            "h2": self.h2,
            "periodic": list(self.periodic),
            "u": [[float(c) for c in row] for row in self.u.reshape(-1, 4)],
        }

    @staticmethod
    def from_json(data):
        return LagrangianSampleGrid(
            n1=int(data["n1"]),
            n2=int(data["n2"]),
            h1=float(data["h1"]),
            h2=float(data["h2"]),
            u=np.asarray(data["u"], float).reshape(int(data["n1"]), int(data["n2"]), 4),
            periodic=tuple(data.get("periodic", [False, False])),
        )


@dataclass
class LiftResult:
    phi: np.ndarray
    periods: tuple
    cell_residuals: np.ndarray
    tol: float


def _edge_increment(ua, ub):
    """Trapezoidal integral of u1 du2 - u2 du1 + u3 du4 - u4 du3 along a segment."""
    return (
        ua[..., 0] * ub[..., 1]
        - ua[..., 1] * ub[..., 0]
        + ua[..., 2] * ub[..., 3]
        - ua[..., 3] * ub[..., 2]
    )


def lagrangian_cell_residuals(grid: LagrangianSampleGrid):
    """Loop integrals of the lift one-form around each grid cell.

    These are (twice) the discrete symplectic areas of the cells; they vanish
    exactly when the sampled map is Lagrangian for the trapezoidal rule.
    """
    u = grid.u
    n1c = grid.n1 if grid.periodic[0] else grid.n1 - 1
    n2c = grid.n2 if grid.periodic[1] else grid.n2 - 1
    i1 = (np.arange(n1c) + 1) % grid.n1
    i2 = (np.arange(n2c) + 1) % grid.n2
    u00 = u[:n1c, :n2c]
    u10 = u[i1][:, :n2c]
    u01 = u[:n1c][:, i2]
    u11 = u[i1][:, i2]
    return (
        _edge_increment(u00, u10)
        + _edge_increment(u10, u11)
        - _edge_increment(u01, u11)
        - _edge_increment(u00, u01)
    )


def lagrangian_tolerance(grid: LagrangianSampleGrid):
    """Default residual tolerance: 1e-8 * cell area * max |du|^2."""
    u = grid.u
    du1 = np.diff(u, axis=0) / grid.h1
    du2 = np.diff(u, axis=1) / grid.h2
    max_du_sq = 0.0
    if du1.size:
        max_du_sq = max(max_du_sq, float(np.max(np.sum(du1**2, axis=-1))))
    if du2.size:
        max_du_sq = max(max_du_sq, float(np.max(np.sum(du2**2, axis=-1))))
    return 1e-8 * grid.h1 * grid.h2 * max(max_du_sq, 1e-30)


def legendrian_lift(grid: LagrangianSampleGrid, base_value=0.0, tol_lag=None) -> LiftResult:
    """Integrate the Legendrian coordinate over the grid, rows then columns.

    Raises on non-Lagrangian input; on periodic directions the accumulated
    phi-increment around the closed loop is returned as the period instead of
    being treated as a failure.
    """
    tol = lagrangian_tolerance(grid) if tol_lag is None else float(tol_lag)
    res = lagrangian_cell_residuals(grid)
    if res.size and np.max(np.abs(res)) > tol:
        worst = tuple(
            int(w) for w in np.unravel_index(int(np.argmax(np.abs(res))), res.shape)
        )
        raise ConstraintViolationError(
            f"grid is not Lagrangian: cell {worst} has loop residual "
            f"{res[worst]:.3e} > tol {tol:.3e}",
            worst=worst,
            residual=float(res[worst]),
        )
    u = grid.u
    phi = np.empty((grid.n1, grid.n2))
    phi[0, 0] = base_value
    inc_rows = _edge_increment(u[:-1, 0], u[1:, 0])
    phi[1:, 0] = base_value + np.cumsum(inc_rows)
    inc_cols = _edge_increment(u[:, :-1], u[:, 1:])
    phi[:, 1:] = phi[:, [0]] + np.cumsum(inc_cols, axis=1)

    period1 = 0.0
    period2 = 0.0
    if grid.periodic[0]:
        period1 = float(np.sum(inc_rows) + _edge_increment(u[-1, 0], u[0, 0]))
    if grid.periodic[1]:
        period2 = float(np.sum(inc_cols[0]) + _edge_increment(u[0, -1], u[0, 0]))
    return LiftResult(phi=phi, periods=(period1, period2), cell_residuals=res, tol=tol)
