"""Pointwise Hamiltonian vector fields on the two supported targets.

Both targets carry a one-parameter family of infinitesimal contactomorphisms
indexed by a scalar function; the two published Reeb-coefficient conventions
are realised as rescalings of that family, each self-consistent (the
horizontal part is scaled so the flow preserves the contact kernel, which the
contactomorphism oracle verifies numerically).
"""

from __future__ import annotations

import numpy as np

from . import heisenberg as hs
from . import stiefel as st
from .errors import GeometryDomainError

TARGET_STIEFEL = "stiefel"
TARGET_HEISENBERG = "heisenberg"

AMBIENT_DIM = {TARGET_STIEFEL: 8, TARGET_HEISENBERG: 5}


def _stiefel_scale(convention):
    if convention == "thm1":
        return 2.0
    if convention == "sec231":
        return -0.5
    raise GeometryDomainError(f"unknown Reeb-coefficient convention {convention!r}")


def stiefel_hamiltonian_field(h_value, h_grad, q, convention="thm1"):
    """J grad_H(c) - c R with c = scale * h, in stacked (..., 8) coordinates."""
    q = np.asarray(q, float)
    a, b = q[..., :4], q[..., 4:]
    g = np.asarray(h_grad, float)
    m = _stiefel_scale(convention)
    c = m * np.asarray(h_value, float)
    gv, gw = st.project_tangent_raw(a, b, m * g[..., :4], m * g[..., 4:])
    gv, gw = st.horizontal_project_raw(a, b, gv, gw)
    jv, jw = st.jh_raw(gv, gw)
    rv, rw = st.reeb_raw(a, b)
    return np.concatenate(
        [jv - c[..., None] * rv, jw - c[..., None] * rw], axis=-1
    )


def hamiltonian_field(target, h_value, h_grad, q, convention="thm1"):
    """Dispatch to the target-specific Hamiltonian field, ambient coordinates."""
    if target == TARGET_STIEFEL:
        return stiefel_hamiltonian_field(h_value, h_grad, q, convention)
    if target == TARGET_HEISENBERG:
        return hs.hamiltonian_field_h(h_value, h_grad, q, convention)
    raise GeometryDomainError(f"unknown target {target!r}")


def contact_form_ambient(target, q, x):
    """The contact form on ambient tangent coordinates at stacked points q."""
    q = np.asarray(q, float)
    x = np.asarray(x, float)
    if target == TARGET_STIEFEL:
        return st.alpha_raw(q[..., :4], q[..., 4:], x[..., :4], x[..., 4:])
    if target == TARGET_HEISENBERG:
        return hs.contact_form_h(q, x)
    raise GeometryDomainError(f"unknown target {target!r}")


def move(target, q, delta):
    """Move ambient coordinates by delta, re-retracting onto the target."""
    q = np.asarray(q, float)
    delta = np.asarray(delta, float)
    if target == TARGET_STIEFEL:
        a, b = st.retract_raw(
            q[..., :4] + delta[..., :4], q[..., 4:] + delta[..., 4:]
        )
        return np.concatenate([a, b], axis=-1)
    if target == TARGET_HEISENBERG:
        return q + delta
    raise GeometryDomainError(f"unknown target {target!r}")


def vertical_with_alpha(target, q, s):
    """The vertical (Reeb-direction) vector whose contact-form value is s."""
    q = np.asarray(q, float)
    s = np.asarray(s, float)
    if target == TARGET_STIEFEL:
        rv, rw = st.reeb_raw(q[..., :4], q[..., 4:])
        return -0.5 * s[..., None] * np.concatenate([rv, rw], axis=-1)
    if target == TARGET_HEISENBERG:
        out = np.zeros(q.shape[:-1] + (5,))
        out[..., 0] = -s
        return out
    raise GeometryDomainError(f"unknown target {target!r}")


def random_horizontal(target, rng, q):
    """A random unit horizontal vector at stacked ambient points q."""
    q = np.asarray(q, float)
    if target == TARGET_STIEFEL:
        a, b = q[..., :4], q[..., 4:]
        v, w = st.random_horizontal_raw(rng, a, b)
        x = np.concatenate([v, w], axis=-1)
    else:
        c = rng.standard_normal(q.shape[:-1] + (5,))
        c[..., 0] = 0.0
        x = hs.from_frame_components(q, c)
    n = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    # For the flat model the frame components are metric-orthonormal, so
    # normalising ambient coordinates is only exact on the frame side.
    if target == TARGET_HEISENBERG:
        n = hs.metric_norm(q, x)[..., None]
    return x / n
