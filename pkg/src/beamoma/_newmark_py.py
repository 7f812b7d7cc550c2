"""Pure numpy Newmark stepping of uncoupled modal equations.

Each mode obeys ``q'' + c q' + k q = p(t)`` with unit modal mass. The force is
linear between samples, so the ``substeps`` Newmark steps inside one sample
interval compose into one affine map of the state (u, v, a); that map is
built once per mode and the remaining loop runs over samples only.
"""
import numpy as np


def _step_operator(k, c, h, gamma, beta):
    """(T, b) of one Newmark step: x_new = T x + b f_new, x = (u, v, a)."""
    c0 = 1.0 / (beta * h * h)
    c1 = gamma / (beta * h)
    c2 = 1.0 / (beta * h)
    c3 = 1.0 / (2.0 * beta) - 1.0
    c4 = gamma / beta - 1.0
    c5 = 0.5 * h * (gamma / beta - 2.0)
    c6 = h * (1.0 - gamma)
    c7 = gamma * h
    keff = k + c0 + c1 * c
    n = k.size
    T = np.zeros((n, 3, 3))
    b = np.zeros((n, 3))
    T[:, 0, 0] = (c0 + c * c1) / keff
    T[:, 0, 1] = (c2 + c * c4) / keff
    T[:, 0, 2] = (c3 + c * c5) / keff
    b[:, 0] = 1.0 / keff
    T[:, 2, 0] = c0 * T[:, 0, 0] - c0
    T[:, 2, 1] = c0 * T[:, 0, 1] - c2
    T[:, 2, 2] = c0 * T[:, 0, 2] - c3
    b[:, 2] = c0 * b[:, 0]
    T[:, 1, 0] = c7 * T[:, 2, 0]
    T[:, 1, 1] = 1.0 + c7 * T[:, 2, 1]
    T[:, 1, 2] = c6 + c7 * T[:, 2, 2]
    b[:, 1] = c7 * b[:, 2]
    return T, b


def newmark_modal(omega2, damping, forces, dt, substeps, q0, v0, gamma=0.5, beta=0.25):
    """Integrate uncoupled modal equations sampled at interval ``dt``.

    Parameters
    ----------
    omega2, damping : (n_modes,) arrays
        Modal stiffness w^2 and modal damping 2 zeta w (unit modal mass).
    forces : (n_samples, n_modes) array
        Modal forces at the sample instants; linear in between.
    dt : float
        Sample interval.
    substeps : int
        Newmark steps per sample interval.
    q0, v0 : (n_modes,) arrays
        Initial modal displacement and velocity.

    Returns
    -------
    u, v, a : (n_samples, n_modes) arrays at the sample instants.
    """
    omega2 = np.ascontiguousarray(omega2, dtype=float)
    damping = np.ascontiguousarray(damping, dtype=float)
    forces = np.ascontiguousarray(forces, dtype=float)
    n_samples, n_modes = forces.shape
    if omega2.size != n_modes or damping.size != n_modes:
        raise ValueError("omega2/damping length must equal the number of force columns")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    h = dt / substeps
    T, b = _step_operator(omega2, damping, h, gamma, beta)

    A = np.broadcast_to(np.eye(3), (n_modes, 3, 3)).copy()
    p = np.zeros((n_modes, 3))
    q = np.zeros((n_modes, 3))
    for s in range(1, substeps + 1):
        w = s / substeps
        A = T @ A
        p = np.einsum("mij,mj->mi", T, p) + b * (1.0 - w)
        q = np.einsum("mij,mj->mi", T, q) + b * w

    out = np.empty((n_samples, n_modes, 3))
    x = np.empty((n_modes, 3))
    x[:, 0] = q0
    x[:, 1] = v0
    x[:, 2] = forces[0] - damping * x[:, 1] - omega2 * x[:, 0]
    out[0] = x
    # one sample interval: x <- A x + p f_n + q f_{n+1}
    At = np.ascontiguousarray(A.transpose(0, 2, 1))
    for n in range(n_samples - 1):
        x = (x[:, :, None] * At).sum(axis=1) + p * forces[n, :, None] + q * forces[n + 1, :, None]
        out[n + 1] = x
    return out[:, :, 0].copy(), out[:, :, 1].copy(), out[:, :, 2].copy()
