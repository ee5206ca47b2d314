"""Two-point flux finite-volume solver for Darcy flow on the unit square.

Boundary conditions are fixed: pressure ``p_left`` on ``x = 0``, ``p_right`` on
``x = 1``, no flow through ``y = 0`` and ``y = 1``.  The output velocity is the
normal component on every cell face, which plays the role of the lowest-order
Raviart-Thomas degrees of freedom.

Face numbering: the ``(m+1) * m`` faces normal to ``x`` come first, index
``j * (m + 1) + i`` for the face at ``x = i/m`` in cell row ``j``; then the
``m * (m+1)`` faces normal to ``y``, index ``m*(m+1) + j * m + i`` for the face
at ``y = j/m`` in cell column ``i``.  Velocities are positive along ``+x`` and
``+y``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numcore import cg_solve, sparse_system


@dataclass
class DarcyField:
    kappa: np.ndarray
    pressure: np.ndarray
    flux: np.ndarray
    source: np.ndarray

    @property
    def m(self) -> int:
        return self.kappa.shape[0]


def n_faces(m: int) -> int:
    return 2 * m * (m + 1)


def _x_face(m, j, i):
    return j * (m + 1) + i


def _y_face(m, j, i):
    return m * (m + 1) + j * m + i


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def darcy_solve(kappa, f=1.0, p_left: float = 1.0, p_right: float = 0.0, tol: float = 1e-10) -> DarcyField:
    """Cell pressures and face velocities for permeability ``kappa`` (``m x m``).

    ``f`` is a scalar or per-cell source; the discrete equation for each cell is
    (sum of outward face fluxes) = ``f * h**2``.
    """
    kappa = np.asarray(kappa, dtype=float)
    m = kappa.shape[0]
    if kappa.shape != (m, m):
        raise ValueError("kappa must be a square grid")
    if not np.all(kappa > 0):
        raise ValueError("kappa must be strictly positive")
    h = 1.0 / m
    src = np.broadcast_to(np.asarray(f, dtype=float), (m, m)).copy()
    cell = np.arange(m * m).reshape(m, m)

    tx = _harmonic(kappa[:, :-1], kappa[:, 1:])  # (m, m-1) between columns
    ty = _harmonic(kappa[:-1, :], kappa[1:, :])  # (m-1, m) between rows
    rows, cols, vals = [], [], []

    def couple(c1, c2, t):
        rows.extend([c1.ravel(), c2.ravel(), c1.ravel(), c2.ravel()])
        cols.extend([c1.ravel(), c2.ravel(), c2.ravel(), c1.ravel()])
        t = t.ravel()
        vals.extend([t, t, -t, -t])

    couple(cell[:, :-1], cell[:, 1:], tx)
    couple(cell[:-1, :], cell[1:, :], ty)
    t_left, t_right = 2.0 * kappa[:, 0], 2.0 * kappa[:, -1]
    rows.extend([cell[:, 0], cell[:, -1]])
    cols.extend([cell[:, 0], cell[:, -1]])
    vals.extend([t_left, t_right])

    A = sparse_system(m * m, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
    rhs = (src * h * h).ravel()
    rhs[cell[:, 0]] += t_left * p_left
    rhs[cell[:, -1]] += t_right * p_right
    p = cg_solve(A, rhs, tol=tol).reshape(m, m)

    u = np.zeros(n_faces(m))
    ux = np.zeros((m, m + 1))
    ux[:, 1:-1] = tx * (p[:, :-1] - p[:, 1:]) / h
    ux[:, 0] = t_left * (p_left - p[:, 0]) / h
    ux[:, -1] = t_right * (p[:, -1] - p_right) / h
    uy = np.zeros((m + 1, m))
    uy[1:-1, :] = ty * (p[:-1, :] - p[1:, :]) / h
    u[: m * (m + 1)] = ux.ravel()
    u[m * (m + 1) :] = uy.ravel()
    return DarcyField(kappa, p.ravel(), u, src)


def split_flux(flux, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Velocities as ``(ux[m, m+1], uy[m+1, m])`` grids."""
    flux = np.asarray(flux)
    nx = m * (m + 1)
    return flux[..., :nx].reshape(flux.shape[:-1] + (m, m + 1)), flux[..., nx:].reshape(flux.shape[:-1] + (m + 1, m))


def mass_balance_residual(field: DarcyField) -> np.ndarray:
    """Per-cell (outward flux) - (cell-integrated source)."""
    m = field.m
    h = 1.0 / m
    ux, uy = split_flux(field.flux, m)
    out = (ux[:, 1:] - ux[:, :-1]) * h + (uy[1:, :] - uy[:-1, :]) * h
    return out - field.source * h * h


def face_kappa(kappa) -> np.ndarray:
    """Permeability on every face: harmonic mean of the neighbours, or the one cell on the boundary."""
    kappa = np.asarray(kappa, dtype=float)
    m = kappa.shape[-1]
    kx = np.empty(kappa.shape[:-2] + (m, m + 1))
    kx[..., 1:-1] = _harmonic(kappa[..., :, :-1], kappa[..., :, 1:])
    kx[..., 0] = kappa[..., :, 0]
    kx[..., -1] = kappa[..., :, -1]
    ky = np.empty(kappa.shape[:-2] + (m + 1, m))
    ky[..., 1:-1, :] = _harmonic(kappa[..., :-1, :], kappa[..., 1:, :])
    ky[..., 0, :] = kappa[..., 0, :]
    ky[..., -1, :] = kappa[..., -1, :]
    lead = kappa.shape[:-2]
    return np.concatenate([kx.reshape(lead + (-1,)), ky.reshape(lead + (-1,))], axis=-1)


def rel_errors(u_pred, u_true, kappa) -> tuple[float, float]:
    """Relative L2 error ``e1`` and kappa^-1 weighted relative error ``e2``."""
    u_pred = np.asarray(u_pred, dtype=float)
    u_true = np.asarray(u_true, dtype=float)
    if u_pred.shape != u_true.shape:
        raise ValueError("flux vectors are not aligned")
    w = 1.0 / face_kappa(kappa)
    if w.shape != u_true.shape:
        raise ValueError("kappa grid does not match the flux vector")
    if not np.any(u_true):
        raise ValueError("reference flux is identically zero")
    d = u_pred - u_true
    e1 = np.sqrt(np.sum(d * d) / np.sum(u_true * u_true))
    e2 = np.sqrt(np.sum(w * d * d) / np.sum(w * u_true * u_true))
    return float(e1), float(e2)
