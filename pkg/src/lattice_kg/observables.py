"""Discrete conserved quantities attached to a consecutive slice pair.

Every functional here reads ``state.prev`` as ``psi^t`` and ``state.curr`` as
``psi^{t+1}``; the value belongs to time ``t = state.step_index - 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import SimState, l2_norm_sq, pairwise_sum, shift, site_norm_sq
from .potential import poly_value

# imaginary part allowed in a "real" field, relative to the slice norm
REAL_FIELD_TOL = 1e-15


def _potential_density(potential, lam):
    rows = potential.table()
    if rows.shape[0] > 1:
        rows = rows.reshape(*lam.shape, rows.shape[1])
    else:
        rows = rows[0]
    return poly_value(lam, rows, potential.mass_sq_half)


def energy_density(state: SimState, potential):
    """Per-site energy density (without the ``eps^n`` weight)."""
    shape = state.shape
    old, new = state.prev, state.curr
    eps2 = shape.epsilon**2
    kinetic = (1.0 / state.tau**2 - shape.n / eps2) * site_norm_sq(new - old) / 2.0
    gradient = np.zeros(shape.dims)
    for j in range(shape.n):
        for sign in (+1, -1):
            gradient = gradient + site_norm_sq(new - shift(old, j, sign, shape.boundary))
    gradient = gradient / (4.0 * eps2)
    pot = (_potential_density(potential, site_norm_sq(new)) + _potential_density(potential, site_norm_sq(old))) / 2.0
    return kinetic + gradient + pot


def energy(state: SimState, potential):
    return pairwise_sum(energy_density(state, potential)) * state.shape.cell_volume


def is_real_field(state: SimState):
    scale = max(math.sqrt(l2_norm_sq(state.prev, state.shape)), math.sqrt(l2_norm_sq(state.curr, state.shape)))
    worst = max(np.max(np.abs(state.prev.imag), initial=0.0), np.max(np.abs(state.curr.imag), initial=0.0))
    return worst <= REAL_FIELD_TOL * scale


def energy_sv(state: SimState, potential):
    """Original one-dimensional real-field energy of the scheme.

    Scaled by ``eps`` so it shares the measure of :func:`energy`.  Raises
    ``ValueError`` for ``n > 1`` or complex data.
    """
    shape = state.shape
    if shape.n != 1:
        raise ValueError("energy_sv is defined for one spatial dimension only")
    if not is_real_field(state):
        raise ValueError("energy_sv requires a real-valued field")
    old, new = state.prev.real, state.curr.real
    kinetic = np.sum((new - old) ** 2, axis=-1) / state.tau**2
    cross = np.sum(
        (shift(new, 0, +1, shape.boundary) - new) * (shift(old, 0, +1, shape.boundary) - old), axis=-1
    ) / shape.epsilon**2
    pot = _potential_density(potential, site_norm_sq(state.curr)) + _potential_density(potential, site_norm_sq(state.prev))
    return 0.5 * pairwise_sum(kinetic + cross + pot) * shape.epsilon


def charge(state: SimState):
    """Return ``(q_raw, q_phys)``.

    ``q_raw = (i / 4 tau) eps^n sum_X sum_j sum_± [conj(psi^t_{X±e_j}) . psi^{t+1}_X - c.c.]``.
    The bracket is ``2i Im(...)``, so ``q_raw = -(eps^n / 2 tau) sum Im(...)``,
    real by construction.  ``q_phys = q_raw / n``.
    """
    shape = state.shape
    old, new = state.prev, state.curr
    acc = np.zeros(shape.dims)
    for j in range(shape.n):
        for sign in (+1, -1):
            nb = shift(old, j, sign, shape.boundary)
            # Im(conj(nb) . new), components in fixed order
            im = nb[..., 0].real * new[..., 0].imag - nb[..., 0].imag * new[..., 0].real
            for a in range(1, state.N):
                im = im + (nb[..., a].real * new[..., a].imag - nb[..., a].imag * new[..., a].real)
            acc = acc + im
    # + 0.0 turns a -0.0 from an all-real field into 0.0
    q_raw = -pairwise_sum(acc) * shape.cell_volume / (2.0 * state.tau) + 0.0
    return q_raw, q_raw / shape.n


def apriori_bound(E0, m):
    return 4.0 * E0 / (m * m)


def apriori_check(record, E0, m):
    """``||psi^t||^2 eps^n <= 4 E0 / m^2`` with a ``1e-9`` relative allowance."""
    if not m > 0:
        raise ValueError("the a priori bound needs m > 0")
    return record.l2_sq <= apriori_bound(E0, m) * (1.0 + 1e-9)


@dataclass
class ObservableRecord:
    t: int
    energy: float
    energy_sv: float | None
    charge_raw: float
    charge_phys: float
    l2_sq: float
    apriori_margin: float | None
    max_site_iters: int = 0


def observe(state: SimState, potential, E0=None, max_site_iters=0, with_sv=True):
    """Record for the pair ``(psi^t, psi^{t+1}) = (state.prev, state.curr)``."""
    E = energy(state, potential)
    sv = None
    if with_sv and state.shape.n == 1 and is_real_field(state):
        sv = energy_sv(state, potential)
    q_raw, q_phys = charge(state)
    l2 = l2_norm_sq(state.prev, state.shape)
    m = potential.mass
    margin = None
    if m > 0:
        margin = apriori_bound(E if E0 is None else E0, m) - l2
    return ObservableRecord(state.step_index - 1, E, sv, q_raw, q_phys, l2, margin, max_site_iters)
