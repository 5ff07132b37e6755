"""Finite n-dimensional lattice, field slices and the discrete Laplacian.

A field slice is a complex ``ndarray`` of shape ``(*dims, N)`` in C order, so
sites are row-major with the last axis fastest and the ``N`` components of a
site are adjacent.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

BOUNDARIES = ("periodic", "zero")


@dataclass(frozen=True)
class LatticeShape:
    dims: tuple[int, ...]
    epsilon: float = 1.0
    boundary: str = "periodic"

    def __post_init__(self):
        dims = tuple(int(d) for d in np.atleast_1d(self.dims))
        object.__setattr__(self, "dims", dims)
        if not 1 <= len(dims) <= 3:
            raise ConfigError(f"supported dimensions are 1..3, got {len(dims)}")
        if any(d < 3 for d in dims):
            raise ConfigError(f"every axis needs at least 3 sites, got {dims}")
        if not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            raise ConfigError("epsilon must be a positive finite number")
        if self.boundary not in BOUNDARIES:
            raise ConfigError(f"boundary must be one of {BOUNDARIES}")

    @property
    def n(self):
        return len(self.dims)

    @property
    def num_sites(self):
        return int(np.prod(self.dims))

    @property
    def cell_volume(self):
        return float(self.epsilon) ** self.n

    def field_shape(self, N):
        return (*self.dims, N)

    def zeros(self, N):
        return np.zeros(self.field_shape(N), dtype=complex)

    def neighbor(self, index, axis, sign):
        """Site index of ``X + sign * e_axis``; ``None`` off a zero boundary."""
        idx = list(index)
        idx[axis] += sign
        L = self.dims[axis]
        if self.boundary == "periodic":
            idx[axis] %= L
        elif not 0 <= idx[axis] < L:
            return None
        return tuple(idx)

    def check(self, psi):
        psi = np.asarray(psi)
        if psi.ndim != self.n + 1 or psi.shape[:-1] != self.dims:
            raise ConfigError(f"slice shape {psi.shape} does not conform to lattice {self.dims}")
        return psi


def shift(psi, axis, sign, boundary):
    """Array whose value at ``X`` is ``psi[X + sign * e_axis]``."""
    if boundary == "periodic":
        return np.roll(psi, -sign, axis=axis)
    out = np.zeros_like(psi)
    L = psi.shape[axis]
    dst = [slice(None)] * psi.ndim
    src = [slice(None)] * psi.ndim
    if sign > 0:
        dst[axis], src[axis] = slice(0, L - 1), slice(1, L)
    else:
        dst[axis], src[axis] = slice(1, L), slice(0, L - 1)
    out[tuple(dst)] = psi[tuple(src)]
    return out


def second_difference_sum(psi, shape):
    """``sum_j (psi[X+e_j] - 2 psi[X] + psi[X-e_j])`` without the ``1/eps^2``."""
    acc = np.zeros_like(psi)
    for j in range(shape.n):
        acc = acc + (shift(psi, j, +1, shape.boundary) - 2.0 * psi + shift(psi, j, -1, shape.boundary))
    return acc


def laplacian(psi, shape):
    psi = shape.check(psi)
    return second_difference_sum(psi, shape) / shape.epsilon**2


def pairwise_sum(values):
    """Fixed binary-tree sum of a real array, independent of how it was produced."""
    a = np.ascontiguousarray(values, dtype=float).ravel()
    if a.size == 0:
        return 0.0
    while a.size > 1:
        if a.size % 2:
            a = np.append(a, 0.0)
        a = a[0::2] + a[1::2]
    return float(a[0])


def site_norm_sq(psi):
    """``|psi_X|^2`` per site, components summed in fixed order."""
    acc = psi[..., 0].real ** 2 + psi[..., 0].imag ** 2
    for a in range(1, psi.shape[-1]):
        acc = acc + (psi[..., a].real ** 2 + psi[..., a].imag ** 2)
    return acc


def l2_norm_sq(psi, shape):
    """``sum_X |psi_X|^2 * eps^n``."""
    psi = shape.check(psi)
    return pairwise_sum(site_norm_sq(psi)) * shape.cell_volume


@dataclass
class SimState:
    """Two consecutive slices ``prev = psi^{t-1}``, ``curr = psi^t``; ``step_index = t``."""

    prev: np.ndarray
    curr: np.ndarray
    tau: float
    shape: LatticeShape
    step_index: int = 1

    def __post_init__(self):
        self.prev = np.asarray(self.prev, dtype=complex)
        self.curr = np.asarray(self.curr, dtype=complex)
        self.shape.check(self.prev)
        self.shape.check(self.curr)
        if self.prev.shape != self.curr.shape:
            raise ConfigError("prev and curr slices differ in shape")
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise ConfigError("tau must be positive")
        if not (np.all(np.isfinite(self.prev)) and np.all(np.isfinite(self.curr))):
            raise ConfigError("field contains non-finite values")

    @property
    def N(self):
        return self.prev.shape[-1]

    @property
    def ratio(self):
        return self.tau / self.shape.epsilon

    def swapped(self):
        return SimState(self.curr, self.prev, self.tau, self.shape, self.step_index)


# snapshot files


def write_slice(path, psi):
    arr = np.ascontiguousarray(psi, dtype=complex)
    arr.view(np.float64).astype("<f8").tofile(path)


def read_slice(path, dims, N):
    raw = np.fromfile(path, dtype="<f8")
    expected = 2 * N * int(np.prod(dims))
    if raw.size != expected:
        raise ConfigError(f"{path}: expected {expected} binary64 values, found {raw.size}")
    return raw.astype(np.float64).view(complex).reshape(*dims, N)


def write_snapshot(directory, state, stem=None):
    """Write both slices plus a JSON sidecar; returns the sidecar path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = stem or f"snap_{state.step_index:08d}"
    prev_name, curr_name = f"{stem}_prev.bin", f"{stem}_curr.bin"
    write_slice(directory / prev_name, state.prev)
    write_slice(directory / curr_name, state.curr)
    sidecar = {
        "n": state.shape.n,
        "dims": list(state.shape.dims),
        "N": state.N,
        "epsilon": state.shape.epsilon,
        "tau": state.tau,
        "step_index": state.step_index,
        "boundary": state.shape.boundary,
        "prev_file": prev_name,
        "curr_file": curr_name,
    }
    path = directory / f"{stem}.json"
    path.write_text(json.dumps(sidecar, indent=2) + "\n")
    return path


def read_snapshot(sidecar_path):
    sidecar_path = Path(sidecar_path)
    if not sidecar_path.exists():
        raise ConfigError(f"snapshot sidecar not found: {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    shape = LatticeShape(tuple(meta["dims"]), float(meta["epsilon"]), meta.get("boundary", "periodic"))
    base = sidecar_path.parent
    prev = read_slice(base / meta["prev_file"], shape.dims, int(meta["N"]))
    curr = read_slice(base / meta["curr_file"], shape.dims, int(meta["N"]))
    return SimState(prev, curr, float(meta["tau"]), shape, int(meta["step_index"]))
