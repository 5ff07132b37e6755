"""Polynomial nonlinearity ``V_X(lam) = m^2/2 * lam + sum_q C_q lam^(q+1)``.

The divided difference ``B(lam, mu) = (V(lam) - V(mu)) / (lam - mu)`` is never
formed as a quotient.  For a polynomial it equals

    m^2/2 + sum_q C_q b_q(lam, mu),    b_q = sum_{k=0}^{q} lam^(q-k) mu^k,

which is evaluated term by term.  Terms ``k`` and ``q - k`` are added in pairs
so the result is bitwise symmetric in its two arguments.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError

# |psi|^2 rounding slack below zero that is silently clamped
NEG_CLAMP = 1e-15


def _powers(x, order):
    out = [np.ones_like(x)]
    for _ in range(order):
        out.append(out[-1] * x)
    return out


def _check_lambda(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < -NEG_CLAMP) or np.any(np.isnan(lam)):
        raise DomainError(f"argument must be >= 0, got min {np.nanmin(lam)!r}")
    return np.maximum(lam, 0.0)


def poly_value(lam, coeffs, mass_sq_half=0.0):
    """``V(lam)`` for coefficient rows ``coeffs[..., q]`` (Horner form)."""
    p = coeffs.shape[-1] - 1
    acc = coeffs[..., p] * np.ones_like(lam)
    for q in range(p - 1, -1, -1):
        acc = acc * lam + coeffs[..., q]
    return (acc + mass_sq_half) * lam


def poly_dvalue(lam, coeffs, mass_sq_half=0.0):
    """``dV/dlam = m^2/2 + sum_q (q+1) C_q lam^q``."""
    p = coeffs.shape[-1] - 1
    acc = (p + 1) * coeffs[..., p] * np.ones_like(lam)
    for q in range(p - 1, -1, -1):
        acc = acc * lam + (q + 1) * coeffs[..., q]
    return acc + mass_sq_half


def poly_ddvalue(lam, coeffs):
    """``d^2V/dlam^2``; the mass term drops out."""
    p = coeffs.shape[-1] - 1
    if p == 0:
        return np.zeros_like(np.asarray(lam, dtype=float))
    acc = (p + 1) * p * coeffs[..., p] * np.ones_like(lam)
    for q in range(p - 1, 0, -1):
        acc = acc * lam + (q + 1) * q * coeffs[..., q]
    return acc


def bezout_terms(lam, mu, order):
    """Return lists ``b[q]`` and ``db[q]`` (``d/dlam b_q``) for ``q = 0..order``."""
    lp = _powers(lam, order)
    mp = _powers(mu, order)
    b = []
    db = []
    for q in range(order + 1):
        acc = np.zeros_like(lp[0] * mp[0])
        for k in range((q + 1) // 2):
            acc = acc + (lp[q - k] * mp[k] + lp[k] * mp[q - k])
        if q % 2 == 0:
            acc = acc + lp[q // 2] * mp[q // 2]
        b.append(acc)
        dacc = np.zeros_like(acc)
        for k in range(q):
            dacc = dacc + (q - k) * (lp[q - k - 1] * mp[k])
        db.append(dacc)
    return b, db


def divided_difference(lam, mu, coeffs, mass_sq_half=0.0):
    b, _ = bezout_terms(lam, mu, coeffs.shape[-1] - 1)
    acc = mass_sq_half + coeffs[..., 0] * b[0]
    for q in range(1, len(b)):
        acc = acc + coeffs[..., q] * b[q]
    return acc


def divided_difference_dlam(lam, mu, coeffs):
    _, db = bezout_terms(lam, mu, coeffs.shape[-1] - 1)
    acc = np.zeros_like(db[0]) + 0.0 * coeffs[..., 0]
    for q in range(1, len(db)):
        acc = acc + coeffs[..., q] * db[q]
    return acc


def divided_difference_and_dlam(lam, mu, coeffs, mass_sq_half=0.0):
    """``(B, dB/dlam)`` sharing one power table; used in the per-site solve."""
    b, db = bezout_terms(lam, mu, coeffs.shape[-1] - 1)
    B = mass_sq_half + coeffs[..., 0] * b[0]
    dB = np.zeros_like(B)
    for q in range(1, len(b)):
        B = B + coeffs[..., q] * b[q]
        dB = dB + coeffs[..., q] * db[q]
    return B, dB


@dataclass(frozen=True)
class PolynomialPotential:
    """``V_X(lam) = mass_sq_half * lam + sum_q C_{X,q} lam^(q+1)``.

    ``coeffs`` is the homogeneous coefficient list.  When ``site_coeffs`` is
    given it is a dense ``(num_sites, p+1)`` array in row-major site order and
    takes precedence over ``coeffs``.
    """

    mass_sq_half: float = 0.0
    coeffs: np.ndarray = field(default_factory=lambda: np.zeros(1))
    site_coeffs: np.ndarray | None = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ConfigError("coefficient list must be a non-empty 1-D sequence")
        object.__setattr__(self, "coeffs", c)
        if self.site_coeffs is not None:
            sc = np.asarray(self.site_coeffs, dtype=float)
            if sc.ndim == 1:
                sc = sc[:, None]
            if sc.ndim != 2 or sc.shape[1] == 0:
                raise ConfigError("site coefficients must be a (sites, degree+1) table")
            object.__setattr__(self, "site_coeffs", sc)
            sc.setflags(write=False)
        c.setflags(write=False)
        if not np.isfinite(self.mass_sq_half) or self.mass_sq_half < 0:
            raise ConfigError("mass term m^2/2 must be finite and >= 0")

    @classmethod
    def from_mass(cls, mass=0.0, coeffs=(0.0,), site_coeffs=None):
        return cls(0.5 * float(mass) ** 2, np.asarray(coeffs, dtype=float), site_coeffs)

    @property
    def mass(self):
        return float(np.sqrt(2.0 * self.mass_sq_half))

    @property
    def homogeneous(self):
        return self.site_coeffs is None

    @property
    def degree(self):
        return self.table().shape[1] - 1

    def table(self):
        """Coefficient rows, shape ``(1, p+1)`` or ``(num_sites, p+1)``."""
        if self.site_coeffs is None:
            return self.coeffs[None, :]
        return self.site_coeffs

    def distinct_rows(self):
        return np.unique(self.table(), axis=0)

    def rows(self, sites=None):
        """Coefficient rows for a flat site range, broadcastable against it."""
        if self.site_coeffs is None:
            return self.coeffs[None, :]
        if sites is None:
            return self.site_coeffs
        return self.site_coeffs[sites]

    def check_sites(self, num_sites):
        if self.site_coeffs is not None and self.site_coeffs.shape[0] != num_sites:
            raise ConfigError(
                f"site coefficient table has {self.site_coeffs.shape[0]} rows, "
                f"lattice has {num_sites} sites"
            )

    def has_nonnegative_interaction(self):
        """True when every coefficient beyond the mass term is >= 0 (``W >= 0``)."""
        return bool(np.all(self.table() >= 0.0))

    def higher_coeffs_nonnegative(self):
        """True when every coefficient of degree >= 2 in ``lam`` is >= 0."""
        return bool(np.all(self.table()[:, 1:] >= 0.0))

    def is_linear(self):
        return bool(np.all(self.table()[:, 1:] == 0.0))

    def _row(self, x):
        if self.site_coeffs is None or x is None:
            if self.site_coeffs is not None:
                raise DomainError("site-dependent potential needs a site index")
            return self.coeffs
        return self.site_coeffs[int(x)]

    # scalar surface

    def eval_V(self, x, lam):
        lam = _check_lambda(lam)
        return float(poly_value(lam, self._row(x), self.mass_sq_half))

    def eval_dV(self, x, lam):
        lam = _check_lambda(lam)
        return float(poly_dvalue(lam, self._row(x), self.mass_sq_half))

    def eval_B(self, x, lam, mu):
        lam = _check_lambda(lam)
        mu = _check_lambda(mu)
        return float(divided_difference(lam, mu, self._row(x), self.mass_sq_half))

    def eval_dB(self, x, lam, mu):
        lam = _check_lambda(lam)
        mu = _check_lambda(mu)
        return float(divided_difference_dlam(lam, mu, self._row(x)))

    def to_config(self):
        out = {"mass": self.mass, "coeffs": self.coeffs.tolist()}
        if self.site_coeffs is not None:
            out["site_coeffs"] = self.site_coeffs.tolist()
        return out


def load_site_coeffs(path):
    """Read one coefficient row per site (row-major site order) from CSV."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"site coefficient file not found: {path}")
    with path.open(newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{path}: rows must be non-empty and of equal length")
    return np.array(rows, dtype=float)


def potential_from_config(spec, base_dir=None):
    """Build a potential from ``{"mass": m, "coeffs": [...]}`` or
    ``{"mass": m, "site_coeffs_file": path}``."""
    if not isinstance(spec, dict):
        raise ConfigError("potential must be a JSON object")
    mass = float(spec.get("mass", 0.0))
    if mass < 0:
        raise ConfigError("mass must be >= 0")
    if "site_coeffs_file" in spec:
        path = Path(spec["site_coeffs_file"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        table = load_site_coeffs(path)
        return PolynomialPotential.from_mass(mass, table[0], site_coeffs=table)
    if "site_coeffs" in spec:
        table = np.asarray(spec["site_coeffs"], dtype=float)
        return PolynomialPotential.from_mass(mass, table[0], site_coeffs=table)
    if "coeffs" not in spec:
        raise ConfigError("potential needs 'coeffs' or 'site_coeffs_file'")
    coeffs = spec["coeffs"]
    if len(coeffs) == 0:
        raise ConfigError("empty coefficient list")
    return PolynomialPotential.from_mass(mass, coeffs)
