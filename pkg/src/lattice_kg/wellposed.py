"""Solvability constants and admissible time steps for polynomial potentials.

Three thresholds bound the time step ``tau``:

* ``tau1`` from ``k1 = inf dV/dlam`` guarantees a per-site solution exists;
* ``tau2`` from ``k2 = inf K^±`` guarantees it is unique, where
  ``K^±(lam, mu) = B + 2 dB/dlam (lam ± sqrt(lam mu))``;
* ``tau3`` from ``k3 = inf C_{X,0}`` is an explicit uniqueness range for the
  class of potentials of degree <= 4 with nonnegative higher coefficients.

Each threshold is ``sqrt(-1/k)`` for ``k < 0`` and ``+inf`` otherwise, and an
admissible step satisfies ``tau < threshold`` strictly.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ClassificationError
from .potential import (
    PolynomialPotential,
    divided_difference,
    divided_difference_and_dlam,
    poly_dvalue,
)

DEFAULT_SCAN_DOMAIN = 10.0
DEFAULT_GRID = 1000
W4_MAX_DEGREE = 4
# rows of the (grid x grid) scan evaluated per block
_BLOCK = 128


def tau_threshold(k):
    if k == -math.inf:
        return 0.0
    if k < 0:
        return math.sqrt(-1.0 / k)
    return math.inf


def _trimmed(row):
    nz = np.nonzero(row)[0]
    return row[: nz[-1] + 1] if nz.size else row[:1]


def _row_k1(row, mass_sq_half):
    row = _trimmed(np.asarray(row, dtype=float))
    p = row.size - 1
    if p == 0:
        return mass_sq_half + row[0]
    if row[p] < 0:
        return -math.inf
    if p == 1:
        # dV/dlam is affine with positive slope
        return mass_sq_half + row[0]
    # critical points of dV/dlam: roots of d^2V/dlam^2 = sum_{q>=1} (q+1) q C_q lam^(q-1)
    d2 = np.array([(q + 1) * q * row[q] for q in range(1, p + 1)])
    try:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            roots = np.polynomial.polynomial.polyroots(d2)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"cannot locate critical points of dV/dlam for coefficients {row.tolist()}") from exc
    roots = roots[np.isfinite(roots)]
    scale = max(1.0, float(np.max(np.abs(roots)))) if roots.size else 1.0
    near_real = roots[np.abs(roots.imag) <= 1e-7 * scale].real
    candidates = np.concatenate([[0.0], np.maximum(near_real, 0.0)])
    values = poly_dvalue(candidates, row, mass_sq_half)
    return float(np.min(values))


def compute_k1(potential: PolynomialPotential) -> float:
    """Exact ``inf_{X, lam >= 0} dV_X/dlam``; ``-inf`` for a downward leading term."""
    return min(_row_k1(row, potential.mass_sq_half) for row in potential.distinct_rows())


def _k_pm_min(lam, mu, row, mass_sq_half):
    B, dB = divided_difference_and_dlam(lam, mu, row, mass_sq_half)
    root = np.sqrt(lam * mu)
    return np.minimum(B + 2.0 * dB * (lam + root), B + 2.0 * dB * (lam - root))


def k_pm(potential, lam, mu, sign, x=None):
    """``K^±_X(lam, mu)`` for one sign, vectorized over ``lam`` and ``mu``."""
    row = potential.table()[0 if x is None else int(x)]
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    B, dB = divided_difference_and_dlam(lam, mu, row, potential.mass_sq_half)
    return B + 2.0 * dB * (lam + sign * np.sqrt(lam * mu))


def _grid_min(fn, scan_domain, grid):
    axis = np.linspace(0.0, scan_domain, grid)
    best = math.inf
    for start in range(0, grid, _BLOCK):
        lam = axis[start : start + _BLOCK, None]
        vals = fn(lam, axis[None, :])
        best = min(best, float(np.min(vals)))
    return best


def scan_k2(potential, scan_domain=DEFAULT_SCAN_DOMAIN, grid=DEFAULT_GRID):
    """Minimum of ``K^±`` over both signs, all sites and a uniform grid on ``[0, L]^2``."""
    m2h = potential.mass_sq_half
    return min(
        _grid_min(lambda l, m, r=row: _k_pm_min(l, m, r, m2h), scan_domain, grid)
        for row in potential.distinct_rows()
    )


def estimate_k2(potential, scan_domain=DEFAULT_SCAN_DOMAIN, grid=DEFAULT_GRID):
    """Estimate ``k2``; returns ``(k2_est, exact)``.

    When every coefficient above the linear one is >= 0 the value is exact:
    each monomial ``lam^(q+1)``, ``q >= 1``, contributes a ``K^±`` that is
    homogeneous of degree ``q`` and positive on the unit arc, so the infimum is
    the linear coefficient, attained at the origin.  Otherwise the grid
    minimum is returned.  Either way the result is capped by ``k1`` since
    ``K^-(lam, lam) = dV/dlam(lam)``.
    """
    if grid < 100:
        raise ValueError("grid must have at least 100 points per axis")
    table = potential.table()
    k1 = compute_k1(potential)
    if np.all(table[:, 1:] >= 0.0):
        k2 = float(np.min(potential.mass_sq_half + table[:, 0]))
        return min(k2, k1), True
    return min(scan_k2(potential, scan_domain, grid), k1), False


def classify_w4(potential):
    """Raise ``ClassificationError`` unless the potential has degree <= 4 and
    nonnegative coefficients for ``q = 1..4`` at every site."""
    table = potential.table()
    if table.shape[1] - 1 > W4_MAX_DEGREE:
        extra = table[:, W4_MAX_DEGREE + 1 :]
        bad = np.argwhere(extra != 0.0)
        if bad.size:
            site, q = bad[0]
            raise ClassificationError(
                f"coefficient C_{q + W4_MAX_DEGREE + 1} (lam^{q + W4_MAX_DEGREE + 2}) is nonzero "
                f"at site {site}; at most C_{W4_MAX_DEGREE} is allowed"
            )
    upper = table[:, 1 : W4_MAX_DEGREE + 1]
    bad = np.argwhere(upper < 0.0)
    if bad.size:
        site, q = bad[0]
        raise ClassificationError(
            f"coefficient C_{q + 1} (lam^{q + 2}) is negative ({upper[site, q]}) at site {site}"
        )


def compute_k3_tau3(potential):
    classify_w4(potential)
    k3 = float(np.min(potential.mass_sq_half + potential.table()[:, 0]))
    return k3, tau_threshold(k3)


def lower_bound_c(potential, tau):
    """``c = inf (1 + tau^2 B) = 1 + tau^2 k1``; non-positive means refuse to step."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return lower_bound_c_from_k1(compute_k1(potential), tau)


def scan_c(potential, tau, scan_domain=DEFAULT_SCAN_DOMAIN, grid=200):
    """Grid minimum of ``1 + tau^2 B`` on ``[0, L]^2``, the cross-check of ``lower_bound_c``."""
    m2h = potential.mass_sq_half
    return min(
        _grid_min(lambda l, m, r=row: 1.0 + tau * tau * divided_difference(l, m, r, m2h), scan_domain, grid)
        for row in potential.distinct_rows()
    )


@dataclass
class ArcScanReport:
    p: int
    arc_min: float
    reduced_min: float
    passed: bool


def scan_arc_inequality(p, samples=10_000):
    """Check ``K^± > 0`` for ``V = lam^(p+1)`` on the quarter unit circle, and
    independently the reduced inequality
    ``(1 - z)(1 - z^(2p+2)) + 2 z (p+1)(z^(2p) - z^(2p+2)) > 0`` on ``[0, 1)``."""
    if p < 0:
        raise ValueError("p must be >= 0")
    theta = np.linspace(0.0, 0.5 * np.pi, samples)
    lam, mu = np.cos(theta), np.sin(theta)
    row = np.zeros(p + 1)
    row[p] = 1.0
    arc_min = float(np.min(_k_pm_min(lam, mu, row, 0.0)))

    z = np.linspace(0.0, 1.0, samples, endpoint=False)
    reduced = (1 - z) * (1 - z ** (2 * p + 2)) + 2 * z * (p + 1) * (z ** (2 * p) - z ** (2 * p + 2))
    reduced_min = float(np.min(reduced))
    return ArcScanReport(p, arc_min, reduced_min, arc_min > 0 and reduced_min > 0)


def bq_margin_integer(q, i, k):
    """``2 b_q(i, k) - k * d/dlam b_q(i, k)`` in exact integer arithmetic."""
    i = np.asarray(i, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    b = np.zeros(np.broadcast(i, k).shape, dtype=np.int64)
    db = np.zeros_like(b)
    for j in range(q + 1):
        b += i ** (q - j) * k**j
    for j in range(q):
        db += (q - j) * i ** (q - j - 1) * k**j
    return 2 * b - k * db


def scan_bq_inequality(q, scan_domain=DEFAULT_SCAN_DOMAIN, grid=500):
    """Minimum of ``b_q - d/dlam b_q * mu / 2`` on a uniform ``grid x grid`` mesh.

    The expression is homogeneous of degree ``q``, so on mesh points
    ``h * (i, k)`` it equals ``h^q`` times an integer polynomial in ``(i, k)``;
    it is evaluated exactly and only the final scaling is rounded.
    """
    idx = np.arange(grid, dtype=np.int64)
    margin = bq_margin_integer(q, idx[:, None], idx[None, :])
    h = scan_domain / (grid - 1)
    return float(np.min(margin)) / 2.0 * h**q


def _cond_on_b_min(row, mass_sq_half, scan_domain, grid):
    """Grid minimum of ``B - dB/dlam * mu / 2`` via the exact per-degree margins."""
    idx = np.arange(grid, dtype=np.int64)
    h = scan_domain / (grid - 1)
    total = np.full((grid, grid), mass_sq_half + row[0])
    for q in range(1, row.size):
        if row[q] != 0.0:
            margin = bq_margin_integer(q, idx[:, None], idx[None, :]).astype(float)
            total = total + row[q] * (0.5 * h**q) * margin
    return float(np.min(total))


@dataclass
class UniquenessReport:
    tau: float
    k3: float
    one_plus_tau2_k3: float
    min_dB: float
    cond_on_b: float
    bq_min: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures


def check_uniqueness_criterion(potential, tau, scan_domain=DEFAULT_SCAN_DOMAIN, grid=500):
    """Verify the uniqueness criterion for a degree <= 4 potential at mesh ``tau``.

    Checks ``1 + tau^2 k3 > 0``, ``dB/dlam >= 0`` and
    ``1 + tau^2 min(B - dB/dlam mu/2) > 0`` on the scan grid, and separately the
    per-degree inequality ``b_q >= d/dlam b_q * mu/2`` for ``q = 1..4``.
    """
    k3, _ = compute_k3_tau3(potential)
    m2h = potential.mass_sq_half
    axis = np.linspace(0.0, scan_domain, grid)
    lam, mu = axis[:, None], axis[None, :]
    min_db = math.inf
    cond = math.inf
    for row in potential.distinct_rows():
        _, dB = divided_difference_and_dlam(lam, mu, row, m2h)
        min_db = min(min_db, float(np.min(dB)))
        cond = min(cond, _cond_on_b_min(row, m2h, scan_domain, grid))
    report = UniquenessReport(tau, k3, 1.0 + tau * tau * k3, min_db, 1.0 + tau * tau * cond)
    for q in range(1, W4_MAX_DEGREE + 1):
        report.bq_min[q] = scan_bq_inequality(q, scan_domain, grid)
        if report.bq_min[q] < 0:
            report.failures.append(f"b_{q} inequality violated (min {report.bq_min[q]:.3e})")
    if not report.one_plus_tau2_k3 > 0:
        report.failures.append(f"1 + tau^2 k3 = {report.one_plus_tau2_k3:.6g} is not positive")
    if min_db < 0:
        report.failures.append(f"dB/dlam takes negative value {min_db:.3e}")
    if not report.cond_on_b > 0:
        report.failures.append(f"1 + tau^2 inf(B - dB mu/2) = {report.cond_on_b:.6g} is not positive")
    return report


def monomial_k_pm_homogeneity(q, lam, mu, t, sign):
    """``K^±(t lam, t mu) / (t^q K^±(lam, mu))`` for ``V = lam^(q+1)``."""
    pot = PolynomialPotential(0.0, np.eye(q + 1)[q])
    return k_pm(pot, t * lam, t * mu, sign) / (t**q * k_pm(pot, lam, mu, sign))


@dataclass
class StabilityReport:
    k1: float
    tau1: float
    k2_est: float
    tau2_est: float
    k2_exact: bool
    k3: float | None
    tau3: float | None
    scan_domain: float
    grid: int
    tau: float | None = None
    c: float | None = None
    c_scan: float | None = None
    kappa_diag: float | None = None
    uniqueness: dict | None = None
    w4_error: str | None = None

    def admissible(self, tau, policy="strict"):
        """Return ``(ok, reason)`` for mesh ``tau`` under ``policy``."""
        c = lower_bound_c_from_k1(self.k1, tau)
        if not c > 0:
            return False, f"c = 1 + tau^2 k1 = {c:.6g} <= 0 (tau >= tau1 = {self.tau1:.6g})"
        if policy == "permissive":
            return True, "tau < tau1 (existence only)"
        if tau < self.tau2_est:
            return True, "tau < tau2 estimate"
        if self.uniqueness is not None and not self.uniqueness["failures"]:
            return True, "uniqueness criterion passed"
        return False, (
            f"tau = {tau:.6g} is not below tau2 estimate {self.tau2_est:.6g} "
            "and the uniqueness criterion did not pass"
        )

    def to_json_dict(self):
        def enc(v):
            if isinstance(v, float) and math.isinf(v):
                return "+inf" if v > 0 else "-inf"
            if isinstance(v, dict):
                return {str(k): enc(x) for k, x in v.items()}
            if isinstance(v, list):
                return [enc(x) for x in v]
            return v

        return {k: enc(v) for k, v in asdict(self).items()}


def lower_bound_c_from_k1(k1, tau):
    if k1 == -math.inf:
        return -math.inf
    return 1.0 + tau * tau * k1


def stability_report(potential, tau=None, scan_domain=DEFAULT_SCAN_DOMAIN, grid=DEFAULT_GRID):
    k1 = compute_k1(potential)
    k2, exact = estimate_k2(potential, scan_domain, grid)
    try:
        k3, tau3 = compute_k3_tau3(potential)
        w4_error = None
    except ClassificationError as exc:
        k3 = tau3 = None
        w4_error = str(exc)
    report = StabilityReport(
        k1=k1,
        tau1=tau_threshold(k1),
        k2_est=k2,
        tau2_est=tau_threshold(k2),
        k2_exact=exact,
        k3=k3,
        tau3=tau3,
        scan_domain=scan_domain,
        grid=grid,
        w4_error=w4_error,
    )
    if tau is not None:
        report.tau = tau
        report.c = lower_bound_c_from_k1(k1, tau)
        report.c_scan = scan_c(potential, tau, scan_domain, min(grid, 400))
        report.kappa_diag = 1.0 + tau * tau * k2 if k2 != -math.inf else -math.inf
        if w4_error is None:
            u = check_uniqueness_criterion(potential, tau, scan_domain, min(grid, 500))
            report.uniqueness = {
                "passed": u.passed,
                "one_plus_tau2_k3": u.one_plus_tau2_k3,
                "min_dB": u.min_dB,
                "cond_on_b": u.cond_on_b,
                "failures": u.failures,
            }
    return report
