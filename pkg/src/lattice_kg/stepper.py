"""One time step of the implicit scheme, solved site by site.

At every site the update ``psi^{t+1}`` satisfies

    (1 + tau^2 B(|psi^{t+1}|^2, |psi^{t-1}|^2)) (psi^{t+1} + psi^{t-1}) = xi,
    xi = (tau/eps)^2 sum_j (psi_{X+e_j} - 2 psi_X + psi_{X-e_j}) + 2 psi_X,

so ``psi^{t+1} + psi^{t-1} = s * xi`` for a real ``s`` solving ``f(s) = 1`` with
``f(s) = (1 + tau^2 B(|s xi - psi^{t-1}|^2, |psi^{t-1}|^2)) s``.  Because
``f(s) >= c s`` with ``c = 1 + tau^2 k1 > 0``, the root lies in ``(0, 1/c]``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import wellposed
from .errors import AdmissibilityError, ClassificationError, StepFailure
from .lattice import SimState, l2_norm_sq, second_difference_sum, site_norm_sq
from .potential import divided_difference_and_dlam


@dataclass(frozen=True)
class SolverParams:
    tol_f: float = 1e-14
    max_iter: int = 200
    bracket_growth: float = 2.0
    strict_uniqueness: bool = False
    # samples of [0, s_hi] used to isolate the smallest root when f is not certified monotone
    root_samples: int = 64
    scan_domain: float = wellposed.DEFAULT_SCAN_DOMAIN
    scan_grid: int = wellposed.DEFAULT_GRID
    debug: bool = False

    def __post_init__(self):
        if not self.tol_f > 0:
            raise ValueError("tol_f must be positive")
        if self.max_iter < 8:
            raise ValueError("max_iter must be at least 8")
        if not self.bracket_growth > 1:
            raise ValueError("bracket_growth must exceed 1")


@dataclass
class SiteSolveResult:
    s: float
    iterations: int
    residual: float


@dataclass
class StepInfo:
    max_iterations: int
    solved_sites: int
    zero_xi_sites: int


def compute_xi(state: SimState):
    ratio_sq = (state.tau / state.shape.epsilon) ** 2
    return ratio_sq * second_difference_sum(state.curr, state.shape) + 2.0 * state.curr


def _real_dot(a, b):
    """``Re(conj(a) . b)`` over the last axis, fixed component order."""
    acc = a[..., 0].real * b[..., 0].real + a[..., 0].imag * b[..., 0].imag
    for k in range(1, a.shape[-1]):
        acc = acc + (a[..., k].real * b[..., k].real + a[..., k].imag * b[..., k].imag)
    return acc


def _f_and_fprime(s, xi, psi_prev, mu, xi_sq, re_px, tau_sq, rows, m2h):
    lam = site_norm_sq(s[:, None] * xi - psi_prev)
    B, dB = divided_difference_and_dlam(lam, mu, rows, m2h)
    f = (1.0 + tau_sq * B) * s
    fp = 1.0 + tau_sq * B + tau_sq * dB * (-2.0 * re_px + 2.0 * xi_sq * s) * s
    return f, fp


def eval_f(s, xi, psi_prev, tau, x, potential):
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    psi_prev = np.atleast_1d(np.asarray(psi_prev, dtype=complex))
    lam = float(site_norm_sq((s * xi - psi_prev)[None, :])[0])
    mu = float(site_norm_sq(psi_prev[None, :])[0])
    return (1.0 + tau * tau * potential.eval_B(x, lam, mu)) * s


def eval_fprime(s, xi, psi_prev, tau, x, potential):
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    psi_prev = np.atleast_1d(np.asarray(psi_prev, dtype=complex))
    lam = float(site_norm_sq((s * xi - psi_prev)[None, :])[0])
    mu = float(site_norm_sq(psi_prev[None, :])[0])
    re_px = float(_real_dot(psi_prev[None, :], xi[None, :])[0])
    xi_sq = float(site_norm_sq(xi[None, :])[0])
    B = potential.eval_B(x, lam, mu)
    dB = potential.eval_dB(x, lam, mu)
    return 1.0 + tau * tau * B + tau * tau * dB * (-2.0 * re_px + 2.0 * xi_sq * s) * s


def solve_sites(xi, psi_prev, tau, rows, m2h, c, params, monotone=True):
    """Vectorized root solve for sites with nonzero ``xi``.

    ``xi`` and ``psi_prev`` have shape ``(k, N)``; ``rows`` are the matching
    coefficient rows (or a single broadcast row).  Each site iterates on its
    own, so the result does not depend on how sites are grouped.  Returns
    ``(s, iterations, residual, converged)``.
    """
    k = xi.shape[0]
    tau_sq = tau * tau
    mu = site_norm_sq(psi_prev)
    xi_sq = site_norm_sq(xi)
    re_px = _real_dot(psi_prev, xi)
    per_site = rows.shape[0] > 1

    def fn(s, idx):
        r = rows[idx] if per_site else rows
        return _f_and_fprime(s, xi[idx], psi_prev[idx], mu[idx], xi_sq[idx], re_px[idx], tau_sq, r, m2h)

    everyone = np.arange(k)
    lo = np.zeros(k)
    hi = np.full(k, 1.0 / c)
    iterations = np.zeros(k, dtype=np.int64)
    # f(s) >= c s makes s = 1/c an upper bracket; the loop only guards rounding
    for _ in range(64):
        f_hi, _ = fn(hi, everyone)
        short = f_hi < 1.0
        if not np.any(short):
            break
        hi = np.where(short, hi * params.bracket_growth, hi)

    if not monotone:
        grid = np.linspace(0.0, 1.0, params.root_samples + 1)[1:]
        samples = hi[:, None] * grid[None, :]
        vals = np.empty_like(samples)
        for j in range(samples.shape[1]):
            vals[:, j], _ = fn(samples[:, j], everyone)
        first = np.argmax(vals >= 1.0, axis=1)
        hi = samples[everyone, first]
        lo = np.where(first > 0, samples[everyone, np.maximum(first - 1, 0)], 0.0)

    B0, _ = divided_difference_and_dlam(mu, mu, rows, m2h)
    s = 1.0 / (1.0 + tau_sq * B0)
    s = np.where((s >= lo) & (s <= hi), s, 0.5 * (lo + hi))

    out_s = np.zeros(k)
    residual = np.full(k, np.inf)
    converged = np.zeros(k, dtype=bool)
    active = everyone
    for _ in range(params.max_iter):
        f, fp = fn(s, active)
        F = f - 1.0
        iterations[active] += 1
        residual[active] = np.abs(F)
        done = np.abs(F) <= params.tol_f
        out_s[active] = s
        converged[active[done]] = True
        keep = ~done
        if not np.any(keep):
            break
        active, s, F, fp = active[keep], s[keep], F[keep], fp[keep]
        lo[active] = np.where(F < 0, s, lo[active])
        hi[active] = np.where(F > 0, s, hi[active])
        a, b = lo[active], hi[active]
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = s - F / fp
        ok = (fp > 0) & (newton >= a) & (newton <= b) & (newton != s)
        s = np.where(ok, newton, 0.5 * (a + b))
    return out_s, iterations, residual, converged


def _certify_monotone(potential, tau, params):
    """True when ``f' > 0`` is guaranteed: ``tau`` below the k2 threshold or the
    uniqueness criterion holds."""
    k2, _ = wellposed.estimate_k2(potential, params.scan_domain, params.scan_grid)
    if tau < wellposed.tau_threshold(k2):
        return True
    try:
        report = wellposed.check_uniqueness_criterion(potential, tau, params.scan_domain, min(params.scan_grid, 500))
    except ClassificationError:
        return False
    return report.passed


class Stepper:
    """Advances a ``SimState`` for fixed potential, ``tau`` and solver settings."""

    def __init__(self, potential, tau, params=None, workers=1, monotone=None):
        self.potential = potential
        self.tau = float(tau)
        self.params = params or SolverParams()
        self.workers = max(1, int(workers))
        self.c = wellposed.lower_bound_c(potential, self.tau)
        if not self.c > 0:
            raise AdmissibilityError(
                f"c = 1 + tau^2 k1 = {self.c:.6g} is not positive; tau must be below tau1"
            )
        if monotone is None:
            if potential.higher_coeffs_nonnegative():
                # then k2 = k1, so c > 0 already gives f' >= c
                monotone = True
            else:
                monotone = _certify_monotone(potential, self.tau, self.params)
        if self.params.strict_uniqueness and not monotone:
            raise AdmissibilityError("uniqueness not certified at this tau (strict mode)")
        self.monotone = bool(monotone)

    def _chunks(self, num_sites):
        bounds = np.linspace(0, num_sites, self.workers + 1).astype(int)
        return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def _solve_range(self, xi, prev, out, iters, lo, hi, step_index, shape):
        xi_c, prev_c = xi[lo:hi], prev[lo:hi]
        zero = ~np.any(xi_c != 0, axis=1)
        out[lo:hi][zero] = -prev_c[zero]
        idx = np.nonzero(~zero)[0]
        if idx.size == 0:
            return None
        rows = self.potential.rows(slice(lo, hi))
        if rows.shape[0] > 1:
            rows = rows[idx]
        s, it, res, ok = solve_sites(
            xi_c[idx], prev_c[idx], self.tau, rows, self.potential.mass_sq_half, self.c, self.params, self.monotone
        )
        out[lo + idx] = s[:, None] * xi_c[idx] - prev_c[idx]
        iters[lo + idx] = it
        if not np.all(ok):
            j = int(np.argmin(ok))
            site = tuple(int(v) for v in np.unravel_index(lo + int(idx[j]), shape.dims))
            return StepFailure(site, float(res[j]), int(it[j]), step_index)
        return None

    def step_detailed(self, state: SimState):
        shape = state.shape
        self.potential.check_sites(shape.num_sites)
        N = state.N
        xi = compute_xi(state).reshape(-1, N)
        prev = state.prev.reshape(-1, N)
        out = np.empty_like(prev)
        iters = np.zeros(prev.shape[0], dtype=np.int64)
        chunks = self._chunks(prev.shape[0])
        args = [(xi, prev, out, iters, a, b, state.step_index + 1, shape) for a, b in chunks]
        if len(chunks) == 1:
            failures = [self._solve_range(*args[0])]
        else:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                failures = list(pool.map(lambda a: self._solve_range(*a), args))
        for failure in failures:
            if failure is not None:
                raise failure
        nxt = out.reshape(state.prev.shape)
        if self.params.debug:
            self._check_l2_recursion(state, nxt)
        info = StepInfo(int(iters.max(initial=0)), int(np.count_nonzero(iters)), int(np.count_nonzero(iters == 0)))
        new = SimState(state.curr, nxt, state.tau, shape, state.step_index + 1)
        return new, info

    def step(self, state):
        return self.step_detailed(state)[0]

    def step_backward(self, state):
        """``(psi^{t-1}, psi^t) -> (psi^{t-2}, psi^{t-1})``; the scheme is symmetric
        under ``psi^{t+1} <-> psi^{t-1}``."""
        back = self.step(state.swapped())
        return SimState(back.curr, back.prev, state.tau, state.shape, state.step_index - 1)

    def _check_l2_recursion(self, state, nxt):
        shape = state.shape
        bound_factor = (4.0 * self.tau**2 * shape.n / shape.epsilon**2 + 2.0) / self.c
        lhs = math.sqrt(l2_norm_sq(nxt, shape))
        rhs = bound_factor * math.sqrt(l2_norm_sq(state.curr, shape)) + math.sqrt(l2_norm_sq(state.prev, shape))
        if lhs > rhs * (1.0 + 1e-12) + 1e-300:
            raise AssertionError(f"l2 recursion bound violated: {lhs!r} > {rhs!r}")


def step(state, potential, params=None, workers=1):
    return Stepper(potential, state.tau, params, workers).step(state)


def step_backward(state, potential, params=None, workers=1):
    return Stepper(potential, state.tau, params, workers).step_backward(state)


def solve_site(xi, psi_prev, tau, x, potential, params=None):
    """Solve one site; returns ``(psi_next, SiteSolveResult)``."""
    params = params or SolverParams()
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    psi_prev = np.atleast_1d(np.asarray(psi_prev, dtype=complex))
    c = wellposed.lower_bound_c(potential, tau)
    if not c > 0:
        raise AdmissibilityError(f"c = {c:.6g} is not positive at tau = {tau}")
    if not np.any(xi != 0):
        return -psi_prev, SiteSolveResult(0.0, 0, 0.0)
    rows = potential.rows() if potential.homogeneous else potential.rows(slice(int(x), int(x) + 1))
    s, it, res, ok = solve_sites(xi[None, :], psi_prev[None, :], tau, rows, potential.mass_sq_half, c, params)
    if not ok[0]:
        raise StepFailure(x, float(res[0]), int(it[0]))
    return s[0] * xi - psi_prev, SiteSolveResult(float(s[0]), int(it[0]), float(res[0]))
