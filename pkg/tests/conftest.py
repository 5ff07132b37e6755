import numpy as np
import pytest

from lattice_kg import LatticeShape, PolynomialPotential, SimState

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    def log(criterion, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return log


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_field(rng, dims, N=1, scale=1.0, real=False):
    z = rng.normal(size=(*dims, N))
    if not real:
        z = z + 1j * rng.normal(size=(*dims, N))
    return (scale * z).astype(complex)


def random_state(rng, dims, tau, epsilon=1.0, N=1, scale=1.0, real=False, boundary="periodic"):
    shape = LatticeShape(tuple(dims), epsilon, boundary)
    return SimState(
        random_field(rng, dims, N, scale, real), random_field(rng, dims, N, scale, real), tau, shape
    )


def cubic_nlkg(mass=1.0):
    """``V = m^2/2 lam + lam^2``."""
    return PolynomialPotential.from_mass(mass, [0.0, 1.0])


def linear_kg(mass=1.0):
    return PolynomialPotential.from_mass(mass, [0.0])


def gaussian_state(dims, tau, epsilon=1.0, width=5.0, amplitude=1.0, mode=None, N=1):
    shape = LatticeShape(tuple(dims), epsilon)
    grids = np.meshgrid(*[np.arange(L, dtype=float) for L in dims], indexing="ij")
    r2 = sum(((X - L / 2) / width) ** 2 for X, L in zip(grids, dims))
    prof = amplitude * np.exp(-r2).astype(complex)
    if mode is not None:
        prof = prof * np.exp(1j * sum(2 * np.pi * k * X / L for k, X, L in zip(mode, grids, dims)))
    psi0 = np.zeros((*dims, N), dtype=complex)
    psi0[..., 0] = prof
    psi1 = psi0 * np.exp(-0.3j) if mode is not None else psi0.copy()
    return SimState(psi0, psi1, tau, shape)
