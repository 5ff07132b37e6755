"""Print solvability thresholds for a few reference potentials.

Each row lists k1/tau1 (existence), the k2 estimate/tau2 (uniqueness by
monotonicity) and k3/tau3 where the potential is in the w4 class.
"""
import math

from lattice_kg import ClassificationError, PolynomialPotential, compute_k1, compute_k3_tau3, estimate_k2
from lattice_kg.wellposed import tau_threshold

POTENTIALS = {
    "m=1, lam^2": PolynomialPotential.from_mass(1.0, [0.0, 1.0]),
    "-lam + lam^2": PolynomialPotential.from_mass(0.0, [-1.0, 1.0]),
    "lam - 3 lam^2 + lam^3": PolynomialPotential.from_mass(0.0, [1.0, -3.0, 1.0]),
    "m=1, lam^2 + 0.1 lam^4": PolynomialPotential.from_mass(1.0, [0.0, 1.0, 0.0, 0.1]),
    "-0.5 lam + lam^3": PolynomialPotential.from_mass(0.0, [-0.5, 0.0, 1.0]),
}


def fmt(x):
    return "inf" if math.isinf(x) else f"{x:.6g}"


def main():
    print(f"{'potential':<26} {'k1':>10} {'tau1':>10} {'k2':>10} {'tau2':>10} {'k3':>10} {'tau3':>10}")
    for name, pot in POTENTIALS.items():
        k1 = compute_k1(pot)
        k2, exact = estimate_k2(pot)
        try:
            k3, tau3 = compute_k3_tau3(pot)
        except ClassificationError:
            k3 = tau3 = math.nan
        mark = "" if exact else "*"
        print(f"{name:<26} {fmt(k1):>10} {fmt(tau_threshold(k1)):>10} {fmt(k2) + mark:>10} "
              f"{fmt(tau_threshold(k2)):>10} {fmt(k3):>10} {fmt(tau3):>10}")
    print("* grid estimate")


if __name__ == "__main__":
    main()
