"""Energy and charge drift of the cubic NLKG pulse across grid ratios.

    python scripts/conservation_sweep.py --steps 2000 --dims 128
"""
import argparse
import math
import tempfile

from lattice_kg.harness import config_from_dict, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--dims", type=int, nargs="+", default=[128])
    ap.add_argument("--ratios", type=float, nargs="+", default=[0.25, 0.5, 0.75, 1.0])
    ap.add_argument("--carrier", type=int, default=4, help="carrier wavenumber along each axis")
    args = ap.parse_args()

    n = len(args.dims)
    crit = 1.0 / math.sqrt(n)
    print(f"n={n} dims={args.dims} critical ratio={crit:.6f}")
    print(f"{'ratio':>8} {'energy drift':>14} {'charge drift':>14} {'iters':>6} {'mode':>18}")
    for r in args.ratios:
        ratio = "1/sqrt(n)" if abs(r - crit) < 1e-12 else r
        with tempfile.TemporaryDirectory() as out:
            cfg = config_from_dict(
                {
                    "shape": {"dims": args.dims},
                    "potential": {"mass": 1.0, "coeffs": [0.0, 1.0]},
                    "steps": args.steps,
                    "ratio": ratio,
                    "initial": {"kind": "gaussian_pulse", "width": max(args.dims) / 16, "mode": [args.carrier] * n},
                    "output": {"out_dir": out, "series_every": args.steps},
                    "admissibility": "permissive",
                }
            )
            s = run(cfg).summary
        d = s["max_drift"]
        print(f"{r:8.4f} {d['energy']:14.3e} {d['charge']:14.3e} {s['max_solver_iterations']:6d} {s['energy_mode']:>18}")


if __name__ == "__main__":
    main()
