"""Run configuration, initial data, and the time-stepping loop."""
from __future__ import annotations

import copy
import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng, wellposed
from .errors import AdmissibilityError, ConfigError
from .lattice import LatticeShape, SimState, l2_norm_sq, read_snapshot, write_snapshot
from .observables import apriori_bound, charge, energy, observe
from .potential import PolynomialPotential, poly_dvalue, potential_from_config
from .stepper import SolverParams, Stepper

CSV_COLUMNS = ("t", "E", "E_sv", "Q_raw", "Q_phys", "l2_sq", "apriori_margin", "max_site_iters")
CRITICAL_RATIO = "1/sqrt(n)"
INITIAL_KINDS = ("zero", "gaussian_pulse", "plane_wave", "random", "file")


@dataclass
class OutputSpec:
    series_every: int = 1
    snapshot_every: int = 0
    out_dir: str = "out"


@dataclass
class RunConfig:
    shape: LatticeShape
    potential: PolynomialPotential
    steps: int
    initial: dict
    N: int = 1
    tau: float | None = None
    ratio: float | str | None = None
    output: OutputSpec = field(default_factory=OutputSpec)
    admissibility: str = "strict"
    seed: int = 0
    workers: int = 1
    solver: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.tau is None) == (self.ratio is None):
            raise ConfigError("give exactly one of 'tau' and 'ratio'")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        if self.output.series_every < 1:
            raise ConfigError("series_every must be >= 1")
        if self.output.snapshot_every < 0:
            raise ConfigError("snapshot_every must be >= 0")
        if self.admissibility not in ("strict", "permissive"):
            raise ConfigError("admissibility must be 'strict' or 'permissive'")
        if self.initial.get("kind") not in INITIAL_KINDS:
            raise ConfigError(f"initial.kind must be one of {INITIAL_KINDS}")
        self.potential.check_sites(self.shape.num_sites)
        if not self.resolved_tau() > 0:
            raise ConfigError("tau must be positive")

    @property
    def critical_ratio(self):
        return 1.0 / math.sqrt(self.shape.n)

    def resolved_tau(self):
        if self.tau is not None:
            return float(self.tau)
        if self.ratio == CRITICAL_RATIO:
            return self.shape.epsilon / math.sqrt(self.shape.n)
        return float(self.ratio) * self.shape.epsilon

    def solver_params(self):
        try:
            return SolverParams(**self.solver)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad solver settings: {exc}") from exc

    def to_dict(self):
        out = copy.deepcopy(self.raw)
        out.update(
            {
                "shape": {
                    "dims": list(self.shape.dims),
                    "epsilon": self.shape.epsilon,
                    "boundary": self.shape.boundary,
                },
                "N": self.N,
                "steps": self.steps,
                "potential": self.raw.get("potential", self.potential.to_config()),
                "initial": self.initial,
                "output": {
                    "series_every": self.output.series_every,
                    "snapshot_every": self.output.snapshot_every,
                    "out_dir": self.output.out_dir,
                },
                "admissibility": self.admissibility,
                "seed": self.seed,
                "workers": self.workers,
                "solver": self.solver,
            }
        )
        out.pop("tau", None)
        out.pop("ratio", None)
        if self.tau is not None:
            out["tau"] = self.tau
        else:
            out["ratio"] = self.ratio
        return out


def config_from_dict(raw, base_dir=None):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    try:
        shape_raw = raw["shape"]
        shape = LatticeShape(
            tuple(shape_raw["dims"]),
            float(shape_raw.get("epsilon", 1.0)),
            shape_raw.get("boundary", "periodic"),
        )
        potential = potential_from_config(raw["potential"], base_dir)
        out_raw = raw.get("output", {})
        output = OutputSpec(
            int(out_raw.get("series_every", 1)),
            int(out_raw.get("snapshot_every", 0)),
            str(out_raw.get("out_dir", "out")),
        )
        initial = dict(raw.get("initial", {"kind": "zero"}))
        if base_dir is not None and "snapshot" in initial:
            path = Path(initial["snapshot"])
            if not path.is_absolute():
                initial["snapshot"] = str(Path(base_dir) / path)
        ratio = raw.get("ratio")
        if ratio is not None and ratio != CRITICAL_RATIO:
            ratio = float(ratio)
        return RunConfig(
            shape=shape,
            potential=potential,
            steps=int(raw["steps"]),
            initial=initial,
            N=int(raw.get("N", 1)),
            tau=None if raw.get("tau") is None else float(raw["tau"]),
            ratio=ratio,
            output=output,
            admissibility=raw.get("admissibility", "strict"),
            seed=int(raw.get("seed", 0)),
            workers=int(raw.get("workers", 1)),
            solver=dict(raw.get("solver", {})),
            raw=copy.deepcopy(raw),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config field {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed config: {exc}") from exc


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(raw, base_dir=path.parent)


# initial data


def _mode_phase(shape, mode):
    """``sum_j 2 pi k_j X_j / L_j`` on the lattice."""
    mode = [int(k) for k in mode]
    if len(mode) != shape.n:
        raise ConfigError(f"mode has {len(mode)} entries, lattice has {shape.n} axes")
    for k, L in zip(mode, shape.dims):
        if not 0 <= k < L:
            raise ConfigError(f"mode component {k} outside [0, {L})")
    grids = np.meshgrid(*[np.arange(L) for L in shape.dims], indexing="ij")
    phase = np.zeros(shape.dims)
    for k, L, X in zip(mode, shape.dims, grids):
        phase = phase + 2.0 * np.pi * k * X / L
    return phase


def _polarization(spec, N):
    pol = np.asarray(spec.get("polarization", [1.0] + [0.0] * (N - 1)), dtype=complex)
    if pol.shape != (N,):
        raise ConfigError(f"polarization must have {N} entries")
    norm = np.sqrt(np.sum(np.abs(pol) ** 2))
    if norm == 0:
        raise ConfigError("polarization must be nonzero")
    return pol / norm


def dispersion_omega(shape, tau, potential, mode, amplitude=0.0):
    """Frequency of the exact plane wave ``A exp(i(theta . X - omega tau t))``.

    A constant-modulus wave keeps ``B = dV/dlam(A^2)`` at every site, so the
    scheme reduces to the linear relation
    ``(2 - 2 cos(omega tau)) / tau^2 = sum_j (2 - 2 cos theta_j) / eps^2 + 2 B cos(omega tau)``,
    which with ``B = m^2/2`` is the linear dispersion relation.
    """
    mode = [int(k) for k in mode]
    if len(mode) != shape.n:
        raise ConfigError(f"mode has {len(mode)} entries, lattice has {shape.n} axes")
    if not potential.homogeneous:
        raise ConfigError("plane-wave dispersion needs a site-independent potential")
    spatial = sum((2.0 - 2.0 * math.cos(2.0 * math.pi * k / L)) for k, L in zip(mode, shape.dims)) / shape.epsilon**2
    B = float(poly_dvalue(amplitude**2, potential.coeffs, potential.mass_sq_half))
    denom = 2.0 / tau**2 + 2.0 * B
    cos_wt = (2.0 / tau**2 - spatial) / denom if denom > 0 else math.inf
    if not (denom > 0 and -1.0 <= cos_wt <= 1.0):
        raise ConfigError(
            f"dispersion relation has no real frequency (cos(omega tau) = {cos_wt:.6g}); use a smaller tau"
        )
    return math.acos(cos_wt) / tau


def _gaussian(shape, spec):
    center = spec.get("center", [L / 2.0 for L in shape.dims])
    width = spec.get("width", max(shape.dims) / 16.0)
    center = np.broadcast_to(np.asarray(center, dtype=float), (shape.n,))
    width = np.broadcast_to(np.asarray(width, dtype=float), (shape.n,))
    grids = np.meshgrid(*[np.arange(L, dtype=float) for L in shape.dims], indexing="ij")
    r2 = np.zeros(shape.dims)
    for X, c, w in zip(grids, center, width):
        r2 = r2 + ((X - c) / w) ** 2
    return float(spec.get("amplitude", 1.0)) * np.exp(-r2)


def _random_slice(shape, N, seed, offset, real):
    count = shape.num_sites * N
    if real:
        z = rng.standard_normal(seed, count, offset).astype(complex)
        used = 2 * ((count + 1) // 2)
    else:
        g = rng.standard_normal(seed, 2 * count, offset)
        z = (g[0::2] + 1j * g[1::2]) / math.sqrt(2.0)
        used = 2 * count
    return z.reshape(*shape.dims, N), used


def generate_initial(spec, shape, N, potential, tau, seed=0):
    """Cauchy data ``(psi0, psi1)`` for an initial-data spec."""
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return shape.zeros(N), shape.zeros(N)
    if kind == "plane_wave":
        A = float(spec.get("amplitude", 1.0))
        mode = spec.get("mode", [0] * shape.n)
        omega = dispersion_omega(shape, tau, potential, mode, A)
        base = A * np.exp(1j * _mode_phase(shape, mode))[..., None] * _polarization(spec, N)
        return base, base * np.exp(-1j * omega * tau)
    if kind == "gaussian_pulse":
        prof = _gaussian(shape, spec).astype(complex)
        pol = _polarization(spec, N)
        if "mode" in spec:
            # carrier wave; the linear dispersion sets the second slice's phase
            omega = dispersion_omega(shape, tau, potential, spec["mode"], 0.0)
            prof = prof * np.exp(1j * _mode_phase(shape, spec["mode"]))
            psi0 = prof[..., None] * pol
            return psi0, psi0 * np.exp(-1j * omega * tau)
        psi0 = prof[..., None] * pol
        return psi0, psi0.copy()
    if kind == "random":
        real = bool(spec.get("real", False))
        psi0, used = _random_slice(shape, N, seed, 0, real)
        psi1, _ = _random_slice(shape, N, seed, used, real)
        target = float(spec.get("l2_norm", 1.0))
        out = []
        for psi in (psi0, psi1):
            nrm = math.sqrt(l2_norm_sq(psi, shape))
            out.append(psi * (target / nrm) if nrm > 0 else psi)
        return out[0], out[1]
    if kind == "file":
        if "snapshot" not in spec:
            raise ConfigError("initial kind 'file' needs a 'snapshot' sidecar path")
        st = read_snapshot(spec["snapshot"])
        if st.shape.dims != shape.dims or st.N != N:
            raise ConfigError("snapshot does not match the configured lattice")
        return st.prev, st.curr
    raise ConfigError(f"unknown initial kind {kind!r}")


def initial_state(config: RunConfig):
    tau = config.resolved_tau()
    psi0, psi1 = generate_initial(config.initial, config.shape, config.N, config.potential, tau, config.seed)
    step_index = 1
    if config.initial.get("kind") == "file":
        meta = json.loads(Path(config.initial["snapshot"]).read_text())
        step_index = int(meta["step_index"])
    return SimState(psi0, psi1, tau, config.shape, step_index)


# run loop


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _row(rec):
    return [
        _fmt(rec.t),
        _fmt(rec.energy),
        _fmt(rec.energy_sv),
        _fmt(rec.charge_raw),
        _fmt(rec.charge_phys),
        _fmt(rec.l2_sq),
        _fmt(rec.apriori_margin),
        _fmt(rec.max_site_iters),
    ]


@dataclass
class RunResult:
    exit_code: int
    summary: dict
    out_dir: Path


def check_admissibility(config, tau):
    scan = config.solver.get("scan_domain", wellposed.DEFAULT_SCAN_DOMAIN)
    grid = config.solver.get("scan_grid", wellposed.DEFAULT_GRID)
    report = wellposed.stability_report(config.potential, tau, scan, grid)
    ok, reason = report.admissible(tau, config.admissibility)
    return report, ok, reason


def run(config: RunConfig, log=None):
    """Execute the configured run; returns a ``RunResult``.

    Raises ``ConfigError``/``AdmissibilityError`` before stepping and
    ``StepFailure`` if a site solve fails.
    """
    t_start = time.perf_counter()
    out_dir = Path(config.output.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tau = config.resolved_tau()
    shape = config.shape
    ratio = tau / shape.epsilon

    report, ok, reason = check_admissibility(config, tau)
    if not ok:
        raise AdmissibilityError(f"{config.admissibility} admissibility refused: {reason}")
    monotone = ok if config.admissibility == "strict" else (
        tau < report.tau2_est or bool(report.uniqueness and not report.uniqueness["failures"])
    )
    stepper = Stepper(config.potential, tau, config.solver_params(), config.workers, monotone=monotone)

    state = initial_state(config)
    E0 = energy(state, config.potential)
    if config.initial.get("kind") == "file":
        meta = json.loads(Path(config.initial["snapshot"]).read_text())
        E0 = float(meta.get("reference_energy", E0))
    Q0 = charge(state)[0]
    scale_E = max(abs(E0), shape.cell_volume)
    scale_Q = max(abs(Q0), shape.cell_volume)
    m = config.potential.mass
    apriori_applies = (
        m > 0 and config.potential.has_nonnegative_interaction() and ratio <= config.critical_ratio
    )

    def snapshot(st):
        path = write_snapshot(out_dir / "snapshots", st)
        meta = json.loads(path.read_text())
        meta["reference_energy"] = E0
        path.write_text(json.dumps(meta, indent=2) + "\n")

    max_dE = max_dQ = 0.0
    max_iters = 0
    apriori_violations = 0
    min_energy = math.inf
    series_path = out_dir / "series.csv"
    with series_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        rec = observe(state, config.potential, E0, 0)
        min_energy = rec.energy
        if rec.t % config.output.series_every == 0:
            writer.writerow(_row(rec))
        for _ in range(config.steps):
            state, info = stepper.step_detailed(state)
            max_iters = max(max_iters, info.max_iterations)
            rec = observe(state, config.potential, E0, info.max_iterations)
            max_dE = max(max_dE, abs(rec.energy - E0) / scale_E)
            max_dQ = max(max_dQ, abs(rec.charge_raw - Q0) / scale_Q)
            min_energy = min(min_energy, rec.energy)
            if apriori_applies and rec.l2_sq > apriori_bound(E0, m) * (1.0 + 1e-9):
                apriori_violations += 1
            if rec.t % config.output.series_every == 0:
                writer.writerow(_row(rec))
            if config.output.snapshot_every and state.step_index % config.output.snapshot_every == 0:
                snapshot(state)
            if log is not None and rec.t % max(1, config.steps // 10) == 0:
                log(f"t={rec.t} E={rec.energy:.17g} Q={rec.charge_raw:.17g}")
    if config.output.snapshot_every:
        snapshot(state)

    positive_definite = ratio <= config.critical_ratio * (1.0 + 1e-15)
    summary = {
        "status": "ok",
        "exit_code": 0,
        "steps": config.steps,
        "final_step_index": state.step_index,
        "tau": tau,
        "ratio": ratio,
        "critical_ratio": config.critical_ratio,
        "energy_mode": "positive_definite" if positive_definite else "indefinite",
        "charge_conservation_expected": abs(ratio - config.critical_ratio) <= 1e-15 * config.critical_ratio,
        "admissibility": {"policy": config.admissibility, "reason": reason, "unique_root_certified": monotone},
        "E0": E0,
        "Q0": Q0,
        "min_energy": min_energy,
        "max_drift": {"energy": max_dE, "charge": max_dQ},
        "max_solver_iterations": max_iters,
        "apriori": {"applies": apriori_applies, "violations": apriori_violations},
        "stability": report.to_json_dict(),
        "wall_time_s": time.perf_counter() - t_start,
        "config": config.to_dict(),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return RunResult(0, summary, out_dir)
