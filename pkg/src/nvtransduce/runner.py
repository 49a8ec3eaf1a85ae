"""Execute scenarios, sweeps and presets; write trace CSVs and summaries."""
from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ScenarioConfig
from .dynamics import LindbladChannelSet, SimulationTrace, evolve_master, evolve_pure
from .hilbert import DensityMatrix, ModeRegister, make_register, partial_trace_matrix, state_vector
from .metrics import clamp_unit, concurrence_two_qubit, fidelity_to, population_of, qubit_pair_state
from .models import EffectiveCouplings, build_effective_couplings, hybrid_terms
from .protocols import (
    CouplingSchedule,
    GaussianPulse,
    adiabatic_schedule,
    entanglement_schedule,
    swap_protocol_schedule,
)

CSV_COLUMNS = ("t", "pop_a", "pop_b", "pop_c", "pop_d", "fidelity", "concurrence_ad", "trace_err")


@dataclass
class Scenario:
    """Everything needed to integrate one configured run."""

    config: ScenarioConfig
    register: ModeRegister
    couplings: EffectiveCouplings
    channels: LindbladChannelSet
    psi0: np.ndarray
    duration: float
    hamiltonian: object
    breakpoints: tuple[float, ...]
    schedule: CouplingSchedule | None = None


def build_couplings(cfg: ScenarioConfig) -> EffectiveCouplings:
    c = cfg.couplings
    if c.derive is not None:
        d = c.derive
        return build_effective_couplings(d.g_o, d.Omega, d.Delta_o, d.g_mu, d.N, Gnv=c.Gnv)
    return EffectiveCouplings(c.G1, c.G2, c.Gnv)


def build_schedule(cfg: ScenarioConfig, couplings: EffectiveCouplings) -> CouplingSchedule | None:
    p = cfg.protocol
    if p.name == "swap":
        sched = swap_protocol_schedule(couplings)
        return sched.reversed() if p.reverse else sched
    if p.name == "adiabatic":
        pulse = GaussianPulse(p.pulse.amplitude, p.pulse.center, p.pulse.width)
        return adiabatic_schedule(pulse, couplings.G2, p.total_T, couplings.Gnv if p.swap_to_nv else None)
    if p.name == "entanglement":
        return entanglement_schedule(couplings, p.alpha, reverse=p.reverse)
    return None


def _initial_ket(cfg: ScenarioConfig, reg: ModeRegister) -> np.ndarray:
    st = cfg.initial_state
    if st.occupations is not None:
        occ = [st.occupations.get(label, 0) for label in reg.labels]
        return state_vector(reg, occ)
    amps = {}
    for term in st.superposition:
        key = tuple(term.occupations.get(label, 0) for label in reg.labels)
        amps[key] = amps.get(key, 0) + term.complex_amplitude()
    return state_vector(reg, amplitudes=amps)


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    reg = make_register(cfg.register.items())
    couplings = build_couplings(cfg)
    ch = cfg.channels
    channels = LindbladChannelSet(ch.kappa_a, ch.kappa_b, ch.gamma_c, ch.gamma_d, ch.n_th)
    psi0 = _initial_ket(cfg, reg)
    schedule = build_schedule(cfg, couplings)
    if schedule is not None:
        return Scenario(cfg, reg, couplings, channels, psi0, schedule.duration,
                        schedule.hamiltonian(reg), schedule.boundaries, schedule)
    h = np.zeros((reg.dim, reg.dim), dtype=complex)
    if all(m in reg for m in ("a", "b", "c", "d")):
        h = hybrid_terms(reg).matrix(couplings.G1, couplings.G2, couplings.Gnv)
    return Scenario(cfg, reg, couplings, channels, psi0, cfg.protocol.duration, h, ())


@dataclass
class RunResult:
    config: ScenarioConfig
    rows: list[dict]
    summary: dict
    trace: SimulationTrace = field(repr=False)

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow(["" if row.get(k) is None else f"{row[k]:.15g}" for k in CSV_COLUMNS])
        return buf.getvalue()


def _concurrence_ok(reg: ModeRegister, modes) -> bool:
    return len(modes) == 2 and all(m in reg for m in modes)


TRANSFER_PROTOCOLS = ("swap", "adiabatic")


def transfer_source(cfg: ScenarioConfig) -> str:
    """Mode a transfer protocol reads from: optical, or NV for a reversed SWAP."""
    return "d" if cfg.protocol.name == "swap" and cfg.protocol.reverse else "a"


def ideal_target(sc: Scenario, modes) -> DensityMatrix:
    """Reference state on ``modes`` that a perfect run would produce.

    A Fock input to a transfer protocol should arrive as the same Fock state
    on the target mode.  Anything else (superpositions, entanglement runs) is
    compared against the schedule's lossless output, which carries the phases
    the swaps imprint.
    """
    cfg, reg = sc.config, sc.register
    sub = reg.subregister(modes)
    occ = cfg.initial_state.occupations
    target_mode = cfg.output.target_mode
    if occ is not None and cfg.protocol.name in TRANSFER_PROTOCOLS and target_mode:
        moved = dict(occ)
        source = transfer_source(cfg)
        if source != target_mode:
            moved[target_mode] = occ.get(source, 0)
            moved[source] = 0
        if all(0 <= moved.get(m, 0) < reg.mode_dim(m) for m in modes):
            ket = state_vector(sub, [moved.get(m, 0) for m in sub.labels])
            return DensityMatrix(np.outer(ket, ket.conj()), sub)
    span = (0.0, sc.duration)
    psi = evolve_pure(sc.psi0, sc.hamiltonian, span, cfg.integrator.dt, breakpoints=sc.breakpoints)
    psi = psi / np.linalg.norm(psi)
    m = partial_trace_matrix(np.outer(psi, psi.conj()), reg, modes)
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(m / np.trace(m), sub)


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    sc = build_scenario(cfg)
    reg = sc.register
    integ = cfg.integrator
    out = cfg.output
    span = (0.0, sc.duration)

    fid_modes = list(out.fidelity_modes)
    target = ideal_target(sc, fid_modes) if fid_modes else None
    fidelity = fidelity_to(target) if target is not None else None

    rho0 = DensityMatrix(np.outer(sc.psi0, sc.psi0.conj()), reg)
    trace = evolve_master(rho0, sc.hamiltonian, sc.channels, span, integ.dt,
                          breakpoints=sc.breakpoints, sample_every=integ.sample_every,
                          trace_tol=integ.trace_tol)

    conc_modes = tuple(out.concurrence_modes)
    want_conc = _concurrence_ok(reg, conc_modes)
    rows = []
    for t, state, err in zip(trace.times, trace.states, trace.trace_errors):
        row = {"t": float(t), "trace_err": float(err)}
        for label in ("a", "b", "c", "d"):
            row[f"pop_{label}"] = (
                clamp_unit(population_of(state.matrix, reg, label), f"population of {label}", reg.mode_dim(label) - 1)
                if label in reg else None
            )
        row["fidelity"] = (
            fidelity(partial_trace_matrix(state.matrix, reg, fid_modes))
            if fidelity is not None else None
        )
        row["concurrence_ad"] = (
            concurrence_two_qubit(qubit_pair_state(state.matrix, reg, conc_modes)) if want_conc else None
        )
        rows.append(row)

    summary = summarize(cfg, rows, sc, trace)
    return RunResult(cfg, rows, summary, trace)


def _series(rows, key):
    vals = [r[key] for r in rows if r.get(key) is not None]
    return np.array(vals) if vals else None


def summarize(cfg: ScenarioConfig, rows, sc: Scenario, trace: SimulationTrace) -> dict:
    fid = _series(rows, "fidelity")
    conc = _series(rows, "concurrence_ad")
    summary = {
        "name": cfg.name,
        "scenario_hash": cfg.scenario_hash(),
        "protocol": cfg.protocol.name,
        "duration": sc.duration,
        "peak_fidelity": float(fid.max()) if fid is not None else None,
        "peak_fidelity_time": float(rows[int(fid.argmax())]["t"]) if fid is not None else None,
        "final_fidelity": float(fid[-1]) if fid is not None else None,
        "efficiency": None,
        "final_concurrence": float(conc[-1]) if conc is not None else None,
        "peak_concurrence": float(conc.max()) if conc is not None else None,
        "max_population": {},
        "final_population": {},
        "max_trace_error": trace.max_trace_error,
        "steps": trace.steps,
    }
    for label in ("a", "b", "c", "d"):
        pops = _series(rows, f"pop_{label}")
        if pops is not None:
            summary["max_population"][label] = float(pops.max())
            summary["final_population"][label] = float(pops[-1])
    target = cfg.output.target_mode
    if target and target in summary["final_population"]:
        summary["efficiency"] = summary["final_population"][target]
    if cfg.output.g_physical_MHz:
        # g given as an angular-frequency scale in MHz: 1/g in microseconds
        summary["duration_us"] = sc.duration / cfg.output.g_physical_MHz
    return summary


# -- output ------------------------------------------------------------------


def write_run(result: RunResult, out_dir: str | Path, stem: str | None = None) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or result.config.name
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.summary.json"
    csv_path.write_text(result.csv_text())
    json_path.write_text(json.dumps(result.summary, indent=2) + "\n")
    return csv_path, json_path


SWEEP_COLUMNS = ("value", "peak_fidelity", "efficiency", "final_concurrence", "runtime_s")


@dataclass
class SweepResult:
    key: str
    values: list
    results: list[RunResult]
    runtimes: list[float]

    def rows(self) -> list[dict]:
        return [
            {
                "value": v,
                "peak_fidelity": r.summary["peak_fidelity"],
                "efficiency": r.summary["efficiency"],
                "final_concurrence": r.summary["final_concurrence"],
                "runtime_s": rt,
            }
            for v, r, rt in zip(self.values, self.results, self.runtimes)
        ]

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in self.rows():
            writer.writerow(["" if row[k] is None else f"{row[k]:.15g}" for k in SWEEP_COLUMNS])
        return buf.getvalue()


def _timed_run(cfg: ScenarioConfig) -> tuple[RunResult, float]:
    start = time.perf_counter()
    result = run_scenario(cfg)
    return result, time.perf_counter() - start


def sweep(base: ScenarioConfig, key: str, values, workers: int | None = None) -> SweepResult:
    """One run per value of the scalar at ``key``; rows keep the input order."""
    values = list(values)
    base_dict = base.to_dict()
    configs = []
    for v in values:
        d = cfgmod.set_key(base_dict, key, v)
        d["name"] = f"{base.name}__{key}={v}"
        configs.append(cfgmod.parse_config(d))
    if workers == 1 or len(configs) == 1:
        outcomes = [_timed_run(c) for c in configs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_timed_run, configs))
    return SweepResult(key, values, [o[0] for o in outcomes], [o[1] for o in outcomes])


def write_sweep(result: SweepResult, out_dir: str | Path, stem: str) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for run in result.results:
        paths.extend(write_run(run, out_dir))
    table = out_dir / f"{stem}.sweep.csv"
    table.write_text(result.csv_text())
    summary = out_dir / f"{stem}.summary.json"
    summary.write_text(json.dumps({
        "name": stem,
        "parameter": result.key,
        # runtimes stay in the CSV only so this file is reproducible
        "rows": [{"value": row["value"], "summary": run.summary}
                 for row, run in zip(result.rows(), result.results)],
    }, indent=2) + "\n")
    return paths + [table, summary]


def apply_overrides(cfg: ScenarioConfig, dt: float | None = None, sample_every: float | None = None,
                    out: str | None = None) -> ScenarioConfig:
    d = cfg.to_dict()
    if dt is not None:
        d["integrator"]["dt"] = dt
    if sample_every is not None:
        d["integrator"]["sample_every"] = sample_every
    if out is not None:
        d["output"]["path"] = out
    return cfgmod.parse_config(d)


def run_preset(name: str, out_dir: str | Path | None = None, dt: float | None = None,
               sample_every: float | None = None, workers: int | None = None):
    """Run a built-in scenario; returns a RunResult or SweepResult and writes files."""
    cfg = apply_overrides(cfgmod.preset_config(name), dt, sample_every, None if out_dir is None else str(out_dir))
    target = cfg.output.path
    sweep_spec = cfgmod.preset_sweep(name)
    if sweep_spec is None:
        result = run_scenario(cfg)
        write_run(result, target)
        return result
    key, values = sweep_spec
    result = sweep(cfg, key, values, workers=workers)
    write_sweep(result, target, name)
    return result
