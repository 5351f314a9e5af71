"""Command line: run | sweep | pulses | validate."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import NOISE_CHANNELS, ConfigError, ExperimentConfig, parse_config, set_path
from .dynamics import EvolutionConfig, IntegrationAccuracyError, NoiseRates, StepSizeError
from .hilbert import MeasurementError, SpaceSpec, reduce_boson
from .observables import WignerGrid, mandel_q, negativity, photon_added_reference, wigner
from .protocols import (
    AmplitudeUnderflowError,
    InitialState,
    ProtocolResult,
    RunOptions,
    Sta,
    fock_checkpoints,
    plan_cat,
    plan_fock,
    plan_photon_shift,
    plan_transfer,
    run_plan,
)
from .pulses import (
    PULSE_CSV_COLUMNS,
    BaseProtocol,
    DegeneracyError,
    FourierFitError,
    GaussianPulse,
    SingularScheduleError,
    StaPulse,
    fit_lcd_pulses,
    fourier_eval,
    pulse_table,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
NUMERIC_ERRORS = (
    StepSizeError,
    IntegrationAccuracyError,
    SingularScheduleError,
    DegeneracyError,
    FourierFitError,
    MeasurementError,
    AmplitudeUnderflowError,
    ArithmeticError,
)


@dataclass
class ExperimentResult:
    summary: dict
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    wigners: dict = field(default_factory=dict)  # name -> WignerGrid


# -- building blocks -------------------------------------------------------


def _base(cfg: ExperimentConfig) -> BaseProtocol:
    b = cfg.base_protocol
    return BaseProtocol(b.omega_q_start, b.omega_q_end, b.lambda_0, b.lambda_m, b.tau)


def _rates(cfg: ExperimentConfig) -> NoiseRates:
    n = cfg.noise
    return NoiseRates(n.gamma_sm, n.gamma_sz, n.gamma_a, n.gamma_ad)


def _options(cfg: ExperimentConfig, drive: str | None = None, n_modes: int | None = None, rates=None) -> RunOptions:
    return RunOptions(
        drive=drive or cfg.drive,
        fourier_modes=cfg.fourier.n_modes if n_modes is None else n_modes,
        omega_f=cfg.fourier.omega_f,
        rates=_rates(cfg) if rates is None else rates,
        noisy_pulses=cfg.noise.noisy_pulses,
        evolution=EvolutionConfig(cfg.evolution.steps_per_unit, sample_dt=cfg.evolution.sample_dt),
    )


def thermal_cutoff(n_th: float, tol: float = 1e-9) -> int:
    """Smallest level count whose thermal tail weight is below ``tol``."""
    if n_th <= 0:
        return 1
    q = n_th / (1 + n_th)
    return max(1, math.ceil(math.log(tol) / math.log(q)))


def _n_th(beta_th: float, omega: float) -> float:
    return 1.0 / math.expm1(omega * beta_th)


def auto_fock_dim(cfg: ExperimentConfig, kind: str) -> int:
    if cfg.space.fock_dim is not None:
        return cfg.space.fock_dim
    extra = thermal_cutoff(_n_th(cfg.beta_th, cfg.space.omega)) if cfg.beta_th else 0
    if kind == "transfer":
        return cfg.n + 4 + extra
    if kind == "fock":
        return cfg.N + 6 + extra
    if kind == "cat":
        return cfg.n_high + 6
    a = abs(cfg.alpha)
    return math.ceil(a * a + 7 * a + 12) + cfg.repetitions + extra


def _initial(cfg: ExperimentConfig, kind: str) -> InitialState:
    if cfg.beta_th is not None:
        return InitialState("thermal", beta_th=cfg.beta_th)
    if kind == "photon_shift":
        return InitialState("coherent", alpha=cfg.alpha)
    return InitialState()


def build_plan(cfg: ExperimentConfig, kind: str):
    space = SpaceSpec(auto_fock_dim(cfg, kind), cfg.space.omega)
    base = _base(cfg)
    pulse = GaussianPulse(math.pi, cfg.pulse.t_pi, cfg.pulse.sigma_pi)
    if kind == "transfer":
        return plan_transfer(cfg.n, base, space)
    if kind == "fock":
        return plan_fock(cfg.N, base, pulse, space, _initial(cfg, kind))
    if kind == "cat":
        return plan_cat(cfg.n_low, cfg.n_high, base, pulse, cfg.measure_r, space, cfg.n_ref_rule)
    if kind == "photon_shift":
        return plan_photon_shift(cfg.repetitions, base, pulse, _initial(cfg, kind), space)
    raise ConfigError("experiment", f"{kind!r} has no protocol plan")


def _wigner_grid(cfg: ExperimentConfig) -> WignerGrid:
    w = cfg.wigner
    return WignerGrid(w.extent, w.extent, w.resolution)


def _metrics(cfg: ExperimentConfig, kind: str, res: ProtocolResult, with_wigner: bool) -> tuple[dict, WignerGrid | None]:
    out: dict = {}
    wg = None
    if kind in ("transfer", "fock", "cat"):
        out["fidelity"] = res.fidelity
        out["infidelity"] = 1.0 - res.fidelity
    if kind == "cat":
        out["phase"] = res.phase
        if res.phase is not None:
            out["phase_other_branch"] = (res.phase + math.pi) % (2 * math.pi)
        out["probability"] = res.probabilities[-1]["p"]
        out["probability_other_branch"] = res.probabilities[-1]["p_other"]
        out["n_refs"] = [s.n_ref for s in res.plan.steps if isinstance(s, Sta)]
    if kind == "fock":
        rho_b = reduce_boson(res.final)
        out["mandel_q_final"] = mandel_q(rho_b)
        if res.series.t and cfg.evolution.sample_dt:
            try:
                out["checkpoints"] = fock_checkpoints(res)
            except KeyError:
                pass
    if kind == "photon_shift":
        rho_b = reduce_boson(res.final)
        grid = _wigner_grid(cfg)
        wg = wigner(rho_b, grid)
        ref = photon_added_reference(res.plan.initial.build(res.plan.space), cfg.repetitions)
        out["negativity"] = negativity(wg)
        out["negativity_ph_add"] = negativity(wigner(ref, grid))
        out["ratio"] = out["negativity"] / out["negativity_ph_add"] if out["negativity_ph_add"] > 0 else None
        out["vacuum_population"] = float(np.real(rho_b[0, 0]))
    elif kind == "cat" and with_wigner:
        wg = wigner(reduce_boson(res.final), _wigner_grid(cfg))
    out["leak"] = res.final.leak()
    return out, wg


def _main_metric(kind: str) -> str:
    return "negativity" if kind == "photon_shift" else "fidelity"


def _run_base(cfg, kind, drive=None, n_modes=None, rates=None, record=True, with_wigner=False):
    plan = build_plan(cfg, kind)
    res = run_plan(plan, _options(cfg, drive, n_modes, rates), record=record)
    metrics, wg = _metrics(cfg, kind, res, with_wigner)
    return res, metrics, wg


def _series_table(res: ProtocolResult):
    names, data = res.series.as_array()
    return names, data.tolist()


# -- experiments -----------------------------------------------------------


def _exp_protocol(cfg: ExperimentConfig) -> ExperimentResult:
    kind = cfg.experiment
    res, metrics, wg = _run_base(cfg, kind, record=cfg.evolution.sample_dt is not None, with_wigner=cfg.wigner.enabled)
    summary = {"experiment": kind, "drive": cfg.drive, "duration": res.duration, **metrics}
    if res.plan.cycle_time is not None:
        summary["cycle_time"] = res.plan.cycle_time
    if cfg.baselines:
        summary["baselines"] = {}
        for drive in cfg.baselines:
            _, m, _ = _run_base(cfg, kind, drive=drive, record=False)
            summary["baselines"][drive] = m[_main_metric(kind)]
    out = ExperimentResult(summary)
    if res.series.t:
        out.tables["series"] = _series_table(res)
    if wg is not None and cfg.wigner.enabled:
        out.wigners["wigner"] = wg
    return out


def _exp_pulse_export(cfg: ExperimentConfig) -> ExperimentResult:
    sta = StaPulse(_base(cfg), cfg.n, cfg.space.omega)
    samples = 1001
    table = pulse_table(sta, samples)
    header = list(PULSE_CSV_COLUMNS)
    wq_fit, lam_fit = fit_lcd_pulses(sta, cfg.fourier.n_modes, cfg.fourier.omega_f, cfg.fourier.samples)
    t = table[:, 0]
    table = np.column_stack([table, fourier_eval(wq_fit, t), fourier_eval(lam_fit, t)])
    header += ["omega_q_fourier", "lambda_fourier"]
    summary = {
        "experiment": "pulse_export",
        "n_ref": cfg.n,
        "theta_max": float(np.abs(table[:, 3]).max()),
        "lambda_lcd_max": float(table[:, 5].max()),
        "fourier_n_modes": cfg.fourier.n_modes,
        "fourier_residual_omega_q": wq_fit.residual,
        "fourier_residual_lambda": lam_fit.residual,
        "fourier_omega_f": [wq_fit.omega_f, lam_fit.omega_f],
    }
    return ExperimentResult(summary, {"pulses": (header, table.tolist())})


def _exp_robustness_fourier(cfg: ExperimentConfig) -> ExperimentResult:
    kind = cfg.base_experiment
    key = _main_metric(kind)
    _, exact, _ = _run_base(cfg, kind, drive="lcd", record=False)
    rows = []
    for m in cfg.fourier.modes:
        _, met, _ = _run_base(cfg, kind, drive="fourier", n_modes=m, record=False)
        rows.append([m, met[key]])
    _, bare, _ = _run_base(cfg, kind, drive="bare", record=False)
    summary = {
        "experiment": "robustness_fourier",
        "base_experiment": kind,
        "metric": key,
        "exact": exact[key],
        "bare": bare[key],
        "by_modes": {str(m): v for m, v in rows},
    }
    return ExperimentResult(summary, {"fourier": (["n_modes", key], rows)})


def _exp_robustness_noise(cfg: ExperimentConfig) -> ExperimentResult:
    kind = cfg.base_experiment
    key = _main_metric(kind)
    _, clean, _ = _run_base(cfg, kind, rates=NoiseRates(), record=False)
    rows = []
    for ch in cfg.noise_scan.channels:
        for g in cfg.noise_scan.rates:
            rates = NoiseRates(**{k: float(g) for k in NOISE_CHANNELS[ch]})
            _, met, _ = _run_base(cfg, kind, rates=rates, record=False)
            rows.append([ch, float(g), met[key]])
    summary = {
        "experiment": "robustness_noise",
        "base_experiment": kind,
        "metric": key,
        "noiseless": clean[key],
        "by_channel": {ch: {repr(float(g)): v for c, g, v in rows if c == ch} for ch in cfg.noise_scan.channels},
    }
    return ExperimentResult(summary, {"noise": (["channel", "rate", key], rows)})


def linear_fit_origin(x, y) -> tuple[float, float]:
    """Slope of ``y = k x`` and the centred coefficient of determination."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    k = float(x @ y / (x @ x))
    ss_res = float(((y - k * x) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    return k, 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def _exp_thermal_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    rows = []
    for N in cfg.thermal.N_list:
        for nth in cfg.thermal.n_th:
            beta = math.log1p(1.0 / nth) / cfg.space.omega
            sub = replace(cfg, N=N, beta_th=beta)
            _, met, _ = _run_base(sub, "fock", record=False)
            rows.append([nth, N, met["infidelity"]])
    fits = {}
    for N in cfg.thermal.N_list:
        xs = [r[0] for r in rows if r[1] == N]
        ys = [r[2] for r in rows if r[1] == N]
        k, r2 = linear_fit_origin(xs, ys)
        fits[str(N)] = {"slope": k, "r2": r2}
    spread = max(
        max(r[2] for r in rows if r[0] == nth) - min(r[2] for r in rows if r[0] == nth) for nth in cfg.thermal.n_th
    )
    summary = {"experiment": "thermal_sweep", "fits": fits, "max_spread_over_N": spread}
    return ExperimentResult(summary, {"thermal": (["n_th", "N", "infidelity"], rows)})


EXPERIMENT_RUNNERS = {
    "fock": _exp_protocol,
    "cat": _exp_protocol,
    "photon_shift": _exp_protocol,
    "transfer": _exp_protocol,
    "pulse_export": _exp_pulse_export,
    "robustness_fourier": _exp_robustness_fourier,
    "robustness_noise": _exp_robustness_noise,
    "thermal_sweep": _exp_thermal_sweep,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return EXPERIMENT_RUNNERS[cfg.experiment](cfg)


# -- output ----------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def json_text(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def write_outputs(result: ExperimentResult, out_dir, config: ExperimentConfig | None = None) -> dict:
    """Write summary, tables and Wigner grids plus ``manifest.json`` with SHA-256 digests."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files: dict[str, bytes] = {"summary.json": json_text(result.summary).encode()}
        if config is not None:
            files["config.json"] = (config.to_json() + "\n").encode()
        for name, (header, rows) in result.tables.items():
            files[f"{name}.csv"] = csv_text(header, rows).encode()
        for name, wg in result.wigners.items():
            files[f"{name}.csv"] = csv_text([f"re={x:.12g}" for x in wg.re], wg.values.tolist()).encode()
            files[f"{name}.json"] = json_text({**wg.meta(), "rows": "im ascending", "cols": "re ascending"}).encode()
        manifest = {"files": []}
        for name in sorted(files):
            (out / name).write_bytes(files[name])
            manifest["files"].append(
                {"path": name, "sha256": hashlib.sha256(files[name]).hexdigest(), "bytes": len(files[name])}
            )
        (out / "manifest.json").write_text(json_text(manifest))
    except OSError as exc:
        raise OSError(f"cannot write outputs to {out}: {exc}") from exc
    return manifest


def load_wigner_csv(path) -> WignerGrid:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    vals = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return WignerGrid(meta["re_range"], meta["im_range"], meta["resolution"], vals)


# -- sweeps ----------------------------------------------------------------


def _sweep_row(args):
    doc, axis, value = args
    try:
        cfg = set_path(parse_config(doc), axis, value)
        summary = run_experiment(cfg).summary
        return {k: v for k, v in summary.items() if isinstance(v, (int, float, str)) or v is None}
    except (ConfigError, *NUMERIC_ERRORS) as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}


def worker_count(default: int | None = None) -> int:
    env = os.environ.get("JC_STA_WORKERS")
    if env:
        return max(1, int(env))
    return default or max(1, min(8, os.cpu_count() or 1))


def sweep(cfg: ExperimentConfig, axis: str, values: list, workers: int | None = None) -> ExperimentResult:
    """Run ``cfg`` once per value of ``axis``; rows keep the input order, failures become rows."""
    set_path(cfg, axis, values[0])  # validates the path before spawning work
    jobs = [(cfg.to_dict(), axis, v) for v in values]
    n = worker_count(workers)
    if n == 1 or len(jobs) == 1:
        rows = [_sweep_row(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as ex:
            rows = list(ex.map(_sweep_row, jobs))
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    table = [[_jsonable(v)] + [r.get(k, "") for k in keys] for v, r in zip(values, rows)]
    summary = {"experiment": "sweep", "axis": axis, "points": len(values), "failed": sum("error" in r for r in rows)}
    return ExperimentResult(summary, {"sweep": ([axis, *keys], table)})


# -- suites ----------------------------------------------------------------


@dataclass(frozen=True)
class SuiteEntry:
    config: ExperimentConfig
    axis: str | None = None
    values: tuple = ()


def parse_suite(doc: dict, overrides: list[str] | None = None) -> dict[str, SuiteEntry]:
    """``{"runs": {name: config | config + {"sweep": {"axis", "values"}}}}``."""
    runs = doc.get("runs")
    extra = sorted(set(doc) - {"runs"})
    if extra:
        raise ConfigError(extra[0], "unknown key in suite")
    if not isinstance(runs, dict) or not runs:
        raise ConfigError("runs", "must be a non-empty object")
    out = {}
    for name, entry in runs.items():
        if not isinstance(entry, dict):
            raise ConfigError(f"runs.{name}", "must be an object")
        entry = dict(entry)
        sw = entry.pop("sweep", None)
        try:
            cfg = parse_config(entry, overrides)
        except ConfigError as exc:
            raise ConfigError(f"runs.{name}.{exc.path}".rstrip("."), exc.msg) from None
        if sw is None:
            out[name] = SuiteEntry(cfg)
            continue
        if not isinstance(sw, dict) or set(sw) != {"axis", "values"}:
            raise ConfigError(f"runs.{name}.sweep", "needs exactly 'axis' and 'values'")
        if not isinstance(sw["values"], list) or not sw["values"]:
            raise ConfigError(f"runs.{name}.sweep.values", "must be a non-empty list")
        set_path(cfg, sw["axis"], sw["values"][0])
        out[name] = SuiteEntry(cfg, sw["axis"], tuple(sw["values"]))
    return out


def run_entry(entry: SuiteEntry, workers: int | None = None) -> ExperimentResult:
    if entry.axis is None:
        return run_experiment(entry.config)
    return sweep(entry.config, entry.axis, list(entry.values), workers)


def load_document(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON in {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("", "top level must be an object")
    return doc


# -- entry point -----------------------------------------------------------


def _load(args):
    """Single config, or a suite mapping when the document has ``runs``."""
    doc = load_document(args.config) if args.config else {}
    if "runs" in doc:
        if args.preset:
            raise ConfigError("--preset", "not allowed with a suite")
        return parse_suite(doc, args.set)
    if args.preset:
        doc["preset"] = args.preset
    return parse_config(doc, args.set)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="jc-sta", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("run", "sweep", "pulses", "validate"):
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?", help="JSON config or suite file")
        p.add_argument("--preset", help="named parameter set")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field")
        if name != "validate":
            p.add_argument("--out", help="output directory (default: config 'output')")
            p.add_argument("--workers", type=int, help="sweep worker count")
        if name == "sweep":
            p.add_argument("--axis", required=True, help="dotted parameter path")
            p.add_argument("--values", required=True, help="JSON list of values")
    args = ap.parse_args(argv)
    try:
        loaded = _load(args)
        suite = isinstance(loaded, dict)
        if args.cmd == "validate":
            doc = {k: e.config.to_dict() for k, e in loaded.items()} if suite else loaded.to_dict()
            print(json_text(doc), end="")
            return EXIT_OK
        if suite and args.cmd != "run":
            raise ConfigError(args.cmd, "suites can only be used with 'run'")
        t0 = time.perf_counter()
        if suite:
            out_dir = Path(args.out or "out")
            summaries = {}
            for name, entry in loaded.items():
                result = run_entry(entry, args.workers)
                write_outputs(result, out_dir / name, entry.config)
                summaries[name] = result.summary
            print(json_text(summaries), end="")
        else:
            cfg = loaded
            if args.cmd == "pulses":
                cfg = replace(cfg, experiment="pulse_export")
            if args.cmd == "sweep":
                try:
                    values = json.loads(args.values)
                except json.JSONDecodeError as exc:
                    raise ConfigError("--values", str(exc)) from None
                if not isinstance(values, list) or not values:
                    raise ConfigError("--values", "must be a non-empty JSON list")
                result = sweep(cfg, args.axis, values, args.workers)
            else:
                result = run_experiment(cfg)
            out_dir = args.out or cfg.output
            write_outputs(result, out_dir, cfg)
            print(json_text(result.summary), end="")
        print(f"runtime {time.perf_counter() - t0:.2f} s; outputs in {out_dir}", file=sys.stderr)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
