"""Command-line front end.

Usage::

    transmon-qudit spectrum   [--config cfg.json] [--out DIR]
    transmon-qudit dispersion [--grid 0,0.25,0.5]
    transmon-qudit decay-fit  traces/*.csv
    transmon-qudit ramsey-fit traces/*.csv [--transitions 01,12,23]
    transmon-qudit readout    spectra/*.csv
    transmon-qudit gen-fixtures --out fixtures

Each command writes ``<command>.json`` (the run report) and any plot-ready CSV
tables into the output directory, then prints the report to stdout. Exit codes:
0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from transmon_qudit import decay, ramsey, readout
from transmon_qudit.cavity import NON_DISPERSIVE, dispersive_ratios, solve_coupled
from transmon_qudit.config import ConfigError, RunConfig, load_config
from transmon_qudit.errors import IllConditionedError, TruncationError
from transmon_qudit.io import (
    DataError,
    dumps,
    read_calibration_json,
    read_population_csv,
    read_spectrum_csv,
    read_trace_csv,
    write_calibration_json,
    write_json,
    write_population_csv,
    write_spectrum_csv,
    write_table,
    write_trace_csv,
)
from transmon_qudit.spectrum import (
    charge_dispersion,
    charge_matrix_elements,
    diagonalize,
    sequential_matrix_element_ratios,
)

log = logging.getLogger("transmon_qudit")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

DEFAULT_GRID = tuple(np.round(np.linspace(0.0, 1.0, 21), 10))
SYMMETRY_TOL = 1e-9


@dataclass
class Table:
    header: list[str]
    rows: list[list[float]]


@dataclass
class RunReport:
    command: str
    config_hash: str
    outputs: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    tables: dict[str, Table] = field(default_factory=dict)

    def payload(self, timings: bool = True) -> dict:
        out = {
            "command": self.command,
            "config_hash": self.config_hash,
            "outputs": self.outputs,
            "flags": self.flags,
        }
        if timings:
            out["timings_s"] = self.timings
        return out

    @contextmanager
    def timed(self, name: str):
        t0 = time.perf_counter()
        yield
        self.timings[name] = round(time.perf_counter() - t0, 6)


def config_hash(cfg: RunConfig) -> str:
    # The output directory does not change results, so it is left out.
    data = cfg.model_dump(mode="json")
    data["io"].pop("out", None)
    text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _label(i: int, j: int) -> str:
    return f"{i}{j}"


def _sorted_inputs(cfg: RunConfig) -> list[str]:
    if not cfg.io.inputs:
        raise DataError("no input files given")
    return sorted(cfg.io.inputs)


def cmd_spectrum(cfg: RunConfig) -> RunReport:
    """Bare and dressed transmon spectrum, dispersive shifts and ladder diagnostics."""
    rep = RunReport("spectrum", config_hash(cfg))
    dev = cfg.device
    params = dev.transmon()
    n = dev.n_levels
    with rep.timed("bare"):
        spec = diagonalize(params, n)
        elements = charge_matrix_elements(spec)
    with rep.timed("coupled"):
        cs = solve_coupled(params, dev.cavity(), dev.n_transmon)
        table = dispersive_ratios(cs)

    bare = spec.transition_frequencies
    dressed = cs.dressed_transitions
    chi = cs.chi
    rep.outputs = {
        "bare_transitions_ghz": {_label(k, k + 1): bare[k] for k in range(n - 1)},
        "dressed_transitions_ghz": {
            _label(k, k + 1): dressed[k] for k in range(min(n - 1, dressed.size))
        },
        "anharmonicities_ghz": {str(k + 1): a for k, a in enumerate(spec.anharmonicities)},
        "chi_ghz": {str(i): c for i, c in enumerate(chi)},
        "mixed_ladders": cs.mixed_ladders,
        "well_behaved_ladders": cs.well_behaved_ladders,
        "detuning_coupling_ratios": {f"{i}-{j}": r for (i, j), r in sorted(table.shown().items())},
        "omitted_ratios": [f"{i}-{j}" for i, j in table.omitted],
        "sequential_matrix_element_ratios": {
            _label(k, k + 1): r for k, r in enumerate(sequential_matrix_element_ratios(elements))
        },
        "q_t": dev.cavity().q_t,
    }
    rep.flags = [f"mixed-ladder:{i}" for i in cs.mixed_ladders]
    rep.tables["transitions"] = Table(
        ["i", "j", "bare_ghz", "dressed_ghz"],
        [
            [k, k + 1, bare[k], dressed[k] if k < dressed.size else np.nan]
            for k in range(n - 1)
        ],
    )
    rep.tables["ladders"] = Table(
        ["ladder", "chi_ghz", "min_top_projection", "mixed"],
        [
            [i, np.nan if chi[i] == NON_DISPERSIVE else chi[i], min(lad.top_projection), int(lad.mixed)]
            for i, lad in sorted(cs.ladders.items())
        ],
    )
    rep.tables["ratios"] = Table(
        ["i", "j", "detuning_ghz", "coupling_ghz", "ratio"],
        [[i, j, table.detunings[(i, j)], table.couplings[(i, j)], r] for (i, j), r in sorted(table.ratios.items())],
    )
    return rep


def cmd_dispersion(cfg: RunConfig, grid: Sequence[float] = DEFAULT_GRID) -> RunReport:
    """Charge dispersion of each adjacent transition over an offset-charge grid."""
    rep = RunReport("dispersion", config_hash(cfg))
    params = cfg.device.transmon()
    n = cfg.device.n_levels
    grid = np.asarray(grid, dtype=float)
    with rep.timed("dispersion"):
        disp = charge_dispersion(params, n, grid)
        mirrored = charge_dispersion(params, n, 1.0 - grid)
    sym_err = float(np.max(np.abs(disp.eps - mirrored.eps)))
    symmetric = sym_err <= SYMMETRY_TOL
    labels = [_label(i, j) for i, j in disp.transitions]
    rep.outputs = {
        "n_g_grid": grid,
        "eps_max_mhz": {lab: abs(e) * 1e3 for lab, e in zip(labels, disp.eps_max)},
        "eps_mhz": {lab: disp.eps[k] * 1e3 for k, lab in enumerate(labels)},
        "symmetry_max_error_ghz": sym_err,
        "symmetry": "pass" if symmetric else "fail",
    }
    rep.flags = [f"symmetry:{'pass' if symmetric else 'fail'}"]
    rep.tables["dispersion"] = Table(
        ["n_g"] + [f"eps{lab}_mhz" for lab in labels],
        [[g] + list(disp.eps[:, m] * 1e3) for m, g in enumerate(grid)],
    )
    return rep


def cmd_decay_fit(cfg: RunConfig) -> RunReport:
    """Fit decay rates to population traces, one trace per prepared state."""
    rep = RunReport("decay-fit", config_hash(cfg))
    paths = _sorted_inputs(cfg)
    traces = [read_population_csv(p) for p in paths]
    with rep.timed("fit"):
        try:
            fit = decay.fit_rates(traces, model=cfg.analysis.decay_model)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
    rep.outputs = fit.report()
    rep.outputs["inputs"] = {p: tr.initial_state for p, tr in zip(paths, traces)}
    rep.outputs["residual_norm"] = fit.residual_norm
    if fit.rates.n_levels > 2 and fit.rates.rate(1, 0) > 0:
        sc = decay.scaling_check(fit.rates)
        rep.outputs["scaling"] = {
            "ratio_to_linear": {str(i): r for i, r in zip(sc.levels, sc.ratios)},
            "slope_per_us": sc.slope,
            "intercept_per_us": sc.intercept,
        }
    rep.flags = list(fit.flags)
    rep.tables["rates"] = Table(
        ["i", "j", "rate_per_us"], [[i, j, fit.rates.rate(i, j)] for i, j in fit.rates.channels()]
    )
    return rep


def cmd_ramsey_fit(cfg: RunConfig, transitions: Sequence[str] | None = None) -> RunReport:
    """Background removal, spectrum and fringe fit for each Ramsey trace.

    With ``transitions`` (one label per input, in sorted input order) the
    fitted splittings are compared with the simulated maximal dispersion.
    """
    rep = RunReport("ramsey-fit", config_hash(cfg))
    paths = _sorted_inputs(cfg)
    if transitions is not None and len(transitions) != len(paths):
        raise ConfigError(f"{len(transitions)} transition labels for {len(paths)} inputs")
    a = cfg.analysis
    results = {}
    rows = []
    with rep.timed("fit"):
        for k, path in enumerate(paths):
            res = ramsey.analyze_ramsey(read_trace_csv(path), a.background_window_us, a.psd_prominence)
            results[path] = res.report()
            rep.flags += [f"{path}:{f}" for f in res.flags]
            if res.fit is not None:
                rows.append([k, res.fit.t2, res.fit.f_a, res.fit.delta_f, res.spectrum.bin_width])
    rep.outputs = {"fits": results}
    if transitions is not None:
        n = max(int(t[-1]) for t in transitions) + 1
        with rep.timed("dispersion"):
            disp = charge_dispersion(cfg.device.transmon(), max(n, 2), [0.5])
        sim = {_label(i, j): abs(e) * 1e3 for (i, j), e in zip(disp.transitions, disp.eps_max)}
        measured = {
            t: results[p]["delta_f_mhz"] for t, p in zip(transitions, paths) if "delta_f_mhz" in results[p]
        }
        try:
            cmp = ramsey.compare_dispersion(measured, sim, a.dispersion_tolerance)
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
        rep.outputs["dispersion_comparison"] = cmp.report()
        rep.flags += cmp.flags
    rep.tables["ramsey_fits"] = Table(["input_index", "t2_us", "f_a_mhz", "delta_f_mhz", "bin_width_mhz"], rows)
    return rep


def _readout_one(cfg: RunConfig, path: str, cal) -> dict:
    a = cfg.analysis
    freqs, s21 = read_spectrum_csv(path)
    out: dict = {}
    if a.inversion == "calibration":
        if cal.probe_freqs is None:
            raise DataError("calibration file has no probe frequencies")
        order = np.argsort(freqs)
        v = np.interp(cal.probe_freqs, freqs[order], np.abs(s21[order]))
        pops = readout.invert_populations(v, cal)
        out["voltages"] = v
    else:
        fit = readout.fit_spectrum(freqs, s21, n_peaks=a.n_peaks, q_t=a.q_t)
        # fit_spectrum sorts centres ascending; reorder to state order.
        order = slice(None, None, -1) if a.state_order == "descending" else slice(None)
        centers = fit.centers[order]
        m = readout.spectral_inversion_matrix(centers, fit.q_t, a.inversion)
        v = readout.transmission(fit.model(), centers)
        pops = np.real(readout.invert_populations(v, m))
        out.update(
            {
                "centers_ghz": centers,
                "q_t": fit.q_t,
                "weights": fit.weights[order],
                "fit_populations": fit.populations[order],
                "residual_norm": fit.residual_norm,
                "condition_number": m.condition_number,
                "flags": fit.flags,
            }
        )
    out["populations"] = pops
    out["corrected_populations"] = readout.readout_decay_correction(pops, a.readout_correction())
    return out


def cmd_readout(cfg: RunConfig) -> RunReport:
    """Populations from transmission spectra, with readout-decay correction."""
    rep = RunReport("readout", config_hash(cfg))
    a = cfg.analysis
    cal = None
    if a.inversion == "calibration":
        if a.calibration is None:
            raise ConfigError("inversion 'calibration' needs analysis.calibration")
        cal = read_calibration_json(a.calibration)
    paths = _sorted_inputs(cfg)
    results = {}
    with rep.timed("readout"):
        for path in paths:
            results[path] = _readout_one(cfg, path, cal)
            rep.flags += [f"{path}:{f}" for f in results[path].get("flags", [])]
    rep.outputs = {"lambda_bar": a.readout_correction().lambda_bar, "spectra": results}
    rep.tables["populations"] = Table(
        ["input_index"] + [f"p{i}" for i in range(len(next(iter(results.values()))["populations"]))],
        [[k] + list(results[p]["corrected_populations"]) for k, p in enumerate(paths)],
    )
    return rep


def cmd_gen_fixtures(cfg: RunConfig) -> RunReport:
    """Write the synthetic fixture set, all randomness drawn from the config seed."""
    rep = RunReport("gen-fixtures", config_hash(cfg))
    root = Path(cfg.io.out) / "fixtures"
    seeds = np.random.SeedSequence(cfg.io.seed).generate_state(8)
    files: list[Path] = []

    times = np.linspace(0.0, 300.0, 301)
    rates = decay.RateMatrix.from_lifetimes(5, decay.MEASURED_LIFETIMES_US)
    for name, r, states in [
        ("decay", rates, range(1, 5)),
        ("decay_two_level", decay.RateMatrix.from_lifetimes(2, {(1, 0): 84.0}), [1]),
        ("decay_no_g30", rates.with_rates({(3, 0): 0.0}), range(1, 5)),
    ]:
        seed = int(seeds[len(files) % 8])
        for tr in decay.synthesize_traces(r, times, states, 0.01, seed):
            files.append(write_population_csv(root / name / f"p{tr.metadata['initial_state']}.csv", tr))

    t = np.linspace(0.0, 100.0, 2001)
    bg = 0.5 * np.exp(-t / 84.0)
    sigma = 0.04
    fringes = {
        "state1": ramsey.RamseyFit(72.0, 0.379, 0.0, phases=(0.3, 0.3)),
        "state2": ramsey.RamseyFit(32.0, 0.504, 0.093, phases=(0.3, -0.5)),
        "state3": ramsey.RamseyFit(12.0, 1.1, 2.5, phases=(-0.4, 0.9)),
    }
    for k, (name, fit) in enumerate(fringes.items()):
        tr = ramsey.synthesize(fit, t, sigma, int(seeds[3 + k]))
        files.append(write_trace_csv(root / "ramsey" / f"{name}.csv", ramsey.RamseyTrace(t, tr.amplitude + bg)))
    rng = np.random.default_rng(int(seeds[6]))
    four = sum(np.exp(-t / 40.0) * np.cos(2 * np.pi * f * t) for f in (0.5, 1.3, 2.2, 3.4))
    files.append(
        write_trace_csv(root / "ramsey_refused" / "four_freq.csv", ramsey.RamseyTrace(t, four + bg + rng.normal(0, sigma, t.size)))
    )
    files.append(write_trace_csv(root / "ramsey_refused" / "constant.csv", ramsey.RamseyTrace(t, np.full(t.size, 0.7))))

    f_c = cfg.device.f_c_ghz
    q_t = cfg.device.cavity().q_t
    # Dispersive shifts of states 0..2 for the reference device, state 0 highest.
    centers = f_c + np.array([2.8e-3, 2.0e-3, 0.85e-3])
    weights = np.array([0.6, 0.3, 0.1])
    model = readout.TransmissionModel.from_centers(centers, q_t, weights, f_c)
    freqs = np.linspace(f_c, f_c + 3.6e-3, 721)
    noise = np.random.default_rng(int(seeds[7])).normal(0, 2e-3, (2, freqs.size))
    s21 = readout.transmission(model, freqs) + noise[0] + 1j * noise[1]
    files.append(write_spectrum_csv(root / "readout" / "three_peak.csv", freqs, s21))
    files.append(
        write_calibration_json(
            root / "readout" / "identity_calibration.json",
            readout.calibration_matrix(np.eye(3), centers),
        )
    )
    rep.outputs = {
        "files": {
            str(p.relative_to(cfg.io.out)): hashlib.sha256(p.read_bytes()).hexdigest() for p in files
        },
        "generating_parameters": {
            "decay_lifetimes_us": {f"g{i}{j}": v for (i, j), v in decay.MEASURED_LIFETIMES_US.items()},
            "decay_noise_sigma": 0.01,
            "ramsey": {k: {"t2_us": f.t2, "f_a_mhz": f.f_a, "delta_f_mhz": f.delta_f} for k, f in fringes.items()},
            "ramsey_noise_sigma": sigma,
            "readout_weights": weights,
            "readout_centers_ghz": centers,
        },
    }
    return rep


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _parse_labels(text: str) -> list[str]:
    labels = [x.strip() for x in text.split(",") if x.strip()]
    for lab in labels:
        if len(lab) != 2 or not lab.isdigit() or int(lab[1]) != int(lab[0]) + 1:
            raise argparse.ArgumentTypeError(f"transition labels look like 01,12,23; got {lab!r}")
    return labels


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transmon-qudit", description="Transmon qudit simulation and analysis toolkit."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, inputs: bool = False) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON run config (default: bundled reference device)")
        p.add_argument("--out", help="output directory (overrides io.out)")
        p.add_argument("--seed", type=int, help="random seed (overrides io.seed)")
        p.add_argument("--format", choices=["json", "csv"], default="json", help="stdout format")
        if inputs:
            p.add_argument("inputs", nargs="*", help="input files (override io.inputs)")
        return p

    add("spectrum", "bare and dressed spectrum, dispersive shifts")
    p = add("dispersion", "charge dispersion over an offset-charge grid")
    p.add_argument("--grid", type=_parse_floats, default=list(DEFAULT_GRID), help="comma-separated n_g values")
    add("decay-fit", "fit decay rates to population CSVs", inputs=True)
    p = add("ramsey-fit", "fit Ramsey fringes in trace CSVs", inputs=True)
    p.add_argument("--transitions", type=_parse_labels, help="one label per input, e.g. 01,12,23")
    add("readout", "populations from transmission spectra", inputs=True)
    add("gen-fixtures", "write synthetic fixture files")
    return parser


COMMANDS: dict[str, Callable[..., RunReport]] = {
    "spectrum": cmd_spectrum,
    "dispersion": cmd_dispersion,
    "decay-fit": cmd_decay_fit,
    "ramsey-fit": cmd_ramsey_fit,
    "readout": cmd_readout,
    "gen-fixtures": cmd_gen_fixtures,
}


def _csv_text(table: Table) -> str:
    lines = [",".join(table.header)]
    lines += [",".join(repr(float(v)) for v in row) for row in table.rows]
    return "\n".join(lines) + "\n"


def run(args: argparse.Namespace) -> RunReport:
    cfg = load_config(args.config)
    cfg = cfg.with_io(out=args.out, seed=args.seed, inputs=getattr(args, "inputs", None) or None)
    kwargs = {}
    if args.command == "dispersion":
        kwargs["grid"] = args.grid
    if args.command == "ramsey-fit":
        kwargs["transitions"] = args.transitions
    rep = COMMANDS[args.command](cfg, **kwargs)
    out = Path(cfg.io.out)
    write_json(out / f"{args.command}.json", rep.payload())
    for name, table in rep.tables.items():
        write_table(out / f"{args.command}_{name}.csv", table.header, table.rows)
    return rep


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        rep = run(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (TruncationError, IllConditionedError, np.linalg.LinAlgError, FloatingPointError, RuntimeError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except ValueError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    if args.format == "json":
        sys.stdout.write(dumps(rep.payload()))
    else:
        for name, table in rep.tables.items():
            sys.stdout.write(f"# {name}\n{_csv_text(table)}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
