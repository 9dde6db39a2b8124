"""Command-line front end.

    python -m optomech simulate  --config run.json --out out/ [--seed N] [--threads N]
    python -m optomech estimate  --config run.json --out out/
    python -m optomech fit       --config run.json --out out/
    python -m optomech calibrate --config run.json --out out/
    python -m optomech spectra   --config run.json --out out/

Every command reads a pipeline configuration (config/schema.py), writes its
tables as CSV into the output directory together with manifest.json and the
log file, and registers itself in the run registry.

EXIT CODES:
===========
    0  success
    2  configuration error
    3  numerical failure
    4  record / output I/O error
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from config.constants import (
    APP_NAME,
    APP_VERSION,
    BANDPASS_HZ,
    DEMOD_OUTPUT_RATE_HZ,
    EXIT_IO,
    EXIT_OK,
    LOG_FILE_NAME,
    LOG_FORMAT,
    MANIFEST_NAME,
    TWO_PI,
)
from config.loader import PipelineConfig, load_pipeline
from config.run_registry import RunRegistry

from . import dsp, estimator, fitting, model_core, records, symplectic, tin
from .cooling import coupled_vs_decoupled_occupancy
from .errors import ConfigError, OptomechError, RecordIOError
from .simulator import CarrierRecord, MeasurementRecord, TrajectoryConfig, simulate_ensemble

logger = logging.getLogger(__name__)

COMMANDS = ("simulate", "estimate", "fit", "calibrate", "spectra")

# ============================================================================
# INFRASTRUCTURE
# ============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=APP_NAME, description="Optomechanical measurement and estimation toolkit")
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=f"run the {name} pipeline")
        cmd.add_argument("--config", required=True, type=Path, help="pipeline configuration (JSON)")
        cmd.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="override the configured seed")
        cmd.add_argument("--threads", type=int, default=1, help="worker threads")
        cmd.add_argument(
            "--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="console and file log level"
        )
    return parser


def configure_logging(out_dir: Path, level: str = "INFO") -> List[logging.Handler]:
    """Attach a file handler and a stdout handler to the root logger."""
    formatter = logging.Formatter(LOG_FORMAT)
    handlers: List[logging.Handler] = [
        logging.FileHandler(out_dir / LOG_FILE_NAME),
        logging.StreamHandler(sys.stdout),
    ]
    root = logging.getLogger()
    root.setLevel(getattr(logging, level))
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)
    return handlers


def _detach(handlers: Sequence[logging.Handler]) -> None:
    root = logging.getLogger()
    for handler in handlers:
        root.removeHandler(handler)
        handler.close()


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out_dir: Path, command: str, config: PipelineConfig, seed: Optional[int], threads: int, outputs: Sequence[Path]
) -> Path:
    """manifest.json: everything needed to rerun the command."""
    manifest = {
        "application": APP_NAME,
        "version": APP_VERSION,
        "command": command,
        "config_source": str(config.source) if config.source else None,
        "config_digest": config.digest,
        "seed": seed,
        "threads": threads,
        "config": config.document,
        "outputs": [{"path": p.name, "sha256": _sha256(p)} for p in outputs if p.is_file()],
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def _locate(config: PipelineConfig, out_dir: Path, name: Path) -> Path:
    """Input path: absolute, else the output directory, else next to the config."""
    if name.is_absolute():
        candidate = name
    elif (out_dir / name).exists():
        candidate = out_dir / name
    else:
        candidate = config.resolve(name)
    if not candidate.exists():
        raise RecordIOError(f"input file not found: {candidate}", hint="run the simulate command first")
    return candidate


def _require(section, name: str):
    if section is None:
        raise ConfigError(f"the configuration has no {name!r} section", key=name)
    return section


def _mode_labels(n_modes: int) -> List[str]:
    return [f"{q}{k + 1}" for k in range(n_modes) for q in ("X", "Y")]


# ============================================================================
# SIMULATE
# ============================================================================


def cmd_simulate(config: PipelineConfig, out_dir: Path, seed: Optional[int], threads: int = 1) -> List[Path]:
    """Simulate one or more records and write them with their truth."""
    section = _require(config.simulate, "simulate")
    count = section.realizations
    seeds = [None if seed is None else seed + i for i in range(count)]
    configs = [
        TrajectoryConfig(
            params=config.params,
            dt=1.0 / section.sample_rate_hz,
            duration=section.duration_s,
            seed=s,
            record_truth=section.record_truth,
            tones=section.tones,
            correlated_backaction=section.correlated_backaction,
            feedback_gain=section.feedback_gain,
        )
        for s in seeds
    ]
    outputs: List[Path] = []
    for i, record in enumerate(simulate_ensemble(configs, threads)):
        name = "record.json" if count == 1 else f"record_{i:03d}.json"
        record.meta["config_digest"] = config.digest
        outputs += records.save_measurement(record, out_dir / name)
    outputs += [p.with_suffix(".f64") for p in list(outputs)]
    logger.info(f"Simulated {count} record(s) into {out_dir}")
    return outputs


# ============================================================================
# ESTIMATE
# ============================================================================


def _to_iq(record) -> MeasurementRecord:
    if isinstance(record, MeasurementRecord):
        return record
    carrier: CarrierRecord = record
    if BANDPASS_HZ[0] < carrier.carrier_frequency < BANDPASS_HZ[1]:
        carrier = dsp.apply_filter_chain(carrier, dsp.FilterSpec.default())
    else:
        logger.warning(
            f"Carrier at {carrier.carrier_frequency:g} Hz is outside the bandpass, filtering skipped"
        )
    decimation = max(1, int(carrier.sample_rate // DEMOD_OUTPUT_RATE_HZ))
    return dsp.iq_demodulate(carrier, decimation=decimation)


def _reconstruct(record: MeasurementRecord, model: estimator.FilterModel, section, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            pred_job = pool.submit(estimator.filter_predict, record, model)
            retro_job = pool.submit(estimator.filter_retrodict, record, model)
            pred, retro = pred_job.result(), retro_job.result()
    else:
        pred = estimator.filter_predict(record, model)
        retro = estimator.filter_retrodict(record, model)
    recon = estimator.reconstruct_covariance(
        pred,
        retro,
        record.dt,
        section.predict_window_s,
        section.retrodict_window_s,
        section.guard_s,
        unconditional=estimator.unconditional_covariance(model),
    )
    return pred, retro, recon


def cmd_estimate(config: PipelineConfig, out_dir: Path, threads: int = 1) -> List[Path]:
    """Predict, retrodict, reconstruct and decompose the conditional state."""
    section = _require(config.estimate, "estimate")
    record = _to_iq(records.load_measurement(_locate(config, out_dir, section.record)))
    model = estimator.FilterModel.from_params(
        config.params,
        dt=record.dt,
        cov_oversample=section.cov_oversample,
        discretization_compensation=section.discretization_compensation,
    )
    pred, retro, recon = _reconstruct(record, model, section, threads)
    n_modes = model.n_modes
    labels = _mode_labels(n_modes)

    whiteness = estimator.innovation_whiteness(pred.innovations)
    logger.info(
        f"Innovation whiteness: Q={whiteness.statistic:.4g}, p={whiteness.p_value:.3g}",
        extra={"operation": "cmd_estimate", "n_modes": n_modes},
    )

    outputs: List[Path] = []
    idx = recon.instants
    means: Dict[str, Sequence[float]] = {"time_s": idx * record.dt}
    for j, label in enumerate(labels):
        means[f"{label}_pred"] = pred.means[idx, j]
        means[f"{label}_retro"] = retro.means[idx, j]
    outputs.append(records.write_csv(out_dir / "means.csv", means))

    outputs.append(
        records.write_csv(
            out_dir / "covariance_diagonal.csv",
            {
                "quadrature": labels,
                "predicted": np.diag(pred.covariance),
                "retrodicted": np.diag(retro.covariance),
                "reconstructed": np.diag(recon.cov),
                "reconstructed_stderr": np.diag(recon.stderr),
            },
        )
    )
    outputs.append(records.write_matrix_csv(out_dir / "reconstructed_covariance.csv", recon.cov, labels))
    outputs.append(records.write_matrix_csv(out_dir / "reconstructed_stderr.csv", recon.stderr, labels))
    outputs.append(records.write_matrix_csv(out_dir / "predicted_covariance.csv", pred.covariance, labels))
    outputs.append(records.write_matrix_csv(out_dir / "retrodicted_covariance.csv", retro.covariance, labels))
    outputs.append(
        records.write_matrix_csv(out_dir / "correlation_matrix.csv", estimator.correlation_matrix(recon.cov), labels)
    )

    basis = symplectic.symplectic_diagonalize(recon.cov, match_modes=True)
    coefficients: Dict[str, Sequence] = {"collective": [f"{q}{k + 1}'" for k in range(n_modes) for q in ("X", "Y")]}
    for j, label in enumerate(labels):
        coefficients[label] = basis.coefficients[:, j]
    outputs.append(records.write_csv(out_dir / "collective_coefficients.csv", coefficients))

    multimode = estimator.conditional_occupancies(recon.cov)
    collective = basis.occupancies
    occupancy: Dict[str, Sequence] = {
        "mode": list(range(1, n_modes + 1)),
        "n_cond_multimode": multimode,
        "n_cond_collective": collective,
        "purity_collective": [estimator.purity(max(n, 0.0)) for n in collective],
    }
    if section.single_mode_comparison:
        _, _, single = _reconstruct(record, model.single_mode(0), section, threads)
        n_single = float(estimator.conditional_occupancies(single.cov)[0])
        occupancy["n_cond_single_mode"] = [n_single] + [math.nan] * (n_modes - 1)
        # Optimal limit of a defect-only world, no spurious modes in the record
        n_limit = float(estimator.conditional_occupancies(estimator.expected_reconstruction(model.single_mode(0)))[0])
        occupancy["n_cond_single_mode_limit"] = [n_limit] + [math.nan] * (n_modes - 1)
        logger.info(f"Defect mode: single-mode n={n_single:.4g} (limit {n_limit:.4g}), multimode n={multimode[0]:.4g}, collective n={collective[0]:.4g}")
    outputs.append(records.write_csv(out_dir / "occupancies.csv", occupancy))
    return outputs


# ============================================================================
# FIT
# ============================================================================


def cmd_fit(config: PipelineConfig, out_dir: Path) -> List[Path]:
    """Fit the detected-spectrum model to a PSD table."""
    section = _require(config.fit, "fit")
    freqs, psd, weight = records.read_psd_csv(_locate(config, out_dir, section.psd))
    if section.band_hz is not None:
        mask = (freqs >= section.band_hz[0]) & (freqs <= section.band_hz[1])
        freqs, psd = freqs[mask], psd[mask]
        weight = None if weight is None else weight[mask]
    problem = fitting.FitProblem(freqs_hz=freqs, psd=psd, params=config.params, free=section.free, weights=weight)
    if section.spurious_modes:
        spurious = fitting.spurious_starts(problem)
        if spurious:
            problem = fitting.FitProblem(
                freqs_hz=freqs, psd=psd, params=config.params, free=section.free, weights=weight, spurious=spurious
            )
    if section.starts > 1:
        result = fitting.multi_start(problem, section.starts)
    else:
        result = fitting.fit_spectrum(problem, fitting.initial_guess(problem))

    names = list(result.values) + ["c_q", "eta_meas", "reduced_chi2"]
    values = list(result.values.values()) + [result.c_q, result.eta_meas, result.reduced_chi2]
    errors = list(result.stderr.values()) + [math.nan, math.nan, math.nan]
    outputs = [
        records.write_csv(out_dir / "fit_values.csv", {"parameter": names, "value": values, "stderr": errors}),
        records.write_csv(
            out_dir / "fit_model.csv",
            {
                "frequency_hz": freqs,
                "psd_shot_noise_per_hz": psd,
                "model_shot_noise_per_hz": problem.model(result.x),
            },
        ),
    ]
    report = out_dir / "fit_report.txt"
    report.write_text(result.report() + "\n")
    outputs.append(report)
    logger.info("\n" + result.report())
    return outputs


# ============================================================================
# CALIBRATE
# ============================================================================


def _spectrum_of(path: Path):
    header = records.read_header(path)
    if header.kind == "iq":
        return dsp.record_spectrum(records.load_measurement(path))
    _, data = records.read_record(path)
    return dsp.welch_psd(data[:, 0], header.sample_rate_hz)


def cmd_calibrate(config: PipelineConfig, out_dir: Path) -> List[Path]:
    """Shot-noise, g0 and laser phase-noise calibrations, whichever are configured."""
    section = _require(config.calibrate, "calibrate")
    if not section:
        raise ConfigError("the calibrate section names no calibration", key="calibrate")
    outputs: List[Path] = []

    if "shot_noise" in section:
        raw = section["shot_noise"]
        cal = dsp.shot_noise_calibrate(raw["voltages"], raw["powers"], raw["operating_voltage"])
        cubic = dsp.cubic_term_test(raw["voltages"], raw["powers"])
        outputs.append(
            records.write_csv(
                out_dir / "shot_noise_calibration.csv",
                {
                    "quantity": ["a", "b", "shot_noise_reference", "classical_fraction", "classical_fraction_stderr", "cubic_p_value"],
                    "value": [
                        cal.a,
                        cal.b,
                        cal.shot_noise_reference,
                        cal.classical_fraction,
                        cal.classical_fraction_error,
                        cubic.p_value,
                    ],
                },
            )
        )

    if "g0" in section:
        raw = section["g0"]
        freqs, psd = _spectrum_of(_locate(config, out_dir, Path(raw["record"])))
        estimate = dsp.estimate_g0(
            freqs, psd, [tuple(t) for t in raw["tones"]], tuple(raw["peak_band_hz"]), config.params.defect.gamma_th
        )
        outputs.append(
            records.write_csv(
                out_dir / "g0_calibration.csv",
                {
                    "quantity": ["g0_hz", "occupancy", "peak_center_hz", "peak_width_hz", "peak_area"],
                    "value": [
                        estimate.g0_hz,
                        estimate.occupancy,
                        estimate.peak.center_hz,
                        estimate.peak.width_hz,
                        estimate.peak.area,
                    ],
                },
            )
        )

    if "phase_noise" in section:
        raw = section["phase_noise"]
        header, data = records.read_record(_locate(config, out_dir, Path(raw["record"])))
        noise = dsp.phase_noise_from_beat(data[:, 0], header.sample_rate_hz, raw["beat_hz"])
        outputs.append(
            records.write_csv(
                out_dir / "phase_noise.csv",
                {
                    "frequency_hz": noise.freqs_hz,
                    "s_phi_rad2_per_hz": noise.s_phi,
                    "s_nu_hz2_per_hz": noise.s_nu,
                },
            )
        )
    return outputs


# ============================================================================
# SPECTRA
# ============================================================================


def cmd_spectra(config: PipelineConfig, out_dir: Path) -> List[Path]:
    """Model spectra, squeezing curves and occupancies as CSV."""
    section = _require(config.spectra, "spectra")
    params = config.params
    outputs: List[Path] = []
    grids = [np.linspace(lo, hi, section.points) for lo, hi in section.bands_hz]
    thetas_deg = list(section.theta_deg) or [math.degrees(params.theta)]

    if section.kind == "squeezing_curve":
        omegas = TWO_PI * np.concatenate(grids)
        efficiency = tin.angle_dependent_efficiency(params.cavity) if section.angle_dependent_efficiency else None
        minima = model_core.squeezing_curve(params, [math.radians(t) for t in thetas_deg], omegas, efficiency)
        outputs.append(
            records.write_csv(
                out_dir / "squeezing_curve.csv",
                {"theta_deg": thetas_deg, "min_psd_shot_noise": minima, "squeezing_db": -10.0 * np.log10(minima)},
            )
        )
    else:
        for i, grid in enumerate(grids):
            columns: Dict[str, Sequence[float]] = {"frequency_hz": grid}
            if section.kind == "detected_quadrature":
                for theta in thetas_deg:
                    columns[f"psd_theta_{theta:g}deg"] = model_core.detected_spectrum(
                        params, TWO_PI * grid, math.radians(theta)
                    )
            else:
                columns["psd_quanta_per_hz"] = model_core.SpectrumModel("mechanical_position", params)(grid)
            outputs.append(records.write_csv(out_dir / f"spectrum_band{i}.csv", columns))
        if section.kind == "mechanical_position":
            occ = coupled_vs_decoupled_occupancy(params)
            outputs.append(
                records.write_csv(
                    out_dir / "cooling_occupancy.csv",
                    {
                        "quantity": ["n_full", "n_decoupled", "n_lorentzian", "n_ideal"],
                        "value": [occ.n_full, occ.n_decoupled, occ.n_lorentzian, math.nan if occ.n_ideal is None else occ.n_ideal],
                    },
                )
            )

    rates = model_core.derived_rates(params)
    outputs.append(
        records.write_csv(
            out_dir / "rates.csv",
            {
                "quantity": ["gamma_th_hz", "gamma_qba_hz", "gamma_meas_hz", "c_q", "eta_meas", "n_imp", "heisenberg_ratio"],
                "value": [
                    rates.gamma_th / TWO_PI,
                    rates.gamma_qba / TWO_PI,
                    rates.gamma_meas / TWO_PI,
                    rates.c_q,
                    rates.eta_meas,
                    rates.n_imp,
                    rates.heisenberg_ratio,
                ],
            },
        )
    )
    return outputs


# ============================================================================
# ENTRY POINT
# ============================================================================


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    out_dir: Path = args.out.resolve()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create output directory {out_dir}: {exc}", file=sys.stderr)
        return EXIT_IO
    handlers = configure_logging(out_dir, args.log_level)
    registry = RunRegistry(out_dir.parent)
    run_id = None
    code = EXIT_OK
    logger.info("=" * 80)
    logger.info(f"{APP_NAME} {APP_VERSION} - {args.command}")
    logger.info("=" * 80)
    try:
        config = load_pipeline(args.config)
        seed = args.seed
        if seed is None and args.command == "simulate" and config.simulate is not None:
            seed = config.simulate.seed
        if seed is None:
            seed = config.seed
        run_id = registry.register(args.command, config.digest, seed, out_dir)
        if args.command == "simulate":
            outputs = cmd_simulate(config, out_dir, seed, args.threads)
        elif args.command == "estimate":
            outputs = cmd_estimate(config, out_dir, args.threads)
        elif args.command == "fit":
            outputs = cmd_fit(config, out_dir)
        elif args.command == "calibrate":
            outputs = cmd_calibrate(config, out_dir)
        else:
            outputs = cmd_spectra(config, out_dir)
        write_manifest(out_dir, args.command, config, seed, args.threads, outputs)
        logger.info(f"Wrote {len(outputs)} output file(s) to {out_dir}")
    except OptomechError as exc:
        code = exc.exit_code
        logger.debug("Traceback", exc_info=True)
        logger.error(f"{type(exc).__name__}: {exc}")
    finally:
        if run_id is not None:
            registry.finish(run_id, code)
        logger.info("=" * 80)
        logger.info(f"{args.command} finished with exit code {code}")
        logger.info("=" * 80)
        _detach(handlers)
    return code


def main() -> None:
    sys.exit(run())
