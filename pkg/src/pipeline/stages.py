"""
Pipeline stages: ingest, estimate (GA + ABC + reduction), reduce, trends

All artifacts live under the output directory, one sub-directory per patient.
Estimation is resumable at segment granularity: a GA population checkpoint
is written after every finished segment and records past the checkpoint are
discarded on restart.
"""
import logging
import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from src.analysis.reduction import PROPERTIES, PropertySummary, reduce, summarize
from src.analysis.trends import TrendSegment, TrendSeries, cohort_table, correlation_report, trend_features
from src.errors import DataError, EstimationError
from src.estimators.abc_pmc import AbcResult, run_abc
from src.estimators.genetic import Population, calibration_anchors, evaluate, evolve_segment, init_population
from src.estimators.objective import SegmentProblem
from src.exporters.record_exporter import RecordExporter
from src.metrics.poincare import delta_p, histogram
from src.model.av_node import coupling_rp_from_data, simulate
from src.model.parameters import CouplingConfig, ModelParameters
from src.parsers.afr_parser import parse_afr
from src.parsers.outcome_parser import parse_outcomes
from src.parsers.rr_parser import parse_beats
from src.parsers.segmentation import RRSegment, attach_afr, check_patient_duration, covered_ms, segment
from src.synth.generator import truth_at
from src.utils.parallel import WorkerPool
from src.utils.seeding import Purpose, SeedSchedule, child_sequences
from src.utils.settings import PipelineConfig

logger = logging.getLogger(__name__)

SegmentCallback = Callable[[str, int, int], None]


class PatientLayout:
    """File locations of one patient's artifacts"""

    def __init__(self, output_dir, patient_id: str):
        self.patient_id = patient_id
        self.root = Path(output_dir) / patient_id

    @property
    def meta(self) -> Path:
        return self.root / "patient.json"

    @property
    def segments(self) -> Path:
        return self.root / "segments.jsonl"

    @property
    def ga(self) -> Path:
        return self.root / "ga.jsonl"

    @property
    def population(self) -> Path:
        return self.root / "ga_population.npz"

    @property
    def posterior(self) -> Path:
        return self.root / "posterior.jsonl"

    @property
    def properties(self) -> Path:
        return self.root / "properties.jsonl"

    def samples(self, index: int) -> Path:
        return self.root / "samples" / f"segment_{index:05d}.npz"

    def debug(self, kind: str, index: int) -> Path:
        return self.root / "debug" / f"{kind}_{index:05d}.csv"


def reports_dir(config: PipelineConfig) -> Path:
    return config.output_dir / "reports"


def write_run_metadata(config: PipelineConfig, stage: str) -> None:
    RecordExporter.write_json(
        {"config_hash": config.hash(), "seed": config.seed, "stage": stage, "config": config.to_dict()},
        config.output_dir / "run.json",
    )


# ---------------------------------------------------------------- ingest


@dataclass
class IngestResult:
    patient_id: str
    accepted: bool
    segments: List[RRSegment]
    meta: Dict


def ingest_patient(rr_path: Path, config: PipelineConfig) -> IngestResult:
    """
    Parse, segment and annotate one patient

    Args:
        rr_path: Beat CSV; the AFR file is <afr_dir>/<same name>
        config: Pipeline config

    Returns:
        IngestResult
    """
    patient_id = rr_path.stem
    beats = parse_beats(rr_path, patient_id, config.ingest.default_recording_start)
    trend = parse_afr(Path(config.paths.afr_dir) / rr_path.name, patient_id)

    segments = segment(beats, config.ingest)
    accepted = check_patient_duration(segments, config.ingest)
    if segments:
        segments = attach_afr(segments, trend, config.ingest)

    try:
        coupling_rp = coupling_rp_from_data(beats.valid_rr_intervals, config.simulation.coupling_rp_shortest)
    except ValueError as e:
        raise DataError(str(e), path=str(rr_path)) from e

    meta = {
        "patient": patient_id,
        "accepted": accepted,
        "recording_start": beats.recording_start.isoformat(),
        "coupling_rp_ms": coupling_rp,
        "coupling_cd_ms": config.simulation.coupling_cd_ms,
        "covered_hours": covered_ms(segments) / 3.6e6,
        "n_segments": len(segments),
        "config_hash": config.hash(),
    }
    return IngestResult(patient_id, accepted, segments, meta)


def rr_files(config: PipelineConfig) -> List[Path]:
    rr_dir = Path(config.paths.rr_dir)
    if not rr_dir.is_dir():
        raise DataError("RR directory not found", path=str(rr_dir))
    files = sorted(rr_dir.glob("*.csv"))
    if not files:
        raise DataError("No RR files (*.csv) found", path=str(rr_dir))
    return files


def run_ingest(config: PipelineConfig, force: bool = False) -> List[IngestResult]:
    """
    Ingest every patient of the RR directory

    All input files are parsed before anything is written, so a missing or
    malformed AFR file fails the stage before any compute starts. Patients
    reloaded from an earlier ingest still need their AFR file in place.

    Args:
        config: Pipeline config
        force: Re-ingest patients that already have segments

    Returns:
        One IngestResult per patient (existing ones reloaded)
    """
    results = []
    for rr_path in rr_files(config):
        layout = PatientLayout(config.output_dir, rr_path.stem)
        afr_path = Path(config.paths.afr_dir) / rr_path.name
        if not afr_path.exists():
            raise DataError("AFR file not found", path=str(afr_path))
        meta = RecordExporter.read_json(layout.meta)
        if not force and meta is not None and meta.get("config_hash") == config.hash():
            results.append(load_ingested(layout, config, meta))
            continue
        results.append(ingest_patient(rr_path, config))

    for result in results:
        layout = PatientLayout(config.output_dir, result.patient_id)
        if RecordExporter.read_json(layout.meta) == result.meta:
            continue
        RecordExporter.write_jsonl(
            ({**seg.to_record(), "config_hash": config.hash()} for seg in result.segments),
            layout.segments,
        )
        RecordExporter.write_json(result.meta, layout.meta)
        status = "accepted" if result.accepted else "rejected"
        logger.info(f"{result.patient_id}: {len(result.segments)} segments, {status}")
    return results


def load_ingested(layout: PatientLayout, config: PipelineConfig, meta: Optional[Dict] = None) -> IngestResult:
    meta = meta or RecordExporter.read_json(layout.meta)
    if meta is None:
        raise DataError("Patient not ingested", path=str(layout.meta))
    duration = config.ingest.segment_minutes * 60_000.0
    segments = [RRSegment.from_record(r, duration) for r in RecordExporter.read_jsonl(layout.segments)]
    return IngestResult(meta["patient"], bool(meta["accepted"]), segments, meta)


# ---------------------------------------------------------------- estimate


def _coupling(meta: Dict, config: PipelineConfig) -> CouplingConfig:
    return CouplingConfig(rp_ms=float(meta["coupling_rp_ms"]), cd_ms=config.simulation.coupling_cd_ms)


def _posterior_record(patient_id: str, seg: RRSegment, result: Optional[AbcResult], reason: str, config_hash: str) -> Dict:
    record = {"patient": patient_id, "s": seg.index, "estimated": result is not None, "config_hash": config_hash}
    if result is None:
        record["reason"] = reason
        return record
    record.update(
        {
            "particles": [p.to_record() for p in result.population.particles()],
            "thresholds": result.thresholds,
            "proposals": result.proposals,
        }
    )
    return record


def reduce_segment(
    layout: PatientLayout,
    seg: RRSegment,
    thetas: np.ndarray,
    coupling: CouplingConfig,
    config: PipelineConfig,
    schedule: SeedSchedule,
    pool: WorkerPool,
) -> PropertySummary:
    """Reduce one posterior to properties and append the property record"""
    seed = schedule.sequence(layout.patient_id, seg.index, Purpose.REDUCTION)
    samples = reduce(thetas, seg.lambda_hat, coupling, seed, config.simulation.duration_ms, pool)
    summary = summarize(samples, config.reduction, schedule.sequence(layout.patient_id, seg.index, Purpose.KDE_SUBSAMPLE))
    if not summary.sp_ratio_defined:
        logger.warning(f"{layout.patient_id} segment {seg.index}: no impulse reached the coupling node, SP ratio undefined")

    pools = samples.subsample(
        config.reduction.ks_sample_cap,
        schedule.sequence(layout.patient_id, seg.index, Purpose.KS_SUBSAMPLE),
    )
    RecordExporter.save_pools(pools, layout.samples(seg.index))
    if config.reduction.dump_raw_samples:
        RecordExporter.dump_samples({name: samples.get(name) for name in pools}, layout.debug("samples", seg.index))
    if config.debug.dump_simulations:
        _dump_simulation(layout, seg, thetas[0], coupling, config, child_sequences(seed, 0))

    RecordExporter.append_jsonl(
        {
            "patient": layout.patient_id,
            "s": seg.index,
            "start": seg.start_ms,
            "wall_clock_start": seg.wall_clock_start.isoformat(),
            "lambda_hat": seg.lambda_hat,
            **summary.to_record(),
            "config_hash": config.hash(),
        },
        layout.properties,
    )
    return summary


def _dump_simulation(layout, seg, theta, coupling, config, seed) -> None:
    result = simulate(ModelParameters.from_array(theta), coupling, seg.lambda_hat, config.simulation.duration_ms, seed)
    RecordExporter.dump_simulation(result.ventricular_times, layout.debug("simulation", seg.index))


def _resume_point(layout: PatientLayout, config_hash: str) -> tuple:
    """Drop records past the last checkpoint; returns (population or None, last finished index or None)"""
    previous = RecordExporter.read_jsonl(layout.posterior)
    if any(r.get("config_hash") != config_hash for r in previous):
        logger.warning(f"{layout.patient_id}: configuration changed, discarding earlier estimates")
        for path in (layout.population, layout.ga, layout.posterior, layout.properties):
            path.unlink(missing_ok=True)
    checkpoint = RecordExporter.load_population(layout.population)
    last = checkpoint[2] if checkpoint is not None else None

    def keep(record):
        return last is not None and record["s"] <= last

    for path in (layout.ga, layout.posterior, layout.properties):
        RecordExporter.truncate_jsonl(path, keep)
    if checkpoint is None:
        return None, None
    thetas, eps, _ = checkpoint
    return Population(thetas, eps), last


def estimate_patient(
    ingested: IngestResult,
    config: PipelineConfig,
    pool: WorkerPool,
    callback: Optional[SegmentCallback] = None,
) -> Dict[str, int]:
    """
    GA, ABC and reduction over the segments of one accepted patient

    A segment whose estimation fails is recorded as unestimated and the
    population moves on to the next segment.

    Returns:
        Counts: estimated, unestimated, skipped
    """
    pid = ingested.patient_id
    layout = PatientLayout(config.output_dir, pid)
    schedule = SeedSchedule(config.seed)
    coupling = _coupling(ingested.meta, config)
    config_hash = config.hash()
    segments = ingested.segments
    hists = [histogram(seg.rr_intervals, seg.adjacent_pairs) for seg in segments]
    anchors = calibration_anchors(hists, config.ga.delta_p_quantiles)

    pop, last = _resume_point(layout, config_hash)
    counts = {"estimated": 0, "unestimated": 0, "skipped": 0}
    for i, seg in enumerate(segments):
        if last is not None and seg.index <= last:
            counts["skipped"] += 1
            if callback:
                callback(pid, i + 1, len(segments))
            continue

        if config.debug.dump_histograms:
            RecordExporter.dump_histogram(hists[i], layout.debug("histogram", seg.index))

        result, reason = None, ""
        try:
            problem = SegmentProblem.from_segment(seg, coupling, config.simulation)
            if pop is None:
                pop = init_population(config.ga, schedule.sequence(pid, 0, Purpose.GA_INIT))
            pop = evaluate(pop, problem, schedule.sequence(pid, seg.index, Purpose.GA_EVALUATE), pool)
            dp = delta_p(hists[i - 1], hists[i]) if i > 0 else None
            pop, ranked, generations = evolve_segment(
                pop, problem, dp, anchors, config.ga, schedule.sequence(pid, seg.index, Purpose.GA_GENERATION), pool
            )
            RecordExporter.append_jsonl(
                {
                    "patient": pid,
                    "s": seg.index,
                    "delta_p": dp,
                    "generations": generations,
                    "ranked": [ind.to_record() for ind in ranked],
                    "config_hash": config_hash,
                },
                layout.ga,
            )
            result = run_abc(problem, ranked, config.abc, schedule.sequence(pid, seg.index, Purpose.ABC), pool)
        except (EstimationError, ValueError) as e:
            reason = str(e)
            logger.warning(f"{pid} segment {seg.index}: not estimated ({reason})")

        RecordExporter.append_jsonl(_posterior_record(pid, seg, result, reason, config_hash), layout.posterior)
        if result is not None:
            reduce_segment(layout, seg, result.population.thetas, coupling, config, schedule, pool)
            counts["estimated"] += 1
        else:
            counts["unestimated"] += 1
        if pop is not None:
            RecordExporter.save_population(pop.thetas, pop.eps, seg.index, layout.population)
        if callback:
            callback(pid, i + 1, len(segments))

    return counts


def run_estimate(config: PipelineConfig, callback: Optional[SegmentCallback] = None) -> Dict[str, Dict[str, int]]:
    """
    Ingest if needed, then estimate every accepted patient

    Returns:
        Per-patient segment counts
    """
    ingested = run_ingest(config)
    write_run_metadata(config, "estimate")
    summary = {}
    with WorkerPool(config.processing.max_workers) as pool:
        for result in ingested:
            if not result.accepted:
                logger.info(f"{result.patient_id}: rejected at ingest, skipped")
                continue
            summary[result.patient_id] = estimate_patient(result, config, pool, callback)
    return summary


# ---------------------------------------------------------------- reduce


def _current_properties(layout: PatientLayout, config_hash: str) -> List[Dict]:
    """Property records of this configuration; records and pools of any other one are removed"""
    records = RecordExporter.read_jsonl(layout.properties)
    current = [r for r in records if r.get("config_hash") == config_hash]
    if len(current) == len(records):
        return current
    logger.warning(
        f"{layout.patient_id}: dropping {len(records) - len(current)} property records of another configuration"
    )
    kept = {r["s"] for r in current}
    for record in records:
        if record["s"] not in kept:
            layout.samples(int(record["s"])).unlink(missing_ok=True)
    RecordExporter.truncate_jsonl(layout.properties, lambda r: r.get("config_hash") == config_hash)
    return current


def run_reduce(config: PipelineConfig, callback: Optional[SegmentCallback] = None) -> Dict[str, int]:
    """
    Reduce posterior records that have no property record yet

    Only posteriors and property records carrying the current config hash
    count; stale property records are replaced, stale posteriors wait for
    the next estimate run.

    Returns:
        Newly reduced segments per patient
    """
    schedule = SeedSchedule(config.seed)
    config_hash = config.hash()
    reduced = {}
    with WorkerPool(config.processing.max_workers) as pool:
        for meta_path in sorted(config.output_dir.glob("*/patient.json")):
            layout = PatientLayout(config.output_dir, meta_path.parent.name)
            ingested = load_ingested(layout, config)
            if not ingested.accepted:
                continue
            by_index = {seg.index: seg for seg in ingested.segments}
            done = {r["s"] for r in _current_properties(layout, config_hash)}
            estimated = [r for r in RecordExporter.read_jsonl(layout.posterior) if r.get("estimated")]
            posteriors = [r for r in estimated if r.get("config_hash") == config_hash]
            if len(posteriors) < len(estimated):
                logger.warning(
                    f"{layout.patient_id}: {len(estimated) - len(posteriors)} posteriors of another "
                    "configuration left out; run estimate again"
                )
            coupling = _coupling(ingested.meta, config)
            count = 0
            for k, record in enumerate(posteriors):
                if record["s"] in done:
                    continue
                thetas = np.vstack([ModelParameters.from_dict(p["theta"]).to_array() for p in record["particles"]])
                reduce_segment(layout, by_index[record["s"]], thetas, coupling, config, schedule, pool)
                count += 1
                if callback:
                    callback(layout.patient_id, k + 1, len(posteriors))
            reduced[layout.patient_id] = count
    return reduced


# ---------------------------------------------------------------- trends


def load_trend_series(layout: PatientLayout, with_pools: bool = True) -> Optional[TrendSeries]:
    meta = RecordExporter.read_json(layout.meta)
    records = RecordExporter.read_jsonl(layout.properties)
    if meta is None or not meta.get("accepted") or not records:
        return None
    segments = [
        TrendSegment(
            index=int(r["s"]),
            wall_clock_start=datetime.fromisoformat(r["wall_clock_start"]),
            summary=PropertySummary.from_record(r),
            pools=RecordExporter.load_pools(layout.samples(int(r["s"]))) if with_pools else None,
        )
        for r in records
    ]
    return TrendSeries(layout.patient_id, datetime.fromisoformat(meta["recording_start"]), segments)


@dataclass
class TrendReports:
    metrics: pd.DataFrame
    cohort: pd.DataFrame
    correlation: Optional[pd.DataFrame]


def run_trends(config: PipelineConfig) -> TrendReports:
    """
    Per-patient metrics, cohort table and outcome correlation reports

    Every report row carries the hash of the configuration that wrote it.

    Raises:
        DataError: no accepted patient has property records
    """
    config_hash = config.hash()
    features: Dict[str, Dict[str, float]] = {}
    for meta_path in sorted(config.output_dir.glob("*/patient.json")):
        series = load_trend_series(PatientLayout(config.output_dir, meta_path.parent.name))
        if series is not None:
            features[series.patient_id] = trend_features(series, config.trends)
    if not features:
        raise DataError("No accepted patients with property records", path=str(config.output_dir))

    out = reports_dir(config)
    metrics = pd.DataFrame.from_dict(features, orient="index").rename_axis("patient_id").reset_index()
    metrics = metrics.assign(config_hash=config_hash)
    RecordExporter.write_csv(metrics, out / "metrics.csv")
    cohort = cohort_table(features).assign(config_hash=config_hash)
    RecordExporter.write_csv(cohort, out / "cohort.csv")

    correlation = None
    outcomes = parse_outcomes(config.paths.outcomes)
    if outcomes.is_empty:
        logger.info("No outcomes available, correlation report skipped")
    else:
        correlation = correlation_report(features, outcomes).assign(config_hash=config_hash)
        RecordExporter.write_csv(correlation, out / "correlation.csv")
    return TrendReports(metrics, cohort, correlation)


def patient_status(config: PipelineConfig) -> pd.DataFrame:
    """Per-patient progress overview for the report command"""
    rows = []
    for meta_path in sorted(config.output_dir.glob("*/patient.json")):
        layout = PatientLayout(config.output_dir, meta_path.parent.name)
        meta = RecordExporter.read_json(layout.meta)
        posteriors = RecordExporter.read_jsonl(layout.posterior)
        rows.append(
            {
                "patient_id": layout.patient_id,
                "accepted": bool(meta["accepted"]),
                "covered_hours": meta.get("covered_hours", math.nan),
                "segments": meta.get("n_segments", 0),
                "estimated": sum(1 for r in posteriors if r.get("estimated")),
                "unestimated": sum(1 for r in posteriors if not r.get("estimated")),
                "reduced": len(RecordExporter.read_jsonl(layout.properties)),
            }
        )
    return pd.DataFrame.from_records(
        rows, columns=["patient_id", "accepted", "covered_hours", "segments", "estimated", "unestimated", "reduced"]
    )


def recovery_report(config: PipelineConfig, truth_dir) -> pd.DataFrame:
    """
    Compare estimated properties with the properties of the ground-truth theta

    The reference value of a segment comes from one tracked simulation at the
    manifest theta covering the segment middle, reduced like a posterior.

    Args:
        config: Pipeline config
        truth_dir: Directory of <patient_id>.json manifests written by synth

    Returns:
        DataFrame with columns patient_id, s, property, truth, phi_max, phi_5,
        phi_95, in_band, rel_error, config_hash
    """
    truth_dir = Path(truth_dir)
    if not truth_dir.is_dir():
        raise DataError("Ground-truth directory not found", path=str(truth_dir))
    schedule = SeedSchedule(config.seed)
    config_hash = config.hash()
    duration = config.ingest.segment_minutes * 60_000.0
    rows = []
    for meta_path in sorted(config.output_dir.glob("*/patient.json")):
        layout = PatientLayout(config.output_dir, meta_path.parent.name)
        manifest = RecordExporter.read_json(truth_dir / f"{layout.patient_id}.json")
        if manifest is None:
            continue
        coupling = CouplingConfig(**manifest["coupling"])
        for record in RecordExporter.read_jsonl(layout.properties):
            theta = truth_at(manifest, record["start"], duration)
            if theta is None:
                continue
            seed = schedule.sequence(layout.patient_id, int(record["s"]), Purpose.REDUCTION)
            samples = reduce(ModelParameters.from_dict(theta).to_array()[None, :], record["lambda_hat"], coupling, seed, duration)
            reference = summarize(samples, config.reduction, seed)
            estimate = PropertySummary.from_record(record)
            for name in PROPERTIES:
                truth = reference.phi_max[name]
                phi_max = estimate.phi_max[name]
                rows.append(
                    {
                        "patient_id": layout.patient_id,
                        "s": int(record["s"]),
                        "property": name,
                        "truth": truth,
                        "phi_max": phi_max,
                        "phi_5": estimate.phi_5[name],
                        "phi_95": estimate.phi_95[name],
                        "in_band": bool(estimate.phi_5[name] <= truth <= estimate.phi_95[name]),
                        "rel_error": abs(phi_max - truth) / truth if truth else math.nan,
                        "config_hash": config_hash,
                    }
                )
    columns = [
        "patient_id", "s", "property", "truth", "phi_max", "phi_5", "phi_95", "in_band", "rel_error", "config_hash",
    ]
    return pd.DataFrame.from_records(rows, columns=columns)
