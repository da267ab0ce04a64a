"""
Experiment runner: validates the experiment document, runs the
method x switch-probability x replicate grid and writes per-segment CSVs,
the aggregate table and a JSON summary.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import pandas as pd

import config
from models import (
    METRICS_COLUMNS,
    RATE_ADAPTATION_COLUMNS,
    ExperimentConfig,
    RateAdaptationConfig,
    SessionConfig,
)
from streaming.allocation import ALLOCATORS, FineParams
from streaming.catalog import CatalogSpec, QualityLadder, TileCatalog, synthesize_catalog
from streaming.channel import build_channel
from streaming.errors import ConfigError
from streaming.metrics import QoeParams
from streaming.rate_control import RATE_POLICIES, BufferPolicy
from streaming.session import run_rate_adaptation, run_session
from streaming.viewport import load_patterns
from utils import ensure_dir, format_p, read_json, relative_to, replicate_seed, write_json

logger = logging.getLogger(__name__)

TOP_LEVEL_FIELDS = {
    "catalog", "channel", "methods", "switch_probabilities", "replicates", "seed", "segments", "buffer",
    "throughput_window", "fov", "fine", "qoe", "d_missing", "patterns", "output_dir", "jobs",
}

# aggregate columns, in table order
SUMMARY_COLUMNS = (
    "fov_actual_bitrate_mbps",
    "fov_avg_psnr",
    "fov_psnr_std",
    "fov_psnr_temporal_diff",
    "f_value",
    "qoe",
    "weighted_psnr",
    "actual_bitrate_mbps",
    "stall_s",
)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _number(doc, key, path, issues, default, minimum=None, strict=False, integer=False):
    """Read doc[key] (or the default) and record a range/type issue if any."""
    value = doc.get(key, default)
    where = f"{path}.{key}"
    if value is None and default is None:
        return None
    if not _is_number(value) or (integer and not float(value).is_integer()):
        issues.append(f"{where}: expected {'an integer' if integer else 'a number'}, got {value!r}")
        return default
    if minimum is not None and (value < minimum or (strict and value == minimum)):
        issues.append(f"{where}: must be {'>' if strict else '>='} {minimum}, got {value}")
    return int(value) if integer else float(value)


def _section(doc, key, issues):
    value = doc.get(key, {})
    if not isinstance(value, dict):
        issues.append(f"$.{key}: expected an object")
        return {}
    return value


def _validate_catalog(doc, base_dir, issues):
    if "catalog" not in doc:
        issues.append("$.catalog: missing required field")
        return None
    catalog = doc["catalog"]
    if not isinstance(catalog, dict) or ("path" in catalog) == ("synthesize" in catalog):
        issues.append("$.catalog: expected an object with exactly one of 'path' or 'synthesize'")
        return None
    if "path" in catalog:
        if not relative_to(catalog["path"], base_dir).is_file():
            issues.append(f"$.catalog.path: file not found: {catalog['path']}")
        return {"path": str(catalog["path"])}
    try:
        spec = CatalogSpec.from_dict(catalog["synthesize"])
        QualityLadder(tuple(spec.bitrates))
    except (TypeError, ValueError, AttributeError) as e:
        issues.append(f"$.catalog.synthesize: {e}")
        return None
    normalized = {
        "synthesize": {
            "L": spec.segments,
            "rows": spec.rows,
            "cols": spec.cols,
            "bitrates_kbps": list(spec.bitrates),
            "segment_duration_s": spec.segment_duration,
            "alpha_range": list(spec.alpha_range),
            "beta_range": list(spec.beta_range),
        }
    }
    if "seed" in catalog:
        normalized["seed"] = _number(catalog, "seed", "$.catalog", issues, None, minimum=0, integer=True)
    return normalized


def _validate_channel(doc, base_dir, issues):
    if "channel" not in doc:
        issues.append("$.channel: missing required field")
        return None
    channel = doc["channel"]
    if not isinstance(channel, dict):
        issues.append("$.channel: expected an object")
        return None
    try:
        build_channel(channel, base_dir)
    except (KeyError, TypeError, ValueError, OSError) as e:
        issues.append(f"$.channel: {e}")
        return None
    return dict(channel)


def _validate_methods(doc, issues):
    if "methods" not in doc:
        issues.append("$.methods: missing required field")
        return ()
    methods = doc["methods"]
    if not isinstance(methods, list) or not methods:
        issues.append("$.methods: expected a non-empty list")
        return ()
    for i, name in enumerate(methods):
        if name not in ALLOCATORS:
            issues.append(f"$.methods[{i}]: unknown method {name!r}; expected one of {', '.join(ALLOCATORS)}")
    return tuple(methods)


def _validate_fine(doc, issues):
    fine = _section(doc, "fine", issues)
    defaults = FineParams()
    theta = fine.get("theta", list(defaults.theta))
    if not isinstance(theta, list) or len(theta) != 3 or not all(_is_number(t) for t in theta):
        issues.append(f"$.fine.theta: expected 3 numbers, got {theta!r}")
        theta = list(defaults.theta)
    elif any(t < 0 for t in theta) or not math.isclose(sum(theta), 1.0, abs_tol=1e-9):
        issues.append(f"$.fine.theta: weights must be non-negative and sum to 1, got {theta}")
    return {
        "theta": tuple(float(t) for t in theta),
        "d_th": _number(fine, "d_th", "$.fine", issues, defaults.d_th, minimum=0),
        "r_th": _number(fine, "r_th", "$.fine", issues, defaults.r_th, minimum=0),
        "candidate_cap": _number(fine, "candidate_cap", "$.fine", issues, defaults.candidate_cap,
                                 minimum=1, integer=True),
        "lattice_limit": _number(fine, "lattice_limit", "$.fine", issues, defaults.lattice_limit,
                                 minimum=0, integer=True),
    }


def _validate_buffer(doc, issues):
    buffer = _section(doc, "buffer", issues)
    defaults = BufferPolicy()
    values = {
        "b_0": _number(buffer, "b_0", "$.buffer", issues, defaults.b_0, minimum=0, strict=True),
        "b_min": _number(buffer, "b_min", "$.buffer", issues, defaults.b_min, minimum=0, strict=True),
        "b_max": _number(buffer, "b_max", "$.buffer", issues, defaults.b_max, minimum=0, strict=True),
    }
    if values["b_min"] >= values["b_max"]:
        issues.append(f"$.buffer: b_min ({values['b_min']}) must be below b_max ({values['b_max']})")
    return values


def validate_document(doc, base_dir="."):
    """Normalize an experiment document, collecting every violation.

    Args:
        doc: parsed JSON document
        base_dir: directory that relative paths in the document are resolved against

    Returns:
        ExperimentConfig with every default filled in

    Raises:
        ConfigError listing each issue with its path into the document
    """
    if not isinstance(doc, dict):
        raise ConfigError(["$: expected a JSON object"])
    issues = [f"$.{key}: unknown field" for key in sorted(set(doc) - TOP_LEVEL_FIELDS)]

    catalog = _validate_catalog(doc, base_dir, issues)
    channel = _validate_channel(doc, base_dir, issues)
    methods = _validate_methods(doc, issues)

    probabilities = doc.get("switch_probabilities", list(config.DEFAULT_SWITCH_PROBABILITIES))
    if not isinstance(probabilities, list) or not probabilities:
        issues.append("$.switch_probabilities: expected a non-empty list")
        probabilities = []
    for i, p in enumerate(probabilities):
        if not _is_number(p) or not 0 <= p <= 1:
            issues.append(f"$.switch_probabilities[{i}]: must be a number in [0, 1], got {p!r}")

    fov = _section(doc, "fov", issues)
    qoe = _section(doc, "qoe", issues)
    qoe_defaults = QoeParams()
    patterns = doc.get("patterns")
    if patterns is not None and not relative_to(patterns, base_dir).is_file():
        issues.append(f"$.patterns: file not found: {patterns}")

    normalized = dict(
        catalog=catalog,
        channel=channel,
        methods=methods,
        switch_probabilities=tuple(float(p) for p in probabilities if _is_number(p)),
        replicates=_number(doc, "replicates", "$", issues, config.DEFAULT_REPLICATES, minimum=1, integer=True),
        seed=_number(doc, "seed", "$", issues, config.DEFAULT_SEED, minimum=0, integer=True),
        segments=_number(doc, "segments", "$", issues, None, minimum=1, integer=True),
        buffer=_validate_buffer(doc, issues),
        throughput_window=_number(doc, "throughput_window", "$", issues, config.THROUGHPUT_WINDOW,
                                  minimum=1, integer=True),
        fov={
            "mu": _number(fov, "mu", "$.fov", issues, config.FOV_MU),
            "sigma2": _number(fov, "sigma2", "$.fov", issues, config.FOV_SIGMA2, minimum=0, strict=True),
        },
        fine=_validate_fine(doc, issues),
        qoe={
            name: _number(qoe, name, "$.qoe", issues, getattr(qoe_defaults, name), minimum=0)
            for name in ("gamma", "delta", "eta", "b_ref")
        },
        d_missing=_number(doc, "d_missing", "$", issues, config.D_MISSING, minimum=0, strict=True),
        patterns=patterns,
        output_dir=str(doc.get("output_dir", config.DEFAULT_OUTPUT_DIR)),
        jobs=_number(doc, "jobs", "$", issues, config.DEFAULT_JOBS, minimum=1, integer=True),
    )
    if issues:
        raise ConfigError(issues)
    return ExperimentConfig(base_dir=str(base_dir), **normalized)


def validate_config(path):
    """Read and normalize the experiment document at `path`."""
    path = Path(path)
    try:
        doc = read_json(path)
    except json.JSONDecodeError as e:
        raise ConfigError([f"$: invalid JSON ({e.msg} at line {e.lineno} column {e.colno})"]) from e
    return validate_document(doc, base_dir=path.parent)


def load_catalog(cfg):
    source = cfg.catalog
    if "path" in source:
        return TileCatalog.load(relative_to(source["path"], cfg.base_dir))
    spec = CatalogSpec.from_dict(source["synthesize"])
    return synthesize_catalog(spec, source.get("seed", cfg.seed))


def _summarize(result):
    df = pd.DataFrame([r.to_dict() for r in result.records])
    return {
        "fov_actual_bitrate_mbps": df["fov_actual_bitrate_kbps"].mean() / 1000.0,
        "fov_avg_psnr": df["fov_avg_psnr"].mean(),
        "fov_psnr_std": df["fov_psnr_std"].mean(),
        "fov_psnr_temporal_diff": df["fov_psnr_temporal_diff"].mean(),
        "f_value": df["f_value"].mean(),
        "qoe": result.qoe,
        "weighted_psnr": df["weighted_psnr"].mean(),
        "actual_bitrate_mbps": df["actual_bitrate_kbps"].mean() / 1000.0,
        "stall_s": df["stall_s"].sum(),
    }


def write_records(path, records, columns):
    """Write per-segment rows with a fixed column order."""
    df = pd.DataFrame([r.to_dict() for r in records], columns=list(columns))
    ensure_dir(Path(path).parent)
    df.to_csv(path, index=False, float_format=config.CSV_FLOAT_FORMAT)
    return path


def run_experiments(cfg, out_dir=None, seed=None, jobs=None):
    """Run every (method, p, replicate) session of the grid and write the results.

    Args:
        cfg: ExperimentConfig from validate_config
        out_dir: overrides cfg.output_dir
        seed: overrides the base seed
        jobs: worker threads; sessions are independent so results do not depend on it

    Returns:
        dict with the paths of the aggregate CSV, the summary JSON and the per-segment CSVs
    """
    out = ensure_dir(relative_to(out_dir or cfg.output_dir, "." if out_dir else cfg.base_dir))
    base_seed = cfg.seed if seed is None else int(seed)
    jobs = jobs or cfg.jobs

    catalog = load_catalog(cfg)
    channel = build_channel(cfg.channel, cfg.base_dir)
    patterns = load_patterns(relative_to(cfg.patterns, cfg.base_dir), catalog.rows, catalog.cols) \
        if cfg.patterns else None
    buffer_policy, fine, qoe_params = cfg.buffer_policy(), cfg.fine_params(), cfg.qoe_params()

    tasks = [(method, p, r) for method in cfg.methods for p in cfg.switch_probabilities
             for r in range(cfg.replicates)]
    logger.info(f"Running {len(tasks)} sessions ({len(cfg.methods)} methods x "
                f"{len(cfg.switch_probabilities)} switch probabilities x {cfg.replicates} replicates) "
                f"with {jobs} worker(s)")

    def run_one(task):
        method, p, replicate = task
        session_seed = replicate_seed(base_seed, replicate)
        session = SessionConfig(
            catalog=catalog,
            channel=channel,
            method=method,
            buffer_policy=buffer_policy,
            throughput_window=cfg.throughput_window,
            fov_mu=cfg.fov["mu"],
            fov_sigma2=cfg.fov["sigma2"],
            p_switch=p,
            fine=fine,
            qoe=qoe_params,
            d_missing=cfg.d_missing,
            seed=session_seed,
            segments=cfg.segments,
            patterns=patterns,
        )
        result = run_session(session)
        name = Path("segments") / f"{method}_{format_p(p)}_r{replicate:02d}.csv"
        write_records(out / name, result.records, METRICS_COLUMNS)
        row = {"method": method, "p_switch": p, "replicate": replicate, "seed": session_seed}
        row.update(_summarize(result))
        row["file"] = name.as_posix()
        return row

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_one, tasks))
    else:
        rows = [run_one(task) for task in tasks]

    replicates = pd.DataFrame(rows)
    replicates.to_csv(out / "replicates.csv", index=False, float_format=config.CSV_FLOAT_FORMAT)
    aggregate = (
        replicates.groupby(["method", "p_switch"], sort=False)[list(SUMMARY_COLUMNS)]
        .mean()
        .reset_index()
    )
    aggregate.to_csv(out / "aggregate.csv", index=False, float_format=config.CSV_FLOAT_FORMAT)
    logger.info(f"Wrote {out / 'aggregate.csv'} with {len(aggregate)} rows")

    summary = {
        "config": cfg.to_dict(),
        "base_seed": base_seed,
        "seeds": [replicate_seed(base_seed, r) for r in range(cfg.replicates)],
        "catalog": {"L": catalog.segments, "N": catalog.tiles, "U": catalog.ladder.levels},
        "aggregate": aggregate.to_dict(orient="records"),
        "runs": replicates[["method", "p_switch", "replicate", "seed", "qoe", "file"]].to_dict(orient="records"),
    }
    write_json(out / "summary.json", summary)
    return {
        "aggregate": out / "aggregate.csv",
        "summary": out / "summary.json",
        "segments": [out / row["file"] for row in rows],
    }


def validate_rate_adaptation_config(path):
    """Read the rate-adaptation document at `path`; missing keys take the defaults."""
    path = Path(path)
    try:
        doc = read_json(path)
    except json.JSONDecodeError as e:
        raise ConfigError([f"$: invalid JSON ({e.msg} at line {e.lineno} column {e.colno})"]) from e
    if not isinstance(doc, dict):
        raise ConfigError(["$: expected a JSON object"])
    issues = []
    defaults = RateAdaptationConfig()
    known = set(asdict(defaults)) - {"base_dir"}
    issues.extend(f"$.{key}: unknown field" for key in sorted(set(doc) - known))
    channel = doc.get("channel", defaults.channel)
    try:
        build_channel(channel, path.parent)
    except (AttributeError, KeyError, TypeError, ValueError, OSError) as e:
        issues.append(f"$.channel: {e}")
    policies = doc.get("policies", list(defaults.policies))
    for i, name in enumerate(policies if isinstance(policies, list) else [policies]):
        if name not in RATE_POLICIES:
            issues.append(f"$.policies[{i}]: unknown policy {name!r}; expected one of {', '.join(RATE_POLICIES)}")
    try:
        QualityLadder(tuple(doc.get("bitrates", defaults.bitrates)))
    except (TypeError, ValueError) as e:
        issues.append(f"$.bitrates: {e}")
    buffer = _validate_buffer({"buffer": {**defaults.buffer, **_section(doc, "buffer", issues)}}, issues)
    values = {
        "tiles": _number(doc, "tiles", "$", issues, defaults.tiles, minimum=1, integer=True),
        "segment_duration": _number(doc, "segment_duration", "$", issues, defaults.segment_duration,
                                    minimum=0, strict=True),
        "throughput_window": _number(doc, "throughput_window", "$", issues, defaults.throughput_window,
                                     minimum=1, integer=True),
        "segments": _number(doc, "segments", "$", issues, defaults.segments, minimum=1, integer=True),
        "seed": _number(doc, "seed", "$", issues, defaults.seed, minimum=0, integer=True),
    }
    if issues:
        raise ConfigError(issues)
    return RateAdaptationConfig(
        channel=dict(channel),
        policies=tuple(policies),
        bitrates=tuple(float(b) for b in doc.get("bitrates", defaults.bitrates)),
        buffer=buffer,
        base_dir=str(path.parent),
        **values,
    )


def run_rate_adaptation_experiment(cfg, out_dir):
    """Run every configured policy on the same channel and write one CSV per policy."""
    out = ensure_dir(out_dir)
    channel = build_channel(cfg.channel, cfg.base_dir)
    ladder = QualityLadder(cfg.bitrates).scaled(cfg.tiles)
    summary = {"config": cfg.to_dict(), "policies": {}}
    for name in cfg.policies:
        result = run_rate_adaptation(
            channel, ladder, name, cfg.buffer_policy(), cfg.segments,
            cfg.segment_duration, cfg.throughput_window, cfg.seed,
        )
        path = write_records(out / f"rate_adaptation_{name}.csv", result.records, RATE_ADAPTATION_COLUMNS)
        df = pd.read_csv(path)
        summary["policies"][name] = {
            "switches": result.switches,
            "mean_bitrate_kbps": float(df["bitrate_kbps"].mean()),
            "mean_buffer_s": float(df["buffer_s"].mean()),
            "total_stall_s": float(df["stall_s"].sum()),
            "file": path.name,
        }
    write_json(out / "rate_adaptation_summary.json", summary)
    return summary
