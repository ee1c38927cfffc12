"""Stage functions behind the command-line interface.

Each stage is a pure function of the configuration and its inputs, seed included;
random streams are derived from ``(seed, stage name, index)``.
"""

from __future__ import annotations

import math
import platform
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .analysis import analyze, fit_phase_rotation
from .channels import ReleaseSchedule, losses_at, store
from .config import ExperimentConfig
from .fock import DensityMatrix
from .homodyne import QuadratureBatch, sample_plan
from .io import (
    read_density,
    read_samples,
    report_to_text,
    atomic_write,
    sha256_file,
    write_density,
    write_manifest,
    write_samples,
)
from .source import herald_single_click, mix_fake_counts
from .tomography import Diagnostics, bootstrap, mle_reconstruct


@dataclass
class StageResult:
    outputs: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


@contextmanager
def _timed(result: StageResult, name: str):
    start = time.perf_counter()
    yield
    result.timings[name] = time.perf_counter() - start


def versions() -> dict:
    return {"dualrail": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def manifest(stage: str, cfg: ExperimentConfig, inputs: Sequence[Path], result: StageResult) -> dict:
    return {
        "stage": stage,
        "config_hash": cfg.hash(),
        "config": {k: v for k, v in cfg.items()},
        "inputs": {str(Path(p).name): sha256_file(p) for p in inputs},
        "outputs": {str(Path(p).name): sha256_file(p) for p in result.outputs.values()},
        "info": result.info,
        "versions": versions(),
        "timings": result.timings,
    }


def _finish(stage: str, cfg: ExperimentConfig, out_dir: Path, inputs, result: StageResult) -> StageResult:
    path = write_manifest(out_dir / f"manifest_{stage}.json", manifest(stage, cfg, inputs, result))
    result.outputs["manifest"] = path
    return result


def ns_label(t: float) -> str:
    return f"{int(round(t * 1e9))}ns"


# -- pure computations ----------------------------------------------------------

def generate_state(cfg: ExperimentConfig) -> tuple[DensityMatrix, dict]:
    psi, prob = herald_single_click(cfg.source_params())
    fake = cfg.fake_params()
    rho = mix_fake_counts(psi.to_density(), fake)
    info = {
        "herald_probability": prob,
        "l_fake": fake.l_fake,
        "herald_rate_raw_cps": cfg.herald_rate,
        "herald_rate_duty_corrected_cps": cfg.herald_rate / cfg.duty_cycle,
        "fake_rate_cps": cfg.fake_rate,
    }
    return rho, info


def store_state(rho: DensityMatrix, cfg: ExperimentConfig, t1: float, t2: float) -> tuple[DensityMatrix, dict]:
    d1, d2 = cfg.decay_models()
    losses = losses_at(d1, d2, t1, t2)
    schedule = ReleaseSchedule(t1, t2, 2.0 * math.pi * cfg.detuning_hz)
    out = store(rho, losses, cfg.dephasing(), schedule)
    info = {"t1_s": t1, "t2_s": t2, "delay_s": schedule.delay, "l1": losses.l1, "l2": losses.l2,
            "relative_phase_shift_rad": schedule.relative_phase_shift}
    return out, info


def measure_state(rho: DensityMatrix, cfg: ExperimentConfig, stream: int = 0) -> list[QuadratureBatch]:
    plan = cfg.plan()
    return sample_plan(rho, plan.bases, plan.samples_per_basis,
                       cfg.seed, stage=f"measure/{stream}", workers=cfg.workers)


def reconstruct_state(batches: Sequence[QuadratureBatch], cfg: ExperimentConfig) -> tuple[DensityMatrix, Diagnostics]:
    return mle_reconstruct(batches, cfg.plan())


def analysis_items(matrices: Sequence[DensityMatrix], cfg: ExperimentConfig,
                   delays: Optional[Sequence[float]] = None,
                   samples: Optional[Sequence[QuadratureBatch]] = None) -> list[tuple[str, object]]:
    items: list[tuple[str, object]] = []
    for i, rho in enumerate(matrices):
        rep = analyze(rho)
        if samples is not None and cfg.bootstrap_resamples and i == 0:
            boot = bootstrap(samples, cfg.plan(), cfg.bootstrap_resamples, cfg.seed,
                             workers=cfg.workers, point_estimate=rho)
            rep.errors = {k: v for k, v in boot.std.items()}
        prefix = "" if len(matrices) == 1 else f"s{i}."
        items += [(prefix + k, v) for k, v in rep.items()]
    if delays is not None:
        if len(delays) != len(matrices):
            raise ValueError("one delay per matrix is required")
        items.append(("rotation_frequency_hz", fit_phase_rotation(list(zip(delays, matrices)))))
    return items


# -- file-level stages --------------------------------------------------------------

def cmd_generate(cfg: ExperimentConfig, out_dir: Path) -> StageResult:
    res = StageResult()
    with _timed(res, "generate"):
        rho, res.info = generate_state(cfg)
    res.outputs["state"] = write_density(out_dir / "generated.dm", rho)
    return _finish("generate", cfg, out_dir, [], res)


def cmd_store(state_path: Path, cfg: ExperimentConfig, out_dir: Path,
              pairs: Sequence[tuple[float, float]]) -> StageResult:
    rho = read_density(state_path)
    res = StageResult()
    runs = []
    for t1, t2 in pairs:
        with _timed(res, f"store_{ns_label(t1)}_{ns_label(t2)}"):
            out, info = store_state(rho, cfg, t1, t2)
        name = f"stored_{ns_label(t1)}_{ns_label(t2)}"
        res.outputs[name] = write_density(out_dir / f"{name}.dm", out)
        runs.append({"file": f"{name}.dm", **info})
    res.info = {"runs": runs}
    return _finish("store", cfg, out_dir, [state_path], res)


def cmd_measure(state_path: Path, cfg: ExperimentConfig, out_dir: Path, stream: int = 0) -> StageResult:
    rho = read_density(state_path)
    res = StageResult()
    with _timed(res, "measure"):
        batches = measure_state(rho, cfg, stream)
    stem = Path(state_path).stem
    res.outputs["samples"] = write_samples(out_dir / f"{stem}.samples.txt", batches)
    res.info = {"bases": len(batches), "samples_per_basis": cfg.samples_per_basis, "stream": stream}
    return _finish(f"measure_{stem}", cfg, out_dir, [state_path], res)


def cmd_reconstruct(samples_path: Path, cfg: ExperimentConfig, out_dir: Path) -> StageResult:
    batches = read_samples(samples_path)
    res = StageResult()
    with _timed(res, "reconstruct"):
        rho, diag = reconstruct_state(batches, cfg)
    stem = Path(samples_path).name.removesuffix(".samples.txt")
    res.outputs["state"] = write_density(out_dir / f"{stem}.reconstructed.dm", rho)
    res.info = {"iterations": diag.iterations, "converged": diag.converged,
                "final_update_norm": diag.update_norm, "diluted": diag.diluted,
                "loglik_first": diag.loglik[0], "loglik_last": diag.loglik[-1]}
    return _finish(f"reconstruct_{stem}", cfg, out_dir, [samples_path], res)


def cmd_analyze(matrix_paths: Sequence[Path], cfg: ExperimentConfig, out_dir: Path,
                delays: Optional[Sequence[float]] = None,
                samples_path: Optional[Path] = None, name: Optional[str] = None) -> StageResult:
    matrices = [read_density(p) for p in matrix_paths]
    samples = read_samples(samples_path) if samples_path is not None else None
    res = StageResult()
    with _timed(res, "analyze"):
        items = analysis_items(matrices, cfg, delays, samples)
    name = name or Path(matrix_paths[0]).name.removesuffix(".dm")
    res.outputs["report"] = atomic_write(out_dir / f"{name}.report.txt", report_to_text(items))
    inputs = list(matrix_paths) + ([samples_path] if samples_path is not None else [])
    return _finish(f"analyze_{name}", cfg, out_dir, inputs, res)


def cmd_pipeline(cfg: ExperimentConfig, out_dir: Path) -> dict:
    """generate -> store -> measure -> reconstruct -> analyze for the configured release times."""
    out_dir = Path(out_dir)
    gen = cmd_generate(cfg, out_dir)
    sto = cmd_store(gen.outputs["state"], cfg, out_dir, [(cfg.t1, cfg.t2)])
    stored = next(p for k, p in sto.outputs.items() if k.startswith("stored_"))
    mea = cmd_measure(stored, cfg, out_dir)
    rec = cmd_reconstruct(mea.outputs["samples"], cfg, out_dir)
    ana = cmd_analyze([rec.outputs["state"]], cfg, out_dir,
                      samples_path=mea.outputs["samples"] if cfg.bootstrap_resamples else None)
    stages = {"generate": gen, "store": sto, "measure": mea, "reconstruct": rec, "analyze": ana}
    summary = {
        "config_hash": cfg.hash(),
        "versions": versions(),
        "stages": {k: {n: str(Path(p).name) for n, p in v.outputs.items()} for k, v in stages.items()},
        "timings": {k: v.timings for k, v in stages.items()},
    }
    write_manifest(out_dir / "manifest.json", summary)
    return stages
