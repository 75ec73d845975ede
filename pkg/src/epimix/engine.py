"""Parallel sweep scheduling and the shared chain-driving loop.

Blocks own their random streams (keyed by block index, not worker), so the
merged state after a parallel stage is identical to sequential execution in
block order regardless of worker count or scheduling. Central stages run on
the driver thread at a barrier.
"""

from __future__ import annotations

import multiprocessing as mp
import pickle
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import EpimixError
from .output import ChainOutput, SampleBuffer

__all__ = ["plan_schedule", "BlockPool", "parallel_sweep", "run_chain",
           "save_checkpoint", "load_checkpoint"]


def plan_schedule(costs, workers: int) -> list[list[int]]:
    """Longest-processing-time assignment of block indices to workers.

    `costs` is a sequence of per-block cost estimates. Deterministic: ties are
    broken by block index and then by worker index.
    """
    if workers < 1:
        raise EpimixError("workers must be >= 1")
    costs = np.asarray(costs, dtype=float)
    order = sorted(range(costs.size), key=lambda b: (-costs[b], b))
    loads = [0.0] * workers
    assignment: list[list[int]] = [[] for _ in range(workers)]
    for b in order:
        w = min(range(workers), key=lambda i: (loads[i], i))
        assignment[w].append(b)
        loads[w] += costs[b]
    return assignment


def _run_chunk(fn, chunk):
    # one task per worker: (index, payload) pairs processed in block order
    return [(idx, fn(payload)) for idx, payload in chunk]


class BlockPool:
    """Executes per-block updates, inline for one worker or on a process pool.

    The pool is persistent across sweeps; tasks are chunked per worker to
    bound dispatch overhead.
    """

    def __init__(self, workers: int = 1):
        self.workers = int(workers)
        self._executor = None
        if self.workers > 1:
            ctx = mp.get_context("fork")
            self._executor = ProcessPoolExecutor(self.workers, mp_context=ctx)

    def map_blocks(self, fn, payloads, costs=None):
        """Apply `fn` to each payload; returns results in payload order.

        The merged result is independent of worker count because payloads
        carry their own random streams.
        """
        items = list(enumerate(payloads))
        if self._executor is None:
            return [fn(p) for _, p in items]
        if costs is None:
            costs = [1.0] * len(items)
        schedule = plan_schedule(costs, self.workers)
        futures = []
        for chunk_ids in schedule:
            chunk = [items[b] for b in sorted(chunk_ids)]
            if chunk:
                futures.append(self._executor.submit(_run_chunk, fn, chunk))
        results: dict[int, object] = {}
        failure = None
        for fut in futures:
            exc = fut.exception()
            if exc is not None:
                failure = exc
                continue
            for idx, res in fut.result():
                results[idx] = res
        if failure is not None:
            raise EpimixError(f"sweep aborted, partial state discarded: {failure}")
        return [results[i] for i in range(len(items))]

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def parallel_sweep(fn, payloads, pool: BlockPool, costs=None):
    """One parallel-block stage; merged results ordered by block index."""
    return pool.map_blocks(fn, payloads, costs=costs)


def save_checkpoint(path, sweep_idx, state, buffer_state, extra=None) -> None:
    blob = {"sweep": sweep_idx, "state": state, "buffer": buffer_state,
            "extra": extra or {}}
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        pickle.dump(blob, fh, protocol=pickle.HIGHEST_PROTOCOL)
    tmp.replace(path)


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        return pickle.load(fh)


def run_chain(model, ds, cfg, pool: BlockPool | None = None,
              checkpoint_dir=None, resume_from=None) -> ChainOutput:
    """Drive a model's sweeps: burn-in tuning, thinning, checkpoints, and
    ChainOutput assembly. `model` supplies init/sweep/record/log_joint and
    per-sweep diagnostics names.
    """
    own_pool = pool is None
    if own_pool:
        pool = BlockPool(cfg.workers)
    model.prepare(ds, cfg)
    start_sweep = 0
    if resume_from is not None:
        blob = load_checkpoint(resume_from)
        state = blob["state"]
        start_sweep = blob["sweep"]
        buffer = blob["buffer"]
        sweep_stats = blob["extra"]["sweep_stats"]
        stage_seconds = blob["extra"]["stage_seconds"]
    else:
        state = model.init(ds, cfg)
        buffer = SampleBuffer(cfg.n_retained)
        sweep_stats = {name: np.zeros(cfg.iterations) for name in model.stat_names}
        stage_seconds = {"parallel": 0.0, "central": 0.0, "record": 0.0}

    joint_gap = 0.0
    try:
        for t in range(start_sweep, cfg.iterations):
            t0 = time.perf_counter()
            diag = model.sweep(state, ds, cfg, pool, t)
            t1 = time.perf_counter()
            stage_seconds["parallel"] += diag.pop("_parallel_seconds", t1 - t0)
            stage_seconds["central"] += diag.pop("_central_seconds", 0.0)
            if t < cfg.burnin:
                model.tune(state, diag)
            elif t == cfg.burnin:
                model.freeze_tuning(state)
            for name in model.stat_names:
                sweep_stats[name][t] = diag.get(name, np.nan)
            if (cfg.log_joint_check_interval
                    and (t + 1) % cfg.log_joint_check_interval == 0
                    and "log_joint" in diag):
                fresh = model.log_joint(state, ds, cfg)
                joint_gap = max(joint_gap, abs(fresh - diag["log_joint"]))
            keep = (t >= cfg.burnin
                    and (t + 1 - cfg.burnin) % cfg.thinning == 0)
            if keep:
                r0 = time.perf_counter()
                buffer.append(model.record(state, ds, cfg))
                stage_seconds["record"] += time.perf_counter() - r0
            if (checkpoint_dir is not None
                    and cfg.checkpoint_interval
                    and (t + 1) % cfg.checkpoint_interval == 0):
                save_checkpoint(
                    Path(checkpoint_dir) / "checkpoint.pkl", t + 1, state,
                    buffer, {"sweep_stats": sweep_stats,
                             "stage_seconds": stage_seconds},
                )
    finally:
        if own_pool:
            pool.close()

    acceptance = model.acceptance_rates(state, sweep_stats, cfg)
    samples = buffer.arrays()
    return ChainOutput(
        model=cfg.model,
        samples=samples,
        sweep_stats={**sweep_stats, "log_joint_check_gap":
                     np.full(cfg.iterations, joint_gap)},
        acceptance=acceptance,
        stage_seconds=stage_seconds,
        config=cfg.to_dict(),
        iterations=cfg.iterations,
        burnin=cfg.burnin,
        thinning=cfg.thinning,
        group_sizes=(ds.group_size(0), ds.group_size(1)),
        gene_loci=[int(l.size) for l in ds.gene_loci],
    )
