"""Timing and memory benchmark of the structural pipeline on the tank cascade."""

from __future__ import annotations

import csv
import io
import time
import tracemalloc
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from typing import Iterable, Optional, TextIO

from .jacobian import system_jacobian
from .language import parse_model
from .prolong import prolong
from .sigma import (
    compute_offsets,
    degrees_of_freedom,
    signature_matrix,
    solve_hvt,
    structural_index,
)
from .tanks import TankSpec, tank_model_text

PHASES = ("parse", "sigma", "hvt", "offsets", "prolong", "jacobian")


@dataclass(frozen=True)
class BenchRecord:
    k: int
    parse_s: float
    sigma_s: float
    hvt_s: float
    offsets_s: float
    prolong_s: float
    jacobian_s: float
    bytes: int  # peak traced allocation, 0 when not measured
    M: int
    N: int
    index: int
    dof: int

    @property
    def total_s(self) -> float:
        return sum(getattr(self, f"{p}_s") for p in PHASES)


CSV_HEADER = [f.name for f in fields(BenchRecord)]


def _pipeline(k: int, clock) -> tuple[list[float], tuple]:
    text = tank_model_text(TankSpec(k, "b"))
    t0 = clock()
    model = parse_model(text)
    t1 = clock()
    sigma = signature_matrix(model)
    t2 = clock()
    hvt = solve_hvt(sigma)
    t3 = clock()
    offsets = compute_offsets(sigma, hvt)
    t4 = clock()
    system = prolong(model, offsets)
    t5 = clock()
    system_jacobian(model, offsets)
    t6 = clock()
    times = [t1 - t0, t2 - t1, t3 - t2, t4 - t3, t5 - t4, t6 - t5]
    structure = (system.M, system.N, structural_index(offsets), degrees_of_freedom(offsets))
    return times, structure


def _peak_bytes(k: int) -> int:
    # Separate pass: tracing slows allocation-heavy code several-fold and
    # would distort the timings.
    tracemalloc.start()
    try:
        _pipeline(k, time.perf_counter)
        return tracemalloc.get_traced_memory()[1]
    finally:
        tracemalloc.stop()


def bench_one(k: int, memory: bool = True) -> BenchRecord:
    times, (M, N, index, dof) = _pipeline(k, time.perf_counter)
    peak = _peak_bytes(k) if memory else 0
    return BenchRecord(k, *times, peak, M, N, index, dof)


def run_benchmark(
    ks: Iterable[int],
    memory: bool = True,
    parallel: Optional[int] = None,
) -> list[BenchRecord]:
    """One record per k, in the given order.  With ``parallel`` the k values
    run in that many worker processes and timings are not comparable."""
    ks = list(ks)
    if any(k < 1 for k in ks):
        raise ValueError("tank counts must be positive")
    if parallel and len(ks) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(bench_one, ks, [memory] * len(ks)))
    return [bench_one(k, memory) for k in ks]


def k_range(k_min: int, k_max: int, step: int = 1) -> range:
    if step < 1:
        raise ValueError("step must be positive")
    return range(k_min, k_max + 1, step)


def write_csv(records: Iterable[BenchRecord], out: TextIO, parallel: bool = False) -> None:
    if parallel:
        out.write("# parallel run: timings are not comparable\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        row = list(astuple(r))
        for i, name in enumerate(CSV_HEADER):
            if name.endswith("_s"):
                row[i] = f"{row[i]:.6f}"
        writer.writerow(row)


def to_csv(records: Iterable[BenchRecord], parallel: bool = False) -> str:
    buf = io.StringIO()
    write_csv(records, buf, parallel)
    return buf.getvalue()
