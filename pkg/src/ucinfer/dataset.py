"""Dataset generation and the packed on-disk format.

A dataset file is a single JSON header line followed by fixed-width
binary records (little-endian, see docs/formats.md).  Each record holds
the true costs, the observable outcome (dispatch, start-up indicators,
demand), the total shed energy and the record seed; everything else
about the day can be regenerated from (instance, prior, seed).

Record i of a run depends only on base_seed + i, so generation can fan
out across worker processes and still assemble a byte-identical file
for any worker count.
"""

import json
import multiprocessing
import os

import numpy as np

from .errors import DatasetFormatError
from .forward import MarketOutcome, PriorConfig, sample_prior, prior_rng, \
    simulate
from .scuc import Schedule
from .system import UcInstance, instance_hash

FORMAT_NAME = "ucinfer-dataset"
FORMAT_VERSION = 1

# shed above this total (MWh over the day) marks a record as degenerate
SHED_TOL = 1e-6


def record_dtype(T: int, J: int, N: int) -> np.dtype:
    """The packed per-record layout for a system of the given shape."""
    return np.dtype([
        ("theta_c", "<f8", (J,)),
        ("theta_s", "<f8", (J,)),
        ("dispatch", "<f8", (T, J)),
        ("startup", "u1", (T, J)),
        ("demand", "<f8", (T, N)),
        ("shed_total", "<f8"),
        ("seed", "<u8"),
    ])


class Dataset:
    """In-memory view of a generated dataset: header dict + record array."""

    def __init__(self, meta: dict, records: np.ndarray):
        self.meta = meta
        self.records = records

    def __len__(self):
        return len(self.records)

    @property
    def theta(self) -> np.ndarray:
        """(n, 2J) true parameters, marginal costs first."""
        return np.concatenate(
            [self.records["theta_c"], self.records["theta_s"]], axis=1)

    @property
    def dispatch(self) -> np.ndarray:
        return self.records["dispatch"]

    @property
    def startup(self) -> np.ndarray:
        return self.records["startup"]

    @property
    def demand(self) -> np.ndarray:
        return self.records["demand"]

    @property
    def shed_total(self) -> np.ndarray:
        return self.records["shed_total"]

    @property
    def seeds(self) -> np.ndarray:
        return self.records["seed"]

    def outcome(self, i: int) -> MarketOutcome:
        """Record i as a market outcome for downstream consumers.

        Only what the record stores is real: dispatch, start-ups and
        demand.  Commitment is recovered from dispatch (minimum output
        is strictly positive when a unit is on); network quantities and
        shutdowns are zeroed and total_cost is NaN.
        """
        rec = self.records[i]
        dispatch = rec["dispatch"]
        T, J = dispatch.shape
        N = rec["demand"].shape[1]
        sched = Schedule(
            dispatch=dispatch.copy(),
            commitment=(dispatch > 0).astype(np.int8),
            startup=rec["startup"].astype(np.int8),
            shutdown=np.zeros((T, J), dtype=np.int8),
            angles=np.zeros((T, N)),
            flows=np.zeros((T, 0)),
            shed=np.zeros((T, N)),
            total_cost=float("nan"))
        return MarketOutcome(schedule=sched, demand=rec["demand"].copy())


def _make_record(inst: UcInstance, prior: PriorConfig, seed: int,
                 dtype: np.dtype) -> np.ndarray:
    theta = sample_prior(prior, inst.n_gens, prior_rng(seed))
    out = simulate(inst, theta, prior, seed)
    rec = np.zeros(1, dtype=dtype)
    rec["theta_c"][0] = theta.marginal
    rec["theta_s"][0] = theta.startup
    rec["dispatch"][0] = out.schedule.dispatch
    rec["startup"][0] = out.schedule.startup
    rec["demand"][0] = out.demand
    rec["shed_total"][0] = float(out.schedule.shed.sum())
    rec["seed"][0] = seed
    return rec


_WORKER_STATE: dict = {}


def _worker_init(inst, prior, dtype):
    _WORKER_STATE["args"] = (inst, prior, dtype)


def _worker_chunk(seeds):
    inst, prior, dtype = _WORKER_STATE["args"]
    out = np.zeros(len(seeds), dtype=dtype)
    for k, seed in enumerate(seeds):
        out[k] = _make_record(inst, prior, int(seed), dtype)[0]
    return out


def generate(inst: UcInstance, prior: PriorConfig, n: int, base_seed: int,
             drop_shed: bool = False, jobs: int = 1) -> Dataset:
    """Simulate n records with seeds base_seed .. base_seed + n - 1.

    With drop_shed, records whose total shed exceeds SHED_TOL are
    filtered out after generation (the seed range is not refilled, so
    the output may hold fewer than n records).  Output is independent
    of ``jobs``.
    """
    prior.validate()
    if n < 1:
        raise ValueError("n must be >= 1")
    T, J, N = inst.horizon, inst.n_gens, inst.n_buses
    dtype = record_dtype(T, J, N)
    seeds = np.arange(base_seed, base_seed + n, dtype=np.uint64)

    if jobs > 1 and n > 1 and "fork" in multiprocessing.get_all_start_methods():
        chunks = np.array_split(seeds, min(jobs * 4, n))
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(jobs, initializer=_worker_init,
                      initargs=(inst, prior, dtype)) as pool:
            parts = pool.map(_worker_chunk, chunks)
        records = np.concatenate(parts)
    else:
        _worker_init(inst, prior, dtype)
        records = _worker_chunk(seeds)

    if drop_shed:
        records = records[records["shed_total"] <= SHED_TOL]

    meta = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "instance": inst.name,
        "instance_hash": instance_hash(inst),
        "horizon": T,
        "n_gens": J,
        "n_buses": N,
        "n_records": int(len(records)),
        "base_seed": int(base_seed),
        "n_requested": int(n),
        "drop_shed": bool(drop_shed),
        "prior": prior.to_dict(),
    }
    return Dataset(meta, records)


def save(ds: Dataset, path) -> None:
    header = json.dumps(ds.meta, sort_keys=True,
                        separators=(",", ":")) + "\n"
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(header.encode("utf-8"))
        f.write(ds.records.tobytes())
    os.replace(tmp, path)


def load(path) -> Dataset:
    with open(path, "rb") as f:
        header = f.readline()
        body = f.read()
    try:
        meta = json.loads(header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"unreadable dataset header: {exc}")
    if meta.get("format") != FORMAT_NAME:
        raise DatasetFormatError(
            f"not a dataset file (format={meta.get('format')!r})")
    if meta.get("version") != FORMAT_VERSION:
        raise DatasetFormatError(
            f"unsupported dataset version {meta.get('version')!r}")
    dtype = record_dtype(meta["horizon"], meta["n_gens"], meta["n_buses"])
    if len(body) != meta["n_records"] * dtype.itemsize:
        raise DatasetFormatError(
            f"dataset body holds {len(body)} bytes, expected "
            f"{meta['n_records']} records of {dtype.itemsize} bytes")
    records = np.frombuffer(body, dtype=dtype).copy()
    return Dataset(meta, records)
