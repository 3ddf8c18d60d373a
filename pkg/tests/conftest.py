"""Shared fixtures.

Expensive artifacts (the 4096-record datasets, trained posteriors and
the end-to-end CLI pipeline) are memoized under ``tests/_cache``, keyed
by a digest of the source modules they depend on plus their build
parameters, so repeated runs skip the simulation cost while any code
change invalidates exactly the artifacts it can affect.  Delete the
directory to force a full rebuild.
"""

import hashlib
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from ucinfer import dataset as dsm
from ucinfer import npe
from ucinfer.forward import PriorConfig
from ucinfer.system import load_bundled

TESTS = Path(__file__).resolve().parent
CACHE = TESTS / "_cache"
SRC = TESTS.parent / "src" / "ucinfer"

# modules whose bytes determine each artifact kind
_DATASET_MODULES = ("system", "forward", "scuc", "lp", "milp", "_simplex",
                    "_backend", "dataset")
_MODEL_MODULES = _DATASET_MODULES + ("npe", "mdn")
_PIPELINE_MODULES = _MODEL_MODULES + ("diagnostics", "invopt", "cli",
                                      "__init__", "__main__", "errors")


def _source_token(modules) -> str:
    h = hashlib.sha256()
    for m in modules:
        h.update((SRC / f"{m}.py").read_bytes())
    h.update(os.environ.get("UCINFER_DISABLE_NUMBA", "").encode())
    return h.hexdigest()[:16]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@pytest.fixture(scope="session")
def mini3():
    return load_bundled("mini3")


@pytest.fixture(scope="session")
def single():
    return load_bundled("single")


@pytest.fixture(scope="session")
def prior():
    return PriorConfig()


def cached_dataset(name: str, n: int, seed: int) -> dsm.Dataset:
    CACHE.mkdir(exist_ok=True)
    key = f"{name}-n{n}-s{seed}-{_source_token(_DATASET_MODULES)}"
    path = CACHE / f"{key}.ds"
    if not path.exists():
        ds = dsm.generate(load_bundled(name), PriorConfig(), n,
                          base_seed=seed)
        dsm.save(ds, path)
    return dsm.load(path)


@pytest.fixture(scope="session")
def mini3_ds_small():
    """A quick dataset for unit-level checks (seeds disjoint from the
    big pipeline dataset)."""
    return cached_dataset("mini3", 192, 100_000)


@pytest.fixture(scope="session")
def single_ds_small():
    return cached_dataset("single", 192, 100_000)


def run_cli(argv, cwd=None, env_extra=None):
    """Invoke the installed CLI in a subprocess; returns the process."""
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run([sys.executable, "-m", "ucinfer", *argv],
                          capture_output=True, text=True, cwd=cwd, env=env)


def _pipeline_commands(name: str, n: int, out: Path):
    """The full CLI pipeline on a bundled system, in run order."""
    cfg = out / "run.json"
    ds = out / f"{name}.ds"
    model = out / f"{name}.npe"
    cmds = [
        ("validate", ["validate", name]),
        ("dataset", ["dataset", "--config", str(cfg), "--n", str(n),
                     "--seed", "0", "--out", str(ds)]),
        ("train", ["train", "--config", str(cfg), "--seed", "0",
                   "--data", str(ds), "--out", str(model)]),
        ("infer", ["infer", "--config", str(cfg), "--seed", "0",
                   "--model", str(model), "--data", str(ds),
                   "--index", "0", "--n", "4096",
                   "--out", str(out / "corner.csv")]),
        ("coverage", ["coverage", "--config", str(cfg), "--seed", "0",
                      "--model", str(model), "--data", str(ds),
                      "--out", str(out / "coverage.csv")]),
        ("ppc", ["ppc", "--config", str(cfg), "--seed", "0",
                 "--model", str(model), "--data", str(ds),
                 "--index", "1", "--out", str(out / "ppc_band.csv")]),
    ]
    return cfg, cmds


def build_pipeline(name: str, n: int) -> Path:
    """Run (or reuse) the full CLI pipeline; returns its directory."""
    CACHE.mkdir(exist_ok=True)
    key = f"pipeline-{name}-n{n}-{_source_token(_PIPELINE_MODULES)}"
    out = CACHE / key
    done = out / "timings.json"
    if done.exists():
        return out
    out.mkdir(parents=True, exist_ok=True)
    cfg, cmds = _pipeline_commands(name, n, out)
    with open(cfg, "w", encoding="utf-8") as fh:
        json.dump({"system": name, "out_dir": str(out)}, fh)
    timings = {}
    for label, argv in cmds:
        t0 = time.time()
        proc = run_cli(argv)
        timings[label] = round(time.time() - t0, 3)
        if proc.returncode != 0:
            raise RuntimeError(
                f"pipeline step '{label}' failed "
                f"(exit {proc.returncode}):\n{proc.stdout}\n{proc.stderr}")
    with open(done, "w", encoding="utf-8") as fh:
        json.dump(timings, fh, indent=2)
    return out


@pytest.fixture(scope="session")
def mini3_pipeline():
    return build_pipeline("mini3", 4096)


@pytest.fixture(scope="session")
def single_pipeline():
    return build_pipeline("single", 4096)


@pytest.fixture(scope="session")
def mini3_model(mini3_pipeline):
    return npe.load_model(mini3_pipeline / "mini3.npe")


@pytest.fixture(scope="session")
def mini3_ds(mini3_pipeline):
    return dsm.load(mini3_pipeline / "mini3.ds")


@pytest.fixture(scope="session")
def single_model(single_pipeline):
    return npe.load_model(single_pipeline / "single.npe")


@pytest.fixture(scope="session")
def single_ds(single_pipeline):
    return dsm.load(single_pipeline / "single.ds")
