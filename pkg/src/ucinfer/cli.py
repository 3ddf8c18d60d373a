"""Command-line pipeline driver.

Every command resolves a run configuration (built-in defaults, overlaid
by an optional JSON --config document, then by flags), performs one
pipeline stage, and writes a JSON run manifest next to its primary
output: resolved parameters, input and output files with SHA-256
digests, the seed in effect, library versions and wall time.
Re-running a command with the seed recorded in a manifest reproduces
the primary output byte for byte.

Exit codes: 0 success, 1 domain failure (solver, validation, training,
incompatible inputs), 2 usage or parse errors.
"""

import argparse
import hashlib
import json
import platform
import sys
import time

import numpy as np

from . import __version__, diagnostics, npe
from . import dataset as dsm
from .errors import (ConfigError, IncompatibleModelError, SystemParseError,
                     SystemValidationError, UcinferError)
from .forward import MarketOutcome, PriorConfig, prior_rng, sample_prior
from .invopt import estimate as invopt_estimate
from .milp import export_lp_file
from .scuc import build_scuc, full_availability, solve_uc
from .system import (deterministic_demand, instance_hash, load_bundled,
                     load_system, validate)

# command-level substreams, disjoint from the forward model's streams
_STREAM_INFER = 4
_STREAM_COVERAGE = 5
_STREAM_PPC = 6
_STREAM_INVOPT = 7

_DEFAULT_DIAG = {"n_test": 1024, "levels": [0.5, 0.8, 0.9, 0.95],
                 "n_mc": 4096, "ppc_n": 256}
_DEFAULT_INVOPT = {"eps": 1e-6, "max_iter": 100000}


def _load_config(path) -> dict:
    """Built-in defaults overlaid section-wise by the JSON document."""
    cfg = {
        "system": "mini3",
        "seed": 0,
        "out_dir": ".",
        "prior": PriorConfig().to_dict(),
        "train": npe.TrainConfig().to_dict(),
        "invopt": dict(_DEFAULT_INVOPT),
        "diagnostics": dict(_DEFAULT_DIAG),
    }
    if path is None:
        return cfg
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    for key, value in doc.items():
        if key not in cfg:
            raise ConfigError(f"unknown config key '{key}'")
        if isinstance(cfg[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config section '{key}' must be an object")
            for sub, sval in value.items():
                if sub not in cfg[key]:
                    raise ConfigError(f"unknown config key '{key}.{sub}'")
                cfg[key][sub] = sval
        else:
            cfg[key] = value
    return cfg


def _resolve_system(name_or_path):
    """A filesystem path wins; otherwise try the bundled fixtures."""
    import os
    if os.path.exists(name_or_path):
        inst = load_system(name_or_path)
    else:
        inst = load_bundled(name_or_path)
    problems = validate(inst)
    if problems:
        raise SystemParseError("; ".join(problems))
    return inst


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(primary, command, params, inputs, seed, t0,
                    extra=None) -> None:
    doc = {
        "command": command,
        "params": params,
        "seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(primary): _sha256(primary)},
        "versions": {"ucinfer": __version__,
                     "numpy": np.__version__,
                     "python": platform.python_version()},
        "wall_time_s": round(time.time() - t0, 3),
    }
    if extra:
        doc.update(extra)
    with open(str(primary) + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _seed_of(args, cfg) -> int:
    return cfg["seed"] if args.seed is None else args.seed


def _out_of(args, cfg, default_name) -> str:
    import os
    if args.out is not None:
        return args.out
    return os.path.join(cfg["out_dir"], default_name)


def _load_pair(model_path, data_path):
    """Model plus dataset, refusing mismatched instances."""
    model = npe.load_model(model_path)
    ds = dsm.load(data_path)
    if model.instance_hash != ds.meta["instance_hash"]:
        raise IncompatibleModelError(
            "model and dataset were built from different instances")
    return model, ds


def cmd_validate(args) -> int:
    try:
        inst = load_system(args.system) if _is_path(args.system) \
            else load_bundled(args.system)
    except SystemValidationError as exc:
        for p in exc.violations:
            print(p)
        return 1
    except (FileNotFoundError, SystemParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{inst.name}: ok ({inst.n_gens} generators, {inst.n_buses} buses, "
          f"{inst.n_lines} lines, horizon {inst.horizon})")
    return 0


def _is_path(s) -> bool:
    import os
    return os.path.exists(s)


def cmd_dataset(args) -> int:
    cfg = _load_config(args.config)
    if args.n < 1:
        raise ConfigError("--n must be >= 1")
    seed = _seed_of(args, cfg)
    out = _out_of(args, cfg, "dataset.ds")
    inst = _resolve_system(cfg["system"])
    prior = PriorConfig.from_dict(cfg["prior"])
    t0 = time.time()
    print(f"generating {args.n} records on {inst.name} "
          f"(base seed {seed}, jobs {args.jobs}) ...")
    ds = dsm.generate(inst, prior, args.n, base_seed=seed,
                      drop_shed=args.drop_shed, jobs=args.jobs)
    dsm.save(ds, out)
    n_shed = int(np.sum(ds.shed_total > dsm.SHED_TOL))
    print(f"wrote {out}: {len(ds)} records, {n_shed} with shed "
          f"({time.time() - t0:.0f}s)")
    _write_manifest(out, "dataset",
                    {"n": args.n, "drop_shed": args.drop_shed,
                     "system": cfg["system"], "prior": cfg["prior"]},
                    [], seed, t0, extra={"n_shed": n_shed})
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    seed = _seed_of(args, cfg)
    out = _out_of(args, cfg, "model.npe")
    t0 = time.time()
    ds = dsm.load(args.data)
    tdict = dict(cfg["train"])
    tdict["seed"] = seed
    tdict["hidden_sizes"] = tuple(tdict["hidden_sizes"])
    config = npe.TrainConfig(**tdict)
    model = npe.fit(ds, config)
    npe.save_model(model, out)
    log_path = str(out) + ".training.csv"
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_nll,val_nll\n")
        for epoch, tr, va in model.training_log:
            fh.write(f"{epoch},{tr!r},{va!r}\n")
    best = model.training_log[model.best_epoch][2]
    print(f"wrote {out}: best validation NLL {best:.4f} at epoch "
          f"{model.best_epoch} ({len(model.training_log)} epochs, "
          f"{time.time() - t0:.0f}s)")
    _write_manifest(out, "train", {"train": tdict, "data": args.data},
                    [args.data], seed, t0,
                    extra={"best_epoch": model.best_epoch,
                           "best_val_nll": best,
                           "training_log_csv": log_path})
    return 0


def cmd_infer(args) -> int:
    cfg = _load_config(args.config)
    seed = _seed_of(args, cfg)
    out = _out_of(args, cfg, "corner.csv")
    t0 = time.time()
    model, ds = _load_pair(args.model, args.data)
    x = npe.raw_features(ds.dispatch[args.index],
                         ds.startup[args.index].astype(np.float64),
                         ds.demand[args.index])
    theta_star = ds.theta[args.index]
    rng = np.random.default_rng(np.random.SeedSequence([_STREAM_INFER, seed]))
    corner = diagnostics.export_corner(model, x, theta_star, None, args.n,
                                       out, rng=rng)
    mean = corner.samples.mean(axis=0)
    std = corner.samples.std(axis=0)
    J = theta_star.size // 2
    for j in range(J):
        print(f"gen {j}: c = {mean[j]:.2f} +- {std[j]:.2f} "
              f"(true {theta_star[j]:.2f}), "
              f"s = {mean[J + j]:.0f} +- {std[J + j]:.0f} "
              f"(true {theta_star[J + j]:.0f})")
    _write_manifest(out, "infer",
                    {"model": args.model, "data": args.data,
                     "index": args.index, "n": args.n},
                    [args.model, args.data], seed, t0,
                    extra={"posterior_mean": mean.tolist(),
                           "posterior_std": std.tolist()})
    return 0


def cmd_invopt(args) -> int:
    cfg = _load_config(args.config)
    seed = _seed_of(args, cfg)
    out = _out_of(args, cfg, "invopt.json")
    t0 = time.time()
    inst = _resolve_system(cfg["system"])
    prior = PriorConfig.from_dict(cfg["prior"])
    inputs = []
    if args.deterministic:
        # closed-loop self-check: a noise-free observation at a prior draw
        theta = sample_prior(prior, inst.n_gens, prior_rng(seed))
        demand = deterministic_demand(inst.load)
        sched = solve_uc(inst, theta, full_availability(inst), demand)
        x_obs = MarketOutcome(schedule=sched, demand=demand)
        theta_star = theta.as_vector().tolist()
    else:
        if args.data is None:
            raise ConfigError("invopt needs --data or --deterministic")
        ds = dsm.load(args.data)
        if ds.meta["instance_hash"] != instance_hash(inst):
            raise IncompatibleModelError(
                "dataset was built from a different instance")
        x_obs = ds.outcome(args.index)
        theta_star = ds.theta[args.index].tolist()
        inputs.append(args.data)
    rng = np.random.default_rng(
        np.random.SeedSequence([_STREAM_INVOPT, seed]))
    res = invopt_estimate(inst, x_obs, prior,
                          eps=float(cfg["invopt"]["eps"]),
                          max_iter=int(cfg["invopt"]["max_iter"]), rng=rng)
    doc = {"theta_hat": res.theta_hat.as_vector().tolist(),
           "theta_star": theta_star,
           "iterations": res.iterations,
           "final_violation": res.final_violation,
           "converged": res.converged}
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out}: converged={res.converged} "
          f"after {res.iterations} iterations")
    _write_manifest(out, "invopt",
                    {"deterministic": args.deterministic,
                     "data": args.data, "index": args.index,
                     "invopt": cfg["invopt"], "system": cfg["system"]},
                    inputs, seed, t0, extra={"converged": res.converged})
    return 0


def cmd_coverage(args) -> int:
    cfg = _load_config(args.config)
    seed = _seed_of(args, cfg)
    out = _out_of(args, cfg, "coverage.csv")
    diag = cfg["diagnostics"]
    n_test = diag["n_test"] if args.n_test is None else args.n_test
    t0 = time.time()
    model, ds = _load_pair(args.model, args.data)
    rng = np.random.default_rng(
        np.random.SeedSequence([_STREAM_COVERAGE, seed]))
    curve = diagnostics.expected_coverage(
        model, None, PriorConfig.from_dict(model.prior), n_test,
        levels=diag["levels"], rng=rng, dataset=ds, n_mc=diag["n_mc"])
    curve.save_csv(out)
    for lv, emp, se in zip(curve.levels, curve.empirical, curve.stderr):
        print(f"level {lv:.2f}: empirical {emp:.3f} +- {se:.3f}")
    _write_manifest(out, "coverage",
                    {"model": args.model, "data": args.data,
                     "n_test": n_test, "levels": list(diag["levels"]),
                     "n_mc": diag["n_mc"]},
                    [args.model, args.data], seed, t0,
                    extra={"empirical": curve.empirical.tolist()})
    return 0


def cmd_ppc(args) -> int:
    cfg = _load_config(args.config)
    seed = _seed_of(args, cfg)
    out = _out_of(args, cfg, "ppc_band.csv")
    diag = cfg["diagnostics"]
    n = diag["ppc_n"] if args.n is None else args.n
    t0 = time.time()
    inst = _resolve_system(cfg["system"])
    model, ds = _load_pair(args.model, args.data)
    if model.instance_hash != instance_hash(inst):
        raise IncompatibleModelError(
            "model was trained on a different instance")
    x = npe.raw_features(ds.dispatch[args.index],
                         ds.startup[args.index].astype(np.float64),
                         ds.demand[args.index])
    rng = np.random.default_rng(np.random.SeedSequence([_STREAM_PPC, seed]))
    band = diagnostics.posterior_predictive(
        model, inst, PriorConfig.from_dict(model.prior), x, n=n, rng=rng)
    band.save_csv(out)
    frac = band.contains_fraction(ds.dispatch[args.index])
    print(f"wrote {out}: observed dispatch inside the outer band for "
          f"{frac:.1%} of cells ({time.time() - t0:.0f}s)")
    _write_manifest(out, "ppc",
                    {"model": args.model, "data": args.data,
                     "index": args.index, "n": n, "system": cfg["system"]},
                    [args.model, args.data], seed, t0,
                    extra={"contains_fraction": frac})
    return 0


def cmd_export_lp(args) -> int:
    cfg = _load_config(args.config)
    seed = _seed_of(args, cfg)
    out = _out_of(args, cfg, "scuc.lp")
    t0 = time.time()
    inst = _resolve_system(cfg["system"])
    prior = PriorConfig.from_dict(cfg["prior"])
    theta = sample_prior(prior, inst.n_gens, prior_rng(seed))
    demand = deterministic_demand(inst.load)
    milp, _ = build_scuc(inst, theta, full_availability(inst), demand)
    export_lp_file(milp, out)
    print(f"wrote {out}: {milp.lp.n_rows} rows, {milp.lp.n_vars} columns, "
          f"{milp.binary.size} binaries")
    _write_manifest(out, "export-lp", {"system": cfg["system"]},
                    [], seed, t0)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="ucinfer",
        description="Cost-parameter inference from day-ahead "
                    "unit-commitment schedules.")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, jobs=False):
        p.add_argument("--config", default=None,
                       help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="primary output path")
        if jobs:
            p.add_argument("--jobs", type=int, default=1,
                           help="worker processes")

    p = sub.add_parser("validate", help="structural checks on a system file")
    p.add_argument("system", help="path or bundled name")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("dataset", help="simulate a training dataset")
    common(p, jobs=True)
    p.add_argument("--n", type=int, required=True, help="record count")
    p.add_argument("--drop-shed", action="store_true",
                   help="drop records with load shedding")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="fit the posterior network")
    common(p)
    p.add_argument("--data", required=True, help="dataset file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="posterior samples for one record")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0, help="record to explain")
    p.add_argument("--n", type=int, default=4096, help="posterior draws")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("invopt", help="polar-cone inverse optimization")
    common(p)
    p.add_argument("--data", default=None, help="dataset file")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--deterministic", action="store_true",
                   help="noise-free closed-loop self-check")
    p.set_defaults(func=cmd_invopt)

    p = sub.add_parser("coverage", help="empirical HPD coverage curve")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--n-test", type=int, default=None)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("ppc", help="posterior predictive dispatch band")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--n", type=int, default=None, help="posterior draws")
    p.set_defaults(func=cmd_ppc)

    p = sub.add_parser("export-lp", help="write the SCUC in LP format")
    common(p)
    p.set_defaults(func=cmd_export_lp)

    return top


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SystemParseError, json.JSONDecodeError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except UcinferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
