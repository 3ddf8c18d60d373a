"""Power system description: buses, lines, generators, load model.

Systems are stored as JSON documents (conventionally ``.sys`` files);
see ``docs/formats.md`` for the schema.  Three fixtures ship with the
package: ``mini3`` (3 buses / 3 lines / 3 generators, 8 periods, the
desk-scale workhorse), ``single`` (one bus, one generator) and
``rts96_shaped`` (24 buses / 38 lines / 12 generators, 24 periods, with
synthetic parameter values).
"""

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import SystemParseError, SystemValidationError


@dataclass(frozen=True)
class Bus:
    index: int
    name: str


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    susceptance: float
    thermal_limit: float


@dataclass(frozen=True)
class Generator:
    bus: int
    g_min: float
    g_max: float
    ramp_up: float
    ramp_down: float
    min_up: int
    min_down: int
    v_init: int                 # committed before the first period?
    g_init: float               # output before the first period


@dataclass(frozen=True)
class LoadModel:
    base_profile: np.ndarray    # (T,) system load per period
    shares: np.ndarray          # (T, N) per-bus split, rows sum to 1
    sigma_load: float           # relative std of the system-level factor
    sigma_share: float          # absolute std of the share perturbation


@dataclass(frozen=True)
class UcInstance:
    name: str
    horizon: int
    slack_bus: int
    buses: tuple
    lines: tuple
    generators: tuple
    load: LoadModel

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def n_gens(self) -> int:
        return len(self.generators)


def _require(obj, key, where):
    if key not in obj:
        raise SystemParseError(f"{where}: missing required field '{key}'")
    return obj[key]


def load_system(path_or_file) -> UcInstance:
    """Parse and validate a system file; raises on the first parse
    problem and collects all validation violations."""
    if hasattr(path_or_file, "read"):
        raw = path_or_file.read()
    else:
        with open(path_or_file, "r", encoding="utf-8") as fh:
            raw = fh.read()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SystemParseError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SystemParseError("top level must be a JSON object")

    name = str(doc.get("name", "unnamed"))
    horizon = int(_require(doc, "horizon", "system"))
    slack = int(_require(doc, "slack_bus", "system"))

    buses = []
    for k, b in enumerate(_require(doc, "buses", "system")):
        buses.append(Bus(index=k, name=str(b.get("name", f"bus{k}"))))
    lines = []
    for k, ln in enumerate(_require(doc, "lines", "system")):
        lines.append(Line(
            from_bus=int(_require(ln, "from", f"line {k}")),
            to_bus=int(_require(ln, "to", f"line {k}")),
            susceptance=float(_require(ln, "susceptance", f"line {k}")),
            thermal_limit=float(_require(ln, "thermal_limit", f"line {k}")),
        ))
    gens = []
    for k, g in enumerate(_require(doc, "generators", "system")):
        gens.append(Generator(
            bus=int(_require(g, "bus", f"generator {k}")),
            g_min=float(_require(g, "g_min", f"generator {k}")),
            g_max=float(_require(g, "g_max", f"generator {k}")),
            ramp_up=float(_require(g, "ramp_up", f"generator {k}")),
            ramp_down=float(_require(g, "ramp_down", f"generator {k}")),
            min_up=int(_require(g, "min_up", f"generator {k}")),
            min_down=int(_require(g, "min_down", f"generator {k}")),
            v_init=int(_require(g, "v_init", f"generator {k}")),
            g_init=float(_require(g, "g_init", f"generator {k}")),
        ))

    ld = _require(doc, "load", "system")
    base = np.asarray(_require(ld, "base_profile", "load"), dtype=np.float64)
    shares_raw = np.asarray(_require(ld, "shares", "load"), dtype=np.float64)
    if shares_raw.ndim == 1:
        shares = np.tile(shares_raw, (horizon, 1))
    elif shares_raw.ndim == 2:
        shares = shares_raw
    else:
        raise SystemParseError("load.shares must be a vector or a matrix")
    load = LoadModel(
        base_profile=base,
        shares=shares,
        sigma_load=float(ld.get("sigma_load", 0.05)),
        sigma_share=float(ld.get("sigma_share", 0.005)),
    )

    inst = UcInstance(name=name, horizon=horizon, slack_bus=slack,
                      buses=tuple(buses), lines=tuple(lines),
                      generators=tuple(gens), load=load)
    violations = validate(inst)
    if violations:
        raise SystemValidationError(violations)
    return inst


def validate(inst: UcInstance) -> list:
    """Return every structural violation (empty list when valid)."""
    v = []
    N, E, J, T = inst.n_buses, inst.n_lines, inst.n_gens, inst.horizon
    if T < 1:
        v.append(f"horizon must be >= 1, got {T}")
    if N < 1:
        v.append("system needs at least one bus")
    if not (0 <= inst.slack_bus < N):
        v.append(f"slack_bus {inst.slack_bus} out of range [0, {N})")
    for k, ln in enumerate(inst.lines):
        for end, nm in ((ln.from_bus, "from"), (ln.to_bus, "to")):
            if not (0 <= end < N):
                v.append(f"line {k}: {nm} bus {end} out of range")
        if ln.from_bus == ln.to_bus:
            v.append(f"line {k}: connects bus {ln.from_bus} to itself")
        if ln.susceptance <= 0:
            v.append(f"line {k}: susceptance must be > 0, "
                     f"got {ln.susceptance}")
        if ln.thermal_limit <= 0:
            v.append(f"line {k}: thermal_limit must be > 0, "
                     f"got {ln.thermal_limit}")
    for k, g in enumerate(inst.generators):
        if not (0 <= g.bus < N):
            v.append(f"generator {k}: bus {g.bus} out of range")
        if g.g_min <= 0:
            v.append(f"generator {k}: g_min must be > 0, got {g.g_min}")
        if g.g_min > g.g_max:
            v.append(f"generator {k}: g_min {g.g_min} exceeds "
                     f"g_max {g.g_max}")
        if g.ramp_up <= 0 or g.ramp_down <= 0:
            v.append(f"generator {k}: ramp rates must be > 0")
        if g.min_up < 1 or g.min_down < 1:
            v.append(f"generator {k}: min_up/min_down must be >= 1")
        if g.v_init not in (0, 1):
            v.append(f"generator {k}: v_init must be 0 or 1, got {g.v_init}")
        if g.v_init == 1 and not (g.g_min <= g.g_init <= g.g_max):
            v.append(f"generator {k}: g_init {g.g_init} outside "
                     f"[g_min, g_max] while committed")
        if g.v_init == 0 and g.g_init != 0:
            v.append(f"generator {k}: g_init must be 0 while offline, "
                     f"got {g.g_init}")
    # connectivity with every line in service
    if N >= 1 and not v:
        seen = {0}
        frontier = [0]
        adj = {n: [] for n in range(N)}
        for ln in inst.lines:
            adj[ln.from_bus].append(ln.to_bus)
            adj[ln.to_bus].append(ln.from_bus)
        while frontier:
            nxt = []
            for n in frontier:
                for nb in adj[n]:
                    if nb not in seen:
                        seen.add(nb)
                        nxt.append(nb)
            frontier = nxt
        if len(seen) != N:
            missing = sorted(set(range(N)) - seen)
            v.append(f"network disconnected: buses {missing} unreachable "
                     f"with all lines in service")
    ld = inst.load
    if ld.base_profile.shape != (T,):
        v.append(f"load.base_profile has length {len(ld.base_profile)}, "
                 f"expected horizon {T}")
    if np.any(ld.base_profile <= 0):
        t = int(np.argmax(ld.base_profile <= 0))
        v.append(f"load.base_profile must be > 0 (period {t}: "
                 f"{ld.base_profile[t]})")
    if ld.shares.shape != (T, N):
        v.append(f"load.shares has shape {ld.shares.shape}, "
                 f"expected ({T}, {N})")
    else:
        if np.any(ld.shares < 0):
            t, n = np.unravel_index(int(np.argmin(ld.shares)),
                                    ld.shares.shape)
            v.append(f"load.shares must be >= 0 (period {t}, bus {n}: "
                     f"{ld.shares[t, n]})")
        sums = ld.shares.sum(axis=1)
        off = np.abs(sums - 1.0) > 1e-9
        if np.any(off):
            t = int(np.argmax(off))
            v.append(f"load.shares rows must sum to 1 (period {t} "
                     f"sums to {sums[t]:.12g})")
    if ld.sigma_load < 0 or ld.sigma_share < 0:
        v.append("load noise levels must be >= 0")
    return v


def sample_demand(load: LoadModel, rng: np.random.Generator) -> np.ndarray:
    """One day of nodal demand: (T, N), non-negative.

    System level: L'_t = L_t (1 + eps_t), eps_t ~ N(0, sigma_load^2).
    Split: shares are perturbed with N(0, sigma_share^2), clipped at
    zero and renormalized per period, so each period's nodal demands
    sum exactly to L'_t.
    """
    T, N = load.shares.shape
    eps = rng.normal(0.0, 1.0, size=T) * load.sigma_load
    level = load.base_profile * (1.0 + eps)
    if np.any(level <= 0):
        # physically meaningless draw (possible only for huge sigma_load)
        level = np.maximum(level, 1e-9)
    noise = rng.normal(0.0, 1.0, size=(T, N)) * load.sigma_share
    shares = np.clip(load.shares + noise, 0.0, None)
    sums = shares.sum(axis=1)
    if np.any(sums <= 1e-12):
        t = int(np.argmax(sums <= 1e-12))
        raise SystemValidationError(
            [f"degenerate share draw: period {t} has all-zero shares"])
    shares = shares / sums[:, None]
    return level[:, None] * shares


def deterministic_demand(load: LoadModel) -> np.ndarray:
    """The zero-noise day: base profile split by the nominal shares.

    Shares are renormalized with the same expression sample_demand
    uses, so a zero-noise sample_demand draw reproduces this matrix
    bit for bit.
    """
    shares = load.shares / load.shares.sum(axis=1)[:, None]
    return load.base_profile[:, None] * shares


def instance_hash(inst: UcInstance) -> str:
    """Stable content hash used to tie datasets and models to a system."""
    doc = {
        "name": inst.name,
        "horizon": inst.horizon,
        "slack_bus": inst.slack_bus,
        "buses": [[b.index, b.name] for b in inst.buses],
        "lines": [[ln.from_bus, ln.to_bus, repr(ln.susceptance),
                   repr(ln.thermal_limit)] for ln in inst.lines],
        "generators": [[g.bus, repr(g.g_min), repr(g.g_max),
                        repr(g.ramp_up), repr(g.ramp_down), g.min_up,
                        g.min_down, g.v_init, repr(g.g_init)]
                       for g in inst.generators],
        "load": {
            "base_profile": [repr(x) for x in inst.load.base_profile],
            "shares": [[repr(x) for x in row] for row in inst.load.shares],
            "sigma_load": repr(inst.load.sigma_load),
            "sigma_share": repr(inst.load.sigma_share),
        },
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def bundled_system_path(name: str):
    """Filesystem path of a fixture shipped in ucinfer/data."""
    ref = resources.files("ucinfer").joinpath("data").joinpath(f"{name}.sys")
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled system named '{name}'")
    return ref


def load_bundled(name: str) -> UcInstance:
    with bundled_system_path(name).open("r", encoding="utf-8") as fh:
        return load_system(fh)
