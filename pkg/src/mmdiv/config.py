"""TOML run configuration.

Schema (all sections except [grid]/[mc] required; unknown keys are errors):

    [model]
    states = ["calm", "stressed"]        # unique identifiers
    generator = [[-0.5, 0.5], [0.5, -0.5]]
    beta = 1.3
    discount = [0.08, 0.12]              # scalar or one rate per state
    q_floor = 1e-3                       # optional

    [model.regime.calm]
    mu = 1.0
    sigma = 0.5
    jump_rate = 0.0
    # jump_law = { kind = "exp_down", mean = 1.0 }
    #          | { kind = "constant", value = -0.3 }
    #          | { kind = "two_point", value = -0.2, value2 = -1.0, weight = 0.3 }

    [clock]
    kind = "deterministic"               # "exponential" | "mixture"
    delta = 1.0                          # rate = ... | times/weights = [...]

    [grid]
    x_max = 8.0                          # default: drift-barrier heuristic
    n_nodes = 321                        # default 257, minimum 16

    [mc]
    n_paths = 20000
    dt = 0.005                           # default: clock mean / 200, capped
    seed = 0
    horizon_epochs = 0                   # 0 = residual-discount rule
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:             # Python < 3.11
    import tomli as tomllib

from .model import DividendClock, JumpLaw, ModelSpec, Regime, validate_model

__all__ = ["RunConfig", "ConfigError", "parse_config", "load_config"]


class ConfigError(ValueError):
    """Configuration problem; carries a list of field-precise messages."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class RunConfig:
    spec: ModelSpec
    clock: DividendClock
    x_max: Optional[float]
    n_nodes: int
    n_paths: int
    dt: Optional[float]
    seed: int
    horizon_epochs: Optional[int]


_JUMP_KEYS = {
    "constant": {"kind", "value"},
    "exp_down": {"kind", "mean"},
    "two_point": {"kind", "value", "value2", "weight"},
}


def _check_keys(errors, table, allowed, where):
    for k in table:
        if k not in allowed:
            errors.append(f"{where}: unknown key {k!r}")


def _number(errors, table, key, where, default=None, positive=False,
            integer=False, minimum=None):
    if key not in table:
        if default is None and minimum is not None:
            errors.append(f"{where}: missing required key {key!r}")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append(f"{where}.{key}: expected a number, got {type(v).__name__}")
        return default
    if integer and int(v) != v:
        errors.append(f"{where}.{key}: expected an integer")
        return default
    if positive and not v > 0:
        errors.append(f"{where}.{key}: must be positive (got {v})")
        return default
    return int(v) if integer else float(v)


def _parse_jump_law(errors, table, where):
    kind = table.get("kind")
    if kind not in _JUMP_KEYS:
        errors.append(f"{where}.kind: expected one of {sorted(_JUMP_KEYS)}, "
                      f"got {kind!r}")
        return None
    _check_keys(errors, table, _JUMP_KEYS[kind], where)
    kwargs = {}
    if kind == "constant":
        kwargs["value"] = _number(errors, table, "value", where, 0.0)
    elif kind == "exp_down":
        kwargs["mean"] = _number(errors, table, "mean", where, 1.0,
                                 positive=True)
    else:
        kwargs["value"] = _number(errors, table, "value", where, 0.0)
        kwargs["value2"] = _number(errors, table, "value2", where, 0.0)
        w = _number(errors, table, "weight", where, 0.5)
        if w is not None and not 0.0 <= w <= 1.0:
            errors.append(f"{where}.weight: must lie in [0, 1]")
            w = 0.5
        kwargs["weight"] = w
    return JumpLaw(kind, **kwargs)


def parse_config(doc: dict) -> RunConfig:
    """Validate a parsed TOML tree into a RunConfig (strict schema)."""
    errors = []
    _check_keys(errors, doc, {"model", "clock", "grid", "mc"}, "document")

    model = doc.get("model")
    if not isinstance(model, dict):
        raise ConfigError(errors + ["missing [model] section"])
    _check_keys(errors, model,
                {"states", "generator", "beta", "discount", "q_floor",
                 "regime"}, "model")

    states = model.get("states")
    if not isinstance(states, list) or not states:
        errors.append("model.states: expected a nonempty list")
        states = []
    states = [str(s) for s in states]
    if len(set(states)) != len(states):
        errors.append("model.states: duplicate state identifier")
    n = max(len(states), 1)

    gen = model.get("generator")
    if (not isinstance(gen, list) or len(gen) != n
            or any(not isinstance(row, list) or len(row) != n for row in gen)):
        errors.append(f"model.generator: expected a {n}x{n} matrix")
        gen = [[0.0] * n for _ in range(n)]

    beta = _number(errors, model, "beta", "model", minimum=0.0)
    if beta is None:
        beta = 1.5
    q_floor = _number(errors, model, "q_floor", "model", 1e-3, positive=True)

    disc = model.get("discount")
    if isinstance(disc, (int, float)) and not isinstance(disc, bool):
        discount = [float(disc)] * n
    elif isinstance(disc, list) and len(disc) == n and all(
            isinstance(v, (int, float)) and not isinstance(v, bool)
            for v in disc):
        discount = [float(v) for v in disc]
    else:
        errors.append("model.discount: expected a rate or one rate per state")
        discount = [0.1] * n

    regime_tables = model.get("regime", {})
    if not isinstance(regime_tables, dict):
        errors.append("model.regime: expected per-state tables")
        regime_tables = {}
    _check_keys(errors, regime_tables, set(states), "model.regime")
    regimes = []
    for s in states:
        where = f"model.regime.{s}"
        tbl = regime_tables.get(s)
        if not isinstance(tbl, dict):
            errors.append(f"{where}: missing regime table")
            regimes.append(Regime(0.0))
            continue
        _check_keys(errors, tbl, {"mu", "sigma", "jump_rate", "jump_law"},
                    where)
        mu = _number(errors, tbl, "mu", where, minimum=0.0)
        if mu is None:
            mu = 0.0
        sigma = _number(errors, tbl, "sigma", where, 0.0)
        rate = _number(errors, tbl, "jump_rate", where, 0.0)
        law = None
        if "jump_law" in tbl:
            if isinstance(tbl["jump_law"], dict):
                law = _parse_jump_law(errors, tbl["jump_law"],
                                      f"{where}.jump_law")
            else:
                errors.append(f"{where}.jump_law: expected a table")
        if rate and rate > 0 and law is None:
            errors.append(f"{where}: jump_rate > 0 requires jump_law")
        regimes.append(Regime(mu, sigma or 0.0, rate or 0.0, law))

    clock_tbl = doc.get("clock")
    if not isinstance(clock_tbl, dict):
        raise ConfigError(errors + ["missing [clock] section"])
    kind = clock_tbl.get("kind")
    clock = None
    if kind == "deterministic":
        _check_keys(errors, clock_tbl, {"kind", "delta"}, "clock")
        delta = _number(errors, clock_tbl, "delta", "clock", 1.0,
                        positive=True)
        clock = DividendClock("deterministic", delta=delta or 1.0)
    elif kind == "exponential":
        _check_keys(errors, clock_tbl, {"kind", "rate"}, "clock")
        rate = _number(errors, clock_tbl, "rate", "clock", 1.0, positive=True)
        clock = DividendClock("exponential", rate=rate or 1.0)
    elif kind == "mixture":
        _check_keys(errors, clock_tbl, {"kind", "times", "weights"}, "clock")
        try:
            clock = DividendClock("mixture",
                                  times=tuple(clock_tbl.get("times", ())),
                                  weights=tuple(clock_tbl.get("weights", ())))
        except (ValueError, TypeError) as exc:
            errors.append(f"clock: {exc}")
    else:
        errors.append(f"clock.kind: expected deterministic/exponential/"
                      f"mixture, got {kind!r}")

    grid_tbl = doc.get("grid", {})
    _check_keys(errors, grid_tbl, {"x_max", "n_nodes"}, "grid")
    x_max = _number(errors, grid_tbl, "x_max", "grid", positive=True)
    n_nodes = _number(errors, grid_tbl, "n_nodes", "grid", 257, integer=True)
    if n_nodes is not None and n_nodes < 16:
        errors.append(f"grid.n_nodes: minimum is 16 (got {n_nodes})")

    mc_tbl = doc.get("mc", {})
    _check_keys(errors, mc_tbl, {"n_paths", "dt", "seed", "horizon_epochs"},
                "mc")
    n_paths = _number(errors, mc_tbl, "n_paths", "mc", 20000, integer=True,
                      positive=True)
    dt = _number(errors, mc_tbl, "dt", "mc", positive=True)
    seed = _number(errors, mc_tbl, "seed", "mc", 0, integer=True)
    horizon = _number(errors, mc_tbl, "horizon_epochs", "mc", 0, integer=True)
    if horizon is not None and horizon < 0:
        errors.append("mc.horizon_epochs: must be >= 0")

    if errors:
        raise ConfigError(errors)

    spec = ModelSpec(tuple(states), gen, tuple(regimes), discount, beta,
                     q_floor=q_floor)
    report = validate_model(spec)
    if not report.ok:
        raise ConfigError([f"model.{name}: {detail}"
                           for name, _, detail in report.failures()])
    return RunConfig(spec, clock, x_max, int(n_nodes), int(n_paths), dt,
                     int(seed), int(horizon) or None)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"])
    except OSError as exc:
        raise ConfigError([f"{path}: {exc}"])
    return parse_config(doc)
