"""INI run configuration: one section per stage, unknown keys rejected."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError
from . import scenarios as sc


def _bool(v: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_float(v: str):
    return None if v.strip().lower() in ("", "none") else float(v)


SCHEMA = {
    "scenario": {
        "kind": str,
        # graph
        "graph": str, "n": int, "depth": int, "decay_rate": float, "root": int, "x0": str,
        # lattice / boltzmann
        "d": int, "L": float, "h": float, "s_exp": float, "eps": float, "variant": str, "mode": str,
        "n_scales": int, "core_radius": _opt_float, "core_rate": float, "s_diff": float, "rho": float,
        "R": _opt_float, "eta": _opt_float, "lam": _opt_float, "alpha": float,
        # domain
        "shape": str, "pixel_size": float, "side": float, "c_threshold": _opt_float,
        "corridor_width": float, "corridor_length": float, "gap": float,
    },
    "admissibility": {"lam": float, "epsilon": float, "s": float, "max_n": int, "alt": _bool},
    "constants": {
        "p": float, "mode": str, "normalized": _bool, "restarts": int, "n_max": int,
        "samples": int, "slack": float, "chain": _bool,
    },
    "logsob": {"psi": str, "alpha": float, "c": float, "p": float, "samples": int, "rtol": float, "mode": str},
}

DEFAULTS = {
    "admissibility": {"max_n": 16, "alt": False},
    "constants": {"p": 2.0, "mode": "auto", "normalized": None, "restarts": 32, "n_max": 50,
                  "samples": 1000, "slack": 1e-10, "chain": True},
    "logsob": {"psi": "log-power", "alpha": 0.5, "c": 1.0, "p": 2.0, "samples": 100, "rtol": 1e-6, "mode": "auto"},
}


@dataclass
class RunConfig:
    scenario: dict
    admissibility: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    logsob: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return {"scenario": dict(self.scenario), "admissibility": dict(self.admissibility),
                "constants": dict(self.constants), "logsob": dict(self.logsob)}


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case (L, R)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParameterError(f"malformed config: {exc}") from None
    unknown = set(cp.sections()) - set(SCHEMA)
    if unknown:
        raise ParameterError(f"unknown config sections: {sorted(unknown)}")
    out = {}
    for sec, types in SCHEMA.items():
        vals = dict(DEFAULTS.get(sec, {}))
        if cp.has_section(sec):
            for k, raw in cp.items(sec):
                if k not in types:
                    raise ParameterError(f"unknown key {k!r} in [{sec}]")
                try:
                    vals[k] = types[k](raw)
                except ValueError as exc:
                    raise ParameterError(f"bad value for {sec}.{k}: {exc}") from None
        out[sec] = vals
    if "kind" not in out["scenario"]:
        raise ParameterError("[scenario] needs a kind")
    return RunConfig(**out)


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParameterError(f"cannot read config: {exc}") from None
    return parse_config(text)


_GRAPH_KEYS = {"kind", "graph", "n", "depth", "decay_rate", "root", "x0"}
_LATTICE_KEYS = {"kind", "d", "L", "h", "s_exp", "eps", "variant", "mode", "n_scales", "core_radius",
                 "core_rate", "s_diff", "rho", "R", "eta", "lam"}
_DOMAIN_KEYS = {"kind", "shape", "pixel_size", "side", "c_threshold", "corridor_width", "corridor_length", "gap"}
_BOLTZMANN_KEYS = {"kind", "d", "L", "h", "alpha"}


def _only(cfg: dict, allowed: set, kind: str) -> None:
    extra = set(cfg) - allowed
    if extra:
        raise ParameterError(f"keys {sorted(extra)} do not apply to kind={kind}")


def build_scenario(cfg: dict) -> sc.Scenario:
    kind = cfg["kind"]
    if kind == "graph":
        _only(cfg, _GRAPH_KEYS, kind)
        g = cfg.get("graph", "complete")
        n = cfg.get("n", 5)
        if g == "complete":
            adj = sc.complete_graph(n)
        elif g == "path":
            adj = sc.path_graph(n)
        elif g == "tree":
            adj = sc.binary_tree(cfg.get("depth", 4))
        elif g == "triangles":
            adj = sc.disjoint_union(sc.complete_graph(3), sc.complete_graph(3))
        else:
            raise ParameterError(f"unknown graph {g!r}")
        m = adj.shape[0]
        x0 = cfg.get("x0", "root")
        root = cfg.get("root", 0)
        x0_sel = {"root": None, "all": np.ones(m, bool), "none": np.zeros(m, bool)}.get(x0)
        if x0 not in ("root", "all", "none"):
            raise ParameterError("x0 must be root, all or none")
        return sc.make_graph_scenario(adj, root, cfg.get("decay_rate", 0.0), x0=x0_sel)
    if kind == "lattice":
        _only(cfg, _LATTICE_KEYS, kind)
        kw = {k: v for k, v in cfg.items() if k != "kind"}
        return sc.make_lattice_scenario(**kw)
    if kind == "domain":
        _only(cfg, _DOMAIN_KEYS, kind)
        px = cfg.get("pixel_size", 0.05)
        shape = cfg.get("shape", "dumbbell")
        side = cfg.get("side", 1.0)
        if shape == "square":
            mask = sc.square_mask(side, px)
        elif shape == "dumbbell":
            mask = sc.dumbbell_mask(px, side, cfg.get("corridor_width", 0.3), cfg.get("corridor_length", 0.5))
        elif shape == "separated":
            mask = sc.separated_squares_mask(px, side, cfg.get("gap", 1.2))
        else:
            raise ParameterError(f"unknown shape {shape!r}")
        return sc.make_domain_scenario(mask, px, cfg.get("c_threshold"))
    if kind == "boltzmann":
        _only(cfg, _BOLTZMANN_KEYS, kind)
        kw = {k: v for k, v in cfg.items() if k != "kind"}
        return sc.make_boltzmann_scenario(**kw)
    raise ParameterError(f"unknown scenario kind {kind!r}")


def resolve_mode(scenario: sc.Scenario, mode: str, normalized: bool | None) -> tuple[str, bool]:
    """Fill in ``auto`` constraint choices from the scenario kind."""
    kind = scenario.info.get("kind")
    if mode == "auto":
        if kind == "boltzmann":
            mode = "wplus"
        elif scenario.weights.pinned.any() and not scenario.weights.X0.any():
            mode = "none"
        else:
            mode = "x0" if scenario.weights.X0.any() else "wplus"
    if normalized is None:
        normalized = kind != "boltzmann"
    return mode, normalized
