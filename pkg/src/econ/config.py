"""Run configuration, metrics emission, plot-data export, run manifests
and per-subsystem seed derivation.

Configs are sectioned key=value text. Every key is validated against a
documented range and unknown keys are rejected, so a config file is
always a complete, checkable statement of a run.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
from dataclasses import dataclass, field, fields

__version__ = "1.0.0"


def _simplex(v):
    return (len(v) == 3 and all(x >= 0 for x in v)
            and abs(sum(v) - 1.0) <= 1e-9)


# key -> (section, parser, validator, documented range)
_SCHEMA = {
    "seed":            ("run", int, lambda v: v >= 0, ">= 0"),
    "episodes":        ("run", int, lambda v: v >= 1, ">= 1"),
    "agents":          ("run", int, lambda v: v >= 1, ">= 1"),
    "backend":         ("run", str, lambda v: v in ("mock", "http", "scripted"),
                        "one of mock|http|scripted"),
    "max_rounds":      ("run", int, lambda v: v >= 1, ">= 1"),
    "d":               ("model", int, lambda v: v >= 1, ">= 1"),
    "d_b":             ("model", int, lambda v: v >= 1, ">= 1"),
    "heads":           ("model", int, lambda v: v >= 1, ">= 1"),
    "mlp_width":       ("model", int, lambda v: v >= 1, ">= 1"),
    "blocks":          ("model", int, lambda v: v >= 1, ">= 1"),
    "dropout":         ("model", float, lambda v: 0.0 <= v < 1.0, "[0, 1)"),
    "t_min":           ("model", float, lambda v: v > 0.0, "> 0"),
    "t_max":           ("model", float, lambda v: v > 0.0, "> 0"),
    "p_min":           ("model", float, lambda v: v > 0.0, "> 0"),
    "p_max":           ("model", float, lambda v: v > 0.0, "> 0"),
    "grid_k":          ("model", int, lambda v: v >= 2, ">= 2"),
    "window":          ("model", int, lambda v: v >= 1, ">= 1"),
    "eta":             ("training", float, lambda v: v > 0.0, "> 0"),
    "eta_coord":       ("training", float, lambda v: v > 0.0, "> 0"),
    "gamma":           ("training", float, lambda v: 0.0 <= v < 1.0, "[0, 1)"),
    "buffer":          ("training", int, lambda v: v >= 1, ">= 1"),
    "batch":           ("training", int, lambda v: v >= 1, ">= 1"),
    "update_interval": ("training", int, lambda v: v >= 1, ">= 1"),
    "tau_soft":        ("training", float, lambda v: 0.0 < v <= 1.0, "(0, 1]"),
    "r_max":           ("rewards", float, lambda v: v > 0.0, "> 0"),
    "alpha":           ("rewards", "triple", _simplex,
                        "three non-negative values summing to 1"),
    "lambda_e":        ("rewards", float, lambda v: v >= 0.0, ">= 0"),
    "lambda_b":        ("rewards", float, lambda v: v >= 0.0, ">= 0"),
    "lambda_m":        ("rewards", float, lambda v: v >= 0.0, ">= 0"),
    "eps_c":           ("stopping", float, lambda v: v > 0.0, "> 0"),
    "eps_l":           ("stopping", float, lambda v: v > 0.0, "> 0"),
    "r_threshold":     ("stopping", float, lambda v: v > 0.0, "> 0"),
    "patience":        ("stopping", int, lambda v: v >= 1, ">= 1"),
}

_SECTIONS = ("run", "model", "training", "rewards", "stopping")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    episodes: int = 100
    agents: int = 3
    backend: str = "mock"
    max_rounds: int = 1
    d: int = 256
    d_b: int = 128
    heads: int = 4
    mlp_width: int = 256
    blocks: int = 2
    dropout: float = 0.0
    t_min: float = 0.1
    t_max: float = 2.0
    p_min: float = 0.1
    p_max: float = 0.9
    grid_k: int = 5
    window: int = 8
    eta: float = 0.001
    eta_coord: float = 0.001
    gamma: float = 0.99
    buffer: int = 32
    batch: int = 16
    update_interval: int = 8
    tau_soft: float = 0.01
    r_max: float = 1.0
    alpha: tuple = (0.4, 0.4, 0.2)
    lambda_e: float = 0.1
    lambda_b: float = 0.1
    lambda_m: float = 0.1
    eps_c: float = 0.01
    eps_l: float = 1e-4
    r_threshold: float = 0.7
    patience: int = 5

    def __post_init__(self):
        self.alpha = tuple(float(x) for x in self.alpha)
        self.validate()

    def validate(self):
        for f in fields(self):
            value = getattr(self, f.name)
            _, _, check, rng = _SCHEMA[f.name]
            if not check(value):
                raise ConfigError(
                    f"value {value!r} for '{f.name}' out of range (allowed: {rng})")
        if self.batch > self.buffer:
            raise ConfigError("batch must not exceed buffer capacity")
        if not self.t_min < self.t_max:
            raise ConfigError("t_min must be < t_max")
        if not self.p_min < self.p_max:
            raise ConfigError("p_min must be < p_max")


def parse_config(text: str) -> RunConfig:
    """Sectioned key=value text; absent keys fall back to defaults."""
    values: dict = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}]")
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"expected key=value, got {line!r}")
        if key not in _SCHEMA:
            raise ConfigError(f"unknown key '{key}'")
        _, kind, _, _ = _SCHEMA[key]
        try:
            if kind == "triple":
                parsed = tuple(float(x) for x in value.replace(",", " ").split())
            elif kind is str:
                parsed = value
            else:
                parsed = kind(value)
        except ValueError:
            raise ConfigError(f"cannot parse value {value!r} for '{key}'") from None
        values[key] = parsed
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def config_text(cfg: RunConfig) -> str:
    """Canonical sectioned rendering (stable ordering, round-trips)."""
    out = io.StringIO()
    for section in _SECTIONS:
        out.write(f"[{section}]\n")
        for f in fields(cfg):
            sec, kind, _, _ = _SCHEMA[f.name]
            if sec != section:
                continue
            v = getattr(cfg, f.name)
            if kind == "triple":
                v = " ".join(repr(float(x)) for x in v)
            elif kind is float:
                v = repr(v)
            out.write(f"{f.name} = {v}\n")
        out.write("\n")
    return out.getvalue()


def save_config(cfg: RunConfig, path):
    with open(path, "w") as fh:
        fh.write(config_text(cfg))


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(config_text(cfg).encode()).hexdigest()


# -- seeds ------------------------------------------------------------------

_SEED_OFFSETS = {"init": 101, "generation": 211, "exploration": 307, "game": 401}


def subsystem_seed(master: int, name: str) -> int:
    """Fixed-offset seed split so one subsystem can be rerun stably."""
    if name not in _SEED_OFFSETS:
        raise ValueError(f"unknown subsystem '{name}'")
    return master * 1000 + _SEED_OFFSETS[name]


# -- metrics ----------------------------------------------------------------

METRICS_COLUMNS = ("episode", "l_td", "l_e", "l_mix", "l_tot", "mean_r",
                   "delta_c", "stopped", "wall_time", "tokens")


@dataclass
class MetricsRow:
    episode: int
    l_td: float = 0.0
    l_e: float = 0.0
    l_mix: float = 0.0
    l_tot: float = 0.0
    mean_r: float = 0.0
    delta_c: float = 0.0
    stopped: int = 0
    wall_time: float = 0.0
    tokens: int = 0

    def as_list(self) -> list:
        return [getattr(self, c) for c in METRICS_COLUMNS]


def emit_metrics(rows: list, path, append: bool = False):
    """Header-first CSV with a fixed column order."""
    import os

    write_header = not (append and os.path.exists(path) and os.path.getsize(path) > 0)
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if write_header:
            w.writerow(METRICS_COLUMNS)
        for r in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, float) else v
                        for v in r.as_list()])


def load_metrics(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(MetricsRow(
                episode=int(rec["episode"]),
                l_td=float(rec["l_td"]), l_e=float(rec["l_e"]),
                l_mix=float(rec["l_mix"]), l_tot=float(rec["l_tot"]),
                mean_r=float(rec["mean_r"]), delta_c=float(rec["delta_c"]),
                stopped=int(rec["stopped"]), wall_time=float(rec["wall_time"]),
                tokens=int(rec["tokens"])))
    return rows


PLOT_KINDS = ("loss-curve", "regret-curve", "reward-curve")


def export_plot_data(data, kind: str, path):
    """Plain numeric columns consumable by any plotting tool.

    loss-curve / reward-curve take metrics rows; regret-curve takes a
    regret trace and appends the fitted a*T^b column.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind '{kind}'")
    lines = []
    if kind == "regret-curve":
        from .gamelab import fit_regret_exponent

        total = data.total if hasattr(data, "total") else data
        if len(total) == 0:
            raise ValueError("empty trace")
        fit = fit_regret_exponent(total)
        lines.append("t regret fitted")
        for t, r in enumerate(total, start=1):
            lines.append(f"{t} {r:.10g} {fit.a * t ** fit.b:.10g}")
    else:
        if not data:
            raise ValueError("empty metrics")
        if kind == "loss-curve":
            lines.append("episode l_td l_e l_mix l_tot")
            for row in data:
                lines.append(f"{row.episode} {row.l_td:.10g} {row.l_e:.10g} "
                             f"{row.l_mix:.10g} {row.l_tot:.10g}")
        else:
            lines.append("episode mean_r")
            for row in data:
                lines.append(f"{row.episode} {row.mean_r:.10g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_manifest(path, cfg: RunConfig, command: str, extra: dict | None = None):
    """Everything needed to reproduce the run byte-for-byte in mock mode."""
    manifest = {
        "command": command,
        "config_hash": config_hash(cfg),
        "config": dataclasses.asdict(cfg),
        "seed": cfg.seed,
        "code_version": __version__,
    }
    if extra:
        manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
