"""Declarative run configuration: strict parsing, explicit defaults, echo.

The file is plain text with ``[section]`` headers and ``key = value`` pairs.
Unknown sections or keys are errors, never silently ignored, and the
effective configuration (defaults included) is echoed into the run log so
published runs stay reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .errors import ConfigError, ParseError
from .filler import ActionSpec, CapOnly, DiscreteSet, MembershipList
from .game import CorrectorConfig, GameConfig, SeedSpec
from .gram import Tolerances
from .rational import format_rational, parse_rational

_SCHEMA: dict[str, dict[str, str]] = {
    "run": {
        "dim": "1", "mode": "float", "rng-seed": "0", "episodes": "100",
        "rounds": "5", "fill-budget": "unbounded", "rollouts-per-move": "4096",
        "stagnation-window": "10", "exploration": repr(math.sqrt(2.0)),
        "checkpoint-every": "10", "reassemble": "off", "debug-revalidate": "off",
        "norm-convention": "inverse", "out-dir": "runs/out",
    },
    "seed": {"source": "scratch", "rows": "all"},
    "action": {"c1": "-1, -1/2, 0, 1/2", "c2": "same", "cstar": "none"},
    "corrector": {
        "temperature": "1.0", "max-delete-fraction": "0.2",
        "learning-rate": "0.05", "protect-seed": "on",
    },
    "tolerances": {"psd": "1e-9", "rank": "1e-7", "cosine": "1e-9", "snap": "1e-7"},
}


def _parse_sections(text: str, path) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in _SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown section [{current}]")
            if current in sections:
                raise ConfigError(f"{path}:{lineno}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if current is None:
            raise ConfigError(f"{path}:{lineno}: key outside any section")
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA[current]:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r} in [{current}]")
        if key in sections[current]:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        sections[current][key] = value
    return sections


def _get(sections, section, key) -> str:
    return sections.get(section, {}).get(key, _SCHEMA[section][key])


def _as_int(value: str, what: str) -> int:
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"{what} must be an integer, got {value!r}") from exc


def _as_float(value: str, what: str) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"{what} must be a number, got {value!r}") from exc


def _as_flag(value: str, what: str) -> bool:
    if value in ("on", "true", "1"):
        return True
    if value in ("off", "false", "0"):
        return False
    raise ConfigError(f"{what} must be on/off, got {value!r}")


def _parse_value_list(text: str, what: str) -> DiscreteSet:
    values: list[float] = []
    exact: list[Fraction | None] = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            frac = parse_rational(token)
            values.append(float(frac))
            exact.append(frac)
            continue
        except ParseError:
            pass
        values.append(_as_float(token, what))
        exact.append(None)
    if not values:
        raise ConfigError(f"{what} must list at least one cosine value")
    all_exact = all(e is not None for e in exact)
    return DiscreteSet(values=tuple(values), exact=tuple(exact) if all_exact else None)


@dataclass(frozen=True)
class RunConfig:
    game: GameConfig
    out_dir: str
    cstar_path: str | None

    @property
    def episodes(self) -> int:
        return self.game.episodes


def _build(sections, base_dir: Path) -> RunConfig:
    seed_source = _get(sections, "seed", "source")
    if seed_source == "scratch":
        seed = SeedSpec(kind="scratch")
    elif seed_source.startswith("generator:"):
        seed = SeedSpec(kind="generator", name=seed_source.split(":", 1)[1])
    elif seed_source.startswith("file:"):
        seed = SeedSpec(kind="file", path=str(base_dir / seed_source.split(":", 1)[1]))
    else:
        raise ConfigError(f"seed source must be scratch, generator:<name> or file:<path>, "
                          f"got {seed_source!r}")
    rows_text = _get(sections, "seed", "rows")
    if rows_text != "all":
        seed = SeedSpec(kind=seed.kind, name=seed.name, path=seed.path,
                        rows=_as_int(rows_text, "seed rows"))

    c1 = _parse_value_list(_get(sections, "action", "c1"), "action c1")
    c2_text = _get(sections, "action", "c2")
    if c2_text == "same":
        c2: DiscreteSet | CapOnly = DiscreteSet(c1.values, c1.exact)
    elif c2_text.startswith("cap:"):
        cap_text = c2_text.split(":", 1)[1].strip()
        try:
            cap_value = float(parse_rational(cap_text))
        except ParseError:
            cap_value = _as_float(cap_text, "tail cap")
        c2 = CapOnly(max_value=cap_value)
    else:
        c2 = _parse_value_list(c2_text, "action c2")
    cstar_text = _get(sections, "action", "cstar")
    cstar = None
    cstar_path = None
    if cstar_text != "none":
        if not cstar_text.startswith("file:"):
            raise ConfigError(f"cstar must be none or file:<path>, got {cstar_text!r}")
        cstar_path = str(base_dir / cstar_text.split(":", 1)[1])
        from .fileio import read_vector_file

        doc = read_vector_file(cstar_path)
        norms = doc.vectors / (doc.vectors ** 2).sum(axis=1, keepdims=True) ** 0.5
        cstar = MembershipList(vectors=norms, label=cstar_path)
    action = ActionSpec(c1=c1, c2=c2, c_star=cstar)

    fill_text = _get(sections, "run", "fill-budget")
    fill_budget = None if fill_text == "unbounded" else _as_int(fill_text, "fill-budget")
    corrector = CorrectorConfig(
        temperature=_as_float(_get(sections, "corrector", "temperature"), "temperature"),
        max_delete_fraction=_as_float(
            _get(sections, "corrector", "max-delete-fraction"), "max-delete-fraction"),
        learning_rate=_as_float(
            _get(sections, "corrector", "learning-rate"), "learning-rate"),
        protect_seed=_as_flag(_get(sections, "corrector", "protect-seed"), "protect-seed"),
    )
    tols = Tolerances(
        psd=_as_float(_get(sections, "tolerances", "psd"), "psd tolerance"),
        rank=_as_float(_get(sections, "tolerances", "rank"), "rank tolerance"),
        cosine=_as_float(_get(sections, "tolerances", "cosine"), "cosine tolerance"),
        snap=_as_float(_get(sections, "tolerances", "snap"), "snap tolerance"),
    )
    norm_convention = _get(sections, "run", "norm-convention").replace("-", "_")
    game = GameConfig(
        dim=_as_int(_get(sections, "run", "dim"), "dim"),
        action=action,
        seed=seed,
        rounds=_as_int(_get(sections, "run", "rounds"), "rounds"),
        fill_budget=fill_budget,
        rollouts_per_move=_as_int(_get(sections, "run", "rollouts-per-move"),
                                  "rollouts-per-move"),
        rng_seed=_as_int(_get(sections, "run", "rng-seed"), "rng-seed"),
        mode=_get(sections, "run", "mode"),
        stagnation_window=_as_int(_get(sections, "run", "stagnation-window"),
                                  "stagnation-window"),
        exploration=_as_float(_get(sections, "run", "exploration"), "exploration"),
        corrector=corrector,
        tolerances=tols,
        norm_convention=norm_convention,
        reassemble=_as_flag(_get(sections, "run", "reassemble"), "reassemble"),
        debug_revalidate=_as_flag(_get(sections, "run", "debug-revalidate"),
                                  "debug-revalidate"),
        episodes=_as_int(_get(sections, "run", "episodes"), "episodes"),
        checkpoint_every=_as_int(_get(sections, "run", "checkpoint-every"),
                                 "checkpoint-every"),
    )
    out_dir = str(base_dir / _get(sections, "run", "out-dir"))
    return RunConfig(game=game, out_dir=out_dir, cstar_path=cstar_path)


def load_run_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    sections = _parse_sections(text, path)
    return _build(sections, p.parent)


def echo_text(config: RunConfig) -> str:
    """Canonical rendering of the effective configuration, defaults included."""
    game = config.game
    c1 = game.action.c1
    if c1.exact is not None:
        c1_text = ", ".join(format_rational(x) for x in c1.exact)
    else:
        c1_text = ", ".join(repr(v) for v in c1.values)
    c2 = game.action.c2
    if isinstance(c2, CapOnly):
        c2_text = f"cap:{c2.max_value!r}"
    elif isinstance(c2, DiscreteSet) and c2.values == c1.values:
        c2_text = "same"
    elif c2.exact is not None:
        c2_text = ", ".join(format_rational(x) for x in c2.exact)
    else:
        c2_text = ", ".join(repr(v) for v in c2.values)
    seed = game.seed
    if seed.kind == "scratch":
        seed_text = "scratch"
    elif seed.kind == "generator":
        seed_text = f"generator:{seed.name}"
    else:
        seed_text = f"file:{seed.path}"
    lines = [
        "[run]",
        f"dim = {game.dim}",
        f"mode = {game.mode}",
        f"rng-seed = {game.rng_seed}",
        f"episodes = {game.episodes}",
        f"rounds = {game.rounds}",
        f"fill-budget = {'unbounded' if game.fill_budget is None else game.fill_budget}",
        f"rollouts-per-move = {game.rollouts_per_move}",
        f"stagnation-window = {game.stagnation_window}",
        f"exploration = {game.exploration!r}",
        f"checkpoint-every = {game.checkpoint_every}",
        f"reassemble = {'on' if game.reassemble else 'off'}",
        f"debug-revalidate = {'on' if game.debug_revalidate else 'off'}",
        f"norm-convention = {game.norm_convention.replace('_', '-')}",
        f"out-dir = {config.out_dir}",
        "[seed]",
        f"source = {seed_text}",
        f"rows = {'all' if seed.rows is None else seed.rows}",
        "[action]",
        f"c1 = {c1_text}",
        f"c2 = {c2_text}",
        f"cstar = {'none' if config.cstar_path is None else 'file:' + config.cstar_path}",
        "[corrector]",
        f"temperature = {game.corrector.temperature!r}",
        f"max-delete-fraction = {game.corrector.max_delete_fraction!r}",
        f"learning-rate = {game.corrector.learning_rate!r}",
        f"protect-seed = {'on' if game.corrector.protect_seed else 'off'}",
        "[tolerances]",
        f"psd = {game.tolerances.psd!r}",
        f"rank = {game.tolerances.rank!r}",
        f"cosine = {game.tolerances.cosine!r}",
        f"snap = {game.tolerances.snap!r}",
    ]
    return "\n".join(lines) + "\n"
