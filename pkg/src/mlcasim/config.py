"""INI-style configuration files for scenarios, policies and experiment plans.

The file is read with :mod:`configparser` (``key = value`` lines, one section
per parameter block).  Every key maps one-to-one onto a dataclass field, and
values use SI units (m, s, m/s, m/s^2).  ``none`` clears an optional value.

Sections::

    [experiment]   policies, avs, iterations, seed, jobs, validate
    [scenario]     ScenarioConfig scalars (n_background, ramp_share, ...)
    [network]      RoadNetwork fields
    [idm]          IdmParams   (tracked AVs)
    [krauss]       KraussParams (background traffic)
    [mlca]         MLCAConfig
    [mobil] [lc2017] [idm_lc] [continuous] [merge] [background]
    [continuous.mobil]   MOBIL block used for the continuous policy's desire

Unknown sections or keys raise :class:`~mlcasim.core.ConfigError`.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional, Union

from .core import POLICY_ORDER, ConfigError, PolicyId
from .scenario import PolicyParams, ScenarioConfig

# scenario fields that are either a number or None
_OPTIONAL_FLOATS = {"demand_window", "tracked_speed"}
_NESTED = {"network", "idm", "krauss", "policies"}
_POLICY_SECTIONS = {f.name for f in fields(PolicyParams)}


@dataclass(frozen=True)
class ExperimentPlan:
    policies: tuple[PolicyId, ...] = POLICY_ORDER
    av_counts: tuple[int, ...] = (1, 3)
    iterations: int = 100
    base_seed: int = 0
    jobs: int = 1
    validate: bool = False

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        if not self.av_counts or any(n < 1 for n in self.av_counts):
            raise ConfigError("AV counts must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _coerce(text: str, default: Any, key: str) -> Any:
    text = text.strip()
    try:
        if key in _OPTIONAL_FLOATS:
            return None if text.lower() == "none" else float(text)
        if key in ("tracked_policy", "background_policy"):
            return None if text.lower() == "none" else PolicyId.parse(text)
        if isinstance(default, bool):
            return _parse_bool(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, str):
            return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc
    raise ConfigError(f"key {key!r} cannot be set from a config file")


def _apply(obj: Any, items: dict[str, str], where: str, skip: frozenset = frozenset()) -> Any:
    known = {f.name: f for f in fields(obj)}
    changes = {}
    for key, text in items.items():
        if key not in known or key in skip:
            raise ConfigError(f"unknown key {key!r} in [{where}]")
        changes[key] = _coerce(text, getattr(obj, key), key)
    if not changes:
        return obj
    try:
        return replace(obj, **changes)
    except ValueError as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def _parse_policies(text: str) -> tuple[PolicyId, ...]:
    words = [w for w in text.replace(",", " ").split() if w]
    if len(words) == 1 and words[0].lower() == "all":
        return POLICY_ORDER
    return tuple(PolicyId.parse(w) for w in words)


def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(w) for w in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad integer list: {text!r}") from exc


def plan_from_items(items: dict[str, str], plan: Optional[ExperimentPlan] = None) -> ExperimentPlan:
    plan = plan or ExperimentPlan()
    changes: dict[str, Any] = {}
    for key, text in items.items():
        if key == "policies":
            changes["policies"] = _parse_policies(text)
        elif key == "avs":
            changes["av_counts"] = _parse_ints(text)
        elif key in ("iterations", "seed", "jobs"):
            try:
                changes["base_seed" if key == "seed" else key] = int(text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {text!r}") from exc
        elif key == "validate":
            changes["validate"] = _parse_bool(text)
        else:
            raise ConfigError(f"unknown key {key!r} in [experiment]")
    return replace(plan, **changes)


def parse_config(text: str, source: str = "<string>") -> tuple[ScenarioConfig, ExperimentPlan]:
    """Parse INI text into a scenario and an experiment plan.

    Raises:
        ConfigError: syntax errors, unknown sections/keys or invalid values.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive field names
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    cfg = ScenarioConfig()
    plan = ExperimentPlan()
    pol = cfg.policies
    network, idm, krauss = cfg.network, cfg.idm, cfg.krauss
    scen_items: dict[str, str] = {}
    for section in cp.sections():
        items = dict(cp.items(section))
        if section == "experiment":
            plan = plan_from_items(items, plan)
        elif section == "scenario":
            scen_items = items
        elif section == "network":
            network = _apply(network, items, section)
        elif section == "idm":
            idm = _apply(idm, items, section)
        elif section == "krauss":
            krauss = _apply(krauss, items, section)
        elif section in _POLICY_SECTIONS:
            skip = frozenset({"mobil"}) if section == "continuous" else frozenset()
            pol = replace(pol, **{section: _apply(getattr(pol, section), items, section, skip)})
        elif section == "continuous.mobil":
            cont = pol.continuous
            pol = replace(pol, continuous=replace(cont, mobil=_apply(cont.mobil, items, section)))
        else:
            raise ConfigError(f"unknown section [{section}] in {source}")
    try:
        cfg = replace(cfg, network=network, idm=idm, krauss=krauss, policies=pol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = _apply(cfg, scen_items, "scenario", frozenset(_NESTED))
    return cfg, plan


def load_config(path: Union[str, Path]) -> tuple[ScenarioConfig, ExperimentPlan]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, str(p))


def dump_config(cfg: ScenarioConfig, plan: Optional[ExperimentPlan] = None) -> str:
    """Render ``cfg`` (and optionally ``plan``) back into the INI schema."""

    def fmt(v: Any) -> str:
        if v is None:
            return "none"
        if isinstance(v, PolicyId):
            return v.value
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return v
        return repr(v)

    out: list[str] = []

    def block(name: str, obj: Any, skip: tuple = ()) -> None:
        out.append(f"[{name}]")
        for f in fields(obj):
            if f.name in skip:
                continue
            out.append(f"{f.name} = {fmt(getattr(obj, f.name))}")
        out.append("")

    if plan is not None:
        out += ["[experiment]",
                "policies = " + " ".join(p.value for p in plan.policies),
                "avs = " + " ".join(map(str, plan.av_counts)),
                f"iterations = {plan.iterations}", f"seed = {plan.base_seed}",
                f"jobs = {plan.jobs}", f"validate = {fmt(plan.validate)}", ""]
    block("scenario", cfg, tuple(_NESTED))
    block("network", cfg.network)
    block("idm", cfg.idm)
    block("krauss", cfg.krauss)
    for f in fields(cfg.policies):
        block(f.name, getattr(cfg.policies, f.name), ("mobil",) if f.name == "continuous" else ())
    block("continuous.mobil", cfg.policies.continuous.mobil)
    return "\n".join(out)


__all__ = ["ExperimentPlan", "parse_config", "load_config", "dump_config", "plan_from_items"]
