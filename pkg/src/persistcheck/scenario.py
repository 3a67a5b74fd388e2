"""Scenario files: one JSON object describing a stack, a workload and what to check."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .device import DeviceConfig
from .errors import ConfigError
from .faults import Bounds, FaultPoint, FaultSchedule
from .state import DataWrite, JournalMode, NamespaceWrite, SystemState
from .syscalls import PROFILES, get_profile, initial_state
from .workload import Op, Workload, replay

CHECKS = (
    "commit-boundary",
    "retry-soundness",
    "clean-not-durable",
    "prefix-consistency",
    "write-sync-rename",
    "completeness",
    "no-commit-time",
    "flush-noop",
    "plp-equivalence",
    "device-queries",
)

_FIELDS = {
    "name", "description", "profile", "journal_mode", "profile_overrides", "device", "files", "dirs",
    "workload", "stop_on_error", "write_set", "bounds", "checks", "control", "wsr_steps", "protocol",
    "retry", "rseq", "seed",
}


class ScenarioError(ConfigError):
    """A scenario failed validation; ``where`` names the offending field."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


@dataclass
class Scenario:
    name: str
    description: str = ""
    profile: str = "ext4-ordered"
    journal_mode: str | None = None
    profile_overrides: dict = field(default_factory=dict)
    device: DeviceConfig = field(default_factory=DeviceConfig)
    files: dict = field(default_factory=dict)  # path -> {index: version on media}
    dirs: list = field(default_factory=list)
    workload: Workload = field(default_factory=Workload)
    write_set: list = field(default_factory=list)
    bounds: Bounds = field(default_factory=Bounds)
    checks: list = field(default_factory=list)
    control: dict | None = None  # profile overrides for a control run
    wsr_steps: list | None = None
    protocol: dict | None = None
    retry: dict | None = None
    rseq: dict | None = None
    seed: int = 0

    # -- construction ---------------------------------------------------------

    def fs_profile(self, overrides: dict | None = None):
        merged = dict(self.profile_overrides)
        merged.update(overrides or {})
        return get_profile(self.profile, self.journal_mode, **merged)

    def initial(self, overrides: dict | None = None) -> SystemState:
        return initial_state(self.fs_profile(overrides), self.device, self.files, self.dirs)

    def control_initial(self) -> SystemState | None:
        return None if self.control is None else self.initial(self.control)

    def writes(self) -> list:
        """Resolve the write-set against the fault-free run's namespace."""
        init = self.initial()
        final = replay(self.workload, init, FaultSchedule()).final
        out = []
        for i, w in enumerate(self.write_set):
            where = f"write_set[{i}]"
            path = w["path"]
            inode = final.namespace.get(path, init.namespace.get(path))
            if "binds" in w:
                target = w["binds"]
                ino = init.namespace.get(target, final.namespace.get(target)) if target is not None else None
                if target is not None and ino is None:
                    raise ScenarioError(where, f"path {target!r} is never bound")
                out.append(NamespaceWrite(path, ino))
                continue
            if inode is None:
                raise ScenarioError(where, f"path {path!r} is never bound")
            version = w.get("version")
            if version is None:
                version = final.app.get((inode, w.get("index", 0)), 0)
            out.append(DataWrite(inode, w.get("index", 0), version))
        return out

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "name": self.name,
            "description": self.description,
            "profile": self.profile,
            "journal_mode": self.journal_mode,
            "profile_overrides": dict(sorted(self.profile_overrides.items())),
            "device": self.device.to_dict(),
            "files": {p: {str(i): v for i, v in sorted(pages.items())} for p, pages in sorted(self.files.items())},
            "dirs": list(self.dirs),
            "workload": [op.to_dict() for op in self.workload.ops],
            "stop_on_error": self.workload.stop_on_error,
            "write_set": list(self.write_set),
            "bounds": self.bounds.to_dict(),
            "checks": list(self.checks),
            "seed": self.seed,
        }
        for key in ("control", "wsr_steps", "protocol", "retry", "rseq"):
            value = getattr(self, key)
            if value is not None:
                d[key] = value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ScenarioError("<root>", "scenario must be a JSON object")
        unknown = sorted(set(d) - _FIELDS)
        if unknown:
            raise ScenarioError(unknown[0], f"unknown field (allowed: {sorted(_FIELDS)})")
        if "name" not in d:
            raise ScenarioError("name", "required")
        name = _typed(d, "name", str)
        profile = _typed(d, "profile", str, "ext4-ordered")
        if profile not in PROFILES:
            raise ScenarioError("profile", f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
        journal_mode = d.get("journal_mode")
        if journal_mode is not None:
            try:
                JournalMode(journal_mode)
            except ValueError:
                raise ScenarioError("journal_mode", f"unknown mode {journal_mode!r}") from None
        overrides = _typed(d, "profile_overrides", dict, {})
        for where, ov in (("profile_overrides", overrides), ("control", d.get("control") or {})):
            try:
                get_profile(profile, journal_mode, **ov)
            except (ConfigError, TypeError) as e:
                raise ScenarioError(where, str(e)) from None
        dev = _typed(d, "device", dict, {})
        try:
            device = DeviceConfig(**dev)
        except TypeError as e:
            raise ScenarioError("device", str(e)) from None
        except ConfigError as e:
            raise ScenarioError("device", str(e)) from None
        files = {}
        for path, pages in _typed(d, "files", dict, {}).items():
            if not isinstance(pages, dict):
                raise ScenarioError(f"files.{path}", "expected an object of page index -> version")
            try:
                files[path] = {int(i): int(v) for i, v in pages.items()}
            except (TypeError, ValueError):
                raise ScenarioError(f"files.{path}", "page indices and versions must be integers") from None
        ops = []
        for i, raw in enumerate(_typed(d, "workload", list, [])):
            try:
                ops.append(Op.from_dict(raw))
            except (ConfigError, TypeError) as e:
                raise ScenarioError(f"workload[{i}]", str(e)) from None
        workload = Workload(tuple(ops), _typed(d, "stop_on_error", bool, False))
        write_set = _typed(d, "write_set", list, [])
        for i, w in enumerate(write_set):
            if not isinstance(w, dict) or "path" not in w:
                raise ScenarioError(f"write_set[{i}]", "expected an object with 'path'")
        bounds = _bounds(_typed(d, "bounds", dict, {}))
        checks = _typed(d, "checks", list, [])
        for i, c in enumerate(checks):
            if c not in CHECKS:
                raise ScenarioError(f"checks[{i}]", f"unknown check {c!r}; expected one of {list(CHECKS)}")
        wsr = d.get("wsr_steps")
        if wsr is not None and (not isinstance(wsr, list) or len(wsr) != 4 or not all(isinstance(x, bool) for x in wsr)):
            raise ScenarioError("wsr_steps", "expected four booleans")
        seed = _typed(d, "seed", int, 0)
        sc = cls(
            name=name,
            description=_typed(d, "description", str, ""),
            profile=profile,
            journal_mode=journal_mode,
            profile_overrides=dict(overrides),
            device=device,
            files=files,
            dirs=list(_typed(d, "dirs", list, [])),
            workload=workload,
            write_set=[dict(w) for w in write_set],
            bounds=bounds,
            checks=list(checks),
            control=d.get("control"),
            wsr_steps=wsr,
            protocol=d.get("protocol"),
            retry=d.get("retry"),
            rseq=d.get("rseq"),
            seed=seed,
        )
        _check_sections(sc)
        return sc


def _typed(d: dict, key: str, kind, default=None):
    value = d.get(key, default)
    if value is None and default is None:
        return None
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise ScenarioError(key, f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _bounds(b: dict) -> Bounds:
    allowed = {f.name for f in dataclasses.fields(Bounds)}
    unknown = sorted(set(b) - allowed)
    if unknown:
        raise ScenarioError(f"bounds.{unknown[0]}", f"unknown field (allowed: {sorted(allowed)})")
    b = dict(b)
    try:
        if "fault_points" in b:
            b["fault_points"] = frozenset(FaultPoint(p) for p in b["fault_points"])
        if b.get("crash_positions") is not None:
            b["crash_positions"] = tuple(int(k) for k in b["crash_positions"])
        return Bounds(**b)
    except (ValueError, TypeError) as e:
        raise ScenarioError("bounds", str(e)) from None


def _check_sections(sc: Scenario) -> None:
    from .retry import RetryPolicy, RseqModel, ServiceModel

    if sc.retry is not None:
        try:
            retry_config(sc.retry, ServiceModel, RetryPolicy)
        except (ConfigError, TypeError) as e:
            raise ScenarioError("retry", str(e)) from None
    if sc.rseq is not None:
        try:
            RseqModel(**sc.rseq)
        except (ConfigError, TypeError) as e:
            raise ScenarioError("rseq", str(e)) from None
    if sc.protocol is not None:
        try:
            protocol_steps(sc.protocol)
        except (KeyError, TypeError) as e:
            raise ScenarioError("protocol", f"malformed step: {e}") from None
    if "write-sync-rename" in sc.checks and sc.wsr_steps is None:
        raise ScenarioError("wsr_steps", "required by the write-sync-rename check")
    if "completeness" in sc.checks and sc.protocol is None:
        raise ScenarioError("protocol", "required by the completeness check")


def retry_config(section: dict, service_cls=None, policy_cls=None):
    from .retry import RetryPolicy, ServiceModel

    service_cls = service_cls or ServiceModel
    policy_cls = policy_cls or RetryPolicy
    service = dict(section.get("service", {}))
    if "fault_window" in service:
        service["fault_window"] = tuple(service["fault_window"])
    return service_cls(**service), policy_cls(**section.get("policy", {})), float(section.get("horizon", 200.0))


def protocol_steps(section: dict):
    from .checker import Step

    steps = [Step.from_dict(s) for s in section.get("steps", [])]
    return steps, frozenset(section.get("initial", [])), int(section.get("max_faults", 1))


# -- loading -----------------------------------------------------------------


def parse(text: str, source: str = "<string>") -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{source}:{e.lineno}:{e.colno}", e.msg) from None
    try:
        return Scenario.from_dict(data)
    except ScenarioError as e:
        line = _line_of(text, e.where)
        where = f"{source}:{line}: field {e.where}" if line else f"{source}: field {e.where}"
        raise ScenarioError(where, str(e).split(": ", 1)[1]) from None


def _line_of(text: str, where: str) -> int | None:
    key = where.split(".")[0].split("[")[0]
    needle = f'"{key}"'
    for n, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return n
    return None


def serialize(scenario: Scenario) -> str:
    return json.dumps(scenario.to_dict(), indent=2, sort_keys=True) + "\n"


def bundled_names() -> list[str]:
    root = resources.files("persistcheck") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load(name_or_path: str) -> Scenario:
    """Load a scenario from a file path or by bundled name."""
    path = Path(name_or_path)
    if path.suffix == ".json" or path.exists():
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ScenarioError(str(path), f"cannot read: {e.strerror}") from None
        return parse(text, str(path))
    res = resources.files("persistcheck") / "scenarios" / f"{name_or_path}.json"
    if not res.is_file():
        raise ScenarioError("--scenario", f"no file or bundled scenario named {name_or_path!r} "
                                          f"(bundled: {', '.join(bundled_names())})")
    return parse(res.read_text(encoding="utf-8"), f"{name_or_path}.json")
