"""Task-conditioned context gating under hard caps, and artifact closure checks."""

from __future__ import annotations

import fnmatch
import math
import os
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ParseError, PreconditionError, WorkspaceError
from .schema import Library
from .similarity import tokenize

DEFAULT_WEIGHTS = {
    "name": 3.0, "tags": 2.0, "anchors": 2.0, "description": 1.0, "family": 1.0, "domain": 2.0,
}
LOCAL_KEYWORDS = ("file", "path", "directory", "local")


@dataclass(frozen=True)
class GateConfig:
    global_cap: int = 250
    per_task_cap: int = 80
    per_domain_cap: int = 24
    local_artifact_reduction: float = 0.5
    local_keywords: tuple[str, ...] = LOCAL_KEYWORDS
    weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))

    def __post_init__(self) -> None:
        if min(self.global_cap, self.per_task_cap, self.per_domain_cap) < 0:
            raise PreconditionError("caps must be >= 0")
        if not self.per_domain_cap <= self.per_task_cap <= self.global_cap:
            raise PreconditionError("caps must satisfy per_domain_cap <= per_task_cap <= global_cap")
        if not 0.0 < self.local_artifact_reduction <= 1.0:
            raise PreconditionError("local_artifact_reduction must lie in (0, 1]")
        unknown = set(self.weights) - set(DEFAULT_WEIGHTS)
        if unknown:
            raise PreconditionError(f"unknown match weights: {sorted(unknown)}")


def is_local_task(task_text: str, cfg: GateConfig = GateConfig()) -> bool:
    words = set(tokenize(task_text))
    return any(k in words for k in cfg.local_keywords)


def task_cap(task_text: str, cfg: GateConfig = GateConfig()) -> int:
    cap = cfg.per_task_cap
    if is_local_task(task_text, cfg):
        cap = math.floor(cap * cfg.local_artifact_reduction)
    return min(cap, cfg.global_cap)


def match_scores(lib: Library, task_text: str, cfg: GateConfig = GateConfig()) -> dict[str, float]:
    """Weighted signal matches of each skill against the task text.

    Each signal counts the distinct task tokens it shares; the domain signal
    fires when a domain profile label holding the skill appears in the task.
    """
    task = set(tokenize(task_text))
    w = {**DEFAULT_WEIGHTS, **cfg.weights}
    domain_hit = {
        label for label in lib.domain_profiles if set(tokenize(label)) & task
    }
    scores = {}
    for sid in lib.ids:
        s = lib.skills[sid]
        anchors = set(s.anchors.tokens())
        tags = {t for tag in s.tags for t in tokenize(tag)}
        total = (
            w["name"] * len(task & set(tokenize(s.name)))
            + w["tags"] * len(task & tags)
            + w["anchors"] * len(task & anchors)
            + w["description"] * len(task & set(tokenize(s.description)))
            + w["family"] * len(task & set(tokenize(s.family)))
            + w["domain"] * sum(1 for d in domain_hit if sid in lib.domain_profiles[d])
        )
        scores[sid] = float(total)
    return scores


@dataclass(frozen=True)
class GateResult:
    ids: tuple[str, ...]
    scores: Mapping[str, float]
    cap: int
    local: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "cap": self.cap,
            "local_artifact_task": self.local,
            "skills": [{"id": i, "score": self.scores[i]} for i in self.ids],
        }


def gate_detailed(lib: Library, task_text: str, cfg: GateConfig = GateConfig()) -> GateResult:
    if not task_text.strip():
        raise PreconditionError("task text is empty")
    scores = match_scores(lib, task_text, cfg)
    cap = task_cap(task_text, cfg)
    per_domain: dict[str, int] = {}
    out: list[str] = []
    for sid in sorted(scores, key=lambda i: (-scores[i], i)):
        if len(out) >= cap:
            break
        if scores[sid] <= 0:
            break
        dom = lib.domain_of(sid)
        if per_domain.get(dom, 0) >= cfg.per_domain_cap:
            continue
        per_domain[dom] = per_domain.get(dom, 0) + 1
        out.append(sid)
    return GateResult(tuple(out), {i: scores[i] for i in out}, cap, is_local_task(task_text, cfg))


def gate(lib: Library, task_text: str, cfg: GateConfig = GateConfig()) -> list[str]:
    """Ordered ids (score desc, id asc) of skills exposed for this task, within every cap.

    Skills with no matching signal are never exposed.
    """
    return list(gate_detailed(lib, task_text, cfg).ids)


@dataclass(frozen=True)
class Requirement:
    pattern: str
    must_be_nonempty: bool = True


@dataclass(frozen=True)
class ClosureSpec:
    task_id: str
    required_artifacts: tuple[Requirement, ...]

    def __post_init__(self) -> None:
        if not self.required_artifacts:
            raise ParseError(self.task_id, "required_artifacts", "at least one requirement")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], label: str = "<closure>") -> ClosureSpec:
        if "task_id" not in data:
            raise ParseError(label, "task_id", "missing")
        reqs = []
        for item in data.get("required_artifacts") or []:
            if isinstance(item, str):
                reqs.append(Requirement(item))
            elif isinstance(item, Mapping) and "pattern" in item:
                reqs.append(Requirement(str(item["pattern"]), bool(item.get("must_be_nonempty", True))))
            else:
                raise ParseError(label, "required_artifacts", f"bad requirement {item!r}")
        if not reqs:
            raise ParseError(label, "required_artifacts", "at least one requirement")
        return cls(str(data["task_id"]), tuple(reqs))


def load_closure_spec(path: str | Path) -> ClosureSpec:
    import yaml

    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ParseError(str(path), "<document>", str(exc)) from None
    if not isinstance(data, Mapping):
        raise ParseError(str(path), "<document>", "not a structured map")
    return ClosureSpec.from_mapping(data, str(path))


@dataclass(frozen=True)
class ClosureResult:
    complete: bool
    missing: tuple[str, ...]
    empty: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"complete": self.complete, "missing": list(self.missing), "empty": list(self.empty)}


def check_closure(spec: ClosureSpec, listing: Mapping[str, int]) -> ClosureResult:
    """``listing`` maps relative paths to byte sizes.

    A pattern is missing when no entry matches it. A nonempty requirement is
    empty when it has matches but every match has size 0.
    """
    missing, empty = [], []
    for req in spec.required_artifacts:
        hits = [p for p in sorted(listing) if fnmatch.fnmatchcase(p, req.pattern)]
        if not hits:
            missing.append(req.pattern)
        elif req.must_be_nonempty and all(listing[p] == 0 for p in hits):
            empty.append(req.pattern)
    return ClosureResult(not missing and not empty, tuple(missing), tuple(empty))


def scan_workspace(root: str | Path) -> dict[str, int]:
    """Snapshot of every regular file under ``root`` as relative posix path -> size."""
    root = Path(root)
    if not root.is_dir():
        raise WorkspaceError(f"workspace {str(root)!r} is not a readable directory")
    out = {}
    errors: list[OSError] = []
    for dirpath, _, files in os.walk(root, onerror=errors.append):
        for name in files:
            p = Path(dirpath) / name
            try:
                out[p.relative_to(root).as_posix()] = p.stat().st_size
            except OSError as exc:
                raise WorkspaceError(f"cannot stat {str(p)!r}: {exc.strerror}") from None
    if errors:
        raise WorkspaceError(f"cannot read workspace: {errors[0]}")
    return out


def gate_ids_text(ids: Iterable[str]) -> str:
    return "".join(f"{i}\n" for i in ids)
