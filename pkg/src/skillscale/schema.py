"""Canonical skill-library schema, ingestion, near-duplicate removal and snapshot diffs.

Libraries are immutable values: every edit returns a new ``Library`` with a
higher ``version``. The on-disk form is a single JSON (or YAML) document with
stable key ordering so that textual diffs of two snapshots are meaningful.
"""

from __future__ import annotations

import json
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ConflictError, ParseError, SkillScaleError

DEPENDENCY_KINDS = ("tight", "loose", "independent")
DEFAULT_FAMILY = "unassigned"

_SKILL_KEYS = (
    "id", "name", "description", "examples", "family", "tags", "inputs", "outputs", "anchors",
)
_ANCHOR_KEYS = ("verbs", "objects", "constraints")
_LIBRARY_KEYS = ("version", "skills", "edges", "domain_profiles")


def _clean_tokens(values: Iterable[Any]) -> frozenset[str]:
    out = set()
    for v in values:
        s = str(v).strip().lower()
        if s:
            out.add(s)
    return frozenset(out)


@dataclass(frozen=True)
class Anchors:
    verbs: frozenset[str] = frozenset()
    objects: frozenset[str] = frozenset()
    constraints: frozenset[str] = frozenset()

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any] | None) -> Anchors:
        data = data or {}
        return cls(*(_clean_tokens(_as_list(data.get(k))) for k in _ANCHOR_KEYS))

    def tokens(self) -> frozenset[str]:
        """Anchor region used for overlap geometry: verbs, objects and constraint words."""
        words = set(self.verbs) | set(self.objects)
        for clause in self.constraints:
            words.update(t for t in re.split(r"[^0-9a-z]+", clause) if len(t) >= 2)
        return frozenset(words)

    def weighted_count(self) -> int:
        return len(self.verbs) + len(self.objects) + 2 * len(self.constraints)

    def is_empty(self) -> bool:
        return not (self.verbs or self.objects or self.constraints)

    def union(self, other: Anchors) -> Anchors:
        return Anchors(
            self.verbs | other.verbs,
            self.objects | other.objects,
            self.constraints | other.constraints,
        )

    def to_dict(self) -> dict[str, list[str]]:
        return {k: sorted(getattr(self, k)) for k in _ANCHOR_KEYS}


@dataclass(frozen=True)
class Skill:
    id: str
    name: str
    description: str
    family: str = DEFAULT_FAMILY
    examples: tuple[str, ...] = ()
    tags: frozenset[str] = frozenset()
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    anchors: Anchors = field(default_factory=Anchors)
    extra: Mapping[str, Any] = field(default_factory=dict, compare=True)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = dict(self.extra)
        out.update(
            id=self.id,
            name=self.name,
            description=self.description,
            examples=list(self.examples),
            family=self.family,
            tags=sorted(self.tags),
            inputs=list(self.inputs),
            outputs=list(self.outputs),
            anchors=self.anchors.to_dict(),
        )
        return out


@dataclass(frozen=True)
class PipelineEdge:
    upstream: str
    downstream: str
    dependency: str = "loose"
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.upstream == self.downstream:
            raise SkillScaleError(f"edge {self.upstream}->{self.downstream} is a self-loop")
        if self.dependency not in DEPENDENCY_KINDS:
            raise SkillScaleError(f"unknown dependency type {self.dependency!r}")
        if not 0.0 <= self.weight <= 1.0:
            raise SkillScaleError(f"edge weight {self.weight} outside [0, 1]")

    def key(self) -> tuple[str, str, str, float]:
        return (self.upstream, self.downstream, self.dependency, self.weight)

    def to_dict(self) -> dict[str, Any]:
        return {
            "upstream": self.upstream,
            "downstream": self.downstream,
            "dependency": self.dependency,
            "weight": self.weight,
        }


@dataclass(frozen=True)
class Library:
    version: int
    skills: Mapping[str, Skill]
    edges: tuple[PipelineEdge, ...] = ()
    domain_profiles: Mapping[str, frozenset[str]] = field(default_factory=dict)
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=PipelineEdge.key)))
        for e in self.edges:
            for end in (e.upstream, e.downstream):
                if end not in self.skills:
                    raise SkillScaleError(f"edge endpoint {end!r} is not a skill in the library")
        for sid, skill in self.skills.items():
            if sid != skill.id:
                raise SkillScaleError(f"skill key {sid!r} does not match id {skill.id!r}")

    def __len__(self) -> int:
        return len(self.skills)

    @property
    def ids(self) -> list[str]:
        return sorted(self.skills)

    def ordered(self) -> list[Skill]:
        return [self.skills[i] for i in self.ids]

    def families(self) -> list[str]:
        return sorted({s.family for s in self.skills.values()})

    def domain_of(self, skill_id: str) -> str:
        """First domain profile (alphabetically) containing the skill, else its family."""
        for label in sorted(self.domain_profiles):
            if skill_id in self.domain_profiles[label]:
                return label
        return self.skills[skill_id].family

    def without(self, removed: Iterable[str]) -> Library:
        """Drop skills plus any edges and profile memberships that touch them. Version unchanged."""
        gone = set(removed)
        return replace(
            self,
            skills={k: v for k, v in self.skills.items() if k not in gone},
            edges=tuple(e for e in self.edges if e.upstream not in gone and e.downstream not in gone),
            domain_profiles={k: frozenset(v - gone) for k, v in self.domain_profiles.items()},
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = dict(self.extra)
        out.update(
            version=self.version,
            skills=[s.to_dict() for s in self.ordered()],
            edges=[e.to_dict() for e in self.edges],
            domain_profiles={k: sorted(v) for k, v in sorted(self.domain_profiles.items())},
        )
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _as_list(value: Any) -> list[Any]:
    if value is None:
        return []
    if isinstance(value, str):
        return [value]
    if isinstance(value, Mapping):
        raise TypeError("expected a list, got a map")
    return list(value)


def slugify(text: str) -> str:
    slug = re.sub(r"[^0-9a-z]+", "-", text.lower()).strip("-")
    return slug or "skill"


def _parse_document(doc: Any, label: str) -> Mapping[str, Any]:
    if isinstance(doc, (str, bytes)):
        try:
            doc = yaml.safe_load(doc)
        except yaml.YAMLError as exc:
            raise ParseError(label, "<document>", f"not parseable: {exc}") from None
    if not isinstance(doc, Mapping):
        raise ParseError(label, "<document>", "not a structured map")
    return doc


def skill_from_mapping(doc: Any, label: str = "<skill>") -> Skill:
    data = _parse_document(doc, label)
    for req in ("name", "description"):
        value = data.get(req)
        if not isinstance(value, str) or not value.strip():
            raise ParseError(label, req, "required non-empty string")
    name = data["name"].strip()
    raw_id = data.get("id")
    sid = str(raw_id).strip() if raw_id not in (None, "") else slugify(name)
    family = data.get("family") or DEFAULT_FAMILY
    if not isinstance(family, str):
        raise ParseError(label, "family", "must be a string")

    anchor_src = data.get("anchors")
    if anchor_src is None and any(k in data for k in _ANCHOR_KEYS):
        anchor_src = {k: data.get(k) for k in _ANCHOR_KEYS}
    if anchor_src is not None and not isinstance(anchor_src, Mapping):
        raise ParseError(label, "anchors", "must be a map of verbs/objects/constraints")

    def listed(key: str) -> list[str]:
        try:
            return [str(v) for v in _as_list(data.get(key))]
        except TypeError:
            raise ParseError(label, key, "must be a list") from None

    try:
        anchors = Anchors.from_mapping(anchor_src)
    except TypeError:
        raise ParseError(label, "anchors", "anchor fields must be lists") from None

    known = set(_SKILL_KEYS) | (set(_ANCHOR_KEYS) if "anchors" not in data else set())
    extra = {k: v for k, v in data.items() if k not in known}
    return Skill(
        id=sid,
        name=name,
        description=data["description"].strip(),
        family=family.strip() or DEFAULT_FAMILY,
        examples=tuple(listed("examples")),
        tags=_clean_tokens(listed("tags")),
        inputs=tuple(listed("inputs")),
        outputs=tuple(listed("outputs")),
        anchors=anchors,
        extra=extra,
    )


def ingest(documents: Sequence[Any], labels: Sequence[str] | None = None) -> Library:
    """Normalize skill documents (maps or YAML/JSON text) into a version-1 library."""
    skills: dict[str, Skill] = {}
    for i, doc in enumerate(documents):
        label = labels[i] if labels is not None else f"document[{i}]"
        skill = skill_from_mapping(doc, label)
        if skill.id in skills:
            raise ConflictError(f"duplicate skill id {skill.id!r} in {label}")
        skills[skill.id] = skill
    return Library(version=1, skills=skills)


def library_from_mapping(data: Any, label: str = "<library>") -> Library:
    data = _parse_document(data, label)
    raw_skills = data.get("skills")
    if not isinstance(raw_skills, list):
        raise ParseError(label, "skills", "must be a list of skill records")
    skills: dict[str, Skill] = {}
    for i, doc in enumerate(raw_skills):
        skill = skill_from_mapping(doc, f"{label}:skills[{i}]")
        if skill.id in skills:
            raise ConflictError(f"duplicate skill id {skill.id!r} in {label}")
        skills[skill.id] = skill
    edges = []
    for i, e in enumerate(data.get("edges") or []):
        try:
            edges.append(
                PipelineEdge(
                    upstream=str(e["upstream"]),
                    downstream=str(e["downstream"]),
                    dependency=str(e.get("dependency", "loose")),
                    weight=float(e.get("weight", 1.0)),
                )
            )
        except (KeyError, TypeError, ValueError, SkillScaleError) as exc:
            raise ParseError(label, f"edges[{i}]", str(exc)) from None
    profiles = data.get("domain_profiles") or {}
    if not isinstance(profiles, Mapping):
        raise ParseError(label, "domain_profiles", "must be a map")
    version = data.get("version", 1)
    if not isinstance(version, int) or version < 1:
        raise ParseError(label, "version", "must be a positive integer")
    extra = {k: v for k, v in data.items() if k not in _LIBRARY_KEYS}
    try:
        return Library(
            version=version,
            skills=skills,
            edges=tuple(edges),
            domain_profiles={str(k): frozenset(map(str, v)) for k, v in profiles.items()},
            extra=extra,
        )
    except SkillScaleError as exc:
        raise ParseError(label, "edges", str(exc)) from None


def load_library(path: str | Path) -> Library:
    path = Path(path)
    return library_from_mapping(path.read_text(encoding="utf-8"), str(path))


def dump_library(lib: Library, path: str | Path) -> None:
    path = Path(path)
    if path.suffix in (".yaml", ".yml"):
        text = yaml.safe_dump(lib.to_dict(), sort_keys=True, allow_unicode=True)
    else:
        text = lib.dumps()
    path.write_text(text, encoding="utf-8")


def dedup(lib: Library, threshold: float = 0.95) -> tuple[Library, list[tuple[str, str]]]:
    """Remove near-duplicate descriptions (TF-IDF cosine above ``threshold``).

    The survivor of a duplicate group is the skill with the longer description,
    ties going to the lexicographically smaller id. IDF weights depend on the
    corpus, so the pass repeats on the reduced library until nothing merges;
    the result is therefore a fixed point and ``dedup`` is idempotent.

    Returns the reduced library (same version; edges touching dropped skills
    are rewired to the survivor when that does not create a self-loop) and the
    ``(survivor, merged)`` id pairs.
    """
    from .similarity import TfidfIndex

    if not 0.0 < threshold <= 1.0:
        raise SkillScaleError(f"threshold {threshold} outside (0, 1]")
    merged: list[tuple[str, str]] = []
    current = lib
    while len(current) > 1:
        order = sorted(current.skills.values(), key=lambda s: (-len(s.description), s.id))
        index = TfidfIndex([s.description for s in order])
        sims = index.similarity_matrix()
        kept: list[int] = []
        round_pairs = []
        for i, skill in enumerate(order):
            hit = next((k for k in kept if sims[k, i] > threshold), None)
            if hit is None:
                kept.append(i)
            else:
                round_pairs.append((order[hit].id, skill.id))
        if not round_pairs:
            break
        merged.extend(round_pairs)
        current = _drop_duplicates(current, round_pairs)
    return current, merged


def _drop_duplicates(lib: Library, pairs: list[tuple[str, str]]) -> Library:
    survivor = {dropped: keep for keep, dropped in pairs}
    edges = []
    seen = set()
    for e in lib.edges:
        up = survivor.get(e.upstream, e.upstream)
        down = survivor.get(e.downstream, e.downstream)
        if up == down:
            continue
        edge = replace(e, upstream=up, downstream=down)
        if edge.key() not in seen:
            seen.add(edge.key())
            edges.append(edge)
    profiles = {
        k: frozenset(survivor.get(i, i) for i in v) for k, v in lib.domain_profiles.items()
    }
    return replace(
        lib,
        skills={k: v for k, v in lib.skills.items() if k not in survivor},
        edges=tuple(edges),
        domain_profiles=profiles,
    )


@dataclass(frozen=True)
class SnapshotDiff:
    before_version: int
    after_version: int
    added: Mapping[str, Skill]
    removed: tuple[str, ...]
    modified: Mapping[str, Skill]
    edges_added: tuple[PipelineEdge, ...]
    edges_removed: tuple[PipelineEdge, ...]
    domain_profiles: Mapping[str, frozenset[str]] | None = None

    def is_empty(self) -> bool:
        return not (
            self.added or self.removed or self.modified or self.edges_added
            or self.edges_removed or self.domain_profiles is not None
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "before_version": self.before_version,
            "after_version": self.after_version,
            "added": sorted(self.added),
            "removed": list(self.removed),
            "modified": sorted(self.modified),
            "edges_added": [e.to_dict() for e in self.edges_added],
            "edges_removed": [e.to_dict() for e in self.edges_removed],
            "domain_profiles_changed": self.domain_profiles is not None,
            "records": {k: v.to_dict() for k, v in sorted({**self.added, **self.modified}.items())},
        }


def snapshot_diff(before: Library, after: Library) -> SnapshotDiff:
    b_ids, a_ids = set(before.skills), set(after.skills)
    modified = {
        i: after.skills[i] for i in sorted(b_ids & a_ids) if before.skills[i] != after.skills[i]
    }
    b_edges = {e.key(): e for e in before.edges}
    a_edges = {e.key(): e for e in after.edges}
    profiles = None
    if dict(before.domain_profiles) != dict(after.domain_profiles):
        profiles = dict(after.domain_profiles)
    return SnapshotDiff(
        before_version=before.version,
        after_version=after.version,
        added={i: after.skills[i] for i in sorted(a_ids - b_ids)},
        removed=tuple(sorted(b_ids - a_ids)),
        modified=modified,
        edges_added=tuple(a_edges[k] for k in sorted(a_edges.keys() - b_edges.keys())),
        edges_removed=tuple(b_edges[k] for k in sorted(b_edges.keys() - a_edges.keys())),
        domain_profiles=profiles,
    )


def apply_diff(before: Library, diff: SnapshotDiff) -> Library:
    """Replay a diff onto ``before``; ``apply_diff(b, snapshot_diff(b, a)) == a``."""
    skills = {k: v for k, v in before.skills.items() if k not in set(diff.removed)}
    skills.update(diff.modified)
    skills.update(diff.added)
    drop = {e.key() for e in diff.edges_removed}
    edges = [e for e in before.edges if e.key() not in drop] + list(diff.edges_added)
    return replace(
        before,
        version=diff.after_version,
        skills=skills,
        edges=tuple(edges),
        domain_profiles=(
            diff.domain_profiles if diff.domain_profiles is not None else before.domain_profiles
        ),
    )
