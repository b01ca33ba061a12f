"""Edit planning, candidate gating, approval, apply and before/after audit.

The manager never edits silently: ``plan`` emits pending actions, reviewers
approve them (supplying rewrite text where needed), and ``apply`` refuses to
run unless every action is approved and the plan was made against the
library's current version.
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .errors import ConflictError, ParseError, PreconditionError, StaleVersionError
from .laws import RoutingLawFit
from .schema import Anchors, Library, PipelineEdge, Skill, SnapshotDiff, snapshot_diff
from .scorecards import (
    LibraryScorecard,
    ScoreConfig,
    Scorecards,
    score,
    score_library,
    score_pairs,
    score_skills,
)
from .similarity import LibraryGeometry

ACTION_KINDS = (
    "rewrite", "merge", "remove", "narrow", "review_overlap",
    "add_with_review", "approve_candidate", "reject",
)
STATUSES = ("pending", "approved", "rejected", "applied")
_NEEDS_TEXT = ("rewrite", "narrow")


@dataclass(frozen=True)
class Thresholds:
    competition: float = 0.8
    merge: float = 0.85
    blackhole: float = 0.5
    remove_abstraction: float = 0.8
    anchor: float = 0.25
    duplicate: float = 0.95

    def to_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class Action:
    action_id: str
    kind: str
    target_ids: tuple[str, ...]
    rationale: str
    payload: Mapping[str, Any] | None = None
    status: str = "pending"
    priority: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ACTION_KINDS:
            raise ParseError(self.action_id, "kind", f"unknown action kind {self.kind!r}")
        if self.status not in STATUSES:
            raise ParseError(self.action_id, "status", f"unknown status {self.status!r}")
        if not self.rationale:
            raise ParseError(self.action_id, "rationale", "every action needs a rationale")
        if not self.target_ids:
            raise ParseError(self.action_id, "target_ids", "no targets")
        if self.kind == "merge":
            survivor = (self.payload or {}).get("survivor")
            if len(self.target_ids) < 2 or survivor not in self.target_ids:
                raise ParseError(self.action_id, "payload", "merge needs >= 2 targets and a survivor among them")

    def to_dict(self) -> dict[str, Any]:
        return {
            "action_id": self.action_id,
            "kind": self.kind,
            "target_ids": list(self.target_ids),
            "rationale": self.rationale,
            "payload": dict(self.payload) if self.payload is not None else None,
            "status": self.status,
            "priority": self.priority,
        }

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> Action:
        aid = str(data.get("action_id", "<action>"))
        try:
            return cls(
                action_id=aid,
                kind=data["kind"],
                target_ids=tuple(data["target_ids"]),
                rationale=data["rationale"],
                payload=data.get("payload"),
                status=data.get("status", "pending"),
                priority=float(data.get("priority", 0.0)),
            )
        except KeyError as exc:
            raise ParseError(aid, exc.args[0], "missing") from None


@dataclass(frozen=True)
class ActionPlan:
    plan_id: str
    base_library_version: int
    actions: tuple[Action, ...]
    thresholds: Thresholds = field(default_factory=Thresholds)

    def action(self, action_id: str) -> Action:
        for a in self.actions:
            if a.action_id == action_id:
                return a
        raise PreconditionError(f"plan has no action {action_id!r}")

    def with_action(self, updated: Action) -> ActionPlan:
        return replace(
            self,
            actions=tuple(updated if a.action_id == updated.action_id else a for a in self.actions),
        )

    def subset(self, kinds: Iterable[str]) -> ActionPlan:
        kinds = set(kinds)
        return replace(self, actions=tuple(a for a in self.actions if a.kind in kinds))

    def to_dict(self) -> dict[str, Any]:
        return {
            "plan_id": self.plan_id,
            "base_library_version": self.base_library_version,
            "thresholds": self.thresholds.to_dict(),
            "note": "firing thresholds are artifact-defined defaults",
            "actions": [a.to_dict() for a in self.actions],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], label: str = "<plan>") -> ActionPlan:
        for key in ("plan_id", "base_library_version", "actions"):
            if key not in data:
                raise ParseError(label, key, "missing")
        th = Thresholds(**data.get("thresholds", {}))
        return cls(
            plan_id=str(data["plan_id"]),
            base_library_version=int(data["base_library_version"]),
            actions=tuple(Action.from_mapping(a) for a in data["actions"]),
            thresholds=th,
        )


def load_plan(path: str | Path) -> ActionPlan:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(str(path), "<document>", str(exc)) from None
    return ActionPlan.from_mapping(data, str(path))


def _survivor(lib: Library, ids: Sequence[str]) -> str:
    return min(ids, key=lambda i: (-len(lib.skills[i].description), i))


def plan(lib: Library, cards: Scorecards, thresholds: Thresholds = Thresholds()) -> ActionPlan:
    """Turn scorecards into an ordered list of pending actions."""
    if cards.version != lib.version:
        raise StaleVersionError(
            f"scorecards are for version {cards.version}, library is version {lib.version}"
        )
    by_id = {c.skill_id: c for c in cards.skills}
    if set(by_id) != set(lib.skills):
        raise StaleVersionError("scorecards do not cover the library's skills")

    reasons: dict[tuple[str, tuple[str, ...]], list[str]] = {}
    payloads: dict[tuple[str, tuple[str, ...]], dict[str, Any]] = {}

    def add(kind: str, targets: tuple[str, ...], why: str, payload: dict | None = None) -> None:
        key = (kind, targets)
        reasons.setdefault(key, []).append(why)
        if payload is not None:
            payloads[key] = payload

    # merge candidates are grouped into connected components, one merge each
    parent = {sid: sid for sid in lib.ids}

    def root(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    merge_notes: dict[tuple[str, str], str] = {}
    for pc in cards.pairs:
        p = pc.pair
        if pc.competition_risk >= thresholds.competition:
            for sid in (p.a_id, p.b_id):
                other = p.b_id if sid == p.a_id else p.a_id
                add("rewrite", (sid,),
                    f"competition_risk={pc.competition_risk:.3f} with {other} (similarity {p.similarity:.3f})")
        if pc.merge_candidate >= thresholds.merge:
            merge_notes[(p.a_id, p.b_id)] = f"merge_candidate={pc.merge_candidate:.3f} ({p.a_id}, {p.b_id})"
            ra, rb = root(p.a_id), root(p.b_id)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups: dict[str, list[str]] = {}
    for a_id, b_id in merge_notes:
        for sid in (a_id, b_id):
            members = groups.setdefault(root(sid), [])
            if sid not in members:
                members.append(sid)
    for members in groups.values():
        targets = tuple(sorted(members))
        survivor = _survivor(lib, targets)
        for (a_id, b_id), note in merge_notes.items():
            if a_id in targets:
                add("merge", targets, note, {"survivor": survivor})

    structural = set()
    for sc in cards.skills:
        if sc.blackhole_risk >= thresholds.blackhole:
            kind = "remove" if sc.abstraction >= thresholds.remove_abstraction else "narrow"
            add(kind, (sc.skill_id,),
                f"blackhole_risk={sc.blackhole_risk:.3f} (abstraction {sc.abstraction:.3f})")
            structural.add(sc.skill_id)
    for sc in cards.skills:
        if sc.anchor_strength < thresholds.anchor and sc.skill_id not in structural:
            add("rewrite", (sc.skill_id,), f"anchor_strength={sc.anchor_strength:.3f} (prompt anchoring)")

    def priority(targets: tuple[str, ...]) -> float:
        return max(by_id[t].rewrite_priority for t in targets)

    keys = sorted(reasons, key=lambda k: (-priority(k[1]), k[1], ACTION_KINDS.index(k[0])))
    actions = tuple(
        Action(
            action_id=f"a{i + 1:03d}",
            kind=kind,
            target_ids=targets,
            rationale="; ".join(reasons[(kind, targets)]),
            payload=payloads.get((kind, targets)),
            priority=priority(targets),
        )
        for i, (kind, targets) in enumerate(keys)
    )
    body = json.dumps([a.to_dict() for a in actions], sort_keys=True) + str(lib.version)
    plan_id = "plan-" + hashlib.sha256(body.encode()).hexdigest()[:12]
    return ActionPlan(plan_id, lib.version, actions, thresholds)


def _edit_skill(skill: Skill, payload: Mapping[str, Any]) -> Skill:
    changes: dict[str, Any] = {"description": str(payload["description"]).strip()}
    if payload.get("anchors") is not None:
        changes["anchors"] = Anchors.from_mapping(payload["anchors"])
    if payload.get("name"):
        changes["name"] = str(payload["name"])
    return replace(skill, **changes)


def _has_text(payload: Mapping[str, Any] | None) -> bool:
    return bool(payload) and bool(str(payload.get("description") or "").strip())


def _skill_cards(lib: Library, cfg: ScoreConfig) -> dict[str, Any]:
    geo = LibraryGeometry(lib)
    pairs = score_pairs(lib, cfg, geometry=geo)
    return {c.skill_id: c for c in score_skills(lib, pairs, cfg, geo)}


def approve(
    plan_: ActionPlan,
    action_id: str,
    lib: Library,
    payload: Mapping[str, Any] | None = None,
    cfg: ScoreConfig = ScoreConfig(),
) -> ActionPlan:
    """Mark one action approved after validating its payload's effect.

    A rewrite must strictly lower the target's rewrite priority or strictly
    raise its anchor strength; a narrow must strictly reduce family breadth.
    """
    action = plan_.action(action_id)
    if action.status == "applied":
        raise PreconditionError(f"action {action_id} was already applied")
    if payload is not None:
        action = replace(action, payload=dict(payload))
    if action.kind in _NEEDS_TEXT:
        if not _has_text(action.payload):
            raise PreconditionError(f"action {action_id} ({action.kind}) needs a payload with a description")
        (target,) = action.target_ids
        if target not in lib.skills:
            raise PreconditionError(f"action {action_id} targets unknown skill {target!r}")
        before = _skill_cards(lib, cfg)[target]
        edited = replace(lib, skills={**lib.skills, target: _edit_skill(lib.skills[target], action.payload)})
        after = _skill_cards(edited, cfg)[target]
        if action.kind == "narrow":
            if not after.family_breadth < before.family_breadth:
                raise PreconditionError(
                    f"action {action_id}: narrow payload does not reduce family_breadth "
                    f"({before.family_breadth:.3f} -> {after.family_breadth:.3f})"
                )
        elif not (after.rewrite_priority < before.rewrite_priority
                  or after.anchor_strength > before.anchor_strength):
            raise PreconditionError(
                f"action {action_id}: rewrite payload lowers neither rewrite_priority "
                f"({before.rewrite_priority:.3f} -> {after.rewrite_priority:.3f}) nor raises anchor_strength"
            )
    return plan_.with_action(replace(action, status="approved"))


def validate_payloads(plan_: ActionPlan, lib: Library, cfg: ScoreConfig = ScoreConfig()) -> None:
    """Re-check every approved rewrite/narrow payload, e.g. after a reviewer hand-edits a plan file."""
    for a in plan_.actions:
        if a.status == "approved" and a.kind in _NEEDS_TEXT and all(t in lib.skills for t in a.target_ids):
            approve(replace(plan_, actions=(replace(a, status="pending"),)), a.action_id, lib, None, cfg)


def reject(plan_: ActionPlan, action_id: str) -> ActionPlan:
    action = plan_.action(action_id)
    return plan_.with_action(replace(action, status="rejected"))


def approve_all(
    plan_: ActionPlan, lib: Library, payloads: Mapping[str, Mapping[str, Any]] | None = None
) -> ActionPlan:
    """Approve every action; ``payloads`` maps target skill id to rewrite/narrow payload."""
    payloads = payloads or {}
    out = plan_
    for a in plan_.actions:
        p = payloads.get(a.target_ids[0]) if a.kind in _NEEDS_TEXT else None
        out = approve(out, a.action_id, lib, p)
    return out


@dataclass(frozen=True)
class AuditDiff:
    before: LibraryScorecard
    after: LibraryScorecard
    structural: SnapshotDiff
    deltas: Mapping[str, float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "before": self.before.as_dict(),
            "after": self.after.as_dict(),
            "deltas": dict(self.deltas),
            "structural": self.structural.to_dict(),
        }

    def summary(self) -> str:
        lines = [f"{'metric':<28}{'before':>12}{'after':>12}{'delta':>12}"]
        for k, d in self.deltas.items():
            lines.append(f"{k:<28}{getattr(self.before, k):>12.6f}{getattr(self.after, k):>12.6f}{d:>+12.6f}")
        return "\n".join(lines) + "\n"


def audit(
    before: Library, after: Library, routing_fit: RoutingLawFit | None = None,
    cfg: ScoreConfig = ScoreConfig(),
) -> AuditDiff:
    b = score(before, cfg, routing_fit).library
    a = score(after, cfg, routing_fit).library
    return AuditDiff(b, a, snapshot_diff(before, after), a.minus(b))


def _merge(lib: Library, targets: Sequence[str], survivor: str) -> Library:
    keep = lib.skills[survivor]
    examples = list(keep.examples)
    tags, anchors = set(keep.tags), keep.anchors
    for t in targets:
        if t == survivor:
            continue
        s = lib.skills[t]
        examples.extend(e for e in s.examples if e not in examples)
        tags |= s.tags
        anchors = anchors.union(s.anchors)
    merged = replace(keep, examples=tuple(examples), tags=frozenset(tags), anchors=anchors)
    dropped = set(targets) - {survivor}
    edges, seen = [], set()
    for e in lib.edges:
        up = survivor if e.upstream in dropped else e.upstream
        down = survivor if e.downstream in dropped else e.downstream
        if up == down:
            continue
        edge = PipelineEdge(up, down, e.dependency, e.weight)
        if edge.key() not in seen:
            seen.add(edge.key())
            edges.append(edge)
    skills = {k: v for k, v in lib.skills.items() if k not in dropped}
    skills[survivor] = merged
    profiles = {
        k: frozenset(survivor if i in dropped else i for i in v) for k, v in lib.domain_profiles.items()
    }
    return replace(lib, skills=skills, edges=tuple(edges), domain_profiles=profiles)


def apply(
    lib: Library,
    plan_: ActionPlan,
    routing_fit: RoutingLawFit | None = None,
    cfg: ScoreConfig = ScoreConfig(),
) -> tuple[Library, AuditDiff]:
    if plan_.base_library_version != lib.version:
        raise StaleVersionError(
            f"plan {plan_.plan_id} targets version {plan_.base_library_version}, "
            f"library is at version {lib.version}"
        )
    offenders = [f"{a.action_id} ({a.status})" for a in plan_.actions if a.status != "approved"]
    if offenders:
        raise PreconditionError("actions not approved: " + ", ".join(offenders))
    for a in plan_.actions:
        dangling = [t for t in a.target_ids if t not in lib.skills]
        if dangling:
            raise PreconditionError(f"action {a.action_id} targets missing skills: {dangling}")
        if a.kind in _NEEDS_TEXT and not _has_text(a.payload):
            raise PreconditionError(f"action {a.action_id} ({a.kind}) has no payload text")
    # targets absorbed by an earlier merge resolve to its survivor; removed ones are skipped
    absorbed: dict[str, str] = {}

    def resolve(sid: str) -> str:
        while sid in absorbed:
            sid = absorbed[sid]
        return sid

    current = lib
    for a in plan_.actions:
        targets = tuple(dict.fromkeys(resolve(t) for t in a.target_ids if resolve(t) in current.skills))
        if a.kind in _NEEDS_TEXT:
            if targets:
                (t,) = targets
                current = replace(current, skills={**current.skills, t: _edit_skill(current.skills[t], a.payload)})
        elif a.kind == "merge":
            survivor = resolve(a.payload["survivor"])
            if survivor not in targets:
                survivor = _survivor(current, targets) if targets else survivor
            if len(targets) >= 2:
                current = _merge(current, targets, survivor)
                absorbed.update({t: survivor for t in targets if t != survivor})
        elif a.kind == "remove":
            current = current.without(targets)
        # review_overlap and candidate verdicts carry no library edit
    new = replace(current, version=lib.version + 1)
    return new, audit(lib, new, routing_fit, cfg)


@dataclass(frozen=True)
class CandidateReport:
    decision: str
    candidate_id: str
    nearest_id: str | None
    nearest_similarity: float
    same_family_hits: int
    anchor_strength: float
    abstraction: float
    blackhole_risk: float
    stability_delta: float

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def evaluate_candidate(
    lib: Library,
    candidate: Skill,
    thresholds: Thresholds = Thresholds(),
    cfg: ScoreConfig = ScoreConfig(),
) -> CandidateReport:
    """Gate a proposed skill against the current library.

    The stability delta compares the predicted routing stability with and
    without the candidate, both evaluated at the current library size so the
    delta isolates the change in local competition.
    """
    if candidate.id in lib.skills:
        raise ConflictError(f"candidate id {candidate.id!r} already exists")
    grown = replace(lib, skills={**lib.skills, candidate.id: candidate})
    geo = LibraryGeometry(grown)
    pairs = score_pairs(grown, cfg, geometry=geo)
    cards = {c.skill_id: c for c in score_skills(grown, pairs, cfg, geo)}
    mine = cards[candidate.id]
    nearest_id, nearest = None, 0.0
    for sid in lib.ids:
        s = geo.similarity(candidate.id, sid)
        if s > nearest:
            nearest_id, nearest = sid, s
    hits = sum(
        1 for sid in lib.ids
        if lib.skills[sid].family == candidate.family and geo.similarity(candidate.id, sid) >= cfg.breadth_threshold
    )
    size = max(len(lib), 1)
    before = score(lib, cfg).library.predicted_routing_stability
    after = score_library(grown, list(cards.values()), pairs, None, cfg, size=size).predicted_routing_stability
    delta = after - before
    lo, hi = cfg.band
    if nearest >= thresholds.duplicate or mine.blackhole_risk >= thresholds.blackhole:
        decision = "reject"
    elif lo <= nearest < hi or delta < 0:
        decision = "add_with_review"
    else:
        decision = "approve_candidate"
    return CandidateReport(
        decision, candidate.id, nearest_id, nearest, hits,
        mine.anchor_strength, mine.abstraction, mine.blackhole_risk, delta,
    )


@dataclass(frozen=True)
class FactorialCell:
    first_on: bool
    second_on: bool
    accuracy: float
    capture_rate: float
    danger_zone_mass: float
    blackhole_exposure: float


@dataclass(frozen=True)
class FactorialTable:
    first: str
    second: str
    cells: tuple[FactorialCell, ...]
    trials: int
    seed: int

    def cell(self, first_on: bool, second_on: bool) -> FactorialCell:
        for c in self.cells:
            if c.first_on == first_on and c.second_on == second_on:
                return c
        raise KeyError((first_on, second_on))

    def monotone(self) -> bool:
        """Both-on strictly best, both-off strictly worst."""
        off, on = self.cell(False, False).accuracy, self.cell(True, True).accuracy
        singles = [self.cell(True, False).accuracy, self.cell(False, True).accuracy]
        return all(off < s < on for s in singles)

    def to_dict(self) -> dict[str, Any]:
        return {
            "first": self.first,
            "second": self.second,
            "trials": self.trials,
            "seed": self.seed,
            "cells": [c.__dict__ for c in self.cells],
        }

    def render(self) -> str:
        head = f"{'':<18}{self.second + ' off':>18}{self.second + ' on':>18}"
        rows = [head]
        for f in (False, True):
            label = f"{self.first} {'on' if f else 'off'}"
            vals = [self.cell(f, s).accuracy for s in (False, True)]
            rows.append(f"{label:<18}{vals[0]:>18.4f}{vals[1]:>18.4f}")
        return "\n".join(rows) + "\n"


def factorial_audit(
    lib: Library,
    approved: ActionPlan,
    sim_cfg: Any,
    trials: int = 20000,
    first: Sequence[str] = ("rewrite",),
    second: Sequence[str] = ("remove", "narrow", "merge"),
    cfg: ScoreConfig = ScoreConfig(),
) -> FactorialTable:
    """2x2 toggle study: apply each subset of two action groups and route on the simulator.

    Queries are the skills that survive in every variant; all variants share
    the same random numbers.
    """
    from .sim import simulate_library_routing

    variants = {}
    for f in (False, True):
        for s in (False, True):
            kinds = (set(first) if f else set()) | (set(second) if s else set())
            variants[(f, s)], _ = apply(lib, approved.subset(kinds), None, cfg)
    universe = sorted(lib.skills)
    queries = sorted(set.intersection(*(set(v.skills) for v in variants.values())))
    if not queries:
        raise PreconditionError("no skill survives in every variant")
    cells = []
    for (f, s), v in sorted(variants.items()):
        res = simulate_library_routing(sim_cfg, v, queries, universe, trials)
        lc = score(v, cfg, RoutingLawFit(1.0, 0.0, 1.0, {})).library
        cells.append(FactorialCell(f, s, res.accuracy, res.capture_rate,
                                   lc.danger_zone_mass, lc.blackhole_exposure))
    return FactorialTable("+".join(first), "+".join(second), tuple(cells), trials, sim_cfg.seed)
