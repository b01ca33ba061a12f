"""Pair, skill and library scorecards that drive edit planning.

The metric names are fixed by the manager workflow; their numeric definitions
are artifact decisions and are listed in :data:`ARTIFACT_DEFINED`, which every
exported report carries in its header.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .errors import PreconditionError
from .laws import RoutingLawFit
from .schema import Library, Skill
from .similarity import DANGER_BAND, LibraryGeometry, PairGeometry, overlap_risk, tokenize

GENERIC_VERBS = frozenset(
    {"handle", "manage", "process", "do", "perform", "assist", "support", "general"}
)

ARTIFACT_DEFINED = (
    "competition_risk: triangle kernel 0 at 0.45, 1 at 0.65, 0 at 0.85",
    "anchor_strength: min(1, (verbs + objects + 2 constraints) / 8)",
    "abstraction: 1 - anchor_strength + generic_verb_step per distinct generic verb, capped at 1",
    "family_breadth: share of other families whose closest member has similarity >= 0.4",
    "family_interference: mean over cross-family pairs of similarity where it exceeds 0.4, else 0",
    "pipeline_fragility: summed weight of tight edges divided by the number of edges",
)


@dataclass(frozen=True)
class ScoreConfig:
    band: tuple[float, float] = DANGER_BAND
    kernel: tuple[float, float, float] = (0.45, 0.65, 0.85)
    merge_threshold: float = 0.85
    breadth_threshold: float = 0.4
    anchor_norm: float = 8.0
    generic_verbs: frozenset[str] = GENERIC_VERBS
    generic_verb_step: float = 0.15

    def __post_init__(self) -> None:
        lo, peak, hi = self.kernel
        if not lo < peak < hi:
            raise PreconditionError("kernel must satisfy lo < peak < hi")
        if self.anchor_norm <= 0:
            raise PreconditionError("anchor_norm must be positive")


def competition_risk(sim: float, kernel: tuple[float, float, float] = (0.45, 0.65, 0.85)) -> float:
    lo, peak, hi = kernel
    if sim <= lo or sim >= hi:
        return 0.0
    if sim <= peak:
        return (sim - lo) / (peak - lo)
    return (hi - sim) / (hi - peak)


def anchor_strength(skill: Skill, cfg: ScoreConfig = ScoreConfig()) -> float:
    return min(1.0, skill.anchors.weighted_count() / cfg.anchor_norm)


def generic_verb_hits(skill: Skill, cfg: ScoreConfig = ScoreConfig()) -> int:
    words = set(tokenize(skill.name)) | set(tokenize(skill.description)) | set(skill.anchors.verbs)
    return len(words & cfg.generic_verbs)


def abstraction(skill: Skill, cfg: ScoreConfig = ScoreConfig()) -> float:
    base = 1.0 - anchor_strength(skill, cfg)
    if base == 0.0:
        return 0.0
    return min(1.0, base + cfg.generic_verb_step * generic_verb_hits(skill, cfg))


@dataclass(frozen=True)
class PairScorecard:
    pair: PairGeometry
    competition_risk: float
    merge_candidate: float
    weak_drag_risk: float
    same_family: bool

    def as_row(self) -> dict[str, Any]:
        row = self.pair.as_row()
        row.update(
            competition_risk=f"{self.competition_risk:.6f}",
            merge_candidate=f"{self.merge_candidate:.6f}",
            weak_drag_risk=f"{self.weak_drag_risk:.6f}",
            same_family=int(self.same_family),
        )
        return row


@dataclass(frozen=True)
class SkillScorecard:
    skill_id: str
    top_neighbor_sim: float
    family_conflict: float
    anchor_strength: float
    abstraction: float
    family_breadth: float
    blackhole_risk: float
    routing_fragility: float
    rewrite_priority: float

    def as_row(self) -> dict[str, Any]:
        return {
            k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in asdict(self).items()
        }


@dataclass(frozen=True)
class LibraryScorecard:
    competition_density: float
    danger_zone_mass: float
    anchor_weakness_mass: float
    blackhole_exposure: float
    family_interference: float
    pipeline_fragility: float
    predicted_routing_stability: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def minus(self, other: LibraryScorecard) -> dict[str, float]:
        return {f.name: getattr(self, f.name) - getattr(other, f.name) for f in fields(self)}


@dataclass(frozen=True)
class Scorecards:
    version: int
    pairs: tuple[PairScorecard, ...]
    skills: tuple[SkillScorecard, ...]
    library: LibraryScorecard
    config: ScoreConfig = field(default_factory=ScoreConfig)

    def skill(self, skill_id: str) -> SkillScorecard:
        for card in self.skills:
            if card.skill_id == skill_id:
                return card
        raise KeyError(skill_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "artifact_defined": list(ARTIFACT_DEFINED),
            "library": self.library.as_dict(),
            "skills": [c.as_row() for c in self.skills],
            "pairs": [c.as_row() for c in self.pairs],
        }


def score_pairs(
    lib: Library,
    cfg: ScoreConfig = ScoreConfig(),
    capability: Mapping[str, float] | None = None,
    geometry: LibraryGeometry | None = None,
) -> list[PairScorecard]:
    """Score every unordered pair once, in sorted-id order.

    ``capability`` maps skill id to an estimated solo accuracy; when both
    members of a same-family pair have one, weak-tie drag is ``1 - |gap|``,
    otherwise it falls back to the anchor overlap risk.
    """
    geo = geometry or LibraryGeometry(lib)
    capability = capability or {}
    out = []
    ids = geo.ids
    for i, a in enumerate(ids):
        sa = lib.skills[a]
        for b in ids[i + 1:]:
            sb = lib.skills[b]
            sim = geo.similarity(a, b)
            risk = overlap_risk(sa, sb)
            lo, hi = cfg.band
            pair = PairGeometry(a, b, sim, lo <= sim < hi, risk.jaccard, risk.asymmetry)
            same = sa.family == sb.family
            if not same:
                drag = 0.0
            elif a in capability and b in capability:
                drag = 1.0 - min(1.0, abs(capability[a] - capability[b]))
            else:
                drag = risk.value
            out.append(
                PairScorecard(
                    pair=pair,
                    competition_risk=competition_risk(sim, cfg.kernel),
                    merge_candidate=sim if sim >= cfg.merge_threshold else 0.0,
                    weak_drag_risk=drag,
                    same_family=same,
                )
            )
    return out


def family_breadth(
    lib: Library, skill_id: str, geometry: LibraryGeometry, cfg: ScoreConfig = ScoreConfig()
) -> float:
    own = lib.skills[skill_id].family
    others = [f for f in lib.families() if f != own]
    if not others:
        return 0.0
    row = geometry.sims[geometry.position[skill_id]]
    best: dict[str, float] = {}
    for j, sid in enumerate(geometry.ids):
        fam = lib.skills[sid].family
        if sid != skill_id and fam != own:
            best[fam] = max(best.get(fam, 0.0), float(row[j]))
    return sum(best.get(f, 0.0) >= cfg.breadth_threshold for f in others) / len(others)


def score_skills(
    lib: Library,
    pair_cards: Sequence[PairScorecard],
    cfg: ScoreConfig = ScoreConfig(),
    geometry: LibraryGeometry | None = None,
) -> list[SkillScorecard]:
    n = len(lib)
    expected = n * (n - 1) // 2
    if len(pair_cards) != expected:
        raise PreconditionError(f"pair scorecards cover {len(pair_cards)} pairs, library has {expected}")
    geo = geometry or LibraryGeometry(lib)
    fragility = dict.fromkeys(lib.skills, 0.0)
    top = dict.fromkeys(lib.skills, 0.0)
    conflict = dict.fromkeys(lib.skills, 0.0)
    for card in pair_cards:
        p = card.pair
        for sid in (p.a_id, p.b_id):
            fragility[sid] = max(fragility[sid], card.competition_risk)
            top[sid] = max(top[sid], p.similarity)
            if card.same_family:
                conflict[sid] = max(conflict[sid], p.similarity)
    out = []
    for sid in lib.ids:
        skill = lib.skills[sid]
        anchor = anchor_strength(skill, cfg)
        abstr = abstraction(skill, cfg)
        breadth = family_breadth(lib, sid, geo, cfg)
        risk = abstr * (1.0 - anchor) * breadth
        out.append(
            SkillScorecard(
                skill_id=sid,
                top_neighbor_sim=top[sid],
                family_conflict=conflict[sid],
                anchor_strength=anchor,
                abstraction=abstr,
                family_breadth=breadth,
                blackhole_risk=risk,
                routing_fragility=fragility[sid],
                rewrite_priority=max(fragility[sid], risk),
            )
        )
    return out


def stability(fit: RoutingLawFit, size: int) -> float:
    if size < 1:
        return 0.0
    return min(1.0, max(0.0, fit.a - fit.b * math.log(size)))


def score_library(
    lib: Library,
    skill_cards: Sequence[SkillScorecard],
    pair_cards: Sequence[PairScorecard],
    routing_fit: RoutingLawFit | None = None,
    cfg: ScoreConfig = ScoreConfig(),
    size: int | None = None,
) -> LibraryScorecard:
    """Library metrics; ``size`` overrides the library size used for stability."""
    from .sim import calibrated_routing_law

    npairs = len(pair_cards)
    density = sum(c.competition_risk for c in pair_cards) / npairs if npairs else 0.0
    danger = sum(c.pair.in_danger_band for c in pair_cards) / npairs if npairs else 0.0
    cross = [c.pair.similarity for c in pair_cards if not c.same_family]
    interference = (
        sum(s for s in cross if s > cfg.breadth_threshold) / len(cross) if cross else 0.0
    )
    weak = (
        sum(1.0 - c.anchor_strength for c in skill_cards) / len(skill_cards) if skill_cards else 0.0
    )
    exposure = max((c.blackhole_risk for c in skill_cards), default=0.0)
    edges = lib.edges
    fragility = (
        sum(e.weight for e in edges if e.dependency == "tight") / len(edges) if edges else 0.0
    )
    fit = routing_fit or calibrated_routing_law(density)
    return LibraryScorecard(
        competition_density=density,
        danger_zone_mass=danger,
        anchor_weakness_mass=weak,
        blackhole_exposure=exposure,
        family_interference=interference,
        pipeline_fragility=fragility,
        predicted_routing_stability=stability(fit, len(lib) if size is None else size),
    )


def score(
    lib: Library,
    cfg: ScoreConfig = ScoreConfig(),
    routing_fit: RoutingLawFit | None = None,
    capability: Mapping[str, float] | None = None,
) -> Scorecards:
    """All three scorecard tables for one library snapshot."""
    geo = LibraryGeometry(lib)
    pairs = score_pairs(lib, cfg, capability, geo)
    skills = score_skills(lib, pairs, cfg, geo)
    library = score_library(lib, skills, pairs, routing_fit, cfg)
    return Scorecards(lib.version, tuple(pairs), tuple(skills), library, cfg)


def _write_rows(rows: Iterable[Mapping[str, Any]], header: Sequence[str], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(header), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_scorecard_tables(cards: Scorecards, directory: str | Path, stem: str = "scorecard") -> list[Path]:
    """Export pair, skill and library CSV tables; returns the written paths."""
    directory = Path(directory)
    paths = [directory / f"{stem}_{kind}.csv" for kind in ("pairs", "skills", "library")]
    pair_header = [
        "a_id", "b_id", "similarity", "danger_band", "jaccard", "asymmetry",
        "competition_risk", "merge_candidate", "weak_drag_risk", "same_family",
    ]
    _write_rows((c.as_row() for c in cards.pairs), pair_header, paths[0])
    _write_rows((c.as_row() for c in cards.skills), [f.name for f in fields(SkillScorecard)], paths[1])
    lib_rows = [{"metric": k, "value": repr(v)} for k, v in cards.library.as_dict().items()]
    _write_rows(lib_rows, ["metric", "value"], paths[2])
    return paths


def similarity_histogram(cards: Scorecards, bins: int = 20) -> list[tuple[float, float, int]]:
    sims = np.array([c.pair.similarity for c in cards.pairs])
    counts, edges = np.histogram(sims, bins=bins, range=(0.0, 1.0))
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]
