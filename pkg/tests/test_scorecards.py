from __future__ import annotations

import csv
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import tfidf_cosine
from strategies import libraries
from skillscale.errors import PreconditionError
from skillscale.fixtures import CATCH_ALL, DANGER_PAIR
from skillscale.laws import RoutingLawFit
from skillscale.schema import Anchors, Skill, ingest
from skillscale.scorecards import (
    abstraction,
    anchor_strength,
    competition_risk,
    score,
    score_pairs,
    score_skills,
    similarity_histogram,
    write_scorecard_tables,
)

FLAT = RoutingLawFit(1.0, 0.0, 1.0, {})
def test_kernel_examples():
    assert competition_risk(0.65) == 1.0
    assert competition_risk(0.95) == 0.0
    assert competition_risk(0.30) == 0.0
    assert competition_risk(0.55) == pytest.approx(0.5)
    assert competition_risk(0.75) == pytest.approx(0.5)


def test_near_duplicate_pair_is_merge_candidate():
    lib = ingest([
        {"id": "a", "name": "a", "description": "export invoices to csv ledger quickly", "family": "x"},
        {"id": "b", "name": "b", "description": "export invoices to csv ledger", "family": "y"},
        {"id": "c", "name": "c", "description": "unrelated words entirely here", "family": "z"},
    ])
    cards = {(c.pair.a_id, c.pair.b_id): c for c in score_pairs(lib)}
    ab = cards[("a", "b")]
    sim = tfidf_cosine([lib.skills[i].description for i in lib.ids], 0, 1)
    assert ab.pair.similarity == pytest.approx(sim)
    assert sim >= 0.85
    assert ab.merge_candidate == pytest.approx(sim) and ab.competition_risk == 0.0
    ac = cards[("a", "c")]
    assert (ac.competition_risk, ac.merge_candidate, ac.weak_drag_risk) == (0.0, 0.0, 0.0)


def test_fully_anchored_skill_has_no_blackhole_risk():
    s = Skill("s", "handle", "handle anything", anchors=Anchors(
        frozenset({"a", "b", "c", "d"}), frozenset({"e", "f", "g", "h"})))
    assert anchor_strength(s) == 1.0
    assert abstraction(s) == 0.0


def test_catch_all_fixture(intervention_lib):
    cards = score(intervention_lib)
    c = cards.skill(CATCH_ALL)
    assert c.blackhole_risk >= 0.5
    assert c.anchor_strength == 0.0 and c.family_breadth == 1.0
    a, b = DANGER_PAIR
    assert cards.skill(a).routing_fragility >= 0.8
    isolated = [s for s in cards.skills if s.top_neighbor_sim < 0.45]
    assert isolated and all(s.routing_fragility == 0.0 for s in isolated)


def test_single_skill_library_has_zero_pair_metrics():
    lib = ingest([{"id": "only", "name": "only", "description": "one skill"}])
    lc = score(lib, routing_fit=FLAT).library
    assert lc.competition_density == lc.danger_zone_mass == lc.family_interference == 0.0


def test_all_pairs_in_band_gives_unit_danger_mass():
    lib = ingest([
        {"id": "a", "name": "a", "description": "alpha beta gamma delta"},
        {"id": "b", "name": "b", "description": "alpha beta gamma omega"},
    ])
    cards = score(lib, routing_fit=FLAT)
    assert 0.55 <= cards.pairs[0].pair.similarity < 0.75
    assert cards.library.danger_zone_mass == 1.0


def test_removing_catch_all_lowers_exposure(intervention_lib):
    before = score(intervention_lib, routing_fit=FLAT).library
    after = score(intervention_lib.without([CATCH_ALL]), routing_fit=FLAT).library
    assert after.blackhole_exposure < before.blackhole_exposure


def test_pairs_must_cover_library(intervention_lib):
    pairs = score_pairs(intervention_lib)
    with pytest.raises(PreconditionError):
        score_skills(intervention_lib, pairs[:-1])


@given(libraries())
def test_scores_are_bounded(lib):
    cards = score(lib, routing_fit=FLAT)
    for p in cards.pairs:
        assert 0 <= p.competition_risk <= 1 and 0 <= p.merge_candidate <= 1
        if p.competition_risk == 1.0:
            assert p.pair.in_danger_band
    for s in cards.skills:
        for v in (s.top_neighbor_sim, s.family_conflict, s.anchor_strength, s.abstraction,
                  s.blackhole_risk, s.routing_fragility, s.rewrite_priority):
            assert 0.0 <= v <= 1.0
        if s.blackhole_risk > 0:
            assert s.abstraction > 0 and s.anchor_strength < 1
    assert all(v >= 0 for v in cards.library.as_dict().values())
    assert 0 <= cards.library.predicted_routing_stability <= 1


@given(libraries(min_size=3), st.data())
def test_removal_never_adds_competition_at_fixed_similarity(lib, data):
    # pair scores of retained skills are held at their pre-removal values
    gone = data.draw(st.sampled_from(lib.ids))
    before = score_pairs(lib)
    kept = [c for c in before if gone not in (c.pair.a_id, c.pair.b_id)]
    assert sum(c.competition_risk for c in kept) <= sum(c.competition_risk for c in before)
    assert sum(c.pair.in_danger_band for c in kept) <= sum(c.pair.in_danger_band for c in before)


def test_recomputed_danger_mass_can_rise_after_removal(intervention_lib):
    # removal shrinks the pair count and re-weights IDF, so the normalized mass is not monotone
    before = score(intervention_lib, routing_fit=FLAT).library
    after = score(intervention_lib.without([CATCH_ALL]), routing_fit=FLAT).library
    assert after.danger_zone_mass > before.danger_zone_mass


@given(libraries())
def test_conjunction(lib):
    anchored = replace(lib, skills={
        k: replace(v, anchors=Anchors(frozenset("abcdefgh"))) for k, v in lib.skills.items()
    })
    assert all(s.blackhole_risk == 0 for s in score(anchored, routing_fit=FLAT).skills)


@given(libraries())
def test_scoring_is_pure(lib):
    assert score(lib, routing_fit=FLAT).to_dict() == score(lib, routing_fit=FLAT).to_dict()


def test_tables_and_histogram(tmp_path, intervention_lib):
    cards = score(intervention_lib)
    paths = write_scorecard_tables(cards, tmp_path)
    with open(paths[0]) as fh:
        assert len(list(csv.DictReader(fh))) == len(cards.pairs)
    hist = similarity_histogram(cards)
    assert sum(c for _, _, c in hist) == len(cards.pairs)
