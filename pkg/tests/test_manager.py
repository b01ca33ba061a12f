from __future__ import annotations

import json
from dataclasses import replace

import pytest
from hypothesis import given
from strategies import libraries

from skillscale.errors import ConflictError, ParseError, PreconditionError, StaleVersionError
from skillscale.fixtures import CATCH_ALL, DANGER_PAIR, REWRITE_PAYLOADS, band_candidate
from skillscale.laws import RoutingLawFit
from skillscale.manager import (
    Action,
    ActionPlan,
    apply,
    approve,
    approve_all,
    evaluate_candidate,
    factorial_audit,
    plan,
    reject,
    validate_payloads,
)
from skillscale.schema import PipelineEdge, ingest, skill_from_mapping
from skillscale.scorecards import score
from skillscale.sim import SimConfig

FLAT = RoutingLawFit(1.0, 0.0, 1.0, {})


def _clean_library():
    return ingest([
        {"id": "a", "name": "a", "description": "compress images losslessly", "family": "x",
         "anchors": {"verbs": ["compress", "encode"], "objects": ["image", "png"], "constraints": ["lossless"]}},
        {"id": "b", "name": "b", "description": "translate subtitles into spanish", "family": "y",
         "anchors": {"verbs": ["translate"], "objects": ["subtitle", "spanish"], "constraints": ["srt only"]}},
    ])


def _full_plan(lib):
    return approve_all(plan(lib, score(lib)), lib, REWRITE_PAYLOADS)


def test_clean_library_gives_empty_plan():
    lib = _clean_library()
    assert plan(lib, score(lib)).actions == ()


def test_fixture_plan_targets_catch_all_and_danger_pair(intervention_lib):
    p = plan(intervention_lib, score(intervention_lib))
    kinds = {(a.kind, a.target_ids) for a in p.actions}
    assert ("remove", (CATCH_ALL,)) in kinds
    for sid in DANGER_PAIR:
        assert ("rewrite", (sid,)) in kinds
    assert all(a.status == "pending" and a.rationale for a in p.actions)
    priorities = [a.priority for a in p.actions]
    assert priorities == sorted(priorities, reverse=True)
    assert json.loads(p.dumps())["thresholds"]["competition"] == 0.8


def test_plan_is_deterministic_and_round_trips(intervention_lib):
    a = plan(intervention_lib, score(intervention_lib))
    b = plan(intervention_lib, score(intervention_lib))
    assert a == b
    assert ActionPlan.from_mapping(json.loads(a.dumps())) == a


def test_stale_scorecards_are_rejected(intervention_lib):
    cards = score(intervention_lib)
    with pytest.raises(StaleVersionError):
        plan(replace(intervention_lib, version=intervention_lib.version + 1), cards)


def test_action_invariants():
    with pytest.raises(ParseError):
        Action("a1", "merge", ("x", "y"), "r", payload=None)
    with pytest.raises(ParseError):
        Action("a1", "merge", ("x",), "r", payload={"survivor": "x"})
    with pytest.raises(ParseError, match="rationale"):
        Action("a1", "rewrite", ("x",), "")


def test_approve_requires_effective_payload(intervention_lib):
    p = plan(intervention_lib, score(intervention_lib))
    rw = next(a for a in p.actions if a.kind == "rewrite" and a.target_ids == (DANGER_PAIR[0],))
    with pytest.raises(PreconditionError, match="needs a payload"):
        approve(p, rw.action_id, intervention_lib)
    same = {"description": intervention_lib.skills[DANGER_PAIR[0]].description}
    with pytest.raises(PreconditionError, match="lowers neither"):
        approve(p, rw.action_id, intervention_lib, same)
    ok = approve(p, rw.action_id, intervention_lib, REWRITE_PAYLOADS[DANGER_PAIR[0]])
    assert ok.action(rw.action_id).status == "approved"


def test_apply_refuses_unapproved_actions(intervention_lib):
    p = plan(intervention_lib, score(intervention_lib))
    with pytest.raises(PreconditionError, match="actions not approved: a001 \\(pending\\)"):
        apply(intervention_lib, p)
    full = _full_plan(intervention_lib)
    rejected = reject(full, "a001")
    with pytest.raises(PreconditionError, match="a001 \\(rejected\\)"):
        apply(intervention_lib, rejected)


def test_apply_rejects_dangling_targets(intervention_lib):
    p = ActionPlan("p", intervention_lib.version,
                   (Action("a001", "remove", ("ghost",), "r", status="approved"),))
    with pytest.raises(PreconditionError, match="missing skills"):
        apply(intervention_lib, p)


def test_empty_plan_bumps_version_with_zero_deltas(intervention_lib):
    new, diff = apply(intervention_lib, ActionPlan("p", intervention_lib.version, ()), FLAT)
    assert new.version == intervention_lib.version + 1
    assert new.skills == intervention_lib.skills
    assert all(d == 0 for d in diff.deltas.values())


def test_version_linearity(intervention_lib):
    full = _full_plan(intervention_lib)
    new, _ = apply(intervention_lib, full)
    assert new.version == intervention_lib.version + 1
    with pytest.raises(StaleVersionError):
        apply(new, full)


def test_full_plan_improves_fixture(intervention_lib):
    new, diff = apply(intervention_lib, _full_plan(intervention_lib))
    assert CATCH_ALL not in new.skills
    assert diff.after.danger_zone_mass < diff.before.danger_zone_mass
    assert diff.after.blackhole_exposure < diff.before.blackhole_exposure
    assert diff.after.predicted_routing_stability > diff.before.predicted_routing_stability
    for k, d in diff.deltas.items():
        assert d == getattr(diff.after, k) - getattr(diff.before, k)
    assert "danger_zone_mass" in diff.summary()


def test_rewrite_only_lowers_danger_mass(intervention_lib):
    new, diff = apply(intervention_lib, _full_plan(intervention_lib).subset({"rewrite"}), FLAT)
    assert diff.after.danger_zone_mass < diff.before.danger_zone_mass


def test_hand_edited_plan_payloads_are_rechecked(intervention_lib):
    full = _full_plan(intervention_lib)
    rw = next(a for a in full.actions if a.kind == "rewrite")
    bad = full.with_action(replace(rw, payload={"description": intervention_lib.skills[rw.target_ids[0]].description}))
    with pytest.raises(PreconditionError):
        validate_payloads(bad, intervention_lib)


def test_merge_absorbs_and_rewires():
    lib = ingest([
        {"id": "a", "name": "a", "description": "export invoices to csv ledger quickly",
         "tags": ["t1"], "examples": ["e1"]},
        {"id": "b", "name": "b", "description": "export invoices to csv ledger", "tags": ["t2"],
         "examples": ["e2"]},
        {"id": "c", "name": "c", "description": "email the ledger"},
    ])
    lib = replace(lib, edges=(PipelineEdge("b", "c"),))
    p = plan(lib, score(lib))
    merge = next(a for a in p.actions if a.kind == "merge")
    assert merge.payload["survivor"] == "a"
    only = ActionPlan("p", lib.version, (replace(merge, status="approved"),))
    new, _ = apply(lib, only, FLAT)
    assert "b" not in new.skills
    assert new.skills["a"].tags == {"t1", "t2"}
    assert new.skills["a"].examples == ("e1", "e2")
    assert [(e.upstream, e.downstream) for e in new.edges] == [("a", "c")]


def test_candidate_decisions(intervention_lib):
    dup = skill_from_mapping({**intervention_lib.skills["chart-bar"].__dict__, "id": "dup",
                              "anchors": {"verbs": ["draw"]}, "tags": [], "examples": []})
    assert evaluate_candidate(intervention_lib, dup).decision == "reject"
    fresh = skill_from_mapping({
        "id": "weather", "name": "forecast rain", "family": "weather",
        "description": "Forecast precipitation probability for a zip code using radar",
        "anchors": {"verbs": ["forecast", "estimate"], "objects": ["precipitation", "radar"],
                    "constraints": ["us zip codes only"]},
    })
    assert evaluate_candidate(intervention_lib, fresh).decision == "approve_candidate"
    band = skill_from_mapping(band_candidate(intervention_lib, "chart-line"))
    rep = evaluate_candidate(intervention_lib, band)
    assert 0.55 <= rep.nearest_similarity < 0.75
    assert rep.decision == "add_with_review"
    with pytest.raises(ConflictError):
        evaluate_candidate(intervention_lib, replace(fresh, id="chart-bar"))


def test_factorial_table_is_monotone(intervention_lib):
    table = factorial_audit(intervention_lib, _full_plan(intervention_lib), SimConfig(seed=11), trials=4000)
    assert table.monotone()
    assert table.cell(True, True).blackhole_exposure == 0.0
    assert "rewrite on" in table.render()


@pytest.mark.parametrize("gone", ["chart-bar", "mail-send", "db-query", "files-rename"])
def test_removing_anchored_member_keeps_plan_targets_valid(intervention_lib, gone):
    lib = intervention_lib.without([gone])
    p = plan(lib, score(lib, routing_fit=FLAT))
    assert all(t in lib.skills for a in p.actions for t in a.target_ids)


@given(libraries())
def test_plan_determinism_and_structural_apply(lib):
    cards = score(lib, routing_fit=FLAT)
    first = plan(lib, cards)
    assert first == plan(lib, cards)
    structural = first.subset({"remove", "merge"})
    approved = ActionPlan(structural.plan_id, lib.version,
                          tuple(replace(a, status="approved") for a in structural.actions))
    new, diff = apply(lib, approved, FLAT)
    assert new.version == lib.version + 1
    assert set(new.skills) <= set(lib.skills)


def test_duplicate_cluster_becomes_one_merge():
    lib = ingest([
        {"id": f"s{i}", "name": f"s{i}", "description": "alpha beta gamma"} for i in range(3)
    ])
    merges = [a for a in plan(lib, score(lib, routing_fit=FLAT)).actions if a.kind == "merge"]
    assert len(merges) == 1 and merges[0].target_ids == ("s0", "s1", "s2")
    approved = ActionPlan("p", lib.version, (replace(merges[0], status="approved"),))
    new, _ = apply(lib, approved, FLAT)
    assert list(new.skills) == ["s0"]
