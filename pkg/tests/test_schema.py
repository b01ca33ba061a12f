from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from skillscale.errors import ConflictError, ParseError, SkillScaleError
from skillscale.schema import (
    Anchors,
    Library,
    PipelineEdge,
    Skill,
    apply_diff,
    dedup,
    dump_library,
    ingest,
    load_library,
    snapshot_diff,
)


def test_two_documents_give_version_one_library():
    lib = ingest([{"name": "Send mail", "description": "send email"},
                  {"name": "Read mail", "description": "read email"}])
    assert len(lib) == 2
    assert lib.version == 1
    assert lib.ids == ["read-mail", "send-mail"]


def test_missing_description_names_the_field():
    with pytest.raises(ParseError) as err:
        ingest([{"name": "x"}], ["skills/x.yaml"])
    assert err.value.field == "description"
    assert "description" in str(err.value)
    assert "skills/x.yaml" in str(err.value)


def test_duplicate_id_is_a_conflict():
    with pytest.raises(ConflictError):
        ingest([{"id": "a", "name": "A", "description": "one"},
                {"id": "a", "name": "B", "description": "two"}])


def test_optional_fields_default_and_anchors_only_from_explicit_fields():
    lib = ingest(["name: Plot\ndescription: draw a chart of sales\n"])
    s = lib.skills["plot"]
    assert s.family == "unassigned"
    assert s.examples == () and s.tags == frozenset()
    assert s.anchors.is_empty()
    lib2 = ingest([{"name": "Plot", "description": "d", "anchors": {"verbs": [" Draw "]}}])
    assert lib2.skills["plot"].anchors.verbs == frozenset({"draw"})


def test_unknown_keys_are_preserved(tmp_path):
    lib = ingest([{"name": "A", "description": "alpha", "owner": "team-x"}])
    path = tmp_path / "lib.json"
    dump_library(lib, path)
    assert json.loads(path.read_text())["skills"][0]["owner"] == "team-x"
    assert load_library(path) == lib


def test_yaml_round_trip(tmp_path):
    lib = ingest([{"name": "A", "description": "alpha", "tags": ["x"], "anchors": {"constraints": ["only csv"]}}])
    path = tmp_path / "lib.yaml"
    dump_library(lib, path)
    assert load_library(path) == lib


def test_full_synthetic_fixture_ingests_without_dedup(synthetic_docs):
    assert len(ingest(synthetic_docs)) == 1412


def test_edges_must_resolve_and_not_self_loop():
    a = Skill("a", "A", "alpha")
    with pytest.raises(SkillScaleError):
        Library(1, {"a": a}, (PipelineEdge("a", "b"),))
    with pytest.raises(SkillScaleError):
        PipelineEdge("a", "a")
    with pytest.raises(SkillScaleError):
        PipelineEdge("a", "b", weight=1.5)


@given(st.lists(st.text(min_size=1, max_size=12).filter(str.strip), min_size=1, max_size=6, unique=True))
def test_ingest_is_byte_deterministic(names):
    docs = [{"id": f"s{i}", "name": n, "description": f"{n} description {i}"} for i, n in enumerate(names)]
    assert ingest(docs).dumps() == ingest(list(docs)).dumps()


def test_dedup_identical_descriptions_keep_one():
    lib = ingest([{"id": "b", "name": "B", "description": "parse invoices into rows"},
                  {"id": "a", "name": "A", "description": "parse invoices into rows"}])
    out, merged = dedup(lib, 0.95)
    assert out.ids == ["a"]
    assert merged == [("a", "b")]


def test_dedup_keeps_longer_description():
    lib = ingest([{"id": "a", "name": "A", "description": "parse invoices into rows"},
                  {"id": "b", "name": "B", "description": "parse invoices into rows rows"}])
    out, merged = dedup(lib, 0.9)
    assert out.ids == ["b"] and merged == [("b", "a")]


def test_dedup_disjoint_vocabulary_keeps_both():
    lib = ingest([{"name": "A", "description": "alpha beta"}, {"name": "B", "description": "gamma delta"}])
    out, merged = dedup(lib)
    assert len(out) == 2 and merged == []


def test_dedup_empty_library():
    out, merged = dedup(Library(1, {}))
    assert len(out) == 0 and merged == []


def test_dedup_rejects_bad_threshold():
    with pytest.raises(SkillScaleError):
        dedup(Library(1, {}), 0.0)


def test_planted_fixture_dedups_to_reference_size(synthetic_lib):
    out, merged = dedup(synthetic_lib, 0.95)
    assert len(out) == 1141
    assert len(merged) == 271
    assert all(m.startswith(s + "-dup") for s, m in merged)


_words = st.sampled_from(["alpha", "beta", "gamma", "delta", "omega", "sigma", "kappa", "zeta"])


@given(st.lists(st.lists(_words, min_size=1, max_size=5), min_size=1, max_size=8),
       st.floats(0.3, 1.0))
def test_dedup_is_idempotent_and_retained_pairs_are_below_threshold(texts, t):
    from skillscale.similarity import TfidfIndex

    lib = ingest([{"id": f"s{i}", "name": f"n{i}", "description": " ".join(w)} for i, w in enumerate(texts)])
    once, _ = dedup(lib, t)
    twice, merged = dedup(once, t)
    assert twice == once and merged == []
    sims = TfidfIndex([once.skills[i].description for i in once.ids]).similarity_matrix()
    n = len(once)
    assert all(sims[i, j] <= t for i in range(n) for j in range(n) if i != j)


def _lib():
    skills = {k: Skill(k, k.upper(), f"{k} text") for k in ("a", "b", "c")}
    return Library(1, skills, (PipelineEdge("a", "b", "tight", 0.8), PipelineEdge("b", "c")))


def test_identical_libraries_have_empty_diff():
    assert snapshot_diff(_lib(), _lib()).is_empty()


def test_one_edited_description_is_modified():
    before = _lib()
    after = Library(1, {**before.skills, "b": Skill("b", "B", "new")}, before.edges)
    d = snapshot_diff(before, after)
    assert set(d.modified) == {"b"} and not d.added and not d.removed


def test_removal_lists_skill_and_edges_and_replays():
    before = _lib()
    after = before.without(["b"])
    d = snapshot_diff(before, after)
    assert d.removed == ("b",)
    assert {(e.upstream, e.downstream) for e in d.edges_removed} == {("a", "b"), ("b", "c")}
    assert apply_diff(before, d) == after


_ops = st.lists(st.tuples(st.sampled_from(["add", "remove", "edit", "edge"]), st.integers(0, 5)), max_size=8)


@given(_ops)
def test_diff_round_trip_over_random_edit_sequences(ops):
    before = _lib()
    cur = before
    for op, k in ops:
        ids = cur.ids
        if op == "add":
            sid = f"n{k}"
            if sid not in cur.skills:
                cur = Library(cur.version, {**cur.skills, sid: Skill(sid, sid, f"t{k}")}, cur.edges)
        elif op == "remove" and ids:
            cur = cur.without([ids[k % len(ids)]])
        elif op == "edit" and ids:
            sid = ids[k % len(ids)]
            cur = Library(cur.version, {**cur.skills, sid: Skill(sid, sid, f"edited {k}",
                                                                 anchors=Anchors(frozenset({"v"})))}, cur.edges)
        elif op == "edge" and len(ids) >= 2:
            e = PipelineEdge(ids[0], ids[-1], "loose", k / 5)
            if e.key() not in {x.key() for x in cur.edges}:
                cur = Library(cur.version, cur.skills, (*cur.edges, e))
    after = Library(before.version + 1, cur.skills, cur.edges, cur.domain_profiles)
    assert apply_diff(before, snapshot_diff(before, after)) == after
