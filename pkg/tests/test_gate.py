from __future__ import annotations

import os
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from skillscale.errors import ParseError, PreconditionError, WorkspaceError
from skillscale.gate import (
    ClosureSpec,
    GateConfig,
    Requirement,
    check_closure,
    gate,
    gate_detailed,
    gate_ids_text,
    load_closure_spec,
    scan_workspace,
    task_cap,
)
from skillscale.schema import ingest

_caps = st.tuples(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30)).map(sorted)


def _check_caps(lib, ids, cfg):
    assert len(ids) <= min(cfg.global_cap, cfg.per_task_cap)
    assert len(ids) == len(set(ids))
    per_domain = Counter(lib.domain_of(i) for i in ids)
    assert all(v <= cfg.per_domain_cap for v in per_domain.values())


def test_default_caps_on_full_fixture(synthetic_lib):
    cfg = GateConfig()
    for task in ("forecast finance ledger", "monitor devops security logs", "render media"):
        ids = gate(synthetic_lib, task, cfg)
        assert ids
        _check_caps(synthetic_lib, ids, cfg)


@given(_caps, st.sampled_from(["finance health legal", "extract convert travel", "audit energy"]))
def test_caps_hold_for_any_configuration(synthetic_lib, caps, task):
    dom, per_task, glob = caps
    cfg = GateConfig(global_cap=glob, per_task_cap=per_task, per_domain_cap=dom)
    _check_caps(synthetic_lib, gate(synthetic_lib, task, cfg), cfg)


def test_exact_name_match_ranks_first(intervention_lib):
    cfg = GateConfig(global_cap=10, per_task_cap=5, per_domain_cap=2)
    ids = gate(intervention_lib, "heat map", cfg)
    assert ids[0] == "chart-map"


def test_tie_breaks_on_id():
    lib = ingest([
        {"id": "b-skill", "name": "zip", "description": "zip"},
        {"id": "a-skill", "name": "zip", "description": "zip"},
    ])
    assert gate(lib, "zip", GateConfig(10, 5, 2)) == ["a-skill", "b-skill"]


def test_local_tasks_get_half_the_cap():
    cfg = GateConfig()
    assert task_cap("rename a local file", cfg) == 40
    assert task_cap("draw a chart", cfg) == 80


def test_gold_skill_survives_when_named(intervention_lib):
    assert "db-query" in gate(intervention_lib, "run a sql query on the warehouse", GateConfig(10, 5, 2))


def test_gate_is_pure_and_rejects_empty_task(intervention_lib):
    assert gate(intervention_lib, "send email", GateConfig()) == gate(intervention_lib, "send email", GateConfig())
    with pytest.raises(PreconditionError):
        gate(intervention_lib, "   ", GateConfig())
    assert gate(ingest([]), "anything", GateConfig()) == []


def test_unmatched_skills_are_not_exposed(intervention_lib):
    res = gate_detailed(intervention_lib, "send email", GateConfig())
    assert all(v > 0 for v in res.scores.values())
    assert gate_ids_text(res.ids).endswith("\n")


def test_invalid_cap_order():
    with pytest.raises(PreconditionError):
        GateConfig(global_cap=10, per_task_cap=20, per_domain_cap=5)


SPEC = ClosureSpec("t1", (Requirement("out/*.csv"), Requirement("report.md"), Requirement("log.txt", False)))


def test_closure_complete():
    res = check_closure(SPEC, {"out/a.csv": 10, "report.md": 5, "log.txt": 0})
    assert res.complete and res.missing == () and res.empty == ()


def test_closure_missing():
    res = check_closure(SPEC, {"out/a.csv": 10, "log.txt": 0})
    assert not res.complete and res.missing == ("report.md",)


def test_closure_zero_byte():
    res = check_closure(SPEC, {"out/a.csv": 0, "report.md": 1, "log.txt": 0})
    assert not res.complete and res.empty == ("out/*.csv",)


def test_closure_spec_needs_requirements(tmp_path):
    with pytest.raises(ParseError):
        ClosureSpec.from_mapping({"task_id": "t", "required_artifacts": []})
    path = tmp_path / "spec.yaml"
    path.write_text("task_id: t\nrequired_artifacts:\n  - a.txt\n  - {pattern: b.txt, must_be_nonempty: false}\n")
    spec = load_closure_spec(path)
    assert spec.required_artifacts == (Requirement("a.txt"), Requirement("b.txt", False))


def test_scan_workspace(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "x.txt").write_text("abc")
    (tmp_path / "empty.txt").write_text("")
    assert scan_workspace(tmp_path) == {"sub/x.txt": 3, "empty.txt": 0}


def test_unreadable_workspace_is_distinct_error(tmp_path):
    with pytest.raises(WorkspaceError):
        scan_workspace(tmp_path / "nope")
    if os.geteuid() != 0:
        locked = tmp_path / "locked"
        locked.mkdir()
        locked.chmod(0)
        try:
            with pytest.raises(WorkspaceError):
                scan_workspace(locked)
        finally:
            locked.chmod(0o700)
