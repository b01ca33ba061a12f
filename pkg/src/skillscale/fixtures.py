"""Deterministic synthetic libraries used by tests, the CLI demo and acceptance checks."""

from __future__ import annotations

from dataclasses import replace
from typing import Any

import numpy as np

from .schema import Library, ingest
from .similarity import cosine_tfidf

DOMAINS = (
    "finance", "health", "legal", "retail", "travel", "media", "education",
    "security", "devops", "research", "marketing", "logistics", "gaming", "energy",
)
_VERBS = (
    "extract", "convert", "validate", "summarize", "schedule", "forecast", "classify",
    "reconcile", "render", "translate", "audit", "merge", "rank", "export", "monitor",
)
_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"

RAW_SIZE = 1412
UNIQUE_SIZE = 1141


def _word(rng: np.random.Generator) -> str:
    syllables = int(rng.integers(2, 4))
    return "".join(rng.choice(list(_CONSONANTS)) + rng.choice(list(_VOWELS)) for _ in range(syllables))


def _vocab(rng: np.random.Generator, size: int, taken: set[str]) -> list[str]:
    out: list[str] = []
    while len(out) < size:
        w = _word(rng)
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def synthetic_documents(
    seed: int = 0, unique: int = UNIQUE_SIZE, duplicates: int = RAW_SIZE - UNIQUE_SIZE
) -> list[dict[str, Any]]:
    """Skill documents spread over 14 domains with planted near-duplicates.

    Unique skills draw eight words from their domain vocabulary; each planted
    duplicate repeats an original's words in shuffled order, so its bag of
    words (and hence its TF-IDF cosine to the original) is identical.
    """
    rng = np.random.default_rng([seed, 1412])
    taken: set[str] = set(_VERBS)
    vocab = {d: _vocab(rng, 80, taken) for d in DOMAINS}
    docs = []
    for i in range(unique):
        domain = DOMAINS[i % len(DOMAINS)]
        verb = _VERBS[int(rng.integers(len(_VERBS)))]
        words = list(rng.choice(vocab[domain], size=8, replace=False))
        docs.append({
            "id": f"{domain}-{i:04d}",
            "name": f"{verb} {words[0]} {words[1]}",
            "description": " ".join([verb, *words, domain]),
            "family": domain,
            "tags": [domain],
            "anchors": {"verbs": [verb], "objects": words[:2]},
        })
    for j, k in enumerate(sorted(rng.choice(unique, size=duplicates, replace=False).tolist())):
        src = docs[k]
        tokens = src["description"].split()
        rng.shuffle(tokens)
        docs.append({**src, "id": f"{src['id']}-dup{j:03d}", "description": " ".join(tokens)})
    return docs


def synthetic_library(seed: int = 0) -> Library:
    docs = synthetic_documents(seed)
    lib = ingest(docs)
    profiles = {d: frozenset(s["id"] for s in docs if s["family"] == d) for d in DOMAINS}
    return replace(lib, domain_profiles=profiles)


CATCH_ALL = "general-assist"
DANGER_PAIR = ("files-backup", "files-sync")

_INTERVENTION = [
    ("files-sync", "sync folders", "files",
     "Synchronize two local folders by copying changed files from the source folder to the "
     "target folder and preserve timestamps", ["synchronize", "copy"], ["folder", "timestamp"]),
    ("files-backup", "backup folders", "files",
     "Back up a local folder by copying changed files from the source folder into a dated "
     "archive and preserve timestamps", ["back", "archive"], ["folder", "archive"]),
    ("files-rename", "rename photos", "files",
     "Rename photos sequentially with numbered suffixes", ["rename"], ["photo", "suffix"]),
    ("mail-send", "send email", "email",
     "Send email attachments through smtp relay", ["send"], ["email", "attachment"]),
    ("mail-triage", "triage inbox", "email",
     "Label inbox messages by sender and urgency", ["label"], ["inbox", "sender"]),
    ("mail-digest", "email digest", "email",
     "Summarize unread newsletters into a weekly digest note", ["summarize"], ["newsletter", "digest"]),
    ("chart-bar", "bar chart", "charts",
     "Draw bar charts from spreadsheet columns", ["draw"], ["chart", "column"]),
    ("chart-line", "line plot", "charts",
     "Plot a time series line graph with a moving average overlay", ["plot"], ["series", "graph"]),
    ("chart-map", "heat map", "charts",
     "Render a geographic heat map of store locations colored by revenue", ["render"], ["map", "revenue"]),
    ("db-query", "sql query", "database",
     "Run readonly sql queries against warehouse tables", ["query"], ["sql", "warehouse"]),
    ("db-migrate", "schema migration", "database",
     "Apply versioned schema migrations to a Postgres database with rollback scripts",
     ["migrate"], ["schema", "postgres"]),
    ("db-index", "index advisor", "database",
     "Suggest missing indexes from slow query logs and estimated costs", ["suggest"], ["index", "log"]),
]

_CATCH_ALL_TEXT = (
    "Handle any task: Rename photos sequentially with numbered suffixes; Send email attachments "
    "through smtp relay; Draw bar charts from spreadsheet columns; Run readonly sql queries "
    "against warehouse tables"
)

REWRITE_PAYLOADS = {
    "files-sync": {
        "description": "Mirror two directories bidirectionally over rsync with checksum verification",
        "anchors": {"verbs": ["mirror", "verify"], "objects": ["directory", "checksum"],
                    "constraints": ["only when both directories are reachable"]},
    },
    "files-backup": {
        "description": "Create compressed tarball snapshots for a retention schedule",
        "anchors": {"verbs": ["create", "compress"], "objects": ["tarball", "snapshot"],
                    "constraints": ["never overwrite an existing snapshot"]},
    },
}


def intervention_documents() -> list[dict[str, Any]]:
    docs = [
        {"id": i, "name": n, "family": f, "description": d, "anchors": {"verbs": v, "objects": o}}
        for i, n, f, d, v, o in _INTERVENTION
    ]
    docs.append({"id": CATCH_ALL, "name": "general assistant", "family": "general",
                 "description": _CATCH_ALL_TEXT})
    return docs


def intervention_library() -> Library:
    """One near-miss pair in the danger band plus one anchor-free catch-all touching every family."""
    return ingest(intervention_documents())


def band_candidate(lib: Library, target_id: str, goal: float = 0.65, filler: str = "") -> dict[str, Any]:
    """Build a candidate whose description lands near ``goal`` cosine to ``target_id``.

    Takes a growing prefix of the target's words plus distinctive filler words
    and keeps the prefix whose similarity (IDF over the library plus the
    candidate) is closest to ``goal``.
    """
    target = lib.skills[target_id].description.split()
    extra = (filler or "quarterly ledger variance dashboard").split()
    corpus = [lib.skills[i].description for i in lib.ids]
    best: tuple[float, str] | None = None
    for k in range(1, len(target) + 1):
        text = " ".join(target[:k] + extra)
        sim = cosine_tfidf(text, lib.skills[target_id].description, corpus=[
            c for c in corpus if c != lib.skills[target_id].description
        ])
        if best is None or abs(sim - goal) < abs(best[0] - goal):
            best = (sim, text)
    assert best is not None
    return {
        "id": "candidate-band",
        "name": "ledger variance sync",
        "family": lib.skills[target_id].family,
        "description": best[1],
        "anchors": {"verbs": ["reconcile", "report"], "objects": ["ledger", "variance"],
                    "constraints": ["only for closed quarters"]},
    }
