"""Description similarity (TF-IDF cosine), danger-band pairs, competition index, overlap risk."""

from __future__ import annotations

import csv
import math
import re
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import sparse

from .errors import PreconditionError
from .schema import Library, Skill

DANGER_BAND = (0.55, 0.75)

_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop tokens shorter than two characters."""
    return [t for t in _SPLIT.split(text.lower()) if len(t) >= 2]


class TfidfIndex:
    """TF-IDF vectors over a fixed corpus.

    Term weight is raw count times ``ln((1 + D) / (1 + df)) + 1``; rows are
    L2-normalized, so the dot product of two rows is their cosine.
    """

    def __init__(self, texts: Sequence[str]) -> None:
        docs = [Counter(tokenize(t)) for t in texts]
        vocab: dict[str, int] = {}
        for doc in docs:
            for tok in sorted(doc):
                vocab.setdefault(tok, len(vocab))
        self.vocab = vocab
        n_docs = len(docs)
        df = np.zeros(len(vocab))
        rows, cols, vals = [], [], []
        for r, doc in enumerate(docs):
            for tok, count in doc.items():
                c = vocab[tok]
                df[c] += 1
                rows.append(r)
                cols.append(c)
                vals.append(float(count))
        self.idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0
        mat = sparse.csr_matrix((vals, (rows, cols)), shape=(n_docs, len(vocab)))
        mat = mat.multiply(self.idf[np.newaxis, :]).tocsr() if len(vocab) else mat
        norms = np.sqrt(np.asarray(mat.multiply(mat).sum(axis=1)).ravel())
        norms[norms == 0] = 1.0
        self.matrix = sparse.diags(1.0 / norms) @ mat

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def similarity_matrix(self) -> np.ndarray:
        sims = (self.matrix @ self.matrix.T).toarray()
        return np.clip(sims, 0.0, 1.0)

    def similarity(self, i: int, j: int) -> float:
        v = self.matrix[i].multiply(self.matrix[j]).sum()
        return float(min(1.0, max(0.0, v)))

    def row_similarities(self, i: int) -> np.ndarray:
        return np.clip((self.matrix @ self.matrix[i].T).toarray().ravel(), 0.0, 1.0)


def cosine_tfidf(a: str, b: str, corpus: Sequence[str] | None = None) -> float:
    """TF-IDF cosine of two texts; IDF is fitted on ``corpus`` (default: the two texts)."""
    docs = list(corpus) if corpus is not None else []
    docs.extend([a, b])
    index = TfidfIndex(docs)
    return index.similarity(len(docs) - 2, len(docs) - 1)


def in_danger_band(similarity: float, band: tuple[float, float] = DANGER_BAND) -> bool:
    lo, hi = band
    return lo <= similarity < hi


class OverlapRisk(NamedTuple):
    value: float
    jaccard: float
    asymmetry: float
    scorable: bool


def overlap_risk(a: Skill, b: Skill) -> OverlapRisk:
    """Mutual-confusion risk J * (1 - |A|) over the skills' anchor-token regions.

    J is the Jaccard overlap and A the signed coverage imbalance
    ``(|Ca - Cb| - |Cb - Ca|) / |Ca | Cb|``. Two anchor-free skills are unscorable.
    """
    ca, cb = a.anchors.tokens(), b.anchors.tokens()
    union = ca | cb
    if not union:
        return OverlapRisk(0.0, 0.0, 0.0, False)
    jac = len(ca & cb) / len(union)
    asym = (len(ca - cb) - len(cb - ca)) / len(union)
    return OverlapRisk(jac * (1.0 - abs(asym)), jac, asym, True)


@dataclass(frozen=True)
class PairGeometry:
    a_id: str
    b_id: str
    similarity: float
    in_danger_band: bool
    jaccard_overlap: float
    asymmetry: float

    def as_row(self) -> dict[str, object]:
        return {
            "a_id": self.a_id,
            "b_id": self.b_id,
            "similarity": f"{self.similarity:.6f}",
            "danger_band": int(self.in_danger_band),
            "jaccard": f"{self.jaccard_overlap:.6f}",
            "asymmetry": f"{self.asymmetry:.6f}",
        }


class LibraryGeometry:
    """Similarity matrix of a library's descriptions, rows ordered by sorted skill id."""

    def __init__(self, lib: Library) -> None:
        self.library = lib
        self.ids = lib.ids
        self.position = {sid: i for i, sid in enumerate(self.ids)}
        self.index = TfidfIndex([lib.skills[i].description for i in self.ids])
        self.sims = self.index.similarity_matrix()
        if len(self.ids):
            np.fill_diagonal(self.sims, 1.0)

    def similarity(self, a: str, b: str) -> float:
        return float(self.sims[self.position[a], self.position[b]])

    def pair(self, a: str, b: str) -> PairGeometry:
        if b < a:
            a, b = b, a
        sim = self.similarity(a, b)
        risk = overlap_risk(self.library.skills[a], self.library.skills[b])
        return PairGeometry(a, b, sim, in_danger_band(sim), risk.jaccard, risk.asymmetry)

    def pairs(self) -> list[PairGeometry]:
        n = len(self.ids)
        return [self.pair(self.ids[i], self.ids[j]) for i in range(n) for j in range(i + 1, n)]


def pair_geometry(lib: Library) -> list[PairGeometry]:
    return LibraryGeometry(lib).pairs()


def danger_band_pairs(
    lib: Library, band: tuple[float, float] = DANGER_BAND
) -> list[PairGeometry]:
    geo = LibraryGeometry(lib)
    lo, hi = band
    upper = np.triu(np.ones_like(geo.sims, dtype=bool), k=1)
    hits = np.argwhere(upper & (geo.sims >= lo) & (geo.sims < hi))
    return [geo.pair(geo.ids[i], geo.ids[j]) for i, j in hits]


@dataclass(frozen=True)
class CompetitionIndex:
    gold_id: str
    value: float
    beta: float


def competition_index_from_similarities(similarities: Iterable[float], beta: float) -> float:
    return float(sum(math.exp(beta * s) for s in similarities))


def competition_index(
    lib: Library,
    gold_id: str,
    exposed: Iterable[str],
    beta: float,
    geometry: LibraryGeometry | None = None,
) -> CompetitionIndex:
    """Distractor pressure: sum of exp(beta * sim(gold, j)) over exposed non-gold skills."""
    exposed = set(exposed)
    if gold_id not in exposed:
        raise PreconditionError(f"gold skill {gold_id!r} is not in the exposed set")
    unknown = exposed - set(lib.skills)
    if unknown:
        raise PreconditionError(f"exposed ids not in library: {sorted(unknown)}")
    if beta < 0:
        raise PreconditionError("beta must be >= 0")
    geo = geometry or LibraryGeometry(lib)
    sims = [geo.similarity(gold_id, j) for j in sorted(exposed) if j != gold_id]
    return CompetitionIndex(gold_id, competition_index_from_similarities(sims, beta), beta)


def select_danger_band(
    trials: Sequence[tuple[Sequence[float], bool]],
    bands: Sequence[tuple[float, float]],
) -> tuple[tuple[float, float], dict[tuple[float, float], float]]:
    """Pick the similarity band whose exposure count is most negatively rank-correlated with accuracy.

    ``trials`` holds, per routing trial, the gold-to-distractor similarities of
    the exposed set and whether the route was correct. Bands whose exposure
    count is constant across trials are skipped.
    """
    from .stats import spearman

    correct = [float(ok) for _, ok in trials]
    rhos: dict[tuple[float, float], float] = {}
    for band in bands:
        counts = [sum(in_danger_band(s, band) for s in sims) for sims, _ in trials]
        if len(set(counts)) < 2 or len(set(correct)) < 2:
            continue
        rhos[band] = spearman(counts, correct)
    if not rhos:
        raise PreconditionError("no band has varying exposure")
    best = min(rhos, key=lambda b: (rhos[b], b))
    return best, rhos


def write_pair_csv(pairs: Iterable[PairGeometry], path: str | Path) -> None:
    fields = ["a_id", "b_id", "similarity", "danger_band", "jaccard", "asymmetry"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for p in pairs:
            writer.writerow(p.as_row())
