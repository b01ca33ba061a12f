"""Generative Monte-Carlo router used to verify every law fit.

Routing follows a finite-capacity margin model: the gold skill scores
``eps_0`` and the distractor at semantic rank ``r`` scores ``-Delta_r + eps_r``
with Gaussian noise of scale ``noise_sigma``; the router takes the argmax,
breaking ties by the lowest candidate index. Margins are calibrated so that at
``margin_base = noise_sigma = 1`` rank ``r`` carries effective overtake weight
``kappa / r`` (harmonic crowding), i.e. the exact accuracy with ``n``
candidates is ``1 / (1 + kappa H_{n-1})``.

Every trial draws from its own generator seeded with ``(seed, stream, trial)``,
so results do not depend on evaluation order and runs are byte-reproducible.
Trial ``t`` at library size ``n`` reuses the noise of trial ``t`` at smaller
sizes (common random numbers), which keeps differences between sizes tight.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
import yaml
from scipy import optimize
from scipy.special import ndtr

from .errors import ParseError, PreconditionError
from .laws import RoutingLawFit, fit_routing_points, in_dual_trigger_regime
from .trials import TrialRecord

DEFAULT_SWEEP = (10, 20, 50, 100, 200, 500)

# trials per random stream in the vectorized simulators
_BLOCK = 4096

# stream tags for derived seeds
_SINGLE, _PIPELINE, _RESCUE, _WRONG, _SYNERGY, _BLACKHOLE, _LIBRARY = range(7)


@dataclass(frozen=True)
class BlackholeParams:
    m0: float
    dq: float
    ds: float


@dataclass(frozen=True)
class SimConfig:
    seed: int
    n_clusters: int = 14
    skills_per_cluster: int = 40
    margin_base: float = 1.0
    kappa: float = 0.06
    noise_sigma: float = 1.0
    eta: float = 0.0
    alpha: float = 0.38
    lambda_loss: float = 0.072
    recovery_r: float = 0.028
    c0: float = 0.0775
    c1: float = 0.31
    h_max: float = 0.265
    g_star: float = 0.25
    tau: float = 0.12
    terminal_recovery: float = 0.0
    state_jitter: float = 0.02
    blackhole: BlackholeParams | None = None

    def __post_init__(self) -> None:
        if self.n_clusters < 1 or self.skills_per_cluster < 1:
            raise PreconditionError("library must have at least one cluster and skill")
        for name in ("margin_base", "kappa", "noise_sigma"):
            if getattr(self, name) < 0:
                raise PreconditionError(f"{name} must be >= 0")
        for name in ("eta", "lambda_loss", "recovery_r", "c0", "c1", "h_max",
                     "terminal_recovery", "state_jitter"):
            if getattr(self, name) < 0:
                raise PreconditionError(f"{name} must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise PreconditionError("alpha must lie in [0, 1]")
        if self.tau <= 0:
            raise PreconditionError("tau must be > 0")
        if not 0.0 <= self.g_star <= 1.0:
            raise PreconditionError("g_star must lie in [0, 1]")

    @property
    def library_size(self) -> int:
        return self.n_clusters * self.skills_per_cluster

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], label: str = "<config>") -> SimConfig:
        """Strict loader: every field must be present, unknown keys are rejected."""
        names = [f.name for f in fields(cls)]
        for name in names:
            if name not in data:
                raise ParseError(label, name, "missing (config files must list every field)")
        unknown = sorted(set(data) - set(names))
        if unknown:
            raise ParseError(label, unknown[0], "unknown config field")
        values = dict(data)
        bh = values["blackhole"]
        if bh is not None:
            try:
                values["blackhole"] = BlackholeParams(float(bh["m0"]), float(bh["dq"]), float(bh["ds"]))
            except (KeyError, TypeError, ValueError):
                raise ParseError(label, "blackhole", "needs numeric m0, dq, ds or null") from None
        try:
            return cls(**values)
        except (TypeError, PreconditionError) as exc:
            raise ParseError(label, "<config>", str(exc)) from None


def load_sim_config(path: str | Path) -> SimConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ParseError(str(path), "<document>", str(exc)) from None
    if not isinstance(data, Mapping):
        raise ParseError(str(path), "<document>", "not a structured map")
    return SimConfig.from_mapping(data, str(path))


def skill_id(index: int, cfg: SimConfig) -> str:
    c, i = divmod(int(index), cfg.skills_per_cluster)
    return f"c{c:02d}s{i:03d}"


def neighbor_index(gold: np.ndarray | int, rank: np.ndarray | int, cfg: SimConfig):
    """Library index of the distractor at semantic rank ``rank`` (1-based) around ``gold``.

    Same-cluster skills come first, then the other clusters in cyclic order.
    """
    per = cfg.skills_per_cluster
    gold = np.asarray(gold)
    rank = np.asarray(rank)
    c, i = np.divmod(gold, per)
    same = rank <= per - 1
    rr = np.maximum(rank - per, 0)
    offset, pos = np.divmod(rr, per)
    other = ((c + offset + 1) % cfg.n_clusters) * per + (i + pos) % per
    mine = c * per + (i + rank) % per
    return np.where(same, mine, other)


_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite_e.hermegauss(96)
_GH_WEIGHTS = _GH_WEIGHTS / math.sqrt(2.0 * math.pi)


def target_accuracy(kappa: float, n: int) -> float:
    """Accuracy the unit-scale margin schedule is calibrated to: 1 / (1 + kappa H_{n-1})."""
    return 1.0 / (1.0 + kappa * float(np.sum(1.0 / np.arange(1, n))))


@lru_cache(maxsize=64)
def _unit_margins(kappa: float, count: int) -> tuple[float, ...]:
    """Unit-scale margins of ranks 1..count, solved one rank at a time.

    With margin_base = noise_sigma = 1, adding rank r lowers the exact expected
    accuracy from target(r) to target(r + 1); the effective overtake weight of
    rank r is therefore kappa / r in Boltzmann form.
    """
    if kappa == 0:
        return (math.inf,) * count
    z = _GH_NODES
    running = np.ones_like(z)
    margins = []
    for r in range(1, count + 1):
        goal = target_accuracy(kappa, r + 1)

        def gap(d: float) -> float:
            return float((running * ndtr(d + z)) @ _GH_WEIGHTS) - goal

        lo, hi = -10.0, 10.0
        while gap(hi) < 0:
            hi *= 2.0
        while gap(lo) > 0:
            lo *= 2.0
        d = optimize.brentq(gap, lo, hi, xtol=1e-13, rtol=1e-13)
        margins.append(d)
        running = running * ndtr(d + z)
    return tuple(margins)


def margin_schedule(cfg: SimConfig, n: int) -> np.ndarray:
    """Margins of semantic ranks 1..n-1 (unit-scale calibration times ``margin_base``)."""
    if n < 2:
        return np.zeros(0)
    count = max(n - 1, 1023)
    unit = np.array(_unit_margins(float(cfg.kappa), count)[: n - 1])
    with np.errstate(invalid="ignore"):
        out = cfg.margin_base * unit
    return np.where(np.isnan(out), 0.0, out)


def overtake_probabilities(cfg: SimConfig, n: int) -> np.ndarray:
    """Pairwise P(distractor at rank r beats gold) under the configured noise."""
    delta = margin_schedule(cfg, n)
    if cfg.noise_sigma == 0:
        return (delta <= 0).astype(float)
    return ndtr(-delta / (cfg.noise_sigma * math.sqrt(2.0)))


def routing_accuracy(cfg: SimConfig, n: int) -> float:
    """Exact expected single-step accuracy by Gauss-Hermite quadrature over the gold noise.

    Ties (only possible with zero noise) are counted as losses.
    """
    if n < 1:
        raise PreconditionError("n must be >= 1")
    delta = margin_schedule(cfg, n)
    if cfg.noise_sigma == 0:
        return float(np.all(delta > 0))
    z = _GH_NODES[:, None]
    log_p = np.log(np.clip(ndtr(delta[None, :] / cfg.noise_sigma + z), 1e-300, 1.0)).sum(axis=1)
    return float(np.exp(log_p) @ _GH_WEIGHTS)


def _check_size(cfg: SimConfig, n: int) -> None:
    if n < 2:
        raise PreconditionError("exposed library size n must be >= 2")
    if n > cfg.library_size:
        raise PreconditionError(
            f"n={n} exceeds generated library size {cfg.library_size}"
        )


def _route_once(cfg: SimConfig, n: int, stream: Sequence[int], margins: np.ndarray) -> tuple[int, int]:
    """One routing decision; returns (gold library index, chosen library index)."""
    rng = np.random.default_rng(list(stream))
    eps = rng.standard_normal(n) * cfg.noise_sigma
    aux = np.random.default_rng([*stream, 1])
    gold = int(aux.integers(cfg.library_size))
    pos = int(aux.integers(n))
    scores = eps.copy()
    scores[1:] -= margins
    # candidate order: gold at position pos, distractors by rank elsewhere
    order = np.empty(n, dtype=int)
    order[pos] = 0
    order[np.arange(n) != pos] = np.arange(1, n)
    winner = order[int(np.argmax(scores[order]))]
    chosen = gold if winner == 0 else int(neighbor_index(gold, winner, cfg))
    return gold, chosen


def _record(trial_id: str, n: int, gold: int, chosen: int, cfg: SimConfig, k_step: int = 1,
            context: str = "no_state") -> TrialRecord:
    g, c = skill_id(gold, cfg), skill_id(chosen, cfg)
    return TrialRecord(
        trial_id=trial_id, n_exposed=n, k_step=k_step, gold_id=g, chosen_id=c,
        outcome="correct" if g == c else "hijack", context=context,
    )


def simulate_single_step(cfg: SimConfig, n: int, trials: int) -> list[TrialRecord]:
    _check_size(cfg, n)
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    margins = margin_schedule(cfg, n)
    out = []
    for t in range(trials):
        gold, chosen = _route_once(cfg, n, (cfg.seed, _SINGLE, t), margins)
        out.append(_record(f"n{n}-t{t}", n, gold, chosen, cfg))
    return out


def simulate_sweep(cfg: SimConfig, ns: Iterable[int] = DEFAULT_SWEEP, trials: int = 5000) -> list[TrialRecord]:
    records: list[TrialRecord] = []
    for n in ns:
        records.extend(simulate_single_step(cfg, n, trials))
    return records


class PipelineRun(NamedTuple):
    records: list[TrialRecord]
    strict_success: float
    per_step_accuracy: tuple[float, ...]
    p_n: float


def simulate_pipeline(
    cfg: SimConfig, n: int, k: int, trials: int, p_step: float | None = None
) -> PipelineRun:
    """Route-only pipelines of length k with compression penalty ``cfg.eta`` after step 1.

    Each step is a fresh routing decision (margin model, or a Bernoulli with
    success ``p_step`` when given). A later step that routed correctly is then
    lost to compression with probability ``eta / p_N``, so its conditional
    accuracy is ``p_N - eta``. With ``terminal_recovery`` > 0 and k >= 3 the
    final step's penalty is reduced by that amount (floored at 0).
    """
    _check_size(cfg, n)
    if k < 1:
        raise PreconditionError("pipeline length k must be >= 1")
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    p_n = routing_accuracy(cfg, n) if p_step is None else float(p_step)
    if not 0.0 < p_n <= 1.0:
        raise PreconditionError(f"single-step accuracy {p_n} outside (0, 1]")
    if cfg.eta >= p_n:
        raise PreconditionError(f"eta={cfg.eta} must be below realized p_N={p_n:.6f}")
    margins = margin_schedule(cfg, n)
    gold = np.empty((trials, k), dtype=np.int64)
    chosen = np.empty((trials, k), dtype=np.int64)
    for b0 in range(0, trials, _BLOCK):
        rows = min(_BLOCK, trials - b0)
        rng = np.random.default_rng([cfg.seed, _PIPELINE, b0 // _BLOCK])
        for s in range(k):
            g = rng.integers(cfg.library_size, size=rows)
            if p_step is None:
                # gold must strictly beat every distractor, so ties count as losses
                eps = rng.standard_normal((rows, n)) * cfg.noise_sigma
                rivals = eps[:, 1:] - margins[None, :]
                best = np.argmax(rivals, axis=1)
                ok = eps[:, 0] > rivals[np.arange(rows), best]
                c = np.where(ok, g, neighbor_index(g, best + 1, cfg))
            else:
                ok = rng.random(rows) < p_step
                c = np.where(ok, g, neighbor_index(g, 1, cfg))
            if s > 0:
                eta = cfg.eta
                if k >= 3 and s == k - 1:
                    eta = max(0.0, eta - cfg.terminal_recovery)
                lost = (c == g) & (rng.random(rows) < eta / p_n)
                c = np.where(lost, neighbor_index(g, 1, cfg), c)
            gold[b0:b0 + rows, s] = g
            chosen[b0:b0 + rows, s] = c
    correct = gold == chosen
    records = [
        _record(f"p{n}-t{t}", n, int(gold[t, s]), int(chosen[t, s]), cfg, k_step=s + 1)
        for t in range(trials) for s in range(k)
    ]
    return PipelineRun(records, float(correct.all(axis=1).mean()), tuple(correct.mean(axis=0).tolist()), p_n)


class RescuePair(NamedTuple):
    p_a: float
    p_b: float
    delta: float
    joint_no_state: float
    clipped: bool


def _difficulty(rng: np.random.Generator) -> float:
    # routing accuracies concentrate near the top with a long hard tail
    return 0.30 + 0.68 * rng.beta(4.0, 1.5)


def simulate_rescue(cfg: SimConfig, pair_count: int, trials_per_pair: int) -> list[RescuePair]:
    """Paired no-state / correct-state trials for ordered skill pairs (A upstream, B downstream).

    Per pair, latent accuracies are drawn, then each trial shares one uniform
    between conditions for B. In the correct-state condition a correct
    upstream raises B's success threshold by ``2 alpha (1 - P(B))`` and a
    pair-level state effect ``N(0, state_jitter)`` shifts it independently of
    headroom. Thresholds above 1 are clipped and flagged. The no-state
    condition has no leakage: A and B use independent uniforms.

    Returned rates are the measured frequencies, not the latent values.
    """
    if pair_count < 1 or trials_per_pair < 1:
        raise PreconditionError("pair_count and trials_per_pair must be >= 1")
    out = []
    gain = 2.0 * cfg.alpha
    for j in range(pair_count):
        rng = np.random.default_rng([cfg.seed, _RESCUE, j])
        pa, pb = _difficulty(rng), _difficulty(rng)
        jitter = rng.normal(0.0, cfg.state_jitter) if cfg.state_jitter > 0 else 0.0
        u = rng.random((trials_per_pair, 2))
        a_ok = u[:, 0] < pa
        b_no = u[:, 1] < pb
        q_rescued = pb + gain * (1.0 - pb) + jitter
        q_plain = pb + jitter
        clipped = bool(q_rescued > 1.0 or q_plain < 0.0 or q_plain > 1.0)
        threshold = np.clip(np.where(a_ok, q_rescued, q_plain), 0.0, 1.0)
        b_state = u[:, 1] < threshold
        out.append(
            RescuePair(
                p_a=float(a_ok.mean()),
                p_b=float(b_no.mean()),
                delta=float(b_state.mean() - b_no.mean()),
                joint_no_state=float((a_ok & b_no).mean()),
                clipped=clipped,
            )
        )
    return out


def no_state_trials(cfg: SimConfig, pair_count: int, trials_per_pair: int) -> tuple[float, float, float]:
    """Pooled (P(A), P(B), P(A and B)) over no-state paired trials."""
    pairs = simulate_rescue(cfg, pair_count, trials_per_pair)
    w = 1.0 / len(pairs)
    pa = sum(p.p_a for p in pairs) * w
    pb = sum(p.p_b for p in pairs) * w
    joint = sum(p.joint_no_state for p in pairs) * w
    return pa, pb, joint


def simulate_wrong_state(
    cfg: SimConfig, kappa_values: Sequence[float], trials: int
) -> list[tuple[float, float]]:
    """Mean downstream quality change under a wrong upstream artifact, per dependency weight.

    Each trial routes its evidence through the upstream artifact with
    probability kappa (then loses quality with probability lambda) or through
    the downstream task alone (then recovers with probability r). Trial
    uniforms are shared across kappa values.
    """
    if any(not 0.0 <= k <= 1.0 for k in kappa_values):
        raise PreconditionError("kappa values must lie in [0, 1]")
    if cfg.lambda_loss > 1 or cfg.recovery_r > 1:
        raise PreconditionError("lambda_loss and recovery_r are probabilities here; need <= 1")
    u = np.random.default_rng([cfg.seed, _WRONG]).random((trials, 3))
    out = []
    for kappa in kappa_values:
        needs = u[:, 0] < kappa
        loss = needs & (u[:, 1] < cfg.lambda_loss)
        gain = ~needs & (u[:, 2] < cfg.recovery_r)
        out.append((float(kappa), float(gain.mean() - loss.mean())))
    return out


def synergy_components(cfg: SimConfig, g: float) -> tuple[float, float]:
    """(scaffold benefit h(G), crowding cost c(G))."""
    cost = max(0.0, cfg.c0 - cfg.c1 * g)
    benefit = cfg.h_max * (1.0 - math.exp(-(g - cfg.g_star) / cfg.tau)) if g >= cfg.g_star else 0.0
    return benefit, cost


def simulate_synergy(
    cfg: SimConfig, g_values: Sequence[float], trials: int
) -> list[tuple[float, float]]:
    """Joint-execution synergy S(G) = P(promotion) - P(crowding drag), sampled per gap."""
    if any(not 0.0 <= g <= 1.0 for g in g_values):
        raise PreconditionError("capability gaps must lie in [0, 1]")
    u = np.random.default_rng([cfg.seed, _SYNERGY]).random((trials, 2))
    out = []
    for g in g_values:
        h, c = synergy_components(cfg, g)
        out.append((float(g), float((u[:, 0] < h).mean() - (u[:, 1] < c).mean())))
    return out


class BlackholeResult(NamedTuple):
    capture_rate: float
    gini: float
    accuracy: float
    margin: float


def gini(counts: Sequence[float]) -> float:
    x = np.sort(np.asarray(counts, dtype=float))
    total = x.sum()
    if total == 0 or len(x) < 2:
        return 0.0
    i = np.arange(1, len(x) + 1)
    return float(((2 * i - len(x) - 1) @ x) / (len(x) * total))


def simulate_blackhole(
    cfg: SimConfig,
    query_weak: bool,
    skill_weak: bool,
    trials: int,
    n: int = 20,
) -> BlackholeResult:
    """Route with one broad abstract skill always exposed next to the gold and n-2 distractors.

    The gold-over-abstract margin is ``m0 - dq [query_weak] - ds [skill_weak]``.
    Capture is the abstract skill winning; the Gini coefficient is taken over
    routing mass of every library skill plus the abstract one.
    """
    bh = cfg.blackhole
    if bh is None:
        raise PreconditionError("blackhole parameters are not configured")
    if not in_dual_trigger_regime(bh.m0, bh.dq, bh.ds):
        raise PreconditionError(
            f"not in dual-trigger regime: need max(dq, ds) < m0 < dq + ds, got "
            f"m0={bh.m0}, dq={bh.dq}, ds={bh.ds}"
        )
    _check_size(cfg, n)
    margin = bh.m0 - bh.dq * query_weak - bh.ds * skill_weak
    rng = np.random.default_rng([cfg.seed, _BLACKHOLE, int(query_weak), int(skill_weak)])
    eps = rng.standard_normal((trials, n)) * cfg.noise_sigma
    gold = rng.integers(cfg.library_size, size=trials)
    scores = eps.copy()
    scores[:, 1] -= margin
    scores[:, 2:] -= margin_schedule(cfg, n - 1)[None, :]
    winner = np.argmax(scores, axis=1)
    counts = np.zeros(cfg.library_size + 1)
    abstract = winner == 1
    chosen = np.where(
        winner == 0, gold, neighbor_index(gold, np.maximum(winner - 1, 1), cfg)
    )
    np.add.at(counts, chosen[~abstract], 1)
    counts[-1] = abstract.sum()
    return BlackholeResult(
        capture_rate=float(abstract.mean()),
        gini=gini(counts),
        accuracy=float((winner == 0).mean()),
        margin=margin,
    )


KAPPA_GAIN = 0.25


@lru_cache(maxsize=256)
def _calibrated(density: float, kappa: float, margin_base: float, sigma: float) -> RoutingLawFit:
    cfg = SimConfig(seed=0, kappa=kappa + KAPPA_GAIN * density, margin_base=margin_base,
                    noise_sigma=sigma)
    accs = [routing_accuracy(cfg, n) for n in DEFAULT_SWEEP]
    return fit_routing_points(DEFAULT_SWEEP, accs)


def calibrated_routing_law(competition_density: float, base: SimConfig | None = None) -> RoutingLawFit:
    """Routing law of the simulator with crowding raised in proportion to competition density.

    Uses exact quadrature accuracies over the standard sweep, so the result is
    deterministic and free of Monte-Carlo noise.
    """
    base = base or SimConfig(seed=0)
    density = round(float(competition_density), 12)
    return _calibrated(density, base.kappa, base.margin_base, base.noise_sigma)


DEFAULT_BLACKHOLE = BlackholeParams(m0=1.0, dq=0.6, ds=0.6)


class LibraryRouting(NamedTuple):
    accuracy: float
    capture_rate: float
    trials: int


def library_margins(
    lib: Any,
    query_weak: bool,
    far: float = 3.0,
    near: float = 0.3,
    blackhole: BlackholeParams = DEFAULT_BLACKHOLE,
    breadth_cut: float = 0.5,
) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Gold-versus-distractor margins derived from a real library's geometry.

    Returns (sorted ids, margin matrix [gold, distractor], broad-skill mask).
    Regular margins fall linearly from ``far`` to ``near`` as similarity rises
    from 0.45 to 0.65. Skills whose family breadth reaches ``breadth_cut`` are
    broad: their margin is also capped by the dual-trigger margin
    ``m0 - dq [query_weak] - ds * abstraction * (1 - anchor_strength)``.
    """
    from .scorecards import score

    cards = score(lib, routing_fit=RoutingLawFit(1.0, 0.0, 1.0, {}))
    ids = lib.ids
    n = len(ids)
    sims = np.zeros((n, n))
    pos = {sid: i for i, sid in enumerate(ids)}
    for card in cards.pairs:
        i, j = pos[card.pair.a_id], pos[card.pair.b_id]
        sims[i, j] = sims[j, i] = card.pair.similarity
    closeness = np.clip((sims - 0.45) / 0.20, 0.0, 1.0)
    margins = far - (far - near) * closeness
    broad = np.zeros(n, dtype=bool)
    for k, sc in enumerate(cards.skills):
        if sc.family_breadth >= breadth_cut:
            broad[k] = True
            bh = blackhole.m0 - blackhole.dq * query_weak - blackhole.ds * sc.abstraction * (1 - sc.anchor_strength)
            margins[:, k] = np.minimum(margins[:, k], bh)
    np.fill_diagonal(margins, 0.0)
    return ids, margins, broad


def simulate_library_routing(
    cfg: SimConfig,
    lib: Any,
    queries: Sequence[str],
    universe: Sequence[str],
    trials: int,
    query_weak_rate: float = 0.5,
) -> LibraryRouting:
    """Route ``trials`` queries over the full exposed library ``lib``.

    Gold skills cycle through ``queries``. Noise is drawn per trial over the
    fixed id list ``universe`` (a superset of every compared variant), so
    variants of one library share random numbers and their accuracy
    differences are tight.
    """
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    missing = sorted(set(queries) - set(lib.skills))
    if missing:
        raise PreconditionError(f"query skills not in library: {missing}")
    universe = sorted(universe)
    upos = {sid: i for i, sid in enumerate(universe)}
    rng = np.random.default_rng([cfg.seed, _LIBRARY])
    eps = rng.standard_normal((trials, len(universe))) * cfg.noise_sigma
    weak = rng.random(trials) < query_weak_rate
    bh = cfg.blackhole or DEFAULT_BLACKHOLE
    correct = 0
    captured = 0
    queries = list(queries)
    for flag in (False, True):
        ids, margins, broad = library_margins(lib, flag, blackhole=bh)
        lpos = {sid: i for i, sid in enumerate(ids)}
        cols = np.array([upos[sid] for sid in ids])
        rows = np.flatnonzero(weak == flag)
        if len(rows) == 0:
            continue
        gold = np.array([lpos[queries[t % len(queries)]] for t in rows])
        scores = eps[np.ix_(rows, cols)] - margins[gold]
        winner = np.argmax(scores, axis=1)
        correct += int((winner == gold).sum())
        captured += int((broad[winner] & (winner != gold)).sum())
    return LibraryRouting(correct / trials, captured / trials, trials)
