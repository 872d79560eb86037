"""Relevance-conditioned synthetic QA pairs, search sessions and judgments.

Everything is derived from ``SimConfig.seed`` through per-pair generators
(``default_rng([seed, stream, pair_index])``), so pairs can be generated in
any order or in parallel and still produce identical output. Log lines are
ordered by pair index, then impression index.

All behavior numbers here are calibration choices for a synthetic stand-in;
none of them is measured from real logs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterator, Sequence

import numpy as np

from .errors import EvenPanel
from .qa import QAPair
from .session import ClickTarget, EventKind, SessionEvent

# impression action patterns, in profile order
PATTERNS = ("no_click", "answer_only", "ot_only", "both", "other_only")

_STREAM_TEXT = 0
_STREAM_BEHAVIOR = 1
_STREAM_JUDGES = 2
_STREAM_ROLE = 3

# simulated users count a page visit of at least this long as satisfying
USER_SAT_MS = 30_000


@dataclass(frozen=True)
class BehaviorProfile:
    """Per-impression behavior of users shown a pair of one relevance class.

    ``answer_click_dispersion`` is the shape ``k`` of a per-pair Gamma(k, 1/k)
    multiplier on the answer-click probabilities (0 disables it); it lets a
    few pairs collect many answer clicks while most collect none.
    """

    p_no_click: float
    p_answer_only: float
    p_ot_only: float
    p_both: float
    p_other_only: float
    p_reformulate_given_no_sat: float
    p_related_click: float
    p_answer_expansion: float
    serp_dwell_mu: float
    serp_dwell_sigma: float
    source_dwell_mu: float
    source_dwell_sigma: float
    behavior_noise: float = 0.0
    answer_click_dispersion: float = 0.0

    def __post_init__(self) -> None:
        probs = (
            self.p_no_click,
            self.p_answer_only,
            self.p_ot_only,
            self.p_both,
            self.p_other_only,
            self.p_reformulate_given_no_sat,
            self.p_related_click,
            self.p_answer_expansion,
            self.behavior_noise,
        )
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("profile probabilities must lie in [0, 1]")
        if abs(sum(self.action_probs()) - 1.0) > 1e-9:
            raise ValueError("action probabilities must sum to 1")
        if self.serp_dwell_sigma < 0 or self.source_dwell_sigma < 0 or self.answer_click_dispersion < 0:
            raise ValueError("dispersion parameters must be non-negative")

    def action_probs(self) -> tuple[float, ...]:
        return (self.p_no_click, self.p_answer_only, self.p_ot_only, self.p_both, self.p_other_only)


# Frozen calibration. Answer clicks are rare for both classes and bursty for
# irrelevant pairs, so answer CTR is a weak relevance signal; outside-answer
# clicks, reformulation and dwell carry most of the signal.
DEFAULT_RELEVANT = BehaviorProfile(
    p_no_click=0.712,
    p_answer_only=0.006,
    p_ot_only=0.10,
    p_both=0.002,
    p_other_only=0.18,
    p_reformulate_given_no_sat=0.15,
    p_related_click=0.05,
    p_answer_expansion=0.15,
    serp_dwell_mu=math.log(20_000),
    serp_dwell_sigma=0.9,
    source_dwell_mu=math.log(40_000),
    source_dwell_sigma=0.8,
    behavior_noise=0.25,
    answer_click_dispersion=2.0,
)
DEFAULT_IRRELEVANT = BehaviorProfile(
    p_no_click=0.524,
    p_answer_only=0.003,
    p_ot_only=0.30,
    p_both=0.003,
    p_other_only=0.17,
    p_reformulate_given_no_sat=0.5,
    p_related_click=0.15,
    p_answer_expansion=0.10,
    serp_dwell_mu=math.log(8_000),
    serp_dwell_sigma=0.9,
    source_dwell_mu=math.log(15_000),
    source_dwell_sigma=0.9,
    behavior_noise=0.25,
    answer_click_dispersion=0.25,
)


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    Text generation: questions have 3-8 distinct tokens. A ``generic`` slice
    of the vocabulary models topic-neutral words that show up in unrelated
    passages too; relevant passages contain at least 70% of the question's
    tokens, irrelevant ones at most 20% of its non-generic tokens plus each
    generic token with probability ``generic_leak``. With
    ``generic_vocab_fraction=0`` irrelevant overlap is at most 20% overall.

    ``pair_flip_rate`` is the fraction of pairs whose users behave like the
    opposite relevance class (e.g. a relevant passage rendered badly).
    """

    n_pairs: int = 5000
    positive_rate: float = 0.5
    impressions_per_pair: float = 50.0
    judge_error_rate: float = 0.1
    n_judges: int = 3
    vocab_size: int = 5000
    seed: int = 7
    relevant: BehaviorProfile = DEFAULT_RELEVANT
    irrelevant: BehaviorProfile = DEFAULT_IRRELEVANT
    generic_vocab_fraction: float = 0.1
    generic_token_rate: float = 0.7
    generic_leak: float = 1.0
    passage_length: tuple[int, int] = (20, 40)
    pair_flip_rate: float = 0.15
    multi_impression_sessions: bool = False
    id_prefix: str = "qp"

    def __post_init__(self) -> None:
        if self.n_pairs < 0 or self.impressions_per_pair <= 0 or self.vocab_size < 20:
            raise ValueError("n_pairs >= 0, impressions_per_pair > 0 and vocab_size >= 20 required")
        if not 0.0 <= self.judge_error_rate < 0.5:
            raise ValueError("judge_error_rate must lie in [0, 0.5)")
        lo, hi = self.passage_length
        if not 1 <= lo <= hi:
            raise ValueError("passage_length must satisfy 1 <= min <= max")
        if self.n_judges < 1 or self.n_judges % 2 == 0:
            raise ValueError("n_judges must be odd")
        for name in ("positive_rate", "generic_vocab_fraction", "generic_token_rate", "generic_leak", "pair_flip_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def qp_id(self, i: int) -> str:
        return f"{self.id_prefix}{i:07d}"


def _rng(cfg: SimConfig, stream: int, i: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, stream, i])


@dataclass(frozen=True, slots=True)
class SimPair:
    pair: QAPair
    truth: bool
    index: int


def _vocab_split(cfg: SimConfig) -> tuple[int, int]:
    n_generic = int(cfg.vocab_size * cfg.generic_vocab_fraction)
    return n_generic, cfg.vocab_size - n_generic


def _tok(j: int) -> str:
    return f"w{j}"


def _make_pair(cfg: SimConfig, i: int) -> SimPair:
    rng = _rng(cfg, _STREAM_TEXT, i)
    truth = bool(rng.random() < cfg.positive_rate)
    n_generic, n_content = _vocab_split(cfg)
    length = int(rng.integers(3, 9))
    is_generic = (rng.random(length) < cfg.generic_token_rate) if n_generic else np.zeros(length, dtype=bool)
    n_g = min(int(is_generic.sum()), n_generic)
    generic = rng.choice(n_generic, size=n_g, replace=False).tolist() if n_g else []
    content = (n_generic + rng.choice(n_content, size=length - n_g, replace=False)).tolist()
    question = generic + content
    rng.shuffle(question)

    m = len(question)
    if truth:
        k = int(rng.integers(math.ceil(0.7 * m), m + 1))
        embedded = rng.choice(question, size=k, replace=False).tolist()
    else:
        embedded = [t for t in generic if rng.random() < cfg.generic_leak]
        max_content = int(0.2 * len(content))
        if max_content:
            k = int(rng.integers(0, max_content + 1))
            embedded += rng.choice(content, size=k, replace=False).tolist()

    lo, hi = cfg.passage_length
    p_len = max(int(rng.integers(lo, hi + 1)), len(embedded))
    q_set = set(question)
    fillers: list[int] = []
    while len(fillers) < p_len - len(embedded):
        if n_generic and rng.random() < cfg.generic_token_rate:
            t = int(rng.integers(0, n_generic))
        else:
            t = n_generic + int(rng.integers(0, n_content))
        if t not in q_set:
            fillers.append(t)
    passage = embedded + fillers
    rng.shuffle(passage)
    qp = QAPair(cfg.qp_id(i), " ".join(map(_tok, question)), " ".join(map(_tok, passage)))
    return SimPair(qp, truth, i)


def gen_pairs(cfg: SimConfig, start: int = 0) -> list[SimPair]:
    """Pairs ``start .. start + n_pairs - 1``; each depends only on its index."""
    if start < 0:
        raise ValueError("start must be non-negative")
    return [_make_pair(cfg, i) for i in range(start, start + cfg.n_pairs)]


def is_generic_token(cfg: SimConfig, token: str) -> bool:
    return int(token[1:]) < _vocab_split(cfg)[0]


def _pair_action_probs(prof: BehaviorProfile, mult: float) -> np.ndarray:
    p = np.array(prof.action_probs(), dtype=np.float64)
    p[1] *= mult
    p[3] *= mult
    # absorb the change in the no-click mass, renormalize if it runs out
    p[0] = max(0.0, 1.0 - p[1:].sum())
    return p / p.sum()


def _ms(mu: float, sigma: float, z: float) -> int:
    return max(1, int(math.exp(mu + sigma * z)))


_QUERY, _SERP, _CLICK = EventKind.QUERY, EventKind.SERP, EventKind.CLICK
_TARGET = {t.value: t for t in ClickTarget}


def _session_events(cfg: SimConfig, sp: SimPair) -> list[SessionEvent]:
    rng = _rng(cfg, _STREAM_BEHAVIOR, sp.index)
    flipped_pair = rng.random() < cfg.pair_flip_rate
    behaves_relevant = sp.truth != flipped_pair
    own = cfg.relevant if behaves_relevant else cfg.irrelevant
    other = cfg.irrelevant if behaves_relevant else cfg.relevant
    k = own.answer_click_dispersion
    mult = float(rng.gamma(k, 1.0 / k)) if k > 0 else 1.0
    cum = (np.cumsum(_pair_action_probs(own, mult)), np.cumsum(_pair_action_probs(other, mult)))

    n = int(rng.poisson(cfg.impressions_per_pair))
    # all randomness for the pair is drawn up front, one row per impression
    use_other = (rng.random(n) < own.behavior_noise).tolist()
    u_pattern = rng.random(n)
    patterns = [
        np.minimum(np.searchsorted(cum[0], u_pattern, side="right"), 4).tolist(),
        np.minimum(np.searchsorted(cum[1], u_pattern, side="right"), 4).tolist(),
    ]
    serp_offset = rng.integers(50, 500, size=n).tolist()
    u = rng.random((n, 4)).tolist()  # expansion, click order, related, reformulation
    z = rng.standard_normal((n, 5)).tolist()  # serp wait, then one gap per click

    qp = sp.pair.qp_id
    text = sp.pair.question
    events: list[SessionEvent] = []
    sid = ""
    t = 0
    for j in range(n):
        alt = use_other[j]
        prof = other if alt else own
        pattern = PATTERNS[patterns[alt][j]]
        uj = u[j]
        zj = z[j]
        # with multi-impression sessions, odd impressions continue the previous session
        if not (cfg.multi_impression_sessions and j % 2 == 1):
            sid = f"{qp}-{j}"
            t = 0
        events.append(SessionEvent(sid, t, _QUERY, text, None, None))
        t += serp_offset[j]
        events.append(SessionEvent(sid, t, _SERP, None, qp, None))

        clicks: list[str] = []
        if pattern == "other_only":
            total = prof.p_answer_expansion + prof.p_related_click
            expansion = total == 0 or uj[0] * total < prof.p_answer_expansion
            clicks.append("answer_expansion" if expansion else "related")
        elif pattern != "no_click":
            if uj[0] < prof.p_answer_expansion:
                clicks.append("answer_expansion")
            if pattern == "answer_only":
                clicks.append("answer")
            elif pattern == "ot_only":
                clicks.append("outside_answer")
            elif uj[1] < 0.5:
                clicks += ["answer", "outside_answer"]
            else:
                clicks += ["outside_answer", "answer"]
            if uj[2] < prof.p_related_click:
                clicks.append("related")

        gap = _ms(prof.serp_dwell_mu, prof.serp_dwell_sigma, zj[0])
        satisfied = False
        for c, target in enumerate(clicks, start=1):
            t += gap
            events.append(SessionEvent(sid, t, _CLICK, None, None, _TARGET[target]))
            if target == "answer" or target == "outside_answer":
                gap = _ms(prof.source_dwell_mu, prof.source_dwell_sigma, zj[c])
                satisfied = satisfied or gap >= USER_SAT_MS
            else:
                gap = _ms(prof.serp_dwell_mu, prof.serp_dwell_sigma, zj[c])
        if not satisfied and uj[3] < prof.p_reformulate_given_no_sat:
            t += gap
            events.append(SessionEvent(sid, t, _QUERY, text, None, None))
        t += gap
    return events


def iter_session_events(pairs: Sequence[SimPair], cfg: SimConfig) -> Iterator[SessionEvent]:
    """Events in log order; ``gen_sessions`` is exactly these, serialized."""
    for sp in pairs:
        yield from _session_events(cfg, sp)


def format_event(ev: SessionEvent, text_json: str | None = None) -> str:
    """One compact JSON line; ``text_json`` may carry a pre-encoded query text."""
    if ev.kind is _QUERY:
        text = text_json if text_json is not None else json.dumps(ev.text)
        return f'{{"session":{json.dumps(ev.session_id)},"ts":{ev.ts_ms},"kind":"query","text":{text}}}'
    if ev.kind is _SERP:
        return f'{{"session":{json.dumps(ev.session_id)},"ts":{ev.ts_ms},"kind":"serp","qp":{json.dumps(ev.qp_id)}}}'
    return f'{{"session":{json.dumps(ev.session_id)},"ts":{ev.ts_ms},"kind":"click","target":"{ev.target.value}"}}'


def iter_session_lines(pairs: Sequence[SimPair], cfg: SimConfig) -> Iterator[str]:
    for sp in pairs:
        text_json = json.dumps(sp.pair.question)
        for ev in _session_events(cfg, sp):
            yield format_event(ev, text_json)


def gen_sessions(pairs: Sequence[SimPair], cfg: SimConfig) -> list[str]:
    """JSON Lines event log, one session per impression by default."""
    return list(iter_session_lines(pairs, cfg))


def majority_vote(judge_labels: Sequence[bool]) -> bool:
    n = len(judge_labels)
    if n == 0 or n % 2 == 0:
        raise EvenPanel(f"majority vote needs an odd, non-zero panel (got {n})")
    return sum(bool(x) for x in judge_labels) * 2 > n


def gen_gold_labels(pairs: Sequence[SimPair], cfg: SimConfig) -> list[tuple[str, bool]]:
    """Each judge flips the truth with probability ``judge_error_rate``."""
    out = []
    for sp in pairs:
        rng = _rng(cfg, _STREAM_JUDGES, sp.index)
        flips = rng.random(cfg.n_judges) < cfg.judge_error_rate
        votes = [sp.truth != bool(f) for f in flips]
        out.append((sp.pair.qp_id, majority_vote(votes)))
    return out


def profile_to_dict(p: BehaviorProfile) -> dict[str, float]:
    return {f.name: getattr(p, f.name) for f in fields(p)}


def profile_from_dict(d: dict[str, float], base: BehaviorProfile) -> BehaviorProfile:
    return replace(base, **{k: float(v) for k, v in d.items()})
