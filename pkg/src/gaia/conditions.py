"""Rule condition language: parsing, three-valued evaluation, and state snapshots.

Grammar (case-insensitive keywords, lowercase paths):

    expr        := term (OR term)*
    term        := factor (AND factor)*
    factor      := NOT factor | '(' expr ')' | comparison | empty
    comparison  := metric(path, kind[, window]) op number
                 | light(path) is on|off
    empty       := empty(path[, duration])
    window      := (mean|max|min|sum) duration
    duration    := <int>s | <int>m | <int>h
    op          := > | >= | < | <= | = | !=   (unicode >=/<=/!= accepted)

A comparison is Unknown when its metric is missing or stale; And/Or/Not follow
Kleene logic, so a rule can only fire on a definite true.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .model import ResourceTree, SensorKind
from .store import SeriesStore


class Truth(Enum):
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"


def kleene_not(a: Truth) -> Truth:
    if a is Truth.TRUE:
        return Truth.FALSE
    if a is Truth.FALSE:
        return Truth.TRUE
    return Truth.UNKNOWN


def kleene_and(a: Truth, b: Truth) -> Truth:
    if a is Truth.FALSE or b is Truth.FALSE:
        return Truth.FALSE
    if a is Truth.TRUE and b is Truth.TRUE:
        return Truth.TRUE
    return Truth.UNKNOWN


def kleene_or(a: Truth, b: Truth) -> Truth:
    if a is Truth.TRUE or b is Truth.TRUE:
        return Truth.TRUE
    if a is Truth.FALSE and b is Truth.FALSE:
        return Truth.FALSE
    return Truth.UNKNOWN


# -- AST ----------------------------------------------------------------------

WINDOW_AGGS = ("mean", "max", "min", "sum")


@dataclass(frozen=True)
class Window:
    duration_s: int
    agg: str  # one of WINDOW_AGGS


@dataclass(frozen=True)
class MetricRef:
    path: str
    kind: SensorKind
    window: Window | None = None

    @property
    def key(self) -> str:
        base = f"{self.kind.value}@{self.path}"
        if self.window:
            return f"{base}[{self.window.agg} {self.window.duration_s}s]"
        return base


@dataclass(frozen=True)
class Comparison:
    ref: MetricRef
    op: str
    literal: float


@dataclass(frozen=True)
class EmptyCheck:
    path: str
    dwell_s: int | None = None  # engine default applies when None


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Or:
    left: object
    right: object


@dataclass(frozen=True)
class Not:
    child: object


EMPTY_EVIDENCE_KINDS = (SensorKind.OCCUPANCY_COUNT, SensorKind.ACTIVITY_COUNT)


def referenced_metrics(node) -> set[tuple[str, SensorKind]]:
    """(path, kind) pairs a condition reads; drives reading-triggered re-evaluation."""
    if isinstance(node, Comparison):
        return {(node.ref.path, node.ref.kind)}
    if isinstance(node, EmptyCheck):
        return {(node.path, k) for k in EMPTY_EVIDENCE_KINDS}
    if isinstance(node, Not):
        return referenced_metrics(node.child)
    if isinstance(node, (And, Or)):
        return referenced_metrics(node.left) | referenced_metrics(node.right)
    raise TypeError(f"not a condition node: {node!r}")


# -- parsing -------------------------------------------------------------------


class ConditionSyntaxError(Exception):
    """Malformed condition text; `token_index` is 1-based, `offset` a char position."""

    def __init__(self, message: str, token_index: int, offset: int):
        super().__init__(f"syntax error at token {token_index}: {message}")
        self.token_index = token_index
        self.offset = offset


class UnknownKind(Exception):
    pass


class UnknownPath(Exception):
    pass


_TOKEN_RE = re.compile(
    r"""
    (?P<WS>\s+)
  | (?P<DURATION>\d+[smh]\b)
  | (?P<NUMBER>-?\d+(\.\d+)?([eE][+-]?\d+)?)
  | (?P<IDENT>[A-Za-z0-9_-]+(/[A-Za-z0-9_-]+)*)
  | (?P<OP>>=|<=|!=|≥|≤|≠|=|>|<)
  | (?P<LPAREN>\()
  | (?P<RPAREN>\))
  | (?P<COMMA>,)
""",
    re.VERBOSE,
)

_OP_CANON = {"≥": ">=", "≤": "<=", "≠": "!="}
_KEYWORDS = {"and", "or", "not", "empty", "metric", "light", "is", "on", "off"}
_DURATION_UNITS = {"s": 1, "m": 60, "h": 3600}


@dataclass(frozen=True)
class _Token:
    type: str
    text: str
    offset: int
    index: int  # 1-based


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ConditionSyntaxError(
                f"unexpected character {text[pos]!r}", len(tokens) + 1, pos
            )
        kind = m.lastgroup
        if kind != "WS":
            tok_text = m.group()
            if kind == "IDENT" and tok_text.lower() in _KEYWORDS:
                kind = tok_text.lower().upper()
                tok_text = tok_text.lower()
            elif kind == "OP":
                tok_text = _OP_CANON.get(tok_text, tok_text)
            tokens.append(_Token(kind, tok_text, pos, len(tokens) + 1))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], text: str, resolver):
        self.tokens = tokens
        self.text = text
        self.resolve = resolver
        self.pos = 0

    def _fail(self, message: str):
        if self.pos < len(self.tokens):
            tok = self.tokens[self.pos]
            raise ConditionSyntaxError(f"{message}, got {tok.text!r}", tok.index, tok.offset)
        raise ConditionSyntaxError(f"{message}, got end of input", len(self.tokens) + 1, len(self.text))

    def _peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _accept(self, type_: str) -> _Token | None:
        tok = self._peek()
        if tok is not None and tok.type == type_:
            self.pos += 1
            return tok
        return None

    def _expect(self, type_: str, what: str) -> _Token:
        tok = self._accept(type_)
        if tok is None:
            self._fail(f"expected {what}")
        return tok

    def parse(self):
        node = self.expr()
        if self.pos != len(self.tokens):
            self._fail("unexpected trailing input")
        return node

    def expr(self):
        node = self.term()
        while self._accept("OR"):
            node = Or(node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self._accept("AND"):
            node = And(node, self.factor())
        return node

    def factor(self):
        if self._accept("NOT"):
            return Not(self.factor())
        if self._accept("LPAREN"):
            node = self.expr()
            self._expect("RPAREN", "')'")
            return node
        if self._accept("EMPTY"):
            return self.empty_check()
        if self._accept("METRIC"):
            return self.metric_comparison()
        if self._accept("LIGHT"):
            return self.light_comparison()
        self._fail("expected a comparison, empty(...), NOT, or '('")

    def _path(self) -> str:
        tok = self._expect("IDENT", "a resource path")
        return self.resolve(tok.text, tok)

    def empty_check(self) -> EmptyCheck:
        self._expect("LPAREN", "'(' after empty")
        path = self._path()
        dwell = None
        if self._accept("COMMA"):
            tok = self._expect("DURATION", "a duration like 900s")
            dwell = self._duration_s(tok)
        self._expect("RPAREN", "')'")
        return EmptyCheck(path=path, dwell_s=dwell)

    @staticmethod
    def _duration_s(tok: _Token) -> int:
        return int(tok.text[:-1]) * _DURATION_UNITS[tok.text[-1]]

    def metric_comparison(self) -> Comparison:
        self._expect("LPAREN", "'(' after metric")
        path = self._path()
        self._expect("COMMA", "',' before the sensor kind")
        kind_tok = self._expect("IDENT", "a sensor kind")
        try:
            kind = SensorKind(kind_tok.text)
        except ValueError:
            raise UnknownKind(f"unknown sensor kind {kind_tok.text!r} at token {kind_tok.index}") from None
        window = None
        if self._accept("COMMA"):
            agg_tok = self._expect("IDENT", f"a window aggregate {WINDOW_AGGS}")
            if agg_tok.text not in WINDOW_AGGS:
                self.pos -= 1
                self._fail(f"expected a window aggregate {WINDOW_AGGS}")
            dur_tok = self._expect("DURATION", "a duration like 900s")
            window = Window(duration_s=self._duration_s(dur_tok), agg=agg_tok.text)
        self._expect("RPAREN", "')'")
        op_tok = self._expect("OP", "a comparison operator")
        num_tok = self._expect("NUMBER", "a number")
        return Comparison(MetricRef(path, kind, window), op_tok.text, float(num_tok.text))

    def light_comparison(self) -> Comparison:
        self._expect("LPAREN", "'(' after light")
        path = self._path()
        self._expect("RPAREN", "')'")
        self._expect("IS", "'is'")
        if self._accept("ON"):
            state = 1.0
        elif self._accept("OFF"):
            state = 0.0
        else:
            self._fail("expected 'on' or 'off'")
        return Comparison(MetricRef(path, SensorKind.LIGHT_STATE), "=", state)


def resolve_ref_path(tree: ResourceTree, target_path: str | None, ref_path: str) -> str:
    """Canonicalize a path mentioned in a condition.

    Absolute canonical paths pass through; otherwise the name is matched as a
    path suffix under the rule's target subtree first, then along the target's
    ancestor chain. The match must be unique.
    """
    if tree.has_path(ref_path):
        return ref_path
    if target_path is None or not tree.has_path(target_path):
        raise UnknownPath(f"unknown resource path {ref_path!r}")
    target = tree.node_at(target_path)
    search: list[str] = [tree.canonical_path(nid) for nid in tree.subtree_ids(target.id)]
    cur = tree.nodes[target.id].parent
    while cur is not None:
        search.append(tree.canonical_path(cur))
        cur = tree.nodes[cur].parent
    suffix = "/" + ref_path
    matches = sorted({p for p in search if p == ref_path or p.endswith(suffix)})
    if not matches:
        raise UnknownPath(f"unknown resource path {ref_path!r} near {target_path!r}")
    if len(matches) > 1:
        raise UnknownPath(f"{ref_path!r} is ambiguous near {target_path!r}: {matches}")
    return matches[0]


def parse_condition(text: str, tree: ResourceTree | None = None, target: str | None = None):
    """Parse condition text into an AST.

    With a tree, every referenced path is resolved relative to `target` and
    canonicalized; without one, paths are taken verbatim (syntax-only parse).
    """
    if not text or not text.strip():
        raise ConditionSyntaxError("empty condition", 1, 0)
    if tree is None:
        resolver = lambda p, tok: p
    else:
        def resolver(p, tok):
            return resolve_ref_path(tree, target, p)
    return _Parser(_tokenize(text), text, resolver).parse()


# -- evaluation ------------------------------------------------------------------

_OPS: dict[str, Callable[[float, float], bool]] = {
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


class StateSnapshot:
    """Immutable view of metric state at instant `now`.

    Values are read lazily from the store and cached, so repeated lookups
    within one evaluation are consistent. A latest-value lookup returns None
    when the freshest sample is older than the series' staleness horizon
    (twice its nominal interval, or the configured default).
    """

    def __init__(
        self,
        store: SeriesStore,
        series_lookup: Callable[[str, SensorKind], list],
        now: int,
        default_staleness_s: int = 900,
    ):
        self.store = store
        self.series_lookup = series_lookup
        self.now = now
        self.default_staleness_s = default_staleness_s
        self._cache: dict = {}

    def _staleness(self, meta) -> int:
        if meta.nominal_interval_s:
            return 2 * meta.nominal_interval_s
        return self.default_staleness_s

    def latest(self, path: str, kind: SensorKind) -> tuple[float, int] | None:
        key = ("latest", path, kind)
        if key not in self._cache:
            best = None
            for meta in self.series_lookup(path, kind):
                p = self.store.last_at(meta.series_id, self.now)
                if p is None or self.now - p.ts > self._staleness(meta):
                    continue
                if best is None or p.ts > best[1]:
                    best = (p.value, p.ts)
            self._cache[key] = best
        return self._cache[key]

    def window_points(self, path: str, kind: SensorKind, seconds: int) -> list[tuple[int, float]]:
        """Merged samples across sources with now-seconds <= ts <= now."""
        key = ("window", path, kind, seconds)
        if key not in self._cache:
            pts: list[tuple[int, float]] = []
            for meta in self.series_lookup(path, kind):
                for p in self.store.query_range(meta.series_id, self.now - seconds, self.now + 1):
                    pts.append((p.ts, p.value))
            pts.sort()
            self._cache[key] = pts
        return self._cache[key]

    def carry_in(self, path: str, kind: SensorKind, window_start: int) -> tuple[int, float] | None:
        """Freshest sample strictly before `window_start` (any source)."""
        key = ("carry", path, kind, window_start)
        if key not in self._cache:
            best = None
            for meta in self.series_lookup(path, kind):
                p = self.store.last_at(meta.series_id, window_start - 1)
                if p is not None and (best is None or p.ts > best[0]):
                    best = (p.ts, p.value)
            self._cache[key] = best
        return self._cache[key]

    def window_value(self, ref: MetricRef) -> tuple[float, int] | None:
        pts = self.window_points(ref.path, ref.kind, ref.window.duration_s)
        if not pts:
            return None
        values = [v for _, v in pts]
        agg = ref.window.agg
        if agg == "mean":
            return (math.fsum(values) / len(values), self.now)
        if agg == "sum":
            return (math.fsum(values), self.now)
        if agg == "max":
            return (max(values), self.now)
        return (min(values), self.now)


def empty_predicate(path: str, snap: StateSnapshot, dwell_s: int) -> Truth:
    truth, _ = empty_with_evidence(path, snap, dwell_s)
    return truth


def empty_with_evidence(
    path: str, snap: StateSnapshot, dwell_s: int
) -> tuple[Truth, tuple[SensorKind, float, int] | None]:
    """Room emptiness with sample-and-hold semantics over [now-dwell, now].

    True only when every occupancy/activity indicator is known to be <= 0 for
    the whole dwell window; any positive sample (or a positive value carried
    into the window) is a definite False. No samples in the window, or a
    window whose start is not covered by any sample, is Unknown.
    """
    if dwell_s <= 0:
        raise ValueError("dwell_s must be positive")
    ws = snap.now - dwell_s
    any_samples = False
    covered = False
    evidence: tuple[SensorKind, float, int] | None = None
    for kind in EMPTY_EVIDENCE_KINDS:
        pts = snap.window_points(path, kind, dwell_s)
        carry = snap.carry_in(path, kind, ws)
        if pts:
            any_samples = True
            ts, value = pts[-1]
            if evidence is None or ts > evidence[2]:
                evidence = (kind, value, ts)
        for ts, value in pts:
            if value > 0:
                return Truth.FALSE, (kind, value, ts)
        if carry is not None and carry[1] > 0:
            # Positive value held into the window: empty only if superseded at
            # the window start itself.
            if not pts or pts[0][0] > ws:
                return Truth.FALSE, (kind, carry[1], carry[0])
        if carry is not None or (pts and pts[0][0] == ws):
            covered = True
    if not any_samples:
        return Truth.UNKNOWN, None
    if not covered:
        return Truth.UNKNOWN, None
    return Truth.TRUE, evidence


def evaluate(cond, snap: StateSnapshot, default_dwell_s: int = 900) -> Truth:
    truth, _ = evaluate_with_bindings(cond, snap, default_dwell_s)
    return truth


def evaluate_with_bindings(
    cond, snap: StateSnapshot, default_dwell_s: int = 900
) -> tuple[Truth, dict[str, tuple[float, int]]]:
    """Kleene-evaluate a condition, collecting each definite leaf observation.

    Both branches of And/Or are always evaluated so the recorded bindings do
    not depend on short-circuit order.
    """
    bindings: dict[str, tuple[float, int]] = {}

    def walk(node) -> Truth:
        if isinstance(node, Comparison):
            obs = snap.window_value(node.ref) if node.ref.window else snap.latest(node.ref.path, node.ref.kind)
            if obs is None:
                return Truth.UNKNOWN
            value, ts = obs
            bindings[node.ref.key] = (value, ts)
            return Truth.TRUE if _OPS[node.op](value, node.literal) else Truth.FALSE
        if isinstance(node, EmptyCheck):
            dwell = node.dwell_s if node.dwell_s is not None else default_dwell_s
            truth, evidence = empty_with_evidence(node.path, snap, dwell)
            if evidence is not None:
                kind, value, ts = evidence
                bindings[f"{kind.value}@{node.path}"] = (value, ts)
            return truth
        if isinstance(node, Not):
            return kleene_not(walk(node.child))
        if isinstance(node, And):
            return kleene_and(walk(node.left), walk(node.right))
        if isinstance(node, Or):
            return kleene_or(walk(node.left), walk(node.right))
        raise TypeError(f"not a condition node: {node!r}")

    return walk(cond), bindings
