"""Recursive inference driver: tag, decode, constrain, recurse.

Each step tags the whole sentence with a mask describing the focus node,
decodes BIO probabilities into child spans, applies the structural
constraints, then recurses into every multi-token child with an updated
mask until terminal nodes are reached. Remote spans are resolved against
the finished primary tree.
"""

from dataclasses import dataclass, field

import numpy as np

from . import bio
from .corpus import MaskedExample
from .graph import (OUTSIDE, ROOT_MASK, Edge, Node, Passage, validate)
from .lexicon import match

# upos tags whose uncovered tokens fall back to Function instead of Center
FUNCTION_UPOS = frozenset({"ADP", "DET", "AUX", "CCONJ", "SCONJ", "PART"})

_SP_LABEL_IDS = tuple(bio.BIO_INDEX[lb]
                      for lb in ("B-S", "I-S", "B-P", "I-P"))
_S_LABEL_IDS = tuple(bio.BIO_INDEX[lb] for lb in ("B-S", "I-S"))


@dataclass(frozen=True)
class DecoderConfig:
    remote_threshold: float = 0.3
    max_depth: int = 20
    action_noun_lexicon: object = None  # ExpressionLexicon or None
    verb_upos: frozenset = frozenset({"VERB"})

    def __post_init__(self):
        if not 0.0 <= self.remote_threshold <= 1.0:
            raise ValueError("remote threshold must be in [0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass
class TraceStep:
    depth: int
    focus: tuple  # (start, end)
    arc: str
    mask: tuple
    decoded_primary: tuple
    decoded_remote: tuple
    constrained: tuple
    firings: tuple

    def render(self):
        return ("depth=%d focus=%s arc=%s decoded=%s remote=%s "
                "constrained=%s firings=%s"
                % (self.depth, self.focus, self.arc,
                   [(s.start, s.end, s.category)
                    for s in self.decoded_primary],
                   [(s.start, s.end, s.category)
                    for s in self.decoded_remote],
                   [(s.start, s.end, s.category) for s in self.constrained],
                   list(self.firings)))


@dataclass
class ParseTrace:
    steps: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def render(self):
        lines = [s.render() for s in self.steps]
        lines.extend("note: %s" % n for n in self.notes)
        return "\n".join(lines)


class ParseError(RuntimeError):
    pass


def _span_qualifies_as_scene(span, tokens, cfg, action_flags):
    for i in span.positions():
        if tokens[i].upos in cfg.verb_upos:
            return True
        if action_flags[i]:
            return True
    return False


def _merge_scene_spans(spans, tokens, cfg, firings):
    """Constraint 1: an H span with no verb/action noun is merged into the
    nearest preceding qualifying H span (else the nearest following one).
    Spans swallowed by the merged interval are absorbed."""
    if cfg.action_noun_lexicon is not None:
        action_flags = match(cfg.action_noun_lexicon, tokens).flags
    else:
        action_flags = (False,) * len(tokens)
    spans = sorted(spans, key=lambda s: s.start)
    while True:
        h_spans = [s for s in spans if s.category == "H"]
        qualifying = [s for s in h_spans
                      if _span_qualifies_as_scene(s, tokens, cfg,
                                                  action_flags)]
        weak = [s for s in h_spans if s not in qualifying]
        if not weak or not qualifying:
            return spans
        target_spans = None
        for w in weak:
            before = [q for q in qualifying if q.start < w.start]
            after = [q for q in qualifying if q.start > w.start]
            if before:
                target_spans = (before[-1], w)
                firings.append("scene-merge backward %s<-%s"
                               % ((before[-1].start, before[-1].end),
                                  (w.start, w.end)))
            elif after:
                target_spans = (w, after[0])
                firings.append("scene-merge forward %s->%s"
                               % ((w.start, w.end),
                                  (after[0].start, after[0].end)))
            if target_spans:
                break
        if not target_spans:
            return spans
        left, right = target_spans
        merged = bio.ChildSpan(left.start, right.end, "H", False)
        spans = [s for s in spans
                 if s.end <= merged.start or s.start >= merged.end]
        spans.append(merged)
        spans.sort(key=lambda s: s.start)


def _force_single_state_process(spans, dist, focus, firings):
    """Constraint 2: exactly one S/P child within a scene, chosen by the
    token with the highest S/P probability."""
    sp = [s for s in spans if s.category in ("S", "P")]
    if len(sp) == 1:
        return spans
    start, end = focus
    sub = dist.task1[start:end][:, _SP_LABEL_IDS]
    flat = int(np.argmax(sub))
    token = start + flat // len(_SP_LABEL_IDS)
    label_id = _SP_LABEL_IDS[flat % len(_SP_LABEL_IDS)]
    winner_cat = "S" if label_id in _S_LABEL_IDS else "P"
    out = []
    placed = False
    for s in sorted(spans, key=lambda x: x.start):
        if s.start <= token < s.end:
            out.append(bio.ChildSpan(s.start, s.end, winner_cat, False))
            placed = True
        elif s.category in ("S", "P"):
            out.append(bio.ChildSpan(s.start, s.end, "C", False))
        else:
            out.append(s)
    if not placed:
        out.append(bio.ChildSpan(token, token + 1, winner_cat, False))
        out.sort(key=lambda s: s.start)
    firings.append("force-single-SP token=%d category=%s"
                   % (token, winner_cat))
    return out


def _mwe_integrity(spans, mwe_spans, focus, firings):
    """Constraint 3: no H/A span boundary may fall strictly inside an MWE
    span. Adjacent spans sharing such a boundary are merged (left category
    wins); otherwise the span is extended to the MWE edge, absorbing any
    overlap."""
    start_f, end_f = focus

    def inside_mwe(boundary):
        for ms, me in mwe_spans:
            if ms < boundary < me:
                return (ms, me)
        return None

    spans = sorted(spans, key=lambda s: s.start)
    for _ in range(10 * (len(spans) + len(mwe_spans)) + 10):
        violation = None
        for s in spans:
            if s.category not in ("H", "A"):
                continue
            for boundary, is_start in ((s.start, True), (s.end, False)):
                if boundary in (start_f, end_f):
                    continue
                mwe = inside_mwe(boundary)
                if mwe is not None:
                    violation = (s, boundary, is_start, mwe)
                    break
            if violation:
                break
        if violation is None:
            return spans
        s, boundary, is_start, mwe = violation
        neighbor = None
        for q in spans:
            if q is s:
                continue
            if (is_start and q.end == boundary) or \
                    (not is_start and q.start == boundary):
                neighbor = q
                break
        if neighbor is not None:
            left, right = (neighbor, s) if is_start else (s, neighbor)
            merged = bio.ChildSpan(left.start, right.end, left.category,
                                   False)
            firings.append("mwe-merge (%d,%d)+(%d,%d)"
                           % (left.start, left.end, right.start, right.end))
            spans = [t for t in spans if t is not s and t is not neighbor]
        else:
            new_start = max(mwe[0], start_f) if is_start else s.start
            new_end = min(mwe[1], end_f) if not is_start else s.end
            involved = [t for t in spans
                        if t.start < new_end and t.end > new_start]
            new_start = min([new_start] + [t.start for t in involved])
            new_end = max([new_end] + [t.end for t in involved])
            category = min(involved, key=lambda t: t.start).category \
                if involved else s.category
            merged = bio.ChildSpan(new_start, new_end, category, False)
            firings.append("mwe-extend (%d,%d)->(%d,%d)"
                           % (s.start, s.end, new_start, new_end))
            spans = [t for t in spans if t not in involved]
        spans = [t for t in spans
                 if t.end <= merged.start or t.start >= merged.end]
        spans.append(merged)
        spans.sort(key=lambda s: s.start)
    return spans


def apply_constraints(spans, tokens, dist, mwe_mask, cfg: DecoderConfig,
                      at_scene_level, focus=None, firings=None):
    """The three decoding constraints, in order; returns sorted spans."""
    if firings is None:
        firings = []
    if focus is None:
        focus = (0, len(tokens))
    spans = _merge_scene_spans(list(spans), tokens, cfg, firings)
    if at_scene_level:
        spans = _force_single_state_process(spans, dist, focus, firings)
    spans = _mwe_integrity(spans, mwe_mask.spans, focus, firings)
    # MWE merging may have removed the scene's only S/P span; restore it.
    if at_scene_level and \
            len([s for s in spans if s.category in ("S", "P")]) != 1:
        spans = _force_single_state_process(spans, dist, focus, firings)
    return sorted(spans, key=lambda s: s.start)


def _fallback_category(token):
    return "F" if token.upos in FUNCTION_UPOS else "C"


class _Builder:
    def __init__(self, tokens, passage_id, language):
        self.tokens = tokens
        self.passage_id = passage_id
        self.language = language
        self.nodes = []
        self.edges = []
        self.depths = {}
        self.spans = {}
        self._next = 0
        for i in range(len(tokens)):
            self.nodes.append(Node(id="t%d" % i, kind="terminal",
                                   position=i))

    def new_nonterminal(self, span, depth):
        nid = "n%d" % self._next
        self._next += 1
        self.nodes.append(Node(id=nid, kind="nonterminal"))
        self.depths[nid] = depth
        self.spans[nid] = span
        return nid

    def add_edge(self, parent, child, category, remote=False):
        self.edges.append(Edge(parent=parent, child=child,
                               category=category, remote=remote))

    def passage(self):
        nonterms = [n for n in self.nodes if not n.is_terminal()]
        terms = [n for n in self.nodes if n.is_terminal()]
        return Passage(passage_id=self.passage_id, language=self.language,
                       tokens=tuple(self.tokens),
                       nodes=tuple(nonterms + terms),
                       edges=tuple(self.edges), root="n0")


def parse(tokens, tagger, ctx, cfg: DecoderConfig, passage_id="s0",
          language=None):
    """-> (Passage, ParseTrace). The returned passage always validates and
    every node yield is contiguous."""
    if not tokens:
        raise ParseError("empty token sequence")
    tokens = tuple(tokens)
    language = language or tokens[0].language
    builder = _Builder(tokens, passage_id, language)
    trace = ParseTrace()
    mwe_mask = match(ctx.lexicon, tokens)
    pending_remotes = []

    def tag(focus_node, span, mask_symbol):
        mask = tuple(mask_symbol if span[0] <= i < span[1] else OUTSIDE
                     for i in range(len(tokens)))
        example = MaskedExample(passage_id=passage_id, tokens=tokens,
                                mask=mask, focus_node=focus_node)
        feats = ctx.featurize(example)
        return example.mask, tagger.predict(example, feats)

    def attach_flat(node_id, span, force_sp):
        start, end = span
        sp_pos = None
        if force_sp:
            verbs = [i for i in range(start, end)
                     if tokens[i].upos in cfg.verb_upos]
            sp_pos = verbs[0] if verbs else start
        for i in range(start, end):
            if i == sp_pos:
                builder.add_edge(node_id, "t%d" % i, "P")
            else:
                builder.add_edge(node_id, "t%d" % i,
                                 _fallback_category(tokens[i]))

    def expand_node(node_id, span, mask_symbol, depth, incoming_is_h):
        start, end = span
        if depth >= cfg.max_depth:
            trace.notes.append("depth cap at node %s span %s"
                               % (node_id, (start, end)))
            attach_flat(node_id, span, force_sp=incoming_is_h)
            return
        mask, dist = tag(node_id, span, mask_symbol)
        primary, remote = bio.decode_probs(dist, cfg.remote_threshold)
        firings = []

        kept = []
        for s in primary:
            if s.end <= start or s.start >= end:
                firings.append("drop out-of-focus span (%d,%d)"
                               % (s.start, s.end))
                continue
            if s.start < start or s.end > end:
                firings.append("clip span (%d,%d) to focus"
                               % (s.start, s.end))
                s = bio.ChildSpan(max(s.start, start), min(s.end, end),
                                  s.category, False)
            kept.append(s)

        scene_level = incoming_is_h or (
            mask_symbol == ROOT_MASK
            and not any(s.category == "H" for s in kept))
        spans = apply_constraints(kept, tokens, dist, mwe_mask, cfg,
                                  scene_level, focus=span, firings=firings)

        # Cover focus tokens missed by every child span.
        covered = set()
        for s in spans:
            covered.update(s.positions())
        children = list(spans)
        for i in range(start, end):
            if i not in covered:
                children.append(bio.ChildSpan(i, i + 1,
                                              _fallback_category(tokens[i]),
                                              False))
        children.sort(key=lambda s: s.start)

        trace.steps.append(TraceStep(
            depth=depth, focus=span, arc=mask_symbol, mask=mask,
            decoded_primary=tuple(primary), decoded_remote=tuple(remote),
            constrained=tuple(children), firings=tuple(firings)))

        for s in remote:
            pending_remotes.append((node_id, (s.start, s.end), s.category))

        for s in children:
            if s.end - s.start == 1:
                builder.add_edge(node_id, "t%d" % s.start, s.category)
            else:
                child_id = builder.new_nonterminal((s.start, s.end),
                                                   depth + 1)
                builder.add_edge(node_id, child_id, s.category)
                expand_node(child_id, (s.start, s.end), s.category,
                            depth + 1, s.category == "H")

    root = builder.new_nonterminal((0, len(tokens)), 0)
    expand_node(root, (0, len(tokens)), ROOT_MASK, 1, incoming_is_h=False)

    # Remote resolution: attach each remote span to the deepest node whose
    # primary yield equals the span.
    span_to_node = {}
    for nid, (s, e) in builder.spans.items():
        best = span_to_node.get((s, e))
        if best is None or builder.depths[nid] > builder.depths[best]:
            span_to_node[(s, e)] = nid
    for i in range(len(tokens)):
        span_to_node.setdefault((i, i + 1), "t%d" % i)
    existing = {(e.parent, e.child, e.category, e.remote)
                for e in builder.edges}
    for parent, span, category in pending_remotes:
        target = span_to_node.get(span)
        if target is None or target == parent or target == root:
            trace.notes.append("dropped remote %s %s from %s"
                               % (category, span, parent))
            continue
        key = (parent, target, category, True)
        if key in existing or (parent, target, category, False) in existing:
            trace.notes.append("duplicate remote %s %s from %s"
                               % (category, span, parent))
            continue
        existing.add(key)
        builder.add_edge(parent, target, category, remote=True)

    passage = builder.passage()
    violations = validate(passage, require_contiguous=True)
    if violations:
        raise ParseError("parser produced invalid passage: %s"
                         % "; ".join(violations))
    return passage, trace


@dataclass
class ParseResult:
    passage: object = None
    trace: object = None
    error: str = None


def parse_batch(sentences, tagger, ctx, cfg: DecoderConfig,
                passage_ids=None):
    """Element-wise parse with per-sentence failure isolation."""
    results = []
    for i, tokens in enumerate(sentences):
        pid = passage_ids[i] if passage_ids else "s%d" % i
        try:
            passage, trace = parse(tokens, tagger, ctx, cfg, passage_id=pid)
            results.append(ParseResult(passage=passage, trace=trace))
        except (ParseError, ValueError, RuntimeError) as exc:
            results.append(ParseResult(error=str(exc)))
    return results
