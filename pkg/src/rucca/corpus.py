"""Passage serialization, CoNLL ingestion, and masked-corpus expansion.

Passages are stored one JSON record per line. The expansion step turns a
gold passage into one training example per non-terminal node, each with a
per-token mask feature carrying the node's span and arc category.
"""

import json
from dataclasses import dataclass
from typing import Optional

from . import bio
from .graph import (CATEGORY_SET, OUTSIDE, ROOT_MASK, Edge, Node, Passage,
                    TokenRow, all_yields, non_terminals, validate)

MASK_SYMBOLS = (OUTSIDE,) + tuple(sorted(CATEGORY_SET)) + (ROOT_MASK,)
AUX_OUTSIDE = "O"

TOKEN_FIELDS = ("form", "upos", "xpos", "morph", "head", "deprel", "language")
PASSAGE_FIELDS = ("passage_id", "language", "tokens", "nodes", "edges", "root")


class CorpusError(ValueError):
    """Malformed passage or example record."""


@dataclass(frozen=True)
class MaskedExample:
    """One masked training/inference instance for a single focus node."""

    passage_id: str
    tokens: tuple  # of TokenRow
    mask: tuple  # of mask symbols, one per token
    focus_node: str
    target_bio: Optional[tuple] = None
    target_aux: Optional[tuple] = None
    representable: bool = True

    def __post_init__(self):
        if len(self.mask) != len(self.tokens):
            raise CorpusError("mask/token length mismatch")
        for t in (self.target_bio, self.target_aux):
            if t is not None and len(t) != len(self.tokens):
                raise CorpusError("target/token length mismatch")
        for sym in self.mask:
            if sym not in MASK_SYMBOLS:
                raise CorpusError("unknown mask symbol %r" % (sym,))


# ---------------------------------------------------------------------------
# Passage files (JSON lines)

def _token_to_record(tok: TokenRow) -> dict:
    return {"form": tok.form, "upos": tok.upos, "xpos": tok.xpos,
            "morph": dict(tok.morph), "head": tok.head,
            "deprel": tok.deprel, "language": tok.language}


def _token_from_record(rec: dict, where: str) -> TokenRow:
    if set(rec) != set(TOKEN_FIELDS):
        raise CorpusError("%s: token fields %s, expected %s"
                          % (where, sorted(rec), sorted(TOKEN_FIELDS)))
    head = rec["head"]
    if head is not None and head != "root" and not isinstance(head, int):
        raise CorpusError("%s: bad head %r" % (where, head))
    return TokenRow(form=rec["form"], upos=rec["upos"], xpos=rec["xpos"],
                    morph=tuple(sorted(rec["morph"].items())),
                    head=head, deprel=rec["deprel"],
                    language=rec["language"])


def passage_to_record(passage: Passage) -> dict:
    return {
        "passage_id": passage.passage_id,
        "language": passage.language,
        "tokens": [_token_to_record(t) for t in passage.tokens],
        "nodes": [{"id": n.id, "kind": n.kind, "position": n.position}
                  for n in passage.nodes],
        "edges": [{"parent": e.parent, "child": e.child,
                   "category": e.category, "remote": e.remote}
                  for e in passage.edges],
        "root": passage.root,
    }


def passage_from_record(rec: dict, where: str = "record") -> Passage:
    if set(rec) != set(PASSAGE_FIELDS):
        raise CorpusError("%s: passage fields %s, expected %s"
                          % (where, sorted(rec), sorted(PASSAGE_FIELDS)))
    tokens = tuple(_token_from_record(t, where) for t in rec["tokens"])
    nodes = []
    for n in rec["nodes"]:
        if set(n) != {"id", "kind", "position"}:
            raise CorpusError("%s: bad node record %s" % (where, n))
        if n["kind"] not in ("terminal", "nonterminal"):
            raise CorpusError("%s: bad node kind %r" % (where, n["kind"]))
        nodes.append(Node(id=n["id"], kind=n["kind"], position=n["position"]))
    edges = []
    for e in rec["edges"]:
        if set(e) != {"parent", "child", "category", "remote"}:
            raise CorpusError("%s: bad edge record %s" % (where, e))
        if e["category"] not in CATEGORY_SET:
            raise CorpusError("%s: unknown category %r on edge %s->%s"
                              % (where, e["category"], e["parent"],
                                 e["child"]))
        edges.append(Edge(parent=e["parent"], child=e["child"],
                          category=e["category"], remote=bool(e["remote"])))
    return Passage(passage_id=rec["passage_id"], language=rec["language"],
                   tokens=tokens, nodes=tuple(nodes), edges=tuple(edges),
                   root=rec["root"])


def load_passages(path) -> list:
    """Read a JSON-lines passage file; every passage must validate."""
    passages = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            where = "%s:%d" % (path, lineno)
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError("%s: bad JSON: %s" % (where, exc))
            passage = passage_from_record(rec, where)
            violations = validate(passage)
            if violations:
                raise CorpusError("%s: invalid passage %s: %s"
                                  % (where, passage.passage_id,
                                     "; ".join(violations)))
            passages.append(passage)
    return passages


def save_passages(passages, path):
    """Write passages as JSON lines; round-trips exactly via load_passages."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("# rucca passages v1\n")
        for p in passages:
            f.write(json.dumps(passage_to_record(p), ensure_ascii=False,
                               sort_keys=False))
            f.write("\n")


# ---------------------------------------------------------------------------
# CoNLL-like token ingestion (ID FORM UPOS XPOS FEATS HEAD DEPREL)

def load_conll_tokens(path, language="en") -> list:
    """-> list of token tuples, one per sentence."""
    sentences = []
    current = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                if current:
                    sentences.append(tuple(current))
                    current = []
                continue
            if line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 7:
                raise CorpusError("%s:%d: expected 7 columns, got %d"
                                  % (path, lineno, len(cols)))
            _, form, upos, xpos, feats, head, deprel = cols
            morph = {}
            if feats not in ("_", ""):
                for item in feats.split("|"):
                    k, _, v = item.partition("=")
                    morph[k] = v
            if head in ("_", ""):
                head_val = None
            elif head == "0":
                head_val = "root"
            else:
                head_val = int(head) - 1
            current.append(TokenRow(
                form=form, upos=upos,
                xpos=None if xpos == "_" else xpos,
                morph=tuple(sorted(morph.items())),
                head=head_val,
                deprel=None if deprel == "_" else deprel,
                language=language))
    if current:
        sentences.append(tuple(current))
    return sentences


# ---------------------------------------------------------------------------
# Auxiliary (TASK2) labels and corpus expansion

def aux_labels(passage: Passage) -> tuple:
    """Per-token label: category of the token's highest-attaching edge,
    i.e. the edge from the root to the token's topmost non-root ancestor."""
    parent_edge = {}
    for e in passage.edges:
        if not e.remote:
            parent_edge[e.child] = e
    labels = [AUX_OUTSIDE] * len(passage.tokens)
    for n in passage.nodes:
        if not n.is_terminal():
            continue
        edge = parent_edge.get(n.id)
        while edge is not None and edge.parent != passage.root:
            edge = parent_edge.get(edge.parent)
        if edge is not None:
            labels[n.position] = edge.category
    return tuple(labels)


def build_mask(passage: Passage, node_id: str, yields=None) -> tuple:
    """Mask sequence for one focus node: arc category (ROOT for the root)
    inside the node's yield, O outside."""
    if yields is None:
        yields = all_yields(passage)
    if node_id == passage.root:
        symbol = ROOT_MASK
    else:
        incoming = passage.incoming_primary(node_id)
        if not incoming:
            raise CorpusError("focus node %s has no primary parent" % node_id)
        symbol = incoming[0].category
    span = yields[node_id]
    return tuple(symbol if i in span else OUTSIDE
                 for i in range(len(passage.tokens)))


def expand(passage: Passage) -> list:
    """One MaskedExample per non-terminal node, in traversal order.

    Nodes whose children are not BIO-representable are emitted with
    representable=False and no BIO target; callers skip them for training.
    """
    yields = all_yields(passage)
    aux = aux_labels(passage)
    examples = []
    for node_id in non_terminals(passage):
        mask = build_mask(passage, node_id, yields)
        try:
            target = tuple(bio.encode(passage, node_id))
            representable = True
        except bio.NotRepresentable:
            target = None
            representable = False
        examples.append(MaskedExample(
            passage_id=passage.passage_id, tokens=passage.tokens,
            mask=mask, focus_node=node_id, target_bio=target,
            target_aux=aux, representable=representable))
    return examples


# ---------------------------------------------------------------------------
# Masked-example files (JSON lines), written by the expand command

def save_examples(examples, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("# rucca masked examples v1\n")
        for ex in examples:
            rec = {"passage_id": ex.passage_id,
                   "tokens": [_token_to_record(t) for t in ex.tokens],
                   "mask": list(ex.mask),
                   "focus_node": ex.focus_node,
                   "target_bio": list(ex.target_bio)
                   if ex.target_bio is not None else None,
                   "target_aux": list(ex.target_aux)
                   if ex.target_aux is not None else None,
                   "representable": ex.representable}
            f.write(json.dumps(rec, ensure_ascii=False))
            f.write("\n")


def load_examples(path) -> list:
    examples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            where = "%s:%d" % (path, lineno)
            rec = json.loads(line)
            examples.append(MaskedExample(
                passage_id=rec["passage_id"],
                tokens=tuple(_token_from_record(t, where)
                             for t in rec["tokens"]),
                mask=tuple(rec["mask"]),
                focus_node=rec["focus_node"],
                target_bio=tuple(rec["target_bio"])
                if rec["target_bio"] is not None else None,
                target_aux=tuple(rec["target_aux"])
                if rec["target_aux"] is not None else None,
                representable=rec["representable"]))
    return examples
