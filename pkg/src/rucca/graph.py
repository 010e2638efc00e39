"""UCCA-style DAG data model: passages, nodes, labeled edges, validity checks.

A passage is a rooted tree over primary edges (terminals = tokens,
non-terminals = semantic units) plus optional remote edges that turn the
tree into a DAG.
"""

from dataclasses import dataclass
from typing import Optional

# The 13 edge categories, in the conventional reporting order.
CATEGORIES = ("D", "C", "N", "E", "F", "G", "L", "H", "A", "P", "U", "R", "S")
CATEGORY_SET = frozenset(CATEGORIES)

# Mask symbol used for the whole-sentence (root) inference step.
ROOT_MASK = "ROOT"
OUTSIDE = "O"


class CategoryError(ValueError):
    """Raised when an unknown edge category symbol is parsed."""


def parse_category(symbol: str) -> str:
    if symbol not in CATEGORY_SET:
        raise CategoryError("unknown category: %r" % (symbol,))
    return symbol


@dataclass(frozen=True)
class TokenRow:
    """One token with its lexical/morphological/syntactic annotations."""

    form: str
    upos: str
    xpos: Optional[str] = None
    morph: tuple = ()  # sorted (key, value) pairs
    head: Optional[object] = None  # token index, "root", or None
    deprel: Optional[str] = None
    language: str = "en"

    def morph_dict(self) -> dict:
        return dict(self.morph)


def make_token(form, upos, xpos=None, morph=None, head=None, deprel=None,
               language="en"):
    pairs = tuple(sorted((morph or {}).items()))
    return TokenRow(form=form, upos=upos, xpos=xpos, morph=pairs,
                    head=head, deprel=deprel, language=language)


@dataclass(frozen=True)
class Node:
    id: str
    kind: str  # "terminal" | "nonterminal"
    position: Optional[int] = None  # terminals only, 0-based

    def is_terminal(self) -> bool:
        return self.kind == "terminal"


@dataclass(frozen=True)
class Edge:
    parent: str
    child: str
    category: str
    remote: bool = False


@dataclass(frozen=True)
class Passage:
    passage_id: str
    language: str
    tokens: tuple  # of TokenRow
    nodes: tuple  # of Node
    edges: tuple  # of Edge
    root: str

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError("unknown node id: %r" % (node_id,))

    def primary_children(self, node_id: str):
        """(edge, child_id) pairs over non-remote edges, input order."""
        return [(e, e.child) for e in self.edges
                if e.parent == node_id and not e.remote]

    def remote_children(self, node_id: str):
        return [(e, e.child) for e in self.edges
                if e.parent == node_id and e.remote]

    def incoming_primary(self, node_id: str):
        return [e for e in self.edges if e.child == node_id and not e.remote]


def primary_yield(passage: Passage, node_id: str) -> frozenset:
    """Terminal positions reachable from node_id via primary edges only."""
    node = passage.node(node_id)  # raises on unknown id
    children = {}
    for e in passage.edges:
        if not e.remote:
            children.setdefault(e.parent, []).append(e.child)
    positions = set()
    stack = [node_id]
    seen = set()
    while stack:
        nid = stack.pop()
        if nid in seen:
            continue
        seen.add(nid)
        n = passage.node(nid)
        if n.is_terminal():
            positions.add(n.position)
        else:
            stack.extend(children.get(nid, ()))
    return frozenset(positions)


def all_yields(passage: Passage) -> dict:
    """node id -> primary yield, computed bottom-up in one pass."""
    children = {}
    for e in passage.edges:
        if not e.remote:
            children.setdefault(e.parent, []).append(e.child)
    yields = {}

    def visit(nid, trail):
        if nid in yields:
            return yields[nid]
        if nid in trail:  # cycle; let validate() report it
            return frozenset()
        n = passage.node(nid)
        if n.is_terminal():
            y = frozenset([n.position])
        else:
            y = frozenset().union(
                *[visit(c, trail | {nid}) for c in children.get(nid, ())]) \
                if children.get(nid) else frozenset()
        yields[nid] = y
        return y

    for n in passage.nodes:
        visit(n.id, frozenset())
    return yields


def is_contiguous(positions) -> bool:
    if not positions:
        return False
    return max(positions) - min(positions) + 1 == len(positions)


def non_terminals(passage: Passage) -> list:
    """Non-terminal ids in pre-order over the primary tree.

    Children are visited left to right by smallest yield position, which
    makes corpus expansion deterministic.
    """
    yields = all_yields(passage)
    children = {}
    for e in passage.edges:
        if not e.remote:
            children.setdefault(e.parent, []).append(e.child)
    order = []

    def visit(nid):
        n = passage.node(nid)
        if n.is_terminal():
            return
        order.append(nid)
        kids = children.get(nid, [])
        kids = sorted(kids, key=lambda c: (min(yields[c], default=-1), c))
        for c in kids:
            visit(c)

    visit(passage.root)
    # Non-terminals unreachable from the root (invalid passages) go last.
    rest = [n.id for n in passage.nodes
            if not n.is_terminal() and n.id not in order]
    return order + sorted(rest)


def validate(passage: Passage, require_contiguous=False) -> list:
    """Return a list of invariant violations; empty means valid.

    Contiguity of yields is only enforced on decoder output
    (require_contiguous=True); gold corpora may be discontinuous.
    """
    violations = []
    ids = [n.id for n in passage.nodes]
    if len(ids) != len(set(ids)):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        violations.append("duplicate node ids: %s" % ", ".join(dupes))
        return violations
    by_id = {n.id: n for n in passage.nodes}

    if passage.root not in by_id:
        violations.append("root %s not among nodes" % passage.root)
        return violations
    if by_id[passage.root].is_terminal():
        violations.append("root %s is a terminal" % passage.root)

    for n in passage.nodes:
        if n.is_terminal():
            if n.position is None:
                violations.append("terminal without position: node %s" % n.id)
        elif n.position is not None:
            violations.append("non-terminal with position: node %s" % n.id)

    for e in passage.edges:
        if e.parent == e.child:
            violations.append("self-loop: node %s" % e.parent)
        if e.parent not in by_id:
            violations.append("edge from unknown node %s" % e.parent)
        elif by_id[e.parent].is_terminal():
            violations.append("terminal with children: node %s" % e.parent)
        if e.child not in by_id:
            violations.append("edge to unknown node %s" % e.child)
        if e.category not in CATEGORY_SET:
            violations.append("unknown category %s on edge %s->%s"
                              % (e.category, e.parent, e.child))
    if violations:
        return violations

    primary_in = {n.id: 0 for n in passage.nodes}
    for e in passage.edges:
        if not e.remote:
            primary_in[e.child] += 1
    if primary_in[passage.root] > 0:
        violations.append("root has incoming primary edge: node %s"
                          % passage.root)
    for n in passage.nodes:
        if n.id == passage.root:
            continue
        if primary_in[n.id] == 0:
            violations.append("no primary parent: node %s" % n.id)
        elif primary_in[n.id] > 1:
            violations.append("multiple primary parents: node %s" % n.id)

    # Connectivity / acyclicity of the primary subgraph.
    children = {}
    for e in passage.edges:
        if not e.remote:
            children.setdefault(e.parent, []).append(e.child)
    # Cycles surface as either a multiple-parent violation (above) or as
    # nodes unreachable from the root.
    reached = set()
    stack = [passage.root]
    while stack:
        nid = stack.pop()
        if nid in reached:
            continue
        reached.add(nid)
        stack.extend(children.get(nid, ()))
    for n in passage.nodes:
        if n.id not in reached:
            violations.append("unreachable from root: node %s" % n.id)

    for e in passage.edges:
        if e.remote and e.child == passage.root:
            violations.append("remote edge into root: %s->%s"
                              % (e.parent, e.child))

    # Token coverage: each position covered by exactly one terminal.
    positions = [n.position for n in passage.nodes if n.is_terminal()]
    expected = list(range(len(passage.tokens)))
    if sorted(positions) != expected:
        violations.append("token coverage mismatch: terminals cover %s, "
                          "expected %s" % (sorted(positions), expected))

    if require_contiguous and not violations:
        yields = all_yields(passage)
        for n in passage.nodes:
            if not is_contiguous(yields[n.id]):
                violations.append("discontiguous yield: node %s" % n.id)
    return violations
