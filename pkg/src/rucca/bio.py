"""BIO label codec for node children, including remote-edge variants.

Labels: "O", "B-X"/"I-X" per category X, plus "B-REM-X"/"I-REM-X" for
children attached by remote edges (tagged over their own primary yield,
possibly outside the focus node's span).
"""

from dataclasses import dataclass

import numpy as np

from .graph import CATEGORIES, Passage, all_yields, is_contiguous

OUTSIDE = "O"

# Fixed label vocabulary: O + B/I per category + B/I-REM per category = 53.
BIO_LABELS = ([OUTSIDE]
              + ["%s-%s" % (b, c) for c in CATEGORIES for b in ("B", "I")]
              + ["%s-REM-%s" % (b, c) for c in CATEGORIES for b in ("B", "I")])
BIO_INDEX = {label: i for i, label in enumerate(BIO_LABELS)}
N_BIO = len(BIO_LABELS)

PRIMARY_LABEL_IDS = tuple(i for i, lb in enumerate(BIO_LABELS)
                          if "REM" not in lb)
REMOTE_LABEL_IDS = tuple(i for i, lb in enumerate(BIO_LABELS)
                         if "REM" in lb)


class NotRepresentable(Exception):
    """The node's children layout cannot be expressed as one BIO sequence."""


@dataclass(frozen=True)
class ChildSpan:
    start: int
    end: int  # exclusive
    category: str
    remote: bool = False

    def positions(self):
        return range(self.start, self.end)


@dataclass(frozen=True)
class TagDistribution:
    """Per-token probability rows over the BIO vocabulary (TASK1) and,
    optionally, the auxiliary vocabulary (TASK2)."""

    task1: np.ndarray  # (T, 53)
    task2: object = None  # (T, n_aux) or None

    def check(self, atol=1e-6):
        t1 = self.task1
        if t1.ndim != 2 or t1.shape[1] != N_BIO:
            raise ValueError("task1 distribution has shape %s" % (t1.shape,))
        if np.any(t1 < -atol):
            raise ValueError("negative probability in task1 rows")
        if np.any(np.abs(t1.sum(axis=1) - 1.0) > atol):
            raise ValueError("task1 rows do not sum to 1")


def split_label(label):
    """-> (tag, category, remote) with tag in {B, I, O}."""
    if label == OUTSIDE:
        return "O", None, False
    parts = label.split("-")
    if len(parts) == 2:
        return parts[0], parts[1], False
    return parts[0], parts[2], True


def encode(passage: Passage, node_id: str) -> list:
    """Children of node_id as one BIO sequence over the whole sentence.

    Raises NotRepresentable when a child yield is discontinuous or two
    children's labelings collide; callers treat that as a skip.
    """
    node = passage.node(node_id)
    if node.is_terminal():
        raise ValueError("cannot encode children of terminal %s" % node_id)
    yields = all_yields(passage)
    labels = [OUTSIDE] * len(passage.tokens)

    def place(span_positions, category, remote):
        if not span_positions:
            raise NotRepresentable("empty child yield")
        if not is_contiguous(span_positions):
            raise NotRepresentable("discontinuous child yield")
        start = min(span_positions)
        for pos in sorted(span_positions):
            if labels[pos] != OUTSIDE:
                raise NotRepresentable("overlapping children at token %d"
                                       % pos)
            prefix = "B" if pos == start else "I"
            if remote:
                labels[pos] = "%s-REM-%s" % (prefix, category)
            else:
                labels[pos] = "%s-%s" % (prefix, category)

    for e, child in passage.primary_children(node_id):
        place(yields[child], e.category, remote=False)
    for e, child in passage.remote_children(node_id):
        place(yields[child], e.category, remote=True)

    # The labeling must round-trip to exactly the children spans.
    expected = set()
    for e, child in passage.primary_children(node_id):
        y = yields[child]
        expected.add(ChildSpan(min(y), max(y) + 1, e.category, False))
    for e, child in passage.remote_children(node_id):
        y = yields[child]
        expected.add(ChildSpan(min(y), max(y) + 1, e.category, True))
    if set(decode_labels(labels)) != expected:
        raise NotRepresentable("labeling does not round-trip")
    return labels


def decode_labels(labels) -> list:
    """Total decoding of a BIO sequence into disjoint child spans.

    Repair rules: a dangling I- opens a new span; an I- of a different
    category closes the open span and opens a new one; O closes.
    """
    spans = []
    open_span = None  # [start, category, remote]

    def close(end):
        nonlocal open_span
        if open_span is not None:
            spans.append(ChildSpan(open_span[0], end, open_span[1],
                                   open_span[2]))
            open_span = None

    for i, label in enumerate(labels):
        tag, category, remote = split_label(label)
        if tag == "O":
            close(i)
        elif tag == "B":
            close(i)
            open_span = [i, category, remote]
        else:  # I
            if open_span is not None and open_span[1] == category \
                    and open_span[2] == remote:
                continue
            close(i)
            open_span = [i, category, remote]
    close(len(labels))
    return spans


def decode_probs(dist: TagDistribution, remote_threshold: float):
    """-> (primary spans, remote spans).

    Primary pass: per-token argmax over O + primary labels. Remote pass:
    a token takes its argmax remote label only when that label's
    probability strictly exceeds the threshold.
    """
    dist.check()
    if not 0.0 <= remote_threshold <= 1.0:
        raise ValueError("remote threshold must be in [0, 1]")
    t1 = dist.task1

    primary_ids = np.asarray(PRIMARY_LABEL_IDS)
    sub = t1[:, primary_ids]
    primary_labels = [BIO_LABELS[primary_ids[j]]
                      for j in np.argmax(sub, axis=1)]
    primary = decode_labels(primary_labels)

    remote_ids = np.asarray(REMOTE_LABEL_IDS)
    rsub = t1[:, remote_ids]
    best = np.argmax(rsub, axis=1)
    remote_labels = []
    for i in range(t1.shape[0]):
        p = rsub[i, best[i]]
        remote_labels.append(BIO_LABELS[remote_ids[best[i]]]
                             if p > remote_threshold else OUTSIDE)
    remote = [ChildSpan(s.start, s.end, s.category, True)
              for s in decode_labels(remote_labels)]
    return primary, remote


def one_hot(labels) -> np.ndarray:
    """(T, 53) one-hot rows for a gold label sequence."""
    out = np.zeros((len(labels), N_BIO))
    for i, label in enumerate(labels):
        out[i, BIO_INDEX[label]] = 1.0
    return out
