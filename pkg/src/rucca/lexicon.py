"""Multiword-expression lexicons and greedy leftmost-longest span matching."""

from dataclasses import dataclass


@dataclass(frozen=True)
class ExpressionLexicon:
    language: str
    expressions: frozenset  # of token tuples, lowercased
    duplicates_dropped: int = 0

    def max_length(self) -> int:
        return max((len(e) for e in self.expressions), default=0)


@dataclass(frozen=True)
class MweMask:
    flags: tuple  # one boolean per token
    spans: tuple  # of (start, end) intervals, end exclusive


EMPTY_LEXICON = ExpressionLexicon(language="", expressions=frozenset())


def load_lexicon(path, language) -> ExpressionLexicon:
    """One expression per line, tokens space-separated; '#' lines are
    comments. Duplicates are dropped and counted."""
    expressions = set()
    duplicates = 0
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            pattern = tuple(line.lower().split())
            if pattern in expressions:
                duplicates += 1
            else:
                expressions.add(pattern)
    return ExpressionLexicon(language=language,
                             expressions=frozenset(expressions),
                             duplicates_dropped=duplicates)


def match(lexicon: ExpressionLexicon, tokens) -> MweMask:
    """Greedy leftmost-longest matching over lowercased surface forms."""
    forms = [t.form.lower() for t in tokens]
    n = len(forms)
    max_len = min(lexicon.max_length(), n)
    spans = []
    i = 0
    while i < n:
        hit = None
        for length in range(max_len, 0, -1):
            if i + length <= n and tuple(forms[i:i + length]) \
                    in lexicon.expressions:
                hit = (i, i + length)
                break
        if hit is not None:
            spans.append(hit)
            i = hit[1]
        else:
            i += 1
    flags = [False] * n
    for start, end in spans:
        for j in range(start, end):
            flags[j] = True
    return MweMask(flags=tuple(flags), spans=tuple(spans))
