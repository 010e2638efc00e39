"""Token featurization: word vectors plus categorical surface features.

Per token the tagger sees: a frozen 300-dim word vector, one trainable
embedding index per categorical table (POS, dependency relation, morph
values, affixes, capitalization, length bucket, language, mask symbol),
and a boolean MWE flag.
"""

from dataclasses import dataclass

import numpy as np

from .corpus import MASK_SYMBOLS, MaskedExample
from .lexicon import ExpressionLexicon, match

PAD = "<pad>"
OOV = "<oov>"
NONE = "<none>"
SHORT = "<short>"

CAPS_CLASSES = ("all-lower", "initial-cap", "all-caps", "mixed", "non-alpha")
LENGTH_BUCKETS = ("1", "2", "3", "4-6", "7-10", "11+")

WORD_DIM = 300


class EmbeddingError(ValueError):
    pass


def caps_class(form: str) -> str:
    alpha = [c for c in form if c.isalpha()]
    if not alpha:
        return "non-alpha"
    if all(c.islower() for c in alpha):
        return "all-lower"
    if all(c.isupper() for c in alpha):
        return "all-caps"
    if form[0].isupper() and all(c.islower() for c in alpha[1:]):
        return "initial-cap"
    return "mixed"


def length_bucket(form: str) -> str:
    n = len(form)
    if n <= 3:
        return str(n) if n >= 1 else "1"
    if n <= 6:
        return "4-6"
    if n <= 10:
        return "7-10"
    return "11+"


def affix(form: str, size: int, suffix: bool) -> str:
    low = form.lower()
    if len(low) < size:
        return SHORT
    return low[-size:] if suffix else low[:size]


def _token_symbols(token):
    """Categorical feature symbols for one token (morph handled apart)."""
    return {
        "deprel": token.deprel if token.deprel is not None else NONE,
        "upos": token.upos,
        "xpos": token.xpos if token.xpos is not None else NONE,
        "caps": caps_class(token.form),
        "length": length_bucket(token.form),
        "prefix2": affix(token.form, 2, suffix=False),
        "prefix3": affix(token.form, 3, suffix=False),
        "suffix2": affix(token.form, 2, suffix=True),
        "suffix3": affix(token.form, 3, suffix=True),
        "language": token.language,
    }


@dataclass(frozen=True)
class FeatureVocabularies:
    """Frozen symbol tables, one per categorical feature.

    Index 0 is PAD and index 1 is OOV in every table. Feature names are
    sorted so the tagger's input layout is deterministic.
    """

    tables: dict  # feature name -> {symbol: index}
    morph_keys: tuple

    def feature_names(self) -> list:
        return sorted(self.tables)

    def size(self, name: str) -> int:
        return len(self.tables[name])

    def index(self, name: str, symbol: str) -> int:
        return self.tables[name].get(symbol, 1)

    def inverse(self, name: str) -> dict:
        return {i: s for s, i in self.tables[name].items()}


def _make_table(symbols) -> dict:
    table = {PAD: 0, OOV: 1}
    for sym in sorted(set(symbols)):
        if sym not in table:
            table[sym] = len(table)
    return table


def fit_vocabularies(corpus) -> FeatureVocabularies:
    """Deterministic tables over every symbol seen in the corpus."""
    if not corpus:
        raise ValueError("cannot fit vocabularies on an empty corpus")
    seen = {name: set() for name in
            ("deprel", "upos", "xpos", "caps", "length", "prefix2",
             "prefix3", "suffix2", "suffix3", "language")}
    morph_values = {}
    for ex in corpus:
        for tok in ex.tokens:
            for name, sym in _token_symbols(tok).items():
                seen[name].add(sym)
            for key, value in tok.morph:
                morph_values.setdefault(key, set()).add(value)
    tables = {name: _make_table(symbols) for name, symbols in seen.items()}
    # Closed-set features always carry their full inventory.
    tables["caps"] = _make_table(CAPS_CLASSES)
    tables["length"] = _make_table(LENGTH_BUCKETS)
    tables["mask"] = _make_table(MASK_SYMBOLS)
    morph_keys = tuple(sorted(morph_values))
    for key in morph_keys:
        tables["morph:" + key] = _make_table(morph_values[key] | {NONE})
    return FeatureVocabularies(tables=tables, morph_keys=morph_keys)


@dataclass(frozen=True)
class WordEmbeddingTable:
    vectors: dict  # word -> np.ndarray
    dim: int = WORD_DIM
    skipped: int = 0

    def lookup(self, form: str) -> np.ndarray:
        vec = self.vectors.get(form)
        if vec is None:
            vec = self.vectors.get(form.lower())
        if vec is None:
            return np.zeros(self.dim)
        return vec


EMPTY_EMBEDDINGS = WordEmbeddingTable(vectors={}, dim=WORD_DIM)


def load_embeddings(path, dim=WORD_DIM) -> WordEmbeddingTable:
    """Text format: one "word v1 ... v<dim>" row per line. Rows with the
    wrong dimension are skipped and counted."""
    vectors = {}
    skipped = 0
    with open(path, encoding="utf-8") as f:
        for line in f:
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                skipped += 1
                continue
            vectors[word] = np.array([float(v) for v in values])
    if not vectors:
        raise EmbeddingError("no valid embedding rows in %s" % path)
    return WordEmbeddingTable(vectors=vectors, dim=dim, skipped=skipped)


@dataclass(frozen=True)
class FeaturizedExample:
    length: int
    word_vectors: np.ndarray  # (T, dim), frozen
    categorical: dict  # feature name -> int array (T,)
    mwe: np.ndarray  # (T,) float 0/1
    mask_symbols: tuple  # raw mask, kept for oracle taggers and checks


@dataclass(frozen=True)
class FeaturizerContext:
    """Everything needed to turn a MaskedExample into tagger input."""

    vocab: FeatureVocabularies
    embeddings: WordEmbeddingTable
    lexicon: ExpressionLexicon

    def featurize(self, example: MaskedExample) -> "FeaturizedExample":
        return featurize(example, self.vocab, self.embeddings, self.lexicon)


def featurize(example: MaskedExample, vocab: FeatureVocabularies,
              embeddings: WordEmbeddingTable,
              lex: ExpressionLexicon) -> FeaturizedExample:
    tokens = example.tokens
    n = len(tokens)
    word_vectors = np.stack([embeddings.lookup(t.form) for t in tokens]) \
        if n else np.zeros((0, embeddings.dim))
    categorical = {}
    for name in vocab.feature_names():
        if name == "mask":
            idx = [vocab.index("mask", sym) for sym in example.mask]
        elif name.startswith("morph:"):
            key = name[len("morph:"):]
            idx = [vocab.index(name, dict(t.morph).get(key, NONE))
                   for t in tokens]
        else:
            idx = [vocab.index(name, _token_symbols(t)[name])
                   for t in tokens]
        categorical[name] = np.array(idx, dtype=np.int64)
    mwe = np.array(match(lex, tokens).flags, dtype=float) if n \
        else np.zeros(0)
    return FeaturizedExample(length=n, word_vectors=word_vectors,
                             categorical=categorical, mwe=mwe,
                             mask_symbols=example.mask)
