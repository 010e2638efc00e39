"""Sequence tagger: 4-layer bidirectional GRU with highway connections.

Two softmax heads share the encoder: TASK1 predicts per-token BIO labels
for the focus node's children, TASK2 predicts an auxiliary per-token
function tag (training support only, never used at inference).

Everything is plain numpy with hand-written backpropagation so gradients
are exact and runs are bit-deterministic under a fixed seed.
"""

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from . import bio
from .corpus import AUX_OUTSIDE, MaskedExample
from .features import FeaturizedExample, FeatureVocabularies
from .graph import OUTSIDE, ROOT_MASK, all_yields, non_terminals


class NumericError(RuntimeError):
    """Non-finite value encountered during forward/backward/training."""


@dataclass
class TaggerConfig:
    hidden: int = 128  # per direction; layer width is 2*hidden
    cat_dim: int = 16
    n_layers: int = 4
    word_dim: int = 300
    lambda_aux: float = 1.0
    seed: int = 13


@dataclass
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 16
    seed: int = 13
    grad_clip: float = 5.0
    hidden: int = 128
    cat_dim: int = 16
    lambda_aux: float = 1.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _softmax(logits):
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True)


def _check_finite(name, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite values in %s" % name)


class GruTagger:
    """Trainable tagger; implements predict(example, feats)."""

    def __init__(self, config: TaggerConfig, vocab: FeatureVocabularies,
                 aux_vocab):
        self.config = config
        self.vocab = vocab
        self.aux_vocab = tuple(aux_vocab)
        self.aux_index = {a: i for i, a in enumerate(self.aux_vocab)}
        self.feature_names = vocab.feature_names()
        self.input_dim = (config.word_dim
                          + config.cat_dim * len(self.feature_names) + 1)
        self.params = self._init_params()

    # -- parameters ---------------------------------------------------------

    def _init_params(self):
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        h, m = cfg.hidden, 2 * cfg.hidden
        params = {}

        def linear(name, rows, cols):
            params[name + "/W"] = rng.normal(0.0, np.sqrt(1.0 / cols),
                                             (rows, cols))
            params[name + "/b"] = np.zeros(rows)

        for name in self.feature_names:
            params["emb/" + name] = rng.normal(
                0.0, 0.1, (self.vocab.size(name), cfg.cat_dim))
        linear("in", m, self.input_dim)
        for layer in range(cfg.n_layers):
            for d in ("f", "b"):
                base = "l%d/%s/" % (layer, d)
                for gate in ("z", "r", "n"):
                    params[base + "W" + gate] = rng.normal(
                        0.0, np.sqrt(1.0 / m), (h, m))
                    params[base + "U" + gate] = rng.normal(
                        0.0, np.sqrt(1.0 / h), (h, h))
                    params[base + "b" + gate] = np.zeros(h)
            linear("l%d/hw" % layer, m, m)
        linear("out1", bio.N_BIO, m)
        linear("out2", len(self.aux_vocab), m)
        return params

    def clone_params(self):
        return {k: v.copy() for k, v in self.params.items()}

    # -- forward ------------------------------------------------------------

    def _input_matrix(self, feats: FeaturizedExample):
        cols = [feats.word_vectors]
        for name in self.feature_names:
            cols.append(self.params["emb/" + name][feats.categorical[name]])
        cols.append(feats.mwe[:, None])
        return np.concatenate(cols, axis=1)

    def _gru_direction(self, x, base):
        p = self.params
        wz, wr, wn = p[base + "Wz"], p[base + "Wr"], p[base + "Wn"]
        uz, ur, un = p[base + "Uz"], p[base + "Ur"], p[base + "Un"]
        bz, br, bn = p[base + "bz"], p[base + "br"], p[base + "bn"]
        T = x.shape[0]
        h = wz.shape[0]
        order = range(T) if base.endswith("f/") else range(T - 1, -1, -1)
        H = np.zeros((T, h))
        cache = {"z": np.zeros((T, h)), "r": np.zeros((T, h)),
                 "u": np.zeros((T, h)), "n": np.zeros((T, h)),
                 "hprev": np.zeros((T, h)), "order": list(order)}
        hprev = np.zeros(h)
        for t in cache["order"]:
            z = _sigmoid(wz @ x[t] + uz @ hprev + bz)
            r = _sigmoid(wr @ x[t] + ur @ hprev + br)
            u = un @ hprev
            n = np.tanh(wn @ x[t] + r * u + bn)
            hcur = (1.0 - z) * n + z * hprev
            cache["z"][t], cache["r"][t] = z, r
            cache["u"][t], cache["n"][t] = u, n
            cache["hprev"][t] = hprev
            H[t] = hcur
            hprev = hcur
        return H, cache

    def forward(self, feats: FeaturizedExample):
        """-> (TagDistribution, cache). Cache is reused by gradients()."""
        cfg = self.config
        f = self._input_matrix(feats)
        x = f @ self.params["in/W"].T + self.params["in/b"]
        layers = []
        for layer in range(cfg.n_layers):
            hf, cf = self._gru_direction(x, "l%d/f/" % layer)
            hb, cb = self._gru_direction(x, "l%d/b/" % layer)
            y = np.concatenate([hf, hb], axis=1)
            gate = _sigmoid(x @ self.params["l%d/hw/W" % layer].T
                            + self.params["l%d/hw/b" % layer])
            out = gate * y + (1.0 - gate) * x
            layers.append({"x": x, "y": y, "gate": gate,
                           "cf": cf, "cb": cb})
            x = out
        logits1 = x @ self.params["out1/W"].T + self.params["out1/b"]
        logits2 = x @ self.params["out2/W"].T + self.params["out2/b"]
        _check_finite("forward pass", logits1, logits2)
        dist = bio.TagDistribution(task1=_softmax(logits1),
                                   task2=_softmax(logits2))
        cache = {"f": f, "layers": layers, "top": x,
                 "logits1": logits1, "logits2": logits2, "feats": feats}
        return dist, cache

    def predict(self, example: MaskedExample,
                feats: FeaturizedExample) -> bio.TagDistribution:
        dist, _ = self.forward(feats)
        return dist

    # -- loss and gradients -------------------------------------------------

    def target_ids(self, example: MaskedExample):
        if example.target_bio is None:
            raise ValueError("example %s has no BIO target"
                             % example.passage_id)
        y1 = np.array([bio.BIO_INDEX[lb] for lb in example.target_bio])
        if example.target_aux is None:
            raise ValueError("example %s has no aux target"
                             % example.passage_id)
        y2 = np.array([self.aux_index.get(a, self.aux_index[AUX_OUTSIDE])
                       for a in example.target_aux])
        return y1, y2

    @staticmethod
    def _xent(logits, targets):
        m = logits.max(axis=1)
        lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
        return float(np.mean(lse - logits[np.arange(len(targets)), targets]))

    def loss(self, feats, y1, y2, cache=None):
        if cache is None:
            _, cache = self.forward(feats)
        value = self._xent(cache["logits1"], y1)
        if self.config.lambda_aux != 0.0:
            value += self.config.lambda_aux * self._xent(cache["logits2"], y2)
        return value, cache

    def _gru_backward(self, dH, x, cache, base, grads):
        p = self.params
        uz, ur, un = p[base + "Uz"], p[base + "Ur"], p[base + "Un"]
        T, h = dH.shape
        daz = np.zeros((T, h))
        dar = np.zeros((T, h))
        dan = np.zeros((T, h))
        dun_in = np.zeros((T, h))  # gradient into u = Un @ hprev
        carry = np.zeros(h)
        for t in reversed(cache["order"]):
            g = dH[t] + carry
            z, r = cache["z"][t], cache["r"][t]
            u, n = cache["u"][t], cache["n"][t]
            hprev = cache["hprev"][t]
            dn = g * (1.0 - z)
            dz = g * (hprev - n)
            dhprev = g * z
            a_n = dn * (1.0 - n * n)
            a_r = (a_n * u) * r * (1.0 - r)
            a_z = dz * z * (1.0 - z)
            du = a_n * r
            dhprev = dhprev + un.T @ du + ur.T @ a_r + uz.T @ a_z
            daz[t], dar[t], dan[t], dun_in[t] = a_z, a_r, a_n, du
            carry = dhprev
        hprev_all = cache["hprev"]
        for gate, da in (("z", daz), ("r", dar), ("n", dan)):
            grads[base + "W" + gate] += da.T @ x
            grads[base + "b" + gate] += da.sum(axis=0)
        grads[base + "Uz"] += daz.T @ hprev_all
        grads[base + "Ur"] += dar.T @ hprev_all
        grads[base + "Un"] += dun_in.T @ hprev_all
        dx = daz @ p[base + "Wz"] + dar @ p[base + "Wr"] \
            + dan @ p[base + "Wn"]
        return dx

    def gradients(self, feats, y1, y2):
        """Exact analytic gradients of loss() w.r.t. every parameter."""
        dist, cache = self.forward(feats)
        value, _ = self.loss(feats, y1, y2, cache)
        T = feats.length
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}

        d1 = dist.task1.copy()
        d1[np.arange(T), y1] -= 1.0
        d1 /= T
        d2 = dist.task2.copy()
        d2[np.arange(T), y2] -= 1.0
        d2 *= self.config.lambda_aux / T

        top = cache["top"]
        grads["out1/W"] += d1.T @ top
        grads["out1/b"] += d1.sum(axis=0)
        grads["out2/W"] += d2.T @ top
        grads["out2/b"] += d2.sum(axis=0)
        dx = d1 @ self.params["out1/W"] + d2 @ self.params["out2/W"]

        for layer in range(self.config.n_layers - 1, -1, -1):
            lc = cache["layers"][layer]
            x, y, gate = lc["x"], lc["y"], lc["gate"]
            dy = dx * gate
            dgate = dx * (y - x)
            dxl = dx * (1.0 - gate)
            da = dgate * gate * (1.0 - gate)
            grads["l%d/hw/W" % layer] += da.T @ x
            grads["l%d/hw/b" % layer] += da.sum(axis=0)
            dxl = dxl + da @ self.params["l%d/hw/W" % layer]
            h = self.config.hidden
            dxl = dxl + self._gru_backward(dy[:, :h], x, lc["cf"],
                                           "l%d/f/" % layer, grads)
            dxl = dxl + self._gru_backward(dy[:, h:], x, lc["cb"],
                                           "l%d/b/" % layer, grads)
            dx = dxl

        grads["in/W"] += dx.T @ cache["f"]
        grads["in/b"] += dx.sum(axis=0)
        df = dx @ self.params["in/W"]
        offset = self.config.word_dim
        for name in self.feature_names:
            sl = df[:, offset:offset + self.config.cat_dim]
            np.add.at(grads["emb/" + name], feats.categorical[name], sl)
            offset += self.config.cat_dim
        _check_finite("backward pass", *grads.values())
        return value, grads


# ---------------------------------------------------------------------------
# Training

class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1t = 1.0 - self.b1 ** self.t
        b2t = 1.0 - self.b2 ** self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            mhat = self.m[k] / b1t
            vhat = self.v[k] / b2t
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def clip_gradients(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for k in grads:
            grads[k] *= scale
    return total


def token_accuracy(tagger, ctx, examples):
    """TASK1 per-token argmax accuracy over examples with targets."""
    correct = total = 0
    for ex in examples:
        if ex.target_bio is None:
            continue
        dist, _ = tagger.forward(ctx.featurize(ex))
        pred = np.argmax(dist.task1, axis=1)
        y1, _ = tagger.target_ids(ex)
        correct += int(np.sum(pred == y1))
        total += len(y1)
    return correct / total if total else 0.0


def build_aux_vocab(examples):
    symbols = {AUX_OUTSIDE}
    for ex in examples:
        if ex.target_aux is not None:
            symbols.update(ex.target_aux)
    return tuple(sorted(symbols))


def train(examples, dev_passages, ctx, config: TrainConfig,
          decoder_config=None, log_hook=None):
    """Mini-batch Adam training; returns (tagger, per-epoch log records).

    After each epoch the current model parses the dev set recursively and
    the parameters with the best dev labeled Avg F1 are kept. With an
    empty dev set the final parameters are returned.
    """
    usable = [ex for ex in examples
              if ex.representable and ex.target_bio is not None]
    if not usable:
        raise ValueError("no trainable examples")
    tcfg = TaggerConfig(hidden=config.hidden, cat_dim=config.cat_dim,
                        lambda_aux=config.lambda_aux, seed=config.seed)
    tagger = GruTagger(tcfg, ctx.vocab, build_aux_vocab(usable))
    feats = [ctx.featurize(ex) for ex in usable]
    targets = [tagger.target_ids(ex) for ex in usable]
    optimizer = _Adam(tagger.params, config.learning_rate)
    rng = np.random.default_rng(config.seed)
    log = []
    best_f1 = -1.0
    best_params = None
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(usable))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            acc = {k: np.zeros_like(v) for k, v in tagger.params.items()}
            for i in batch:
                try:
                    value, grads = tagger.gradients(feats[i], *targets[i])
                except NumericError as exc:
                    raise NumericError(
                        "epoch %d batch %d: %s"
                        % (epoch, start // config.batch_size, exc))
                if not np.isfinite(value):
                    raise NumericError("non-finite loss at epoch %d batch %d"
                                       % (epoch, start // config.batch_size))
                losses.append(value)
                for k in acc:
                    acc[k] += grads[k] / len(batch)
            clip_gradients(acc, config.grad_clip)
            optimizer.step(tagger.params, acc)
        record = {"epoch": epoch, "loss": float(np.mean(losses))}
        if dev_passages:
            record["dev_f1"] = _dev_f1(tagger, ctx, dev_passages,
                                       decoder_config)
            if record["dev_f1"] > best_f1:
                best_f1 = record["dev_f1"]
                best_params = tagger.clone_params()
        log.append(record)
        if log_hook:
            log_hook(record)
    if best_params is not None:
        tagger.params = best_params
    return tagger, log


def _dev_f1(tagger, ctx, dev_passages, decoder_config):
    from .evaluator import score_corpus
    from .parser import DecoderConfig, parse
    cfg = decoder_config or DecoderConfig()
    pairs = []
    for gold in dev_passages:
        pred, _ = parse(gold.tokens, tagger, ctx, cfg,
                        passage_id=gold.passage_id, language=gold.language)
        pairs.append((pred, gold))
    report = score_corpus(pairs)
    return report.overall.labeled["avg"].f1


# ---------------------------------------------------------------------------
# Oracle tagger (test double emitting one-hot gold distributions)

def oracle_predict(gold, focus) -> bio.TagDistribution:
    """One-hot distribution reproducing encode(gold, focus)."""
    labels = bio.encode(gold, focus)  # raises NotRepresentable
    return bio.TagDistribution(task1=bio.one_hot(labels), task2=None)


class OracleTagger:
    """Implements the tagger interface by looking up the gold passage via
    the mask feature: the focus node is the gold node whose yield and arc
    category match the mask."""

    def __init__(self, passages):
        self.by_id = {p.passage_id: p for p in passages}
        self._yields = {pid: all_yields(p) for pid, p in self.by_id.items()}
        self._order = {pid: non_terminals(p)
                       for pid, p in self.by_id.items()}

    def _find_focus(self, passage, mask):
        span = frozenset(i for i, s in enumerate(mask) if s != OUTSIDE)
        symbols = {s for s in mask if s != OUTSIDE}
        if len(symbols) != 1 or not span:
            return None
        symbol = symbols.pop()
        yields = self._yields[passage.passage_id]
        for nid in self._order[passage.passage_id]:
            if yields[nid] != span:
                continue
            if symbol == ROOT_MASK:
                if nid == passage.root:
                    return nid
            elif nid != passage.root:
                incoming = passage.incoming_primary(nid)
                if incoming and incoming[0].category == symbol:
                    return nid
        return None

    def predict(self, example: MaskedExample,
                feats: FeaturizedExample) -> bio.TagDistribution:
        passage = self.by_id.get(example.passage_id)
        focus = self._find_focus(passage, example.mask) \
            if passage is not None else None
        if focus is None:
            return bio.TagDistribution(
                task1=bio.one_hot([OUTSIDE] * len(example.tokens)))
        try:
            return oracle_predict(passage, focus)
        except bio.NotRepresentable:
            return bio.TagDistribution(
                task1=bio.one_hot([OUTSIDE] * len(example.tokens)))


# ---------------------------------------------------------------------------
# Checkpoints (deterministic binary container)

MAGIC = b"RUCCA1\n"


def save_checkpoint(tagger: GruTagger, path):
    names = sorted(tagger.params)
    header = {
        "version": 1,
        "config": asdict(tagger.config),
        "aux_vocab": list(tagger.aux_vocab),
        "vocab": {"tables": {k: dict(v)
                             for k, v in tagger.vocab.tables.items()},
                  "morph_keys": list(tagger.vocab.morph_keys)},
        "tensors": [[name, list(tagger.params[name].shape)]
                    for name in names],
    }
    blob = json.dumps(header, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for name in names:
            f.write(np.ascontiguousarray(
                tagger.params[name], dtype="<f8").tobytes())


def load_checkpoint(path) -> GruTagger:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError("not a rucca checkpoint: %s" % path)
        (size,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(size).decode("utf-8"))
        if header["version"] != 1:
            raise ValueError("unsupported checkpoint version %s"
                             % header["version"])
        vocab = FeatureVocabularies(
            tables={k: dict(v)
                    for k, v in header["vocab"]["tables"].items()},
            morph_keys=tuple(header["vocab"]["morph_keys"]))
        tagger = GruTagger(TaggerConfig(**header["config"]), vocab,
                           header["aux_vocab"])
        for name, shape in header["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(f.read(count * 8), dtype="<f8")
            tagger.params[name] = data.reshape(shape).copy()
    return tagger
