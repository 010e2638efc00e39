import numpy as np
import pytest

from rucca import bio
from rucca.corpus import expand
from rucca.features import FeaturizerContext, fit_vocabularies
from rucca.tagger import (GruTagger, NumericError, OracleTagger,
                          TaggerConfig, TrainConfig, build_aux_vocab,
                          load_checkpoint, oracle_predict, save_checkpoint,
                          token_accuracy, train)

from helpers import (context_for, fig1_passage, random_corpus,
                     single_token_passage, two_scene_5tok_passage)


def _tiny_setup(hidden=4, cat_dim=2, lambda_aux=1.0, seed=7):
    passages = [fig1_passage()]
    ctx = context_for(passages)
    examples = [ex for p in passages for ex in expand(p)]
    cfg = TaggerConfig(hidden=hidden, cat_dim=cat_dim, n_layers=4,
                      lambda_aux=lambda_aux, seed=seed)
    tagger = GruTagger(cfg, ctx.vocab, build_aux_vocab(examples))
    return tagger, ctx, examples


def test_forward_rows_normalized():
    tagger, ctx, examples = _tiny_setup()
    dist, _ = tagger.forward(ctx.featurize(examples[0]))
    np.testing.assert_allclose(dist.task1.sum(axis=1), 1.0, atol=1e-6)
    np.testing.assert_allclose(dist.task2.sum(axis=1), 1.0, atol=1e-6)
    assert dist.task1.shape == (7, bio.N_BIO)


def test_forward_length_one():
    passages = [single_token_passage()]
    ctx = context_for(passages)
    examples = expand(passages[0])
    tagger = GruTagger(TaggerConfig(hidden=4, cat_dim=2), ctx.vocab,
                       build_aux_vocab(examples))
    dist, _ = tagger.forward(ctx.featurize(examples[0]))
    assert dist.task1.shape[0] == 1
    assert dist.task2.shape[0] == 1


def test_forward_deterministic_under_seed():
    a, ctx, examples = _tiny_setup(seed=99)
    b, _, _ = _tiny_setup(seed=99)
    feats = ctx.featurize(examples[1])
    da, _ = a.forward(feats)
    db, _ = b.forward(feats)
    assert np.array_equal(da.task1, db.task1)
    assert np.array_equal(da.task2, db.task2)


def test_loss_uniform_analytic_value():
    # With TASK1-only loss and uniform predictions, loss = ln 53.
    tagger, ctx, examples = _tiny_setup(lambda_aux=0.0)
    for key in ("out1/W", "out1/b"):
        tagger.params[key][:] = 0.0
    # zero the top layer so logits are exactly constant
    feats = ctx.featurize(examples[0])
    y1, y2 = tagger.target_ids(examples[0])
    value, _ = tagger.loss(feats, y1, y2)
    assert abs(value - np.log(bio.N_BIO)) < 1e-12


def test_loss_matches_independent_cross_entropy():
    tagger, ctx, examples = _tiny_setup()
    feats = ctx.featurize(examples[2])
    y1, y2 = tagger.target_ids(examples[2])
    value, cache = tagger.loss(feats, y1, y2)
    dist, _ = tagger.forward(feats)
    # independent recomputation from the probability rows
    n = feats.length
    expected = -np.mean(np.log(dist.task1[np.arange(n), y1]))
    expected += -np.mean(np.log(dist.task2[np.arange(n), y2]))
    assert abs(value - expected) < 1e-8


def test_loss_near_zero_for_confident_correct_model():
    tagger, ctx, examples = _tiny_setup()
    feats = ctx.featurize(examples[0])
    y1, y2 = tagger.target_ids(examples[0])
    _, cache = tagger.forward(feats)
    # push the correct logits far up: softmax ~ one-hot on the target
    n = feats.length
    cache["logits1"] = np.zeros_like(cache["logits1"])
    cache["logits1"][np.arange(n), y1] = 50.0
    cache["logits2"] = np.zeros_like(cache["logits2"])
    cache["logits2"][np.arange(n), y2] = 50.0
    value, _ = tagger.loss(feats, y1, y2, cache)
    assert value < 1e-6


def _max_rel_err(analytic, numeric):
    diff = np.max(np.abs(analytic - numeric))
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1.0)
    return diff / scale


def gradient_check(tagger, feats, y1, y2, eps=1e-4):
    """Central finite differences over every parameter tensor."""
    _, grads = tagger.gradients(feats, y1, y2)
    worst = {}
    for name in sorted(tagger.params):
        p = tagger.params[name]
        numeric = np.zeros_like(p)
        flat = p.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp, _ = tagger.loss(feats, y1, y2)
            flat[i] = orig - eps
            lm, _ = tagger.loss(feats, y1, y2)
            flat[i] = orig
            nflat[i] = (lp - lm) / (2.0 * eps)
        worst[name] = _max_rel_err(grads[name], numeric)
    return worst


def test_gradient_check_tiny_model():
    # 3-token sentence, h=4, both heads active.
    passages = [two_scene_5tok_passage()]
    tokens = passages[0].tokens[:3]
    from rucca.corpus import MaskedExample
    example = MaskedExample(passage_id="t", tokens=tokens,
                            mask=("ROOT", "ROOT", "ROOT"),
                            focus_node="n0",
                            target_bio=("B-H", "I-H", "B-L"),
                            target_aux=("H", "H", "L"))
    ctx = context_for(passages)
    tagger = GruTagger(TaggerConfig(hidden=4, cat_dim=2, lambda_aux=0.7,
                                    seed=3),
                       ctx.vocab, ("H", "L", "O"))
    feats = ctx.featurize(example)
    y1, y2 = tagger.target_ids(example)
    worst = gradient_check(tagger, feats, y1, y2)
    for name, err in sorted(worst.items()):
        assert err < 1e-4, "%s: rel err %.3g" % (name, err)


def test_gradients_zero_for_aux_head_when_lambda_zero():
    tagger, ctx, examples = _tiny_setup(lambda_aux=0.0)
    feats = ctx.featurize(examples[0])
    y1, y2 = tagger.target_ids(examples[0])
    _, grads = tagger.gradients(feats, y1, y2)
    assert np.all(grads["out2/W"] == 0.0)
    assert np.all(grads["out2/b"] == 0.0)


def test_gradients_vanish_at_zero_loss():
    # saturate the output biases toward the gold labels: loss ~ 0
    sub_example = expand(single_token_passage())[0]
    ctx1 = context_for([single_token_passage()])
    tagger1 = GruTagger(TaggerConfig(hidden=4, cat_dim=2, seed=5),
                        ctx1.vocab, build_aux_vocab([sub_example]))
    y1, y2 = tagger1.target_ids(sub_example)
    tagger1.params["out1/W"][:] = 0.0
    tagger1.params["out2/W"][:] = 0.0
    tagger1.params["out1/b"][:] = -60.0
    tagger1.params["out1/b"][y1[0]] = 60.0
    tagger1.params["out2/b"][:] = -60.0
    tagger1.params["out2/b"][y2[0]] = 60.0
    feats1 = ctx1.featurize(sub_example)
    value, grads = tagger1.gradients(feats1, y1, y2)
    assert value < 1e-6
    assert max(np.max(np.abs(g)) for g in grads.values()) < 1e-6


def test_nonfinite_forward_reported():
    tagger, ctx, examples = _tiny_setup()
    tagger.params["out1/W"][0, 0] = np.nan
    with pytest.raises(NumericError):
        tagger.forward(ctx.featurize(examples[0]))


def test_train_logs_one_line_per_epoch():
    passages = [two_scene_5tok_passage()]
    ctx = context_for(passages)
    examples = [ex for p in passages for ex in expand(p)]
    cfg = TrainConfig(epochs=1, hidden=4, cat_dim=2, batch_size=4, seed=1)
    _, log = train(examples, [], ctx, cfg)
    assert len(log) == 1
    cfg2 = TrainConfig(epochs=3, hidden=4, cat_dim=2, batch_size=4, seed=1)
    _, log = train(examples, [], ctx, cfg2)
    assert [r["epoch"] for r in log] == [1, 2, 3]


def test_train_same_seed_identical_params():
    passages = random_corpus(seed=41, count=3)
    ctx = context_for(passages)
    examples = [ex for p in passages for ex in expand(p)]
    cfg = TrainConfig(epochs=2, hidden=4, cat_dim=2, batch_size=4, seed=13)
    a, _ = train(examples, [], ctx, cfg)
    b, _ = train(examples, [], ctx, cfg)
    assert sorted(a.params) == sorted(b.params)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k]), k


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)


def test_oracle_predict_single_token():
    p = single_token_passage()
    dist = oracle_predict(p, "n0")
    assert dist.task1[0, bio.BIO_INDEX["B-H"]] == 1.0


def test_oracle_predict_fig1_root():
    p = fig1_passage()
    dist = oracle_predict(p, "n0")
    labels = ["B-H", "I-H", "I-H", "B-L", "B-H", "I-H", "I-H"]
    for i, lb in enumerate(labels):
        assert dist.task1[i, bio.BIO_INDEX[lb]] == 1.0


def test_oracle_predict_remote_rows():
    p = fig1_passage()
    dist = oracle_predict(p, "n2")
    assert dist.task1[0, bio.BIO_INDEX["B-REM-A"]] == 1.0
    assert dist.task1[4, bio.BIO_INDEX["B-A"]] == 1.0


def test_oracle_tagger_resolves_focus_from_mask():
    p = fig1_passage()
    oracle = OracleTagger([p])
    examples = {ex.focus_node: ex for ex in expand(p)}
    ctx = context_for([p])
    for nid, ex in examples.items():
        dist = oracle.predict(ex, ctx.featurize(ex))
        expected = oracle_predict(p, nid)
        assert np.array_equal(dist.task1, expected.task1)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    tagger, ctx, examples = _tiny_setup()
    path = tmp_path / "m.ckpt"
    save_checkpoint(tagger, path)
    loaded = load_checkpoint(path)
    assert loaded.config == tagger.config
    assert loaded.aux_vocab == tagger.aux_vocab
    assert loaded.vocab.tables == tagger.vocab.tables
    for k in tagger.params:
        assert np.array_equal(loaded.params[k], tagger.params[k]), k
    # byte-identical re-serialization
    path2 = tmp_path / "m2.ckpt"
    save_checkpoint(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_token_accuracy_perfect_on_oracleish_setup():
    passages = [single_token_passage()]
    ctx = context_for(passages)
    examples = expand(passages[0])
    tagger = GruTagger(TaggerConfig(hidden=4, cat_dim=2, seed=5),
                       ctx.vocab, build_aux_vocab(examples))
    y1, _ = tagger.target_ids(examples[0])
    tagger.params["out1/W"][:] = 0.0
    tagger.params["out1/b"][:] = -10.0
    tagger.params["out1/b"][y1[0]] = 10.0
    assert token_accuracy(tagger, ctx, examples) == 1.0
