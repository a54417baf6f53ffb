"""Acceptance gate: one test per shipped guarantee, one PASS/FAIL line each.

Covers baseline-metric reproduction, the F1 identity, gradient checks for
every differentiable op plus end-to-end losses, brute-force oracle
equivalence, planted-signal learnability of the full pipeline, summarizer
memorization, the document-count ablation shape, and byte-level
determinism/persistence. Each test also enforces its runtime budget.
"""

import json
import time
from collections import Counter

import numpy as np
import pytest

from bcm import tensor as T
from bcm.data import generate_synthetic_dataset
from bcm.embeddings import EmbeddingTable
from bcm.matcher import MatchExample, MatcherConfig, MatcherModel
from bcm.metrics import classification_metrics, f1_from_pr, rouge_n
from bcm.optim import Adam
from bcm.pipeline import (
    PipelineConfig,
    load_embedding_table,
    load_matcher,
    load_summarizer,
    run_ablation_docs,
    run_pipeline,
    save_embedding_table,
    save_matcher,
    save_summarizer,
)
from bcm.summarizer import SummarizerConfig, SummarizerModel, train_step
from bcm.tensor import Tensor
from bcm.text import Vocabulary
from gradcheck import check_gradients

RNG = np.random.default_rng(20240817)


def verdict(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name} ({detail})"
    print(line)
    assert ok, line


def budget(name, t0, limit_s):
    elapsed = time.perf_counter() - t0
    assert elapsed < limit_s, f"{name} took {elapsed:.1f}s, budget {limit_s}s"
    return elapsed


# ---- 1: baseline rows at 5.5% prevalence ----

def test_random_guess_baselines():
    t0 = time.perf_counter()
    labels = [1] * 110 + [0] * 1890          # prevalence 0.055
    rg0 = classification_metrics([0] * 2000, labels)
    rg1 = classification_metrics([1] * 2000, labels)
    ok = (abs(rg0.accuracy - 0.945) <= 0.002
          and abs(rg1.precision - 0.055) <= 0.002
          and abs(rg1.recall - 1.000) <= 0.002
          and abs(rg1.f1 - 0.105) <= 0.002
          and abs(rg1.accuracy - 0.055) <= 0.002)
    elapsed = budget("baselines", t0, 1.0)
    verdict("random-guess baselines", ok,
            f"all-negative acc {rg0.accuracy:.3f}, all-positive "
            f"P/R/F1/acc {rg1.precision:.3f}/{rg1.recall:.3f}/"
            f"{rg1.f1:.3f}/{rg1.accuracy:.3f}, {elapsed:.2f}s")


# ---- 2: F1 harmonic-mean identity ----

def test_f1_identity():
    t0 = time.perf_counter()
    f1 = f1_from_pr(0.990, 0.811)
    ok = abs(f1 - 0.892) <= 0.001
    ok = ok and abs((f1 - 0.530) - 0.362) <= 0.002
    elapsed = budget("f1 identity", t0, 1.0)
    verdict("f1 identity", ok, f"f1(0.990, 0.811) = {f1:.4f}, {elapsed:.2f}s")


# ---- 3: gradient suite ----

def _away_from_zero(shape, margin=0.05):
    x = RNG.standard_normal(shape)
    return x + np.sign(x) * margin


def _elementwise_cases():
    a, b = RNG.standard_normal((3, 4)), RNG.standard_normal((3, 4))
    pos = np.abs(RNG.standard_normal((3, 4))) + 0.5
    row = RNG.standard_normal(4)
    return [
        ("add", lambda x, y: (x + y).sum(), [a, b]),
        ("add broadcast", lambda x, y: (x + y).sum(), [a, row]),
        ("sub", lambda x, y: (x - y).sum(), [a, b]),
        ("mul", lambda x, y: (x * y).sum(), [a, b]),
        ("div", lambda x, y: (x / y).sum(), [a, pos]),
        ("pow", lambda x: (x ** 2.5).sum(), [pos]),
        ("matmul", lambda x, y: T.matmul(x, y).sum(),
         [RNG.standard_normal((3, 4)), RNG.standard_normal((4, 2))]),
        ("reshape", lambda x: (x.reshape(2, 6) * row[:2].reshape(2, 1)).sum(), [a]),
        ("transpose", lambda x: (x.T * 1.5).sum(), [a]),
        ("getitem", lambda x: (x[np.array([0, 2, 2])] ** 2.0).sum(), [a]),
        ("sum axis", lambda x: (x.sum(axis=0) ** 2.0).sum(), [a]),
        ("mean", lambda x: (x.mean() * 3.0), [a]),
        ("exp", lambda x: x.exp().sum(), [a]),
        ("log", lambda x: x.log().sum(), [pos]),
        ("tanh", lambda x: x.tanh().sum(), [a]),
        ("relu", lambda x: T.relu(x).sum(), [_away_from_zero((3, 4))]),
        ("sigmoid", lambda x: T.sigmoid(x).sum(), [a]),
        ("softmax", lambda x: (T.softmax(x) * b).sum(), [a]),
        ("concat", lambda x, y: (T.concat([x, y], axis=0) ** 2.0).sum(), [a, b]),
        ("layer_norm",
         lambda x, g, c: (T.layer_norm(x, g, c) * b).sum(),
         [a, np.abs(RNG.standard_normal(4)) + 0.5, RNG.standard_normal(4)]),
        ("attention",
         lambda q, k, v: T.scaled_dot_product_attention(q, k, v).sum(),
         [RNG.standard_normal((3, 4)), RNG.standard_normal((5, 4)),
          RNG.standard_normal((5, 4))]),
        ("conv2d",
         lambda x, w, c: T.conv2d(x, w, c, activation="relu").sum(),
         [RNG.standard_normal((2, 5, 5)), RNG.standard_normal((3, 2, 3, 3)) * 0.5,
          RNG.standard_normal(3)]),
        ("maxpool2d", lambda x: (T.maxpool2d(x, 2, 2) ** 2.0).sum(),
         [RNG.standard_normal((2, 4, 4))]),
        ("bce_with_logits",
         lambda x: T.bce_with_logits(x, [1.0, 0.0, 1.0, 0.0] * 2),
         [RNG.standard_normal(8)]),
        ("bce_loss", lambda x: T.bce_loss(x, [1.0, 0.0, 1.0, 0.0] * 2),
         [RNG.uniform(0.05, 0.95, 8)]),
        ("cross_entropy", lambda x: T.cross_entropy(x, [1, 4, 0, 2]),
         [RNG.standard_normal((4, 6))]),
    ]


def test_gradient_suite():
    t0 = time.perf_counter()
    probes = Counter()
    for name, build, inputs in _elementwise_cases():
        for trial in range(3):
            shifted = [x + 0.0 for x in inputs] if trial == 0 else \
                [x * (1.0 + 0.1 * trial) for x in inputs]
            if name == "bce_loss":  # stay inside the probability domain
                shifted = [np.clip(x, 0.05, 0.95) for x in shifted]
            check_gradients(build, shifted)
            probes[name] += sum(np.asarray(x).size for x in shifted)
        assert probes[name] >= 20, f"{name}: only {probes[name]} probes"

    # gelu path at looser tolerance (tanh-approximation derivative)
    for trial in range(3):
        x = RNG.standard_normal((3, 4)) * (1.0 + 0.2 * trial)
        check_gradients(lambda t: T.gelu(t).sum(), [x], rtol=1e-3)
        probes["gelu"] += x.size
    assert probes["gelu"] >= 20

    # end-to-end summarizer loss on a tiny config
    scfg = SummarizerConfig(vocab_size=12, num_layers=1, hidden_dim=8,
                            num_heads=2, ffn_dim=16, max_source_len=16,
                            max_decode_len=6)
    model = SummarizerModel(scfg, seed=5)
    src, tgt = [4, 5, 6, 7, 8], [5, 6, 7]

    def summarizer_loss():
        enc = model.encode(src)
        logits = model.decoder_logits(enc, [2] + tgt, src)
        return T.cross_entropy(logits, tgt + [3])

    for pname in ("enc.0.ln1.g", "dec.0.ffn.b1", "out_proj.b"):
        param = model.params[pname]
        for p in model.params.values():
            p.grad = None
        summarizer_loss().backward()
        grad = param.grad.copy()
        saved = param.data.copy()
        fd = np.zeros_like(saved)
        h = 1e-5
        flat, fdflat = saved.reshape(-1), fd.reshape(-1)
        for i in range(flat.size):
            param.data.reshape(-1)[i] = flat[i] + h
            up = float(summarizer_loss().data)
            param.data.reshape(-1)[i] = flat[i] - h
            dn = float(summarizer_loss().data)
            param.data.reshape(-1)[i] = flat[i]
            fdflat[i] = (up - dn) / (2 * h)
        np.testing.assert_allclose(grad, fd, rtol=1e-3, atol=1e-7,
                                   err_msg=f"summarizer {pname}")
        probes["summarizer"] += flat.size
    assert probes["summarizer"] >= 20

    # end-to-end matcher loss on a tiny config
    mcfg = MatcherConfig(summary_max_tokens=10, embedding_dim=8,
                         conv_specs=((3, 3), (2, 4)), pool_specs=((2, 2), (1, 1)))
    vocab = Vocabulary([f"w{i}" for i in range(16)])
    table = EmbeddingTable(vocab, RNG.standard_normal((len(vocab), 8)))
    matcher = MatcherModel(mcfg, table, seed=6)
    ex = MatchExample("c", "b", list(RNG.integers(4, 20, 10)),
                      list(RNG.integers(4, 20, 10)), 1)

    def matcher_loss():
        return T.bce_with_logits(matcher.logit(ex), [1.0])

    for pname in ("match.conv1.b", "match.conv2.b", "match.mlp.b1", "match.mlp.b2"):
        param = matcher.params[pname]
        for p in matcher.params.values():
            p.grad = None
        matcher_loss().backward()
        grad = param.grad.copy()
        saved = param.data.copy()
        fd = np.zeros_like(saved)
        h = 1e-5
        flat, fdflat = saved.reshape(-1), fd.reshape(-1)
        for i in range(flat.size):
            param.data.reshape(-1)[i] = flat[i] + h
            up = float(matcher_loss().data)
            param.data.reshape(-1)[i] = flat[i] - h
            dn = float(matcher_loss().data)
            param.data.reshape(-1)[i] = flat[i]
            fdflat[i] = (up - dn) / (2 * h)
        np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-7,
                                   err_msg=f"matcher {pname}")
        probes["matcher"] += flat.size
    assert probes["matcher"] >= 20

    elapsed = budget("gradient suite", t0, 120.0)
    verdict("gradient suite", True,
            f"{len(probes)} op groups, {sum(probes.values())} probes, "
            f"{elapsed:.1f}s")


# ---- 4: brute-force oracle equivalence ----

def _naive_conv(x, w, b):
    c_out, c_in, r, _ = w.shape
    _, h, wd = x.shape
    out = np.zeros((c_out, h - r + 1, wd - r + 1))
    for k in range(c_out):
        for i in range(h - r + 1):
            for j in range(wd - r + 1):
                acc = b[k]
                for c in range(c_in):
                    for s in range(r):
                        for t in range(r):
                            acc += w[k, c, s, t] * x[c, i + s, j + t]
                out[k, i, j] = acc
    return out


def _naive_pool(x, ph, pw):
    c, h, w = x.shape
    out = np.zeros((c, h // ph, w // pw))
    for k in range(c):
        for i in range(h // ph):
            for j in range(w // pw):
                out[k, i, j] = x[k, i * ph:(i + 1) * ph, j * pw:(j + 1) * pw].max()
    return out


def _naive_rouge(ref, cand, n):
    def grams(seq):
        return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))
    r, c = grams(ref), grams(cand)
    total = sum(r.values())
    if total == 0:
        return 0.0
    return sum(min(cnt, c[g]) for g, cnt in r.items()) / total


def test_oracle_equivalence():
    from bcm.matcher import similarity_matrix
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    count = 0
    for _ in range(250):
        c_in, c_out = rng.integers(1, 3), rng.integers(1, 4)
        r = rng.integers(1, 4)
        h, w = rng.integers(r, r + 5, 2)
        x = rng.standard_normal((c_in, h, w))
        k = rng.standard_normal((c_out, c_in, r, r))
        b = rng.standard_normal(c_out)
        got = T.conv2d(Tensor(x), Tensor(k), Tensor(b)).data
        np.testing.assert_allclose(got, _naive_conv(x, k, b), atol=1e-9, rtol=0)
        count += 1
    for _ in range(250):
        ph, pw = rng.integers(1, 4, 2)
        h, w = rng.integers(ph, ph + 6), rng.integers(pw, pw + 6)
        x = rng.standard_normal((int(rng.integers(1, 4)), h, w))
        got = T.maxpool2d(Tensor(x), int(ph), int(pw)).data
        np.testing.assert_array_equal(got, _naive_pool(x, ph, pw))
        count += 1
    for _ in range(250):
        n, m, d = rng.integers(1, 9, 3)
        a, b2 = rng.standard_normal((n, d)), rng.standard_normal((m, d))
        got = similarity_matrix(Tensor(a), Tensor(b2)).data
        ref = np.array([[np.dot(a[i], b2[j]) for j in range(m)] for i in range(n)])
        np.testing.assert_allclose(got, ref, atol=1e-12, rtol=0)
        count += 1
    words = [f"w{i}" for i in range(6)]
    for _ in range(250):
        n = int(rng.integers(1, 4))
        ref = [words[i] for i in rng.integers(0, 6, rng.integers(0, 12))]
        cand = [words[i] for i in rng.integers(0, 6, rng.integers(0, 12))]
        assert rouge_n(ref, cand, n) == _naive_rouge(ref, cand, n)
        count += 1
    elapsed = budget("oracle equivalence", t0, 60.0)
    verdict("oracle equivalence", count == 1000,
            f"{count} randomized instances, {elapsed:.1f}s")


# ---- 5: planted-signal learnability + null-signal control ----

def test_synthetic_learnability(tmp_path):
    t0 = time.perf_counter()
    corpus, pairs = tmp_path / "c.jsonl", tmp_path / "p.jsonl"
    generate_synthetic_dataset(corpus, pairs, seed=0)
    cfg = PipelineConfig(corpus_path=str(corpus), pairs_path=str(pairs),
                         output_dir=str(tmp_path / "out"), seed=0)
    report = run_pipeline(cfg)

    null_corpus, null_pairs = tmp_path / "nc.jsonl", tmp_path / "np.jsonl"
    generate_synthetic_dataset(null_corpus, null_pairs, seed=0,
                               signal_strength=0.0)
    null_cfg = PipelineConfig(corpus_path=str(null_corpus),
                              pairs_path=str(null_pairs),
                              output_dir=str(tmp_path / "null"), seed=0)
    null_report = run_pipeline(null_cfg)

    ok = (report.accuracy >= 0.95 and report.f1 >= 0.60
          and null_report.f1 < 0.30)
    elapsed = budget("synthetic learnability", t0, 600.0)
    verdict("synthetic learnability", ok,
            f"acc {report.accuracy:.3f}, f1 {report.f1:.3f}, "
            f"null f1 {null_report.f1:.3f}, {elapsed:.0f}s")


# ---- 6: summarizer memorization + termination ----

def test_summarizer_memorization():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    words = [f"w{i:02d}" for i in range(50)]
    vocab = Vocabulary(words)
    examples = []
    for _ in range(20):
        toks = [words[i] for i in rng.integers(0, 50, rng.integers(12, 20))]
        tgt = toks[:int(rng.integers(5, 9))]
        examples.append((vocab.encode(toks), vocab.encode(tgt), tgt))

    model = SummarizerModel(SummarizerConfig(vocab_size=len(vocab)), seed=0)
    opt = Adam(model.parameters(), lr=2e-3)
    order_rng = np.random.default_rng(0)
    steps = 0
    while steps < 300:
        for i in order_rng.permutation(len(examples)):
            if steps >= 300:
                break
            train_step(model, examples[i][0], examples[i][1], opt)
            steps += 1

    terminated = 0
    scores = []
    for src, _, tgt in examples:
        out = model.generate_greedy(src)
        if len(out) <= model.config.max_decode_len:
            terminated += 1
        scores.append(rouge_n(tgt, vocab.decode(out), 1))
    mean_rouge = float(np.mean(scores))
    ok = mean_rouge >= 0.90 and terminated == len(examples)
    elapsed = budget("summarizer memorization", t0, 300.0)
    verdict("summarizer memorization", ok,
            f"training-set rouge1 {mean_rouge:.3f} after {steps} steps, "
            f"{terminated}/{len(examples)} decodes terminated, {elapsed:.0f}s")


# ---- 7: document-count ablation shape ----

def test_document_count_ablation(tmp_path):
    t0 = time.perf_counter()
    corpus, pairs = tmp_path / "c.jsonl", tmp_path / "p.jsonl"
    # entities carry 4 documents; only news documents at positions 2-3
    # quote signature tokens, so k=1 sees no signal
    generate_synthetic_dataset(corpus, pairs, seed=0, news_per_entity=3,
                               signal_docs={2, 3})
    cfg = PipelineConfig(corpus_path=str(corpus), pairs_path=str(pairs),
                         output_dir=str(tmp_path / "abl"), seed=0)
    results = run_ablation_docs(cfg, k_values=(1, 2, 3, 4, 5))
    rows = (tmp_path / "abl" / "ablation.tsv").read_text().splitlines()
    ok = (len(rows) == 6
          and results[4].f1 > results[1].f1
          and results[5].f1 == results[4].f1
          and results[5].accuracy == results[4].accuracy)
    elapsed = budget("ablation", t0, 900.0)
    verdict("document-count ablation", ok,
            "f1 by k " + "/".join(f"{results[k].f1:.3f}" for k in (1, 2, 3, 4, 5))
            + f", {elapsed:.0f}s")


# ---- 8: determinism + checkpoint persistence ----

def test_determinism_and_persistence(tmp_path):
    t0 = time.perf_counter()
    corpus, pairs = tmp_path / "c.jsonl", tmp_path / "p.jsonl"
    generate_synthetic_dataset(corpus, pairs, num_celebrities=8, num_brands=6,
                               positive_rate=0.25, news_per_entity=2, seed=0)
    cfg = PipelineConfig(corpus_path=str(corpus), pairs_path=str(pairs),
                         output_dir=str(tmp_path / "out"), seed=0,
                         docs_per_entity=2, embedding_dim=16,
                         embedding_epochs=2, summarizer_mode="train",
                         summarizer_epochs=1, summary_max_tokens=16,
                         conv_specs=((3, 4), (2, 6)),
                         pool_specs=((2, 2), (2, 2)), matcher_epochs=2)
    run_pipeline(cfg)
    first_report = (tmp_path / "out" / "report.json").read_bytes()
    first_scores = (tmp_path / "out" / "scores.jsonl").read_bytes()
    run_pipeline(cfg)
    same_report = (tmp_path / "out" / "report.json").read_bytes() == first_report
    same_scores = (tmp_path / "out" / "scores.jsonl").read_bytes() == first_scores

    # save(load(x)) must reproduce each checkpoint file byte for byte
    out = tmp_path / "out"
    table = load_embedding_table(out / "embeddings.ckpt")
    save_embedding_table(tmp_path / "emb2.ckpt", table)
    matcher = load_matcher(out / "matcher.ckpt", table)
    save_matcher(tmp_path / "match2.ckpt", matcher)
    summarizer = load_summarizer(out / "summarizer.ckpt")
    save_summarizer(tmp_path / "sum2.ckpt", summarizer)
    roundtrips = sum([
        (out / "embeddings.ckpt").read_bytes() == (tmp_path / "emb2.ckpt").read_bytes(),
        (out / "matcher.ckpt").read_bytes() == (tmp_path / "match2.ckpt").read_bytes(),
        (out / "summarizer.ckpt").read_bytes() == (tmp_path / "sum2.ckpt").read_bytes(),
    ])
    ok = same_report and same_scores and roundtrips == 3
    elapsed = budget("determinism", t0, 120.0)
    verdict("determinism and persistence", ok,
            f"report byte-identical: {same_report}, scores byte-identical: "
            f"{same_scores}, {roundtrips}/3 checkpoints bitwise, {elapsed:.0f}s")
