"""Acceptance suite: every release criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line per
criterion. The learnability runs are seed-pinned and finish on a laptop CPU.
"""

import time

import numpy as np
import pytest

from pixelcoder import heads as H
from pixelcoder import model as M
from pixelcoder import nn
from pixelcoder import tensor as T
from pixelcoder.atlas import default_atlas
from pixelcoder.attacks import ATTACK_KINDS, AttackConfig, Attacker, apply_attack, load_confusable_map
from pixelcoder.checkpoint import load_checkpoint, save_checkpoint
from pixelcoder.config import RunConfig
from pixelcoder.data import PairRecord, QaRecord, TaggedRecord
from pixelcoder.masking import MaskConfig, generate_mask
from pixelcoder.optim import OptimizerConfig, OptimizerState
from pixelcoder.render import PatchType, RendererConfig, render_text, render_words, split_long
from pixelcoder.runner import attack_records, run_finetune, run_pretrain, split_finetuned_checkpoint
from pixelcoder.tensor import Tensor

from oracles import finite_difference_grads, max_relative_error, mean_patch_predictor

ATLAS = default_atlas()
RCFG = RendererConfig(channels=1, max_patches=64)
F64 = np.float64


def announce(number, name, detail=""):
    print(f"\nACCEPTANCE {number} {name}: PASS {detail}")


# ---------------------------------------------------------------------------
# shared fixtures


PRETRAIN_TEMPLATES = [
    "the red cat sleeps on the warm mat",
    "a blue bird sings in the tall tree",
    "two old dogs walk down the long road",
    "my small fish swims in its glass bowl",
    "the big bear eats honey by the river",
    "one grey wolf howls at the pale moon",
    "her fast horse runs over the green hill",
    "his tame crow waits on the wire fence",
    "six fat hens peck corn near the barn",
    "ten wild bees buzz round the ripe plum",
]

TAG_VOCAB = [
    "cat", "dog", "pig", "fox", "bee", "owl", "ant", "bat", "cow", "elk",
    "hen", "jay", "koi", "ram", "sow", "yak", "ape", "asp", "cod", "eel",
    "emu", "gnu", "hog", "kit", "pup", "rat",
]


def tag_of(word: str) -> str:
    return "T" + str(sum(ord(c) for c in word) % 5)


def make_tagging_records(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        words = tuple(TAG_VOCAB[rng.integers(0, len(TAG_VOCAB))] for _ in range(int(rng.integers(3, 8))))
        out.append(TaggedRecord(words=words, tags=tuple(tag_of(w) for w in words)))
    return out


@pytest.fixture(scope="module")
def tagging_artifacts(tmp_path_factory):
    """Finetuned synthetic tagger shared by criteria 7 and 9."""
    out = tmp_path_factory.mktemp("tagging")
    train = make_tagging_records(500, 1)
    evalr = make_tagging_records(100, 2)
    cfg = RunConfig(
        task="pos_tagging",
        profile="toy",
        seed=7,
        training_steps=1500,
        batch_size=16,
        peak_learning_rate=1e-3,
        learning_rate_warmup_steps=50,
        eval_steps=250,
        early_stopping=True,
        early_stopping_patience=3,
    )
    result = run_finetune(cfg, out, train_records=train, eval_records=evalr)
    return {
        "cfg": cfg,
        "train": train,
        "eval": evalr,
        "result": result,
        "checkpoint": out / "checkpoint.pxck",
    }


# ---------------------------------------------------------------------------
# 1. gradient suite


class TestCriterion1Gradients:
    def test_gradient_suite(self):
        started = time.monotonic()
        rng_master = np.random.default_rng(0)
        checked = 0
        worst = 0.0

        def check(build, arrays, eps=1e-3):
            nonlocal checked, worst
            tensors = [Tensor(a, requires_grad=True, dtype=F64) for a in arrays]
            build(tensors).backward()

            def f(arrs):
                return float(build([Tensor(a, dtype=F64) for a in arrs]).data)

            numeric = finite_difference_grads(f, arrays, eps=eps)
            err = max_relative_error([t.grad for t in tensors], numeric)
            worst = max(worst, err)
            assert err < 1e-4, f"op-level gradient error {err:.2e}"
            checked += 1

        def dims(rng):
            return (int(rng.integers(1, 5)), int(rng.integers(1, 9)), int(rng.integers(2, 17)))

        for seed in range(40):
            rng = np.random.default_rng((1, seed))
            a, b, c = dims(rng)
            x = rng.standard_normal((a, b, c))
            y = rng.standard_normal((a, b, c))
            check(lambda ts: (T.gelu(ts[0]) * ts[1] + (ts[0] * ts[1]).tanh()).sum(), [x, y])

        for seed in range(20):
            rng = np.random.default_rng((2, seed))
            a, b, c = dims(rng)
            x = rng.standard_normal((a * b, c))
            g = rng.standard_normal(c) + 1.0
            be = rng.standard_normal(c)
            coeff = rng.standard_normal((a * b, c))
            check(lambda ts: (T.layer_norm(ts[0], ts[1], ts[2], 1e-12) * coeff).sum(), [x, g, be])

        for seed in range(20):
            rng = np.random.default_rng((3, seed))
            a, b, c = dims(rng)
            x = rng.standard_normal((a, b, c))
            coeff = rng.standard_normal((a, b, c))
            valid = int(rng.integers(1, c + 1))
            check(lambda ts: (T.masked_softmax(ts[0], valid) * coeff).sum(), [x])

        for seed in range(10):
            rng = np.random.default_rng((4, seed))
            a, b, c = dims(rng)
            x = rng.standard_normal((a, b))
            w = rng.standard_normal((b, c))
            check(lambda ts: T.gelu(T.matmul(ts[0], ts[1])).sum(), [x, w])

        for seed in range(10):
            rng = np.random.default_rng((5, seed))
            n = int(rng.integers(2, 8))
            k = int(rng.integers(2, 8))
            x = rng.standard_normal((n, k))
            labels = rng.integers(0, k, size=n)
            labels[rng.integers(0, n)] = -100
            if (labels == -100).all():
                labels[0] = 0
            check(lambda ts: T.cross_entropy(ts[0], labels), [x])

        for seed in range(6):
            rng = np.random.default_rng((6, seed))
            width, seq = 8, int(rng.integers(2, 6))
            params = nn.init_attention(width, rng, dtype=F64)
            names = ["wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"]
            arrays = [rng.standard_normal((seq, width))] + [params[n].data for n in names]
            coeff = rng.standard_normal((seq, width))
            valid = int(rng.integers(1, seq + 1))
            check(
                lambda ts: (nn.self_attention(ts[0], valid, 2, dict(zip(names, ts[1:]))) * coeff).sum(),
                arrays,
            )

        assert checked >= 100, checked

        # end-to-end: pretraining loss gradient vs finite differences
        cfg = M.PixelConfig(
            channels=1, max_patches=12, enc_width=16, enc_intermediate=32,
            enc_heads=2, enc_layers=2, dec_width=8, dec_intermediate=16,
            dec_heads=2, dec_layers=1, dropout=0.0,
        )
        params = M.ModelParameters.init(cfg, np.random.default_rng(0), dtype=F64)
        rcfg = RendererConfig(channels=1, max_patches=12)
        seq = render_text("abcd efgh ij", rcfg, ATLAS)
        mask = generate_mask(MaskConfig.fitted(seq.num_text_patches), np.random.default_rng(1))
        report = M.forward_loss(seq, mask, params)
        report.node.backward()
        rng = np.random.default_rng(2)
        names = sorted(params.named)
        worst_e2e = 0.0
        for _ in range(50):
            name = names[rng.integers(0, len(names))]
            arr = params.named[name].data
            idx = tuple(rng.integers(0, s) for s in arr.shape)
            orig = arr[idx]
            eps = 1e-4
            arr[idx] = orig + eps
            hi = M.forward_loss(seq, mask, params).value
            arr[idx] = orig - eps
            lo = M.forward_loss(seq, mask, params).value
            arr[idx] = orig
            numeric = (hi - lo) / (2 * eps)
            analytic = params.named[name].grad[idx] if params.named[name].grad is not None else 0.0
            worst_e2e = max(worst_e2e, abs(analytic - numeric) / max(1.0, abs(numeric)))
        assert worst_e2e < 1e-3, worst_e2e

        elapsed = time.monotonic() - started
        assert elapsed < 120.0, f"gradient suite took {elapsed:.0f}s"
        announce(1, "gradient suite", f"({checked} op checks, worst {worst:.1e}; e2e worst {worst_e2e:.1e}; {elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# 2. masking suite


class TestCriterion2Masking:
    def test_masking_suite(self):
        started = time.monotonic()
        cfg = MaskConfig(num_patches=529, ratio=0.25, max_span=6)
        rng = np.random.default_rng(0)
        sampled = []
        for _ in range(10_000):
            mask = generate_mask(cfg, rng)
            size = len(mask)
            assert 132.25 < size <= 138.25, size
            runs = mask.runs()
            for _, length in runs:
                assert length <= 6
            for (a, alen), (b, _) in zip(runs, runs[1:]):
                assert b - (a + alen) >= 1
            sampled.extend(mask.sampled_lengths)
        mean_len = float(np.mean(sampled))
        assert 3.0 <= mean_len <= 3.2, mean_len
        elapsed = time.monotonic() - started
        assert elapsed < 30.0, f"masking suite took {elapsed:.1f}s"
        announce(2, "masking suite", f"(10000 masks, mean sampled span {mean_len:.3f}; {elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# 3. mask / padding invariance


class TestCriterion3Invariance:
    def test_mask_and_padding_invariance(self):
        params = M.ModelParameters.init(M.TOY_PROFILE, np.random.default_rng(0))
        rng = np.random.default_rng(1)
        letters = "abcdefghijklmnopqrstuvwxyz "
        p = M.TOY_PROFILE.patch_size
        for case in range(100):
            text = "".join(letters[rng.integers(0, len(letters))] for _ in range(int(rng.integers(16, 60))))
            seq = render_text(text.strip() or "pad", RCFG, ATLAS)
            if seq.num_text_patches < 8:
                seq = render_text("fallback words here", RCFG, ATLAS)
            mask = M.mask_for_sequence(seq, M.TOY_PROFILE, np.random.default_rng((2, case)))
            n_valid = int(np.sum(np.array(seq.patch_types) != PatchType.PAD))

            base_enc = M.encode(M.patch_embed(seq, params), mask, params, n_valid=n_valid)
            base_loss = M.forward_loss(seq, mask, params).value

            # perturb masked-patch pixels: encoder outputs must be bitwise equal
            noisy = seq.pixels.copy()
            for i in mask.indices:
                noisy[:, i * p : (i + 1) * p, :] = rng.random((p, p, 1))
            enc2 = M.encode(M.patch_embed(noisy, params), mask, params, n_valid=n_valid)
            assert np.array_equal(base_enc.hidden.data, enc2.hidden.data)

            # append PAD patches: loss and non-PAD rows move by < 1e-6
            padded = render_text(seq.source_text, RCFG, ATLAS, pad_to=min(seq.num_patches + 5, RCFG.max_patches))
            enc3 = M.encode(M.patch_embed(padded, params), mask, params, n_valid=n_valid)
            keep = base_enc.hidden.shape[0]
            assert np.abs(enc3.hidden.data[:keep] - base_enc.hidden.data).max() < 1e-6
            pad_loss = M.forward_loss(padded, mask, params).value
            assert abs(pad_loss - base_loss) < 1e-6
        announce(3, "mask/padding invariance", "(100 random cases)")


# ---------------------------------------------------------------------------
# 4. loss contract


class TestCriterion4LossContract:
    def test_loss_contract(self):
        rng = np.random.default_rng(0)
        for case in range(25):
            seq = render_text(
                " ".join("word%d" % rng.integers(0, 30) for _ in range(int(rng.integers(4, 10)))),
                RCFG,
                ATLAS,
                pad_to=None,
            )
            mask = M.mask_for_sequence(seq, M.TOY_PROFILE, np.random.default_rng((1, case)))
            flat = M.flatten_patches(seq.pixels, 16)
            norm, _, _ = M.normalize_patch_rows(flat)
            text = set(int(i) for i in seq.text_patch_indices())
            q = sorted(set(mask.indices) & text)
            logits = np.array(rng.standard_normal(flat.shape), dtype=np.float32)
            logits[q] = norm[q]
            report = M.reconstruction_loss(logits, seq, mask)
            assert report.value == 0.0
            assert report.q_indices == tuple(q)
            logits[q[0], 0] += 0.5
            assert M.reconstruction_loss(logits, seq, mask).value > 0.0

            node_in = Tensor(np.array(rng.standard_normal(flat.shape), dtype=np.float32), requires_grad=True)
            report2 = M.reconstruction_loss(node_in, seq, mask)
            report2.node.backward()
            qset = set(q)
            for i in range(seq.num_patches):
                if i in qset:
                    assert np.any(node_in.grad[i] != 0.0)
                else:
                    assert np.all(node_in.grad[i] == 0.0)
        announce(4, "loss contract", "(zero-iff and gradient support over Q, 25 cases)")


# ---------------------------------------------------------------------------
# 5. renderer suite


class TestCriterion5Renderer:
    def test_renderer_suite(self):
        import hashlib

        seq = render_text("The quick brown fox jumps over the lazy dog: 0123456789!", RendererConfig(), ATLAS, pad_to=40)
        digest = hashlib.sha256(seq.pixels.tobytes()).hexdigest()
        assert digest == "0d299268687a8bd1e49940a087bfbfe563a6ac340cfa1fe1c1130cffc584175e"

        rng = np.random.default_rng(0)
        letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"

        def rand_words(max_words=9):
            return [
                "".join(letters[rng.integers(0, len(letters))] for _ in range(int(rng.integers(1, 9))))
                for _ in range(int(rng.integers(1, max_words)))
            ]

        cfg = RendererConfig(max_patches=128)
        for _ in range(1000):
            words = rand_words()
            text = " ".join(words)
            seq = render_text(text, cfg, ATLAS)
            mapping = seq.char_to_patch
            assert all(a <= b for a, b in zip(mapping, mapping[1:]))
            wseq = render_words(words, cfg, ATLAS)
            firsts = wseq.word_to_first_patch
            assert len(set(firsts)) == len(words)
            covered = []
            for lo, hi in wseq.word_patch_spans:
                covered.extend(range(lo, hi))
            assert covered == list(range(wseq.num_text_patches))

        small = RendererConfig(max_patches=8)
        for _ in range(200):
            text = " ".join(rand_words(20))
            parts = split_long(text, small, ATLAS)
            assert "".join(p.source_text for p in parts) == text
            for part in parts:
                assert part.num_text_patches + 1 <= small.max_patches
        announce(5, "renderer suite", "(golden stable, 1000 sentences bijective, 200 split round trips)")


# ---------------------------------------------------------------------------
# 6. toy pretraining


class TestCriterion6Pretraining:
    def test_toy_pretraining(self):
        started = time.monotonic()

        # overfit sanity: 8 fixed lines, fresh masks each step
        overfit_texts = [f"{c * 8} {c * 8}" for c in "abcdefgh"]
        batch = [render_text(t, RCFG, ATLAS) for t in overfit_texts]
        params = M.ModelParameters.init(M.TOY_PROFILE, np.random.default_rng(0))
        state = OptimizerState.for_params(params.named)
        ocfg = OptimizerConfig(
            weight_decay=0.05, peak_lr=3e-3, min_lr=3e-3, warmup_steps=20,
            total_steps=200, schedule_kind="warmup_cosine",
        )
        losses = [M.pretrain_step(batch, params, state, ocfg, seed=3).loss for _ in range(200)]
        assert min(losses) <= 0.5 * losses[0], (losses[0], min(losses))

        # held-out masked-pixel MSE must beat the mean-patch predictor by 30%
        rng = np.random.default_rng(0)
        corpus_lines = [PRETRAIN_TEMPLATES[rng.integers(0, 10)] for _ in range(500)]
        corpus = [render_text(line, RCFG, ATLAS) for line in corpus_lines]
        trained = M.ModelParameters.init(M.TOY_PROFILE, np.random.default_rng(1))
        state2 = OptimizerState.for_params(trained.named)
        ocfg2 = OptimizerConfig(
            weight_decay=0.05, peak_lr=3e-3, min_lr=3e-4, warmup_steps=50,
            total_steps=3000, schedule_kind="warmup_cosine",
        )
        for i in range(1500):
            idx = np.random.default_rng((2, i)).integers(0, len(corpus), size=8)
            M.pretrain_step([corpus[j] for j in idx], trained, state2, ocfg2, seed=5)

        train_rows = []
        for line in corpus_lines[:200]:
            s = render_text(line, RCFG, ATLAS)
            flat = M.flatten_patches(s.pixels, 16)
            norm, _, _ = M.normalize_patch_rows(flat)
            train_rows.append(norm[s.text_patch_indices()])
        oracle_patch = mean_patch_predictor(np.concatenate(train_rows))

        held = [render_text(PRETRAIN_TEMPLATES[rng.integers(0, 10)], RCFG, ATLAS) for _ in range(60)]
        model_err = oracle_err = count = 0.0
        for si, s in enumerate(held):
            mask = M.mask_for_sequence(s, trained.cfg, np.random.default_rng((9, si)))
            rep = M.forward_loss(s, mask, trained)
            flat = M.flatten_patches(s.pixels, 16)
            norm, _, _ = M.normalize_patch_rows(flat)
            q = list(rep.q_indices)
            model_err += rep.value * len(q)
            oracle_err += float(((norm[q] - oracle_patch) ** 2).mean() * len(q))
            count += len(q)
        model_mse = model_err / count
        oracle_mse = oracle_err / count
        improvement = 1.0 - model_mse / oracle_mse
        assert improvement >= 0.30, f"model {model_mse:.4f} vs oracle {oracle_mse:.4f} ({improvement:.1%})"

        elapsed = time.monotonic() - started
        assert elapsed < 900.0, f"toy pretraining took {elapsed:.0f}s"
        announce(
            6,
            "toy pretraining",
            f"(overfit {1 - min(losses) / losses[0]:.0%} drop; beats mean-patch oracle by {improvement:.0%}; {elapsed:.0f}s)",
        )


# ---------------------------------------------------------------------------
# 7. toy finetuning


class TestCriterion7Finetuning:
    def test_tagging_99(self, tagging_artifacts):
        result = tagging_artifacts["result"]
        assert result["best_step"] <= 1500
        assert result["eval"]["accuracy"] >= 0.99, result["eval"]
        announce(7, "toy finetuning / tagging", f"(eval accuracy {result['eval']['accuracy']:.3f} by step {result['best_step']})")

    def test_planted_parse(self):
        arc = np.full((3, 4), -5.0)
        arc[0, 2] = 9.0
        arc[1, 0] = 7.0
        arc[2, 2] = 8.0
        labels = np.full((3, 3), -1.0)
        labels[0, 1] = 3.0
        labels[1, 0] = 2.0
        labels[2, 2] = 5.0
        tree = H.parse_decode(arc, labels)
        assert tree.heads == (2, 0, 2) and tree.labels == (1, 0, 2)
        announce(7, "toy finetuning / planted parse", "(planted scores decode to the planted tree)")

    def test_pair_classification_95(self, tmp_path):
        words = ["ab", "cd", "ef", "gh", "ij", "kl", "mn", "op"]

        def make(n, seed):
            r = np.random.default_rng(seed)
            out = []
            for _ in range(n):
                same = r.random() < 0.5
                a = words[r.integers(0, 8)]
                b = a if same else words[(words.index(a) + 1 + r.integers(0, 7)) % 8]
                out.append(PairRecord(text_a=a, text_b=b, label="same" if same else "diff"))
            return out

        cfg = RunConfig(
            task="classification", profile="toy", seed=7, pooling="mean",
            training_steps=4000, batch_size=16, peak_learning_rate=1e-3,
            learning_rate_warmup_steps=100, eval_steps=250,
            early_stopping=True, early_stopping_patience=5, dropout_probability=0.0,
        )
        result = run_finetune(cfg, tmp_path, train_records=make(400, 1), eval_records=make(100, 2))
        assert result["eval"]["accuracy"] >= 0.95, result["eval"]
        announce(7, "toy finetuning / pair classification", f"(accuracy {result['eval']['accuracy']:.2f})")

    def test_qa_exact_match(self, tmp_path):
        units = ["ab", "cd", "ef", "gh", "ij", "kl", "mn", "op", "qr", "st", "uv", "wx", "yz"]

        def make(n, seed):
            r = np.random.default_rng(seed)
            out = []
            for _ in range(n):
                picks = r.permutation(len(units))[:4]
                chosen = [units[i] for i in picks]
                target = int(r.integers(0, 4))
                out.append(
                    QaRecord(
                        question=chosen[target],
                        context="".join(chosen),
                        answer_start=2 * target,
                        answer_text=chosen[target],
                    )
                )
            return out

        cfg = RunConfig(
            task="qa", profile="toy", seed=7,
            training_steps=1500, batch_size=16, peak_learning_rate=1e-3,
            learning_rate_warmup_steps=100, eval_steps=500, early_stopping=False,
            dropout_probability=0.0, max_sequence_length=16, stride=8,
        )
        result = run_finetune(cfg, tmp_path, train_records=make(400, 1), eval_records=make(100, 2))
        assert result["train"]["exact_match"] == 1.0, result["train"]
        assert result["eval"]["exact_match"] == 1.0, result["eval"]
        announce(7, "toy finetuning / QA", "(EM 1.0 on boundary-aligned spans)")


# ---------------------------------------------------------------------------
# 8. attack suite


class TestCriterion8Attacks:
    def test_attack_suite(self):
        sentence = "Penguins are designed to be streamlined"
        assert apply_attack(sentence, AttackConfig(kind="disemvowel", level=1.0)) == "Pngns r dsgnd to be strmlnd"
        assert (
            apply_attack(sentence, AttackConfig(kind="segmentation", level=1.0))
            == "Penguinsaredesignedtobestreamlined"
        )
        assert (
            apply_attack(sentence, AttackConfig(kind="truncate", level=1.0))
            == "Penguin are designe to be streamline"
        )
        for kind in ATTACK_KINDS:
            assert apply_attack(sentence, AttackConfig(kind=kind, level=0.0)) == sentence

        rng = np.random.default_rng(0)
        letters = "abcdefghijklmnopqrstuvwxyz"
        for i in range(10_000):
            n = int(rng.integers(4, 12))
            word = "".join(letters[rng.integers(0, 26)] for _ in range(n))
            inner = apply_attack(word, AttackConfig(kind="shuffle_inner", level=1.0, seed=i))
            assert inner[0] == word[0] and inner[-1] == word[-1]
            assert sorted(inner) == sorted(word)
            full = apply_attack(word, AttackConfig(kind="shuffle_full", level=1.0, seed=i))
            assert sorted(full) == sorted(word)
        announce(8, "attack suite", "(golden strings, level-0 identity, 10000-word shuffle invariants)")


# ---------------------------------------------------------------------------
# 9. robustness smoke test


class TestCriterion9Robustness:
    def test_confusable_directional_check(self, tagging_artifacts):
        # premise: the shipped confusable map points at glyphs that render
        # identically in the shipped atlas
        table = load_confusable_map()
        for source, targets in table.items():
            src_bitmap = ATLAS.glyphs[source].bitmap
            for t in targets:
                assert np.array_equal(ATLAS.glyphs[t].bitmap, src_bitmap)

        cfg = tagging_artifacts["cfg"]
        backbone, head, extra = split_finetuned_checkpoint(tagging_artifacts["checkpoint"])
        from pixelcoder.runner import build_task_data, evaluate_task

        eval_records = tagging_artifacts["eval"]
        attacker = Attacker(AttackConfig(kind="confusable", level=1.0, seed=5))
        attacked_records = attack_records(eval_records, "pos_tagging", attacker, 5, 1, 0)
        assert any(a.words != b.words for a, b in zip(attacked_records, eval_records))

        clean_data = build_task_data(cfg, eval_records, ATLAS, label_names=list(extra["labels"]))
        atk_data = build_task_data(cfg, attacked_records, ATLAS, label_names=list(extra["labels"]))
        clean_acc = evaluate_task(cfg, clean_data, backbone, head, ATLAS)["accuracy"]
        atk_acc = evaluate_task(cfg, atk_data, backbone, head, ATLAS)["accuracy"]
        pixel_drop = clean_acc - atk_acc

        # glyph-identity baseline: majority tag per word string
        counts = {}
        overall = {}
        for rec in tagging_artifacts["train"]:
            for w, t in zip(rec.words, rec.tags):
                counts.setdefault(w, {}).setdefault(t, 0)
                counts[w][t] += 1
                overall[t] = overall.get(t, 0) + 1
        fallback = max(overall, key=overall.get)
        lookup = {w: max(c, key=c.get) for w, c in counts.items()}

        def baseline_accuracy(records):
            hit = total = 0
            for rec in records:
                for w, t in zip(rec.words, rec.tags):
                    hit += lookup.get(w, fallback) == t
                    total += 1
            return hit / total

        base_clean = baseline_accuracy(eval_records)
        base_attacked = baseline_accuracy(attacked_records)
        baseline_drop = base_clean - base_attacked

        assert baseline_drop > pixel_drop, (baseline_drop, pixel_drop)
        announce(
            9,
            "robustness smoke",
            f"(pixel drop {pixel_drop:+.3f} vs glyph-identity baseline drop {baseline_drop:+.3f})",
        )


# ---------------------------------------------------------------------------
# 10. persistence


class TestCriterion10Persistence:
    def test_persistence(self, tmp_path):
        tiny = M.PixelConfig(
            channels=1, max_patches=16, enc_width=32, enc_intermediate=64,
            enc_heads=2, enc_layers=2, dec_width=16, dec_intermediate=32,
            dec_heads=2, dec_layers=1,
        )
        params = M.ModelParameters.init(tiny, np.random.default_rng(0))
        state = OptimizerState.for_params(params.named)
        seq = render_text("abc def", RendererConfig(channels=1, max_patches=16), ATLAS)
        mask = M.mask_for_sequence(seq, tiny, np.random.default_rng(0))
        before = M.forward_loss(seq, mask, params).value
        path = tmp_path / "c.pxck"
        save_checkpoint(params, state, path, step=5)
        loaded, lstate, step, _ = load_checkpoint(path)
        assert step == 5
        for name in params.named:
            assert np.array_equal(loaded.named[name].data, params.named[name].data)
        assert M.forward_loss(seq, mask, loaded).value == before

        blob = bytearray(path.read_bytes())
        rng = np.random.default_rng(1)
        from pixelcoder.checkpoint import CheckpointError

        for pos in sorted(set(rng.integers(0, len(blob), size=40).tolist()) | {0, len(blob) - 1}):
            corrupted = bytearray(blob)
            corrupted[pos] ^= 0x20
            bad = tmp_path / "bad.pxck"
            bad.write_bytes(bytes(corrupted))
            with pytest.raises(CheckpointError):
                load_checkpoint(bad)

        # fixed-seed full-run reproducibility of loss logs and checkpoints
        corpus = tmp_path / "corpus.txt"
        corpus.write_text("\n".join(PRETRAIN_TEMPLATES))
        cfg = RunConfig(
            task="pretrain", profile="toy", seed=7, train_data=str(corpus),
            training_steps=8, batch_size=2,
            encoder_hidden_size=32, encoder_intermediate_size=64,
            encoder_num_attention_heads=2, encoder_num_layers=2,
            decoder_hidden_size=16, decoder_intermediate_size=32,
            decoder_num_attention_heads=2, decoder_num_layers=1,
            max_patches=32, image_channels=1, learning_rate_warmup_steps=2,
        )
        run_pretrain(cfg, tmp_path / "r1")
        run_pretrain(cfg, tmp_path / "r2")
        assert (tmp_path / "r1" / "loss_log.csv").read_text() == (tmp_path / "r2" / "loss_log.csv").read_text()
        assert (tmp_path / "r1" / "checkpoint.pxck").read_bytes() == (tmp_path / "r2" / "checkpoint.pxck").read_bytes()
        announce(10, "persistence", "(bitwise round trip, 40+ corruption probes, reproducible runs)")
