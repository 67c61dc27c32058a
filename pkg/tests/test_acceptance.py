"""Acceptance gate: one test per release criterion, each printing a PASS
line with its measured numbers.  Thresholds and tolerances are pinned here
and must not be loosened to make a failing build green.
"""

import math
import random
import time

import numpy as np
import pytest

from blmkit.data import AnswerLabel, LexType, Task, spec_tag
from blmkit.data import agreement_answer_patterns, agreement_context_pattern
from blmkit.embeddings import encode_dataset
from blmkit.generator import (
    SplitSpec,
    build_alternation_instance,
    draw_alternation_material,
    generate,
    split,
)
from blmkit.model import (
    FfnnBaseline,
    TwoLevelModel,
    baseline_loss,
    instance_loss,
    instance_loss_grads,
    instance_embeddings,
    sentence_loss,
    sentence_negatives,
    task_forward,
)
from blmkit.nn import (
    AdamState,
    adam_step,
    conv2d_backward,
    conv2d_forward,
    cosine,
    cosine_grad_a,
    dense_backward,
    dense_forward,
    kl_std_normal,
    kl_std_normal_grad,
    max_margin,
    max_margin_grad,
    reparam_backward,
    reparam_sample,
    tanh_backward,
    tanh_forward,
)
from blmkit.training import TrainConfig, train
from blmkit.evaluation import evaluate, summarize_choices

from oracles import finite_difference, max_rel_error


def _announce(capsys, name, detail):
    with capsys.disabled():
        print(f"[acceptance] {name}: PASS ({detail})")


@pytest.fixture(scope="module")
def oracle_world(lexicon):
    """Agreement type I pool, group-disjoint split, dim-128 oracle store."""
    pool = generate(Task.AGREEMENT, LexType.TYPE_I, lexicon, 800, seed=97)
    train_part, dev_part, test_part = split(pool, SplitSpec(), seed=97)
    store = encode_dataset(pool, dim=128, seed=97, encoder="oracle", noise=0.1)
    assert len(train_part) >= 500 and len(test_part) >= 50
    return train_part, test_part, store


def test_template_fidelity(capsys, lexicon):
    started = time.perf_counter()
    context_tags = [spec_tag(row) for row in agreement_context_pattern()]
    answer_rows = [(spec_tag(row), label) for row, label in agreement_answer_patterns()]
    instances = (generate(Task.AGREEMENT, LexType.TYPE_I, lexicon, 200, seed=1)
                 + generate(Task.AGREEMENT, LexType.TYPE_II, lexicon, 400, seed=2)
                 + generate(Task.AGREEMENT, LexType.TYPE_III, lexicon, 400, seed=3))
    assert len(instances) == 1000
    violations = 0
    for inst in instances:
        if [rec.pattern_tag for rec in inst.context] != context_tags:
            violations += 1
        elif [(rec.pattern_tag, label) for rec, label in inst.answers] != answer_rows:
            violations += 1
        elif inst.correct_index != 0:
            violations += 1
    elapsed = time.perf_counter() - started
    assert violations == 0
    assert elapsed < 5.0, f"template fidelity took {elapsed:.2f}s (limit 5s)"
    _announce(capsys, "template-fidelity",
              f"1000 instances, 0 violations, {elapsed:.2f}s")


def test_caus_od_contrast(capsys, lexicon):
    rng = random.Random("caus-od-pairs")
    violations = 0
    for i in range(500):
        lex_type = rng.choice(list(LexType))
        draws = draw_alternation_material(lexicon, Task.CAUS, lex_type, rng)
        caus = build_alternation_instance(Task.CAUS, lex_type, draws)
        od = build_alternation_instance(Task.OD, lex_type, draws)
        same_first_six = all(caus.context[k].text == od.context[k].text for k in range(6))
        row7_differs = caus.context[6].text != od.context[6].text
        same_answers = [r.text for r, _ in caus.answers] == [r.text for r, _ in od.answers]
        permuted = (caus.correct_index == 0 and od.correct_index == 1
                    and [l for _, l in caus.answers] == [
                        AnswerLabel.CORRECT, AnswerLabel.I_INT, AnswerLabel.ER_PASS,
                        AnswerLabel.IER_PASS, AnswerLabel.R_TRANS, AnswerLabel.IR_TRANS,
                        AnswerLabel.E_WRBY, AnswerLabel.IE_WRBY]
                    and [l for _, l in od.answers] == [
                        AnswerLabel.I_INT, AnswerLabel.CORRECT, AnswerLabel.IER_PASS,
                        AnswerLabel.ER_PASS, AnswerLabel.IR_TRANS, AnswerLabel.R_TRANS,
                        AnswerLabel.IE_WRBY, AnswerLabel.E_WRBY])
        if not (same_first_six and row7_differs and same_answers and permuted):
            violations += 1
    assert violations == 0
    _announce(capsys, "caus-od-contrast", "500 pairs, 0 violations")


def test_split_disjointness(capsys, lexicon):
    rng = random.Random(404)
    pool = (generate(Task.OD, LexType.TYPE_II, lexicon, 80, seed=41)
            + generate(Task.CAUS, LexType.TYPE_III, lexicon, 80, seed=42)
            + generate(Task.AGREEMENT, LexType.TYPE_II, lexicon, 80, seed=43))
    trials = 0
    while trials < 100:
        sampled = rng.sample(pool, rng.randint(12, len(pool)))
        if len({i.group_key for i in sampled}) < 3:
            continue
        parts = split(sampled, SplitSpec(), seed=trials)
        keys = [{i.group_key for i in part} for part in parts]
        assert keys[0] & keys[1] == set()
        assert keys[0] & keys[2] == set()
        assert keys[1] & keys[2] == set()
        assert sum(len(p) for p in parts) == len(sampled)
        trials += 1
    _announce(capsys, "split-disjointness", "100 randomized trials, all disjoint")


def test_loss_closed_forms(capsys):
    tol = 1e-12
    x = np.array([1.0, 0.0, 0.0, 0.0])
    orth = np.array([[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    assert abs(max_margin(x, x, orth) - 0.0) <= tol
    assert abs(max_margin(x, x, np.array([x])) - 1.0) <= tol
    assert abs(max_margin(x, orth[0], np.array([orth[1]])) - 1.0) <= tol

    assert abs(kl_std_normal(np.zeros(4), np.zeros(4)) - 0.0) <= tol
    assert abs(kl_std_normal(np.array([1.0]), np.array([0.0])) - 0.5) <= tol
    expected = -0.5 * (1.0 + math.log(2.0) - 0.0 - math.exp(math.log(2.0)))
    assert abs(kl_std_normal(np.array([0.0]), np.array([math.log(2.0)])) - expected) <= tol

    assert abs(baseline_loss(x, x, orth) - 0.0) <= tol
    assert abs(baseline_loss(x, x, np.array([x])) - 1.0) <= tol

    assert abs(cosine(x, x) - 1.0) <= tol
    assert abs(cosine(x, -x) + 1.0) <= tol
    assert abs(cosine(x, orth[0])) <= tol
    _announce(capsys, "loss-closed-forms", "all closed-form cases exact at 1e-12")


def test_gradient_oracle(capsys):
    started = time.perf_counter()
    tol, h = 1e-4, 1e-4
    rng = np.random.default_rng(1234)
    worst = 0.0

    def check(f, x, analytic):
        nonlocal worst
        err = max_rel_error(analytic, finite_difference(f, x, h))
        worst = max(worst, err)
        assert err < tol

    for _ in range(50):  # dense
        x = rng.standard_normal((2, 4))
        w = rng.standard_normal((4, 3))
        b = rng.standard_normal(3)
        r = rng.standard_normal((2, 3))
        dx, dw, db = dense_backward(r, x, w)
        check(lambda v: float(np.sum(dense_forward(v.reshape(2, 4), w, b) * r)), x.ravel(), dx.ravel())
        check(lambda v: float(np.sum(dense_forward(x, v.reshape(4, 3), b) * r)), w.ravel(), dw.ravel())
        check(lambda v: float(np.sum(dense_forward(x, w, v) * r)), b, db)

    for _ in range(50):  # conv2d, both paddings
        padding = int(rng.integers(0, 2))
        x = rng.standard_normal((2, 4, 5))
        k = rng.standard_normal((2, 2, 3, 3))
        b = rng.standard_normal(2)
        out = conv2d_forward(x, k, b, padding=padding)
        r = rng.standard_normal(out.shape)
        dx, dk, db = conv2d_backward(r, x, k, padding=padding)
        check(lambda v: float(np.sum(conv2d_forward(v.reshape(x.shape), k, b, padding) * r)),
              x.ravel(), dx.ravel())
        check(lambda v: float(np.sum(conv2d_forward(x, v.reshape(k.shape), b, padding) * r)),
              k.ravel(), dk.ravel())
        check(lambda v: float(np.sum(conv2d_forward(x, k, v, padding) * r)), b, db)

    for _ in range(50):  # tanh
        x = rng.standard_normal(10)
        r = rng.standard_normal(10)
        check(lambda v: float(np.sum(tanh_forward(v) * r)), x, tanh_backward(r, tanh_forward(x)))

    for _ in range(50):  # cosine
        a = rng.standard_normal(6)
        b = rng.standard_normal(6)
        check(lambda v: cosine(v, b), a, cosine_grad_a(a, b)[1])

    for _ in range(50):  # max-margin
        x = rng.standard_normal(8)
        pos = rng.standard_normal(8)
        negs = rng.standard_normal((7, 8))
        check(lambda v: max_margin(v, pos, negs), x, max_margin_grad(x, pos, negs)[1])

    for _ in range(50):  # KL
        mu = rng.standard_normal(5)
        logvar = rng.standard_normal(5)
        dmu, dlogvar = kl_std_normal_grad(mu, logvar)
        check(lambda v: kl_std_normal(v, logvar), mu, dmu)
        check(lambda v: kl_std_normal(mu, v), logvar, dlogvar)

    for _ in range(50):  # reparameterized sampling
        mu = rng.standard_normal(4)
        logvar = rng.standard_normal(4)
        eps = rng.standard_normal(4)
        r = rng.standard_normal(4)
        latent = reparam_sample(mu, logvar, epsilon=eps)
        dmu, dlogvar = reparam_backward(r, latent)
        check(lambda v: float(np.sum(reparam_sample(v, logvar, epsilon=eps).sample * r)), mu, dmu)
        check(lambda v: float(np.sum(reparam_sample(mu, v, epsilon=eps).sample * r)), logvar, dlogvar)

    # composite losses on a small two-level model
    dim = 10
    model = TwoLevelModel.create(dim, [Task.AGREEMENT], np.random.default_rng(9),
                                 sent_hidden=6, sent_latent=3, task_hidden=5, task_latent=4)
    shared = [n for n in model.params if n.startswith("sent.")]
    head = [n for n in model.params if n.startswith("head.")]
    for trial in range(50):  # sentence-level composite
        x = rng.standard_normal(dim)
        negs = rng.standard_normal((7, dim))
        eps = rng.standard_normal(model.sent_latent)
        _, grads = sentence_loss(model, x, negs, epsilon=eps)
        name = shared[trial % len(shared)]
        original = model.params[name].copy()

        def f_sent(flat, name=name, original=original):
            model.params[name] = flat.reshape(original.shape)
            try:
                return sentence_loss(model, x, negs, epsilon=eps)[0]
            finally:
                model.params[name] = original

        check(f_sent, original.ravel(), grads[name].ravel())

    for trial in range(50):  # full two-level composite (task loss included)
        ctx = rng.standard_normal((7, dim))
        cands = rng.standard_normal((8, dim))
        negs = rng.standard_normal((7, 7, dim))
        eps_s = rng.standard_normal((7, model.sent_latent))
        eps_t = rng.standard_normal(model.task_latent)
        result = instance_loss_grads(model, Task.AGREEMENT, ctx, cands, 0, negs, eps_s, eps_t)
        name = (shared + head)[trial % (len(shared) + len(head))]
        original = model.params[name].copy()

        def f_inst(flat, name=name, original=original):
            model.params[name] = flat.reshape(original.shape)
            try:
                return instance_loss_grads(model, Task.AGREEMENT, ctx, cands, 0,
                                           negs, eps_s, eps_t).total
            finally:
                model.params[name] = original

        check(f_inst, original.ravel(), result.grads[name].ravel())

    elapsed = time.perf_counter() - started
    assert elapsed < 60.0, f"gradient oracle took {elapsed:.1f}s (limit 60s)"
    _announce(capsys, "gradient-oracle",
              f"50 randomized instances per kernel, max rel err {worst:.2e} < 1e-4, {elapsed:.1f}s")


def test_determinism_and_resume(capsys, lexicon, tmp_path):
    datasets = {Task.AGREEMENT: generate(Task.AGREEMENT, LexType.TYPE_I, lexicon, 12, seed=51)}
    store = encode_dataset(datasets[Task.AGREEMENT], dim=32, seed=51,
                           encoder="oracle", noise=0.1)
    config = TrainConfig(regime="single", tasks=(Task.AGREEMENT,), batch_size=4,
                         epochs=4, seed=13)
    train(config, datasets, store, checkpoint_path=tmp_path / "a.blmc")
    train(config, datasets, store, checkpoint_path=tmp_path / "b.blmc")
    assert (tmp_path / "a.blmc").read_bytes() == (tmp_path / "b.blmc").read_bytes()

    train(config, datasets, store, checkpoint_path=tmp_path / "half.blmc", stop_after_epoch=2)
    train(config, datasets, store, checkpoint_path=tmp_path / "resumed.blmc",
          resume_from=tmp_path / "half.blmc")
    assert (tmp_path / "resumed.blmc").read_bytes() == (tmp_path / "a.blmc").read_bytes()
    _announce(capsys, "determinism",
              "byte-identical checkpoints; resume(2+2) == straight(4)")


def test_end_to_end_oracle_two_level(capsys, oracle_world):
    started = time.perf_counter()
    train_part, test_part, store = oracle_world
    accuracies = []
    for seed in (1, 2, 3):
        config = TrainConfig(regime="single", tasks=(Task.AGREEMENT,), epochs=20,
                             seed=seed, train_counts=((Task.AGREEMENT, 500),))
        model, _ = train(config, {Task.AGREEMENT: train_part}, store)
        accuracies.append(evaluate(model, test_part, store).f1)
    elapsed = time.perf_counter() - started
    assert all(acc >= 0.90 for acc in accuracies), accuracies
    assert elapsed < 600.0, f"end-to-end run took {elapsed:.0f}s (target < 10 min)"
    _announce(capsys, "end-to-end-oracle",
              f"3 seeds, accuracies {[round(a, 3) for a in accuracies]} >= 0.90, {elapsed:.0f}s")


def test_baseline_parity(capsys, oracle_world):
    train_part, test_part, store = oracle_world
    config = TrainConfig(regime="baseline", baseline="ffnn", tasks=(Task.AGREEMENT,),
                         epochs=10, seed=1, train_counts=((Task.AGREEMENT, 500),))
    model, _ = train(config, {Task.AGREEMENT: train_part}, store)
    accuracy = evaluate(model, test_part, store).f1
    assert accuracy >= 0.80, accuracy

    full = FfnnBaseline.create(768, np.random.default_rng(0))
    assert full.params["ffnn.l1.w"].shape == (5376, 2688)
    assert full.params["ffnn.l2.w"].shape == (2688, 2688)
    assert full.params["ffnn.l3.w"].shape == (2688, 768)
    _announce(capsys, "baseline-parity",
              f"ffnn accuracy {accuracy:.3f} >= 0.80; dims 5376/2688/2688/768")


def test_evaluation_bookkeeping(capsys, lexicon, oracle_world):
    instances = generate(Task.AGREEMENT, LexType.TYPE_II, lexicon, 10_000, seed=71)
    rng = np.random.default_rng(72)
    chosen = [int(c) for c in rng.integers(0, 8, size=len(instances))]
    fragment = summarize_choices(instances, chosen)
    assert abs(fragment.f1 - 0.125) <= 0.01, fragment.f1
    assert fragment.label_distribution.get("Correct", 0.0) == pytest.approx(fragment.f1)
    assert sum(fragment.label_distribution.values()) == pytest.approx(1.0, abs=1e-9)

    # the consistency must hold for model-driven reports too
    train_part, test_part, store = oracle_world
    model = TwoLevelModel.create(128, [Task.AGREEMENT], np.random.default_rng(73))
    report = evaluate(model, test_part[:40], store)
    assert report.label_distribution.get("Correct", 0.0) == pytest.approx(report.f1)
    _announce(capsys, "evaluation-bookkeeping",
              f"random predictor f1 {fragment.f1:.4f} in 0.125 +- 0.01; "
              "label_distribution[Correct] == f1")


def test_multi_task_routing(capsys, lexicon):
    datasets = {
        task: generate(task, LexType.TYPE_I, lexicon, 8, seed=81 + i)
        for i, task in enumerate(Task)
    }
    everything = [inst for part in datasets.values() for inst in part]
    store = encode_dataset(everything, dim=32, seed=82, encoder="oracle", noise=0.1)
    model = TwoLevelModel.create(32, list(Task), np.random.default_rng(83),
                                 sent_hidden=16, task_hidden=12)
    before = {name: tensor.tobytes() for name, tensor in model.params.items()}

    grads: dict[str, np.ndarray] = {}
    eps_rng = np.random.default_rng(84)
    for inst in datasets[Task.AGREEMENT]:
        result = instance_loss(model, inst, store, eps_rng)
        for name, g in result.grads.items():
            grads[name] = grads.get(name, 0) + g
    adam_step(model.params, grads, AdamState.for_params(model.params))

    untouched = [n for n in before if n.startswith(("head.caus.", "head.od."))]
    changed_shared = [n for n in before if n.startswith("sent.")]
    assert untouched and changed_shared
    for name in untouched:
        assert model.params[name].tobytes() == before[name], name
    assert all(model.params[n].tobytes() != before[n] for n in changed_shared)
    _announce(capsys, "multi-task-routing",
              "agreement batch left caus/od heads byte-identical, changed shared level")
