import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from gansemble.augmentation import CompositeStrategy
from gansemble.classifier import (
    REPORTED_PARAMETER_COUNTS,
    ClassifierSpec,
    EvalMetrics,
    build_backbone,
    compute_metrics,
    evaluate,
    make_evaluator,
    minmax_normalize,
    run_size_sweep,
    train_classifier,
    write_sweep_csv,
)


def test_metrics_hand_computed():
    # confusion (rows true, cols pred): [[2,1,0],[0,1,0],[0,1,0]]
    y_true = [0, 0, 0, 1, 2]
    y_pred = [0, 0, 1, 1, 1]
    acc, prec = compute_metrics(y_true, y_pred, 3)
    assert acc == pytest.approx(3 / 5)
    # class 0: 2/2, class 1: 1/3, class 2 never predicted: 0
    assert prec == pytest.approx((1 + 1 / 3 + 0) / 3)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=60))
def test_metrics_bounds_and_naive_mean(pairs):
    t, p = zip(*pairs)
    acc, prec = compute_metrics(t, p, 4)
    assert acc == pytest.approx(sum(a == b for a, b in pairs) / len(pairs))
    assert 0 <= prec <= 1
    EvalMetrics(acc, prec)


def test_eval_metrics_validation():
    with pytest.raises(ValueError):
        EvalMetrics(1.2, 0.5)


def test_parameter_counts():
    assert ClassifierSpec("tiny_test", 10).trainable_parameter_count == 6282
    # the text's ResNet50 figure is reproduced exactly; the small CNN differs (see notes)
    assert ClassifierSpec("resnet50_scratch", 10).trainable_parameter_count == REPORTED_PARAMETER_COUNTS["resnet50"]
    assert ClassifierSpec("resnet50_pretrained", 10).trainable_parameter_count == REPORTED_PARAMETER_COUNTS["resnet50"]
    n = ClassifierSpec("small_cnn", 10).trainable_parameter_count
    assert n == 13_729_322
    assert abs(n - REPORTED_PARAMETER_COUNTS["small_cnn"]) / REPORTED_PARAMETER_COUNTS["small_cnn"] < 0.01


def test_forward_shapes():
    x = torch.zeros(2, 3, 32, 32)
    for b in ("tiny_test", "small_cnn"):
        assert build_backbone(ClassifierSpec(b, 4)).eval()(x).shape == (2, 4)


def test_unknown_backbone():
    with pytest.raises(ValueError, match="backbone"):
        ClassifierSpec("vgg", 3)


def test_pretrained_missing_weights(tmp_path):
    spec = ClassifierSpec("resnet50_pretrained", 3, weights_path=str(tmp_path / "nope.pt"))
    with pytest.raises(FileNotFoundError):
        build_backbone(spec)


def test_tiny_training_learns(small_images):
    spec = ClassifierSpec("tiny_test", 3)
    model = train_classifier(small_images, spec, epochs=30, seed=0)
    assert model.loss_history[-1] < model.loss_history[0]
    m = evaluate(model, small_images)
    assert m.accuracy >= 0.9


def test_training_deterministic(small_images):
    spec = ClassifierSpec("tiny_test", 3)
    a = train_classifier(small_images, spec, epochs=3, seed=5)
    b = train_classifier(small_images, spec, epochs=3, seed=5)
    assert a.loss_history == b.loss_history
    assert np.array_equal(a.predict([i.image for i in small_images]), b.predict([i.image for i in small_images]))


def test_zero_epochs(small_images):
    model = train_classifier(small_images, ClassifierSpec("tiny_test", 3), epochs=0, seed=0)
    assert model.loss_history == []
    assert len(model.predict([small_images[0].image])) == 1


def test_bad_labels(small_images):
    with pytest.raises(ValueError):
        train_classifier(small_images, ClassifierSpec("tiny_test", 2), epochs=1, seed=0)


def test_evaluator_description():
    ev = make_evaluator(ClassifierSpec("tiny_test", 3), 2)
    assert "tiny_test" in ev.description


def test_minmax():
    assert list(minmax_normalize([2.0, 4.0, 3.0])) == [0.0, 1.0, 0.5]
    assert list(minmax_normalize([1.0, 1.0])) == [0.0, 0.0]


def test_size_sweep(tmp_path, small_images):
    train, test = small_images[:18], small_images[18:]
    specs = [ClassifierSpec("tiny_test", 3)]
    cells = run_size_sweep(train, test, [6, 12], specs, CompositeStrategy((1,), 1), 1, 0, 2, 3)
    assert [c.size for c in cells] == [6, 12]
    assert all(c.error is None for c in cells)
    assert sorted(c.norm_runtime for c in cells) == [0.0, 1.0]
    text = write_sweep_csv(cells, tmp_path / "s.csv").read_text().splitlines()
    assert text[0] == "size,backbone,mean_acc,mean_prec,norm_runtime,error"


def test_size_sweep_records_failure(small_images):
    def broken(*a, **k):
        raise RuntimeError("boom")

    cells = run_size_sweep(small_images, small_images, [3], [ClassifierSpec("tiny_test", 3)],
                           CompositeStrategy((1,), 1), 1, 0, 1, 3, trainer=broken)
    assert "boom" in cells[0].error


def test_size_sweep_rejects_uneven(small_images):
    with pytest.raises(ValueError):
        run_size_sweep(small_images, small_images, [4], [ClassifierSpec("tiny_test", 3)],
                       CompositeStrategy((1,), 1), 1, 0, 1, 3)
