import json
import math
import subprocess
import sys

import numpy as np
import pytest

from csiscope.centroid import (
    CentroidModel,
    classify_window,
    compute_window_features,
    evaluate_fscore,
    parse_bands,
    train_centroids,
    window_features_from_matrix,
)
from csiscope.errors import (
    DimensionMismatch,
    EmptyWindow,
    LengthMismatch,
    MissingClass,
)
from csiscope.pipeline import PipelineState, default_chain, run_chain

from .oracles import population_std, random_wire_frame


# --- window features ---

def test_constant_amplitudes_give_mean_one_std_zero():
    amps = np.ones((9, 64))
    feats = window_features_from_matrix(amps, [(0, 64)])
    assert feats.tolist() == [1.0, 0.0]


def test_alternating_amplitudes_population_std():
    rows = [np.zeros(64), np.full(64, 2.0)] * 3
    amps = np.stack(rows)
    feats = window_features_from_matrix(amps, [(0, 64)])
    band_means = [0.0, 2.0] * 3
    assert feats[0] == pytest.approx(sum(band_means) / 6)
    assert feats[1] == pytest.approx(population_std(band_means))
    assert feats.tolist() == [1.0, 1.0]


def test_two_bands_give_four_features():
    amps = np.random.default_rng(0).uniform(size=(9, 64))
    feats = window_features_from_matrix(amps, [(0, 8), (8, 16)])
    assert feats.shape == (4,)


def test_empty_window_rejected():
    with pytest.raises(EmptyWindow):
        compute_window_features([], [(0, 8)])


def test_compute_window_features_from_frames():
    frames = [run_chain(random_wire_frame(np.random.default_rng(k), n=64),
                        default_chain(), PipelineState()) for k in range(9)]
    feats = compute_window_features(frames, [(4, 12), (20, 28)])
    amps = np.stack([f.amplitudes for f in frames])
    expected = window_features_from_matrix(amps, [(4, 12), (20, 28)])
    assert np.array_equal(feats, expected)


def test_parse_bands():
    assert parse_bands("36:44,46:54") == ((36, 44), (46, 54))


# --- training ---

def test_one_window_per_class_centroids_equal_windows():
    w0 = np.array([1.0, 0.0])
    w1 = np.array([5.0, 2.0])
    model = train_centroids([(0, w0), (1, w1)], bands=[(0, 8)])
    assert np.array_equal(model.centroids[0], w0)
    assert np.array_equal(model.centroids[1], w1)
    assert model.n_classes == 2


def test_duplicate_windows_same_centroid():
    w = np.array([2.0, 1.0])
    model = train_centroids([(0, w), (0, w), (1, np.zeros(2))], bands=[(0, 8)])
    assert np.array_equal(model.centroids[0], w)


def test_missing_class_rejected():
    with pytest.raises(MissingClass):
        train_centroids([(0, np.zeros(2)), (2, np.ones(2))], bands=[(0, 8)])


def test_model_json_round_trip(tmp_path):
    model = train_centroids([(0, np.array([1.0, 2.0])),
                             (1, np.array([3.0, 4.0]))],
                            bands=[(4, 12)], window_len=9,
                            labels=["idle", "busy"])
    path = tmp_path / "m.json"
    model.save(str(path))
    back = CentroidModel.load(str(path))
    assert np.array_equal(back.centroids, model.centroids)
    assert back.bands == model.bands
    assert back.window_len == 9
    assert back.labels == ("idle", "busy")


# --- classification ---

def four_class_model():
    centroids = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]])
    return CentroidModel(centroids=centroids, bands=((0, 8),))


def test_exact_centroid_high_confidence():
    model = four_class_model()
    result = classify_window(model, np.array([10.0, 0.0]), 777)
    assert result.class_id == 1
    assert result.confidence > 0.99
    assert result.window_end_us == 777


def test_equidistant_confidence_quarter():
    model = four_class_model()
    result = classify_window(model, np.array([5.0, 5.0]))
    assert result.confidence == pytest.approx(0.25, abs=1e-12)


def test_tie_goes_to_lowest_class_id():
    model = CentroidModel(centroids=np.array([[1.0, 0.0], [-1.0, 0.0]]),
                          bands=((0, 4),))
    assert classify_window(model, np.array([0.0, 0.0])).class_id == 0


def test_confidence_in_unit_interval_and_weights_sum_to_one():
    rng = np.random.default_rng(1)
    model = four_class_model()
    for _ in range(200):
        feats = rng.normal(0, 20, size=2)
        result = classify_window(model, feats)
        assert 0.0 < result.confidence <= 1.0
        dists = np.sqrt(((model.centroids - feats) ** 2).sum(axis=1))
        weights = np.exp(-(dists - dists.min()))
        assert weights.max() == 1.0
        assert result.confidence == pytest.approx(1.0 / weights.sum())


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        classify_window(four_class_model(), np.zeros(3))


def test_far_distances_do_not_underflow():
    model = CentroidModel(centroids=np.array([[0.0, 0.0], [1e6, 1e6]]),
                          bands=((0, 4),))
    result = classify_window(model, np.array([1e6, 1e6]))
    assert result.class_id == 1
    assert 0.0 < result.confidence <= 1.0


# --- F-score ---

def test_perfect_predictions():
    report = evaluate_fscore([0, 1, 2, 3] * 5, [0, 1, 2, 3] * 5)
    assert report.macro_f == 1.0
    assert all(s.recall == 1.0 for s in report.per_class.values())


def test_all_predicted_class_zero():
    labels = [0, 1, 2, 3] * 5
    report = evaluate_fscore([0] * 20, labels)
    assert report.per_class[0].recall == 1.0
    for c in (1, 2, 3):
        assert report.per_class[c].recall == 0.0
        assert report.per_class[c].f1 == 0.0


def test_hand_computed_confusion_matrix():
    # confusion [[9, 1], [2, 8]]
    labels = [0] * 10 + [1] * 10
    preds = [0] * 9 + [1] + [0] * 2 + [1] * 8
    report = evaluate_fscore(preds, labels)
    p0, r0 = 9 / 11, 9 / 10
    f0 = 2 * p0 * r0 / (p0 + r0)
    assert report.per_class[0].f1 == pytest.approx(f0, abs=1e-12)
    assert f0 == pytest.approx(0.857, abs=5e-4)
    p1, r1 = 8 / 9, 8 / 10
    f1 = 2 * p1 * r1 / (p1 + r1)
    assert report.macro_f == pytest.approx((f0 + f1) / 2, abs=1e-12)


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        evaluate_fscore([0, 1], [0])


def test_permutation_invariance():
    rng = np.random.default_rng(2)
    labels = list(rng.integers(0, 4, size=40))
    preds = list(rng.integers(0, 4, size=40))
    report_a = evaluate_fscore(preds, labels)
    order = rng.permutation(40)
    report_b = evaluate_fscore([preds[i] for i in order],
                               [labels[i] for i in order])
    assert report_a.macro_f == report_b.macro_f
    assert report_a.per_class == report_b.per_class


# --- the executable ---

def test_executable_train_and_classify(tmp_path):
    from csiscope.model import PolarFrame, FrameMeta, SubcarrierOrder
    from csiscope.recording import open_recording

    # two easily separable classes recorded as csv-simple
    def write_recording(path, level):
        with open_recording(str(path), "csv-simple", 64) as rec:
            for k in range(18):
                amps = np.full(64, level + (k % 2) * 0.1 * level)
                meta = FrameMeta(k * 111_111, b"\x02" * 6, k, -50, 20,
                                 SubcarrierOrder.LINEAR, 64)
                rec.append(PolarFrame(meta=meta, amplitudes=amps,
                                      phases=np.zeros(64),
                                      rssi_smoothed_dbm=-50.0))

    low, high = tmp_path / "low.csv", tmp_path / "high.csv"
    write_recording(low, 1.0)
    write_recording(high, 100.0)
    model_path = tmp_path / "model.json"
    train = subprocess.run(
        [sys.executable, "-m", "csiscope.centroid", "--train",
         "--out", str(model_path), "--window", "9", "--bands", "0:64",
         f"low={low}", f"high={high}"],
        capture_output=True, text=True)
    assert train.returncode == 0, train.stderr
    doc = json.loads(model_path.read_text())
    assert len(doc["centroids"]) == 2

    # stream the 'high' class back through the executable
    model = CentroidModel.load(str(model_path))
    lines = []
    for k in range(9):
        amps = np.full(64, 100.0 + (k % 2) * 10.0)
        fields = ["F", str(k * 111_111), "02" * 6, repr(-50.0)]
        fields += [repr(float(a)) for a in amps]
        lines.append(",".join(fields))
    classify = subprocess.run(
        [sys.executable, "-m", "csiscope.centroid", "--model", str(model_path)],
        input="\n".join(lines) + "\n", capture_output=True, text=True)
    assert classify.returncode == 0, classify.stderr
    out_lines = [l for l in classify.stdout.splitlines() if l]
    assert len(out_lines) == 1
    parts = out_lines[0].split(",")
    assert parts[0] == "R"
    assert int(parts[1]) == 1
    assert math.isclose(float(parts[2]),
                        classify_window(model, window_features_from_matrix(
                            np.stack([np.full(64, 100.0 + (k % 2) * 10.0)
                                      for k in range(9)]),
                            model.bands)).confidence)
    assert int(parts[3]) == 8 * 111_111
