import copy
import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.ensemble import ExtraTreesRegressor
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import r2_score as sk_r2
from sklearn.metrics import roc_auc_score, roc_curve as sk_roc_curve
from sklearn.svm import SVC

from gbdml.cut_ml import (
    CSV_HEADER,
    CutDataset,
    FeatureVector,
    SingleClass,
    Standardizer,
    TrainedModel,
    check_model,
    classifier_labels,
    collect_classifier_data,
    collect_regressor_data,
    constant_model,
    fit_extra_tree,
    fit_linear_svm,
    fit_logistic,
    judge_cuts,
    predict_useful,
    r2_score,
    recognition_rates,
    regressor_labels,
    roc_auc,
    roc_curve,
    shadow_label,
    split_by_run,
    train_classifier,
    train_regressor,
    transform,
    undersample,
)
from gbdml.d2d import D2DProblem, generate_instance
from gbdml.gbd import RunConfig, run_multi_cut, run_single_cut
from gbdml.problem import ModelMismatch


@pytest.fixture(scope="module")
def small_problems():
    return [D2DProblem(generate_instance(4, 2, seed=100 + i)) for i in range(12)]


# ---------------------------------------------------------------------------
# labels


def test_classifier_label_examples():
    assert classifier_labels([4.0, 1.0]).tolist() == [1, 1]
    assert classifier_labels([1.0, 4.0]).tolist() == [0, 1]
    assert classifier_labels([2.0, 0.0, 0.0]).tolist() == [1, 0, 1]
    assert classifier_labels([3.0, 2.0], theta=2.0).tolist() == [0, 1]
    with pytest.raises(ValueError):
        classifier_labels([1.0], theta=0.0)


@settings(max_examples=100, deadline=None)
@given(ci=st.lists(st.floats(0, 10), min_size=1, max_size=12), t1=st.floats(0.1, 5), t2=st.floats(0.1, 5))
def test_classifier_labels_shrink_as_theta_grows(ci, t1, t2):
    lo, hi = sorted((t1, t2))
    a, b = classifier_labels(ci, lo), classifier_labels(ci, hi)
    assert np.all(b <= a)
    assert a[-1] == 1 and b[-1] == 1


def test_regressor_label_examples():
    np.testing.assert_allclose(regressor_labels([-10, -6, -6, -6, -6, -6, -6, -6, -6]), np.ones(8))
    np.testing.assert_allclose(regressor_labels([0, 1, 2, 3, 4]), [0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(regressor_labels([5, 5, 5]), [1.0, 1.0])


def test_collected_regressor_labels_are_monotone_per_iteration(small_problems):
    data, _ = collect_regressor_data(small_problems[:4], S=8)
    for run in np.unique(data.run_id):
        for it in np.unique(data.iteration[data.run_id == run]):
            m = (data.run_id == run) & (data.iteration == it)
            cr = data.y[m][np.argsort(data.s[m])]
            assert np.all(np.diff(cr) >= -1e-12)
            assert cr[-1] == pytest.approx(1.0)
            assert np.all((cr >= 0) & (cr <= 1))


def test_collected_classifier_data_matches_cuts(small_problems):
    data, runs = collect_classifier_data(small_problems[:3], S=8, theta=1.0, seed=5)
    assert len(data) == sum(len(r.cuts) for r in runs)
    assert set(np.unique(data.y)) <= {0.0, 1.0}
    again, _ = collect_classifier_data(small_problems[:3], S=8, theta=1.0, seed=5)
    np.testing.assert_array_equal(data.X, again.X)
    np.testing.assert_array_equal(data.y, again.y)


# ---------------------------------------------------------------------------
# shadow labels


def test_golden_shadow_labels_frozen(golden_problem, golden):
    res = run_multi_cut(golden_problem, RunConfig(mode="multi", pool_size=8))
    assert res.trace.iterations == golden["multi_cut_S8"]["iterations"]
    assert shadow_label(golden_problem, res).astype(int).tolist() == golden["multi_cut_S8"]["shadow_labels"]


def test_single_cut_run_has_all_useful_shadow_labels(golden_problem):
    res = run_single_cut(golden_problem, RunConfig())
    assert shadow_label(golden_problem, res).all()


def test_duplicate_cut_is_useless(golden_problem):
    res = run_single_cut(golden_problem, RunConfig())
    dup = copy.deepcopy(res)
    first = dup.cuts[0]
    twin = copy.deepcopy(first)
    twin.gen_order = 2
    dup.cuts.insert(1, twin)
    labels = shadow_label(golden_problem, dup)
    assert labels[0] and not labels[1]


# ---------------------------------------------------------------------------
# sampling and splitting


def toy_dataset(n_pos, n_neg, seed=0):
    rng = np.random.default_rng(seed)
    n = n_pos + n_neg
    X = np.c_[np.ones(n), rng.normal(size=n), rng.integers(0, 3, n), rng.integers(1, 9, n), rng.integers(1, 9, n)]
    y = np.r_[np.ones(n_pos), np.zeros(n_neg)]
    return CutDataset(X, y, np.arange(n) % 10, np.arange(n), X[:, 4])


def test_undersample_counts():
    out = undersample(toy_dataset(100, 900), ratio=1.0, seed=1)
    assert len(out) == 200 and out.y.sum() == 100
    same = undersample(toy_dataset(50, 50), ratio=1.0)
    assert len(same) == 100
    with pytest.raises(SingleClass):
        undersample(toy_dataset(10, 0))


def test_split_by_run_keeps_runs_apart():
    train, test = split_by_run(toy_dataset(40, 60), 0.3, seed=2)
    assert not set(train.run_id) & set(test.run_id)
    assert len(train) + len(test) == 100


# ---------------------------------------------------------------------------
# preprocessing


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 40))
def test_standardize_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    Z = np.c_[rng.integers(0, 2, n), rng.normal(0, 1e3, (n, 4))]
    s = Standardizer.fit(Z)
    np.testing.assert_allclose(s.invert(s.apply(Z)), Z, rtol=1e-12, atol=1e-9)
    assert s.mean[0] == 0 and s.std[0] == 1


def test_violation_transform_is_signed_log():
    X = np.array([[1, -1e6, 0, 1, 1], [0, 1e-3, 0, 1, 1], [1, 0.0, 0, 1, 1]], dtype=float)
    Z = transform(X)
    np.testing.assert_allclose(Z[:, 1], [-np.log1p(1e6), np.log1p(1e-3), 0.0])
    np.testing.assert_array_equal(Z[:, [0, 2, 3, 4]], X[:, [0, 2, 3, 4]])


def test_model_decision_invariant_to_feature_shift():
    """Rescaling raw columns (other than violation) leaves linear decisions unchanged."""
    data = toy_dataset(60, 60, seed=3)
    data.y = (data.X[:, 1] + 0.3 * data.X[:, 3] > 1.0).astype(float)
    a = train_classifier(data, "logreg")
    shifted = copy.deepcopy(data)
    shifted.X[:, 3] = shifted.X[:, 3] * 10 + 5
    b = train_classifier(shifted, "logreg")
    Xs = data.X.copy()
    Xs[:, 3] = Xs[:, 3] * 10 + 5
    np.testing.assert_array_equal(a.predict(data.X), b.predict(Xs))


# ---------------------------------------------------------------------------
# learners versus reference implementations


def blobs(seed, n=300, d=4):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n).astype(float)
    U = rng.normal(size=(n, d)) + (2 * y[:, None] - 1) * rng.uniform(0.2, 1.0, d)
    w = np.where(y == 1, 2.0, 1.0)
    return U, y, w


@pytest.mark.parametrize("seed", range(3))
def test_logistic_matches_sklearn(seed):
    U, y, w = blobs(seed)
    l2 = 1e-2
    coef, bias, ok = fit_logistic(U, y, w, l2=l2, tol=1e-9, epochs=100_000)
    assert ok
    ref = LogisticRegression(C=1 / l2, tol=1e-12, max_iter=10_000).fit(U, y, sample_weight=w / w.sum())
    np.testing.assert_allclose(coef, ref.coef_[0], rtol=1e-4, atol=1e-6)
    assert bias == pytest.approx(ref.intercept_[0], rel=1e-4, abs=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_linear_svm_objective_close_to_sklearn(seed):
    U, y, w = blobs(seed)
    l2 = 1e-2
    wn = w / w.sum()
    coef, bias, _ = fit_linear_svm(U, y, w, l2=l2, epochs=20_000)
    ref = SVC(kernel="linear", C=1 / l2, tol=1e-8).fit(U, y, sample_weight=wn)

    def objective(c, b):
        hinge = np.maximum(0, 1 - (2 * y - 1) * (U @ c + b))
        return wn @ hinge + 0.5 * l2 * c @ c

    mine, best = objective(coef, bias), objective(ref.coef_[0], ref.intercept_[0])
    assert mine <= best * (1 + 1e-2) + 1e-6
    agree = np.mean(((U @ coef + bias) > 0) == (ref.decision_function(U) > 0))
    assert agree >= 0.98


def test_single_deep_tree_interpolates_training_data():
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(200, 3))
    y = np.sin(Z[:, 0]) + Z[:, 1] ** 2
    tree = fit_extra_tree(Z, y, rng, min_leaf=1)
    assert r2_score(y, tree.predict(Z)) == 1.0


def test_extra_trees_comparable_to_sklearn():
    rng = np.random.default_rng(1)
    Z = rng.uniform(-2, 2, size=(600, 4))
    y = np.clip(0.5 + 0.3 * np.tanh(Z[:, 0]) + 0.2 * (Z[:, 1] > 0), 0, 1)
    tr, te = slice(0, 400), slice(400, None)
    data = CutDataset(np.c_[np.ones(600), Z], y, np.zeros(600), np.zeros(600), np.ones(600))
    model = train_regressor(data.subset(np.arange(400)), n_trees=50, seed=0)
    pred = model.predict(data.X[te])
    assert np.all((pred >= 0) & (pred <= 1))
    ref = ExtraTreesRegressor(n_estimators=50, min_samples_split=4, random_state=0).fit(Z[tr], y[tr])
    mine, theirs = r2_score(y[te], pred), sk_r2(y[te], ref.predict(Z[te]))
    assert mine >= theirs - 0.05


def test_linear_regressor_is_least_squares():
    rng = np.random.default_rng(2)
    X = np.c_[np.ones(50), rng.normal(size=(50, 4))]
    y = rng.uniform(size=50)
    model = train_regressor(CutDataset(X, y, np.zeros(50), np.zeros(50), np.ones(50)), kind="linear")
    A = np.c_[transform(X)[:, 1:], np.ones(50)]
    theta, *_ = np.linalg.lstsq(A, y, rcond=None)
    np.testing.assert_allclose(model.score(X), A @ theta, atol=1e-10)


def test_nonconvergence_warns():
    U, y, w = blobs(0, n=60)
    data = CutDataset(np.c_[np.ones(60), U], y, np.zeros(60), np.zeros(60), np.ones(60))
    with pytest.warns(UserWarning):
        model = train_classifier(data, "logreg", epochs=2)
    assert not model.converged


# ---------------------------------------------------------------------------
# metrics


def test_metrics_match_sklearn():
    rng = np.random.default_rng(4)
    labels = rng.integers(0, 2, 500)
    scores = np.round(labels * 0.5 + rng.normal(size=500), 1)  # rounding creates ties
    assert roc_auc(labels, scores) == pytest.approx(roc_auc_score(labels, scores), abs=1e-12)
    fpr, tpr, _ = roc_curve(labels, scores)
    f2, t2, _ = sk_roc_curve(labels, scores, drop_intermediate=False)
    np.testing.assert_allclose(fpr, f2)
    np.testing.assert_allclose(tpr, t2)
    truth, pred = rng.normal(size=100), rng.normal(size=100)
    assert r2_score(truth, pred) == pytest.approx(sk_r2(truth, pred))
    assert r2_score(np.ones(5), np.ones(5)) == 1.0


def test_random_scores_give_auc_near_half():
    rng = np.random.default_rng(5)
    assert roc_auc(rng.integers(0, 2, 20_000), rng.uniform(size=20_000)) == pytest.approx(0.5, abs=0.05)


def test_recognition_rates():
    truth = np.array([1, 1, 0, 0, 0], dtype=bool)
    verdict = np.array([1, 0, 0, 0, 1], dtype=bool)
    u, n = recognition_rates(truth, verdict)
    assert u == 0.5 and n == pytest.approx(2 / 3)


# ---------------------------------------------------------------------------
# models and filtering


def test_regressor_rule_examples():
    m = constant_model("regressor", 1.0)
    fv = FeatureVector(1, 0.1, 0, 3, 2)
    assert predict_useful(m, fv, prev_prediction=1.0) == (False, 1.0)
    assert predict_useful(m, fv, prev_prediction=0.9)[0]
    assert predict_useful(constant_model("regressor", 1.0 - 1e-10), fv, prev_prediction=1.0)[0] is False
    assert predict_useful(m, FeatureVector(1, 0.1, 0, 3, 1), prev_prediction=1.0)[0]
    assert predict_useful(constant_model("regressor", 1.3), fv, prev_prediction=1.0)[0] is False


def test_judge_cuts_regressor_keeps_first(golden_problem):
    res = run_multi_cut(golden_problem, RunConfig(mode="multi", pool_size=8))
    group = res.cuts_by_iteration()[1]
    verdicts = judge_cuts(constant_model("regressor", 1.0), group)
    assert verdicts[0] and not any(verdicts[1:])


def test_model_json_round_trip(tmp_path):
    data = toy_dataset(50, 50)
    data.y = (data.X[:, 1] > 0).astype(float)
    for model in (train_classifier(data, "logreg"), train_classifier(data, "svm"),
                  train_regressor(data, n_trees=5), constant_model("classifier", 1.0)):
        path = tmp_path / f"{model.kind}.json"
        model.save(path)
        again = TrainedModel.load(path)
        np.testing.assert_array_equal(again.score(data.X), model.score(data.X))
        assert json.loads(path.read_text())["schema_version"] == model.schema_version


def test_check_model_mismatches():
    with pytest.raises(ModelMismatch):
        check_model(constant_model("classifier", 1.0), "ml-reg")
    with pytest.raises(ModelMismatch):
        check_model(constant_model("classifier", 1.0), "multi")
    check_model(constant_model("regressor", 1.0), "ml-reg")


def test_dataset_csv_round_trip(tmp_path):
    data = toy_dataset(5, 7)
    path = tmp_path / "d.csv"
    data.write_csv(path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    again = CutDataset.read_csv(path)
    for f in ("X", "y", "run_id", "iteration", "s"):
        np.testing.assert_array_equal(getattr(again, f), getattr(data, f))
    text = path.read_text().replace("gbdml.features/1", "gbdml.features/0")
    path.write_text(text)
    with pytest.raises(ModelMismatch):
        CutDataset.read_csv(path)


def test_training_needs_both_classes():
    with pytest.raises(SingleClass):
        train_classifier(toy_dataset(10, 0), "logreg")


def test_theta_sweep_on_collected_data(small_problems):
    """Larger theta never labels more cuts useful on the same runs."""
    counts = []
    for theta in (0.5, 1.0, 2.0):
        data, _ = collect_classifier_data(small_problems[:4], S=8, theta=theta, seed=0)
        counts.append(int(data.y.sum()))
    assert counts[0] >= counts[1] >= counts[2]


def test_classifier_learns_something_on_collected_data(small_problems):
    data, _ = collect_classifier_data(small_problems, S=8, theta=1.0, seed=0)
    train, test = split_by_run(data, 0.3, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = train_classifier(undersample(train, 1.0, seed=0), "logreg")
    assert roc_auc(test.y, model.score(test.X)) > 0.6
