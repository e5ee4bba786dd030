import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isindy.dictionary import Dictionary, DictionaryCapError, DimensionError, expand, full_dictionary, unity_set
from isindy.dynamics import LorenzParams, logistic_series, simulate_lorenz
from isindy.engine import (
    FitConfig,
    ModelFormatError,
    SparseModel,
    fit,
    fit_conventional,
    fit_iterative,
    modeling_error,
    predict_one_step,
    rollout,
    select_survivors,
)
from isindy.solver import LassoOptions, kkt_violation, lasso

LOGISTIC = FitConfig(S=2, beta=1e-4, survivor_tol=1e-4)


@pytest.fixture(scope="module")
def logistic():
    return logistic_series(3.9, 0.5, 500)


@pytest.fixture(scope="module")
def lorenz_short():
    return simulate_lorenz(LorenzParams(), 2000)


def best_subset_support(x, y, terms, tol):
    """Smallest set of terms whose least-squares fit has residual power <= tol."""
    psi = np.vstack([x**e for e in terms])
    for k in range(1, len(terms) + 1):
        for sub in itertools.combinations(range(len(terms)), k):
            A = psi[list(sub)]
            b, *_ = np.linalg.lstsq(A.T, y, rcond=None)
            if np.mean((y - A.T @ b) ** 2) <= tol:
                return {terms[i] for i in sub}
    return set(terms)


def identity_model(n):
    dicts = tuple(Dictionary(n, [tuple(int(i == j) for i in range(n))]) for j in range(n))
    return SparseModel(n, dicts, tuple(np.ones(1) for _ in range(n)))


def empty_model(n):
    return SparseModel(n, tuple(Dictionary(n) for _ in range(n)), tuple(np.zeros(0) for _ in range(n)))


# ------------------------------------------------------------- selection

def test_select_survivors_examples():
    d = full_dictionary(1, 3)
    kept, c = select_survivors(d, [0, 3.9, -3.9, 0], 1e-6)
    assert [m.exponents for m in kept] == [(1,), (2,)]
    np.testing.assert_array_equal(c, [3.9, -3.9])
    assert len(select_survivors(d, np.zeros(4), 1e-6)[0]) == 0
    kept, _ = select_survivors(d, [0.0, 1.0, 0.0, 2.0], 0.0)
    assert [m.exponents for m in kept] == [(1,), (3,)]
    with pytest.raises(ValueError):
        select_survivors(d, [1.0, 2.0], 0.0)


def test_fit_config_validation():
    for bad in (dict(S=0), dict(beta=-1), dict(survivor_tol=-1), dict(S=1.5)):
        with pytest.raises(ValueError):
            FitConfig(**bad)


# -------------------------------------------------------------- logistic

def test_logistic_best_subset_oracle(logistic):
    x = logistic.samples[:-1, 0]
    y = logistic.samples[1:, 0]
    assert best_subset_support(x, y, [0, 1, 2, 3], 1e-24) == {1, 2}


def test_logistic_iterative_recovers_map(logistic):
    model, report = fit_iterative(logistic, LOGISTIC)
    assert [m.exponents for m in model.dictionaries[0]] == [(1,), (2,)]
    np.testing.assert_allclose(model.coefficients[0], [3.9, -3.9], atol=1e-6)
    assert report.converged_by_stopping_rule == [True]
    assert report.iterations_used[0] <= LOGISTIC.S


def test_logistic_conventional_degree_two(logistic):
    model, _ = fit_conventional(logistic, FitConfig(S=1, beta=1e-4, survivor_tol=1e-4))
    assert [m.exponents for m in model.dictionaries[0]] == [(1,), (2,)]
    np.testing.assert_allclose(model.coefficients[0], [3.9, -3.9], atol=1e-6)


def test_logistic_conventional_lasso_is_exact_optimum(logistic):
    # the degree-3 Lasso solution itself, certified against its optimality conditions
    x = logistic.samples[:-1]
    y = logistic.samples[1:, 0]
    psi = np.vstack([x[:, 0] ** k for k in range(4)])
    sol = lasso(psi, y, LassoOptions(beta=1e-4))
    assert sol.converged
    assert kkt_violation(psi, y, 1e-4, sol.coefficients, sol.penalty_weights) < 1e-8


def test_logistic_one_step_prediction(logistic):
    model, _ = fit_iterative(logistic, LOGISTIC)
    assert predict_one_step(model, [0.5])[0] == pytest.approx(0.975, abs=1e-12)


def test_logistic_held_out_error(logistic):
    model, _ = fit_iterative(logistic, LOGISTIC)
    held = logistic_series(3.9, 0.123, 200)
    assert modeling_error(model, held) < 1e-12


# -------------------------------------------------------------- dictionary sizes

def test_conventional_reports_table_size():
    rng = np.random.default_rng(0)
    _, report = fit_conventional(rng.uniform(-1, 1, size=(60, 2)), FitConfig(S=4))
    assert report.dictionary_sizes == [[21], [21]]


def test_conventional_cap_error():
    with pytest.raises(DictionaryCapError):
        fit_conventional(np.ones((5, 8)), FitConfig(S=4, dictionary_cap=400))


def test_degenerate_data_rejected():
    with pytest.raises(ValueError):
        fit_iterative(np.ones((1, 2)))


# -------------------------------------------------------------- zero model

def test_beta_above_threshold_gives_empty_model(lorenz_short):
    x = lorenz_short.samples
    X, Y = x[:-1], x[1:]
    psi = np.vstack([np.prod(X**m.exponents, axis=1) for m in full_dictionary(3, 2)])
    beta = 1.01 * 2 * max(np.max(np.abs(psi @ Y[:, n])) for n in range(3))
    cfg = FitConfig(S=1, beta=beta, standardize=False)
    for engine in ("conventional", "iterative"):
        model, report = fit(lorenz_short, cfg, engine)
        assert model.total_order == 0
        mean_power = np.mean(np.sum(Y**2, axis=1))
        assert report.modeling_error == pytest.approx(mean_power, rel=1e-12)


def test_empty_model_predicts_zero():
    np.testing.assert_array_equal(predict_one_step(empty_model(3), [1.0, 2.0, 3.0]), 0.0)
    ro = rollout(empty_model(2), [1.0, 1.0], 5)
    np.testing.assert_array_equal(ro.series.samples[1:], 0.0)
    assert not ro.diverged


def test_identity_model_predicts_state():
    np.testing.assert_array_equal(predict_one_step(identity_model(3), [1.5, -2.0, 0.25]), [1.5, -2.0, 0.25])


def test_predict_dimension_mismatch():
    with pytest.raises(DimensionError):
        predict_one_step(identity_model(3), [1.0, 2.0])


# ---------------------------------------------------------------- rollout

def test_rollout_single_step_equals_predict(lorenz_short):
    model, _ = fit_iterative(lorenz_short)
    x0 = lorenz_short.samples[0]
    ro = rollout(model, x0, 1)
    np.testing.assert_array_equal(ro.series.samples[0], x0)
    np.testing.assert_array_equal(ro.series.samples[1], predict_one_step(model, x0))


def test_rollout_flags_divergence():
    d = Dictionary(1, [(1,)])
    model = SparseModel(1, (d,), (np.array([2.0]),))
    ro = rollout(model, [1.0], 100, bound=1e6)
    assert ro.diverged
    assert ro.steps_completed == 19
    assert np.abs(ro.series.samples).max() <= 1e6
    with pytest.raises(ValueError):
        rollout(model, [1.0], 0)


# ----------------------------------------------------------- modeling error

def test_modeling_error_definition(lorenz_short):
    model, _ = fit_iterative(lorenz_short)
    x = lorenz_short.samples
    r = x[1:] - model.predict(x[:-1])
    assert modeling_error(model, lorenz_short) == pytest.approx(np.sum(r**2) / (x.shape[0] - 1), rel=1e-12)


def test_exact_polynomial_system_interpolated():
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, size=(200, 2))
    Y = np.column_stack([0.5 * X[:, 0] - 0.3 * X[:, 0] * X[:, 1], 0.2 + 0.7 * X[:, 1] ** 2])
    model, report = fit_iterative(X, FitConfig(S=2, beta=1e-6), targets=Y)
    assert report.modeling_error < 1e-16 * np.mean(np.sum(Y**2, axis=1)) * 1e3
    expected = [{(1, 0), (1, 1)}, {(0, 0), (0, 2)}]
    assert [{m.exponents for m in d} for d in model.dictionaries] == expected


# -------------------------------------------------------------- stopping rule

def random_sparse_system(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(1, 5))
    terms = [m for m in full_dictionary(n, 3)]
    X = rng.uniform(-1, 1, size=(150, n))
    Y = np.empty((150, n))
    for j in range(n):
        pick = rng.choice(len(terms), size=int(rng.integers(1, 4)), replace=False)
        coef = rng.uniform(0.3, 1.0, size=pick.size) * rng.choice([-1, 1], size=pick.size)
        Y[:, j] = sum(c * np.prod(X ** terms[k].exponents, axis=1) for c, k in zip(coef, pick))
    return X, Y


@given(st.integers(0, 10_000), st.integers(1, 3))
@settings(max_examples=15, deadline=None)
def test_stopping_idempotence(seed, S):
    X, Y = random_sparse_system(seed)
    cfg = FitConfig(S=S, beta=1e-3)
    a, ra = fit_iterative(X, cfg, targets=Y)
    b, rb = fit_iterative(X, FitConfig(S=S + 3, beta=1e-3), targets=Y)
    forced, _ = fit_iterative(X, FitConfig(S=S + 3, beta=1e-3, stop_early=False), targets=Y)
    for n, fired in enumerate(ra.converged_by_stopping_rule):
        if fired:
            assert a.dictionaries[n] == b.dictionaries[n] == forced.dictionaries[n]
            assert np.array_equal(a.coefficients[n], b.coefficients[n])
            assert np.array_equal(a.coefficients[n], forced.coefficients[n])


def test_monotone_compression():
    X, Y = random_sparse_system(7, n=3)
    unity = unity_set(3)
    prev = unity
    for s in range(1, 5):
        cfg = FitConfig(S=s, beta=1e-3, debias=False, stop_early=False)
        model, report = fit_iterative(X, cfg, targets=Y[:, :1])
        cand = expand(prev, unity)
        assert report.dictionary_sizes[0][-1] == len(cand) or len(prev) == 0
        cur = model.dictionaries[0]
        assert cur.issubset(cand)
        assert len(cur) <= len(cand)
        prev = cur
        if len(cur) == 0:
            break


# -------------------------------------------------------- decomposition

def test_decomposition_equivalence(lorenz_short):
    X = lorenz_short.samples[:-1]
    Y = lorenz_short.samples[1:]
    cfg = FitConfig(S=2)
    joint, _ = fit_iterative(X, cfg, targets=Y)
    swapped, _ = fit_iterative(X, cfg, targets=Y[:, ::-1])
    for n in range(3):
        alone, _ = fit_iterative(X, cfg, targets=Y[:, n])
        assert alone.dictionaries[0] == joint.dictionaries[n] == swapped.dictionaries[2 - n]
        np.testing.assert_array_equal(alone.coefficients[0], joint.coefficients[n])


def test_shared_union_mode(lorenz_short):
    model, report = fit_iterative(lorenz_short, FitConfig(S=2, per_dimension=False))
    assert model.n_outputs == 3
    assert len(set(map(tuple, report.dictionary_sizes))) == 1
    assert report.modeling_error < 1e-3


def test_engines_agree_on_lorenz_supports(lorenz_short):
    cfg = FitConfig(S=1, beta=0.01, survivor_tol=1e-6)
    a, _ = fit_conventional(lorenz_short, cfg)
    b, _ = fit_iterative(lorenz_short, cfg)
    assert all(da == db for da, db in zip(a.dictionaries, b.dictionaries))


# ------------------------------------------------------------ beta = 0

@pytest.mark.parametrize("n", [1, 2, 3])
def test_beta_zero_no_compression(n):
    rng = np.random.default_rng(n)
    X = rng.uniform(0.5, 1.5, size=(400, n))
    Y = rng.normal(size=(400, 1))
    cap = 60
    _, report = fit_iterative(X, FitConfig(S=6, beta=0.0, survivor_tol=0.0, dictionary_cap=cap), targets=Y)
    sizes = report.dictionary_sizes[0]
    expect = []
    for s in range(1, 7):
        size = math.comb(n + s + 1, s + 1)
        if size > cap:
            break
        expect.append(size)
    assert sizes == expect
    assert report.truncated == [len(expect) < 6]


def test_iterative_cap_truncation_keeps_best_so_far(lorenz_short):
    model, report = fit_iterative(lorenz_short, FitConfig(S=4, beta=0.0, survivor_tol=0.0, dictionary_cap=12))
    assert report.truncated == [True] * 3
    assert all(len(d) == 10 for d in model.dictionaries)


# ---------------------------------------------------------- model files

def test_model_text_round_trip_bit_exact(lorenz_short):
    model, _ = fit_iterative(lorenz_short)
    text = model.to_text()
    back = SparseModel.from_text(text)
    assert back.same_as(model)
    assert back.to_text() == text
    assert back.config == model.config and back.fingerprint == model.fingerprint


@pytest.mark.parametrize("mutate, line", [
    (lambda ls: ["nonsense"] + ls[1:], 1),
    (lambda ls: ls[:4] + ["garbage"] + ls[5:], 5),
    (lambda ls: [("1.0x" if i == ls.index("coefficients 2") + 1 else v) for i, v in enumerate(ls)], None),
    (lambda ls: ls[:-1], None),
])
def test_malformed_model_reports_line(logistic, mutate, line):
    model, _ = fit_iterative(logistic, LOGISTIC)
    lines = model.to_text().splitlines()
    bad = "\n".join(mutate(lines)) + "\n"
    with pytest.raises(ModelFormatError, match=r"line \d+") as info:
        SparseModel.from_text(bad)
    if line is not None:
        assert f"line {line}:" in str(info.value)


def test_equation_rendering(logistic):
    model, _ = fit_iterative(logistic, LOGISTIC)
    assert model.equations() == ["x' = 3.9·x - 3.9·x^2"]
    assert empty_model(2).equations() == ["x1' = 0", "x2' = 0"]


def test_coefficients_exceed_tau_before_debias():
    X, Y = random_sparse_system(3, n=2)
    model, _ = fit_iterative(X, FitConfig(S=3, beta=1e-3, survivor_tol=1e-3, debias=False), targets=Y)
    for c in model.coefficients:
        assert np.all(np.abs(c) > 1e-3)
