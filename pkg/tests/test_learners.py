import numpy as np
import pytest
from app.core.main import Core
from app.enums import LearnerKindEnum
from app.exceptions import ConfigurationError, ContractViolation, DomainError
from app.features.builder import FeatureBuilder
from app.features.schemas import FeatureConfig
from app.learners.main import Learners
from app.learners.schemas import (
    ArimaxParameters,
    FitDiagnostics,
    ForestParameters,
    LinearParameters,
    ModelSpec,
    TrainedModel,
    TreeNodes,
)

MLR, ARIMAX, RF, GBT = (
    LearnerKindEnum.MLR,
    LearnerKindEnum.ARIMAX,
    LearnerKindEnum.RF,
    LearnerKindEnum.GBT,
)


def ar1_series(phi: float, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u = np.zeros(n)
    shocks = rng.normal(size=n)
    for t in range(1, n):
        u[t] = phi * u[t - 1] + shocks[t]
    return u


class TestModelSpec:
    def test_defaults_completed(self):
        spec = ModelSpec(kind=GBT, variables=("x",))
        assert spec.hyperparams["learning_rate"] == 0.01
        assert spec.hyperparams["n_trees"] == 1000

    def test_mtry_default(self):
        assert ModelSpec(kind=RF, variables=("a", "b", "c", "d")).hyperparams["mtry"] == 2

    def test_hash_ignores_seed(self):
        first = ModelSpec(kind=RF, variables=("a",), seed=1)
        assert first.spec_hash == ModelSpec(kind=RF, variables=("a",), seed=2).spec_hash
        assert first.spec_hash != ModelSpec(kind=RF, variables=("b",), seed=1).spec_hash

    def test_unknown_hyperparameter(self):
        with pytest.raises(ConfigurationError):
            ModelSpec(kind=MLR, hyperparams={"alpha": 1.0})

    def test_boosting_needs_trees(self):
        with pytest.raises(ConfigurationError):
            ModelSpec(kind=GBT, variables=("x",), hyperparams={"n_trees": 0})

    def test_mtry_above_variables(self):
        with pytest.raises(ConfigurationError):
            ModelSpec(kind=RF, variables=("x",), hyperparams={"mtry": 2})

    def test_order_out_of_range(self):
        with pytest.raises(ConfigurationError):
            ModelSpec(kind=ARIMAX, arima_order=(4, 0, 0))


class TestMlr:
    def test_exact_line(self, make_table):
        x = np.arange(1.0, 51.0)
        model = Learners.fit(ModelSpec(kind=MLR, variables=("x",)), make_table({"x": x}, 2 * x + 3))
        np.testing.assert_allclose(model.parameters.coefficients, [3.0, 2.0], atol=1e-9)

    def test_noisy_fit(self, make_table):
        rng = np.random.default_rng(3)
        x1, x2 = rng.uniform(0, 10, 500), rng.uniform(0, 10, 500)
        table = make_table({"x1": x1, "x2": x2}, 100 + 5 * x1 + rng.normal(0, 0.1, 500))
        _, beta1, beta2 = Learners.fit(ModelSpec(kind=MLR, variables=("x1", "x2")), table).parameters.coefficients
        assert 4.9 <= beta1 <= 5.1
        assert -0.1 <= beta2 <= 0.1

    def test_duplicated_column(self, make_table):
        x = np.arange(1.0, 21.0)
        table = make_table({"x": x, "x_copy": x}, x)
        with pytest.raises(DomainError):
            Learners.fit(ModelSpec(kind=MLR, variables=("x", "x_copy")), table)

    def test_nested_models(self, linear_tables):
        train, _ = linear_tables
        small = Learners.fit(ModelSpec(kind=MLR, variables=("x1",)), train)
        large = Learners.fit(ModelSpec(kind=MLR, variables=("x1", "x3")), train)
        assert large.fit_diagnostics.rss <= small.fit_diagnostics.rss

    def test_predict_dot_product(self, make_table):
        model = TrainedModel(
            spec=ModelSpec(kind=MLR, variables=("x",)),
            parameters=LinearParameters(columns=["const", "x"], coefficients=[3.0, 2.0]),
            fit_diagnostics=FitDiagnostics(rss=0.0, n_obs=2),
        )
        assert Learners.predict(model, make_table({"x": [4.0]}, [1.0]))[0] == pytest.approx(11.0)

    def test_unseen_level_uses_reference(self, make_table):
        rng = np.random.default_rng(9)
        x = rng.uniform(1, 5, 40)
        q = np.tile([1, 2], 20)
        train = make_table({"x": x, "q": q}, 10 + x + q, categorical={"q": 4})
        model = Learners.fit(ModelSpec(kind=MLR, variables=("x", "q")), train)
        test = make_table({"x": [2.0, 2.0], "q": [1, 3]}, [1.0, 1.0], categorical={"q": 4})
        first, unseen = Learners.predict(model, test)
        assert unseen == pytest.approx(first)

    def test_window_id_recorded(self, linear_tables):
        model = Learners.fit(ModelSpec(kind=MLR, variables=("x1",)), linear_tables[0], "w0200_j01")
        assert model.train_window_id == "w0200_j01"


class TestArimax:
    def test_ar1_errors(self, make_table):
        rng = np.random.default_rng(4)
        x = rng.uniform(0, 10, 500)
        table = make_table({"x": x}, 1000 + 2 * x + ar1_series(0.7, 500, seed=4))
        spec = ModelSpec(kind=ARIMAX, variables=("x",), hyperparams={"max_p": 3, "max_d": 0, "max_q": 0})
        model = Learners.fit(spec, table)
        assert model.spec.arima_order[0] >= 1
        assert 0.6 <= model.parameters.ar[0] <= 0.8

    def test_white_noise_is_not_differenced(self, make_table):
        rng = np.random.default_rng(6)
        table = make_table({"x": rng.uniform(0, 1, 500)}, 100 + rng.normal(size=500))
        spec = ModelSpec(kind=ARIMAX, variables=("x",))
        assert Learners.select_order(table, spec, grid=[(0, 0, 0), (0, 1, 0)]) == (0, 0, 0)

    def test_differenced_trend(self, make_table):
        t = np.arange(200.0)
        rng = np.random.default_rng(1)
        table = make_table({"x": rng.uniform(0, 1, 200)}, 100 + 0.5 * t + rng.normal(0, 0.1, 200))
        spec = ModelSpec(kind=ARIMAX, variables=("x",), arima_order=(0, 1, 0), hyperparams={"exogenous": False})
        model = Learners.fit(spec, table)
        assert np.isfinite(model.parameters.sigma2)
        assert model.parameters.columns == ["const"]

    def test_error_forecast_recursion(self):
        parameters = ArimaxParameters(
            columns=["const"],
            coefficients=[0.0],
            order=(1, 0, 0),
            ar=[0.5],
            ma=[],
            sigma2=1.0,
            last_week=10,
            last_w=[2.0],
            last_e=[],
            last_u=2.0,
        )
        np.testing.assert_allclose(Learners.error_forecast(parameters, np.array([10, 11, 12])), [0.0, 1.0, 0.5])

    def test_selected_order_is_the_aic_minimum(self, make_table):
        grid = [(p, d, q) for d in (0, 1) for p in range(3) for q in range(3)]
        for seed in range(5):
            rng = np.random.default_rng(seed)
            x = rng.uniform(0, 10, 300)
            table = make_table({"x": x}, 500 + 3 * x + ar1_series(0.3 + 0.1 * seed, 300, seed))
            spec = ModelSpec(kind=ARIMAX, variables=("x",))
            _, coefficients, residuals = Learners.regression_stage(table, spec)
            scored_from = max(p + d for p, d, _ in grid)

            candidates = []
            for p, d, q in grid:
                try:
                    fit = Learners.fit_error_model(residuals, (p, d, q), len(coefficients), scored_from)
                except DomainError:
                    continue
                scored = fit["innovations"][scored_from - p - d :]
                sigma2 = np.mean(scored**2)
                loglik = -0.5 * scored.size * (np.log(2 * np.pi * sigma2) + 1)
                aic = 2 * (p + q + 1 + len(coefficients)) - 2 * loglik
                assert aic == pytest.approx(fit["aic"], rel=1e-10)
                candidates.append((aic, p + q, d, (p, d, q)))

            assert Learners.select_order(table, spec, grid) == min(candidates)[3]

    def test_too_few_rows(self, make_table):
        table = make_table({"x": np.arange(1.0, 11.0)}, np.arange(1.0, 11.0))
        with pytest.raises(DomainError):
            Learners.fit(ModelSpec(kind=ARIMAX, variables=("x",), arima_order=(3, 0, 3)), table)

    def test_gap_in_weeks(self, linear_tables):
        train, _ = linear_tables
        gapped = train.take(train.weeks != 40)
        with pytest.raises(ContractViolation):
            Learners.fit(ModelSpec(kind=ARIMAX, variables=("x1",), arima_order=(1, 0, 0)), gapped)


class TestForest:
    def test_single_leaf_predicts_mean(self, linear_tables):
        train, val = linear_tables
        spec = ModelSpec(
            kind=RF,
            variables=("x1",),
            hyperparams={"n_trees": 1, "mtry": 1, "min_leaf": len(train), "bootstrap": False},
        )
        model = Learners.fit(spec, train)
        np.testing.assert_allclose(Learners.predict(model, val), train.y.mean())

    def test_step_function(self, make_table):
        rng = np.random.default_rng(2)
        x = rng.uniform(-1, 1, 600)
        table = make_table({"x": x}, 1.0 + (x > 0))
        train, test = table.take(table.weeks <= 400), table.take(table.weeks > 400)
        model = Learners.fit(ModelSpec(kind=RF, variables=("x",), hyperparams={"n_trees": 100}, seed=1), train)
        assert np.mean((Learners.predict(model, test) - test.y) ** 2) < 0.05

    def test_same_seed_same_forest(self, linear_tables):
        spec = ModelSpec(kind=RF, variables=("x1", "x2"), hyperparams={"n_trees": 5}, seed=7)
        assert Learners.fit(spec, linear_tables[0]) == Learners.fit(spec, linear_tables[0])

    def test_stump(self, make_table):
        stump = TreeNodes(
            split_var=[0, -1, -1],
            threshold=[0.0, 0.0, 0.0],
            left=[1, -1, -1],
            right=[2, -1, -1],
            leaf_value=[0.0, 1.0, 5.0],
        )
        model = TrainedModel(
            spec=ModelSpec(kind=RF, variables=("x",), hyperparams={"n_trees": 1}),
            parameters=ForestParameters(trees=[stump]),
            fit_diagnostics=FitDiagnostics(rss=0.0, n_obs=2),
        )
        np.testing.assert_allclose(Learners.predict(model, make_table({"x": [-1.0, 2.0]}, [1.0, 1.0])), [1.0, 5.0])

    def test_row_order_does_not_matter(self, linear_tables):
        train, val = linear_tables
        shuffled = train.model_copy(update={"frame": train.frame.sample(frac=1.0, random_state=3)})
        spec = ModelSpec(
            kind=RF, variables=("x1", "x2", "x3"), hyperparams={"n_trees": 5, "mtry": 3, "bootstrap": False}, seed=2
        )
        np.testing.assert_allclose(
            Learners.predict(Learners.fit(spec, shuffled), val),
            Learners.predict(Learners.fit(spec, train), val),
            rtol=1e-9,
        )

    def test_stored_trees_reproduce_fit(self, linear_tables):
        train, _ = linear_tables
        model = Learners.fit(ModelSpec(kind=RF, variables=("x1", "x2"), hyperparams={"n_trees": 10}), train)
        rss = np.sum((Learners.predict(model, train) - train.y) ** 2)
        assert rss == pytest.approx(model.fit_diagnostics.rss)


class TestBoosting:
    def test_single_full_tree(self, make_table):
        x = np.arange(1.0, 31.0)
        table = make_table({"x": x}, 5 + np.sin(x))
        spec = ModelSpec(
            kind=GBT,
            variables=("x",),
            hyperparams={"n_trees": 1, "learning_rate": 1.0, "max_depth": 10, "min_leaf": 1, "lambda": 0.0},
        )
        assert Learners.fit(spec, table).fit_diagnostics.rss < 1e-10

    def test_sine_defaults(self, make_table):
        x = np.linspace(0, 2 * np.pi, 500)
        table = make_table({"x": x}, 2 + np.sin(x))
        model = Learners.fit(ModelSpec(kind=GBT, variables=("x",)), table)
        assert Core.mape(Learners.predict(model, table), table.y) < 2.0

    def test_lambda_shrinks_fit(self, linear_tables):
        train, _ = linear_tables
        rss = [
            Learners.fit(
                ModelSpec(kind=GBT, variables=("x1", "x2"), hyperparams={"n_trees": 50, "learning_rate": 0.1, "lambda": value}),
                train,
            ).fit_diagnostics.rss
            for value in (0.0, 10.0, 100.0)
        ]
        assert rss == sorted(rss)

    def test_stored_trees_reproduce_fit(self, linear_tables):
        train, _ = linear_tables
        spec = ModelSpec(kind=GBT, variables=("x1", "x2"), hyperparams={"n_trees": 30, "learning_rate": 0.1})
        model = Learners.fit(spec, train)
        rss = np.sum((Learners.predict(model, train) - train.y) ** 2)
        assert rss == pytest.approx(model.fit_diagnostics.rss)

    def test_row_order_does_not_matter(self, linear_tables):
        train, val = linear_tables
        shuffled = train.model_copy(update={"frame": train.frame.sample(frac=1.0, random_state=4)})
        spec = ModelSpec(kind=GBT, variables=("x1", "x2", "x3"), hyperparams={"n_trees": 40, "learning_rate": 0.1})
        np.testing.assert_allclose(
            Learners.predict(Learners.fit(spec, shuffled), val),
            Learners.predict(Learners.fit(spec, train), val),
            rtol=1e-9,
        )

    def test_model_file_roundtrip(self, linear_tables):
        train, val = linear_tables
        spec = ModelSpec(kind=GBT, variables=("x1",), hyperparams={"n_trees": 5})
        model = Learners.fit(spec, train)
        loaded = TrainedModel.model_validate_json(model.model_dump_json())
        np.testing.assert_array_equal(Learners.predict(loaded, val), Learners.predict(model, val))


@pytest.fixture(scope="module")
def sales_tables(small_bundle):
    config = FeatureConfig(leads=[1], lags=[1, 2], asp_lags=[], include_outlook=False, include_cny=False)
    table = FeatureBuilder.build(small_bundle, config)[("DT", 1)]
    return table.take(table.weeks <= 150), table.take(table.weeks > 150)


class TestAgainstTheMean:
    @pytest.mark.parametrize(
        "kind, hyperparams",
        [
            (MLR, {}),
            (ARIMAX, {"max_p": 1, "max_d": 1, "max_q": 1}),
            (RF, {"n_trees": 50}),
            (GBT, {"n_trees": 200, "learning_rate": 0.05}),
        ],
    )
    def test_beats_training_mean(self, sales_tables, kind, hyperparams):
        train, val = sales_tables
        spec = ModelSpec(kind=kind, variables=("DT_backlog_1", "DT_w_1", "quarter_seq"), hyperparams=hyperparams, seed=1)
        model = Learners.fit(spec, train)
        constant = np.full(len(val), train.y.mean())
        assert Core.mape(Learners.predict(model, val), val.y) < Core.mape(constant, val.y)
