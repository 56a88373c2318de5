import logging
import numpy as np
import statsmodels.api as sm
from sklearn.ensemble import RandomForestRegressor
from sklearn.tree import DecisionTreeRegressor
from app.enums import LearnerKindEnum
from app.exceptions import DomainError
from app.features.schemas import FeatureTable
from app.learners.helpers import LearnerHelpers
from app.learners.schemas import (
    ArimaxParameters,
    BoostParameters,
    FitDiagnostics,
    ForestParameters,
    LinearParameters,
    ModelSpec,
    TrainedModel,
)

# Extra observations an ARIMAX fit needs beyond its parameter count.
ARIMAX_SLACK = 10


class Learners:
    @classmethod
    def fit(
        cls, spec: ModelSpec, table: FeatureTable, train_window_id: str = ""
    ) -> TrainedModel:
        table.require(list(spec.variables))
        match spec.kind:
            case LearnerKindEnum.MLR:
                model = cls.fit_mlr(table, spec)
            case LearnerKindEnum.ARIMAX:
                model = cls.fit_arimax(table, spec)
            case LearnerKindEnum.RF:
                model = cls.fit_rf(table, spec)
            case LearnerKindEnum.GBT:
                model = cls.fit_gbt(table, spec)
        return model.model_copy(update={"train_window_id": train_window_id})

    @classmethod
    def fit_mlr(cls, table: FeatureTable, spec: ModelSpec) -> TrainedModel:
        design = LearnerHelpers.linear_design(table, spec.variables)
        LearnerHelpers.check_rank(design)
        result = sm.OLS(table.y, design.to_numpy(dtype=float)).fit(method="qr")

        return TrainedModel(
            spec=spec,
            parameters=LinearParameters(
                columns=list(design.columns), coefficients=result.params.tolist()
            ),
            fit_diagnostics=FitDiagnostics(
                loglik=float(result.llf),
                rss=float(result.ssr),
                aic=float(result.aic),
                n_obs=int(result.nobs),
            ),
        )

    @classmethod
    def regression_stage(cls, table: FeatureTable, spec: ModelSpec):
        variables = spec.variables if spec.hyperparams["exogenous"] else ()
        design = LearnerHelpers.linear_design(table, variables)
        LearnerHelpers.check_rank(design)
        result = sm.OLS(table.y, design.to_numpy(dtype=float)).fit(method="qr")
        return list(design.columns), result.params, table.y - result.fittedvalues

    @classmethod
    def fit_error_model(
        cls,
        residuals: np.ndarray,
        order: tuple[int, int, int],
        n_coefficients: int,
        scored_from: int = None,
    ) -> dict:
        """
        ARMA(p, q) by conditional sum of squares on the d-differenced
        regression residuals. Raises DomainError for inadmissible estimates.

        The likelihood is taken over the innovations of residuals
        scored_from onwards, by default every innovation the order yields.
        Orders compared by AIC must share scored_from.
        """
        p, d, q = order
        if len(residuals) <= p + q + d + n_coefficients + ARIMAX_SLACK:
            raise DomainError(
                f"{len(residuals)} rows are too few for ARIMA{order} with "
                f"{n_coefficients} regression coefficients",
                module="learners",
                field="arima_order",
            )
        w = np.diff(residuals, n=d) if d else residuals.copy()
        ar, ma, innovations = LearnerHelpers.fit_css(w, p, q)
        if not LearnerHelpers.is_admissible(ar, ma):
            raise DomainError(
                f"ARIMA{order} estimate is not stationary and invertible",
                module="learners",
                field="arima_order",
            )

        scored = innovations[max((scored_from or 0) - p - d, 0) :]
        n_eff = scored.size
        sigma2 = float(scored @ scored / n_eff)
        if not np.isfinite(sigma2) or sigma2 <= 0:
            raise DomainError(
                f"ARIMA{order} has a degenerate innovation variance",
                module="learners",
                field="arima_order",
            )
        loglik = -0.5 * n_eff * (np.log(2 * np.pi * sigma2) + 1.0)
        k = p + q + 1 + n_coefficients
        return {
            "ar": ar,
            "ma": ma,
            "w": w,
            "innovations": innovations,
            "sigma2": sigma2,
            "loglik": float(loglik),
            "aic": float(2 * k - 2 * loglik),
            "n_obs": int(n_eff),
        }

    @classmethod
    def grid(cls, spec: ModelSpec) -> list[tuple[int, int, int]]:
        params = spec.hyperparams
        return [
            (p, d, q)
            for d in range(int(params["max_d"]) + 1)
            for p in range(int(params["max_p"]) + 1)
            for q in range(int(params["max_q"]) + 1)
        ]

    @classmethod
    def select_order(
        cls, table: FeatureTable, spec: ModelSpec, grid: list = None
    ) -> tuple[int, int, int]:
        """
        Order with the lowest AIC, ties to the smaller p + q and then the
        smaller d. When no order is admissible, (0, d, 0) for the smallest d
        that fits.
        """
        grid = grid or cls.grid(spec)
        _, coefficients, residuals = cls.regression_stage(table, spec)
        scored_from = max(p + d for p, d, _ in grid)

        scored = []
        for order in grid:
            try:
                fit = cls.fit_error_model(
                    residuals, order, len(coefficients), scored_from
                )
            except DomainError as error:
                logging.debug(f"Discarding ARIMA{order}: {error}")
                continue
            p, d, q = order
            scored.append((fit["aic"], p + q, d, order))
        if scored:
            return min(scored)[3]

        for d in sorted({order[1] for order in grid}):
            try:
                cls.fit_error_model(residuals, (0, d, 0), len(coefficients))
                logging.warning(f"No admissible ARIMA order, falling back to (0, {d}, 0).")
                return (0, d, 0)
            except DomainError:
                continue
        raise DomainError(
            "no ARIMA order fits the residual series",
            module="learners",
            field="arima_order",
        )

    @classmethod
    def fit_arimax(cls, table: FeatureTable, spec: ModelSpec) -> TrainedModel:
        weeks = LearnerHelpers.contiguous_weeks(table)
        order = spec.arima_order or cls.select_order(table, spec)
        spec = spec.model_copy(update={"arima_order": order})

        columns, coefficients, residuals = cls.regression_stage(table, spec)
        fit = cls.fit_error_model(residuals, order, len(coefficients))
        p, _, q = order

        return TrainedModel(
            spec=spec,
            parameters=ArimaxParameters(
                columns=columns,
                coefficients=coefficients.tolist(),
                order=order,
                ar=fit["ar"].tolist(),
                ma=fit["ma"].tolist(),
                sigma2=fit["sigma2"],
                last_week=int(weeks[-1]),
                last_w=fit["w"][len(fit["w"]) - p :].tolist() if p else [],
                last_e=fit["innovations"][len(fit["innovations"]) - q :].tolist() if q else [],
                last_u=float(residuals[-1]),
            ),
            fit_diagnostics=FitDiagnostics(
                loglik=fit["loglik"],
                rss=float(fit["innovations"] @ fit["innovations"]),
                aic=fit["aic"],
                n_obs=fit["n_obs"],
            ),
        )

    @classmethod
    def fit_rf(cls, table: FeatureTable, spec: ModelSpec) -> TrainedModel:
        params = spec.hyperparams
        bootstrap = bool(params["bootstrap"])
        fraction = float(params["sample_fraction"])
        X = table.design(list(spec.variables)).to_numpy()

        forest = RandomForestRegressor(
            n_estimators=int(params["n_trees"]),
            max_features=int(params["mtry"]),
            min_samples_leaf=int(params["min_leaf"]),
            bootstrap=bootstrap,
            max_samples=fraction if bootstrap and fraction < 1 else None,
            random_state=spec.seed,
            n_jobs=1,
        ).fit(X, table.y)

        parameters = ForestParameters(
            trees=[LearnerHelpers.export_tree(tree) for tree in forest.estimators_]
        )
        fitted = cls.predict_forest(parameters, X)
        return TrainedModel(
            spec=spec,
            parameters=parameters,
            fit_diagnostics=FitDiagnostics(
                rss=float(np.sum((table.y - fitted) ** 2)), n_obs=len(table)
            ),
        )

    @classmethod
    def fit_gbt(cls, table: FeatureTable, spec: ModelSpec) -> TrainedModel:
        """
        Squared-error boosting from the training mean. Each stage fits a tree
        to the current residuals and replaces its leaf values with
        sum(residual) / (count + lambda).
        """
        params = spec.hyperparams
        rate, shrinkage = float(params["learning_rate"]), float(params["lambda"])
        # The tree builder works on C-ordered float32 rows, prepared once for every stage.
        X32 = np.ascontiguousarray(table.design(list(spec.variables)).to_numpy(), dtype=np.float32)
        y = np.asarray(table.y, dtype=float)

        base = float(y.mean())
        fitted = np.full(y.shape, base)
        trees = []
        for _ in range(int(params["n_trees"])):
            residuals = y - fitted
            tree = DecisionTreeRegressor(
                max_depth=int(params["max_depth"]),
                min_samples_leaf=int(params["min_leaf"]),
                random_state=spec.seed,
            ).fit(X32, np.ascontiguousarray(residuals), check_input=False)

            leaves = tree.apply(X32, check_input=False)
            size = tree.tree_.node_count
            sums = np.bincount(leaves, weights=residuals, minlength=size)
            counts = np.bincount(leaves, minlength=size)
            with np.errstate(divide="ignore", invalid="ignore"):
                values = np.where(counts > 0, sums / (counts + shrinkage), 0.0)

            fitted = fitted + rate * values[leaves]
            trees.append(LearnerHelpers.export_tree(tree, leaf_value=values))

        return TrainedModel(
            spec=spec,
            parameters=BoostParameters(base=base, learning_rate=rate, trees=trees),
            fit_diagnostics=FitDiagnostics(
                rss=float(np.sum((y - fitted) ** 2)), n_obs=len(table)
            ),
        )

    @classmethod
    def predict_forest(cls, parameters: ForestParameters, X: np.ndarray) -> np.ndarray:
        return np.mean([tree.predict(X) for tree in parameters.trees], axis=0)

    @classmethod
    def predict(cls, model: TrainedModel, table: FeatureTable) -> np.ndarray:
        spec = model.spec
        table.require(list(spec.variables))
        parameters = model.parameters

        match parameters.kind:
            case "linear":
                X = LearnerHelpers.aligned_design(table, spec.variables, parameters.columns)
                return X @ np.asarray(parameters.coefficients)
            case "arimax":
                variables = spec.variables if spec.hyperparams["exogenous"] else ()
                X = LearnerHelpers.aligned_design(table, variables, parameters.columns)
                regression = X @ np.asarray(parameters.coefficients)
                return regression + cls.error_forecast(parameters, table.weeks)
            case "forest":
                X = table.design(list(spec.variables)).to_numpy()
                return cls.predict_forest(parameters, X)
            case "boost":
                X = table.design(list(spec.variables)).to_numpy()
                total = np.sum([tree.predict(X) for tree in parameters.trees], axis=0)
                return parameters.base + parameters.learning_rate * total

    @classmethod
    def error_forecast(cls, parameters: ArimaxParameters, weeks: np.ndarray) -> np.ndarray:
        """
        ARMA error forecast for each row, h steps past the last training
        week. Rows at or before the training end get no error term.
        """
        horizons = np.asarray(weeks, dtype=int) - parameters.last_week
        forecast = np.zeros(horizons.shape)
        if horizons.max(initial=0) <= 0:
            return forecast

        w_path = LearnerHelpers.arma_forecast(
            parameters.ar,
            parameters.ma,
            parameters.last_w,
            parameters.last_e,
            int(horizons.max()),
        )
        if parameters.order[1] == 1:
            u_path = parameters.last_u + np.cumsum(w_path)
        else:
            u_path = w_path
        ahead = horizons > 0
        forecast[ahead] = u_path[horizons[ahead] - 1]
        return forecast
