import numpy as np
import pandas as pd
import scipy.linalg
from scipy.optimize import least_squares
from scipy.signal import lfilter
from sklearn.tree import DecisionTreeRegressor
from statsmodels.tsa.arima_process import ArmaProcess
from app.exceptions import ContractViolation, DomainError
from app.features.schemas import FeatureTable
from app.learners.schemas import TreeNodes

INTERCEPT = "const"


class LearnerHelpers:
    @classmethod
    def linear_design(cls, table: FeatureTable, variables) -> pd.DataFrame:
        """
        Intercept plus one-hot expanded variables. Indicator columns for levels
        absent from the table are left out, they carry no information.
        """
        design = table.design(list(variables), one_hot=True)
        indicators = [c for c in design.columns if c not in table.variables]
        empty = [c for c in indicators if not design[c].any()]
        design = design.drop(columns=empty)
        design.insert(0, INTERCEPT, 1.0)
        return design

    @classmethod
    def aligned_design(cls, table: FeatureTable, variables, columns) -> np.ndarray:
        design = table.design(list(variables), one_hot=True)
        design.insert(0, INTERCEPT, 1.0)
        # Levels unseen in training fall back to the reference level.
        return design.reindex(columns=columns, fill_value=0.0).to_numpy(dtype=float)

    @classmethod
    def check_rank(cls, design: pd.DataFrame) -> None:
        X = design.to_numpy(dtype=float)
        n_rows, n_cols = X.shape
        if n_rows <= n_cols:
            raise DomainError(
                f"{n_rows} rows cannot fit {n_cols - 1} columns plus an intercept",
                module="learners",
                field="rows",
            )
        _, R, pivot = scipy.linalg.qr(X, mode="economic", pivoting=True)
        diagonal = np.abs(np.diag(R))
        tolerance = max(X.shape) * np.finfo(float).eps * (diagonal[0] if diagonal.size else 0)
        rank = int(np.sum(diagonal > tolerance))
        if rank < n_cols:
            dependent = [design.columns[i] for i in sorted(pivot[rank:])]
            raise DomainError(
                f"design is rank deficient, dependent columns {dependent}",
                module="learners",
                field=dependent[0],
            )

    @classmethod
    def contiguous_weeks(cls, table: FeatureTable) -> np.ndarray:
        weeks = table.weeks
        if weeks.size and np.any(np.diff(weeks) != 1):
            raise ContractViolation(
                "ARIMAX needs consecutive origin weeks", module="learners", field="week"
            )
        return weeks

    @classmethod
    def css_residuals(cls, w: np.ndarray, ar, ma) -> np.ndarray:
        """
        Conditional innovations of an ARMA(p, q) with the first p values and
        all pre-sample innovations taken as given (zero).
        """
        p = len(ar)
        v = w[p:].copy()
        for i, phi in enumerate(ar, start=1):
            v -= phi * w[p - i : len(w) - i]
        if len(ma) == 0:
            return v
        return lfilter([1.0], np.r_[1.0, ma], v)

    @classmethod
    def fit_css(cls, w: np.ndarray, p: int, q: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if p + q == 0:
            return np.array([]), np.array([]), w.copy()

        def residuals(params):
            return cls.css_residuals(w, params[:p], params[p:])

        solution = least_squares(residuals, np.zeros(p + q), method="trf")
        ar, ma = solution.x[:p], solution.x[p:]
        return ar, ma, cls.css_residuals(w, ar, ma)

    @classmethod
    def is_admissible(cls, ar, ma) -> bool:
        if not (np.all(np.isfinite(ar)) and np.all(np.isfinite(ma))):
            return False
        process = ArmaProcess(ar=np.r_[1.0, -np.asarray(ar)], ma=np.r_[1.0, ma])
        return bool(process.isstationary and process.isinvertible)

    @classmethod
    def arma_forecast(cls, ar, ma, last_w, last_e, horizon: int) -> np.ndarray:
        """
        Forecasts of w for steps 1..horizon. Future innovations are zero.
        """
        p, q = len(ar), len(ma)
        history = list(last_w)
        innovations = list(last_e)
        forecasts = np.zeros(horizon)
        for step in range(horizon):
            value = sum(ar[i] * history[-1 - i] for i in range(p))
            value += sum(ma[j] * innovations[-1 - j] for j in range(q))
            forecasts[step] = value
            history.append(value)
            innovations.append(0.0)
        return forecasts

    @classmethod
    def export_tree(cls, tree: DecisionTreeRegressor, leaf_value=None) -> TreeNodes:
        structure = tree.tree_
        is_leaf = structure.children_left == -1
        values = structure.value[:, 0, 0] if leaf_value is None else leaf_value
        # Node arrays come straight from the fitted tree and skip validation.
        return TreeNodes.model_construct(
            split_var=np.where(is_leaf, -1, structure.feature).tolist(),
            threshold=np.where(is_leaf, 0.0, structure.threshold).tolist(),
            left=structure.children_left.tolist(),
            right=structure.children_right.tolist(),
            leaf_value=np.where(is_leaf, values, 0.0).astype(float).tolist(),
        )
