import logging
import numpy as np
import pandas as pd
from sklearn.cluster import KMeans
from statsmodels.stats.outliers_influence import variance_inflation_factor
from statsmodels.tools.tools import add_constant
from app.collinearity.schemas import ClusteringResult, CollinearityReport, Embedding
from app.exceptions import ConfigurationError, ContractViolation, DomainError
from app.features.schemas import FeatureTable

EIGEN_TOLERANCE = 1e-10
# VIFs beyond this only arise from numerically exact collinearity.
VIF_CEILING = 1e10


class Collinearity:
    @classmethod
    def abs_corr_matrix(cls, table: FeatureTable, columns: list[str]) -> pd.DataFrame:
        if len(columns) < 2:
            raise ContractViolation(
                "correlation needs at least two columns",
                module="collinearity",
                field="columns",
            )
        table.require(columns)
        frame = table.frame[columns].astype(float)
        for column in columns:
            if np.ptp(frame[column].to_numpy()) == 0:
                raise DomainError(
                    f"column {column} has zero variance",
                    module="collinearity",
                    field=column,
                )
        corr = np.minimum(frame.corr(method="pearson").abs().to_numpy(), 1.0)
        np.fill_diagonal(corr, 1.0)
        return pd.DataFrame(corr, index=columns, columns=columns)

    @classmethod
    def classical_mds(cls, distance, dim: int = None) -> Embedding:
        distance = np.asarray(distance, dtype=float)
        if distance.ndim != 2 or distance.shape[0] != distance.shape[1]:
            raise ContractViolation(
                f"distance matrix must be square, got {distance.shape}",
                module="collinearity",
                field="distance",
            )
        if not np.allclose(distance, distance.T, rtol=0, atol=1e-12):
            raise ContractViolation(
                "distance matrix is not symmetric",
                module="collinearity",
                field="distance",
            )

        n = distance.shape[0]
        centering = np.eye(n) - np.full((n, n), 1.0 / n)
        inner = -0.5 * centering @ (distance**2) @ centering
        eigenvalues, eigenvectors = np.linalg.eigh((inner + inner.T) / 2)
        order = np.argsort(eigenvalues)[::-1]
        eigenvalues, eigenvectors = eigenvalues[order], eigenvectors[:, order]

        positive = int(np.sum(eigenvalues > EIGEN_TOLERANCE))
        dim = positive if dim is None else min(dim, positive)
        coordinates = eigenvectors[:, :dim] * np.sqrt(eigenvalues[:dim])

        mass = np.abs(eigenvalues).sum()
        negative_mass = float(-eigenvalues[eigenvalues < 0].sum() / mass) if mass > 0 else 0.0
        if negative_mass > 1e-6:
            logging.warning(
                f"MDS truncated {negative_mass:.2%} of the eigenvalue mass as negative."
            )
        return Embedding(
            coordinates=coordinates,
            eigenvalues=eigenvalues,
            negative_eigen_mass=negative_mass,
        )

    @classmethod
    def kmeans(cls, embedding, k: int, seed: int) -> tuple[np.ndarray, float]:
        """
        Best of 10 k-means++ restarts. Returns the cluster labels and the
        between-cluster share of the total variance.
        """
        points = np.asarray(embedding, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.shape[1] == 0:
            points = np.zeros((points.shape[0], 1))
        if not 1 <= k <= points.shape[0]:
            raise ConfigurationError(
                f"k={k} is outside 1..{points.shape[0]}", module="collinearity", field="k"
            )

        model = KMeans(
            n_clusters=k,
            init="k-means++",
            n_init=10,
            max_iter=300,
            tol=0.0,
            random_state=seed,
        ).fit(points)

        total = float(((points - points.mean(axis=0)) ** 2).sum())
        if total == 0:
            return model.labels_, 1.0
        ratio = 1.0 - float(model.inertia_) / total
        return model.labels_, min(max(ratio, 0.0), 1.0)

    @classmethod
    def choose_k(
        cls, embedding, variables: list[str], target_ratio: float = 0.8, seed: int = 0
    ) -> ClusteringResult:
        points = np.asarray(embedding, dtype=float)
        for k in range(1, len(variables) + 1):
            labels, ratio = cls.kmeans(points, k, seed)
            if ratio >= target_ratio - 1e-12 or k == len(variables):
                break
        logging.debug(f"Chose k={k} of {len(variables)} variables, ratio {ratio:.3f}.")
        return ClusteringResult(
            variables=variables,
            embedding=points,
            assignments={v: int(c) for v, c in zip(variables, labels)},
            k=k,
            variance_ratio=ratio,
        )

    @classmethod
    def select_representatives(
        cls, result: ClusteringResult, table: FeatureTable, response: str = None
    ) -> ClusteringResult:
        response = response or table.response
        y = table.frame[response].astype(float)
        representatives = {}
        for cluster in sorted(set(result.assignments.values())):
            scored = []
            for variable in result.members(cluster):
                r = table.frame[variable].astype(float).corr(y)
                scored.append((-(abs(r) if np.isfinite(r) else 0.0), variable))
            representatives[cluster] = min(scored)[1]
        return result.model_copy(update={"representatives": representatives})

    @classmethod
    def vif(cls, table: FeatureTable, columns: list[str]) -> dict[str, float]:
        if len(columns) < 2:
            raise ContractViolation(
                "VIF needs at least two columns", module="collinearity", field="columns"
            )
        table.require(columns)
        exog = add_constant(table.frame[columns].astype(float), has_constant="add")
        values = {}
        with np.errstate(divide="ignore", invalid="ignore"):
            for i, column in enumerate(columns, start=1):
                value = variance_inflation_factor(exog.to_numpy(), i)
                if not np.isfinite(value) or value < 0 or value > VIF_CEILING:
                    value = np.inf
                values[column] = float(max(value, 1.0))
        return values

    @classmethod
    def decollinearize(
        cls, table: FeatureTable, target_ratio: float = 0.8, seed: int = 0
    ) -> tuple[FeatureTable, CollinearityReport]:
        """
        Cluster the numeric columns on 1 - |r| and keep, per cluster, the
        column most correlated with the table's response. Constant columns
        are dropped first, categorical columns are always kept.
        """
        constant = [c for c in table.numeric if np.ptp(table.frame[c].to_numpy()) == 0]
        numeric = [c for c in table.numeric if c not in constant]
        categorical = list(table.categorical)
        if constant:
            logging.info(f"Dropping constant columns {constant}.")

        if len(numeric) < 2:
            kept = numeric
            clusters = {i: [c] for i, c in enumerate(numeric)}
            report = CollinearityReport(
                clusters=clusters,
                representatives={i: c for i, c in enumerate(numeric)},
                variance_ratio=1.0,
                k=len(numeric),
                vif_before={c: 1.0 for c in numeric},
                vif_after={c: 1.0 for c in numeric},
                negative_eigen_mass=0.0,
                dropped_constant=constant,
                kept_categorical=categorical,
            )
            return table.select(kept + categorical), report

        distance = 1.0 - cls.abs_corr_matrix(table, numeric).to_numpy()
        embedding = cls.classical_mds(distance)
        result = cls.choose_k(embedding.coordinates, numeric, target_ratio, seed)
        result = cls.select_representatives(result, table)
        kept = sorted(result.representatives.values(), key=numeric.index)

        vif_after = cls.vif(table, kept) if len(kept) >= 2 else {c: 1.0 for c in kept}
        report = CollinearityReport(
            clusters={c: result.members(c) for c in result.representatives},
            representatives=result.representatives,
            variance_ratio=result.variance_ratio,
            k=result.k,
            vif_before=cls.vif(table, numeric),
            vif_after=vif_after,
            negative_eigen_mass=embedding.negative_eigen_mass,
            dropped_constant=constant,
            kept_categorical=categorical,
        )
        logging.info(
            f"Kept {len(kept)} of {len(numeric)} numeric columns in {result.k} clusters, "
            f"max VIF {report.max_vif_before:.1f} -> {report.max_vif_after:.1f}."
        )
        return table.select(kept + categorical), report
