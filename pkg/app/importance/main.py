import logging
import numpy as np
from joblib import Parallel, delayed
from numpy.random import PCG64, Generator
from app.core.helpers import CoreHelpers
from app.ensemble.main import Ensemble
from app.ensemble.schemas import EnsembleModel
from app.exceptions import ContractViolation
from app.features.schemas import FeatureTable
from app.importance.losses import MapeLoss
from app.importance.schemas import ImportanceReport, VariableImportance
from app.learners.main import Learners


class Importance:
    @classmethod
    def baseline(
        cls, ensemble: EnsembleModel, val_table: FeatureTable, loss=None
    ) -> float:
        loss = loss or MapeLoss()
        return loss(Ensemble.ensemble_predict(ensemble, val_table), val_table.y)

    @classmethod
    def permutation_importance(
        cls,
        ensemble: EnsembleModel,
        train_table: FeatureTable,
        val_table: FeatureTable,
        variable: str,
        iterations: int = 100,
        seed: int = 0,
        loss=None,
    ) -> VariableImportance:
        """
        Each iteration shuffles the variable once across the training and
        validation rows together, refits the members that use it on the
        shuffled training rows and scores the ensemble on the shuffled
        validation rows. Members without the variable are reused as fitted.
        """
        loss = loss or MapeLoss()
        for table in (train_table, val_table):
            if variable not in table.variables:
                raise ContractViolation(
                    f"unknown variable {variable}", module="importance", field=variable
                )
        if iterations < 1:
            raise ContractViolation(
                "iterations must be at least 1", module="importance", field="iterations"
            )

        baseline = cls.baseline(ensemble, val_table, loss)
        users = [m for m in ensemble.members if variable in m.model.spec.variables]
        if not users:
            return VariableImportance(
                variable=variable,
                mean_delta=0.0,
                std=0.0,
                iterations=iterations,
                members_refit=0,
                running_mean=[baseline] * iterations,
            )

        n_train = len(train_table)
        pooled = np.concatenate(
            [train_table.frame[variable].to_numpy(), val_table.frame[variable].to_numpy()]
        )
        scores = np.empty(iterations)
        for i in range(iterations):
            rng = Generator(PCG64(CoreHelpers.derive_seed(seed, "importance", variable, i)))
            shuffled = rng.permutation(pooled)
            train = train_table.with_values(variable, shuffled[:n_train])
            val = val_table.with_values(variable, shuffled[n_train:])

            predictions = []
            for member in ensemble.members:
                model = member.model
                if variable in model.spec.variables:
                    model = Learners.fit(model.spec, train, model.train_window_id)
                predictions.append(Learners.predict(model, val))
            scores[i] = loss(np.vstack(predictions).mean(axis=0), val.y)

        # An unchanged loss gives a mean_delta of exactly zero.
        deltas = scores - baseline
        running = np.cumsum(scores) / np.arange(1, iterations + 1)
        return VariableImportance(
            variable=variable,
            mean_delta=float(np.mean(deltas)),
            std=float(np.std(scores)),
            iterations=iterations,
            members_refit=len(users),
            running_mean=running.tolist(),
        )

    @classmethod
    def importance_report(
        cls,
        ensemble: EnsembleModel,
        train_table: FeatureTable,
        val_table: FeatureTable,
        variables: list[str] = None,
        iterations: int = 100,
        seed: int = 0,
        loss=None,
        workers: int = 1,
    ) -> ImportanceReport:
        loss = loss or MapeLoss()
        variables = variables or train_table.variables
        logging.info(
            f"Permuting {len(variables)} variables {iterations} times for ensemble "
            f"{ensemble.ensemble_id}."
        )
        results = Parallel(n_jobs=workers)(
            delayed(cls.permutation_importance)(
                ensemble, train_table, val_table, variable, iterations, seed, loss
            )
            for variable in variables
        )
        ranked = sorted(results, key=lambda r: (-r.mean_delta, r.variable))
        return ImportanceReport(
            ensemble_id=ensemble.ensemble_id,
            loss=loss.name,
            baseline=cls.baseline(ensemble, val_table, loss),
            iterations=iterations,
            variables=ranked,
        )

    @classmethod
    def top_k(
        cls, report: ImportanceReport, k: int = 5
    ) -> tuple[list[VariableImportance], bool]:
        """
        The k most important variables and whether k had to be cut down to
        the number of variables in the report.
        """
        truncated = k > len(report.variables)
        if truncated:
            logging.warning(
                f"Asked for the top {k} of {len(report.variables)} variables, returning all."
            )
        return report.variables[:k], truncated
