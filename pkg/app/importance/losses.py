import numpy as np
from app.core.main import Core
from app.exceptions import ContractViolation


class MapeLoss:
    name = "mape"

    def __call__(self, predicted, actual) -> float:
        return Core.mape(predicted, actual)


class MisclassificationLoss:
    """
    Share of rows, in percent, whose prediction rounded to the nearest class
    label misses the actual label. Labels default to the observed classes.
    """

    name = "misclassification"

    def __init__(self, labels=None):
        self.labels = None if labels is None else np.sort(np.asarray(labels, dtype=float))

    def __call__(self, predicted, actual) -> float:
        predicted = np.asarray(predicted, dtype=float).ravel()
        actual = np.asarray(actual, dtype=float).ravel()
        if predicted.shape != actual.shape or actual.size == 0:
            raise ContractViolation(
                f"predicted has {predicted.size} values, actual has {actual.size}",
                module="importance",
                field="predicted",
            )
        labels = np.unique(actual) if self.labels is None else self.labels
        nearest = labels[np.abs(predicted[:, None] - labels[None, :]).argmin(axis=1)]
        return float(100.0 * np.mean(nearest != actual))
