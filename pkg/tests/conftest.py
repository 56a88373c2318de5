import numpy as np
import pandas as pd
import pytest
from app.core.helpers import CoreHelpers
from app.core.schemas import FiscalCalendar, FiscalQuarter
from app.datagen.main import Synth
from app.datagen.schemas import SynthConfig
from app.features.schemas import FeatureTable


@pytest.fixture
def make_calendar():
    def build(n_quarters: int = 8, long_quarters: tuple = ()) -> FiscalCalendar:
        quarters = []
        for i in range(n_quarters):
            quarters.append(
                FiscalQuarter(
                    fiscal_year=2010 + i // 4,
                    quarter=i % 4 + 1,
                    weeks_in_quarter=14 if i + 1 in long_quarters else 13,
                )
            )
        return FiscalCalendar(quarters=tuple(quarters))

    return build


@pytest.fixture
def make_table():
    """
    FeatureTable from plain columns, rows indexed by origin week starting at 1.
    """

    def build(columns: dict, y, lead_time: int = 1, categorical: dict = None, start: int = 1):
        categorical = categorical or {}
        frame = pd.DataFrame(columns)
        frame["target"] = np.asarray(y, dtype=float)
        frame.index = pd.Index(range(start, start + len(frame)), name="week")
        return FeatureTable(
            frame=frame,
            numeric=[c for c in columns if c not in categorical],
            categorical=categorical,
            response="target",
            lead_time=lead_time,
        )

    return build


@pytest.fixture
def linear_tables(make_table):
    """
    Training and validation tables where the response is an exact linear
    function of x1 and x2, with x3 pure noise.
    """
    rng = np.random.default_rng(11)
    n = 120
    x1, x2, x3 = rng.uniform(1, 10, n), rng.uniform(1, 10, n), rng.uniform(1, 10, n)
    y = 50 + 3 * x1 + 2 * x2
    table = make_table({"x1": x1, "x2": x2, "x3": x3}, y)
    return table.take(table.weeks <= 90), table.take(table.weeks > 90)


@pytest.fixture(scope="session")
def bundled_calendar():
    return CoreHelpers.read_calendar()


@pytest.fixture(scope="session")
def small_bundle(bundled_calendar):
    config = SynthConfig(seed=7, n_years=4, lobs=["DT", "SVR"], max_booking_lead=3)
    return Synth.generate(config, bundled_calendar)
