import logging
import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from app.backtest.schemas import BacktestCell, BacktestConfig, BacktestReport, WindowPlan
from app.collinearity.main import Collinearity
from app.core.helpers import CoreHelpers
from app.core.main import Core
from app.enums import CellStatusEnum, LeadBandIntEnum, MethodEnum
from app.ensemble.main import Ensemble
from app.ensemble.schemas import SearchConfig
from app.exceptions import ConfigurationError, ContractViolation, ForecastError
from app.features.schemas import FeatureTable

METHOD_ORDER = {method: i for i, method in enumerate(MethodEnum)}


class Backtest:
    @classmethod
    def plan_windows(
        cls,
        data_span: tuple[int, int],
        test_span: tuple[int, int],
        lead_time: int,
        train_weeks: int = 104,
        val_weeks: int = 52,
    ) -> list[WindowPlan]:
        first_week, last_week = data_span
        first_test, last_test = test_span
        if first_test > last_test:
            raise ConfigurationError(
                f"test span {test_span} is empty", module="backtest", field="test_span"
            )
        if last_test > last_week:
            raise ConfigurationError(
                f"test week {last_test} is past the last data week {last_week}",
                module="backtest",
                field="test_span",
            )
        earliest = first_test - val_weeks - train_weeks
        if earliest < first_week:
            raise ConfigurationError(
                f"history is {first_week - earliest} weeks short: the first test week "
                f"{first_test} needs {train_weeks + val_weeks} weeks before it",
                module="backtest",
                field="test_span",
            )
        if lead_time > val_weeks:
            raise ConfigurationError(
                f"lead time {lead_time} exceeds the {val_weeks}-week validation block",
                module="backtest",
                field="lead_time",
            )

        plans = []
        for test_week in range(first_test, last_test + 1):
            val_start = test_week - val_weeks
            plans.append(
                WindowPlan(
                    train_weeks=train_weeks,
                    val_weeks=val_weeks,
                    test_week=test_week,
                    lead_time=lead_time,
                    train_start=val_start - train_weeks,
                    train_end=val_start - 1,
                    val_start=val_start,
                    val_end=test_week - 1,
                )
            )
        return plans

    @classmethod
    def plans_for(
        cls, tables: dict[tuple[str, int], FeatureTable], config: BacktestConfig
    ) -> list[WindowPlan]:
        """
        Plans for every configured lead. Without an explicit test span the
        last n_test_weeks response weeks of the tables are tested.
        """
        last_week = max(int(t.response_weeks.max()) for t in tables.values())
        first_week = min(int(t.weeks.min()) for t in tables.values())
        test_span = config.test_span or (last_week - config.n_test_weeks + 1, last_week)
        plans = []
        for lead in config.leads:
            plans.extend(
                cls.plan_windows(
                    (first_week, last_week),
                    test_span,
                    lead,
                    config.train_weeks,
                    config.val_weeks,
                )
            )
        return plans

    @classmethod
    def run_window(
        cls,
        lob: str,
        table: FeatureTable,
        plan: WindowPlan,
        methods: list[MethodEnum],
        search: SearchConfig,
        target_ratio: float,
        seed: int,
    ) -> list[BacktestCell]:
        def cell(method: MethodEnum, **values) -> BacktestCell:
            return BacktestCell(
                lob=lob,
                method=method,
                test_week=plan.test_week,
                lead_time=plan.lead_time,
                window_id=plan.window_id,
                **values,
            )

        try:
            train, val, test = plan.train_rows(table), plan.val_rows(table), plan.test_rows(table)
            if len(test) != 1:
                raise ContractViolation(
                    f"expected one test row at origin {plan.test_origin}, found {len(test)}",
                    module="backtest",
                    field="test_week",
                )
            if len(val) == 0:
                raise ContractViolation(
                    "validation block has no usable rows", module="backtest", field="val_weeks"
                )
            # Reduction uses training rows only.
            train, _ = Collinearity.decollinearize(
                train, target_ratio, CoreHelpers.derive_seed(seed, "collinearity", lob, plan.window_id)
            )
            variables = train.variables
            val, test = val.select(variables), test.select(variables)
        except (ForecastError, ValueError, np.linalg.LinAlgError) as error:
            logging.warning(f"{lob} {plan.window_id} cannot be prepared: {error}")
            return [
                cell(method, status=CellStatusEnum.FAILED, error=str(error))
                for method in methods
            ]

        cells = []
        for method in methods:
            try:
                result = Ensemble.search(
                    method.kind,
                    train,
                    val,
                    search,
                    seed=CoreHelpers.derive_seed(seed, "backtest", lob, plan.window_id, method.value),
                    workers=1,
                    train_window_id=plan.window_id,
                )
                prediction = float(Ensemble.ensemble_predict(result.ensemble, test)[0])
                actual = float(test.y[0])
                cells.append(
                    cell(
                        method,
                        mape=Core.mape([prediction], [actual]),
                        prediction=prediction,
                        actual=actual,
                        M=result.ensemble.M,
                        n_variables=len(variables),
                    )
                )
            except (ForecastError, ValueError, ArithmeticError, np.linalg.LinAlgError) as error:
                logging.warning(f"{lob} {method.value} {plan.window_id} failed: {error}")
                cells.append(cell(method, status=CellStatusEnum.FAILED, error=str(error)))
        return cells

    @classmethod
    def run_backtest(
        cls,
        tables: dict[tuple[str, int], FeatureTable],
        methods: list[MethodEnum],
        plans: list[WindowPlan],
        search: SearchConfig,
        seed: int,
        workers: int = 1,
        target_ratio: float = 0.8,
    ) -> BacktestReport:
        lobs = sorted({lob for lob, _ in tables})
        jobs = [
            (lob, plan)
            for lob in lobs
            for plan in plans
            if (lob, plan.lead_time) in tables
        ]
        logging.info(
            f"Backtesting {len(jobs)} windows x {len(methods)} methods with {workers} workers."
        )
        results = Parallel(n_jobs=workers)(
            delayed(cls.run_window)(
                lob, tables[(lob, plan.lead_time)], plan, methods, search, target_ratio, seed
            )
            for lob, plan in jobs
        )
        cells = [c for window in results for c in window]
        cells.sort(
            key=lambda c: (c.lob, c.lead_time, c.test_week, METHOD_ORDER[c.method])
        )
        failed = sum(c.status == CellStatusEnum.FAILED for c in cells)
        if failed:
            logging.warning(f"{failed} of {len(cells)} backtest cells failed.")
        return BacktestReport(seed=seed, cells=cells)

    @classmethod
    def cell_ranks(cls, report: BacktestReport) -> pd.DataFrame:
        """
        Rank of every method in each (lob, test week, lead) group, ties to the
        fixed method order. Groups with a failed cell are left out.
        """
        frame = pd.DataFrame(
            [
                {
                    "lob": c.lob,
                    "method": c.method.value,
                    "order": METHOD_ORDER[c.method],
                    "test_week": c.test_week,
                    "lead_time": c.lead_time,
                    "mape": c.mape,
                    "failed": c.status == CellStatusEnum.FAILED,
                }
                for c in report.cells
            ],
            columns=["lob", "method", "order", "test_week", "lead_time", "mape", "failed"],
        )
        groups = ["lob", "test_week", "lead_time"]
        complete = ~frame.groupby(groups)["failed"].transform("any")
        frame = frame[complete].sort_values([*groups, "mape", "order"])
        frame["rank"] = frame.groupby(groups).cumcount() + 1
        return frame

    @classmethod
    def rank_counts(cls, report: BacktestReport) -> pd.DataFrame:
        """
        Table of how often each method took each rank, as counts over all
        leads, leads up to 5 and leads from 12.
        """
        ranks = cls.cell_ranks(report)
        ranks["short"] = ranks["lead_time"] <= LeadBandIntEnum.SHORT_MAX
        ranks["long"] = ranks["lead_time"] >= LeadBandIntEnum.LONG_MIN

        n_methods = len(report.methods)
        rows = []
        for lob in report.lobs:
            for method in report.methods:
                subset = ranks[(ranks["lob"] == lob) & (ranks["method"] == method.value)]
                for rank in range(1, n_methods + 1):
                    hits = subset[subset["rank"] == rank]
                    rows.append(
                        {
                            "lob": lob,
                            "method": method.value,
                            "rank": rank,
                            "all": len(hits),
                            "short": int(hits["short"].sum()),
                            "long": int(hits["long"].sum()),
                        }
                    )
        return pd.DataFrame(rows, columns=["lob", "method", "rank", "all", "short", "long"])

    @classmethod
    def mape_by_lead(cls, report: BacktestReport) -> pd.DataFrame:
        frame = pd.DataFrame(
            [
                {"lob": c.lob, "method": c.method.value, "lead_time": c.lead_time, "mape": c.mape}
                for c in report.ok_cells
            ],
            columns=["lob", "method", "lead_time", "mape"],
        )
        return (
            frame.groupby(["lob", "method", "lead_time"], sort=True)["mape"]
            .agg(["mean", "count"])
            .rename(columns={"mean": "mape", "count": "cells"})
            .reset_index()
        )

    @classmethod
    def best_method_by_lead(cls, report: BacktestReport) -> pd.DataFrame:
        """
        Per lob and lead, the method with the lowest average test MAPE. The
        combined_mape column is the average over leads of using each lead's
        best method, the same for every row of a lob.
        """
        curves = cls.mape_by_lead(report)
        if curves.empty:
            return pd.DataFrame(columns=["lob", "lead_time", "method", "mape", "combined_mape"])
        curves["order"] = curves["method"].map(lambda m: METHOD_ORDER[MethodEnum(m)])
        best = (
            curves.sort_values(["lob", "lead_time", "mape", "order"])
            .groupby(["lob", "lead_time"], sort=True)
            .head(1)
            .reset_index(drop=True)
        )
        best["combined_mape"] = best.groupby("lob")["mape"].transform("mean")
        return best[["lob", "lead_time", "method", "mape", "combined_mape"]]

    @classmethod
    def leakage_audit(
        cls, plans: list[WindowPlan], tables: dict[tuple[str, int], FeatureTable]
    ) -> list[str]:
        violations = []
        for (lob, lead), table in sorted(tables.items()):
            for plan in plans:
                if plan.lead_time != lead:
                    continue
                label = f"{lob} {plan.window_id}"
                train, val, test = plan.train_rows(table), plan.val_rows(table), plan.test_rows(table)
                if len(train) and train.response_weeks.max() >= plan.val_start:
                    violations.append(f"{label}: training response reaches the validation block")
                if len(val) and val.response_weeks.max() >= plan.test_week:
                    violations.append(f"{label}: validation response reaches the test week")
                if len(train) and len(val) and train.weeks.max() >= val.weeks.min():
                    violations.append(f"{label}: training and validation rows overlap")
                if len(test) and int(test.response_weeks[0]) != plan.test_week:
                    violations.append(f"{label}: test row does not target the test week")
                if plan.train_start <= plan.test_week <= plan.val_end:
                    violations.append(f"{label}: test week inside the fitted blocks")
        return violations
