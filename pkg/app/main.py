import json
import logging
import logging.config
from pathlib import Path
import click
import numpy as np
import pandas as pd
import yaml
from app import __version__
from app.backtest.main import Backtest
from app.backtest.schemas import BacktestReport, WindowPlan
from app.collinearity.main import Collinearity
from app.config import RunConfig, load_run_config, settings
from app.core.helpers import CoreHelpers
from app.core.main import Core
from app.datagen.helpers import SynthHelpers
from app.datagen.main import Synth
from app.decorators import exit_on_error
from app.enums import OutlookIndicatorEnum
from app.ensemble.main import Ensemble
from app.ensemble.schemas import EnsembleModel
from app.exceptions import ConfigurationError
from app.features.builder import FeatureBuilder
from app.features.helpers import FeatureHelpers
from app.importance.main import Importance
from app.importance.schemas import ImportanceReport
from app.reports.main import Reports

LOG_FORMAT = "[%(levelname)s] %(filename)s %(asctime)s %(message)s"


def setup_logging(log_config: Path) -> None:
    try:
        with open(log_config) as handle:
            logging.config.dictConfig(yaml.safe_load(handle))
    except (OSError, yaml.YAMLError, ValueError) as error:
        logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
        logging.debug(f"Falling back to basic logging: {error}")


def finish(ctx: click.Context, command: str, inputs: list[Path], outputs: list[Path]) -> None:
    config: RunConfig = ctx.obj["config"]
    out = config.output_dir
    manifest = CoreHelpers.write_manifest(
        out,
        command,
        config.model_dump_json(),
        config.seed,
        __version__,
        inputs,
        outputs,
    )
    logging.info(f"{command} wrote {len(outputs)} files and {manifest}")


def read_calendar(config: RunConfig):
    return CoreHelpers.read_calendar(
        config.calendar.calendar_path, config.calendar.lunar_new_year_path
    )


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--seed", type=int, default=None, help="Global seed.")
@click.option("--workers", type=int, default=None, help="Parallel worker count.")
@click.option("--out", "output_dir", type=click.Path(path_type=Path), default=None)
@click.option("--log-config", type=click.Path(path_type=Path), default=None)
@click.pass_context
def cli(ctx, config_path, seed, workers, output_dir, log_config):
    """Ensemble weekly sales forecasting pipeline."""
    setup_logging(log_config or settings.log_config)
    ctx.ensure_object(dict)
    ctx.obj["args"] = {
        "path": config_path,
        "seed": seed,
        "workers": workers,
        "output_dir": output_dir,
    }


def run_config(ctx: click.Context) -> RunConfig:
    config = load_run_config(**ctx.obj["args"])
    config.output_dir.mkdir(parents=True, exist_ok=True)
    ctx.obj["config"] = config
    return config


@cli.command()
@click.pass_context
@exit_on_error
def synth(ctx):
    """Generate the synthetic weekly feeds."""
    config = run_config(ctx)
    calendar = read_calendar(config)
    bundle = Synth.generate(config.synth, calendar)
    outputs = SynthHelpers.write_bundle(bundle, config.output_dir)
    inputs = [p for p in (config.calendar.calendar_path, config.calendar.lunar_new_year_path) if p]
    finish(ctx, "synth", inputs, outputs)


@cli.command()
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True)
@click.pass_context
@exit_on_error
def features(ctx, data_dir):
    """Build one feature table per line of business and lead time."""
    config = run_config(ctx)
    bundle = SynthHelpers.read_bundle(data_dir)
    outputs = []
    for (lob, lead), table in FeatureBuilder.build(bundle, config.features).items():
        path = config.output_dir / f"{FeatureHelpers.table_name(lob, lead)}.csv"
        outputs.extend(FeatureHelpers.write_table(table, path))
    inputs = sorted(p for p in Path(data_dir).glob("*.csv"))
    finish(ctx, "features", inputs, outputs)


@cli.command()
@click.option("--tables", "tables_dir", type=click.Path(path_type=Path), required=True)
@click.pass_context
@exit_on_error
def decollinear(ctx, tables_dir):
    """Cluster correlated variables and keep one per cluster."""
    config = run_config(ctx)
    tables = FeatureHelpers.read_tables(tables_dir)
    # Only reduced tables may sit at the top level, train and backtest glob it.
    diagnostics = config.output_dir / "diagnostics"
    diagnostics.mkdir(exist_ok=True)
    outputs = []
    for (lob, lead), table in tables.items():
        name = FeatureHelpers.table_name(lob, lead)
        seed = CoreHelpers.derive_seed(config.seed, "collinearity", name)
        reduced, report = Collinearity.decollinearize(
            table, config.collinearity.target_ratio, seed
        )
        outputs.extend(FeatureHelpers.write_table(reduced, config.output_dir / f"{name}.csv"))
        report_path = config.output_dir / f"{name}_collinearity.json"
        report_path.write_text(report.model_dump_json(indent=2) + "\n")
        outputs.append(report_path)

        for label, kept in (
            ("before", [c for c in table.numeric if c not in report.dropped_constant]),
            ("after", reduced.numeric),
        ):
            if len(kept) < 2:
                continue
            corr = Collinearity.abs_corr_matrix(table, kept)
            corr_path = diagnostics / f"{name}_corr_{label}.csv"
            corr.to_csv(corr_path, index_label="variable")
            outputs.append(corr_path)
            outputs.append(
                Reports.heatmap(
                    corr,
                    diagnostics / f"{name}_heatmap_{label}.svg",
                    f"{name}: |r| {label} treatment",
                )
            )
    inputs = sorted(Path(tables_dir).glob("*_lead_*.*"))
    finish(ctx, "decollinear", inputs, outputs)


def split_for_training(table, config: RunConfig) -> WindowPlan:
    """
    Window with the last test_weeks response weeks held out, the val_weeks
    before them for validation and every earlier week for training.
    """
    settings_ = config.train
    test_week = int(table.response_weeks.max()) + 1 - settings_.test_weeks
    val_start = test_week - settings_.val_weeks
    first_week = int(table.weeks.min())
    if val_start - first_week < 1:
        raise ConfigurationError(
            f"table has no weeks left for training before week {val_start}",
            module="cli",
            field="val_weeks",
        )
    return WindowPlan(
        train_weeks=val_start - first_week,
        val_weeks=settings_.val_weeks,
        test_week=test_week,
        lead_time=table.lead_time,
        train_start=first_week,
        train_end=val_start - 1,
        val_start=val_start,
        val_end=test_week - 1,
    )


@cli.command()
@click.option("--tables", "tables_dir", type=click.Path(path_type=Path), required=True)
@click.pass_context
@exit_on_error
def train(ctx, tables_dir):
    """Search, cut and average one learner family for one table."""
    config = run_config(ctx)
    tables = FeatureHelpers.read_tables(tables_dir)
    lob = config.train.lob or sorted({lob for lob, _ in tables})[0]
    key = (lob, config.train.lead_time)
    if key not in tables:
        raise ConfigurationError(
            f"no feature table for {lob} at lead {key[1]} in {tables_dir}",
            module="cli",
            field="lead_time",
        )
    table = tables[key]
    plan = split_for_training(table, config)
    train_rows, val_rows = plan.train_rows(table), plan.val_rows(table)
    train_rows, _ = Collinearity.decollinearize(
        train_rows,
        config.collinearity.target_ratio,
        CoreHelpers.derive_seed(config.seed, "collinearity", plan.window_id),
    )
    val_rows = val_rows.select(train_rows.variables)

    result = Ensemble.search(
        config.train.kind,
        train_rows,
        val_rows,
        config.search,
        config.seed,
        config.workers,
        train_window_id=plan.window_id,
    )

    out = config.output_dir
    outputs = []
    outputs.extend(FeatureHelpers.write_table(train_rows, out / "train_table.csv"))
    outputs.extend(FeatureHelpers.write_table(val_rows, out / "val_table.csv"))

    ensemble_path = out / "ensemble.json"
    ensemble_path.write_text(result.ensemble.model_dump_json(indent=2) + "\n")
    search_path = out / "change_point.json"
    search_path.write_text(result.change_point.model_dump_json(indent=2) + "\n")

    curve = pd.DataFrame(
        [
            {
                "rank": i,
                "spec_hash": c.spec.spec_hash,
                "mape": c.mape,
                "variables": ";".join(c.spec.variables),
                "arima_order": "" if c.spec.arima_order is None else "-".join(map(str, c.spec.arima_order)),
            }
            for i, c in enumerate(result.ranking.ranked, start=1)
        ]
    )
    curve_path = out / "mape_curve.csv"
    curve.to_csv(curve_path, index=False)
    svg = Reports.mape_curve(
        curve["mape"],
        result.change_point.M,
        out / "mape_curve.svg",
        f"{lob} lead {key[1]} {config.train.kind.value}",
    )
    outputs.extend([ensemble_path, search_path, curve_path, svg])
    finish(ctx, "train", sorted(Path(tables_dir).glob(f"{lob}_lead_*.*")), outputs)


@cli.command()
@click.option("--tables", "tables_dir", type=click.Path(path_type=Path), required=True)
@click.pass_context
@exit_on_error
def backtest(ctx, tables_dir):
    """Moving-window backtest of every method at every configured lead."""
    config = run_config(ctx)
    settings_ = config.backtest
    tables = {
        key: table
        for key, table in FeatureHelpers.read_tables(tables_dir).items()
        if key[1] in settings_.leads and (settings_.lobs is None or key[0] in settings_.lobs)
    }
    if not tables:
        raise ConfigurationError(
            f"no feature tables for leads {settings_.leads} in {tables_dir}",
            module="cli",
            field="leads",
        )
    plans = Backtest.plans_for(tables, settings_)
    violations = Backtest.leakage_audit(plans, tables)
    if violations:
        raise ConfigurationError(
            f"{len(violations)} leakage violations, first: {violations[0]}",
            module="backtest",
            field="plans",
        )

    report = Backtest.run_backtest(
        tables,
        settings_.methods,
        plans,
        settings_.search,
        config.seed,
        config.workers,
        settings_.collinearity.target_ratio,
    )
    outputs = write_backtest(report, config.output_dir)
    finish(ctx, "backtest", sorted(Path(tables_dir).glob("*_lead_*.*")), outputs)


def write_backtest(report: BacktestReport, out: Path) -> list[Path]:
    outputs = []
    cells = pd.DataFrame([c.model_dump(mode="json") for c in report.cells])
    frames = {
        "cells.csv": cells,
        "rank_counts.csv": Backtest.rank_counts(report),
        "mape_by_lead.csv": Backtest.mape_by_lead(report),
        "best_method_by_lead.csv": Backtest.best_method_by_lead(report),
    }
    for name, frame in frames.items():
        frame.to_csv(out / name, index=False)
        outputs.append(out / name)

    report_path = out / "backtest.json"
    report_path.write_text(report.model_dump_json(indent=2) + "\n")
    outputs.append(report_path)

    curves = frames["mape_by_lead.csv"]
    for lob in report.lobs:
        outputs.append(Reports.mape_by_lead(curves, lob, out / f"mape_by_lead_{lob}.svg"))
    return outputs


@cli.command()
@click.option("--run", "run_dir", type=click.Path(path_type=Path), required=True)
@click.pass_context
@exit_on_error
def importance(ctx, run_dir):
    """Permutation importance of a trained ensemble."""
    config = run_config(ctx)
    run_dir = Path(run_dir)
    ensemble_path = CoreHelpers.require_file(run_dir / "ensemble.json", field="run")
    ensemble = EnsembleModel.model_validate_json(ensemble_path.read_text())
    train_rows = FeatureHelpers.read_table(run_dir / "train_table.csv")
    val_rows = FeatureHelpers.read_table(run_dir / "val_table.csv")

    report = Importance.importance_report(
        ensemble,
        train_rows,
        val_rows,
        config.importance.variables,
        config.importance.iterations,
        CoreHelpers.derive_seed(config.seed, "importance", ensemble.ensemble_id),
        workers=config.workers,
    )
    out = config.output_dir
    ranked = pd.DataFrame(
        [v.model_dump(exclude={"running_mean"}) for v in report.variables]
    )
    csv_path = out / "importance.csv"
    ranked.to_csv(csv_path, index=False)
    json_path = out / "importance.json"
    json_path.write_text(report.model_dump_json(indent=2) + "\n")
    svg = Reports.importance_bars(report, config.importance.top_k, out / "importance.svg")

    inputs = [ensemble_path, run_dir / "train_table.csv", run_dir / "val_table.csv"]
    finish(ctx, "importance", inputs, [csv_path, json_path, svg])


def yoy_frame(data_dir: Path, lob: str = None) -> pd.DataFrame:
    """
    z-scored quarterly sales YoY of one line of business next to the z-scored
    world GDP outlook issued at the start of each quarter.
    """
    bundle = SynthHelpers.read_bundle(data_dir)
    lob = lob or sorted(bundle.sales)[0]
    yoy = Core.quarterly_yoy(bundle.sales[lob], bundle.calendar)
    if yoy.empty:
        raise ConfigurationError(
            f"{lob} spans too few quarters for a YoY comparison", module="cli", field="data"
        )
    outlook = bundle.outlook_frame()
    gdp = outlook[
        (outlook["indicator"] == OutlookIndicatorEnum.GDP_WW.value)
        & (outlook["as_of_quarter_seq"] == outlook["target_quarter_seq"])
    ].set_index("target_quarter_seq")["value"]
    joined = pd.concat([yoy.rename(f"{lob} sales YoY"), gdp.rename("world GDP outlook")], axis=1, join="inner")
    return pd.DataFrame(
        {column: Core.zscore(joined[column]) for column in joined.columns},
        index=joined.index,
    )


@cli.command()
@click.option("--data", "data_dir", type=click.Path(path_type=Path), default=None)
@click.option("--decollinear", "decollinear_dir", type=click.Path(path_type=Path), default=None)
@click.option("--train", "train_dir", type=click.Path(path_type=Path), default=None)
@click.option("--backtest", "backtest_dir", type=click.Path(path_type=Path), default=None)
@click.option("--importance", "importance_dir", type=click.Path(path_type=Path), default=None)
@click.pass_context
@exit_on_error
def report(ctx, data_dir, decollinear_dir, train_dir, backtest_dir, importance_dir):
    """Collect tables and figures from finished runs into one report."""
    config = run_config(ctx)
    if not any([data_dir, decollinear_dir, train_dir, backtest_dir, importance_dir]):
        raise ConfigurationError(
            "report needs at least one finished run directory", module="cli", field="report"
        )
    out = config.output_dir
    inputs, outputs, lines = [], [], ["# Forecast report", ""]

    if backtest_dir:
        path = CoreHelpers.require_file(Path(backtest_dir) / "backtest.json", field="backtest")
        inputs.append(path)
        backtest_report = BacktestReport.model_validate_json(path.read_text())
        counts = Backtest.rank_counts(backtest_report)
        table = Reports.rank_table(counts)
        table.to_csv(out / "rank_table.csv", index=False)
        (out / "rank_table.txt").write_text(Reports.rank_table_text(counts))
        best = Backtest.best_method_by_lead(backtest_report)
        best.to_csv(out / "best_method_by_lead.csv", index=False)
        outputs.extend([out / "rank_table.csv", out / "rank_table.txt", out / "best_method_by_lead.csv"])
        lines += ["## Backtest", "", "Rank counts, all leads (leads <= 5, leads >= 12):", ""]
        lines += ["```", Reports.rank_table_text(counts).rstrip(), "```", ""]
        curves = Backtest.mape_by_lead(backtest_report)
        for lob in backtest_report.lobs:
            svg = Reports.mape_by_lead(curves, lob, out / f"mape_by_lead_{lob}.svg")
            outputs.append(svg)
            lines.append(f"- [{svg.name}]({svg.name})")
        lines += ["- [best_method_by_lead.csv](best_method_by_lead.csv)", ""]

    if train_dir:
        path = CoreHelpers.require_file(Path(train_dir) / "mape_curve.csv", field="train")
        change_point = json.loads(
            CoreHelpers.require_file(Path(train_dir) / "change_point.json", field="train").read_text()
        )
        inputs.extend([path, Path(train_dir) / "change_point.json"])
        curve = pd.read_csv(path)
        svg = Reports.mape_curve(curve["mape"], change_point["M"], out / "mape_curve.svg")
        outputs.append(svg)
        lines += ["## Ensemble size", "", f"M = {change_point['M']}", "", f"- [{svg.name}]({svg.name})", ""]

    if importance_dir:
        path = CoreHelpers.require_file(Path(importance_dir) / "importance.json", field="importance")
        inputs.append(path)
        importance_report = ImportanceReport.model_validate_json(path.read_text())
        svg = Reports.importance_bars(importance_report, config.importance.top_k, out / "importance.svg")
        outputs.append(svg)
        lines += ["## Variable importance", "", f"- [{svg.name}]({svg.name})", ""]

    if decollinear_dir:
        lines += ["## Multicollinearity", ""]
        for path in sorted((Path(decollinear_dir) / "diagnostics").glob("*_corr_*.csv")):
            inputs.append(path)
            corr = pd.read_csv(path, index_col="variable")
            svg = Reports.heatmap(corr, out / f"{path.stem.replace('_corr_', '_heatmap_')}.svg", path.stem)
            outputs.append(svg)
            lines.append(f"- [{svg.name}]({svg.name})")
        lines.append("")

    if data_dir:
        inputs.extend(sorted(Path(data_dir).glob("*.csv")))
        frame = yoy_frame(Path(data_dir), config.train.lob)
        svg = Reports.yoy_comparison(frame, out / "yoy_comparison.svg", "Sales YoY against GDP outlook")
        frame.to_csv(out / "yoy_comparison.csv", index_label="quarter_seq")
        outputs.extend([svg, out / "yoy_comparison.csv"])
        corr = float(np.corrcoef(frame.to_numpy().T)[0, 1])
        lines += ["## Growth comparison", "", f"Correlation of z-scores: {corr:.3f}", "", f"- [{svg.name}]({svg.name})", ""]

    index = out / "report.md"
    index.write_text("\n".join(lines) + "\n")
    outputs.append(index)
    finish(ctx, "report", inputs, outputs)


if __name__ == "__main__":
    cli()
