import json
import os
from pathlib import Path
from typing import Literal
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from app.backtest.schemas import BacktestConfig
from app.collinearity.schemas import CollinearityConfig
from app.core.schemas import StrictModel
from app.datagen.schemas import SynthConfig
from app.ensemble.schemas import SearchConfig
from app.enums import LearnerKindEnum
from app.exceptions import ConfigurationError
from app.features.schemas import FeatureConfig
from app.importance.schemas import ImportanceConfig


class Settings(BaseSettings):
    seed: int | None = None
    workers: int | None = None
    output_dir: Path | None = None
    config_path: Path | None = None
    log_config: Path = Path(os.getcwd()) / "logging.yml"

    model_config = SettingsConfigDict(env_file=".env", env_prefix="SALESCAST_", extra="ignore")


class CalendarConfig(StrictModel):
    calendar_path: Path | None = Field(
        default=None, description="Fiscal calendar CSV, the bundled one when unset."
    )
    lunar_new_year_path: Path | None = None


class TrainConfig(StrictModel):
    kind: LearnerKindEnum = LearnerKindEnum.MLR
    lob: str | None = None
    lead_time: int = Field(default=1, ge=1)
    val_weeks: int = Field(default=52, ge=1)
    test_weeks: int = Field(
        default=0, ge=0, description="Weeks held back after validation."
    )


class RunConfig(StrictModel):
    version: Literal[1]
    seed: int = 2015
    workers: int = Field(default=1, ge=1)
    output_dir: Path = Path("out")
    calendar: CalendarConfig = Field(default_factory=CalendarConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    features: FeatureConfig = Field(default_factory=FeatureConfig)
    collinearity: CollinearityConfig = Field(default_factory=CollinearityConfig)
    search: SearchConfig = Field(default_factory=SearchConfig)
    backtest: BacktestConfig = Field(default_factory=BacktestConfig)
    importance: ImportanceConfig = Field(default_factory=ImportanceConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)


settings = Settings()


def load_run_config(
    path: Path = None, seed: int = None, workers: int = None, output_dir: Path = None
) -> RunConfig:
    """
    RunConfig from the JSON file, then SALESCAST_* environment values, then
    the explicit arguments, each overriding the one before.
    """
    env = Settings()
    path = path or env.config_path
    if path is None:
        data = {"version": 1}
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(
                f"config file not found: {path}", module="cli", field="config"
            )
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as error:
            raise ConfigurationError(
                f"{path} is not valid JSON: {error}", module="cli", field="config"
            )
        if not isinstance(data, dict) or "version" not in data:
            raise ConfigurationError(
                f"{path} has no version field", module="cli", field="version"
            )

    overrides = {
        "seed": seed if seed is not None else env.seed,
        "workers": workers if workers is not None else env.workers,
        "output_dir": output_dir if output_dir is not None else env.output_dir,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    config = RunConfig.model_validate(data)

    # The generator follows the global seed unless the file pins its own.
    if config.synth.seed is None:
        config = config.model_copy(
            update={"synth": config.synth.model_copy(update={"seed": config.seed})}
        )
    return config
