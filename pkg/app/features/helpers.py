import json
from pathlib import Path
import pandas as pd
from app.core.helpers import CoreHelpers
from app.exceptions import ConfigurationError
from app.features.schemas import FeatureTable


class FeatureHelpers:
    @classmethod
    def table_name(cls, lob: str, lead: int) -> str:
        return f"{lob}_lead_{lead:02d}"

    @classmethod
    def sidecar_path(cls, path: Path) -> Path:
        return Path(path).with_suffix(".json")

    @classmethod
    def write_table(cls, table: FeatureTable, path: Path) -> list[Path]:
        path = Path(path)
        table.frame.to_csv(path, index=True)
        sidecar = cls.sidecar_path(path)
        sidecar.write_text(json.dumps(table.sidecar()) + "\n")
        return [path, sidecar]

    @classmethod
    def read_table(cls, path: Path) -> FeatureTable:
        path = CoreHelpers.require_file(path)
        sidecar = CoreHelpers.require_file(cls.sidecar_path(path), field="sidecar")
        roles = json.loads(sidecar.read_text())
        try:
            frame = pd.read_csv(path, index_col="week")
        except ValueError:
            raise ConfigurationError(
                f"{path} has no week column", module="features", field="week"
            )
        for name in roles.get("categorical", {}):
            if name in frame.columns:
                frame[name] = frame[name].astype(int)
        return FeatureTable(frame=frame, **roles)

    @classmethod
    def read_tables(cls, directory: Path) -> dict[tuple[str, int], FeatureTable]:
        tables = {}
        for path in sorted(Path(directory).glob("*_lead_*.csv")):
            table = cls.read_table(path)
            lob = path.stem.rsplit("_lead_", 1)[0]
            tables[(lob, table.lead_time)] = table
        if not tables:
            raise ConfigurationError(
                f"no feature tables found in {directory}", module="features", field="dir"
            )
        return tables
