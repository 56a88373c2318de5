import hashlib
import json
import logging
from datetime import date
from pathlib import Path
import pandas as pd
from app.core.schemas import FiscalCalendar, FiscalQuarter, WeeklySeries
from app.exceptions import ConfigurationError

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

SERIES_COLUMNS = ["lob", "fiscal_year", "quarter", "week_of_quarter", "value"]
CALENDAR_COLUMNS = ["fiscal_year", "quarter", "weeks_in_quarter"]
LNY_COLUMNS = ["year", "date"]


class CoreHelpers:
    @classmethod
    def derive_seed(cls, seed: int, *path) -> int:
        """
        Derive a 32-bit seed from the global seed and a named path such as
        ("ensemble", "candidate", spec_hash). The same path always gives the
        same seed, independent of scheduling order.
        """
        key = "/".join([str(seed), *[str(p) for p in path]]).encode()
        return int.from_bytes(hashlib.blake2b(key, digest_size=4).digest(), "big")

    @classmethod
    def content_hash(cls, source: Path | bytes | str) -> str:
        if isinstance(source, bytes):
            return hashlib.sha256(source).hexdigest()
        if isinstance(source, str):
            return hashlib.sha256(source.encode()).hexdigest()
        return hashlib.sha256(Path(source).read_bytes()).hexdigest()

    @classmethod
    def require_file(cls, path: Path, field: str = "path") -> Path:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(
                f"input file not found: {path}", module="cli", field=field
            )
        return path

    @classmethod
    def read_csv(cls, path: Path, columns: list[str], module: str) -> pd.DataFrame:
        frame = pd.read_csv(cls.require_file(path))
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise ConfigurationError(
                f"{path} is missing columns {missing}", module=module, field=missing[0]
            )
        return frame

    @classmethod
    def read_calendar(
        cls, calendar_path: Path = None, lny_path: Path = None
    ) -> FiscalCalendar:
        calendar_path = calendar_path or DATA_DIR / "fiscal_calendar.csv"
        lny_path = lny_path or DATA_DIR / "lunar_new_year.csv"
        logging.debug(f"Reading calendar from {calendar_path} and {lny_path}")

        quarters_frame = cls.read_csv(calendar_path, CALENDAR_COLUMNS, module="core")
        quarters = []
        for row in quarters_frame.to_dict("records"):
            start_date = row.get("start_date")
            quarters.append(
                FiscalQuarter(
                    fiscal_year=int(row["fiscal_year"]),
                    quarter=int(row["quarter"]),
                    weeks_in_quarter=int(row["weeks_in_quarter"]),
                    start_date=(
                        date.fromisoformat(str(start_date))
                        if isinstance(start_date, str)
                        else None
                    ),
                )
            )

        lny_frame = cls.read_csv(lny_path, LNY_COLUMNS, module="core")
        if lny_frame["year"].duplicated().any():
            raise ConfigurationError(
                "lunar new year file lists a year twice", module="core", field="year"
            )
        lunar_new_year = {
            int(row["year"]): date.fromisoformat(str(row["date"]))
            for row in lny_frame.to_dict("records")
        }
        return FiscalCalendar(quarters=tuple(quarters), lunar_new_year=lunar_new_year)

    @classmethod
    def write_calendar(
        cls, calendar: FiscalCalendar, calendar_path: Path, lny_path: Path
    ) -> None:
        rows = [q.model_dump() for q in calendar.quarters]
        frame = pd.DataFrame(rows)
        if not calendar.has_dates:
            frame = frame.drop(columns=["start_date"])
        else:
            frame["start_date"] = frame["start_date"].map(date.isoformat)
        frame.to_csv(calendar_path, index=False)

        lny = pd.DataFrame(
            [
                {"year": year, "date": day.isoformat()}
                for year, day in sorted(calendar.lunar_new_year.items())
            ],
            columns=LNY_COLUMNS,
        )
        lny.to_csv(lny_path, index=False)

    @classmethod
    def series_from_values(
        cls, lob: str, stamps: list, values
    ) -> WeeklySeries:
        return WeeklySeries(
            line_of_business=lob,
            weeks=tuple(stamps),
            values=tuple(float(v) for v in values),
        )

    @classmethod
    def read_weekly_series(
        cls, path: Path, calendar: FiscalCalendar
    ) -> dict[str, WeeklySeries]:
        frame = cls.read_csv(path, SERIES_COLUMNS, module="core")
        lookup = calendar.stamp_lookup()

        series = {}
        for lob, rows in frame.groupby("lob", sort=True):
            stamps = []
            for row in rows.itertuples(index=False):
                key = (int(row.fiscal_year), int(row.quarter), int(row.week_of_quarter))
                try:
                    stamps.append(lookup[key])
                except KeyError:
                    raise ConfigurationError(
                        f"{path}: week {key} of {lob} is not in the calendar",
                        module="core",
                        field="week_of_quarter",
                    )
            order = sorted(range(len(stamps)), key=lambda i: stamps[i].absolute_week)
            values = rows["value"].to_numpy(dtype=float)
            series[str(lob)] = cls.series_from_values(
                str(lob), [stamps[i] for i in order], values[order]
            )
        return series

    @classmethod
    def write_weekly_series(cls, series: list[WeeklySeries], path: Path) -> None:
        frames = []
        for item in series:
            frame = item.to_frame()
            frame.insert(0, "lob", item.line_of_business)
            frames.append(frame[SERIES_COLUMNS])
        pd.concat(frames, ignore_index=True).to_csv(path, index=False)

    @classmethod
    def write_manifest(
        cls,
        directory: Path,
        command: str,
        config_json: str,
        seed: int,
        version: str,
        inputs: list[Path],
        outputs: list[Path],
    ) -> Path:
        """
        manifest.json with content hashes of every input and output. No
        timestamps, so identical runs write identical manifests.
        """
        directory = Path(directory)
        manifest = {
            "command": command,
            "tool_version": version,
            "seed": seed,
            "config_hash": cls.content_hash(config_json),
            "inputs": {str(p): cls.content_hash(p) for p in sorted(map(Path, inputs))},
            "outputs": {
                Path(p).relative_to(directory).as_posix(): cls.content_hash(p)
                for p in sorted(map(Path, outputs))
            },
        }
        path = directory / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path
