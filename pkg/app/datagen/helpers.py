import logging
from pathlib import Path
from app.core.helpers import CoreHelpers
from app.core.schemas import FiscalCalendar
from app.datagen.schemas import OutlookSnapshot, SynthBundle
from app.exceptions import ConfigurationError
from app.features.main import OUTLOOK_COLUMNS

BUNDLE_FILES = {
    "sales": "sales.csv",
    "bookings": "backlog.csv",
    "asp": "asp.csv",
    "outlook": "outlook.csv",
    "calendar": "calendar.csv",
    "lunar_new_year": "lunar_new_year.csv",
}


class SynthHelpers:
    @classmethod
    def write_bundle(cls, bundle: SynthBundle, directory: Path) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {key: directory / name for key, name in BUNDLE_FILES.items()}

        CoreHelpers.write_weekly_series(list(bundle.sales.values()), paths["sales"])
        CoreHelpers.write_weekly_series(list(bundle.bookings.values()), paths["bookings"])
        CoreHelpers.write_weekly_series(list(bundle.asp.values()), paths["asp"])
        bundle.outlook_frame().to_csv(paths["outlook"], index=False)
        CoreHelpers.write_calendar(
            bundle.calendar, paths["calendar"], paths["lunar_new_year"]
        )
        logging.info(f"Wrote {len(paths)} feed files to {directory}")
        return list(paths.values())

    @classmethod
    def read_bundle(
        cls, directory: Path, calendar: FiscalCalendar = None
    ) -> SynthBundle:
        """
        Load the feeds of a data directory. The directory's own calendar files
        are used unless a calendar is given.
        """
        directory = Path(directory)
        if calendar is None:
            calendar = CoreHelpers.read_calendar(
                directory / BUNDLE_FILES["calendar"],
                directory / BUNDLE_FILES["lunar_new_year"],
            )

        sales = CoreHelpers.read_weekly_series(directory / BUNDLE_FILES["sales"], calendar)
        bookings = {}
        if (directory / BUNDLE_FILES["bookings"]).is_file():
            bookings = CoreHelpers.read_weekly_series(
                directory / BUNDLE_FILES["bookings"], calendar
            )
        asp = {}
        if (directory / BUNDLE_FILES["asp"]).is_file():
            asp = CoreHelpers.read_weekly_series(directory / BUNDLE_FILES["asp"], calendar)

        outlook = []
        if (directory / BUNDLE_FILES["outlook"]).is_file():
            frame = CoreHelpers.read_csv(
                directory / BUNDLE_FILES["outlook"], OUTLOOK_COLUMNS, module="datagen"
            )
            outlook = [OutlookSnapshot(**row) for row in frame.to_dict("records")]

        for name in [*bookings, *asp]:
            if not any(name.startswith(f"{lob}_") for lob in sales):
                raise ConfigurationError(
                    f"feed {name} belongs to no line of business in sales.csv",
                    module="datagen",
                    field="lob",
                )
        return SynthBundle(
            calendar=calendar, sales=sales, bookings=bookings, asp=asp, outlook=outlook
        )
