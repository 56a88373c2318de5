import logging
from app.datagen.schemas import SynthBundle
from app.exceptions import ConfigurationError
from app.features.main import Features
from app.features.schemas import FeatureColumns, FeatureConfig, FeatureTable


class FeatureBuilder:
    @classmethod
    def lobs(cls, inputs: SynthBundle, config: FeatureConfig) -> list[str]:
        lobs = config.lobs or sorted(inputs.sales)
        unknown = [lob for lob in lobs if lob not in inputs.sales]
        if unknown:
            raise ConfigurationError(
                f"no sales series for {unknown}", module="features", field="lobs"
            )
        return lobs

    @classmethod
    def lead_table(
        cls, inputs: SynthBundle, lob: str, lead: int, config: FeatureConfig
    ) -> FeatureTable:
        """
        Full design for one line of business and lead time. Sales lags of every
        line of business enter, since the lines substitute for each other, and
        only the bookings of the matching lead.
        """
        if lob not in inputs.sales:
            raise ConfigurationError(
                f"no sales series for {lob}", module="features", field="lob"
            )
        stamps = inputs.calendar.week_stamps()
        columns: list[FeatureColumns] = []

        for name in sorted(inputs.sales):
            columns.append(Features.lag_features(inputs.sales[name], config.lags))
        if config.asp_lags:
            for name in sorted(inputs.asp):
                columns.append(Features.lag_features(inputs.asp[name], config.asp_lags))
        for name in sorted(inputs.bookings):
            if name.endswith(f"_backlog_{lead}"):
                series = inputs.bookings[name]
                columns.append(FeatureColumns(frame=series.to_series().to_frame()))

        if config.include_outlook and inputs.outlook:
            columns.append(Features.outlook_delta(inputs.outlook_frame(), stamps))
        if config.include_cny:
            columns.append(
                FeatureColumns(frame=Features.cny_effect(inputs.calendar).to_frame())
            )
        columns.append(Features.calendar_features(stamps, inputs.calendar))

        return Features.assemble(columns, inputs.sales[lob], lead)

    @classmethod
    def build(
        cls, inputs: SynthBundle, config: FeatureConfig
    ) -> dict[tuple[str, int], FeatureTable]:
        tables = {}
        for lob in cls.lobs(inputs, config):
            for lead in config.leads:
                tables[(lob, lead)] = cls.lead_table(inputs, lob, lead, config)
            logging.info(f"Built {len(config.leads)} lead tables for {lob}.")
        return tables
