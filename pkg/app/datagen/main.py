import logging
import numpy as np
from numpy.random import PCG64, Generator
from app.core.helpers import CoreHelpers
from app.core.schemas import FiscalCalendar, WeeklySeries
from app.datagen.schemas import OutlookSnapshot, SynthBundle, SynthConfig
from app.enums import OutlookIndicatorEnum
from app.exceptions import ConfigurationError
from app.features.main import Features

# Long-run level, AR coefficient, quarterly shock and outlook error scale per indicator.
INDICATOR_DYNAMICS = {
    OutlookIndicatorEnum.GDP_WW: (3.0, 0.6, 0.5, 0.15),
    OutlookIndicatorEnum.GDP_CN: (6.5, 0.7, 0.6, 0.2),
    OutlookIndicatorEnum.GDP_EU: (1.5, 0.6, 0.4, 0.12),
    OutlookIndicatorEnum.FX_RMB: (6.5, 0.9, 0.08, 0.03),
    OutlookIndicatorEnum.FX_EUR: (0.85, 0.9, 0.02, 0.008),
}
OUTLOOK_HORIZON = 4
BOOKING_NOISE = 0.3
ASP_DECAY_PER_QUARTER = 0.005
ASP_NOISE = 0.02


class Synth:
    @classmethod
    def rng(cls, seed: int, *path) -> Generator:
        return Generator(PCG64(CoreHelpers.derive_seed(seed, "datagen", *path)))

    @classmethod
    def latent_indicators(
        cls, seed: int, n_quarters: int
    ) -> dict[OutlookIndicatorEnum, np.ndarray]:
        truths = {}
        for indicator, (mean, phi, shock, _) in INDICATOR_DYNAMICS.items():
            rng = cls.rng(seed, "latent", indicator.value)
            path = np.empty(n_quarters)
            level = mean
            for i in range(n_quarters):
                level = mean + phi * (level - mean) + rng.normal(0.0, shock)
                path[i] = level
            truths[indicator] = path
        return truths

    @classmethod
    def outlook_snapshots(
        cls, seed: int, truths: dict[OutlookIndicatorEnum, np.ndarray]
    ) -> list[OutlookSnapshot]:
        """
        Outlooks for each target quarter are issued from four quarters ahead
        up to the quarter itself, with an error that shrinks as the target
        gets closer.
        """
        snapshots = []
        for indicator, path in truths.items():
            rng = cls.rng(seed, "outlook", indicator.value)
            spread = INDICATOR_DYNAMICS[indicator][3]
            for target in range(1, len(path) + 1):
                for as_of in range(max(1, target - OUTLOOK_HORIZON), target + 1):
                    error = rng.normal(0.0, spread * (target - as_of + 1))
                    snapshots.append(
                        OutlookSnapshot(
                            indicator=indicator.value,
                            as_of_quarter_seq=as_of,
                            target_quarter_seq=target,
                            value=float(path[target - 1] + error),
                        )
                    )
        return snapshots

    @classmethod
    def generate(cls, config: SynthConfig, calendar: FiscalCalendar) -> SynthBundle:
        if config.seed is None:
            raise ConfigurationError(
                "generator seed is not set", module="datagen", field="seed"
            )
        seed = config.seed
        calendar = calendar.head(config.n_years)
        stamps = calendar.week_stamps()
        n_weeks = len(stamps)
        n_quarters = len(calendar.quarters)
        logging.info(
            f"Generating {config.n_years} years ({n_weeks} weeks) for lobs {config.lobs}."
        )

        quarter_seq = np.array([s.quarter_seq for s in stamps])
        quarter = np.array([s.quarter for s in stamps])
        # Week 14 of a long quarter reuses the week 13 weight.
        profile_index = np.minimum([s.week_of_quarter for s in stamps], 13) - 1

        truths = cls.latent_indicators(seed, n_quarters)
        world_gdp = truths[OutlookIndicatorEnum.GDP_WW]
        gdp_mean = INDICATOR_DYNAMICS[OutlookIndicatorEnum.GDP_WW][0]

        growth = (1.0 + config.trend_per_quarter) ** (quarter_seq - 1)
        season = np.asarray(config.season_amplitudes)[quarter - 1]
        profile = np.asarray(config.in_quarter_profile)[profile_index]
        cny = 1.0 - config.cny_dip * Features.cny_effect(calendar).to_numpy()
        gdp = np.exp(config.gdp_sensitivity * (world_gdp[quarter_seq - 1] - gdp_mean))
        expected = growth * season * profile * cny * gdp

        sales, bookings, asp = {}, {}, {}
        for i, lob in enumerate(config.lobs):
            level = config.base_level * (1.0 + 0.25 * i)

            noise = cls.rng(seed, "sales", lob).normal(0.0, config.noise_sigma, n_weeks)
            values = level * expected * np.exp(noise)
            sales[lob] = CoreHelpers.series_from_values(lob, stamps, values)

            rng = cls.rng(seed, "booking", lob)
            s = config.booking_signal_strength
            for lead in range(1, config.max_booking_lead + 1):
                if lead >= n_weeks:
                    break
                share = 0.9 * np.exp(-0.15 * (lead - 1))
                future = values[lead:]
                eta = rng.normal(0.0, BOOKING_NOISE, future.size)
                eps = rng.normal(0.0, config.noise_sigma, future.size)
                booked = share * (s * future + (1.0 - s) * level * np.exp(eta)) * np.exp(eps)
                name = f"{lob}_backlog_{lead}"
                bookings[name] = CoreHelpers.series_from_values(
                    name, stamps[: n_weeks - lead], booked
                )

            rng = cls.rng(seed, "asp", lob)
            price = (
                100.0
                * (1.0 + 0.3 * i)
                * np.exp(-ASP_DECAY_PER_QUARTER * (quarter_seq - 1))
                * np.exp(rng.normal(0.0, ASP_NOISE, n_weeks))
            )
            name = f"{lob}_asp"
            asp[name] = CoreHelpers.series_from_values(name, stamps, price)

        return SynthBundle(
            calendar=calendar,
            sales=sales,
            bookings=bookings,
            asp=asp,
            outlook=cls.outlook_snapshots(seed, truths),
        )
