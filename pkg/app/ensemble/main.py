import itertools
import logging
from math import comb
import numpy as np
import ruptures as rpt
from joblib import Parallel, delayed
from numpy.random import PCG64, Generator
from app.core.helpers import CoreHelpers
from app.core.main import Core
from app.enums import CellStatusEnum, LearnerKindEnum
from app.ensemble.helpers import CumulativeL2Cost
from app.ensemble.schemas import (
    CandidateRanking,
    CandidateSet,
    ChangePoint,
    EnsembleMember,
    EnsembleModel,
    RankedCandidate,
    SearchConfig,
    SearchResult,
    SubsetGeneration,
)
from app.exceptions import ConfigurationError, ContractViolation, DomainError, ForecastError
from app.features.schemas import FeatureTable
from app.learners.main import Learners
from app.learners.schemas import ModelSpec

# Robust scale of a normal sample from its median absolute deviation.
MAD_SCALE = 0.6745
# Share of the curve's sum of squares a change in mean must remove to count.
MIN_CHANGE_SHARE = 0.8


class Ensemble:
    @classmethod
    def enumerate_subsets(
        cls,
        variables: list[str],
        k_min: int,
        k_max: int = None,
        cap: int = 2000,
        seed: int = 0,
        always_include: list[str] = None,
    ) -> list[tuple[str, ...]]:
        """
        Every subset with k_min..k_max variables when there are at most cap of
        them, otherwise cap distinct subsets drawn uniformly from that family.
        Subsets keep the order of variables.
        """
        always_include = list(always_include or [])
        unknown = [v for v in always_include if v not in variables]
        if unknown:
            raise ConfigurationError(
                f"always_include names unknown variables {unknown}",
                module="ensemble",
                field="always_include",
            )
        k_max = len(variables) if k_max is None else min(k_max, len(variables))
        if k_min < 1 or k_min > len(variables) or k_min > k_max:
            raise ConfigurationError(
                f"subset sizes {k_min}..{k_max} do not fit {len(variables)} variables",
                module="ensemble",
                field="k_min",
            )
        if len(always_include) > k_max:
            raise ConfigurationError(
                f"{len(always_include)} forced variables exceed k_max={k_max}",
                module="ensemble",
                field="always_include",
            )

        pool = [v for v in variables if v not in always_include]
        forced = len(always_include)
        sizes = list(range(max(k_min, forced), k_max + 1))
        counts = [comb(len(pool), k - forced) for k in sizes]
        order = {v: i for i, v in enumerate(variables)}

        def arrange(chosen) -> tuple[str, ...]:
            return tuple(sorted([*always_include, *chosen], key=order.get))

        if sum(counts) <= cap:
            return [
                arrange(chosen)
                for k in sizes
                for chosen in itertools.combinations(pool, k - forced)
            ]

        rng = Generator(PCG64(CoreHelpers.derive_seed(seed, "ensemble", "subsets")))
        weights = np.array(counts, dtype=float) / float(sum(counts))
        seen, subsets = set(), []
        while len(subsets) < cap:
            k = sizes[rng.choice(len(sizes), p=weights)]
            picked = rng.choice(len(pool), size=k - forced, replace=False)
            subset = arrange(pool[i] for i in picked)
            if subset not in seen:
                seen.add(subset)
                subsets.append(subset)
        return subsets

    @classmethod
    def candidate_set(
        cls,
        kind: LearnerKindEnum,
        variables: list[str],
        generation: SubsetGeneration,
        lead_time: int,
        hyperparams: dict = None,
    ) -> CandidateSet:
        subsets = cls.enumerate_subsets(
            variables,
            generation.k_min,
            generation.k_max,
            generation.cap,
            generation.seed,
            generation.always_include,
        )
        specs = []
        for subset in subsets:
            spec = ModelSpec(
                kind=kind,
                variables=subset,
                hyperparams=hyperparams or {},
                lead_time=lead_time,
            )
            # Seeds derive from the spec hash, not the position in the candidate list.
            seed = CoreHelpers.derive_seed(generation.seed, "candidate", spec.spec_hash)
            specs.append(spec.model_copy(update={"seed": seed}))
        return CandidateSet(specs=specs, generation=generation)

    @classmethod
    def score(
        cls, spec: ModelSpec, train_table: FeatureTable, val_tables: list[FeatureTable]
    ) -> RankedCandidate:
        try:
            model = Learners.fit(spec, train_table)
            predicted = np.concatenate([Learners.predict(model, t) for t in val_tables])
            actual = np.concatenate([t.y for t in val_tables])
            return RankedCandidate(
                spec=model.spec, mape=Core.mape(predicted, actual), model=model
            )
        except (ForecastError, ValueError, ArithmeticError, np.linalg.LinAlgError) as error:
            logging.debug(f"Candidate {spec.spec_hash} failed: {error}")
            return RankedCandidate(
                spec=spec, mape=np.inf, status=CellStatusEnum.FAILED, error=str(error)
            )

    @classmethod
    def evaluate_candidates(
        cls,
        candidates: CandidateSet,
        train_table: FeatureTable,
        val_tables: FeatureTable | list[FeatureTable],
        workers: int = 1,
        retain_models: int = 0,
    ) -> CandidateRanking:
        """
        Fit and score every candidate. The fitted models of the retain_models
        best candidates stay attached to the ranking so the ensemble does not
        refit them, all others are dropped as results arrive.
        """
        if isinstance(val_tables, FeatureTable):
            val_tables = [val_tables]
        logging.info(
            f"Evaluating {len(candidates)} candidates on {len(train_table)} training rows "
            f"with {workers} workers."
        )
        results = Parallel(n_jobs=workers, return_as="generator")(
            delayed(cls.score)(spec, train_table, val_tables) for spec in candidates.specs
        )

        scored, kept = [], []
        for candidate in results:
            scored.append(candidate)
            if candidate.model is None:
                continue
            kept.append(candidate)
            if len(kept) > retain_models:
                worst = max(kept, key=lambda c: (c.mape, c.spec.spec_hash))
                worst.model = None
                kept.remove(worst)

        failed = [c for c in scored if c.status == CellStatusEnum.FAILED]
        ranked = sorted(
            (c for c in scored if c.status == CellStatusEnum.OK),
            key=lambda c: (c.mape, c.spec.spec_hash),
        )
        if failed:
            logging.warning(f"{len(failed)} of {len(scored)} candidate fits failed.")
        if not ranked:
            raise DomainError(
                f"all {len(scored)} candidates failed, first error: {failed[0].error}",
                module="ensemble",
                field="candidates",
            )
        return CandidateRanking(ranked=ranked, failed=failed)

    @classmethod
    def change_point_M(
        cls, sorted_mapes, mape_threshold: float = None, min_models: int = 5
    ) -> ChangePoint:
        """
        Ensemble size from the sorted validation MAPE curve.

        PELT looks for changes in mean on the whole curve after removing its
        median slope. Each change pays the larger of 2 sigma^2 ln n, with sigma
        the robust first-difference scale, and MIN_CHANGE_SHARE of the curve's
        sum of squares, so the smooth rise inside a sorted block is never cut.
        M is the first change (min_models when there is none) clipped to the
        entries at or below the threshold (2x the best by default). Lowering
        the threshold therefore never raises M.
        """
        curve = np.asarray(sorted_mapes, dtype=float)
        if curve.size == 0:
            raise ContractViolation(
                "MAPE curve is empty", module="ensemble", field="sorted_mapes"
            )
        if np.any(np.diff(curve) < 0):
            raise ContractViolation(
                "MAPE curve is not sorted ascending", module="ensemble", field="sorted_mapes"
            )

        threshold = 2.0 * curve[0] if mape_threshold is None else float(mape_threshold)
        survivors = int(np.sum(curve <= threshold))
        if survivors == 0:
            logging.warning(
                f"No candidate is below the MAPE threshold {threshold}, using the full curve."
            )
            survivors = curve.size

        n = curve.size
        if n < 2:
            return ChangePoint(M=1, threshold=threshold, survivors=survivors, fallback=True)

        diffs = np.diff(curve)
        slope = np.median(diffs)
        signal = curve - slope * np.arange(n)

        scale = max(float(np.ptp(curve)), float(np.abs(curve).max()), 1e-12)
        sigma = np.median(np.abs(diffs - slope)) / (MAD_SCALE * np.sqrt(2))
        if sigma <= 1e-9 * scale:
            sigma = np.std(diffs) / np.sqrt(2)
        sigma = max(sigma, 1e-6 * scale)
        total = float(np.sum((signal - signal.mean()) ** 2))
        penalty = max(2 * sigma**2 * np.log(n), MIN_CHANGE_SHARE * total)

        breakpoints = (
            rpt.Pelt(custom_cost=CumulativeL2Cost(), min_size=1, jump=1)
            .fit(signal.reshape(-1, 1))
            .predict(pen=penalty)
        )
        changes = [b for b in breakpoints if b < n]
        if changes:
            M, fallback = changes[0], False
        else:
            M, fallback = min(min_models, n), True
        logging.debug(f"Change point M={M} from breakpoints {breakpoints}, penalty {penalty:.3g}.")
        return ChangePoint(
            M=int(min(max(M, 1), survivors)),
            threshold=threshold,
            survivors=survivors,
            breakpoints=[int(b) for b in breakpoints],
            penalty=float(penalty),
            fallback=fallback,
        )

    @classmethod
    def build_ensemble(
        cls,
        ranked: CandidateRanking | list[RankedCandidate],
        M: int,
        train_table: FeatureTable,
        val_tables: FeatureTable | list[FeatureTable],
        workers: int = 1,
        train_window_id: str = "",
    ) -> EnsembleModel:
        if isinstance(ranked, CandidateRanking):
            ranked = ranked.ranked
        if isinstance(val_tables, FeatureTable):
            val_tables = [val_tables]
        if M < 1 or M > len(ranked):
            raise ContractViolation(
                f"ensemble size {M} is outside 1..{len(ranked)}", module="ensemble", field="M"
            )

        top = ranked[:M]
        missing = [c for c in top if c.model is None]
        refits = iter(
            Parallel(n_jobs=workers)(
                delayed(Learners.fit)(c.spec, train_table, train_window_id) for c in missing
            )
        )
        models = [
            next(refits)
            if c.model is None
            else c.model.model_copy(update={"train_window_id": train_window_id})
            for c in top
        ]
        logging.debug(f"Ensemble reuses {M - len(missing)} fitted members and refits {len(missing)}.")
        members = [
            EnsembleMember(model=model, validation_mape=c.mape)
            for model, c in zip(models, top)
        ]
        ensemble = EnsembleModel(
            kind=top[0].spec.kind, members=members, M=M, mape0=0.0
        )
        predicted = np.concatenate([cls.ensemble_predict(ensemble, t) for t in val_tables])
        actual = np.concatenate([t.y for t in val_tables])
        return ensemble.model_copy(update={"mape0": Core.mape(predicted, actual)})

    @classmethod
    def member_predictions(cls, ensemble: EnsembleModel, table: FeatureTable) -> np.ndarray:
        return np.vstack([Learners.predict(m.model, table) for m in ensemble.members])

    @classmethod
    def ensemble_predict(cls, ensemble: EnsembleModel, table: FeatureTable) -> np.ndarray:
        if not ensemble.members:
            raise ContractViolation(
                "ensemble has no members", module="ensemble", field="members"
            )
        return cls.member_predictions(ensemble, table).mean(axis=0)

    @classmethod
    def search(
        cls,
        kind: LearnerKindEnum,
        train_table: FeatureTable,
        val_tables: FeatureTable | list[FeatureTable],
        config: SearchConfig,
        seed: int,
        workers: int = 1,
        variables: list[str] = None,
        train_window_id: str = "",
    ) -> SearchResult:
        generation = SubsetGeneration(
            k_min=config.k_min,
            k_max=config.k_max,
            cap=config.cap,
            seed=CoreHelpers.derive_seed(seed, "search", kind.value),
            always_include=config.always_include,
        )
        candidates = cls.candidate_set(
            kind,
            variables or train_table.variables,
            generation,
            train_table.lead_time,
            config.learners.for_kind(kind),
        )
        ranking = cls.evaluate_candidates(
            candidates, train_table, val_tables, workers, config.retain_models
        )

        threshold = config.mape_threshold
        if threshold is None:
            threshold = config.threshold_factor * ranking.ranked[0].mape
        change_point = cls.change_point_M(ranking.mapes, threshold, config.min_models)

        ensemble = cls.build_ensemble(
            ranking, change_point.M, train_table, val_tables, workers, train_window_id
        )
        logging.info(
            f"{kind.value} ensemble of {ensemble.M} from {len(ranking.ranked)} candidates, "
            f"best MAPE {ranking.ranked[0].mape:.3f}, ensemble MAPE {ensemble.mape0:.3f}."
        )
        return SearchResult(ensemble=ensemble, ranking=ranking, change_point=change_point)
