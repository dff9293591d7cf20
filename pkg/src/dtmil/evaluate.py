"""Evaluation protocol, metrics, baselines and the regularizer sweep.

The cross-validation here is deliberately inverted: each fold serves as the
*training* set while the remaining k-1 folds are tested, modeling a target
domain where labeled data is scarce.  A conventional flag flips that around.
Per-fold seeds derive from (seed, fold index), so fold work is order- and
thread-independent.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import AdaptedModel, Bag, Hyperparams, SourceModel, predict, score_source, score_target
from .errors import InvalidInputError
from .learn import fit_dtc, train_source

SWEEP_CSV_HEADER = ("c1", "c2", "fold", "accuracy", "seconds")

# stream tags keeping derived seeds disjoint across uses
_SEED_SOURCE, _SEED_FIT, _SEED_TARGET_ONLY = 0, 1, 2


def derive_seed(seed: int, *parts: int) -> int:
    """Deterministic child seed for (seed, stream, fold, ...) tuples."""
    return int(np.random.SeedSequence([seed, *parts]).generate_state(1, np.uint32)[0])


@dataclass(frozen=True)
class FoldSplit:
    """Bag-id to fold-index map for k folds."""

    k: int
    assignments: dict[str, int]
    seed: int

    def members(self, fold: int) -> set[str]:
        return {bag_id for bag_id, f in self.assignments.items() if f == fold}

    def partition(self, bags: list[Bag], fold: int) -> tuple[list[Bag], list[Bag]]:
        """(bags in ``fold``, bags in every other fold), in input order."""
        inside = [bag for bag in bags if self.assignments[bag.id] == fold]
        outside = [bag for bag in bags if self.assignments[bag.id] != fold]
        return inside, outside


@dataclass
class ProtocolReport:
    """Per-fold accuracies of the adapted model and both baselines."""

    per_fold_accuracy: list[float]
    mean_accuracy: float
    per_fold_seconds: list[float]
    baseline_accuracies: dict[str, float]
    hyper: Hyperparams


def split_folds(bags: list[Bag], k: int, seed: int) -> FoldSplit:
    """Stratified fold assignment, deterministic given ``seed``.

    Bags of each class are shuffled and dealt round-robin with a shared
    position counter, so fold sizes differ by at most one and each fold's
    class ratio stays within one bag of the global ratio.
    """
    if k < 2:
        raise InvalidInputError(f"fold count must be >= 2, got {k}")
    if len(bags) < k:
        raise InvalidInputError(f"cannot split {len(bags)} bags into {k} folds")
    ids = [bag.id for bag in bags]
    if len(set(ids)) != len(ids):
        raise InvalidInputError("bag ids must be unique to assign folds")
    for bag in bags:
        if bag.label is None:
            raise InvalidInputError(f"bag {bag.id!r} is unlabeled; folds are stratified by label")

    rng = np.random.default_rng(seed)
    assignments: dict[str, int] = {}
    position = 0
    for label in (1, -1):
        group = [bag.id for bag in bags if bag.label == label]
        rng.shuffle(group)
        for bag_id in group:
            assignments[bag_id] = position % k
            position += 1
    return FoldSplit(k=k, assignments=assignments, seed=seed)


def accuracy(model: AdaptedModel | SourceModel, bags: list[Bag]) -> float:
    """Fraction of bags whose predicted label matches the true label."""
    if not bags:
        raise InvalidInputError("cannot compute accuracy on an empty bag list")
    if isinstance(model, AdaptedModel):
        score = lambda bag: score_target(bag, model)
    elif isinstance(model, SourceModel):
        score = lambda bag: score_source(bag, model)
    else:
        raise InvalidInputError(f"unsupported model type {type(model).__name__}")
    hits = 0
    for bag in bags:
        if bag.label is None:
            raise InvalidInputError(f"bag {bag.id!r} is unlabeled")
        hits += predict(score(bag)) == bag.label
    return hits / len(bags)


def _target_only_accuracy(train: list[Bag], test: list[Bag], hyper: Hyperparams, seed: int) -> float:
    labels = {bag.label for bag in train}
    if len(labels) < 2:
        # single-class fold: the from-scratch trainer has nothing to
        # separate, so the baseline predicts the lone training label
        only = labels.pop()
        return sum(bag.label == only for bag in test) / len(test)
    model = train_source(train, hyper.kappa, hyper.c1, seed)
    return accuracy(model, test)


def run_protocol(
    source: list[Bag],
    target: list[Bag],
    hyper: Hyperparams,
    k: int,
    source_model: SourceModel | None = None,
    conventional: bool = False,
    threads: int = 1,
    on_fit=None,
) -> ProtocolReport:
    """Cross-validated evaluation of adaptation against both baselines.

    For every fold: fit the adaptation on that fold alone (or on its
    complement when ``conventional``), test on the rest, and score the
    "source_only" baseline (the source model as-is) and the "target_only"
    baseline (the from-scratch trainer on the same training fold) on the
    same test bags.  ``source_model`` defaults to one trained on the full
    source set with ``hyper.kappa`` words and regularizer ``hyper.c1``.

    ``on_fit(fold, FitReport)`` is invoked after each fold's fit; folds may
    run on ``threads`` workers without changing any result.
    """
    split = split_folds(target, k, hyper.seed)
    if source_model is None:
        source_model = train_source(
            source, hyper.kappa, hyper.c1, derive_seed(hyper.seed, _SEED_SOURCE)
        )

    def run_fold(fold: int) -> tuple[float, float, float, float]:
        started = time.perf_counter()
        inside, outside = split.partition(target, fold)
        train, test = (outside, inside) if conventional else (inside, outside)
        fold_hyper = replace(hyper, seed=derive_seed(hyper.seed, _SEED_FIT, fold))
        model, report = fit_dtc(train, source_model, fold_hyper)
        if on_fit is not None:
            on_fit(fold, report)
        adapted_acc = accuracy(model, test)
        source_acc = accuracy(source_model, test)
        target_acc = _target_only_accuracy(
            train, test, hyper, derive_seed(hyper.seed, _SEED_TARGET_ONLY, fold)
        )
        return adapted_acc, source_acc, target_acc, time.perf_counter() - started

    folds = range(split.k)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_fold, folds))
    else:
        results = [run_fold(fold) for fold in folds]

    per_fold = [r[0] for r in results]
    return ProtocolReport(
        per_fold_accuracy=per_fold,
        mean_accuracy=float(np.mean(per_fold)),
        per_fold_seconds=[r[3] for r in results],
        baseline_accuracies={
            "source_only": float(np.mean([r[1] for r in results])),
            "target_only": float(np.mean([r[2] for r in results])),
        },
        hyper=hyper,
    )


def sweep(
    source: list[Bag],
    target: list[Bag],
    base_hyper: Hyperparams,
    c1_grid: list[float],
    c2_grid: list[float],
    k: int,
    seed: int,
    threads: int = 1,
) -> list[dict]:
    """Run the protocol over a (c1, c2) grid; one row per (c1, c2, fold).

    The source model is trained once from ``base_hyper`` and shared across
    all grid cells, so the sweep varies only the adaptation regularizers.
    """
    if not c1_grid or not c2_grid:
        raise InvalidInputError("c1 and c2 grids must be nonempty")
    shared_model = train_source(
        source, base_hyper.kappa, base_hyper.c1, derive_seed(seed, _SEED_SOURCE)
    )
    rows: list[dict] = []
    for c1 in c1_grid:
        for c2 in c2_grid:
            hyper = replace(base_hyper, c1=c1, c2=c2, seed=seed)
            report = run_protocol(
                source, target, hyper, k, source_model=shared_model, threads=threads
            )
            for fold in range(k):
                rows.append(
                    {
                        "c1": c1,
                        "c2": c2,
                        "fold": fold,
                        "accuracy": report.per_fold_accuracy[fold],
                        "seconds": report.per_fold_seconds[fold],
                    }
                )
    return rows


def sweep_rows_to_csv(rows: list[dict]) -> str:
    """RFC-4180 CSV text (LF line endings) for sweep output rows."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SWEEP_CSV_HEADER)
    for row in rows:
        writer.writerow([row[key] for key in SWEEP_CSV_HEADER])
    return buffer.getvalue()
