# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence
import json
import logging
import os
import warnings
import numpy as np
from sklearn.metrics import roc_curve as _sk_roc_curve
from sklearn.model_selection import KFold
from .errors import ValidationError
from .tensor import deterministic, thread_count

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


logger = logging.getLogger(__name__)

DEFAULT_FAR_TARGETS = (1e-4, 1e-6)
NORM_EPS = 1e-12


@dataclass(frozen=True)
class Pair:
    ref_a: str
    ref_b: str
    label: int


@dataclass(frozen=True)
class PairList:
    """Ordered verification pairs, label 1 for same identity"""

    pairs: tuple

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @classmethod
    def parse(cls, text: str, source: str = "<pairs>") -> "PairList":
        """Parse lines of '<ref_a> <ref_b> <label>', blank lines skipped"""

        pairs = list()
        for number, line in enumerate(text.splitlines(), 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 3 or fields[2] not in ('0', '1'):
                raise ValidationError("{}:{}: expected '<a> <b> <0|1>', got "
                                      "{!r}".format(source, number, line))
            pairs.append(Pair(fields[0], fields[1], int(fields[2])))
        if not pairs:
            raise ValidationError("{}: pair list is empty".format(source))
        return cls(tuple(pairs))

    @classmethod
    def read(cls, path: str) -> "PairList":
        with open(path, "r") as file:
            return cls.parse(file.read(), path)


@dataclass(frozen=True)
class ScoredPair:
    ref_a: str
    ref_b: str
    label: int
    score: float


@dataclass(frozen=True)
class ScoreSet:
    """Genuine and impostor similarity scores

    Attributes
    ----------
    scored : tuple
        ScoredPair entries in input order, rejected pairs excluded
    rejects : tuple
        (ref_a, ref_b, reason) of pairs whose images could not be used
    """

    genuine: np.ndarray
    impostor: np.ndarray
    scored: tuple = ()
    rejects: tuple = ()

    @classmethod
    def from_scores(cls, scores: Sequence, labels: Sequence) -> "ScoreSet":
        """Score set of anonymous pairs, each named by its index"""

        scores, labels = _check_scores(scores, labels)
        scored = tuple(ScoredPair(str(i), str(i), int(label), float(score))
                       for i, (score, label)
                       in enumerate(zip(scores, labels)))
        return cls(scores[labels == 1], scores[labels == 0], scored)

    @property
    def scores(self) -> np.ndarray:
        """Scores in pair order, genuine first when the order is unknown"""

        if self.scored:
            return np.array([s.score for s in self.scored], dtype=np.float64)
        return np.concatenate([self.genuine, self.impostor])

    @property
    def labels(self) -> np.ndarray:
        if self.scored:
            return np.array([s.label for s in self.scored], dtype=np.int64)
        return np.concatenate([np.ones(self.genuine.size, dtype=np.int64),
                               np.zeros(self.impostor.size, dtype=np.int64)])

    def write(self, path: str) -> None:
        """Score file, one '<a> <b> <score>' line per scored pair"""

        with open(path, "w") as file:
            for entry in self.scored:
                file.write("{} {} {:.6f}\n".format(entry.ref_a, entry.ref_b,
                                                   entry.score))


def _check_scores(scores, labels) -> tuple:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.size != labels.size:
        raise ValueError("Got {} scores for {} labels"
                         .format(scores.size, labels.size))
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("Labels must be 0 or 1")
    if not np.isfinite(scores).all():
        raise ValueError("Scores must be finite")
    return scores, labels.astype(np.int64)


def cosine_similarity(u, v) -> float:
    """u.v / (|u| |v|), 0.0 when either vector is (near) zero"""

    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < NORM_EPS or nv < NORM_EPS:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def score_pairs(model, pairs: PairList, loader: Callable) -> ScoreSet:
    """Cosine score of every pair, each reference embedded once

    Parameters
    ----------
    model : EdgeFaceModel
        Anything with an ``embed(images)`` method
    loader : callable
        Maps a reference to a [3, side, side] image; OSError or ValueError
        marks the reference as unreadable and its pairs as rejected
    """

    refs = list(dict.fromkeys(r for p in pairs for r in (p.ref_a, p.ref_b)))
    failures = dict()

    def embed_one(ref):
        try:
            image = np.asarray(loader(ref), dtype=np.float32)
            return model.embed(image[None])[0]
        except (OSError, ValueError) as err:
            failures[ref] = str(err)
            return None

    if deterministic():
        results = [embed_one(ref) for ref in refs]
    else:
        with ThreadPoolExecutor(max_workers=thread_count()) as pool:
            results = list(pool.map(embed_one, refs))
    cache = {ref: emb for ref, emb in zip(refs, results) if emb is not None}
    scored, rejects = list(), list()
    for pair in pairs:
        missing = [r for r in (pair.ref_a, pair.ref_b) if r not in cache]
        if missing:
            rejects.append((pair.ref_a, pair.ref_b, failures[missing[0]]))
            continue
        scored.append(ScoredPair(pair.ref_a, pair.ref_b, pair.label,
                                 cosine_similarity(cache[pair.ref_a],
                                                   cache[pair.ref_b])))
    if rejects:
        warnings.warn("{} of {} pairs rejected".format(len(rejects),
                                                       len(pairs)))
    scores = np.array([s.score for s in scored], dtype=np.float64)
    labels = np.array([s.label for s in scored], dtype=np.int64)
    logger.info("Scored %d pairs with %d embeddings", len(scored), len(cache))
    return ScoreSet(scores[labels == 1], scores[labels == 0], tuple(scored),
                    tuple(rejects))


def _candidate_thresholds(scores: np.ndarray) -> tuple:
    """Midpoints of sorted unique scores plus one sentinel on each side

    Returns the candidates and the distance from each to its nearest score.
    """

    unique = np.unique(scores)
    mids = (unique[:-1] + unique[1:]) / 2
    candidates = np.concatenate([[unique[0] - 1.0], mids, [unique[-1] + 1.0]])
    margins = np.concatenate([[1.0], (unique[1:] - unique[:-1]) / 2, [1.0]])
    return candidates, margins


def _correct_counts(scores: np.ndarray, labels: np.ndarray,
                    thresholds: np.ndarray) -> np.ndarray:
    """Pairs classified right when accepting score >= threshold"""

    genuine = np.sort(scores[labels == 1])
    impostor = np.sort(scores[labels == 0])
    accepted = genuine.size - np.searchsorted(genuine, thresholds, 'left')
    rejected = np.searchsorted(impostor, thresholds, 'left')
    return accepted + rejected


def best_threshold(scores, labels) -> float:
    """Threshold with the most correct decisions

    Ties go to the candidate furthest from any score, then to the lowest.
    """

    scores, labels = _check_scores(scores, labels)
    if scores.size == 0:
        raise ValueError("Cannot choose a threshold without scores")
    candidates, margins = _candidate_thresholds(scores)
    correct = _correct_counts(scores, labels, candidates)
    # lexsort keys go last-primary
    order = np.lexsort((candidates, -margins, -correct))
    return float(candidates[order[0]])


def kfold_accuracy(scores, labels, k: int = 10) -> tuple:
    """Contiguous k-fold verification accuracy

    For every fold the threshold is chosen on the other folds (on the fold
    itself when k is 1) and the fold is scored with it.

    Returns
    -------
    tuple
        (mean accuracy, list of fold accuracies, threshold on all scores)
    """

    scores, labels = _check_scores(scores, labels)
    if not 1 <= k <= scores.size:
        raise ValueError("Fold count must be in [1, {}], got {}"
                         .format(scores.size, k))
    index = np.arange(scores.size)
    splits = [(index, index)] if k == 1 else KFold(n_splits=k).split(index)
    folds = list()
    for train, test in splits:
        threshold = best_threshold(scores[train], labels[train])
        correct = _correct_counts(scores[test], labels[test],
                                  np.array([threshold]))[0]
        folds.append(correct / test.size)
    return float(np.mean(folds)), folds, best_threshold(scores, labels)


@dataclass(frozen=True)
class TarAtFar:
    """Operating point for one false-accept target

    floor is set when the target is below 1 / #impostors, the threshold then
    sits strictly above the highest impostor score.
    """

    far_target: float
    threshold: float
    tar: float
    far: float
    floor: bool


def tar_at_far(score_set: ScoreSet,
               far_targets: Sequence = DEFAULT_FAR_TARGETS) -> dict:
    """TAR at the smallest score threshold meeting each FAR target

    Candidate thresholds are the observed scores; a score is accepted when
    it is >= the threshold.
    """

    genuine = np.sort(np.asarray(score_set.genuine, dtype=np.float64))
    impostor = np.sort(np.asarray(score_set.impostor, dtype=np.float64))
    if genuine.size == 0:
        raise ValueError("No genuine scores, TAR is undefined")
    if impostor.size == 0:
        raise ValueError("No impostor scores, FAR is undefined")
    candidates = np.unique(np.concatenate([genuine, impostor]))
    false_accepts = impostor.size - np.searchsorted(impostor, candidates,
                                                    'left')
    points = dict()
    for target in far_targets:
        if not 0.0 <= target <= 1.0:
            raise ValueError("FAR target must be in [0, 1], got {}"
                             .format(target))
        meets = false_accepts <= target * impostor.size
        if meets.any():
            threshold = float(candidates[np.argmax(meets)])
        else:
            threshold = float(np.nextafter(impostor[-1], np.inf))
        accepted = genuine.size - np.searchsorted(genuine, threshold, 'left')
        accepted_impostors = impostor.size - np.searchsorted(impostor,
                                                             threshold,
                                                             'left')
        floor = target < 1.0 / impostor.size
        if floor:
            warnings.warn("FAR target {:g} is below 1/{} impostor scores"
                          .format(target, impostor.size))
        points[target] = TarAtFar(target, threshold,
                                  accepted / genuine.size,
                                  accepted_impostors / impostor.size, floor)
    return points


def roc_curve(score_set: ScoreSet) -> list:
    """(FAR, TAR) points over every score threshold, FAR ascending"""

    if score_set.genuine.size == 0 or score_set.impostor.size == 0:
        raise ValueError("ROC needs both genuine and impostor scores")
    far, tar, _ = _sk_roc_curve(score_set.labels, score_set.scores,
                                drop_intermediate=False)
    return [(float(f), float(t)) for f, t in zip(far, tar)]


def _g9(value: float) -> float:
    return float("{:.9g}".format(value))


def _far_key(far: float) -> str:
    return "{:g}".format(far)


@dataclass
class VerificationReport:
    accuracy: float
    best_threshold: float
    folds: list
    roc: list
    tar_at_far: dict
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        """Report keys in the documented order, floats at 9 digits

        ``tar_at_far`` maps each FAR target to its TAR; thresholds, achieved
        FAR and the floor flag of each target are under ``tar_details``.
        """

        return {
            'accuracy': _g9(self.accuracy),
            'best_threshold': _g9(self.best_threshold),
            'folds': [_g9(value) for value in self.folds],
            'roc': [[_g9(far), _g9(tar)] for far, tar in self.roc],
            'tar_at_far': {_far_key(far): _g9(p.tar)
                           for far, p in self.tar_at_far.items()},
            'flags': list(self.flags),
            'tar_details': {_far_key(far): {'threshold': _g9(p.threshold),
                                            'far': _g9(p.far),
                                            'floor': p.floor}
                            for far, p in self.tar_at_far.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def write(self, path: str) -> None:
        with open(path, "w") as file:
            file.write(self.to_json())


def evaluate(score_set: ScoreSet, folds: int = 10,
             far_targets: Sequence = DEFAULT_FAR_TARGETS
             ) -> VerificationReport:
    """K-fold accuracy, ROC and TAR@FAR of a score set"""

    accuracy, fold_accuracy, threshold = kfold_accuracy(
        score_set.scores, score_set.labels, folds)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        points = tar_at_far(score_set, far_targets)
    flags = ["insufficient_impostors_far_{}".format(_far_key(far))
             for far, p in points.items() if p.floor]
    if score_set.rejects:
        flags.append("rejected_pairs_{}".format(len(score_set.rejects)))
    return VerificationReport(accuracy, threshold, fold_accuracy,
                              roc_curve(score_set), points, flags)


def image_loader(root: str, reader: Callable) -> Callable:
    """Resolve references relative to root and decode them with reader"""

    def load(ref: str):
        return reader(ref if os.path.isabs(ref) else os.path.join(root, ref))
    return load
