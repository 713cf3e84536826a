"""
Group confusion rates, the two odds-based fairness metrics and accuracy.
Favorable outcome is label 1; group 1 is the protected predicate's
positive side.
"""
import logging
from dataclasses import dataclass

import numpy as np

from algorithms.trainers import TrainedModel, predict
from core.errors import FairnessError

logger = logging.getLogger(__name__)

DENOMINATORS = ("conditioned", "group")


@dataclass(frozen=True)
class GroupRates:
    tpr0: float
    fpr0: float
    tpr1: float
    fpr1: float
    n0: int
    n1: int
    pos0: int
    pos1: int
    neg0: int
    neg1: int
    degenerate: bool = False

    def swapped(self) -> "GroupRates":
        """Same rates with the group indices exchanged."""
        return GroupRates(self.tpr1, self.fpr1, self.tpr0, self.fpr0, self.n1, self.n0,
                          self.pos1, self.pos0, self.neg1, self.neg0, self.degenerate)


def _rate(hits: int, denom: int) -> float:
    return hits / denom if denom > 0 else 0.0


def group_rates_from_predictions(pred, labels, protected,
                                 denominator: str = "conditioned") -> GroupRates:
    """
    TPR/FPR per group. With denominator="conditioned" the rates divide by the
    group's positives / negatives; "group" divides both by the group size.
    A group with no positives (or no negatives) gets that rate fixed to 0
    and the degenerate flag set.
    """
    if denominator not in DENOMINATORS:
        raise ValueError(f"denominator must be one of {DENOMINATORS}, got '{denominator}'")
    pred = np.asarray(pred).astype(bool)
    y = np.asarray(labels).astype(bool)
    g = np.asarray(protected).astype(bool)
    if not (pred.shape == y.shape == g.shape):
        raise ValueError("pred, labels and protected must have the same length")

    counts = {}
    degenerate = False
    for i, members in ((0, ~g), (1, g)):
        n = int(members.sum())
        if n == 0:
            raise FairnessError(f"protected group {i} is absent from the validation data")
        pos = int((members & y).sum())
        neg = n - pos
        tp = int((members & y & pred).sum())
        fp = int((members & ~y & pred).sum())
        if pos == 0 or neg == 0:
            degenerate = True
        if denominator == "conditioned":
            tpr, fpr = _rate(tp, pos), _rate(fp, neg)
        else:
            tpr = _rate(tp, n) if pos else 0.0
            fpr = _rate(fp, n) if neg else 0.0
        counts[i] = (tpr, fpr, n, pos, neg)

    if degenerate:
        logger.debug("degenerate group rates: %s", counts)
    (tpr0, fpr0, n0, pos0, neg0), (tpr1, fpr1, n1, pos1, neg1) = counts[0], counts[1]
    return GroupRates(tpr0, fpr0, tpr1, fpr1, n0, n1, pos0, pos1, neg0, neg1, degenerate)


def group_rates(model: TrainedModel, val, denominator: str = "conditioned") -> GroupRates:
    if len(val) == 0:
        raise FairnessError("validation data is empty")
    return group_rates_from_predictions(predict(model, val.rows), val.labels, val.protected,
                                        denominator)


def eod(r: GroupRates) -> float:
    return abs(r.tpr0 - r.tpr1)


def aod(r: GroupRates) -> float:
    return (abs(r.tpr0 - r.tpr1) + abs(r.fpr0 - r.fpr1)) / 2.0


def accuracy_from_predictions(pred, labels) -> float:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    if pred.size == 0:
        raise FairnessError("accuracy is undefined on an empty set")
    return float(np.mean(pred == labels))


def accuracy(model: TrainedModel, val) -> float:
    return accuracy_from_predictions(predict(model, val.rows), val.labels)
