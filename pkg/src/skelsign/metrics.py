from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass
class Metrics:
    top1: float
    top5: float
    per_class_top1: float
    per_class_top5: float
    count: int

    def as_dict(self):
        return dict(vars(self))


def topk_hits(logits, labels, k):
    """Boolean per row: label among the k largest scores.

    Ties go to the lower class index (stable sort on negated scores).
    """
    order = np.argsort(-np.asarray(logits, dtype=np.float64), axis=1, kind="stable")
    return (order[:, :k] == np.asarray(labels)[:, None]).any(axis=1)


def evaluate(logits, labels):
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    if logits.ndim != 2 or len(logits) == 0:
        raise InputError("evaluate needs a non-empty (samples, classes) matrix")
    if len(labels) != len(logits):
        raise InputError(f"{len(logits)} rows but {len(labels)} labels")
    out = {}
    for k in (1, 5):
        hits = topk_hits(logits, labels, k)
        classes = np.unique(labels)
        per_class = np.mean([hits[labels == c].mean() for c in classes])
        out[k] = (float(hits.mean()), float(per_class))
    return Metrics(out[1][0], out[5][0], out[1][1], out[5][1], len(labels))
