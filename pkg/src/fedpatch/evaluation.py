"""Confusion counts, balanced accuracy, and the models-by-sites matrix."""

import csv
from dataclasses import dataclass

import numpy as np

from .nn import forward


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def classify(prob: float, threshold: float = 0.5) -> int:
    """Positive iff prob >= threshold (ties go positive)."""
    return 1 if prob >= threshold else 0


def balanced_accuracy(c: ConfusionCounts) -> float:
    """Mean of sensitivity and specificity.

    When one class is absent from the evaluated set, returns the recall of
    the class that is present (so an all-negative set with no false
    positives scores 1.0).
    """
    if c.total == 0:
        raise ValueError("no samples evaluated")
    pos = c.tp + c.fn
    neg = c.tn + c.fp
    if pos == 0:
        return c.tn / neg
    if neg == 0:
        return c.tp / pos
    return 0.5 * (c.tp / pos + c.tn / neg)


def evaluate_model(weights, patch_set, threshold: float = 0.5,
                   chunk_size: int = 256):
    """Forward-pass a validation set; returns (ConfusionCounts, bacc)."""
    n = len(patch_set)
    if n == 0:
        raise ValueError("empty validation set")
    counts = ConfusionCounts()
    for start in range(0, n, chunk_size):
        pixels = patch_set.pixels[start:start + chunk_size]
        labels = patch_set.labels[start:start + chunk_size]
        probs = forward(weights, pixels)
        preds = (probs >= threshold)
        truth = labels.astype(bool)
        counts.tp += int(np.sum(preds & truth))
        counts.fp += int(np.sum(preds & ~truth))
        counts.tn += int(np.sum(~preds & ~truth))
        counts.fn += int(np.sum(~preds & truth))
    return counts, balanced_accuracy(counts)


@dataclass
class EvaluationMatrix:
    row_names: list            # model identifiers
    col_names: list            # "Site<k>" columns plus trailing "Average"
    values: np.ndarray         # (n_models, n_sites + 1)
    header_note: str = ""

    def row_average(self, name) -> float:
        return float(self.values[self.row_names.index(name), -1])

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["model"] + self.col_names)
            for name, row in zip(self.row_names, self.values):
                writer.writerow([name] + [f"{v:.6f}" for v in row])

    def to_text(self) -> str:
        name_w = max(len("Model\\Data"), max(len(n) for n in self.row_names))
        col_w = max(8, max(len(c) for c in self.col_names) + 2)
        lines = []
        if self.header_note:
            lines.append(f"# {self.header_note}")
        header = "Model\\Data".ljust(name_w)
        header += "".join(c.rjust(col_w) for c in self.col_names)
        lines.append(header)
        lines.append("-" * len(header))
        for name, row in zip(self.row_names, self.values):
            line = name.ljust(name_w)
            line += "".join(f"{v:.2f}".rjust(col_w) for v in row)
            lines.append(line)
        return "\n".join(lines) + "\n"


def build_matrix(models: dict, shards, threshold: float = 0.5) -> EvaluationMatrix:
    """Balanced accuracy of every model on every site's validation set.

    `models` maps row name -> ModelWeights; row order follows the dict.
    A trailing Average column holds each row's arithmetic mean.
    """
    if not models:
        raise ValueError("need at least one model")
    shards = sorted(shards, key=lambda s: s.site_id)
    if not shards or any(len(s.validation) == 0 for s in shards):
        raise ValueError("every shard needs a non-empty validation set")

    col_names = [f"Site{s.site_id}" for s in shards] + ["Average"]
    values = np.zeros((len(models), len(shards) + 1))
    for i, (name, weights) in enumerate(models.items()):
        for j, shard in enumerate(shards):
            try:
                _, bacc = evaluate_model(weights, shard.validation, threshold)
            except Exception as exc:
                raise RuntimeError(
                    f"evaluation failed for model {name!r} on site "
                    f"{shard.site_id}: {exc}") from exc
            values[i, j] = bacc
        values[i, -1] = values[i, :-1].mean()

    note = ""
    if any("centralized" in n for n in models):
        note = ("centralized row is an extension beyond the per-site and "
                "consensus rows")
    return EvaluationMatrix(list(models.keys()), col_names, values, note)
