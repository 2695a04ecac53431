"""File formats: dataset CSV contract and results serialization.

Dataset CSV contract (version v1)::

    #semicp,v1,K=<int>,features=<int>
    label,p_0,...,p_{K-1}[,z_0,...,z_{K-1}][,f_0,...,f_{D-1}]
    <one sample per row>

* ``label`` is an integer in {-1, 0..K-1}; -1 marks an unlabeled sample.
* ``p_*`` columns are softmax probabilities.  They may be omitted when
  ``z_*`` logit columns are present; probabilities are then computed by a
  softmax at temperature 1.
* ``f_*`` columns are an optional feature vector of dimension ``features``.
* Floats are written with 17 significant digits, so save -> load is exact.

Results files carry one record per (method, configuration) with the fields
method, score, n, N, alpha, trials, cov_gap, over_cov_gap, under_cov_gap,
avg_size, improvement, histogram (plus mean_coverage and, for conditional
modes, group_cov_gap).  JSON keeps that key order; CSV uses one column per
field with the histogram encoded as '|'-joined bin counts.
"""

import json

import numpy as np

from .calibration import Threshold
from .dataset import ProbabilityDataset
from .errors import DataError
from .scores import PROB_SUM_TOL

MAGIC_PREFIX = "#semicp,v1,"

RESULT_FIELDS = ("method", "score", "n", "N", "alpha", "trials", "cov_gap",
                 "over_cov_gap", "under_cov_gap", "avg_size", "improvement",
                 "histogram", "mean_coverage", "group_cov_gap")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def save_dataset(dataset: ProbabilityDataset, path):
    k = dataset.n_classes
    cols = ["label"] + [f"p_{j}" for j in range(k)]
    if dataset.logits is not None:
        cols += [f"z_{j}" for j in range(k)]
    feat_dim = 0 if dataset.features is None else dataset.features.shape[1]
    cols += [f"f_{j}" for j in range(feat_dim)]

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#semicp,v1,K={k},features={feat_dim}\n")
        fh.write(",".join(cols) + "\n")
        for i in range(len(dataset)):
            parts = [str(int(dataset.labels[i]))]
            parts += [_fmt(v) for v in dataset.probs[i]]
            if dataset.logits is not None:
                parts += [_fmt(v) for v in dataset.logits[i]]
            if dataset.features is not None:
                parts += [_fmt(v) for v in dataset.features[i]]
            fh.write(",".join(parts) + "\n")


def _parse_magic(line: str, path):
    if not line.startswith(MAGIC_PREFIX):
        raise DataError(f"{path}: missing '#semicp,v1' magic line")
    k = feat = None
    for part in line[len(MAGIC_PREFIX):].strip().split(","):
        if part.startswith("K="):
            k = int(part[2:])
        elif part.startswith("features="):
            feat = int(part[9:])
    if k is None or feat is None or k < 2 or feat < 0:
        raise DataError(f"{path}: malformed magic line {line.strip()!r}")
    return k, feat


def load_dataset(path) -> ProbabilityDataset:
    """Load and validate a dataset file following the CSV contract."""
    try:
        return _load_dataset(path)
    except OSError as exc:
        raise DataError(f"cannot read dataset: {exc}") from None


def _load_dataset(path) -> ProbabilityDataset:
    with open(path, "r", encoding="utf-8") as fh:
        magic = fh.readline()
        k, feat_dim = _parse_magic(magic, path)
        header = fh.readline().strip().split(",")
        have_probs = "p_0" in header
        have_logits = "z_0" in header
        if not have_probs and not have_logits:
            raise DataError(f"{path}: neither probability nor logit columns present")
        expected = ["label"]
        if have_probs:
            expected += [f"p_{j}" for j in range(k)]
        if have_logits:
            expected += [f"z_{j}" for j in range(k)]
        expected += [f"f_{j}" for j in range(feat_dim)]
        if header != expected:
            raise DataError(f"{path}: header {header} does not match the "
                            f"declared channels {expected}")

        n_cols = len(expected)
        labels, probs, logits, features = [], [], [], []
        for row_idx, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != n_cols:
                raise DataError(f"{path} row {row_idx}: expected {n_cols} "
                                f"columns, got {len(parts)}")
            try:
                values = [float(v) for v in parts]
            except ValueError as exc:
                raise DataError(f"{path} row {row_idx}: {exc}") from None
            if not all(np.isfinite(values)):
                raise DataError(f"{path} row {row_idx}: non-finite value")
            label = int(values[0])
            if label != values[0] or not -1 <= label < k:
                raise DataError(f"{path} row {row_idx}: label {values[0]} "
                                f"outside {{-1, 0..{k - 1}}}")
            pos = 1
            if have_probs:
                row = np.array(values[pos:pos + k])
                if np.any(row < 0) or abs(row.sum() - 1.0) > PROB_SUM_TOL:
                    raise DataError(f"{path} row {row_idx}: invalid probability "
                                    f"row (sum={row.sum():.8f})")
                probs.append(row)
                pos += k
            if have_logits:
                logits.append(np.array(values[pos:pos + k]))
                pos += k
            if feat_dim:
                features.append(np.array(values[pos:pos + feat_dim]))
            labels.append(label)

    if not labels:
        raise DataError(f"{path}: no data rows")
    logit_arr = np.vstack(logits) if have_logits else None
    if have_probs:
        prob_arr = np.vstack(probs)
    else:
        z = logit_arr - logit_arr.max(axis=1, keepdims=True)
        e = np.exp(z)
        prob_arr = e / e.sum(axis=1, keepdims=True)
    return ProbabilityDataset(
        probs=prob_arr,
        labels=np.array(labels, dtype=np.int64),
        logits=logit_arr,
        features=np.vstack(features) if feat_dim else None,
    )


def _ordered_record(record: dict) -> dict:
    out = {}
    for key in RESULT_FIELDS:
        if key in record:
            out[key] = record[key]
    for key in record:
        if key not in out:
            out[key] = record[key]
    return out


def write_results(records, path, fmt: str = "json"):
    """Write experiment result records with deterministic field order."""
    records = [_ordered_record(r) for r in records]
    if fmt == "json":
        payload = {"schema": "semicp-results-v1", "results": records}
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        return
    if fmt != "csv":
        raise DataError(f"unknown results format {fmt!r}")
    columns = list(RESULT_FIELDS)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for rec in records:
            cells = []
            for col in columns:
                val = rec.get(col)
                if val is None:
                    cells.append("")
                elif col == "histogram":
                    cells.append("|".join(str(int(c)) for c in val))
                elif isinstance(val, float):
                    cells.append(_fmt(val))
                else:
                    cells.append(str(val))
            fh.write(",".join(cells) + "\n")


def save_threshold(threshold: Threshold, path, extra: dict = None):
    payload = threshold.to_dict()
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_threshold(path) -> Threshold:
    with open(path, "r", encoding="utf-8") as fh:
        return Threshold.from_dict(json.load(fh))
