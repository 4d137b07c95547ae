"""Condensed-set quality measurement: linear-probe classification,
cross-modal retrieval recall, pairing-consistency statistics, and a
method-comparison harness over selection and optimization baselines.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .condenser import CondenseConfig, condense, init_herding, init_random
from .data_model import PairedMultiModalDataset, SyntheticSet
from .errors import ConfigError, InvalidRelevanceError, ValidationError

CSV_COLUMNS = [
    "method",
    "dpc",
    "seed",
    "probe_accuracy",
    "recall_a2t@1",
    "recall_a2t@5",
    "recall_a2t@10",
    "recall_t2a@1",
    "recall_t2a@5",
    "recall_t2a@10",
]

METHODS = ("random", "herding", "mmd_condense", "cfd_condense")


@dataclass
class ProbeConfig:
    """Hyperparameters of the softmax linear probe trained over frozen
    embeddings."""

    epochs: int = 200
    lr: float = 0.001
    weight_decay: float = 0.0
    batch_size: int = 64
    seed: int = 0
    input: str = "concat"  # "concat", "sum", or a modality name

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("probe epochs and batch_size must be positive")
        if not self.lr > 0:
            raise ConfigError("probe lr must be positive")
        if self.weight_decay < 0:
            raise ConfigError("probe weight_decay must be non-negative")


def _extract(source):
    """Unify dataset-like inputs into (list of matrices, labels, names)."""
    if isinstance(source, SyntheticSet):
        return list(source.modalities), source.labels, list(source.modality_names)
    if isinstance(source, PairedMultiModalDataset):
        return source.matrices(), source.labels, source.modality_names
    raise ValidationError(f"unsupported training source {type(source).__name__}")


def _features(mats, names, mode: str) -> np.ndarray:
    if mode == "concat":
        return np.hstack(mats)
    if mode == "sum":
        return np.sum(mats, axis=0)
    if mode in names:
        return mats[names.index(mode)]
    raise ConfigError(f"probe input {mode!r} is not 'concat', 'sum', or a modality name")


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_linear_probe(train, test: PairedMultiModalDataset, config: ProbeConfig) -> float:
    """Train multinomial logistic regression by mini-batch gradient descent
    on cross-entropy; returns top-1 accuracy on the test set. Deterministic
    per seed."""
    config.validate()
    tr_mats, tr_labels, tr_names = _extract(train)
    te_mats, te_labels, te_names = _extract(test)
    x_tr = _features(tr_mats, tr_names, config.input)
    x_te = _features(te_mats, te_names, config.input)
    if x_tr.shape[1] != x_te.shape[1]:
        raise ValidationError("train and test feature dims differ")

    n_classes = test.num_classes
    present = np.unique(tr_labels)
    if present.size < n_classes:
        missing = sorted(set(range(n_classes)) - set(present.tolist()))
        warnings.warn(f"classes absent from training data: {missing}", stacklevel=2)

    n, d = x_tr.shape
    w = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    onehot = np.eye(n_classes)[tr_labels]
    rng = np.random.default_rng(config.seed)

    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = x_tr[idx]
            probs = _softmax(xb @ w.T + b)
            delta = (probs - onehot[idx]) / len(idx)
            w -= config.lr * (delta.T @ xb + config.weight_decay * w)
            b -= config.lr * delta.sum(axis=0)

    pred = np.argmax(x_te @ w.T + b, axis=1)
    return float(np.mean(pred == te_labels))


def recall_at_k(query_emb, gallery_emb, relevance, k: int) -> float:
    """Fraction of queries whose top-k gallery items (by cosine similarity,
    ties broken toward the lower index) contain at least one relevant item."""
    q = np.asarray(query_emb, dtype=np.float64)
    g = np.asarray(gallery_emb, dtype=np.float64)
    rel = np.asarray(relevance, dtype=bool)
    if k < 1:
        raise ValidationError("k must be >= 1")
    if q.ndim != 2 or g.ndim != 2 or q.shape[1] != g.shape[1]:
        raise ValidationError("query and gallery must be 2-D with equal dims")
    if rel.shape != (q.shape[0], g.shape[0]):
        raise ValidationError("relevance must be (num_queries, num_gallery)")
    if not rel.any(axis=1).all():
        bad = np.flatnonzero(~rel.any(axis=1))
        raise InvalidRelevanceError(f"queries with no relevant items: {bad.tolist()}")

    qn = q / np.maximum(np.linalg.norm(q, axis=1, keepdims=True), np.finfo(float).tiny)
    gn = g / np.maximum(np.linalg.norm(g, axis=1, keepdims=True), np.finfo(float).tiny)
    sims = qn @ gn.T
    order = np.argsort(-sims, axis=1, kind="stable")
    topk = order[:, : min(k, g.shape[0])]
    hits = np.take_along_axis(rel, topk, axis=1).any(axis=1)
    return float(hits.mean())


def _mean_paired_cosine(a: np.ndarray, v: np.ndarray) -> float | None:
    """Mean over rows of cos(a_i, v_i); zero-norm rows excluded. None when no
    valid row remains."""
    na = np.linalg.norm(a, axis=1)
    nv = np.linalg.norm(v, axis=1)
    ok = (na > 0) & (nv > 0)
    if not ok.any():
        return None
    cos = np.einsum("ij,ij->i", a[ok], v[ok]) / (na[ok] * nv[ok])
    return float(cos.mean())


def cross_modal_consistency(
    real: PairedMultiModalDataset, syn: SyntheticSet
) -> np.ndarray:
    """Per class, |mean paired cosine of the real modality pair - mean paired
    cosine of the synthetic pair|, averaged over unordered modality pairs.
    Lower means the condensed set preserves the real pairing statistics.
    Classes where either side has no valid pair contribute 0."""
    if len(real.modalities) < 2 or len(syn.modalities) < 2:
        raise ValidationError("need at least two modalities")
    n_mod = len(real.modalities)
    out = np.zeros(real.num_classes)
    pairs = [(i, j) for i in range(n_mod) for j in range(i + 1, n_mod)]
    for c in range(real.num_classes):
        r_idx = real.class_indices(c)
        s_idx = syn.class_rows(c)
        vals = []
        for i, j in pairs:
            r_cos = _mean_paired_cosine(
                real.modalities[i].data[r_idx], real.modalities[j].data[r_idx]
            )
            s_cos = _mean_paired_cosine(
                syn.modalities[i][s_idx], syn.modalities[j][s_idx]
            )
            vals.append(0.0 if r_cos is None or s_cos is None else abs(r_cos - s_cos))
        out[c] = float(np.mean(vals))
    return out


@dataclass
class EvalReport:
    """Structured results of a method-comparison run."""

    full_data_accuracy_mean: float
    full_data_accuracy_std: float
    rows: list[dict]
    aggregates: list[dict]
    trace_summary: list[dict] = field(default_factory=list)

    def validate(self):
        for row in self.rows:
            if not 0.0 <= row["probe_accuracy"] <= 1.0:
                raise ValidationError(f"accuracy out of range in row {row}")
            for direction in ("a2t", "t2a"):
                ks = sorted(
                    int(c.split("@")[1])
                    for c in row
                    if c.startswith(f"recall_{direction}@")
                )
                vals = [row[f"recall_{direction}@{k}"] for k in ks]
                if any(not 0.0 <= v <= 1.0 for v in vals):
                    raise ValidationError(f"recall out of range in row {row}")
                if any(b < a - 1e-12 for a, b in zip(vals, vals[1:])):
                    raise ValidationError(f"recall not monotone in k in row {row}")
        if self.full_data_accuracy_std < 0:
            raise ValidationError("negative std")

    def to_dict(self) -> dict:
        return {
            "full_data_accuracy_mean": self.full_data_accuracy_mean,
            "full_data_accuracy_std": self.full_data_accuracy_std,
            "rows": self.rows,
            "aggregates": self.aggregates,
            "trace_summary": self.trace_summary,
        }

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in CSV_COLUMNS))
        return "\n".join(lines) + "\n"


def _condensed_for(method, dataset, dpc, seed, condense_config: CondenseConfig):
    """Build the condensed set for one comparison cell; optimization methods
    share the selection init and budgets, differing only in the matching
    metric."""
    if method == "random":
        return init_random(dataset, dpc, seed), None
    if method == "herding":
        return init_herding(dataset, dpc), None
    cfg = replace(
        condense_config,
        dpc=dpc,
        seed=seed,
        syn_batch=min(condense_config.syn_batch, dpc * dataset.num_classes),
        metric="cfd" if method == "cfd_condense" else "mmd",
    )
    syn, trace = condense(dataset, cfg, progress=None)
    return syn, trace


def retrieval_recalls(syn: SyntheticSet, ks=(1, 5, 10)) -> dict:
    """Cross-modal retrieval within the condensed set: modality 0 rows query
    modality 1 rows and vice versa; a gallery item is relevant when it shares
    the query's class label."""
    rel = syn.labels[:, None] == syn.labels[None, :]
    out = {}
    a, t = syn.modalities[0], syn.modalities[1]
    for k in ks:
        out[f"recall_a2t@{k}"] = recall_at_k(a, t, rel, k)
        out[f"recall_t2a@{k}"] = recall_at_k(t, a, rel, k)
    return out


def compare_methods(
    dataset: PairedMultiModalDataset,
    test: PairedMultiModalDataset,
    dpc_list,
    methods,
    seeds,
    condense_config: CondenseConfig | None = None,
    probe_config: ProbeConfig | None = None,
    ks=(1, 5, 10),
) -> EvalReport:
    """Evaluate each (method, dpc, seed) cell: condense, probe, and measure
    retrieval; aggregate per (method, dpc). Deterministic given the seed
    list, down to the emitted CSV bytes."""
    methods = list(methods)
    seeds = list(seeds)
    if not methods:
        raise ConfigError("methods must be non-empty")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ConfigError(f"unknown method(s): {sorted(unknown)}; choose from {METHODS}")
    if not seeds:
        raise ConfigError("need at least one seed")
    if probe_config is None:
        probe_config = ProbeConfig()
    if condense_config is None:
        condense_config = CondenseConfig(dpc=max(dpc_list))

    full_accs = [
        train_linear_probe(dataset, test, replace(probe_config, seed=s)) for s in seeds
    ]

    rows = []
    trace_summary = []
    for method in methods:
        for dpc in dpc_list:
            for seed in seeds:
                syn, trace = _condensed_for(method, dataset, dpc, seed, condense_config)
                acc = train_linear_probe(syn, test, replace(probe_config, seed=seed))
                row = {
                    "method": method,
                    "dpc": int(dpc),
                    "seed": int(seed),
                    "probe_accuracy": acc,
                }
                row.update(retrieval_recalls(syn, ks))
                rows.append(row)
                if trace is not None:
                    trace_summary.append(
                        {
                            "method": method,
                            "dpc": int(dpc),
                            "seed": int(seed),
                            "initial_total": trace.entries[0].total,
                            "final_total": trace.entries[-1].total,
                        }
                    )

    aggregates = []
    for method in methods:
        for dpc in dpc_list:
            cell = [r for r in rows if r["method"] == method and r["dpc"] == dpc]
            accs = np.array([r["probe_accuracy"] for r in cell])
            agg = {
                "method": method,
                "dpc": int(dpc),
                "probe_accuracy_mean": float(accs.mean()),
                "probe_accuracy_std": float(accs.std()),
            }
            for key in cell[0]:
                if key.startswith("recall_"):
                    agg[key + "_mean"] = float(np.mean([r[key] for r in cell]))
            aggregates.append(agg)

    report = EvalReport(
        full_data_accuracy_mean=float(np.mean(full_accs)),
        full_data_accuracy_std=float(np.std(full_accs)),
        rows=rows,
        aggregates=aggregates,
        trace_summary=trace_summary,
    )
    report.validate()
    return report


def write_report(report: EvalReport, out_dir) -> tuple[Path, Path]:
    """Write report.csv and report.json; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "report.csv"
    json_path = out / "report.json"
    csv_path.write_text(report.to_csv())
    json_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return csv_path, json_path
