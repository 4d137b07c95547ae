"""Synthetic-set optimization loop: initialization, per-class batched
gradient descent on the composite alignment loss, and checkpointing.

Every run is fully determined by (dataset, config): initialization, batch
order, and frequency resampling all derive from one seed sequence, so
identical configs produce bit-identical synthetic sets.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .alignment import LossBreakdown, LossWeights, total_loss
from .cf_engine import (
    median_pairwise_distance,
    mmd_value_and_grad,
    sample_frequencies,
)
from .data_model import (
    PairedMultiModalDataset,
    SyntheticSet,
    read_embedding_file,
    write_embedding_file,
    EmbeddingSet,
)
from .errors import (
    ConfigError,
    DivergenceError,
    InsufficientDataError,
    NotFoundError,
    ValidationError,
)

_OPTIMIZERS = ("sgd_momentum", "adam")
_INITS = ("random", "herding")
_METRICS = ("cfd", "mmd")
_SAMPLING = ("without_replacement", "with_replacement")
_CROSS_MODES = ("cosine", "cfd")


@dataclass
class CondenseConfig:
    """All hyperparameters of a condensation run."""

    dpc: int
    iterations: int = 30
    syn_lr: float = 0.5
    optimizer: str = "sgd_momentum"
    momentum: float = 0.5
    adam_betas: tuple = (0.9, 0.999)
    real_batch: int = 128
    syn_batch: int = 32
    freq_count: int = 1024
    sigma_t: float | None = None  # None: 1 / median pairwise distance
    resample_freqs: bool = True
    weights: LossWeights = field(default_factory=LossWeights)
    init: str = "herding"
    seed: int = 0
    eval_every: int = 0
    grad_clip: float | None = 10.0
    metric: str = "cfd"  # distribution-matching term: cfd or mmd
    mmd_bandwidth: float | None = None  # None: median pairwise distance
    real_sampling: str = "without_replacement"
    cross_mode: str = "cosine"

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if isinstance(self.adam_betas, list):
            self.adam_betas = tuple(self.adam_betas)

    def validate(self, num_classes: int, num_modalities: int):
        def bad(key, why):
            raise ConfigError(f"config key {key!r}: {why}")

        if self.dpc < 1:
            bad("dpc", "must be a positive integer")
        if self.iterations < 1:
            bad("iterations", "must be a positive integer")
        if not (np.isfinite(self.syn_lr) and self.syn_lr > 0):
            bad("syn_lr", "must be finite and positive")
        if self.optimizer not in _OPTIMIZERS:
            bad("optimizer", f"must be one of {_OPTIMIZERS}")
        if not 0.0 <= self.momentum < 1.0:
            bad("momentum", "must lie in [0, 1)")
        if len(self.adam_betas) != 2 or not all(0.0 <= b < 1.0 for b in self.adam_betas):
            bad("adam_betas", "must be two values in [0, 1)")
        if self.real_batch < 1:
            bad("real_batch", "must be positive")
        if self.syn_batch < 1:
            bad("syn_batch", "must be positive")
        if self.syn_batch > self.dpc * num_classes:
            bad("syn_batch", "must not exceed dpc * num_classes")
        if self.freq_count < 1:
            bad("freq_count", "must be positive")
        if self.sigma_t is not None and not self.sigma_t > 0:
            bad("sigma_t", "must be positive when given")
        if self.init not in _INITS:
            bad("init", f"must be one of {_INITS}")
        if self.eval_every < 0:
            bad("eval_every", "must be >= 0")
        if self.grad_clip is not None and not self.grad_clip > 0:
            bad("grad_clip", "must be positive when given")
        if self.metric not in _METRICS:
            bad("metric", f"must be one of {_METRICS}")
        if self.mmd_bandwidth is not None and not self.mmd_bandwidth > 0:
            bad("mmd_bandwidth", "must be positive when given")
        if self.real_sampling not in _SAMPLING:
            bad("real_sampling", f"must be one of {_SAMPLING}")
        if self.cross_mode not in _CROSS_MODES:
            bad("cross_mode", f"must be one of {_CROSS_MODES}")
        if num_modalities < 2 and (self.weights.cross > 0 or self.weights.joint > 0):
            raise ConfigError(
                "config key 'weights.cross'/'weights.joint': must be 0 for "
                "single-modality data"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = {
            "uni": self.weights.uni,
            "cross": self.weights.cross,
            "joint": self.weights.joint,
        }
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CondenseConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        if "dpc" not in d:
            raise ConfigError("config key 'dpc' is required")
        kwargs = dict(d)
        if "weights" in kwargs and isinstance(kwargs["weights"], dict):
            wk = set(kwargs["weights"]) - {"uni", "cross", "joint"}
            if wk:
                raise ConfigError(f"unknown config key(s): {sorted('weights.' + k for k in wk)}")
        try:
            return cls(**kwargs)
        except (TypeError, ValidationError) as e:
            raise ConfigError(str(e)) from e


@dataclass
class CondenseTrace:
    """Per-iteration loss breakdowns (class-averaged) plus wall times."""

    entries: list[LossBreakdown] = field(default_factory=list)
    wall_times: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": [
                dict(e.to_dict(), iteration=i, wall_time_sec=t)
                for i, (e, t) in enumerate(zip(self.entries, self.wall_times))
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CondenseTrace":
        entries, times = [], []
        for row in d["iterations"]:
            entries.append(
                LossBreakdown(
                    uni_per_modality=list(row["uni_per_modality"]),
                    cross=row["cross"],
                    joint=row["joint"],
                    total=row["total"],
                    rho_cross=row["rho_cross"],
                    rho_joint=row["rho_joint"],
                )
            )
            times.append(row["wall_time_sec"])
        return cls(entries, times)


def _paired_class_rows(dataset: PairedMultiModalDataset, dpc: int):
    rows = []
    for c in range(dataset.num_classes):
        idx = dataset.class_indices(c)
        if len(idx) < dpc:
            raise InsufficientDataError(
                f"class {c} has {len(idx)} samples, needs at least {dpc}"
            )
        rows.append(idx)
    return rows


def _build_synthetic(dataset, dpc, selected_per_class) -> SyntheticSet:
    order = np.concatenate(selected_per_class)
    labels = np.repeat(np.arange(dataset.num_classes, dtype=np.int64), dpc)
    mats = [m.data[order].copy() for m in dataset.modalities]
    return SyntheticSet(mats, labels, dpc, dataset.num_classes, dataset.modality_names)


def init_random(dataset: PairedMultiModalDataset, dpc: int, seed) -> SyntheticSet:
    """Copy dpc uniformly sampled paired rows per class (same row indices
    across modalities, preserving pairing)."""
    class_rows = _paired_class_rows(dataset, dpc)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    selected = [rng.choice(idx, size=dpc, replace=False) for idx in class_rows]
    return _build_synthetic(dataset, dpc, selected)


def herding_indices(features: np.ndarray, dpc: int) -> list[int]:
    """Greedy kernel-herding selection over the rows of `features`.

    Start with w = class mean; repeatedly pick the unselected row maximizing
    <w, x>, then update w <- w + mean - x. Ties break toward the lowest row
    index.
    """
    mu = features.mean(axis=0)
    w = mu.copy()
    selected: list[int] = []
    taken = np.zeros(features.shape[0], dtype=bool)
    for _ in range(dpc):
        scores = features @ w
        scores[taken] = -np.inf
        pick = int(np.argmax(scores))
        selected.append(pick)
        taken[pick] = True
        w += mu - features[pick]
    return selected


def init_herding(dataset: PairedMultiModalDataset, dpc: int, seed=0) -> SyntheticSet:
    """Per class, kernel-herding selection on the concatenated multi-modal
    embedding; selected indices apply to all modalities so pairing survives.
    Deterministic; the seed parameter exists only for interface symmetry."""
    class_rows = _paired_class_rows(dataset, dpc)
    concat = np.hstack([m.data for m in dataset.modalities])
    selected = []
    for idx in class_rows:
        local = herding_indices(concat[idx], dpc)
        selected.append(idx[local])
    return _build_synthetic(dataset, dpc, selected)


class _SgdMomentum:
    """Classic momentum: v <- momentum*v + g; x <- x - lr*v. At momentum 0
    this is exactly a plain gradient step. State is kept per row."""

    def __init__(self, shapes, lr: float, momentum: float):
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros(s) for s in shapes]

    def step(self, mats, grads, rows):
        for mat, g, v in zip(mats, grads, self.velocity):
            v[rows] = self.momentum * v[rows] + g[rows]
            mat[rows] -= self.lr * v[rows]


class _Adam:
    """Adam with bias correction; per-row state, per-row step counts (a row's
    moments advance only on iterations where it was sampled)."""

    def __init__(self, shapes, lr: float, betas, eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = [np.zeros(s[0], dtype=np.int64) for s in shapes]

    def step(self, mats, grads, rows):
        for mat, g, m, v, t in zip(mats, grads, self.m, self.v, self.t):
            t[rows] += 1
            m[rows] = self.b1 * m[rows] + (1 - self.b1) * g[rows]
            v[rows] = self.b2 * v[rows] + (1 - self.b2) * g[rows] ** 2
            tc = t[rows][:, None].astype(np.float64)
            m_hat = m[rows] / (1 - self.b1**tc)
            v_hat = v[rows] / (1 - self.b2**tc)
            mat[rows] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class _ClassBatchSampler:
    """Per-class real-batch index stream: shuffled without-replacement draws
    per epoch, or i.i.d. draws with replacement."""

    def __init__(self, class_rows, batch: int, mode: str, rng: np.random.Generator):
        self.class_rows = class_rows
        self.batch = batch
        self.mode = mode
        self.rng = rng
        self.queues = [rng.permutation(idx) for idx in class_rows]
        self.pos = [0] * len(class_rows)

    def draw(self, c: int) -> np.ndarray:
        idx = self.class_rows[c]
        k = min(self.batch, len(idx))
        if self.mode == "with_replacement":
            return self.rng.choice(idx, size=k, replace=True)
        if self.pos[c] + k > len(idx):
            self.queues[c] = self.rng.permutation(idx)
            self.pos[c] = 0
        out = self.queues[c][self.pos[c] : self.pos[c] + k]
        self.pos[c] += k
        return out


def _mmd_uni_loss(real_batch, syn_batch, bandwidth, weights):
    """Distribution-matching term with the Gaussian-kernel MMD in place of
    the CF discrepancy; cross/joint terms are unaffected (they carry no
    frequency dependence)."""
    per_modality = []
    grads = []
    for r, s in zip(real_batch, syn_batch):
        value, grad = mmd_value_and_grad(r, s, bandwidth)
        per_modality.append(value)
        grads.append(weights.uni * grad)
    return float(sum(per_modality)), grads, per_modality


def _class_scale(dataset: PairedMultiModalDataset) -> float:
    """Median pairwise distance within a class, averaged over classes and
    computed on rows pooled across modalities. Matching is class-conditional,
    so this is the distance scale the discrepancies actually compare."""
    meds = []
    for c in range(dataset.num_classes):
        idx = dataset.class_indices(c)
        if len(idx) < 2:
            continue
        rows = np.vstack([m.data[idx] for m in dataset.modalities])
        meds.append(median_pairwise_distance(rows))
    scale = float(np.mean(meds)) if meds else 0.0
    return scale if scale > 0 else 1.0


def condense(
    dataset: PairedMultiModalDataset,
    config: CondenseConfig,
    eval_callback=None,
    progress=print,
):
    """Run the condensation loop; returns (SyntheticSet, CondenseTrace).

    Each iteration draws, per class, a real batch and a synthetic batch
    (shared row indices across modalities), computes the composite loss with
    gradients, reduces classes in fixed order, and applies one optimizer step
    to the sampled synthetic rows only.
    """
    n_mod = len(dataset.modalities)
    config.validate(dataset.num_classes, n_mod)

    root = np.random.SeedSequence(config.seed)
    seq_init, seq_freq, seq_real, seq_syn = root.spawn(4)

    if config.init == "random":
        syn = init_random(dataset, config.dpc, np.random.default_rng(seq_init))
    else:
        syn = init_herding(dataset, config.dpc)

    scale = None
    if config.sigma_t is None or (config.metric == "mmd" and config.mmd_bandwidth is None):
        scale = _class_scale(dataset)
    sigma_t = config.sigma_t if config.sigma_t is not None else 1.0 / scale
    bandwidth = config.mmd_bandwidth
    if config.metric == "mmd" and bandwidth is None:
        bandwidth = scale

    freq_children = seq_freq.spawn(config.iterations if config.resample_freqs else 1)
    fixed_freqs = None
    if not config.resample_freqs:
        fixed_freqs = sample_frequencies(
            dataset.dim, config.freq_count, sigma_t, freq_children[0]
        )

    rng_real = np.random.default_rng(seq_real)
    rng_syn = np.random.default_rng(seq_syn)
    sampler = _ClassBatchSampler(
        [dataset.class_indices(c) for c in range(dataset.num_classes)],
        config.real_batch,
        config.real_sampling,
        rng_real,
    )

    shapes = [m.shape for m in syn.modalities]
    if config.optimizer == "sgd_momentum":
        opt = _SgdMomentum(shapes, config.syn_lr, config.momentum)
    else:
        opt = _Adam(shapes, config.syn_lr, config.adam_betas)

    syn_class_rows = [syn.class_rows(c) for c in range(dataset.num_classes)]
    syn_take = min(config.syn_batch, config.dpc)
    trace = CondenseTrace()
    n_classes = dataset.num_classes

    for it in range(config.iterations):
        t0 = time.perf_counter()
        freqs = fixed_freqs
        if config.resample_freqs:
            freqs = sample_frequencies(
                dataset.dim, config.freq_count, sigma_t, freq_children[it]
            )

        grads_full = [np.zeros(s) for s in shapes]
        sampled_rows = []
        sums = {"uni_per_modality": np.zeros(n_mod), "cross": 0.0, "joint": 0.0,
                "total": 0.0, "rho_cross": 0.0, "rho_joint": 0.0}

        for c in range(n_classes):
            real_idx = sampler.draw(c)
            rows_c = syn_class_rows[c]
            if syn_take < config.dpc:
                rows_c = np.sort(rng_syn.choice(rows_c, size=syn_take, replace=False))
            sampled_rows.append(rows_c)

            real_mats = [m.data[real_idx] for m in dataset.modalities]
            syn_mats = [mat[rows_c] for mat in syn.modalities]

            if config.metric == "mmd":
                uni, grads_c, per_mod = _mmd_uni_loss(
                    real_mats, syn_mats, bandwidth, config.weights
                )
                cross = joint = 0.0
                rho_c = rho_j = 1.0
                if config.weights.cross > 0 or config.weights.joint > 0:
                    sub, sub_grads = total_loss(
                        real_mats,
                        syn_mats,
                        freqs,
                        LossWeights(0.0, config.weights.cross, config.weights.joint),
                        on_degenerate="zero",
                        cross_mode=config.cross_mode,
                    )
                    cross, joint = sub.cross, sub.joint
                    rho_c, rho_j = sub.rho_cross, sub.rho_joint
                    grads_c = [g + sg for g, sg in zip(grads_c, sub_grads)]
                breakdown = LossBreakdown(
                    uni_per_modality=per_mod,
                    cross=cross,
                    joint=joint,
                    total=config.weights.uni * uni
                    + config.weights.cross * cross
                    + config.weights.joint * joint,
                    rho_cross=rho_c,
                    rho_joint=rho_j,
                )
            else:
                breakdown, grads_c = total_loss(
                    real_mats,
                    syn_mats,
                    freqs,
                    config.weights,
                    on_degenerate="zero",
                    cross_mode=config.cross_mode,
                )

            for name, value in (
                ("uni", breakdown.uni),
                ("cross", breakdown.cross),
                ("joint", breakdown.joint),
                ("total", breakdown.total),
            ):
                if not np.isfinite(value):
                    raise DivergenceError(it, name)
            sums["uni_per_modality"] += np.asarray(breakdown.uni_per_modality)
            sums["cross"] += breakdown.cross
            sums["joint"] += breakdown.joint
            sums["total"] += breakdown.total
            sums["rho_cross"] += breakdown.rho_cross
            sums["rho_joint"] += breakdown.rho_joint

            for m in range(n_mod):
                if not np.all(np.isfinite(grads_c[m])):
                    raise DivergenceError(it, f"gradient[{syn.modality_names[m]}]")
                grads_full[m][rows_c] += grads_c[m]

        if config.grad_clip is not None:
            norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads_full)))
            if norm > config.grad_clip:
                scale = config.grad_clip / norm
                grads_full = [g * scale for g in grads_full]

        step_rows = np.unique(np.concatenate(sampled_rows))
        opt.step(syn.modalities, grads_full, step_rows)
        for m in range(n_mod):
            if not np.all(np.isfinite(syn.modalities[m][step_rows])):
                raise DivergenceError(it, f"synthetic[{syn.modality_names[m]}]")

        entry = LossBreakdown(
            uni_per_modality=(sums["uni_per_modality"] / n_classes).tolist(),
            cross=sums["cross"] / n_classes,
            joint=sums["joint"] / n_classes,
            total=sums["total"] / n_classes,
            rho_cross=sums["rho_cross"] / n_classes,
            rho_joint=sums["rho_joint"] / n_classes,
        )
        trace.entries.append(entry)
        trace.wall_times.append(time.perf_counter() - t0)
        if progress is not None:
            progress(
                f"iter={it} uni={entry.uni:.6g} cross={entry.cross:.6g} "
                f"joint={entry.joint:.6g} total={entry.total:.6g}"
            )
        if eval_callback is not None and config.eval_every > 0:
            if (it + 1) % config.eval_every == 0:
                eval_callback(it, syn)

    return syn, trace


def save_checkpoint(syn: SyntheticSet, trace: CondenseTrace | None, out_dir) -> Path:
    """Write the synthetic set (one EMBD file per modality), the trace JSON,
    and a checkpoint manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, mat in zip(syn.modality_names, syn.modalities):
        fname = f"syn_{name}.embd"
        write_embedding_file(EmbeddingSet(name, mat, syn.labels), out / fname)
        entries.append({"name": name, "path": fname})
    meta = {
        "format_version": 1,
        "dpc": syn.dpc,
        "num_classes": syn.num_classes,
        "modalities": entries,
        "trace": "trace.json" if trace is not None else None,
    }
    if trace is not None:
        (out / "trace.json").write_text(json.dumps(trace.to_dict(), indent=2) + "\n")
    path = out / "checkpoint.json"
    path.write_text(json.dumps(meta, indent=2) + "\n")
    return path


def load_checkpoint(ckpt_dir):
    """Inverse of :func:`save_checkpoint`; returns (SyntheticSet, trace or
    None)."""
    ckpt = Path(ckpt_dir)
    meta_path = ckpt / "checkpoint.json" if ckpt.is_dir() else ckpt
    if not meta_path.exists():
        raise NotFoundError(f"no such checkpoint: {meta_path}")
    meta = json.loads(meta_path.read_text())
    base = meta_path.parent
    mats, names, labels = [], [], None
    for entry in meta["modalities"]:
        es = read_embedding_file(base / entry["path"], modality_name=entry["name"])
        mats.append(es.data)
        names.append(entry["name"])
        labels = es.labels
    syn = SyntheticSet(mats, labels, int(meta["dpc"]), int(meta["num_classes"]), names)
    trace = None
    if meta.get("trace"):
        trace_path = base / meta["trace"]
        if not trace_path.exists():
            raise NotFoundError(f"no such trace file: {trace_path}")
        trace = CondenseTrace.from_dict(json.loads(trace_path.read_text()))
    return syn, trace
