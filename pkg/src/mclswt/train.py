"""Training loop with mirror augmentation, fused evaluation, and benchmarks.

Every training step doubles the sampled batch with channel-mirrored copies,
classifies all 2B signals, and adds the contrastive term over the pair list.
Evaluation always fuses the prediction on a trial with the class-swapped
prediction on its mirror.  The module also houses the analytic attention
FLOP estimates, wall-clock scaling probes, the hyperparameter sweep, and an
inference benchmark.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import TrialSet
from .errors import ConfigurationError, NumericError
from .losses import (LossBreakdown, MclWeights, breakdown, cross_entropy,
                     mirror_contrastive_loss, pair_distance_stats, total_loss)
from .mirror import ChannelMirrorMap, build_pairs, default_mirror_map, mirror_trial
from .model import (ModelParams, SwtConfig, forward, fuse_mirror_predictions,
                    init_model, windowed_attention)
from .optim import Adam
from .preprocess import Trial
from .tensor import Tensor, no_grad


@dataclass
class TrainConfig:
    """Optimization settings; defaults follow the reference training recipe."""

    batch_size: int = 100
    max_epochs: int = 500
    lr: float = 1e-3
    weight_decay: float = 0.05
    w_o: float = 0.2
    w_m: float = 0.3
    margin: float | None = None
    normalize_pairs: bool = True
    seed: int = 0
    eval_every: int = 1
    divergence_guard: float = 100.0
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigurationError(
                f"batch_size must be >= 2 (pair terms need two samples), "
                f"got {self.batch_size}"
            )
        if self.max_epochs < 1:
            raise ConfigurationError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.eval_every < 1:
            raise ConfigurationError(f"eval_every must be >= 1, got {self.eval_every}")

    def mcl_weights(self) -> MclWeights:
        return MclWeights(w_o=self.w_o, w_m=self.w_m, margin=self.margin)


@dataclass
class EpochRecord:
    epoch: int
    l_c: float
    l_d: float
    l_total: float
    test_accuracy: float | None
    test_kappa: float | None
    seconds: float


@dataclass
class MetricsReport:
    """Per-epoch series plus the three summary statistics."""

    epochs: list[EpochRecord] = field(default_factory=list)
    status: str = "ok"  # "ok" | "diverged"

    def _evaluated(self) -> list[EpochRecord]:
        return [r for r in self.epochs if r.test_accuracy is not None]

    def summary(self) -> dict:
        seen = self._evaluated()
        out = {
            "status": self.status,
            "n_epochs": len(self.epochs),
            "max_accuracy": None,
            "mean_accuracy_last_100": None,
            "accuracy_at_min_train_loss": None,
        }
        if not seen:
            return out
        out["max_accuracy"] = max(r.test_accuracy for r in seen)
        tail = [r for r in seen if r.epoch > len(self.epochs) - 100]
        out["mean_accuracy_last_100"] = float(np.mean([r.test_accuracy for r in tail]))
        best = min(seen, key=lambda r: r.l_total)
        out["accuracy_at_min_train_loss"] = best.test_accuracy
        return out


@dataclass
class EvalResult:
    accuracy: float
    kappa: float
    confusion: np.ndarray
    n_trials: int


def _stack_inputs(trials: list[Trial]) -> np.ndarray:
    """Trials [T,C] -> model input [B,1,T,C]."""
    return np.stack([t.x for t in trials])[:, None, :, :]


def _train_step(p: ModelParams, originals: list[Trial],
                mirror_map: ChannelMirrorMap, cfg: TrainConfig,
                adam: Adam) -> LossBreakdown:
    mirrors = [mirror_trial(t, mirror_map) for t in originals]
    x = Tensor(_stack_inputs(originals + mirrors))
    labels = np.array([t.label for t in originals + mirrors])
    probs, emb = forward(x, p, mode="train")
    l_c = cross_entropy(probs, labels)
    pairs = build_pairs(originals, mirrors)
    l_d = mirror_contrastive_loss(emb, pairs, cfg.mcl_weights(),
                                  normalize=cfg.normalize_pairs)
    loss = total_loss(l_c, l_d)
    adam.zero_grad()
    loss.backward()
    adam.step()
    return breakdown(l_c, l_d, loss, pairs)


def train(p: ModelParams, trainset: TrialSet, cfg: TrainConfig,
          testset: TrialSet | None = None,
          mirror_map: ChannelMirrorMap | None = None,
          target_accuracy: float | None = None,
          log_fn=None) -> tuple[ModelParams, MetricsReport]:
    """Run the mirror-augmented training loop; deterministic under cfg.seed.

    Divergence of the contrastive term (|l_d| above the guard) stops the run
    with status "diverged" rather than crashing.  ``target_accuracy`` stops
    early once the fused test accuracy reaches it.
    """
    if len(trainset) == 0:
        raise ConfigurationError("training set is empty")
    mirror_map = mirror_map or default_mirror_map()
    rng = np.random.default_rng(cfg.seed)
    adam = Adam(p.trainable(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    report = MetricsReport()
    n = len(trainset)
    for epoch in range(1, cfg.max_epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        sums, n_steps = np.zeros(3), 0
        diverged = False
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            if len(idx) < 2:
                continue  # a single trial cannot form pairs or batch statistics
            batch = [trainset.trial(i) for i in idx]
            try:
                step = _train_step(p, batch, mirror_map, cfg, adam)
            except NumericError as exc:
                raise NumericError(
                    f"epoch {epoch}, step {n_steps + 1}: {exc}"
                ) from exc
            sums += (step.l_c, step.l_d, step.l_total)
            n_steps += 1
            if abs(step.l_d) > cfg.divergence_guard:
                diverged = True
                break
        l_c, l_d, l_total = (sums / max(n_steps, 1)).tolist()
        acc = kappa = None
        if testset is not None and (epoch % cfg.eval_every == 0 or diverged):
            ev = evaluate(p, testset, mirror_map=mirror_map)
            acc, kappa = ev.accuracy, ev.kappa
        record = EpochRecord(epoch, l_c, l_d, l_total, acc, kappa,
                             time.perf_counter() - started)
        report.epochs.append(record)
        if log_fn is not None:
            log_fn(record)
        if diverged:
            report.status = "diverged"
            break
        if target_accuracy is not None and acc is not None and acc >= target_accuracy:
            break
    return p, report


def evaluate(p: ModelParams, testset: TrialSet,
             mirror_map: ChannelMirrorMap | None = None,
             batch_size: int = 50) -> EvalResult:
    """Mirror-fused inference: accuracy and kappa over the whole set."""
    if len(testset) == 0:
        raise ConfigurationError("test set is empty")
    mirror_map = mirror_map or default_mirror_map()
    perm = mirror_map.permutation()
    confusion = np.zeros((2, 2), dtype=np.int64)
    for lo in range(0, len(testset), batch_size):
        data = testset.data[lo:lo + batch_size]
        labels = testset.labels[lo:lo + batch_size]
        x = data[:, None, :, :]
        with no_grad():
            p_orig, _ = forward(Tensor(x), p, mode="eval")
            p_mirr, _ = forward(Tensor(x[:, :, :, perm]), p, mode="eval")
        fused = fuse_mirror_predictions(p_orig.data, p_mirr.data)
        pred = fused.argmax(axis=1)
        for t, y in zip(labels, pred):
            confusion[t, y] += 1
    n = int(confusion.sum())
    accuracy = float(np.trace(confusion)) / n
    return EvalResult(accuracy=accuracy, kappa=cohen_kappa(confusion),
                      confusion=confusion, n_trials=n)


def pair_separation(p: ModelParams, testset: TrialSet,
                    mirror_map: ChannelMirrorMap | None = None,
                    max_trials: int = 60) -> tuple[float, float]:
    """Mean positive- and negative-pair embedding distance on a test subset."""
    mirror_map = mirror_map or default_mirror_map()
    take = min(len(testset), max_trials)
    originals = [testset.trial(i) for i in range(take)]
    mirrors = [mirror_trial(t, mirror_map) for t in originals]
    with no_grad():
        _, emb = forward(Tensor(_stack_inputs(originals + mirrors)), p, mode="eval")
    return pair_distance_stats(emb.data, build_pairs(originals, mirrors))


def cohen_kappa(confusion: np.ndarray) -> float:
    """Chance-corrected agreement from a 2x2 confusion matrix.

    kappa = (p_o - p_e) / (1 - p_e) with p_e the marginal-product chance
    agreement; defined as 0 when p_e == 1 (degenerate single-cell matrix).
    """
    confusion = np.asarray(confusion, dtype=np.float64)
    if confusion.shape != (2, 2):
        raise ConfigurationError(f"confusion must be 2x2, got {confusion.shape}")
    n = confusion.sum()
    if n <= 0:
        raise ConfigurationError("confusion matrix is empty")
    p_o = np.trace(confusion) / n
    p_e = float((confusion.sum(axis=1) * confusion.sum(axis=0)).sum()) / (n * n)
    if p_e >= 1.0:
        return 0.0
    return float((p_o - p_e) / (1.0 - p_e))


# ---------------------------------------------------------------------------
# complexity: analytic counts and measured scaling
# ---------------------------------------------------------------------------


def flops_estimate(seq_len: int, width: int, window: int) -> tuple[int, int]:
    """Analytic attention cost for dense and windowed variants.

    Dense self-attention over length L and width D costs 4*L*D^2 + 2*L^2*D;
    restricting attention to windows of size M replaces the quadratic term
    with 2*M^2*L*D, linear in L.
    """
    if min(seq_len, width, window) <= 0:
        raise ConfigurationError("flops_estimate arguments must be positive")
    proj = 4 * seq_len * width * width
    dense = proj + 2 * seq_len * seq_len * width
    windowed = proj + 2 * window * window * seq_len * width
    return dense, windowed


def _time_attention(seq_len: int, width: int, window: int, heads: int,
                    repeats: int = 3, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    q = Tensor(rng.standard_normal((1, seq_len, width)))
    k = Tensor(rng.standard_normal((1, seq_len, width)))
    v = Tensor(rng.standard_normal((1, seq_len, width)))
    with no_grad():
        windowed_attention(q, k, v, window, heads)  # warm-up
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            windowed_attention(q, k, v, window, heads)
            best = min(best, time.perf_counter() - t0)
    return best


def attention_scaling(seq_len: int, width: int = 40, window: int = 8,
                      heads: int = 8, repeats: int = 5) -> dict:
    """Measure wall-clock growth from L to 2L for windowed vs dense attention.

    Returns per-step growth for the windowed variant (time(2L)/(2 time(L)),
    ~1 for a linear algorithm) and total growth for the dense variant
    (time(2L)/time(L), ~4 for a quadratic one).
    """
    t_w1 = _time_attention(seq_len, width, window, heads, repeats)
    t_w2 = _time_attention(2 * seq_len, width, window, heads, repeats)
    t_d1 = _time_attention(seq_len, width, seq_len, heads, repeats)
    t_d2 = _time_attention(2 * seq_len, width, 2 * seq_len, heads, repeats)
    return {
        "seq_len": seq_len,
        "windowed_s": (t_w1, t_w2),
        "dense_s": (t_d1, t_d2),
        "windowed_per_step_growth": t_w2 / (2.0 * t_w1),
        "dense_growth": t_d2 / t_d1,
    }


# ---------------------------------------------------------------------------
# sweep and inference benchmark
# ---------------------------------------------------------------------------


def hyper_sweep(base_model_cfg: SwtConfig, train_cfg: TrainConfig,
                trainset: TrialSet, testset: TrialSet,
                heads: tuple[int, ...] = (4, 8, 10),
                blocks: tuple[int, ...] = (1, 2, 3),
                log_fn=None) -> list[dict]:
    """Train one model per (heads, blocks) cell; returns one result row each."""
    rows = []
    for h in heads:
        for b in blocks:
            cfg = replace(base_model_cfg, n_heads=h, n_blocks=b)
            params = init_model(cfg, seed=train_cfg.seed)
            _, report = train(params, trainset, train_cfg, testset=testset)
            summary = report.summary()
            ev = evaluate(params, testset)
            row = {
                "heads": h,
                "blocks": b,
                "accuracy": ev.accuracy,
                "kappa": ev.kappa,
                "max_accuracy": summary["max_accuracy"],
                "status": report.status,
            }
            rows.append(row)
            if log_fn is not None:
                log_fn(row)
    return rows


def bench_inference(p: ModelParams, batch: int = 1, n_runs: int = 1000,
                    seed: int = 0) -> dict:
    """Mean forward-only wall-clock per batch over n_runs, plus model size."""
    if n_runs < 1:
        raise ConfigurationError(f"n_runs must be >= 1, got {n_runs}")
    cfg = p.cfg
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((batch, 1, cfg.n_samples, cfg.n_channels)))
    with no_grad():
        forward(x, p, mode="eval")  # warm-up
        t0 = time.perf_counter()
        for _ in range(n_runs):
            forward(x, p, mode="eval")
        elapsed = time.perf_counter() - t0
    return {
        "batch": batch,
        "n_runs": n_runs,
        "mean_ms": 1000.0 * elapsed / n_runs,
        "n_params": p.total_params(),
    }
