"""Central finite-difference verification of the autodiff engine.

Each check builds the op's inputs as leaf tensors, contracts the output with
a fixed random projection so every element influences the scalar, runs
``backward``, and compares against central differences on the same scalar.
The e2e check differentiates the full training objective (classification +
contrastive) of a miniature network with respect to every parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .losses import MclWeights, cross_entropy, mirror_contrastive_loss, total_loss
from .mirror import build_pairs, default_mirror_map, mirror_trial
from .model import SwtConfig, forward, init_model, windowed_attention
from .preprocess import Trial
from .tensor import Tensor

OP_TOL = 1e-4
E2E_TOL = 1e-3
FD_STEP = 1e-6


def numeric_grad(fn, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of a scalar function, elementwise over ``x``."""
    grad = np.zeros_like(x, dtype=float)
    for k in range(x.size):
        keep = x.flat[k]
        x.flat[k] = keep + step
        hi = fn()
        x.flat[k] = keep - step
        lo = fn()
        x.flat[k] = keep
        grad.flat[k] = (hi - lo) / (2.0 * step)
    return grad


def rel_error(analytic: np.ndarray, numeric: np.ndarray,
              zero_tol: float = 1e-7) -> float:
    """Max absolute difference over the larger gradient magnitude.

    When both gradients vanish (below ``zero_tol``, the scale of central
    difference rounding noise) they agree by definition; truly zero analytic
    gradients do occur, e.g. biases that batch norm cancels exactly.
    """
    scale = max(np.abs(analytic).max(initial=0.0),
                np.abs(numeric).max(initial=0.0))
    if scale < zero_tol:
        return 0.0
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def _check(name: str, make_scalar, leaves: list[Tensor],
           tol: float = OP_TOL) -> CheckResult:
    """Compare backward() against finite differences for every leaf."""
    loss = make_scalar()
    for leaf in leaves:
        leaf.zero_grad()
    loss.backward()
    worst = 0.0
    for leaf in leaves:
        analytic = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad
        numeric = numeric_grad(lambda: float(make_scalar().data), leaf.data)
        worst = max(worst, rel_error(analytic, numeric))
    return CheckResult(name=name, max_rel_err=worst, tol=tol)


def _leaf(rng, *shape) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _proj(rng, out_shape) -> np.ndarray:
    return rng.standard_normal(out_shape)


def op_checks(seed: int) -> list[CheckResult]:
    """One finite-difference check per differentiable op, at this seed."""
    rng = np.random.default_rng(seed)
    results = []

    def scalarized(name, build, leaves, tol=OP_TOL):
        out_shape = build().shape
        w = _proj(rng, out_shape)
        results.append(_check(name, lambda: (build() * Tensor(w)).sum(),
                              leaves, tol))

    a, b = _leaf(rng, 3, 4), _leaf(rng, 3, 4)
    scalarized("add", lambda: a + b, [a, b])
    br = _leaf(rng, 4)
    scalarized("add_broadcast", lambda: a + br, [a, br])
    scalarized("mul", lambda: a * b, [a, b])
    scalarized("mul_broadcast", lambda: a * br, [a, br])
    scalarized("neg", lambda: -a, [a])
    scalarized("scale", lambda: T.scale(a, -1.7), [a])

    m1, m2 = _leaf(rng, 2, 3, 4), _leaf(rng, 2, 4, 5)
    scalarized("matmul_batched", lambda: T.matmul(m1, m2), [m1, m2])
    scalarized("reshape", lambda: T.reshape(a, (2, 6)), [a])
    t3 = _leaf(rng, 2, 3, 4)
    scalarized("transpose", lambda: T.transpose(t3, (2, 0, 1)), [t3])
    scalarized("roll", lambda: T.roll(t3, 2, axis=1), [t3])

    x = _leaf(rng, 3, 5)
    w = _leaf(rng, 5, 4)
    bias = _leaf(rng, 4)
    scalarized("linear", lambda: T.linear(x, w, bias), [x, w, bias])

    xc = _leaf(rng, 2, 2, 6, 5)
    kc = _leaf(rng, 3, 2, 3, 2)
    bc = _leaf(rng, 3)
    scalarized("conv2d_valid", lambda: T.conv2d_valid(xc, kc, bc), [xc, kc, bc])

    xb = _leaf(rng, 3, 2, 4, 2)
    gb, bb = _leaf(rng, 2), _leaf(rng, 2)
    state = T.BatchNormState.create(2)
    scalarized("batch_norm_train",
               lambda: T.batch_norm(xb, gb, bb, state, mode="train"), [xb, gb, bb])
    scalarized("batch_norm_eval",
               lambda: T.batch_norm(xb, gb, bb, state, mode="eval"), [xb, gb, bb])

    xl = _leaf(rng, 3, 6)
    gl, bl = _leaf(rng, 6), _leaf(rng, 6)
    scalarized("layer_norm", lambda: T.layer_norm(xl, gl, bl), [xl, gl, bl])
    scalarized("softmax_lastdim", lambda: T.softmax_lastdim(xl), [xl])
    scalarized("square", lambda: T.square(xl), [xl])

    pos = Tensor(np.abs(rng.standard_normal((3, 4))) + 0.5, requires_grad=True)
    scalarized("log", lambda: T.log(pos), [pos])
    scalarized("gelu", lambda: T.gelu(xl), [xl])

    xp = _leaf(rng, 2, 3, 11)
    scalarized("avg_pool_time", lambda: T.avg_pool_time(xp, 4, 3), [xp])

    results.append(_check("sum_all", lambda: T.sum_all(a), [a]))
    results.append(_check("mean_all", lambda: T.mean_all(a), [a]))

    probs = Tensor(rng.uniform(0.1, 0.9, size=(4, 2)), requires_grad=True)
    labels = rng.integers(0, 2, size=4)
    wp = _proj(rng, (4,))
    results.append(_check("pick_class",
                          lambda: (T.pick_class(probs, labels) * Tensor(wp)).sum(),
                          [probs]))

    emb = _leaf(rng, 5, 3)
    ii = np.array([0, 1, 2, 3])
    jj = np.array([4, 3, 0, 1])
    wd = _proj(rng, (4,))
    results.append(_check("pairwise_distance",
                          lambda: (T.pairwise_distance(emb, ii, jj) * Tensor(wd)).sum(),
                          [emb]))

    # keep inputs away from the clamp kink where the derivative jumps
    xk = Tensor(rng.standard_normal((3, 4)) * 2.0, requires_grad=True)
    xk.data[np.abs(xk.data - 0.5) < 0.1] += 0.3
    wk = _proj(rng, (3, 4))
    results.append(_check("clamp_max",
                          lambda: (T.clamp_max(xk, 0.5) * Tensor(wk)).sum(), [xk]))

    q, k, v = _leaf(rng, 2, 8, 6), _leaf(rng, 2, 8, 6), _leaf(rng, 2, 8, 6)
    scalarized("windowed_attention",
               lambda: windowed_attention(q, k, v, 4, 2), [q, k, v])
    return results


def tiny_config() -> SwtConfig:
    """Smallest architecture the constraints admit; used by slow checks."""
    return SwtConfig(n_samples=40, n_channels=3, temporal_kernel=9,
                     spatial_kernel=3, n_filters=8, window_size=8, n_heads=2,
                     n_blocks=1, mlp_hidden=12, pool_kernel=8, pool_stride=8)


def model_check(seed: int = 0, tol: float = E2E_TOL) -> CheckResult:
    """Finite differences on the full objective w.r.t. every parameter."""
    cfg = tiny_config()
    p = init_model(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    mmap = default_mirror_map()
    originals = [
        Trial(x=rng.standard_normal((cfg.n_samples, cfg.n_channels)), label=i % 2)
        for i in range(4)
    ]
    mirrors = [mirror_trial(t, mmap) for t in originals]
    batch = originals + mirrors
    x = np.stack([t.x for t in batch])[:, None, :, :]
    labels = np.array([t.label for t in batch])
    pairs = build_pairs(originals, mirrors)
    weights = MclWeights()

    def objective() -> Tensor:
        probs, emb = forward(Tensor(x), p, mode="train")
        l_c = cross_entropy(probs, labels)
        l_d = mirror_contrastive_loss(emb, pairs, weights)
        return total_loss(l_c, l_d)

    leaves = list(p.params.values())
    return _check("model_end_to_end", objective, leaves, tol=tol)


def gradient_suite(n_seeds: int = 20, with_model: bool = True) -> list[CheckResult]:
    """Aggregate worst-case per-op errors over seeds, plus the e2e check."""
    worst: dict[str, CheckResult] = {}
    for seed in range(n_seeds):
        for res in op_checks(seed):
            prev = worst.get(res.name)
            if prev is None or res.max_rel_err > prev.max_rel_err:
                worst[res.name] = res
    results = list(worst.values())
    if with_model:
        results.append(model_check(seed=0))
    return results
