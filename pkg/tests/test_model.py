"""Network architecture: shapes, attention semantics, fusion, checkpoints."""

import json
import math

import numpy as np
import pytest

from mclswt.errors import ConfigurationError, DataFormatError, DimensionError
from mclswt.model import (
    REFERENCE_LAYER_TABLE,
    SwtConfig,
    conformance_report,
    feature_extract,
    forward,
    fuse_mirror_predictions,
    init_model,
    load_checkpoint,
    mlp_block,
    param_report,
    save_checkpoint,
    stw_msa,
    trace_shapes,
    tw_msa,
    windowed_attention,
)
from mclswt.tensor import Tensor

from conftest import TINY


@pytest.fixture(scope="module")
def default_params():
    return init_model(SwtConfig(), seed=0)


def zero_param(params, name):
    params[name].data[:] = 0.0


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_default_config_derived_sizes():
    cfg = SwtConfig()
    assert cfg.seq_len == 1096
    assert cfg.head_dim == 5
    assert cfg.n_windows == 137
    assert cfg.pooled_len == 69
    assert cfg.embedding_dim == 2760


def test_config_rejects_indivisible_window():
    with pytest.raises(ConfigurationError, match="even"):
        SwtConfig(window_size=7)


def test_config_constraint_errors():
    with pytest.raises(ConfigurationError):
        SwtConfig(window_size=6)  # 1096 % 6 != 0
    with pytest.raises(ConfigurationError):
        SwtConfig(n_heads=7)  # 40 % 7 != 0
    with pytest.raises(ConfigurationError):
        SwtConfig(spatial_kernel=2)
    with pytest.raises(ConfigurationError):
        SwtConfig(pool_kernel=2000)
    with pytest.raises(ConfigurationError):
        SwtConfig(n_blocks=0)
    with pytest.raises(ConfigurationError):
        SwtConfig(n_classes=3)
    with pytest.raises(ConfigurationError):
        SwtConfig(temporal_kernel=0)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def test_init_projection_parameter_count(default_params):
    q = default_params["block0.tw.query.weight"]
    b = default_params["block0.tw.query.bias"]
    assert q.size + b.size == 1640


def test_init_total_parameter_count(default_params):
    assert default_params.total_params() == 155922


def test_init_is_deterministic(tiny_cfg):
    a = init_model(tiny_cfg, seed=7)
    b = init_model(tiny_cfg, seed=7)
    assert sorted(a.params) == sorted(b.params)
    for name in a.params:
        assert np.array_equal(a[name].data, b[name].data)
    c = init_model(tiny_cfg, seed=8)
    assert not np.array_equal(a["classifier.fc1.weight"].data,
                              c["classifier.fc1.weight"].data)


def test_all_parameters_trainable(tiny_params):
    assert set(tiny_params.trainable()) == set(tiny_params.params)


# ---------------------------------------------------------------------------
# feature extraction
# ---------------------------------------------------------------------------


def test_feature_extract_output_shape(tiny_cfg, tiny_params, rng):
    x = Tensor(rng.standard_normal((3, 1, tiny_cfg.n_samples, tiny_cfg.n_channels)))
    f = feature_extract(x, tiny_params, mode="train")
    assert f.shape == (3, tiny_cfg.seq_len, tiny_cfg.n_filters)


def test_feature_extract_zero_input_zero_biases(tiny_cfg, tiny_params):
    zero_param(tiny_params, "feature.temporal.bias")
    zero_param(tiny_params, "feature.spatial.bias")
    zero_param(tiny_params, "feature.norm.beta")
    x = Tensor(np.zeros((2, 1, tiny_cfg.n_samples, tiny_cfg.n_channels)))
    f = feature_extract(x, tiny_params, mode="eval")
    assert np.all(f.data == 0.0)


def test_feature_extract_rejects_bad_rank(tiny_params, rng):
    with pytest.raises(DimensionError):
        feature_extract(Tensor(rng.standard_normal((2, 40, 3))), tiny_params)


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------


def test_windowed_attention_hand_example():
    # one window of two positions, identity-like q=k=v rows [1,0] and [0,1]:
    # scores/sqrt(2) give row 1 weights softmax([1/sqrt(2), 0])
    x = Tensor(np.array([[[1.0, 0.0], [0.0, 1.0]]]))
    out = windowed_attention(x, x, x, window_size=2, n_heads=1)
    w = math.exp(1.0 / math.sqrt(2.0))
    expect_row1 = np.array([w, 1.0]) / (w + 1.0)
    np.testing.assert_allclose(out.data[0, 0], expect_row1, atol=1e-12)
    np.testing.assert_allclose(out.data[0, 0], [0.6698, 0.3302], atol=1e-4)
    # the second row is the mirror image by symmetry
    np.testing.assert_allclose(out.data[0, 1], expect_row1[::-1], atol=1e-12)


def test_windowed_attention_validates_divisibility(rng):
    x = Tensor(rng.standard_normal((1, 6, 4)))
    with pytest.raises(DimensionError):
        windowed_attention(x, x, x, window_size=4, n_heads=2)
    with pytest.raises(DimensionError):
        windowed_attention(x, x, x, window_size=2, n_heads=3)


def test_windowed_attention_rows_are_convex_combinations(rng):
    # with q=k=v the output of each window lies in the convex hull of its rows
    x = Tensor(rng.standard_normal((2, 8, 4)))
    out = windowed_attention(x, x, x, window_size=4, n_heads=2)
    for w in range(2):
        rows = x.data[0, w * 4:(w + 1) * 4]
        lo, hi = rows.min(axis=0), rows.max(axis=0)
        got = out.data[0, w * 4:(w + 1) * 4]
        assert np.all(got >= lo - 1e-12) and np.all(got <= hi + 1e-12)


def test_tw_msa_with_zero_projection_is_identity(tiny_cfg, tiny_params, rng):
    zero_param(tiny_params, "block0.tw.proj.weight")
    zero_param(tiny_params, "block0.tw.proj.bias")
    f = Tensor(rng.standard_normal((2, tiny_cfg.seq_len, tiny_cfg.n_filters)))
    out = tw_msa(f, tiny_params, "block0.tw")
    np.testing.assert_array_equal(out.data, f.data)


def test_stw_msa_with_zero_projection_is_identity(tiny_cfg, tiny_params, rng):
    zero_param(tiny_params, "block0.stw.proj.weight")
    zero_param(tiny_params, "block0.stw.proj.bias")
    f = Tensor(rng.standard_normal((2, tiny_cfg.seq_len, tiny_cfg.n_filters)))
    out = stw_msa(f, tiny_params, "block0.stw")
    np.testing.assert_array_equal(out.data, f.data)


def test_stw_msa_constant_in_time_stays_constant(tiny_cfg, tiny_params, rng):
    row = rng.standard_normal(tiny_cfg.n_filters)
    f = Tensor(np.tile(row, (2, tiny_cfg.seq_len, 1)))
    out = stw_msa(f, tiny_params, "block0.stw")
    np.testing.assert_allclose(
        out.data, np.broadcast_to(out.data[:, :1, :], out.shape), atol=1e-12)


def test_tw_msa_equivariant_to_window_multiples(tiny_cfg, tiny_params, rng):
    m = tiny_cfg.window_size
    f = rng.standard_normal((2, tiny_cfg.seq_len, tiny_cfg.n_filters))
    base = tw_msa(Tensor(f), tiny_params, "block0.tw").data
    for k in (1, 2, 3):
        shifted = tw_msa(Tensor(np.roll(f, k * m, axis=1)), tiny_params, "block0.tw").data
        np.testing.assert_allclose(shifted, np.roll(base, k * m, axis=1), atol=1e-6)


def test_stw_msa_equivariant_to_window_shift(tiny_cfg, tiny_params, rng):
    m = tiny_cfg.window_size
    f = rng.standard_normal((2, tiny_cfg.seq_len, tiny_cfg.n_filters))
    base = stw_msa(Tensor(f), tiny_params, "block0.stw").data
    shifted = stw_msa(Tensor(np.roll(f, m, axis=1)), tiny_params, "block0.stw").data
    np.testing.assert_allclose(shifted, np.roll(base, m, axis=1), atol=1e-6)


def test_tw_msa_perturbation_stays_inside_window(tiny_cfg, tiny_params, rng):
    m = tiny_cfg.window_size
    f = rng.standard_normal((2, tiny_cfg.seq_len, tiny_cfg.n_filters))
    base = tw_msa(Tensor(f), tiny_params, "block0.tw").data
    step = 11
    bumped = f.copy()
    bumped[0, step] += 0.5
    out = tw_msa(Tensor(bumped), tiny_params, "block0.tw").data
    diff = out - base
    window = step // m
    inside = diff[0, window * m:(window + 1) * m]
    assert np.any(inside != 0.0)
    # zero the perturbed window: everything else must be untouched exactly
    diff[0, window * m:(window + 1) * m] = 0.0
    assert np.all(diff == 0.0)


# ---------------------------------------------------------------------------
# MLP block and full forward
# ---------------------------------------------------------------------------


def test_mlp_block_with_zero_second_linear_is_identity(tiny_cfg, tiny_params, rng):
    zero_param(tiny_params, "block0.tw.mlp.fc2.weight")
    zero_param(tiny_params, "block0.tw.mlp.fc2.bias")
    f = Tensor(rng.standard_normal((2, tiny_cfg.seq_len, tiny_cfg.n_filters)))
    out = mlp_block(f, tiny_params, "block0.tw")
    np.testing.assert_array_equal(out.data, f.data)


def test_forward_shapes_and_probability_rows(tiny_cfg, tiny_params, rng):
    x = Tensor(rng.standard_normal((4, 1, tiny_cfg.n_samples, tiny_cfg.n_channels)))
    probs, emb = forward(x, tiny_params, mode="train")
    assert probs.shape == (4, 2)
    assert emb.shape == (4, tiny_cfg.embedding_dim)
    np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(probs.data > 0.0)


def test_forward_with_zeroed_branches_reduces_to_conv_head(tiny_cfg, tiny_params, rng):
    # zeroing every residual branch output leaves conv -> pool head -> softmax
    for stage in ("tw", "stw"):
        zero_param(tiny_params, f"block0.{stage}.proj.weight")
        zero_param(tiny_params, f"block0.{stage}.proj.bias")
        zero_param(tiny_params, f"block0.{stage}.mlp.fc2.weight")
        zero_param(tiny_params, f"block0.{stage}.mlp.fc2.bias")
    x = Tensor(rng.standard_normal((3, 1, tiny_cfg.n_samples, tiny_cfg.n_channels)))
    probs, emb = forward(x, tiny_params, mode="eval")

    from mclswt.tensor import avg_pool_time, gelu, linear, log, reshape, square, transpose
    f = feature_extract(x, tiny_params, mode="eval")
    h = avg_pool_time(square(transpose(f, (0, 2, 1))),
                      tiny_cfg.pool_kernel, tiny_cfg.pool_stride)
    e = reshape(log(h + 1e-6), (3, tiny_cfg.embedding_dim))
    z = linear(gelu(linear(e, tiny_params["classifier.fc1.weight"],
                           tiny_params["classifier.fc1.bias"])),
               tiny_params["classifier.fc2.weight"], tiny_params["classifier.fc2.bias"])
    from mclswt.tensor import softmax_lastdim
    np.testing.assert_allclose(emb.data, e.data, atol=1e-12)
    np.testing.assert_allclose(probs.data, softmax_lastdim(z).data, atol=1e-12)


def test_forward_train_and_eval_modes_differ(tiny_cfg, tiny_params, rng):
    x = Tensor(rng.standard_normal((4, 1, tiny_cfg.n_samples, tiny_cfg.n_channels)))
    p_train, _ = forward(x, tiny_params, mode="train")
    p_eval, _ = forward(x, tiny_params, mode="eval")
    assert not np.array_equal(p_train.data, p_eval.data)


# ---------------------------------------------------------------------------
# mirror fusion
# ---------------------------------------------------------------------------


def test_fuse_hand_example():
    fused = fuse_mirror_predictions(np.array([[0.7, 0.3]]), np.array([[0.6, 0.4]]))
    np.testing.assert_allclose(fused, [[0.55, 0.45]], atol=1e-12)


def test_fuse_swapped_prediction_is_fixed_point(rng):
    p = rng.dirichlet([1, 1], size=5)
    fused = fuse_mirror_predictions(p, p[:, ::-1])
    np.testing.assert_allclose(fused, p, atol=1e-12)


def test_fuse_swap_symmetry(rng):
    a = rng.dirichlet([1, 1], size=4)
    b = rng.dirichlet([1, 1], size=4)
    lhs = fuse_mirror_predictions(b, a)
    rhs = fuse_mirror_predictions(a, b)[:, ::-1]
    np.testing.assert_array_equal(lhs, rhs)


def test_fuse_validates_shapes(rng):
    with pytest.raises(DimensionError):
        fuse_mirror_predictions(np.zeros((2, 2)), np.zeros((3, 2)))
    with pytest.raises(DimensionError):
        fuse_mirror_predictions(np.zeros((2, 3)), np.zeros((2, 3)))


def test_fused_decision_is_mirror_equivariant(tiny_cfg, rng):
    params = init_model(tiny_cfg, seed=3)
    x = rng.standard_normal((3, 1, tiny_cfg.n_samples, tiny_cfg.n_channels))
    xm = x[:, :, :, [2, 1, 0]]
    p_x, _ = forward(Tensor(x), params, mode="eval")
    p_xm, _ = forward(Tensor(xm), params, mode="eval")
    fused = fuse_mirror_predictions(p_x.data, p_xm.data)
    fused_mirrored = fuse_mirror_predictions(p_xm.data, p_x.data)
    np.testing.assert_allclose(fused_mirrored, fused[:, ::-1], atol=1e-6)


# ---------------------------------------------------------------------------
# layer table conformance
# ---------------------------------------------------------------------------


def test_trace_produces_full_layer_table(tiny_params):
    rows = trace_shapes(tiny_params, batch=2)
    assert len(rows) == len(REFERENCE_LAYER_TABLE)
    assert rows[0].layer == "Input" and rows[-1].layer == "Linear2"


def test_conformance_default_config(default_params):
    report = conformance_report(default_params)
    assert len(report) == 36
    statuses = [r.status for r in report]
    assert statuses.count("FAIL") == 0
    assert statuses.count("KNOWN-DEVIATION") == 1
    dev = next(r for r in report if r.status == "KNOWN-DEVIATION")
    assert dev.layer == "Linear1"
    assert (dev.params, dev.expected_params) == (110440, 109640)


def test_conformance_rescales_to_reference_batch(default_params):
    report = conformance_report(default_params, batch=3)
    assert all(r.shape[0] == 100 for r in report)


def test_conformance_rejects_different_depth():
    cfg = SwtConfig(**{**TINY, "n_blocks": 2})
    with pytest.raises(ConfigurationError, match="rows"):
        conformance_report(init_model(cfg, seed=0))


def test_param_report_relabels_batch(tiny_params):
    rows = param_report(tiny_params, batch=64)
    assert all(r.shape[0] == 64 for r in rows)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip(tiny_cfg, tiny_params, tmp_path, rng):
    tiny_params.bn.running_mean[:] = rng.standard_normal(tiny_cfg.n_filters)
    tiny_params.bn.running_var[:] = rng.uniform(0.5, 2.0, tiny_cfg.n_filters)
    path = tmp_path / "model.json"
    save_checkpoint(tiny_params, path)
    assert (tmp_path / "model.json.bin").exists()
    back = load_checkpoint(path)
    assert back.cfg == tiny_cfg
    assert sorted(back.params) == sorted(tiny_params.params)
    for name, t in tiny_params.params.items():
        assert np.array_equal(back[name].data, t.data)
        assert back[name].requires_grad == t.requires_grad
    np.testing.assert_array_equal(back.bn.running_mean, tiny_params.bn.running_mean)
    np.testing.assert_array_equal(back.bn.running_var, tiny_params.bn.running_var)


def test_checkpoint_rejects_unknown_tag(tiny_params, tmp_path):
    path = tmp_path / "model.json"
    save_checkpoint(tiny_params, path)
    manifest = json.loads(path.read_text())
    manifest["format"] = "mclswt-ckpt-v9"
    path.write_text(json.dumps(manifest))
    with pytest.raises(DataFormatError, match="mclswt-ckpt-v9"):
        load_checkpoint(path)


def test_checkpoint_rejects_unsupported_dtype(tiny_params, tmp_path):
    path = tmp_path / "model.json"
    save_checkpoint(tiny_params, path)
    manifest = json.loads(path.read_text())
    manifest["dtype"] = "<f4"
    path.write_text(json.dumps(manifest))
    with pytest.raises(DataFormatError, match="dtype"):
        load_checkpoint(path)


def test_checkpoint_rejects_truncated_payload(tiny_params, tmp_path):
    path = tmp_path / "model.json"
    save_checkpoint(tiny_params, path)
    payload = tmp_path / "model.json.bin"
    payload.write_bytes(payload.read_bytes()[:-16])
    with pytest.raises(DataFormatError, match="truncated"):
        load_checkpoint(path)


def test_checkpoint_rejects_unknown_config_key(tiny_params, tmp_path):
    path = tmp_path / "model.json"
    save_checkpoint(tiny_params, path)
    manifest = json.loads(path.read_text())
    manifest["config"]["dropout"] = 0.5
    path.write_text(json.dumps(manifest))
    with pytest.raises(DataFormatError, match="config"):
        load_checkpoint(path)


def test_checkpoint_rejects_missing_parameters(tiny_params, tmp_path):
    path = tmp_path / "model.json"
    save_checkpoint(tiny_params, path)
    manifest = json.loads(path.read_text())
    manifest["params"] = [e for e in manifest["params"]
                          if e["name"] != "classifier.fc2.bias"]
    path.write_text(json.dumps(manifest))
    with pytest.raises(DataFormatError, match="classifier.fc2.bias"):
        load_checkpoint(path)


def test_checkpoint_invalid_manifest(tmp_path):
    path = tmp_path / "model.json"
    path.write_text("not json {")
    with pytest.raises(DataFormatError, match="manifest"):
        load_checkpoint(path)
