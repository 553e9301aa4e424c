import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxrestore.config import LossWeights, RunConfig, RunReport, validate_config
from ctxrestore.errors import ConfigError


def test_defaults_fill_and_validate():
    cfg = validate_config(RunConfig(task="outpaint", mask_fraction=0.2))
    assert cfg.discriminator_scales == 3
    assert cfg.cx_layer == "conv4_2"
    assert cfg.iterations == 4000


def test_fraction_out_of_range():
    with pytest.raises(ConfigError, match="fraction out of range"):
        validate_config(RunConfig(task="restore_random", mask_fraction=1.5))


def test_inpaint_requires_mask_path():
    with pytest.raises(ConfigError, match="mask file required"):
        validate_config(RunConfig(task="inpaint"))


def test_iterations_must_be_positive():
    with pytest.raises(ConfigError):
        validate_config(RunConfig(task="outpaint", mask_fraction=0.2, iterations=0))


def test_unknown_task_rejected():
    with pytest.raises(ConfigError):
        validate_config(RunConfig(task="upscale"))


def test_resize_requires_factors():
    with pytest.raises(ConfigError):
        validate_config(RunConfig(task="resize"))
    ok = validate_config(RunConfig(task="resize", resize_factor=(2.0, 1.0)))
    assert ok.resize_factor == (2.0, 1.0)


def test_unknown_cx_layer_rejected():
    with pytest.raises(ConfigError, match="cx_layer"):
        validate_config(
            RunConfig(task="outpaint", mask_fraction=0.2, cx_layer="conv9_9")
        )


def test_loss_weights_need_one_positive():
    with pytest.raises(ConfigError):
        LossWeights(0.0, 0.0, 0.0, 0.0).validate()
    LossWeights(0.0, 1.0, 0.0, 0.0).validate()


def test_validate_is_idempotent():
    cfg = validate_config(RunConfig(task="restore_random", mask_fraction=0.5))
    assert validate_config(cfg) == cfg


def test_file_round_trip(tmp_path):
    cfg = RunConfig(
        task="resize", resize_factor=(2.0, 0.5), iterations=17, seed=9,
        lambda_cvl=0.25, weights_dir="/tmp/w",
    )
    path = tmp_path / "run.json"
    cfg.to_file(path)
    assert RunConfig.from_file(path) == cfg


def test_unknown_config_key_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown config keys"):
        RunConfig.from_dict({"task": "outpaint", "banana": 1})


@settings(max_examples=50, deadline=None)
@given(
    iterations=st.integers(1, 10_000),
    seed=st.integers(-(2 ** 31), 2 ** 31 - 1),
    fraction=st.floats(0.01, 0.99),
    lam=st.floats(0.0, 10.0),
)
def test_round_trip_is_lossless(iterations, seed, fraction, lam):
    cfg = RunConfig(
        task="restore_random", mask_fraction=fraction, iterations=iterations,
        seed=seed, lambda_cvl=lam,
    )
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_report_trace_length_invariant():
    report = RunReport(task="outpaint", config={})
    report.append_trace({"tl": 1.0, "cfl": 0.5, "cal_g": 0.2, "cal_d": 0.3,
                         "cvl": 3.0, "rl": 0.5})
    report.check()
    report.trace["tl"].append(0.0)
    with pytest.raises(ValueError):
        report.check()


def test_report_round_trip(tmp_path):
    report = RunReport(task="inpaint", config={"task": "inpaint"})
    for i in range(3):
        report.append_trace({k: float(i) for k in
                             ("tl", "cfl", "cal_g", "cal_d", "cvl", "rl", "cycle")})
    report.metrics = {"psnr": 30.0}
    path = tmp_path / "report.json"
    report.to_file(path)
    back = RunReport.from_file(path)
    assert back.to_dict() == report.to_dict()


def test_config_is_frozen():
    cfg = RunConfig(task="outpaint", mask_fraction=0.2)
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.seed = 5
