"""GRPO for flow-matching models with ratio normalization and gradient reweighting.

Thin Python layer over the C++ core. Configurations are plain dicts that
mirror the JSON config file; anything left out keeps its built-in default.
"""

import json
from pathlib import Path

from ._flowguard import (
    CURVES_HEADER,
    HISTOGRAMS_HEADER,
    METRICS_HEADER,
    ConfigError,
    DataError,
    DivergenceError,
    Environment,
    FlowguardError,
    GridPoint,
    NoiseSchedule,
    RunConfig,
    beta_const,
    build_schedule,
    default_clip_range,
    delta_factor,
    diagnose,
    drift_mean,
    drift_v_coefficient,
    group_advantages,
    log_ratio_closed_form,
    log_ratio_stats,
    log_step_density,
    oracle_check,
    proxy_reward,
    rationorm,
    schedule_sigma,
    surrogate_term,
    variant_grad_scale,
    variant_log_ratio,
    variant_names,
)
from . import _flowguard


def _merge(base, overrides):
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def default_config():
    """Built-in defaults as a nested dict."""
    return json.loads(RunConfig().to_json())


def make_config(overrides=None, path=None):
    """RunConfig from an optional JSON file plus nested dict overrides."""
    cfg = RunConfig.load(str(path)) if path is not None else RunConfig()
    if overrides:
        cfg = RunConfig.from_json(json.dumps(_merge(json.loads(cfg.to_json()), overrides)))
    cfg.validate()
    return cfg


def _as_config(config):
    if isinstance(config, RunConfig):
        return config
    return make_config(config)


def pretrain(config=None, checkpoint=None, metrics_csv=None):
    """Train the base velocity model; returns the per-step losses.

    The checkpoint defaults to the config's pretrained path, where rl_train looks for it.
    """
    return _flowguard.pretrain(
        _as_config(config),
        Path(checkpoint) if checkpoint else None,
        Path(metrics_csv) if metrics_csv else None,
    )


def rl_train(config=None, run_dir="run", resume=None):
    """Run GRPO fine-tuning; returns clip range, curves and the summary."""
    return _flowguard.rl_train(_as_config(config), Path(run_dir), Path(resume) if resume else None)


__all__ = [name for name in dir() if not name.startswith("_")]
