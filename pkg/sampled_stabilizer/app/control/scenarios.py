"""
Scenarios
Named presets and the bridge from a validated RunConfig to a runnable LoopConfig.

Provenance of the drone numbers:
- thrust_ratio 18 (sigma1 / m) and the 2 sin(z1^2) drift term are the published
  emulated nonlinearities; beta = 18 - z1^4 / 2 stays positive below 2.4 m.
- alpha0 = -5.0 is our choice: only sigma1 / m is published. It puts the hover
  input u0 ~ 0.278 inside the [0, 0.9] PWM range.
- K = [-9, -6] (both poles at -3), gamma = 0.002, T = 0.0028 s, rho = 4 and the
  1.0 transient inputs are the published loop settings; we use rho-1 = 3 of them.
- d_bar = 1 mm is the published noise magnitude; the setpoint steps are ours.

chain-3 and double-integrator constants are ours.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Callable, Dict, List

from pydantic import ValidationError

from app.control.controller import adaptation_margin, design_from_gain, design_gain
from app.control.errors import ConfigError, UnknownPreset
from app.control.estimator import EstimatorConfig as WindowConfig
from app.control.plant import ChainPlant, ConstantPlant, DronePlant, LinearDriftPlant, NormalFormPlant, OperatingBox
from app.control.simloop import LoopConfig
from app.models.schemas import (
    BoxSpec,
    ControllerConfig,
    EstimatorConfig,
    NoiseConfig,
    PlantSpec,
    RunConfig,
    Setpoint,
)

logger = logging.getLogger(__name__)

DRONE_INPUT_RANGE = (0.0, 0.9)

_FAMILIES: Dict[str, type] = {
    "constant": ConstantPlant,
    "drone": DronePlant,
    "chain": ChainPlant,
    "linear-drift": LinearDriftPlant,
}


def _drone() -> RunConfig:
    return RunConfig(
        name="drone-emulated",
        plant=PlantSpec(
            family="drone",
            n=2,
            params={"alpha0": -5.0, "alpha_amp": 2.0, "thrust_ratio": 18.0},
            box=BoxSpec(lower=[-0.5, -3.0], upper=[2.3, 3.0]),
            beta_sign=1,
            input_range=DRONE_INPUT_RANGE,
        ),
        estimator=EstimatorConfig(n=2, rho=4, T=0.0028),
        controller=ControllerConfig(poles=[-3.0, -3.0], gamma=0.002, transient_inputs=[1.0, 1.0, 1.0]),
        horizon=15.0,
        noise=NoiseConfig(d_bar=0.001, seed=0),
        z0=[0.5, 0.0],
        setpoints=[Setpoint(time=0.0, value=0.0), Setpoint(time=5.0, value=1.0), Setpoint(time=10.0, value=0.5)],
    )


def _double_integrator() -> RunConfig:
    return RunConfig(
        name="double-integrator",
        plant=PlantSpec(
            family="constant",
            n=2,
            params={"alpha0": 0.0, "beta0": 1.0},
            box=BoxSpec(lower=[-10.0, -10.0], upper=[10.0, 10.0]),
        ),
        estimator=EstimatorConfig(n=2, rho=3, T=0.01),
        controller=ControllerConfig(poles=[-1.0, -1.0], gamma=0.1, transient_inputs=[0.0, 0.0]),
        horizon=20.0,
        noise=NoiseConfig(d_bar=0.0, seed=0),
        z0=[1.0, 0.0],
    )


def _chain3() -> RunConfig:
    return RunConfig(
        name="chain-3",
        plant=PlantSpec(
            family="chain",
            n=3,
            params={"a": 0.5, "b0": 2.0, "b2": 0.1},
            box=BoxSpec(lower=[-1.0, -2.0, -2.0], upper=[1.0, 2.0, 2.0]),
        ),
        estimator=EstimatorConfig(n=3, rho=4, T=0.0005),
        controller=ControllerConfig(poles=[-2.0, -2.0, -2.0], gamma=0.05, transient_inputs=[0.0, 0.0, 0.0]),
        horizon=8.0,
        noise=NoiseConfig(d_bar=0.0, seed=0),
        z0=[0.5, 0.0, 0.0],
    )


PRESETS: Dict[str, Callable[[], RunConfig]] = {
    "double-integrator": _double_integrator,
    "drone-emulated": _drone,
    "chain-3": _chain3,
}


def preset_names() -> List[str]:
    return list(PRESETS)


def preset(name: str) -> RunConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise UnknownPreset(f"unknown preset '{name}'; choose from {preset_names()}") from None


def build_plant(spec: PlantSpec, name: str = "plant") -> NormalFormPlant:
    cls = _FAMILIES[spec.family]
    params = dict(spec.params)
    if "drift" in params:
        params["drift"] = tuple(float(x) for x in params["drift"])
    box = OperatingBox(lower=spec.box.lower, upper=spec.box.upper)
    try:
        return cls(n=spec.n, box=box, beta_sign=spec.beta_sign, name=name, **params)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"plant '{name}' is invalid", [str(e)]) from e


def resolve(cfg: RunConfig) -> LoopConfig:
    """Build plant and certified gain; the result is ready for simloop.run."""
    plant = build_plant(cfg.plant, cfg.name)
    ctl = cfg.controller
    if ctl.poles is not None:
        design = design_gain(cfg.plant.n, ctl.poles, ctl.Q)
    else:
        design = design_from_gain(ctl.K, ctl.Q)
    input_range = tuple(cfg.plant.input_range) if cfg.plant.input_range is not None else None

    return LoopConfig(
        plant=plant,
        design=design,
        T=cfg.estimator.T,
        rho=cfg.estimator.rho,
        gamma=ctl.gamma,
        transient_inputs=tuple(ctl.transient_inputs),
        horizon=cfg.horizon,
        z0=tuple(cfg.z0),
        d_bar=cfg.noise.d_bar,
        seed=cfg.noise.seed,
        setpoints=tuple((s.time, s.value) for s in cfg.setpoints),
        clamp=input_range if ctl.clamp else None,
        input_range=input_range,
        substeps=cfg.substeps,
        name=cfg.name,
    )


def check_preset(cfg: RunConfig) -> List[str]:
    """Module preconditions for a run; returns findings, empty when all hold."""
    findings: List[str] = []
    try:
        loop = resolve(cfg)
    except Exception as e:  # noqa: BLE001 - every failure is a finding here
        return [f"{type(e).__name__}: {e}"]

    try:
        WindowConfig(n=cfg.plant.n, rho=cfg.estimator.rho, T=cfg.estimator.T)
    except ValueError as e:
        findings.append(str(e))
    margin = adaptation_margin(loop.plant, loop.gamma)
    if not margin.ok:
        findings.append(f"gamma * beta_max = {margin.gamma_beta_max:.4g} is not below 1")
    if loop.design.closed_loop_eigs[0] >= 0.0:
        findings.append("closed-loop poles are not stable")
    if not loop.plant.box.contains(loop.z0):
        findings.append(f"z0={list(loop.z0)} is outside the operating box")

    for f in findings:
        logger.warning(f"[Scenarios] {cfg.name}: {f}")
    return findings


def load_run_config(path: Path) -> RunConfig:
    """Read and validate a JSON run config; failures become ConfigError with diagnostics."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON", [f"line {e.lineno}, column {e.colno}: {e.msg}"]) from e
    try:
        return RunConfig.model_validate_json(text)
    except ValidationError as e:
        diags = [f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()]
        raise ConfigError(f"{path}: run config failed validation", diags) from e


def dump_run_config(cfg: RunConfig) -> str:
    return cfg.model_dump_json(indent=2, exclude_none=True)


def run_config_schema() -> str:
    return json.dumps(RunConfig.model_json_schema(), indent=2)
