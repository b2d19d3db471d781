from __future__ import annotations

import pytest

from app.control.plant import ConstantPlant, DronePlant, OperatingBox
from app.control.scenarios import preset, resolve
from app.control.simloop import LoopConfig


@pytest.fixture
def drone_loop() -> LoopConfig:
    return resolve(preset("drone-emulated"))


@pytest.fixture
def drone_regulation(drone_loop: LoopConfig) -> LoopConfig:
    """Drone preset, noise-free, holding the origin."""
    return drone_loop.replace(d_bar=0.0, setpoints=((0.0, 0.0),))


@pytest.fixture
def di_loop() -> LoopConfig:
    return resolve(preset("double-integrator"))


@pytest.fixture
def chain3_loop() -> LoopConfig:
    return resolve(preset("chain-3"))


@pytest.fixture
def double_integrator() -> ConstantPlant:
    return ConstantPlant(n=2, box=OperatingBox.symmetric([10.0, 10.0]), name="double-integrator")


@pytest.fixture
def drone_plant() -> DronePlant:
    return DronePlant(n=2, box=OperatingBox(lower=[-0.5, -3.0], upper=[2.3, 3.0]), name="drone")
