"""Shared fixtures for the simulator tests"""

import math
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pytest

from abisim.config.scenario import SCHEMA_VERSION, build_config, set_path
from abisim.services.drive import RfDrive
from abisim.services.detectors import PdModel
from abisim.services.lock import LockPlant
from abisim.services.noise import DriftModel, PztModel
from abisim.services.optics import AbiConfig, AomConfig, FrequencyLabel

REPO_ROOT = Path(__file__).resolve().parent.parent
RF = 2 * math.pi * 80e6


@pytest.fixture
def configs_dir() -> Path:
    return REPO_ROOT / 'configs'


@pytest.fixture
def label() -> FrequencyLabel:
    return FrequencyLabel(0, RF)


@pytest.fixture
def balanced_abi() -> AbiConfig:
    return AbiConfig(AomConfig(), AomConfig(), path_phase=0.0, visibility=1.0, efficiency=1.0)


@pytest.fixture
def make_config():
    """Build a ScenarioConfig of one kind with dotted-path overrides"""
    def _make(kind: str, overrides: Optional[Dict[str, Any]] = None):
        raw: Dict[str, Any] = {'schema_version': SCHEMA_VERSION, 'scenario': {'kind': kind}}
        for path, value in (overrides or {}).items():
            set_path(raw, path, value)
        return build_config(raw)
    return _make


@pytest.fixture
def make_plant():
    """Lock plant with a dithered RF1, balanced AOMs and configurable noise"""
    def _make(diffusion: float = 0.0, noise_sigma: float = 0.0, seed: int = 0, **kwargs):
        abi = kwargs.pop('abi', AbiConfig(path_phase=kwargs.pop('path_phase', 1.0),
                                          visibility=0.995, efficiency=0.95))
        drive1 = kwargs.pop('drive1', RfDrive(dither_hz=200e3, dither_depth=0.1))
        drive2 = kwargs.pop('drive2', RfDrive())
        rng = np.random.default_rng(seed)
        return LockPlant(
            abi=abi, drive1=drive1, drive2=drive2,
            drift=DriftModel(diffusion, rng=np.random.default_rng(seed + 1)),
            pzt=kwargs.pop('pzt', PztModel()),
            pd=PdModel(noise_sigma=noise_sigma),
            rng=rng, **kwargs,
        )
    return _make
