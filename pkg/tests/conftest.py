"""
Shared fixtures for the laboratory tests.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from app.services.lab.fields import Parity, make_grid, sample
from app.services.lab.presets import density_bubble, vortex_ring

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def grid():
    """Small meridian grid with a 2*pi vertical period."""
    return make_grid(16, 16, 4.0, 2.0 * math.pi)


@pytest.fixture
def tall_grid():
    return make_grid(32, 32, 8.0, 16.0)


@pytest.fixture
def bubble(tall_grid):
    return density_bubble(tall_grid)


@pytest.fixture
def ring(tall_grid):
    return vortex_ring(tall_grid)


@pytest.fixture
def wavy_even(grid):
    """Smooth even field with z structure."""
    return sample(grid, lambda r, z: np.exp(-r ** 2) * (1.0 + 0.5 * np.cos(z)), Parity.EVEN, "wavy")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def reference_bubble_config(tmp_path) -> Path:
    """configs/bubble.cfg with its artifacts redirected under tmp_path."""
    lines = [
        f"output.dir = {tmp_path / 'bubble'}" if line.startswith("output.dir") else line
        for line in (CONFIGS / "bubble.cfg").read_text().splitlines()
    ]
    path = tmp_path / "bubble.cfg"
    path.write_text("\n".join(lines) + "\n")
    return path
