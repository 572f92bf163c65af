import numpy as np
import pytest

from app.helpers.errors import DomainError
from app.modules.rotation import (
    fold_rotation,
    ids_from_rotation,
    ids_from_rotation_grid,
    rotation_number,
)
from app.modules.spectrum import ids_counting
from test.conftest import free_ids_closed_form


class TestRotationNumber:
    """Test the fibered rotation number."""

    @pytest.mark.parametrize("E, expected", [(0.0, 0.25), (3.0, 0.0), (-3.0, 0.5)])
    def test_free_values(self, golden, free_pot, E, expected):
        """Test band center, above and below the free spectrum."""
        result = rotation_number(free_pot, golden, E, n=1000, m=16)
        assert result.rho == pytest.approx(expected, abs=2e-3)
        assert result.reliable
        assert result.n_used == 1000
        assert result.phase_samples == 16

    def test_below_spectrum_of_amo(self, golden, amo2):
        """Test ρ = 1/2 below the containment interval."""
        result = rotation_number(amo2, golden, -7.0, n=1000, m=16)
        assert result.rho == pytest.approx(0.5, abs=2e-3)
        assert ids_from_rotation(result.rho) == pytest.approx(0.0, abs=4e-3)

    def test_degenerate_guard_fires(self, golden, free_pot):
        """Test the start vector hits the vertical axis at E = 0."""
        result = rotation_number(free_pot, golden, 0.0, n=1000, m=16)
        assert result.degenerate_hits > 0

    def test_sampling_validation(self, golden, free_pot):
        """Test n >= 1000 and m >= 16."""
        with pytest.raises(ValueError):
            rotation_number(free_pot, golden, 0.0, n=500, m=16)
        with pytest.raises(ValueError):
            rotation_number(free_pot, golden, 0.0, n=1000, m=8)

    def test_sampling_defaults_from_settings(self, golden, free_pot, mocker):
        """Test omitted n and m come from settings."""
        mocker.patch("app.modules.rotation.settings.ROTATION_ITERATES", 1200)
        mocker.patch("app.modules.rotation.settings.ROTATION_PHASES", 32)
        result = rotation_number(free_pot, golden, 3.0)
        assert result.n_used == 1200
        assert result.phase_samples == 32
        table, _ = ids_from_rotation_grid(free_pot, golden, [3.0])
        assert (table.n, table.m) == (1200, 32)

    def test_row(self, golden, free_pot):
        """Test CSV row layout (E, rho, N_from_rho, spread)."""
        result = rotation_number(free_pot, golden, 0.0, n=1000, m=16)
        E, rho, N, spread = result.row(0.0)
        assert E == 0.0
        assert N == pytest.approx(1.0 - 2.0 * rho)
        assert spread == result.spread


class TestIdsFromRotation:
    """Test N = 1 - 2ρ."""

    def test_mapping(self):
        """Test the endpoints and band center."""
        assert ids_from_rotation(0.0) == 1.0
        assert ids_from_rotation(0.25) == 0.5
        assert ids_from_rotation(0.5) == 0.0

    @pytest.mark.parametrize("rho", [-0.1, 0.6])
    def test_out_of_range(self, rho):
        """Test ρ outside [0, 1/2] raises DomainError."""
        with pytest.raises(DomainError):
            ids_from_rotation(rho)

    def test_fold(self):
        """Test folding into [0, 1/2]."""
        np.testing.assert_allclose(fold_rotation(np.array([0.1, 0.7, 1.25, -0.1])), [0.1, 0.3, 0.25, 0.1])

    def test_free_agreement(self, golden, free_pot):
        """Test the rotation IDS matches the closed form."""
        E = np.linspace(-1.9, 1.9, 9)
        table, results = ids_from_rotation_grid(free_pot, golden, E, n=1000, m=16)
        assert table.method == "rotation"
        assert len(results) == 9
        assert np.max(np.abs(table.N_values - free_ids_closed_form(E))) <= 0.01

    def test_monotone_in_energy(self, golden, amo2):
        """Test N from ρ is nondecreasing in E."""
        table, _ = ids_from_rotation_grid(amo2, golden, np.linspace(-6.0, 6.0, 13), n=1000, m=16)
        assert np.all(np.diff(table.N_values) >= -2e-3)

    @pytest.mark.slow
    def test_amo_agrees_with_counting(self, golden, amo2):
        """Test rotation and counting IDS agree for λ = 2."""
        E = np.linspace(-4.0, 4.0, 9)
        rotation, _ = ids_from_rotation_grid(amo2, golden, E, n=2000, m=64)
        counting = ids_counting(amo2, golden, E, n=1000, m=16)
        assert np.max(np.abs(rotation.N_values - counting.N_values)) <= 0.02
