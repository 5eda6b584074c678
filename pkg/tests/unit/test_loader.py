"""Unit tests for the model supplier registry."""

import pytest

from rangelab.config import Config
from rangelab.exceptions import ConfigurationError, ModelNotFoundError
from rangelab.lattice import BRANCHING, OP, VOTER_D2, VOTER_DGE3
from rangelab.loader import (
    MODEL_REGISTRY,
    BrwSupplier,
    GwSupplier,
    ModelSpec,
    OpSupplier,
    VoterSupplier,
    load_model,
    validate_model_interface,
)
from rangelab.models.op import OpParams


class MockSupplier:
    """Supplier implementation for interface checks."""

    def simulate(self, replica, rng):
        """Simulate one replica."""
        return None

    def scaling(self):
        """Get scaling function."""
        return None

    def describe(self):
        """Describe supplier."""
        return {}

    def sbm_params(self):
        """Get SBM parameters."""
        return None

    def with_horizon(self, horizon):
        """Extend horizon."""
        return self


class IncompleteSupplier:
    """Supplier with missing methods."""

    def simulate(self, replica, rng):
        """Simulate one replica."""
        return None


class TestModelSpec:
    """Tests for ModelSpec."""

    def test_from_config(self):
        """Test spec picks the lattice and model sections."""
        config = Config(lattice={"d": 2, "L": 1}, brw={"offspring": "geometric", "n_max": 30})
        spec = ModelSpec.from_config("brw", config)

        assert spec.d == 2
        assert spec.options["offspring"] == "geometric"
        assert spec.options["n_max"] == 30

    def test_op_carries_scaling(self):
        """Test OP spec carries the scaling constants."""
        config = Config(scaling={"A": 2.0, "V": 0.5})
        spec = ModelSpec.from_config("op", config)

        assert spec.options["A"] == 2.0
        assert spec.options["V"] == 0.5

    def test_kernel(self):
        """Test kernel construction."""
        kernel = ModelSpec("op", d=1).kernel()

        assert kernel.d == 1


class TestLoadModel:
    """Tests for load_model."""

    def test_registry(self):
        """Test registered tags."""
        assert set(MODEL_REGISTRY) == {"voter", "op", "brw", "gw"}

    def test_load_each(self):
        """Test every registered tag loads."""
        expected = {"voter": VoterSupplier, "op": OpSupplier, "brw": BrwSupplier, "gw": GwSupplier}
        for tag, cls in expected.items():
            supplier = load_model(ModelSpec(tag, d=2))
            assert isinstance(supplier, cls)
            assert supplier.name == tag

    def test_unknown_model(self):
        """Test unknown tag raises ModelNotFoundError."""
        with pytest.raises(ModelNotFoundError, match="Unknown model"):
            load_model(ModelSpec("contact"))

    def test_voter_needs_d2(self):
        """Test voter on Z is refused."""
        with pytest.raises(ConfigurationError, match="d >= 2"):
            load_model(ModelSpec("voter", d=1))

    def test_unknown_offspring(self):
        """Test unknown offspring law is refused."""
        with pytest.raises(ConfigurationError):
            load_model(ModelSpec("brw", d=1, options={"offspring": "poisson"}))

    def test_op_options(self):
        """Test OP options reach the supplier."""
        options = {"p": 0.5, "n_max": 12, "A": 1.0, "V": 2.0}
        supplier = load_model(ModelSpec("op", d=1, options=options))

        assert supplier.params.p == 0.5
        assert supplier.horizon == 12.0
        assert supplier.sbm_params().sigma0_sq == 2.0


class TestSuppliers:
    """Tests for supplier behavior."""

    def test_scaling_tags(self, nn1, nn2, nn3):
        """Test each supplier's scaling function."""
        assert VoterSupplier(nn2).scaling().tag == VOTER_D2
        assert VoterSupplier(nn3).scaling().tag == VOTER_DGE3
        assert BrwSupplier(nn1).scaling().tag == BRANCHING
        assert OpSupplier(OpParams(nn1, 1.0)).scaling().tag == OP

    def test_with_horizon_grows_only(self, nn1, nn2):
        """Test with_horizon never shortens the horizon."""
        voter = VoterSupplier(nn2, t_max=10)
        assert voter.with_horizon(5).horizon == 10
        assert voter.with_horizon(20).horizon == 20

        brw = BrwSupplier(nn1, n_max=10)
        assert brw.with_horizon(12.5).horizon == 13
        assert brw.with_horizon(3).horizon == 10

        op = OpSupplier(OpParams(nn1, 1.0, n_max=4))
        assert op.with_horizon(8).horizon == 8

    def test_gw_is_spaceless(self, nn1):
        """Test GW keeps no kernel and keeps its class on extension."""
        gw = GwSupplier(nn1, "geometric", n_max=5)

        assert gw.spaceless
        assert gw.kernel is None
        extended = gw.with_horizon(10)
        assert isinstance(extended, GwSupplier)
        assert extended.horizon == 10

    def test_describe(self, nn1):
        """Test describe fields."""
        info = BrwSupplier(nn1, "geometric").describe()

        assert info["model"] == "brw"
        assert info["offspring"]["variance"] == 2.0
        assert info["kernel"]["d"] == 1


class TestValidateModelInterface:
    """Tests for validate_model_interface."""

    def test_valid_supplier(self):
        """Test complete supplier passes."""
        validate_model_interface(MockSupplier())

    def test_missing_method(self):
        """Test missing method is refused."""
        with pytest.raises(ConfigurationError, match="must implement"):
            validate_model_interface(IncompleteSupplier())

    def test_non_callable_method(self):
        """Test non-callable attribute is refused."""
        supplier = MockSupplier()
        supplier.scaling = "not callable"

        with pytest.raises(ConfigurationError, match="must be callable"):
            validate_model_interface(supplier)
