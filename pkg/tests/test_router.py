"""
Unit tests for Classifier Router
"""
import pytest

from app.estimators import (
    LinearDiscriminant,
    LogisticRegression,
    QuadraticDiscriminant,
    SmashedFilter,
    SupportVectorMachine,
)
from app.models.classifier import ClassifierKind, KernelKind
from app.models.errors import ConfigError
from app.router import DEFAULT_ROSTER, ClassifierRouter


class TestClassifierRouter:
    """Test suite for roster resolution and model-selection grids"""

    @pytest.fixture
    def router(self):
        """Create router instance for testing"""
        return ClassifierRouter()

    def test_default_roster_order(self):
        """Test: The default roster lists the five reported classifiers"""
        assert DEFAULT_ROSTER == ["gaussian_svm", "cubic_svm", "qd", "lr", "ld"]

    @pytest.mark.parametrize("name,estimator_type", [
        ("gaussian_svm", SupportVectorMachine),
        ("cubic_svm", SupportVectorMachine),
        ("qd", QuadraticDiscriminant),
        ("lr", LogisticRegression),
        ("ld", LinearDiscriminant),
        ("smashed", SmashedFilter),
    ])
    def test_build_returns_family(self, router, name, estimator_type):
        """Test: Each roster name builds the right estimator"""
        assert isinstance(router.build(name), estimator_type)

    def test_unknown_name_rejected(self, router):
        """Test: Unknown roster names raise ConfigError naming the key"""
        with pytest.raises(ConfigError) as excinfo:
            router.resolve("random_forest")
        assert excinfo.value.key == "classifiers"

    def test_gaussian_grid_scales_with_m(self, router):
        """Test: RBF gamma grid is {0.01, 0.1, 1} / M crossed with C"""
        grid = router.grid("gaussian_svm", 50)
        assert len(grid) == 9
        gammas = sorted({point["kernel"].gamma for point in grid})
        assert gammas == pytest.approx([0.01 / 50, 0.1 / 50, 1.0 / 50])
        assert {point["C"] for point in grid} == {0.1, 1.0, 10.0}

    def test_cubic_grid(self, router):
        """Test: Cubic SVM uses degree 3, offset 1 and three scales"""
        grid = router.grid("cubic_svm", 10)
        assert len(grid) == 9
        for point in grid:
            assert point["kernel"].kind is KernelKind.POLYNOMIAL
            assert point["kernel"].degree == 3
            assert point["kernel"].offset == 1.0

    def test_logreg_and_discriminant_grids(self, router):
        """Test: LR searches lambda; LD and QD use the fixed ridge"""
        assert [p["lam"] for p in router.grid("lr", 10)] == [1e-4, 1e-2, 1.0]
        assert router.grid("ld", 10) == [{"ridge": 1e-6}]
        assert router.grid("qd", 10) == [{"ridge": 1e-6}]

    def test_simplicity_key_orders_scale_then_regularisation(self, router):
        """Test: Smaller kernel scale sorts first, then larger regularisation"""
        grid = router.grid("cubic_svm", 10)
        simplest = min(grid, key=router.simplicity_key)
        assert simplest["kernel"].scale == 0.1
        assert simplest["C"] == 0.1

    def test_svm_settings_from_environment(self, monkeypatch):
        """Test: Cache size and tolerance come from CSPI_* variables"""
        monkeypatch.setenv("CSPI_SVM_CACHE_ROWS", "16")
        monkeypatch.setenv("CSPI_SVM_EPS", "0.01")
        svm = ClassifierRouter().build("gaussian_svm")
        assert svm.cache_rows == 16
        assert svm.eps == 0.01

    def test_roster_details(self, router):
        """Test: Details name the family and grid size"""
        details = router.get_roster_details("qd", 20)
        assert details["kind"] == ClassifierKind.QD.value
        assert details["display_name"] == "QD"
        assert details["grid_size"] == 1
