import numpy as np
import pytest

from vi_equilibrium.geometry import Ball, DimensionError, PolyhedralCone
from vi_equilibrium.maps import CobbDouglasEconomy, CorrespondenceOracle, MapOracle
from vi_equilibrium.retraction import RetractionMap


class TestMapOracle:
    def test_affine(self) -> None:
        f = MapOracle.affine([[0.0, 1.0], [1.0, 0.0]], [1.0, 2.0])
        assert f([3.0, 4.0]).tolist() == [5.0, 5.0]
        assert f.descriptor == {'kind': 'affine', 'A': [[0.0, 1.0], [1.0, 0.0]], 'b': [1.0, 2.0]}

    def test_affine_projected(self) -> None:
        f = MapOracle.affine(np.eye(2) * 10, [0.0, 0.0], project_onto=Ball(2))
        assert f([0.3, 0.4]) == pytest.approx([0.6, 0.8])
        assert f.descriptor['project'] is True

    def test_affine_shape(self) -> None:
        with pytest.raises(DimensionError):
            MapOracle.affine(np.eye(3), [0.0, 0.0])

    def test_polynomial(self) -> None:
        # (x0 * x1, 0) + (0, 2 x0^2)
        f = MapOracle.polynomial(
            2,
            [
                {'coef': [1.0, 0.0], 'powers': [1, 1]},
                {'coef': [0.0, 2.0], 'powers': [2, 0]},
            ],
        )
        assert f([3.0, 2.0]).tolist() == [6.0, 18.0]

    def test_builtins(self) -> None:
        assert MapOracle.neg_identity(3)([1.0, -2.0, 0.5]).tolist() == [-1.0, 2.0, -0.5]
        assert MapOracle.rotation()([1.0, 2.0]).tolist() == [-2.0, 1.0]
        assert MapOracle.constant([1.0, 0.0])([0.3, 0.3]).tolist() == [1.0, 0.0]

    @pytest.mark.parametrize(
        ('p0', 'first'),
        [(0.2, 0.75), (0.5, 0.75), (0.5005, 0.5), (0.501, 0.25), (0.9, 0.25)],
    )
    def test_ramp(self, p0: float, first: float) -> None:
        f = MapOracle.ramp(0.75, 0.25, 0.5, 0.501)
        value = f([p0, 1 - p0])
        assert value[0] == pytest.approx(first)
        assert value.sum() == pytest.approx(1.0)

    def test_ramp_order(self) -> None:
        with pytest.raises(ValueError, match='start < stop'):
            MapOracle.ramp(0.75, 0.25, 0.5, 0.5)

    def test_output_checked(self) -> None:
        bad = MapOracle(2, lambda x: np.append(x, 1.0))
        with pytest.raises(DimensionError):
            bad([1.0, 2.0])

    def test_displacement(self) -> None:
        f = MapOracle.constant([0.25, 0.75])
        assert f.displacement()([0.5, 0.5]).tolist() == [-0.25, 0.25]

    def test_compose(self, orthant: PolyhedralCone) -> None:
        r = RetractionMap.for_cone(orthant, [-1.0, 0.0])
        composed = MapOracle.neg_identity(2).compose(r)
        assert composed([0.0, 0.5]) == pytest.approx([-0.6, -0.8])
        assert composed.descriptor['inner']['witness'] == [-1.0, 0.0]


class TestEconomy:
    @pytest.fixture
    def economy(self) -> CobbDouglasEconomy:
        return CobbDouglasEconomy(
            np.array([[0.3, 0.7], [0.6, 0.4]]), np.array([[1.0, 2.0], [2.0, 1.0]])
        )

    def test_clears(self, economy: CobbDouglasEconomy) -> None:
        assert economy.excess_demand(np.array([4 / 9, 5 / 9])) == pytest.approx(
            [0.0, 0.0], abs=1e-12
        )

    def test_walras(self, economy: CobbDouglasEconomy, rng: np.random.Generator) -> None:
        for p in rng.dirichlet([1.0, 1.0], size=50):
            assert float(p @ economy.excess_demand(p)) == pytest.approx(0.0, abs=1e-9)

    def test_floor(self, economy: CobbDouglasEconomy) -> None:
        z = economy.as_oracle()([1.0, 0.0])
        assert np.all(np.isfinite(z))
        assert z[1] > 1e6

    def test_shape(self) -> None:
        with pytest.raises(DimensionError):
            CobbDouglasEconomy(np.array([[0.5, 0.5]]), np.array([[1.0, 1.0, 1.0]]))


class TestCorrespondence:
    @pytest.fixture
    def segment(self) -> CorrespondenceOracle:
        return CorrespondenceOracle(
            2, (MapOracle.constant([0.0, 0.0]), MapOracle.constant([1.0, 0.0]))
        )

    @pytest.mark.parametrize(('z', 'expect'), [([0.5, 1.0], 1.0), ([2.0, 0.0], 1.0)])
    def test_distance(self, segment: CorrespondenceOracle, z: list, expect: float) -> None:
        assert segment.distance([0.5, 0.5], z) == pytest.approx(expect)

    def test_nearest_weights(self, segment: CorrespondenceOracle) -> None:
        found = segment.nearest([0.5, 0.5], [0.25, 3.0])
        assert found.point == pytest.approx([0.25, 0.0])
        assert found.weights == pytest.approx([0.75, 0.25])

    def test_selection(self, segment: CorrespondenceOracle) -> None:
        assert segment.selection([0.75, 0.25])([0.1, 0.9]) == pytest.approx([0.25, 0.0])
        with pytest.raises(ValueError, match='convex'):
            segment.selection([0.75, 0.75])

    def test_weak_form(self) -> None:
        zeta = CorrespondenceOracle(
            2, (MapOracle.constant([-1.0, -1.0]), MapOracle.constant([1.0, 1.0]))
        )
        assert len(zeta.branch_values([0.5, 0.5])) == 2
        weak = zeta.filtered()
        assert weak.branch_values([0.5, 0.5]).tolist() == [[-1.0, -1.0]]
        # Nothing survives the filter, so every branch is kept
        strong = CorrespondenceOracle(2, (MapOracle.constant([1.0, 1.0]),), walras_filtered=True)
        assert len(strong.branch_values([0.5, 0.5])) == 1

    def test_branch_dimension(self) -> None:
        with pytest.raises(DimensionError):
            CorrespondenceOracle(2, (MapOracle.neg_identity(3),))

    def test_no_branches(self) -> None:
        with pytest.raises(ValueError, match='at least one branch'):
            CorrespondenceOracle(2, ())
