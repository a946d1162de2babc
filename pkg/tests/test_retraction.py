import numpy as np
import pytest

from vi_equilibrium import retraction
from vi_equilibrium.geometry import BallCapCone, PolyhedralCone, SphereCapCone, polar_contains
from vi_equilibrium.oracles import continuity_probe
from vi_equilibrium.retraction import (
    RetractionMap,
    find_polar_vector,
    is_subspace,
    lambda_coefficient,
    retract,
)


def _pointed_cone(rng: np.random.Generator, dim: int) -> PolyhedralCone:
    # Strictly positive generators never span a subspace
    count = int(rng.integers(1, dim + 3))
    return PolyhedralCone.from_generators(rng.random((count, dim)) + 0.05)


def _mixed_cone(rng: np.random.Generator, dim: int, kind: int) -> PolyhedralCone:
    gens = rng.standard_normal((int(rng.integers(1, dim + 1)), dim))
    if kind == 0:
        # Adding minus the sum of the generators closes them into their span
        gens = np.vstack([gens, -gens.sum(axis=0)])
    elif kind == 1:
        gens = np.vstack([gens, -gens])
    elif kind == 2:
        gens = rng.standard_normal((dim + 1, dim))
    else:
        return _pointed_cone(rng, dim)
    return PolyhedralCone.from_generators(gens)


HALF_PLANE = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]


class TestWitness:
    def test_ray(self, ray: PolyhedralCone) -> None:
        assert find_polar_vector(ray) == pytest.approx([-1.0, 0.0])

    def test_orthant(self, orthant: PolyhedralCone) -> None:
        a = find_polar_vector(orthant)
        assert np.linalg.norm(a) == pytest.approx(1.0)
        assert orthant.contains(-a)
        assert not orthant.contains(a)

    @pytest.mark.parametrize(
        'gens',
        [
            [[1.0, 0.0], [-1.0, 0.0]],
            [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]],
        ],
    )
    def test_subspace(self, gens: list[list[float]]) -> None:
        cone = PolyhedralCone.from_generators(gens)
        assert is_subspace(cone)
        with pytest.raises(retraction.SubspaceConeError):
            find_polar_vector(cone)
        with pytest.raises(retraction.SubspaceConeError):
            RetractionMap.for_cone(cone)

    def test_half_plane(self) -> None:
        cone = PolyhedralCone.from_generators(HALF_PLANE)
        assert not is_subspace(cone)
        assert find_polar_vector(cone) == pytest.approx([0.0, -1.0])

    def test_raises_exactly_for_subspaces(self, rng: np.random.Generator) -> None:
        outcomes = set()
        for i in range(40):
            cone = _mixed_cone(rng, int(rng.integers(2, 5)), i % 4)
            subspace = is_subspace(cone)
            outcomes.add(subspace)
            if subspace:
                with pytest.raises(retraction.SubspaceConeError):
                    RetractionMap.for_cone(cone)
                continue
            a = RetractionMap.for_cone(cone).a
            assert np.linalg.norm(a) == pytest.approx(1.0)
            assert polar_contains(cone, a)
            assert cone.contains(-a)
            assert not cone.contains(a)
        assert outcomes == {True, False}

    @pytest.mark.parametrize(
        'a',
        [
            [0.0, 0.0],
            [1.0, 0.0],
            [-1.0, 1.0],
        ],
    )
    def test_invalid_witness(self, orthant: PolyhedralCone, a: list[float]) -> None:
        with pytest.raises(retraction.InvalidWitnessError):
            RetractionMap.for_cone(orthant, a)

    def test_explicit_witness_kept(self, orthant: PolyhedralCone) -> None:
        r = RetractionMap.for_cone(orthant, [-1.0, -1.0])
        assert r.a.tolist() == [-1.0, -1.0]
        assert r.describe()['witness'] == [-1.0, -1.0]


class TestRetract:
    def test_lambda(self, orthant: PolyhedralCone) -> None:
        r = RetractionMap.for_cone(orthant, [-1.0, 0.0])
        assert lambda_coefficient(r, [0.0, 0.5]) == pytest.approx(0.6)
        assert retract(r, [0.0, 0.5]) == pytest.approx([0.6, 0.8])

    def test_diagonal_witness(self, orthant: PolyhedralCone) -> None:
        r = RetractionMap.for_cone(orthant, [-1.0, -1.0])
        assert lambda_coefficient(r, [0.0, 0.0]) == pytest.approx(1 / np.sqrt(2))
        assert r([0.3, 0.3]) == pytest.approx([1 / np.sqrt(2), 1 / np.sqrt(2)])

    def test_batch(self, orthant: PolyhedralCone) -> None:
        r = RetractionMap.for_cone(orthant, [-1.0, 0.0])
        images = r(np.array([[0.0, 0.5], [1.0, 0.0]]))
        assert images.shape == (2, 2)
        assert images[1] == pytest.approx([1.0, 0.0])

    def test_outside(self, orthant: PolyhedralCone) -> None:
        r = RetractionMap.for_cone(orthant)
        with pytest.raises(retraction.PointNotInSetError):
            r([-0.5, 0.0])

    def test_random_cones(self, rng: np.random.Generator) -> None:
        for _ in range(20):
            dim = int(rng.integers(2, 6))
            cone = _pointed_cone(rng, dim)
            r = RetractionMap.for_cone(cone)
            points = BallCapCone(cone).sample(50, rng)
            for x, y in zip(points, r(points), strict=True):
                assert np.linalg.norm(y) == pytest.approx(1.0, abs=1e-9)
                assert cone.violation(y) <= 1e-9
                if abs(np.linalg.norm(x) - 1.0) < 1e-12:
                    assert y == pytest.approx(x, abs=1e-9)

    def test_half_plane(self, rng: np.random.Generator) -> None:
        cone = PolyhedralCone.from_generators(HALF_PLANE)
        r = RetractionMap.for_cone(cone)
        for y in r(BallCapCone(cone).sample(1000, rng)):
            assert np.linalg.norm(y) == pytest.approx(1.0, abs=1e-9)
            assert cone.violation(y) <= 1e-9

    @pytest.mark.parametrize(
        'gens',
        [
            [[1.0, 0.0], [0.0, 1.0]],
            [[1.0, 0.0]],
            HALF_PLANE,
            [[1.0, 0.2, 0.0], [0.0, 1.0, 0.3], [0.2, 0.0, 1.0]],
        ],
    )
    def test_continuous(self, gens: list[list[float]]) -> None:
        cone = PolyhedralCone.from_generators(gens)
        r = RetractionMap.for_cone(cone)
        report = continuity_probe(r, BallCapCone(cone), samples=200, seed=3)
        assert not report.flagged
        assert report.max_ratio < 100.0

    def test_sphere_fixed(self, orthant: PolyhedralCone, rng: np.random.Generator) -> None:
        r = RetractionMap.for_cone(orthant)
        for p in SphereCapCone(orthant).sample(30, rng):
            assert r(p) == pytest.approx(p, abs=1e-9)
