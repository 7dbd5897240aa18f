import math

import numpy as np
import pytest
from scipy import integrate

from perturbhull.geometry import DomainError
from perturbhull.models import (
    ModelParams,
    cloud_from_csv,
    cloud_to_csv,
    sample_binomial_cloud,
    sample_cloud,
    sample_poisson_cloud,
    stream,
)


def test_binomial_tiny_noise_stays_on_circle():
    p = ModelParams(2, -10, 100, "binomial")
    cloud = sample_binomial_cloud(p, stream(0))
    assert len(cloud) == 100
    # coordinates round to the circle; the stored depth keeps the noise
    assert np.all(np.abs(np.linalg.norm(cloud.points, axis=1) - 1) < 1e-15)
    assert np.all(np.abs(cloud.depth) <= 2 * 100.0 ** -10)
    assert np.all(cloud.depth >= 0)


@pytest.mark.parametrize("n", [1, 7, 250])
def test_binomial_count_is_exact(n):
    assert len(sample_cloud(ModelParams(3, 0.5, n, "binomial"), stream(n))) == n


def test_binomial_rejects_non_integer():
    with pytest.raises(DomainError):
        sample_cloud(ModelParams(2, 0, 10.5, "binomial"), stream(0))


def _mean_norm_unit_noise():
    # E|(1, 0) + e| with e uniform in the unit disk
    f = lambda r, t: math.hypot(1 + r * math.cos(t), r * math.sin(t)) * r / math.pi
    m1, _ = integrate.dblquad(f, 0, 2 * math.pi, 0, 1, epsabs=1e-12)
    g = lambda r, t: ((1 + r * math.cos(t)) ** 2 + (r * math.sin(t)) ** 2) * r / math.pi
    m2, _ = integrate.dblquad(g, 0, 2 * math.pi, 0, 1, epsabs=1e-12)
    return m1, m2 - m1 * m1


def test_binomial_radial_mean_matches_quadrature():
    mean, var = _mean_norm_unit_noise()
    p = ModelParams(2, 0, 10_000, "binomial")
    norms = np.concatenate([np.linalg.norm(sample_cloud(p, stream(1, r)).points, axis=1) for r in range(50)])
    assert abs(norms.mean() - mean) < 4 * math.sqrt(var / len(norms))


def test_poisson_count_moments():
    rng = stream(2)
    counts = np.array([len(sample_poisson_cloud(ModelParams(2, 0, 1000), rng)) for _ in range(10_000)])
    n = len(counts)
    assert abs(counts.mean() - 1000) < 4 * math.sqrt(1000 / n)
    # sample variance of a Poisson(1000): sd ~ sqrt(2 * 1000^2 / n)
    assert abs(counts.var(ddof=1) - 1000) < 4 * math.sqrt(2 * 1000 ** 2 / n)


def test_poisson_tiny_noise_d3():
    cloud = sample_poisson_cloud(ModelParams(3, -5, 50), stream(3))
    assert np.all(np.abs(cloud.depth) <= 2 * 50.0 ** -5)


def test_poisson_empty_process_allowed():
    counts = [len(sample_poisson_cloud(ModelParams(2, 0, 1), stream(4, i))) for i in range(50)]
    assert 0 in counts
    empty = next(sample_poisson_cloud(ModelParams(2, 0, 1), stream(4, i)) for i, c in enumerate(counts) if c == 0)
    assert empty.points.shape == (0, 2)


def test_invalid_params():
    with pytest.raises(DomainError):
        ModelParams(1, 0, 10)
    with pytest.raises(DomainError):
        ModelParams(2, 0, 0)
    with pytest.raises(DomainError):
        ModelParams(2, 0, 10, "gaussian")


def test_depth_matches_direct_formula_when_noise_is_large():
    p = ModelParams(3, 0, 500)
    cloud = sample_cloud(p, stream(5))
    direct = 1 + p.radius - np.linalg.norm(cloud.points, axis=1)
    assert np.allclose(cloud.depth, direct, atol=1e-13)


def test_determinism_and_independence():
    p = ModelParams(3, 0.2, 300)
    a = sample_cloud(p, stream(9, 0, "cloud"))
    b = sample_cloud(p, stream(9, 0, "cloud"))
    c = sample_cloud(p, stream(9, 1, "cloud"))
    assert a.points.tobytes() == b.points.tobytes()
    assert a.points.shape != c.points.shape or not np.array_equal(a.points, c.points)


def test_csv_round_trip_is_exact():
    p = ModelParams(3, -1.5, 40, "binomial", seed=17)
    cloud = sample_cloud(p, stream(17))
    back = cloud_from_csv(cloud_to_csv(cloud))
    assert back.points.tobytes() == cloud.points.tobytes()
    assert back.metadata["alpha"] == -1.5 and back.metadata["kind"] == "binomial"
    assert back.metadata["seed"] == 17


def test_csv_rejects_wrong_header():
    with pytest.raises(ValueError):
        cloud_from_csv("x,y\n1,2\n")
