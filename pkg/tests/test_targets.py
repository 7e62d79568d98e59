import numpy as np
import pytest

from infoqgan import targets


def test_biased_circle_stays_in_disk():
    cloud = targets.biased_circle(2000, np.random.default_rng(0))
    assert len(cloud) == 2000
    assert np.all(targets.in_disk(cloud.points, (0.3, 0.3), 0.25))
    np.testing.assert_allclose(cloud.points.mean(axis=0), [0.3, 0.3], atol=0.01)
    # uniform disk of radius r has per-axis std r/2
    np.testing.assert_allclose(cloud.points.std(axis=0), [0.125, 0.125], atol=0.005)


def test_central_square_stays_in_square():
    cloud = targets.central_square(2000, np.random.default_rng(1))
    assert np.all(targets.in_square(cloud.points, (0.5, 0.5), 0.5))
    assert cloud.points.min() >= 0.25 and cloud.points.max() <= 0.75
    np.testing.assert_allclose(cloud.points.std(axis=0), [0.5 / np.sqrt(12)] * 2, atol=0.005)


def test_disk_must_fit_in_unit_box():
    with pytest.raises(targets.GeometryError):
        targets.biased_circle(10, np.random.default_rng(0), center=(0.1, 0.3), radius=0.25)
    with pytest.raises(targets.GeometryError):
        targets.central_square(10, np.random.default_rng(0), center=(0.9, 0.5), side=0.5)


def test_same_seed_same_cloud():
    a = targets.biased_circle(100, np.random.default_rng(5))
    b = targets.biased_circle(100, np.random.default_rng(5))
    np.testing.assert_array_equal(a.points, b.points)


def test_point_cloud_rejects_points_outside_domain():
    with pytest.raises(targets.GeometryError):
        targets.PointCloud(np.array([[0.5, 1.2]]))


def test_csv_round_trip_is_exact(tmp_path):
    cloud = targets.biased_circle(50, np.random.default_rng(2))
    path = tmp_path / "c.csv"
    cloud.to_csv(path)
    assert path.read_text().splitlines()[0] == "x,y"
    np.testing.assert_array_equal(targets.PointCloud.from_csv(path).points, cloud.points)


def test_csv_errors_name_the_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n0.1,0.2\n0.3,oops\n")
    with pytest.raises(ValueError, match="line 3"):
        targets.read_points_csv(path)
