"""Grid and transform layer tests.

The analytic anchor is the Gaussian pair f(x) = exp(-|x|^2/2) with
F(p) = (2 pi)^(d/2) exp(-|p|^2/2); on a box that is wide enough the grid
transform must reproduce it to high accuracy.
"""

import numpy as np
import pytest

from bornscat.grids import (
    DirectionSet,
    Grid,
    SampledField,
    Space,
    forward_ft,
    inverse_ft,
    load_field,
    make_grid,
    nudft,
    plane_wave,
    save_field,
    snap_to_momentum_lattice,
    sphere_directions,
    transverse_basis,
)


def gaussian_field(grid):
    r2 = np.zeros(grid.shape)
    for x in grid.position_mesh():
        r2 = r2 + x * x
    return SampledField(grid, np.exp(-0.5 * r2), Space.POSITION)


class TestMakeGrid:
    def test_basic_2d(self):
        grid = make_grid(2, (60.0, 60.0), (512, 512))
        assert grid.dim == 2
        assert grid.spacing == (60.0 / 512, 60.0 / 512)
        np.testing.assert_allclose(grid.momentum_spacing, 2 * np.pi / 60.0)
        # zero is always a momentum node, and the band is [-pi/h, pi/h)
        p = grid.momentum_axis(0)
        assert p[0] == 0.0
        assert p.min() == pytest.approx(-np.pi / grid.spacing[0])
        assert p.max() < np.pi / grid.spacing[0]

    def test_positions_cover_centered_box(self):
        grid = make_grid(2, (10.0, 10.0), (8, 8))
        x = grid.position_axis(0)
        assert x[0] == -5.0
        assert x[-1] == pytest.approx(5.0 - 10.0 / 8)
        assert 0.0 in x

    def test_3d(self):
        grid = make_grid(3, (30.0, 20.0, 10.0), (32, 16, 8))
        assert grid.size == 32 * 16 * 8
        assert grid.cell_volume == pytest.approx(
            (30 / 32) * (20 / 16) * (10 / 8)
        )

    @pytest.mark.parametrize("counts", [(7, 8), (8, 9), (8, 6), (4, 8)])
    def test_rejects_bad_counts(self, counts):
        with pytest.raises(ValueError):
            make_grid(2, (10.0, 10.0), counts)

    def test_rejects_nonpositive_extent(self):
        with pytest.raises(ValueError):
            make_grid(2, (10.0, 0.0), (8, 8))
        with pytest.raises(ValueError):
            make_grid(2, (-1.0, 10.0), (8, 8))

    def test_rejects_wrong_dim(self):
        with pytest.raises(ValueError):
            make_grid(1, (10.0,), (8,))
        with pytest.raises(ValueError):
            make_grid(3, (10.0, 10.0), (8, 8))


class TestForwardInverse:
    def test_zero_field(self):
        grid = make_grid(2, (10.0, 10.0), (16, 16))
        out = forward_ft(SampledField(grid, np.zeros(grid.shape), Space.POSITION))
        assert out.space is Space.MOMENTUM
        assert out.max_abs() == 0.0

    def test_gaussian_closed_form_2d(self):
        grid = make_grid(2, (30.0, 30.0), (64, 64))
        out = forward_ft(gaussian_field(grid))
        p2 = grid.momentum_sq
        expected = 2.0 * np.pi * np.exp(-0.5 * p2)
        err = np.max(np.abs(out.values - expected)) / (2.0 * np.pi)
        assert err < 1e-8

    def test_gaussian_closed_form_3d(self):
        grid = make_grid(3, (30.0, 30.0, 30.0), (64, 64, 64))
        out = forward_ft(gaussian_field(grid))
        expected = (2.0 * np.pi) ** 1.5 * np.exp(-0.5 * grid.momentum_sq)
        err = np.max(np.abs(out.values - expected)) / (2.0 * np.pi) ** 1.5
        assert err < 1e-8

    @pytest.mark.parametrize("dim,counts", [(2, (32, 16)), (3, (16, 12, 10))])
    def test_round_trip(self, dim, counts):
        rng = np.random.default_rng(7)
        grid = make_grid(dim, tuple(3.0 * n / 8 for n in counts), counts)
        values = rng.standard_normal(counts) + 1j * rng.standard_normal(counts)
        f = SampledField(grid, values, Space.POSITION)
        back = inverse_ft(forward_ft(f))
        assert back.space is Space.POSITION
        np.testing.assert_allclose(back.values, values, rtol=0, atol=1e-12 * np.max(np.abs(values)))

    def test_plancherel(self):
        rng = np.random.default_rng(11)
        grid = make_grid(2, (12.0, 9.0), (48, 36))
        values = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        f = SampledField(grid, values, Space.POSITION)
        ft = forward_ft(f)
        pos_norm = np.sum(np.abs(values) ** 2) * grid.cell_volume
        mom_norm = (
            np.sum(np.abs(ft.values) ** 2)
            * grid.momentum_cell_volume
            / (2.0 * np.pi) ** grid.dim
        )
        assert mom_norm == pytest.approx(pos_norm, rel=1e-10)

    def test_translation_phase(self):
        # shifting samples by one node multiplies the transform by exp(-i p.h)
        rng = np.random.default_rng(3)
        grid = make_grid(2, (8.0, 8.0), (16, 16))
        values = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        base = forward_ft(SampledField(grid, values, Space.POSITION)).values
        shifted = forward_ft(
            SampledField(grid, np.roll(values, 1, axis=0), Space.POSITION)
        ).values
        phase = np.exp(-1j * grid.momentum_mesh()[0] * grid.spacing[0])
        np.testing.assert_allclose(
            shifted, base * phase, atol=1e-12 * np.max(np.abs(base))
        )

    def test_single_spike_transform(self):
        # one unit sample at node x* gives exp(-i p.x*) * cell_volume exactly
        grid = make_grid(2, (4.0, 4.0), (8, 8))
        values = np.zeros(grid.shape, dtype=complex)
        values[3, 5] = 1.0
        out = forward_ft(SampledField(grid, values, Space.POSITION)).values
        xs = (grid.position_axis(0)[3], grid.position_axis(1)[5])
        pm = grid.momentum_mesh()
        expected = grid.cell_volume * np.exp(-1j * (pm[0] * xs[0] + pm[1] * xs[1]))
        np.testing.assert_allclose(out, expected, atol=1e-13)

    def test_inverse_of_constant_is_spike(self):
        grid = make_grid(2, (4.0, 4.0), (8, 8))
        c = 2.0 - 1.0j
        out = inverse_ft(
            SampledField(grid, np.full(grid.shape, c), Space.MOMENTUM)
        ).values
        expected = np.zeros(grid.shape, dtype=complex)
        i0 = grid.counts[0] // 2  # index of x = 0
        expected[i0, i0] = c / grid.cell_volume
        np.testing.assert_allclose(out, expected, atol=1e-12 / grid.cell_volume)

    def test_space_mismatch_raises(self):
        grid = make_grid(2, (4.0, 4.0), (8, 8))
        f = SampledField(grid, np.zeros(grid.shape), Space.MOMENTUM)
        with pytest.raises(ValueError):
            forward_ft(f)
        with pytest.raises(ValueError):
            inverse_ft(SampledField(grid, np.zeros(grid.shape), Space.POSITION))

    def test_rejects_nonfinite(self):
        grid = make_grid(2, (4.0, 4.0), (8, 8))
        values = np.zeros(grid.shape, dtype=complex)
        values[0, 0] = np.nan
        with pytest.raises(ValueError):
            SampledField(grid, values, Space.POSITION)


class TestNudft:
    def test_matches_forward_ft_at_nodes(self):
        rng = np.random.default_rng(5)
        grid = make_grid(2, (9.0, 7.0), (24, 16))
        values = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        f = SampledField(grid, values, Space.POSITION)
        ft = forward_ft(f).values
        idx = [(0, 0), (3, 5), (13, 2), (23, 15), (12, 8)]
        points = np.array(
            [[grid.momentum_axis(0)[i], grid.momentum_axis(1)[j]] for i, j in idx]
        )
        direct = nudft(f, points)
        expected = np.array([ft[i, j] for i, j in idx])
        np.testing.assert_allclose(direct, expected, rtol=0, atol=1e-12 * np.max(np.abs(ft)))

    def test_matches_forward_ft_at_nodes_3d(self):
        rng = np.random.default_rng(6)
        grid = make_grid(3, (6.0, 5.0, 4.0), (12, 10, 8))
        values = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        f = SampledField(grid, values, Space.POSITION)
        ft = forward_ft(f).values
        idx = [(0, 0, 0), (5, 2, 7), (11, 9, 3)]
        points = np.array(
            [
                [grid.momentum_axis(0)[i], grid.momentum_axis(1)[j], grid.momentum_axis(2)[l]]
                for i, j, l in idx
            ]
        )
        direct = nudft(f, points)
        expected = np.array([ft[i, j, l] for i, j, l in idx])
        np.testing.assert_allclose(direct, expected, rtol=0, atol=1e-12 * np.max(np.abs(ft)))

    def test_gaussian_off_grid_point(self):
        grid = make_grid(2, (30.0, 30.0), (64, 64))
        f = gaussian_field(grid)
        p = np.array([[0.3, 0.7]])
        expected = 2.0 * np.pi * np.exp(-0.5 * (0.3**2 + 0.7**2))
        got = nudft(f, p)[0]
        assert abs(got - expected) / (2.0 * np.pi) < 1e-8

    def test_zero_field(self):
        grid = make_grid(2, (4.0, 4.0), (8, 8))
        f = SampledField(grid, np.zeros(grid.shape), Space.POSITION)
        out = nudft(f, np.array([[0.1, 0.2], [1.0, -1.0]]))
        np.testing.assert_array_equal(out, 0.0)

    def test_rejects_bad_points(self):
        grid = make_grid(2, (4.0, 4.0), (8, 8))
        f = SampledField(grid, np.zeros(grid.shape), Space.POSITION)
        with pytest.raises(ValueError):
            nudft(f, np.array([[0.1, 0.2, 0.3]]))
        with pytest.raises(ValueError):
            nudft(f, np.array([[np.inf, 0.0]]))


class TestDirections:
    def test_2d_equal_angles(self):
        ds = sphere_directions(2, 1.5, 8, (0.0, 1.0))
        assert ds.count == 8
        np.testing.assert_allclose(ds.unit_vectors[0], [0.0, 1.0], atol=1e-15)
        angles = np.arctan2(ds.unit_vectors[:, 1], ds.unit_vectors[:, 0])
        diffs = np.diff(np.unwrap(angles))
        np.testing.assert_allclose(diffs, 2 * np.pi / 8, atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(ds.momenta, axis=1), 1.5)

    def test_3d_first_is_incident(self):
        ds = sphere_directions(3, 2.0, 100, (0.0, 0.0, 1.0))
        np.testing.assert_array_equal(ds.unit_vectors[0], [0.0, 0.0, 1.0])
        norms = np.linalg.norm(ds.unit_vectors, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)

    def test_3d_points_are_distinct(self):
        ds = sphere_directions(3, 1.0, 64, (1.0, 0.0, 0.0))
        dots = ds.unit_vectors @ ds.unit_vectors.T
        np.fill_diagonal(dots, -1.0)
        # strictly positive pairwise angular separation
        assert np.max(dots) < 1.0 - 1e-8

    def test_single_direction(self):
        ds = sphere_directions(3, 1.0, 1, (0.0, 1.0, 0.0))
        assert ds.count == 1
        np.testing.assert_allclose(ds.unit_vectors[0], [0.0, 1.0, 0.0])

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            sphere_directions(2, 1.0, 0, (1.0, 0.0))
        with pytest.raises(ValueError):
            sphere_directions(2, 1.0, 4, (0.0, 0.0))
        with pytest.raises(ValueError):
            DirectionSet(k=1.0, unit_vectors=np.array([[2.0, 0.0]]))


class TestHelpers:
    def test_transverse_basis_2d(self):
        (e,) = transverse_basis((1.0, 0.0))
        np.testing.assert_allclose(e, [0.0, 1.0])

    def test_transverse_basis_3d_right_handed(self):
        e1, e2 = transverse_basis((1.0, 0.0, 0.0))
        np.testing.assert_allclose(e1, [0.0, 1.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(e2, [0.0, 0.0, 1.0], atol=1e-15)
        u = np.array([0.3, -0.5, 0.8])
        e1, e2 = transverse_basis(u)
        un = u / np.linalg.norm(u)
        assert abs(e1 @ un) < 1e-12 and abs(e2 @ un) < 1e-12
        np.testing.assert_allclose(np.cross(un, e1), e2, atol=1e-12)

    def test_plane_wave_magnitude_and_phase(self):
        grid = make_grid(2, (6.0, 6.0), (12, 12))
        k = np.array([grid.momentum_spacing[0] * 2, 0.0])
        wave = plane_wave(grid, k)
        np.testing.assert_allclose(np.abs(wave), 1.0)
        assert wave[grid.counts[0] // 2, 0] == pytest.approx(1.0)  # x = 0 node

    def test_snap_to_lattice(self):
        grid = make_grid(2, (10.0, 10.0), (16, 16))
        dp = grid.momentum_weights if hasattr(grid, "momentum_weights") else grid.momentum_spacing
        snapped = snap_to_momentum_lattice(grid, (1.0, -0.2))
        np.testing.assert_allclose(snapped / np.asarray(dp), np.round(snapped / np.asarray(dp)))
        assert abs(snapped[0] - 1.0) <= dp[0] / 2 + 1e-15
        assert abs(snapped[1] + 0.2) <= dp[1] / 2 + 1e-15


class TestFieldIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        grid = make_grid(2, (5.0, 4.0), (16, 8))
        values = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        f = SampledField(grid, values, Space.MOMENTUM)
        path = tmp_path / "field.bin"
        save_field(path, f)
        back = load_field(path)
        assert back.grid == grid
        assert back.space is Space.MOMENTUM
        np.testing.assert_array_equal(back.values, values)

    def test_header_is_json_line(self, tmp_path):
        import json

        grid = make_grid(3, (4.0, 4.0, 4.0), (8, 8, 8))
        f = SampledField(grid, np.zeros(grid.shape), Space.POSITION)
        path = tmp_path / "field.bin"
        save_field(path, f)
        first = path.read_bytes().split(b"\n", 1)[0]
        header = json.loads(first)
        assert header["dim"] == 3
        assert header["space"] == "position"
        assert header["counts"] == [8, 8, 8]

    def test_truncated_payload_rejected(self, tmp_path):
        grid = make_grid(2, (4.0, 4.0), (8, 8))
        f = SampledField(grid, np.ones(grid.shape), Space.POSITION)
        path = tmp_path / "field.bin"
        save_field(path, f)
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(ValueError):
            load_field(path)
