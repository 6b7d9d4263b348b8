"""Uniform grids and continuum-normalized Fourier transforms.

Positions live on a centered box [-L_i/2, L_i/2) sampled at n_i nodes per
axis, so x_j = -L_i/2 + j*h_i with h_i = L_i/n_i.  Momentum nodes are the
FFT frequencies 2*pi*fftfreq(n_i, h_i): spacing dp_i = 2*pi/L_i, zero is a
node, and the covered band is [-pi/h_i, pi/h_i).  Momentum-space arrays are
kept in FFT (unshifted) order throughout.

The transform pair is weighted to approximate the continuum integrals

    forward:  F(p) = sum_x exp(-i p.x) f(x) * prod(h_i)
    inverse:  f(x) = (2 pi)**-d * sum_p exp(i p.x) F(p) * prod(dp_i)

which makes the two grid operations exactly inverse to each other.
"""

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "Space",
    "Grid",
    "SampledField",
    "DirectionSet",
    "make_grid",
    "forward_ft",
    "inverse_ft",
    "fft_values",
    "ifft_values",
    "nudft",
    "nudft_values",
    "sphere_directions",
    "transverse_basis",
    "plane_wave",
    "snap_to_momentum_lattice",
    "save_field",
    "load_field",
]


class Space(Enum):
    """Which representation a sampled field lives in."""

    POSITION = "position"
    MOMENTUM = "momentum"


@dataclass(frozen=True)
class Grid:
    """Uniform sampling of a centered 2- or 3-dimensional box.

    Parameters
    ----------
    extents:
        Physical box lengths (L_1, ..., L_d); axis i spans [-L_i/2, L_i/2).
    counts:
        Nodes per axis (n_1, ..., n_d); each must be even and at least 8.
    """

    extents: tuple
    counts: tuple

    def __post_init__(self):
        if len(self.extents) != len(self.counts):
            raise ValueError("extents and counts must have the same length")
        if len(self.counts) not in (2, 3):
            raise ValueError("only 2- and 3-dimensional grids are supported")
        for L in self.extents:
            if not (math.isfinite(L) and L > 0):
                raise ValueError(f"extents must be positive, got {L}")
        for n in self.counts:
            if n != int(n) or n < 8:
                raise ValueError(f"counts must be integers >= 8, got {n}")
            if n % 2 != 0:
                raise ValueError(f"counts must be even, got {n}")
        object.__setattr__(self, "extents", tuple(float(L) for L in self.extents))
        object.__setattr__(self, "counts", tuple(int(n) for n in self.counts))

    @property
    def dim(self):
        return len(self.counts)

    @property
    def shape(self):
        return self.counts

    @property
    def size(self):
        return int(np.prod(self.counts))

    @cached_property
    def spacing(self):
        """Node spacing h_i = L_i / n_i per axis."""
        return tuple(L / n for L, n in zip(self.extents, self.counts))

    @cached_property
    def momentum_spacing(self):
        """Momentum node spacing dp_i = 2*pi / L_i per axis."""
        return tuple(2.0 * np.pi / L for L in self.extents)

    @cached_property
    def nyquist(self):
        """Half-width pi/h_i of the momentum band per axis."""
        return tuple(np.pi / h for h in self.spacing)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def momentum_cell_volume(self):
        return float(np.prod(self.momentum_spacing))

    def position_axis(self, axis):
        """Node coordinates -L/2 + j*h along one axis."""
        n = self.counts[axis]
        h = self.spacing[axis]
        return -0.5 * self.extents[axis] + h * np.arange(n)

    def momentum_axis(self, axis):
        """Momentum node coordinates along one axis, FFT order."""
        n = self.counts[axis]
        return 2.0 * np.pi * np.fft.fftfreq(n, d=self.spacing[axis])

    def _bcast(self, values, axis):
        shape = [1] * self.dim
        shape[axis] = self.counts[axis]
        return values.reshape(shape)

    def position_mesh(self):
        """Per-axis coordinate arrays shaped for mutual broadcasting."""
        return [self._bcast(self.position_axis(i), i) for i in range(self.dim)]

    def momentum_mesh(self):
        return [self._bcast(self.momentum_axis(i), i) for i in range(self.dim)]

    @cached_property
    def momentum_sq(self):
        """|p|^2 on the momentum grid (full array, FFT order)."""
        out = np.zeros(self.shape)
        for p in self.momentum_mesh():
            out = out + p * p
        return out

    def momentum_parallel(self, u):
        """u.p on the momentum grid for a unit vector u."""
        u = np.asarray(u, dtype=float)
        out = np.zeros(self.shape)
        for ui, p in zip(u, self.momentum_mesh()):
            out = out + ui * p
        return out

    @cached_property
    def _forward_phase(self):
        # exp(-i p.x0) with x0 the box corner; turns the raw FFT into the
        # centered-box transform.
        out = np.ones(self.shape, dtype=complex)
        for i in range(self.dim):
            x0 = -0.5 * self.extents[i]
            out = out * self._bcast(np.exp(-1j * self.momentum_axis(i) * x0), i)
        return out


def make_grid(dim, extents, counts):
    """Build a Grid, rejecting inconsistent or under-resolved requests."""
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    extents = tuple(extents)
    counts = tuple(counts)
    if len(extents) != dim or len(counts) != dim:
        raise ValueError("extents and counts must both have length dim")
    return Grid(extents=extents, counts=counts)


@dataclass
class SampledField:
    """Complex field values sampled on a grid, in position or momentum space."""

    grid: Grid
    values: np.ndarray
    space: Space

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.values = values

    def max_abs(self):
        return float(np.max(np.abs(self.values)))


def fft_values(values, grid):
    """Continuum-normalized forward transform of raw values (trailing grid axes)."""
    out = np.fft.fftn(values, axes=tuple(range(-grid.dim, 0)))
    return out * (grid.cell_volume * grid._forward_phase)


def ifft_values(values, grid):
    """Inverse of :func:`fft_values` on raw values (trailing grid axes)."""
    out = np.fft.ifftn(values * np.conj(grid._forward_phase), axes=tuple(range(-grid.dim, 0)))
    return out / grid.cell_volume


def forward_ft(field):
    """Grid approximation of F(p) = integral exp(-i p.x) f(x) dx."""
    if field.space is not Space.POSITION:
        raise ValueError("forward_ft expects a position-space field")
    return SampledField(field.grid, fft_values(field.values, field.grid), Space.MOMENTUM)


def inverse_ft(field):
    """Grid approximation of f(x) = (2 pi)**-d integral exp(i p.x) F(p) dp."""
    if field.space is not Space.MOMENTUM:
        raise ValueError("inverse_ft expects a momentum-space field")
    return SampledField(field.grid, ifft_values(field.values, field.grid), Space.POSITION)


def nudft_values(values, grid, points):
    """Direct Fourier sum of raw position values at arbitrary momenta.

    Evaluates sum_x exp(-i p.x) f(x) * prod(h_i) by exact per-axis phase
    contraction; no interpolation is involved.  `points` has shape (P, d).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != grid.dim:
        raise ValueError(f"points must have {grid.dim} components")
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    phases = [
        np.exp(-1j * np.outer(points[:, i], grid.position_axis(i)))
        for i in range(grid.dim)
    ]
    if grid.dim == 2:
        tmp = phases[0] @ values                      # (P, n2)
        out = np.einsum("pb,pb->p", tmp, phases[1])
    else:
        tmp = np.tensordot(phases[0], values, axes=(1, 0))   # (P, n2, n3)
        tmp = np.einsum("pb,pbc->pc", phases[1], tmp)
        out = np.einsum("pc,pc->p", phases[2], tmp)
    return out * grid.cell_volume


def nudft(field, points):
    """Direct Fourier sum of a position-space field at arbitrary momenta.

    Agrees with forward_ft at momentum grid nodes and, through the
    periodicity of the node phases, evaluates wrapped momentum differences
    consistently with the circular grid convolution.
    """
    if field.space is not Space.POSITION:
        raise ValueError("nudft expects a position-space field")
    return nudft_values(field.values, field.grid, points)


def transverse_basis(axis_vector):
    """Deterministic orthonormal complement of a unit vector.

    Returns one perpendicular vector in 2D (the +90 degree rotation) and a
    right-handed pair (e1, e2) with e2 = axis x e1 in 3D.
    """
    u = np.asarray(axis_vector, dtype=float)
    norm = np.linalg.norm(u)
    if norm == 0 or not np.all(np.isfinite(u)):
        raise ValueError("axis vector must be nonzero and finite")
    u = u / norm
    if u.shape == (2,):
        return (np.array([-u[1], u[0]]),)
    if u.shape != (3,):
        raise ValueError("axis vector must have 2 or 3 components")
    ref = np.array([0.0, 1.0, 0.0])
    if abs(u @ ref) > 0.9:
        ref = np.array([0.0, 0.0, 1.0])
    e1 = ref - (u @ ref) * u
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    return (e1, e2)


@dataclass
class DirectionSet:
    """Unit scattering directions sharing one on-shell wavenumber.

    The first direction is always the incident one; `momenta` are the
    on-shell momenta k * unit_vectors.
    """

    k: float
    unit_vectors: np.ndarray

    def __post_init__(self):
        vecs = np.atleast_2d(np.asarray(self.unit_vectors, dtype=float))
        if vecs.shape[1] not in (2, 3):
            raise ValueError("directions must have 2 or 3 components")
        norms = np.linalg.norm(vecs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("direction vectors must have unit norm")
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ValueError("k must be positive and finite")
        self.unit_vectors = vecs

    @property
    def dim(self):
        return self.unit_vectors.shape[1]

    @property
    def count(self):
        return self.unit_vectors.shape[0]

    @property
    def momenta(self):
        return self.k * self.unit_vectors


def sphere_directions(dim, k, count, incident_direction):
    """Quasi-uniform on-shell directions starting at the incident one.

    2D: equally spaced angles beginning at the incident angle.  3D: a
    golden-angle spiral on the sphere, rotated so its first point is exactly
    the incident direction.
    """
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    if count < 1:
        raise ValueError("count must be at least 1")
    inc = np.asarray(incident_direction, dtype=float)
    if inc.shape != (dim,):
        raise ValueError(f"incident direction must have {dim} components")
    norm = np.linalg.norm(inc)
    if norm == 0:
        raise ValueError("incident direction must be nonzero")
    inc = inc / norm

    if dim == 2:
        theta0 = math.atan2(inc[1], inc[0])
        angles = theta0 + 2.0 * np.pi * np.arange(count) / count
        vecs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        vecs[0] = inc
    else:
        if count == 1:
            vecs = inc[None, :]
        else:
            s = np.arange(count)
            z = 1.0 - 2.0 * s / (count - 1)
            phi = s * np.pi * (3.0 - np.sqrt(5.0))
            rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
            e1, e2 = transverse_basis(inc)
            vecs = (
                rho[:, None] * np.cos(phi)[:, None] * e1[None, :]
                + rho[:, None] * np.sin(phi)[:, None] * e2[None, :]
                + z[:, None] * inc[None, :]
            )
            vecs[0] = inc
    vecs /= np.linalg.norm(vecs, axis=1)[:, None]
    return DirectionSet(k=float(k), unit_vectors=vecs)


def plane_wave(grid, k_vec):
    """exp(i k.x) sampled on the grid."""
    k_vec = np.asarray(k_vec, dtype=float)
    phase = np.zeros(grid.shape)
    for ki, x in zip(k_vec, grid.position_mesh()):
        phase = phase + ki * x
    return np.exp(1j * phase)


def snap_to_momentum_lattice(grid, k_vec):
    """Round a wave vector to the nearest momentum grid node."""
    k_vec = np.asarray(k_vec, dtype=float)
    if k_vec.shape != (grid.dim,):
        raise ValueError(f"wave vector must have {grid.dim} components")
    dp = np.asarray(grid.momentum_spacing)
    return np.round(k_vec / dp) * dp


def save_field(path, sampled):
    """Write a field as a JSON header line plus little-endian (re, im) float64 pairs."""
    header = {
        "dim": sampled.grid.dim,
        "counts": list(sampled.grid.counts),
        "extents": list(sampled.grid.extents),
        "space": sampled.space.value,
    }
    payload = np.ascontiguousarray(sampled.values).astype("<c16")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("ascii"))
        fh.write(b"\n")
        fh.write(payload.tobytes())


def load_field(path):
    """Read a field written by :func:`save_field`."""
    raw = Path(path).read_bytes()
    newline = raw.index(b"\n")
    header = json.loads(raw[:newline].decode("ascii"))
    grid = make_grid(header["dim"], header["extents"], header["counts"])
    values = np.frombuffer(raw[newline + 1 :], dtype="<c16")
    if values.size != grid.size:
        raise ValueError(
            f"payload holds {values.size} values, expected {grid.size}"
        )
    values = values.astype(complex).reshape(grid.shape)
    return SampledField(grid, values, Space(header["space"]))
