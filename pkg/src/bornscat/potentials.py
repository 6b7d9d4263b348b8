"""Potentials whose Fourier transform vanishes on a momentum half-space.

The family combines a one-sided longitudinal profile with a hard transverse
slab.  With x_par = u.(x - x0) and transverse coordinates (y, z) in the
deterministic frame completing u,

    v(x) = coupling * exp(i alpha x_par) / (1 - i x_par / a)**(m + 1)

inside |y| <= ell_y/2 (and |z| <= ell_z/2 in 3D), zero outside.  Its
transform factorizes into a gated longitudinal part and slab sinc factors:

    V(p) = 2 pi a (a K)**m exp(-a K) step(K) / m!
           * coupling * ell_y sinc(p_y ell_y / 2) [* ell_z sinc(p_z ell_z / 2)]
           * exp(-i p.x0),          K = u.p - alpha,  sinc(t) = sin(t)/t,

so V(p) = 0 whenever u.p < alpha, which is the property everything
downstream relies on.  In 2D the z factor is simply dropped.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .grids import Grid, SampledField, Space, forward_ft, transverse_basis

__all__ = [
    "PotentialSpec",
    "PotentialSum",
    "SupportReport",
    "unit_step",
    "potential_value",
    "potential_spectrum",
    "sample_potential",
    "verify_support",
    "spec_to_dict",
    "spec_from_dict",
]

BOUNDARY_WARN_RATIO = 1e-3


def unit_step(x):
    """Heaviside step with the convention step(0) = 1."""
    return np.where(np.asarray(x) < 0.0, 0, 1)[()]


@dataclass(frozen=True)
class PotentialSpec:
    """Parameters of one member of the potential family.

    alpha   support threshold: the transform vanishes for u.p < alpha
    u       unit vector defining the longitudinal axis (length sets dim)
    a       longitudinal decay length (the profile falls off like
            |x_par/a|**-(m+1))
    m       longitudinal sharpness exponent, integer >= 1
    coupling  overall complex strength
    ell_y, ell_z  transverse slab widths (ell_z unused in 2D)
    center  offset x0 of the potential
    """

    alpha: float
    u: tuple
    a: float
    m: int
    coupling: complex
    ell_y: float
    ell_z: float = 0.0
    center: tuple = ()

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.shape not in ((2,), (3,)):
            raise ValueError("u must have 2 or 3 components")
        norm = np.linalg.norm(u)
        if not (np.all(np.isfinite(u)) and norm > 0):
            raise ValueError("u must be a nonzero finite vector")
        object.__setattr__(self, "u", tuple(u / norm))
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be positive")
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValueError("a must be positive")
        if self.m != int(self.m) or self.m < 1:
            raise ValueError("m must be an integer >= 1")
        object.__setattr__(self, "m", int(self.m))
        if not self.ell_y > 0:
            raise ValueError("ell_y must be positive")
        if self.dim == 3 and not self.ell_z > 0:
            raise ValueError("ell_z must be positive for a 3D potential")
        center = self.center if self.center else (0.0,) * self.dim
        center = tuple(float(c) for c in center)
        if len(center) != self.dim:
            raise ValueError("center must match the dimension of u")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "coupling", complex(self.coupling))

    @property
    def dim(self):
        return len(self.u)

    @property
    def alpha_min(self):
        return self.alpha


@dataclass(frozen=True)
class PotentialSum:
    """Superposition of family members sharing one longitudinal axis."""

    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("a potential sum needs at least one member")
        u0 = np.asarray(members[0].u)
        for spec in members[1:]:
            if spec.dim != members[0].dim:
                raise ValueError("all members must share one dimension")
            if np.linalg.norm(np.asarray(spec.u) - u0) > 1e-12:
                raise ValueError("all members must share the same axis u")
        object.__setattr__(self, "members", members)

    @property
    def dim(self):
        return self.members[0].dim

    @property
    def u(self):
        return self.members[0].u

    @property
    def alpha_min(self):
        """Effective support threshold of the superposition."""
        return min(spec.alpha for spec in self.members)


def _frame(spec):
    u = np.asarray(spec.u)
    return (u,) + transverse_basis(u)


def _single_value(spec, x):
    axes = _frame(spec)
    rel = x - np.asarray(spec.center)
    xl = rel @ axes[0]
    inside = np.abs(rel @ axes[1]) <= 0.5 * spec.ell_y
    if spec.dim == 3:
        inside = inside & (np.abs(rel @ axes[2]) <= 0.5 * spec.ell_z)
    core = spec.coupling * np.exp(1j * spec.alpha * xl)
    core = core / (1.0 - 1j * xl / spec.a) ** (spec.m + 1)
    return np.where(inside, core, 0.0)


def _sinc(t):
    # sin(t)/t with sinc(0) = 1; numpy's sinc carries the extra pi.
    return np.sinc(np.asarray(t) / np.pi)


def _single_spectrum(spec, p):
    axes = _frame(spec)
    pl = p @ axes[0]
    K = pl - spec.alpha
    gate = K >= 0.0
    Ksafe = np.where(gate, K, 0.0)
    longitudinal = (
        2.0
        * np.pi
        * spec.a
        * (spec.a * Ksafe) ** spec.m
        * np.exp(-spec.a * Ksafe)
        / math.factorial(spec.m)
    )
    longitudinal = np.where(gate, longitudinal, 0.0)
    out = longitudinal * spec.coupling * spec.ell_y * _sinc(0.5 * spec.ell_y * (p @ axes[1]))
    if spec.dim == 3:
        out = out * spec.ell_z * _sinc(0.5 * spec.ell_z * (p @ axes[2]))
    center = np.asarray(spec.center)
    if np.any(center):
        out = out * np.exp(-1j * (p @ center))
    return out


def _members(subject):
    if isinstance(subject, PotentialSum):
        return subject.members
    if isinstance(subject, PotentialSpec):
        return (subject,)
    raise TypeError(f"expected PotentialSpec or PotentialSum, got {type(subject)!r}")


def potential_value(subject, x):
    """Evaluate the potential (or a shared-axis sum) at positions x of shape (..., d)."""
    x = np.asarray(x, dtype=float)
    members = _members(subject)
    if x.shape[-1] != members[0].dim:
        raise ValueError(f"positions must have {members[0].dim} components")
    out = _single_value(members[0], x)
    for spec in members[1:]:
        out = out + _single_value(spec, x)
    return out


def potential_spectrum(subject, p):
    """Closed-form Fourier transform at momenta p of shape (..., d).

    Exactly zero (including at the threshold itself, since m >= 1) whenever
    u.p < alpha holds for every member.
    """
    p = np.asarray(p, dtype=float)
    members = _members(subject)
    if p.shape[-1] != members[0].dim:
        raise ValueError(f"momenta must have {members[0].dim} components")
    out = _single_spectrum(members[0], p)
    for spec in members[1:]:
        out = out + _single_spectrum(spec, p)
    return out


def sample_potential(subject, grid):
    """Sample the potential on a grid, warning when the box truncates it visibly."""
    members = _members(subject)
    if members[0].dim != grid.dim:
        raise ValueError("potential and grid dimensions differ")
    mesh = grid.position_mesh()
    x = np.stack(np.broadcast_arrays(*mesh), axis=-1)
    values = potential_value(subject, x)
    overall = np.max(np.abs(values))
    if overall > 0:
        edge = 0.0
        for axis in range(grid.dim):
            for index in (0, -1):
                face = np.take(np.abs(values), index, axis=axis)
                edge = max(edge, float(np.max(face)))
        if edge > BOUNDARY_WARN_RATIO * overall:
            warnings.warn(
                f"potential magnitude at the box boundary is {edge:.3e}, "
                f"more than {BOUNDARY_WARN_RATIO:g} of its maximum {overall:.3e}; "
                "enlarge the box to reduce truncation",
                stacklevel=2,
            )
    return SampledField(grid, values, Space.POSITION)


@dataclass
class SupportReport:
    """Outcome of checking that a transform vanishes on the half-space u.p < alpha."""

    alpha: float
    u: tuple
    forbidden_max: float
    overall_max: float
    tol: float

    @property
    def ratio(self):
        return self.forbidden_max / self.overall_max

    @property
    def passed(self):
        return self.forbidden_max <= self.tol * self.overall_max

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "u": list(self.u),
            "forbidden_max": self.forbidden_max,
            "overall_max": self.overall_max,
            "ratio": self.ratio,
            "tol": self.tol,
            "pass": self.passed,
        }


def verify_support(subject, u=None, alpha=None, tol=1e-3, grid=None):
    """Check on the momentum grid that |transform| is negligible for u.p < alpha.

    `subject` is either a position-space SampledField or a potential spec
    (which is then sampled on `grid`).  The check passes when the largest
    magnitude over forbidden nodes is at most tol times the overall maximum.
    """
    if isinstance(subject, (PotentialSpec, PotentialSum)):
        if grid is None:
            raise ValueError("a grid is required to verify a spec directly")
        if u is None:
            u = subject.u
        if alpha is None:
            alpha = subject.alpha_min
        subject = sample_potential(subject, grid)
    elif not isinstance(subject, SampledField):
        raise TypeError("subject must be a field or a potential spec")
    if u is None or alpha is None:
        raise ValueError("u and alpha are required when verifying a raw field")
    if subject.space is not Space.POSITION:
        raise ValueError("verify_support expects a position-space field")
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    spectrum = np.abs(forward_ft(subject).values)
    overall = float(np.max(spectrum))
    if overall == 0.0:
        raise ValueError("potential transform is identically zero; nothing to verify")
    p_par = subject.grid.momentum_parallel(u)
    forbidden = p_par < alpha
    forbidden_max = float(np.max(spectrum[forbidden])) if np.any(forbidden) else 0.0
    return SupportReport(
        alpha=float(alpha),
        u=tuple(u),
        forbidden_max=forbidden_max,
        overall_max=overall,
        tol=float(tol),
    )


def spec_to_dict(subject):
    """JSON-ready dict for a spec or a sum (a sum becomes a list)."""
    if isinstance(subject, PotentialSum):
        return [spec_to_dict(s) for s in subject.members]
    spec = subject
    return {
        "alpha": spec.alpha,
        "u": list(spec.u),
        "a": spec.a,
        "m": spec.m,
        "coupling": {"re": spec.coupling.real, "im": spec.coupling.imag},
        "ell_y": spec.ell_y,
        "ell_z": spec.ell_z,
        "center": list(spec.center),
    }


def spec_from_dict(data):
    """Rebuild a PotentialSpec (dict) or PotentialSum (list of dicts)."""
    if isinstance(data, list):
        return PotentialSum(tuple(spec_from_dict(d) for d in data))
    coupling = data["coupling"]
    if isinstance(coupling, dict):
        coupling = complex(coupling.get("re", 0.0), coupling.get("im", 0.0))
    else:
        coupling = complex(coupling)
    return PotentialSpec(
        alpha=float(data["alpha"]),
        u=tuple(data["u"]),
        a=float(data["a"]),
        m=int(data["m"]),
        coupling=coupling,
        ell_y=float(data["ell_y"]),
        ell_z=float(data.get("ell_z", 0.0)),
        center=tuple(data.get("center", ())),
    )
