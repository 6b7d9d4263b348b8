"""Scalar Born-series engine with half-space spectral-support checks.

The iteration runs in the plane-wave gauge: the incident term is
B0(x) = exp(i k.x) with unit amplitude, and each later term is obtained by
multiplying the previous one with the interaction v(x), transforming,
applying the regularized free propagator G(p) = 1/(k^2 - p^2 + i eps), and
transforming back:

    source_n(x) = v(x) * B_{n-1}(x)
    M_n(p)      = forward transform of source_n     (the pre-propagator numerator)
    B_n(x)      = inverse transform of G(p) * M_n(p)

Far-field scattering is controlled by M_n restricted to the shell |p| = k,
which is evaluated by direct (non-uniform) Fourier sums so that no momentum
interpolation enters the vanishing checks.  The verification helpers below
certify, as scale-free ratio tests, that interactions whose spectrum lives
in the half-space u.p >= alpha produce Born terms whose spectra stay out of
prescribed momentum regions, and that on-shell contributions vanish for all
orders above floor(2k/alpha).
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .grids import (
    DirectionSet,
    Grid,
    SampledField,
    Space,
    fft_values,
    ifft_values,
    inverse_ft,
    nudft,
    plane_wave,
    snap_to_momentum_lattice,
    sphere_directions,
)

__all__ = [
    "DivergenceError",
    "ScatterConfig",
    "BornTerm",
    "OnShellRecord",
    "BandCheck",
    "ShellCheck",
    "VerificationReport",
    "ExactnessReport",
    "DIVERGENCE_RATIO",
    "green_factor",
    "exactness_order",
    "make_scatter_config",
    "incident_term",
    "born_step",
    "born_series",
    "on_shell_numerator",
    "amplitude_factor",
    "amplitude_contribution",
    "verify_spectral_floor",
    "verify_order_bands",
    "verify_convolution_support",
    "verify_exactness",
    "write_on_shell_csv",
]

# A term whose position-space magnitude exceeds the first-order term by this
# factor signals a divergent series (strong coupling), not roundoff.
DIVERGENCE_RATIO = 1e12


class DivergenceError(RuntimeError):
    """Born series grew past the divergence guard at some order."""

    def __init__(self, order, magnitude, reference):
        self.order = order
        self.magnitude = magnitude
        self.reference = reference
        super().__init__(
            f"series diverged at order {order}: max |term| = {magnitude:.3e} "
            f"exceeds {DIVERGENCE_RATIO:.0e} x first-order scale {reference:.3e}"
        )


def green_factor(p_sq, k, eps):
    """Regularized free propagator 1/(k^2 - p_sq + i*eps)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return 1.0 / (k * k - np.asarray(p_sq) + 1j * eps)


def exactness_order(k, alpha):
    """Largest integer not exceeding 2k/alpha.

    Orders above this vanish on the shell |p| = k for interactions supported
    in u.p >= alpha.  A tiny nudge absorbs float drift so that exact-integer
    ratios land on the integer.
    """
    if not (k > 0 and alpha > 0):
        raise ValueError("k and alpha must be positive")
    return int(math.floor(2.0 * k / alpha + 1e-9))


@dataclass(frozen=True)
class ScatterConfig:
    """Everything a Born run needs besides the sampled interaction.

    k is the magnitude of the snapped incident wave vector k_vec (always a
    momentum-lattice node, so the incident plane wave is exactly periodic on
    the box).  u and alpha describe the interaction's spectral half-space
    u.p >= alpha; directions are the on-shell sample set at |p| = k.
    """

    grid: Grid
    k: float
    k_vec: tuple
    u: tuple
    alpha: float
    epsilon: float
    n_orders: int
    directions: DirectionSet

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be positive (wave vector snapped to zero?)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.k >= min(self.grid.nyquist):
            raise ValueError(
                f"k = {self.k:.4g} must lie below the momentum band edge "
                f"{min(self.grid.nyquist):.4g}"
            )
        if self.n_orders < 0:
            raise ValueError("n_orders must be nonnegative")
        if len(self.k_vec) != self.grid.dim or len(self.u) != self.grid.dim:
            raise ValueError("k_vec and u must match the grid dimension")
        if abs(self.directions.k - self.k) > 1e-9 * self.k:
            raise ValueError("direction set wavenumber disagrees with config k")

    @property
    def dim(self):
        return self.grid.dim

    @property
    def k_hat(self):
        return tuple(c / self.k for c in self.k_vec)

    @property
    def exact_order(self):
        return exactness_order(self.k, self.alpha)


def make_scatter_config(
    grid,
    k,
    potential=None,
    *,
    u=None,
    alpha=None,
    k_hat=None,
    epsilon=None,
    eps_cells=2.0,
    n_orders=None,
    extra_orders=2,
    direction_count=64,
):
    """Assemble a ScatterConfig with the standard defaults.

    The support axis u and threshold alpha are taken from `potential` when
    given (a PotentialSpec or PotentialSum), else must be passed explicitly.
    The incident direction defaults to -u, so the wave travels into the
    half-space where the interaction spectrum lives; the wave vector is then
    snapped to the nearest momentum node and everything downstream (shell
    radius, directions, default regulator) uses the snapped magnitude.
    eps defaults to eps_cells * k * max(dp): the propagator shell is smoothed
    over about eps_cells momentum cells.
    """
    if potential is not None:
        u = tuple(potential.u) if u is None else u
        alpha = float(potential.alpha_min) if alpha is None else alpha
    if u is None or alpha is None:
        raise ValueError("need a potential or explicit u and alpha")
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    if u.shape != (grid.dim,):
        raise ValueError("u must match the grid dimension")
    if k_hat is None:
        k_hat = -u
    k_hat = np.asarray(k_hat, dtype=float)
    k_hat = k_hat / np.linalg.norm(k_hat)
    k_vec = snap_to_momentum_lattice(grid, float(k) * k_hat)
    k_snapped = float(np.linalg.norm(k_vec))
    if k_snapped == 0.0:
        raise ValueError(
            f"k = {k} snaps to the zero momentum node on this grid"
        )
    if epsilon is None:
        epsilon = eps_cells * k_snapped * max(grid.momentum_spacing)
    if n_orders is None:
        n_orders = exactness_order(k_snapped, alpha) + extra_orders
    directions = sphere_directions(
        grid.dim, k_snapped, direction_count, k_vec / k_snapped
    )
    return ScatterConfig(
        grid=grid,
        k=k_snapped,
        k_vec=tuple(float(c) for c in k_vec),
        u=tuple(float(c) for c in u),
        alpha=float(alpha),
        epsilon=float(epsilon),
        n_orders=int(n_orders),
        directions=directions,
    )


@dataclass
class BornTerm:
    """One order of the series.

    field is B_n(x).  For n >= 1, source is v * B_{n-1} in position space and
    numerator is its transform M_n(p); both are None at order 0, where the
    term is the bare incident wave.
    """

    order: int
    field: SampledField
    source: SampledField = None
    numerator: SampledField = None

    def __post_init__(self):
        if self.field.space is not Space.POSITION:
            raise ValueError("term field must be position-space")
        if (self.source is None) != (self.numerator is None):
            raise ValueError("source and numerator must be set together")
        if self.order == 0:
            if self.source is not None:
                raise ValueError("order 0 carries no source")
        elif self.source is None:
            raise ValueError("orders >= 1 need source and numerator")


def incident_term(config):
    """Order-0 term: the unit plane wave exp(i k.x)."""
    values = plane_wave(config.grid, config.k_vec)
    return BornTerm(order=0, field=SampledField(config.grid, values, Space.POSITION))


def born_step(prev, v_field, config, reference_scale=None):
    """Advance the series by one order.

    reference_scale, when given, is the first-order max magnitude used by the
    divergence guard.
    """
    grid = config.grid
    if v_field.space is not Space.POSITION:
        raise ValueError("v_field must be position-space")
    if v_field.grid != grid or prev.field.grid != grid:
        raise ValueError("term, interaction and config must share one grid")
    source_values = v_field.values * prev.field.values
    numerator_values = fft_values(source_values, grid)
    propagated = green_factor(grid.momentum_sq, config.k, config.epsilon)
    field_values = ifft_values(propagated * numerator_values, grid)
    magnitude = float(np.max(np.abs(field_values)))
    if reference_scale is not None and magnitude > DIVERGENCE_RATIO * reference_scale:
        raise DivergenceError(prev.order + 1, magnitude, reference_scale)
    return BornTerm(
        order=prev.order + 1,
        field=SampledField(grid, field_values, Space.POSITION),
        source=SampledField(grid, source_values, Space.POSITION),
        numerator=SampledField(grid, numerator_values, Space.MOMENTUM),
    )


def born_series(config, v_field):
    """Terms of orders 0..n_orders for the sampled interaction v_field."""
    terms = [incident_term(config)]
    reference = None
    for _ in range(config.n_orders):
        term = born_step(terms[-1], v_field, config, reference_scale=reference)
        if term.order == 1:
            reference = term.field.max_abs()
        terms.append(term)
    return terms


@dataclass
class OnShellRecord:
    """Shell samples M_n(k * direction) of one order's numerator."""

    order: int
    k: float
    directions: np.ndarray
    values: np.ndarray

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.values)))


def on_shell_numerator(term, config, directions=None):
    """Evaluate the order's numerator on the shell |p| = k.

    Uses the exact direct Fourier sum of the stored position-space source, so
    no interpolation touches the values.
    """
    if term.order < 1 or term.source is None:
        raise ValueError("on-shell evaluation needs a term of order >= 1")
    dirs = config.directions if directions is None else directions
    if abs(dirs.k - config.k) > 1e-9 * config.k:
        raise ValueError("direction set wavenumber disagrees with config k")
    values = nudft(term.source, dirs.momenta)
    return OnShellRecord(
        order=term.order,
        k=dirs.k,
        directions=np.array(dirs.unit_vectors, copy=True),
        values=values,
    )


def amplitude_factor(dim, k):
    """Constant relating shell numerators to far-field amplitudes.

    3D: -1/(4 pi).  2D: -exp(i pi/4)/sqrt(8 pi k), the outgoing-cylindrical
    normalization.  Cross-validated against the asymptotic far-field fit; the
    vanishing checks never depend on it.
    """
    if dim == 3:
        return -1.0 / (4.0 * np.pi)
    if dim == 2:
        return -np.exp(1j * np.pi / 4.0) / np.sqrt(8.0 * np.pi * k)
    raise ValueError("dim must be 2 or 3")


def amplitude_contribution(record, dim):
    """Far-field amplitude contributions f_n = c_dim * M_n(k')."""
    return amplitude_factor(dim, record.k) * record.values


# ---------------------------------------------------------------------------
# verification reports


@dataclass(frozen=True)
class BandCheck:
    """Max magnitude of one order's numerator inside a forbidden region."""

    order: int
    band: str
    forbidden_max: float
    reference_max: float
    vacuous: bool

    @property
    def ratio(self):
        if self.vacuous:
            return 0.0
        return self.forbidden_max / self.reference_max

    def passed(self, tol):
        return self.vacuous or self.ratio <= tol

    def to_dict(self, tol):
        return {
            "order": self.order,
            "band": self.band,
            "forbidden_max": self.forbidden_max,
            "reference_max": self.reference_max,
            "max_ratio": self.ratio,
            "vacuous": self.vacuous,
            "tol": tol,
            "pass": bool(self.passed(tol)),
        }


@dataclass(frozen=True)
class VerificationReport:
    """A named family of band checks sharing one tolerance."""

    name: str
    tol: float
    checks: tuple

    @property
    def passed(self):
        return all(c.passed(self.tol) for c in self.checks)

    @property
    def worst_ratio(self):
        live = [c.ratio for c in self.checks if not c.vacuous]
        return max(live) if live else 0.0

    def to_dict(self):
        return {
            "name": self.name,
            "tol": self.tol,
            "pass": bool(self.passed),
            "checks": [c.to_dict(self.tol) for c in self.checks],
        }


def _band_check(magnitudes, mask, order, band):
    reference = float(np.max(magnitudes))
    selected = magnitudes[mask]
    if reference == 0.0 or selected.size == 0:
        return BandCheck(order, band, 0.0, reference, vacuous=True)
    return BandCheck(
        order, band, float(np.max(selected)), reference, vacuous=False
    )


def _numerator_terms(series):
    terms = [t for t in series if t.order >= 1]
    if not terms:
        raise ValueError("series holds no terms beyond the incident wave")
    return terms


def verify_spectral_floor(series, u, k, tol=1e-3):
    """Check that every order's spectrum avoids the floor u.p < -k.

    Interactions supported in u.p >= alpha with alpha > 0 can only push
    spectral weight toward larger u.p, so no order reaches below -k (the
    lowest component of the incident wave).  Each check compares the max
    magnitude below the floor with the order's global max.
    """
    checks = []
    for term in _numerator_terms(series):
        grid = term.numerator.grid
        p_par = grid.momentum_parallel(u)
        mask = p_par < -k
        checks.append(
            _band_check(
                np.abs(term.numerator.values),
                mask,
                term.order,
                f"u.p < {-k:.6g}",
            )
        )
    return VerificationReport("spectral-floor", float(tol), tuple(checks))


def verify_order_bands(series, u, k, alpha, tol=1e-3):
    """Check the per-order forbidden bands around the shell.

    With N = floor(2k/alpha), the order-m spectrum must vanish on
    -k <= u.p <= k - (N - m + 1)*alpha: each interaction factor shifts the
    spectral support up by at least alpha, so low orders cannot yet have
    fallen back down onto the shell band.  Empty bands are reported vacuous.
    """
    n_exact = exactness_order(k, alpha)
    checks = []
    for term in _numerator_terms(series):
        grid = term.numerator.grid
        p_par = grid.momentum_parallel(u)
        upper = k - (n_exact - term.order + 1) * alpha
        mask = (p_par >= -k) & (p_par <= upper)
        checks.append(
            _band_check(
                np.abs(term.numerator.values),
                mask,
                term.order,
                f"{-k:.6g} <= u.p <= {upper:.6g}",
            )
        )
    return VerificationReport("order-bands", float(tol), tuple(checks))


def verify_convolution_support(
    grid, u, mu, nu, width=None, trials=3, seed=0, tol=1e-10
):
    """Support addition under pointwise products, on random band spectra.

    Draws random spectra supported in mu <= u.p <= mu + width and
    nu <= u.p <= nu + width, multiplies the corresponding position-space
    fields, and checks that the product's spectrum vanishes for
    u.p < mu + nu.  Both spectra are additionally confined to the central
    45% of each momentum axis so index sums cannot wrap around the band
    edges, keeping the circular grid convolution faithful to the continuum
    statement.  One check per trial; empty effective bands come out vacuous.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    p_par = grid.momentum_parallel(u)
    if width is None:
        width = 0.3 * float(np.max(p_par))
    if width <= 0:
        raise ValueError("width must be positive")
    core = np.ones(grid.shape, dtype=bool)
    for axis, p in enumerate(grid.momentum_mesh()):
        core &= np.abs(p) <= 0.45 * grid.nyquist[axis]
    mask_f = core & (p_par >= mu) & (p_par <= mu + width)
    mask_g = core & (p_par >= nu) & (p_par <= nu + width)
    forbidden = p_par < mu + nu
    band = f"u.p < {mu + nu:.6g}"
    checks = []
    for trial in range(trials):
        rng = np.random.default_rng(seed + trial)
        spectra = []
        for mask in (mask_f, mask_g):
            s = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
            spectra.append(s * mask)
        f = ifft_values(spectra[0], grid)
        g = ifft_values(spectra[1], grid)
        product_spectrum = fft_values(f * g, grid)
        checks.append(
            _band_check(np.abs(product_spectrum), forbidden, trial, band)
        )
    return VerificationReport("convolution-support", float(tol), tuple(checks))


@dataclass(frozen=True)
class ShellCheck:
    """On-shell max of one order's numerator against its global max."""

    order: int
    shell: str
    on_shell_max: float
    reference_max: float
    must_vanish: bool

    @property
    def ratio(self):
        if self.reference_max == 0.0:
            return 0.0
        return self.on_shell_max / self.reference_max

    def passed(self, tol):
        return (not self.must_vanish) or self.ratio <= tol

    def to_dict(self, tol):
        return {
            "order": self.order,
            "shell": self.shell,
            "on_shell_max": self.on_shell_max,
            "reference_max": self.reference_max,
            "max_ratio": self.ratio,
            "must_vanish": self.must_vanish,
            "tol": tol,
            "pass": bool(self.passed(tol)),
        }


@dataclass(frozen=True)
class ExactnessReport:
    """Shell checks for every computed order of one run.

    Orders above exact_order = floor(2k/alpha) must vanish on the shell;
    lower orders are reported as observed, with no bound asserted.
    """

    k: float
    alpha: float
    exact_order: int
    tol: float
    checks: tuple
    records: tuple

    @property
    def passed(self):
        return all(c.passed(self.tol) for c in self.checks)

    def check_for(self, order):
        for c in self.checks:
            if c.order == order:
                return c
        raise KeyError(f"no order-{order} check in this report")

    def to_dict(self):
        return {
            "k": self.k,
            "alpha": self.alpha,
            "exact_order": self.exact_order,
            "tol": self.tol,
            "pass": bool(self.passed),
            "checks": [c.to_dict(self.tol) for c in self.checks],
        }


def verify_exactness(config, series_or_v, tol=1e-3, directions=None):
    """Shell-vanishing report for all orders above floor(2k/alpha).

    Accepts either a precomputed series (list of BornTerm) or a sampled
    interaction, in which case the series is computed here.  Each order's
    numerator is sampled on the shell by direct Fourier sums and compared,
    as a ratio, against its own global momentum-grid max.
    """
    if isinstance(series_or_v, SampledField):
        series = born_series(config, series_or_v)
    else:
        series = list(series_or_v)
    n_exact = config.exact_order
    if series[-1].order < n_exact + 1:
        raise ValueError(
            f"series reaches order {series[-1].order} but testing exactness at "
            f"N = {n_exact} needs at least order {n_exact + 1}"
        )
    shell_label = f"|p| = {config.k:.6g}"
    checks = []
    records = []
    for term in _numerator_terms(series):
        record = on_shell_numerator(term, config, directions=directions)
        records.append(record)
        checks.append(
            ShellCheck(
                order=term.order,
                shell=shell_label,
                on_shell_max=record.max_abs,
                reference_max=term.numerator.max_abs(),
                must_vanish=term.order > n_exact,
            )
        )
    return ExactnessReport(
        k=config.k,
        alpha=config.alpha,
        exact_order=n_exact,
        tol=float(tol),
        checks=tuple(checks),
        records=tuple(records),
    )


def write_on_shell_csv(path, records):
    """Write shell records as CSV: order, direction components, re, im."""
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    dim = records[0].directions.shape[1]
    axis_names = ["dir_x", "dir_y", "dir_z"][:dim]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["order", *axis_names, "re", "im"])
        for record in records:
            for direction, value in zip(record.directions, record.values):
                writer.writerow(
                    [record.order]
                    + [repr(float(c)) for c in direction]
                    + [repr(float(value.real)), repr(float(value.imag))]
                )
