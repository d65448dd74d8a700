"""Learning-filter and robustness-filter synthesis for the repetitive add-on.

Two-step design: invert the fitted complementary sensitivity with ZPETC to
get a causal learning filter plus a forward shift, then pick a zero-phase FIR
lowpass whose cutoff keeps |Q(1 - T*L)| below one on every patient response.
The forward shifts are later absorbed by shortening the memory loop, so the
shift budget l_shift + q_shift must fit inside one period.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DesignError
from .lti import (
    DiscreteTransferFunction,
    FirKernel,
    FrequencyResponse,
    hz_to_rad_per_sample,
    polyval_zinv,
)
from .sysid import fit_rational


@dataclass
class RcFilterSet:
    """Causal learning filter, its forward shift, the robustness kernel, and N."""

    l_causal: DiscreteTransferFunction
    l_shift: int
    q_kernel: FirKernel
    period_n: int

    def __post_init__(self):
        if self.l_shift < 0:
            raise ConfigurationError("l_shift must be nonnegative")
        if self.period_n <= 0:
            raise ConfigurationError("period_n must be positive")
        if self.l_shift + self.q_kernel.forward_shift > self.period_n:
            raise ConfigurationError(
                f"shift budget violated: l_shift {self.l_shift} + q shift "
                f"{self.q_kernel.forward_shift} exceeds period {self.period_n}"
            )
        if not self.q_kernel.zero_phase:
            raise ConfigurationError("q_kernel must be zero-phase (symmetric)")
        # up to 1% DC deficit is allowed: keeping |Q| <= 1 everywhere wins
        # over exact unity when Gibbs ripple forces a rescale
        if abs(self.q_kernel.dc_gain() - 1.0) > 1e-2:
            raise ConfigurationError(
                f"q_kernel DC gain {self.q_kernel.dc_gain():.6f} is not unity"
            )

    @property
    def sample_time(self) -> float:
        return self.l_causal.sample_time

    def with_period(self, period_n: int) -> "RcFilterSet":
        """Same filters bound to a different period (the design is N-independent)."""
        return RcFilterSet(self.l_causal, self.l_shift, self.q_kernel, period_n)

    def learning_filter_response(self, frequencies_hz) -> np.ndarray:
        """Complex response of the non-causal L = z^l_shift * L_c."""
        w = hz_to_rad_per_sample(frequencies_hz, self.sample_time)
        zinv = np.exp(-1j * w)
        lc = (polyval_zinv(self.l_causal.numerator_coeffs, zinv)
              / polyval_zinv(self.l_causal.denominator_coeffs, zinv)
              * zinv**self.l_causal.pure_delay)
        return lc * zinv ** (-self.l_shift)


@dataclass
class StabilityReport:
    """Per-frequency |Q(1 - T_i L)| rows and the pass/fail verdict."""

    frequencies_hz: np.ndarray
    magnitudes: dict[str, np.ndarray]
    per_plant_max: dict[str, float] = field(init=False)
    overall_max: float = field(init=False)
    passed: bool = field(init=False)
    margin: float = field(init=False)

    def __post_init__(self):
        self.per_plant_max = {k: float(np.max(v)) for k, v in self.magnitudes.items()}
        self.overall_max = max(self.per_plant_max.values())
        self.passed = self.overall_max < 1.0
        self.margin = 1.0 - self.overall_max

    def summary(self) -> str:
        lines = [
            f"  {name}: max |Q(1-TL)| = {mx:.4f}"
            for name, mx in self.per_plant_max.items()
        ]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"  overall max {self.overall_max:.4f} -> {verdict} (margin {self.margin:+.4f})")
        return "\n".join(lines)

    def save_csv(self, path) -> None:
        names = list(self.magnitudes)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frequency_hz"] + names)
            for i, f in enumerate(self.frequencies_hz):
                writer.writerow([repr(float(f))] + [repr(float(self.magnitudes[n][i])) for n in names])


def zpetc_invert(t_fit: DiscreteTransferFunction,
                 unstable_zero_tol: float = 1e-9) -> tuple[DiscreteTransferFunction, int]:
    """Approximate stable inverse of t_fit via zero-phase error compensation.

    The numerator is factored into an invertible part (zeros strictly inside
    the unit circle) and a kept part B- (zeros on/outside, treated as
    uninvertible).  The causal result is

        L_c = den(z) * B-reversed(z) / (invertible(z) * B-(1)^2)

    and the returned shift is (relative degree incl. the degree added by the
    reversed factor) + pure delay, so that z^shift * L_c gives t_fit * L real
    and >= 0 everywhere with exact unity at DC.
    """
    num = np.asarray(t_fit.numerator_coeffs, dtype=float)
    scale = np.max(np.abs(num)) if num.size else 0.0
    if scale == 0.0:
        raise ValueError("t_fit numerator is identically zero; nothing to invert")
    tol = 1e-12 * scale
    p = 0
    while abs(num[p]) <= tol:
        p += 1
    core = np.array(num[p:])
    while len(core) > 1 and abs(core[-1]) <= tol:
        core = core[:-1]

    if len(core) > 1:
        zeros = np.roots(core)
    else:
        zeros = np.array([])
    inside = zeros[np.abs(zeros) < 1.0 - unstable_zero_tol]
    kept = zeros[np.abs(zeros) >= 1.0 - unstable_zero_tol]

    def poly_of(zs, gain):
        c = np.array([1.0 + 0j])
        for z0 in zs:
            c = np.convolve(c, [1.0, -z0])
        return (gain * c).real  # conjugate pairs make this real

    b_plus = poly_of(inside, core[0])
    b_minus = poly_of(kept, 1.0)
    b_minus_at_1 = float(np.sum(b_minus))
    if abs(b_minus_at_1) < 1e-9 * max(1.0, np.max(np.abs(b_minus))):
        raise ValueError(
            "uninvertible numerator factor vanishes at z = 1; the fit has a "
            "zero at DC and needs manual treatment"
        )

    l_num = np.convolve(t_fit.denominator_coeffs, b_minus[::-1])
    l_den = b_plus * b_minus_at_1**2
    l_causal = DiscreteTransferFunction(l_num, l_den, 0, t_fit.sample_time)
    l_shift = p + (len(b_minus) - 1) + t_fit.pure_delay
    return l_causal, l_shift


def design_q_fir(cutoff_hz: float, order: int, sample_time: float) -> FirKernel:
    """Windowed-sinc (Hamming) zero-phase lowpass with unit DC gain.

    order must be even; the kernel has order+1 symmetric taps and forward
    shift order/2.  Taps are normalized to unit DC gain; if Gibbs ripple
    pushes the grid maximum of |Q| above 1 + 1e-6 the taps are rescaled so
    the response never exceeds one (at the cost of a sub-0.1% DC deficit).
    """
    nyquist = 0.5 / sample_time
    if not (0.0 < cutoff_hz < nyquist):
        raise ValueError(f"cutoff must lie in (0, {nyquist}) Hz, got {cutoff_hz}")
    if order <= 0 or order % 2 != 0:
        raise ValueError(f"order must be a positive even integer, got {order}")
    n = np.arange(order + 1, dtype=float)
    m = n - order / 2
    wc = 2.0 * np.pi * cutoff_hz * sample_time
    taps = np.empty(order + 1)
    nz = m != 0
    taps[nz] = np.sin(wc * m[nz]) / (np.pi * m[nz])
    taps[~nz] = wc / np.pi
    taps *= 0.54 - 0.46 * np.cos(2.0 * np.pi * n / order)
    taps /= taps.sum()
    kernel = FirKernel(taps, order // 2, zero_phase=True)
    probe = np.linspace(nyquist / 2048, nyquist, 2048)
    peak = float(np.max(np.abs(kernel.frequency_response(probe, sample_time))))
    if peak > 1.0 + 1e-6:
        kernel = FirKernel(taps / peak, order // 2, zero_phase=True)
    return kernel


def default_stability_grid(sample_time: float = 0.002) -> np.ndarray:
    """1000 linear points to Nyquist plus 200 log points over the low band."""
    nyquist = 0.5 / sample_time
    lin = np.linspace(nyquist / 1000, nyquist, 1000)
    log = np.logspace(np.log10(nyquist / 2500), np.log10(nyquist / 5.0), 200)
    return np.unique(np.concatenate([lin, log]))


def check_stability(q: FirKernel, l_causal: DiscreteTransferFunction, l_shift: int,
                    frfs: dict[str, FrequencyResponse]) -> StabilityReport:
    """Evaluate |Q(1 - T_i L)| for every plant response on its grid.

    The small-gain bound quantifies over all frequencies, so the shared grid
    should reach Nyquist (a warning is emitted otherwise) and be dense enough
    near the Q cutoff; default grids satisfy this.
    """
    if not frfs:
        raise ValueError("need at least one FRF to check")
    rows: dict[str, np.ndarray] = {}
    grid = None
    ts = None
    for name, frf in frfs.items():
        if ts is None:
            ts = frf.sample_time
            grid = frf.frequencies_hz
            nyq = 0.5 / ts
            # excited multisine grids stop one bin short of Nyquist; only a
            # materially short grid deserves the warning
            if grid[-1] < 0.98 * nyq:
                warnings.warn(
                    f"stability grid stops at {grid[-1]:.1f} Hz below Nyquist "
                    f"{nyq:.1f} Hz; the bound must hold at all frequencies",
                    stacklevel=2,
                )
        elif not (len(frf.frequencies_hz) == len(grid)
                  and np.allclose(frf.frequencies_hz, grid, rtol=0.0, atol=1e-9)):
            raise ValueError("all FRFs must share one frequency grid")
        w = hz_to_rad_per_sample(frf.frequencies_hz, ts)
        zinv = np.exp(-1j * w)
        l_val = (polyval_zinv(l_causal.numerator_coeffs, zinv)
                 / polyval_zinv(l_causal.denominator_coeffs, zinv)
                 * zinv**l_causal.pure_delay
                 * zinv ** (-l_shift))
        q_val = q.frequency_response(frf.frequencies_hz, ts)
        rows[name] = np.abs(q_val * (1.0 - frf.values * l_val))
    return StabilityReport(np.asarray(grid, dtype=float), rows)


def compute_modifying_sensitivity(q: FirKernel, l_causal: DiscreteTransferFunction,
                                  l_shift: int, t: FrequencyResponse,
                                  period_n: int) -> FrequencyResponse:
    """How the add-on loop reshapes the baseline sensitivity on t's grid.

    S_R = (1 - e^{-iwN} Q) / (1 - (1 - T L) e^{-iwN} Q); bins where the
    denominator is nearly singular (|den| < 1e-12) are flagged via a warning
    and returned as-is.
    """
    ts = t.sample_time
    w = hz_to_rad_per_sample(t.frequencies_hz, ts)
    zinv = np.exp(-1j * w)
    l_val = (polyval_zinv(l_causal.numerator_coeffs, zinv)
             / polyval_zinv(l_causal.denominator_coeffs, zinv)
             * zinv**l_causal.pure_delay
             * zinv ** (-l_shift))
    q_val = q.frequency_response(t.frequencies_hz, ts)
    loop = np.exp(-1j * w * period_n) * q_val
    den = 1.0 - (1.0 - t.values * l_val) * loop
    near = np.abs(den) < 1e-12
    if np.any(near):
        flagged = t.frequencies_hz[near]
        warnings.warn(
            f"modifying sensitivity nearly singular at {flagged[:5]} Hz",
            stacklevel=2,
        )
        den = np.where(near, np.inf, den)
    values = (1.0 - loop) / den
    return FrequencyResponse(t.frequencies_hz, values, ts)


def design_pipeline(frfs: dict[str, FrequencyResponse], mean_frf: FrequencyResponse,
                    order: int = 4, delay_samples: int = 12, cutoff_hz: float = 23.0,
                    q_order: int = 50, period_n: int = 2000,
                    min_margin: float = 0.05, fit_band_hz: tuple[float, float] = (0.0, 40.0),
                    fit_weighting: str = "relative") -> tuple[RcFilterSet, StabilityReport]:
    """Chain fit -> inversion -> lowpass design -> stability check.

    The parametric fit uses the mean response restricted to fit_band_hz with
    relative (1/|T|) weighting by default, matching the band where the mean
    is trustworthy.  Raises DesignError (with the report attached) if the
    bound fails or the margin is below min_margin.
    """
    lo, hi = fit_band_hz
    sel = (mean_frf.frequencies_hz >= lo) & (mean_frf.frequencies_hz <= hi)
    if np.count_nonzero(sel) < 2 * order + 1:
        raise ConfigurationError(
            f"fit band [{lo}, {hi}] Hz keeps too few bins for an order-{order} fit"
        )
    banded = FrequencyResponse(
        mean_frf.frequencies_hz[sel], mean_frf.values[sel], mean_frf.sample_time
    )
    if fit_weighting == "relative":
        weights = 1.0 / np.abs(banded.values)
    elif fit_weighting == "uniform":
        weights = None
    else:
        raise ValueError(f"unknown fit_weighting {fit_weighting!r}")
    t_fit = fit_rational(banded, order, delay_samples, weights=weights)
    l_causal, l_shift = zpetc_invert(t_fit)
    q_kernel = design_q_fir(cutoff_hz, q_order, mean_frf.sample_time)
    if l_shift + q_kernel.forward_shift > period_n:
        raise ConfigurationError(
            f"shift budget violated: {l_shift} + {q_kernel.forward_shift} > {period_n}"
        )
    report = check_stability(q_kernel, l_causal, l_shift, frfs)
    filterset = RcFilterSet(l_causal, l_shift, q_kernel, period_n)
    filterset.t_fit = t_fit
    if not report.passed:
        raise DesignError(
            f"stability bound failed: overall max {report.overall_max:.4f} >= 1",
            report=report,
        )
    if report.margin < min_margin:
        raise DesignError(
            f"stability margin {report.margin:.4f} below required {min_margin}",
            report=report,
        )
    return filterset, report


# -- filter-set persistence ---------------------------------------------------
#
# Plain-text sections: header, learning-filter numerator/denominator, shifts,
# robustness taps, period.


def save_filterset(filterset: RcFilterSet, path) -> None:
    lc = filterset.l_causal
    with open(path, "w") as fh:
        fh.write("ventrc-filterset v1\n")
        fh.write(f"sample_time {float(lc.sample_time)!r}\n")
        fh.write(f"period_n {filterset.period_n}\n")
        fh.write(f"l_shift {filterset.l_shift}\n")
        fh.write(f"l_delay {lc.pure_delay}\n")
        fh.write(f"q_shift {filterset.q_kernel.forward_shift}\n")
        fh.write(f"l_num {len(lc.numerator_coeffs)}\n")
        for c in lc.numerator_coeffs:
            fh.write(f"{float(c)!r}\n")
        fh.write(f"l_den {len(lc.denominator_coeffs)}\n")
        for c in lc.denominator_coeffs:
            fh.write(f"{float(c)!r}\n")
        fh.write(f"q_taps {len(filterset.q_kernel.taps)}\n")
        for t in filterset.q_kernel.taps:
            fh.write(f"{float(t)!r}\n")


def load_filterset(path) -> RcFilterSet:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if lines[0] != "ventrc-filterset v1":
        raise ConfigurationError(f"{path}: not a ventrc filter-set file")
    scalars = {}
    arrays = {}
    idx = 1
    while idx < len(lines):
        key, val = lines[idx].split()
        if key in ("l_num", "l_den", "q_taps"):
            count = int(val)
            arrays[key] = [float(v) for v in lines[idx + 1 : idx + 1 + count]]
            idx += 1 + count
        else:
            scalars[key] = val
            idx += 1
    l_causal = DiscreteTransferFunction(
        arrays["l_num"], arrays["l_den"],
        int(scalars.get("l_delay", 0)), float(scalars["sample_time"]),
    )
    q_kernel = FirKernel(arrays["q_taps"], int(scalars["q_shift"]), zero_phase=True)
    return RcFilterSet(l_causal, int(scalars["l_shift"]), q_kernel, int(scalars["period_n"]))
