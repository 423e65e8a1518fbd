"""Closed-form error model: quantization noise power, combined distortion,
admissible and optimal companders, and the R_max grid search.

The model treats subblock entries as zero-mean iid variables; rounding after
companding adds uniform noise of standard deviation 1/(c*sqrt(12)) per
operand. The representation-induced error enters as a per-element RMSE
``s(R_max, W)`` measured by the calibration module, mapped back to the output
domain through the reverse companding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationMissingError, DegenerateInputError, InvalidConfigError

_SQRT12 = math.sqrt(12.0)


@dataclass(frozen=True)
class InputStats:
    """Second moments and extremes of one subblock pair."""

    sigma_a: float
    sigma_b: float
    a_min: float
    a_max: float
    b_min: float
    b_max: float
    L: int

    def __post_init__(self):
        if self.sigma_a < 0 or self.sigma_b < 0:
            raise InvalidConfigError("sigmas must be >= 0")
        if self.a_min > self.a_max or self.b_min > self.b_max:
            raise InvalidConfigError("inconsistent extremes (min > max)")

    @property
    def a_absmax(self) -> float:
        return max(abs(self.a_min), abs(self.a_max))

    @property
    def b_absmax(self) -> float:
        return max(abs(self.b_min), abs(self.b_max))

    @classmethod
    def from_tiles(cls, a_tile: np.ndarray, b_tile: np.ndarray) -> "InputStats":
        a = a_tile.astype(np.float64, copy=False)
        b = b_tile.astype(np.float64, copy=False)
        return cls(
            sigma_a=float(a.std(ddof=1)),
            sigma_b=float(b.std(ddof=1)),
            a_min=float(a.min()),
            a_max=float(a.max()),
            b_min=float(b.min()),
            b_max=float(b.max()),
            L=a_tile.shape[0],
        )


@dataclass(frozen=True)
class NoiseBudget:
    quant_power: float
    repr_power: float

    @property
    def total(self) -> float:
        return self.quant_power + self.repr_power


@dataclass(frozen=True)
class CompanderSolution:
    c_a: float
    c_b: float
    rmax: int
    expected_snr_db: float
    w: int


def quant_noise_power(stats: InputStats, c_a: float, c_b: float) -> float:
    """Expected per-element squared error from companding and rounding."""
    if c_a <= 0 or c_b <= 0:
        raise InvalidConfigError("companders must be positive")
    nv_a = 1.0 / (c_a * _SQRT12)
    nv_b = 1.0 / (c_b * _SQRT12)
    return stats.L * (
        (stats.sigma_a * nv_b) ** 2
        + (stats.sigma_b * nv_a) ** 2
        + (nv_a * nv_b) ** 2
    )


def signal_power(stats: InputStats) -> float:
    return stats.L * (stats.sigma_a * stats.sigma_b) ** 2


def expected_snr(stats: InputStats, c_a: float, c_b: float) -> float:
    """Quantization-only SNR in dB."""
    if stats.sigma_a == 0 or stats.sigma_b == 0:
        raise DegenerateInputError("SNR undefined for zero-sigma input")
    return 10.0 * math.log10(signal_power(stats) / quant_noise_power(stats, c_a, c_b))


def combined_distortion(stats: InputStats, c_a: float, c_b: float, s_repr: float) -> NoiseBudget:
    """Quantization plus representation noise power per output element.

    ``s_repr`` is the per-element RMSE measured at the (R_max, W) the
    companders imply, expressed in the quantized domain; reverse companding
    maps it to the output domain.
    """
    if s_repr < 0:
        raise InvalidConfigError("s_repr must be >= 0")
    return NoiseBudget(
        quant_power=quant_noise_power(stats, c_a, c_b),
        repr_power=(s_repr / (c_a * c_b)) ** 2,
    )


def model_snr_db(stats: InputStats, c_a: float, c_b: float, s_repr: float) -> float:
    """SNR predicted by the combined noise model, in dB."""
    if stats.sigma_a == 0 or stats.sigma_b == 0:
        raise DegenerateInputError("SNR undefined for zero-sigma input")
    total = combined_distortion(stats, c_a, c_b, s_repr).total
    return 10.0 * math.log10(signal_power(stats) / total)


def c_tot(L: int, a_absmax: float, b_absmax: float, rmax: int) -> float:
    """Compander-independent ratio linking R_max to the input extremes."""
    if rmax < 1:
        raise InvalidConfigError(f"rmax must be >= 1, got {rmax}")
    return L * a_absmax * b_absmax / rmax


def optimal_companders(stats: InputStats, rmax: int, s_repr: float = 0.0, w: int = 1) -> CompanderSolution:
    """Minimum-distortion companders at a fixed R_max.

    On the constraint c_a * c_b = 1/c_tot the distortion is minimized by
    balancing the two linear quantization terms, giving
    c_a = sqrt(sigma_b / (sigma_a * c_tot)) and its mirror.
    """
    if stats.sigma_a <= 0 or stats.sigma_b <= 0:
        raise DegenerateInputError("optimal companders undefined for zero-sigma input")
    ct = c_tot(stats.L, stats.a_absmax, stats.b_absmax, rmax)
    c_a = math.sqrt(stats.sigma_b / (stats.sigma_a * ct))
    c_b = math.sqrt(stats.sigma_a / (stats.sigma_b * ct))
    return CompanderSolution(
        c_a=c_a,
        c_b=c_b,
        rmax=rmax,
        expected_snr_db=model_snr_db(stats, c_a, c_b, s_repr),
        w=w,
    )


def optimize_rmax(stats: InputStats, w: int, mode: str, precision: str, calib) -> CompanderSolution:
    """Grid search over the calibrated R_max values for the best expected SNR."""
    entries = calib.slice(precision, mode, w)
    if not entries:
        raise CalibrationMissingError(
            f"no calibration entries for ({precision}, {mode}, W={w})"
        )
    best = None
    for entry in entries:
        sol = optimal_companders(stats, entry.rmax, s_repr=entry.rmse, w=w)
        if best is None or sol.expected_snr_db > best.expected_snr_db:
            best = sol
    return best


def admissible_companders(stats: InputStats, target_snr_db: float, rmax: int, s_repr: float):
    """All compander pairs hitting a target SNR at fixed R_max.

    Eliminating c_b through the R_max relation turns the distortion equation
    into a quadratic in c_a^2; zero, one, or two positive roots exist
    depending on whether the target is above, at, or below the attainable
    maximum for this R_max.
    """
    if stats.sigma_a <= 0 or stats.sigma_b <= 0:
        raise DegenerateInputError("companders undefined for zero-sigma input")
    if not math.isfinite(target_snr_db):
        raise InvalidConfigError("target SNR must be finite")
    L = stats.L
    ct = c_tot(L, stats.a_absmax, stats.b_absmax, rmax)
    d_target = signal_power(stats) * 10.0 ** (-0.1 * target_snr_db)
    # (L/12) sa^2 ct^2 t^2 + (L ct^2/144 + s^2 ct^2 - D) t + (L/12) sb^2 = 0, t = c_a^2
    qa = (L / 12.0) * stats.sigma_a ** 2 * ct ** 2
    qb = L * ct ** 2 / 144.0 + (s_repr * ct) ** 2 - d_target
    qc = (L / 12.0) * stats.sigma_b ** 2
    disc = qb * qb - 4.0 * qa * qc
    if qb >= 0 or disc < 0:
        return []
    roots = sorted({(-qb - math.sqrt(disc)) / (2 * qa), (-qb + math.sqrt(disc)) / (2 * qa)})
    out = []
    for t in roots:
        if t <= 0:
            continue
        c_a = math.sqrt(t)
        out.append(
            CompanderSolution(
                c_a=c_a,
                c_b=1.0 / (ct * c_a),
                rmax=rmax,
                expected_snr_db=target_snr_db,
                w=1,
            )
        )
    return out
