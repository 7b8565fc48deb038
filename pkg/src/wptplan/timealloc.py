"""Per-device charge/collect time allocation.

For a device with payload D bits, the vehicle first transfers power for
t_charge seconds, then receives the payload for t_collect seconds. The upload
must finish exactly: t_collect * B * log2(1 + gamma * t_charge / t_collect) = D,
where gamma folds the two-way channel gain, harvesting efficiency, transmit
power, and noise power. Subject to that, we minimize the hover energy
(transmit_power + hover_power) * t_charge + (collect_power + hover_power) * t_collect.

Two solvers are provided. numeric_times reduces the problem to one variable
(the charge/collect ratio) and runs a golden-section search; it is the
authority used to build service profiles. closed_form_times evaluates a
published Lambert-W expression literally for comparison; at realistic
parameters it disagrees with the constraint above (its collect time ignores
the bandwidth), so build_profiles can report the gap between the two.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .energy import channel_gain
from .errors import (
    DomainError,
    InfeasibleClosedFormError,
    InvalidArgumentError,
    NumericFailureError,
)
from .scenario import IotDevice, Scenario

_INV_E = math.exp(-1.0)
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_LN2 = math.log(2.0)


@dataclass(frozen=True)
class ServiceProfile:
    """Optimal hover times and energies for a single device."""

    device: int
    t_charge: float       # s
    t_collect: float      # s
    e_transfer: float     # J, (transmit + hover) power over t_charge
    e_collect: float      # J, (collect + hover) power over t_collect
    demand: float         # bits
    gap_rel: float | None = None  # closed-form vs numeric objective gap, verify mode only


def lambert_w0(x: float) -> float:
    """Principal branch of the Lambert W function: the w with w * exp(w) = x.

    Halley iteration from a log-based initial guess; near the branch point a
    series expansion seeds (and for very small offsets, settles) the answer.
    Valid for x >= -1/e.
    """
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"lambert_w0 needs a finite argument, got {x}")
    if x < -_INV_E:
        # tolerate representation noise right at the branch point
        if x < -_INV_E - 1e-12 * max(1.0, abs(x)):
            raise DomainError(f"lambert_w0 argument {x} below -1/e")
        x = -_INV_E

    if x == -_INV_E:
        return -1.0
    if x == 0.0:
        return 0.0

    if x < -0.25:
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * 11.0 / 72.0))
        if p < 1e-4:
            # series already below double-precision residual; Halley would divide
            # by a vanishing w + 1
            return w
    elif x < 2.0:
        w = math.log1p(x)
    else:
        lx = math.log(x)
        w = lx - math.log(lx)

    for _ in range(60):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        step = f / denom
        w -= step
        if abs(step) <= 1e-16 * (1.0 + abs(w)):
            break

    if abs(w * math.exp(w) - x) > 1e-12 * max(1.0, abs(x)):
        raise NumericFailureError(f"lambert_w0 failed to converge for x={x}")
    return w


def _hover_prices(scenario: Scenario) -> tuple[float, float]:
    phys = scenario.physics
    return phys.transmit_power + phys.hover_power, phys.collect_power + phys.hover_power


def snr_coefficient(scenario: Scenario, device_id: int) -> float:
    """gamma: uplink SNR per unit charge/collect ratio.

    Combines the squared two-way gain, harvesting efficiency, transmit power,
    and noise power, so the upload rate is B * log2(1 + gamma * TE/TC).
    """
    gain = channel_gain(scenario, device_id)
    phys = scenario.physics
    return phys.eh_efficiency * gain * gain * phys.transmit_power / phys.noise_power


def closed_form_times(device: IotDevice, scenario: Scenario) -> tuple[float, float]:
    """Literal evaluation of the published Lambert-W time allocation.

    Returns (t_collect, t_charge). The charge-time expression exponentiates
    the per-second payload, which overflows to infinity for realistic bit
    counts; callers treat these values as diagnostic only.
    """
    gain = channel_gain(scenario, device_id=device.id)
    if gain <= 0.0:
        raise InvalidArgumentError("channel gain must be positive")
    if device.data_bits <= 0.0:
        raise InvalidArgumentError(f"device {device.id} has no data to collect")
    phys = scenario.physics
    received = gain * phys.transmit_power
    harvested_power = phys.eh_efficiency * received
    w_arg = (gain * harvested_power - phys.noise_power) / (math.e * phys.noise_power)
    if w_arg < -_INV_E:
        raise InfeasibleClosedFormError(
            f"Lambert-W argument {w_arg} below -1/e for device {device.id}"
        )
    w = lambert_w0(w_arg)
    if w + 1.0 <= 0.0:
        return math.inf, math.inf
    t_collect = math.log(2.0 * device.data_bits) / (w + 1.0)
    exponent = device.data_bits / t_collect * _LN2
    if exponent > 700.0:
        t_charge = math.inf
    else:
        t_charge = t_collect * math.expm1(exponent) * phys.noise_power / (gain * harvested_power)
    return t_collect, t_charge


def _golden_min(f, lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def numeric_times(device: IotDevice, scenario: Scenario) -> tuple[float, float]:
    """Minimize hover energy subject to exact upload of the device payload.

    Returns (t_collect, t_charge). With x = t_charge / t_collect the
    constraint fixes t_collect = D / (B * log2(1 + gamma * x)), leaving a
    single-variable unimodal objective in x. We bracket the minimum in log(x)
    by unit steps and then run a golden-section search; the throughput
    constraint holds with equality by construction.
    """
    gain = channel_gain(scenario, device_id=device.id)
    if gain <= 0.0:
        raise InvalidArgumentError("channel gain must be positive")
    if device.data_bits <= 0.0:
        raise InvalidArgumentError(f"device {device.id} has no data to collect")
    phys = scenario.physics
    gamma = snr_coefficient(scenario, device.id)
    price_charge, price_collect = _hover_prices(scenario)
    demand = device.data_bits

    def objective(z: float) -> float:
        x = math.exp(z)
        rate_log = math.log1p(gamma * x) / _LN2
        t_collect = demand / (phys.bandwidth * rate_log)
        return price_charge * x * t_collect + price_collect * t_collect

    lo = -45.0  # x ~ 3e-20: objective is still descending toward the minimum
    hi = 0.0
    prev = objective(hi)
    for _ in range(200):
        nxt = objective(hi + 1.0)
        if nxt >= prev:
            break
        hi += 1.0
        prev = nxt
    else:
        raise NumericFailureError(
            f"failed to bracket the hover objective for device {device.id} (gamma={gamma})"
        )
    hi += 1.0

    z_star = _golden_min(objective, lo, hi, tol=1e-12)
    x = math.exp(z_star)
    rate_log = math.log1p(gamma * x) / _LN2
    t_collect = demand / (phys.bandwidth * rate_log)
    t_charge = x * t_collect
    return t_collect, t_charge


def hover_objective(t_collect: float, t_charge: float, scenario: Scenario) -> float:
    """Hover energy of a (t_collect, t_charge) pair under the scenario prices."""
    price_charge, price_collect = _hover_prices(scenario)
    return price_charge * t_charge + price_collect * t_collect


def _profile_from_times(device: IotDevice, scenario: Scenario, t_collect: float,
                        t_charge: float, gap_rel: float | None) -> ServiceProfile:
    price_charge, price_collect = _hover_prices(scenario)
    return ServiceProfile(
        device=device.id,
        t_charge=t_charge,
        t_collect=t_collect,
        e_transfer=price_charge * t_charge,
        e_collect=price_collect * t_collect,
        demand=device.data_bits,
        gap_rel=gap_rel,
    )


def build_profiles(scenario: Scenario, mode: str = "numeric") -> list[ServiceProfile]:
    """One ServiceProfile per device, ordered by device id.

    mode "numeric" solves each device numerically; "closed_form" evaluates
    the literal Lambert-W expressions instead; "verify" computes both, keeps
    the numeric answer, and records the relative objective gap in gap_rel.
    Devices with zero payload get an all-zero profile and are effectively
    free to serve.
    """
    if mode not in ("closed_form", "numeric", "verify"):
        raise InvalidArgumentError(f"unknown profile mode {mode!r}")
    profiles = []
    for device in scenario.devices:
        if device.data_bits == 0.0:
            profiles.append(_profile_from_times(device, scenario, 0.0, 0.0, None))
            continue
        if mode == "closed_form":
            tc, te = closed_form_times(device, scenario)
            profiles.append(_profile_from_times(device, scenario, tc, te, None))
            continue
        tc, te = numeric_times(device, scenario)
        gap = None
        if mode == "verify":
            numeric_obj = hover_objective(tc, te, scenario)
            try:
                cf_tc, cf_te = closed_form_times(device, scenario)
                closed_obj = hover_objective(cf_tc, cf_te, scenario)
                gap = (closed_obj - numeric_obj) / numeric_obj
            except InfeasibleClosedFormError:
                gap = math.inf
        profiles.append(_profile_from_times(device, scenario, tc, te, gap))
    return profiles
