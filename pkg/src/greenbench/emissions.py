"""CO2e conversion of measured deltas.

Four channels: electricity used by the device, electricity attributed to
data transfer, embodied device emissions allocated by time share, and
embodied network emissions allocated proportionally to network use-phase
emissions. Every function is linear and sign-preserving, so feeding it a
negative delta (condition B costs more) yields a negative saving. No
rounding happens here; formatting belongs to the report layer.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import EmissionFactors, UnitEmissions, validate_factors

MICROGRAMS_PER_GRAM = 1e6
MB_PER_GB = 1e3


def _require_valid(f: EmissionFactors) -> None:
    verdict = validate_factors(f)
    if not verdict.ok:
        raise ValueError("invalid emission factors: " + "; ".join(verdict.violations))


def c_elec(f: EmissionFactors) -> float:
    """Carbon intensity of device electricity, gCO2e per joule."""
    _require_valid(f)
    return f.grid_intensity * f.joule_to_kwh


def user_use_emissions(delta_energy_j: float, f: EmissionFactors) -> float:
    """Use-phase device emissions in grams for an energy delta in joules."""
    return delta_energy_j * c_elec(f)


def transfer_intensity(f: EmissionFactors) -> float:
    """Carbon cost of data transfer, microgram CO2e per megabyte.

    The base electricity intensity (kWh/GB at ``base_year``) is halved
    every ``halving_period_years`` until ``assessment_year``, then
    multiplied by the grid intensity.
    """
    _require_valid(f)
    years = f.assessment_year - f.base_year
    decay = 2.0 ** (-years / f.halving_period_years)
    kwh_per_mb = f.transfer_intensity_base / MB_PER_GB * decay
    grams_per_mb = kwh_per_mb * f.grid_intensity
    return grams_per_mb * MICROGRAMS_PER_GRAM


def network_use_emissions(delta_data_mb: float, f: EmissionFactors) -> float:
    """Use-phase network emissions in grams for a traffic delta in MB."""
    return delta_data_mb * transfer_intensity(f) / MICROGRAMS_PER_GRAM


def user_embodied_emissions(delta_t_s: float, f: EmissionFactors) -> float:
    """Device embodied emissions in grams allocated to a time delta."""
    _require_valid(f)
    share = delta_t_s / f.device_lifetime_seconds
    return f.device_embodied_total * share * f.resource_share


def network_embodied_emissions(delta_u_network_g: float, f: EmissionFactors) -> float:
    """Network embodied emissions in grams, proportional to network use."""
    _require_valid(f)
    return f.embodied_to_use_ratio * delta_u_network_g


@dataclass(frozen=True)
class UnitDeltas:
    """Measured per-unit deltas between two conditions."""

    energy_j: float
    data_mb: float
    duration_s: float


def emission_breakdown(delta: UnitDeltas, f: EmissionFactors) -> UnitEmissions:
    """All four emission components for one unit's deltas, plus the total."""
    use_network = network_use_emissions(delta.data_mb, f)
    return UnitEmissions.build(
        use_user_g=user_use_emissions(delta.energy_j, f),
        use_network_g=use_network,
        embodied_user_g=user_embodied_emissions(delta.duration_s, f),
        embodied_network_g=network_embodied_emissions(use_network, f),
    )
