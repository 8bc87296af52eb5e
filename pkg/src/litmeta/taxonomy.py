"""Moderator taxonomy for the multiple meta-regression.

Names are listed in canonical order, grouped the way regression tables group
their rows.  Reference categories are omitted (they are the all-zero case).
"""

from __future__ import annotations

CHANNELS = (
    "income", "agriculture", "conflict", "political_stability", "population",
    "diaspora", "past_migration", "poverty", "culture", "geography", "labor",
    "urban", "international_aid", "education", "environment", "destination",
    "origin", "slow_and_fast_included",
)

GROUPS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("Paper features", ("preferred_specification", "published", "impact_factor")),
    ("Corridor", ("corridor_internal", "corridor_international", "corridor_urbanization")),
    ("Measurement", ("measure_flows", "measure_stock")),
    ("Region of origin", ("origin_africa", "origin_asia", "origin_europe", "origin_lac",
                          "origin_mena", "origin_north_america")),
    ("Destination income", ("dest_high", "dest_upper_middle", "dest_lower_middle")),
    ("Slow-onset phenomenon", ("slow_temperature", "slow_precipitation", "slow_soil_degradation",
                               "slow_levels", "slow_deviation", "slow_anomaly", "slow_time_lag")),
    ("Fast-onset phenomenon", ("fast_geophysical", "fast_meteorological", "fast_hydrological",
                               "fast_climatological", "fast_occurrence", "fast_frequency",
                               "fast_intensity", "fast_duration", "fast_losses", "fast_time_lag",
                               "fast_multiple_disasters")),
    ("Sample", ("source_census", "source_survey", "source_official_statistics",
                "source_research_data", "unit_household", "unit_individual", "unit_country",
                "time_span")),
    ("Estimation", ("est_panel", "est_poisson", "est_linear", "est_iv", "est_logit")),
    ("Controls", tuple(f"control_{c}" for c in CHANNELS)),
    ("Channels", tuple(f"channel_{c}" for c in CHANNELS)),
)

MODERATORS: tuple[str, ...] = tuple(name for _, names in GROUPS for name in names)
ORDER = {name: n for n, name in enumerate(MODERATORS)}
GROUP_OF = {name: group for group, names in GROUPS for name in names}

CONTINUOUS = frozenset({"impact_factor", "slow_time_lag", "fast_time_lag", "time_span"})

# at most one category active per row
EXCLUSIVE = {
    "corridor": ("corridor_internal", "corridor_international", "corridor_urbanization"),
    "measurement": ("measure_flows", "measure_stock"),
    "unit": ("unit_household", "unit_individual", "unit_country"),
    "source": ("source_census", "source_survey", "source_official_statistics",
               "source_research_data"),
}


def canonical(names) -> list[str]:
    """Sort moderator names into canonical order; unknown names raise KeyError."""
    return sorted(names, key=lambda n: ORDER[n])
