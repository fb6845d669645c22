"""One-factor Cheyette SLV toolkit python bindings."""

from ._core import (
    ScriptValidationError,
    SimulationError,
    __version__,
    atm_strike,
    black,
    builtin_script,
    check_script,
    g,
    generate_code,
    h,
    hw_caplet,
    price_caplets,
    settings_catalog,
    simulate_script,
    tables_config,
)

__all__ = [
    "ScriptValidationError",
    "SimulationError",
    "__version__",
    "atm_strike",
    "black",
    "builtin_script",
    "check_script",
    "g",
    "generate_code",
    "h",
    "hw_caplet",
    "price_caplets",
    "settings_catalog",
    "simulate_script",
    "tables_config",
]
