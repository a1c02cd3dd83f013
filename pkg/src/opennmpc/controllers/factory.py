from typing import Any, Callable, Dict, Optional

from opennmpc.controllers.base_controller import Controller
from opennmpc.controllers.nmpc import NmpcController, NmpcSettings
from opennmpc.controllers.pi import PiController


def create_controller(
    controller_type: str = "nmpc",
    nmpc_settings: Optional[NmpcSettings] = None,
    pi_settings: Optional[Dict[str, Any]] = None,
    verbose: bool = False,
    logger_callback: Optional[Callable[[str], None]] = None,
) -> Controller:
    """
    Factory function to create a closed-loop controller.

    Args:
        controller_type: 'nmpc' or 'pi'
        nmpc_settings: Settings for the NMPC controller
        pi_settings: Keyword arguments of PiController (gains, Ts, bounds, u_bar)
        verbose: Print controller messages
        logger_callback: Optional function to call for logging instead of print

    Returns:
        A Controller implementation

    Raises:
        ValueError: If an invalid controller type is specified or its settings are missing
    """
    kind = controller_type.lower()
    if kind == "nmpc":
        if nmpc_settings is None:
            raise ValueError("nmpc_settings are required for an NMPC controller")
        return NmpcController(nmpc_settings, verbose=verbose, logger_callback=logger_callback)
    elif kind == "pi":
        if pi_settings is None:
            raise ValueError("pi_settings are required for a PI controller")
        return PiController(**pi_settings, verbose=verbose, logger_callback=logger_callback)
    else:
        raise ValueError(f"Invalid controller type: {controller_type}. Must be 'nmpc' or 'pi'")
