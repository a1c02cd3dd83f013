from .cdekf import (
    FilterState,
    FilterUpdateReport,
    covariance_update_subtraction_form,
    filter_update,
    predict,
)

__all__ = [
    "FilterState",
    "FilterUpdateReport",
    "covariance_update_subtraction_form",
    "filter_update",
    "predict",
]
