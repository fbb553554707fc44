from .fields import (
    VectorField,
    branch_fields,
    constant_field,
    linear_field,
    piecewise_field,
    vector_field_of_block,
)
from .order import (
    DEFAULT_HORIZON,
    EXPECTED_ORDER,
    OrderMeasurement,
    measure_order,
    transformer_test_field,
    within_expected_order,
)
from .schemes import STEPPERS, euler_step, integrate, lie_trotter_step, rk4_step

__all__ = [
    "VectorField", "branch_fields", "constant_field", "linear_field", "piecewise_field",
    "vector_field_of_block", "DEFAULT_HORIZON", "EXPECTED_ORDER", "OrderMeasurement", "measure_order",
    "transformer_test_field", "within_expected_order", "STEPPERS", "euler_step",
    "integrate", "lie_trotter_step", "rk4_step",
]
