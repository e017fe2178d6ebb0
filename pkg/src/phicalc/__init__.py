"""phicalc: index-set algebra, operator-class bookkeeping, split parametrix
replay, and desk-scale numerics for product fibred-cusp model geometries."""

from .indexsets import (
    EMPTY,
    IndexFamily,
    IndexSet,
    add,
    extended_union,
    geq,
    greater_than,
    make_index_set,
    real_set,
    scale,
    shift,
)
from .opclasses import (
    ClassSum,
    GeomConstants,
    OpClass,
    Weight,
    ZERO,
    adjoint_class,
    compose,
    conjugate_by_power,
    contains,
    decompose_near_ff,
    eq_classes,
    is_bounded,
    is_compact,
    lift_b_to_phi,
    map_phg,
    multiply_x_power,
)
from .parametrix import (
    SplitOperator,
    check_weight,
    fredholm_report,
    left_parametrix,
    parametrix_report,
    regularity_predict,
    right_parametrix,
)

__version__ = "0.1.0"
