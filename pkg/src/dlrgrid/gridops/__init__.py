"""Day-ahead dispatch and real-time redispatch on DC power flow, plus the QP solver."""

from .dispatch import (  # noqa: F401
    DayAheadTemplate,
    DispatchSolution,
    Generator,
    GridSpec,
    OperationReport,
    RealTimeTemplate,
    RedispatchSolution,
    check_day_ahead,
    check_real_time,
    day_ahead,
    operate_day,
    real_time,
)
from .qp import HAVE_COMPILED, QpProblem, QpSolution, QpWorkspace, kkt_residuals, solve_qp  # noqa: F401
