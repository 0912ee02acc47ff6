"""Constrained multi-class positive-unlabeled learning toolkit.

Risk estimators (MPN, naive MPU, non-negative MPU, CMPU) over a small
softmax classifier with a bounded MAE loss, synthetic PU and
distantly-supervised tagging data generators, strict entity-level
evaluation, and Monte Carlo checks of the estimators' statistical
behavior.
"""

__version__ = "0.1.0"

from .core import (
    ClassPriors,
    LabelSpace,
    PriorEstimate,
    PuDataset,
    estimate_priors_from_labels,
    is_one_hot,
    make_priors,
    one_hot,
)
from .model import (
    ARCH_LINEAR,
    ARCH_MLP,
    GradientBuffer,
    NumericalDivergenceError,
    SgdConfig,
    SoftmaxModel,
    forward,
    forward_batch,
    init_linear,
    init_mlp,
    load_model,
    loss_grad_wrt_logits,
    mae_loss,
    mae_loss_batch,
    save_model,
    sgd_step,
)
from .risk import (
    Branch,
    CmpuConfig,
    EstimatorKind,
    RiskComponents,
    RiskReport,
    TraceRow,
    cmpu_risk,
    mpn_risk,
    mpu_naive_risk,
    mpu_nn_risk,
    risk_components,
    risk_gradient,
    risk_gradient_with_report,
    risk_report,
    train,
    write_trace_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
