import numpy as np
import pytest

from robustkernels.kernels import KernelKind, RobustKernel


@pytest.fixture
def rng():
    return np.random.default_rng(20260811)


def all_default_kernels():
    from robustkernels.kernels import default_kernels

    return default_kernels()


def smooth_conformant_kernels(c: float = 1.0):
    """Every kind with an invertible, conformant derivative at scale c."""
    return [
        RobustKernel(KernelKind.GEMAN_MCCLURE, c=c),
        RobustKernel(KernelKind.WELSCH, c=c),
        RobustKernel(KernelKind.CAUCHY, c=c),
        RobustKernel(KernelKind.CHARBONNIER, c=c),
        RobustKernel(KernelKind.BARRON, c=c, alpha=1.0),
        RobustKernel(KernelKind.MEAN_ERROR, c=c),
        RobustKernel(KernelKind.GCE, c=c, q=0.7),
        RobustKernel(KernelKind.TAYLOR_CE, c=c, t=2),
        RobustKernel(KernelKind.AGCE, c=c, q=2.0, a=1.0),
        RobustKernel(KernelKind.AUL, c=c, p=2, a=3.0),
        RobustKernel(KernelKind.AEL, c=c, a=1.5),
    ]


def kernel_ids(kernels):
    return [k.describe() for k in kernels]
