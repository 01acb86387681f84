"""Desk-scale mean-reverting diffusion restoration.

Subpackages:

- :mod:`mrdiff.tensor` -- NCHW tensors with reverse-mode autodiff and a
  finite-difference gradient checker.
- :mod:`mrdiff.sde` -- closed-form forward process, exact score, and
  reverse-time Euler-Maruyama integration.
- :mod:`mrdiff.blocks` / :mod:`mrdiff.unet` -- coarse-to-fine blocks with
  attention fusion and the conditional U-shaped denoiser.
- :mod:`mrdiff.losses` / :mod:`mrdiff.canny` -- prior-guided pixel, edge,
  and histogram losses plus differentiable surrogates.
- :mod:`mrdiff.metrics` -- PSNR and SSIM.
- :mod:`mrdiff.data` -- PPM I/O and synthetic paired degradations.
- :mod:`mrdiff.train` -- Adam, the toy trainer, and restoration.
- :mod:`mrdiff.cli` -- the ``mrdiff`` command-line harness.
"""

from .tensor import Tensor, Tape, grad_check, no_grad
from .sde import SdeSchedule, SdeState, make_schedule
from .blocks import BlockSpec
from .unet import NetworkSpec
from .canny import CannyParams, canny
from .losses import LossWeights, LossReport
from .metrics import MetricReport, psnr, ssim
from .data import ImagePair, synthetic_image

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "Tape",
    "grad_check",
    "no_grad",
    "SdeSchedule",
    "SdeState",
    "make_schedule",
    "BlockSpec",
    "NetworkSpec",
    "CannyParams",
    "canny",
    "LossWeights",
    "LossReport",
    "MetricReport",
    "psnr",
    "ssim",
    "ImagePair",
    "synthetic_image",
    "__version__",
]
