# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


class EdgeFaceError(Exception):
    """Base class of every failure reported by edgeface_lite

    Attributes
    ----------
    exit_code : int
        Process exit status the command line maps this failure to
    """

    exit_code = 1


class ValidationError(EdgeFaceError, ValueError):
    """Input data (files, pair lists, images) does not pass validation"""

    exit_code = 2


class ContainerError(ValidationError):
    """Weight container cannot be decoded

    Every subclass carries a distinct ``code`` so callers can tell failures
    apart without parsing the message.
    """

    code = "container"


class BadMagicError(ContainerError):
    code = "bad-magic"


class UnsupportedVersionError(ContainerError):
    code = "unsupported-version"


class TruncatedError(ContainerError):
    code = "truncated"


class ManifestMismatchError(ContainerError):
    code = "manifest-mismatch"


class ChecksumMismatchError(ContainerError):
    code = "checksum-mismatch"


class NumericError(EdgeFaceError, ArithmeticError):
    """Numeric failure: non-convergence, divergence, failed gradient check"""

    exit_code = 3


class FactorizationError(NumericError):
    """Singular value decomposition of a layer did not converge"""

    def __init__(self, layer: str):
        self.layer = layer
        super().__init__("SVD did not converge for layer {}".format(layer))


class TrainingDiverged(NumericError):
    """Loss became non-finite during training

    Attributes
    ----------
    step : int
        Index of the step whose loss was not finite
    history : TrainHistory
        Steps completed before the failure
    """

    def __init__(self, step: int, history=None):
        self.step = step
        self.history = history
        super().__init__("training diverged at step {}".format(step))
