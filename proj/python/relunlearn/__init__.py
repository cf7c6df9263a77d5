"""Relationship unlearning on a toy dual encoder with LoRA adapters.

The heavy lifting lives in the C++ library; this package re-exports its
bindings. Batches for ``total_loss`` and ``grad_check`` are dicts mapping
``l1``, ``l2``, ``l3``, ``l4``, ``adv`` and ``anchors`` to ``(text, image)``
arrays of shape ``(n, d_in)``.
"""

from ._core import *  # noqa: F401,F403
from ._core import Error, __doc__  # noqa: F401

__version__ = "0.1.0"
