"""markbench: watermarking for toy language models, from zero-bit detection
to L-bit message embedding to multi-user tracing under collusion, with the
balls-and-bins analysis and adversary harness that exercise the guarantees.
"""

__version__ = "0.1.0"

from . import analysis, attacks, fpcode, lbit, multiuser, tokens, zerobit  # noqa: F401
