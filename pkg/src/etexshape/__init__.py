"""
Shape sensing for a one-section continuum robot: a simulated 4x4 e-textile
sensor matrix, small CNN regressors written from scratch in numpy, and the
evaluation and cross-validation around them.
"""
import doctest
import importlib.metadata
import logging

# import functions from submodules here:
from etexshape.kinematics import *
from etexshape.sensor import *
from etexshape.dataset import *
from etexshape.nn import *
from etexshape.evaluation import *
from etexshape.file_io import *
from etexshape.config import *

logger = logging.getLogger(__name__)

__version__ = importlib.metadata.version("etexshape")
logger.debug(f"{__name__}.{__version__ = }")


def testmod(**testmod_kwargs) -> doctest.TestResults:
    """
    Run doctests for the calling module, ignoring exception details and
    normalizing whitespace, as pytest is configured to.

    Add to modules to run their doctests when run as a script:
    .. code-block:: text
        if __name__ == "__main__":
            from etexshape import testmod
            testmod()
    """
    _ = testmod_kwargs.setdefault(
        "optionflags", doctest.NORMALIZE_WHITESPACE | doctest.ELLIPSIS | doctest.IGNORE_EXCEPTION_DETAIL
    )
    return doctest.testmod(**testmod_kwargs)


if __name__ == "__main__":
    testmod()
