"""
Learnable pruning with per-matrix thresholds, a target-ratio regularizer and
an adaptive regularization coefficient, plus baseline schedules and a
desk-scale transformer to train them on.
License: MIT License
"""

__title__ = "leap-prune"
__full_title__ = "LEAP Prune"
__description__ = "Learnable pruning with per-matrix thresholds and an adaptive target-ratio regularizer."
__cli_description__ = "LEAP pruning utilities"
__author__ = "leap-prune contributors"
__license__ = "MIT License"
__copyright__ = "Copyright (C) 2026-present leap-prune contributors"
__version__ = "0.1.0"
__display_version__ = __title__ + " " + __version__

from .errors        import *
from .logger        import *
from .tensor        import *
from .masks         import *
from .thresholds    import *
from .schedules     import *
from .model         import *
from .tasks         import *
from .distillation  import *
from .checkpoint    import *
from .config        import *
from .optim         import *
from .methods       import *
from .trainer       import *
from .report        import *
