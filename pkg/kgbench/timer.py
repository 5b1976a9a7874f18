import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import codetiming

_log = logging.getLogger(__name__)


@dataclass
class Timer(codetiming.Timer):
    """
    ``codetiming.Timer`` that reports a named pipeline stage to the ``kgbench`` logger.

    Usage: ::

            with Timer("mine"):
                    rules = mine(graph, config)
    """

    name: Optional[str] = None
    logger: Optional[Callable[[str], None]] = field(default=_log.info, repr=False)

    def __post_init__(self):
        if self.name is not None:
            self.text = f"stage '{self.name}' took {{:.3f}} seconds"
        else:
            self.text = "elapsed time: {:.3f} seconds"
