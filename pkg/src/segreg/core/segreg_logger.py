from typing import Any, Dict, Optional
import logging


LOG_FORMAT = '%(levelname)s %(name)s: %(message)s'


def configure_logging(loglevel: int,
                      logfile: Optional[str] = None) -> None:
    """Root logging for the command line; files also get timestamps."""
    options: Dict[str, Any] = {'level': loglevel, 'format': LOG_FORMAT}
    if logfile is not None:
        options.update(filename=logfile, format='%(asctime)s ' + LOG_FORMAT)
    logging.basicConfig(**options)
    logging.captureWarnings(True)


class SegRegLogger(logging.LoggerAdapter):
    """Logger adapter tagging records with the region being solved.
    """

    def __init__(self,
                 logger: logging.Logger,
                 region_label: Any) -> None:
        super().__init__(logger, {})

        self._region_label = region_label


    def process(self, msg, kwargs):
        return '[region %s] %s' % (self._region_label, msg), kwargs
