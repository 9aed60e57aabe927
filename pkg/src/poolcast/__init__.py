# ------------------------------------------------------------------------------
# -- Poolcast --
# ------------------------------------------------------------------------------

from .calendar import ServiceCalendar, DayType, CollapsedDayType
from .flow_model import FlowParams, FlowSeries
from .waiting_model import IntervalGrid, WaitParams, RequestLog
from .inference import McmcConfig, PosteriorDraws, Diagnostics
from .config import RunConfig, load_config
from .exceptions import PoolcastError
