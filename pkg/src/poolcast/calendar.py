#-----------------------------
# -- Poolcast --
#-----------------------------

"""
ServiceCalendar

Maps the civil dates of a carpooling service onto day types and a 1-based,
gap-free day index (i=1 on the start date).

:USAGE

cal = ServiceCalendar.load("calendar.csv")

cal.day_type(1)               # DayType.ORD
cal.collapsed_day_type(1)     # CollapsedDayType.ORW
cal.day_number(1)             # 2 (Tuesday)
cal.prior_same_weekday_set(22)  # {7, 14, 21}

"""

import enum
import logging
import datetime
import pandas as pd
from typing import Iterable, List, Tuple
from . import lib
from .exceptions import RangeError, SchemaError, DataError

logger = logging.getLogger(__name__)


class DayType(str, enum.Enum):
    ORD = "ORD"  # ordinary work day
    SCH = "SCH"  # school holiday
    PWE = "PWE"  # public holiday or weekend


class CollapsedDayType(str, enum.Enum):
    ORW = "ORW"  # ordinary work day or weekend
    HOL = "HOL"  # school or public holiday


# model ordering of day types, used for coefficient vectors
DAY_TYPES = (DayType.ORD, DayType.SCH, DayType.PWE)


class ServiceCalendar(object):
    """
    Immutable ordered list of (date, DayType) entries.

    Params:
        start_date: first civil date, day index 1
        day_types: one DayType per consecutive day
    """

    def __init__(self, start_date, day_types:Iterable):
        self._start = lib.parse_date(start_date)
        self._types = tuple(DayType(t) for t in day_types)
        if not self._types:
            raise DataError("calendar must hold at least one day")
        self._dates = tuple(lib.shift_date(self._start, k) for k in range(len(self._types)))
        # public holidays, ie PWE days falling on a weekday
        self._hol = tuple(
            t == DayType.SCH or (t == DayType.PWE and d.isoweekday() <= 5)
            for d, t in zip(self._dates, self._types)
        )

    @classmethod
    def from_entries(cls, entries:List[Tuple]) -> "ServiceCalendar":
        """
        Build a calendar from (date, day_type) pairs. Dates must be contiguous
        and strictly increasing.
        """
        if not entries:
            raise DataError("calendar must hold at least one day")
        dates = [lib.parse_date(d) for d, _ in entries]
        # row numbers count the CSV header as row 1
        for row, (prev, curr) in enumerate(zip(dates, dates[1:]), start=3):
            if lib.days_between(prev, curr) != 1:
                raise SchemaError("calendar dates must be contiguous and ascending (%s -> %s)"
                                  % (prev, curr), row=row)
        return cls(dates[0], [t for _, t in entries])

    @classmethod
    def from_holidays(cls,
                      start_date,
                      n_days:int,
                      public_holidays:Iterable=(),
                      school_holidays:Iterable=(),
                      overrides:dict=None) -> "ServiceCalendar":
        """
        Build a calendar from explicit holiday tables.

        Weekends and public holidays are PWE, weekdays inside a school holiday
        range are SCH, everything else is ORD. A weekend inside a school
        holiday stays PWE. `overrides` (date -> DayType) wins over all rules,
        ie a transport strike coded PWE.

        Params:
            start_date
            n_days:int
            public_holidays: list of dates
            school_holidays: list of (start, end) inclusive date ranges
            overrides: dict of date -> day type

        Returns:
            ServiceCalendar
        """
        if n_days < 1:
            raise DataError("n_days must be >= 1")
        public = {lib.parse_date(d) for d in public_holidays}
        school = set()
        for start, end in school_holidays:
            school.update(lib.date_range(start, end))
        forced = {lib.parse_date(d): DayType(t) for d, t in (overrides or {}).items()}

        types = []
        for k in range(n_days):
            d = lib.shift_date(start_date, k)
            if d in forced:
                types.append(forced[d])
            elif d.isoweekday() >= 6 or d in public:
                types.append(DayType.PWE)
            elif d in school:
                types.append(DayType.SCH)
            else:
                types.append(DayType.ORD)
        return cls(start_date, types)

    @classmethod
    def load(cls, path) -> "ServiceCalendar":
        """
        Load calendar.csv, header `date,day_type`
        """
        df = pd.read_csv(path, comment="#", dtype=str)
        missing = {"date", "day_type"} - set(df.columns)
        if missing:
            raise SchemaError("calendar file is missing columns: %s" % ", ".join(sorted(missing)),
                              path=str(path))
        entries = []
        for row, (d, t) in enumerate(zip(df["date"], df["day_type"]), start=2):
            try:
                entries.append((lib.parse_date(d), DayType(str(t).strip())))
            except (ValueError, TypeError) as e:
                raise SchemaError("invalid calendar row: %s" % e, row=row, path=str(path))
        return cls.from_entries(entries)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "date": [lib.format_date(d) for d in self._dates],
            "day_type": [t.value for t in self._types]
        })

    def dump(self, path, config_hash:str=None):
        """ Write calendar.csv """
        lib.write_csv(self.to_frame(), path, config_hash)

    def extend_to(self,
                  end_date,
                  public_holidays:Iterable=(),
                  school_holidays:Iterable=(),
                  overrides:dict=None) -> "ServiceCalendar":
        """
        Append the days after end_date up to the given date, typed with the
        `from_holidays` rules. Existing days are kept as they are.
        """
        n_days = lib.days_between(self._start, end_date) + 1
        if n_days <= len(self):
            return self
        extra = ServiceCalendar.from_holidays(self._start, n_days, public_holidays,
                                              school_holidays, overrides)
        return ServiceCalendar(self._start, self._types + extra.day_types[len(self):])

    # ---

    def __len__(self):
        return len(self._types)

    def __iter__(self):
        yield from zip(self._dates, self._types)

    def __eq__(self, other):
        return isinstance(other, ServiceCalendar) \
            and self._start == other._start and self._types == other._types

    @property
    def start_date(self) -> datetime.date:
        return self._start

    @property
    def end_date(self) -> datetime.date:
        return self._dates[-1]

    @property
    def dates(self) -> tuple:
        return self._dates

    @property
    def day_types(self) -> tuple:
        return self._types

    def _check(self, i:int):
        if not 1 <= i <= len(self._types):
            raise RangeError("day index %s outside calendar 1..%s" % (i, len(self._types)), day=i)

    def index_of(self, dt) -> int:
        """ 1-based day index of a civil date """
        i = lib.days_between(self._start, dt) + 1
        self._check(i)
        return i

    def date_of(self, i:int) -> datetime.date:
        self._check(i)
        return self._dates[i - 1]

    def contains(self, dt) -> bool:
        return 1 <= lib.days_between(self._start, dt) + 1 <= len(self._types)

    def slice(self, start, end) -> "ServiceCalendar":
        """
        Sub calendar over the inclusive date range. Its day index restarts at 1.
        """
        a = self.index_of(start)
        b = self.index_of(end)
        if b < a:
            raise RangeError("empty calendar slice %s..%s" % (start, end))
        return ServiceCalendar(self._dates[a - 1], self._types[a - 1:b])

    def head(self, n:int) -> "ServiceCalendar":
        """ The first n days """
        self._check(n)
        return ServiceCalendar(self._start, self._types[:n])

    # --- day type functions

    def day_type(self, i:int) -> DayType:
        """
        DT(i): the annotated day type of day i
        """
        self._check(i)
        return self._types[i - 1]

    def collapsed_day_type(self, i:int) -> CollapsedDayType:
        """
        DT'(i): HOL for school or public holidays, ORW for ordinary work days
        and weekends. Weekends are detected from the civil weekday.
        """
        self._check(i)
        return CollapsedDayType.HOL if self._hol[i - 1] else CollapsedDayType.ORW

    def day_number(self, i:int) -> int:
        """
        DN(i): Monday -> 1 ... Sunday -> 7
        """
        self._check(i)
        return self._dates[i - 1].isoweekday()

    def prior_same_weekday_set(self, i:int) -> set:
        """
        T_d(i): offsets k < i with DN(i - k) = DN(i)
        """
        return set(range(7, i, 7))

    def prior_holiday_set(self, i:int) -> set:
        """
        T_HOL(i): offsets k < i with DT'(i - k) = HOL
        """
        upto = min(i - 1, len(self._types))
        return {i - d for d in range(1, upto + 1) if self._hol[d - 1]}

    def type_codes(self):
        """ Day types as integer codes 0=ORD, 1=SCH, 2=PWE, ordered by day index """
        return [DAY_TYPES.index(t) for t in self._types]

