#-----------------------------
# -- Poolcast --
#-----------------------------

class PoolcastError(Exception):
    """
    Base error. Every error raised by poolcast derives from it.

    Params:
        message:str
        **details - machine readable context, ie: field, row, day
    """

    def __init__(self, message:str="", **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        return {
            "error": self.__class__.__name__,
            "message": self.message,
            "details": self.details
        }

class RangeError(PoolcastError, ValueError): pass
class DomainError(PoolcastError, ValueError): pass
class SimulationError(PoolcastError): pass
class DataError(PoolcastError): pass
class SchemaError(DataError): pass
class ColdStartError(PoolcastError): pass
class UnidentifiedError(PoolcastError): pass
class ImproperPosteriorError(PoolcastError): pass
class InfeasibleConditioningError(PoolcastError): pass
class SamplerError(PoolcastError): pass
class DiagnosticsError(PoolcastError): pass
class ConfigError(PoolcastError): pass
class ScenarioError(PoolcastError): pass
