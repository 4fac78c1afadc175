"""Exception hierarchy shared by every planning stage.

Each class carries the CLI exit code used when it escapes ``plan``.
"""


class PlannerError(Exception):
    exit_code = 1
    stage = None


class InputError(PlannerError):
    exit_code = 2


class SceneParseError(InputError):
    pass


class ResolutionError(PlannerError):
    pass


class SamplingError(PlannerError):
    pass


class ConnectivityError(PlannerError):
    pass


class CoverageError(PlannerError):
    exit_code = 3

    def __init__(self, poi_name):
        super().__init__(f"no roadmap node observes POI {poi_name!r}")
        self.poi_name = poi_name


class OracleError(PlannerError):
    exit_code = 5


class TransportError(OracleError):
    pass


class ProtocolError(OracleError):
    pass


class InstanceSizeError(PlannerError):
    pass


class SubdivisionError(PlannerError):
    exit_code = 4


class ConditioningError(PlannerError):
    pass


class DomainError(PlannerError):
    pass


class OrientationError(PlannerError):
    pass


class SingularityError(PlannerError):
    pass


class MetricError(PlannerError):
    pass
