"""Exception hierarchy shared across the simulator."""


class SimError(Exception):
    """Base class for all simulator errors."""


class SchemaSyntaxError(SimError):
    """The schema document is not well-formed."""


class SchemaValidationError(SimError):
    """A structural invariant of the schema is violated.

    ``path`` points at the offending node/edge/gate so error messages can
    be surfaced in editors.
    """

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class UnknownNodeError(SimError):
    """An operation referenced a node id absent from the schema."""


class CassetteMissError(SimError):
    """Replay mode saw a request with no matching recorded entry."""

    def __init__(self, role_tag: str, request_hash: str):
        super().__init__(
            f"no cassette entry for request (stage={role_tag!r}, hash={request_hash[:12]}...)"
        )
        self.role_tag = role_tag
        self.request_hash = request_hash


class ProviderError(SimError):
    """The live LLM provider failed after bounded retries."""


class LlmParseError(SimError):
    """A structured LLM response stayed invalid after the repair retry."""


class EngineHalt(SimError):
    """The simulation cannot continue (unrecoverable LLM failure)."""


class JudgeRangeError(SimError):
    """A judge score fell outside the 1-10 range."""

    def __init__(self, simulation_index: int, value):
        super().__init__(f"score for simulation {simulation_index} out of range [1,10]: {value!r}")
        self.simulation_index = simulation_index
        self.value = value


class EmptyCellError(SimError):
    """An aggregation cell has no judgments."""


class UnknownSchemaError(SimError):
    """The schema library has no schema with the requested id."""


class UnknownCheckpointError(SimError):
    """No checkpoint exists at the requested step."""


class ConflictError(SimError):
    """A second mutating operation raced an in-flight one on the same simulation."""
