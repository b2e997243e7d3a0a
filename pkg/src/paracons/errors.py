"""Exception hierarchy with stable CLI exit codes."""


class HarnessError(Exception):
    exit_code = 1


class ValidationError(HarnessError):
    """Malformed or contract-violating input data or configuration."""

    exit_code = 2


class ConfigurationError(ValidationError):
    """Bad endpoint spec, unknown mock kind, invalid parameter."""


class TransportError(HarnessError):
    """Endpoint unreachable after retries, broken pipe, HTTP failure."""

    exit_code = 3


class ProtocolError(HarnessError):
    """Endpoint reachable but its response violates the wire contract."""

    exit_code = 4


class DigestMismatchError(HarnessError):
    """Cache or report inputs do not match the current dataset/config."""

    exit_code = 5
