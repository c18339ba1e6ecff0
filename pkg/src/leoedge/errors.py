"""Exception hierarchy shared by all emulator modules."""


class EmulationError(Exception):
    """Base class for every error raised by leoedge."""


class ConfigError(EmulationError):
    """Invalid configuration. Carries every problem found, not just the first."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class UnknownNodeError(EmulationError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class LifecycleError(EmulationError):
    def __init__(self, state, action):
        self.state = state
        self.action = action
        super().__init__(f"illegal action {action!r} for machine in state {state!r}")


class ProtocolError(EmulationError):
    """Update stream violated ordering; the agent needs a full snapshot."""


class AssignmentError(EmulationError):
    pass


class AddressError(EmulationError):
    pass
