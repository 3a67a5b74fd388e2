class ConfigError(ValueError):
    """Invalid scenario, profile, device or write-set."""


class BoundsExceeded(RuntimeError):
    """Exploration would exceed the configured schedule cap."""

    def __init__(self, message: str, estimate: int):
        super().__init__(f"{message} (estimated {estimate} schedules)")
        self.estimate = estimate
