"""Exception hierarchy shared by the simulator modules."""


class IosacError(Exception):
    """Base class for all simulator errors."""


class ConfigError(IosacError, ValueError):
    """Malformed or inconsistent configuration."""


class OutOfRange(IosacError, ValueError):
    pass


class NoGuidedMode(IosacError):
    """The requested guided mode does not exist for the cross-section."""


class NotConverged(IosacError):
    pass


class DegenerateMode(IosacError):
    """A perturbation moved the tracked mode across a neighbouring mode."""


class GridTooCoarse(IosacError, ValueError):
    pass


class NoDipFound(IosacError):
    pass


class Unachievable(IosacError, ValueError):
    """Target quality factor exceeds what the round-trip loss allows."""


class OrderJump(IosacError):
    """Resonance moved by more than half a free spectral range between points."""


class IllConditioned(IosacError, ValueError):
    pass


class InvalidSeed(IosacError, ValueError):
    pass


class GridMismatch(IosacError, ValueError):
    """The waveform's frequency grid cannot resolve the ring resonance."""


class NoSignal(IosacError):
    pass
