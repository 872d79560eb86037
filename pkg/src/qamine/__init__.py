from .errors import QamineError

__version__ = "0.1.0"

