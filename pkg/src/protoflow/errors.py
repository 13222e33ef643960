"""Common error base class.

Every error surfaced by the engine subclasses EngineError so the CLI can
report a single diagnostic line naming the concrete error class.
"""


class EngineError(Exception):
    pass
