"""Root of the grouper exception hierarchy.

Each subpackage defines its own subclasses next to the code that raises them.
"""


class GrouperError(Exception):
    """Base exception for all grouper errors."""
    pass
