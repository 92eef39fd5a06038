__all__ = ['numerics', 'connection', 'scoring', 'utils']

from . import (
    numerics,
    connection,
    scoring,
    utils,
)
