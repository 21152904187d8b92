"""Progress bars for the long loops, silenced by ``--quiet``"""

from tqdm import tqdm

_enabled = True


def set_progress(enabled):
    global _enabled
    _enabled = bool(enabled)


def progress(iterable=None, **kwargs):
    """tqdm over ``iterable``; disabled when progress output is switched off."""
    if not _enabled:
        kwargs['disable'] = True
    return tqdm(iterable, **kwargs)
