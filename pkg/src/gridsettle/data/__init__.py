"""Bundled example systems used by the demos and the test suite."""
from pathlib import Path

_ROOT = Path(__file__).parent


def fixture_path(name: str) -> Path:
    """Directory holding one bundled system ('case5' or 'rts_like')."""
    path = _ROOT / name
    if not path.is_dir():
        available = sorted(p.name for p in _ROOT.iterdir() if p.is_dir())
        raise KeyError(f"no bundled system {name!r}; available: {available}")
    return path
