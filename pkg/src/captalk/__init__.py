"""Caption-controllable speech-to-3D-head-motion pipeline.

Submodules are imported lazily by callers (the CLI configures threading
environment variables before numpy loads, so this file must stay free of
heavyweight imports).
"""

__version__ = "0.1.0"
