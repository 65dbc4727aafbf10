"""Python bindings for the multi-source post-editing Transformer."""

try:
    from ._ctxape import *  # noqa: F401,F403
    from ._ctxape import __doc__  # noqa: F401
except ImportError:  # in-tree build: the extension sits next to the package
    from _ctxape import *  # noqa: F401,F403
