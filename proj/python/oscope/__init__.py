"""Object-bias probes for contrastive vision-language embeddings.

Thin re-export of the compiled ``_oscope`` module. Manifest records
(scenes, captions, trials, analysis and detection records) are plain dicts
with the same fields as the JSONL files the command-line tool reads and writes.
"""

from ._oscope import *  # noqa: F401,F403
from ._oscope import __version__  # noqa: F401
