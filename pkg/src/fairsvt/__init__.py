"""fairsvt: measure and mitigate group performance gaps in singing voice
transcription on a fully synthetic, controllable corpus."""

__version__ = "0.1.0"

from . import corpus, frontend, metrics, notelab, svtmodel, tensornet, trainer

__all__ = ["corpus", "frontend", "metrics", "notelab", "svtmodel", "tensornet",
           "trainer", "__version__"]
