"""Direct speech-to-speech translation with pseudo-label training stages."""

__version__ = "0.1.0"
